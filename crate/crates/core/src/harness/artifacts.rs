//! On-disk artifacts: trace and expert CSVs, benchmark caches, metric and
//! check summaries. Every file carries the config hash; every write is atomic.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::ProblemStream;
use crate::metrics::{cumulative, BenchmarkSet, ExpertRound, ExpertTrace, RoundRecord, RunTrace, TraceMeta};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// File stem shared by every artifact of one run.
pub fn run_stem(generator: &str, seed: u64, horizon: usize) -> String {
    format!("{generator}_s{seed}_T{horizon}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunPaths {
    pub trace: PathBuf,
    pub experts: PathBuf,
    pub metrics: PathBuf,
    pub checks: PathBuf,
    pub bench: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path, bench_dir: &Path, stem: &str) -> Self {
        RunPaths {
            trace: out.join(format!("{stem}.trace.csv")),
            experts: out.join(format!("{stem}.experts.csv")),
            metrics: out.join(format!("{stem}.metrics.json")),
            checks: out.join(format!("{stem}.checks.json")),
            bench: bench_dir.join(format!("{stem}.bench.json")),
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Leading `# key=value` lines and the CSV body that follows them.
struct Commented {
    headers: Vec<(String, String)>,
    body: String,
    body_line: usize,
}

fn split_comments(path: &Path) -> Result<Commented> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    let mut headers = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        line_no += 1;
        let rest = rest.trim_end_matches('\n');
        let (k, v) = rest
            .split_once('=')
            .ok_or_else(|| parse_err(path, line_no, "header comment is not key=value"))?;
        headers.push((k.to_string(), v.to_string()));
        offset += line.len();
    }
    Ok(Commented {
        headers,
        body: text[offset..].to_string(),
        body_line: line_no + 1,
    })
}

impl Commented {
    fn get(&self, path: &Path, key: &str) -> Result<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| parse_err(path, 1, format!("missing header comment `{key}`")))
    }

    fn records(&self, path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(self.body.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(path, self.body_line, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = self.body_line + 1 + i;
            let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok((header, rows))
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("not a number: `{field}`")))
}

fn csv_line(fields: impl IntoIterator<Item = String>) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Trace CSV: `t,loss,cum_loss,reg_s,reg_d,vio_h,vio_s,q_1..q_N,x_1..x_p`.
/// `reg_s` is left empty when no fixed comparator exists.
pub fn trace_csv(config_hash: &str, trace: &RunTrace, bench: &BenchmarkSet) -> Result<String> {
    let n = trace.meta.n_constraints;
    let p = trace.meta.dim;
    let mut out = String::new();
    writeln!(out, "# config_hash={config_hash}").unwrap();
    writeln!(out, "# meta={}", serde_json::to_string(&trace.meta)?).unwrap();
    let mut header: Vec<String> = ["t", "loss", "cum_loss", "reg_s", "reg_d", "vio_h", "vio_s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n).map(|k| format!("q_{k}")));
    header.extend((1..=p).map(|k| format!("x_{k}")));
    out.push_str(&csv_line(header));
    for (r, c) in trace.rounds.iter().zip(cumulative(trace, bench)?) {
        let mut row = vec![
            r.t.to_string(),
            fmt_f64(r.loss),
            fmt_f64(c.cum_loss),
            c.reg_s.map(fmt_f64).unwrap_or_default(),
            fmt_f64(c.reg_d),
            fmt_f64(c.vio_h),
            fmt_f64(c.vio_s),
        ];
        row.extend(r.queue.iter().map(|v| fmt_f64(*v)));
        row.extend(r.x.iter().map(|v| fmt_f64(*v)));
        out.push_str(&csv_line(row));
    }
    Ok(out)
}

/// Columns of a trace CSV needed for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceColumns {
    pub config_hash: String,
    pub meta: TraceMeta,
    pub t: Vec<usize>,
    pub loss: Vec<f64>,
    pub cum_loss: Vec<f64>,
    pub vio_h: Vec<f64>,
    pub queue: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

pub fn read_trace_columns(path: &Path) -> Result<TraceColumns> {
    let doc = split_comments(path)?;
    let config_hash = doc.get(path, "config_hash")?.to_string();
    let meta: TraceMeta = serde_json::from_str(doc.get(path, "meta")?)
        .map_err(|e| parse_err(path, 2, format!("bad meta: {e}")))?;
    let (header, rows) = doc.records(path)?;
    let (n, p) = (meta.n_constraints, meta.dim);
    if header.len() != 7 + n + p {
        return Err(parse_err(
            path,
            doc.body_line,
            format!("expected {} columns, found {}", 7 + n + p, header.len()),
        ));
    }
    let mut cols = TraceColumns {
        config_hash,
        meta,
        t: Vec::with_capacity(rows.len()),
        loss: Vec::with_capacity(rows.len()),
        cum_loss: Vec::with_capacity(rows.len()),
        vio_h: Vec::with_capacity(rows.len()),
        queue: Vec::with_capacity(rows.len()),
        x: Vec::with_capacity(rows.len()),
    };
    for (line, row) in rows {
        let t = row[0]
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, format!("bad round index `{}`", row[0])))?;
        cols.t.push(t);
        cols.loss.push(parse_f64(path, line, &row[1])?);
        cols.cum_loss.push(parse_f64(path, line, &row[2])?);
        cols.vio_h.push(parse_f64(path, line, &row[5])?);
        cols.queue.push(row[7..7 + n].iter().map(|f| parse_f64(path, line, f)).collect::<Result<_>>()?);
        cols.x.push(row[7 + n..].iter().map(|f| parse_f64(path, line, f)).collect::<Result<_>>()?);
    }
    Ok(cols)
}

/// Rebuilds a run trace from its CSV, re-evaluating `g_t(x_t)` on the stream.
/// Inner-solver gaps are not serialized and load as zero.
pub fn read_trace(path: &Path, stream: &dyn ProblemStream) -> Result<(String, RunTrace)> {
    let cols = read_trace_columns(path)?;
    let meta = &cols.meta;
    let spec = stream.spec();
    if meta.generator != stream.id()
        || meta.seed != stream.seed()
        || meta.horizon != spec.horizon
        || meta.dim != spec.dim
        || meta.n_constraints != spec.n_constraints
    {
        return Err(Error::Contract(format!(
            "{} was produced by a different stream ({} seed {} T {})",
            path.display(),
            meta.generator,
            meta.seed,
            meta.horizon
        )));
    }
    let mut rounds = Vec::with_capacity(cols.t.len());
    for i in 0..cols.t.len() {
        let fns = stream.round(cols.t[i])?;
        rounds.push(RoundRecord {
            t: cols.t[i],
            g: fns.constraint_values(&cols.x[i]),
            x: cols.x[i].clone(),
            loss: cols.loss[i],
            queue: cols.queue[i].clone(),
            gap: 0.0,
        });
    }
    Ok((
        cols.config_hash.clone(),
        RunTrace {
            meta: cols.meta,
            rounds,
            experts: None,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct ExpertHeader {
    kappa: f64,
    initial_weights: Vec<f64>,
    alpha_scales: Vec<f64>,
}

/// Expert CSV: `t,w_1..w_M,l_1..l_M,v_1..v_M` (weights, surrogate losses,
/// hard violations per expert).
pub fn experts_csv(config_hash: &str, trace: &RunTrace) -> Result<String> {
    let ex = trace
        .experts
        .as_ref()
        .ok_or_else(|| Error::Contract("trace has no expert records".into()))?;
    let m = ex.initial_weights.len();
    let mut out = String::new();
    writeln!(out, "# config_hash={config_hash}").unwrap();
    let header = ExpertHeader {
        kappa: ex.kappa,
        initial_weights: ex.initial_weights.clone(),
        alpha_scales: ex.alpha_scales.clone(),
    };
    writeln!(out, "# experts={}", serde_json::to_string(&header)?).unwrap();
    let mut cols = vec!["t".to_string()];
    for prefix in ["w", "l", "v"] {
        cols.extend((1..=m).map(|k| format!("{prefix}_{k}")));
    }
    out.push_str(&csv_line(cols));
    for (r, er) in trace.rounds.iter().zip(&ex.rounds) {
        let mut row = vec![r.t.to_string()];
        for series in [&er.weights, &er.surrogate, &er.violations] {
            row.extend(series.iter().map(|v| fmt_f64(*v)));
        }
        out.push_str(&csv_line(row));
    }
    Ok(out)
}

/// Attaches the expert records in `path` to `trace`. Per-expert decisions are
/// not serialized and load empty.
pub fn read_experts(path: &Path, trace: &mut RunTrace) -> Result<()> {
    let doc = split_comments(path)?;
    let header: ExpertHeader = serde_json::from_str(doc.get(path, "experts")?)
        .map_err(|e| parse_err(path, 2, format!("bad expert header: {e}")))?;
    let m = header.initial_weights.len();
    let (cols, rows) = doc.records(path)?;
    if cols.len() != 1 + 3 * m {
        return Err(parse_err(path, doc.body_line, format!("expected {} columns", 1 + 3 * m)));
    }
    if rows.len() != trace.rounds.len() {
        return Err(Error::dim("expert rounds", trace.rounds.len(), rows.len()));
    }
    let mut rounds = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let nums: Vec<f64> = row[1..].iter().map(|f| parse_f64(path, line, f)).collect::<Result<_>>()?;
        rounds.push(ExpertRound {
            weights: nums[..m].to_vec(),
            surrogate: nums[m..2 * m].to_vec(),
            violations: nums[2 * m..].to_vec(),
            x: Vec::new(),
            gaps: Vec::new(),
        });
    }
    trace.experts = Some(ExpertTrace {
        kappa: header.kappa,
        initial_weights: header.initial_weights,
        alpha_scales: header.alpha_scales,
        rounds,
    });
    Ok(())
}

/// A JSON artifact stamped with the config hash that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, body: &T) -> Result<()> {
    let doc = Stamped {
        config_hash: config_hash.to_string(),
        body,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Benchmark cache keyed by everything the comparators depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCache {
    pub key: String,
    pub benchmarks: BenchmarkSet,
}
