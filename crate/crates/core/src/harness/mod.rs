//! Experiment harness: configuration, orchestration of (seed, T) runs,
//! artifact writing and verification from artifacts.

pub mod artifacts;
pub mod plot;
pub mod presets;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coldq::{run, AlphaRule, InitialPoint, ParamSchedule};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expert::{run_expert, ExpertSchedule};
use crate::generators::{GeneratorConfig, ProblemStream};
use crate::metrics::{compute_benchmarks, dynamic_regret, hard_violation, soft_violation, static_regret, BenchmarkSet, RunTrace};
use crate::problem::ProblemSpec;
use crate::solver::InnerSolverConfig;
use crate::verify::{self, CheckReport, ScalingKind, ORACLE_SLACK};

use artifacts::{read_json, read_trace, run_stem, write_json, BenchCache, RunPaths};

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "COLDQ_OUT";
pub const DEFAULT_OUT: &str = "coldq-out";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Coldq,
    ColdqExpert,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Coldq => "coldq",
            Algorithm::ColdqExpert => "coldq_expert",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    ConvexDynamic {
        epsilon: f64,
        #[serde(default)]
        v_x: f64,
    },
    /// `mu` defaults to the stream's strong-convexity modulus.
    StronglyConvex {
        epsilon: f64,
        #[serde(default)]
        mu: Option<f64>,
    },
    Custom {
        alpha: AlphaRule,
        eta: f64,
        gamma: f64,
    },
}

impl ScheduleConfig {
    pub fn resolve(&self, spec: &ProblemSpec) -> Result<ParamSchedule> {
        match self {
            ScheduleConfig::ConvexDynamic { epsilon, v_x } => ParamSchedule::convex_dynamic(spec, *epsilon, *v_x),
            ScheduleConfig::StronglyConvex { epsilon, mu } => {
                ParamSchedule::strongly_convex(spec, *epsilon, mu.unwrap_or(spec.strong_convexity))
            }
            ScheduleConfig::Custom { alpha, eta, gamma } => {
                let s = ParamSchedule::custom(alpha.clone(), *eta, *gamma);
                s.validate(spec)?;
                Ok(s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMetric {
    VioH,
    VioS,
    RegD,
    RegS,
}

impl ScalingMetric {
    fn name(self) -> &'static str {
        match self {
            ScalingMetric::VioH => "vio_h",
            ScalingMetric::VioS => "vio_s",
            ScalingMetric::RegD => "reg_d",
            ScalingMetric::RegS => "reg_s",
        }
    }

    fn pick(self, m: &RunMetrics) -> Option<f64> {
        match self {
            ScalingMetric::VioH => Some(m.vio_h),
            ScalingMetric::VioS => Some(m.vio_s),
            ScalingMetric::RegD => Some(m.reg_d),
            ScalingMetric::RegS => m.reg_s,
        }
    }
}

/// A cross-horizon exponent check run after all (seed, T) runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub metric: ScalingMetric,
    pub kind: ScalingKind,
    pub claim: f64,
    pub tolerance: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub schedule: ScheduleConfig,
    /// Expert learning rate; defaults to `1/sqrt(T)`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub solver: InnerSolverConfig,
    #[serde(default)]
    pub initial_point: InitialPoint,
    pub seeds: Vec<u64>,
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write per-expert weights, surrogate losses and violations.
    #[serde(default)]
    pub trace_experts: bool,
    #[serde(default = "default_true")]
    pub verify: bool,
    /// Directory for benchmark caches; defaults to the output root.
    #[serde(default)]
    pub bench_cache: Option<PathBuf>,
    #[serde(default)]
    pub scaling: Vec<ScalingSpec>,
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: HarnessConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.horizons.is_empty() {
            return Err(Error::Config("seeds and horizons must be non-empty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be positive".into()));
        }
        let mut h = self.horizons.clone();
        h.sort_unstable();
        h.dedup();
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if h.len() != self.horizons.len() || s.len() != self.seeds.len() {
            return Err(Error::Config("seeds and horizons must not repeat".into()));
        }
        if self.algorithm == Algorithm::ColdqExpert {
            if !matches!(self.schedule, ScheduleConfig::ConvexDynamic { .. }) {
                return Err(Error::Config("coldq_expert requires the convex_dynamic schedule".into()));
            }
        } else if self.kappa.is_some() || self.trace_experts {
            return Err(Error::Config("kappa and trace_experts apply to coldq_expert only".into()));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("kappa must be positive, got {k}")));
            }
        }
        if !self.scaling.is_empty() && self.horizons.len() < 4 {
            return Err(Error::Config("scaling checks need at least 4 horizons".into()));
        }
        self.solver.validate()
    }

    /// SHA-256 of the canonical JSON with the location fields cleared, so the
    /// same experiment hashes equally wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.bench_cache = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// `--out` / env override, then `output_dir`, then [`DEFAULT_OUT`].
    pub fn output_root(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn bench_dir(&self, out: &Path) -> PathBuf {
        self.bench_cache.clone().unwrap_or_else(|| out.to_path_buf())
    }

    fn jobs(&self) -> Vec<(u64, usize)> {
        let mut jobs = Vec::new();
        for &t in &self.horizons {
            for &s in &self.seeds {
                jobs.push((s, t));
            }
        }
        jobs
    }

    fn epsilon(&self) -> f64 {
        match self.schedule {
            ScheduleConfig::ConvexDynamic { epsilon, .. } | ScheduleConfig::StronglyConvex { epsilon, .. } => epsilon,
            ScheduleConfig::Custom { .. } => f64::NAN,
        }
    }

    fn expert_schedule(&self, spec: &ProblemSpec) -> Result<ExpertSchedule> {
        ExpertSchedule::tuned(spec, self.epsilon(), self.kappa)
    }
}

/// Parameters derived for one (seed, T), as printed by a dry run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub seed: u64,
    pub horizon: usize,
    pub experts: usize,
    pub kappa: Option<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub alpha_1: f64,
    pub alpha_t: f64,
    pub constraint_bound: f64,
    pub grad_bound: f64,
    pub diameter: f64,
}

pub fn derive(cfg: &HarnessConfig) -> Result<Vec<Derived>> {
    cfg.validate()?;
    cfg.jobs()
        .into_iter()
        .map(|(seed, horizon)| {
            let stream = cfg.generator.build(seed, horizon)?;
            let spec = stream.spec();
            let (experts, kappa, sched) = match cfg.algorithm {
                Algorithm::Coldq => (1, None, cfg.schedule.resolve(spec)?),
                Algorithm::ColdqExpert => {
                    let es = cfg.expert_schedule(spec)?;
                    (es.len(), Some(es.kappa), es.schedules[0].clone())
                }
            };
            Ok(Derived {
                seed,
                horizon,
                experts,
                kappa,
                gamma: sched.gamma,
                eta: sched.eta,
                alpha_1: sched.alpha(1),
                alpha_t: sched.alpha(horizon),
                constraint_bound: spec.constraint_bound,
                grad_bound: spec.grad_bound,
                diameter: spec.diameter(),
            })
        })
        .collect()
}

/// Summary written next to each trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub generator: String,
    pub algorithm: String,
    pub seed: u64,
    pub horizon: usize,
    pub cum_loss: f64,
    pub reg_s: Option<f64>,
    pub reg_d: f64,
    pub vio_h: f64,
    pub vio_s: f64,
    pub path_length: f64,
    pub constraint_variation: f64,
    pub variation_exact: bool,
    pub regret_bound: Option<f64>,
    pub violation_bound: Option<f64>,
    pub max_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunChecks {
    pub seed: u64,
    pub horizon: usize,
    pub checks: Vec<CheckReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub stem: String,
    pub paths: RunPaths,
    pub metrics: RunMetrics,
    pub checks: Option<RunChecks>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub runs: Vec<RunOutcome>,
    pub scaling: Vec<CheckReport>,
}

impl ExperimentReport {
    pub fn all_checks(&self) -> impl Iterator<Item = &CheckReport> {
        self.runs
            .iter()
            .filter_map(|r| r.checks.as_ref())
            .flat_map(|c| c.checks.iter())
            .chain(self.scaling.iter())
    }

    pub fn passed(&self) -> bool {
        self.all_checks().all(|c| c.pass)
    }
}

fn bench_key(cfg: &HarnessConfig, seed: u64, horizon: usize) -> String {
    let doc = serde_json::json!({
        "generator": cfg.generator,
        "solver": cfg.solver,
        "seed": seed,
        "horizon": horizon,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

fn load_or_compute_bench(
    cfg: &HarnessConfig,
    hash: &str,
    stream: &dyn ProblemStream,
    path: &Path,
    exec: Exec,
) -> Result<BenchmarkSet> {
    let key = bench_key(cfg, stream.seed(), stream.spec().horizon);
    if path.exists() {
        match read_json::<BenchCache>(path) {
            Ok(doc) if doc.body.key == key => {
                log::debug!("reusing benchmark cache {}", path.display());
                return Ok(doc.body.benchmarks);
            }
            Ok(_) => log::info!("benchmark cache {} is stale; recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable benchmark cache: {e}"),
        }
    }
    let benchmarks = compute_benchmarks(stream, &cfg.solver, exec)?;
    let doc = BenchCache { key, benchmarks };
    write_json(path, hash, &doc)?;
    Ok(doc.benchmarks)
}

fn run_learner(cfg: &HarnessConfig, stream: &dyn ProblemStream, seed: u64, exec: Exec) -> Result<RunTrace> {
    let spec = stream.spec();
    match cfg.algorithm {
        Algorithm::Coldq => {
            let sched = cfg.schedule.resolve(spec)?;
            run(stream, &sched, &cfg.solver, &cfg.initial_point, seed)
        }
        Algorithm::ColdqExpert => {
            let es = cfg.expert_schedule(spec)?;
            run_expert(stream, es, &cfg.solver, &cfg.initial_point, seed, exec)
        }
    }
}

fn summarize(cfg: &HarnessConfig, trace: &RunTrace, bench: &BenchmarkSet, spec: &ProblemSpec) -> Result<RunMetrics> {
    let (regret_bound, violation_bound) = match cfg.algorithm {
        Algorithm::Coldq => {
            let sched = cfg.schedule.resolve(spec)?;
            (
                Some(verify::regret_bound(trace, bench, &sched)),
                Some(verify::violation_bound(trace, bench, &sched)),
            )
        }
        Algorithm::ColdqExpert => (None, None),
    };
    Ok(RunMetrics {
        generator: trace.meta.generator.clone(),
        algorithm: trace.meta.algorithm.clone(),
        seed: trace.meta.seed,
        horizon: trace.meta.horizon,
        cum_loss: trace.rounds.iter().map(|r| r.loss).sum(),
        reg_s: static_regret(trace, bench)?,
        reg_d: dynamic_regret(trace, bench)?,
        vio_h: hard_violation(trace),
        vio_s: soft_violation(trace),
        path_length: bench.path_length,
        constraint_variation: bench.constraint_variation,
        variation_exact: bench.variation_exact,
        regret_bound,
        violation_bound,
        max_gap: trace.rounds.iter().map(|r| r.gap).fold(0.0, f64::max),
    })
}

fn paths_for(cfg: &HarnessConfig, out: &Path, seed: u64, horizon: usize) -> (String, RunPaths) {
    let stem = run_stem(cfg.generator.id(), seed, horizon);
    let paths = RunPaths::new(out, &cfg.bench_dir(out), &stem);
    (stem, paths)
}

fn run_one(cfg: &HarnessConfig, hash: &str, out: &Path, seed: u64, horizon: usize, exec: Exec) -> Result<RunOutcome> {
    let (stem, paths) = paths_for(cfg, out, seed, horizon);
    let stream = cfg.generator.build(seed, horizon)?;
    let bench = load_or_compute_bench(cfg, hash, stream.as_ref(), &paths.bench, exec)?;
    let trace = run_learner(cfg, stream.as_ref(), seed, exec)?;
    artifacts::write_atomic(&paths.trace, artifacts::trace_csv(hash, &trace, &bench)?.as_bytes())?;
    if cfg.trace_experts {
        artifacts::write_atomic(&paths.experts, artifacts::experts_csv(hash, &trace)?.as_bytes())?;
    }
    let metrics = summarize(cfg, &trace, &bench, stream.spec())?;
    write_json(&paths.metrics, hash, &metrics)?;
    log::info!(
        "{stem}: reg_d={:.6e} vio_h={:.6e}",
        metrics.reg_d,
        metrics.vio_h
    );
    let checks = if cfg.verify {
        let checks = verify_run(cfg, hash, out, seed, horizon)?;
        write_json(&paths.checks, hash, &checks)?;
        Some(checks)
    } else {
        None
    };
    Ok(RunOutcome {
        stem,
        paths,
        metrics,
        checks,
    })
}

/// Runs every (seed, T) of the config, writes its artifacts under `out`, and
/// (when `verify` is set) checks them.
pub fn run_experiment(cfg: &HarnessConfig, out: &Path, exec: Exec) -> Result<ExperimentReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    std::fs::create_dir_all(out)?;
    let jobs = cfg.jobs();
    let runs: Vec<RunOutcome> = exec
        .map_slice(&jobs, |&(seed, horizon)| run_one(cfg, &hash, out, seed, horizon, exec))
        .into_iter()
        .collect::<Result<_>>()?;
    let scaling = if cfg.verify {
        scaling_checks(cfg, &hash, out, &runs.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>())?
    } else {
        Vec::new()
    };
    Ok(ExperimentReport {
        config_hash: hash,
        runs,
        scaling,
    })
}

fn check_hash(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Contract(format!(
            "{} was written by config {found}, not {expected}",
            path.display()
        )));
    }
    Ok(())
}

/// Checks one run purely from its artifacts: the trace CSV, the benchmark
/// cache and the stream the config describes. The learner is not re-run.
pub fn verify_run(cfg: &HarnessConfig, hash: &str, out: &Path, seed: u64, horizon: usize) -> Result<RunChecks> {
    let (_, paths) = paths_for(cfg, out, seed, horizon);
    let stream = cfg.generator.build(seed, horizon)?;
    let (found, mut trace) = read_trace(&paths.trace, stream.as_ref())?;
    check_hash(&paths.trace, &found, hash)?;
    let bench = read_json::<BenchCache>(&paths.bench)?;
    if bench.body.key != bench_key(cfg, seed, horizon) {
        return Err(Error::MissingArtifact(format!(
            "{} does not match this generator, solver, seed and horizon",
            paths.bench.display()
        )));
    }
    let bench = bench.body.benchmarks;
    let spec = stream.spec();

    let mut checks = vec![verify::check_lemma1(&trace), verify::check_lemma2(&trace, stream.as_ref())?];
    match cfg.algorithm {
        Algorithm::Coldq => {
            let sched = cfg.schedule.resolve(spec)?;
            let slack = cfg.solver.tolerance + ORACLE_SLACK;
            checks.push(verify::check_lemma3(&trace, &bench, &sched, stream.as_ref(), slack)?);
            checks.push(verify::check_violation_bound(&trace, &bench, &sched));
        }
        Algorithm::ColdqExpert => {
            if cfg.trace_experts {
                artifacts::read_experts(&paths.experts, &mut trace)?;
                checks.push(verify::check_weight_simplex(&trace)?);
                checks.push(verify::check_hedge(&trace)?);
                checks.push(verify::check_violation_convexity(&trace)?);
            }
        }
    }
    Ok(RunChecks { seed, horizon, checks })
}

fn scaling_checks(cfg: &HarnessConfig, hash: &str, out: &Path, metrics: &[RunMetrics]) -> Result<Vec<CheckReport>> {
    if cfg.scaling.is_empty() {
        return Ok(Vec::new());
    }
    let mut reports = Vec::with_capacity(cfg.scaling.len());
    for spec in &cfg.scaling {
        let results: Vec<(usize, Vec<f64>)> = cfg
            .horizons
            .iter()
            .map(|&t| {
                let vals = metrics
                    .iter()
                    .filter(|m| m.horizon == t)
                    .filter_map(|m| spec.metric.pick(m))
                    .collect();
                (t, vals)
            })
            .collect();
        let id = format!("scaling_{}", spec.metric.name());
        reports.push(verify::check_scaling(&id, &results, spec.kind, spec.claim, spec.tolerance)?);
    }
    let path = out.join(format!("{}.scaling.checks.json", cfg.generator.id()));
    write_json(&path, hash, &serde_json::json!({ "checks": reports }))?;
    Ok(reports)
}

/// Re-checks every run of an experiment from artifacts already on disk.
pub fn verify_experiment(cfg: &HarnessConfig, out: &Path, exec: Exec) -> Result<ExperimentReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let jobs = cfg.jobs();
    let runs: Vec<RunOutcome> = exec
        .map_slice(&jobs, |&(seed, horizon)| -> Result<RunOutcome> {
            let (stem, paths) = paths_for(cfg, out, seed, horizon);
            let metrics = read_json::<RunMetrics>(&paths.metrics)?;
            check_hash(&paths.metrics, &metrics.config_hash, &hash)?;
            let checks = verify_run(cfg, &hash, out, seed, horizon)?;
            write_json(&paths.checks, &hash, &checks)?;
            Ok(RunOutcome {
                stem,
                paths,
                metrics: metrics.body,
                checks: Some(checks),
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let metrics: Vec<RunMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    let scaling = scaling_checks(cfg, &hash, out, &metrics)?;
    Ok(ExperimentReport {
        config_hash: hash,
        runs,
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::ThetaParams;

    fn small() -> HarnessConfig {
        HarnessConfig {
            generator: GeneratorConfig::QuadraticProg(ThetaParams::default()),
            algorithm: Algorithm::Coldq,
            schedule: ScheduleConfig::ConvexDynamic { epsilon: 0.5, v_x: 0.0 },
            kappa: None,
            solver: InnerSolverConfig::default(),
            initial_point: InitialPoint::Center,
            seeds: vec![0, 1],
            horizons: vec![30],
            output_dir: None,
            trace_experts: false,
            verify: true,
            bench_cache: None,
            scaling: Vec::new(),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = HarnessConfig::from_json(
            r#"{"generator":{"id":"linear_prog"},"schedule":{"mode":"convex_dynamic","epsilon":0.5},
                "seeds":[0],"horizons":[10],"colour":"red"}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = HarnessConfig::from_json(
            r#"{"generator":{"id":"linear_prog","dimm":3},"schedule":{"mode":"convex_dynamic","epsilon":0.5},
                "seeds":[0],"horizons":[10]}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_locations() {
        let a = small();
        let mut b = small();
        b.output_dir = Some("/elsewhere".into());
        b.bench_cache = Some("/cache".into());
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(9);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn expert_needs_convex_dynamic() {
        let mut c = small();
        c.algorithm = Algorithm::ColdqExpert;
        c.schedule = ScheduleConfig::StronglyConvex { epsilon: 0.5, mu: None };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn derived_parameters() {
        let mut c = small();
        c.horizons = vec![100];
        c.seeds = vec![0];
        let d = &derive(&c).unwrap()[0];
        assert_eq!((d.experts, d.gamma, d.eta, d.alpha_t), (1, 50.0, 0.01, 10.0));
        c.algorithm = Algorithm::ColdqExpert;
        let d = &derive(&c).unwrap()[0];
        assert!(d.experts > 1);
        assert_eq!(d.kappa, Some(0.1));
    }

    #[test]
    fn run_then_verify_from_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let rep = run_experiment(&cfg, dir.path(), Exec::default()).unwrap();
        assert!(rep.passed(), "{:?}", rep.all_checks().map(|c| c.summary()).collect::<Vec<_>>());
        for r in &rep.runs {
            for p in [&r.paths.trace, &r.paths.bench, &r.paths.metrics, &r.paths.checks] {
                assert!(p.exists(), "{}", p.display());
            }
        }
        let again = verify_experiment(&cfg, dir.path(), Exec::Sequential).unwrap();
        assert_eq!(again.runs.len(), 2);
        assert!(again.passed());

        let mut other = cfg.clone();
        other.solver.restarts = 1;
        assert!(verify_experiment(&other, dir.path(), Exec::Sequential).is_err());
    }

    #[test]
    fn corrupted_queue_column_fails_verification() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.seeds = vec![0];
        run_experiment(&cfg, dir.path(), Exec::Sequential).unwrap();
        let (_, paths) = paths_for(&cfg, dir.path(), 0, 30);
        let text = std::fs::read_to_string(&paths.trace).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let mut fields: Vec<String> = lines[10].split(',').map(str::to_string).collect();
        let q: f64 = fields[7].parse().unwrap();
        fields[7] = format!("{:?}", q * 1.1);
        lines[10] = fields.join(",");
        std::fs::write(&paths.trace, lines.join("\n") + "\n").unwrap();
        let rep = verify_experiment(&cfg, dir.path(), Exec::Sequential).unwrap();
        let lemma2 = rep.all_checks().find(|c| c.id == "lemma2_drift").unwrap();
        assert!(!lemma2.pass);
    }

    #[test]
    fn expert_run_writes_expert_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.algorithm = Algorithm::ColdqExpert;
        cfg.trace_experts = true;
        cfg.seeds = vec![0];
        let rep = run_experiment(&cfg, dir.path(), Exec::default()).unwrap();
        assert!(rep.runs[0].paths.experts.exists());
        let ids: Vec<_> = rep.all_checks().map(|c| c.id.as_str()).collect();
        assert!(ids.contains(&"hedge_regret") && ids.contains(&"weight_simplex"));
        assert!(rep.passed(), "{:?}", rep.all_checks().map(|c| c.summary()).collect::<Vec<_>>());
    }
}
