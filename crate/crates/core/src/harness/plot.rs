//! Long-format plot data (`t,series,value`) aggregated across seeds.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};

use super::artifacts::{fmt_f64, read_trace_columns, TraceColumns};

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn series_of(trace: &TraceColumns, name: &str) -> Vec<f64> {
    match name {
        "cum_loss" => trace.cum_loss.clone(),
        "vio_h" => trace.vio_h.clone(),
        "energy_cost_avg" => trace.cum_loss.iter().zip(&trace.t).map(|(c, t)| c / *t as f64).collect(),
        // per-round unserved arrival mass
        "delayed_jobs" => {
            let mut prev = 0.0;
            trace
                .vio_h
                .iter()
                .map(|v| {
                    let d = v - prev;
                    prev = *v;
                    d
                })
                .collect()
        }
        _ => unreachable!("unknown series {name}"),
    }
}

/// Median under the bare series name, plus `_q1`, `_q3`, `_min`, `_max`.
pub fn plot_data(paths: &[PathBuf]) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::Config("plotdata needs at least one trace".into()));
    }
    let traces: Vec<TraceColumns> = paths.iter().map(|p| read_trace_columns(p)).collect::<Result<_>>()?;
    let generator = &traces[0].meta.generator;
    if let Some(other) = traces.iter().find(|t| &t.meta.generator != generator) {
        return Err(Error::Config(format!(
            "cannot aggregate traces from different generators ({generator} and {})",
            other.meta.generator
        )));
    }
    let hashes: BTreeSet<&str> = traces.iter().map(|t| t.config_hash.as_str()).collect();
    let mut names = vec!["cum_loss", "vio_h"];
    if generator == "job_scheduling" {
        names.extend(["energy_cost_avg", "delayed_jobs"]);
    }
    let horizon = traces.iter().map(|t| t.t.len()).max().unwrap_or(0);

    let mut out = String::new();
    writeln!(out, "# config_hash={}", hashes.into_iter().collect::<Vec<_>>().join(";")).unwrap();
    out.push_str("t,series,value\n");
    let columns: Vec<Vec<Vec<f64>>> = names
        .iter()
        .map(|n| traces.iter().map(|t| series_of(t, n)).collect())
        .collect();
    for i in 0..horizon {
        for (name, per_trace) in names.iter().zip(&columns) {
            let mut vals: Vec<f64> = per_trace.iter().filter_map(|s| s.get(i).copied()).collect();
            vals.sort_by(f64::total_cmp);
            let stats = [
                ("", quantile(&vals, 0.5)),
                ("_q1", quantile(&vals, 0.25)),
                ("_q3", quantile(&vals, 0.75)),
                ("_min", vals[0]),
                ("_max", vals[vals.len() - 1]),
            ];
            for (suffix, v) in stats {
                writeln!(out, "{},{name}{suffix},{}", i + 1, fmt_f64(v)).unwrap();
            }
        }
    }
    Ok(out)
}
