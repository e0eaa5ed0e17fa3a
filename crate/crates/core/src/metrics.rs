//! Run traces, hindsight benchmarks, and the regret and violation measures.
//!
//! Metric sums run over rounds `1..=T`; path length and constraint variation
//! run over `2..=T` because they measure change between consecutive rounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::generators::ProblemStream;
use crate::problem::{dist, hinge, Constraints, Loss, Projection};
use crate::solver::{solve_constrained_detailed, InnerSolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub generator: String,
    pub seed: u64,
    pub horizon: usize,
    pub dim: usize,
    pub n_constraints: usize,
    pub algorithm: String,
    pub gamma: f64,
    pub eta: f64,
    pub constraint_bound: f64,
    pub grad_bound: f64,
    pub diameter: f64,
}

impl TraceMeta {
    pub fn new(stream: &dyn ProblemStream, algorithm: &str, gamma: f64, eta: f64) -> Self {
        let spec = stream.spec();
        TraceMeta {
            generator: stream.id().to_string(),
            seed: stream.seed(),
            horizon: spec.horizon,
            dim: spec.dim,
            n_constraints: spec.n_constraints,
            algorithm: algorithm.to_string(),
            gamma,
            eta,
            constraint_bound: spec.constraint_bound,
            grad_bound: spec.grad_bound,
            diameter: spec.diameter(),
        }
    }
}

/// What happened in round `t`: the decision, `f_t(x_t)`, `g_t(x_t)` and the
/// queue after its update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub loss: f64,
    pub g: Vec<f64>,
    pub queue: Vec<f64>,
    /// Certified objective gap of the inner solve that produced `x`.
    pub gap: f64,
}

impl RoundRecord {
    pub fn hard_violation(&self) -> f64 {
        self.g.iter().copied().map(hinge).sum()
    }
}

/// Per-round internals of an expert bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertRound {
    /// `w_t[m]` used to form `x_t`.
    pub weights: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// `sum_n [g_t^n(x_t[m])]_+`.
    pub violations: Vec<f64>,
    /// Surrogate losses `l_t(x_t[m])`.
    pub surrogate: Vec<f64>,
    pub gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertTrace {
    pub kappa: f64,
    pub initial_weights: Vec<f64>,
    pub alpha_scales: Vec<f64>,
    pub rounds: Vec<ExpertRound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub rounds: Vec<RoundRecord>,
    pub experts: Option<ExpertTrace>,
}

/// Hindsight comparators for one (generator, seed, T).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    /// Best fixed point satisfying every round's constraints; `None` when
    /// that intersection is empty.
    pub x_star: Option<Vec<f64>>,
    /// `f_t(x^*)` per round.
    pub f_static: Vec<f64>,
    pub x_star_t: Vec<Vec<f64>>,
    /// `f_t(x_t^*)` per round.
    pub f_star_t: Vec<f64>,
    pub path_length: f64,
    pub constraint_variation: f64,
    /// `false` when some variation term is a sampled lower estimate.
    pub variation_exact: bool,
}

/// Running totals after each round.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeRow {
    pub cum_loss: f64,
    pub reg_s: Option<f64>,
    pub reg_d: f64,
    pub vio_h: f64,
    pub vio_s: f64,
}

fn check_len(trace: &RunTrace, bench: &BenchmarkSet) -> Result<()> {
    if bench.f_star_t.len() != trace.rounds.len() {
        return Err(Error::dim("benchmark rounds", trace.rounds.len(), bench.f_star_t.len()));
    }
    Ok(())
}

/// `sum_t f_t(x_t) - f_t(x^*)`; `None` when the fixed comparator does not exist.
pub fn static_regret(trace: &RunTrace, bench: &BenchmarkSet) -> Result<Option<f64>> {
    check_len(trace, bench)?;
    if bench.x_star.is_none() {
        return Ok(None);
    }
    Ok(Some(
        trace
            .rounds
            .iter()
            .zip(&bench.f_static)
            .map(|(r, fs)| r.loss - fs)
            .sum(),
    ))
}

/// `sum_t f_t(x_t) - f_t(x_t^*)`.
pub fn dynamic_regret(trace: &RunTrace, bench: &BenchmarkSet) -> Result<f64> {
    check_len(trace, bench)?;
    Ok(trace
        .rounds
        .iter()
        .zip(&bench.f_star_t)
        .map(|(r, fs)| r.loss - fs)
        .sum())
}

/// `sum_n sum_t [g_t^n(x_t)]_+`.
pub fn hard_violation(trace: &RunTrace) -> f64 {
    let n = trace.meta.n_constraints;
    (0..n)
        .map(|k| trace.rounds.iter().map(|r| hinge(r.g[k])).sum::<f64>())
        .sum()
}

/// `sum_n [sum_t g_t^n(x_t)]_+`.
pub fn soft_violation(trace: &RunTrace) -> f64 {
    let n = trace.meta.n_constraints;
    (0..n)
        .map(|k| hinge(trace.rounds.iter().map(|r| r.g[k]).sum::<f64>()))
        .sum()
}

/// Running sums in fixed order (ascending `t`, then ascending `n`).
pub fn cumulative(trace: &RunTrace, bench: &BenchmarkSet) -> Result<Vec<CumulativeRow>> {
    check_len(trace, bench)?;
    let n = trace.meta.n_constraints;
    let mut cum_loss = 0.0;
    let mut reg_s = 0.0;
    let mut reg_d = 0.0;
    let mut hard = vec![0.0; n];
    let mut soft = vec![0.0; n];
    let mut out = Vec::with_capacity(trace.rounds.len());
    for (i, r) in trace.rounds.iter().enumerate() {
        cum_loss += r.loss;
        reg_s += r.loss - bench.f_static[i];
        reg_d += r.loss - bench.f_star_t[i];
        for k in 0..n {
            hard[k] += hinge(r.g[k]);
            soft[k] += r.g[k];
        }
        out.push(CumulativeRow {
            cum_loss,
            reg_s: bench.x_star.as_ref().map(|_| reg_s),
            reg_d,
            vio_h: hard.iter().sum(),
            vio_s: soft.iter().map(|v| hinge(*v)).sum(),
        });
    }
    Ok(out)
}

/// `sum_{t=2}^T ||x_t^* - x_{t-1}^*||`.
pub fn path_length(x_star_t: &[Vec<f64>]) -> f64 {
    x_star_t.windows(2).map(|w| dist(&w[1], &w[0])).sum()
}

/// `sum_{t=2}^T max_{x in X} ||g_t(x) - g_{t-1}(x)||`, with a flag telling
/// whether every term was computed exactly.
pub fn constraint_variation(stream: &dyn ProblemStream, exec: Exec) -> Result<(f64, bool)> {
    let spec = stream.spec();
    let terms = exec.map_range(2..spec.horizon + 1, |t| -> Result<_> {
        let prev = stream.round(t - 1)?;
        let cur = stream.round(t)?;
        cur.constraints.variation(&prev.constraints, &spec.feasible)
    });
    let mut total = 0.0;
    let mut exact = true;
    for v in terms {
        let v = v?;
        total += v.value;
        exact &= v.exact;
    }
    Ok((total, exact))
}

/// Per-round comparators `x_t^*` and the fixed comparator `x^*` under all
/// rounds' constraints.
pub fn compute_benchmarks(
    stream: &dyn ProblemStream,
    solver_cfg: &InnerSolverConfig,
    exec: Exec,
) -> Result<BenchmarkSet> {
    let spec = stream.spec();
    let set = &spec.feasible;
    let horizon = spec.horizon;
    let per_round = exec.map_range(1..horizon + 1, |t| -> Result<_> {
        let r = stream.round(t)?;
        let sol = solve_constrained_detailed(&r.loss, &r.constraints, set, solver_cfg)?;
        Ok((sol.x.into_inner(), sol.objective))
    });
    let mut x_star_t = Vec::with_capacity(horizon);
    let mut f_star_t = Vec::with_capacity(horizon);
    for item in per_round {
        let (x, f) = item?;
        x_star_t.push(x);
        f_star_t.push(f);
    }

    let rounds: Vec<_> = (1..=horizon).map(|t| stream.round(t)).collect::<Result<_>>()?;
    let total = Loss::sum(rounds.iter().map(|r| &r.loss))?;
    let all = Constraints::intersect_all(rounds.iter().map(|r| &r.constraints))?;
    let x_star = match solve_constrained_detailed(&total, &all, set, solver_cfg) {
        Ok(sol) => Some(sol.x.into_inner()),
        Err(Error::Infeasible(msg)) => {
            log::warn!("{} seed {}: no fixed comparator ({msg})", stream.id(), stream.seed());
            None
        }
        Err(e) => return Err(e),
    };
    let f_static = match &x_star {
        Some(x) => rounds.iter().map(|r| r.loss_value(x)).collect(),
        None => vec![0.0; horizon],
    };
    debug_assert!(x_star.as_ref().is_none_or(|x| set.contains(x)));

    let (constraint_variation, variation_exact) = constraint_variation(stream, exec)?;
    Ok(BenchmarkSet {
        path_length: path_length(&x_star_t),
        x_star,
        f_static,
        x_star_t,
        f_star_t,
        constraint_variation,
        variation_exact,
    })
}
