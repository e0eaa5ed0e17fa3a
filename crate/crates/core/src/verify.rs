//! Runtime checks that turn the queue bounds, the drift bound, the per-slot
//! inequality and the scaling claims into pass/fail reports over traces.
//!
//! Every check reads only a trace, the stream that produced it and (where
//! needed) its benchmark set; none of them re-runs the learner.

use serde::{Deserialize, Serialize};

use crate::coldq::ParamSchedule;
use crate::error::{Error, Result};
use crate::generators::ProblemStream;
use crate::metrics::{BenchmarkSet, RunTrace};
use crate::problem::{dist, dist_sq, hinge};
use crate::queue::{drift_bound_rhs, DoublyBoundedQueue};

/// Absolute tolerance for inequalities that hold in exact arithmetic.
pub const EXACT_TOLERANCE: f64 = 1e-9;
/// Additive allowance for error in the hindsight comparators.
pub const ORACLE_SLACK: f64 = 1e-4;
/// Tolerance on the weight simplex of an expert bank.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub round: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(x, y)` points the line was fitted to.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub rounds_checked: usize,
    /// Largest `lhs - rhs` seen; negative means every round held with margin.
    pub max_slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub first_violation: Option<Violation>,
    /// Set when an input was only estimated and the verdict is not a proof.
    pub advisory: bool,
    pub note: Option<String>,
    pub fit: Option<Fit>,
}

impl CheckReport {
    fn new(id: &str, tolerance: f64) -> Self {
        CheckReport {
            id: id.to_string(),
            rounds_checked: 0,
            max_slack: f64::NEG_INFINITY,
            tolerance,
            pass: true,
            first_violation: None,
            advisory: false,
            note: None,
            fit: None,
        }
    }

    /// Records `lhs <= rhs + tolerance` for one round.
    fn observe(&mut self, round: usize, lhs: f64, rhs: f64) {
        self.rounds_checked += 1;
        let slack = lhs - rhs;
        if !(slack <= self.max_slack) {
            self.max_slack = slack;
        }
        if !(slack <= self.tolerance) && self.first_violation.is_none() {
            self.pass = false;
            self.first_violation = Some(Violation { round, lhs, rhs });
        }
    }

    fn note(&mut self, text: impl Into<String>) {
        let text = text.into();
        self.note = Some(match self.note.take() {
            Some(old) => format!("{old}; {text}"),
            None => text,
        });
    }

    fn finish(mut self) -> Self {
        if !self.max_slack.is_finite() {
            self.max_slack = 0.0;
        }
        self
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{status} {} rounds={} max_slack={:e} tol={:e}",
            self.id, self.rounds_checked, self.max_slack, self.tolerance
        );
        if let Some(v) = &self.first_violation {
            s.push_str(&format!(" first_violation=t{}({:e} > {:e})", v.round, v.lhs, v.rhs));
        }
        if let Some(f) = &self.fit {
            s.push_str(&format!(" slope={:.4} r2={:.4}", f.slope, f.r_squared));
        }
        if self.advisory {
            s.push_str(" advisory");
        }
        if let Some(n) = &self.note {
            s.push_str(&format!(" ({n})"));
        }
        s
    }
}

/// `gamma <= Q_t^n <= G / eta` for every round and constraint, tolerance 0.
pub fn check_lemma1(trace: &RunTrace) -> CheckReport {
    let meta = &trace.meta;
    let ceiling = meta.constraint_bound / meta.eta;
    let mut report = CheckReport::new("lemma1_queue_bounds", 0.0);
    for r in &trace.rounds {
        let (lo, hi) = r.queue.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(*q), hi.max(*q))
        });
        // worst of the two one-sided conditions
        if meta.gamma - lo >= hi - ceiling {
            report.observe(r.t, meta.gamma, lo);
        } else {
            report.observe(r.t, hi, ceiling);
        }
    }
    report.finish()
}

/// Drift bound on every round `t >= 2`, plus a replay of the queue recursion
/// from the recorded decisions so that a tampered queue column is caught.
pub fn check_lemma2(trace: &RunTrace, stream: &dyn ProblemStream) -> Result<CheckReport> {
    let mut report = CheckReport::new("lemma2_drift", EXACT_TOLERANCE);
    if trace.meta.algorithm != "coldq" {
        report.note("aggregate queue of an expert bank follows no recursion; skipped");
        return Ok(report.finish());
    }
    let spec = stream.spec();
    let meta = &trace.meta;
    let (gamma, eta, g_bound) = (meta.gamma, meta.eta, meta.constraint_bound);
    let Some(first) = trace.rounds.first() else {
        return Ok(report.finish());
    };
    let off = first.queue.iter().map(|q| (q - gamma).abs()).fold(0.0, f64::max);
    if off > 0.0 {
        report.note(format!("Q_1 differs from gamma by {off:e}"));
        report.observe(first.t, gamma + off, gamma);
    }

    let mut prev_fns = stream.round(first.t)?;
    for w in trace.rounds.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let cur_fns = stream.round(cur.t)?;
        let violations: Vec<f64> = cur_fns.constraint_values(&cur.x).into_iter().map(hinge).collect();
        let q_prev = match DoublyBoundedQueue::from_values(prev.queue.clone(), gamma, eta, g_bound) {
            Ok(q) => q,
            Err(e) => {
                report.observe(prev.t, f64::INFINITY, 0.0);
                report.note(format!("recorded queue out of range at t={}: {e}", prev.t));
                return Ok(report.finish());
            }
        };
        let replay = q_prev.update(&violations)?;
        let mismatch = replay
            .values()
            .iter()
            .zip(&cur.queue)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if mismatch > EXACT_TOLERANCE && report.pass {
            report.note(format!("queue differs from its recursion at t={} by {mismatch:e}", cur.t));
            report.observe(cur.t, mismatch, 0.0);
        }

        let variation = cur_fns.constraints.variation(&prev_fns.constraints, &spec.feasible)?;
        if !variation.exact && !report.advisory {
            report.advisory = true;
            report.note("constraint variation sampled; drift bound not certified");
        }
        let potential = |q: &[f64]| 0.5 * q.iter().map(|v| (v - gamma).powi(2)).sum::<f64>();
        let drift = potential(&cur.queue) - potential(&prev.queue);
        let rhs = drift_bound_rhs(&q_prev, &cur.x, &prev_fns, &cur_fns, spec, variation.value)?;
        report.observe(cur.t, drift, rhs);
        prev_fns = cur_fns;
    }
    Ok(report.finish())
}

/// Per-slot inequality for every `t >= 2`:
/// `f_{t-1}(x_{t-1}) - f_{t-1}(x*_{t-1}) + sum_n Q_{t-1}[g_{t-1}(x_t)]_+
///  <= 2 R a_{t-1} ||x*_t - x*_{t-1}|| + R^2 (a_t - a_{t-1}) + D^2 / (4 a_{t-1})
///     + a_{t-1} ||x*_{t-1} - x_{t-1}||^2 - a_t ||x*_t - x_t||^2`.
pub fn check_lemma3(
    trace: &RunTrace,
    bench: &BenchmarkSet,
    sched: &ParamSchedule,
    stream: &dyn ProblemStream,
    slack: f64,
) -> Result<CheckReport> {
    let horizon = trace.rounds.len();
    if bench.x_star_t.len() != horizon || bench.f_star_t.len() != horizon {
        return Err(Error::MissingArtifact(format!(
            "benchmark set covers {} rounds, trace has {horizon}",
            bench.x_star_t.len()
        )));
    }
    sched.check_monotone(horizon)?;
    let mut report = CheckReport::new("lemma3_per_slot", slack);
    if trace.meta.algorithm != "coldq" {
        report.note("expert aggregate is not a per-slot minimizer; skipped");
        return Ok(report.finish());
    }
    let r = trace.meta.diameter;
    let d = trace.meta.grad_bound;
    for i in 1..horizon {
        let (prev, cur) = (&trace.rounds[i - 1], &trace.rounds[i]);
        let (a_prev, a_cur) = (sched.alpha(prev.t), sched.alpha(cur.t));
        let g_prev = stream.round(prev.t)?.constraint_values(&cur.x);
        let weighted: f64 = prev.queue.iter().zip(g_prev).map(|(q, v)| q * hinge(v)).sum();
        let lhs = prev.loss - bench.f_star_t[i - 1] + weighted;
        let rhs = 2.0 * r * a_prev * dist(&bench.x_star_t[i], &bench.x_star_t[i - 1])
            + r * r * (a_cur - a_prev)
            + d * d / (4.0 * a_prev)
            + a_prev * dist_sq(&bench.x_star_t[i - 1], &prev.x)
            - a_cur * dist_sq(&bench.x_star_t[i], &cur.x);
        report.observe(cur.t, lhs, rhs);
    }
    Ok(report.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    /// Slope of `ln(metric)` against `ln(T)`.
    Power,
    /// Slope of `metric` against `ln(T)`.
    Log,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares line through `points`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<Fit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(Fit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// Fits the per-horizon median across seeds and passes when the slope is at
/// most `exponent_claim + tolerance`. Upper bounds only: a flatter curve passes.
pub fn check_scaling(
    id: &str,
    results: &[(usize, Vec<f64>)],
    kind: ScalingKind,
    exponent_claim: f64,
    tolerance: f64,
) -> Result<CheckReport> {
    if results.len() < 4 {
        return Err(Error::Contract(format!(
            "scaling check needs at least 4 horizons, got {}",
            results.len()
        )));
    }
    let mut report = CheckReport::new(id, tolerance);
    let mut excluded = 0usize;
    let mut points = Vec::new();
    for (t, values) in results {
        let mut kept: Vec<f64> = match kind {
            ScalingKind::Power => values.iter().copied().filter(|v| *v > 0.0).collect(),
            ScalingKind::Log => values.clone(),
        };
        excluded += values.len() - kept.len();
        if kept.is_empty() {
            continue;
        }
        let m = median(&mut kept);
        let x = (*t as f64).ln();
        points.push(match kind {
            ScalingKind::Power => (x, m.ln()),
            ScalingKind::Log => (x, m),
        });
    }
    if excluded > 0 {
        report.note(format!("{excluded} nonpositive values excluded"));
    }
    report.rounds_checked = points.len();
    if points.len() < 2 {
        // a metric that is zero at every horizon is trivially bounded
        report.note("fewer than two positive medians; metric is identically zero");
        report.max_slack = -exponent_claim;
        return Ok(report.finish());
    }
    let fit = fit_line(&points).ok_or_else(|| Error::Contract("horizons are not distinct".into()))?;
    report.observe(0, fit.slope, exponent_claim);
    report.fit = Some(fit);
    Ok(report.finish())
}

/// `sum_{t=2}^T a_{t-1} ||x*_t - x*_{t-1}||`.
fn weighted_path(bench: &BenchmarkSet, sched: &ParamSchedule) -> f64 {
    bench
        .x_star_t
        .windows(2)
        .enumerate()
        .map(|(i, w)| sched.alpha(i + 1) * dist(&w[1], &w[0]))
        .sum()
}

fn inverse_alpha_sum(sched: &ParamSchedule, horizon: usize) -> f64 {
    (1..=horizon).map(|t| 1.0 / sched.alpha(t)).sum()
}

/// Evaluated dynamic-regret bound:
/// `2 R sum a_{t-1} ||dx*|| + (D^2 / 4) sum 1 / a_t + R^2 a_T + D R`.
pub fn regret_bound(trace: &RunTrace, bench: &BenchmarkSet, sched: &ParamSchedule) -> f64 {
    let m = &trace.meta;
    let (r, d, horizon) = (m.diameter, m.grad_bound, trace.rounds.len());
    2.0 * r * weighted_path(bench, sched)
        + 0.25 * d * d * inverse_alpha_sum(sched, horizon)
        + r * r * sched.alpha(horizon)
        + d * r
}

/// Evaluated hard-violation bound:
/// `G sqrt(N) V_g / (eta gamma) + (regret terms) / gamma + (D R + 2 N G^2) T / gamma + N G`.
pub fn violation_bound(trace: &RunTrace, bench: &BenchmarkSet, sched: &ParamSchedule) -> f64 {
    let m = &trace.meta;
    let (r, d, g) = (m.diameter, m.grad_bound, m.constraint_bound);
    let n = m.n_constraints as f64;
    let horizon = trace.rounds.len();
    let (eta, gamma) = (m.eta, m.gamma);
    g * n.sqrt() / (eta * gamma) * bench.constraint_variation
        + 2.0 * r / gamma * weighted_path(bench, sched)
        + 0.25 * d * d / gamma * inverse_alpha_sum(sched, horizon)
        + (d * r + 2.0 * n * g * g) * horizon as f64 / gamma
        + r * r * sched.alpha(horizon) / gamma
        + n * g
}

/// Observed hard violation against its evaluated bound.
pub fn check_violation_bound(trace: &RunTrace, bench: &BenchmarkSet, sched: &ParamSchedule) -> CheckReport {
    let mut report = CheckReport::new("violation_bound", 0.0);
    if !bench.variation_exact {
        report.advisory = true;
        report.note("constraint variation sampled");
    }
    report.observe(
        trace.rounds.len(),
        crate::metrics::hard_violation(trace),
        violation_bound(trace, bench, sched),
    );
    report.finish()
}

fn expert_trace(trace: &RunTrace) -> Result<&crate::metrics::ExpertTrace> {
    trace
        .experts
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("trace carries no expert records".into()))
}

/// Exponential-weights regret on every prefix:
/// `sum_t l_t(x_t) - min_m {sum_t l_t(x_t[m]) + ln(1 / w_1[m]) / kappa} <= kappa F^2 T / 2`
/// with `F = D R`. The surrogate vanishes at the aggregate, so `l_t(x_t) = 0`.
pub fn check_hedge(trace: &RunTrace) -> Result<CheckReport> {
    let ex = expert_trace(trace)?;
    let f = trace.meta.grad_bound * trace.meta.diameter;
    let kappa = ex.kappa;
    let mut report = CheckReport::new("hedge_regret", EXACT_TOLERANCE);
    let mut cum: Vec<f64> = ex.initial_weights.iter().map(|w| (1.0 / w).ln() / kappa).collect();
    for (i, round) in ex.rounds.iter().enumerate() {
        for (c, l) in cum.iter_mut().zip(&round.surrogate) {
            *c += l;
        }
        let best = cum.iter().copied().fold(f64::INFINITY, f64::min);
        let steps = (i + 1) as f64;
        report.observe(i + 1, -best, 0.5 * kappa * f * f * steps);
    }
    Ok(report.finish())
}

/// Weights are nonnegative and sum to one within [`SIMPLEX_TOLERANCE`].
pub fn check_weight_simplex(trace: &RunTrace) -> Result<CheckReport> {
    let ex = expert_trace(trace)?;
    let mut report = CheckReport::new("weight_simplex", SIMPLEX_TOLERANCE);
    for (i, round) in ex.rounds.iter().enumerate() {
        let sum: f64 = round.weights.iter().sum();
        let negative = round.weights.iter().copied().fold(0.0, |acc: f64, w| acc.max(-w));
        report.observe(i + 1, (sum - 1.0).abs().max(negative), 0.0);
    }
    Ok(report.finish())
}

/// Aggregate hard violation is at most the weighted expert violations.
pub fn check_violation_convexity(trace: &RunTrace) -> Result<CheckReport> {
    let ex = expert_trace(trace)?;
    let mut report = CheckReport::new("violation_convexity", EXACT_TOLERANCE);
    for (r, round) in trace.rounds.iter().zip(&ex.rounds) {
        let weighted: f64 = round.weights.iter().zip(&round.violations).map(|(w, v)| w * v).sum();
        report.observe(r.t, r.hard_violation(), weighted);
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coldq::{run, AlphaRule, InitialPoint};
    use crate::generators::{GeneratorConfig, ThetaParams, VecStream};
    use crate::metrics::{compute_benchmarks, RoundRecord, TraceMeta};
    use crate::problem::{BoxSet, Constraints, Loss, ProblemSpec, RoundFunctions};
    use crate::solver::InnerSolverConfig;

    fn qp_trace(seed: u64, horizon: usize) -> (Box<dyn ProblemStream>, ParamSchedule, RunTrace) {
        let stream = GeneratorConfig::QuadraticProg(ThetaParams::default())
            .build(seed, horizon)
            .unwrap();
        let sched = ParamSchedule::convex_dynamic(stream.spec(), 0.5, 0.0).unwrap();
        let trace = run(stream.as_ref(), &sched, &InnerSolverConfig::default(), &InitialPoint::Center, seed).unwrap();
        (stream, sched, trace)
    }

    fn meta(gamma: f64, eta: f64, g: f64) -> TraceMeta {
        TraceMeta {
            generator: "hand".into(),
            seed: 0,
            horizon: 3,
            dim: 1,
            n_constraints: 1,
            algorithm: "coldq".into(),
            gamma,
            eta,
            constraint_bound: g,
            grad_bound: 1.0,
            diameter: 1.0,
        }
    }

    fn rec(t: usize, x: f64, loss: f64, g: f64, q: f64) -> RoundRecord {
        RoundRecord {
            t,
            x: vec![x],
            loss,
            g: vec![g],
            queue: vec![q],
            gap: 0.0,
        }
    }

    #[test]
    fn lemma1_passes_on_runs_and_fails_on_overflow() {
        let (_, _, trace) = qp_trace(1, 200);
        assert!(check_lemma1(&trace).pass);

        let bad = RunTrace {
            meta: meta(1.0, 0.5, 2.0),
            rounds: vec![rec(1, 0.0, 0.0, 0.0, 1.0), rec(2, 0.0, 0.0, 0.0, 4.5), rec(3, 0.0, 0.0, 0.0, 5.0)],
            experts: None,
        };
        let r = check_lemma1(&bad);
        assert!(!r.pass);
        assert_eq!(r.first_violation.unwrap().round, 2);

        let pinned = RunTrace {
            rounds: vec![rec(1, 0.0, 0.0, -1.0, 1.0), rec(2, 0.0, 0.0, -1.0, 1.0)],
            ..bad
        };
        assert!(check_lemma1(&pinned).pass);
    }

    #[test]
    fn lemma2_passes_and_catches_corruption() {
        let (stream, _, trace) = qp_trace(2, 300);
        let ok = check_lemma2(&trace, stream.as_ref()).unwrap();
        assert!(ok.pass, "{}", ok.summary());
        assert!(!ok.advisory);

        let mut bad = trace.clone();
        for r in &mut bad.rounds {
            for q in &mut r.queue {
                *q *= 1.1;
            }
        }
        assert!(!check_lemma2(&bad, stream.as_ref()).unwrap().pass);
    }

    #[test]
    fn lemma2_fixed_constraints() {
        let stream = GeneratorConfig::QuadraticProg(ThetaParams {
            theta_mode: crate::generators::ThetaMode::Fixed,
            ..ThetaParams::default()
        })
        .build(4, 200)
        .unwrap();
        let sched = ParamSchedule::convex_dynamic(stream.spec(), 0.5, 0.0).unwrap();
        let trace = run(stream.as_ref(), &sched, &InnerSolverConfig::default(), &InitialPoint::Center, 4).unwrap();
        assert!(check_lemma2(&trace, stream.as_ref()).unwrap().pass);
    }

    #[test]
    fn lemma3_on_strongly_convex_run() {
        let stream = GeneratorConfig::QuadraticProg(ThetaParams::default()).build(5, 300).unwrap();
        let sched = ParamSchedule::strongly_convex(stream.spec(), 0.5, 1.0).unwrap();
        let cfg = InnerSolverConfig::default();
        let trace = run(stream.as_ref(), &sched, &cfg, &InitialPoint::Center, 5).unwrap();
        let bench = compute_benchmarks(stream.as_ref(), &cfg, crate::exec::Exec::default()).unwrap();
        let r = check_lemma3(&trace, &bench, &sched, stream.as_ref(), cfg.tolerance + ORACLE_SLACK).unwrap();
        assert!(r.pass, "{}", r.summary());
        assert!(r.max_slack < 1e-3);
    }

    #[test]
    fn lemma3_two_round_toy_by_hand() {
        // X = [0, 1], f_t(x) = x, g(x) = x - 1/2, alpha = 1, gamma = 1, eta = 1/2, G = 1
        let set = BoxSet::cube(1, 0.0, 1.0).unwrap();
        let rf = RoundFunctions::new(
            Loss::linear(vec![1.0]),
            Constraints::Affine {
                a: vec![vec![1.0]],
                b: vec![0.5],
            },
        );
        let spec = ProblemSpec {
            dim: 1,
            n_constraints: 1,
            horizon: 2,
            feasible: set,
            grad_bound: 1.0,
            constraint_bound: 1.0,
            strong_convexity: 0.0,
        };
        let stream = VecStream::new("toy", spec, vec![rf.clone(), rf]).unwrap();
        let sched = ParamSchedule::custom(AlphaRule::Constant { value: 1.0 }, 0.5, 1.0);
        let trace = run(&stream, &sched, &InnerSolverConfig::default(), &InitialPoint::Point(vec![1.0]), 0).unwrap();
        // P_2: min x - 1 + (x - 1)^2 + [x - 1/2]_+ over [0, 1]: slope 1 + 1 > 0 at
        // x = 1/2 from the right, and 1 + 2(x - 1) = 0 at x = 1/2 from the left
        assert!((trace.rounds[1].x[0] - 0.5).abs() < 1e-9);
        let bench = BenchmarkSet {
            x_star: Some(vec![0.0]),
            f_static: vec![0.0, 0.0],
            x_star_t: vec![vec![0.0], vec![0.0]],
            f_star_t: vec![0.0, 0.0],
            path_length: 0.0,
            constraint_variation: 0.0,
            variation_exact: true,
        };
        // lhs = (1 - 0) + 1 * [1/2 - 1/2]_+ = 1
        // rhs = 0 + 0 + 1/4 + 1 * 1 - 1 * 1/4 = 1
        let r = check_lemma3(&trace, &bench, &sched, &stream, 1e-12).unwrap();
        assert!(r.pass, "{}", r.summary());
        assert!(r.max_slack.abs() < 1e-9);
    }

    #[test]
    fn lemma3_rejects_decreasing_alpha() {
        let (stream, _, trace) = qp_trace(6, 20);
        let bad = ParamSchedule::custom(
            AlphaRule::Power {
                scale: 1.0,
                exponent: -0.5,
            },
            trace.meta.eta,
            trace.meta.gamma,
        );
        let bench = compute_benchmarks(stream.as_ref(), &InnerSolverConfig::default(), crate::exec::Exec::default()).unwrap();
        assert!(matches!(
            check_lemma3(&trace, &bench, &bad, stream.as_ref(), 1e-4),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn scaling_fits_known_exponents() {
        let pts: Vec<(usize, Vec<f64>)> = [500usize, 1000, 2000, 4000]
            .iter()
            .map(|&t| (t, vec![3.0 * (t as f64).powf(0.5); 5]))
            .collect();
        let r = check_scaling("sqrt", &pts, ScalingKind::Power, 0.5, 0.1).unwrap();
        assert!(r.pass);
        assert!((r.fit.as_ref().unwrap().slope - 0.5).abs() < 1e-12);
        assert!(!check_scaling("sqrt", &pts, ScalingKind::Power, 0.3, 0.1).unwrap().pass);

        let logs: Vec<(usize, Vec<f64>)> = [500usize, 1000, 2000, 4000, 8000]
            .iter()
            .map(|&t| (t, vec![2.0 * (t as f64).ln() + 1.0]))
            .collect();
        let r = check_scaling("log", &logs, ScalingKind::Log, 2.0, 0.0).unwrap();
        let fit = r.fit.unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.r_squared - 1.0).abs() < 1e-12);

        let zeros: Vec<(usize, Vec<f64>)> = [500usize, 1000, 2000, 4000].iter().map(|&t| (t, vec![0.0; 5])).collect();
        let r = check_scaling("zero", &zeros, ScalingKind::Power, 0.0, 0.15).unwrap();
        assert!(r.pass && r.note.is_some());
        assert!(check_scaling("few", &zeros[..3], ScalingKind::Power, 0.0, 0.15).is_err());
    }

    #[test]
    fn median_of_seeds() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
