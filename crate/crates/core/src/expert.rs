//! COLDQ-Expert: a bank of COLDQ learners with geometrically spaced step
//! schedules, combined by exponentially weighted averaging on linearized losses.

use crate::coldq::{inverse_horizon, AlphaRule, ColdqState, InitialPoint, ParamSchedule, ScheduleMode};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::generators::ProblemStream;
use crate::metrics::{ExpertRound, ExpertTrace, RoundRecord, RunTrace, TraceMeta};
use crate::problem::{dot, BoxSet, Decision, ProblemSpec, RoundFunctions};
use crate::queue::DoublyBoundedQueue;
use crate::solver::InnerSolverConfig;

/// `floor(log2(1 + T) / 2) + 1`, i.e. one more than the largest `k` with `4^k <= 1 + T`.
pub fn expert_count(horizon: usize) -> usize {
    let mut k = 0usize;
    let mut pow = 4u128;
    while pow <= horizon as u128 + 1 {
        k += 1;
        pow *= 4;
    }
    k + 1
}

/// `w_1[m] = (M + 1) / (m (m + 1) M)` for `m = 1..=M`.
pub fn initial_weights(m: usize) -> Vec<f64> {
    let mf = m as f64;
    (1..=m)
        .map(|i| {
            let i = i as f64;
            (mf + 1.0) / (i * (i + 1.0) * mf)
        })
        .collect()
}

/// Parameters shared by the bank: `kappa = T^{-1/2}`, `eta = T^{-3/2}`,
/// `gamma = epsilon T^{3/2}`, expert `m` using `alpha_t = t^{1/2} / 2^{m-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertSchedule {
    pub kappa: f64,
    pub schedules: Vec<ParamSchedule>,
    pub initial_weights: Vec<f64>,
}

impl ExpertSchedule {
    pub fn tuned(spec: &ProblemSpec, epsilon: f64, kappa_override: Option<f64>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < spec.constraint_bound) {
            return Err(Error::Config(format!(
                "epsilon must satisfy 0 < epsilon < G = {}, got {epsilon}",
                spec.constraint_bound
            )));
        }
        let horizon = spec.horizon;
        let m = expert_count(horizon);
        let eta = inverse_horizon(horizon).powf(1.5);
        let gamma = epsilon * (horizon as f64).powf(1.5);
        let kappa = kappa_override.unwrap_or(1.0 / (horizon as f64).sqrt());
        let schedules = (0..m)
            .map(|i| ParamSchedule {
                mode: ScheduleMode::ConvexDynamic,
                alpha: AlphaRule::Power {
                    scale: 0.5f64.powi(i as i32),
                    exponent: 0.5,
                },
                eta,
                gamma,
                epsilon: Some(epsilon),
            })
            .collect();
        let s = ExpertSchedule {
            kappa,
            schedules,
            initial_weights: initial_weights(m),
        };
        s.validate(spec)?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if self.schedules.is_empty() {
            return Err(Error::Config("expert bank needs at least one expert".into()));
        }
        if self.initial_weights.len() != self.schedules.len() {
            return Err(Error::dim("initial weights", self.schedules.len(), self.initial_weights.len()));
        }
        if self.initial_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("initial weights must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        for s in &self.schedules {
            s.validate(spec)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ExpertBank {
    pub experts: Vec<ColdqState>,
    pub schedule: ExpertSchedule,
    /// Normalized log-weights; `weights()` exponentiates them.
    log_weights: Vec<f64>,
}

fn normalize_log(lw: &mut [f64]) {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + lw.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in lw.iter_mut() {
        *v -= lse;
    }
}

pub fn expert_init(
    spec: &ProblemSpec,
    epsilon: f64,
    kappa_override: Option<f64>,
    x1: &InitialPoint,
) -> Result<ExpertBank> {
    ExpertBank::new(spec, ExpertSchedule::tuned(spec, epsilon, kappa_override)?, x1)
}

impl ExpertBank {
    pub fn new(spec: &ProblemSpec, schedule: ExpertSchedule, x1: &InitialPoint) -> Result<Self> {
        spec.validate()?;
        schedule.validate(spec)?;
        let x = x1.resolve(&spec.feasible)?;
        let experts = schedule
            .schedules
            .iter()
            .map(|s| {
                Ok(ColdqState {
                    round: 0,
                    x: x.clone(),
                    queue: DoublyBoundedQueue::new(spec.n_constraints, s.gamma, s.eta, spec.constraint_bound)?,
                    grad_cache: vec![0.0; spec.dim],
                    g_prev: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut log_weights: Vec<f64> = schedule.initial_weights.iter().map(|w| w.ln()).collect();
        normalize_log(&mut log_weights);
        Ok(ExpertBank {
            experts,
            schedule,
            log_weights,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        let w: Vec<f64> = self.log_weights.iter().map(|v| v.exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    pub fn kappa(&self) -> f64 {
        self.schedule.kappa
    }
}

/// `sum_m w[m] x[m]`, accumulated from the first term so a single expert is reproduced exactly.
/// Convex combination, clamped per coordinate to the range of its inputs so
/// rounding cannot push it outside their hull.
fn weighted_sum(weights: &[f64], xs: &[&[f64]]) -> Vec<f64> {
    let mut acc: Vec<f64> = xs[0].iter().map(|v| weights[0] * v).collect();
    for (w, x) in weights.iter().zip(xs).skip(1) {
        for (a, v) in acc.iter_mut().zip(x.iter()) {
            *a += w * v;
        }
    }
    for (k, a) in acc.iter_mut().enumerate() {
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
        *a = a.clamp(lo, hi);
    }
    acc
}

pub fn expert_step(
    bank: &ExpertBank,
    revealed: &RoundFunctions,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
    exec: Exec,
) -> Result<(ExpertBank, RoundRecord, ExpertRound)> {
    let m = bank.experts.len();
    let decisions = exec.map_range(0..m, |i| {
        bank.experts[i].decide(&bank.schedule.schedules[i], set, cfg)
    });
    let decisions: Vec<(Decision, f64)> = decisions.into_iter().collect::<Result<_>>()?;
    let weights = bank.weights();
    let xs: Vec<&[f64]> = decisions.iter().map(|(x, _)| &x[..]).collect();
    let mut x = weighted_sum(&weights, &xs);
    set.clamp_in_place(&mut x);

    let grad = revealed.loss_gradient(&x);
    let surrogate: Vec<f64> = xs
        .iter()
        .map(|xm| {
            let diff: Vec<f64> = xm.iter().zip(&x).map(|(a, b)| a - b).collect();
            dot(&grad, &diff)
        })
        .collect();

    let mut experts = Vec::with_capacity(m);
    let mut violations = Vec::with_capacity(m);
    let mut gaps = Vec::with_capacity(m);
    for (state, (xm, gap)) in bank.experts.iter().zip(decisions.iter()) {
        let (next, rec) = state.observe(xm.clone(), revealed, *gap)?;
        violations.push(rec.hard_violation());
        gaps.push(*gap);
        experts.push(next);
    }
    let queues: Vec<&[f64]> = experts.iter().map(|e| e.queue.values()).collect();
    let queue = weighted_sum(&weights, &queues);
    let gap = weights[1..]
        .iter()
        .zip(&gaps[1..])
        .fold(weights[0] * gaps[0], |acc, (w, g)| acc + w * g);
    let record = RoundRecord {
        t: bank.experts[0].round + 1,
        loss: revealed.loss_value(&x),
        g: revealed.constraint_values(&x),
        queue,
        x: x.clone(),
        gap,
    };

    let kappa = bank.kappa();
    let mut log_weights: Vec<f64> = bank
        .log_weights
        .iter()
        .zip(&surrogate)
        .map(|(lw, l)| lw - kappa * l)
        .collect();
    normalize_log(&mut log_weights);
    let round = ExpertRound {
        weights,
        x: xs.iter().map(|v| v.to_vec()).collect(),
        violations,
        surrogate,
        gaps,
    };
    Ok((
        ExpertBank {
            experts,
            schedule: bank.schedule.clone(),
            log_weights,
        },
        record,
        round,
    ))
}

pub fn run_expert(
    stream: &dyn ProblemStream,
    schedule: ExpertSchedule,
    solver_cfg: &InnerSolverConfig,
    x1: &InitialPoint,
    seed: u64,
    exec: Exec,
) -> Result<RunTrace> {
    let spec = stream.spec();
    let cfg = InnerSolverConfig {
        seed,
        ..solver_cfg.clone()
    };
    for s in &schedule.schedules {
        s.check_monotone(spec.horizon)?;
    }
    let mut bank = ExpertBank::new(spec, schedule, x1)?;
    let (gamma, eta) = (bank.schedule.schedules[0].gamma, bank.schedule.schedules[0].eta);
    let mut rounds = Vec::with_capacity(spec.horizon);
    let mut expert_rounds = Vec::with_capacity(spec.horizon);
    for t in 1..=spec.horizon {
        let revealed = stream.round(t)?;
        let (next, rec, er) = expert_step(&bank, &revealed, &spec.feasible, &cfg, exec)?;
        rounds.push(rec);
        expert_rounds.push(er);
        bank = next;
    }
    let alpha_scales = bank
        .schedule
        .schedules
        .iter()
        .map(|s| s.alpha(1))
        .collect();
    Ok(RunTrace {
        meta: TraceMeta::new(stream, "coldq_expert", gamma, eta),
        rounds,
        experts: Some(ExpertTrace {
            kappa: bank.kappa(),
            initial_weights: bank.schedule.initial_weights.clone(),
            alpha_scales,
            rounds: expert_rounds,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coldq;
    use crate::generators::{gen_quadratic_prog, ThetaParams};
    use crate::problem::Projection;

    #[test]
    fn expert_count_examples() {
        assert_eq!(expert_count(3), 2);
        assert_eq!(expert_count(1023), 6);
        assert_eq!(expert_count(1022), 5);
        assert_eq!(expert_count(1), 1);
        let w = initial_weights(2);
        assert_eq!(w, vec![0.75, 0.25]);
    }

    #[test]
    fn initial_weights_sum_to_one() {
        for m in 1..=40 {
            let s: f64 = initial_weights(m).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "M = {m}: {s}");
        }
    }

    #[test]
    fn tuned_schedule_values() {
        let s = gen_quadratic_prog(&ThetaParams::default(), 0, 100).unwrap();
        let sch = ExpertSchedule::tuned(s.spec(), 0.5, None).unwrap();
        assert_eq!(sch.len(), expert_count(100));
        assert_eq!(sch.kappa, 0.1);
        assert!((sch.schedules[0].eta - 1e-3).abs() < 1e-18);
        assert!((sch.schedules[0].gamma - 500.0).abs() < 1e-9);
        assert_eq!(sch.schedules[2].alpha(16), 1.0);
        assert!(ExpertSchedule::tuned(s.spec(), 5.0, None).is_err());
    }

    #[test]
    fn single_expert_matches_plain_run() {
        let s = gen_quadratic_prog(&ThetaParams::default(), 2, 60).unwrap();
        let sched = ParamSchedule::convex_dynamic(s.spec(), 0.5, 0.0).unwrap();
        let bank = ExpertSchedule {
            kappa: 0.3,
            schedules: vec![sched.clone()],
            initial_weights: vec![1.0],
        };
        let cfg = InnerSolverConfig::default();
        let a = coldq::run(&s, &sched, &cfg, &InitialPoint::Center, 0).unwrap();
        let b = run_expert(&s, bank, &cfg, &InitialPoint::Center, 0, Exec::Sequential).unwrap();
        for (ra, rb) in a.rounds.iter().zip(&b.rounds) {
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.queue, rb.queue);
            assert_eq!(ra.loss.to_bits(), rb.loss.to_bits());
        }
    }

    #[test]
    fn identical_experts_keep_equal_weights() {
        let s = gen_quadratic_prog(&ThetaParams::default(), 5, 40).unwrap();
        let sched = ParamSchedule::convex_dynamic(s.spec(), 0.5, 0.0).unwrap();
        let bank = ExpertSchedule {
            kappa: 0.5,
            schedules: vec![sched.clone(); 3],
            initial_weights: vec![1.0 / 3.0; 3],
        };
        let cfg = InnerSolverConfig::default();
        let a = coldq::run(&s, &sched, &cfg, &InitialPoint::Center, 0).unwrap();
        let b = run_expert(&s, bank, &cfg, &InitialPoint::Center, 0, Exec::Sequential).unwrap();
        for (ra, er) in a.rounds.iter().zip(&b.experts.as_ref().unwrap().rounds) {
            for w in &er.weights {
                assert!((w - 1.0 / 3.0).abs() < 1e-15);
            }
            for xm in &er.x {
                assert_eq!(xm, &ra.x);
            }
        }
        for (ra, rb) in a.rounds.iter().zip(&b.rounds) {
            for (u, v) in ra.x.iter().zip(&rb.x) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_stay_on_simplex_and_aggregate_in_box() {
        let s = gen_quadratic_prog(&ThetaParams::default(), 1, 200).unwrap();
        let sch = ExpertSchedule::tuned(s.spec(), 0.5, None).unwrap();
        let tr = run_expert(&s, sch, &InnerSolverConfig::default(), &InitialPoint::Center, 0, Exec::default()).unwrap();
        let ex = tr.experts.unwrap();
        for (r, er) in tr.rounds.iter().zip(&ex.rounds) {
            let sum: f64 = er.weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(er.weights.iter().all(|w| *w > 0.0));
            assert!(s.spec().feasible.contains(&r.x));
            let weighted: f64 = er.weights.iter().zip(&er.violations).map(|(w, v)| w * v).sum();
            assert!(r.hard_violation() <= weighted + 1e-10);
        }
    }
}
