//! The COLDQ learner: per-slot problem plus doubly-bounded queue, run round by round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::ProblemStream;
use crate::metrics::{RoundRecord, RunTrace, TraceMeta};
use crate::problem::{BoxSet, Decision, ProblemSpec, Projection, RoundFunctions};
use crate::queue::DoublyBoundedQueue;
use crate::solver::{solve_pt_detailed, InnerSolverConfig};

/// `alpha_t` as a pure function of the round index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaRule {
    /// `scale * t^exponent`
    Power { scale: f64, exponent: f64 },
    /// `mu * t`
    Linear { mu: f64 },
    Constant { value: f64 },
}

impl AlphaRule {
    pub fn at(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self {
            AlphaRule::Power { scale, exponent } => scale * tf.powf(*exponent),
            AlphaRule::Linear { mu } => mu * tf,
            AlphaRule::Constant { value } => *value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    ConvexDynamic,
    StronglyConvex,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub mode: ScheduleMode,
    pub alpha: AlphaRule,
    pub eta: f64,
    pub gamma: f64,
    pub epsilon: Option<f64>,
}

/// `eta = 1/T`, kept strictly below one for the degenerate horizon `T = 1`.
pub(crate) fn inverse_horizon(horizon: usize) -> f64 {
    1.0 / horizon.max(2) as f64
}

fn check_epsilon(epsilon: f64, constraint_bound: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < constraint_bound) {
        return Err(Error::Config(format!(
            "epsilon must satisfy 0 < epsilon < G = {constraint_bound}, got {epsilon}"
        )));
    }
    Ok(())
}

impl ParamSchedule {
    /// `alpha_t = t^{(1 - V_x)/2}`, `eta = 1/T`, `gamma = epsilon T`.
    pub fn convex_dynamic(spec: &ProblemSpec, epsilon: f64, v_x: f64) -> Result<Self> {
        check_epsilon(epsilon, spec.constraint_bound)?;
        if !(0.0..=1.0).contains(&v_x) {
            return Err(Error::Config(format!("V_x must lie in [0, 1], got {v_x}")));
        }
        let s = ParamSchedule {
            mode: ScheduleMode::ConvexDynamic,
            alpha: AlphaRule::Power {
                scale: 1.0,
                exponent: 0.5 * (1.0 - v_x),
            },
            eta: inverse_horizon(spec.horizon),
            gamma: epsilon * spec.horizon as f64,
            epsilon: Some(epsilon),
        };
        s.validate(spec)?;
        Ok(s)
    }

    /// `alpha_t = mu t`, `eta = 1/T`, `gamma = epsilon T`.
    pub fn strongly_convex(spec: &ProblemSpec, epsilon: f64, mu: f64) -> Result<Self> {
        check_epsilon(epsilon, spec.constraint_bound)?;
        if !(mu > 0.0) {
            return Err(Error::Config(format!(
                "strongly convex schedule needs mu > 0, got {mu}"
            )));
        }
        let s = ParamSchedule {
            mode: ScheduleMode::StronglyConvex,
            alpha: AlphaRule::Linear { mu },
            eta: inverse_horizon(spec.horizon),
            gamma: epsilon * spec.horizon as f64,
            epsilon: Some(epsilon),
        };
        s.validate(spec)?;
        Ok(s)
    }

    pub fn custom(alpha: AlphaRule, eta: f64, gamma: f64) -> Self {
        ParamSchedule {
            mode: ScheduleMode::Custom,
            alpha,
            eta,
            gamma,
            epsilon: None,
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha.at(t)
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta must satisfy 0 < eta < 1, got {}", self.eta)));
        }
        let ceiling = spec.constraint_bound / self.eta;
        if !(self.gamma > 0.0 && self.gamma < ceiling) {
            return Err(Error::Config(format!(
                "gamma must satisfy 0 < gamma < G/eta = {ceiling}, got {}",
                self.gamma
            )));
        }
        if !(self.alpha(1) > 0.0 && self.alpha(1).is_finite()) {
            return Err(Error::Config(format!("alpha_1 must be positive, got {}", self.alpha(1))));
        }
        Ok(())
    }

    /// Checks `alpha_{t+1} >= alpha_t > 0` for every `t` in `1..horizon`.
    pub fn check_monotone(&self, horizon: usize) -> Result<()> {
        let mut prev = self.alpha(1);
        if !(prev > 0.0) {
            return Err(Error::Contract(format!("alpha_1 = {prev} is not positive")));
        }
        for t in 2..=horizon.max(1) {
            let a = self.alpha(t);
            if !(a >= prev) {
                return Err(Error::Contract(format!(
                    "alpha schedule decreases at t = {t}: alpha_{} = {prev}, alpha_{t} = {a}",
                    t - 1
                )));
            }
            prev = a;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum InitialPoint {
    #[default]
    Center,
    Point(Vec<f64>),
}


impl InitialPoint {
    pub fn resolve(&self, set: &BoxSet) -> Result<Decision> {
        match self {
            InitialPoint::Center => Ok(set.center()),
            InitialPoint::Point(v) => {
                if v.len() != set.dim() {
                    return Err(Error::dim("initial point", set.dim(), v.len()));
                }
                if !set.contains(v) {
                    return Err(Error::Contract(format!(
                        "initial point {v:?} lies outside the feasible box"
                    )));
                }
                Decision::new(v.clone())
            }
        }
    }
}

/// Learner state between rounds. `round` counts rounds already played.
#[derive(Clone, Debug)]
pub struct ColdqState {
    pub round: usize,
    pub x: Decision,
    pub queue: DoublyBoundedQueue,
    pub grad_cache: Vec<f64>,
    pub g_prev: Option<RoundFunctions>,
}

pub fn coldq_init(spec: &ProblemSpec, sched: &ParamSchedule, x1: &InitialPoint) -> Result<ColdqState> {
    spec.validate()?;
    sched.validate(spec)?;
    let x = x1.resolve(&spec.feasible)?;
    let queue = DoublyBoundedQueue::new(spec.n_constraints, sched.gamma, sched.eta, spec.constraint_bound)?;
    Ok(ColdqState {
        round: 0,
        x,
        queue,
        grad_cache: vec![0.0; spec.dim],
        g_prev: None,
    })
}

impl ColdqState {
    /// Decision for the upcoming round, computed from information through the
    /// previous round only. Returns the decision and the certified solver gap.
    pub fn decide(
        &self,
        sched: &ParamSchedule,
        set: &BoxSet,
        cfg: &InnerSolverConfig,
    ) -> Result<(Decision, f64)> {
        match &self.g_prev {
            None => Ok((self.x.clone(), 0.0)),
            Some(g_prev) => {
                let sol = solve_pt_detailed(
                    &self.x,
                    &self.grad_cache,
                    sched.alpha(self.round),
                    &self.queue,
                    g_prev,
                    set,
                    cfg,
                )?;
                Ok((sol.x, sol.gap))
            }
        }
    }

    /// Observe round `t`'s functions at the decision `x_t` and update the
    /// queue (the first round leaves it at the floor).
    pub fn observe(&self, x: Decision, revealed: &RoundFunctions, gap: f64) -> Result<(ColdqState, RoundRecord)> {
        let t = self.round + 1;
        if x.len() != self.x.len() {
            return Err(Error::dim("observed decision", self.x.len(), x.len()));
        }
        if revealed.constraints.count() != self.queue.len() {
            return Err(Error::dim("revealed constraints", self.queue.len(), revealed.constraints.count()));
        }
        let g = revealed.constraint_values(&x);
        let queue = if t == 1 {
            self.queue.clone()
        } else {
            self.queue.update(&revealed.violations(&x))?
        };
        let record = RoundRecord {
            t,
            loss: revealed.loss_value(&x),
            g,
            queue: queue.values().to_vec(),
            x: x.to_vec(),
            gap,
        };
        let next = ColdqState {
            round: t,
            grad_cache: revealed.loss_gradient(&x),
            x,
            queue,
            g_prev: Some(revealed.clone()),
        };
        Ok((next, record))
    }
}

pub fn coldq_step(
    state: &ColdqState,
    revealed: &RoundFunctions,
    sched: &ParamSchedule,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
) -> Result<(ColdqState, RoundRecord)> {
    let (x, gap) = state.decide(sched, set, cfg)?;
    state.observe(x, revealed, gap)
}

/// Runs COLDQ over the whole stream.
pub fn run(
    stream: &dyn ProblemStream,
    sched: &ParamSchedule,
    solver_cfg: &InnerSolverConfig,
    x1: &InitialPoint,
    seed: u64,
) -> Result<RunTrace> {
    let spec = stream.spec();
    let cfg = InnerSolverConfig {
        seed,
        ..solver_cfg.clone()
    };
    sched.check_monotone(spec.horizon)?;
    let mut state = coldq_init(spec, sched, x1)?;
    let mut rounds = Vec::with_capacity(spec.horizon);
    for t in 1..=spec.horizon {
        let (x, gap) = state.decide(sched, &spec.feasible, &cfg)?;
        let revealed = stream.round(t)?;
        let (next, rec) = state.observe(x, &revealed, gap)?;
        rounds.push(rec);
        state = next;
    }
    Ok(RunTrace {
        meta: TraceMeta::new(stream, "coldq", sched.gamma, sched.eta),
        rounds,
        experts: None,
    })
}
