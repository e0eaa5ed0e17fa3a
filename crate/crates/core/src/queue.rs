//! Doubly-bounded virtual queue and its Lyapunov drift certificate.
//!
//! Each constraint `n` carries a queue `Q^n` updated as
//! `Q_t = max((1 - eta) Q_{t-1} + [g_t(x_t)]_+, gamma)`. With violations in
//! `[0, G]` the queue never leaves `[gamma, G / eta]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{hinge, ProblemSpec, RoundFunctions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublyBoundedQueue {
    values: Vec<f64>,
    floor: f64,
    eta: f64,
    ceiling: f64,
}

impl DoublyBoundedQueue {
    /// All `n` queues start at the floor `gamma`.
    pub fn new(n: usize, gamma: f64, eta: f64, constraint_bound: f64) -> Result<Self> {
        Self::from_values(vec![gamma; n], gamma, eta, constraint_bound)
    }

    /// Rebuild a queue state from recorded values (trace replay). Values are not
    /// range-checked here; that is the job of the bound checks.
    pub fn from_values(
        values: Vec<f64>,
        gamma: f64,
        eta: f64,
        constraint_bound: f64,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("queue needs at least one constraint".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config(format!("eta must satisfy 0 < eta < 1, got {eta}")));
        }
        if !(constraint_bound > 0.0) {
            return Err(Error::Config(format!(
                "constraint bound G must be positive, got {constraint_bound}"
            )));
        }
        let ceiling = constraint_bound / eta;
        if !(gamma > 0.0 && gamma < ceiling) {
            return Err(Error::Config(format!(
                "gamma must satisfy 0 < gamma < G/eta = {ceiling}, got {gamma}"
            )));
        }
        Ok(DoublyBoundedQueue {
            values,
            floor: gamma,
            eta,
            ceiling,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `G / eta`.
    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    /// One queue update with hinged violations `[g_t^n(x_t)]_+`.
    pub fn update(&self, violations: &[f64]) -> Result<Self> {
        if violations.len() != self.values.len() {
            return Err(Error::dim("queue update", self.values.len(), violations.len()));
        }
        if let Some((n, v)) = violations
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Contract(format!(
                "queue update needs hinged violations, got {v} for constraint {n}"
            )));
        }
        let values = self
            .values
            .iter()
            .zip(violations)
            .map(|(q, v)| ((1.0 - self.eta) * q + v).max(self.floor))
            .collect();
        Ok(DoublyBoundedQueue {
            values,
            ..self.clone()
        })
    }

    /// `0.5 * sum_n (Q^n - gamma)^2`.
    pub fn potential(&self) -> f64 {
        0.5 * self
            .values
            .iter()
            .map(|q| (q - self.floor) * (q - self.floor))
            .sum::<f64>()
    }
}

pub fn init_queue(spec: &ProblemSpec, gamma: f64, eta: f64) -> Result<DoublyBoundedQueue> {
    DoublyBoundedQueue::new(spec.n_constraints, gamma, eta, spec.constraint_bound)
}

pub fn update_queue(q: &DoublyBoundedQueue, violations: &[f64]) -> Result<DoublyBoundedQueue> {
    q.update(violations)
}

/// One-round change of the floor-shifted quadratic potential.
pub fn drift(prev: &DoublyBoundedQueue, next: &DoublyBoundedQueue) -> Result<f64> {
    if prev.len() != next.len() {
        return Err(Error::dim("drift", prev.len(), next.len()));
    }
    if prev.floor != next.floor {
        return Err(Error::Contract("drift between queues with different floors".into()));
    }
    Ok(next.potential() - prev.potential())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub drift_value: f64,
    pub rhs_bound: f64,
}

impl DriftRecord {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.drift_value <= self.rhs_bound + tolerance
    }
}

/// Upper bound on the drift at round `t`:
/// `sum_n Q_{t-1}[g_{t-1}(x_t)]_+ - gamma sum_n [g_t(x_t)]_+ + (G sqrt(N) / eta) V + 2 N G^2`
/// where `V = max_x ||g_t(x) - g_{t-1}(x)||` is supplied by the caller.
pub fn drift_bound_rhs(
    q_prev: &DoublyBoundedQueue,
    x_t: &[f64],
    g_prev: &RoundFunctions,
    g_curr: &RoundFunctions,
    spec: &ProblemSpec,
    variation_term: f64,
) -> Result<f64> {
    let n = q_prev.len();
    if g_prev.constraints.count() != n || g_curr.constraints.count() != n {
        return Err(Error::dim(
            "drift bound",
            n,
            g_prev.constraints.count().max(g_curr.constraints.count()),
        ));
    }
    let g = spec.constraint_bound;
    let weighted_prev: f64 = q_prev
        .values()
        .iter()
        .zip(g_prev.constraint_values(x_t))
        .map(|(q, v)| q * hinge(v))
        .sum();
    let current: f64 = g_curr.constraint_values(x_t).into_iter().map(hinge).sum();
    let nf = n as f64;
    Ok(weighted_prev - q_prev.floor() * current
        + g * nf.sqrt() / q_prev.eta() * variation_term
        + 2.0 * nf * g * g)
}
