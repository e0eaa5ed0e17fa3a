//! Inner solvers: the per-slot problem `P_t` and the constrained minimizer
//! behind the benchmark comparators.
//!
//! Both reduce to a *hinge-prox* subproblem
//! `min_{x in X} alpha ||x - z||^2 + sum_n w_n [g_n(x)]_+`, solved through its
//! dual `max_{0 <= lambda <= w} min_x alpha ||x - z||^2 + lambda' g(x)`. The
//! inner minimization has a closed form for every constraint family in
//! [`Constraints`], and the primal-dual pair yields a certified objective gap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{dist_sq, dot, hinge, BoxSet, Constraints, Decision, Loss, Projection, RoundFunctions};
use crate::queue::DoublyBoundedQueue;
use crate::rng::{Role, Substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSolverConfig {
    pub max_iters: usize,
    /// Stopping threshold on the certified gap, scaled by `max(1, |objective|)`.
    pub tolerance: f64,
    /// Extra solves from random dual starts; the best primal point wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        InnerSolverConfig {
            max_iters: 5000,
            tolerance: 1e-12,
            restarts: 0,
            seed: 0,
        }
    }
}

impl InnerSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("solver max_iters must be >= 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    fn gap_ok(&self, gap: f64, objective: f64) -> bool {
        gap <= self.tolerance * objective.abs().max(1.0)
    }
}

/// Feasibility threshold on `sum_n [g_n(x)]_+` for constrained solutions.
pub const FEASIBILITY_SLACK: f64 = 1e-6;
const PENALTY_HINGE_TARGET: f64 = 1e-8;
const MAX_VERTEX_COMBINATIONS: u64 = 200_000;

#[derive(Clone, Debug)]
pub(crate) struct ProxOutcome {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
}

struct Prox<'a> {
    z: &'a [f64],
    alpha: f64,
    weights: &'a [f64],
    g: &'a Constraints,
    set: &'a BoxSet,
}

struct DualPoint {
    lambda: Vec<f64>,
    value: f64,
    x: Vec<f64>,
    gv: Vec<f64>,
}

impl Prox<'_> {
    fn primal(&self, x: &[f64]) -> f64 {
        self.alpha * dist_sq(x, self.z)
            + self
                .weights
                .iter()
                .enumerate()
                .map(|(n, w)| w * hinge(self.g.value(n, x)))
                .sum::<f64>()
    }

    fn dual(&self, lambda: Vec<f64>) -> DualPoint {
        let x = self.g.lagrangian_argmin(self.z, self.alpha, &lambda, self.set);
        let gv = self.g.values(&x);
        let value = self.alpha * dist_sq(&x, self.z) + dot(&lambda, &gv);
        DualPoint { lambda, value, x, gv }
    }

    fn clip(&self, lambda: &mut [f64]) {
        for (l, w) in lambda.iter_mut().zip(self.weights) {
            *l = l.clamp(0.0, *w);
        }
    }

    /// Newton step on the dual restricted to the current active pattern
    /// (affine constraints only): solve for the multipliers that put every
    /// non-saturated constraint exactly on its boundary.
    fn polish(&self, at: &DualPoint) -> Option<Vec<f64>> {
        let Constraints::Affine { a, b } = self.g else {
            return None;
        };
        let p = self.z.len();
        let inv = 0.5 / self.alpha;
        let mut u = self.z.to_vec();
        for (row, l) in a.iter().zip(&at.lambda) {
            for (uj, aj) in u.iter_mut().zip(row) {
                *uj -= inv * l * aj;
            }
        }
        let lower = self.set.lower();
        let upper = self.set.upper();
        let free_x: Vec<bool> = (0..p).map(|j| lower[j] < u[j] && u[j] < upper[j]).collect();
        let free_l: Vec<usize> = (0..a.len())
            .filter(|&n| {
                let (l, w, g) = (at.lambda[n], self.weights[n], at.gv[n]);
                (l > 0.0 && l < w) || (l <= 0.0 && g > 0.0) || (l >= w && g < 0.0)
            })
            .collect();
        if free_l.is_empty() {
            return None;
        }
        let k = free_l.len();
        let mut base = vec![0.0; p];
        for j in 0..p {
            base[j] = if free_x[j] {
                let mut v = self.z[j];
                for (n, row) in a.iter().enumerate() {
                    if !free_l.contains(&n) {
                        v -= inv * at.lambda[n] * row[j];
                    }
                }
                v
            } else {
                u[j].clamp(lower[j], upper[j])
            };
        }
        let mut m = vec![vec![0.0; k]; k];
        let mut r = vec![0.0; k];
        for (i, &n) in free_l.iter().enumerate() {
            for (c, &mm) in free_l.iter().enumerate() {
                m[i][c] = (0..p)
                    .filter(|&j| free_x[j])
                    .map(|j| a[n][j] * a[mm][j])
                    .sum::<f64>()
                    * inv;
            }
            r[i] = dot(&a[n], &base) - b[n];
        }
        let sol = solve_linear(m, r)?;
        let mut lambda = at.lambda.clone();
        for (i, &n) in free_l.iter().enumerate() {
            lambda[n] = sol[i];
        }
        self.clip(&mut lambda);
        Some(lambda)
    }

    fn solve(&self, cfg: &InnerSolverConfig, start: Option<&[f64]>) -> Result<ProxOutcome> {
        let n = self.weights.len();
        if n == 1 {
            return Ok(self.solve_scalar(cfg));
        }
        let init = match start {
            Some(l) => {
                let mut l = l.to_vec();
                self.clip(&mut l);
                l
            }
            None => vec![0.0; n],
        };
        let mut cur = self.dual(init);
        let mut best_x = cur.x.clone();
        let mut best_p = self.primal(&cur.x);
        let mut best_d = cur.value;
        let mut best_l = cur.lambda.clone();
        let record = |pt: &DualPoint, best_x: &mut Vec<f64>, best_p: &mut f64| {
            let pv = self.primal(&pt.x);
            if pv < *best_p {
                *best_p = pv;
                *best_x = pt.x.clone();
            }
        };
        if !best_p.is_finite() || !best_d.is_finite() {
            return Err(Error::Solver {
                message: "non-finite objective in hinge-prox".into(),
                iterate: cur.x,
            });
        }
        let affine = self.g.is_affine();
        let try_polish = |from: &DualPoint| -> Option<DualPoint> {
            let mut pt: Option<DualPoint> = None;
            let mut base_value = from.value;
            for _ in 0..8 {
                let src = pt.as_ref().unwrap_or(from);
                let Some(lambda) = self.polish(src) else {
                    break;
                };
                let cand = self.dual(lambda);
                if cand.value > base_value {
                    base_value = cand.value;
                    pt = Some(cand);
                } else {
                    break;
                }
            }
            pt
        };
        if affine {
            if let Some(pt) = try_polish(&cur) {
                record(&pt, &mut best_x, &mut best_p);
                cur = pt;
                best_d = best_d.max(cur.value);
                best_l = cur.lambda.clone();
            }
        }
        if cfg.gap_ok(best_p - best_d, best_p) {
            return Ok(ProxOutcome {
                x: best_x,
                lambda: best_l,
                primal: best_p,
                dual: best_d,
            });
        }

        let l0 = match self.g {
            Constraints::Affine { a, .. } => {
                a.iter().map(|r| dot(r, r)).sum::<f64>() / (2.0 * self.alpha)
            }
            _ => 1.0 / (2.0 * self.alpha),
        }
        .max(1e-12);
        let mut lip = l0;
        let mut t = 1.0f64;
        let mut y = cur.lambda.clone();
        for k in 0..cfg.max_iters {
            let yp = self.dual(y.clone());
            let cand = loop {
                let mut l: Vec<f64> = yp
                    .lambda
                    .iter()
                    .zip(&yp.gv)
                    .map(|(v, gr)| v + gr / lip)
                    .collect();
                self.clip(&mut l);
                let c = self.dual(l);
                let diff: Vec<f64> = c.lambda.iter().zip(&yp.lambda).map(|(a, b)| a - b).collect();
                let model = yp.value + dot(&yp.gv, &diff) - 0.5 * lip * dot(&diff, &diff);
                if c.value >= model - 1e-14 * (1.0 + yp.value.abs()) || lip > 1e300 {
                    break c;
                }
                lip *= 2.0;
            };
            if !cand.value.is_finite() {
                return Err(Error::Solver {
                    message: "non-finite dual value in hinge-prox".into(),
                    iterate: cand.x,
                });
            }
            record(&cand, &mut best_x, &mut best_p);
            if cand.value > best_d {
                best_d = cand.value;
                best_l = cand.lambda.clone();
            }
            if cand.value < cur.value {
                t = 1.0;
                y = cur.lambda.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                y = cand
                    .lambda
                    .iter()
                    .zip(&cur.lambda)
                    .map(|(a, b)| a + beta * (a - b))
                    .collect();
                self.clip(&mut y);
                cur = cand;
                t = t_next;
            }
            if affine && k % 10 == 9 {
                let from = self.dual(best_l.clone());
                if let Some(pt) = try_polish(&from) {
                    record(&pt, &mut best_x, &mut best_p);
                    if pt.value > best_d {
                        best_d = pt.value;
                        best_l = pt.lambda.clone();
                    }
                    if pt.value > cur.value {
                        y = pt.lambda.clone();
                        cur = pt;
                        t = 1.0;
                    }
                }
            }
            if cfg.gap_ok(best_p - best_d, best_p) {
                break;
            }
            lip = (lip * 0.9).max(l0 * 1e-6);
        }
        Ok(ProxOutcome {
            x: best_x,
            lambda: best_l,
            primal: best_p,
            dual: best_d,
        })
    }

    /// One constraint: the dual derivative `g(x(lambda))` is nonincreasing, so
    /// bisection on its sign converges to machine precision.
    fn solve_scalar(&self, cfg: &InnerSolverConfig) -> ProxOutcome {
        let w = self.weights[0];
        let at0 = self.dual(vec![0.0]);
        if at0.gv[0] <= 0.0 {
            let primal = self.primal(&at0.x);
            return ProxOutcome {
                x: at0.x,
                lambda: at0.lambda,
                primal,
                dual: at0.value,
            };
        }
        let atw = self.dual(vec![w]);
        if atw.gv[0] >= 0.0 {
            let primal = self.primal(&atw.x);
            return ProxOutcome {
                x: atw.x,
                lambda: atw.lambda,
                primal,
                dual: atw.value,
            };
        }
        let (mut lo, mut hi) = (at0, atw);
        for _ in 0..cfg.max_iters.max(64).min(400) {
            let mid = 0.5 * (lo.lambda[0] + hi.lambda[0]);
            if mid <= lo.lambda[0] || mid >= hi.lambda[0] {
                break;
            }
            let m = self.dual(vec![mid]);
            if m.gv[0] > 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let (pl, ph) = (self.primal(&lo.x), self.primal(&hi.x));
        let dual = lo.value.max(hi.value);
        if pl <= ph {
            ProxOutcome {
                x: lo.x,
                lambda: lo.lambda,
                primal: pl,
                dual,
            }
        } else {
            ProxOutcome {
                x: hi.x,
                lambda: hi.lambda,
                primal: ph,
                dual,
            }
        }
    }
}

/// `argmin_{x in set} alpha ||x - z||^2 + sum_n weights_n [g_n(x)]_+` with a certified gap.
pub(crate) fn hinge_prox(
    z: &[f64],
    alpha: f64,
    weights: &[f64],
    g: &Constraints,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
    start: Option<&[f64]>,
) -> Result<ProxOutcome> {
    if weights.len() != g.count() {
        return Err(Error::dim("hinge-prox weights", g.count(), weights.len()));
    }
    Prox {
        z,
        alpha,
        weights,
        g,
        set,
    }
    .solve(cfg, start)
}

/// Gaussian elimination with partial pivoting; `None` when numerically singular.
pub(crate) fn solve_linear(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let k = r.len();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for i in (col + 1)..k {
            let f = m[i][col] / m[col][col];
            if f != 0.0 {
                for c in col..k {
                    m[i][c] -= f * m[col][c];
                }
                r[i] -= f * r[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = ((i + 1)..k).map(|c| m[i][c] * x[c]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `project(set, x_prev - grad / (2 alpha))`.
pub fn argmin_gradient_step(
    x_prev: &[f64],
    grad: &[f64],
    alpha: f64,
    set: &BoxSet,
) -> Result<Decision> {
    if grad.len() != x_prev.len() {
        return Err(Error::dim("gradient step", x_prev.len(), grad.len()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Contract(format!("alpha must be positive, got {alpha}")));
    }
    let z: Vec<f64> = x_prev
        .iter()
        .zip(grad)
        .map(|(x, g)| x - g / (2.0 * alpha))
        .collect();
    set.project(&z)
}

/// Objective of `P_t`:
/// `<grad, x - x_prev> + alpha ||x - x_prev||^2 + sum_n Q^n [g_n(x)]_+`.
pub fn pt_objective(
    x: &[f64],
    x_prev: &[f64],
    grad: &[f64],
    alpha: f64,
    queue: &[f64],
    g_prev: &Constraints,
) -> f64 {
    let lin: f64 = grad
        .iter()
        .zip(x.iter().zip(x_prev))
        .map(|(g, (a, b))| g * (a - b))
        .sum();
    let pen: f64 = queue
        .iter()
        .enumerate()
        .map(|(n, q)| q * hinge(g_prev.value(n, x)))
        .sum();
    lin + alpha * dist_sq(x, x_prev) + pen
}

/// Solution of `P_t` with its certified objective gap.
#[derive(Clone, Debug)]
pub struct PtSolution {
    pub x: Decision,
    pub objective: f64,
    pub gap: f64,
}

pub fn solve_pt(
    x_prev: &[f64],
    grad_prev: &[f64],
    alpha_prev: f64,
    q: &DoublyBoundedQueue,
    g_prev: &RoundFunctions,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
) -> Result<Decision> {
    solve_pt_detailed(x_prev, grad_prev, alpha_prev, q, g_prev, set, cfg).map(|s| s.x)
}

pub fn solve_pt_detailed(
    x_prev: &[f64],
    grad_prev: &[f64],
    alpha_prev: f64,
    q: &DoublyBoundedQueue,
    g_prev: &RoundFunctions,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
) -> Result<PtSolution> {
    let p = set.dim();
    if x_prev.len() != p {
        return Err(Error::dim("solve_pt decision", p, x_prev.len()));
    }
    if grad_prev.len() != p {
        return Err(Error::dim("solve_pt gradient", p, grad_prev.len()));
    }
    if q.len() != g_prev.constraints.count() {
        return Err(Error::dim("solve_pt queue", g_prev.constraints.count(), q.len()));
    }
    if !(alpha_prev > 0.0 && alpha_prev.is_finite()) {
        return Err(Error::Contract(format!("alpha must be positive, got {alpha_prev}")));
    }
    let g = &g_prev.constraints;
    let z: Vec<f64> = x_prev
        .iter()
        .zip(grad_prev)
        .map(|(x, gr)| x - gr / (2.0 * alpha_prev))
        .collect();
    // alpha ||x - z||^2 = <grad, x - x_prev> + alpha ||x - x_prev||^2 + ||grad||^2 / (4 alpha)
    let shift = dot(grad_prev, grad_prev) / (4.0 * alpha_prev);
    let objective = |x: &[f64]| pt_objective(x, x_prev, grad_prev, alpha_prev, q.values(), g);

    let mut outcome = hinge_prox(&z, alpha_prev, q.values(), g, set, cfg, None)?;
    let mut rng = Substream::new(cfg.seed, 0, Role::SolverRestart);
    for _ in 0..cfg.restarts {
        let start: Vec<f64> = q.values().iter().map(|w| rng.uniform(0.0, *w)).collect();
        let other = hinge_prox(&z, alpha_prev, q.values(), g, set, cfg, Some(&start))?;
        let dual = outcome.dual.max(other.dual);
        if other.primal < outcome.primal {
            outcome = other;
        }
        outcome.dual = dual;
    }
    let dual = outcome.dual - shift;

    let mut best = outcome.x;
    let mut best_obj = objective(&best);
    let step = argmin_gradient_step(x_prev, grad_prev, alpha_prev, set)?.into_inner();
    for cand in [step, x_prev.to_vec()] {
        let v = objective(&cand);
        if v < best_obj {
            best_obj = v;
            best = cand;
        }
    }
    if !best_obj.is_finite() {
        return Err(Error::Solver {
            message: "non-finite objective in P_t".into(),
            iterate: best,
        });
    }
    set.clamp_in_place(&mut best);
    let gap = (best_obj - dual).max(0.0);
    if !cfg.gap_ok(gap, best_obj) {
        log::debug!("P_t stopped with gap {gap:e} at objective {best_obj}");
    }
    Ok(PtSolution {
        x: Decision::from_vec_unchecked(best),
        objective: best_obj,
        gap,
    })
}

/// Constrained minimizer with its objective and residual infeasibility.
#[derive(Clone, Debug)]
pub struct ConstrainedSolution {
    pub x: Decision,
    pub objective: f64,
    pub infeasibility: f64,
}

/// `argmin_{x in set} { f(x) : g(x) <= 0 }`.
pub fn solve_constrained(f: &RoundFunctions, set: &BoxSet, cfg: &InnerSolverConfig) -> Result<Decision> {
    solve_constrained_detailed(&f.loss, &f.constraints, set, cfg).map(|s| s.x)
}

pub fn solve_constrained_detailed(
    loss: &Loss,
    g: &Constraints,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
) -> Result<ConstrainedSolution> {
    let p = set.dim();
    if loss.dim() != p {
        return Err(Error::dim("constrained solve", p, loss.dim()));
    }
    let (hess, q, _) = loss.to_quadratic();
    let s = hess[0][0];
    let scaled_identity = hess
        .iter()
        .enumerate()
        .all(|(i, row)| row.iter().enumerate().all(|(j, v)| if i == j { *v == s } else { *v == 0.0 }));

    let x = if scaled_identity && s > 0.0 {
        // 0.5 s ||x||^2 + <q, x> = (s / 2) ||x + q / s||^2 + const
        let z: Vec<f64> = q.iter().map(|v| -v / s).collect();
        penalty_prox(&z, 0.5 * s, loss, g, set, cfg)?
    } else if scaled_identity && s == 0.0 {
        match g {
            Constraints::Capacity { demand, coef, rate } => {
                water_fill(&q, *demand, *coef, *rate, set)?
            }
            Constraints::Affine { a, b } => match lp_vertex(&q, a, b, set) {
                Some(v) => v?,
                None => interior_qp(&hess, &q, a, b, set)?,
            },
        }
    } else if let Constraints::Affine { a, b } = g {
        interior_qp(&hess, &q, a, b, set)?
    } else {
        penalty_gradient(loss, g, set, cfg)?
    };
    let mut x = x;
    set.clamp_in_place(&mut x);
    let infeasibility: f64 = g.values(&x).into_iter().map(hinge).sum();
    let objective = loss.value(&x);
    if !objective.is_finite() {
        return Err(Error::Solver {
            message: "non-finite objective in constrained solve".into(),
            iterate: x,
        });
    }
    if infeasibility > FEASIBILITY_SLACK {
        return Err(Error::Infeasible(format!(
            "residual constraint violation {infeasibility:e} after penalty continuation"
        )));
    }
    Ok(ConstrainedSolution {
        x: Decision::from_vec_unchecked(x),
        objective,
        infeasibility,
    })
}

fn initial_penalty(loss: &Loss, set: &BoxSet) -> (f64, f64) {
    let d = loss.grad_bound(set).max(1.0);
    (10.0 * d, 1e12 * d)
}

/// Exact penalty with an isotropic quadratic: each stage is a single hinge-prox.
fn penalty_prox(
    z: &[f64],
    alpha: f64,
    loss: &Loss,
    g: &Constraints,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
) -> Result<Vec<f64>> {
    let (mut rho, cap) = initial_penalty(loss, set);
    let mut start: Option<Vec<f64>> = None;
    loop {
        let w = vec![rho; g.count()];
        let out = hinge_prox(z, alpha, &w, g, set, cfg, start.as_deref())?;
        let viol: f64 = g.values(&out.x).into_iter().map(hinge).sum();
        if viol < PENALTY_HINGE_TARGET {
            return Ok(out.x);
        }
        rho *= 2.0;
        if rho > cap {
            return Err(Error::Infeasible(format!(
                "penalty weight exceeded {cap:e} with violation {viol:e}"
            )));
        }
        start = Some(out.lambda);
    }
}

/// Exact penalty with a general smooth loss: accelerated proximal gradient
/// whose prox step is the hinge-prox.
fn penalty_gradient(
    loss: &Loss,
    g: &Constraints,
    set: &BoxSet,
    cfg: &InnerSolverConfig,
) -> Result<Vec<f64>> {
    let diam = set.diameter().max(1e-12);
    let lip = {
        let l = loss.smoothness();
        if l > 0.0 {
            l
        } else {
            (loss.grad_bound(set) / diam).max(1e-6)
        }
    };
    let (mut rho, cap) = initial_penalty(loss, set);
    let mut x = set.center().into_inner();
    let mut dual_start: Option<Vec<f64>> = None;
    loop {
        let w = vec![rho; g.count()];
        let total = |x: &[f64]| {
            loss.value(x) + rho * g.values(x).into_iter().map(hinge).sum::<f64>()
        };
        let mut y = x.clone();
        let mut fx = total(&x);
        let mut t = 1.0f64;
        for _ in 0..cfg.max_iters {
            let grad = loss.gradient(&y);
            let z: Vec<f64> = y.iter().zip(&grad).map(|(v, d)| v - d / lip).collect();
            let out = hinge_prox(&z, 0.5 * lip, &w, g, set, cfg, dual_start.as_deref())?;
            dual_start = Some(out.lambda);
            let xn = out.x;
            let fxn = total(&xn);
            if !fxn.is_finite() {
                return Err(Error::Solver {
                    message: "non-finite penalty objective".into(),
                    iterate: xn,
                });
            }
            let step = dist_sq(&xn, &y).sqrt();
            if fxn > fx {
                // adaptive restart
                t = 1.0;
                y = x.clone();
                if lip * step * diam <= 1e-10 * fx.abs().max(1.0) {
                    break;
                }
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = xn.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            set.clamp_in_place(&mut y);
            x = xn;
            fx = fxn;
            t = t_next;
            if lip * step * diam <= 1e-10 * fx.abs().max(1.0) {
                break;
            }
        }
        let viol: f64 = g.values(&x).into_iter().map(hinge).sum();
        if viol < PENALTY_HINGE_TARGET {
            return Ok(x);
        }
        rho *= 2.0;
        if rho > cap {
            return Err(Error::Infeasible(format!(
                "penalty weight exceeded {cap:e} with violation {viol:e}"
            )));
        }
    }
}

/// Convex QP `0.5 x'Px + q'x` subject to `Ax <= b` and the box, by an
/// interior-point method, followed by an active-set polish.
fn interior_qp(
    hess: &[Vec<f64>],
    q: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    set: &BoxSet,
) -> Result<Vec<f64>> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

    let p = q.len();
    let (lo, hi) = (set.lower(), set.upper());
    let mut rows: Vec<Vec<f64>> = a.to_vec();
    let mut rhs: Vec<f64> = b.to_vec();
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        rows.push(e.clone());
        rhs.push(hi[j]);
        e[j] = -1.0;
        rows.push(e);
        rhs.push(-lo[j]);
    }
    let pm = CscMatrix::from(hess.iter().map(|r| r.iter())).to_triu();
    let am = CscMatrix::from(rows.iter().map(|r| r.iter()));
    let cones = [SupportedConeT::NonnegativeConeT(rows.len())];
    let settings = DefaultSettings {
        verbose: false,
        tol_gap_abs: 1e-10,
        tol_gap_rel: 1e-10,
        tol_feas: 1e-10,
        max_iter: 500,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&pm, q, &am, &rhs, &cones, settings).map_err(|e| Error::Solver {
        message: format!("interior-point setup: {e}"),
        iterate: set.center().into_inner(),
    })?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Infeasible("constraint polytope is empty".into()));
        }
        status => {
            return Err(Error::Solver {
                message: format!("interior-point solver stopped with {status:?}"),
                iterate: sol.x.clone(),
            });
        }
    }
    let dense = DMatrix::from_fn(p, p, |i, j| hess[i][j]);
    let x = DVector::from_column_slice(&sol.x);
    let mut out = kkt_polish(&dense, q, a, b, set, &x).unwrap_or_else(|| sol.x.clone());
    set.clamp_in_place(&mut out);
    Ok(out)
}

/// Solves the equality-constrained KKT system on active sets guessed from
/// the proximity of `x` to each bound. Returns a point only if it satisfies
/// every KKT condition of the full problem.
fn kkt_polish(
    pm: &DMatrix<f64>,
    q: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    set: &BoxSet,
    x: &DVector<f64>,
) -> Option<Vec<f64>> {
    let p = q.len();
    let (lo, hi) = (set.lower(), set.upper());
    let near = |tau: f64| {
        let fixed: Vec<Option<f64>> = (0..p)
            .map(|j| {
                if x[j] >= hi[j] - tau * (1.0 + hi[j].abs()) {
                    Some(hi[j])
                } else if x[j] <= lo[j] + tau * (1.0 + lo[j].abs()) {
                    Some(lo[j])
                } else {
                    None
                }
            })
            .collect();
        let active: Vec<usize> = (0..a.len())
            .filter(|&i| dot(&a[i], x.as_slice()) >= b[i] - tau * (1.0 + b[i].abs()))
            .collect();
        (fixed, active)
    };
    [1e-8, 1e-6, 1e-4]
        .into_iter()
        .map(near)
        .find_map(|(fixed, active)| kkt_solve(pm, q, a, b, set, &fixed, &active))
}

fn kkt_solve(
    pm: &DMatrix<f64>,
    q: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    set: &BoxSet,
    fixed: &[Option<f64>],
    active: &[usize],
) -> Option<Vec<f64>> {
    let p = q.len();
    let m = a.len();
    let free: Vec<usize> = (0..p).filter(|&j| fixed[j].is_none()).collect();
    let (nf, na) = (free.len(), active.len());
    let mut x: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mut lam = vec![0.0; m];
    let n = nf + na;
    if n > 0 {
        let mut k = DMatrix::<f64>::zeros(n, n);
        let mut r = DVector::<f64>::zeros(n);
        for (fi, &j) in free.iter().enumerate() {
            for (fk, &l) in free.iter().enumerate() {
                k[(fi, fk)] = pm[(j, l)];
            }
            r[fi] = -q[j] - (0..p).filter_map(|l| fixed[l].map(|v| pm[(j, l)] * v)).sum::<f64>();
        }
        for (ai, &i) in active.iter().enumerate() {
            for (fi, &j) in free.iter().enumerate() {
                k[(nf + ai, fi)] = a[i][j];
                k[(fi, nf + ai)] = a[i][j];
            }
            r[nf + ai] = b[i] - (0..p).filter_map(|l| fixed[l].map(|v| a[i][l] * v)).sum::<f64>();
        }
        // regularized factorization with iterative refinement
        let delta = 1e-9 * (1.0 + k.amax());
        let mut kr = k.clone();
        for i in 0..n {
            kr[(i, i)] += if i < nf { delta } else { -delta };
        }
        let lu = kr.lu();
        let mut sol = lu.solve(&r)?;
        for _ in 0..5 {
            let res = &r - &k * &sol;
            sol += lu.solve(&res)?;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for (fi, &j) in free.iter().enumerate() {
            x[j] = sol[fi];
        }
        for (ai, &i) in active.iter().enumerate() {
            if sol[nf + ai] < -1e-9 {
                return None;
            }
            lam[i] = sol[nf + ai].max(0.0);
        }
    }
    kkt_check(pm, q, a, b, set, &x, &lam, fixed).then_some(x)
}

#[allow(clippy::too_many_arguments)]
fn kkt_check(
    pm: &DMatrix<f64>,
    q: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    set: &BoxSet,
    x: &[f64],
    lam: &[f64],
    fixed: &[Option<f64>],
) -> bool {
    let p = x.len();
    let tol = 1e-9;
    let (lo, hi) = (set.lower(), set.upper());
    if (0..p).any(|j| x[j] < lo[j] - tol * (1.0 + lo[j].abs()) || x[j] > hi[j] + tol * (1.0 + hi[j].abs())) {
        return false;
    }
    if a.iter().zip(b).any(|(row, bi)| dot(row, x) - bi > tol * (1.0 + bi.abs())) {
        return false;
    }
    let xv = DVector::from_column_slice(x);
    let px = pm * &xv;
    let mut grad: Vec<f64> = (0..p).map(|j| px[j] + q[j]).collect();
    for (row, l) in a.iter().zip(lam) {
        for j in 0..p {
            grad[j] += l * row[j];
        }
    }
    let scale = 1.0 + grad.iter().chain(q).fold(0.0f64, |acc, v| acc.max(v.abs()));
    (0..p).all(|j| match fixed[j] {
        None => grad[j].abs() <= tol * scale,
        Some(v) if v == hi[j] && v == lo[j] => true,
        Some(v) if v == hi[j] => grad[j] <= tol * scale,
        Some(_) => grad[j] >= -tol * scale,
    })
}

/// Linear objective under a single concave service constraint: the
/// Lagrangian separates per coordinate and the multiplier is found by bisection.
fn water_fill(c: &[f64], demand: f64, coef: f64, rate: f64, set: &BoxSet) -> Result<Vec<f64>> {
    let (lo, hi) = (set.lower(), set.upper());
    let alloc = |nu: f64| -> Vec<f64> {
        c.iter()
            .enumerate()
            .map(|(i, &ci)| {
                if ci <= 0.0 {
                    hi[i]
                } else {
                    (nu * coef / ci - 1.0 / rate).clamp(lo[i], hi[i])
                }
            })
            .collect()
    };
    let service = |x: &[f64]| x.iter().map(|v| coef * (rate * v).ln_1p()).sum::<f64>();
    let x0 = alloc(0.0);
    if service(&x0) >= demand {
        return Ok(x0);
    }
    if service(hi) < demand {
        return Err(Error::Infeasible(format!(
            "demand {demand} exceeds full capacity {}",
            service(hi)
        )));
    }
    let mut nu_hi = 1.0;
    while service(&alloc(nu_hi)) < demand {
        nu_hi *= 2.0;
        if !nu_hi.is_finite() {
            return Err(Error::Solver {
                message: "multiplier search diverged".into(),
                iterate: alloc(f64::MAX),
            });
        }
    }
    let mut nu_lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (nu_lo + nu_hi);
        if mid <= nu_lo || mid >= nu_hi {
            break;
        }
        if service(&alloc(mid)) >= demand {
            nu_hi = mid;
        } else {
            nu_lo = mid;
        }
    }
    Ok(alloc(nu_hi))
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u64::MAX,
        };
    }
    acc
}

/// Linear program over box-plus-halfspaces by vertex enumeration. `None` when
/// the number of candidate bases is too large to enumerate.
fn lp_vertex(c: &[f64], a: &[Vec<f64>], b: &[f64], set: &BoxSet) -> Option<Result<Vec<f64>>> {
    let p = c.len();
    // halfspaces h.x <= r: constraint rows, then x_j <= upper_j, then -x_j <= -lower_j
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        rows.push((e.clone(), set.upper()[j]));
        e[j] = -1.0;
        rows.push((e, -set.lower()[j]));
    }
    let m = rows.len();
    if binomial(m as u64, p as u64) > MAX_VERTEX_COMBINATIONS {
        return None;
    }
    let feasible = |x: &[f64]| {
        rows.iter()
            .all(|(h, r)| dot(h, x) - r <= 1e-9 * (1.0 + r.abs()))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let mat: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_linear(mat, rhs) {
            if feasible(&x) {
                let v = dot(c, &x);
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, x));
                }
            }
        }
        // next combination in lexicographic order
        let mut i = p;
        loop {
            if i == 0 {
                return Some(
                    best.map(|(_, x)| x)
                        .ok_or_else(|| Error::Infeasible("polytope has no feasible vertex".into())),
                );
            }
            i -= 1;
            if idx[i] < m - p + i {
                idx[i] += 1;
                for k in (i + 1)..p {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(a: Vec<Vec<f64>>, b: Vec<f64>) -> Constraints {
        Constraints::Affine { a, b }
    }

    fn round(loss: Loss, g: Constraints) -> RoundFunctions {
        RoundFunctions::new(loss, g)
    }

    fn cfg() -> InnerSolverConfig {
        InnerSolverConfig::default()
    }

    #[test]
    fn gradient_step_examples() {
        let b = BoxSet::cube(2, 0.0, 5.0).unwrap();
        assert_eq!(&*argmin_gradient_step(&[1.0, 1.0], &[2.0, 0.0], 1.0, &b).unwrap(), &[0.0, 1.0]);
        assert_eq!(&*argmin_gradient_step(&[1.5, 2.5], &[0.0, 0.0], 3.0, &b).unwrap(), &[1.5, 2.5]);
        let u = BoxSet::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(
            &*argmin_gradient_step(&[0.0, 0.0], &[-10.0, -10.0], 1.0, &u).unwrap(),
            &[1.0, 1.0]
        );
    }

    #[test]
    fn pt_stationary_at_feasible_previous_point() {
        let set = BoxSet::cube(2, 0.0, 5.0).unwrap();
        let q = DoublyBoundedQueue::new(1, 1.0, 0.5, 10.0).unwrap();
        let g = round(Loss::linear(vec![0.0, 0.0]), affine(vec![vec![1.0, 1.0]], vec![8.0]));
        let x = solve_pt(&[1.0, 2.0], &[0.0, 0.0], 1.0, &q, &g, &set, &cfg()).unwrap();
        assert_eq!(&*x, &[1.0, 2.0]);
    }

    #[test]
    fn pt_one_dimensional_gradient_step() {
        let set = BoxSet::cube(1, 0.0, 5.0).unwrap();
        let q = DoublyBoundedQueue::new(1, 1.0, 0.5, 10.0).unwrap();
        // x - 6 <= 0 on all of [0, 5], so the hinge never binds
        let g = round(Loss::linear(vec![0.0]), affine(vec![vec![1.0]], vec![6.0]));
        let x = solve_pt(&[2.0], &[4.0], 1.0, &q, &g, &set, &cfg()).unwrap();
        assert_eq!(&*x, &[0.0]);
    }

    fn grid_min_2d(f: impl Fn(&[f64]) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let x = [lo + i as f64 * step, lo + j as f64 * step];
                best = best.min(f(&x));
            }
        }
        best
    }

    #[test]
    fn pt_two_dimensional_matches_grid() {
        let set = BoxSet::cube(2, 0.0, 5.0).unwrap();
        let q = DoublyBoundedQueue::from_values(vec![10.0], 1.0, 0.5, 10.0).unwrap();
        let gc = affine(vec![vec![1.0, 1.0]], vec![2.0]);
        let g = round(Loss::linear(vec![0.0, 0.0]), gc.clone());
        let sol = solve_pt_detailed(&[2.0, 2.0], &[0.0, 0.0], 1.0, &q, &g, &set, &cfg()).unwrap();
        let obj = |x: &[f64]| pt_objective(x, &[2.0, 2.0], &[0.0, 0.0], 1.0, &[10.0], &gc);
        let grid = grid_min_2d(obj, 0.0, 5.0, 1e-3);
        assert!(sol.objective <= grid + 1e-9);
        assert!(grid - sol.objective < 1e-3);
        // minimizer is (1, 1): the hinge is exactly active with multiplier 2 < Q
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        assert!(sol.gap < 1e-10);
    }

    #[test]
    fn pt_never_worse_than_simple_candidates() {
        let set = BoxSet::cube(2, 0.0, 1.0).unwrap();
        let mut s = Substream::new(11, 0, Role::Probe);
        for _ in 0..200 {
            let gc = affine(
                (0..3).map(|_| vec![s.uniform(-1.0, 1.0), s.uniform(-1.0, 1.0)]).collect(),
                (0..3).map(|_| s.uniform(-0.3, 0.3)).collect(),
            );
            let qv: Vec<f64> = (0..3).map(|_| s.uniform(0.5, 20.0)).collect();
            let q = DoublyBoundedQueue::from_values(qv.clone(), 0.5, 0.01, 10.0).unwrap();
            let xp = [s.unit(), s.unit()];
            let gr = [s.uniform(-3.0, 3.0), s.uniform(-3.0, 3.0)];
            let alpha = s.uniform(0.1, 5.0);
            let r = round(Loss::linear(vec![0.0, 0.0]), gc.clone());
            let sol = solve_pt_detailed(&xp, &gr, alpha, &q, &r, &set, &cfg()).unwrap();
            let obj = |x: &[f64]| pt_objective(x, &xp, &gr, alpha, &qv, &gc);
            let step = argmin_gradient_step(&xp, &gr, alpha, &set).unwrap();
            assert!(sol.objective <= obj(&xp));
            assert!(sol.objective <= obj(&step));
            assert!(set.contains(&sol.x));
            assert!(sol.gap <= 1e-9, "gap {}", sol.gap);
        }
    }

    #[test]
    fn pt_restarts_agree() {
        let set = BoxSet::cube(3, 0.0, 1.0).unwrap();
        let gc = affine(
            vec![vec![1.0, 0.5, 0.2], vec![0.3, 1.0, 0.4], vec![0.2, 0.1, 1.0]],
            vec![0.4, 0.3, 0.2],
        );
        let q = DoublyBoundedQueue::from_values(vec![3.0, 5.0, 2.0], 1.0, 0.1, 2.0).unwrap();
        let r = round(Loss::linear(vec![0.0; 3]), gc);
        let base = solve_pt(&[1.0, 1.0, 1.0], &[-1.0, -2.0, 0.5], 0.7, &q, &r, &set, &cfg()).unwrap();
        for seed in 0..5 {
            let c = InnerSolverConfig {
                restarts: 3,
                seed,
                ..cfg()
            };
            let other = solve_pt(&[1.0, 1.0, 1.0], &[-1.0, -2.0, 0.5], 0.7, &q, &r, &set, &c).unwrap();
            let bound = (2.0 * c.tolerance * 10.0 / 0.7).sqrt();
            assert!(dist_sq(&base, &other).sqrt() <= bound.max(1e-9));
        }
    }

    #[test]
    fn constrained_unconstrained_optimum() {
        let set = BoxSet::cube(2, -1.0, 1.0).unwrap();
        let f = round(
            Loss::Isotropic {
                scale: 1.0,
                center: vec![0.0, 0.0],
                linear: vec![0.0, 0.0],
            },
            affine(vec![vec![1.0, 0.0]], vec![1.0]),
        );
        let x = solve_constrained(&f, &set, &cfg()).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constrained_lp_on_simplex_face() {
        let set = BoxSet::cube(2, 0.0, 1.0).unwrap();
        let f = round(Loss::linear(vec![-1.0, -1.0]), affine(vec![vec![1.0, 1.0]], vec![1.0]));
        let x = solve_constrained(&f, &set, &cfg()).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-9);
        assert!((f.loss_value(&x) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn constrained_least_squares_matches_grid() {
        let set = BoxSet::cube(2, 0.0, 5.0).unwrap();
        let loss = Loss::LeastSquares {
            h: vec![vec![0.4, -0.7], vec![0.9, 0.2], vec![-0.3, 0.5], vec![0.1, 0.8]],
            y: vec![-0.2, 1.6, 0.4, 1.2],
        };
        let g = affine(vec![vec![0.6, 0.3], vec![0.2, 0.9]], vec![0.5, 0.7]);
        let sol = solve_constrained_detailed(&loss, &g, &set, &cfg()).unwrap();
        let feasible = |x: &[f64]| g.values(x).iter().all(|v| *v <= 0.0);
        let grid = grid_min_2d(
            |x| if feasible(x) { loss.value(x) } else { f64::INFINITY },
            0.0,
            5.0,
            1e-3,
        );
        assert!(sol.infeasibility <= FEASIBILITY_SLACK);
        assert!((sol.objective - grid).abs() < 1e-3, "{} vs {grid}", sol.objective);
    }

    #[test]
    fn rank_deficient_many_rows_matches_lp_oracle() {
        let set = BoxSet::cube(2, 0.0, 5.0).unwrap();
        let loss = Loss::LeastSquares {
            h: vec![vec![1.0, 1.0]],
            y: vec![6.0],
        };
        let mut s = Substream::new(3, 0, Role::Probe);
        let a: Vec<Vec<f64>> = (0..300).map(|_| vec![s.uniform(0.0, 1.0), s.uniform(0.0, 1.0)]).collect();
        let b: Vec<f64> = (0..300).map(|_| s.uniform(1.0, 4.0)).collect();
        let g = affine(a, b);
        let sol = solve_constrained_detailed(&loss, &g, &set, &cfg()).unwrap();
        // the loss depends only on x1 + x2, whose feasible maximum is an LP
        let Constraints::Affine { a, b } = &g else { unreachable!() };
        let top = lp_vertex(&[-1.0, -1.0], a, b, &set).unwrap().unwrap();
        let expected = 0.5 * (6.0 - top[0] - top[1]).powi(2);
        assert!(sol.infeasibility <= FEASIBILITY_SLACK);
        assert!((sol.objective - expected).abs() < 1e-8, "{} vs {expected}", sol.objective);
    }

    #[test]
    fn interior_lp_agrees_with_vertex_enumeration() {
        let set = BoxSet::cube(3, -1.0, 2.0).unwrap();
        let mut s = Substream::new(9, 0, Role::Probe);
        for _ in 0..20 {
            let c: Vec<f64> = (0..3).map(|_| s.uniform(-1.0, 1.0)).collect();
            let a: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| s.uniform(-1.0, 1.0)).collect()).collect();
            let b: Vec<f64> = (0..6).map(|_| s.uniform(0.1, 1.0)).collect();
            let zero = vec![vec![0.0; 3]; 3];
            let x = interior_qp(&zero, &c, &a, &b, &set).unwrap();
            let v = lp_vertex(&c, &a, &b, &set).unwrap().unwrap();
            assert!((dot(&c, &x) - dot(&c, &v)).abs() < 1e-7, "{x:?} vs {v:?}");
        }
    }

    #[test]
    fn water_fill_meets_demand_at_least_cost() {
        let set = BoxSet::cube(4, 0.0, 1000.0).unwrap();
        let g = Constraints::Capacity {
            demand: 60.0,
            coef: 4.0,
            rate: 4.0,
        };
        let c = vec![20.0, 35.0, 50.0, 60.0];
        let sol = solve_constrained_detailed(&Loss::linear(c.clone()), &g, &set, &cfg()).unwrap();
        let gv = g.value(0, &sol.x);
        assert!(gv <= 0.0 && gv > -1e-9);
        // marginal cost per unit of service is equalized across active coordinates
        let marg: Vec<f64> = (0..4)
            .filter(|&i| sol.x[i] > 0.0)
            .map(|i| c[i] * (1.0 + 4.0 * sol.x[i]) / 16.0)
            .collect();
        for m in &marg {
            assert!((m - marg[0]).abs() < 1e-6 * marg[0]);
        }
    }

    #[test]
    fn infeasible_instance_is_reported() {
        let set = BoxSet::cube(1, 0.0, 1.0).unwrap();
        let f = round(
            Loss::Isotropic {
                scale: 1.0,
                center: vec![0.5],
                linear: vec![0.0],
            },
            affine(vec![vec![1.0], vec![-1.0]], vec![0.2, -0.8]),
        );
        assert!(matches!(solve_constrained(&f, &set, &cfg()), Err(Error::Infeasible(_))));
    }
}
