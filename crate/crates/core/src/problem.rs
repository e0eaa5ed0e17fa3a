//! Decision vectors, box feasible sets, and the per-round loss and constraint
//! functions revealed to the learner.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive part `max(v, 0)`.
#[inline]
pub fn hinge(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// A point of the decision space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decision(Vec<f64>);

impl Decision {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "decision coordinate {i} is not finite ({})",
                coords[i]
            )));
        }
        Ok(Decision(coords))
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Decision(coords)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Decision {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Decision {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection oracle onto a closed convex set.
pub trait Projection {
    fn dim(&self) -> usize;
    fn project(&self, x: &[f64]) -> Result<Decision>;
    fn contains(&self, x: &[f64]) -> bool;
    /// Upper bound on `||x - y||` over the set.
    fn diameter(&self) -> f64;
}

/// Axis-aligned box `{x : lower <= x <= upper}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("box bounds", lower.len(), upper.len()));
        }
        if lower.is_empty() {
            return Err(Error::Config("box must have at least one coordinate".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!(
                    "box coordinate {i}: need finite lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxSet::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Decision {
        Decision(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        )
    }

    #[inline]
    pub(crate) fn clamp_in_place(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Range `(min, max)` of `<row, x> + offset` over the box.
    pub(crate) fn affine_range(&self, row: &[f64], offset: f64) -> (f64, f64) {
        let mut lo = offset;
        let mut hi = offset;
        for ((c, l), u) in row.iter().zip(&self.lower).zip(&self.upper) {
            let (a, b) = (c * l, c * u);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    /// `max |<row, x> + offset|` over the box (attained at a vertex).
    pub(crate) fn affine_abs_max(&self, row: &[f64], offset: f64) -> f64 {
        let (lo, hi) = self.affine_range(row, offset);
        lo.abs().max(hi.abs())
    }

    /// All `2^p` vertices. Only sensible for small `p`.
    pub(crate) fn vertices(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let p = self.dim();
        (0u64..(1u64 << p)).map(move |mask| {
            (0..p)
                .map(|j| {
                    if mask >> j & 1 == 1 {
                        self.upper[j]
                    } else {
                        self.lower[j]
                    }
                })
                .collect()
        })
    }
}

impl Projection for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, x: &[f64]) -> Result<Decision> {
        if x.len() != self.dim() {
            return Err(Error::dim("projection", self.dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("cannot project a non-finite vector".into()));
        }
        let mut out = x.to_vec();
        self.clamp_in_place(&mut out);
        Ok(Decision(out))
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, lo), hi)| lo <= v && v <= hi)
    }

    fn diameter(&self) -> f64 {
        dist(&self.lower, &self.upper)
    }
}

/// Coordinatewise clamp of `x` into the box.
pub fn project(set: &BoxSet, x: &[f64]) -> Result<Decision> {
    set.project(x)
}

/// Static facts about a problem instance: dimensions, feasible set and the
/// bounds `D` (gradient norm) and `G` (constraint magnitude).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: usize,
    pub n_constraints: usize,
    pub horizon: usize,
    pub feasible: BoxSet,
    pub grad_bound: f64,
    pub constraint_bound: f64,
    /// Modulus `mu` in `f(y) >= f(x) + <grad f(x), y - x> + mu ||y - x||^2`; zero when merely convex.
    pub strong_convexity: f64,
}

impl ProblemSpec {
    pub fn diameter(&self) -> f64 {
        self.feasible.diameter()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_constraints == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "dimension, constraint count and horizon must be positive".into(),
            ));
        }
        if self.feasible.dim() != self.dim {
            return Err(Error::dim("feasible set", self.dim, self.feasible.dim()));
        }
        if !(self.grad_bound > 0.0 && self.constraint_bound > 0.0) {
            return Err(Error::Config("D and G must be positive".into()));
        }
        if !(self.strong_convexity >= 0.0) {
            return Err(Error::Config("strong convexity modulus must be >= 0".into()));
        }
        Ok(())
    }
}

/// Loss function `f_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Loss {
    /// `0.5 ||H x - y||^2`, `H` stored row-major.
    LeastSquares { h: Vec<Vec<f64>>, y: Vec<f64> },
    /// `scale ||x - center||^2 + <linear, x>`.
    Isotropic {
        scale: f64,
        center: Vec<f64>,
        linear: Vec<f64>,
    },
    /// `0.5 x' P x + <q, x> + c`, `P` symmetric positive semidefinite.
    Quadratic {
        hessian: Vec<Vec<f64>>,
        linear: Vec<f64>,
        constant: f64,
    },
}

impl Loss {
    pub fn linear(c: Vec<f64>) -> Self {
        let p = c.len();
        Loss::Isotropic {
            scale: 0.0,
            center: vec![0.0; p],
            linear: c,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Loss::LeastSquares { h, .. } => h.first().map_or(0, Vec::len),
            Loss::Isotropic { center, .. } => center.len(),
            Loss::Quadratic { linear, .. } => linear.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Loss::LeastSquares { h, y } => {
                0.5 * h
                    .iter()
                    .zip(y)
                    .map(|(row, yi)| {
                        let r = dot(row, x) - yi;
                        r * r
                    })
                    .sum::<f64>()
            }
            Loss::Isotropic {
                scale,
                center,
                linear,
            } => scale * dist_sq(x, center) + dot(linear, x),
            Loss::Quadratic {
                hessian,
                linear,
                constant,
            } => {
                let quad: f64 = hessian
                    .iter()
                    .zip(x)
                    .map(|(row, xi)| xi * dot(row, x))
                    .sum();
                0.5 * quad + dot(linear, x) + constant
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Loss::LeastSquares { h, y } => {
                let mut g = vec![0.0; x.len()];
                for (row, yi) in h.iter().zip(y) {
                    let r = dot(row, x) - yi;
                    for (gj, hj) in g.iter_mut().zip(row) {
                        *gj += r * hj;
                    }
                }
                g
            }
            Loss::Isotropic {
                scale,
                center,
                linear,
            } => x
                .iter()
                .zip(center)
                .zip(linear)
                .map(|((xi, ci), li)| 2.0 * scale * (xi - ci) + li)
                .collect(),
            Loss::Quadratic {
                hessian, linear, ..
            } => hessian
                .iter()
                .zip(linear)
                .map(|(row, qi)| dot(row, x) + qi)
                .collect(),
        }
    }

    /// Representation as `0.5 x' P x + <q, x> + c`.
    pub fn to_quadratic(&self) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
        let p = self.dim();
        match self {
            Loss::LeastSquares { h, y } => {
                let mut hess = vec![vec![0.0; p]; p];
                let mut q = vec![0.0; p];
                for (row, yi) in h.iter().zip(y) {
                    for i in 0..p {
                        q[i] -= row[i] * yi;
                        for j in 0..p {
                            hess[i][j] += row[i] * row[j];
                        }
                    }
                }
                let c = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
                (hess, q, c)
            }
            Loss::Isotropic {
                scale,
                center,
                linear,
            } => {
                let mut hess = vec![vec![0.0; p]; p];
                for (i, row) in hess.iter_mut().enumerate() {
                    row[i] = 2.0 * scale;
                }
                let q = linear
                    .iter()
                    .zip(center)
                    .map(|(l, c)| l - 2.0 * scale * c)
                    .collect();
                (hess, q, scale * dot(center, center))
            }
            Loss::Quadratic {
                hessian,
                linear,
                constant,
            } => (hessian.clone(), linear.clone(), *constant),
        }
    }

    /// Sum of losses, e.g. the cumulative loss used by the offline comparator.
    pub fn sum<'a>(losses: impl IntoIterator<Item = &'a Loss>) -> Result<Loss> {
        let mut acc: Option<(Vec<Vec<f64>>, Vec<f64>, f64)> = None;
        for loss in losses {
            let (h, q, c) = loss.to_quadratic();
            match acc.as_mut() {
                None => acc = Some((h, q, c)),
                Some((ah, aq, ac)) => {
                    if aq.len() != q.len() {
                        return Err(Error::dim("loss sum", aq.len(), q.len()));
                    }
                    for (arow, row) in ah.iter_mut().zip(&h) {
                        for (a, v) in arow.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    for (a, v) in aq.iter_mut().zip(&q) {
                        *a += v;
                    }
                    *ac += c;
                }
            }
        }
        let (hessian, linear, constant) =
            acc.ok_or_else(|| Error::Contract("cannot sum an empty set of losses".into()))?;
        Ok(Loss::Quadratic {
            hessian,
            linear,
            constant,
        })
    }

    /// An upper bound on the Lipschitz constant of the gradient.
    pub fn smoothness(&self) -> f64 {
        match self {
            Loss::Isotropic { scale, .. } => 2.0 * scale,
            _ => {
                let (h, _, _) = self.to_quadratic();
                let trace: f64 = h.iter().enumerate().map(|(i, r)| r[i]).sum();
                let gershgorin = h
                    .iter()
                    .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                trace.min(gershgorin)
            }
        }
    }

    /// Modulus `mu` (`f(y) >= f(x) + <g, y-x> + mu||y-x||^2`).
    pub fn strong_convexity(&self) -> f64 {
        match self {
            Loss::Isotropic { scale, .. } => *scale,
            _ => 0.0,
        }
    }

    /// Upper bound on `sup_{x in set} ||grad f(x)||`: each gradient coordinate is
    /// affine in `x`, so its absolute maximum over the box is exact at a vertex.
    pub fn grad_bound(&self, set: &BoxSet) -> f64 {
        match self {
            Loss::Isotropic {
                scale,
                center,
                linear,
            } => (0..self.dim())
                .map(|j| {
                    let a = 2.0 * scale * (set.lower()[j] - center[j]) + linear[j];
                    let b = 2.0 * scale * (set.upper()[j] - center[j]) + linear[j];
                    a.abs().max(b.abs()).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
            _ => {
                let (h, q, _) = self.to_quadratic();
                h.iter()
                    .zip(&q)
                    .map(|(row, qi)| set.affine_abs_max(row, *qi).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// Result of `max_{x in X} ||g(x) - g'(x)||`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Variation {
    pub value: f64,
    /// `false` when the value is a sampled lower estimate.
    pub exact: bool,
}

/// Vector-valued constraint function `g_t` (feasible when `g_t(x) <= 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Constraints {
    /// `g(x) = A x - b`.
    Affine { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// Single constraint `g(x) = demand - sum_i coef * ln(1 + rate * x_i)`.
    Capacity { demand: f64, coef: f64, rate: f64 },
}

const MAX_EXACT_VERTEX_DIM: usize = 16;
const VARIATION_SAMPLES: usize = 1024;

impl Constraints {
    pub fn count(&self) -> usize {
        match self {
            Constraints::Affine { b, .. } => b.len(),
            Constraints::Capacity { .. } => 1,
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Constraints::Affine { .. })
    }

    pub fn value(&self, n: usize, x: &[f64]) -> f64 {
        match self {
            Constraints::Affine { a, b } => dot(&a[n], x) - b[n],
            Constraints::Capacity { demand, coef, rate } => {
                demand - x.iter().map(|v| coef * (rate * v).ln_1p()).sum::<f64>()
            }
        }
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        (0..self.count()).map(|n| self.value(n, x)).collect()
    }

    pub fn subgradient(&self, x: &[f64], n: usize) -> Vec<f64> {
        match self {
            Constraints::Affine { a, .. } => a[n].clone(),
            Constraints::Capacity { coef, rate, .. } => {
                x.iter().map(|v| -coef * rate / (1.0 + rate * v)).collect()
            }
        }
    }

    /// Subgradient of `[g_n]_+`; the zero vector is chosen at `g_n = 0`.
    pub fn hinge_subgradient(&self, x: &[f64], n: usize) -> Vec<f64> {
        if self.value(n, x) > 0.0 {
            self.subgradient(x, n)
        } else {
            vec![0.0; x.len()]
        }
    }

    /// `sup_n sup_{x in set} |g_n(x)|`.
    pub fn bound(&self, set: &BoxSet) -> f64 {
        match self {
            Constraints::Affine { a, b } => a
                .iter()
                .zip(b)
                .map(|(row, bn)| set.affine_abs_max(row, -bn))
                .fold(0.0, f64::max),
            Constraints::Capacity { .. } => {
                let at_lo = self.value(0, set.lower());
                let at_hi = self.value(0, set.upper());
                at_lo.abs().max(at_hi.abs())
            }
        }
    }

    /// Minimizer over the box of `alpha ||x - z||^2 + sum_n lambda_n g_n(x)`.
    pub(crate) fn lagrangian_argmin(
        &self,
        z: &[f64],
        alpha: f64,
        lambda: &[f64],
        set: &BoxSet,
    ) -> Vec<f64> {
        let mut x = z.to_vec();
        match self {
            Constraints::Affine { a, .. } => {
                let inv = 0.5 / alpha;
                for (row, l) in a.iter().zip(lambda) {
                    if *l != 0.0 {
                        for (xj, aj) in x.iter_mut().zip(row) {
                            *xj -= inv * l * aj;
                        }
                    }
                }
            }
            Constraints::Capacity { coef, rate, .. } => {
                // stationary point of alpha (x - z)^2 - lambda coef ln(1 + r x) in u = 1 + r x
                let l = lambda[0];
                for xj in x.iter_mut() {
                    let s = 1.0 + rate * *xj;
                    let disc = s * s + 2.0 * l * coef * rate * rate / alpha;
                    let u = 0.5 * (s + disc.sqrt());
                    *xj = (u - 1.0) / rate;
                }
            }
        }
        set.clamp_in_place(&mut x);
        x
    }

    /// `max_{x in set} ||self(x) - other(x)||`.
    ///
    /// Exact for affine pairs (vertex enumeration for small dimension, a
    /// per-row upper bound otherwise) and for capacity pairs sharing the same
    /// service curve; any other pairing is estimated from quasi-random samples.
    pub fn variation(&self, other: &Constraints, set: &BoxSet) -> Result<Variation> {
        if self.count() != other.count() {
            return Err(Error::dim("constraint variation", self.count(), other.count()));
        }
        match (self, other) {
            (Constraints::Affine { a: a1, b: b1 }, Constraints::Affine { a: a2, b: b2 }) => {
                let rows: Vec<(Vec<f64>, f64)> = a1
                    .iter()
                    .zip(a2)
                    .zip(b1.iter().zip(b2))
                    .map(|((r1, r2), (c1, c2))| {
                        (r1.iter().zip(r2).map(|(u, v)| u - v).collect(), c2 - c1)
                    })
                    .collect();
                if set.dim() <= MAX_EXACT_VERTEX_DIM {
                    let best = set
                        .vertices()
                        .map(|v| {
                            rows.iter()
                                .map(|(r, off)| (dot(r, &v) + off).powi(2))
                                .sum::<f64>()
                        })
                        .fold(0.0, f64::max);
                    Ok(Variation {
                        value: best.sqrt(),
                        exact: true,
                    })
                } else {
                    // upper bound: each row maximized independently
                    let ub = rows
                        .iter()
                        .map(|(r, off)| set.affine_abs_max(r, *off).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    Ok(Variation {
                        value: ub,
                        exact: true,
                    })
                }
            }
            (
                Constraints::Capacity {
                    demand: d1,
                    coef: c1,
                    rate: r1,
                },
                Constraints::Capacity {
                    demand: d2,
                    coef: c2,
                    rate: r2,
                },
            ) if c1 == c2 && r1 == r2 => Ok(Variation {
                value: (d1 - d2).abs(),
                exact: true,
            }),
            _ => {
                let mut best = 0.0f64;
                for x in halton_points(set, VARIATION_SAMPLES) {
                    let d: f64 = (0..self.count())
                        .map(|n| (self.value(n, &x) - other.value(n, &x)).powi(2))
                        .sum();
                    best = best.max(d);
                }
                Ok(Variation {
                    value: best.sqrt(),
                    exact: false,
                })
            }
        }
    }

    /// Constraint function whose feasible set is the intersection of all inputs.
    pub fn intersect_all<'a>(items: impl IntoIterator<Item = &'a Constraints>) -> Result<Self> {
        let mut it = items.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Contract("empty constraint list".into()))?
            .clone();
        let mut acc = first;
        for c in it {
            acc = match (acc, c) {
                (Constraints::Affine { mut a, mut b }, Constraints::Affine { a: a2, b: b2 }) => {
                    for (row, bn) in a2.iter().zip(b2) {
                        let dup = a.iter().zip(&b).any(|(r, v)| r == row && v == bn);
                        if !dup {
                            a.push(row.clone());
                            b.push(*bn);
                        }
                    }
                    Constraints::Affine { a, b }
                }
                (
                    Constraints::Capacity { demand, coef, rate },
                    Constraints::Capacity {
                        demand: d2,
                        coef: c2,
                        rate: r2,
                    },
                ) if coef == *c2 && rate == *r2 => Constraints::Capacity {
                    demand: demand.max(*d2),
                    coef,
                    rate,
                },
                _ => {
                    return Err(Error::Contract(
                        "cannot intersect constraints of different kinds".into(),
                    ))
                }
            };
        }
        Ok(acc)
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [usize; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// Halton points in the box (dimensions beyond the prime table reuse bases with an offset index).
pub(crate) fn halton_points(set: &BoxSet, count: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    (1..=count).map(move |i| {
        (0..set.dim())
            .map(|j| {
                let base = PRIMES[j % PRIMES.len()];
                let u = radical_inverse(i + 7 * (j / PRIMES.len()), base);
                set.lower()[j] + u * (set.upper()[j] - set.lower()[j])
            })
            .collect()
    })
}

/// The pair `(f_t, g_t)` revealed at the end of round `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundFunctions {
    pub loss: Loss,
    pub constraints: Constraints,
}

impl RoundFunctions {
    pub fn new(loss: Loss, constraints: Constraints) -> Self {
        RoundFunctions { loss, constraints }
    }

    pub fn loss_value(&self, x: &[f64]) -> f64 {
        self.loss.value(x)
    }

    pub fn loss_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.loss.gradient(x)
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.values(x)
    }

    pub fn constraint_subgradient(&self, x: &[f64], n: usize) -> Vec<f64> {
        self.constraints.subgradient(x, n)
    }

    /// `[g_t^n(x)]_+` for every `n`.
    pub fn violations(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.values(x).into_iter().map(hinge).collect()
    }
}
