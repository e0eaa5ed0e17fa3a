//! Deterministic problem streams for the four experiments.
//!
//! A stream is random-access: round `t` is rebuilt from substreams keyed by
//! `(seed, t, role)`, so any round can be regenerated independently (for
//! hindsight benchmarks, verification, or parallel evaluation) and is
//! bit-identical every time.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BoxSet, Constraints, Loss, ProblemSpec, RoundFunctions};
use crate::rng::{Role, Substream};

/// Round-indexed source of `(f_t, g_t)` for `t = 1..=T`.
pub trait ProblemStream: Sync {
    fn id(&self) -> &str;
    fn seed(&self) -> u64;
    fn spec(&self) -> &ProblemSpec;
    fn round(&self, t: usize) -> Result<RoundFunctions>;
}

fn check_round(t: usize, horizon: usize) -> Result<()> {
    if t == 0 || t > horizon {
        return Err(Error::StreamExhausted(t));
    }
    Ok(())
}

/// A stream backed by an explicit list of rounds.
#[derive(Clone, Debug)]
pub struct VecStream {
    id: String,
    spec: ProblemSpec,
    rounds: Vec<RoundFunctions>,
}

impl VecStream {
    pub fn new(id: &str, spec: ProblemSpec, rounds: Vec<RoundFunctions>) -> Result<Self> {
        if rounds.len() != spec.horizon {
            return Err(Error::dim("stream rounds", spec.horizon, rounds.len()));
        }
        Ok(VecStream {
            id: id.to_string(),
            spec,
            rounds,
        })
    }
}

impl ProblemStream for VecStream {
    fn id(&self) -> &str {
        &self.id
    }

    fn seed(&self) -> u64 {
        0
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn round(&self, t: usize) -> Result<RoundFunctions> {
        check_round(t, self.spec.horizon)?;
        Ok(self.rounds[t - 1].clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeastSquaresParams {
    pub rows: usize,
    pub dim: usize,
    pub n_constraints: usize,
    pub box_upper: f64,
    pub noise_std: f64,
}

impl Default for LeastSquaresParams {
    fn default() -> Self {
        LeastSquaresParams {
            rows: 4,
            dim: 10,
            n_constraints: 2,
            box_upper: 5.0,
            noise_std: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Drifting, regime-switching and sign-flipping target.
    Drifting,
    /// Round 1's target repeated every round (a stream with zero path length).
    Fixed,
    /// Fresh draws every round from round 1's law: no drift growth, no regime
    /// switches. The sign sequence is kept.
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaParams {
    pub theta_mode: ThetaMode,
    pub dim: usize,
    pub n_constraints: usize,
    /// `theta^1 ~ U(-t^e, t^e)`.
    pub drift_exponent: f64,
    /// Weight of the linear term `<theta, x>` in the quadratic loss.
    pub linear_weight: f64,
    pub a_low: f64,
    pub a_high: f64,
    pub b_high: f64,
}

impl Default for ThetaParams {
    fn default() -> Self {
        ThetaParams {
            theta_mode: ThetaMode::Drifting,
            dim: 2,
            n_constraints: 3,
            drift_exponent: 0.1,
            linear_weight: 20.0,
            a_low: 0.1,
            a_high: 0.5,
            b_high: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSource {
    Synthetic {
        base_low: f64,
        base_high: f64,
        amplitude: f64,
        noise: f64,
        period: f64,
    },
    Csv {
        path: PathBuf,
    },
}

impl Default for PriceSource {
    fn default() -> Self {
        PriceSource::Synthetic {
            base_low: 20.0,
            base_high: 60.0,
            amplitude: 0.3,
            noise: 0.1,
            period: 288.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobParams {
    pub regions: usize,
    pub centers_per_region: usize,
    pub capacity_upper: f64,
    pub arrival_mean: f64,
    pub service_coef: f64,
    pub service_rate: f64,
    pub prices: PriceSource,
}

impl Default for JobParams {
    fn default() -> Self {
        JobParams {
            regions: 10,
            centers_per_region: 10,
            capacity_upper: 1000.0,
            arrival_mean: 2500.0,
            service_coef: 4.0,
            service_rate: 4.0,
            prices: PriceSource::default(),
        }
    }
}

/// Generator selection plus its parameters (all defaulting to the experiment values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum GeneratorConfig {
    TvLeastSquares(LeastSquaresParams),
    QuadraticProg(ThetaParams),
    LinearProg(ThetaParams),
    JobScheduling(JobParams),
}

impl GeneratorConfig {
    pub fn id(&self) -> &'static str {
        match self {
            GeneratorConfig::TvLeastSquares(_) => "tv_least_squares",
            GeneratorConfig::QuadraticProg(_) => "quadratic_prog",
            GeneratorConfig::LinearProg(_) => "linear_prog",
            GeneratorConfig::JobScheduling(_) => "job_scheduling",
        }
    }

    pub fn build(&self, seed: u64, horizon: usize) -> Result<Box<dyn ProblemStream>> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(match self {
            GeneratorConfig::TvLeastSquares(p) => Box::new(gen_tv_least_squares(p, seed, horizon)?),
            GeneratorConfig::QuadraticProg(p) => Box::new(gen_quadratic_prog(p, seed, horizon)?),
            GeneratorConfig::LinearProg(p) => Box::new(gen_linear_prog(p, seed, horizon)?),
            GeneratorConfig::JobScheduling(p) => Box::new(gen_job_scheduling(p, seed, horizon)?),
        })
    }
}

fn uniform_matrix(s: &mut Substream, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| s.uniform(lo, hi)).collect())
        .collect()
}

fn max_over_rounds(
    horizon: usize,
    mut f: impl FnMut(usize) -> Result<f64>,
) -> Result<f64> {
    let mut best = 0.0f64;
    for t in 1..=horizon {
        best = best.max(f(t)?);
    }
    Ok(best)
}

/// Time-varying least squares with i.i.d. affine constraints.
#[derive(Clone, Debug)]
pub struct LeastSquaresStream {
    params: LeastSquaresParams,
    seed: u64,
    spec: ProblemSpec,
}

pub fn gen_tv_least_squares(
    params: &LeastSquaresParams,
    seed: u64,
    horizon: usize,
) -> Result<LeastSquaresStream> {
    if params.rows == 0 || params.dim == 0 || params.n_constraints == 0 {
        return Err(Error::Config("least-squares sizes must be positive".into()));
    }
    if !(params.box_upper > 0.0) {
        return Err(Error::Config("box_upper must be positive".into()));
    }
    let feasible = BoxSet::cube(params.dim, 0.0, params.box_upper)?;
    let mut stream = LeastSquaresStream {
        params: params.clone(),
        seed,
        spec: ProblemSpec {
            dim: params.dim,
            n_constraints: params.n_constraints,
            horizon,
            feasible: feasible.clone(),
            grad_bound: 1.0,
            // |a.x - b| < box_upper * dim for a in [0,1)^p, b in [0,1)
            constraint_bound: (params.box_upper * params.dim as f64).max(1.0),
            strong_convexity: 0.0,
        },
    };
    // targets carry unbounded Gaussian noise, so D is the exact maximum over the realized rounds
    stream.spec.grad_bound = max_over_rounds(horizon, |t| Ok(stream.round(t)?.loss.grad_bound(&feasible)))?;
    Ok(stream)
}

impl ProblemStream for LeastSquaresStream {
    fn id(&self) -> &str {
        "tv_least_squares"
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn round(&self, t: usize) -> Result<RoundFunctions> {
        check_round(t, self.spec.horizon)?;
        let p = &self.params;
        let tk = t as u64;
        let h = uniform_matrix(&mut Substream::new(self.seed, tk, Role::DesignMatrix), p.rows, p.dim, -1.0, 1.0);
        let mut noise = Substream::new(self.seed, tk, Role::Targets);
        let y = h
            .iter()
            .map(|row| row.iter().sum::<f64>() + p.noise_std * noise.standard_normal())
            .collect();
        let a = uniform_matrix(
            &mut Substream::new(self.seed, tk, Role::ConstraintMatrix),
            p.n_constraints,
            p.dim,
            0.0,
            1.0,
        );
        let mut bs = Substream::new(self.seed, tk, Role::ConstraintOffset);
        let b = (0..p.n_constraints).map(|_| bs.uniform(0.0, 1.0)).collect();
        Ok(RoundFunctions::new(
            Loss::LeastSquares { h, y },
            Constraints::Affine { a, b },
        ))
    }
}

/// Length of one block of the sign permutation.
pub const SIGN_BLOCK: usize = 5000;

/// Whether `theta^2` is drawn from `U(-1, 0)` at round `t`.
pub fn theta_regime_negative(t: usize) -> bool {
    (1..=1500).contains(&t) || (2000..=3500).contains(&t) || (4000..=5000).contains(&t)
}

/// Quadratic or linear program with a drifting target and fixed constraints.
#[derive(Clone, Debug)]
pub struct ThetaStream {
    id: &'static str,
    quadratic: bool,
    params: ThetaParams,
    seed: u64,
    spec: ProblemSpec,
    constraints: Constraints,
    /// `mu_t` values (1-based) for `t = 1..=T`.
    signs: Vec<usize>,
}

impl ThetaStream {
    fn new(id: &'static str, quadratic: bool, params: &ThetaParams, seed: u64, horizon: usize) -> Result<Self> {
        if params.dim == 0 || params.n_constraints == 0 {
            return Err(Error::Config("theta-stream sizes must be positive".into()));
        }
        if !(params.a_low >= 0.0 && params.a_low < params.a_high && params.b_high > 0.0) {
            return Err(Error::Config("need 0 <= a_low < a_high and b_high > 0".into()));
        }
        let feasible = BoxSet::cube(params.dim, 0.0, 1.0)?;
        let a = uniform_matrix(
            &mut Substream::new(seed, 0, Role::ConstraintMatrix),
            params.n_constraints,
            params.dim,
            params.a_low,
            params.a_high,
        );
        let mut bs = Substream::new(seed, 0, Role::ConstraintOffset);
        let b = (0..params.n_constraints).map(|_| bs.uniform(0.0, params.b_high)).collect();
        // the permutation is extended block by block past the first SIGN_BLOCK rounds
        let blocks = horizon.div_ceil(SIGN_BLOCK);
        let mut signs = Vec::with_capacity(blocks * SIGN_BLOCK);
        for k in 0..blocks {
            let perm = Substream::new(seed, k as u64, Role::SignPermutation).permutation(SIGN_BLOCK);
            signs.extend(perm.into_iter().map(|v| v + 1));
        }
        signs.truncate(horizon);
        // sup |a.x - b| over the support: a.x in [0, a_high * p), b in [0, b_high)
        let constraint_bound = (params.a_high * params.dim as f64).max(params.b_high);
        let mut stream = ThetaStream {
            id,
            quadratic,
            params: params.clone(),
            seed,
            spec: ProblemSpec {
                dim: params.dim,
                n_constraints: params.n_constraints,
                horizon,
                feasible: feasible.clone(),
                grad_bound: 1.0,
                constraint_bound,
                strong_convexity: if quadratic { 1.0 } else { 0.0 },
            },
            constraints: Constraints::Affine { a, b },
            signs,
        };
        stream.spec.grad_bound =
            max_over_rounds(horizon, |t| Ok(stream.round(t)?.loss.grad_bound(&feasible)))?;
        Ok(stream)
    }

    /// `theta_t = theta^1 + theta^2 + theta^3`.
    pub fn theta(&self, t: usize) -> Vec<f64> {
        let t = match self.params.theta_mode {
            ThetaMode::Drifting | ThetaMode::Stationary => t,
            ThetaMode::Fixed => 1,
        };
        let law_t = match self.params.theta_mode {
            ThetaMode::Stationary => 1,
            _ => t,
        };
        let p = self.params.dim;
        let span = (law_t as f64).powf(self.params.drift_exponent);
        let mut drift = Substream::new(self.seed, t as u64, Role::ThetaDrift);
        let mut regime = Substream::new(self.seed, t as u64, Role::ThetaRegime);
        let (lo, hi) = if theta_regime_negative(law_t) { (-1.0, 0.0) } else { (0.0, 1.0) };
        let sign = if self.signs[t - 1].is_multiple_of(2) { 1.0 } else { -1.0 };
        (0..p)
            .map(|_| drift.uniform(-span, span) + regime.uniform(lo, hi) + sign)
            .collect()
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }
}

impl ProblemStream for ThetaStream {
    fn id(&self) -> &str {
        self.id
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn round(&self, t: usize) -> Result<RoundFunctions> {
        check_round(t, self.spec.horizon)?;
        let theta = self.theta(t);
        let loss = if self.quadratic {
            // ||x - theta||^2 + w <theta, x>
            Loss::Isotropic {
                scale: 1.0,
                linear: theta.iter().map(|v| self.params.linear_weight * v).collect(),
                center: theta,
            }
        } else {
            Loss::linear(theta)
        };
        Ok(RoundFunctions::new(loss, self.constraints.clone()))
    }
}

pub fn gen_quadratic_prog(params: &ThetaParams, seed: u64, horizon: usize) -> Result<ThetaStream> {
    ThetaStream::new("quadratic_prog", true, params, seed, horizon)
}

pub fn gen_linear_prog(params: &ThetaParams, seed: u64, horizon: usize) -> Result<ThetaStream> {
    ThetaStream::new("linear_prog", false, params, seed, horizon)
}

/// Geo-distributed job scheduling: linear energy cost under a concave
/// service-capacity constraint.
#[derive(Clone, Debug)]
pub struct JobStream {
    params: JobParams,
    seed: u64,
    spec: ProblemSpec,
    region_base: Vec<f64>,
    /// Region prices per round when ingested from a file.
    table: Option<Vec<Vec<f64>>>,
}

pub fn gen_job_scheduling(params: &JobParams, seed: u64, horizon: usize) -> Result<JobStream> {
    if params.regions == 0 || params.centers_per_region == 0 {
        return Err(Error::Config("job scheduling needs at least one region and center".into()));
    }
    if !(params.capacity_upper > 0.0 && params.arrival_mean > 0.0) {
        return Err(Error::Config("capacity_upper and arrival_mean must be positive".into()));
    }
    if !(params.service_coef > 0.0 && params.service_rate > 0.0) {
        return Err(Error::Config("service parameters must be positive".into()));
    }
    let dim = params.regions * params.centers_per_region;
    let feasible = BoxSet::cube(dim, 0.0, params.capacity_upper)?;
    let (region_base, table) = match &params.prices {
        PriceSource::Synthetic {
            base_low, base_high, ..
        } => {
            if !(0.0 <= *base_low && base_low < base_high) {
                return Err(Error::Config("need 0 <= base_low < base_high".into()));
            }
            let mut s = Substream::new(seed, 0, Role::PriceBase);
            ((0..params.regions).map(|_| s.uniform(*base_low, *base_high)).collect(), None)
        }
        PriceSource::Csv { path } => {
            let table = read_price_csv(path, params.regions)?;
            if table.len() < horizon {
                return Err(Error::Config(format!(
                    "price file {} has {} slots, horizon needs {horizon}",
                    path.display(),
                    table.len()
                )));
            }
            (Vec::new(), Some(table))
        }
    };
    let mut stream = JobStream {
        params: params.clone(),
        seed,
        spec: ProblemSpec {
            dim,
            n_constraints: 1,
            horizon,
            feasible: feasible.clone(),
            grad_bound: 1.0,
            constraint_bound: 1.0,
            strong_convexity: 0.0,
        },
        region_base,
        table,
    };
    // arrivals are unbounded, so G and D are exact maxima over the realized rounds
    let mut g_bound = 0.0f64;
    let mut d_bound = 0.0f64;
    for t in 1..=horizon {
        let r = stream.round(t)?;
        g_bound = g_bound.max(r.constraints.bound(&feasible));
        d_bound = d_bound.max(r.loss.grad_bound(&feasible));
    }
    stream.spec.constraint_bound = g_bound;
    stream.spec.grad_bound = d_bound.max(f64::MIN_POSITIVE);
    Ok(stream)
}

impl JobStream {
    /// Price per region at round `t`.
    pub fn region_prices(&self, t: usize) -> Vec<f64> {
        if let Some(table) = &self.table {
            return table[t - 1].clone();
        }
        let PriceSource::Synthetic {
            amplitude,
            noise,
            period,
            ..
        } = &self.params.prices
        else {
            unreachable!("synthetic prices without a synthetic source")
        };
        let mut z = Substream::new(self.seed, t as u64, Role::PriceNoise);
        let wave = amplitude * (2.0 * PI * t as f64 / period).sin();
        self.region_base
            .iter()
            .map(|base| (base * (1.0 + wave + noise * z.standard_normal())).max(0.0))
            .collect()
    }

    pub fn arrivals(&self, t: usize) -> u64 {
        Substream::new(self.seed, t as u64, Role::Arrivals).poisson(self.params.arrival_mean)
    }
}

impl ProblemStream for JobStream {
    fn id(&self) -> &str {
        "job_scheduling"
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn round(&self, t: usize) -> Result<RoundFunctions> {
        check_round(t, self.spec.horizon)?;
        let per = self.params.centers_per_region;
        let c: Vec<f64> = self
            .region_prices(t)
            .into_iter()
            .flat_map(|price| std::iter::repeat_n(price, per))
            .collect();
        Ok(RoundFunctions::new(
            Loss::linear(c),
            Constraints::Capacity {
                demand: self.arrivals(t) as f64,
                coef: self.params.service_coef,
                rate: self.params.service_rate,
            },
        ))
    }
}

/// Reads `timestamp,region,price` rows into one price vector per timestamp
/// (timestamps in file order, regions in sorted name order).
pub fn read_price_csv(path: &Path, regions: usize) -> Result<Vec<Vec<f64>>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: display.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    let header = reader.headers().map_err(|e| Error::Parse {
        path: display.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    let expected = ["timestamp", "region", "price"];
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut slots: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut region_names: BTreeMap<String, ()> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let perr = |message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 3 {
            return Err(perr(format!("expected 3 fields, found {}", rec.len())));
        }
        let ts = rec[0].trim().to_string();
        let region = rec[1].trim().to_string();
        let price: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| perr(format!("invalid price {:?}", &rec[2])))?;
        if !price.is_finite() || price < 0.0 {
            return Err(perr(format!("price must be finite and nonnegative, got {price}")));
        }
        if ts.is_empty() || region.is_empty() {
            return Err(perr("empty timestamp or region".into()));
        }
        if !slots.contains_key(&ts) {
            order.push(ts.clone());
        }
        let slot = slots.entry(ts).or_default();
        if slot.insert(region.clone(), price).is_some() {
            return Err(perr(format!("duplicate price for region {region}")));
        }
        region_names.insert(region, ());
    }
    if region_names.len() != regions {
        return Err(Error::Parse {
            path: display,
            line: 0,
            message: format!("expected {regions} regions, found {}", region_names.len()),
        });
    }
    order
        .iter()
        .map(|ts| {
            let slot = &slots[ts];
            region_names
                .keys()
                .map(|r| {
                    slot.get(r).copied().ok_or_else(|| Error::Parse {
                        path: display.clone(),
                        line: 0,
                        message: format!("timestamp {ts} has no price for region {r}"),
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::dot;

    fn fd_check(stream: &dyn ProblemStream, rounds: &[usize], probe_seed: u64) {
        let set = &stream.spec().feasible;
        let mut s = Substream::new(probe_seed, 0, Role::Probe);
        for &t in rounds {
            let r = stream.round(t).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = set
                    .lower()
                    .iter()
                    .zip(set.upper())
                    .map(|(lo, hi)| s.uniform(lo + 0.01 * (hi - lo), hi - 0.01 * (hi - lo)))
                    .collect();
                let g = r.loss_gradient(&x);
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let h = 1e-5 * (set.upper()[0] - set.lower()[0]).max(1.0);
                let mut err = 0.0f64;
                for j in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (r.loss_value(&xp) - r.loss_value(&xm)) / (2.0 * h);
                    err = err.max((fd - g[j]).abs());
                }
                assert!(err / gn <= 1e-5, "round {t}: rel err {}", err / gn);
            }
        }
    }

    #[test]
    fn least_squares_gradient_and_feasible_origin() {
        let s = gen_tv_least_squares(&LeastSquaresParams::default(), 0, 50).unwrap();
        fd_check(&s, &[1, 17, 50], 1);
        for t in 1..=50 {
            let r = s.round(t).unwrap();
            assert!(r.constraint_values(&[0.0; 10]).iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn least_squares_golden_first_entry() {
        let s = gen_tv_least_squares(&LeastSquaresParams::default(), 0, 1).unwrap();
        let Loss::LeastSquares { h, .. } = s.round(1).unwrap().loss else {
            panic!("wrong loss kind")
        };
        assert_eq!(h[0][0], GOLDEN_H00);
    }

    const GOLDEN_H00: f64 = -0.7197150722644703;

    #[test]
    fn quadratic_strong_convexity_identity() {
        let s = gen_quadratic_prog(&ThetaParams::default(), 3, 100).unwrap();
        let mut p = Substream::new(5, 0, Role::Probe);
        for t in [1, 50, 100] {
            let r = s.round(t).unwrap();
            for _ in 0..50 {
                let x = [p.unit(), p.unit()];
                let y = [p.unit(), p.unit()];
                let g = r.loss_gradient(&x);
                let d = [y[0] - x[0], y[1] - x[1]];
                let lhs = r.loss_value(&y) - r.loss_value(&x) - dot(&g, &d);
                assert!((lhs - dot(&d, &d)).abs() < 1e-12);
            }
        }
        fd_check(&s, &[1, 77], 2);
    }

    #[test]
    fn theta_constraints_are_fixed() {
        let s = gen_quadratic_prog(&ThetaParams::default(), 1, 20).unwrap();
        let first = s.round(1).unwrap().constraints;
        for t in 2..=20 {
            assert_eq!(s.round(t).unwrap().constraints, first);
        }
        assert!(first.values(&[0.0, 0.0]).iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn regime_flips_at_interval_edges() {
        let flips: Vec<usize> = (2..=5000)
            .filter(|&t| theta_regime_negative(t) != theta_regime_negative(t - 1))
            .collect();
        assert_eq!(flips, vec![1501, 2000, 3501, 4000]);
    }

    #[test]
    fn sign_sequence_is_a_permutation_and_extends() {
        let s = gen_linear_prog(&ThetaParams::default(), 0, 5000).unwrap();
        let mut v = s.signs.clone();
        v.sort_unstable();
        assert!(v.iter().enumerate().all(|(i, m)| i + 1 == *m));
        let long = gen_linear_prog(&ThetaParams::default(), 0, 7000).unwrap();
        assert_eq!(&long.signs[..5000], &s.signs[..]);
        assert_eq!(long.signs.len(), 7000);
        assert_eq!(s.round(123).unwrap(), long.round(123).unwrap());
    }

    #[test]
    fn fixed_theta_repeats_round_one() {
        let p = ThetaParams {
            theta_mode: ThetaMode::Fixed,
            ..ThetaParams::default()
        };
        let s = gen_quadratic_prog(&p, 4, 30).unwrap();
        let r1 = s.round(1).unwrap();
        assert!((2..=30).all(|t| s.round(t).unwrap() == r1));
    }

    #[test]
    fn stationary_theta_keeps_round_one_law() {
        let p = ThetaParams {
            theta_mode: ThetaMode::Stationary,
            ..ThetaParams::default()
        };
        let s = gen_quadratic_prog(&p, 2, 6000).unwrap();
        let drifting = gen_quadratic_prog(&ThetaParams::default(), 2, 6000).unwrap();
        assert_eq!(s.theta(1), drifting.theta(1));
        for t in [1700, 3000, 5999] {
            let sign = if s.signs[t - 1].is_multiple_of(2) { 1.0 } else { -1.0 };
            // drift in (-1, 1) plus the negative regime in (-1, 0)
            assert!(s.theta(t).iter().all(|v| (-2.0..1.0).contains(&(v - sign))));
        }
        assert_ne!(s.theta(10), s.theta(11));
    }

    #[test]
    fn job_constraint_is_convex_and_capacity_matches() {
        let s = gen_job_scheduling(&JobParams::default(), 0, 50).unwrap();
        let full = vec![1000.0; 100];
        let cap: f64 = 100.0 * 4.0 * 4001f64.ln();
        assert!((cap - 3317.6).abs() < 0.2);
        let mut p = Substream::new(9, 0, Role::Probe);
        for t in 1..=50 {
            let r = s.round(t).unwrap();
            let lam = s.arrivals(t) as f64;
            assert!((r.constraint_values(&full)[0] - (lam - cap)).abs() < 1e-9);
            assert!(lam < cap);
            let Loss::Isotropic { linear, .. } = &r.loss else {
                panic!("linear loss expected")
            };
            assert!(linear.iter().all(|c| *c >= 0.0));
            let x: Vec<f64> = (0..100).map(|_| p.uniform(0.0, 1000.0)).collect();
            let y: Vec<f64> = (0..100).map(|_| p.uniform(0.0, 1000.0)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let g = |v: &[f64]| r.constraints.value(0, v);
            assert!(g(&mid) <= 0.5 * (g(&x) + g(&y)) + 1e-9);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let cfg = GeneratorConfig::TvLeastSquares(LeastSquaresParams::default());
        let a = cfg.build(7, 20).unwrap();
        let b = cfg.build(7, 20).unwrap();
        let mut p = Substream::new(1, 0, Role::Probe);
        for t in 1..=20 {
            let (ra, rb) = (a.round(t).unwrap(), b.round(t).unwrap());
            for _ in 0..100 {
                let x: Vec<f64> = (0..10).map(|_| p.uniform(0.0, 5.0)).collect();
                assert_eq!(ra.loss_value(&x).to_bits(), rb.loss_value(&x).to_bits());
                assert_eq!(ra.constraint_values(&x), rb.constraint_values(&x));
            }
        }
        assert!(matches!(a.round(21), Err(Error::StreamExhausted(21))));
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg: GeneratorConfig =
            serde_json::from_str(r#"{"id":"quadratic_prog","theta_mode":"fixed"}"#).unwrap();
        assert!(matches!(
            cfg,
            GeneratorConfig::QuadraticProg(ThetaParams {
                theta_mode: ThetaMode::Fixed,
                ..
            })
        ));
        assert!(serde_json::from_str::<GeneratorConfig>(r#"{"id":"linear_prog","bogus":1}"#).is_err());
        let round: GeneratorConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn price_csv_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("p.csv");
        std::fs::write(&good, "timestamp,region,price\n0,b,2.5\n0,a,1.0\n5,a,3\n5,b,4\n").unwrap();
        let table = read_price_csv(&good, 2).unwrap();
        assert_eq!(table, vec![vec![1.0, 2.5], vec![3.0, 4.0]]);
        let bad = dir.path().join("q.csv");
        std::fs::write(&bad, "timestamp,region,price\n0,a,1.0\n0,b,oops\n").unwrap();
        match read_price_csv(&bad, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
