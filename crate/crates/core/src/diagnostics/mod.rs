//! Sample-based checks of the entropy machinery: relative entropy
//! estimation, the transport inequality for Lipschitz observables,
//! log-partition derivative identities, entropy decay along the dynamics
//! and empirical Poincare constants.

pub mod knn;

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, ScalarFn, VectorFn};
use crate::noise::{generate_noise, Channel, StreamId};
use crate::quadrature::QuadGrid;
use crate::sde::{simulate_coupled_replica, simulate_frozen_replica, simulate_frozen_with, SimConfig};
use crate::stats::{compensated_sum, map_replicas, mean_and_se, sample_variance, weighted_linear_fit};

/// Nearest-neighbour order used by the kNN estimator.
pub const KNN_K: usize = 5;
/// Largest dimension accepted by the histogram estimator.
pub const MAX_HISTOGRAM_DIM: usize = 2;
/// Estimates below this are reported but flagged as estimator noise.
pub const NEGATIVE_ENTROPY_TOLERANCE: f64 = -0.05;

const SUBCELLS_1D: usize = 8;
const SUBCELLS_2D: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    dim: usize,
    weights: Option<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !samples.len().is_multiple_of(dim) {
            return Err(invalid("samples", "length is not a multiple of the dimension"));
        }
        if samples.len() / dim < 2 {
            return Err(invalid("samples", "need at least 2 points"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("samples", "must be finite"));
        }
        Ok(Self { samples, dim, weights: None })
    }

    /// Attaches weights, which must be nonnegative and sum to 1 within 1e-12.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(invalid("weights", "one weight per sample"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights", "must be finite and nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("sum to {total}, not 1")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    /// Mean of `f` and its standard error.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let values: Vec<f64> = (0..self.len()).map(|i| f(self.point(i))).collect();
        match &self.weights {
            None => mean_and_se(&values),
            Some(w) => {
                let mean = compensated_sum(values.iter().zip(w).map(|(v, w)| v * w));
                let var = compensated_sum(values.iter().zip(w).map(|(v, w)| w * w * (v - mean).powi(2)));
                (mean, var.sqrt())
            }
        }
    }

    fn coordinate_sd(&self, a: usize) -> f64 {
        let c: Vec<f64> = (0..self.len()).map(|i| self.point(i)[a]).collect();
        sample_variance(&c).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    Histogram,
    Knn,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Nats.
    pub value: f64,
    pub method: EntropyMethod,
    pub stderr: f64,
    pub note: String,
    /// Set when the estimate is negative, i.e. dominated by estimator noise.
    pub negative: bool,
}

impl EntropyEstimate {
    fn new(value: f64, method: EntropyMethod, stderr: f64, mut note: String) -> Self {
        let negative = value < 0.0;
        if value < NEGATIVE_ENTROPY_TOLERANCE {
            note.push_str("; below the noise tolerance");
        }
        Self { value, method, stderr, note, negative }
    }
}

/// `H(N(m1, s1^2) | N(m0, s0^2))`.
pub fn gaussian_relative_entropy(m1: f64, s1: f64, m0: f64, s0: f64) -> Result<EntropyEstimate> {
    if !(s1 > 0.0 && s0 > 0.0) {
        return Err(invalid("s", "standard deviations must be positive"));
    }
    let r = s1 / s0;
    let value = 0.5 * (r * r - 1.0 - 2.0 * r.ln() + ((m1 - m0) / s0).powi(2));
    Ok(EntropyEstimate::new(value, EntropyMethod::ClosedForm, 0.0, "Gaussian closed form".into()))
}

/// Estimate of `H(p | q)` for samples `p` and a normalized density `q`.
pub fn relative_entropy(p: &EmpiricalMeasure, q_density: &dyn Fn(&[f64]) -> f64, method: EntropyMethod) -> Result<EntropyEstimate> {
    match method {
        EntropyMethod::Histogram => histogram_entropy(p, q_density),
        EntropyMethod::Knn => knn_entropy(p, q_density),
        EntropyMethod::ClosedForm => Err(invalid("method", "closed form needs parameters; see gaussian_relative_entropy")),
    }
}

/// Histogram in dimension 1-2, kNN up to dimension 4.
pub fn default_method(dim: usize) -> EntropyMethod {
    if dim <= MAX_HISTOGRAM_DIM {
        EntropyMethod::Histogram
    } else {
        EntropyMethod::Knn
    }
}

/// Rectangular bins over the sample range with Scott-rule widths.
struct Binning {
    lo: Vec<f64>,
    width: Vec<f64>,
    bins: Vec<usize>,
}

impl Binning {
    fn scott(points: &[&EmpiricalMeasure]) -> Result<Self> {
        let first = points[0];
        let d = first.dim();
        if d > MAX_HISTOGRAM_DIM {
            return Err(Error::DimensionTooHigh { dim: d, max: MAX_HISTOGRAM_DIM });
        }
        let n = first.len() as f64;
        let mut lo = Vec::with_capacity(d);
        let mut width = Vec::with_capacity(d);
        let mut bins = Vec::with_capacity(d);
        for a in 0..d {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for m in points {
                for i in 0..m.len() {
                    min = min.min(m.point(i)[a]);
                    max = max.max(m.point(i)[a]);
                }
            }
            let mut h = 3.49 * first.coordinate_sd(a) * n.powf(-1.0 / (d as f64 + 2.0));
            if !(h > 0.0) {
                h = 1.0;
            }
            let count = ((max - min) / h).ceil().max(1.0) as usize;
            let w = if max > min { (max - min) / count as f64 } else { h };
            lo.push(if max > min { min } else { min - 0.5 * h });
            width.push(w);
            bins.push(count);
        }
        Ok(Self { lo, width, bins })
    }

    fn cells(&self) -> usize {
        self.bins.iter().product()
    }

    fn index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..self.lo.len() {
            let k = (((x[a] - self.lo[a]) / self.width[a]).floor().max(0.0) as usize).min(self.bins[a] - 1);
            idx += k * stride;
            stride *= self.bins[a];
        }
        idx
    }

    fn corner(&self, cell: usize) -> Vec<f64> {
        let mut rest = cell;
        (0..self.lo.len())
            .map(|a| {
                let k = rest % self.bins[a];
                rest /= self.bins[a];
                self.lo[a] + k as f64 * self.width[a]
            })
            .collect()
    }

    /// Mass of a normalized density in `cell` by a midpoint sub-grid.
    fn density_mass(&self, cell: usize, q: &dyn Fn(&[f64]) -> f64) -> f64 {
        let corner = self.corner(cell);
        let d = corner.len();
        let s = if d == 1 { SUBCELLS_1D } else { SUBCELLS_2D };
        let vol: f64 = self.width.iter().product();
        let mut acc = 0.0;
        let mut p = vec![0.0; d];
        for j in 0..s.pow(d as u32) {
            let mut r = j;
            for a in 0..d {
                p[a] = corner[a] + (((r % s) as f64) + 0.5) / s as f64 * self.width[a];
                r /= s;
            }
            acc += q(&p);
        }
        acc * vol / s.pow(d as u32) as f64
    }

    fn masses(&self, m: &EmpiricalMeasure) -> (Vec<f64>, Vec<usize>) {
        let mut mass = vec![0.0; self.cells()];
        let idx: Vec<usize> = (0..m.len()).map(|i| self.index(m.point(i))).collect();
        for (i, &c) in idx.iter().enumerate() {
            mass[c] += m.weight(i);
        }
        (mass, idx)
    }
}

/// Plug-in SE from per-sample log ratios.
fn log_ratio_se(p: &EmpiricalMeasure, values: &[f64], mean: f64) -> f64 {
    match p.weights() {
        None => mean_and_se(values).1,
        Some(w) => compensated_sum(values.iter().zip(w).map(|(v, w)| w * w * (v - mean).powi(2))).sqrt(),
    }
}

fn histogram_entropy(p: &EmpiricalMeasure, q: &dyn Fn(&[f64]) -> f64) -> Result<EntropyEstimate> {
    let bins = Binning::scott(&[p])?;
    let (mass, idx) = bins.masses(p);
    let mut log_ratio = vec![0.0; mass.len()];
    let mut acc = crate::stats::NeumaierSum::new();
    let mut occupied = 0usize;
    for (c, &pm) in mass.iter().enumerate() {
        if pm > 0.0 {
            let qm = bins.density_mass(c, q);
            if !(qm > 0.0) || !qm.is_finite() {
                return Err(Error::ZeroDensityCell);
            }
            log_ratio[c] = (pm / qm).ln();
            acc.add(pm * log_ratio[c]);
            occupied += 1;
        }
    }
    let value = acc.value();
    let per_sample: Vec<f64> = idx.iter().map(|&c| log_ratio[c]).collect();
    let se = log_ratio_se(p, &per_sample, value);
    let bias = (occupied.saturating_sub(1)) as f64 / (2.0 * p.len() as f64);
    let note = format!("histogram, {} Scott bins ({occupied} occupied); plug-in bias about +{bias:.1e}", bins.cells());
    Ok(EntropyEstimate::new(value, EntropyMethod::Histogram, se, note))
}

fn knn_entropy(p: &EmpiricalMeasure, q: &dyn Fn(&[f64]) -> f64) -> Result<EntropyEstimate> {
    if p.weights().is_some() {
        return Err(invalid("p", "the kNN estimator needs unweighted samples"));
    }
    let d = p.dim();
    let n = p.len();
    let r = knn::kth_neighbour_distances(p.samples(), d, KNN_K)?;
    let log_unit_ball = 0.5 * d as f64 * std::f64::consts::PI.ln() - ln_gamma(0.5 * d as f64 + 1.0);
    let mut terms = Vec::with_capacity(n);
    for (i, ri) in r.iter().enumerate() {
        let qi = q(p.point(i));
        if !(qi > 0.0) || !qi.is_finite() {
            return Err(Error::ZeroDensityCell);
        }
        if !(*ri > 0.0) {
            return Err(invalid("samples", "duplicate points make the kNN radius vanish"));
        }
        terms.push(-(d as f64) * ri.ln() - qi.ln());
    }
    let (mean, se) = mean_and_se(&terms);
    let value = mean - digamma(n as f64) + digamma(KNN_K as f64) - log_unit_ball;
    Ok(EntropyEstimate::new(value, EntropyMethod::Knn, se, format!("Kozachenko-Leonenko, k = {KNN_K}, n = {n}")))
}

/// Two-sample kNN estimate of `H(p | q)` (dimension up to 4):
/// `d/n sum log(nu_k / rho_k) + log(m / (n - 1))`, with `rho_k` the distance
/// to the `k`-th other `p` sample and `nu_k` to the `k`-th `q` sample.
pub fn relative_entropy_two_sample(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<EntropyEstimate> {
    if p.dim() != q.dim() {
        return Err(invalid("q", "dimension differs from p"));
    }
    if p.weights().is_some() || q.weights().is_some() {
        return Err(invalid("p", "the kNN estimator needs unweighted samples"));
    }
    let d = p.dim();
    let (n, m) = (p.len(), q.len());
    let rho = knn::kth_neighbour_distances(p.samples(), d, KNN_K)?;
    let nu = knn::kth_neighbour_distances_to(q.samples(), p.samples(), d, KNN_K)?;
    if rho.iter().chain(&nu).any(|r| !(*r > 0.0)) {
        return Err(invalid("samples", "duplicate points make a kNN radius vanish"));
    }
    let terms: Vec<f64> = rho.iter().zip(&nu).map(|(r, v)| d as f64 * (v / r).ln()).collect();
    let (mean, se) = mean_and_se(&terms);
    let value = mean + (m as f64 / (n as f64 - 1.0)).ln();
    Ok(EntropyEstimate::new(value, EntropyMethod::Knn, se, format!("two-sample kNN, k = {KNN_K}, n = {n}, m = {m}")))
}

/// Reference measure for [`t2_check`].
pub enum Reference<'a> {
    /// Normalized density; its expectations use the quadrature grid.
    Density { density: &'a dyn Fn(&[f64]) -> f64, grid: &'a QuadGrid },
    Samples(&'a EmpiricalMeasure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2Check {
    /// Squared mean gap `|E_mu f - E_rho f|^2`.
    pub lhs: f64,
    /// `Lip(f)^2 Lambda_X c_L H(rho | mu)`.
    pub rhs: f64,
    pub lhs_se: f64,
    pub rhs_se: f64,
    pub entropy: EntropyEstimate,
    pub pass: bool,
}

/// Transport check `|E_mu f - E_rho f|^2 <= Lip(f)^2 Lambda_X c_L H(rho | mu)`,
/// with `3 * combined SE` of one-sided slack.
pub fn t2_check(
    f: &dyn Fn(&[f64]) -> f64,
    lip_f: f64,
    rho: &EmpiricalMeasure,
    mu: Reference<'_>,
    c_l: f64,
    big_lambda_x: f64,
) -> Result<T2Check> {
    if !(lip_f >= 0.0 && c_l > 0.0 && big_lambda_x > 0.0) {
        return Err(invalid("t2_check", "Lip(f) must be nonnegative, c_L and Lambda_X positive"));
    }
    let (rho_mean, rho_se) = rho.expect(f);
    let (mu_mean, mu_se, entropy) = match mu {
        Reference::Density { density, grid } => {
            let rule = grid.rule(density)?;
            (rule.expect(f), 0.0, relative_entropy(rho, density, default_method(rho.dim()))?)
        }
        Reference::Samples(m) => {
            let (mean, se) = m.expect(f);
            (mean, se, relative_entropy_two_sample(rho, m)?)
        }
    };
    let gap = mu_mean - rho_mean;
    let gap_se = (rho_se * rho_se + mu_se * mu_se).sqrt();
    let lhs = gap * gap;
    let lhs_se = 2.0 * gap.abs() * gap_se + gap_se * gap_se;
    let factor = lip_f * lip_f * big_lambda_x * c_l;
    let rhs = factor * entropy.value;
    let rhs_se = factor * entropy.stderr;
    let pass = lhs <= rhs + 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    Ok(T2Check { lhs, rhs, lhs_se, rhs_se, entropy, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPartitionCheck {
    /// Central difference of `log Z`.
    pub lhs1: f64,
    /// `E[d_y log mu]`.
    pub rhs1: f64,
    /// Second central difference of `log Z`.
    pub lhs2: f64,
    /// `E[d_yy log mu] + Var(d_y log mu)`.
    pub rhs2: f64,
    /// Largest change of `lhs1`, `lhs2` when the step is halved.
    pub richardson_gap: f64,
    /// `10 h^2 scale`.
    pub richardson_tol: f64,
    /// `max(1e-4, richardson_tol)`.
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `d log Z = E[d log mu]` and `d^2 log Z = E[d^2 log mu] + Var(d log mu)`
/// in the direction of slow coordinate `coord`, for an unnormalized
/// log-density `log_mu(x, y)`.
pub fn log_partition_identity(
    log_mu: &dyn Fn(&[f64], &[f64]) -> f64,
    y: &[f64],
    coord: usize,
    h: f64,
    grid: &QuadGrid,
) -> Result<LogPartitionCheck> {
    if coord >= y.len() {
        return Err(invalid("coord", "outside the slow dimension"));
    }
    if !(h > 0.0) {
        return Err(invalid("h_step", "must be positive"));
    }
    let shifted = |s: f64| {
        let mut v = y.to_vec();
        v[coord] += s;
        v
    };
    let log_z = |s: f64| {
        let ys = shifted(s);
        grid.log_integral(|x| log_mu(x, &ys))
    };
    let z0 = log_z(0.0);
    let differences = |step: f64| {
        let (zp, zm) = (log_z(step), log_z(-step));
        ((zp - zm) / (2.0 * step), (zp - 2.0 * z0 + zm) / (step * step))
    };
    let (lhs1, lhs2) = differences(h);
    let (half1, half2) = differences(0.5 * h);

    let rule = grid.rule_from_log(|x| log_mu(x, y))?;
    let (yp, ym) = (shifted(h), shifted(-h));
    let d1 = |x: &[f64]| (log_mu(x, &yp) - log_mu(x, &ym)) / (2.0 * h);
    let d2 = |x: &[f64]| (log_mu(x, &yp) - 2.0 * log_mu(x, y) + log_mu(x, &ym)) / (h * h);
    let e1 = rule.expect(d1);
    let e11 = rule.expect(|x| d1(x).powi(2));
    let rhs1 = e1;
    let rhs2 = rule.expect(d2) + e11 - e1 * e1;

    let scale = 1.0 + lhs1.abs().max(lhs2.abs());
    let richardson_gap = (lhs1 - half1).abs().max((lhs2 - half2).abs());
    let richardson_tol = 10.0 * h * h * scale;
    let tolerance = richardson_tol.max(1e-4);
    let pass = (lhs1 - rhs1).abs() <= tolerance && (lhs2 - rhs2).abs() <= tolerance && richardson_gap <= richardson_tol;
    Ok(LogPartitionCheck { lhs1, rhs1, lhs2, rhs2, richardson_gap, richardson_tol, tolerance, pass })
}

pub type MuDensity = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type FastInitializer = Arc<dyn Fn(u64, &mut [f64]) + Send + Sync>;

/// Which ensemble [`entropy_decay_curve`] evolves.
#[derive(Clone)]
pub enum DecayMode {
    /// Frozen fast process at `y`. `init(replica, x0)` draws the initial
    /// state; without it the configuration's initial law is used.
    Frozen { y: Vec<f64>, init: Option<FastInitializer> },
    /// Coupled system; the estimate is `E_Y H(rho^{t,Y} | mu^Y)` from the
    /// joint samples.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurvePoint {
    pub t: f64,
    pub h_hat: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub points: Vec<EntropyCurvePoint>,
    /// Exponential decay rate fitted to the initial transient (frozen mode).
    pub fitted_rate: Option<f64>,
    pub note: String,
}

impl EntropyCurve {
    /// `t,H_hat,se_note` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,H_hat,se_note\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{:.12e},{:.6e}", p.t, p.h_hat, p.se);
        }
        s
    }

    pub fn max_h(&self) -> f64 {
        self.points.iter().map(|p| p.h_hat).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Points kept for the rate fit: the initial run with `H` above this.
const RATE_FIT_FLOOR: f64 = 1e-2;

/// Evolves an ensemble and estimates the entropy relative to `mu^y` at each
/// checkpoint. `mu_density(x, y)` is the normalized invariant density.
pub fn entropy_decay_curve(
    model: &ModelSpec,
    mode: &DecayMode,
    mu_density: &MuDensity,
    ensemble: usize,
    checkpoints: &[f64],
    cfg: &SimConfig,
) -> Result<EntropyCurve> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| !(w[1] > w[0])) || checkpoints[0] < 0.0 {
        return Err(invalid("checkpoints", "must be nonnegative and strictly increasing"));
    }
    let mut run = cfg.clone();
    run.t_final = *checkpoints.last().expect("nonempty");
    let indices: Vec<usize> = checkpoints
        .iter()
        .map(|t| {
            let k = (t / cfg.dt).round();
            if (k * cfg.dt - t).abs() > 1e-9 * t.max(1.0) {
                Err(invalid("checkpoints", "must lie on the slow grid"))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;
    if run.t_final == 0.0 {
        run.t_final = cfg.dt;
    }
    let (n, m) = (model.n, model.m);
    let snapshots = map_replicas(ensemble, |r| {
        let traj = match mode {
            DecayMode::Frozen { y, init: Some(init) } => {
                let mut x0 = vec![0.0; n];
                init(r, &mut x0);
                let steps = run.steps()?;
                let bx = generate_noise(run.seed, StreamId::new(r, Channel::BX), steps * run.substeps, run.fast_step(), n);
                simulate_frozen_with(model, y, &run, &x0, &bx)?
            }
            DecayMode::Frozen { y, init: None } => simulate_frozen_replica(model, y, &run, r)?,
            DecayMode::Coupled => simulate_coupled_replica(model, &run, r)?,
        };
        let mut out = Vec::with_capacity(indices.len() * (n + m));
        for &k in &indices {
            out.extend_from_slice(traj.x_at(k));
            if matches!(mode, DecayMode::Coupled) {
                out.extend_from_slice(traj.y_at(k));
            }
        }
        Ok(out)
    })?;
    let width = if matches!(mode, DecayMode::Coupled) { n + m } else { n };
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut note = String::new();
    for (c, &t) in checkpoints.iter().enumerate() {
        let samples: Vec<f64> = snapshots.iter().flat_map(|s| s[c * width..(c + 1) * width].iter().copied()).collect();
        let est = match mode {
            DecayMode::Frozen { y, .. } => {
                let p = EmpiricalMeasure::new(samples, n)?;
                let yv = y.clone();
                let q = |x: &[f64]| mu_density(x, &yv);
                relative_entropy(&p, &q, default_method(n))?
            }
            DecayMode::Coupled => conditional_relative_entropy(&samples, n, m, mu_density)?,
        };
        if c == 0 {
            note = est.note.clone();
        }
        points.push(EntropyCurvePoint { t, h_hat: est.value, se: est.stderr });
    }
    let fitted_rate = match mode {
        DecayMode::Frozen { .. } => fit_decay_rate(&points),
        DecayMode::Coupled => None,
    };
    Ok(EntropyCurve { points, fitted_rate, note })
}

/// Least-squares rate of `log H` over the leading points with `H` above the floor.
fn fit_decay_rate(points: &[EntropyCurvePoint]) -> Option<f64> {
    let lead: Vec<&EntropyCurvePoint> = points.iter().take_while(|p| p.h_hat > RATE_FIT_FLOOR).collect();
    if lead.len() < 2 {
        return None;
    }
    let t: Vec<f64> = lead.iter().map(|p| p.t).collect();
    let l: Vec<f64> = lead.iter().map(|p| p.h_hat.ln()).collect();
    let (slope, _) = weighted_linear_fit(&t, &l, &vec![1.0; t.len()]);
    Some(-slope)
}

/// Estimate of `E_Y H(law(X | Y) | mu^Y)` from joint samples `(x, y)` with
/// `n = m = 1`: a two-dimensional histogram whose reference cell mass is the
/// empirical `Y`-bin mass times the `y`-averaged `mu^y` mass of the `x`-bin.
pub fn conditional_relative_entropy(samples: &[f64], n: usize, m: usize, mu_density: &MuDensity) -> Result<EntropyEstimate> {
    if n + m > MAX_HISTOGRAM_DIM {
        return Err(Error::DimensionTooHigh { dim: n + m, max: MAX_HISTOGRAM_DIM });
    }
    let joint = EmpiricalMeasure::new(samples.to_vec(), n + m)?;
    let bins = Binning::scott(&[&joint])?;
    let (mass, idx) = bins.masses(&joint);
    let (bx, by) = (bins.bins[0], bins.bins[1]);
    let mut y_mass = vec![0.0; by];
    for (c, pm) in mass.iter().enumerate() {
        y_mass[c / bx] += pm;
    }
    let (wx, wy) = (bins.width[0], bins.width[1]);
    let mut log_ratio = vec![0.0; mass.len()];
    let mut acc = crate::stats::NeumaierSum::new();
    for (c, &pm) in mass.iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        // Mass of the x-bin under mu^y, averaged over y in the y-bin.
        let q = |p: &[f64]| mu_density(&p[..1], &p[1..]);
        let ref_mass = bins.density_mass(c, &q) / wy * y_mass[c / bx];
        if !(ref_mass > 0.0) || !ref_mass.is_finite() {
            return Err(Error::ZeroDensityCell);
        }
        log_ratio[c] = (pm / ref_mass).ln();
        acc.add(pm * log_ratio[c]);
    }
    let _ = wx;
    let value = acc.value();
    let per_sample: Vec<f64> = idx.iter().map(|&c| log_ratio[c]).collect();
    let se = log_ratio_se(&joint, &per_sample, value);
    Ok(EntropyEstimate::new(
        value,
        EntropyMethod::Histogram,
        se,
        format!("conditional histogram, {bx} x {by} Scott bins"),
    ))
}

/// A test function with its gradient for the Rayleigh quotient.
#[derive(Clone)]
pub struct Probe {
    pub value: ScalarFn,
    pub grad: VectorFn,
}

impl Probe {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), grad: Arc::new(grad) }
    }

    /// `f(x) = x_i`.
    pub fn coordinate(i: usize) -> Self {
        Self::new(
            move |x| x[i],
            move |_, g| {
                g.fill(0.0);
                g[i] = 1.0;
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareEstimate {
    /// Largest Rayleigh quotient over the probes; a lower bound on `c_P`.
    pub c_p_lower: f64,
    pub ratios: Vec<f64>,
    pub samples: usize,
}

/// Lower bound on the Poincare constant of `mu^y`: the largest
/// `Var(f) / E|sigma_X^T grad f|^2` over the probes, with both moments taken
/// along one long frozen run after `burn_in`.
pub fn estimate_poincare(model: &ModelSpec, y: &[f64], probes: &[Probe], cfg: &SimConfig, burn_in: f64) -> Result<PoincareEstimate> {
    if probes.is_empty() {
        return Err(invalid("probes", "need at least one probe"));
    }
    if !(burn_in >= 0.0 && burn_in < cfg.t_final) {
        return Err(invalid("burn_in", "must lie in [0, T)"));
    }
    let traj = simulate_frozen_replica(model, y, cfg, 0)?;
    let n = model.n;
    let start = traj.times.iter().position(|t| *t >= burn_in).unwrap_or(0);
    let mut sig = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    let mut ratios = Vec::with_capacity(probes.len());
    for (index, probe) in probes.iter().enumerate() {
        let mut values = Vec::with_capacity(traj.len() - start);
        let mut energy = Vec::with_capacity(traj.len() - start);
        for k in start..traj.len() {
            let x = traj.x_at(k);
            values.push((probe.value)(x));
            (probe.grad)(x, &mut g);
            (model.sigma_x)(x, y, &mut sig);
            // |sigma^T g|^2
            let mut e = 0.0;
            for j in 0..n {
                let c: f64 = (0..n).map(|i| sig[i * n + j] * g[i]).sum();
                e += c * c;
            }
            energy.push(e);
        }
        let var = sample_variance(&values);
        let (mean, _) = mean_and_se(&values);
        let (dirichlet, _) = mean_and_se(&energy);
        if !(var > 1e-24 * mean * mean) || !(dirichlet > 0.0) {
            return Err(Error::DegenerateProbe { index });
        }
        ratios.push(var / dirichlet);
    }
    let c_p_lower = ratios.iter().copied().fold(0.0, f64::max);
    Ok(PoincareEstimate { c_p_lower, ratios, samples: traj.len() - start })
}
