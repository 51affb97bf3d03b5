//! Averaged drift `bbar(y) = int b_Y(x, y) mu^y(dx)` and the averaged process.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{BoxDomain, Drift, GradientModelParams, ModelSpec, SlowDiffusion, TamdModelParams};
use crate::noise::{auxiliary_rng, generate_noise, Channel, NoisePath, StreamId};
use crate::quadrature::QuadGrid;
use crate::sde::{apply_slow_increment, check_finite, simulate_frozen_with, SeedRecord, SimConfig, Trajectory};
use crate::stats::{batch_means, NeumaierSum};

pub type DriftEvaluator = Arc<dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Quadrature,
    ErgodicMc,
}

/// An evaluator of `bbar` together with how it was obtained.
#[derive(Clone)]
pub struct AveragedDrift {
    pub m: usize,
    pub provenance: Provenance,
    evaluator: DriftEvaluator,
    /// Largest per-call standard error seen on the probe set (ergodic only).
    pub error_estimate: Option<f64>,
    pub lip_estimate: Option<f64>,
}

impl fmt::Debug for AveragedDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AveragedDrift")
            .field("m", &self.m)
            .field("provenance", &self.provenance)
            .field("error_estimate", &self.error_estimate)
            .field("lip_estimate", &self.lip_estimate)
            .finish()
    }
}

impl AveragedDrift {
    pub fn new(m: usize, provenance: Provenance, evaluator: DriftEvaluator) -> Self {
        Self { m, provenance, evaluator, error_estimate: None, lip_estimate: None }
    }

    /// Closed-form drift.
    pub fn analytic(m: usize, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self::new(
            m,
            Provenance::Analytic,
            Arc::new(move |y, out| {
                f(y, out);
                Ok(())
            }),
        )
    }

    /// `bbar = b_Y(., y)` for slow drifts that do not depend on `x`.
    pub fn from_x_independent(model: &ModelSpec) -> Self {
        let b = model.b_y.clone();
        let x = vec![0.0; model.n];
        Self::analytic(model.m, move |y, out| b(&x, y, out))
    }

    /// Quadrature against an unnormalized density family `(x, y) -> mu`.
    pub fn quadrature(
        model: &ModelSpec,
        density: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grid: QuadGrid,
    ) -> Self {
        let b = model.b_y.clone();
        let m = model.m;
        Self::new(
            m,
            Provenance::Quadrature,
            Arc::new(move |y, out| {
                let v = averaged_drift_quadrature(&b, m, |x| density(x, y), &grid, y)?;
                out.copy_from_slice(&v);
                Ok(())
            }),
        )
    }

    /// Ergodic time average of the frozen process at every call. Deterministic
    /// because every call reuses the embedded seed.
    pub fn ergodic(model: &ModelSpec, opts: ErgodicOptions, seed: u64) -> Self {
        let model = model.clone();
        let m = model.m;
        Self::new(
            m,
            Provenance::ErgodicMc,
            Arc::new(move |y, out| {
                let est = averaged_drift_ergodic(&model, y, &opts, seed)?;
                out.copy_from_slice(&est.mean);
                Ok(())
            }),
        )
    }

    /// Piecewise-linear table of a scalar drift (`m = 1`) on `points` nodes
    /// spanning `[lo, hi]`; linear extrapolation beyond the ends.
    pub fn tabulate_1d(&self, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if self.m != 1 {
            return Err(invalid("m", "tabulation supports one slow dimension"));
        }
        if !(hi > lo) || points < 2 {
            return Err(invalid("points", "need lo < hi and at least 2 nodes"));
        }
        let h = (hi - lo) / (points - 1) as f64;
        let mut values = vec![0.0; points];
        let mut buf = [0.0];
        for (k, v) in values.iter_mut().enumerate() {
            self.eval_into(&[lo + k as f64 * h], &mut buf)?;
            *v = buf[0];
        }
        let table = Arc::new(values);
        let mut out = Self::new(
            1,
            self.provenance,
            Arc::new(move |y, out| {
                let s = ((y[0] - lo) / h).floor().clamp(0.0, (table.len() - 2) as f64);
                let k = s as usize;
                let frac = (y[0] - lo) / h - k as f64;
                out[0] = table[k] + frac * (table[k + 1] - table[k]);
                Ok(())
            }),
        );
        out.error_estimate = self.error_estimate;
        Ok(out)
    }

    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        (self.evaluator)(y, out)
    }

    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.eval_into(y, &mut out)?;
        Ok(out)
    }

    /// Largest finite-difference slope over `pairs` random pairs in the box.
    /// Pairs come from a fixed sequence, so more pairs never lower the value.
    pub fn estimate_lipschitz(&self, lo: &[f64], hi: &[f64], pairs: usize, seed: u64) -> Result<f64> {
        if lo.len() != self.m || hi.len() != self.m {
            return Err(invalid("probe_box", "dimension must equal m"));
        }
        let mut rng = auxiliary_rng(seed, 0);
        let mut best: f64 = 0.0;
        let mut a = vec![0.0; self.m];
        let mut b = vec![0.0; self.m];
        for _ in 0..pairs {
            let y1: Vec<f64> = (0..self.m).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
            let y2: Vec<f64> = (0..self.m).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
            let d = dist(&y1, &y2);
            if d == 0.0 {
                continue;
            }
            self.eval_into(&y1, &mut a)?;
            self.eval_into(&y2, &mut b)?;
            best = best.max(dist(&a, &b) / d);
        }
        Ok(best)
    }

    /// Stores [`AveragedDrift::estimate_lipschitz`] with 1000 pairs.
    pub fn with_lipschitz_estimate(mut self, lo: &[f64], hi: &[f64], seed: u64) -> Result<Self> {
        self.lip_estimate = Some(self.estimate_lipschitz(lo, hi, 1000, seed)?);
        Ok(self)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Time-average settings for [`averaged_drift_ergodic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicOptions {
    pub burn_in: f64,
    pub horizon: f64,
    pub dt: f64,
    pub batches: usize,
    /// Largest acceptable batch-means standard error (any component).
    pub tolerance: Option<f64>,
}

impl ErgodicOptions {
    /// Burn-in `10 / kappa_X`, horizon `100 / kappa_X`, step `0.05 / kappa_X`.
    pub fn defaults(kappa_x: f64) -> Self {
        Self { burn_in: 10.0 / kappa_x, horizon: 100.0 / kappa_x, dt: 0.05 / kappa_x, batches: 20, tolerance: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Time average of `b_Y(X^y_t, y)` over `[burn_in, burn_in + horizon]`.
pub fn averaged_drift_ergodic(model: &ModelSpec, y: &[f64], opts: &ErgodicOptions, seed: u64) -> Result<ErgodicEstimate> {
    if !(opts.horizon > 0.0 && opts.burn_in >= 0.0 && opts.dt > 0.0) {
        return Err(invalid("ergodic", "need horizon > 0, burn_in >= 0, dt > 0"));
    }
    if opts.batches < 2 {
        return Err(invalid("batches", "at least 2 batches"));
    }
    let steps = ((opts.burn_in + opts.horizon) / opts.dt).ceil() as usize;
    let skip = (opts.burn_in / opts.dt).round() as usize;
    let substeps = crate::sde::default_substeps(&model.clone().with_epsilon(1.0)?, opts.dt).max(1);
    let cfg = SimConfig {
        t_final: steps as f64 * opts.dt,
        dt: opts.dt,
        substeps: substeps.div_ceil(10),
        seed,
        x0: vec![0.0; model.n],
        y0: y.to_vec(),
        init_fast_from_mu: false,
    };
    let bx = generate_noise(seed, StreamId::new(0, Channel::BX), steps * cfg.substeps, cfg.fast_step(), model.n);
    let x0 = match &model.mu_sampler {
        Some(s) => {
            let z = crate::noise::standard_normals(seed, StreamId::new(0, Channel::Init), model.n);
            let mut x0 = vec![0.0; model.n];
            s(y, &z, &mut x0);
            x0
        }
        None => vec![0.0; model.n],
    };
    let traj = simulate_frozen_with(model, y, &cfg, &x0, &bx)?;
    let m = model.m;
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); m];
    let mut out = vec![0.0; m];
    for k in skip.max(1)..traj.len() {
        (model.b_y)(traj.x_at(k), y, &mut out);
        for (s, v) in series.iter_mut().zip(&out) {
            s.push(*v);
        }
    }
    let (mut mean, mut stderr) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for s in &series {
        let (mu, se) = batch_means(s, opts.batches);
        mean.push(mu);
        stderr.push(se);
    }
    if let Some(tol) = opts.tolerance {
        let worst = stderr.iter().cloned().fold(0.0, f64::max);
        if worst > tol {
            return Err(Error::NonConvergence { se: worst, tol });
        }
    }
    Ok(ErgodicEstimate { mean, stderr })
}

/// Normalized trapezoidal quadrature of `b_Y(., y)` against `density`.
pub fn averaged_drift_quadrature(
    b_y: &Drift,
    m: usize,
    density: impl Fn(&[f64]) -> f64,
    grid: &QuadGrid,
    y: &[f64],
) -> Result<Vec<f64>> {
    let rule = grid.rule(density)?;
    Ok(rule.expect_vec(m, |x, out| b_y(x, y, out)))
}

/// Closed-form `bbar` for the quadratic family with `h = 0` and `b_Y` affine
/// in `x`: `mu^y` is Gaussian with mean `g(y)`, so `bbar(y) = b_Y(g(y), y)`.
pub fn gaussian61_averaged_drift(params: &GradientModelParams, b_y: &Drift, y: &[f64]) -> Result<Vec<f64>> {
    if params.h.is_some() {
        return Err(invalid("h", "closed form requires h = 0"));
    }
    let (n, m) = (params.n, params.m);
    let mut mean = vec![0.0; n];
    params.g.apply(y, &mut mean);
    check_affine(b_y, n, m, &mean, y)?;
    let mut out = vec![0.0; m];
    b_y(&mean, y, &mut out);
    Ok(out)
}

/// Three-point collinearity probe of `x -> b(x, y)` along each coordinate.
pub fn check_affine(b: &Drift, n: usize, m: usize, x0: &[f64], y: &[f64]) -> Result<()> {
    let mut f0 = vec![0.0; m];
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    b(x0, y, &mut f0);
    for i in 0..n {
        for &d in &[0.5, 3.0] {
            let mut xp = x0.to_vec();
            let mut xm = x0.to_vec();
            xp[i] += d;
            xm[i] -= d;
            b(&xp, y, &mut fp);
            b(&xm, y, &mut fm);
            for k in 0..m {
                let scale = 1.0 + f0[k].abs() + fp[k].abs() + fm[k].abs();
                if (fp[k] - 2.0 * f0[k] + fm[k]).abs() > 1e-9 * scale {
                    return Err(Error::NotAffine { coordinate: i });
                }
            }
        }
    }
    Ok(())
}

/// Smoothed-score estimate of the TAMD averaged drift from samples of `theta(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamdEstimate {
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Minimum number of `theta # mu` samples accepted.
pub const TAMD_MIN_SAMPLES: usize = 1000;

/// Normalized mixture weights `w_i(y) ∝ exp(-beta kappa |z_i - y|^2 / 2)`.
pub fn tamd_weights(params: &TamdModelParams, samples: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let m = params.m;
    if y.len() != m || samples.is_empty() || !samples.len().is_multiple_of(m) {
        return Err(invalid("theta_mu_samples", "flat sample array must hold whole rows of dimension m"));
    }
    let scale = 0.5 * params.beta * params.kappa;
    let logw: Vec<f64> = samples
        .chunks_exact(m)
        .map(|z| -scale * z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max < -708.0 {
        return Err(Error::AllWeightsUnderflow);
    }
    let mut w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total = crate::stats::compensated_sum(w.iter().copied());
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// `bbar(y) = gamma_bar^-1 sum_i kappa (z_i - y) w_i(y)`, the exact gradient of
/// the log of the Gaussian-mixture smoothing of the empirical `theta # mu`
/// (scaled by `beta^-1`). Standard errors by the ratio-estimator delta method.
pub fn tamd_averaged_drift(params: &TamdModelParams, samples: &[f64], y: &[f64]) -> Result<TamdEstimate> {
    let m = params.m;
    if samples.len() / m.max(1) < TAMD_MIN_SAMPLES {
        return Err(invalid("theta_mu_samples", format!("need at least {TAMD_MIN_SAMPLES} samples")));
    }
    let w = tamd_weights(params, samples, y)?;
    let pref = params.kappa / params.gamma_bar;
    let mut value = vec![0.0; m];
    let mut stderr = vec![0.0; m];
    for k in 0..m {
        let mut acc = NeumaierSum::new();
        for (z, wi) in samples.chunks_exact(m).zip(&w) {
            acc.add(wi * (z[k] - y[k]));
        }
        let r = acc.value();
        let mut var = NeumaierSum::new();
        for (z, wi) in samples.chunks_exact(m).zip(&w) {
            let d = z[k] - y[k] - r;
            var.add(wi * wi * d * d);
        }
        value[k] = pref * r;
        stderr[k] = pref * var.value().sqrt();
    }
    Ok(TamdEstimate { value, stderr })
}

/// `AveragedDrift` backed by [`tamd_averaged_drift`] on a fixed sample set.
pub fn tamd_drift(params: &TamdModelParams, samples: Vec<f64>) -> Result<AveragedDrift> {
    if samples.len() / params.m < TAMD_MIN_SAMPLES {
        return Err(invalid("theta_mu_samples", format!("need at least {TAMD_MIN_SAMPLES} samples")));
    }
    let params = params.clone();
    let samples = Arc::new(samples);
    let m = params.m;
    Ok(AveragedDrift::new(
        m,
        Provenance::ErgodicMc,
        Arc::new(move |y, out| {
            let e = tamd_averaged_drift(&params, &samples, y)?;
            out.copy_from_slice(&e.value);
            Ok(())
        }),
    ))
}

/// Samples of `theta(X)` with `X ~ exp(-beta V)`, by unadjusted Langevin
/// with step `dt`, burn-in `burn_in` and one record every `thin` steps.
pub fn sample_theta_mu(
    params: &TamdModelParams,
    count: usize,
    dt: f64,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) || thin == 0 || count == 0 {
        return Err(invalid("sampler", "need dt > 0, thin >= 1 and count >= 1"));
    }
    let (n, m) = (params.n, params.m);
    let steps = burn_in + count * thin;
    let noise = generate_noise(seed, StreamId::new(0, Channel::Init), steps, dt, n);
    let amp = (2.0 / params.beta).sqrt();
    let mut x = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut th = vec![0.0; m];
    let mut out = Vec::with_capacity(count * m);
    for k in 0..steps {
        (params.grad_v)(&x, &mut g);
        for i in 0..n {
            x[i] += -g[i] * dt + amp * noise.row(k)[i];
        }
        check_finite(&x, k, 0)?;
        if k >= burn_in && (k - burn_in + 1).is_multiple_of(thin) {
            (params.theta)(&x, &mut th);
            out.extend_from_slice(&th);
        }
    }
    Ok(out)
}

/// Integrates `dYbar = bbar(Ybar) dt + sigma_Y(Ybar) dB^Y` with the given
/// slow-grid increments.
pub fn simulate_averaged(
    bbar: &AveragedDrift,
    sigma_y: &SlowDiffusion,
    cfg: &SimConfig,
    by_stream: &NoisePath,
) -> Result<Trajectory> {
    Ok(simulate_averaged_stopped(bbar, sigma_y, cfg, by_stream, None)?.0)
}

/// As [`simulate_averaged`], but once the path leaves `domain` it is held at
/// its first outside value, so `bbar` is never evaluated outside the domain.
/// Returns the exit step, if any.
pub fn simulate_averaged_stopped(
    bbar: &AveragedDrift,
    sigma_y: &SlowDiffusion,
    cfg: &SimConfig,
    by_stream: &NoisePath,
    domain: Option<&BoxDomain>,
) -> Result<(Trajectory, Option<usize>)> {
    let steps = cfg.steps()?;
    let m = bbar.m;
    if cfg.y0.len() != m {
        return Err(invalid("y0", format!("expected {m} components")));
    }
    if by_stream.steps() != steps || by_stream.dim() != m {
        return Err(invalid("by_stream", "does not match the slow grid"));
    }
    let mut y = cfg.y0.clone();
    let mut drift = vec![0.0; m];
    let mut sig = vec![0.0; m * m];
    let mut times = Vec::with_capacity(steps + 1);
    let mut path = Vec::with_capacity((steps + 1) * m);
    let mut exit = domain.and_then(|d| (!d.contains(&y)).then_some(0));
    times.push(0.0);
    path.extend_from_slice(&y);
    for k in 0..steps {
        if exit.is_none() {
            bbar.eval_into(&y, &mut drift)?;
            sigma_y(&y, &mut sig);
            apply_slow_increment(&sig, &drift, cfg.dt, by_stream.row(k), &mut y);
            check_finite(&y, k, 0)?;
            if domain.is_some_and(|d| !d.contains(&y)) {
                exit = Some(k + 1);
            }
        }
        times.push((k + 1) as f64 * cfg.dt);
        path.extend_from_slice(&y);
    }
    let traj = Trajectory {
        times,
        n: 0,
        m,
        x_path: Vec::new(),
        y_path: path,
        seed_record: SeedRecord { seed: cfg.seed, streams: vec![by_stream.stream_id] },
    };
    Ok((traj, exit))
}
