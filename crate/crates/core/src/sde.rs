//! Euler-Maruyama integration of the coupled, frozen and auxiliary systems.
//!
//! The slow variable advances once per slow step using the slow-grid
//! `B^Y` increment. Within a slow step the fast variable takes `substeps`
//! explicit steps with the slow variable frozen at its pre-step value;
//! `substeps = 1` is plain Euler-Maruyama on the slow grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelSpec;
use crate::noise::{generate_noise, standard_normals, Channel, NoisePath, StreamId};

/// Explicit stability limit on `fast_step * rate`.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_final: f64,
    pub dt: f64,
    pub substeps: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub init_fast_from_mu: bool,
}

impl SimConfig {
    /// Number of slow steps; `t_final` must be an integer multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_final >= self.dt) {
            return Err(invalid("t_final", "must be at least dt"));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(invalid("dt", "slow grid must exactly cover [0, T]"));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<usize> {
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be at least 1"));
        }
        if self.x0.len() != model.n {
            return Err(invalid("x0", format!("expected {} components", model.n)));
        }
        if self.y0.len() != model.m {
            return Err(invalid("y0", format!("expected {} components", model.m)));
        }
        if self.init_fast_from_mu && model.mu_sampler.is_none() {
            return Err(invalid("init_fast_from_mu", "model has no analytic invariant measure"));
        }
        self.steps()
    }

    pub fn fast_step(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    /// Replaces `substeps` with [`default_substeps`] for `model`.
    pub fn with_default_substeps(mut self, model: &ModelSpec) -> Self {
        self.substeps = default_substeps(model, self.dt);
        self
    }
}

/// `ceil(10 dt / (eps / kappa_hat))`, at least 1.
pub fn default_substeps(model: &ModelSpec, dt: f64) -> usize {
    let k = stiffness_scale(model);
    ((10.0 * dt * k / model.epsilon).ceil() as usize).max(1)
}

/// The model's declared stiffness, or a finite-difference Lipschitz
/// estimate of `b_X` around the origin when none was declared.
pub fn stiffness_scale(model: &ModelSpec) -> f64 {
    model
        .stiffness
        .unwrap_or_else(|| estimate_drift_lipschitz(model, &vec![0.0; model.n], &vec![0.0; model.m], 5.0, 400, 0))
}

/// Largest finite-difference slope `|b_X(x1, y) - b_X(x2, y)| / |x1 - x2|`
/// over random pairs in a cube around `(x_center, y_center)`.
pub fn estimate_drift_lipschitz(
    model: &ModelSpec,
    x_center: &[f64],
    y_center: &[f64],
    half_width: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    use rand::Rng;
    let mut rng = crate::noise::auxiliary_rng(seed, 0);
    let n = model.n;
    let mut best: f64 = 0.0;
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    for _ in 0..pairs {
        let x1: Vec<f64> = x_center.iter().map(|c| c + half_width * rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = x_center.iter().map(|c| c + half_width * rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = y_center.iter().map(|c| c + half_width * rng.random_range(-1.0..1.0)).collect();
        (model.b_x)(&x1, &y, &mut b1);
        (model.b_x)(&x2, &y, &mut b2);
        let dx = norm_diff(&x1, &x2);
        if dx > 0.0 {
            best = best.max(norm_diff(&b1, &b2) / dx);
        }
    }
    best
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Checks `fast_step * rate <= 0.5` where `rate = kappa_hat / timescale`.
pub fn check_stability(model: &ModelSpec, fast_step: f64, timescale: f64) -> Result<()> {
    let ratio = fast_step * stiffness_scale(model) / timescale;
    if ratio > STABILITY_LIMIT {
        return Err(Error::StabilityViolation { ratio, limit: STABILITY_LIMIT });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub streams: Vec<StreamId>,
}

/// Time-gridded path of `(X, Y)`; either component may be empty
/// (`n == 0` or `m == 0`) for frozen or averaged runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub x_path: Vec<f64>,
    pub y_path: Vec<f64>,
    pub seed_record: SeedRecord,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x_path[k * self.n..(k + 1) * self.n]
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        &self.y_path[k * self.m..(k + 1) * self.m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleTrajectory {
    pub base: Trajectory,
    pub xtilde_path: Vec<f64>,
}

impl TripleTrajectory {
    pub fn xtilde_at(&self, k: usize) -> &[f64] {
        let n = self.base.n;
        &self.xtilde_path[k * n..(k + 1) * n]
    }
}

/// Noise streams of one replica.
#[derive(Debug, Clone)]
pub struct ReplicaNoise {
    pub bx: NoisePath,
    pub by: NoisePath,
    pub bxtilde: Option<NoisePath>,
}

impl ReplicaNoise {
    pub fn generate(model: &ModelSpec, cfg: &SimConfig, replica: u64, with_tilde: bool) -> Result<Self> {
        let steps = cfg.validate(model)?;
        let fast_rows = steps * cfg.substeps;
        let h = cfg.fast_step();
        Ok(Self {
            bx: generate_noise(cfg.seed, StreamId::new(replica, Channel::BX), fast_rows, h, model.n),
            by: generate_noise(cfg.seed, StreamId::new(replica, Channel::BY), steps, cfg.dt, model.m),
            bxtilde: with_tilde.then(|| {
                generate_noise(cfg.seed, StreamId::new(replica, Channel::BXtilde), fast_rows, h, model.n)
            }),
        })
    }

    /// Matched coarse noise: every stream summed over `factor` rows.
    pub fn coarsen(&self, factor: usize) -> Self {
        Self {
            bx: self.bx.coarsen(factor),
            by: self.by.coarsen(factor),
            bxtilde: self.bxtilde.as_ref().map(|p| p.coarsen(factor)),
        }
    }

    fn streams(&self) -> Vec<StreamId> {
        let mut s = vec![self.bx.stream_id, self.by.stream_id];
        if let Some(t) = &self.bxtilde {
            s.push(t.stream_id);
        }
        s
    }
}

/// Initial fast states `(X_0, Xtilde_0)` of a replica.
///
/// With `init_fast_from_mu` both are independent draws from `mu^{y0}`
/// (standard normals from the `Init` stream); otherwise both equal `x0`.
pub fn initial_fast_states(model: &ModelSpec, cfg: &SimConfig, replica: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !cfg.init_fast_from_mu {
        return Ok((cfg.x0.clone(), cfg.x0.clone()));
    }
    let sampler = model
        .mu_sampler
        .as_ref()
        .ok_or_else(|| invalid("init_fast_from_mu", "model has no analytic invariant measure"))?;
    let z = standard_normals(cfg.seed, StreamId::new(replica, Channel::Init), 2 * model.n);
    let mut x0 = vec![0.0; model.n];
    let mut xt0 = vec![0.0; model.n];
    sampler(&cfg.y0, &z[..model.n], &mut x0);
    sampler(&cfg.y0, &z[model.n..], &mut xt0);
    Ok((x0, xt0))
}

/// One explicit Euler-Maruyama step of the coupled system.
pub fn em_step(
    model: &ModelSpec,
    state: (&[f64], &[f64]),
    dt: f64,
    dwx: &[f64],
    dwy: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let (x, y) = state;
    let mut ws = Workspace::new(model);
    let mut xn = x.to_vec();
    let mut yn = y.to_vec();
    (model.b_y)(x, y, &mut ws.by);
    ws.fast_step(model, &mut xn, y, dt, 1.0 / model.epsilon, dwx);
    ws.slow_update(model, &mut yn, dt, dwy);
    check_finite(&xn, 0, 0)?;
    check_finite(&yn, 0, model.n)?;
    Ok((xn, yn))
}

pub(crate) fn check_finite(v: &[f64], step: usize, offset: usize) -> Result<()> {
    match v.iter().position(|a| !a.is_finite()) {
        Some(i) => Err(Error::NumericalBlowup { step, component: offset + i }),
        None => Ok(()),
    }
}

struct Workspace {
    n: usize,
    bx: Vec<f64>,
    by: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
}

impl Workspace {
    fn new(model: &ModelSpec) -> Self {
        Self {
            n: model.n,
            bx: vec![0.0; model.n],
            by: vec![0.0; model.m],
            sx: vec![0.0; model.n * model.n],
            sy: vec![0.0; model.m * model.m],
        }
    }

    /// `x += rate b_X(x, y) h + sqrt(rate) sigma_X(x, y) dw`.
    fn fast_step(&mut self, model: &ModelSpec, x: &mut [f64], y: &[f64], h: f64, rate: f64, dw: &[f64]) {
        (model.b_x)(x, y, &mut self.bx);
        (model.sigma_x)(x, y, &mut self.sx);
        let noise_scale = rate.sqrt();
        for i in 0..self.n {
            let mut s = 0.0;
            for j in 0..self.n {
                s += self.sx[i * self.n + j] * dw[j];
            }
            x[i] += rate * self.bx[i] * h + noise_scale * s;
        }
    }

    /// `y += by dt + sigma_Y(y) dw` with `by` precomputed at the pre-step state.
    fn slow_update(&mut self, model: &ModelSpec, y: &mut [f64], dt: f64, dw: &[f64]) {
        (model.sigma_y)(y, &mut self.sy);
        apply_slow_increment(&self.sy, &self.by, dt, dw, y);
    }
}

/// `y += drift dt + sigma dw` for a row-major `m x m` `sigma`. Shared by the
/// coupled and averaged integrators so identical inputs give identical bits.
pub(crate) fn apply_slow_increment(sigma: &[f64], drift: &[f64], dt: f64, dw: &[f64], y: &mut [f64]) {
    let m = y.len();
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += sigma[i * m + j] * dw[j];
        }
        y[i] += drift[i] * dt + s;
    }
}

fn check_noise(cfg: &SimConfig, steps: usize, fast: &NoisePath, slow: &NoisePath) -> Result<()> {
    if fast.steps() != steps * cfg.substeps {
        return Err(invalid("noise", "fast stream does not match the substep grid"));
    }
    if slow.steps() != steps {
        return Err(invalid("noise", "slow stream does not match the slow grid"));
    }
    Ok(())
}

/// Coupled integration driven by explicit noise. `xtilde` (initial state
/// and stream) adds the auxiliary process driven by the same `Y` path.
fn integrate(
    model: &ModelSpec,
    cfg: &SimConfig,
    x0: &[f64],
    noise: &ReplicaNoise,
    xtilde0: Option<&[f64]>,
) -> Result<(Trajectory, Option<Vec<f64>>)> {
    let steps = cfg.validate(model)?;
    check_stability(model, cfg.fast_step(), model.epsilon)?;
    check_noise(cfg, steps, &noise.bx, &noise.by)?;
    let tilde = match (xtilde0, &noise.bxtilde) {
        (Some(x), Some(p)) => {
            check_noise(cfg, steps, p, &noise.by)?;
            Some((x, p))
        }
        (None, _) => None,
        (Some(_), None) => return Err(invalid("noise", "auxiliary run needs a BXtilde stream")),
    };
    let (n, m) = (model.n, model.m);
    let h = cfg.fast_step();
    let rate = 1.0 / model.epsilon;
    let mut ws = Workspace::new(model);
    let mut x = x0.to_vec();
    let mut y = cfg.y0.clone();
    let mut xt = tilde.map(|(v, _)| v.to_vec());
    let mut times = Vec::with_capacity(steps + 1);
    let mut x_path = Vec::with_capacity((steps + 1) * n);
    let mut y_path = Vec::with_capacity((steps + 1) * m);
    let mut xt_path = tilde.map(|_| Vec::with_capacity((steps + 1) * n));
    times.push(0.0);
    x_path.extend_from_slice(&x);
    y_path.extend_from_slice(&y);
    if let (Some(p), Some(v)) = (xt_path.as_mut(), xt.as_ref()) {
        p.extend_from_slice(v);
    }
    for k in 0..steps {
        (model.b_y)(&x, &y, &mut ws.by);
        for s in 0..cfg.substeps {
            let row = k * cfg.substeps + s;
            ws.fast_step(model, &mut x, &y, h, rate, noise.bx.row(row));
            check_finite(&x, k, 0)?;
            if let (Some(v), Some((_, path))) = (xt.as_mut(), tilde) {
                ws.fast_step(model, v, &y, h, rate, path.row(row));
                check_finite(v, k, n + m)?;
            }
        }
        ws.slow_update(model, &mut y, cfg.dt, noise.by.row(k));
        check_finite(&y, k, n)?;
        times.push((k + 1) as f64 * cfg.dt);
        x_path.extend_from_slice(&x);
        y_path.extend_from_slice(&y);
        if let (Some(p), Some(v)) = (xt_path.as_mut(), xt.as_ref()) {
            p.extend_from_slice(v);
        }
    }
    let traj = Trajectory {
        times,
        n,
        m,
        x_path,
        y_path,
        seed_record: SeedRecord { seed: cfg.seed, streams: noise.streams() },
    };
    Ok((traj, xt_path))
}

/// Coupled run with caller-supplied initial fast state and noise.
pub fn simulate_coupled_with(model: &ModelSpec, cfg: &SimConfig, x0: &[f64], noise: &ReplicaNoise) -> Result<Trajectory> {
    integrate(model, cfg, x0, noise, None).map(|(t, _)| t)
}

/// Coupled run of replica `replica`.
pub fn simulate_coupled_replica(model: &ModelSpec, cfg: &SimConfig, replica: u64) -> Result<Trajectory> {
    let noise = ReplicaNoise::generate(model, cfg, replica, false)?;
    let (x0, _) = initial_fast_states(model, cfg, replica)?;
    simulate_coupled_with(model, cfg, &x0, &noise)
}

/// Coupled run (replica 0) of `(X, Y)`.
pub fn simulate_coupled(model: &ModelSpec, cfg: &SimConfig) -> Result<Trajectory> {
    simulate_coupled_replica(model, cfg, 0)
}

/// Triple run with caller-supplied initial states and noise.
pub fn simulate_triple_with(
    model: &ModelSpec,
    cfg: &SimConfig,
    x0: &[f64],
    xtilde0: &[f64],
    noise: &ReplicaNoise,
) -> Result<TripleTrajectory> {
    let (base, xt) = integrate(model, cfg, x0, noise, Some(xtilde0))?;
    Ok(TripleTrajectory { base, xtilde_path: xt.expect("auxiliary path requested") })
}

pub fn simulate_triple_replica(model: &ModelSpec, cfg: &SimConfig, replica: u64) -> Result<TripleTrajectory> {
    let noise = ReplicaNoise::generate(model, cfg, replica, true)?;
    let (x0, xt0) = initial_fast_states(model, cfg, replica)?;
    simulate_triple_with(model, cfg, &x0, &xt0, &noise)
}

/// Joint run of `(X, Y, Xtilde)` (replica 0).
pub fn simulate_triple(model: &ModelSpec, cfg: &SimConfig) -> Result<TripleTrajectory> {
    simulate_triple_replica(model, cfg, 0)
}

/// Frozen fast process `dX = b_X(X, y) dt + sigma_X(X, y) dB^X` at unit
/// timescale with `y` held fixed, recorded on the slow grid.
pub fn simulate_frozen_with(model: &ModelSpec, y: &[f64], cfg: &SimConfig, x0: &[f64], bx: &NoisePath) -> Result<Trajectory> {
    if y.len() != model.m {
        return Err(invalid("y", format!("expected {} components", model.m)));
    }
    let steps = cfg.steps()?;
    if cfg.substeps == 0 {
        return Err(invalid("substeps", "must be at least 1"));
    }
    check_stability(model, cfg.fast_step(), 1.0)?;
    if bx.steps() != steps * cfg.substeps {
        return Err(invalid("noise", "fast stream does not match the substep grid"));
    }
    let h = cfg.fast_step();
    let mut ws = Workspace::new(model);
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut x_path = Vec::with_capacity((steps + 1) * model.n);
    times.push(0.0);
    x_path.extend_from_slice(&x);
    for k in 0..steps {
        for s in 0..cfg.substeps {
            ws.fast_step(model, &mut x, y, h, 1.0, bx.row(k * cfg.substeps + s));
            check_finite(&x, k, 0)?;
        }
        times.push((k + 1) as f64 * cfg.dt);
        x_path.extend_from_slice(&x);
    }
    Ok(Trajectory {
        times,
        n: model.n,
        m: 0,
        x_path,
        y_path: Vec::new(),
        seed_record: SeedRecord { seed: cfg.seed, streams: vec![bx.stream_id] },
    })
}

/// Frozen run of replica 0. Starts from `mu^y` when requested and
/// available, otherwise from `cfg.x0`.
pub fn simulate_frozen(model: &ModelSpec, y: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    simulate_frozen_replica(model, y, cfg, 0)
}

pub fn simulate_frozen_replica(model: &ModelSpec, y: &[f64], cfg: &SimConfig, replica: u64) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let bx = generate_noise(
        cfg.seed,
        StreamId::new(replica, Channel::BX),
        steps * cfg.substeps.max(1),
        cfg.fast_step(),
        model.n,
    );
    let x0 = if cfg.init_fast_from_mu {
        let sampler = model
            .mu_sampler
            .as_ref()
            .ok_or_else(|| invalid("init_fast_from_mu", "model has no analytic invariant measure"))?;
        let z = standard_normals(cfg.seed, StreamId::new(replica, Channel::Init), model.n);
        let mut x0 = vec![0.0; model.n];
        sampler(y, &z, &mut x0);
        x0
    } else {
        cfg.x0.clone()
    };
    simulate_frozen_with(model, y, cfg, &x0, &bx)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{LinearParams, ModelSpec};
    use crate::stats::mean_and_se;

    fn zero_model() -> ModelSpec {
        ModelSpec::new(
            1,
            1,
            1.0,
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, o| o[0] = 0.0),
        )
        .unwrap()
        .with_stiffness(1.0)
    }

    fn linear(eps: f64, sigma: f64) -> ModelSpec {
        let mut m = LinearParams { kappa_x: 1.0, kappa_y: 1.0, sigma_x: sigma, sigma_y: 1.0 }.model(eps).unwrap();
        m.sigma_y = Arc::new(move |_, o| o[0] = sigma);
        m
    }

    fn cfg(t: f64, dt: f64, substeps: usize) -> SimConfig {
        SimConfig { t_final: t, dt, substeps, seed: 3, x0: vec![1.0], y0: vec![0.0], init_fast_from_mu: false }
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let (x, y) = em_step(&zero_model(), (&[1.5], &[-2.0]), 0.1, &[0.3], &[0.7]).unwrap();
        assert_eq!((x[0], y[0]), (1.5, -2.0));
    }

    #[test]
    fn hand_evaluated_linear_step() {
        let m = linear(1.0, 0.0);
        let (x, y) = em_step(&m, (&[1.0], &[0.0]), 0.1, &[0.0], &[0.0]).unwrap();
        assert!((x[0] - 0.9).abs() < 1e-15);
        // b_Y = -(y - x) = 1
        assert!((y[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn fast_noise_is_scaled_by_inverse_root_epsilon() {
        let m = ModelSpec::new(
            1,
            1,
            0.25,
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, _, o| o[0] = 1.0),
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, o| o[0] = 1.0),
        )
        .unwrap();
        let (x, _) = em_step(&m, (&[0.0], &[0.0]), 0.01, &[0.3], &[0.0]).unwrap();
        assert!((x[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn blowup_is_reported() {
        let m = ModelSpec::new(
            1,
            1,
            1.0,
            Arc::new(|_, _, o| o[0] = f64::NAN),
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, o| o[0] = 1.0),
        )
        .unwrap()
        .with_stiffness(1.0);
        let err = simulate_coupled(&m, &cfg(1.0, 0.1, 1)).unwrap_err();
        assert_eq!(err, Error::NumericalBlowup { step: 0, component: 0 });
    }

    #[test]
    fn stability_guard() {
        let m = linear(0.01, 1.0);
        let err = simulate_coupled(&m, &cfg(1.0, 0.1, 1)).unwrap_err();
        assert!(matches!(err, Error::StabilityViolation { .. }));
        let c = cfg(1.0, 0.1, 1).with_default_substeps(&m);
        assert_eq!(c.substeps, 100);
        assert!(simulate_coupled(&m, &c).is_ok());
    }

    #[test]
    fn grid_must_cover_horizon() {
        assert!(cfg(1.0, 0.3, 1).steps().is_err());
        assert_eq!(cfg(1.0, 0.25, 1).steps().unwrap(), 4);
    }

    #[test]
    fn zero_noise_linear_matches_hand_recursion() {
        let m = linear(0.5, 0.0);
        let c = cfg(0.5, 0.1, 1);
        let traj = simulate_coupled(&m, &c).unwrap();
        let (mut x, mut y) = (1.0_f64, 0.0_f64);
        for k in 0..5 {
            let xn = x - 2.0 * (x - y) * 0.1;
            let yn = y - (y - x) * 0.1;
            x = xn;
            y = yn;
            assert!((traj.x_at(k + 1)[0] - x).abs() < 1e-14);
            assert!((traj.y_at(k + 1)[0] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn x_independent_slow_equation_decouples() {
        let mut m = linear(0.1, 1.0);
        m.b_y = Arc::new(|_x, y, o| o[0] = -0.5 * y[0] + 0.2);
        let c = cfg(1.0, 0.01, 1);
        let traj = simulate_coupled(&m, &c).unwrap();
        let by = generate_noise(c.seed, StreamId::new(0, Channel::BY), 100, 0.01, 1);
        let mut y = 0.0;
        for k in 0..100 {
            y += (-0.5 * y + 0.2) * 0.01 + by.row(k)[0];
            assert_eq!(traj.y_at(k + 1)[0], y);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let m = linear(0.1, 1.0);
        let c = cfg(1.0, 0.01, 2);
        assert_eq!(simulate_coupled(&m, &c).unwrap(), simulate_coupled(&m, &c).unwrap());
        assert_eq!(simulate_triple(&m, &c).unwrap(), simulate_triple(&m, &c).unwrap());
    }

    #[test]
    fn triple_shares_slow_path_with_coupled_run() {
        let m = linear(0.1, 1.0);
        let c = cfg(1.0, 0.01, 2);
        let coupled = simulate_coupled(&m, &c).unwrap();
        let triple = simulate_triple(&m, &c).unwrap();
        assert_eq!(coupled.y_path, triple.base.y_path);
        assert_eq!(coupled.x_path, triple.base.x_path);
        assert_ne!(triple.base.x_path, triple.xtilde_path);
    }

    #[test]
    fn forced_shared_fast_noise_gives_identical_auxiliary_path() {
        let m = linear(0.1, 1.0);
        let c = cfg(1.0, 0.01, 2);
        let mut noise = ReplicaNoise::generate(&m, &c, 0, false).unwrap();
        noise.bxtilde = Some(noise.bx.clone());
        let t = simulate_triple_with(&m, &c, &[0.4], &[0.4], &noise).unwrap();
        assert_eq!(t.base.x_path, t.xtilde_path);
    }

    #[test]
    fn frozen_linear_contracts_deterministically() {
        let m = linear(1.0, 0.0);
        let c = SimConfig { x0: vec![3.0], ..cfg(10.0, 0.1, 1) };
        let t = simulate_frozen(&m, &[1.0], &c).unwrap();
        let last = t.x_at(t.len() - 1)[0];
        assert!((last - 1.0).abs() < 1e-4);
        for k in 1..t.len() {
            assert!((t.x_at(k)[0] - 1.0).abs() < (t.x_at(k - 1)[0] - 1.0).abs());
        }
    }

    #[test]
    fn frozen_linear_is_translation_equivariant() {
        let m = linear(1.0, 0.7);
        let c = cfg(5.0, 0.01, 1);
        let a = simulate_frozen(&m, &[0.0], &SimConfig { x0: vec![0.2], ..c.clone() }).unwrap();
        let b = simulate_frozen(&m, &[2.5], &SimConfig { x0: vec![2.7], ..c }).unwrap();
        for k in 0..a.len() {
            assert!((b.x_at(k)[0] - a.x_at(k)[0] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_ou_stationary_moments() {
        // b_X = -2 (x - y), sigma = 1.5 => N(y, 1.5^2 / 4)
        let p = LinearParams { kappa_x: 2.0, kappa_y: 1.0, sigma_x: 1.5, sigma_y: 1.0 };
        let m = p.model(1.0).unwrap();
        let c = SimConfig { x0: vec![0.7], ..cfg(20_000.0, 0.05, 5) };
        let t = simulate_frozen(&m, &[0.7], &c).unwrap();
        let xs: Vec<f64> = (200..t.len()).map(|k| t.x_at(k)[0]).collect();
        let (mean, se) = crate::stats::batch_means(&xs, 50);
        assert!((mean - 0.7).abs() < 3.0 * se, "mean {mean} se {se}");
        let sq: Vec<f64> = xs.iter().map(|v| (v - 0.7) * (v - 0.7)).collect();
        let (var, var_se) = crate::stats::batch_means(&sq, 50);
        // Euler at fast step h has stationary variance sigma^2 / (kappa (2 - kappa h)).
        let h = 0.01;
        let em_var = 1.5 * 1.5 / (2.0 * (2.0 - 2.0 * h));
        assert!((var - em_var).abs() < 3.0 * var_se, "var {var} vs {em_var} (se {var_se})");
        assert!((var - p.frozen_variance()).abs() < 0.02);
        let _ = mean_and_se(&xs);
    }
}
