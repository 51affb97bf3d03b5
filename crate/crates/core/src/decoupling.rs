//! Girsanov reweighting between the coupled system and its decoupled copy.
//!
//! Along a triple trajectory the density process
//! `E(M)_t = exp(M_t - <M>_t / 2)` with
//! `dM = (sigma_Y^-1 (b_Y(Xtilde, Y) - b_Y(X, Y)))^T dB^Y`
//! turns the law of `(X, Y, Xtilde)` into that of `(Xtilde, Y, X)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::{exp_moment_bound, CoefficientBounds, NOVIKOV_GAMMA};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::noise::NoisePath;
use crate::sde::{initial_fast_states, simulate_triple_with, ReplicaNoise, SimConfig, TripleTrajectory};
use crate::stats::{map_replicas, mean_and_se};

/// Singular values below this make `sigma_Y` numerically singular.
pub const SIGMA_Y_SINGULAR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovPath {
    pub times: Vec<f64>,
    pub martingale: Vec<f64>,
    pub quadratic_variation: Vec<f64>,
    pub stoch_exp: Vec<f64>,
}

impl GirsanovPath {
    pub fn terminal_weight(&self) -> f64 {
        *self.stoch_exp.last().expect("non-empty path")
    }

    pub fn terminal_qv(&self) -> f64 {
        *self.quadratic_variation.last().expect("non-empty path")
    }
}

/// Left-point sums `M_{k+1} = M_k + u_k . dB^Y_k`, `QV_{k+1} = QV_k + |u_k|^2 dt`
/// with `u_k = sigma_Y(Y_k)^-1 (b_Y(Xtilde_k, Y_k) - b_Y(X_k, Y_k))`.
pub fn girsanov_weight_path(triple: &TripleTrajectory, model: &ModelSpec, by_stream: &NoisePath) -> Result<GirsanovPath> {
    let base = &triple.base;
    let steps = base.len() - 1;
    let m = model.m;
    if by_stream.steps() != steps || by_stream.dim() != m {
        return Err(crate::error::invalid("by_stream", "does not match the trajectory grid"));
    }
    let mut mart = Vec::with_capacity(steps + 1);
    let mut qv = Vec::with_capacity(steps + 1);
    let mut weight = Vec::with_capacity(steps + 1);
    let (mut mk, mut qk) = (0.0f64, 0.0f64);
    mart.push(0.0);
    qv.push(0.0);
    weight.push(1.0);
    let mut bx = vec![0.0; m];
    let mut bt = vec![0.0; m];
    let mut sig = vec![0.0; m * m];
    let mut u = vec![0.0; m];
    for k in 0..steps {
        let y = base.y_at(k);
        (model.b_y)(base.x_at(k), y, &mut bx);
        (model.b_y)(triple.xtilde_at(k), y, &mut bt);
        (model.sigma_y)(y, &mut sig);
        let diff: Vec<f64> = bt.iter().zip(&bx).map(|(a, b)| a - b).collect();
        solve_sigma(&sig, &diff, &mut u, k)?;
        let dt = base.times[k + 1] - base.times[k];
        let dw = by_stream.row(k);
        mk += u.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
        qk += u.iter().map(|a| a * a).sum::<f64>() * dt;
        let w = (mk - 0.5 * qk).exp();
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::WeightOutOfRange { step: k });
        }
        mart.push(mk);
        qv.push(qk);
        weight.push(w);
    }
    Ok(GirsanovPath { times: base.times.clone(), martingale: mart, quadratic_variation: qv, stoch_exp: weight })
}

fn solve_sigma(sig: &[f64], rhs: &[f64], out: &mut [f64], step: usize) -> Result<()> {
    let m = rhs.len();
    if m == 1 {
        if sig[0].abs() < SIGMA_Y_SINGULAR {
            return Err(Error::SingularSigmaY { step, smallest: sig[0].abs() });
        }
        out[0] = rhs[0] / sig[0];
        return Ok(());
    }
    let a = DMatrix::from_row_slice(m, m, sig);
    let smallest = a.singular_values().min();
    if smallest < SIGMA_Y_SINGULAR {
        return Err(Error::SingularSigmaY { step, smallest });
    }
    let x = a
        .lu()
        .solve(&nalgebra::DVector::from_column_slice(rhs))
        .ok_or(Error::SingularSigmaY { step, smallest })?;
    out.copy_from_slice(x.as_slice());
    Ok(())
}

/// One replica: triple trajectory, its `B^Y` stream and its weight path.
pub struct ReplicaRecord {
    pub triple: TripleTrajectory,
    pub girsanov: GirsanovPath,
}

pub fn simulate_weighted_replica(model: &ModelSpec, cfg: &SimConfig, replica: u64) -> Result<ReplicaRecord> {
    let noise = ReplicaNoise::generate(model, cfg, replica, true)?;
    let (x0, xt0) = initial_fast_states(model, cfg, replica)?;
    let triple = simulate_triple_with(model, cfg, &x0, &xt0, &noise)?;
    let girsanov = girsanov_weight_path(&triple, model, &noise.by)?;
    Ok(ReplicaRecord { triple, girsanov })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentCheck {
    pub beta: f64,
    pub t: f64,
    pub replicas: usize,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Monte Carlo `E exp(beta <M>_T)` against the analytic bound; passes when
/// `empirical <= bound (1 + 2 relative SE)`.
pub fn check_exponential_moment(
    model: &ModelSpec,
    bounds: &CoefficientBounds,
    beta: f64,
    cfg: &SimConfig,
    replicas: usize,
) -> Result<ExpMomentCheck> {
    let bound = exp_moment_bound(bounds, beta, cfg.t_final)?.bound;
    let values = map_replicas(replicas, |r| {
        let rec = simulate_weighted_replica(model, cfg, r)?;
        Ok((beta * rec.girsanov.terminal_qv()).exp())
    })?;
    let (empirical, stderr) = mean_and_se(&values);
    let rel = if empirical > 0.0 { stderr / empirical } else { 0.0 };
    Ok(ExpMomentCheck {
        beta,
        t: cfg.t_final,
        replicas,
        empirical,
        stderr,
        bound,
        pass: empirical <= bound * (1.0 + 2.0 * rel),
    })
}

/// Read-only view of one fast path and the shared slow path.
pub struct PathView<'a> {
    pub times: &'a [f64],
    pub n: usize,
    pub m: usize,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

impl PathView<'_> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.n..(k + 1) * self.n]
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        &self.y[k * self.m..(k + 1) * self.m]
    }
}

pub type FunctionalFn = Arc<dyn Fn(&PathView<'_>) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct PathFunctional {
    pub id: String,
    pub f: FunctionalFn,
}

impl PathFunctional {
    pub fn new(id: &str, f: impl Fn(&PathView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        Self { id: id.to_string(), f: Arc::new(f) }
    }

    pub fn one() -> Self {
        Self::new("one", |_| 1.0)
    }

    /// First slow coordinate at the final time.
    pub fn y_terminal() -> Self {
        Self::new("y_terminal", |p| p.y_at(p.len() - 1)[0])
    }

    /// `min(sup_t |Y_t|, 10)` over grid points.
    pub fn sup_abs_y_clipped() -> Self {
        Self::new("sup_abs_y_clip10", |p| {
            (0..p.len()).map(|k| p.y_at(k)[0].abs()).fold(0.0, f64::max).min(10.0)
        })
    }

    /// First fast coordinate at the final time, clipped to `[-10, 10]`.
    pub fn x_terminal_clipped() -> Self {
        Self::new("x_terminal_clip10", |p| p.x_at(p.len() - 1)[0].clamp(-10.0, 10.0))
    }

    /// Left-point time average of `X_t Y_t` (first coordinates), clipped to `[-10, 10]`.
    pub fn xy_time_average_clipped() -> Self {
        Self::new("xy_time_average_clip10", |p| {
            let steps = p.len() - 1;
            let t = p.times[steps] - p.times[0];
            let s: f64 = (0..steps).map(|k| p.x_at(k)[0] * p.y_at(k)[0] * (p.times[k + 1] - p.times[k])).sum();
            (s / t).clamp(-10.0, 10.0)
        })
    }

    /// The five built-in functionals.
    pub fn defaults() -> Vec<Self> {
        vec![
            Self::one(),
            Self::y_terminal(),
            Self::sup_abs_y_clipped(),
            Self::x_terminal_clipped(),
            Self::xy_time_average_clipped(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawEquivalenceRow {
    pub functional_id: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the paired per-replica difference.
    pub pooled_se: f64,
    pub pass: bool,
}

/// `E_P[F(X, Y)]` against `E_P[E(M)_T F(Xtilde, Y)]` for each functional.
/// Requires `gamma > 2`.
pub fn check_law_equivalence(
    model: &ModelSpec,
    cfg: &SimConfig,
    gamma: f64,
    functionals: &[PathFunctional],
    replicas: usize,
) -> Result<Vec<LawEquivalenceRow>> {
    if !(gamma > NOVIKOV_GAMMA) {
        return Err(Error::NovikovRegime { gamma });
    }
    let per_replica = map_replicas(replicas, |r| {
        let rec = simulate_weighted_replica(model, cfg, r)?;
        let base = &rec.triple.base;
        let p = PathView { times: &base.times, n: base.n, m: base.m, x: &base.x_path, y: &base.y_path };
        let q = PathView { times: &base.times, n: base.n, m: base.m, x: &rec.triple.xtilde_path, y: &base.y_path };
        let w = rec.girsanov.terminal_weight();
        Ok(functionals.iter().map(|f| ((f.f)(&p), w * (f.f)(&q))).collect::<Vec<_>>())
    })?;
    Ok(functionals
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let l: Vec<f64> = per_replica.iter().map(|v| v[j].0).collect();
            let r: Vec<f64> = per_replica.iter().map(|v| v[j].1).collect();
            let d: Vec<f64> = per_replica.iter().map(|v| v[j].0 - v[j].1).collect();
            let (lhs, _) = mean_and_se(&l);
            let (rhs, _) = mean_and_se(&r);
            let (_, pooled_se) = mean_and_se(&d);
            LawEquivalenceRow {
                functional_id: f.id.clone(),
                lhs,
                rhs,
                pooled_se,
                pass: (lhs - rhs).abs() <= 3.0 * pooled_se,
            }
        })
        .collect())
}

/// Mean terminal weight `E[E(M)_T]` with its standard error.
pub fn mean_terminal_weight(model: &ModelSpec, cfg: &SimConfig, replicas: usize) -> Result<(f64, f64)> {
    let w = map_replicas(replicas, |r| Ok(simulate_weighted_replica(model, cfg, r)?.girsanov.terminal_weight()))?;
    Ok(mean_and_se(&w))
}
