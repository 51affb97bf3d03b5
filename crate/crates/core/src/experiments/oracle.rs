//! Exact reference for the linear slow-fast model.
//!
//! With `b_X = -kappa_x (x - y)`, `b_Y = -kappa_y (y - x)` the averaged drift
//! vanishes, so `Ybar_t = y0 + sigma_y W_t` and
//! `D_t = Y_t - Ybar_t = Y_t - y0 - sigma_y W_t`. The augmented state
//! `Z = (X, Y, W)` solves the linear SDE `dZ = A Z dt + G dB` with
//!
//! ```text
//!     | -kx/eps  kx/eps  0 |        | sx/sqrt(eps)  0  |
//! A = |   ky      -ky    0 |,   G = |      0        sy |
//!     |    0       0     0 |        |      0        1  |
//! ```
//!
//! whose transition over `delta` is Gaussian with mean `e^{A delta} z` and
//! covariance `Q = int_0^delta e^{As} G G^T e^{A^T s} ds`, obtained from the
//! block exponential `exp([[-A, G G^T], [0, A^T]] delta) = [[., F12], [0, F22]]`
//! as `Q = F22^T F12`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::LinearParams;
use crate::noise::auxiliary_rng;
use crate::stats::{map_replicas, mean_and_se};

/// Fine steps per observation step.
pub const ORACLE_REFINEMENT: usize = 16;
const ORACLE_SEED_SALT: u64 = 0x6f72_6163_6c65_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `E sup |D|` over the observation grid (step `dt`).
    pub mean_sup_error_ref: f64,
    pub se_ref: f64,
    /// `E sup |D|` over the fine grid (step `dt / 16`).
    pub mean_sup_error_fine: f64,
    pub se_fine: f64,
    pub replicas: usize,
    pub dt: f64,
}

/// Exact one-step transition `(Phi, L)` with `L L^T = Q`.
pub fn linear_transition(params: &LinearParams, epsilon: f64, delta: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let LinearParams { kappa_x: kx, kappa_y: ky, sigma_x: sx, sigma_y: sy } = *params;
    let a = Matrix3::new(-kx / epsilon, kx / epsilon, 0.0, ky, -ky, 0.0, 0.0, 0.0, 0.0);
    let g = nalgebra::Matrix3x2::new(sx / epsilon.sqrt(), 0.0, 0.0, sy, 0.0, 1.0);
    let ggt = g * g.transpose();
    let mut block = DMatrix::<f64>::zeros(6, 6);
    block.view_mut((0, 0), (3, 3)).copy_from(&(-a * delta));
    block.view_mut((0, 3), (3, 3)).copy_from(&(ggt * delta));
    block.view_mut((3, 3), (3, 3)).copy_from(&(a.transpose() * delta));
    let e = block.exp();
    let f12: Matrix3<f64> = e.view((0, 3), (3, 3)).into_owned().fixed_view::<3, 3>(0, 0).into_owned();
    let f22: Matrix3<f64> = e.view((3, 3), (3, 3)).into_owned().fixed_view::<3, 3>(0, 0).into_owned();
    let phi = f22.transpose();
    let q = phi * f12;
    let q = 0.5 * (q + q.transpose());
    (phi, psd_sqrt(&q))
}

/// Symmetric square root, with eigenvalues clamped at zero so that
/// degenerate (noise-free) directions are handled.
fn psd_sqrt(q: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = q.symmetric_eigen();
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `E sup_t |Y_t - Ybar_t|` by exact simulation on a grid of step
/// `dt / ORACLE_REFINEMENT`, starting from `X_0 ~ mu^{y0}` (or `X_0 = y0`
/// when `sigma_x = 0`) and `Y_0 = y0`.
pub fn linear_oracle(
    params: &LinearParams,
    epsilon: f64,
    t_final: f64,
    dt: f64,
    y0: f64,
    replicas: usize,
    seed: u64,
) -> Result<OracleResult> {
    if !(params.kappa_x > 0.0 && params.kappa_y >= 0.0 && params.sigma_x >= 0.0 && params.sigma_y >= 0.0) {
        return Err(invalid("params", "need kappa_x > 0 and nonnegative kappa_y, sigma_x, sigma_y"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let steps = (t_final / dt).round();
    if !(dt > 0.0) || steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(invalid("dt", "slow grid must exactly cover [0, T]"));
    }
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2"));
    }
    let steps = steps as usize;
    let (phi, chol) = linear_transition(params, epsilon, dt / ORACLE_REFINEMENT as f64);
    let sd0 = params.frozen_variance().sqrt();
    let sups = map_replicas(replicas, |r| {
        let mut rng = auxiliary_rng(seed ^ ORACLE_SEED_SALT, r);
        let x0 = y0 + sd0 * rng.sample::<f64, _>(StandardNormal);
        let mut z = Vector3::new(x0, y0, 0.0);
        let (mut sup_obs, mut sup_fine) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            for _ in 0..ORACLE_REFINEMENT {
                let xi = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                z = phi * z + chol * xi;
                let d = (z[1] - y0 - params.sigma_y * z[2]).abs();
                sup_fine = sup_fine.max(d);
            }
            sup_obs = sup_obs.max((z[1] - y0 - params.sigma_y * z[2]).abs());
        }
        Ok((sup_obs, sup_fine))
    })?;
    let obs: Vec<f64> = sups.iter().map(|s| s.0).collect();
    let fine: Vec<f64> = sups.iter().map(|s| s.1).collect();
    let (mean_sup_error_ref, se_ref) = mean_and_se(&obs);
    let (mean_sup_error_fine, se_fine) = mean_and_se(&fine);
    Ok(OracleResult { mean_sup_error_ref, se_ref, mean_sup_error_fine, se_fine, replicas, dt })
}
