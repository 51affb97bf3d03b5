//! Explicit constants: timescale separation, moment orders, exponential
//! moment bounds, entropy source terms and the strong-error estimate.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{BoxDomain, Drift, GradientModelParams, TamdModelParams};
use crate::noise::auxiliary_rng;

/// Separation at which `p_max = 1`: `(1 + s)^2 = 2` with `s = sqrt(2/gamma)`,
/// i.e. `gamma = 2 (3 + 2 sqrt 2) ≈ 11.657`.
pub fn gamma_threshold() -> f64 {
    2.0 * (3.0 + 2.0 * 2f64.sqrt())
}

/// The threshold `1 / (sqrt 3 - sqrt 2)^2 ≈ 9.899` in its commonly quoted
/// form. It is where `p'(1)` reaches `2 / (3 - sqrt 6)`, but `p_max` there is
/// about 0.952, so it does not make `p = 1` admissible.
pub fn gamma_threshold_quoted() -> f64 {
    (3f64.sqrt() - 2f64.sqrt()).powi(-2)
}

/// Novikov threshold on the separation parameter.
pub const NOVIKOV_GAMMA: f64 = 2.0;

/// Coefficient and functional-inequality data of one slow-fast system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBounds {
    pub n: usize,
    pub m: usize,
    pub kappa_x: f64,
    pub alpha: f64,
    pub kappa_y: f64,
    pub lambda_x: f64,
    pub big_lambda_x: f64,
    /// Upper bound on the eigenvalues of `A_X`, so `Tr A_X <= n lambda_bar_X`.
    pub lambda_bar_x: f64,
    pub lambda_y: f64,
    pub big_lambda_y: f64,
    pub c_p: f64,
    pub c_l: f64,
    pub c_v: f64,
    pub lip_bbar: f64,
}

impl CoefficientBounds {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(invalid("n", "dimensions must be at least 1"));
        }
        if !(self.kappa_x > 0.0) {
            return Err(invalid("kappa_x", "must be positive"));
        }
        if !(self.lambda_x > 0.0 && self.lambda_x <= self.big_lambda_x) {
            return Err(invalid("lambda_x", "need 0 < lambda_x <= Lambda_x"));
        }
        let named = [
            ("alpha", self.alpha),
            ("kappa_y", self.kappa_y),
            ("lambda_bar_x", self.lambda_bar_x),
            ("lambda_y", self.lambda_y),
            ("big_lambda_y", self.big_lambda_y),
            ("c_p", self.c_p),
            ("c_l", self.c_l),
            ("c_v", self.c_v),
            ("lip_bbar", self.lip_bbar),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Bounds of the scalar linear model at timescale `epsilon`, written in
    /// the fast-time normalization (`kappa_X = kappa_x / eps`, etc.).
    pub fn linear(p: &crate::model::LinearParams, epsilon: f64) -> Self {
        let ax = 0.5 * p.sigma_x * p.sigma_x / epsilon;
        let ay = 0.5 * p.sigma_y * p.sigma_y;
        Self {
            n: 1,
            m: 1,
            kappa_x: p.kappa_x / epsilon,
            alpha: 0.0,
            kappa_y: p.kappa_y,
            lambda_x: ax,
            big_lambda_x: ax,
            lambda_bar_x: ax,
            lambda_y: ay,
            big_lambda_y: ay,
            c_p: 0.0,
            c_l: 0.0,
            c_v: 0.0,
            lip_bbar: 0.0,
        }
    }
}

/// `gamma = kappa_X^2 lambda_Y / (Lambda_X kappa_Y^2)`.
pub fn timescale_gamma(b: &CoefficientBounds) -> Result<f64> {
    if !(b.big_lambda_x > 0.0) {
        return Err(invalid("big_lambda_x", "must be positive"));
    }
    if !(b.kappa_y > 0.0) {
        return Err(invalid("kappa_y", "must be positive"));
    }
    Ok(b.kappa_x * b.kappa_x * b.lambda_y / (b.big_lambda_x * b.kappa_y * b.kappa_y))
}

/// Admissible moment orders for a given separation `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub gamma: f64,
    pub p_max: f64,
    pub novikov_ok: bool,
    /// `p_max >= 1`, i.e. the strong estimate applies with `p = 1`.
    pub theorem_applicable: bool,
}

impl Admissibility {
    /// `p' = 1 / (1 - (p/2)(1 + sqrt(2/gamma)))`.
    pub fn p_prime(&self, p: f64) -> Result<f64> {
        let d = 1.0 - 0.5 * p * (1.0 + (2.0 / self.gamma).sqrt());
        if !(p > 0.0) || !(d > 0.0) {
            return Err(Error::PNotAdmissible { p, p_max: self.p_max });
        }
        Ok(1.0 / d)
    }
}

pub fn admissible_p(gamma: f64) -> Result<Admissibility> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "must be positive"));
    }
    let s = (2.0 / gamma).sqrt();
    let p_max = (2.0 / (1.0 + 2.0 / gamma + 2.0 * s)).clamp(0.0, 2.0);
    Ok(Admissibility {
        gamma,
        p_max,
        novikov_ok: gamma > NOVIKOV_GAMMA,
        theorem_applicable: p_max >= 1.0,
    })
}

/// `(p_-, p_+) = 1 + 2/gamma -+ 2 sqrt(2/gamma)`.
pub fn p_roots(gamma: f64) -> (f64, f64) {
    let s = 2.0 * (2.0 / gamma).sqrt();
    (1.0 + 2.0 / gamma - s, 1.0 + 2.0 / gamma + s)
}

/// `(q_-, q_+)`, the roots in `q` of `lambda(p, q) = gamma / 4`; real only
/// outside `(p_-, p_+)`.
pub fn q_roots(p: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(p > 1.0) || !(gamma > 0.0) {
        return Err(Error::DomainError(format!("q roots need p > 1 and gamma > 0 (p = {p})")));
    }
    let (pm, pp) = p_roots(gamma);
    let disc = (p - pm) * (p - pp);
    if disc < 0.0 {
        return Err(Error::DomainError(format!("p = {p} lies strictly between p_- and p_+")));
    }
    let pref = gamma * (p - 1.0) / (4.0 * p);
    let base = p - 1.0 + 2.0 / gamma;
    Ok((pref * (base - disc.sqrt()), pref * (base + disc.sqrt())))
}

/// `lambda(p, q) = q / (2 (p - 1)^2) (p + 1 / (q - 1))`.
pub fn lambda_pq(p: f64, q: f64) -> Result<f64> {
    if !(p > 1.0) || !(q > 1.0) {
        return Err(Error::DomainError(format!("lambda(p, q) needs p > 1 and q > 1 (p = {p}, q = {q})")));
    }
    Ok(q / (2.0 * (p - 1.0) * (p - 1.0)) * (p + 1.0 / (q - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentBound {
    pub bound: f64,
    pub r_minus: f64,
    pub r_plus: f64,
}

/// Bound `exp(2 beta kappa_X (alpha + n lambda_bar_X) t / (Lambda_X gamma))`
/// on `E exp(beta <M>_t)`, valid for `0 <= beta <= gamma / 4`.
pub fn exp_moment_bound(b: &CoefficientBounds, beta: f64, t: f64) -> Result<ExpMomentBound> {
    let gamma = timescale_gamma(b)?;
    if !(beta >= 0.0) {
        return Err(invalid("beta", "must be nonnegative"));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", "must be nonnegative"));
    }
    if beta > gamma / 4.0 {
        return Err(Error::BetaTooLarge { beta, limit: gamma / 4.0 });
    }
    let disc = (1.0 - 4.0 * beta / gamma).max(0.0).sqrt();
    let k = b.kappa_x / (2.0 * b.big_lambda_x);
    let rate = 2.0 * beta * b.kappa_x * (b.alpha + b.n as f64 * b.lambda_bar_x) / (b.big_lambda_x * gamma);
    Ok(ExpMomentBound { bound: (rate * t).exp(), r_minus: k * (1.0 - disc), r_plus: k * (1.0 + disc) })
}

fn check_covariance(cov: &DMatrix<f64>, m: usize) -> Result<()> {
    if cov.nrows() != m || cov.ncols() != m {
        return Err(invalid("cov_v", "must be m x m"));
    }
    let scale = 1.0 + cov.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..m {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::AsymmetricCovariance);
            }
        }
    }
    let sym = (cov + cov.transpose()) * 0.5;
    if sym.symmetric_eigenvalues().min() < -1e-8 * scale {
        return Err(Error::AsymmetricCovariance);
    }
    Ok(())
}

/// `1/2 sum a_ij^2 + sum a_ij Cov_ij`, shared by [`phi`] and [`psi`].
fn diffusion_terms(a_y: &DMatrix<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let m = a_y.nrows();
    if a_y.ncols() != m {
        return Err(invalid("a_y", "must be square"));
    }
    check_covariance(cov, m)?;
    Ok(0.5 * a_y.iter().map(|v| v * v).sum::<f64>() + a_y.component_mul(cov).sum())
}

/// `Phi = 1/2 |b_Y|^2 + 1/2 sum a_Y^2 + sum a_Y Cov(d_y V)`.
pub fn phi(b_y_at: &[f64], a_y_at: &DMatrix<f64>, cov_v: &DMatrix<f64>) -> Result<f64> {
    if b_y_at.len() != a_y_at.nrows() {
        return Err(invalid("b_y", "length must equal m"));
    }
    Ok(0.5 * b_y_at.iter().map(|v| v * v).sum::<f64>() + diffusion_terms(a_y_at, cov_v)?)
}

/// `Psi = 3 m kappa_Y^2 (alpha + n lambda_bar_X) / (2 kappa_X) + 3/2 |bbar|^2
/// + 1/2 sum a_Y^2 + sum a_Y Cov(d_y V)`.
pub fn psi(b: &CoefficientBounds, bbar_at: &[f64], a_y_at: &DMatrix<f64>, cov_v: &DMatrix<f64>) -> Result<f64> {
    if bbar_at.len() != a_y_at.nrows() {
        return Err(invalid("bbar", "length must equal m"));
    }
    Ok(psi_constant_term(b) + 1.5 * bbar_at.iter().map(|v| v * v).sum::<f64>() + diffusion_terms(a_y_at, cov_v)?)
}

/// The `y`-independent part `3 m kappa_Y^2 (alpha + n lambda_bar_X) / (2 kappa_X)`.
pub fn psi_constant_term(b: &CoefficientBounds) -> f64 {
    3.0 * b.m as f64 * b.kappa_y * b.kappa_y * (b.alpha + b.n as f64 * b.lambda_bar_x) / (2.0 * b.kappa_x)
}

/// Burkholder-Davis-Gundy `L^2` constant (Doob's).
pub const DEFAULT_BDG_C2: f64 = 4.0;

/// Bound on `(E sup |Y - Ybar|^p)^(2/p)` with the default BDG constant.
pub fn theorem1_bound(b: &CoefficientBounds, t: f64, p: f64, psi_integral: f64) -> Result<f64> {
    theorem1_bound_with_bdg(b, t, p, psi_integral, DEFAULT_BDG_C2)
}

/// As [`theorem1_bound`]; the martingale term carries `3 (2 C_2 + 1) c_P^2 T`.
pub fn theorem1_bound_with_bdg(b: &CoefficientBounds, t: f64, p: f64, psi_integral: f64, bdg_c2: f64) -> Result<f64> {
    b.validate()?;
    if !(t >= 0.0) || !(psi_integral >= 0.0) {
        return Err(invalid("t", "horizon and psi integral must be nonnegative"));
    }
    let gamma = timescale_gamma(b)?;
    let adm = admissible_p(gamma)?;
    if !(p >= 1.0 && p <= adm.p_max) {
        return Err(Error::PNotAdmissible { p, p_max: adm.p_max });
    }
    let p_prime = adm.p_prime(p)?;
    let mk2 = b.m as f64 * b.kappa_y * b.kappa_y;
    let denom = 4.0 - b.c_l * b.c_l * b.big_lambda_x * (mk2 + 3.0 * b.c_v * b.c_v);
    if !(denom > 0.0) {
        return Err(Error::DenominatorNonpositive { value: denom });
    }
    let pre = mk2
        * b.big_lambda_x
        * (3.0 * (2.0 * bdg_c2 + 1.0) * b.c_p * b.c_p * t + 2.0 * b.c_l * b.c_l / denom * psi_integral);
    let expo = 2.0 * p_prime * b.kappa_x * (b.alpha + b.n as f64 * b.lambda_bar_x) * t / (p * gamma * b.big_lambda_x)
        + 2.0 * b.lip_bbar * t;
    Ok(pre * expo.exp())
}

/// Auxiliary constants for one `(bounds, p, beta)` choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub gamma: f64,
    pub p: f64,
    pub p_max: f64,
    pub p_prime: Option<f64>,
    pub p_minus: f64,
    pub p_plus: f64,
    pub q_minus: Option<f64>,
    pub q_plus: Option<f64>,
    pub r_minus: f64,
    pub r_plus: f64,
    pub bdg_c2: f64,
}

impl TheoremConstants {
    pub fn evaluate(b: &CoefficientBounds, p: f64, beta: f64) -> Result<Self> {
        let gamma = timescale_gamma(b)?;
        let adm = admissible_p(gamma)?;
        let (p_minus, p_plus) = p_roots(gamma);
        let q = q_roots(p, gamma).ok();
        let em = exp_moment_bound(b, beta, 0.0)?;
        Ok(Self {
            gamma,
            p,
            p_max: adm.p_max,
            p_prime: adm.p_prime(p).ok(),
            p_minus,
            p_plus,
            q_minus: q.map(|r| r.0),
            q_plus: q.map(|r| r.1),
            r_minus: em.r_minus,
            r_plus: em.r_plus,
            bdg_c2: DEFAULT_BDG_C2,
        })
    }
}

/// Constants of the quadratic-plus-bounded gradient family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingAppConstants {
    pub epsilon: f64,
    pub kappa_x: f64,
    pub alpha: f64,
    pub lambda_x: f64,
    pub big_lambda_x: f64,
    pub lambda_bar_x: f64,
    pub lambda_y: f64,
    pub kappa_y: f64,
    pub c_v: f64,
    pub gamma: f64,
    pub c_l: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Threshold in the form `2 lambda_Q e^{-beta_X osc} beta_X / (|grad b_Y|^2 + 3 c_V^2)`.
    pub eps_threshold_c2: f64,
    /// Exact solution of `C_2 <= 1`: `2 lambda_Q^2 e^{-2 beta_X osc} beta_X / (m kappa_Y^2 + 3 c_V^2)`.
    pub eps_threshold_c2_exact: f64,
    pub c2_le_one: bool,
    /// `psi` bound pieces: constant part, `1/2 m beta_Y^-2`, and the factor
    /// `beta_X (beta_Y lambda_Q)^-1 e^{beta_X osc}` multiplying `sum Lip(d_y V)^2`.
    pub psi_constant: f64,
    pub psi_diffusion: f64,
    pub psi_lip_factor: f64,
    n: usize,
    m: usize,
}

impl AveragingAppConstants {
    /// Upper bound on `Psi(y)` given `|bbar(y)|^2` and `sum_i Lip(d_{y_i} V)^2`.
    pub fn psi_bound(&self, bbar_sq: f64, lip_dyv_sq_sum: f64) -> f64 {
        self.psi_constant + self.psi_diffusion + self.psi_lip_factor * lip_dyv_sq_sum + 1.5 * bbar_sq
    }

    /// General bounds with the given Poincare constant and `Lip(bbar)`.
    pub fn bounds(&self, c_p: f64, lip_bbar: f64) -> CoefficientBounds {
        CoefficientBounds {
            n: self.n,
            m: self.m,
            kappa_x: self.kappa_x,
            alpha: self.alpha,
            kappa_y: self.kappa_y,
            lambda_x: self.lambda_x,
            big_lambda_x: self.big_lambda_x,
            lambda_bar_x: self.lambda_bar_x,
            lambda_y: self.lambda_y,
            big_lambda_y: self.lambda_y,
            c_p,
            c_l: self.c_l,
            c_v: self.c_v,
            lip_bbar,
        }
    }
}

pub fn averaging_app_constants(
    params: &GradientModelParams,
    epsilon: f64,
    sup_grad_by: f64,
    sup_grad_h: f64,
    c_v: f64,
) -> Result<AveragingAppConstants> {
    params.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    if !(sup_grad_by > 0.0) || !(sup_grad_h >= 0.0) || !(c_v >= 0.0) {
        return Err(invalid("sup_grad_by", "gradient bounds must be nonnegative (b_Y gradient positive)"));
    }
    let (n, m) = (params.n as f64, params.m as f64);
    let lq = params.lambda_q();
    let bx = params.beta_x;
    let by = params.beta_y;
    let osc = params.osc_h();
    let inv = 1.0 / epsilon;
    let kappa_x = inv * lq;
    let alpha = inv * sup_grad_h / (4.0 * lq);
    let lambda_x = inv / bx;
    let kappa_y = sup_grad_by;
    let lambda_y = 1.0 / by;
    let gamma = inv * lq * lq / by / (kappa_y * kappa_y / bx);
    let c_l = epsilon / lq * (bx * osc).exp();
    let c1 = m * kappa_y * kappa_y / bx / (lq * lq) * (2.0 * bx * osc).exp();
    let mk2 = m * kappa_y * kappa_y;
    let denom = 4.0 - c_l * c_l * lambda_x * (mk2 + 3.0 * c_v * c_v);
    let c2 = if denom > 0.0 { 2.0 / denom } else { f64::INFINITY };
    let inner = sup_grad_h / (4.0 * lq) + n / bx;
    let c3 = kappa_y * kappa_y * inner / (lq / by);
    let eps_threshold_c2 = 2.0 * lq * (-bx * osc).exp() * bx / (kappa_y * kappa_y + 3.0 * c_v * c_v);
    let eps_threshold_c2_exact = 2.0 * lq * lq * (-2.0 * bx * osc).exp() * bx / (mk2 + 3.0 * c_v * c_v);
    Ok(AveragingAppConstants {
        epsilon,
        kappa_x,
        alpha,
        lambda_x,
        big_lambda_x: lambda_x,
        lambda_bar_x: lambda_x,
        lambda_y,
        kappa_y,
        c_v,
        gamma,
        c_l,
        c1,
        c2,
        c3,
        eps_threshold_c2,
        eps_threshold_c2_exact,
        c2_le_one: c2 <= 1.0,
        psi_constant: 3.0 * mk2 * inner / (2.0 * lq),
        psi_diffusion: 0.5 * m / (by * by),
        psi_lip_factor: bx / (by * lq) * (bx * osc).exp(),
        n: params.n,
        m: params.m,
    })
}

/// TAMD identifications at timescale `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamdConstants {
    pub epsilon: f64,
    pub kappa_x: f64,
    pub alpha: f64,
    pub kappa_y_sq_bound: f64,
    pub c_v_sq_bound: f64,
    pub big_lambda_x: f64,
    pub lambda_y: f64,
    pub gamma_lower: f64,
    /// Largest `epsilon` with `gamma_lower >= 1 / (sqrt 3 - sqrt 2)^2`.
    pub eps_threshold: f64,
}

impl TamdConstants {
    /// The closing threshold in its printed form
    /// `16 (sqrt 3 - sqrt 2)^2 Lambda_theta gamma_bar beta^-1 / (kappa_theta^2 b1)`;
    /// the divisor `b1` has no stated definition and is left to the caller.
    pub fn eps_threshold_printed(params: &TamdModelParams, b1: f64) -> Result<f64> {
        if !(b1 > 0.0) {
            return Err(invalid("b1", "must be positive"));
        }
        let s = (3f64.sqrt() - 2f64.sqrt()).powi(2);
        Ok(16.0 * s * params.big_lambda_theta * params.gamma_bar / params.beta
            / (params.kappa_theta * params.kappa_theta * b1))
    }
}

pub fn tamd_constants(params: &TamdModelParams, epsilon: f64) -> Result<TamdConstants> {
    if !(params.kappa_theta > 0.0) {
        return Err(invalid("kappa_theta", "must be positive"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let inv = 1.0 / epsilon;
    let k = params.kappa;
    let kt = params.kappa_theta;
    let big_lt = params.big_lambda_theta;
    let scale = kt * kt / (params.beta_bar * params.gamma_bar) / (16.0 * big_lt / params.beta);
    Ok(TamdConstants {
        epsilon,
        kappa_x: inv * k * kt / 4.0,
        alpha: 4.0 * inv * params.grad_v_sup / (k * kt) + inv * params.alpha_theta,
        kappa_y_sq_bound: k * k * big_lt,
        c_v_sq_bound: params.m as f64 * k * k * big_lt,
        big_lambda_x: inv / params.beta,
        lambda_y: 1.0 / (params.beta_bar * params.gamma_bar),
        gamma_lower: inv * scale,
        eps_threshold: scale / gamma_threshold(),
    })
}

/// Empirical one-sided Lipschitz fit of a fast drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSidedEstimate {
    pub kappa_hat: f64,
    pub alpha_hat: f64,
    pub dissipative: bool,
}

/// Log grid `10^(k/200)`, `k = -600..=600`, searched for the largest rate.
pub fn kappa_grid() -> impl DoubleEndedIterator<Item = f64> {
    (-600..=600).map(|k| 10f64.powf(k as f64 / 200.0))
}

/// Largest grid `kappa` such that `sup (x1-x2).(b(x1,y)-b(x2,y)) + kappa |x1-x2|^2`
/// over sampled pairs stays below `alpha_cap`; sampling under-estimates the
/// true supremum.
pub fn estimate_one_sided_lipschitz(
    b_x: &Drift,
    probe_box: &BoxDomain,
    y_probes: &[Vec<f64>],
    pairs: usize,
    seed: u64,
    alpha_cap: f64,
) -> Result<OneSidedEstimate> {
    if pairs < 100 {
        return Err(invalid("pairs", "at least 100 pairs"));
    }
    if y_probes.is_empty() {
        return Err(invalid("y_probes", "at least one slow probe"));
    }
    let n = probe_box.dim();
    let mut rng = auxiliary_rng(seed, 0);
    let mut samples = Vec::with_capacity(pairs);
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    for k in 0..pairs {
        let y = &y_probes[k % y_probes.len()];
        let x1: Vec<f64> = (0..n).map(|i| rng.random_range(probe_box.lo[i]..=probe_box.hi[i])).collect();
        let x2: Vec<f64> = (0..n).map(|i| rng.random_range(probe_box.lo[i]..=probe_box.hi[i])).collect();
        b_x(&x1, y, &mut b1);
        b_x(&x2, y, &mut b2);
        let mut s = 0.0;
        let mut d2 = 0.0;
        for i in 0..n {
            let d = x1[i] - x2[i];
            s += d * (b1[i] - b2[i]);
            d2 += d * d;
        }
        samples.push((s, d2));
    }
    Ok(one_sided_from_pairs(&samples, alpha_cap))
}

/// Grid search over `(inner product, squared distance)` pairs.
pub fn one_sided_from_pairs(samples: &[(f64, f64)], alpha_cap: f64) -> OneSidedEstimate {
    let alpha_at = |kappa: f64| samples.iter().map(|(s, d2)| s + kappa * d2).fold(0.0f64, f64::max);
    // alpha_at is nondecreasing in kappa, so scan from the top.
    for kappa in kappa_grid().rev() {
        let a = alpha_at(kappa);
        if a <= alpha_cap {
            return OneSidedEstimate { kappa_hat: kappa, alpha_hat: a, dissipative: true };
        }
    }
    let bottom = kappa_grid().next().unwrap();
    OneSidedEstimate { kappa_hat: bottom, alpha_hat: alpha_at(bottom), dissipative: false }
}

/// Entropy plateau `Phi / (2/c_L - Lambda_X c_L c_V^2 / 2)` of the
/// dissipation inequality; `None` when the rate is not positive.
pub fn entropy_plateau(phi_sup: f64, c_l: f64, big_lambda_x: f64, c_v: f64) -> Option<f64> {
    let rate = 2.0 / c_l - big_lambda_x * c_l * c_v * c_v / 2.0;
    (rate > 0.0).then(|| phi_sup / rate)
}

/// A flat `name = value` report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub entries: Vec<(String, f64)>,
}

impl ConstantsReport {
    pub fn push(&mut self, name: &str, value: f64) {
        self.entries.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {}\n", fmt_value(*v)));
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (k, v) in &self.entries {
            let value = serde_json::Number::from_f64(*v).map(serde_json::Value::Number).unwrap_or_else(|| {
                serde_json::Value::String(fmt_value(*v))
            });
            map.insert(k.clone(), value);
        }
        serde_json::Value::Object(map)
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::LinearParams;
    use proptest::prelude::*;

    fn unit_bounds() -> CoefficientBounds {
        CoefficientBounds {
            n: 1,
            m: 1,
            kappa_x: 1.0,
            alpha: 0.0,
            kappa_y: 1.0,
            lambda_x: 1.0,
            big_lambda_x: 1.0,
            lambda_bar_x: 1.0,
            lambda_y: 4.0,
            big_lambda_y: 4.0,
            c_p: 0.0,
            c_l: 0.0,
            c_v: 0.0,
            lip_bbar: 0.0,
        }
    }

    #[test]
    fn gamma_direct_and_quadratic() {
        let mut b = unit_bounds();
        b.kappa_x = 2.0;
        b.lambda_y = 1.0;
        assert_eq!(timescale_gamma(&b).unwrap(), 4.0);
        b.kappa_x = 4.0;
        assert_eq!(timescale_gamma(&b).unwrap(), 16.0);
        b.kappa_y = 0.0;
        assert!(timescale_gamma(&b).is_err());
    }

    #[test]
    fn p_max_golden_values() {
        assert!((gamma_threshold_quoted() - 9.899).abs() < 1e-3);
        assert!((admissible_p(gamma_threshold()).unwrap().p_max - 1.0).abs() < 1e-12);
        let quoted = admissible_p(gamma_threshold_quoted()).unwrap();
        assert!((quoted.p_max - 2.0 / (7.0 - 2.0 * 6f64.sqrt())).abs() < 1e-12);
        assert!(!quoted.theorem_applicable);
        assert!((quoted.p_prime(1.0).unwrap() - 2.0 / (3.0 - 6f64.sqrt())).abs() < 1e-9);
        assert!((admissible_p(1e12).unwrap().p_max - 2.0).abs() < 1e-5);
        let a = admissible_p(32.0).unwrap();
        assert!((a.p_prime(1.0).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!(a.novikov_ok && a.theorem_applicable);
        assert!(!admissible_p(1.5).unwrap().novikov_ok);
    }

    #[test]
    fn lambda_pq_hand_value_and_pole() {
        assert_eq!(lambda_pq(2.0, 2.0).unwrap(), 3.0);
        assert!(lambda_pq(2.0, 1.0 + 1e-9).unwrap() > 1e8);
        assert!(lambda_pq(1.0, 2.0).is_err());
    }

    #[test]
    fn exp_moment_hand_value() {
        let b = unit_bounds();
        assert_eq!(timescale_gamma(&b).unwrap(), 4.0);
        let e = exp_moment_bound(&b, 1.0, 1.0).unwrap();
        assert!((e.bound - 0.5f64.exp()).abs() < 1e-12);
        assert_eq!(e.r_minus, 0.5);
        assert_eq!(exp_moment_bound(&b, 0.7, 0.0).unwrap().bound, 1.0);
        assert!(matches!(exp_moment_bound(&b, 1.01, 1.0), Err(Error::BetaTooLarge { .. })));
    }

    #[test]
    fn phi_and_psi_hand_values() {
        let z = DMatrix::zeros(1, 1);
        assert_eq!(phi(&[0.0], &z, &z).unwrap(), 0.0);
        let a = DMatrix::from_element(1, 1, 2.0);
        let c = DMatrix::from_element(1, 1, 3.0);
        assert_eq!(phi(&[1.0], &a, &c).unwrap(), 8.5);
        let mut b = unit_bounds();
        b.alpha = 1.0;
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(psi(&b, &[2.0], &one, &one).unwrap(), 10.5);
        b.alpha = 0.0;
        b.lambda_bar_x = 0.0;
        assert_eq!(psi(&b, &[0.0], &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn covariance_shift_adds_trace_and_asymmetry_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]);
        let base = phi(&[0.5, 0.1], &a, &c).unwrap();
        let shifted = phi(&[0.5, 0.1], &a, &(&c + DMatrix::identity(2, 2) * 0.7)).unwrap();
        assert!((shifted - base - 0.7 * 4.0).abs() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 2.0]);
        assert_eq!(phi(&[0.0, 0.0], &a, &bad).unwrap_err(), Error::AsymmetricCovariance);
    }

    #[test]
    fn theorem1_trivial_and_quadratic_in_c_p() {
        let mut b = CoefficientBounds::linear(&LinearParams { kappa_x: 1.0, kappa_y: 1.0, sigma_x: 2f64.sqrt(), sigma_y: 2f64.sqrt() }, 1.0 / 32.0);
        b.c_l = 1.0 / 32.0;
        b.c_v = 1.0;
        assert_eq!(theorem1_bound(&b, 0.0, 1.0, 0.0).unwrap(), 0.0);
        b.c_p = 0.5;
        let one = theorem1_bound(&b, 1.0, 1.0, 0.0).unwrap();
        let expo = theorem1_bound(&CoefficientBounds { c_p: 0.0, ..b.clone() }, 1.0, 1.0, 1.0).unwrap();
        b.c_p = 1.0;
        let two = theorem1_bound(&b, 1.0, 1.0, 0.0).unwrap();
        assert!((two / one - 4.0).abs() < 1e-12);
        assert!(expo > 0.0);
        assert!(matches!(theorem1_bound(&b, 1.0, 1.9, 0.0), Err(Error::PNotAdmissible { .. })));
        b.c_l = 10.0;
        assert!(matches!(theorem1_bound(&b, 1.0, 1.0, 0.0), Err(Error::DenominatorNonpositive { .. })));
    }

    fn linear_gradient_family() -> GradientModelParams {
        LinearParams { kappa_x: 1.0, kappa_y: 1.0, sigma_x: 2f64.sqrt(), sigma_y: 2f64.sqrt() }.gradient_params()
    }

    #[test]
    fn gradient_family_identifications() {
        let p = linear_gradient_family();
        let a = averaging_app_constants(&p, 0.1, 1.0, 0.0, 1.0).unwrap();
        let b = averaging_app_constants(&p, 0.05, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(a.c1, b.c1);
        assert!((a.c1 - 1.0).abs() < 1e-15);
        let route = timescale_gamma(&a.bounds(0.0, 0.0)).unwrap();
        assert!((route - a.gamma).abs() <= 1e-12 * a.gamma);
        assert!((a.gamma - 10.0).abs() < 1e-12);
        assert!((a.c3 - 1.0).abs() < 1e-12);
        assert!(a.c2_le_one);
        let far = averaging_app_constants(&p, 0.9, 1.0, 0.0, 1.0).unwrap();
        assert!(far.epsilon > far.eps_threshold_c2_exact && !far.c2_le_one);
        // lambda_Q = 1 and osc(h) = 0: the two threshold forms coincide.
        assert!((a.eps_threshold_c2 - a.eps_threshold_c2_exact).abs() < 1e-15);
    }

    #[test]
    fn tamd_identifications() {
        let d = BoxDomain::symmetric(1, 3.0).unwrap();
        let mut p = TamdModelParams::one_dimensional(0.0, 4.0, 1.0, 1.0, d).unwrap();
        p.kappa_theta = 4.0;
        let c = tamd_constants(&p, 1.0).unwrap();
        assert_eq!(c.kappa_x, 4.0);
        let half = tamd_constants(&p, 0.5).unwrap();
        assert!((half.gamma_lower - 2.0 * c.gamma_lower).abs() < 1e-12);
        p.big_lambda_theta = 1e-12;
        let v = tamd_constants(&p, 1.0).unwrap();
        assert!(v.kappa_y_sq_bound < 1e-10 && v.c_v_sq_bound < 1e-10);
        let t = tamd_constants(&p, 1.0).unwrap();
        let at = tamd_constants(&p, t.eps_threshold).unwrap();
        assert!((at.gamma_lower - gamma_threshold()).abs() < 1e-9);
    }

    #[test]
    fn one_sided_fit_examples() {
        let bx = BoxDomain::symmetric(1, 3.0).unwrap();
        let ys = vec![vec![0.0]];
        let lin: Drift = Arc::new(|x, _, o| o[0] = -x[0]);
        let e = estimate_one_sided_lipschitz(&lin, &bx, &ys, 500, 1, 0.1).unwrap();
        assert!(e.dissipative && e.kappa_hat >= 0.99 && e.alpha_hat < 1e-9, "{e:?}");
        let wavy: Drift = Arc::new(|x, _, o| o[0] = -x[0] + x[0].sin());
        let e = estimate_one_sided_lipschitz(&wavy, &bx, &ys, 2000, 1, 2.0).unwrap();
        assert!(e.kappa_hat >= 0.4 && e.alpha_hat <= 2.0 * 6.0);
        // Brute-force oracle on a deterministic pair grid at the fitted rate.
        let grid: Vec<f64> = (0..=300).map(|i| -3.0 + 0.02 * i as f64).collect();
        let mut oracle: f64 = 0.0;
        for &a in &grid {
            for &b in &grid {
                let s = (a - b) * ((-a + a.sin()) - (-b + b.sin()));
                oracle = oracle.max(s + e.kappa_hat * (a - b) * (a - b));
            }
        }
        assert!(e.alpha_hat <= oracle + 1e-12);
        let up: Drift = Arc::new(|x, _, o| o[0] = x[0]);
        let e = estimate_one_sided_lipschitz(&up, &bx, &ys, 500, 1, 0.1).unwrap();
        assert!(!e.dissipative && e.kappa_hat == 1e-3);
    }

    #[test]
    fn report_formats() {
        let mut r = ConstantsReport::default();
        r.push("gamma", 32.0);
        r.push("c2", f64::INFINITY);
        assert!(r.to_key_value().starts_with("gamma = 3.2"));
        assert_eq!(r.to_json()["gamma"], 32.0);
        assert_eq!(r.to_json()["c2"], "inf");
    }

    proptest! {
        #[test]
        fn lambda_at_q_plus_is_quarter_gamma(gamma in 10.0f64..1e4, u in 0.0f64..1.0) {
            let (_, pp) = p_roots(gamma);
            let p = pp + u * (2.0 - pp);
            prop_assume!(p > 1.0);
            let (_, qp) = q_roots(p, gamma).unwrap();
            let l = lambda_pq(p, qp).unwrap();
            prop_assert!((l - gamma / 4.0).abs() <= 1e-12 * gamma / 4.0);
        }

        #[test]
        fn p_max_increasing_in_gamma(g in 0.01f64..1e5, f in 1.0001f64..4.0) {
            prop_assert!(admissible_p(g * f).unwrap().p_max > admissible_p(g).unwrap().p_max);
        }

        #[test]
        fn p_prime_increasing_and_above_dual(g in 10.0f64..1e5, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let a = admissible_p(g).unwrap();
            let (lo, hi) = (u.min(v), u.max(v));
            prop_assume!(hi - lo > 1e-9);
            let p1 = 1.0 + lo * (a.p_max - 1.0);
            let p2 = 1.0 + hi * (a.p_max - 1.0);
            prop_assume!(p2 < a.p_max);
            prop_assert!(a.p_prime(p2).unwrap() > a.p_prime(p1).unwrap());
            prop_assert!(a.p_prime(p1).unwrap() > 2.0 / (2.0 - p1));
        }

        #[test]
        fn p_prime_range_at_p_one(g in 11.6f64..1e6) {
            let a = admissible_p(g).unwrap();
            prop_assume!(a.theorem_applicable);
            let pp = a.p_prime(1.0).unwrap();
            prop_assert!(pp > 2.0 && pp < 2.0 / (3.0 - 2f64.sqrt() * 3f64.sqrt()));
        }

        #[test]
        fn exp_moment_unity_at_zero_beta(t in 0.0f64..100.0) {
            prop_assert_eq!(exp_moment_bound(&unit_bounds(), 0.0, t).unwrap().bound, 1.0);
        }

        #[test]
        fn theorem1_monotone(c_p in 0.0f64..2.0, t in 0.0f64..3.0, psi_i in 0.0f64..10.0, lip in 0.0f64..2.0, d in 0.0f64..1.0) {
            let mut b = CoefficientBounds::linear(&LinearParams { kappa_x: 1.0, kappa_y: 1.0, sigma_x: 1.0, sigma_y: 1.0 }, 0.01);
            b.c_l = 0.01;
            b.c_v = 1.0;
            b.c_p = c_p;
            b.lip_bbar = lip;
            let base = theorem1_bound(&b, t, 1.0, psi_i).unwrap();
            let more_c_p = CoefficientBounds { c_p: c_p + d, ..b.clone() };
            let more_lip = CoefficientBounds { lip_bbar: lip + d, ..b.clone() };
            prop_assert!(theorem1_bound(&more_c_p, t, 1.0, psi_i).unwrap() >= base);
            prop_assert!(theorem1_bound(&more_lip, t, 1.0, psi_i).unwrap() >= base);
            prop_assert!(theorem1_bound(&b, t + d, 1.0, psi_i).unwrap() >= base);
            prop_assert!(theorem1_bound(&b, t, 1.0, psi_i + d).unwrap() >= base);
        }

        #[test]
        fn gradient_gamma_route(eps in 1e-4f64..1.0, lq in 0.1f64..5.0, bx in 0.1f64..5.0, by in 0.1f64..5.0, gb in 0.1f64..5.0) {
            let mut p = linear_gradient_family();
            p.q = DMatrix::from_element(1, 1, lq);
            p.beta_x = bx;
            p.beta_y = by;
            let a = averaging_app_constants(&p, eps, gb, 0.0, 0.0).unwrap();
            let display = lq * lq / by / (gb * gb / bx) / eps;
            prop_assert!((timescale_gamma(&a.bounds(0.0, 0.0)).unwrap() - display).abs() <= 1e-12 * display);
        }
    }
}
