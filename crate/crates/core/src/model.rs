//! Slow-fast model definitions.
//!
//! A [`ModelSpec`] describes
//!
//! ```text
//! dX = eps^-1 b_X(X, Y) dt + eps^-1/2 sigma_X(X, Y) dB^X
//! dY =        b_Y(X, Y) dt +          sigma_Y(Y)    dB^Y
//! ```
//!
//! with coefficient closures that write into caller-provided buffers.
//! Matrices are row-major.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `(x, y, out)` drift closure.
pub type Drift = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(x, y, out)` fast diffusion closure writing an `n x n` matrix.
pub type FastDiffusion = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(y, out)` slow diffusion closure writing an `m x m` matrix.
pub type SlowDiffusion = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `(y, standard_normals, out)`: maps `n` standard normals to a draw from
/// the frozen invariant measure `mu^y`.
pub type InvariantSampler = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Scalar function of a point.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Vector map `(point, out)`.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    Linear,
    Gradient61,
    Tamd62,
    Custom,
}

#[derive(Clone)]
pub struct ModelSpec {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub b_x: Drift,
    pub sigma_x: FastDiffusion,
    pub b_y: Drift,
    pub sigma_y: SlowDiffusion,
    pub family: FamilyTag,
    /// Drift stiffness scale of `b_X` (unscaled), used by the explicit
    /// stability guard and the default substep rule.
    pub stiffness: Option<f64>,
    /// Exact sampler for `mu^y`, when one is known.
    pub mu_sampler: Option<InvariantSampler>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("epsilon", &self.epsilon)
            .field("family", &self.family)
            .field("stiffness", &self.stiffness)
            .field("mu_sampler", &self.mu_sampler.is_some())
            .finish()
    }
}

impl ModelSpec {
    pub fn new(
        n: usize,
        m: usize,
        epsilon: f64,
        b_x: Drift,
        sigma_x: FastDiffusion,
        b_y: Drift,
        sigma_y: SlowDiffusion,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "fast dimension must be at least 1"));
        }
        if m == 0 {
            return Err(invalid("m", "slow dimension must be at least 1"));
        }
        check_epsilon(epsilon)?;
        Ok(Self {
            n,
            m,
            epsilon,
            b_x,
            sigma_x,
            b_y,
            sigma_y,
            family: FamilyTag::Custom,
            stiffness: None,
            mu_sampler: None,
        })
    }

    pub fn with_family(mut self, family: FamilyTag) -> Self {
        self.family = family;
        self
    }

    pub fn with_stiffness(mut self, stiffness: f64) -> Self {
        self.stiffness = Some(stiffness);
        self
    }

    pub fn with_mu_sampler(mut self, sampler: InvariantSampler) -> Self {
        self.mu_sampler = Some(sampler);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        self.epsilon = epsilon;
        Ok(self)
    }

    /// `A_X = 1/2 sigma_X sigma_X^T` of the unscaled fast diffusion.
    pub fn a_x(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.n * self.n];
        (self.sigma_x)(x, y, &mut buf);
        let s = DMatrix::from_row_slice(self.n, self.n, &buf);
        0.5 * &s * s.transpose()
    }

    /// `A_Y = 1/2 sigma_Y sigma_Y^T`.
    pub fn a_y(&self, y: &[f64]) -> DMatrix<f64> {
        let s = self.sigma_y_matrix(y);
        0.5 * &s * s.transpose()
    }

    pub fn sigma_y_matrix(&self, y: &[f64]) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.m * self.m];
        (self.sigma_y)(y, &mut buf);
        DMatrix::from_row_slice(self.m, self.m, &buf)
    }

    /// Checks that `sigma_Y` is numerically invertible at every probe.
    pub fn check_sigma_y(&self, probes: &[Vec<f64>]) -> Result<()> {
        for (k, y) in probes.iter().enumerate() {
            let smallest = smallest_singular_value(&self.sigma_y_matrix(y));
            if !(smallest > 1e-10) {
                return Err(Error::SingularSigmaY { step: k, smallest });
            }
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
    }
    Ok(())
}

pub(crate) fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn constant_diagonal(dim: usize, value: f64) -> Arc<dyn Fn(&mut [f64]) + Send + Sync> {
    Arc::new(move |out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..dim {
            out[i * dim + i] = value;
        }
    })
}

fn isotropic_fast(dim: usize, value: f64) -> FastDiffusion {
    let fill = constant_diagonal(dim, value);
    Arc::new(move |_x: &[f64], _y: &[f64], out: &mut [f64]| fill(out))
}

fn isotropic_slow(dim: usize, value: f64) -> SlowDiffusion {
    let fill = constant_diagonal(dim, value);
    Arc::new(move |_y: &[f64], out: &mut [f64]| fill(out))
}

/// Scalar linear slow-fast system
///
/// ```text
/// b_X = -kappa_x (x - y),  sigma_X = sigma_x,
/// b_Y = -kappa_y (y - x),  sigma_Y = sigma_y.
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_x > 0.0) {
            return Err(invalid("kappa_x", "must be positive"));
        }
        if !(self.kappa_y >= 0.0) {
            return Err(invalid("kappa_y", "must be nonnegative"));
        }
        if !(self.sigma_x >= 0.0) {
            return Err(invalid("sigma_x", "must be nonnegative"));
        }
        if !(self.sigma_y > 0.0) {
            return Err(invalid("sigma_y", "must be positive (sigma_Y must be invertible)"));
        }
        Ok(())
    }

    /// Stationary variance of the frozen fast process.
    pub fn frozen_variance(&self) -> f64 {
        self.sigma_x * self.sigma_x / (2.0 * self.kappa_x)
    }

    pub fn model(&self, epsilon: f64) -> Result<ModelSpec> {
        self.validate()?;
        let LinearParams { kappa_x, kappa_y, sigma_x, sigma_y } = *self;
        let b_x: Drift = Arc::new(move |x, y, out| out[0] = -kappa_x * (x[0] - y[0]));
        let b_y: Drift = Arc::new(move |x, y, out| out[0] = -kappa_y * (y[0] - x[0]));
        let sd = self.frozen_variance().sqrt();
        let sampler: InvariantSampler = Arc::new(move |y, z, out| out[0] = y[0] + sd * z[0]);
        Ok(ModelSpec::new(1, 1, epsilon, b_x, isotropic_fast(1, sigma_x), b_y, isotropic_slow(1, sigma_y))?
            .with_family(FamilyTag::Linear)
            .with_stiffness(kappa_x)
            .with_mu_sampler(sampler))
    }

    /// Same system seen as a member of the quadratic gradient family:
    /// `V = kappa_x (x - y)^2 / 2`, `beta_X = 2 / sigma_x^2`.
    pub fn gradient_params(&self) -> GradientModelParams {
        let sx = self.sigma_x;
        let sy = self.sigma_y;
        GradientModelParams {
            n: 1,
            m: 1,
            q: DMatrix::from_element(1, 1, self.kappa_x),
            g: AffineMap::identity(1),
            h: None,
            beta_x: 2.0 / (sx * sx),
            beta_y: 2.0 / (sy * sy),
        }
    }
}

/// Affine map `y -> A y + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(invalid("offset", "length must match the number of matrix rows"));
        }
        Ok(Self { matrix, offset })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), offset: DVector::zeros(dim) }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.matrix.nrows()) {
            let mut acc = self.offset[i];
            for (j, vj) in v.iter().enumerate() {
                acc += self.matrix[(i, j)] * vj;
            }
            *o = acc;
        }
    }
}

/// Bounded perturbation `h(x, y)` of the quadratic potential.
#[derive(Clone)]
pub struct BoundedPerturbation {
    pub value: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    pub grad_x: Drift,
    /// `sup h - inf h`.
    pub osc: f64,
    /// `sup |grad_x h|`.
    pub grad_x_sup: f64,
    /// Bound on the Hessian of `h` in `x` (stiffness contribution).
    pub hessian_bound: f64,
}

impl fmt::Debug for BoundedPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedPerturbation")
            .field("osc", &self.osc)
            .field("grad_x_sup", &self.grad_x_sup)
            .finish()
    }
}

impl BoundedPerturbation {
    /// `h(x, y) = a * sum_i cos(w x_i)`.
    pub fn cosine(n: usize, amplitude: f64, frequency: f64) -> Self {
        Self {
            value: Arc::new(move |x, _y| amplitude * x.iter().map(|v| (frequency * v).cos()).sum::<f64>()),
            grad_x: Arc::new(move |x, _y, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -amplitude * frequency * (frequency * v).sin();
                }
            }),
            osc: 2.0 * amplitude.abs() * n as f64,
            grad_x_sup: amplitude.abs() * frequency.abs() * (n as f64).sqrt(),
            hessian_bound: amplitude.abs() * frequency * frequency,
        }
    }
}

/// Quadratic-plus-bounded gradient family
/// `V(x, y) = 1/2 (x - g(y))^T Q (x - g(y)) + h(x, y)` with
/// `b_X = -grad_x V`, `sigma_X = sqrt(2 / beta_X) Id`,
/// `sigma_Y = sqrt(2 / beta_Y) Id`.
#[derive(Debug, Clone)]
pub struct GradientModelParams {
    pub n: usize,
    pub m: usize,
    pub q: DMatrix<f64>,
    pub g: AffineMap,
    pub h: Option<BoundedPerturbation>,
    pub beta_x: f64,
    pub beta_y: f64,
}

impl GradientModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.q.nrows() != self.n || self.q.ncols() != self.n {
            return Err(invalid("q", "must be n x n"));
        }
        if (&self.q - self.q.transpose()).abs().max() > 1e-12 * (1.0 + self.q.abs().max()) {
            return Err(invalid("q", "must be symmetric"));
        }
        if !(self.lambda_q() > 0.0) {
            return Err(invalid("q", "must be positive definite"));
        }
        if self.g.matrix.nrows() != self.n || self.g.matrix.ncols() != self.m {
            return Err(invalid("g", "must map R^m to R^n"));
        }
        if !(self.beta_x > 0.0) || !(self.beta_y > 0.0) {
            return Err(invalid("beta", "inverse temperatures must be positive"));
        }
        if let Some(h) = &self.h {
            if !h.osc.is_finite() || h.osc < 0.0 {
                return Err(invalid("h", "oscillation must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn lambda_q(&self) -> f64 {
        self.q.clone().symmetric_eigenvalues().min()
    }

    pub fn lambda_q_max(&self) -> f64 {
        self.q.clone().symmetric_eigenvalues().max()
    }

    pub fn osc_h(&self) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h.osc)
    }

    pub fn grad_h_sup(&self) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h.grad_x_sup)
    }

    /// `V(x, y)`.
    pub fn potential(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut gy = vec![0.0; self.n];
        self.g.apply(y, &mut gy);
        let d = DVector::from_iterator(self.n, x.iter().zip(&gy).map(|(a, b)| a - b));
        let quad = 0.5 * d.dot(&(&self.q * &d));
        quad + self.h.as_ref().map_or(0.0, |h| (h.value)(x, y))
    }

    /// Covariance `(beta_X Q)^-1` of `mu^y` when `h == 0`.
    pub fn gaussian_covariance(&self) -> DMatrix<f64> {
        (self.q.clone() * self.beta_x)
            .try_inverse()
            .expect("validated Q is invertible")
    }

    pub fn model(&self, epsilon: f64, b_y: Drift) -> Result<ModelSpec> {
        self.validate()?;
        let n = self.n;
        let q = self.q.clone();
        let g = self.g.clone();
        let h = self.h.clone();
        let b_x: Drift = Arc::new(move |x, y, out| {
            let mut gy = vec![0.0; n];
            g.apply(y, &mut gy);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += q[(i, j)] * (x[j] - gy[j]);
                }
                out[i] = -acc;
            }
            if let Some(h) = &h {
                let mut gh = vec![0.0; n];
                (h.grad_x)(x, y, &mut gh);
                for i in 0..n {
                    out[i] -= gh[i];
                }
            }
        });
        let stiffness = self.lambda_q_max() + self.h.as_ref().map_or(0.0, |h| h.hessian_bound);
        let mut spec = ModelSpec::new(
            n,
            self.m,
            epsilon,
            b_x,
            isotropic_fast(n, (2.0 / self.beta_x).sqrt()),
            b_y,
            isotropic_slow(self.m, (2.0 / self.beta_y).sqrt()),
        )?
        .with_family(FamilyTag::Gradient61)
        .with_stiffness(stiffness);
        if self.h.is_none() {
            let chol = nalgebra::Cholesky::new(self.gaussian_covariance())
                .ok_or_else(|| invalid("q", "covariance is not positive definite"))?;
            let l = chol.l();
            let g = self.g.clone();
            spec = spec.with_mu_sampler(Arc::new(move |y, z, out| {
                g.apply(y, out);
                for i in 0..n {
                    for j in 0..=i {
                        out[i] += l[(i, j)] * z[j];
                    }
                }
            }));
        }
        Ok(spec)
    }
}

/// Slow drift `b_Y(x, y) = B_x x + B_y y + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSlowDrift {
    pub bx: DMatrix<f64>,
    pub by: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineSlowDrift {
    pub fn new(bx: DMatrix<f64>, by: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let m = c.len();
        if bx.nrows() != m || by.nrows() != m || by.ncols() != m {
            return Err(invalid("b_y", "inconsistent affine slow drift shapes"));
        }
        Ok(Self { bx, by, c })
    }

    /// `sup_x |grad_x b_Y|` in operator norm.
    pub fn grad_x_sup(&self) -> f64 {
        self.bx.clone().singular_values().max()
    }

    pub fn drift(&self) -> Drift {
        let this = self.clone();
        Arc::new(move |x, y, out| {
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = this.c[i];
                for (j, xj) in x.iter().enumerate() {
                    acc += this.bx[(i, j)] * xj;
                }
                for (j, yj) in y.iter().enumerate() {
                    acc += this.by[(i, j)] * yj;
                }
                *o = acc;
            }
        })
    }
}

/// Axis-aligned box in `R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("domain", "bounds must have equal, nonzero length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(invalid("domain", "each lower bound must be below its upper bound"));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Temperature-accelerated MD parameters
///
/// ```text
/// U(x, y) = V(x) + kappa/2 |y - theta(x)|^2
/// dX = -eps^-1 grad_x U dt + sqrt(2 (beta eps)^-1) dB^X
/// dY = -gamma_bar^-1 kappa (Y - theta(X)) dt + sqrt(2 (beta_bar gamma_bar)^-1) dB^Y
/// ```
#[derive(Clone)]
pub struct TamdModelParams {
    pub n: usize,
    pub m: usize,
    pub v: ScalarFn,
    pub grad_v: VectorFn,
    /// `sup |grad V|` (infinite when `V` is not globally Lipschitz).
    pub grad_v_sup: f64,
    pub theta: VectorFn,
    /// Jacobian of `theta`, `m x n` row-major.
    pub theta_jacobian: VectorFn,
    pub lambda_theta: f64,
    pub big_lambda_theta: f64,
    pub kappa_theta: f64,
    pub alpha_theta: f64,
    pub kappa: f64,
    pub beta: f64,
    pub beta_bar: f64,
    pub gamma_bar: f64,
    pub domain: BoxDomain,
    /// Stiffness of `grad_x U` used by the stability guard.
    pub stiffness: f64,
    pub mu_sampler: Option<InvariantSampler>,
}

impl fmt::Debug for TamdModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TamdModelParams")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("kappa", &self.kappa)
            .field("beta", &self.beta)
            .field("beta_bar", &self.beta_bar)
            .field("gamma_bar", &self.gamma_bar)
            .field("domain", &self.domain)
            .finish()
    }
}

impl TamdModelParams {
    /// One-dimensional instance with `theta(x) = x`, `V(x) = c x^2 / 2`
    /// and `beta = 1`, so that the frozen measure is Gaussian. The standing
    /// condition `kappa > 1` is checked by [`TamdModelParams::validate`].
    pub fn one_dimensional(
        v_stiffness: f64,
        kappa: f64,
        beta_bar: f64,
        gamma_bar: f64,
        domain: BoxDomain,
    ) -> Result<Self> {
        let c = v_stiffness;
        let beta = 1.0;
        let precision = beta * (c + kappa);
        let sd = precision.sqrt().recip();
        let params = Self {
            n: 1,
            m: 1,
            v: Arc::new(move |x| 0.5 * c * x[0] * x[0]),
            grad_v: Arc::new(move |x, out| out[0] = c * x[0]),
            grad_v_sup: if c == 0.0 { 0.0 } else { f64::INFINITY },
            theta: Arc::new(|x, out| out[0] = x[0]),
            theta_jacobian: Arc::new(|_x, out| out[0] = 1.0),
            lambda_theta: 1.0,
            big_lambda_theta: 1.0,
            kappa_theta: 2.0,
            alpha_theta: 0.0,
            kappa,
            beta,
            beta_bar,
            gamma_bar,
            domain,
            stiffness: c + kappa,
            mu_sampler: Some(Arc::new(move |y, z, out| {
                out[0] = kappa * y[0] / (c + kappa) + sd * z[0];
            })),
        };
        if !(kappa > 0.0 && c >= 0.0) {
            return Err(invalid("kappa", "need kappa > 0 and a nonnegative V stiffness"));
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(invalid("kappa", "coupling strength must be positive"));
        }
        if !(self.beta > 0.0 && self.beta_bar > 0.0) {
            return Err(invalid("beta", "inverse temperatures must be positive"));
        }
        if !(self.gamma_bar > 0.0) {
            return Err(invalid("gamma_bar", "friction must be positive"));
        }
        if !(self.lambda_theta > 0.0) {
            return Err(invalid("lambda_theta", "must be positive"));
        }
        if !(self.lambda_theta * self.kappa > self.big_lambda_theta / self.beta) {
            return Err(invalid(
                "kappa",
                "requires lambda_theta * kappa > Lambda_theta / beta",
            ));
        }
        if self.domain.dim() != self.m {
            return Err(invalid("domain", "dimension must equal m"));
        }
        Ok(())
    }

    pub fn model(&self, epsilon: f64) -> Result<ModelSpec> {
        self.validate()?;
        let (n, m) = (self.n, self.m);
        let kappa = self.kappa;
        let gamma_bar = self.gamma_bar;
        let grad_v = self.grad_v.clone();
        let theta = self.theta.clone();
        let jac = self.theta_jacobian.clone();
        let b_x: Drift = Arc::new(move |x, y, out| {
            let mut th = vec![0.0; m];
            let mut dth = vec![0.0; m * n];
            grad_v(x, out);
            theta(x, &mut th);
            jac(x, &mut dth);
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += dth[k * n + i] * (th[k] - y[k]);
                }
                *o = -(*o + kappa * acc);
            }
        });
        let theta = self.theta.clone();
        let b_y: Drift = Arc::new(move |x, y, out| {
            let mut th = vec![0.0; m];
            theta(x, &mut th);
            for k in 0..m {
                out[k] = -kappa * (y[k] - th[k]) / gamma_bar;
            }
        });
        let mut spec = ModelSpec::new(
            n,
            m,
            epsilon,
            b_x,
            isotropic_fast(n, (2.0 / self.beta).sqrt()),
            b_y,
            isotropic_slow(m, (2.0 / (self.beta_bar * self.gamma_bar)).sqrt()),
        )?
        .with_family(FamilyTag::Tamd62)
        .with_stiffness(self.stiffness);
        if let Some(s) = &self.mu_sampler {
            spec = spec.with_mu_sampler(s.clone());
        }
        Ok(spec)
    }
}
