//! Tensor-product trapezoidal quadrature on boxes of dimension one or two.

use crate::error::{invalid, Error, Result};

/// Boundary-ring mass above this fraction means the box truncates the density.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

/// Nodes with normalized weights of a density on a [`QuadGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Fraction of mass carried by the outermost ring of cells.
    pub tail_mass: f64,
}

impl QuadGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || cells.len() != d {
            return Err(invalid("grid", "lo, hi and cells must have the same nonzero length"));
        }
        if d > 2 {
            return Err(Error::DimensionTooHigh { dim: d, max: 2 });
        }
        for i in 0..d {
            if !(hi[i] > lo[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(invalid("grid", "each interval needs lo < hi"));
            }
            if cells[i] < 4 {
                return Err(invalid("grid", "at least 4 cells per dimension"));
            }
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn uniform_1d(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![cells])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn spacing(&self, i: usize) -> f64 {
        (self.hi[i] - self.lo[i]) / self.cells[i] as f64
    }

    /// Calls `visit(point, trapezoid_weight, on_boundary_ring)` for every node.
    fn for_each_node(&self, mut visit: impl FnMut(&[f64], f64, bool)) {
        let d = self.dim();
        let mut p = vec![0.0; d];
        let n0 = self.cells[0];
        let n1 = if d == 2 { self.cells[1] } else { 0 };
        for j in 0..=n1 {
            for i in 0..=n0 {
                let idx = [i, j];
                let mut w = 1.0;
                let mut ring = false;
                for a in 0..d {
                    let n = self.cells[a];
                    let k = idx[a];
                    p[a] = self.lo[a] + k as f64 * self.spacing(a);
                    let edge = k == 0 || k == n;
                    w *= self.spacing(a) * if edge { 0.5 } else { 1.0 };
                    ring |= k <= 1 || k + 1 >= n;
                }
                visit(&p, w, ring);
            }
        }
    }

    /// Plain trapezoidal integral of `f` over the box.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = crate::stats::NeumaierSum::new();
        self.for_each_node(|p, w, _| acc.add(w * f(p)));
        acc.value()
    }

    /// `log int exp(log_f)` over the box, shifted by the grid maximum.
    pub fn log_integral(&self, log_f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        self.for_each_node(|p, _, _| max = max.max(log_f(p)));
        max + self.integrate(|p| (log_f(p) - max).exp()).ln()
    }

    /// Normalized rule for an unnormalized, nonnegative density.
    pub fn rule(&self, density: impl Fn(&[f64]) -> f64) -> Result<QuadRule> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut ring_mass = 0.0;
        let mut bad = false;
        self.for_each_node(|p, w, ring| {
            let v = density(p);
            if !(v >= 0.0) || !v.is_finite() {
                bad = true;
            }
            let mass = w * v;
            if ring {
                ring_mass += mass;
            }
            points.extend_from_slice(p);
            weights.push(mass);
        });
        if bad {
            return Err(Error::DomainError("density must be finite and nonnegative on the grid".into()));
        }
        let total = crate::stats::compensated_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::DegenerateDensity);
        }
        for w in &mut weights {
            *w /= total;
        }
        let tail_mass = ring_mass / total;
        if tail_mass > TAIL_MASS_LIMIT {
            return Err(Error::TailMassTooLarge { mass: tail_mass });
        }
        Ok(QuadRule { dim: self.dim(), points, weights, tail_mass })
    }

    /// Like [`QuadGrid::rule`] but takes the log-density, shifted by its grid
    /// maximum before exponentiation.
    pub fn rule_from_log(&self, log_density: impl Fn(&[f64]) -> f64) -> Result<QuadRule> {
        let mut max = f64::NEG_INFINITY;
        self.for_each_node(|p, _, _| max = max.max(log_density(p)));
        if !max.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        self.rule(|p| (log_density(p) - max).exp())
    }
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = crate::stats::NeumaierSum::new();
        for (k, w) in self.weights.iter().enumerate() {
            acc.add(w * f(self.point(k)));
        }
        acc.value()
    }

    /// Componentwise expectation of a vector-valued `f` with `out_dim` outputs.
    pub fn expect_vec(&self, out_dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
        let mut acc: Vec<crate::stats::NeumaierSum> = (0..out_dim).map(|_| Default::default()).collect();
        let mut buf = vec![0.0; out_dim];
        for (k, w) in self.weights.iter().enumerate() {
            f(self.point(k), &mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                a.add(w * v);
            }
        }
        acc.iter().map(|a| a.value()).collect()
    }
}
