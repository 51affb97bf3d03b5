//! Small statistical helpers shared by the Monte Carlo layers.
//!
//! All reductions go through [`NeumaierSum`] over replica-ordered
//! vectors, so results do not depend on how replicas were scheduled.

use rayon::prelude::*;

use crate::error::Result;

/// Compensated (Kahan-Babuska-Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64
}

/// Batch-means estimate of a time average and its standard error.
///
/// The series is cut into `batches` contiguous blocks; the standard error
/// is that of the block means. Trailing samples that do not fill a block
/// are dropped.
pub fn batch_means(series: &[f64], batches: usize) -> (f64, f64) {
    let batches = batches.max(2);
    let len = series.len() / batches;
    if len == 0 {
        return mean_and_se(series);
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| compensated_sum(series[b * len..(b + 1) * len].iter().copied()) / len as f64)
        .collect();
    mean_and_se(&means)
}

/// Weighted least squares fit `y = intercept + slope * x`.
///
/// Returns `(slope, intercept)`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw = compensated_sum(w.iter().copied());
    let mx = compensated_sum(x.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let my = compensated_sum(y.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let sxy = compensated_sum(
        x.iter()
            .zip(y)
            .zip(w)
            .map(|((a, b), c)| c * (a - mx) * (b - my)),
    );
    let sxx = compensated_sum(x.iter().zip(w).map(|(a, c)| c * (a - mx) * (a - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Runs `f` for every replica index in parallel and returns the results in
/// replica order.
pub fn map_replicas<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(vals), 2.0);
    }

    #[test]
    fn mean_se_of_constant_is_exact() {
        let (m, se) = mean_and_se(&[3.0; 17]);
        assert_eq!(m, 3.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn exact_line_is_recovered() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 2.0).collect();
        let (s, c) = weighted_linear_fit(&x, &y, &[1.0, 2.0, 3.0, 1.0, 1.0, 5.0]);
        assert!((s - 0.5).abs() < 1e-14);
        assert!((c + 2.0).abs() < 1e-14);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&v, 0.5), 1.5);
        assert_eq!(quantile(&v, 1.0), 3.0);
    }
}
