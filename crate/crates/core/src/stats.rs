//! Summation and empirical-distribution helpers shared by the estimators
//! and the Monte Carlo drivers.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
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

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value()
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation with the `n − 1` divisor.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss = compensated_sum(values.iter().map(|v| (v - m) * (v - m)));
    (ss / (n - 1) as f64).sqrt()
}

/// `sqrt(mean(e²))`.
pub fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (compensated_sum(errors.iter().map(|e| e * e)) / errors.len() as f64).sqrt()
}

/// Empirical CDF over a pooled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    /// NaNs are dropped.
    pub fn new(mut values: Vec<f64>) -> Self {
        values.retain(|v| !v.is_nan());
        values.sort_by(f64::total_cmp);
        Self { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of the sample `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return f64::NAN;
        }
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Quantile with linear interpolation between order statistics
    /// (`h = (n − 1) p`).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        let p = p.clamp(0.0, 1.0);
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = h - lo as f64;
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn std_two_points() {
        assert!((sample_std(&[-1.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn constant_cdf_is_a_step() {
        let cdf = EmpiricalCdf::new(vec![-3.5; 10]);
        assert_eq!(cdf.quantile(0.9), -3.5);
        assert_eq!(cdf.cdf(-3.6), 0.0);
        assert_eq!(cdf.cdf(-3.5), 1.0);
    }

    #[test]
    fn quantile_interpolates() {
        let cdf = EmpiricalCdf::new(vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!(cdf.quantile(0.0), 1.0);
        assert_eq!(cdf.quantile(1.0), 4.0);
        assert!((cdf.quantile(0.5) - 2.5).abs() < 1e-15);
        assert_eq!(cdf.cdf(2.0), 0.5);
    }
}
