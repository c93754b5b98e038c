//! Batch-means and across-replication confidence intervals.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Beyond this many degrees of freedom the t quantile is taken from the
/// normal law; the two differ by less than 1e-5 there.
const NORMAL_DF: usize = 100_000;

/// Two-sided Student-t critical value for `level` confidence with `df`
/// degrees of freedom.
pub fn t_critical(level: f64, df: usize) -> f64 {
    assert!(
        level > 0.0 && level < 1.0,
        "confidence level must be in (0, 1)"
    );
    let q = 0.5 + level / 2.0;
    if df == 0 {
        return f64::INFINITY;
    }
    if df >= NORMAL_DF {
        return z_critical(level);
    }
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df > 0")
        .inverse_cdf(q)
}

/// Two-sided standard normal critical value.
pub fn z_critical(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Sample mean and unbiased variance.
pub fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Half-width of the `level` t-interval for the mean of `samples`, treating
/// them as i.i.d. (batch means or replication means).
pub fn t_halfwidth(samples: &[f64], level: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let (_, var) = mean_and_variance(samples);
    t_critical(level, n - 1) * (var / n as f64).sqrt()
}

/// Accumulates integer-valued observations into equal contiguous batches.
#[derive(Clone, Debug)]
pub struct BatchAccumulator {
    batch_len: u64,
    in_batch: u64,
    current: u128,
    batch_sums: Vec<u128>,
}

impl BatchAccumulator {
    pub fn new(batch_len: u64, batches: usize) -> Self {
        assert!(batch_len > 0);
        Self {
            batch_len,
            in_batch: 0,
            current: 0,
            batch_sums: Vec::with_capacity(batches),
        }
    }

    #[inline]
    pub fn push(&mut self, value: u64) {
        self.current += value as u128;
        self.in_batch += 1;
        if self.in_batch == self.batch_len {
            self.batch_sums.push(self.current);
            self.current = 0;
            self.in_batch = 0;
        }
    }

    pub fn completed(&self) -> usize {
        self.batch_sums.len()
    }

    /// Mean over completed batches; the partial trailing batch is ignored.
    pub fn mean(&self) -> f64 {
        let total: u128 = self.batch_sums.iter().sum();
        total as f64 / (self.batch_len as f64 * self.batch_sums.len() as f64)
    }

    pub fn batch_means(&self) -> Vec<f64> {
        self.batch_sums
            .iter()
            .map(|&s| s as f64 / self.batch_len as f64)
            .collect()
    }

    pub fn halfwidth(&self, level: f64) -> f64 {
        t_halfwidth(&self.batch_means(), level)
    }
}
