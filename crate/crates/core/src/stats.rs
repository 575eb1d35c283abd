//! Order-stable reductions for Monte Carlo output.

use rayon::prelude::*;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MeanEstimate {
    /// Mean and standard error of the mean, summed in slice order.
    /// A single sample has zero reported spread.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let n = samples.len();
        if n == 0 {
            return None;
        }
        let mean = samples.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let stderr = if n > 1 {
            let ss = samples
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .collect::<CompensatedSum>()
                .value();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanEstimate {
            mean,
            stderr,
            samples: n,
        })
    }

    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target).abs() / self.stderr
        }
    }
}

/// Evaluate `f` for every trial index in parallel, returning results in
/// trial order. Reductions over the returned vector are therefore
/// independent of the worker count.
pub fn map_trials<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..trials as u64).into_par_iter().map(f).collect()
}
