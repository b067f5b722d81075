//! Monte Carlo plumbing: seeded ensembles, deterministic reduction,
//! standard errors and Kolmogorov-Smirnov distances.

use alloc::vec::Vec;

use super::{walk, Lineage, PathPoint, PathSpec, SamplePath, Segment};
use crate::error::{Error, Result};
use crate::math;

/// Mean of i.i.d. samples with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Bound (or estimate, where noted) on what the horizon truncation
    /// leaves out; 0 when not applicable.
    pub truncation_bound: f64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Config("cannot estimate from an empty ensemble".into()));
        }
        let mean = pairwise_sum(samples) / n as f64;
        let std_error = if n > 1 {
            let dev: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
            math::sqrt(pairwise_sum(&dev) / (n - 1) as f64 / n as f64)
        } else {
            0.0
        };
        Ok(Self { mean, std_error, n_paths: n, truncation_bound: 0.0 })
    }

    pub fn exact(value: f64) -> Self {
        Self { mean: value, std_error: 0.0, n_paths: 1, truncation_bound: 0.0 }
    }

    pub fn with_truncation_bound(mut self, bound: f64) -> Self {
        self.truncation_bound = bound;
        self
    }

    /// `(mean - target) / std_error`; infinite if the error is zero and the
    /// mean misses.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, n_sigma: f64) -> bool {
        self.z_score(target).abs() <= n_sigma
    }
}

/// Sample means of `K` jointly observed quantities with the covariance of
/// the means, for delta-method errors of smooth functions of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVector<const K: usize> {
    pub mean: [f64; K],
    pub cov: [[f64; K]; K],
    pub n: usize,
}

impl<const K: usize> MeanVector<K> {
    pub fn from_rows(rows: &[[f64; K]]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Config("cannot estimate from an empty ensemble".into()));
        }
        let mut mean = [0.0; K];
        let mut col = Vec::with_capacity(n);
        for (i, m) in mean.iter_mut().enumerate() {
            col.clear();
            col.extend(rows.iter().map(|r| r[i]));
            *m = pairwise_sum(&col) / n as f64;
        }
        let mut cov = [[0.0; K]; K];
        if n > 1 {
            for i in 0..K {
                for j in i..K {
                    col.clear();
                    col.extend(rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])));
                    let c = pairwise_sum(&col) / (n - 1) as f64 / n as f64;
                    cov[i][j] = c;
                    cov[j][i] = c;
                }
            }
        }
        Ok(Self { mean, cov, n })
    }

    pub fn estimate(&self, i: usize) -> McEstimate {
        McEstimate { mean: self.mean[i], std_error: math::sqrt(self.cov[i][i]), n_paths: self.n, truncation_bound: 0.0 }
    }

    /// Delta-method standard error of `f(mean)` given `grad f`.
    pub fn delta_std_error(&self, grad: [f64; K]) -> f64 {
        let mut v = 0.0;
        for i in 0..K {
            for j in 0..K {
                v += grad[i] * self.cov[i][j] * grad[j];
            }
        }
        math::sqrt(v.max(0.0))
    }
}

/// Pairwise summation; the result depends only on the order of `x`.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Paths `0..n_paths` of one spec, each reproducible from
/// `(master_seed, index)` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ensemble {
    pub spec: PathSpec,
    pub n_paths: usize,
    pub master_seed: u64,
}

impl Ensemble {
    pub fn new(spec: PathSpec, n_paths: usize, master_seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        Ok(Self { spec, n_paths, master_seed })
    }

    pub fn lineage(&self, i: usize) -> Lineage {
        Lineage { master_seed: self.master_seed, index: i as u64 }
    }

    pub fn path(&self, i: usize) -> SamplePath {
        SamplePath::generate(&self.spec, self.lineage(i))
    }

    /// Streams path `i` through `f` without storing it.
    pub fn walk<F: FnMut(&PathPoint)>(&self, i: usize, f: F) -> PathPoint {
        walk(&self.spec, &[Segment { from_step: 0, key: self.lineage(i).key() }], f)
    }

    /// `f(i)` for every path index, in index order.
    pub fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        par_map(self.n_paths, f)
    }

    pub fn map_paths<T: Send, F: Fn(&SamplePath) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        self.map(|i| f(&self.path(i)))
    }

    /// Mean and standard error of a per-path functional.
    pub fn estimate<F: Fn(&SamplePath) -> f64 + Sync + Send>(&self, f: F) -> McEstimate {
        McEstimate::from_samples(&self.map_paths(f)).expect("ensemble is nonempty")
    }
}

/// `(0..n).map(f)` collected in order; parallel when `std` is enabled.
#[cfg(feature = "std")]
pub(crate) fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = cdf(*x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    })
}

/// Asymptotic 1% critical value of the two-sample statistic (use `m =
/// usize::MAX` for the one-sample case).
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let c = 1.627_6;
    if m == usize::MAX {
        c / math::sqrt(n as f64)
    } else {
        c * math::sqrt((n + m) as f64 / (n as f64 * m as f64))
    }
}
