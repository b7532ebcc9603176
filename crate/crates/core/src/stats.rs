//! Reproducible replica streams and compensated aggregation.
//!
//! Every replica gets its own ChaCha8 stream keyed by `(master_seed, index)`,
//! and results are reduced in replica order, so estimates do not depend on
//! how many worker threads ran the replicas.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type ReplicaRng = ChaCha8Rng;

/// Random stream for replica `index` under `master_seed`.
pub fn replica_rng(master_seed: u64, index: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs `reps` independent replicas in parallel and returns their results in
/// replica order.
pub fn run_replicas<T, F>(master_seed: u64, reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ReplicaRng) -> T + Sync + Send,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(master_seed, i);
            f(&mut rng)
        })
        .collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = kahan_sum(xs.iter().copied()) / n as f64;
        if n == 1 {
            return Estimate {
                mean,
                std_error: 0.0,
            };
        }
        let var = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
        Estimate {
            mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    pub fn relative_error(&self) -> f64 {
        self.std_error / self.mean.abs()
    }

    /// `|mean - target|` in units of the standard error. Zero error with an
    /// exact hit gives 0.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Delta-method estimate of `mean(a) / mean(b)` for paired samples.
pub fn ratio_estimate(a: &[f64], b: &[f64]) -> Estimate {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = kahan_sum(a.iter().copied()) / n;
    let mb = kahan_sum(b.iter().copied()) / n;
    let ratio = ma / mb;
    if a.len() < 2 {
        return Estimate {
            mean: ratio,
            std_error: 0.0,
        };
    }
    // Linearized residuals a - R b.
    let var = kahan_sum(a.iter().zip(b).map(|(x, y)| {
        let d = (x - ma) - ratio * (y - mb);
        d * d
    })) / (n - 1.0);
    Estimate {
        mean: ratio,
        std_error: (var / n).sqrt() / mb.abs(),
    }
}
