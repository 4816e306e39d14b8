use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;

/// Runs `f` for every path index on a pool of `workers` threads and returns the
/// results in index order. The first error in index order wins, so the outcome
/// does not depend on scheduling.
pub fn map_paths<T, F>(paths: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let out: Vec<Result<T>> = pool.install(|| (0..paths).into_par_iter().map(&f).collect());
    out.into_iter().collect()
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for x in iter {
            k.add(x);
        }
        k
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub se: f64,
}

/// Sample mean and its standard error, summed in slice order.
pub fn mean_and_se(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            count: 0,
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = xs.iter().copied().collect::<KahanSum>().total() / n as f64;
    if n == 1 {
        return Summary {
            count: 1,
            mean,
            se: f64::NAN,
        };
    }
    let ss = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<KahanSum>()
        .total();
    Summary {
        count: n,
        mean,
        se: (ss / (n - 1) as f64 / n as f64).sqrt(),
    }
}
