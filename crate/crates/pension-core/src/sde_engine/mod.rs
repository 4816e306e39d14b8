//! Brownian noise generation and integration of the coupled state system.

mod parallel;
mod simulate;

pub use parallel::{map_paths, mean_and_se, KahanSum, Summary};
pub use simulate::{
    gbm_strong_errors, simulate_baseline_ratio, simulate_joint, simulate_ratio_path, simulate_runs,
    PathBundle, Run, Scheme, Simulator, State,
};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Tolerance for matching schedule breakpoints to grid points.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::invalid("simulation.horizon", "need t1 > t0"));
        }
        if steps == 0 {
            return Err(Error::invalid("simulation.steps", "need at least one step"));
        }
        Ok(TimeGrid { t0, t1, steps })
    }

    /// Grid on [0, horizon] with `per_year` steps per unit time.
    pub fn yearly(horizon: f64, per_year: usize) -> Result<Self> {
        let steps = (horizon * per_year as f64).round();
        if (steps - horizon * per_year as f64).abs() > GRID_TOL * steps.max(1.0) {
            return Err(Error::invalid(
                "simulation.steps_per_year",
                "horizon must be a whole number of steps",
            ));
        }
        TimeGrid::new(0.0, horizon, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            return self.t1;
        }
        self.t0 + (self.t1 - self.t0) * k as f64 / self.steps as f64
    }

    /// Index of the grid point at `t`, if `t` is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t - self.t0) / self.dt();
        let r = k.round();
        if r < 0.0 || r > self.steps as f64 || (k - r).abs() > GRID_TOL * r.max(1.0) {
            None
        } else {
            Some(r as usize)
        }
    }

    /// Refuses grids on which some breakpoint inside (t0, t1) is not a grid point.
    pub fn check_breakpoints(&self, breakpoints: &[f64]) -> Result<()> {
        for &b in breakpoints {
            if b > self.t0 && b < self.t1 && self.index_of(b).is_none() {
                return Err(Error::GridMismatch {
                    breakpoint: b,
                    dt: self.dt(),
                });
            }
        }
        Ok(())
    }
}

/// Brownian increments for one path, stored row-major (one row per step).
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub grid: TimeGrid,
    pub n: usize,
    pub m: usize,
    pub d_b1: Vec<f64>,
    pub d_b2: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

impl NoisePath {
    pub fn db1(&self, k: usize) -> &[f64] {
        &self.d_b1[k * self.n..(k + 1) * self.n]
    }

    pub fn db2(&self, k: usize) -> &[f64] {
        &self.d_b2[k * self.m..(k + 1) * self.m]
    }

    /// Increments of deterministic Brownian paths given as functions of time.
    pub fn from_paths(
        grid: TimeGrid,
        b1: impl Fn(f64) -> Vec<f64>,
        b2: impl Fn(f64) -> Vec<f64>,
    ) -> Self {
        let first1 = b1(grid.time(0));
        let first2 = b2(grid.time(0));
        let (n, m) = (first1.len(), first2.len());
        let mut d_b1 = Vec::with_capacity(grid.steps * n);
        let mut d_b2 = Vec::with_capacity(grid.steps * m);
        let (mut prev1, mut prev2) = (first1, first2);
        for k in 1..=grid.steps {
            let t = grid.time(k);
            let (c1, c2) = (b1(t), b2(t));
            d_b1.extend(c1.iter().zip(&prev1).map(|(a, b)| a - b));
            d_b2.extend(c2.iter().zip(&prev2).map(|(a, b)| a - b));
            prev1 = c1;
            prev2 = c2;
        }
        NoisePath {
            grid,
            n,
            m,
            d_b1,
            d_b2,
            seed: 0,
            path_index: 0,
        }
    }

    /// Replay file: one row per step, columns dB1_1..dB1_n, dB2_1..dB2_m.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = (1..=self.n)
            .map(|i| format!("dB1_{i}"))
            .chain((1..=self.m).map(|j| format!("dB2_{j}")))
            .collect();
        w.write_record(&header).map_err(|e| Error::Replay(e.to_string()))?;
        for k in 0..self.grid.steps {
            let row: Vec<String> = self
                .db1(k)
                .iter()
                .chain(self.db2(k))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(|e| Error::Replay(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Replay(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Replay(e.to_string()))
    }

    pub fn from_csv(text: &str, grid: TimeGrid, n: usize, m: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::Replay(e.to_string()))?;
        if headers.len() != n + m {
            return Err(Error::Replay(format!(
                "expected {} columns, found {}",
                n + m,
                headers.len()
            )));
        }
        let mut d_b1 = Vec::with_capacity(grid.steps * n);
        let mut d_b2 = Vec::with_capacity(grid.steps * m);
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Replay(e.to_string()))?;
            if rec.len() != n + m {
                return Err(Error::Replay(format!("row {} has {} fields", rows + 1, rec.len())));
            }
            for (i, f) in rec.iter().enumerate() {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::Replay(format!("row {}: bad number `{f}`", rows + 1)))?;
                if i < n {
                    d_b1.push(v);
                } else {
                    d_b2.push(v);
                }
            }
            rows += 1;
        }
        if rows != grid.steps {
            return Err(Error::Replay(format!(
                "expected {} rows, found {rows}",
                grid.steps
            )));
        }
        Ok(NoisePath {
            grid,
            n,
            m,
            d_b1,
            d_b2,
            seed: 0,
            path_index: 0,
        })
    }
}

/// Reproducible increments for path `path_index`.
///
/// Each path owns ChaCha20 stream number `path_index` under key `seed`; within a
/// step the n components of dB¹ are drawn before the m components of dB².
pub fn generate_noise(seed: u64, path_index: u64, grid: TimeGrid, n: usize, m: usize) -> NoisePath {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    let sd = grid.dt().sqrt();
    let mut d_b1 = Vec::with_capacity(grid.steps * n);
    let mut d_b2 = Vec::with_capacity(grid.steps * m);
    for _ in 0..grid.steps {
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            d_b1.push(z * sd);
        }
        for _ in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            d_b2.push(z * sd);
        }
    }
    NoisePath {
        grid,
        n,
        m,
        d_b1,
        d_b2,
        seed,
        path_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_times_hit_breakpoints_exactly() {
        let g = TimeGrid::yearly(20.0, 252).unwrap();
        assert_eq!(g.steps, 5040);
        assert_eq!(g.time(2520), 10.0);
        assert_eq!(g.index_of(10.0), Some(2520));
        assert_eq!(g.index_of(15.0), Some(3780));
        assert!(g.check_breakpoints(&[0.0, 10.0]).is_ok());
        let g = TimeGrid::new(0.0, 20.0, 7).unwrap();
        assert!(matches!(
            g.check_breakpoints(&[0.0, 10.0]),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn noise_is_reproducible_and_streams_differ() {
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let a = generate_noise(7, 3, g, 2, 1);
        let b = generate_noise(7, 3, g, 2, 1);
        let c = generate_noise(7, 4, g, 2, 1);
        assert_eq!(a, b);
        assert_ne!(a.d_b1, c.d_b1);
    }

    #[test]
    fn replay_round_trip() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let a = generate_noise(1, 0, g, 2, 1);
        let text = a.to_csv().unwrap();
        let b = NoisePath::from_csv(&text, g, 2, 1).unwrap();
        assert_eq!(a.d_b1, b.d_b1);
        assert_eq!(a.d_b2, b.d_b2);
        assert!(NoisePath::from_csv(&text, g, 1, 1).is_err());
        let short = TimeGrid::new(0.0, 1.0, 11).unwrap();
        assert!(NoisePath::from_csv(&text, short, 2, 1).is_err());
    }

    #[test]
    fn deterministic_paths_difference_exactly() {
        let g = TimeGrid::new(0.0, 2.0, 4).unwrap();
        let np = NoisePath::from_paths(g, |t| vec![0.5 * t], |_| vec![0.0]);
        assert_eq!(np.d_b1, vec![0.25; 4]);
        assert_eq!(np.d_b2, vec![0.0; 4]);
    }
}
