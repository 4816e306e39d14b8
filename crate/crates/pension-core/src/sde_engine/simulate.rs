use nalgebra::{DMatrix, DVector};

use super::{generate_noise, map_paths, NoisePath, TimeGrid};
use crate::error::{Error, Result};
use crate::model_core::{Family, ModelParams, PreferenceSpec, Schedule};
use crate::preferences::v_drift;
use crate::strategies::{PolicyState, StrategyPolicy};

/// Integrator for the fund state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact cushion update for forward optimal rules, Euler–Maruyama otherwise.
    Auto,
    /// Euler–Maruyama on the ratio X.
    EulerRatio,
    /// Euler–Maruyama on the fund value W.
    EulerWealth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    PowerRatio,
    ExpRatio,
    PowerWealth,
    ExpWealth,
    EulerRatio,
    EulerWealth,
}

/// Instantaneous state. `floor` is Z or W̃⁰, `risk_tolerance` is Γ or Γ̃;
/// `cushion` is X−Z, (X−Z)/Γ, W−W̃⁰ or (W−W̃⁰)/Γ̃ depending on the scheme.
/// Auxiliary entries are NaN when no preference is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub t: f64,
    pub y: f64,
    pub w: f64,
    pub x: f64,
    pub floor: f64,
    pub risk_tolerance: f64,
    pub v: f64,
    pub cushion: f64,
}

#[derive(Debug, Clone)]
struct Regime {
    c_y_drift: f64,
    y_v1: Vec<f64>,
    y_v2: Vec<f64>,
    p: f64,
    base_drift: f64,
    /// Mean growth rate of the floor (α or r + π̃ᵀμ).
    base_rate: f64,
    base_v1: Vec<f64>,
    base_v2: Vec<f64>,
    v_drift: f64,
    th1: Vec<f64>,
    th2: Vec<f64>,
    cush_drift: f64,
    cush_v1: Vec<f64>,
    cush_v2: Vec<f64>,
    mix_a: DVector<f64>,
    mix_b: DVector<f64>,
    euler_drift0: f64,
    euler_excess: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    sigma: DMatrix<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn v(x: &DVector<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

fn build_regime(
    params: &ModelParams,
    aux: Option<&PreferenceSpec>,
    method: Method,
    scale: f64,
    t: f64,
) -> Regime {
    let c = params.coeffs(t);
    let (n, m) = (params.n(), params.m());
    let s1 = &c.sigma_y1;
    let s2 = &c.sigma_y2;
    let zeros_n = DVector::zeros(n);
    let zeros_m = DVector::zeros(m);
    let mut r = Regime {
        c_y_drift: c.r + c.mu_y - 0.5 * (s1.norm_squared() + s2.norm_squared()),
        y_v1: v(s1),
        y_v2: v(s2),
        p: c.p,
        base_drift: 0.0,
        base_rate: 0.0,
        base_v1: vec![0.0; n],
        base_v2: vec![0.0; m],
        v_drift: 0.0,
        th1: vec![0.0; n],
        th2: vec![0.0; m],
        cush_drift: 0.0,
        cush_v1: vec![0.0; n],
        cush_v2: vec![0.0; m],
        mix_a: zeros_n.clone(),
        mix_b: zeros_n.clone(),
        euler_drift0: 0.0,
        euler_excess: vec![0.0; n],
        s1: v(s1),
        s2: v(s2),
        sigma: c.sigma.clone(),
    };
    match method {
        Method::EulerWealth | Method::PowerWealth | Method::ExpWealth => {
            r.euler_drift0 = c.r;
            r.euler_excess = v(&c.lambda);
        }
        _ => {
            r.euler_drift0 = -c.mu_y + s1.norm_squared() + s2.norm_squared();
            r.euler_excess = v(&(&c.lambda - s1));
        }
    }
    let Some(pref) = aux else { return r };
    let th1 = pref.theta1.at(t);
    let th2 = pref.theta2.at(t);
    let g = pref.gamma;
    r.v_drift = v_drift(params, pref, t);
    r.th1 = v(th1);
    r.th2 = v(th2);
    if pref.family.is_wealth() {
        let pit = pref.baseline.at(t);
        let bt = c.sigma.transpose() * pit;
        r.base_rate = c.r + pit.dot(&c.mu);
        r.base_drift = r.base_rate - 0.5 * bt.norm_squared();
        r.base_v1 = v(&bt);
        r.base_v2 = vec![0.0; m];
    } else {
        let beta = pref.baseline.at(t);
        r.base_rate = c.alpha(beta);
        r.base_drift = r.base_rate - 0.5 * (beta.norm_squared() + s2.norm_squared());
        r.base_v1 = v(beta);
        r.base_v2 = v(&(-s2));
    }
    match method {
        Method::PowerRatio => {
            let xi = (&c.lambda - s1 * g + th1) / (1.0 - g) * scale - s1;
            r.cush_drift = xi.dot(&(&c.lambda - s1)) + c.ratio_linear()
                - 0.5 * (xi.norm_squared() + s2.norm_squared());
            r.cush_v1 = v(&xi);
            r.cush_v2 = v(&(-s2));
            let beta = pref.baseline.at(t);
            r.mix_a = &c.sigma_t_inv * (s1 + beta);
            r.mix_b = crate::strategies::myopic_power(c, g, th1) * scale;
        }
        Method::ExpRatio => {
            let beta = pref.baseline.at(t);
            let zeta = (&c.lambda + th1) * scale - s1 - beta;
            r.cush_drift = zeta.dot(&(&c.lambda - s1 - beta));
            r.cush_v1 = v(&zeta);
            r.cush_v2 = v(&zeros_m);
            r.mix_a = crate::strategies::merton_exp(c, th1) * scale;
            r.mix_b = &c.sigma_t_inv * (s1 + beta);
        }
        Method::PowerWealth => {
            let eta = (&c.lambda + th1) / (1.0 - g) * scale;
            r.cush_drift = c.r + eta.dot(&c.lambda) - 0.5 * eta.norm_squared();
            r.cush_v1 = v(&eta);
            r.cush_v2 = v(&zeros_m);
            r.mix_a = pref.baseline.at(t).clone();
            r.mix_b = &c.sigma_t_inv * ((&c.lambda + th1) / (1.0 - g)) * scale;
        }
        Method::ExpWealth => {
            let bt = c.sigma.transpose() * pref.baseline.at(t);
            let zeta = (&c.lambda + th1) * scale - &bt;
            r.cush_drift = zeta.dot(&(&c.lambda - &bt));
            r.cush_v1 = v(&zeta);
            r.cush_v2 = v(&zeros_m);
            r.mix_a = crate::strategies::merton_exp(c, th1) * scale;
            r.mix_b = pref.baseline.at(t).clone();
        }
        Method::EulerRatio | Method::EulerWealth => {}
    }
    r
}

/// (1 − e^{−a·dt})/a: contributing over one step at this effective length
/// before applying the step multiplier solves dZ = (p + aZ)dt exactly.
fn effective_dt(a: f64, dt: f64) -> f64 {
    let x = a * dt;
    if x.abs() < 1e-8 {
        dt * (1.0 - x / 2.0)
    } else {
        -(-x).exp_m1() / a
    }
}

/// Step-by-step integrator for one policy on one noise path.
pub struct Simulator<'a> {
    params: &'a ModelParams,
    policy: &'a StrategyPolicy,
    method: Method,
    grid: TimeGrid,
    starts: Vec<f64>,
    regimes: Vec<Regime>,
    has_aux: bool,
    state: State,
    pi: DVector<f64>,
    k: usize,
}

impl<'a> Simulator<'a> {
    /// `aux` selects the preference whose floor, risk tolerance and V are
    /// co-simulated; a forward policy always uses its own preference.
    pub fn new(
        params: &'a ModelParams,
        policy: &'a StrategyPolicy,
        aux: Option<&'a PreferenceSpec>,
        grid: TimeGrid,
        scheme: Scheme,
    ) -> Result<Self> {
        let (aux, scale) = match policy {
            StrategyPolicy::Forward { pref, myopic_scale } => (Some(pref), *myopic_scale),
            _ => (aux, 1.0),
        };
        if let Some(p) = aux {
            p.validate(params)?;
        }
        let method = match (scheme, policy, aux) {
            (Scheme::EulerRatio, _, _) => Method::EulerRatio,
            (Scheme::EulerWealth, _, _) => Method::EulerWealth,
            (Scheme::Auto, StrategyPolicy::Forward { pref, .. }, _) => match pref.family {
                Family::PowerRatio => Method::PowerRatio,
                Family::ExpRatio => Method::ExpRatio,
                Family::PowerWealth => Method::PowerWealth,
                Family::ExpWealth => Method::ExpWealth,
            },
            (Scheme::Auto, _, Some(p)) if p.family.is_wealth() => Method::EulerWealth,
            (Scheme::Auto, _, _) => Method::EulerRatio,
        };
        if let StrategyPolicy::Constant(pi) = policy {
            if pi.len() != params.n() {
                return Err(Error::invalid("policy", "constant strategy has wrong length"));
            }
        }

        let mut starts: Vec<f64> = params.breakpoints().to_vec();
        if let Some(p) = aux {
            starts.extend(p.breakpoints());
        }
        starts.sort_by(|a, b| a.total_cmp(b));
        starts.dedup();
        grid.check_breakpoints(&starts)?;
        let regimes = starts
            .iter()
            .map(|&t| build_regime(params, aux, method, scale, t))
            .collect();

        let spec = params.spec();
        let (x0, w0, y0) = (params.x0(), spec.w0, spec.y0);
        let nan = f64::NAN;
        let (floor, gamma_t, v0) = match aux {
            Some(p) => (0.0, 1.0 / p.gamma, 0.0),
            None => (nan, nan, nan),
        };
        let cushion = match (method, aux) {
            (Method::PowerRatio, _) => x0,
            (Method::PowerWealth, _) => w0,
            (Method::ExpRatio, Some(p)) => p.gamma * x0,
            (Method::ExpWealth, Some(p)) => p.gamma * w0,
            _ => nan,
        };
        let state = State {
            t: grid.t0,
            y: y0,
            w: w0,
            x: x0,
            floor,
            risk_tolerance: gamma_t,
            v: v0,
            cushion,
        };
        let mut sim = Simulator {
            params,
            policy,
            method,
            grid,
            starts,
            regimes,
            has_aux: aux.is_some(),
            state,
            pi: DVector::zeros(params.n()),
            k: 0,
        };
        sim.pi = sim.evaluate_policy()?;
        Ok(sim)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Strategy applied over the next step.
    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn regime_index(&self, t: f64) -> usize {
        let tol = 1e-9 * t.abs().max(1.0);
        self.starts
            .partition_point(|b| *b <= t + tol)
            .saturating_sub(1)
    }

    fn snap(&self, t: f64) -> f64 {
        let i = self.regime_index(t);
        let b = self.starts[i];
        if (t - b).abs() <= 1e-9 * t.abs().max(1.0) {
            b
        } else {
            t
        }
    }

    fn evaluate_policy(&self) -> Result<DVector<f64>> {
        let s = &self.state;
        let weight = match self.method {
            Method::PowerRatio => {
                if !(s.x > s.floor) {
                    return Err(Error::Admissibility { t: s.t, x: s.x, floor: s.floor });
                }
                Some(s.floor / s.x)
            }
            Method::PowerWealth => {
                if !(s.w > s.floor) {
                    return Err(Error::Admissibility { t: s.t, x: s.w, floor: s.floor });
                }
                Some(s.floor / s.w)
            }
            Method::ExpRatio => {
                if s.x == 0.0 {
                    return Err(Error::Domain(format!("exponential rule undefined at X=0 (t={})", s.t)));
                }
                Some(s.risk_tolerance / s.x)
            }
            Method::ExpWealth => {
                if s.w == 0.0 {
                    return Err(Error::Domain(format!("exponential rule undefined at W=0 (t={})", s.t)));
                }
                Some(s.risk_tolerance / s.w)
            }
            Method::EulerRatio | Method::EulerWealth => None,
        };
        match weight {
            Some(wt) => {
                let r = &self.regimes[self.regime_index(s.t)];
                Ok(&r.mix_a * wt + &r.mix_b * (1.0 - wt))
            }
            None => self.policy.eval(
                self.params,
                &PolicyState {
                    t: s.t,
                    x: s.x,
                    w: s.w,
                    y: s.y,
                    floor: s.floor,
                    risk_tolerance: s.risk_tolerance,
                },
            ),
        }
    }

    /// Advances one grid step with increments `d1` (B¹) and `d2` (B²).
    pub fn step(&mut self, d1: &[f64], d2: &[f64]) -> Result<()> {
        if self.k >= self.grid.steps {
            return Err(Error::Domain("simulation already reached the grid end".into()));
        }
        let dt = self.grid.dt();
        let r = &self.regimes[self.regime_index(self.state.t)];
        let s = self.state;
        let t_next = self.snap(self.grid.time(self.k + 1));

        let y = s.y * (r.c_y_drift * dt + dot(&r.y_v1, d1) + dot(&r.y_v2, d2)).exp();
        let (mut floor, mut gamma_t, mut vv) = (s.floor, s.risk_tolerance, s.v);
        if self.has_aux {
            let mult = (r.base_drift * dt + dot(&r.base_v1, d1) + dot(&r.base_v2, d2)).exp();
            let contrib = match self.method {
                Method::PowerWealth | Method::ExpWealth | Method::EulerWealth => r.p * s.y,
                _ => r.p,
            };
            floor = mult * (s.floor + contrib * effective_dt(r.base_rate, dt));
            gamma_t = s.risk_tolerance * mult;
            vv = s.v + r.v_drift * dt + dot(&r.th1, d1) + dot(&r.th2, d2);
        }
        let log_step = |c: f64| c * (r.cush_drift * dt + dot(&r.cush_v1, d1) + dot(&r.cush_v2, d2)).exp();
        let add_step = |q: f64| q + r.cush_drift * dt + dot(&r.cush_v1, d1);
        let (x, w, cushion) = match self.method {
            Method::PowerRatio => {
                let c = log_step(s.cushion);
                let x = floor + c;
                (x, x * y, c)
            }
            Method::ExpRatio => {
                let q = add_step(s.cushion);
                let x = floor + gamma_t * q;
                (x, x * y, q)
            }
            Method::PowerWealth => {
                let c = log_step(s.cushion);
                let w = floor + c;
                (w / y, w, c)
            }
            Method::ExpWealth => {
                let q = add_step(s.cushion);
                let w = floor + gamma_t * q;
                (w / y, w, q)
            }
            Method::EulerRatio => {
                let phi = r.sigma.transpose() * &self.pi;
                let phi = phi.as_slice();
                let vol1: f64 = phi.iter().zip(&r.s1).zip(d1).map(|((p, s), d)| (p - s) * d).sum();
                let x = s.x
                    + r.p * dt
                    + s.x * ((dot(phi, &r.euler_excess) + r.euler_drift0) * dt + vol1
                        - dot(&r.s2, d2));
                (x, x * y, f64::NAN)
            }
            Method::EulerWealth => {
                let phi = r.sigma.transpose() * &self.pi;
                let phi = phi.as_slice();
                let w = s.w
                    + r.p * s.y * dt
                    + s.w * ((r.euler_drift0 + dot(phi, &r.euler_excess)) * dt + dot(phi, d1));
                (w / y, w, f64::NAN)
            }
        };
        for (name, val) in [("Y", y), ("X", x), ("W", w)] {
            if !val.is_finite() {
                return Err(Error::BlowUp { state: name, t: t_next });
            }
        }
        if self.has_aux {
            for (name, val) in [("Z", floor), ("Gamma", gamma_t), ("V", vv)] {
                if !val.is_finite() {
                    return Err(Error::BlowUp { state: name, t: t_next });
                }
            }
        }
        self.state = State {
            t: t_next,
            y,
            w,
            x,
            floor,
            risk_tolerance: gamma_t,
            v: vv,
            cushion,
        };
        self.k += 1;
        self.pi = self.evaluate_policy()?;
        if self.pi.iter().any(|p| !p.is_finite()) {
            return Err(Error::BlowUp { state: "pi", t: t_next });
        }
        Ok(())
    }

    /// Advances with the increments of `noise` until step `k_end`.
    pub fn advance_to(&mut self, noise: &NoisePath, k_end: usize) -> Result<()> {
        while self.k < k_end {
            let k = self.k;
            self.step(noise.db1(k), noise.db2(k))?;
        }
        Ok(())
    }
}

/// One simulated trajectory with all state series on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub policy_id: String,
    pub n: usize,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub gamma: Vec<f64>,
    pub v: Vec<f64>,
    /// Row-major (steps+1) × n.
    pub pi: Vec<f64>,
}

impl PathBundle {
    fn push(&mut self, s: &State, pi: &DVector<f64>) {
        self.t.push(s.t);
        self.y.push(s.y);
        self.w.push(s.w);
        self.x.push(s.x);
        self.z.push(s.floor);
        self.gamma.push(s.risk_tolerance);
        self.v.push(s.v);
        self.pi.extend(pi.iter());
    }

    pub fn pi_at(&self, k: usize) -> &[f64] {
        &self.pi[k * self.n..(k + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Trajectory table with columns t, Y, W, X, Z, Gamma, V, pi_1..pi_n.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["t", "Y", "W", "X", "Z", "Gamma", "V"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=self.n).map(|i| format!("pi_{i}")));
        let io = |e: csv::Error| Error::Replay(e.to_string());
        w.write_record(&header).map_err(io)?;
        for k in 0..self.len() {
            let mut row = vec![
                self.t[k], self.y[k], self.w[k], self.x[k], self.z[k], self.gamma[k], self.v[k],
            ];
            row.extend_from_slice(self.pi_at(k));
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Replay(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf8"))
    }
}

/// Runs a simulator over the full grid, recording every step.
fn record(mut sim: Simulator<'_>, noise: &NoisePath, id: String) -> Result<PathBundle> {
    let mut b = PathBundle {
        grid: noise.grid,
        policy_id: id,
        n: sim.params.n(),
        t: Vec::new(),
        y: Vec::new(),
        w: Vec::new(),
        x: Vec::new(),
        z: Vec::new(),
        gamma: Vec::new(),
        v: Vec::new(),
        pi: Vec::new(),
    };
    b.push(sim.state(), sim.pi());
    for k in 0..noise.grid.steps {
        sim.step(noise.db1(k), noise.db2(k))?;
        b.push(sim.state(), sim.pi());
    }
    Ok(b)
}

fn check_noise(params: &ModelParams, noise: &NoisePath) -> Result<()> {
    if noise.n != params.n() || noise.m != params.m() {
        return Err(Error::Replay(format!(
            "noise has dimensions ({}, {}), model needs ({}, {})",
            noise.n,
            noise.m,
            params.n(),
            params.m()
        )));
    }
    Ok(())
}

/// Trajectory of the ratio and all attached states under `policy`.
pub fn simulate_ratio_path(
    params: &ModelParams,
    policy: &StrategyPolicy,
    noise: &NoisePath,
) -> Result<PathBundle> {
    check_noise(params, noise)?;
    let sim = Simulator::new(params, policy, None, noise.grid, Scheme::Auto)?;
    record(sim, noise, policy.id())
}

/// A policy together with the world it runs in.
#[derive(Debug, Clone)]
pub struct Run {
    pub params: ModelParams,
    pub policy: StrategyPolicy,
    pub aux: Option<PreferenceSpec>,
    pub scheme: Scheme,
}

impl Run {
    pub fn new(params: ModelParams, policy: StrategyPolicy) -> Self {
        Run {
            params,
            policy,
            aux: None,
            scheme: Scheme::Auto,
        }
    }

    pub fn simulator(&self, grid: TimeGrid) -> Result<Simulator<'_>> {
        Simulator::new(&self.params, &self.policy, self.aux.as_ref(), grid, self.scheme)
    }
}

/// Every run advanced on the same noise path.
pub fn simulate_runs(runs: &[Run], noise: &NoisePath) -> Result<Vec<PathBundle>> {
    runs.iter()
        .map(|r| {
            check_noise(&r.params, noise)?;
            record(r.simulator(noise.grid)?, noise, r.policy.id())
        })
        .collect()
}

/// Several policies in one world on shared noise, with `pref` supplying the
/// auxiliary states for policies that carry no preference of their own.
pub fn simulate_joint(
    params: &ModelParams,
    policies: &[StrategyPolicy],
    pref: Option<&PreferenceSpec>,
    noise: &NoisePath,
) -> Result<Vec<PathBundle>> {
    check_noise(params, noise)?;
    policies
        .iter()
        .map(|p| {
            let sim = Simulator::new(params, p, pref, noise.grid, Scheme::Auto)?;
            record(sim, noise, p.id())
        })
        .collect()
}

/// Affine baseline ratio dZ = p dt + Z(α dt + βᵀdB¹ − σ^{Y,2}ᵀdB²) from `z0`,
/// advanced by variation of constants. The mean of each step is exact.
pub fn simulate_baseline_ratio(
    params: &ModelParams,
    beta: &Schedule<DVector<f64>>,
    noise: &NoisePath,
    z0: f64,
) -> Result<Vec<f64>> {
    check_noise(params, noise)?;
    if !(z0 >= 0.0) {
        return Err(Error::invalid("z0", "initial baseline value must be >= 0"));
    }
    let grid = noise.grid;
    let mut bps = params.breakpoints().to_vec();
    bps.extend_from_slice(beta.breakpoints());
    grid.check_breakpoints(&bps)?;
    let dt = grid.dt();
    let mut z = z0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(z);
    for k in 0..grid.steps {
        let t = grid.time(k);
        let mid = t + 0.5 * dt;
        let c = params.coeffs(mid);
        let b = beta.at(mid);
        let s2 = &c.sigma_y2;
        let expo = (c.alpha(b) - 0.5 * (b.norm_squared() + s2.norm_squared())) * dt
            + dot(b.as_slice(), noise.db1(k))
            - dot(s2.as_slice(), noise.db2(k));
        z = expo.exp() * (z + c.p * effective_dt(c.alpha(b), dt));
        if !z.is_finite() {
            return Err(Error::BlowUp { state: "Z", t: grid.time(k + 1) });
        }
        out.push(z);
    }
    Ok(out)
}

/// Root-mean-square terminal error of Euler–Maruyama against the exact
/// lognormal solution of the ratio under a constant strategy with no
/// contributions. Level ℓ uses `base_steps·2^ℓ` steps; all levels share the
/// Brownian path of the finest one. Returns (dt, rms) per level.
#[allow(clippy::too_many_arguments)]
pub fn gbm_strong_errors(
    params: &ModelParams,
    pi: &DVector<f64>,
    horizon: f64,
    base_steps: usize,
    levels: usize,
    paths: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<(f64, f64)>> {
    if params.breakpoints().len() != 1 || params.spec().p.values().iter().any(|p| *p != 0.0) {
        return Err(Error::invalid(
            "params",
            "strong-order check needs constant coefficients and p = 0",
        ));
    }
    let c = params.coeffs(0.0);
    let phi = c.sigma.transpose() * pi;
    let vol1 = &phi - &c.sigma_y1;
    let vol2 = -&c.sigma_y2;
    let drift = c.ratio_drift(pi) - 0.5 * (vol1.norm_squared() + vol2.norm_squared());
    let fine = TimeGrid::new(0.0, horizon, base_steps << (levels - 1))?;
    let policy = StrategyPolicy::Constant(pi.clone());
    let (n, m) = (params.n(), params.m());
    let x0 = params.x0();

    let sq_errors: Vec<Vec<f64>> = map_paths(paths, workers, |i| {
        let noise = generate_noise(seed, i as u64, fine, n, m);
        let mut b1 = vec![0.0; n];
        let mut b2 = vec![0.0; m];
        for k in 0..fine.steps {
            for (a, d) in b1.iter_mut().zip(noise.db1(k)) {
                *a += d;
            }
            for (a, d) in b2.iter_mut().zip(noise.db2(k)) {
                *a += d;
            }
        }
        let exact = x0
            * (drift * horizon + dot(vol1.as_slice(), &b1) + dot(vol2.as_slice(), &b2)).exp();
        let mut errs = Vec::with_capacity(levels);
        for lvl in 0..levels {
            let steps = base_steps << lvl;
            let agg = fine.steps / steps;
            let grid = TimeGrid::new(0.0, horizon, steps)?;
            let mut sim = Simulator::new(params, &policy, None, grid, Scheme::EulerRatio)?;
            let mut d1 = vec![0.0; n];
            let mut d2 = vec![0.0; m];
            for k in 0..steps {
                d1.iter_mut().for_each(|a| *a = 0.0);
                d2.iter_mut().for_each(|a| *a = 0.0);
                for j in k * agg..(k + 1) * agg {
                    for (a, d) in d1.iter_mut().zip(noise.db1(j)) {
                        *a += d;
                    }
                    for (a, d) in d2.iter_mut().zip(noise.db2(j)) {
                        *a += d;
                    }
                }
                sim.step(&d1, &d2)?;
            }
            let e = sim.state().x - exact;
            errs.push(e * e);
        }
        Ok(errs)
    })?;
    let mut out = Vec::with_capacity(levels);
    for lvl in 0..levels {
        let ms = sq_errors
            .iter()
            .map(|e| e[lvl])
            .collect::<super::KahanSum>()
            .total()
            / paths as f64;
        out.push((horizon / (base_steps << lvl) as f64, ms.sqrt()));
    }
    Ok(out)
}
