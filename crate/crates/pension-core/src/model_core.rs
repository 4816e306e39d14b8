//! Parameter records, piecewise-constant schedules and the coefficient algebra
//! shared by the engine, strategies and preferences.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Largest accepted condition number for a volatility matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Right-continuous piecewise-constant function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<V> {
    breakpoints: Vec<f64>,
    values: Vec<V>,
}

impl<V: PartialEq> Schedule<V> {
    /// Two-regime schedule switching at `at`; collapses to a constant when
    /// both values agree.
    pub fn switched(initial: V, at: f64, revised: V) -> Result<Self> {
        if !(at > 0.0) || !at.is_finite() {
            return Err(Error::invalid("schedule", "switch time must be positive"));
        }
        if initial == revised {
            return Ok(Schedule::constant(initial));
        }
        Schedule::new(vec![0.0, at], vec![initial, revised])
    }
}

impl<V> Schedule<V> {
    pub fn constant(value: V) -> Self {
        Schedule {
            breakpoints: vec![0.0],
            values: vec![value],
        }
    }

    /// `values[i]` applies on `[breakpoints[i], breakpoints[i+1])`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<V>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::invalid(
                "schedule",
                "need one value per breakpoint and at least one breakpoint",
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid("schedule", "first breakpoint must be 0"));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("schedule", "breakpoints must be finite"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "schedule",
                "breakpoints must be strictly increasing",
            ));
        }
        Ok(Schedule {
            breakpoints,
            values,
        })
    }


    fn index(&self, t: f64) -> usize {
        self.breakpoints
            .partition_point(|b| *b <= t)
            .saturating_sub(1)
    }

    /// Value in force at `t`. Times before 0 use the first value.
    pub fn at(&self, t: f64) -> &V {
        &self.values[self.index(t)]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn map<W>(&self, f: impl Fn(&V) -> W) -> Schedule<W> {
        Schedule {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.values.len() == 1
    }
}

/// Raw model inputs before validation.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub n: usize,
    pub m: usize,
    pub r: f64,
    pub mu: Schedule<DVector<f64>>,
    pub sigma: Schedule<DMatrix<f64>>,
    pub mu_y: Schedule<f64>,
    pub sigma_y1: Schedule<DVector<f64>>,
    pub sigma_y2: Schedule<DVector<f64>>,
    pub p: Schedule<f64>,
    pub w0: f64,
    pub y0: f64,
}

impl ModelSpec {
    /// One risky asset and one non-hedgeable noise, all coefficients constant.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        r: f64,
        mu: f64,
        sigma: f64,
        mu_y: f64,
        sigma_y1: f64,
        sigma_y2: f64,
        p: f64,
        w0: f64,
        y0: f64,
    ) -> Self {
        ModelSpec {
            n: 1,
            m: 1,
            r,
            mu: Schedule::constant(DVector::from_element(1, mu)),
            sigma: Schedule::constant(DMatrix::from_element(1, 1, sigma)),
            mu_y: Schedule::constant(mu_y),
            sigma_y1: Schedule::constant(DVector::from_element(1, sigma_y1)),
            sigma_y2: Schedule::constant(DVector::from_element(1, sigma_y2)),
            p: Schedule::constant(p),
            w0,
            y0,
        }
    }
}

/// Coefficients in force on one regime, with derived quantities precomputed.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// (Σᵀ)⁻¹
    pub sigma_t_inv: DMatrix<f64>,
    /// λ = Σ⁻¹μ
    pub lambda: DVector<f64>,
    pub mu_y: f64,
    pub sigma_y1: DVector<f64>,
    pub sigma_y2: DVector<f64>,
    pub p: f64,
}

impl Coefficients {
    /// α = (λ−σ¹)ᵀβ + λᵀσ¹ + ‖σ²‖² − μ^Y
    pub fn alpha(&self, beta: &DVector<f64>) -> f64 {
        (&self.lambda - &self.sigma_y1).dot(beta) + self.ratio_linear()
    }

    /// λᵀσ¹ + ‖σ²‖² − μ^Y, the strategy-free linear drift of the ratio floor.
    pub fn ratio_linear(&self) -> f64 {
        self.lambda.dot(&self.sigma_y1) + self.sigma_y2.norm_squared() - self.mu_y
    }

    /// Drift of the ratio X per unit X, excluding the contribution term.
    pub fn ratio_drift(&self, pi: &DVector<f64>) -> f64 {
        let excess = &self.lambda - &self.sigma_y1;
        (self.sigma.transpose() * pi).dot(&excess) - self.mu_y
            + self.sigma_y1.norm_squared()
            + self.sigma_y2.norm_squared()
    }
}

/// Validated model parameters.
#[derive(Debug, Clone)]
pub struct ModelParams {
    spec: ModelSpec,
    starts: Vec<f64>,
    regimes: Vec<Coefficients>,
}

fn check_len(key: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(
            key,
            format!("expected length {want}, found {got}"),
        ));
    }
    Ok(())
}

fn check_finite<'a>(key: &str, mut xs: impl Iterator<Item = &'a f64>) -> Result<()> {
    if xs.any(|x| !x.is_finite()) {
        return Err(Error::invalid(key, "values must be finite"));
    }
    Ok(())
}

/// Condition number of a square matrix from its singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// λ = Σ⁻¹μ, refusing ill-conditioned Σ.
pub fn solve_market_price(sigma: &DMatrix<f64>, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let cond = condition_number(sigma);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular {
            key: "market.sigma".into(),
            condition: cond,
        });
    }
    sigma.clone().lu().solve(mu).ok_or(Error::Singular {
        key: "market.sigma".into(),
        condition: cond,
    })
}

impl ModelParams {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let (n, m) = (spec.n, spec.m);
        if n == 0 {
            return Err(Error::invalid("market.n", "need at least one risky asset"));
        }
        if m == 0 {
            return Err(Error::invalid("salary.m", "need at least one noise dimension"));
        }
        if !spec.r.is_finite() {
            return Err(Error::invalid("market.r", "must be finite"));
        }
        for v in spec.mu.values() {
            check_len("market.mu", v.len(), n)?;
            check_finite("market.mu", v.iter())?;
        }
        for s in spec.sigma.values() {
            if s.nrows() != n || s.ncols() != n {
                return Err(Error::invalid(
                    "market.sigma",
                    format!("expected {n}x{n}, found {}x{}", s.nrows(), s.ncols()),
                ));
            }
            check_finite("market.sigma", s.iter())?;
        }
        for v in spec.sigma_y1.values() {
            check_len("salary.sigmaY1", v.len(), n)?;
            check_finite("salary.sigmaY1", v.iter())?;
        }
        for v in spec.sigma_y2.values() {
            check_len("salary.sigmaY2", v.len(), m)?;
            check_finite("salary.sigmaY2", v.iter())?;
        }
        check_finite("salary.muY", spec.mu_y.values().iter())?;
        for p in spec.p.values() {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::invalid("plan.p", "contribution rate must be >= 0"));
            }
        }
        if !(spec.w0 > 0.0 && spec.w0.is_finite()) {
            return Err(Error::invalid("plan.w0", "initial fund value must be > 0"));
        }
        if !(spec.y0 > 0.0 && spec.y0.is_finite()) {
            return Err(Error::invalid("plan.y0", "initial salary must be > 0"));
        }

        let mut starts: Vec<f64> = Vec::new();
        starts.extend_from_slice(spec.mu.breakpoints());
        starts.extend_from_slice(spec.sigma.breakpoints());
        starts.extend_from_slice(spec.mu_y.breakpoints());
        starts.extend_from_slice(spec.sigma_y1.breakpoints());
        starts.extend_from_slice(spec.sigma_y2.breakpoints());
        starts.extend_from_slice(spec.p.breakpoints());
        starts.sort_by(|a, b| a.total_cmp(b));
        starts.dedup();

        let mut regimes = Vec::with_capacity(starts.len());
        for &t in &starts {
            let sigma = spec.sigma.at(t).clone();
            let mu = spec.mu.at(t).clone();
            let lambda = solve_market_price(&sigma, &mu)?;
            let sigma_t_inv = sigma
                .transpose()
                .try_inverse()
                .ok_or(Error::Singular {
                    key: "market.sigma".into(),
                    condition: f64::INFINITY,
                })?;
            regimes.push(Coefficients {
                r: spec.r,
                mu,
                sigma,
                sigma_t_inv,
                lambda,
                mu_y: *spec.mu_y.at(t),
                sigma_y1: spec.sigma_y1.at(t).clone(),
                sigma_y2: spec.sigma_y2.at(t).clone(),
                p: *spec.p.at(t),
            });
        }
        Ok(ModelParams {
            spec,
            starts,
            regimes,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn x0(&self) -> f64 {
        self.spec.w0 / self.spec.y0
    }

    /// Coefficients in force at `t`.
    pub fn coeffs(&self, t: f64) -> &Coefficients {
        let i = self.starts.partition_point(|b| *b <= t).saturating_sub(1);
        &self.regimes[i]
    }

    /// Union of all schedule breakpoints.
    pub fn breakpoints(&self) -> &[f64] {
        &self.starts
    }

    /// Same model with a replaced salary risk-premium schedule.
    pub fn with_mu_y(&self, mu_y: Schedule<f64>) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.mu_y = mu_y;
        ModelParams::new(spec)
    }

    pub fn snapshot(&self) -> Value {
        fn vsched(s: &Schedule<DVector<f64>>) -> Value {
            json!({
                "breakpoints": s.breakpoints(),
                "values": s.values().iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        }
        let sig = &self.spec.sigma;
        json!({
            "n": self.spec.n,
            "m": self.spec.m,
            "r": self.spec.r,
            "mu": vsched(&self.spec.mu),
            "sigma": {
                "breakpoints": sig.breakpoints(),
                "values": sig.values().iter().map(|s| {
                    (0..s.nrows()).map(|i| s.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()
                }).collect::<Vec<_>>(),
            },
            "muY": { "breakpoints": self.spec.mu_y.breakpoints(), "values": self.spec.mu_y.values() },
            "sigmaY1": vsched(&self.spec.sigma_y1),
            "sigmaY2": vsched(&self.spec.sigma_y2),
            "p": { "breakpoints": self.spec.p.breakpoints(), "values": self.spec.p.values() },
            "w0": self.spec.w0,
            "y0": self.spec.y0,
        })
    }
}

/// λ_t = Σ_t⁻¹ μ_t.
pub fn market_price_of_risk(params: &ModelParams, t: f64) -> DVector<f64> {
    params.coeffs(t).lambda.clone()
}

/// α_t = (λ_t−σ¹_t)ᵀβ + λ_tᵀσ¹_t + ‖σ²_t‖² − μ^Y_t
pub fn alpha_from_beta(params: &ModelParams, beta: &DVector<f64>, t: f64) -> f64 {
    params.coeffs(t).alpha(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    PowerRatio,
    ExpRatio,
    PowerWealth,
    ExpWealth,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::PowerRatio,
        Family::ExpRatio,
        Family::PowerWealth,
        Family::ExpWealth,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::PowerRatio => "power",
            Family::ExpRatio => "exp",
            Family::PowerWealth => "powerW",
            Family::ExpWealth => "expW",
        }
    }

    pub fn from_id(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.id().eq_ignore_ascii_case(s))
    }

    pub fn is_power(self) -> bool {
        matches!(self, Family::PowerRatio | Family::PowerWealth)
    }

    pub fn is_wealth(self) -> bool {
        matches!(self, Family::PowerWealth | Family::ExpWealth)
    }
}

/// Forward preference choice.
///
/// `baseline` is β for the ratio families and the wealth baseline strategy π̃
/// for the wealth families. `theta1`/`theta2` are the preference volatility
/// loadings (θ̃ in the wealth case).
#[derive(Debug, Clone)]
pub struct PreferenceSpec {
    pub family: Family,
    pub gamma: f64,
    pub theta1: Schedule<DVector<f64>>,
    pub theta2: Schedule<DVector<f64>>,
    pub baseline: Schedule<DVector<f64>>,
}

impl PreferenceSpec {
    pub fn scalar(family: Family, gamma: f64, theta1: f64, theta2: f64, baseline: f64) -> Self {
        PreferenceSpec {
            family,
            gamma,
            theta1: Schedule::constant(DVector::from_element(1, theta1)),
            theta2: Schedule::constant(DVector::from_element(1, theta2)),
            baseline: Schedule::constant(DVector::from_element(1, baseline)),
        }
    }

    /// Checks the risk parameter range and dimensions against `params`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let g = self.gamma;
        if self.family.is_power() {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::invalid(
                    "preference.gamma",
                    "power families need 0 < gamma < 1",
                ));
            }
        } else if !(g > 0.0 && g.is_finite()) {
            return Err(Error::invalid(
                "preference.gamma",
                "exponential families need gamma > 0",
            ));
        }
        for v in self.theta1.values() {
            check_len("preference.theta1", v.len(), params.n())?;
            check_finite("preference.theta1", v.iter())?;
        }
        for v in self.theta2.values() {
            check_len("preference.theta2", v.len(), params.m())?;
            check_finite("preference.theta2", v.iter())?;
        }
        let key = if self.family.is_wealth() {
            "preference.pihat"
        } else {
            "preference.beta"
        };
        for v in self.baseline.values() {
            check_len(key, v.len(), params.n())?;
            check_finite(key, v.iter())?;
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .theta1
            .breakpoints()
            .iter()
            .chain(self.theta2.breakpoints())
            .chain(self.baseline.breakpoints())
            .copied()
            .collect();
        b.sort_by(|a, b| a.total_cmp(b));
        b.dedup();
        b
    }

    pub fn snapshot(&self) -> Value {
        let vs = |s: &Schedule<DVector<f64>>| {
            json!({
                "breakpoints": s.breakpoints(),
                "values": s.values().iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        };
        let key = if self.family.is_wealth() { "pihat" } else { "beta" };
        json!({
            "family": self.family.id(),
            "gamma": self.gamma,
            "theta1": vs(&self.theta1),
            "theta2": vs(&self.theta2),
            key: vs(&self.baseline),
        })
    }
}
