//! Closed-form feedback investment rules.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model_core::{Coefficients, Family, ModelParams, PreferenceSpec, Schedule};

/// Below this value of |k|·(T−t) the annuity factor switches to its Taylor series.
pub const TAYLOR_BAND: f64 = 1e-6;

/// ∫₀^τ e^{k s} ds
fn discounted_length(k: f64, tau: f64) -> f64 {
    let x = k * tau;
    if x.abs() < TAYLOR_BAND {
        tau * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        x.exp_m1() / k
    }
}

/// Risk-neutral value at `t` of one unit of salary paid continuously until `horizon`,
/// per unit of current salary.
pub fn annuity_factor(mu_y: f64, lambda: f64, sigma_y1: f64, t: f64, horizon: f64) -> Result<f64> {
    if t > horizon {
        return Err(Error::Domain(format!(
            "annuity factor needs t <= T (t={t}, T={horizon})"
        )));
    }
    Ok(discounted_length(mu_y - lambda * sigma_y1, horizon - t))
}

/// Annuity factor when the salary premium jumps from `mu_y` to `mu_y_tilde` at `t0`.
pub fn annuity_factor_switch(
    mu_y: f64,
    mu_y_tilde: f64,
    lambda: f64,
    sigma_y1: f64,
    t: f64,
    t0: f64,
    horizon: f64,
) -> Result<f64> {
    if !(0.0 <= t && t <= horizon && 0.0 < t0 && t0 < horizon) {
        return Err(Error::Domain(format!(
            "switch annuity factor needs 0 <= t <= T and 0 < t0 < T (t={t}, t0={t0}, T={horizon})"
        )));
    }
    if t >= t0 {
        return annuity_factor(mu_y_tilde, lambda, sigma_y1, t, horizon);
    }
    let k = mu_y - lambda * sigma_y1;
    Ok(annuity_factor(mu_y, lambda, sigma_y1, t, t0)?
        + (k * (t0 - t)).exp() * annuity_factor(mu_y_tilde, lambda, sigma_y1, t0, horizon)?)
}

/// Annuity factor for a piecewise-constant salary premium belief, with λ and σ^{Y,1}
/// taken from `params` (scalar market).
pub fn annuity_factor_schedule(
    params: &ModelParams,
    mu_y: &Schedule<f64>,
    t: f64,
    horizon: f64,
) -> Result<f64> {
    if t > horizon {
        return Err(Error::Domain(format!(
            "annuity factor needs t <= T (t={t}, T={horizon})"
        )));
    }
    let next_cut = |s: f64| -> f64 {
        let a = params.breakpoints().iter().find(|b| **b > s).copied();
        let b = mu_y.breakpoints().iter().find(|b| **b > s).copied();
        let c = match (a, b) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => f64::INFINITY,
        };
        c.min(horizon)
    };
    let mut s = t;
    let mut log_growth: f64 = 0.0;
    let mut total = 0.0;
    while s < horizon {
        let e = next_cut(s);
        let c = params.coeffs(s);
        let k = *mu_y.at(s) - c.lambda[0] * c.sigma_y1[0];
        total += log_growth.exp() * discounted_length(k, e - s);
        log_growth += k * (e - s);
        s = e;
    }
    Ok(total)
}

/// What the backward investor believes about the future salary premium.
#[derive(Debug, Clone)]
pub enum MuYBelief {
    /// One schedule for the whole horizon (plain rule, or the oracle that knows the switch).
    Fixed(Schedule<f64>),
    /// Uses `initial` before `reveal_at`, `revised` afterwards.
    Revised {
        initial: Schedule<f64>,
        revised: Schedule<f64>,
        reveal_at: f64,
    },
}

#[derive(Debug, Clone)]
pub struct BackwardRule {
    pub gamma: f64,
    pub horizon: f64,
    pub belief: MuYBelief,
    /// Label distinguishing plain, adapting and oracle variants.
    pub kind: PolicyKind,
}

impl BackwardRule {
    pub fn plain(gamma: f64, horizon: f64, mu_y: f64) -> Self {
        BackwardRule {
            gamma,
            horizon,
            belief: MuYBelief::Fixed(Schedule::constant(mu_y)),
            kind: PolicyKind::Backward,
        }
    }

    pub fn oracle(gamma: f64, horizon: f64, mu_y: f64, t0: f64, mu_y_tilde: f64) -> Result<Self> {
        Ok(BackwardRule {
            gamma,
            horizon,
            belief: MuYBelief::Fixed(Schedule::switched(mu_y, t0, mu_y_tilde)?),
            kind: PolicyKind::BackwardOracle,
        })
    }

    pub fn adapting(gamma: f64, horizon: f64, mu_y: f64, t0: f64, mu_y_tilde: f64) -> Self {
        BackwardRule {
            gamma,
            horizon,
            belief: MuYBelief::Revised {
                initial: Schedule::constant(mu_y),
                revised: Schedule::constant(mu_y_tilde),
                reveal_at: t0,
            },
            kind: PolicyKind::BackwardAdapting,
        }
    }

    fn believed(&self, t: f64) -> &Schedule<f64> {
        match &self.belief {
            MuYBelief::Fixed(s) => s,
            MuYBelief::Revised {
                initial,
                revised,
                reveal_at,
            } => {
                if t < *reveal_at {
                    initial
                } else {
                    revised
                }
            }
        }
    }

    pub fn annuity(&self, params: &ModelParams, t: f64) -> Result<f64> {
        annuity_factor_schedule(params, self.believed(t), t.min(self.horizon), self.horizon)
    }
}

/// Backward (classical) power-utility rule for a single risky asset:
/// σ^{Y,1}/σ + (λ−σ^{Y,1})/(σ(1−γ)) · (1 + p F / X).
///
/// Negative fund ratios are accepted; the rule is undefined only at X = 0.
pub fn backward_policy(t: f64, x: f64, params: &ModelParams, rule: &BackwardRule) -> Result<f64> {
    if params.n() != 1 {
        return Err(Error::Domain(
            "backward strategies are defined for one risky asset".into(),
        ));
    }
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!(
            "backward strategy undefined at X={x} (t={t})"
        )));
    }
    let c = params.coeffs(t);
    let sigma = c.sigma[(0, 0)];
    let s1 = c.sigma_y1[0];
    let lambda = c.lambda[0];
    let f = rule.annuity(params, t)?;
    Ok(s1 / sigma + (lambda - s1) / (sigma * (1.0 - rule.gamma)) * (1.0 + c.p * f / x))
}

/// π̂_t = (Σ_tᵀ)⁻¹(σ^{Y,1}_t + β_t)
pub fn baseline_policy(params: &ModelParams, beta: &DVector<f64>, t: f64) -> DVector<f64> {
    let c = params.coeffs(t);
    &c.sigma_t_inv * (&c.sigma_y1 + beta)
}

/// (Σᵀ)⁻¹(λ−γσ^{Y,1}+θ¹)/(1−γ)
pub fn myopic_power(c: &Coefficients, gamma: f64, theta1: &DVector<f64>) -> DVector<f64> {
    &c.sigma_t_inv * ((&c.lambda - &c.sigma_y1 * gamma + theta1) / (1.0 - gamma))
}

/// (Σᵀ)⁻¹(λ+θ¹)
pub fn merton_exp(c: &Coefficients, theta1: &DVector<f64>) -> DVector<f64> {
    &c.sigma_t_inv * (&c.lambda + theta1)
}

fn mix(w: f64, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    a * w + b * (1.0 - w)
}

/// Optimal rule under the power forward preference on the ratio.
pub fn forward_power_policy(
    t: f64,
    x: f64,
    z: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
) -> Result<DVector<f64>> {
    forward_power_scaled(t, x, z, params, pref, 1.0)
}

pub(crate) fn forward_power_scaled(
    t: f64,
    x: f64,
    z: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
    scale: f64,
) -> Result<DVector<f64>> {
    if !(x > z) {
        return Err(Error::Admissibility { t, x, floor: z });
    }
    let c = params.coeffs(t);
    let pihat = &c.sigma_t_inv * (&c.sigma_y1 + pref.baseline.at(t));
    let myopic = myopic_power(c, pref.gamma, pref.theta1.at(t)) * scale;
    Ok(mix(z / x, &pihat, &myopic))
}

/// Optimal rule under the exponential forward preference on the ratio.
pub fn forward_exp_policy(
    t: f64,
    x: f64,
    gamma_t: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
) -> Result<DVector<f64>> {
    forward_exp_scaled(t, x, gamma_t, params, pref, 1.0)
}

pub(crate) fn forward_exp_scaled(
    t: f64,
    x: f64,
    gamma_t: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
    scale: f64,
) -> Result<DVector<f64>> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!("exponential rule undefined at X={x}")));
    }
    if !(gamma_t > 0.0) {
        return Err(Error::Domain(format!("risk tolerance must be positive, got {gamma_t}")));
    }
    let c = params.coeffs(t);
    let pihat = &c.sigma_t_inv * (&c.sigma_y1 + pref.baseline.at(t));
    let merton = merton_exp(c, pref.theta1.at(t)) * scale;
    Ok(mix(gamma_t / x, &merton, &pihat))
}

/// Optimal rule under the power forward preference on absolute fund value.
pub fn forward_power_wealth_policy(
    t: f64,
    w: f64,
    w_floor: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
) -> Result<DVector<f64>> {
    forward_power_wealth_scaled(t, w, w_floor, params, pref, 1.0)
}

pub(crate) fn forward_power_wealth_scaled(
    t: f64,
    w: f64,
    w_floor: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
    scale: f64,
) -> Result<DVector<f64>> {
    if !(w > w_floor) {
        return Err(Error::Admissibility { t, x: w, floor: w_floor });
    }
    let c = params.coeffs(t);
    let pitilde = pref.baseline.at(t);
    let myopic = &c.sigma_t_inv * ((&c.lambda + pref.theta1.at(t)) / (1.0 - pref.gamma)) * scale;
    Ok(mix(w_floor / w, pitilde, &myopic))
}

/// Optimal rule under the exponential forward preference on absolute fund value.
pub fn forward_exp_wealth_policy(
    t: f64,
    w: f64,
    gamma_t: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
) -> Result<DVector<f64>> {
    forward_exp_wealth_scaled(t, w, gamma_t, params, pref, 1.0)
}

pub(crate) fn forward_exp_wealth_scaled(
    t: f64,
    w: f64,
    gamma_t: f64,
    params: &ModelParams,
    pref: &PreferenceSpec,
    scale: f64,
) -> Result<DVector<f64>> {
    if w == 0.0 || !w.is_finite() {
        return Err(Error::Domain(format!("exponential rule undefined at W={w}")));
    }
    if !(gamma_t > 0.0) {
        return Err(Error::Domain(format!("risk tolerance must be positive, got {gamma_t}")));
    }
    let c = params.coeffs(t);
    let merton = merton_exp(c, pref.theta1.at(t)) * scale;
    Ok(mix(gamma_t / w, &merton, pref.baseline.at(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Backward,
    BackwardAdapting,
    BackwardOracle,
    Baseline,
    ForwardPower,
    ForwardExp,
    ForwardPowerWealth,
    ForwardExpWealth,
    Constant,
    Custom,
}

/// Observed state handed to a policy. `floor` is Z (ratio) or W̃⁰ (wealth);
/// `risk_tolerance` is Γ or Γ̃.
#[derive(Debug, Clone, Copy)]
pub struct PolicyState {
    pub t: f64,
    pub x: f64,
    pub w: f64,
    pub y: f64,
    pub floor: f64,
    pub risk_tolerance: f64,
}

pub type CustomRule =
    Arc<dyn Fn(&PolicyState, &Coefficients) -> DVector<f64> + Send + Sync + 'static>;

#[derive(Clone)]
pub enum StrategyPolicy {
    Constant(DVector<f64>),
    /// π̂ for a ratio baseline with sensitivity β.
    Baseline(Schedule<DVector<f64>>),
    Backward(BackwardRule),
    /// Forward optimal rule for `pref.family`, with its myopic (power) or
    /// Merton (exponential) term multiplied by `myopic_scale`.
    Forward {
        pref: PreferenceSpec,
        myopic_scale: f64,
    },
    Custom { id: String, rule: CustomRule },
}

impl fmt::Debug for StrategyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StrategyPolicy({})", self.id())
    }
}

impl StrategyPolicy {
    pub fn forward(pref: PreferenceSpec) -> Self {
        StrategyPolicy::Forward {
            pref,
            myopic_scale: 1.0,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            StrategyPolicy::Constant(_) => PolicyKind::Constant,
            StrategyPolicy::Baseline(_) => PolicyKind::Baseline,
            StrategyPolicy::Backward(r) => r.kind,
            StrategyPolicy::Forward { pref, .. } => match pref.family {
                Family::PowerRatio => PolicyKind::ForwardPower,
                Family::ExpRatio => PolicyKind::ForwardExp,
                Family::PowerWealth => PolicyKind::ForwardPowerWealth,
                Family::ExpWealth => PolicyKind::ForwardExpWealth,
            },
            StrategyPolicy::Custom { .. } => PolicyKind::Custom,
        }
    }

    /// Stable identifier used in file names and column headers.
    pub fn id(&self) -> String {
        let base = match self.kind() {
            PolicyKind::Backward => "backward",
            PolicyKind::BackwardAdapting => "backward-adapting",
            PolicyKind::BackwardOracle => "backward-oracle",
            PolicyKind::Baseline => "baseline",
            PolicyKind::ForwardPower => "forward-power",
            PolicyKind::ForwardExp => "forward-exp",
            PolicyKind::ForwardPowerWealth => "forward-powerW",
            PolicyKind::ForwardExpWealth => "forward-expW",
            PolicyKind::Constant => "constant",
            PolicyKind::Custom => {
                if let StrategyPolicy::Custom { id, .. } = self {
                    return id.clone();
                }
                unreachable!()
            }
        };
        match self {
            StrategyPolicy::Forward { myopic_scale, .. } if *myopic_scale != 1.0 => {
                format!("{base}-x{myopic_scale}")
            }
            _ => base.to_string(),
        }
    }

    pub fn preference(&self) -> Option<&PreferenceSpec> {
        match self {
            StrategyPolicy::Forward { pref, .. } => Some(pref),
            _ => None,
        }
    }

    pub fn eval(&self, params: &ModelParams, s: &PolicyState) -> Result<DVector<f64>> {
        let t = s.t;
        match self {
            StrategyPolicy::Constant(pi) => Ok(pi.clone()),
            StrategyPolicy::Baseline(beta) => Ok(baseline_policy(params, beta.at(t), t)),
            StrategyPolicy::Backward(rule) => {
                Ok(DVector::from_element(1, backward_policy(t, s.x, params, rule)?))
            }
            StrategyPolicy::Forward { pref, myopic_scale } => match pref.family {
                Family::PowerRatio => {
                    forward_power_scaled(t, s.x, s.floor, params, pref, *myopic_scale)
                }
                Family::ExpRatio => {
                    forward_exp_scaled(t, s.x, s.risk_tolerance, params, pref, *myopic_scale)
                }
                Family::PowerWealth => {
                    forward_power_wealth_scaled(t, s.w, s.floor, params, pref, *myopic_scale)
                }
                Family::ExpWealth => {
                    forward_exp_wealth_scaled(t, s.w, s.risk_tolerance, params, pref, *myopic_scale)
                }
            },
            StrategyPolicy::Custom { rule, .. } => Ok(rule(s, params.coeffs(t))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::ModelSpec;

    fn base_params(sigma_y2: f64) -> ModelParams {
        ModelParams::new(ModelSpec::scalar(
            0.03, 0.08, 0.2, 0.02, 0.08, sigma_y2, 0.1, 1.0, 1.0,
        ))
        .unwrap()
    }

    #[test]
    fn annuity_edge_cases() {
        assert_eq!(annuity_factor(0.02, 0.4, 0.08, 20.0, 20.0).unwrap(), 0.0);
        assert_eq!(annuity_factor(0.032, 0.4, 0.08, 0.0, 20.0).unwrap(), 20.0);
        assert!(annuity_factor(0.02, 0.4, 0.08, 21.0, 20.0).is_err());
    }

    #[test]
    fn switch_reduces_to_plain_without_change() {
        for t in [0.0, 3.0, 10.0, 15.0] {
            let a = annuity_factor_switch(0.02, 0.02, 0.4, 0.08, t, 10.0, 20.0).unwrap();
            let b = annuity_factor(0.02, 0.4, 0.08, t, 20.0).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        let a = annuity_factor_switch(0.02, 0.07, 0.4, 0.08, 10.0, 10.0, 20.0).unwrap();
        let b = annuity_factor(0.07, 0.4, 0.08, 10.0, 20.0).unwrap();
        assert_eq!(a, b);
        assert!(annuity_factor_switch(0.02, 0.07, 0.4, 0.08, 0.0, 25.0, 20.0).is_err());
    }

    #[test]
    fn schedule_annuity_matches_switch_formula() {
        let p = base_params(0.0);
        let s = Schedule::switched(0.02, 10.0, 0.07).unwrap();
        for t in [0.0, 2.5, 9.99, 10.0, 17.0, 20.0] {
            let a = annuity_factor_schedule(&p, &s, t, 20.0).unwrap();
            let b = annuity_factor_switch(0.02, 0.07, 0.4, 0.08, t, 10.0, 20.0).unwrap();
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn backward_terminal_and_limit_values() {
        let p = base_params(0.0);
        let rule = BackwardRule::plain(0.6, 20.0, 0.02);
        let v = backward_policy(20.0, 1.3, &p, &rule).unwrap();
        assert!((v - 4.4).abs() < 1e-12);
        let v = backward_policy(3.0, 1e15, &p, &rule).unwrap();
        assert!((v - 4.4).abs() < 1e-12);
        assert!(backward_policy(3.0, 0.0, &p, &rule).is_err());
        assert!(backward_policy(3.0, -0.5, &p, &rule).unwrap() < 4.4);
    }

    #[test]
    fn backward_without_contribution_ignores_state() {
        let spec = ModelSpec::scalar(0.03, 0.08, 0.2, 0.02, 0.08, 0.0, 0.0, 1.0, 1.0);
        let p = ModelParams::new(spec).unwrap();
        let rule = BackwardRule::plain(0.6, 20.0, 0.02);
        let a = backward_policy(4.0, 0.3, &p, &rule).unwrap();
        let b = backward_policy(4.0, 7.0, &p, &rule).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_depends_on_future_premium() {
        let p = base_params(0.0);
        let plain = BackwardRule::plain(0.6, 20.0, 0.02);
        let oracle = BackwardRule::oracle(0.6, 20.0, 0.02, 15.0, 0.03).unwrap();
        let a = backward_policy(5.0, 1.0, &p, &plain).unwrap();
        let b = backward_policy(5.0, 1.0, &p, &oracle).unwrap();
        assert!(b > a);
    }

    #[test]
    fn baseline_examples() {
        let p = base_params(0.05);
        let v = baseline_policy(&p, &DVector::from_element(1, -0.25), 0.0)[0];
        assert!((v + 0.85).abs() < 1e-12);
        let v = baseline_policy(&p, &DVector::from_element(1, 0.25), 0.0)[0];
        assert!((v - 1.65).abs() < 1e-12);
        let v = baseline_policy(&p, &DVector::zeros(1), 0.0)[0];
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn forward_power_examples() {
        let p = base_params(0.05);
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
        let v = forward_power_policy(0.0, 1.0, 0.0, &p, &pref).unwrap()[0];
        assert!((v - 4.4).abs() < 1e-12);
        let v = forward_power_policy(0.0, 2.0, 1.0, &p, &pref).unwrap()[0];
        assert!((v - 3.025).abs() < 1e-12);
        let v = forward_power_policy(0.0, 1.0, 1.0 - 1e-12, &p, &pref).unwrap()[0];
        assert!((v - 1.65).abs() < 1e-10);
        assert!(forward_power_policy(0.0, 1.0, 1.0, &p, &pref).is_err());
    }

    #[test]
    fn forward_exp_examples() {
        let p = base_params(0.05);
        let pref = PreferenceSpec::scalar(Family::ExpRatio, 0.6, 0.0, 0.2, 0.25);
        let v = forward_exp_policy(0.0, 2.0, 1.0, &p, &pref).unwrap()[0];
        assert!((v - 1.825).abs() < 1e-12);
        let v = forward_exp_policy(0.0, 1.0, 1.0, &p, &pref).unwrap()[0];
        assert!((v - 2.0).abs() < 1e-12);
        let v = forward_exp_policy(0.0, 1e14, 1.0, &p, &pref).unwrap()[0];
        assert!((v - 1.65).abs() < 1e-12);
        assert!(forward_exp_policy(0.0, 0.0, 1.0, &p, &pref).is_err());
    }

    #[test]
    fn forward_wealth_examples() {
        let p = base_params(0.05);
        let pref = PreferenceSpec::scalar(Family::PowerWealth, 0.6, 0.0, 0.2, 1.0);
        let v = forward_power_wealth_policy(0.0, 1.0, 0.0, &p, &pref).unwrap()[0];
        assert!((v - 5.0).abs() < 1e-12);
        let v = forward_power_wealth_policy(0.0, 1.0, 1.0 - 1e-13, &p, &pref).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-10);
        let neg = PreferenceSpec::scalar(Family::PowerWealth, 0.6, -0.4, 0.2, 1.0);
        let v = forward_power_wealth_policy(0.0, 2.0, 1.0, &p, &neg).unwrap()[0];
        assert!((v - 0.5).abs() < 1e-12);

        let pref = PreferenceSpec::scalar(Family::ExpWealth, 0.6, 0.0, 0.2, 1.0);
        let v = forward_exp_wealth_policy(0.0, 4.0, 1.0, &p, &pref).unwrap()[0];
        assert!((v - 1.25).abs() < 1e-12);
        let v = forward_exp_wealth_policy(0.0, 1.0, 1.0, &p, &pref).unwrap()[0];
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn backward_at_horizon_equals_forward_myopic() {
        let p = base_params(0.0);
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.0, 0.25);
        let rule = BackwardRule::plain(0.6, 20.0, 0.02);
        let b = backward_policy(20.0, 2.0, &p, &rule).unwrap();
        let f = forward_power_policy(20.0, 2.0, 0.0, &p, &pref).unwrap()[0];
        assert!((b - f).abs() < 1e-12);
    }
}
