//! Forward utility random fields, their volatility fields, and the SPDE drift
//! identity they must satisfy.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model_core::{Family, ModelParams, PreferenceSpec};

/// v_t for the power preference on the ratio.
pub fn power_v_drift(params: &ModelParams, pref: &PreferenceSpec, t: f64) -> f64 {
    let c = params.coeffs(t);
    let g = pref.gamma;
    let th1 = pref.theta1.at(t);
    let th2 = pref.theta2.at(t);
    let s1 = &c.sigma_y1;
    let s2 = &c.sigma_y2;
    -g * (1.0 + g) / 2.0 * (s1.norm_squared() + s2.norm_squared())
        - g * (&c.lambda - s1 * g + th1).norm_squared() / (2.0 * (1.0 - g))
        + g * (th1.dot(s1) + th2.dot(s2) + c.mu_y)
        - (th1.norm_squared() + th2.norm_squared()) / 2.0
}

/// Drift of V for the exponential preference on the ratio.
pub fn exp_v_drift(params: &ModelParams, pref: &PreferenceSpec, t: f64) -> f64 {
    let c = params.coeffs(t);
    let th1 = pref.theta1.at(t);
    let th2 = pref.theta2.at(t);
    let beta = pref.baseline.at(t);
    0.5 * ((&c.lambda - &c.sigma_y1 + th1 - beta).norm_squared()
        - th1.norm_squared()
        - th2.norm_squared())
}

/// ṽ_t for the power preference on absolute fund value.
pub fn power_wealth_v_drift(params: &ModelParams, pref: &PreferenceSpec, t: f64) -> f64 {
    let c = params.coeffs(t);
    let g = pref.gamma;
    let th1 = pref.theta1.at(t);
    let th2 = pref.theta2.at(t);
    -c.r * g - g * (&c.lambda + th1).norm_squared() / (2.0 * (1.0 - g))
        - (th1.norm_squared() + th2.norm_squared()) / 2.0
}

/// Drift of Ṽ for the exponential preference on absolute fund value.
pub fn exp_wealth_v_drift(params: &ModelParams, pref: &PreferenceSpec, t: f64) -> f64 {
    let c = params.coeffs(t);
    let th1 = pref.theta1.at(t);
    let th2 = pref.theta2.at(t);
    let beta = c.sigma.transpose() * pref.baseline.at(t);
    0.5 * ((&c.lambda + th1 - beta).norm_squared() - th1.norm_squared() - th2.norm_squared())
}

pub fn v_drift(params: &ModelParams, pref: &PreferenceSpec, t: f64) -> f64 {
    match pref.family {
        Family::PowerRatio => power_v_drift(params, pref, t),
        Family::ExpRatio => exp_v_drift(params, pref, t),
        Family::PowerWealth => power_wealth_v_drift(params, pref, t),
        Family::ExpWealth => exp_wealth_v_drift(params, pref, t),
    }
}

/// Utility value with an explicit marker for arguments outside the power domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityValue {
    Finite(f64),
    OutOfDomain,
}

impl UtilityValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            UtilityValue::Finite(v) => Some(v),
            UtilityValue::OutOfDomain => None,
        }
    }
}

/// Realized auxiliary states at one time. `floor` is Z (or W̃⁰),
/// `risk_tolerance` is Γ (or Γ̃) and is ignored by the power families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldState {
    pub floor: f64,
    pub risk_tolerance: f64,
    pub v: f64,
}

/// A forward preference frozen at one time and state.
#[derive(Debug, Clone)]
pub struct UtilityField {
    pub family: Family,
    pub gamma: f64,
    pub theta1: DVector<f64>,
    pub theta2: DVector<f64>,
    /// Loading of the baseline on B¹ (β, or Σᵀπ̃); exponential families only.
    pub vol1: DVector<f64>,
    /// Loading of the baseline on −B² (σ^{Y,2}, or 0); exponential families only.
    pub vol2: DVector<f64>,
    pub state: FieldState,
}

#[derive(Debug, Clone)]
pub struct FieldDerivs {
    pub u: f64,
    pub u_x: f64,
    pub u_xx: f64,
    pub a1: DVector<f64>,
    pub a2: DVector<f64>,
    pub a1_x: DVector<f64>,
    pub a2_x: DVector<f64>,
}

impl UtilityField {
    pub fn at(params: &ModelParams, pref: &PreferenceSpec, t: f64, state: FieldState) -> Self {
        let c = params.coeffs(t);
        let (vol1, vol2) = match pref.family {
            Family::ExpRatio => (pref.baseline.at(t).clone(), c.sigma_y2.clone()),
            Family::ExpWealth => (
                c.sigma.transpose() * pref.baseline.at(t),
                DVector::zeros(params.m()),
            ),
            _ => (DVector::zeros(params.n()), DVector::zeros(params.m())),
        };
        UtilityField {
            family: pref.family,
            gamma: pref.gamma,
            theta1: pref.theta1.at(t).clone(),
            theta2: pref.theta2.at(t).clone(),
            vol1,
            vol2,
            state,
        }
    }

    pub fn value(&self, x: f64) -> UtilityValue {
        let s = &self.state;
        if self.family.is_power() {
            let xt = x - s.floor;
            if xt > 0.0 {
                UtilityValue::Finite(xt.powf(self.gamma) * s.v.exp() / self.gamma)
            } else {
                UtilityValue::OutOfDomain
            }
        } else {
            UtilityValue::Finite(-(-(x - s.floor) / s.risk_tolerance + s.v).exp())
        }
    }

    /// Value, x-derivatives and volatility fields at `x`.
    pub fn derivatives(&self, x: f64) -> Result<FieldDerivs> {
        let s = &self.state;
        if self.family.is_power() {
            let xt = x - s.floor;
            if !(xt > 0.0) {
                return Err(Error::Domain(format!(
                    "power field evaluated at x={x} below floor {}",
                    s.floor
                )));
            }
            let g = self.gamma;
            let ev = s.v.exp();
            let u = xt.powf(g) * ev / g;
            let u_x = xt.powf(g - 1.0) * ev;
            let u_xx = (g - 1.0) * xt.powf(g - 2.0) * ev;
            Ok(FieldDerivs {
                u,
                u_x,
                u_xx,
                a1: &self.theta1 * u,
                a2: &self.theta2 * u,
                a1_x: &self.theta1 * u_x,
                a2_x: &self.theta2 * u_x,
            })
        } else {
            let gt = s.risk_tolerance;
            if !(gt > 0.0) {
                return Err(Error::Domain(format!("risk tolerance must be positive, got {gt}")));
            }
            let u = -(-(x - s.floor) / gt + s.v).exp();
            let u_x = -u / gt;
            let u_xx = u / (gt * gt);
            let l1 = &self.theta1 + &self.vol1 * (x / gt);
            let l2 = &self.theta2 - &self.vol2 * (x / gt);
            Ok(FieldDerivs {
                u,
                u_x,
                u_xx,
                a1: &l1 * u,
                a2: &l2 * u,
                a1_x: &l1 * u_x + &self.vol1 * (u / gt),
                a2_x: &l2 * u_x - &self.vol2 * (u / gt),
            })
        }
    }
}

pub fn evaluate_utility(field: &UtilityField, x: f64) -> UtilityValue {
    field.value(x)
}

/// (a₁, a₂) at `x`.
pub fn volatility_fields(field: &UtilityField, x: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = field.derivatives(x)?;
    Ok((d.a1, d.a2))
}

/// Coefficients of the controlled quantity dQ = c dt + Q((φ + L)dt + ...) written
/// in the form used by the SPDE: contribution `c`, salary loadings s¹, s², and the
/// strategy-free linear coefficient L = λᵀs¹ + ‖s²‖² + ρ.
#[derive(Debug, Clone)]
pub struct QuantityDynamics {
    pub contribution: f64,
    pub s1: DVector<f64>,
    pub s2: DVector<f64>,
    pub linear: f64,
    pub lambda: DVector<f64>,
    pub sigma_t_inv: nalgebra::DMatrix<f64>,
}

impl QuantityDynamics {
    /// Fund-to-salary ratio.
    pub fn ratio(params: &ModelParams, t: f64) -> Self {
        let c = params.coeffs(t);
        QuantityDynamics {
            contribution: c.p,
            s1: c.sigma_y1.clone(),
            s2: c.sigma_y2.clone(),
            linear: c.ratio_linear(),
            lambda: c.lambda.clone(),
            sigma_t_inv: c.sigma_t_inv.clone(),
        }
    }

    /// Absolute fund value with current salary `y`.
    pub fn wealth(params: &ModelParams, t: f64, y: f64) -> Self {
        let c = params.coeffs(t);
        QuantityDynamics {
            contribution: c.p * y,
            s1: DVector::zeros(params.n()),
            s2: DVector::zeros(params.m()),
            linear: c.r,
            lambda: c.lambda.clone(),
            sigma_t_inv: c.sigma_t_inv.clone(),
        }
    }

    pub fn for_family(params: &ModelParams, family: Family, t: f64, y: f64) -> Self {
        if family.is_wealth() {
            QuantityDynamics::wealth(params, t, y)
        } else {
            QuantityDynamics::ratio(params, t)
        }
    }
}

/// Translation process dZ = ν dt + κ¹ᵀdB¹ + κ²ᵀdB² evaluated at one time.
#[derive(Debug, Clone)]
pub struct SpdeContext {
    pub z: f64,
    pub nu: f64,
    pub kappa1: DVector<f64>,
    pub kappa2: DVector<f64>,
}

impl SpdeContext {
    /// No translation (exponential families).
    pub fn untranslated(n: usize, m: usize) -> Self {
        SpdeContext {
            z: 0.0,
            nu: 0.0,
            kappa1: DVector::zeros(n),
            kappa2: DVector::zeros(m),
        }
    }

    /// Translation by the ratio floor Z.
    pub fn power_ratio(params: &ModelParams, pref: &PreferenceSpec, t: f64, z: f64) -> Self {
        let c = params.coeffs(t);
        let beta = pref.baseline.at(t);
        SpdeContext {
            z,
            nu: c.p + z * c.alpha(beta),
            kappa1: beta * z,
            kappa2: &c.sigma_y2 * (-z),
        }
    }

    /// Translation by the wealth floor W̃⁰ with current salary `y`.
    pub fn power_wealth(
        params: &ModelParams,
        pref: &PreferenceSpec,
        t: f64,
        w_floor: f64,
        y: f64,
    ) -> Self {
        let c = params.coeffs(t);
        let pit = pref.baseline.at(t);
        SpdeContext {
            z: w_floor,
            nu: c.p * y + w_floor * (c.r + pit.dot(&c.mu)),
            kappa1: c.sigma.transpose() * pit * w_floor,
            kappa2: DVector::zeros(params.m()),
        }
    }

    pub fn for_family(
        params: &ModelParams,
        pref: &PreferenceSpec,
        t: f64,
        floor: f64,
        y: f64,
    ) -> Self {
        match pref.family {
            Family::PowerRatio => SpdeContext::power_ratio(params, pref, t, floor),
            Family::PowerWealth => SpdeContext::power_wealth(params, pref, t, floor, y),
            _ => SpdeContext::untranslated(params.n(), params.m()),
        }
    }
}

/// Drift b(x̃, t) forced on the translated field by the SPDE.
pub fn spde_drift(
    field: &UtilityField,
    x_tilde: f64,
    dynamics: &QuantityDynamics,
    ctx: &SpdeContext,
) -> Result<f64> {
    let x = x_tilde + ctx.z;
    let d = field.derivatives(x)?;
    if !(d.u_xx < 0.0) {
        return Err(Error::Degenerate(d.u_xx));
    }
    let excess = &dynamics.lambda - &dynamics.s1;
    let noise2 = &dynamics.s2 * x + &ctx.kappa2;
    let carry = dynamics.contribution - ctx.nu + excess.dot(&ctx.kappa1) + x * dynamics.linear;
    let hedge = &d.a1_x + &excess * d.u_x;
    Ok(noise2.dot(&d.a2_x) - 0.5 * noise2.norm_squared() * d.u_xx - d.u_x * carry
        + hedge.norm_squared() / (2.0 * d.u_xx))
}

/// Optimal strategy implied by the SPDE representation.
pub fn spde_policy(
    field: &UtilityField,
    x_tilde: f64,
    dynamics: &QuantityDynamics,
    ctx: &SpdeContext,
) -> Result<DVector<f64>> {
    let x = x_tilde + ctx.z;
    if x == 0.0 {
        return Err(Error::Domain("SPDE strategy undefined at zero quantity".into()));
    }
    let d = field.derivatives(x)?;
    if !(d.u_xx < 0.0) {
        return Err(Error::Degenerate(d.u_xx));
    }
    let excess = &dynamics.lambda - &dynamics.s1;
    let num = &d.a1_x + &excess * d.u_x - &ctx.kappa1 * d.u_xx;
    Ok(&dynamics.sigma_t_inv * (&dynamics.s1 - num / (x * d.u_xx)))
}

/// Itô drift of U(x, ·) at fixed `x`, from the closed-form dynamics of its states.
/// `y` is the current salary (wealth families only).
pub fn analytic_drift(
    params: &ModelParams,
    pref: &PreferenceSpec,
    t: f64,
    state: FieldState,
    x: f64,
    y: f64,
) -> Result<f64> {
    let field = UtilityField::at(params, pref, t, state);
    let u = match field.value(x) {
        UtilityValue::Finite(u) => u,
        UtilityValue::OutOfDomain => {
            return Err(Error::Domain(format!("x={x} outside the preference domain")))
        }
    };
    let c = params.coeffs(t);
    let th1 = pref.theta1.at(t);
    let th2 = pref.theta2.at(t);
    let vol_sq = 0.5 * (th1.norm_squared() + th2.norm_squared());
    match pref.family {
        Family::PowerRatio => Ok(u * (power_v_drift(params, pref, t) + vol_sq)),
        Family::PowerWealth => Ok(u * (power_wealth_v_drift(params, pref, t) + vol_sq)),
        Family::ExpRatio => {
            let beta = pref.baseline.at(t);
            let s1 = &c.sigma_y1;
            let s2 = &c.sigma_y2;
            let k = x / state.risk_tolerance;
            let alpha = (&c.lambda - s1).dot(beta) + c.lambda.dot(s1) + s2.norm_squared() - c.mu_y;
            Ok(u * (0.5 * (&c.lambda - s1 + th1 - beta).norm_squared()
                + c.p / state.risk_tolerance
                + k * (alpha - beta.norm_squared() - s2.norm_squared())
                + k * (beta.dot(th1) - s2.dot(th2))
                + 0.5 * k * k * (beta.norm_squared() + s2.norm_squared())))
        }
        Family::ExpWealth => {
            let bt = c.sigma.transpose() * pref.baseline.at(t);
            let k = x / state.risk_tolerance;
            let alpha = c.r + pref.baseline.at(t).dot(&c.mu);
            Ok(u * (0.5 * (&c.lambda + th1 - &bt).norm_squared()
                + c.p * y / state.risk_tolerance
                + k * (alpha - bt.norm_squared())
                + k * bt.dot(th1)
                + 0.5 * k * k * bt.norm_squared()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::ModelSpec;

    fn base_params() -> ModelParams {
        ModelParams::new(ModelSpec::scalar(
            0.03, 0.08, 0.2, 0.02, 0.08, 0.05, 0.1, 1.0, 1.0,
        ))
        .unwrap()
    }

    fn zero_params() -> ModelParams {
        ModelParams::new(ModelSpec::scalar(0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn power_v_examples() {
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
        let v = power_v_drift(&base_params(), &pref, 0.0);
        assert!((v + 0.0992).abs() < 1e-12, "{v}");
        let zero = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.0, 0.0);
        assert_eq!(power_v_drift(&zero_params(), &zero, 0.0), 0.0);
        let lam = ModelParams::new(ModelSpec::scalar(0.0, 0.08, 0.2, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0))
            .unwrap();
        let v = power_v_drift(&lam, &zero, 0.0);
        assert!((v + 0.6 * 0.16 / 0.8).abs() < 1e-15);
    }

    #[test]
    fn exp_v_examples() {
        let pref = PreferenceSpec::scalar(Family::ExpRatio, 0.6, 0.0, 0.2, 0.25);
        let v = exp_v_drift(&base_params(), &pref, 0.0);
        assert!((v + 0.01755).abs() < 1e-12, "{v}");
        let canc = PreferenceSpec::scalar(Family::ExpRatio, 0.6, 0.0, 0.0, 0.32);
        assert!(exp_v_drift(&base_params(), &canc, 0.0).abs() < 1e-15);
        let zero = PreferenceSpec::scalar(Family::ExpRatio, 0.6, 0.0, 0.0, 0.0);
        assert_eq!(exp_v_drift(&zero_params(), &zero, 0.0), 0.0);
    }

    #[test]
    fn utility_examples() {
        let p = base_params();
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
        let f = UtilityField::at(&p, &pref, 0.0, FieldState { floor: 0.0, risk_tolerance: 1.0, v: 0.0 });
        let u = f.value(1.0).finite().unwrap();
        assert!((u - 1.0 / 0.6).abs() < 1e-15);
        let f = UtilityField::at(&p, &pref, 0.0, FieldState { floor: 0.7, risk_tolerance: 1.0, v: 0.0 });
        assert_eq!(f.value(0.7), UtilityValue::OutOfDomain);
        assert_eq!(f.value(0.1), UtilityValue::OutOfDomain);

        let pref = PreferenceSpec::scalar(Family::ExpRatio, 0.6, 0.0, 0.2, 0.25);
        let f = UtilityField::at(&p, &pref, 0.0, FieldState { floor: 0.0, risk_tolerance: 1.0 / 0.6, v: 0.0 });
        assert_eq!(f.value(0.0), UtilityValue::Finite(-1.0));
    }

    #[test]
    fn volatility_examples() {
        let p = base_params();
        let zero = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.0, 0.25);
        let st = FieldState { floor: 0.3, risk_tolerance: 1.0, v: 0.1 };
        let (a1, a2) = volatility_fields(&UtilityField::at(&p, &zero, 0.0, st), 2.0).unwrap();
        assert_eq!((a1[0], a2[0]), (0.0, 0.0));

        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
        let st = FieldState { floor: 0.0, risk_tolerance: 1.0, v: 0.0 };
        let (_, a2) = volatility_fields(&UtilityField::at(&p, &pref, 0.0, st), 1.0).unwrap();
        assert!((a2[0] - 0.2 / 0.6).abs() < 1e-15);
        assert!(volatility_fields(&UtilityField::at(&p, &pref, 0.0, st), 0.0).is_err());

        let pref = PreferenceSpec::scalar(Family::ExpRatio, 0.6, 0.0, 0.0, 0.25);
        let st = FieldState { floor: 0.0, risk_tolerance: 1.0 / 0.6, v: 0.0 };
        let (a1, a2) = volatility_fields(&UtilityField::at(&p, &pref, 0.0, st), 0.0).unwrap();
        assert_eq!((a1[0], a2[0]), (0.0, 0.0));
    }

    #[test]
    fn power_spde_matches_closing_identity() {
        let p = base_params();
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
        for (z, xt, v) in [(0.0, 1.0, 0.0), (0.8, 0.3, -0.2), (2.5, 4.0, 0.7)] {
            let st = FieldState { floor: z, risk_tolerance: 1.0, v };
            let f = UtilityField::at(&p, &pref, 0.0, st);
            let ctx = SpdeContext::power_ratio(&p, &pref, 0.0, z);
            let b = spde_drift(&f, xt, &QuantityDynamics::ratio(&p, 0.0), &ctx).unwrap();
            let u = f.value(xt + z).finite().unwrap();
            let want = u * (power_v_drift(&p, &pref, 0.0) + 0.5 * 0.04);
            assert!(((b - want) / u).abs() < 1e-12, "{b} vs {want}");
        }
    }

    #[test]
    fn zero_vol_power_drift_is_v() {
        let p = base_params();
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.0, 0.25);
        let st = FieldState { floor: 0.4, risk_tolerance: 1.0, v: 0.3 };
        let f = UtilityField::at(&p, &pref, 0.0, st);
        let ctx = SpdeContext::power_ratio(&p, &pref, 0.0, 0.4);
        let b = spde_drift(&f, 1.1, &QuantityDynamics::ratio(&p, 0.0), &ctx).unwrap();
        let u = f.value(1.5).finite().unwrap();
        assert!((b - u * power_v_drift(&p, &pref, 0.0)).abs() < 1e-13);
    }

    #[test]
    fn spde_policy_myopic_at_zero_floor() {
        let p = base_params();
        let pref = PreferenceSpec::scalar(Family::PowerRatio, 0.6, 0.0, 0.2, 0.25);
        let st = FieldState { floor: 0.0, risk_tolerance: 1.0, v: 0.0 };
        let f = UtilityField::at(&p, &pref, 0.0, st);
        let ctx = SpdeContext::power_ratio(&p, &pref, 0.0, 0.0);
        let pi = spde_policy(&f, 2.0, &QuantityDynamics::ratio(&p, 0.0), &ctx).unwrap();
        assert!((pi[0] - 4.4).abs() < 1e-12);
    }
}
