//! Randomized check of the SPDE drift identity and the implied strategy.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{ExperimentReport, Outcome};
use crate::error::Result;
use crate::model_core::{Family, ModelParams, ModelSpec, PreferenceSpec, Schedule};
use crate::preferences::{
    analytic_drift, spde_drift, spde_policy, FieldState, QuantityDynamics, SpdeContext, UtilityField,
};
use crate::strategies::{
    forward_exp_policy, forward_exp_wealth_policy, forward_power_policy, forward_power_wealth_policy,
};

pub const SPDE_DRIFT_TOL: f64 = 1e-9;
pub const SPDE_POLICY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SpdeResiduals {
    pub family: &'static str,
    pub samples: usize,
    /// max |b − drift| / max(|drift|, |U|)
    pub drift: f64,
    /// max |π_spde − π_closed|∞ / max(1, |π_closed|∞)
    pub policy: f64,
}

fn uniform_vec(rng: &mut ChaCha20Rng, len: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(lo..hi))
}

fn random_params(rng: &mut ChaCha20Rng) -> ModelParams {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=2);
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(0.1..0.4)
        } else {
            rng.random_range(-0.05..0.05)
        }
    });
    let spec = ModelSpec {
        n,
        m,
        r: rng.random_range(0.0..0.05),
        mu: Schedule::constant(uniform_vec(rng, n, 0.0, 0.12)),
        sigma: Schedule::constant(sigma),
        mu_y: Schedule::constant(rng.random_range(-0.02..0.06)),
        sigma_y1: Schedule::constant(uniform_vec(rng, n, -0.1, 0.15)),
        sigma_y2: Schedule::constant(uniform_vec(rng, m, -0.1, 0.1)),
        p: Schedule::constant(rng.random_range(0.0..0.2)),
        w0: 1.0,
        y0: 1.0,
    };
    ModelParams::new(spec).expect("sampled parameters are well conditioned")
}

fn random_pref(rng: &mut ChaCha20Rng, family: Family, n: usize, m: usize) -> PreferenceSpec {
    let gamma = if family.is_power() {
        rng.random_range(0.1..0.9)
    } else {
        rng.random_range(0.2..3.0)
    };
    let baseline = if family.is_wealth() {
        uniform_vec(rng, n, -1.0, 2.0)
    } else {
        uniform_vec(rng, n, -0.3, 0.3)
    };
    PreferenceSpec {
        family,
        gamma,
        theta1: Schedule::constant(uniform_vec(rng, n, -0.3, 0.3)),
        theta2: Schedule::constant(uniform_vec(rng, m, -0.3, 0.3)),
        baseline: Schedule::constant(baseline),
    }
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Worst residuals for one family over `samples` random draws.
pub fn spde_residuals(family: Family, samples: usize, seed: u64) -> Result<SpdeResiduals> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(family as u64);
    let mut worst_drift = 0.0f64;
    let mut worst_policy = 0.0f64;
    for _ in 0..samples {
        let params = random_params(&mut rng);
        let pref = random_pref(&mut rng, family, params.n(), params.m());
        let t = 0.0;
        let state = FieldState {
            floor: if family.is_power() { rng.random_range(0.0..3.0) } else { rng.random_range(-1.0..2.0) },
            risk_tolerance: rng.random_range(0.3..3.0),
            v: rng.random_range(-1.0..1.0),
        };
        let y = rng.random_range(0.5..2.0);
        let x = if family.is_power() {
            state.floor + rng.random_range(0.05..5.0)
        } else {
            let mut x = rng.random_range(-3.0..6.0);
            if f64::abs(x) < 0.05 {
                x = 0.05;
            }
            x
        };
        let field = UtilityField::at(&params, &pref, t, state);
        let dynamics = QuantityDynamics::for_family(&params, family, t, y);
        let ctx = SpdeContext::for_family(&params, &pref, t, state.floor, y);
        let x_tilde = x - ctx.z;
        let b = spde_drift(&field, x_tilde, &dynamics, &ctx)?;
        let a = analytic_drift(&params, &pref, t, state, x, y)?;
        let u = field.value(x).finite().expect("sampled inside the domain");
        worst_drift = worst_drift.max((b - a).abs() / a.abs().max(u.abs()));

        let pi = spde_policy(&field, x_tilde, &dynamics, &ctx)?;
        let closed = match family {
            Family::PowerRatio => forward_power_policy(t, x, state.floor, &params, &pref)?,
            Family::ExpRatio => forward_exp_policy(t, x, state.risk_tolerance, &params, &pref)?,
            Family::PowerWealth => forward_power_wealth_policy(t, x, state.floor, &params, &pref)?,
            Family::ExpWealth => forward_exp_wealth_policy(t, x, state.risk_tolerance, &params, &pref)?,
        };
        worst_policy = worst_policy.max(sup(&(&pi - &closed)) / sup(&closed).max(1.0));
    }
    Ok(SpdeResiduals {
        family: family.id(),
        samples,
        drift: worst_drift,
        policy: worst_policy,
    })
}

/// Runs [`spde_residuals`] for each family and records pass/fail.
pub fn spde_suite(families: &[Family], samples: usize, seed: u64) -> Result<Outcome> {
    let mut report = ExperimentReport {
        experiment: "spde".into(),
        seed,
        paths: samples,
        steps_per_year: 0,
        horizon: 0.0,
        params: serde_json::Value::Null,
        preference: serde_json::Value::Null,
        revision: None,
        constants: BTreeMap::new(),
        checkpoints: Vec::new(),
        cdfs: Vec::new(),
        verdicts: Vec::new(),
    };
    for &f in families {
        let r = spde_residuals(f, samples, seed)?;
        report.push_verdict(format!("{}_drift_residual", r.family), r.drift, format!("< {SPDE_DRIFT_TOL:e}"), r.drift < SPDE_DRIFT_TOL);
        report.push_verdict(format!("{}_policy_residual", r.family), r.policy, format!("< {SPDE_POLICY_TOL:e}"), r.policy < SPDE_POLICY_TOL);
    }
    Ok(Outcome {
        report,
        artifacts: Vec::new(),
    })
}
