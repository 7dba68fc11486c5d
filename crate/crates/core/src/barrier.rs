//! Detachment guard.
//!
//! The chamber forces are folded into a single attachment margin
//! `f_m = smin(f) − f_min`, where `smin` is the exponential smooth minimum.
//! A barrier potential `W(f_m)` is zero for `f_m ≥ f0` and blows up as
//! `f_m → 0⁺`. Its yaw gradient, obtained through a fixed linear model of how
//! chamber forces react to a heading change, is fed to the admittance law as a
//! virtual torque `τ_v = −∂W/∂θ`.
//!
//! All exponential sums are evaluated relative to the smallest entry so that
//! forces of any magnitude stay finite.

use serde::{Deserialize, Serialize};

use crate::error::DetachedFault;
use crate::sensing::{ChamberForces, CHAMBERS};

/// Sign of `∂f_i/∂θ` per chamber: chambers 1 and 4 unload when the robot yaws
/// positively against a held object, chambers 2 and 3 load up.
pub const YAW_SIGN_PATTERN: [f64; CHAMBERS] = [-1.0, 1.0, 1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierParams {
    /// Gain of the `1/f_m` barrier term.
    pub k1: f64,
    /// Gain of the quadratic smoothing term.
    pub k2: f64,
    /// Margin beyond which the potential is inactive, N.
    pub f0: f64,
    /// Chamber force at which the object lets go, N (negative).
    pub f_min: f64,
    /// Chamber lever arm from the cup centre, m.
    pub beta: f64,
    /// Stiffness of the deformable cup, N/m.
    pub kappa: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self { k1: 10.0, k2: 1.0, f0: 20.0, f_min: -48.0, beta: 0.04, kappa: 20.0 }
    }
}

impl BarrierParams {
    /// Returns one message per violated constraint, prefixed by `path`.
    pub fn validate(&self, path: &str) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, value) in
            [("k1", self.k1), ("k2", self.k2), ("f0", self.f0), ("beta", self.beta), ("kappa", self.kappa)]
        {
            if !(value.is_finite() && value > 0.0) {
                errs.push(format!("{path}.{name}: must be finite and > 0, got {value}"));
            }
        }
        if !(self.f_min.is_finite() && self.f_min < 0.0) {
            errs.push(format!("{path}.f_min: must be finite and < 0, got {}", self.f_min));
        }
        errs
    }
}

/// Everything the guard computed for one set of chamber forces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BarrierState {
    pub f_m: f64,
    pub w: f64,
    pub dw_dfm: f64,
    pub tau_v: f64,
}

/// `−ln Σ exp(−y_i)`, never above `min(y)` and never below `min(y) − ln 4`.
pub fn smooth_min(y: &[f64; CHAMBERS]) -> f64 {
    let (argmin, m) = min_entry(y);
    let rest: f64 = y.iter().enumerate().filter(|&(i, _)| i != argmin).map(|(_, &v)| (-(v - m)).exp()).sum();
    m - rest.ln_1p()
}

/// Softmin weights `μ_i = exp(−f_i) / Σ exp(−f_j)`, the gradient of
/// [`smooth_min`] with respect to each entry.
pub fn margin_weights(f: &ChamberForces) -> [f64; CHAMBERS] {
    let (_, m) = min_entry(&f.f);
    let e = f.f.map(|v| (-(v - m)).exp());
    let total: f64 = e.iter().sum();
    e.map(|v| v / total)
}

fn min_entry(y: &[f64; CHAMBERS]) -> (usize, f64) {
    y.iter().copied().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
}

/// Attachment margin `f_m = smin(f) − f_min`.
pub fn margin(f: &ChamberForces, p: &BarrierParams) -> f64 {
    smooth_min(&f.f) - p.f_min
}

fn check_attached(f_m: f64) -> Result<(), DetachedFault> {
    if f_m > 0.0 {
        Ok(())
    } else {
        Err(DetachedFault { margin: f_m })
    }
}

/// Barrier potential `W(f_m)`.
pub fn potential(f_m: f64, p: &BarrierParams) -> Result<f64, DetachedFault> {
    check_attached(f_m)?;
    if f_m >= p.f0 {
        return Ok(0.0);
    }
    let inv = 1.0 / f_m - 1.0 / p.f0;
    let lin = f_m - p.f0;
    Ok(0.5 * p.k1 * inv * inv + 0.5 * p.k2 * lin * lin)
}

/// `∂W/∂f_m`, non-positive and unbounded below as `f_m → 0⁺`.
pub fn potential_slope(f_m: f64, p: &BarrierParams) -> Result<f64, DetachedFault> {
    check_attached(f_m)?;
    if f_m >= p.f0 {
        return Ok(0.0);
    }
    Ok((p.k1 / (p.f0 * f_m.powi(3)) + p.k2) * (f_m - p.f0))
}

/// Linearized `∂f_i/∂θ = β·κ·(−1, +1, +1, −1)`.
pub fn chamber_yaw_sensitivity(p: &BarrierParams) -> [f64; CHAMBERS] {
    YAW_SIGN_PATTERN.map(|s| s * p.beta * p.kappa)
}

/// Full guard evaluation: margin, potential, slope and virtual yaw torque.
pub fn evaluate(f: &ChamberForces, p: &BarrierParams) -> Result<BarrierState, DetachedFault> {
    let f_m = margin(f, p);
    let w = potential(f_m, p)?;
    let dw_dfm = potential_slope(f_m, p)?;
    let tau_v = if dw_dfm == 0.0 {
        0.0
    } else {
        let mu = margin_weights(f);
        let sens = chamber_yaw_sensitivity(p);
        let dfm_dtheta: f64 = mu.iter().zip(sens.iter()).map(|(m, s)| m * s).sum();
        -dw_dfm * dfm_dtheta
    };
    Ok(BarrierState { f_m, w, dw_dfm, tau_v })
}

/// Virtual yaw torque `τ_v = −(∂W/∂f_m)·(μ · ∂f/∂θ)`. The full virtual wrench is
/// `(0, 0, τ_v)`.
pub fn barrier_torque(f: &ChamberForces, p: &BarrierParams) -> Result<f64, DetachedFault> {
    evaluate(f, p).map(|s| s.tau_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    const LN4: f64 = std::f64::consts::LN_2 * 2.0;

    #[test]
    fn smooth_min_examples() {
        assert_abs_diff_eq!(smooth_min(&[0.0; 4]), -LN4, epsilon = 1e-15);
        assert_abs_diff_eq!(smooth_min(&[0.0; 4]), -1.386294, epsilon = 1e-6);
        let v = smooth_min(&[5.0, 100.0, 100.0, 100.0]);
        assert!(v <= 5.0);
        assert_abs_diff_eq!(v, 5.0, epsilon = 1e-40);
        let m = -3.0;
        let v = smooth_min(&[m, m + 700.0, m + 700.0, m + 700.0]);
        assert!(v.is_finite());
        assert_eq!(v, m);
        // Order does not matter.
        assert_eq!(smooth_min(&[100.0, 100.0, 5.0, 100.0]), smooth_min(&[5.0, 100.0, 100.0, 100.0]));
    }

    #[test]
    fn margin_examples() {
        let p = BarrierParams::default();
        assert_abs_diff_eq!(margin(&ChamberForces::default(), &p), 48.0 - LN4, epsilon = 1e-12);
        assert_abs_diff_eq!(margin(&ChamberForces::default(), &p), 46.6137, epsilon = 1e-4);
        assert_abs_diff_eq!(margin(&ChamberForces::uniform(p.f_min + LN4), &p), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(margin(&ChamberForces::uniform(-40.0), &p), 6.6137, epsilon = 1e-4);
    }

    #[test]
    fn potential_examples() {
        let p = BarrierParams::default();
        assert_eq!(potential(p.f0, &p).unwrap(), 0.0);
        assert_eq!(potential(2.0 * p.f0, &p).unwrap(), 0.0);
        assert_relative_eq!(potential(10.0, &p).unwrap(), 50.0125, max_relative = 1e-14);
        assert!(potential(0.0, &p).is_err());
        assert!(potential(-1.0, &p).is_err());
        assert!(potential(1e-6, &p).unwrap() > 1e9);
    }

    #[test]
    fn slope_examples() {
        let p = BarrierParams::default();
        assert_eq!(potential_slope(p.f0, &p).unwrap(), 0.0);
        assert_relative_eq!(potential_slope(10.0, &p).unwrap(), -10.005, max_relative = 1e-14);
        assert!(potential_slope(0.0, &p).is_err());
        assert!(-potential_slope(1e-6, &p).unwrap() > 1e9);
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn slope_matches_finite_difference() {
        let p = BarrierParams::default();
        for fm in [1.0, 5.0, 10.0, 19.9] {
            let fd = central_difference(|x| potential(x, &p).unwrap(), fm, 1e-6 * fm);
            assert_relative_eq!(potential_slope(fm, &p).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn potential_is_c1_at_region_boundary() {
        let p = BarrierParams::default();
        for fm in [p.f0 - 1e-9, p.f0, p.f0 + 1e-9] {
            assert!(potential(fm, &p).unwrap() < 1e-15);
            assert!(potential_slope(fm, &p).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn weights_examples() {
        assert_eq!(margin_weights(&ChamberForces::uniform(-7.0)), [0.25; 4]);
        let mu = margin_weights(&ChamberForces::new([0.0, 50.0, 50.0, 50.0]));
        assert_abs_diff_eq!(mu[0], 1.0, epsilon = 1e-20);
    }

    #[test]
    fn weights_match_margin_sensitivities() {
        let p = BarrierParams::default();
        let f = ChamberForces::new([-30.0, -29.0, -31.5, -28.2]);
        let mu = margin_weights(&f);
        for (i, &weight) in mu.iter().enumerate() {
            let fd = central_difference(
                |x| {
                    let mut g = f;
                    g.f[i] = x;
                    margin(&g, &p)
                },
                f.f[i],
                1e-6,
            );
            assert_abs_diff_eq!(weight, fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn sensitivity_examples() {
        let p = BarrierParams { beta: 0.04, kappa: 20.0, ..Default::default() };
        let s = chamber_yaw_sensitivity(&p);
        for (got, want) in s.iter().zip([-0.8, 0.8, 0.8, -0.8]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let p = BarrierParams { beta: 0.0, ..Default::default() };
        assert_eq!(chamber_yaw_sensitivity(&p).map(f64::abs), [0.0; 4]);
    }

    #[test]
    fn torque_examples() {
        let p = BarrierParams::default();
        // Far from the bound: inactive.
        assert_eq!(barrier_torque(&ChamberForces::uniform(-5.0), &p).unwrap(), 0.0);

        // Chambers 1 and 4 nearly at the bound: the torque turns to relieve them.
        let f = ChamberForces::new([-40.0, -20.0, -20.0, -40.0]);
        let mu = margin_weights(&f);
        assert!(mu[0] > 0.49 && mu[3] > 0.49);
        let s = evaluate(&f, &p).unwrap();
        assert!(s.dw_dfm < 0.0);
        assert!(s.tau_v < 0.0, "tau_v = {}", s.tau_v);

        // Mirror case pushes the other way.
        let g = ChamberForces::new([-20.0, -40.0, -40.0, -20.0]);
        assert!(barrier_torque(&g, &p).unwrap() > 0.0);

        assert!(barrier_torque(&ChamberForces::uniform(-60.0), &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(BarrierParams::default().validate("barrier").is_empty());
        let bad = BarrierParams { k1: 0.0, f_min: 3.0, ..Default::default() };
        let errs = bad.validate("barrier");
        assert_eq!(errs.len(), 2);
        assert!(errs[0].starts_with("barrier.k1"));
        assert!(errs[1].starts_with("barrier.f_min"));
    }

    proptest! {
        #[test]
        fn smooth_min_bounds(y in prop::array::uniform4(-100.0..100.0f64)) {
            let m = y.iter().copied().fold(f64::INFINITY, f64::min);
            let h = smooth_min(&y);
            prop_assert!(h <= m);
            prop_assert!(m - h <= LN4 + 1e-12);
        }

        #[test]
        fn weights_are_a_distribution(f in prop::array::uniform4(-100.0..100.0f64)) {
            let mu = margin_weights(&ChamberForces::new(f));
            prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
        }

        #[test]
        fn inactive_above_sufficient_bound(f in prop::array::uniform4(0.0..100.0f64)) {
            let p = BarrierParams::default();
            let shifted = ChamberForces::new(f.map(|v| v + p.f_min + p.f0 + LN4));
            let s = evaluate(&shifted, &p).unwrap();
            prop_assert_eq!(s.tau_v, 0.0);
            prop_assert_eq!(s.w, 0.0);
        }

        #[test]
        fn potential_nonnegative(fm in 1e-6..100.0f64) {
            let p = BarrierParams::default();
            prop_assert!(potential(fm, &p).unwrap() >= 0.0);
            prop_assert!(potential_slope(fm, &p).unwrap() <= 0.0);
        }
    }
}
