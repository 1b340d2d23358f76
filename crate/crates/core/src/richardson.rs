//! Bulk Richardson number between profile levels and the stability classes
//! it implies.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Below this Ri turbulence is prone to occur.
pub const TURBULENT_BELOW: f64 = 0.25;
/// Above this Ri the flow is considered stable.
pub const STABLE_ABOVE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileLevel {
    /// Height, m.
    pub z: f64,
    /// Potential temperature, K.
    pub theta: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RichardsonError {
    #[error("levels must increase in height (lower z = {lower}, upper z = {upper})")]
    NonIncreasing { lower: f64, upper: f64 },
    #[error("layer-mean potential temperature must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error("a profile needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
}

/// Ri of one layer. Zero wind shear has no finite Ri.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Richardson {
    Finite(f64),
    Infinite,
}

impl Richardson {
    pub fn value(self) -> f64 {
        match self {
            Richardson::Finite(x) => x,
            Richardson::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Richardson::Finite(_))
    }
}

impl fmt::Display for Richardson {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Richardson::Finite(x) => write!(f, "{x}"),
            Richardson::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    TurbulenceProne,
    Transitional,
    Stable,
}

impl StabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::TurbulenceProne => "turbulence-prone",
            StabilityClass::Transitional => "transitional",
            StabilityClass::Stable => "stable",
        }
    }
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(g / θ̄) (∂θ/∂z) / ((∂u/∂z)² + (∂v/∂z)²)` with two-point differences
/// across the layer and θ̄ the layer mean.
pub fn compute_ri(
    lower: &ProfileLevel,
    upper: &ProfileLevel,
    g: f64,
) -> Result<Richardson, RichardsonError> {
    let dz = upper.z - lower.z;
    if dz.is_nan() || dz <= 0.0 {
        return Err(RichardsonError::NonIncreasing {
            lower: lower.z,
            upper: upper.z,
        });
    }
    let theta_mean = 0.5 * (lower.theta + upper.theta);
    if theta_mean.is_nan() || theta_mean <= 0.0 {
        return Err(RichardsonError::NonPositiveTheta(theta_mean));
    }
    let dtheta = (upper.theta - lower.theta) / dz;
    let du = (upper.u - lower.u) / dz;
    let dv = (upper.v - lower.v) / dz;
    let shear2 = du * du + dv * dv;
    if shear2 == 0.0 {
        return Ok(Richardson::Infinite);
    }
    Ok(Richardson::Finite(g / theta_mean * dtheta / shear2))
}

pub fn classify(ri: Richardson) -> StabilityClass {
    match ri {
        Richardson::Infinite => StabilityClass::Stable,
        Richardson::Finite(x) if x < TURBULENT_BELOW => StabilityClass::TurbulenceProne,
        Richardson::Finite(x) if x > STABLE_ABOVE => StabilityClass::Stable,
        Richardson::Finite(_) => StabilityClass::Transitional,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerRi {
    pub mid_height: f64,
    pub ri: Richardson,
    pub class: StabilityClass,
}

/// Ri for every adjacent pair of levels, reported at the layer midpoint.
pub fn profile_ri(profile: &[ProfileLevel], g: f64) -> Result<Vec<LayerRi>, RichardsonError> {
    if profile.len() < 2 {
        return Err(RichardsonError::TooFewLevels(profile.len()));
    }
    profile
        .windows(2)
        .map(|pair| {
            let ri = compute_ri(&pair[0], &pair[1], g)?;
            Ok(LayerRi {
                mid_height: 0.5 * (pair[0].z + pair[1].z),
                ri,
                class: classify(ri),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn layer(dtheta_dz: f64, du_dz: f64) -> (ProfileLevel, ProfileLevel) {
        let dz = 100.0;
        (
            ProfileLevel { z: 0.0, theta: 300.0 - 0.5 * dtheta_dz * dz, u: 0.0, v: 0.0 },
            ProfileLevel { z: dz, theta: 300.0 + 0.5 * dtheta_dz * dz, u: du_dz * dz, v: 0.0 },
        )
    }

    #[test]
    fn worked_example() {
        let (lo, hi) = layer(0.003, 0.01);
        let ri = compute_ri(&lo, &hi, 9.81).unwrap().value();
        assert_relative_eq!(ri, 0.981, epsilon = 1e-9);
        let (lo, hi) = layer(-0.003, 0.01);
        assert_relative_eq!(compute_ri(&lo, &hi, 9.81).unwrap().value(), -0.981, epsilon = 1e-9);
    }

    #[test]
    fn neutral_layer_is_zero() {
        let (lo, hi) = layer(0.0, 0.02);
        assert_eq!(compute_ri(&lo, &hi, STANDARD_GRAVITY).unwrap(), Richardson::Finite(0.0));
    }

    #[test]
    fn no_shear_is_infinite_and_stable() {
        let (lo, hi) = layer(0.003, 0.0);
        let ri = compute_ri(&lo, &hi, STANDARD_GRAVITY).unwrap();
        assert_eq!(ri, Richardson::Infinite);
        assert_eq!(classify(ri), StabilityClass::Stable);
    }

    #[test]
    fn invalid_layers() {
        let (lo, hi) = layer(0.003, 0.01);
        assert!(matches!(compute_ri(&hi, &lo, 9.81), Err(RichardsonError::NonIncreasing { .. })));
        let cold = ProfileLevel { theta: -400.0, ..hi };
        assert!(matches!(compute_ri(&lo, &cold, 9.81), Err(RichardsonError::NonPositiveTheta(_))));
        assert_eq!(profile_ri(&[lo], 9.81), Err(RichardsonError::TooFewLevels(1)));
    }

    #[test]
    fn thresholds() {
        assert_eq!(classify(Richardson::Finite(0.1)), StabilityClass::TurbulenceProne);
        assert_eq!(classify(Richardson::Finite(1.5)), StabilityClass::Stable);
        assert_eq!(classify(Richardson::Finite(0.5)), StabilityClass::Transitional);
        assert_eq!(classify(Richardson::Finite(0.25)), StabilityClass::Transitional);
        assert_eq!(classify(Richardson::Finite(1.0)), StabilityClass::Transitional);
    }

    #[test]
    fn profile_cardinality_and_composition() {
        let levels: Vec<ProfileLevel> = (0..5)
            .map(|n| ProfileLevel {
                z: n as f64 * 50.0,
                theta: 290.0 + n as f64 * 0.2,
                u: (n * n) as f64 * 0.3,
                v: n as f64 * 0.1,
            })
            .collect();
        let out = profile_ri(&levels, STANDARD_GRAVITY).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[1].mid_height, 75.0);
        assert_eq!(out[0].ri, compute_ri(&levels[0], &levels[1], STANDARD_GRAVITY).unwrap());
        assert_eq!(profile_ri(&levels[..2], STANDARD_GRAVITY).unwrap().len(), 1);
    }

    #[test]
    fn only_sheared_layer_is_finite() {
        // linear theta, wind constant except a jump between levels 2 and 3
        let levels: Vec<ProfileLevel> = (0..5)
            .map(|n| ProfileLevel {
                z: n as f64 * 100.0,
                theta: 300.0 + n as f64 * 0.3,
                u: if n >= 3 { 5.0 } else { 2.0 },
                v: 1.0,
            })
            .collect();
        let out = profile_ri(&levels, 9.81).unwrap();
        let finite: Vec<bool> = out.iter().map(|l| l.ri.is_finite()).collect();
        assert_eq!(finite, [false, false, true, false]);
    }

    fn arb_layer() -> impl Strategy<Value = (ProfileLevel, ProfileLevel)> {
        (1f64..500.0, 250f64..320.0, -5f64..5.0, prop::array::uniform4(-20f64..20.0))
            .prop_map(|(dz, theta, dtheta, [u0, v0, u1, v1])| {
                (
                    ProfileLevel { z: 10.0, theta, u: u0, v: v0 },
                    ProfileLevel { z: 10.0 + dz, theta: theta + dtheta, u: u1, v: v1 },
                )
            })
    }

    proptest! {
        #[test]
        fn wind_scaling_divides_by_square((lo, hi) in arb_layer(), c in prop_oneof![-8.0f64..-0.1, 0.1f64..8.0]) {
            let base = compute_ri(&lo, &hi, STANDARD_GRAVITY).unwrap();
            prop_assume!(base.is_finite());
            let scale = |l: ProfileLevel| ProfileLevel { u: l.u * c, v: l.v * c, ..l };
            let scaled = compute_ri(&scale(lo), &scale(hi), STANDARD_GRAVITY).unwrap().value();
            let expect = base.value() / (c * c);
            prop_assert!((scaled - expect).abs() <= 1e-10 * expect.abs().max(1e-300));
        }

        #[test]
        fn shear_invariant_to_offsets((lo, hi) in arb_layer(), du in -30f64..30.0, dv in -30f64..30.0) {
            let base = compute_ri(&lo, &hi, STANDARD_GRAVITY).unwrap();
            prop_assume!(base.is_finite());
            let shift = |l: ProfileLevel| ProfileLevel { u: l.u + du, v: l.v + dv, ..l };
            let moved = compute_ri(&shift(lo), &shift(hi), STANDARD_GRAVITY).unwrap().value();
            prop_assert!((moved - base.value()).abs() <= 1e-6 * base.value().abs().max(1e-9));
        }

        #[test]
        fn sign_follows_lapse((lo, hi) in arb_layer()) {
            if let Richardson::Finite(ri) = compute_ri(&lo, &hi, STANDARD_GRAVITY).unwrap() {
                let lapse = hi.theta - lo.theta;
                prop_assert_eq!(ri.signum() == lapse.signum() || ri == 0.0, true);
            }
        }

        #[test]
        fn classification_is_monotone(a in -10f64..10.0, b in -10f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify(Richardson::Finite(lo)) <= classify(Richardson::Finite(hi)));
            prop_assert!(classify(Richardson::Finite(hi)) <= classify(Richardson::Infinite));
        }
    }
}
