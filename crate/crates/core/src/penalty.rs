//! Penalty functions and their univariate minimizers.
//!
//! Each threshold map solves `argmin_g 0.5 * (z - g)^2 + pen(g)` in closed form.
//! The coordinate-descent solver composes them after folding its own scaling
//! into an effective `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Lasso,
    #[serde(rename = "alasso")]
    AdaptiveLasso,
    Scad,
}

impl std::fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyFamily::Lasso => "lasso",
            PenaltyFamily::AdaptiveLasso => "alasso",
            PenaltyFamily::Scad => "scad",
        })
    }
}

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MU: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    /// Per-coordinate adaptive weights; `f64::INFINITY` pins a coordinate at zero.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
}

impl PenaltySpec {
    pub fn lasso(lambda: f64) -> Self {
        PenaltySpec {
            family: PenaltyFamily::Lasso,
            lambda,
            mu: DEFAULT_MU,
            a: DEFAULT_SCAD_A,
            weights: None,
        }
    }

    pub fn scad(lambda: f64, a: f64) -> Self {
        PenaltySpec {
            family: PenaltyFamily::Scad,
            a,
            ..Self::lasso(lambda)
        }
    }

    pub fn adaptive(lambda: f64, mu: f64, weights: Vec<f64>) -> Self {
        PenaltySpec {
            family: PenaltyFamily::AdaptiveLasso,
            mu,
            weights: Some(weights),
            ..Self::lasso(lambda)
        }
    }

    /// Adaptive weights `1 / |init_j|^mu`; a zero initial value gives an infinite weight.
    pub fn adaptive_from_initial(lambda: f64, mu: f64, init: &[f64]) -> Self {
        let weights = init
            .iter()
            .map(|&g| {
                if g == 0.0 {
                    f64::INFINITY
                } else {
                    g.abs().powf(mu).recip()
                }
            })
            .collect();
        Self::adaptive(lambda, mu, weights)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltySpec {
            lambda,
            ..self.clone()
        }
    }

    pub fn validate(&self, p: Option<usize>) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidPenalty(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match self.family {
            PenaltyFamily::Scad if !(self.a > 2.0) => {
                Err(Error::InvalidPenalty(format!("SCAD needs a > 2, got {}", self.a)))
            }
            PenaltyFamily::AdaptiveLasso => {
                if !(self.mu > 0.0) {
                    return Err(Error::InvalidPenalty(format!("mu must be > 0, got {}", self.mu)));
                }
                let w = self
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::InvalidPenalty("adaptive lasso needs weights".into()))?;
                if let Some(p) = p {
                    if w.len() != p {
                        return Err(Error::InvalidPenalty(format!(
                            "{} weights for {p} coordinates",
                            w.len()
                        )));
                    }
                }
                if w.iter().any(|v| v.is_nan() || *v < 0.0) {
                    return Err(Error::InvalidPenalty("weights must be nonnegative".into()));
                }
                Ok(())
            }
            _ if self.weights.is_some() => Err(Error::InvalidPenalty(
                "weights are only meaningful for the adaptive lasso".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Adaptive weight of coordinate `j` (1 for non-adaptive families).
    pub fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    /// `pen(t)` evaluated with the tuning parameter replaced by `lambda`.
    pub fn value_at(&self, lambda: f64, t: f64, j: usize) -> f64 {
        let at = t.abs();
        match self.family {
            PenaltyFamily::Lasso => lambda * at,
            PenaltyFamily::AdaptiveLasso => {
                let w = self.weight(j);
                if at == 0.0 {
                    0.0
                } else {
                    lambda * w * at
                }
            }
            PenaltyFamily::Scad => scad_value(at, lambda, self.a),
        }
    }

    /// Minimizer of `0.5 * (z - g)^2 + pen(g)` with the tuning parameter replaced by `lambda`.
    pub fn threshold_at(&self, lambda: f64, z: f64, j: usize) -> f64 {
        match self.family {
            PenaltyFamily::Lasso => soft_threshold(z, lambda),
            PenaltyFamily::AdaptiveLasso => adaptive_threshold(z, lambda, self.weight(j)),
            PenaltyFamily::Scad => scad_threshold(z, lambda, self.a),
        }
    }
}

pub fn penalty_value(spec: &PenaltySpec, t: f64, j: usize) -> f64 {
    spec.value_at(spec.lambda, t, j)
}

fn scad_value(at: f64, lambda: f64, a: f64) -> f64 {
    if at <= lambda {
        lambda * at
    } else if at <= a * lambda {
        (a * lambda * at - 0.5 * (at * at + lambda * lambda)) / (a - 1.0)
    } else {
        lambda * lambda * (a * a - 1.0) / (2.0 * (a - 1.0))
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let shrunk = z.abs() - t;
    if shrunk > 0.0 {
        shrunk.copysign(z)
    } else {
        0.0
    }
}

pub fn adaptive_threshold(z: f64, lambda: f64, w: f64) -> f64 {
    if w.is_infinite() {
        return 0.0;
    }
    soft_threshold(z, lambda * w)
}

pub fn scad_threshold(z: f64, lambda: f64, a: f64) -> f64 {
    let az = z.abs();
    if az <= 2.0 * lambda {
        soft_threshold(z, lambda)
    } else if az <= a * lambda {
        ((a - 1.0) * z - (a * lambda).copysign(z)) / (a - 2.0)
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lasso_value() {
        assert_eq!(penalty_value(&PenaltySpec::lasso(2.0), -3.0, 0), 6.0);
    }

    #[test]
    fn scad_flat_branch() {
        let v = penalty_value(&PenaltySpec::scad(1.0, 3.7), 10.0, 0);
        assert_abs_diff_eq!(v, 12.69 / 5.4, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 2.35, epsilon = 1e-12);
    }

    #[test]
    fn scad_value_continuous_at_knots() {
        for lambda in [0.5, 1.0, 2.0] {
            let spec = PenaltySpec::scad(lambda, 3.7);
            for knot in [lambda, 3.7 * lambda] {
                let below = scad_value(knot, lambda, 3.7);
                let above = scad_value(knot * (1.0 + 1e-15), lambda, 3.7);
                assert_abs_diff_eq!(below, above, epsilon = 1e-12);
                assert_abs_diff_eq!(penalty_value(&spec, knot, 0), below, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
    }

    #[test]
    fn adaptive_threshold_cases() {
        assert_eq!(adaptive_threshold(1.0, 0.5, 1.0), 0.5);
        assert_eq!(adaptive_threshold(1.0, 0.5, f64::INFINITY), 0.0);
        assert_eq!(adaptive_threshold(3.0, 1.0, 0.25), 2.75);
    }

    #[test]
    fn scad_threshold_cases() {
        assert_eq!(scad_threshold(5.0, 1.0, 3.7), 5.0);
        assert_eq!(scad_threshold(1.0, 1.0, 3.7), 0.0);
        assert_abs_diff_eq!(scad_threshold(3.0, 1.0, 3.7), (2.7 * 3.0 - 3.7) / 1.7, epsilon = 1e-14);
        assert_abs_diff_eq!(scad_threshold(3.0, 1.0, 3.7), 2.588_235_294, epsilon = 1e-8);
    }

    #[test]
    fn scad_threshold_continuous_at_branches() {
        for (lambda, a) in [(0.5, 3.7), (1.0, 2.5), (2.0, 5.0)] {
            for knot in [2.0 * lambda, a * lambda] {
                let inner = if knot == 2.0 * lambda {
                    soft_threshold(knot, lambda)
                } else {
                    ((a - 1.0) * knot - a * lambda) / (a - 2.0)
                };
                let outer = if knot == 2.0 * lambda {
                    ((a - 1.0) * knot - a * lambda) / (a - 2.0)
                } else {
                    knot
                };
                assert_abs_diff_eq!(inner, outer, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_initial_gives_infinite_weight() {
        let spec = PenaltySpec::adaptive_from_initial(1.0, 1.0, &[0.5, 0.0, -2.0]);
        assert_eq!(spec.weights.as_deref().unwrap(), &[2.0, f64::INFINITY, 0.5]);
        assert_eq!(spec.threshold_at(1.0, 100.0, 1), 0.0);
    }

    #[test]
    fn validation() {
        assert!(PenaltySpec::scad(1.0, 2.0).validate(None).is_err());
        assert!(PenaltySpec::lasso(-1.0).validate(None).is_err());
        assert!(PenaltySpec::adaptive(1.0, 1.0, vec![1.0]).validate(Some(2)).is_err());
        assert!(PenaltySpec::adaptive(1.0, 0.0, vec![1.0]).validate(Some(1)).is_err());
        assert!(PenaltySpec::adaptive(1.0, 1.0, vec![f64::INFINITY]).validate(Some(1)).is_ok());
    }

    proptest! {
        #[test]
        fn maps_are_odd_shrinkages(z in -50.0f64..50.0, lambda in 0.0f64..5.0, a in 2.01f64..10.0, w in 0.0f64..4.0) {
            for f in [
                soft_threshold(z, lambda),
                adaptive_threshold(z, lambda, w),
                scad_threshold(z, lambda, a),
            ] {
                prop_assert!(f.abs() <= z.abs() + 1e-12);
            }
            prop_assert_eq!(soft_threshold(-z, lambda), -soft_threshold(z, lambda));
            prop_assert_eq!(adaptive_threshold(-z, lambda, w), -adaptive_threshold(z, lambda, w));
            prop_assert_eq!(scad_threshold(-z, lambda, a), -scad_threshold(z, lambda, a));
        }
    }
}
