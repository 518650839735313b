use serde::{Deserialize, Serialize};

use super::{seed_values, Dual, GradError};
use crate::scalar::Scalar;

/// A scalar objective that can be evaluated on any [`Scalar`].
///
/// Implementations should return NaN rather than panicking when the
/// evaluation fails (for example a diverging rollout).
pub trait Objective {
    fn eval<T: Scalar>(&self, params: &[T]) -> T;
}

/// Forward-mode gradient next to its central-difference estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub value: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_err: f64,
}

/// Compare the dual-number gradient of `f` at `at` with central differences
/// of step `h`.
///
/// The relative error is taken over components whose analytic magnitude
/// exceeds `1e-12`.
pub fn check_gradient<O: Objective>(f: &O, at: &[f64], h: f64) -> Result<GradientReport, GradError> {
    if at.is_empty() {
        return Err(GradError::EmptyParams);
    }
    let duals = seed_values(at);
    let d: Dual<f64> = f.eval(&duals);
    if !d.all_finite() {
        return Err(GradError::NonFinite {
            probe: "p (analytic)".into(),
        });
    }
    let analytic = d.gradient(at.len());

    let mut numeric = Vec::with_capacity(at.len());
    let mut probe = at.to_vec();
    for i in 0..at.len() {
        probe[i] = at[i] + h;
        let plus: f64 = f.eval(&probe);
        if !plus.is_finite() {
            return Err(GradError::NonFinite {
                probe: format!("p+h*e{i}"),
            });
        }
        probe[i] = at[i] - h;
        let minus: f64 = f.eval(&probe);
        if !minus.is_finite() {
            return Err(GradError::NonFinite {
                probe: format!("p-h*e{i}"),
            });
        }
        probe[i] = at[i];
        numeric.push((plus - minus) / (2.0 * h));
    }

    let max_rel_err = analytic
        .iter()
        .zip(&numeric)
        .filter(|(a, _)| a.abs() > 1e-12)
        .map(|(a, n)| (a - n).abs() / a.abs())
        .fold(0.0, f64::max);

    Ok(GradientReport {
        value: d.value(),
        analytic,
        numeric,
        max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Square;
    impl Objective for Square {
        fn eval<T: Scalar>(&self, p: &[T]) -> T {
            p[0] * p[0]
        }
    }

    struct NanAbove(f64);
    impl Objective for NanAbove {
        fn eval<T: Scalar>(&self, p: &[T]) -> T {
            if p[0].re() > self.0 {
                T::nan()
            } else {
                p[0] * p[0]
            }
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let r = check_gradient(&Square, &[3.0], 1e-5).unwrap();
        assert_eq!(r.analytic, vec![6.0]);
        assert!((r.numeric[0] - 6.0).abs() < 1e-8);
        assert!(r.max_rel_err < 1e-8);
    }

    #[test]
    fn nan_probe_is_named() {
        let err = check_gradient(&NanAbove(3.0), &[3.0], 1e-5).unwrap_err();
        assert_eq!(
            err,
            GradError::NonFinite {
                probe: "p+h*e0".into()
            }
        );
    }
}
