//! Forward-mode differentiation over a small set of named parameters.

mod check;
mod dual;

pub use check::{check_gradient, GradientReport, Objective};
pub use dual::{Dual, MAX_PARAMS};

use std::collections::HashSet;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("parameter list is empty")]
    EmptyParams,
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("{0} parameters requested, at most {MAX_PARAMS} supported")]
    TooManyParams(usize),
    #[error("names and values differ in length ({names} vs {values})")]
    ShapeMismatch { names: usize, values: usize },
    #[error("tangent length mismatch ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func} undefined at {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("non-finite objective value at probe {probe}")]
    NonFinite { probe: String },
}

/// Ordered, named parameter values to differentiate with respect to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSeed {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParamSeed {
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        let (names, values) = pairs.into_iter().map(|(n, v)| (n.into(), v)).unzip();
        Self { names, values }
    }
}

/// Lift each parameter to a dual whose tangent is the matching unit vector.
pub fn seed(params: &ParamSeed) -> Result<Vec<Dual<f64>>, GradError> {
    let n = params.names.len();
    if n != params.values.len() {
        return Err(GradError::ShapeMismatch {
            names: n,
            values: params.values.len(),
        });
    }
    if n == 0 {
        return Err(GradError::EmptyParams);
    }
    if n > MAX_PARAMS {
        return Err(GradError::TooManyParams(n));
    }
    let mut seen = HashSet::new();
    for name in &params.names {
        if !seen.insert(name.as_str()) {
            return Err(GradError::DuplicateName(name.clone()));
        }
    }
    Ok(params
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i, n))
        .collect())
}

/// Seed a plain value slice (no names).
pub fn seed_values(values: &[f64]) -> Vec<Dual<f64>> {
    let n = values.len();
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i, n))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementary {
    Sin,
    Cos,
    Tan,
    Atan,
    Sqrt,
    Abs,
    Exp,
    Log,
}

fn check_lengths<F: Float>(a: &Dual<F>, b: &Dual<F>) -> Result<(), GradError> {
    let (l, r) = (a.tangent_len(), b.tangent_len());
    if l != r && l != 0 && r != 0 {
        return Err(GradError::LengthMismatch { left: l, right: r });
    }
    Ok(())
}

/// Checked binary arithmetic.
pub fn arith<F: Float>(a: Dual<F>, b: Dual<F>, op: ArithOp) -> Result<Dual<F>, GradError> {
    check_lengths(&a, &b)?;
    Ok(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => {
            if b.value().is_zero() {
                return Err(GradError::DivisionByZero);
            }
            a / b
        }
    })
}

/// Checked elementary function application.
pub fn elementary<F: Float>(a: Dual<F>, f: Elementary) -> Result<Dual<F>, GradError> {
    let v = a.value();
    let domain = |func| GradError::Domain {
        func,
        value: v.to_f64().unwrap_or(f64::NAN),
    };
    Ok(match f {
        Elementary::Sin => a.sin(),
        Elementary::Cos => a.cos(),
        Elementary::Tan => a.tan(),
        Elementary::Atan => a.atan(),
        Elementary::Sqrt => {
            if v < F::zero() {
                return Err(domain("sqrt"));
            }
            a.sqrt()
        }
        Elementary::Abs => a.abs(),
        Elementary::Exp => a.exp(),
        Elementary::Log => {
            if v <= F::zero() {
                return Err(domain("log"));
            }
            a.ln()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_single() {
        let d = seed(&ParamSeed::new([("m", 3.1)])).unwrap();
        assert_eq!(d[0].value(), 3.1);
        assert_eq!(d[0].tangents(), &[1.0]);
    }

    #[test]
    fn seed_basis_vectors() {
        let d = seed(&ParamSeed::new([("m", 3.1), ("C_S,f", 4.728)])).unwrap();
        assert_eq!(d[1].tangents(), &[0.0, 1.0]);
    }

    #[test]
    fn seed_rejects_empty_and_duplicates() {
        let empty: [(&str, f64); 0] = [];
        assert_eq!(seed(&ParamSeed::new(empty)), Err(GradError::EmptyParams));
        assert_eq!(
            seed(&ParamSeed::new([("m", 1.0), ("m", 2.0)])),
            Err(GradError::DuplicateName("m".into()))
        );
        let many: Vec<_> = (0..9).map(|i| (format!("p{i}"), 0.0)).collect();
        assert_eq!(seed(&ParamSeed::new(many)), Err(GradError::TooManyParams(9)));
    }

    #[test]
    fn checked_division() {
        let x = Dual::with_tangents(5.0, &[1.0]);
        let q = arith(x, x, ArithOp::Div).unwrap();
        assert_eq!(q.value(), 1.0);
        assert_eq!(q.tangents(), &[0.0]);
        let one = Dual::with_tangents(1.0, &[0.0]);
        let zero = Dual::with_tangents(0.0, &[1.0]);
        assert_eq!(arith(one, zero, ArithOp::Div), Err(GradError::DivisionByZero));
    }

    #[test]
    fn checked_length_mismatch() {
        let a = Dual::with_tangents(1.0, &[1.0]);
        let b = Dual::with_tangents(1.0, &[1.0, 0.0]);
        assert_eq!(
            arith(a, b, ArithOp::Add),
            Err(GradError::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn elementary_examples() {
        let s = elementary(Dual::with_tangents(0.0, &[1.0]), Elementary::Sin).unwrap();
        assert_eq!((s.value(), s.tangents()[0]), (0.0, 1.0));
        let a = elementary(Dual::with_tangents(-2.0, &[1.0]), Elementary::Abs).unwrap();
        assert_eq!((a.value(), a.tangents()[0]), (2.0, -1.0));
        let z = elementary(Dual::with_tangents(0.0, &[1.0]), Elementary::Abs).unwrap();
        assert_eq!((z.value(), z.tangents()[0]), (0.0, 0.0));
        assert!(elementary(Dual::with_tangents(-1.0, &[1.0]), Elementary::Sqrt).is_err());
        assert!(elementary(Dual::with_tangents(-1.0, &[1.0]), Elementary::Log).is_err());
    }
}
