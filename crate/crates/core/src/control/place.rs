//! Single-input pole placement by Ackermann's formula.
//!
//! `K = e_n^T C^{-1} phi(A)` where `C = [b, Ab, ..., A^{n-1} b]` and `phi` is
//! the desired characteristic polynomial. Everything downstream of the pole
//! set is plain arithmetic on the scalar type, so gains can be differentiated
//! with respect to the model parameters.

use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lateral::LateralModel;
use super::ControlError;
use crate::scalar::Scalar;

/// Controllability matrices with a condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// A validated set of closed-loop pole locations.
///
/// Poles are stable (strictly negative real part) and closed under complex
/// conjugation. Repeated real poles are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct PoleSet {
    poles: Vec<Complex64>,
}

fn is_real(p: &Complex64) -> bool {
    p.im.abs() <= 1e-12 * (1.0 + p.norm())
}

impl PoleSet {
    pub fn new(poles: Vec<Complex64>) -> Result<Self, ControlError> {
        if poles.is_empty() {
            return Err(ControlError::InvalidPoles("empty pole set".into()));
        }
        for p in &poles {
            if !(p.re.is_finite() && p.im.is_finite()) {
                return Err(ControlError::InvalidPoles(format!("non-finite pole {p}")));
            }
            if !(p.re < 0.0) {
                return Err(ControlError::UnstablePole(*p));
            }
        }
        let mut used = vec![false; poles.len()];
        for i in 0..poles.len() {
            if used[i] || is_real(&poles[i]) {
                continue;
            }
            used[i] = true;
            let target = poles[i].conj();
            let tol = 1e-9 * (1.0 + target.norm());
            let mate = (0..poles.len()).find(|&j| !used[j] && (poles[j] - target).norm() <= tol);
            match mate {
                Some(j) => used[j] = true,
                None => return Err(ControlError::NotConjugateClosed(poles[i])),
            }
        }
        for i in 0..poles.len() {
            for j in i + 1..poles.len() {
                if !is_real(&poles[i]) && poles[i] == poles[j] {
                    return Err(ControlError::InvalidPoles(format!(
                        "repeated complex pole {}",
                        poles[i]
                    )));
                }
            }
        }
        Ok(Self { poles })
    }

    pub fn from_real(poles: &[f64]) -> Result<Self, ControlError> {
        Self::new(poles.iter().map(|&p| Complex64::new(p, 0.0)).collect())
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    /// Real coefficients `c` of `prod (s - p_i) = s^n + c[n-1] s^{n-1} + ... + c[0]`.
    pub fn characteristic_polynomial(&self) -> Result<Vec<f64>, ControlError> {
        // coeffs[k] multiplies s^k; leading 1 kept at the end.
        let mut coeffs = vec![Complex64::new(1.0, 0.0)];
        for p in &self.poles {
            let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * p;
            }
            coeffs = next;
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        if coeffs.iter().any(|c| c.im.abs() > 1e-9 * scale) {
            return Err(ControlError::InvalidPoles(
                "characteristic polynomial is not real".into(),
            ));
        }
        coeffs.pop();
        Ok(coeffs.into_iter().map(|c| c.re).collect())
    }
}

impl TryFrom<Vec<[f64; 2]>> for PoleSet {
    type Error = ControlError;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl From<PoleSet> for Vec<[f64; 2]> {
    fn from(p: PoleSet) -> Self {
        p.poles.into_iter().map(|c| [c.re, c.im]).collect()
    }
}

/// State feedback gain `delta = -K x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainVector<T>(pub [T; 4]);

impl<T: Scalar> GainVector<T> {
    pub fn values(&self) -> GainVector<f64> {
        GainVector(self.0.map(|k| k.re()))
    }
}

impl GainVector<f64> {
    pub fn lift<U: Scalar>(&self) -> GainVector<U> {
        GainVector(self.0.map(U::cst))
    }
}

fn mat_mul<T: Scalar, const N: usize>(a: &[[T; N]; N], b: &[[T; N]; N]) -> [[T; N]; N] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| (0..N).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j]))
    })
}

fn condition_number<const N: usize>(m: &[[f64; N]; N]) -> f64 {
    let dm = DMatrix::from_fn(N, N, |i, j| m[i][j]);
    let sv = dm.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solve `M x = rhs` by Gaussian elimination with partial pivoting on the
/// primal values.
fn solve<T: Scalar, const N: usize>(mut m: [[T; N]; N], mut rhs: [T; N]) -> [T; N] {
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&a, &b| m[a][col].re().abs().total_cmp(&m[b][col].re().abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..N {
            let f = m[row][col] / m[col][col];
            for k in col..N {
                let sub = f * m[col][k];
                m[row][k] -= sub;
            }
            let sub = f * rhs[col];
            rhs[row] -= sub;
        }
    }
    let mut x = [T::zero(); N];
    for row in (0..N).rev() {
        let mut acc = rhs[row];
        for k in row + 1..N {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Ackermann placement for an `N`-state single-input system.
pub fn place_poles_n<T: Scalar, const N: usize>(
    a: &[[T; N]; N],
    b: &[T; N],
    poles: &PoleSet,
) -> Result<[T; N], ControlError> {
    if poles.len() != N {
        return Err(ControlError::InvalidPoles(format!(
            "{} poles for a {N}-state system",
            poles.len()
        )));
    }
    let coeffs = poles.characteristic_polynomial()?;

    // Controllability matrix, column k = A^k b.
    let mut cols = [[T::zero(); N]; N];
    cols[0] = *b;
    for k in 1..N {
        cols[k] = std::array::from_fn(|i| {
            (0..N).fold(T::zero(), |acc, j| acc + a[i][j] * cols[k - 1][j])
        });
    }
    // cols[k][i] is C[i][k], so `cols` is C transposed. Columns are
    // normalised first so that scaling alone does not count as ill-conditioning.
    let cond = condition_number(&cols.map(|r| {
        let v = r.map(|x| x.re());
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.map(|x| x / norm)
    }));
    if !(cond <= MAX_CONDITION) {
        return Err(ControlError::Uncontrollable { cond });
    }
    let mut e_last = [T::zero(); N];
    e_last[N - 1] = T::one();
    let y = solve(cols, e_last);

    // phi(A) by Horner's rule.
    let mut phi = *a;
    for i in 0..N {
        phi[i][i] += T::cst(coeffs[N - 1]);
    }
    for k in (0..N - 1).rev() {
        phi = mat_mul(&phi, a);
        for i in 0..N {
            phi[i][i] += T::cst(coeffs[k]);
        }
    }

    Ok(std::array::from_fn(|j| {
        (0..N).fold(T::zero(), |acc, i| acc + y[i] * phi[i][j])
    }))
}

/// Gain placing the eigenvalues of `A - B1 K` at `poles`.
pub fn place_poles<T: Scalar>(
    model: &LateralModel<T>,
    poles: &PoleSet,
) -> Result<GainVector<T>, ControlError> {
    place_poles_n(&model.a, &model.b1, poles).map(GainVector)
}

/// Eigenvalues of `A - b k` for an `N`-state system (verification only).
pub fn closed_loop_eigs_n<const N: usize>(
    a: &[[f64; N]; N],
    b: &[f64; N],
    k: &[f64; N],
) -> Vec<Complex64> {
    let m = SMatrix::<f64, N, N>::from_fn(|i, j| a[i][j] - b[i] * k[j]);
    DMatrix::from_column_slice(N, N, m.as_slice())
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}

pub fn closed_loop_eigs<T: Scalar>(model: &LateralModel<T>, k: &GainVector<T>) -> Vec<Complex64> {
    let a = model.a.map(|r| r.map(|x| x.re()));
    let b = model.b1.map(|x| x.re());
    closed_loop_eigs_n(&a, &b, &k.values().0)
}

/// Largest distance between two equally sized multisets of complex numbers
/// under the best one-to-one matching.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    fn go(a: &[Complex64], b: &[Complex64], used: &mut Vec<bool>, i: usize, cur: f64, best: &mut f64) {
        if cur >= *best {
            return;
        }
        if i == a.len() {
            *best = cur;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, used, i + 1, cur.max((a[i] - b[j]).norm()), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::lateral::{build_lateral_model, LateralParams};
    use crate::dynamics::VehicleParams;

    #[test]
    fn double_integrator() {
        let a = [[0.0, 1.0], [0.0, 0.0]];
        let b = [0.0, 1.0];
        let k: [f64; 2] = place_poles_n(&a, &b, &PoleSet::from_real(&[-1.0, -2.0]).unwrap()).unwrap();
        assert!((k[0] - 2.0).abs() < 1e-12 && (k[1] - 3.0).abs() < 1e-12, "{k:?}");
        let eig = closed_loop_eigs_n(&a, &b, &k);
        let want = [Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)];
        assert!(multiset_distance(&eig, &want) < 1e-12);
    }

    #[test]
    fn f1tenth_placement_hits_poles() {
        let lp = LateralParams::from_vehicle(&VehicleParams::f1tenth());
        let model = build_lateral_model(&lp, 1.0).unwrap();
        for poles in [
            PoleSet::from_real(&[-5.0, -4.0, -7.0, -10.0]).unwrap(),
            PoleSet::new(vec![
                Complex64::new(-2.0, 2.0),
                Complex64::new(-2.0, -2.0),
                Complex64::new(-150.0, 15.0),
                Complex64::new(-150.0, -15.0),
            ])
            .unwrap(),
        ] {
            let k = place_poles(&model, &poles).unwrap();
            let eig = closed_loop_eigs(&model, &k);
            let scale = poles.poles().iter().map(|p| p.norm()).fold(1.0, f64::max);
            assert!(multiset_distance(&eig, poles.poles()) < 1e-6 * scale);
        }
    }

    #[test]
    fn idempotent_when_already_placed() {
        let lp = LateralParams::from_vehicle(&VehicleParams::f1tenth());
        let model = build_lateral_model(&lp, 1.0).unwrap();
        let poles = PoleSet::from_real(&[-5.0, -4.0, -7.0, -10.0]).unwrap();
        let k = place_poles(&model, &poles).unwrap();
        // Fold the gain into A; re-placing on the closed loop needs zero gain.
        let mut closed = model;
        for i in 0..4 {
            for j in 0..4 {
                closed.a[i][j] -= model.b1[i] * k.0[j];
            }
        }
        let k2 = place_poles(&closed, &poles).unwrap();
        assert!(k2.0.iter().all(|x| x.abs() < 1e-8), "{k2:?}");
        assert!(multiset_distance(&closed_loop_eigs(&closed, &k2), poles.poles()) < 1e-6);
    }

    #[test]
    fn open_loop_has_double_zero() {
        let lp = LateralParams::from_vehicle(&VehicleParams::f1tenth());
        let model = build_lateral_model(&lp, 1.0).unwrap();
        let eig = closed_loop_eigs(&model, &GainVector([0.0; 4]));
        let zeros = eig.iter().filter(|e| e.norm() < 1e-9).count();
        assert_eq!(zeros, 2, "{eig:?}");
    }

    #[test]
    fn pole_set_validation() {
        assert!(matches!(
            PoleSet::from_real(&[-1.0, 0.5]),
            Err(ControlError::UnstablePole(_))
        ));
        assert!(matches!(
            PoleSet::new(vec![Complex64::new(-1.0, 1.0), Complex64::new(-2.0, 0.0)]),
            Err(ControlError::NotConjugateClosed(_))
        ));
        assert!(PoleSet::from_real(&[-2.0, -2.0]).is_ok());
        assert!(PoleSet::new(vec![
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, -1.0),
            Complex64::new(-1.0, -1.0)
        ])
        .is_err());
    }

    #[test]
    fn uncontrollable_pair_rejected() {
        let a = [[-1.0, 0.0], [0.0, -2.0]];
        let b = [1.0, 0.0];
        let err = place_poles_n(&a, &b, &PoleSet::from_real(&[-1.0, -3.0]).unwrap()).unwrap_err();
        assert!(matches!(err, ControlError::Uncontrollable { .. }));
    }

    #[test]
    fn pole_set_serde_pairs() {
        let p: PoleSet = serde_json::from_str("[[-2,2],[-2,-2]]").unwrap();
        assert_eq!(p.len(), 2);
        assert!(serde_json::from_str::<PoleSet>("[[1,0]]").is_err());
    }
}
