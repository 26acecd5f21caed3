//! Dense small-dimension matrix analysis.
//!
//! The operator norm used throughout is the induced 2-norm (largest singular
//! value). Dimensions are expected to be small (up to 16), so every routine
//! here is a direct dense computation.

use std::fmt;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Largest dimension for which the accuracy targets of this module are tested.
pub const MAX_TESTED_DIM: usize = 16;

/// Numerical thresholds used by the matrix routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative asymmetry `‖V − Vᵀ‖ / ‖V‖` accepted by [`psd_sqrt`].
    pub symmetry: f64,
    /// Most negative eigenvalue (relative to `max(1, ‖V‖)`) still treated as zero.
    pub psd_eigenvalue: f64,
    /// Condition number above which a matrix is reported as singular.
    pub max_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symmetry: 1e-12,
            psd_eigenvalue: 1e-12,
            max_condition: 1e12,
        }
    }
}

/// A dense `d × d` real matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct SquareMatrix(DMatrix<f64>);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixJson {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixJson> for SquareMatrix {
    type Error = Error;

    fn try_from(json: MatrixJson) -> Result<Self> {
        if json.rows.len() != json.dim {
            return Err(Error::invalid(format!(
                "matrix declares dim {} but has {} rows",
                json.dim,
                json.rows.len()
            )));
        }
        SquareMatrix::from_rows(&json.rows)
    }
}

impl From<SquareMatrix> for MatrixJson {
    fn from(m: SquareMatrix) -> Self {
        MatrixJson {
            dim: m.dim(),
            rows: m.rows(),
        }
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SquareMatrix{:?}", self.rows())
    }
}

impl SquareMatrix {
    /// Wraps a nalgebra matrix, checking shape and finiteness.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Ok(SquareMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::invalid("matrix must have dimension at least 1"));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::invalid(format!(
                "row {bad} has length {} but the matrix is {d}x{d}",
                rows[bad].len()
            )));
        }
        Self::from_matrix(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        SquareMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SquareMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        SquareMatrix(DMatrix::identity(dim, dim) * c)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&Vector::from_column_slice(values)))
    }

    /// Planar rotation by `angle` radians.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        SquareMatrix(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        SquareMatrix(self.0.transpose())
    }

    pub fn mul(&self, other: &SquareMatrix) -> Self {
        SquareMatrix(&self.0 * &other.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        SquareMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SquareMatrix) -> Self {
        SquareMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SquareMatrix) -> Self {
        SquareMatrix(&self.0 - &other.0)
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.0 * v
    }

    /// `Mᵀ v` without forming the transpose.
    pub fn apply_transpose(&self, v: &Vector) -> Vector {
        self.0.tr_mul(v)
    }

    /// Induced 2-norm (largest singular value).
    pub fn norm(&self) -> f64 {
        if self.dim() == 1 {
            return self.0[(0, 0)].abs();
        }
        self.0.singular_values().max()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Ratio of extreme singular values; infinite for singular input.
    pub fn condition_number(&self) -> f64 {
        let sv = self.0.singular_values();
        let (max, min) = (sv.max(), sv.min());
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with(&Tolerances::default())
    }

    /// Inverse, refusing matrices whose condition number exceeds
    /// `tol.max_condition`.
    pub fn inverse_with(&self, tol: &Tolerances) -> Result<Self> {
        let condition = self.condition_number();
        if !(condition <= tol.max_condition) {
            return Err(Error::Singular { condition });
        }
        let inv = self
            .0
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { condition })?;
        Self::from_matrix(inv).map_err(|_| Error::Singular { condition })
    }

    pub fn is_invertible(&self) -> bool {
        self.condition_number() <= Tolerances::default().max_condition
    }

    /// `M^k` by binary exponentiation.
    pub fn pow(&self, mut k: u32) -> Self {
        let mut base = self.0.clone();
        let mut acc = DMatrix::identity(self.dim(), self.dim());
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        SquareMatrix(acc)
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &SquareMatrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::invalid("spectral radius of a non-finite matrix"));
    }
    if m.dim() == 1 {
        return Ok(m.get(0, 0).abs());
    }
    let schur = Schur::try_new(m.as_matrix().clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::invalid("eigenvalue iteration did not converge"))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// `[P⁰, P¹, …, Pʳ]`.
pub fn power_sequence(p: &SquareMatrix, r: usize) -> Vec<SquareMatrix> {
    let mut out = Vec::with_capacity(r + 1);
    out.push(SquareMatrix::identity(p.dim()));
    for j in 1..=r {
        let next = out[j - 1].mul(p);
        out.push(next);
    }
    out
}

/// Symmetric positive semidefinite square root.
pub fn psd_sqrt(v: &SquareMatrix) -> Result<SquareMatrix> {
    psd_sqrt_with(v, &Tolerances::default())
}

pub fn psd_sqrt_with(v: &SquareMatrix, tol: &Tolerances) -> Result<SquareMatrix> {
    let scale = v.norm();
    let asym = v.sub(&v.transpose()).norm();
    if asym > tol.symmetry * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (asymmetry {asym:e})"
        )));
    }
    let sym = (v.as_matrix() + v.as_matrix().transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let floor = -tol.psd_eigenvalue * scale.max(1.0);
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < floor) {
        return Err(Error::invalid(format!(
            "matrix is not positive semidefinite (eigenvalue {bad:e})"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let r = (&r + r.transpose()) * 0.5;
    SquareMatrix::from_matrix(r)
}

/// Evidence that `‖Pᵏ‖^(1/k) ≤ (1+ϱ)/2` from index `k0` up to `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelfandCertificate {
    pub rho: f64,
    pub k0: usize,
    pub horizon: usize,
    /// `(1 + rho) / 2`.
    pub ratio: f64,
    /// `max ‖Pᵏ‖^(1/k)` over `k0 ≤ k ≤ horizon`; never exceeds `ratio`.
    pub rate: f64,
    /// `‖Pʲ‖` for `1 ≤ j < k0`, the indices not covered by the geometric bound.
    pub head_norms: Vec<f64>,
}

impl GelfandCertificate {
    /// Whether the certified bound `‖Pʲ‖ ≤ rateʲ` extends to every `j ≥ k0`.
    ///
    /// Any `j ≥ k0` splits into parts from `[k0, 2k0 − 1]`, so submultiplicativity
    /// carries the bound past the horizon once the horizon covers that window.
    pub fn covers_all_indices(&self) -> bool {
        self.horizon + 1 >= 2 * self.k0
    }

    /// Upper bound on `∑_{j>r} ‖Pʲ‖^power`.
    pub fn tail_sum(&self, r: usize, power: f64) -> f64 {
        let head: f64 = (r + 1..self.k0)
            .map(|j| self.head_norms[j - 1].powf(power))
            .sum();
        let start = (r + 1).max(self.k0) as f64;
        let q = self.rate.powf(power);
        head + self.rate.powf(power * start) / (1.0 - q)
    }
}

/// Minimal `k0 ≤ horizon` with `‖Pᵏ‖^(1/k) ≤ (1+ϱ(P))/2` for all `k0 ≤ k ≤ horizon`.
pub fn gelfand_index(p: &SquareMatrix, horizon: usize) -> Result<GelfandCertificate> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let rho = spectral_radius(p)?;
    if rho >= 1.0 {
        return Err(Error::hypothesis(format!(
            "spectral radius {rho} is not below 1"
        )));
    }
    let ratio = (1.0 + rho) / 2.0;
    let mut roots = Vec::with_capacity(horizon);
    let mut norms = Vec::with_capacity(horizon);
    let mut power = p.clone();
    for k in 1..=horizon {
        if k > 1 {
            power = power.mul(p);
        }
        let n = power.norm();
        norms.push(n);
        roots.push(n.powf(1.0 / k as f64));
    }
    // k0 is one past the last violation of the ratio bound.
    let k0 = match roots.iter().rposition(|&x| x > ratio) {
        None => 1,
        Some(i) if i + 1 == horizon => return Err(Error::HorizonExceeded { horizon, rho }),
        Some(i) => i + 2,
    };
    let rate = roots[k0 - 1..].iter().copied().fold(0.0, f64::max);
    Ok(GelfandCertificate {
        rho,
        k0,
        horizon,
        ratio,
        rate,
        head_norms: norms[..k0 - 1].to_vec(),
    })
}

const MAX_TAIL_HORIZON: usize = 1 << 16;

/// A certificate whose geometric bound holds for every index (see
/// [`GelfandCertificate::covers_all_indices`]), growing the horizon as needed.
pub fn tail_certificate(p: &SquareMatrix) -> Result<GelfandCertificate> {
    let mut horizon = 64;
    loop {
        match gelfand_index(p, horizon) {
            Ok(cert) if cert.covers_all_indices() => return Ok(cert),
            Ok(_) | Err(Error::HorizonExceeded { .. }) if horizon < MAX_TAIL_HORIZON => {
                horizon *= 2;
            }
            Ok(cert) => {
                return Err(Error::HorizonExceeded {
                    horizon,
                    rho: cert.rho,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&SquareMatrix::identity(2)).unwrap() - 1.0).abs() < 1e-12);
        let diag = SquareMatrix::diagonal(&[0.5, -0.25]).unwrap();
        assert!((spectral_radius(&diag).unwrap() - 0.5).abs() < 1e-12);
        // λ² − λ + 0.25 has the double root 0.5
        let jordan = m(&[&[0.0, 1.0], &[-0.25, 1.0]]);
        assert!((spectral_radius(&jordan).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(SquareMatrix::from_rows(&[]).is_err());
        assert!(SquareMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(SquareMatrix::from_rows(&[vec![f64::NAN]]).is_err());
        assert!(SquareMatrix::from_row_slice(2, &[1.0; 3]).is_err());
    }

    #[test]
    fn gelfand_trivial_cases() {
        let half = SquareMatrix::scaled_identity(2, 0.5);
        let cert = gelfand_index(&half, 64).unwrap();
        assert_eq!(cert.k0, 1);
        assert!((cert.ratio - 0.75).abs() < 1e-12);
        let zero = gelfand_index(&SquareMatrix::zeros(2), 64).unwrap();
        assert_eq!(zero.k0, 1);
        assert_eq!(zero.rate, 0.0);
    }

    #[test]
    fn gelfand_errors() {
        let unit = SquareMatrix::identity(2);
        assert!(matches!(
            gelfand_index(&unit, 10),
            Err(Error::HypothesisViolation(_))
        ));
        let shear = m(&[&[0.5, 10.0], &[0.0, 0.5]]);
        assert!(matches!(
            gelfand_index(&shear, 5),
            Err(Error::HorizonExceeded { horizon: 5, .. })
        ));
        assert!(gelfand_index(&shear, 0).is_err());
    }

    #[test]
    fn power_sequence_examples() {
        let p = SquareMatrix::scaled_identity(1, 0.5);
        let seq = power_sequence(&p, 3);
        let vals: Vec<f64> = seq.iter().map(|s| s.get(0, 0)).collect();
        assert_eq!(vals, vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(power_sequence(&p, 0), vec![SquareMatrix::identity(1)]);
    }

    #[test]
    fn psd_sqrt_examples() {
        let i3 = SquareMatrix::identity(3);
        assert!(psd_sqrt(&i3).unwrap().sub(&i3).norm() < 1e-14);
        let r = psd_sqrt(&SquareMatrix::diagonal(&[4.0, 9.0]).unwrap()).unwrap();
        assert!(r.sub(&SquareMatrix::diagonal(&[2.0, 3.0]).unwrap()).norm() < 1e-14);
        assert!(psd_sqrt(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).is_err());
        assert!(psd_sqrt(&SquareMatrix::diagonal(&[1.0, -1.0]).unwrap()).is_err());
    }

    #[test]
    fn singular_inverse_is_an_error() {
        let s = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(s.inverse(), Err(Error::Singular { .. })));
        let inv = SquareMatrix::scaled_identity(3, 0.5).inverse().unwrap();
        assert!(inv.sub(&SquareMatrix::scaled_identity(3, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let a = m(&[&[0.1, 1.0 / 3.0], &[-2.5e-17, 7.0]]);
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.starts_with("{\"dim\":2,\"rows\":"));
        let back: SquareMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);
        assert!(serde_json::from_str::<SquareMatrix>(r#"{"dim":3,"rows":[[1]]}"#).is_err());
    }
}
