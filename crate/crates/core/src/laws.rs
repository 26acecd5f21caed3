//! Increment laws and the characteristic functions of their limit series.
//!
//! Every law here is symmetric, so the closed-form characteristic functions
//! are real. Spectral measures are finite atom lists; the stored list is read
//! as the symmetrized measure `½ ∑ w_k (δ_{s_k} + δ_{−s_k})`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matalg::{power_sequence, psd_sqrt, tail_certificate, SquareMatrix, Vector};

pub type CfValue = Complex<f64>;

const UNIT_NORM_TOL: f64 = 1e-12;

/// Finite spectral measure on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    dim: usize,
    atoms: Vec<Vector>,
    weights: Vec<f64>,
}

impl SpectralMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("spectral measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::invalid("atoms must have dimension at least 1"));
        }
        let mut vecs = Vec::with_capacity(atoms.len());
        for (k, a) in atoms.into_iter().enumerate() {
            if a.len() != dim {
                return Err(Error::invalid(format!("atom {k} has the wrong dimension")));
            }
            let v = Vector::from_vec(a);
            if !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(format!(
                    "atom {k} is not a unit vector (norm {})",
                    v.norm()
                )));
            }
            vecs.push(v);
        }
        if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!(
                "weight {k} must be finite and positive"
            )));
        }
        Ok(Self {
            dim,
            atoms: vecs,
            weights,
        })
    }

    /// `½(δ_s + δ_{−s})` with total mass `weight`.
    pub fn single(atom: Vec<f64>, weight: f64) -> Result<Self> {
        Self::new(vec![atom], vec![weight])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Vector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Π(S_{d−1})`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ |⟨θ, x⟩|^α Π(dx)` over the symmetrized measure.
    pub fn exponent(&self, theta: &Vector, alpha: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| {
                let dot = theta.dot(s);
                0.5 * w * (dot.abs().powf(alpha) + (-dot).abs().powf(alpha))
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalLaw {
    cov: SquareMatrix,
    sqrt: SquareMatrix,
}

impl NormalLaw {
    pub fn new(cov: SquareMatrix) -> Result<Self> {
        let sqrt = psd_sqrt(&cov)?;
        Ok(Self { cov, sqrt })
    }

    pub fn cov(&self) -> &SquareMatrix {
        &self.cov
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableLaw {
    alpha: f64,
    spectral: SpectralMeasure,
}

impl StableLaw {
    /// Symmetric α-stable law with `0 < α < 2`.
    pub fn new(alpha: f64, spectral: SpectralMeasure) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(format!(
                "stable index must lie in (0, 2), got {alpha}"
            )));
        }
        Ok(Self { alpha, spectral })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn spectral(&self) -> &SpectralMeasure {
        &self.spectral
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pool: Vec<Vector>,
}

impl EmpiricalLaw {
    pub fn new(pool: Vec<Vec<f64>>) -> Result<Self> {
        let dim = pool
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("empirical pool is empty"))?;
        if dim == 0 {
            return Err(Error::invalid("empirical samples must have dimension at least 1"));
        }
        let mut out = Vec::with_capacity(pool.len());
        for (i, x) in pool.into_iter().enumerate() {
            if x.len() != dim || !x.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!(
                    "pool entry {i} is not a finite {dim}-vector"
                )));
            }
            out.push(Vector::from_vec(x));
        }
        Ok(Self { pool: out })
    }

    /// Loads a pool from a CSV with one column per coordinate. A non-numeric
    /// first row is treated as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut pool = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => pool.push(row),
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::invalid(format!(
                        "CSV line {}: {e}",
                        line + 1
                    )))
                }
            }
        }
        Self::new(pool)
    }

    pub fn pool(&self) -> &[Vector] {
        &self.pool
    }

    /// Largest sample norm.
    pub fn max_norm(&self) -> f64 {
        self.pool.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// The increment law μ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawJson", into = "LawJson")]
pub enum LimitLaw {
    Normal(NormalLaw),
    /// Standard `d`-dimensional Cauchy law, characteristic function `e^{−‖θ‖}`.
    Cauchy { dim: usize },
    Stable(StableLaw),
    Empirical(EmpiricalLaw),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase", deny_unknown_fields)]
enum LawJson {
    Normal {
        cov: SquareMatrix,
    },
    Cauchy {
        dim: usize,
    },
    Stable {
        alpha: f64,
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pool: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<String>,
    },
}

impl TryFrom<LawJson> for LimitLaw {
    type Error = Error;

    fn try_from(json: LawJson) -> Result<Self> {
        match json {
            LawJson::Normal { cov } => Ok(LimitLaw::Normal(NormalLaw::new(cov)?)),
            LawJson::Cauchy { dim } => LimitLaw::cauchy(dim),
            LawJson::Stable {
                alpha,
                atoms,
                weights,
            } => Ok(LimitLaw::Stable(StableLaw::new(
                alpha,
                SpectralMeasure::new(atoms, weights)?,
            )?)),
            LawJson::Empirical { pool, csv } => match (pool, csv) {
                (Some(pool), None) => Ok(LimitLaw::Empirical(EmpiricalLaw::new(pool)?)),
                (None, Some(path)) => Ok(LimitLaw::Empirical(EmpiricalLaw::from_csv(path)?)),
                _ => Err(Error::invalid(
                    "empirical law needs exactly one of `pool` or `csv`",
                )),
            },
        }
    }
}

impl From<LimitLaw> for LawJson {
    fn from(law: LimitLaw) -> Self {
        match law {
            LimitLaw::Normal(n) => LawJson::Normal { cov: n.cov },
            LimitLaw::Cauchy { dim } => LawJson::Cauchy { dim },
            LimitLaw::Stable(s) => LawJson::Stable {
                alpha: s.alpha,
                atoms: s
                    .spectral
                    .atoms
                    .iter()
                    .map(|a| a.iter().copied().collect())
                    .collect(),
                weights: s.spectral.weights,
            },
            LimitLaw::Empirical(e) => LawJson::Empirical {
                pool: Some(e.pool.iter().map(|x| x.iter().copied().collect()).collect()),
                csv: None,
            },
        }
    }
}

impl LimitLaw {
    pub fn normal(cov: SquareMatrix) -> Result<Self> {
        Ok(LimitLaw::Normal(NormalLaw::new(cov)?))
    }

    pub fn cauchy(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("Cauchy law needs dimension at least 1"));
        }
        Ok(LimitLaw::Cauchy { dim })
    }

    pub fn stable(alpha: f64, spectral: SpectralMeasure) -> Result<Self> {
        Ok(LimitLaw::Stable(StableLaw::new(alpha, spectral)?))
    }

    pub fn empirical(pool: Vec<Vec<f64>>) -> Result<Self> {
        Ok(LimitLaw::Empirical(EmpiricalLaw::new(pool)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            LimitLaw::Normal(n) => n.cov.dim(),
            LimitLaw::Cauchy { dim } => *dim,
            LimitLaw::Stable(s) => s.spectral.dim,
            LimitLaw::Empirical(e) => e.pool[0].len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LimitLaw::Normal(_) => "normal",
            LimitLaw::Cauchy { .. } => "cauchy",
            LimitLaw::Stable(_) => "stable",
            LimitLaw::Empirical(_) => "empirical",
        }
    }

    pub fn cf(&self, theta: &Vector) -> CfValue {
        cf_increment(self, theta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        sample_increment(self, rng)
    }
}

/// Characteristic function `φ_μ(θ)` of the increment law.
pub fn cf_increment(law: &LimitLaw, theta: &Vector) -> CfValue {
    match law {
        LimitLaw::Normal(n) => {
            let q = theta.dot(&n.cov.apply(theta));
            Complex::new((-0.5 * q).exp(), 0.0)
        }
        LimitLaw::Cauchy { .. } => Complex::new((-theta.norm()).exp(), 0.0),
        LimitLaw::Stable(s) => Complex::new((-s.spectral.exponent(theta, s.alpha)).exp(), 0.0),
        LimitLaw::Empirical(e) => {
            let (mut re, mut im) = (0.0, 0.0);
            for x in &e.pool {
                let (s, c) = theta.dot(x).sin_cos();
                re += c;
                im += s;
            }
            let n = e.pool.len() as f64;
            Complex::new(re / n, im / n)
        }
    }
}

/// Closed-form characteristic function of a truncated limit series together
/// with an upper bound on the neglected part of its exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitCf {
    pub value: CfValue,
    /// Exponent for the `r + 1` retained terms, `value = exp(−exponent)`.
    pub exponent: f64,
    pub tail_bound: f64,
}

fn check_dims(p: &SquareMatrix, theta: &Vector) -> Result<()> {
    if p.dim() != theta.len() {
        return Err(Error::invalid(format!(
            "theta has dimension {} but P is {}x{}",
            theta.len(),
            p.dim(),
            p.dim()
        )));
    }
    if !theta.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("theta has non-finite entries"));
    }
    Ok(())
}

fn limit_cf(exponent: f64, tail_bound: f64) -> LimitCf {
    LimitCf {
        value: Complex::new((-exponent).exp(), 0.0),
        exponent,
        tail_bound,
    }
}

/// `exp(−½ θᵀ Σ_r θ)` with `Σ_r = ∑_{j≤r} Pʲ D (Pʲ)ᵀ`; the tail bound is
/// `½‖θ‖²‖D‖ ∑_{j>r} ‖Pʲ‖²`.
pub fn cf_normal_limit(
    p: &SquareMatrix,
    d: &SquareMatrix,
    theta: &Vector,
    r: usize,
) -> Result<LimitCf> {
    check_dims(p, theta)?;
    if d.dim() != p.dim() {
        return Err(Error::invalid("covariance and P differ in dimension"));
    }
    let cert = tail_certificate(p)?;
    let mut sigma = SquareMatrix::zeros(p.dim());
    for pj in power_sequence(p, r) {
        sigma = sigma.add(&pj.mul(d).mul(&pj.transpose()));
    }
    let exponent = 0.5 * theta.dot(&sigma.apply(theta));
    let tail = 0.5 * theta.norm_squared() * d.norm() * cert.tail_sum(r, 2.0);
    Ok(limit_cf(exponent, tail))
}

/// `exp(−∑_{j≤r} ‖(Pʲ)ᵀθ‖)`; the tail bound is `‖θ‖ ∑_{j>r} ‖Pʲ‖`.
pub fn cf_cauchy_limit(p: &SquareMatrix, theta: &Vector, r: usize) -> Result<LimitCf> {
    check_dims(p, theta)?;
    let cert = tail_certificate(p)?;
    let exponent: f64 = power_sequence(p, r)
        .iter()
        .map(|pj| pj.apply_transpose(theta).norm())
        .sum();
    Ok(limit_cf(exponent, theta.norm() * cert.tail_sum(r, 1.0)))
}

/// `exp(−∑_{j≤r} ∫ |⟨(Pʲ)ᵀθ, x⟩|^α Π(dx))`; the tail bound is
/// `‖θ‖^α Π(S_{d−1}) ∑_{j>r} ‖Pʲ‖^α`.
///
/// Accepts `α = 2`, where the law is Gaussian.
pub fn cf_stable_limit(
    p: &SquareMatrix,
    alpha: f64,
    spectral: &SpectralMeasure,
    theta: &Vector,
    r: usize,
) -> Result<LimitCf> {
    check_dims(p, theta)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid(format!(
            "stable index must lie in (0, 2], got {alpha}"
        )));
    }
    if spectral.dim != p.dim() {
        return Err(Error::invalid("spectral measure and P differ in dimension"));
    }
    let cert = tail_certificate(p)?;
    let exponent: f64 = power_sequence(p, r)
        .iter()
        .map(|pj| spectral.exponent(&pj.apply_transpose(theta), alpha))
        .sum();
    let tail = theta.norm().powf(alpha) * spectral.total_mass() * cert.tail_sum(r, alpha);
    Ok(limit_cf(exponent, tail))
}

/// `∏_{j≤r} φ_μ(Mᵀ(Pʲ)ᵀθ)`: characteristic function of `∑_{j≤r} Pʲ M Zⱼ`
/// computed term by term from the increment law (`M = I` when `mix` is `None`).
pub fn series_cf_product(
    law: &LimitLaw,
    powers: &[SquareMatrix],
    mix: Option<&SquareMatrix>,
    theta: &Vector,
) -> CfValue {
    powers.iter().fold(Complex::new(1.0, 0.0), |acc, pj| {
        let mut t = pj.apply_transpose(theta);
        if let Some(m) = mix {
            t = m.apply_transpose(&t);
        }
        acc * cf_increment(law, &t)
    })
}

/// Symmetric α-stable variate with characteristic function `e^{−|t|^α}`
/// (Chambers–Mallows–Stuck).
pub fn sample_1d_sas<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid(format!(
            "stable index must lie in (0, 2], got {alpha}"
        )));
    }
    Ok(sas_unchecked(alpha, rng))
}

fn sas_unchecked<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let v = PI * (u - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let cos_v = v.cos();
    (alpha * v).sin() / cos_v.powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    Vector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// One draw `Z ∼ μ`.
pub fn sample_increment<R: Rng + ?Sized>(law: &LimitLaw, rng: &mut R) -> Vector {
    match law {
        LimitLaw::Normal(n) => n.sqrt.apply(&standard_normal_vector(n.cov.dim(), rng)),
        LimitLaw::Cauchy { dim } => {
            let z = standard_normal_vector(*dim, rng);
            let w: f64 = StandardNormal.sample(rng);
            z / w.abs()
        }
        LimitLaw::Stable(s) => {
            let mut out = Vector::zeros(s.spectral.dim);
            for (atom, w) in s.spectral.atoms.iter().zip(&s.spectral.weights) {
                let scale = (0.5 * w).powf(1.0 / s.alpha);
                let plus = sas_unchecked(s.alpha, rng);
                let minus = sas_unchecked(s.alpha, rng);
                out += atom * (scale * (plus - minus));
            }
            out
        }
        LimitLaw::Empirical(e) => e.pool[rng.random_range(0..e.pool.len())].clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn e1_measure(dim: usize) -> SpectralMeasure {
        let mut a = vec![0.0; dim];
        a[0] = 1.0;
        SpectralMeasure::single(a, 1.0).unwrap()
    }

    #[test]
    fn increment_cf_examples() {
        let cauchy = LimitLaw::cauchy(2).unwrap();
        assert_eq!(cauchy.cf(&v(&[0.0, 0.0])), Complex::new(1.0, 0.0));
        assert!((cauchy.cf(&v(&[1.0, 0.0])).re - 0.367_879_441_171_442_3).abs() < 1e-15);
        let stable = LimitLaw::stable(1.0, e1_measure(2)).unwrap();
        assert!((stable.cf(&v(&[1.0, 0.0])).re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn limit_cf_examples() {
        let p0 = SquareMatrix::zeros(2);
        let id = SquareMatrix::identity(2);
        let theta = v(&[1.0, 1.0]);
        let n = cf_normal_limit(&p0, &id, &theta, 5).unwrap();
        assert!((n.value.re - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(n.tail_bound, 0.0);
        let zero = cf_normal_limit(&p0, &id, &v(&[0.0, 0.0]), 3).unwrap();
        assert_eq!(zero.value, Complex::new(1.0, 0.0));

        let c = cf_cauchy_limit(&p0, &theta, 4).unwrap();
        assert!((c.value.re - (-(2.0f64).sqrt()).exp()).abs() < 1e-15);

        let half = SquareMatrix::scaled_identity(1, 0.5);
        let c = cf_cauchy_limit(&half, &v(&[1.0]), 60).unwrap();
        assert!((c.value.re - (-2.0f64).exp()).abs() < 1e-15);
        let s = cf_stable_limit(&half, 1.0, &e1_measure(1), &v(&[1.0]), 60).unwrap();
        assert!((s.value.re - (-2.0f64).exp()).abs() < 1e-15);
        let n = cf_normal_limit(&half, &SquareMatrix::identity(1), &v(&[1.0]), 60).unwrap();
        assert!((n.value.re - (-2.0f64 / 3.0).exp()).abs() < 1e-15);

        // α = 2 with unit mass on ±e₁ is N(0, 2): e^{−θ²}
        let s = cf_stable_limit(&p0, 2.0, &e1_measure(2), &v(&[1.0, 0.0]), 0).unwrap();
        assert!((s.value.re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn limit_cf_rejects_explosive_p() {
        let p = SquareMatrix::scaled_identity(2, 1.5);
        let theta = v(&[1.0, 0.0]);
        assert!(matches!(
            cf_cauchy_limit(&p, &theta, 3),
            Err(Error::HypothesisViolation(_))
        ));
        assert!(cf_normal_limit(&p, &SquareMatrix::identity(2), &theta, 3).is_err());
        assert!(cf_stable_limit(&p, 1.0, &e1_measure(2), &theta, 3).is_err());
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(SpectralMeasure::single(vec![1.0, 1.0], 1.0).is_err());
        assert!(SpectralMeasure::single(vec![1.0, 0.0], 0.0).is_err());
        assert!(LimitLaw::stable(2.0, e1_measure(2)).is_err());
        assert!(LimitLaw::stable(0.0, e1_measure(2)).is_err());
        assert!(LimitLaw::empirical(vec![]).is_err());
        assert!(LimitLaw::normal(SquareMatrix::diagonal(&[1.0, -1.0]).unwrap()).is_err());
        let mut rng = StreamKey::new(0, 0).stream(0);
        assert!(sample_1d_sas(2.5, &mut rng).is_err());
        assert!(sample_1d_sas(0.0, &mut rng).is_err());
        assert!(sample_1d_sas(2.0, &mut rng).is_ok());
    }

    #[test]
    fn degenerate_normal_samples_zero() {
        let law = LimitLaw::normal(SquareMatrix::zeros(3)).unwrap();
        let mut rng = StreamKey::new(1, 0).stream(0);
        for _ in 0..10 {
            assert_eq!(law.sample(&mut rng), Vector::zeros(3));
        }
    }

    #[test]
    fn json_shapes() {
        let law: LimitLaw = serde_json::from_str(
            r#"{"law":"stable","alpha":1.5,"atoms":[[1,0],[0,1]],"weights":[1,0.5]}"#,
        )
        .unwrap();
        assert_eq!(law.dim(), 2);
        let back: LimitLaw = serde_json::from_str(&serde_json::to_string(&law).unwrap()).unwrap();
        assert_eq!(law, back);
        let normal: LimitLaw =
            serde_json::from_str(r#"{"law":"normal","cov":{"dim":1,"rows":[[2]]}}"#).unwrap();
        assert_eq!(normal.name(), "normal");
        assert!(serde_json::from_str::<LimitLaw>(r#"{"law":"cauchy","dim":2,"x":1}"#).is_err());
        assert!(serde_json::from_str::<LimitLaw>(r#"{"law":"stable","alpha":2,"atoms":[[1]],"weights":[1]}"#).is_err());
    }

    #[test]
    fn empirical_pool_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        std::fs::write(&path, "x,y\n1,2\n-1, 0.5\n").unwrap();
        let law = EmpiricalLaw::from_csv(&path).unwrap();
        assert_eq!(law.pool().len(), 2);
        assert_eq!(law.pool()[1], v(&[-1.0, 0.5]));
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(EmpiricalLaw::from_csv(&path).is_err());
    }
}
