//! The limit series `∑_{j≥0} Pʲ Zⱼ`: truncation with certified tail control,
//! sampling, and log-moment / exceedance diagnostics.

use std::io::Write;

use rand::Rng;
use rand_distr::{Cauchy, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::LimitLaw;
use crate::matalg::{power_sequence, tail_certificate, GelfandCertificate, SquareMatrix, Vector};
use crate::rng::{par_map_indexed, StreamKey};

const MAX_TRUNCATION: usize = 1 << 24;

/// A truncation index with a certified bound on `∑_{j>r} ‖Pʲ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    pub r: usize,
    pub tail_norm_bound: f64,
    pub certificate: GelfandCertificate,
}

impl TruncationPlan {
    /// Plan with a caller-chosen `r`.
    pub fn fixed(p: &SquareMatrix, r: usize) -> Result<Self> {
        let certificate = tail_certificate(p)?;
        Ok(Self {
            r,
            tail_norm_bound: certificate.tail_sum(r, 1.0),
            certificate,
        })
    }

    /// `∑_{j=r+1}^{k0−1} ‖Pʲ‖ + rate^{max(r+1,k0)} / (1 − rate)` from the stored certificate.
    pub fn recomputed_tail(&self) -> f64 {
        self.certificate.tail_sum(self.r, 1.0)
    }

    /// Bound on `∑_{j>r} ‖Pʲ‖` for another truncation index under the same certificate.
    pub fn tail_at(&self, r: usize) -> f64 {
        self.certificate.tail_sum(r, 1.0)
    }
}

/// Smallest `r` whose certified tail `∑_{j>r} ‖Pʲ‖` is at most `tol`.
pub fn truncation_index(p: &SquareMatrix, tol: f64) -> Result<TruncationPlan> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let certificate = tail_certificate(p)?;
    let mut r = 0;
    loop {
        let tail = certificate.tail_sum(r, 1.0);
        if tail <= tol {
            return Ok(TruncationPlan {
                r,
                tail_norm_bound: tail,
                certificate,
            });
        }
        r += 1;
        if r > MAX_TRUNCATION {
            return Err(Error::invalid(format!(
                "tolerance {tol} needs more than {MAX_TRUNCATION} terms"
            )));
        }
    }
}

/// Draws of the law of the increments of a series.
pub trait IncrementSampler: Sync {
    fn dim(&self) -> usize;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector;
}

impl IncrementSampler for LimitLaw {
    fn dim(&self) -> usize {
        LimitLaw::dim(self)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum LogCauchyTag {
    #[serde(rename = "log_cauchy_ray")]
    LogCauchyRay,
}

/// `Z = exp(C)·e₁` with `C` standard Cauchy: `log⁺‖Z‖ = C⁺` has infinite mean.
///
/// `exp(C)` saturates at `f64::MAX`, which still exceeds `2^j` for `j < 1024`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogCauchyRay {
    law: LogCauchyTag,
    pub dim: usize,
}

impl LogCauchyRay {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(Self {
            law: LogCauchyTag::LogCauchyRay,
            dim,
        })
    }
}

impl IncrementSampler for LogCauchyRay {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let c: f64 = Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng);
        let mut z = Vector::zeros(self.dim);
        z[0] = c.exp().min(f64::MAX);
        z
    }
}

/// Increment law accepted by the Lemma diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IncrementLaw {
    LogCauchyRay(LogCauchyRay),
    Law(LimitLaw),
}

impl IncrementSampler for IncrementLaw {
    fn dim(&self) -> usize {
        match self {
            IncrementLaw::LogCauchyRay(l) => l.dim,
            IncrementLaw::Law(l) => l.dim(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            IncrementLaw::LogCauchyRay(l) => l.draw(rng),
            IncrementLaw::Law(l) => l.sample(rng),
        }
    }
}

/// Truncated limit series with cached matrix powers.
#[derive(Debug, Clone)]
pub struct LimitSeries<S> {
    powers: Vec<SquareMatrix>,
    law: S,
}

impl<S: IncrementSampler> LimitSeries<S> {
    pub fn new(p: &SquareMatrix, law: S, plan: &TruncationPlan) -> Result<Self> {
        if p.dim() != law.dim() {
            return Err(Error::invalid(format!(
                "P is {}x{} but the law is {}-dimensional",
                p.dim(),
                p.dim(),
                law.dim()
            )));
        }
        Ok(Self {
            powers: power_sequence(p, plan.r),
            law,
        })
    }

    pub fn powers(&self) -> &[SquareMatrix] {
        &self.powers
    }

    /// `∑_{j=0}^{r} Pʲ Zⱼ`, drawing `Z₀, Z₁, …` in order from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let mut acc = Vector::zeros(self.law.dim());
        for pj in &self.powers {
            acc += pj.apply(&self.law.draw(rng));
        }
        acc
    }
}

pub fn sample_limit_series<R: Rng + ?Sized>(
    p: &SquareMatrix,
    law: &LimitLaw,
    plan: &TruncationPlan,
    rng: &mut R,
) -> Result<Vector> {
    Ok(LimitSeries::new(p, law.clone(), plan)?.sample(rng))
}

/// `log⁺(x) = log(x)` for `x ≥ 1`, else 0.
pub fn log_plus(x: f64) -> f64 {
    if x >= 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// Mean of `log⁺‖z‖` over the samples.
pub fn log_moment_estimate(samples: &[Vector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("log-moment of an empty sample"));
    }
    Ok(samples.iter().map(|z| log_plus(z.norm())).sum::<f64>() / samples.len() as f64)
}

/// One simulated sequence `(Zⱼ)_{j≤J}` seen through `‖PʲZⱼ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub path_id: u64,
    pub horizon: usize,
    /// Indices `j ≤ J` with `‖PʲZⱼ‖ > 1`, ascending.
    pub exceedances: Vec<usize>,
    /// `∑_{j≤k} ‖PʲZⱼ‖` for `k = 0..=J`; empty when not retained.
    pub partial_sums: Vec<f64>,
    pub final_partial_sum: f64,
    pub last_term_norm: f64,
    pub log_moment_estimate: f64,
}

impl LemmaReport {
    pub fn exceedance_count(&self) -> usize {
        self.exceedances.len()
    }

    pub fn last_exceedance_index(&self) -> Option<usize> {
        self.exceedances.last().copied()
    }
}

/// Cross-path summary of a Lemma run.
///
/// The late-exceedance cut `J/2` is a calibration choice standing in for
/// "infinitely often", which no finite horizon can observe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaAggregate {
    pub n_paths: usize,
    pub horizon: usize,
    /// Fraction of paths whose last exceedance index exceeds `J/2`.
    pub late_exceedance_fraction: f64,
    /// Per index `j`, the fraction of paths with `‖PʲZⱼ‖ > 1`.
    pub exceedance_frequency: Vec<f64>,
    pub mean_exceedance_count: f64,
    pub max_last_term_norm: f64,
    pub mean_log_moment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaRun {
    pub reports: Vec<LemmaReport>,
    pub aggregate: LemmaAggregate,
}

impl LemmaRun {
    /// CSV rows `path_id, J, exceedance_count, last_exceedance_index,
    /// final_partial_sum, last_term_norm`; paths without exceedances leave the
    /// index empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "path_id",
            "J",
            "exceedance_count",
            "last_exceedance_index",
            "final_partial_sum",
            "last_term_norm",
        ])?;
        for r in &self.reports {
            w.write_record([
                r.path_id.to_string(),
                r.horizon.to_string(),
                r.exceedance_count().to_string(),
                r.last_exceedance_index()
                    .map(|i| i.to_string())
                    .unwrap_or_default(),
                r.final_partial_sum.to_string(),
                r.last_term_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LemmaOptions {
    pub horizon: usize,
    pub n_paths: usize,
    pub keep_partial_sums: bool,
    pub workers: usize,
}

fn lemma_path<S: IncrementSampler, R: Rng + ?Sized>(
    path_id: u64,
    powers: &[SquareMatrix],
    law: &S,
    rng: &mut R,
    keep_partial_sums: bool,
) -> LemmaReport {
    let horizon = powers.len() - 1;
    let mut exceedances = Vec::new();
    let mut partial_sums = Vec::with_capacity(if keep_partial_sums { horizon + 1 } else { 0 });
    let mut running = 0.0;
    let mut log_sum = 0.0;
    let mut last = 0.0;
    for (j, pj) in powers.iter().enumerate() {
        let z = law.draw(rng);
        log_sum += log_plus(z.norm());
        last = pj.apply(&z).norm();
        if last > 1.0 {
            exceedances.push(j);
        }
        running += last;
        if keep_partial_sums {
            partial_sums.push(running);
        }
    }
    LemmaReport {
        path_id,
        horizon,
        exceedances,
        partial_sums,
        final_partial_sum: running,
        last_term_norm: last,
        log_moment_estimate: log_sum / powers.len() as f64,
    }
}

/// Simulates `n_paths` independent sequences `(Zⱼ)_{j≤J}`; path `i` uses
/// stream `i` of `key`, so the result does not depend on `workers`.
pub fn lemma_diagnostics<S: IncrementSampler>(
    p: &SquareMatrix,
    law: &S,
    options: LemmaOptions,
    key: StreamKey,
) -> Result<LemmaRun> {
    if options.horizon == 0 {
        return Err(Error::invalid("horizon J must be at least 1"));
    }
    if options.n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    if p.dim() != law.dim() {
        return Err(Error::invalid("P and the increment law differ in dimension"));
    }
    let rho = crate::matalg::spectral_radius(p)?;
    if rho >= 1.0 {
        return Err(Error::hypothesis(format!(
            "spectral radius {rho} is not below 1"
        )));
    }
    let powers = power_sequence(p, options.horizon);
    let reports = par_map_indexed(options.n_paths, options.workers, |i| {
        lemma_path(i, &powers, law, &mut key.stream(i), options.keep_partial_sums)
    })?;
    let aggregate = aggregate(&reports, options.horizon);
    Ok(LemmaRun { reports, aggregate })
}

fn aggregate(reports: &[LemmaReport], horizon: usize) -> LemmaAggregate {
    let n = reports.len() as f64;
    let mut counts = vec![0usize; horizon + 1];
    for r in reports {
        for &j in &r.exceedances {
            counts[j] += 1;
        }
    }
    let late = reports
        .iter()
        .filter(|r| r.last_exceedance_index().is_some_and(|j| 2 * j > horizon))
        .count();
    LemmaAggregate {
        n_paths: reports.len(),
        horizon,
        late_exceedance_fraction: late as f64 / n,
        exceedance_frequency: counts.iter().map(|&c| c as f64 / n).collect(),
        mean_exceedance_count: reports.iter().map(|r| r.exceedance_count() as f64).sum::<f64>() / n,
        max_last_term_norm: reports.iter().map(|r| r.last_term_norm).fold(0.0, f64::max),
        mean_log_moment: reports.iter().map(|r| r.log_moment_estimate).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_examples() {
        let plan = truncation_index(&SquareMatrix::zeros(2), 1e-9).unwrap();
        assert_eq!(plan.r, 0);
        assert_eq!(plan.tail_norm_bound, 0.0);
        let half = SquareMatrix::scaled_identity(1, 0.5);
        let plan = truncation_index(&half, 2f64.powi(-10)).unwrap();
        assert_eq!(plan.r, 10);
        assert_eq!(plan.tail_norm_bound, 2f64.powi(-10));
        assert!(truncation_index(&half, 0.0).is_err());
        assert!(matches!(
            truncation_index(&SquareMatrix::identity(2), 0.1),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn log_plus_examples() {
        let unit = vec![Vector::from_column_slice(&[0.6, 0.8]); 4];
        assert!(log_moment_estimate(&unit).unwrap().abs() < 1e-15);
        let e = vec![Vector::from_column_slice(&[std::f64::consts::E]); 3];
        assert!((log_moment_estimate(&e).unwrap() - 1.0).abs() < 1e-15);
        assert!(log_moment_estimate(&[]).is_err());
        assert_eq!(log_plus(0.3), 0.0);
    }

    #[test]
    fn zero_truncation_reproduces_the_law() {
        let law = LimitLaw::empirical(vec![vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let p = SquareMatrix::scaled_identity(2, 0.5);
        let plan = TruncationPlan::fixed(&p, 0).unwrap();
        let key = StreamKey::new(3, 0);
        for i in 0..20 {
            let x = sample_limit_series(&p, &law, &plan, &mut key.stream(i)).unwrap();
            let z = law.sample(&mut key.stream(i));
            assert_eq!(x, z);
        }
    }

    #[test]
    fn bounded_law_stops_exceeding() {
        // sup‖Z‖ = 0.9 < 1, so no index ever exceeds.
        let law = LimitLaw::empirical(vec![vec![0.9, 0.0], vec![0.0, -0.5]]).unwrap();
        let p = SquareMatrix::scaled_identity(2, 0.5);
        let opts = LemmaOptions {
            horizon: 40,
            n_paths: 50,
            keep_partial_sums: true,
            workers: 2,
        };
        let run = lemma_diagnostics(&p, &law, opts, StreamKey::new(5, 1)).unwrap();
        assert!(run.reports.iter().all(|r| r.exceedance_count() == 0));
        assert_eq!(run.aggregate.late_exceedance_fraction, 0.0);
        for r in &run.reports {
            assert_eq!(r.partial_sums.len(), 41);
            assert!(r.partial_sums.windows(2).all(|w| w[0] <= w[1]));
        }
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "path_id,J,exceedance_count,last_exceedance_index,final_partial_sum,last_term_norm\n0,40,0,,"
        ));
    }

    #[test]
    fn increment_law_json() {
        let l: IncrementLaw = serde_json::from_str(r#"{"law":"log_cauchy_ray","dim":2}"#).unwrap();
        assert_eq!(l, IncrementLaw::LogCauchyRay(LogCauchyRay::new(2).unwrap()));
        let l: IncrementLaw = serde_json::from_str(r#"{"law":"cauchy","dim":2}"#).unwrap();
        assert!(matches!(l, IncrementLaw::Law(LimitLaw::Cauchy { dim: 2 })));
    }
}
