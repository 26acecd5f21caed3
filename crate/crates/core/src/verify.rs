//! Finite-sample verdicts for the hypotheses and conclusions of the stable
//! limit theorem.
//!
//! Stable convergence is tested against a finite family of prefix events `F`
//! and a θ-grid: the statistic compares `E[1_F e^{i⟨θ,X⟩}]` with its limit.
//! For mixing convergence the limit factorizes as `P(F)·φ(θ)`; for stable
//! convergence it is `E[1_F ψ(θ)]` where `ψ` depends on the path's latent
//! state. All statistics are computed under `P(· | G ∩ {η invertible})`.

use std::collections::BTreeMap;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::ecf::{hoeffding_radius, CompensatedSum, ThetaGrid, RADIUS_MULTIPLIER};
use crate::error::{Error, Result};
use crate::laws::{series_cf_product, CfValue, LimitLaw};
use crate::matalg::{power_sequence, SquareMatrix, Vector};
use crate::processes::{PathSample, ProcessSpec, PREFIX_LEN};

/// A path predicate that only looks at the latent state and the first
/// noise vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Always,
    /// First coordinate of `W_{index+1}` is positive.
    NoisePositive { index: usize },
    /// The latent λ or S atom has this index.
    LatentAtom { index: usize },
    Not(Box<Event>),
    And(Vec<Event>),
}

impl Event {
    pub fn eval(&self, path: &PathSample) -> bool {
        match self {
            Event::Always => true,
            Event::NoisePositive { index } => path.prefix.get(*index).is_some_and(|w| w[0] > 0.0),
            Event::LatentAtom { index } => path.latent.atom_index() == Some(*index),
            Event::Not(e) => !e.eval(path),
            Event::And(es) => es.iter().all(|e| e.eval(path)),
        }
    }

    /// Number of leading noise vectors the event reads.
    pub fn prefix_len(&self) -> usize {
        match self {
            Event::Always | Event::LatentAtom { .. } => 0,
            Event::NoisePositive { index } => index + 1,
            Event::Not(e) => e.prefix_len(),
            Event::And(es) => es.iter().map(Event::prefix_len).max().unwrap_or(0),
        }
    }

    /// Probability of the event given the latent atom, if it depends on the
    /// latent state only.
    fn latent_indicator(&self, atom: Option<usize>) -> Option<bool> {
        match self {
            Event::Always => Some(true),
            Event::NoisePositive { .. } => None,
            Event::LatentAtom { index } => Some(atom == Some(*index)),
            Event::Not(e) => e.latent_indicator(atom).map(|b| !b),
            Event::And(es) => es
                .iter()
                .map(|e| e.latent_indicator(atom))
                .try_fold(true, |acc, b| b.map(|b| acc && b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFamily {
    events: Vec<(String, Event)>,
}

impl EventFamily {
    pub fn new(events: Vec<(String, Event)>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::invalid("event family is empty"));
        }
        if !events.iter().any(|(_, e)| *e == Event::Always) {
            return Err(Error::invalid("event family must contain the always-true event"));
        }
        if let Some((label, _)) = events.iter().find(|(_, e)| e.prefix_len() > PREFIX_LEN) {
            return Err(Error::invalid(format!(
                "event {label} reads beyond the stored noise prefix"
            )));
        }
        Ok(Self { events })
    }

    /// Only the whole space.
    pub fn omega() -> Self {
        Self {
            events: vec![("omega".into(), Event::Always)],
        }
    }

    /// Ω together with two binary features, their complements, and the four
    /// atoms they generate. The first feature is the sign of `W₁`; the second
    /// is "latent atom 0" when the process has latent atoms, else the sign of `W₂`.
    pub fn default_for(has_latent_atoms: bool) -> Self {
        let f1 = ("w1+".to_string(), Event::NoisePositive { index: 0 });
        let f2 = if has_latent_atoms {
            ("atom0".to_string(), Event::LatentAtom { index: 0 })
        } else {
            ("w2+".to_string(), Event::NoisePositive { index: 1 })
        };
        let not = |(l, e): &(String, Event)| (format!("!{l}"), Event::Not(Box::new(e.clone())));
        let and = |(la, a): &(String, Event), (lb, b): &(String, Event)| {
            (format!("{la}&{lb}"), Event::And(vec![a.clone(), b.clone()]))
        };
        let (n1, n2) = (not(&f1), not(&f2));
        let events = vec![
            ("omega".to_string(), Event::Always),
            f1.clone(),
            n1.clone(),
            f2.clone(),
            n2.clone(),
            and(&f1, &f2),
            and(&f1, &n2),
            and(&n1, &f2),
            and(&n1, &n2),
        ];
        Self { events }
    }

    pub fn events(&self) -> &[(String, Event)] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub condition: String,
    pub checkpoints: Vec<usize>,
    pub labels: Vec<String>,
    pub statistics: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub pass: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub n_paths: usize,
    /// Paths in `G ∩ {η invertible}`.
    pub n_used: usize,
    #[serde(default)]
    pub grid_size: Option<usize>,
}

impl ConvergenceVerdict {
    fn new(
        condition: &str,
        checkpoints: Vec<usize>,
        rows: Vec<(String, f64, f64)>,
        n_paths: usize,
        n_used: usize,
    ) -> Self {
        let pass = rows.iter().all(|(_, s, t)| s <= t);
        let (labels, (statistics, thresholds)) =
            rows.into_iter().map(|(l, s, t)| (l, (s, t))).unzip();
        Self {
            condition: condition.to_string(),
            checkpoints,
            labels,
            statistics,
            thresholds,
            pass,
            seed: None,
            n_paths,
            n_used,
            grid_size: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Re-derives `pass` from the stored statistics and thresholds.
    pub fn recomputed_pass(&self) -> bool {
        self.statistics
            .iter()
            .zip(&self.thresholds)
            .all(|(s, t)| s <= t)
    }
}

/// Paths in `G ∩ {∃η⁻¹}`.
pub fn filter_g(paths: &[PathSample]) -> Vec<&PathSample> {
    paths
        .iter()
        .filter(|p| p.latent.in_g && p.latent.eta_invertible())
        .collect()
}

fn filtered(paths: &[PathSample]) -> Result<Vec<&PathSample>> {
    let used = filter_g(paths);
    if used.is_empty() {
        return Err(Error::InsufficientData(
            "no paths in G with invertible η".into(),
        ));
    }
    Ok(used)
}

fn checkpoint(p: &PathSample, n: usize) -> Result<&crate::processes::CheckpointData> {
    p.at(n)
        .ok_or_else(|| Error::invalid(format!("path {} has no checkpoint {n}", p.path_id)))
}

/// Nearest-rank empirical quantile.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

const CONDITION_QUANTILE: f64 = 0.95;

/// Rows requiring the statistic to be non-increasing along checkpoints (up to
/// `tol`) and at most `tol` at the last one.
fn monotone_rows(checkpoints: &[usize], stats: &[f64], tol: f64) -> Vec<(String, f64, f64)> {
    let last = stats.len() - 1;
    stats
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let threshold = if k == last {
                tol
            } else if k == 0 {
                f64::MAX
            } else {
                stats[k - 1] + tol
            };
            (format!("n={}", checkpoints[k]), s, threshold)
        })
        .collect()
}

/// 95th percentile of `‖QₙBₙ⁻¹ − η‖` per checkpoint.
pub fn check_condition_i(paths: &[PathSample], checkpoints: &[usize], tol: f64) -> Result<ConvergenceVerdict> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("need at least one checkpoint"));
    }
    let used = filtered(paths)?;
    let mut stats = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        let mut errs = used
            .iter()
            .map(|p| {
                let c = checkpoint(p, n)?;
                Ok(c.q.mul(&c.b.inverse()?).sub(&p.latent.eta).norm())
            })
            .collect::<Result<Vec<f64>>>()?;
        stats.push(quantile(&mut errs, CONDITION_QUANTILE));
    }
    Ok(ConvergenceVerdict::new(
        "condition_i",
        checkpoints.to_vec(),
        monotone_rows(checkpoints, &stats, tol),
        paths.len(),
        used.len(),
    ))
}

/// Exceedance frequencies `P(‖QₙUₙ‖ > K)`: per K the supremum over
/// checkpoints, bounded by `bound` at the largest K, plus a trend row
/// comparing the last and first checkpoint at the largest K.
pub fn check_condition_ii(
    paths: &[PathSample],
    checkpoints: &[usize],
    k_grid: &[f64],
    bound: f64,
) -> Result<ConvergenceVerdict> {
    if checkpoints.is_empty() || k_grid.is_empty() {
        return Err(Error::invalid("need checkpoints and a non-empty K grid"));
    }
    let used = filtered(paths)?;
    let n = used.len() as f64;
    let mut k_sorted = k_grid.to_vec();
    k_sorted.sort_by(f64::total_cmp);
    let mut freq = vec![vec![0.0; checkpoints.len()]; k_sorted.len()];
    for (ci, &c) in checkpoints.iter().enumerate() {
        let norms = used
            .iter()
            .map(|p| Ok(checkpoint(p, c)?.qu.norm()))
            .collect::<Result<Vec<f64>>>()?;
        for (ki, &k) in k_sorted.iter().enumerate() {
            freq[ki][ci] = norms.iter().filter(|&&x| x > k).count() as f64 / n;
        }
    }
    let last_k = k_sorted.len() - 1;
    let mut rows: Vec<(String, f64, f64)> = k_sorted
        .iter()
        .enumerate()
        .map(|(ki, k)| {
            let sup = freq[ki].iter().copied().fold(0.0, f64::max);
            let threshold = if ki == last_k { bound } else { 1.0 };
            (format!("sup_n P(|QU|>{k})"), sup, threshold)
        })
        .collect();
    let top = &freq[last_k];
    let mean = top.iter().sum::<f64>() / top.len() as f64;
    let trend_radius = RADIUS_MULTIPLIER * (2.0 * mean * (1.0 - mean) / n).sqrt() + 1.0 / n;
    rows.push((
        format!("trend P(|QU|>{})", k_sorted[last_k]),
        top[top.len() - 1] - top[0],
        trend_radius,
    ));
    Ok(ConvergenceVerdict::new(
        "condition_ii",
        checkpoints.to_vec(),
        rows,
        paths.len(),
        used.len(),
    ))
}

/// 95th percentile of `max_r ‖BₙB_{n−r}⁻¹ − Pʳ‖` per checkpoint.
pub fn check_condition_iii(
    paths: &[PathSample],
    p: &SquareMatrix,
    r_list: &[usize],
    checkpoints: &[usize],
    tol: f64,
) -> Result<ConvergenceVerdict> {
    if checkpoints.is_empty() || r_list.is_empty() {
        return Err(Error::invalid("need checkpoints and lags"));
    }
    for &n in checkpoints {
        if let Some(r) = r_list.iter().find(|&&r| r > n) {
            return Err(Error::invalid(format!(
                "checkpoint {n} minus lag {r} is negative"
            )));
        }
    }
    let used = filtered(paths)?;
    let max_r = r_list.iter().copied().max().unwrap_or(0);
    let powers = power_sequence(p, max_r);
    let mut stats = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        let mut errs = Vec::with_capacity(used.len());
        for path in &used {
            let c = checkpoint(path, n)?;
            let mut worst: f64 = 0.0;
            for &r in r_list {
                let lagged = c
                    .lagged_b
                    .iter()
                    .find(|(lag, _)| *lag == r)
                    .map(|(_, b)| b)
                    .ok_or_else(|| Error::invalid(format!("path lacks B at lag {r}")))?;
                let e = c.b.mul(&lagged.inverse()?).sub(&powers[r]).norm();
                worst = worst.max(e);
            }
            errs.push(worst);
        }
        stats.push(quantile(&mut errs, CONDITION_QUANTILE));
    }
    Ok(ConvergenceVerdict::new(
        "condition_iii",
        checkpoints.to_vec(),
        monotone_rows(checkpoints, &stats, tol),
        paths.len(),
        used.len(),
    ))
}

/// Which scaled statistic a convergence test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaled {
    /// `BₙUₙ`.
    Bu,
    /// `QₙUₙ`.
    Qu,
}

/// A test statistic with its acceptance radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub value: f64,
    /// Hoeffding radius for the filtered path count.
    pub radius: f64,
    pub n_used: usize,
    /// Event label and grid index where the maximum is attained.
    pub argmax_event: String,
    pub argmax_theta: usize,
}

impl StatisticValue {
    pub fn threshold(&self) -> f64 {
        RADIUS_MULTIPLIER * self.radius
    }

    pub fn passes(&self) -> bool {
        self.value <= self.threshold()
    }
}

/// Per-event compensated sums of `1_F e^{i⟨θ, x⟩}`.
struct EventSums {
    re: Vec<Vec<CompensatedSum>>,
    im: Vec<Vec<CompensatedSum>>,
    counts: Vec<usize>,
}

impl EventSums {
    fn new(events: usize, points: usize) -> Self {
        Self {
            re: vec![vec![CompensatedSum::default(); points]; events],
            im: vec![vec![CompensatedSum::default(); points]; events],
            counts: vec![0; events],
        }
    }

    fn add(&mut self, event: usize, values: &[CfValue]) {
        for (k, v) in values.iter().enumerate() {
            self.re[event][k].add(v.re);
            self.im[event][k].add(v.im);
        }
        self.counts[event] += 1;
    }

    fn mean(&self, event: usize, k: usize, n: f64) -> CfValue {
        Complex::new(self.re[event][k].value() / n, self.im[event][k].value() / n)
    }
}

fn scaled_vector(p: &PathSample, n: usize, which: Scaled) -> Result<&Vector> {
    let c = checkpoint(p, n)?;
    Ok(match which {
        Scaled::Bu => &c.bu,
        Scaled::Qu => &c.qu,
    })
}

fn check_grid(grid: &ThetaGrid, reference_len: usize) -> Result<()> {
    if grid.len() != reference_len {
        return Err(Error::invalid(format!(
            "reference has {reference_len} values for a {}-point grid",
            grid.len()
        )));
    }
    Ok(())
}

/// `T(n) = max_{F,θ} |E[1_F e^{i⟨θ,X⟩}] − P(F)·φ(θ)|` with `φ` given on the grid.
pub fn mixing_statistic(
    paths: &[PathSample],
    n: usize,
    which: Scaled,
    family: &EventFamily,
    grid: &ThetaGrid,
    limit_cf: &[CfValue],
    delta: f64,
) -> Result<StatisticValue> {
    check_grid(grid, limit_cf.len())?;
    let used = filtered(paths)?;
    let mut sums = EventSums::new(family.len(), grid.len());
    for path in &used {
        let x = scaled_vector(path, n, which)?;
        let phases: Vec<CfValue> = grid
            .points()
            .iter()
            .map(|t| {
                let (s, c) = t.dot(x).sin_cos();
                Complex::new(c, s)
            })
            .collect();
        for (e, (_, event)) in family.events().iter().enumerate() {
            if event.eval(path) {
                sums.add(e, &phases);
            }
        }
    }
    let total = used.len() as f64;
    finish_statistic(family, grid.len(), used.len(), delta, |e, k| {
        let freq = sums.counts[e] as f64 / total;
        (sums.mean(e, k, total) - limit_cf[k] * freq).norm()
    })
}

fn finish_statistic<F: Fn(usize, usize) -> f64>(
    family: &EventFamily,
    points: usize,
    n_used: usize,
    delta: f64,
    gap: F,
) -> Result<StatisticValue> {
    let mut best = (0.0, 0, 0);
    for e in 0..family.len() {
        for k in 0..points {
            let g = gap(e, k);
            if g > best.0 {
                best = (g, e, k);
            }
        }
    }
    Ok(StatisticValue {
        value: best.0,
        radius: hoeffding_radius(n_used, delta),
        n_used,
        argmax_event: family.events()[best.1].0.clone(),
        argmax_theta: best.2,
    })
}

/// Conditional limit characteristic functions `ψ(latent, θ)` on a grid,
/// precomputed per latent atom.
#[derive(Debug, Clone)]
pub struct ConditionalReference {
    by_atom: BTreeMap<Option<usize>, Vec<CfValue>>,
}

impl ConditionalReference {
    /// `ψ(θ) = ∏_{j≤r} φ_μ(Sᵀ(Pʲ)ᵀηᵀθ)` for every latent atom of the spec, the
    /// law of `η ∑_{j≤r} Pʲ S Zⱼ` given the latent state. For `Scaled::Bu` the
    /// factor η is dropped. The explosive VAR sums from `j = 1`, which is the
    /// same as taking `S = P`.
    pub fn from_spec(spec: &ProcessSpec, r: usize, grid: &ThetaGrid, which: Scaled) -> Result<Self> {
        spec.validate()?;
        let p = spec.p()?;
        let powers = power_sequence(&p, r);
        let law = spec.law();
        let d = p.dim();
        let eval = |eta: &SquareMatrix, mix: Option<&SquareMatrix>| -> Vec<CfValue> {
            grid.points()
                .iter()
                .map(|t| {
                    let t = match which {
                        Scaled::Qu => eta.apply_transpose(t),
                        Scaled::Bu => t.clone(),
                    };
                    series_cf_product(law, &powers, mix, &t)
                })
                .collect()
        };
        let mut by_atom = BTreeMap::new();
        match spec {
            ProcessSpec::RandomScaled { lambda, .. } => {
                for (i, l) in lambda.values.iter().enumerate() {
                    by_atom.insert(Some(i), eval(&SquareMatrix::scaled_identity(d, *l), None));
                }
            }
            ProcessSpec::DiscreteS { s, .. } => {
                for (i, m) in s.values.iter().enumerate() {
                    by_atom.insert(Some(i), eval(&SquareMatrix::identity(d), Some(m)));
                }
            }
            ProcessSpec::ExplosiveVar { .. } => {
                by_atom.insert(None, eval(&SquareMatrix::identity(d), Some(&p)));
            }
            ProcessSpec::SyntheticCanonical { .. } => {
                by_atom.insert(None, eval(&SquareMatrix::identity(d), None));
            }
        }
        Ok(Self { by_atom })
    }

    /// The same reference `∏_{j≤r} φ_μ((Pʲ)ᵀθ)` for every path.
    pub fn unconditional(law: &LimitLaw, p: &SquareMatrix, r: usize, grid: &ThetaGrid) -> Self {
        let powers = power_sequence(p, r);
        let values = grid
            .points()
            .iter()
            .map(|t| series_cf_product(law, &powers, None, t))
            .collect();
        Self {
            by_atom: BTreeMap::from([(None, values)]),
        }
    }

    pub fn values(&self, atom: Option<usize>) -> Result<&[CfValue]> {
        if self.by_atom.len() == 1 && self.by_atom.contains_key(&None) {
            return Ok(&self.by_atom[&None]);
        }
        self.by_atom
            .get(&atom)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("no reference for latent atom {atom:?}")))
    }

    /// Values of an unconditional reference.
    pub fn constant(&self) -> Option<&[CfValue]> {
        match (self.by_atom.len(), self.by_atom.get(&None)) {
            (1, Some(v)) => Some(v),
            _ => None,
        }
    }
}

/// `S(n) = max_{F,θ} |E[1_F e^{i⟨θ,X⟩}] − E[1_F ψ(latent, θ)]|`.
pub fn stable_statistic(
    paths: &[PathSample],
    n: usize,
    which: Scaled,
    family: &EventFamily,
    grid: &ThetaGrid,
    reference: &ConditionalReference,
    delta: f64,
) -> Result<StatisticValue> {
    let used = filtered(paths)?;
    let mut data = EventSums::new(family.len(), grid.len());
    let mut refs = EventSums::new(family.len(), grid.len());
    for path in &used {
        let x = scaled_vector(path, n, which)?;
        let psi = reference.values(path.latent.atom_index())?;
        check_grid(grid, psi.len())?;
        let phases: Vec<CfValue> = grid
            .points()
            .iter()
            .map(|t| {
                let (s, c) = t.dot(x).sin_cos();
                Complex::new(c, s)
            })
            .collect();
        for (e, (_, event)) in family.events().iter().enumerate() {
            if event.eval(path) {
                data.add(e, &phases);
                refs.add(e, psi);
            }
        }
    }
    let total = used.len() as f64;
    finish_statistic(family, grid.len(), used.len(), delta, |e, k| {
        (data.mean(e, k, total) - refs.mean(e, k, total)).norm()
    })
}

/// Closed-form lower bound on the mixing statistic of `QₙUₙ` for a
/// random-scaled process: the largest gap `|E_G[1_F ψ_λ(θ)] − P_G(F)·φ(θ)|`
/// over the latent-measurable events of the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingGap {
    pub gap: f64,
    pub event: String,
    pub theta_index: usize,
}

pub fn non_mixing_gap(
    spec: &ProcessSpec,
    r: usize,
    family: &EventFamily,
    grid: &ThetaGrid,
) -> Result<MixingGap> {
    let ProcessSpec::RandomScaled {
        p,
        mu,
        lambda,
        event_g,
    } = spec
    else {
        return Err(Error::invalid("the non-mixing gap is defined for random_scaled processes"));
    };
    let conditional = ConditionalReference::from_spec(spec, r, grid, Scaled::Qu)?;
    let phi = ConditionalReference::unconditional(mu, p, r, grid);
    let phi = phi.constant().expect("unconditional reference");
    let in_g: Vec<usize> = (0..lambda.values.len())
        .filter(|&i| event_g.contains(&lambda.values[i]))
        .collect();
    let p_g: f64 = in_g.iter().map(|&i| lambda.probs[i]).sum();
    let mut best = MixingGap {
        gap: 0.0,
        event: String::new(),
        theta_index: 0,
    };
    for (label, event) in family.events() {
        let mut members = Vec::new();
        let mut skip = false;
        for &i in &in_g {
            match event.latent_indicator(Some(i)) {
                Some(true) => members.push(i),
                Some(false) => {}
                None => skip = true,
            }
        }
        if skip {
            continue;
        }
        let freq: f64 = members.iter().map(|&i| lambda.probs[i]).sum::<f64>() / p_g;
        for k in 0..grid.len() {
            let mut lhs = Complex::new(0.0, 0.0);
            for &i in &members {
                lhs += conditional.values(Some(i))?[k] * (lambda.probs[i] / p_g);
            }
            let gap = (lhs - phi[k] * freq).norm();
            if gap > best.gap {
                best = MixingGap {
                    gap,
                    event: label.clone(),
                    theta_index: k,
                };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{DiscreteLaw, ProcessSimulator};
    use crate::rng::StreamKey;

    fn scaled_spec() -> ProcessSpec {
        ProcessSpec::RandomScaled {
            p: SquareMatrix::rotation(0.4).scale(0.5),
            mu: LimitLaw::normal(SquareMatrix::identity(2)).unwrap(),
            lambda: DiscreteLaw::uniform(vec![1.0, 2.0]),
            event_g: vec![1.0, 2.0],
        }
    }

    fn samples(spec: ProcessSpec, n_paths: usize, checkpoints: &[usize], lags: &[usize]) -> Vec<PathSample> {
        let max = *checkpoints.iter().max().unwrap();
        let sim = ProcessSimulator::new(spec, max).unwrap();
        crate::processes::simulate_samples(&sim, n_paths, checkpoints, lags, StreamKey::new(11, 3), 4).unwrap()
    }

    #[test]
    fn family_rules() {
        assert!(EventFamily::new(vec![]).is_err());
        assert!(EventFamily::new(vec![("a".into(), Event::LatentAtom { index: 0 })]).is_err());
        assert!(EventFamily::new(vec![
            ("omega".into(), Event::Always),
            ("w5".into(), Event::NoisePositive { index: 4 })
        ])
        .is_err());
        assert_eq!(EventFamily::default_for(true).len(), 9);
    }

    #[test]
    fn exact_conditions_hold_for_random_scaled() {
        let paths = samples(scaled_spec(), 200, &[5, 10, 20], &[1, 2, 5]);
        let i = check_condition_i(&paths, &[5, 10, 20], 1e-10).unwrap();
        assert!(i.pass, "{i:?}");
        assert!(i.statistics.iter().all(|s| *s < 1e-12));
        let p = scaled_spec().p().unwrap();
        let iii = check_condition_iii(&paths, &p, &[1, 2, 5], &[5, 10, 20], 1e-10).unwrap();
        assert!(iii.pass, "{iii:?}");
        assert_eq!(iii.recomputed_pass(), iii.pass);
        assert!(check_condition_iii(&paths, &p, &[6], &[5], 1e-10).is_err());
    }

    #[test]
    fn condition_i_detects_perturbation() {
        let mut paths = samples(scaled_spec(), 50, &[4, 8, 16], &[]);
        for path in &mut paths {
            let l = path.latent.lambda.unwrap();
            for c in &mut path.checkpoints {
                c.b = c.q.scale(1.0 / (l + 1.0 / c.n as f64));
            }
        }
        let v = check_condition_i(&paths, &[4, 8, 16], 1e-10).unwrap();
        for (s, n) in v.statistics.iter().zip([4.0, 8.0, 16.0]) {
            assert!((s - 1.0 / n).abs() < 1e-12);
        }
        assert!(!v.pass);
        assert!(check_condition_i(&paths, &[4, 8, 16], 0.1).unwrap().pass);
    }

    #[test]
    fn insufficient_data_outside_g() {
        let spec = ProcessSpec::RandomScaled {
            p: SquareMatrix::scaled_identity(2, 0.5),
            mu: LimitLaw::cauchy(2).unwrap(),
            lambda: DiscreteLaw {
                values: vec![1.0, 2.0],
                probs: vec![1.0 - 1e-15, 1e-15],
            },
            event_g: vec![2.0],
        };
        let paths = samples(spec, 20, &[3], &[]);
        assert!(matches!(
            check_condition_i(&paths, &[3], 1e-10),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn point_mass_law_never_exceeds() {
        let spec = ProcessSpec::SyntheticCanonical {
            p: SquareMatrix::scaled_identity(2, 0.5),
            mu: LimitLaw::normal(SquareMatrix::zeros(2)).unwrap(),
        };
        let paths = samples(spec, 100, &[5, 10], &[]);
        let v = check_condition_ii(&paths, &[5, 10], &[0.5, 1.0], 0.01).unwrap();
        assert!(v.statistics[..2].iter().all(|s| *s == 0.0));
        assert!(v.pass);
    }

    #[test]
    fn omega_statistic_at_zero_theta_vanishes() {
        let spec = ProcessSpec::SyntheticCanonical {
            p: SquareMatrix::scaled_identity(2, 0.5),
            mu: LimitLaw::cauchy(2).unwrap(),
        };
        let paths = samples(spec, 10, &[3], &[]);
        let grid = ThetaGrid::new(vec![vec![0.0, 0.0]]).unwrap();
        let t = mixing_statistic(&paths, 3, Scaled::Bu, &EventFamily::omega(), &grid, &[Complex::new(1.0, 0.0)], 1e-3)
            .unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn gap_for_two_point_scale() {
        let grid = ThetaGrid::default_for(2).unwrap();
        let gap = non_mixing_gap(&scaled_spec(), 23, &EventFamily::default_for(true), &grid).unwrap();
        assert!(gap.gap > 0.05, "{gap:?}");
        assert!(non_mixing_gap(
            &ProcessSpec::SyntheticCanonical {
                p: SquareMatrix::scaled_identity(2, 0.5),
                mu: LimitLaw::cauchy(2).unwrap()
            },
            3,
            &EventFamily::omega(),
            &grid
        )
        .is_err());
    }

    #[test]
    fn quantile_nearest_rank() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&mut v, 0.95), 95.0);
        assert_eq!(quantile(&mut [3.0], 0.95), 3.0);
    }
}
