//! Empirical characteristic functions on finite θ-grids with Hoeffding radii.

use std::io::Write;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::CfValue;
use crate::matalg::Vector;

/// Default per-point failure probability of the confidence radius.
pub const DEFAULT_DELTA: f64 = 1e-3;

/// Acceptance rule: a statistic passes when it is at most this many radii.
pub const RADIUS_MULTIPLIER: f64 = 3.0;

pub const DEFAULT_DIRECTIONS: usize = 20;
pub const DEFAULT_RADII: [f64; 3] = [0.5, 1.0, 2.0];

/// Distribution-free radius `√(2 ln(2/δ)/N)` for one bounded CF component.
pub fn hoeffding_radius(n: usize, delta: f64) -> f64 {
    (2.0 * (2.0 / delta).ln() / n as f64).sqrt()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridJson", into = "GridJson")]
pub struct ThetaGrid {
    dim: usize,
    points: Vec<Vector>,
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<GridJson> for ThetaGrid {
    type Error = Error;
    fn try_from(g: GridJson) -> Result<Self> {
        let grid = ThetaGrid::new(g.points)?;
        if grid.dim != g.dim {
            return Err(Error::invalid("grid points do not match the declared dim"));
        }
        Ok(grid)
    }
}

impl From<ThetaGrid> for GridJson {
    fn from(g: ThetaGrid) -> Self {
        GridJson {
            dim: g.dim,
            points: g.points.iter().map(|p| p.iter().copied().collect()).collect(),
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut out) = (inv, 0.0);
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `count` directions on the unit sphere from a Halton sequence pushed through
/// Box–Muller and normalized. In one dimension the directions alternate ±1.
pub fn sphere_directions(dim: usize, count: usize) -> Result<Vec<Vector>> {
    if dim == 0 || dim > PRIMES.len() {
        return Err(Error::invalid(format!(
            "default directions support 1 ≤ d ≤ {}",
            PRIMES.len()
        )));
    }
    if dim == 1 {
        return Ok((0..count)
            .map(|i| Vector::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect());
    }
    let pairs = dim.div_ceil(2);
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let mut coords = Vec::with_capacity(2 * pairs);
        for k in 0..pairs {
            let u1 = radical_inverse(i, PRIMES[2 * k]).max(f64::MIN_POSITIVE);
            let u2 = radical_inverse(i, PRIMES[(2 * k + 1) % PRIMES.len()]);
            let rad = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
            coords.push(rad * c);
            coords.push(rad * s);
        }
        coords.truncate(dim);
        let v = Vector::from_vec(coords);
        let n = v.norm();
        if n > 1e-12 {
            out.push(v / n);
        }
        i += 1;
    }
    Ok(out)
}

impl ThetaGrid {
    /// Builds a grid from points; the zero vector is prepended when absent.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("grid needs at least one point"))?;
        if dim == 0 {
            return Err(Error::invalid("grid points need dimension at least 1"));
        }
        let mut pts = Vec::with_capacity(points.len() + 1);
        for (i, p) in points.into_iter().enumerate() {
            if p.len() != dim || !p.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid(format!(
                    "grid point {i} is not a finite {dim}-vector"
                )));
            }
            pts.push(Vector::from_vec(p));
        }
        if !pts.iter().any(|p| p.iter().all(|&x| x == 0.0)) {
            pts.insert(0, Vector::zeros(dim));
        }
        Ok(Self { dim, points: pts })
    }

    /// Zero plus every direction scaled by every radius.
    pub fn spherical(dim: usize, directions: usize, radii: &[f64]) -> Result<Self> {
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("grid radii must be finite and positive"));
        }
        let dirs = sphere_directions(dim, directions)?;
        let mut points = vec![Vector::zeros(dim)];
        for r in radii {
            points.extend(dirs.iter().map(|d| d * *r));
        }
        Ok(Self { dim, points })
    }

    /// 20 directions × radii {0.5, 1, 2} plus the origin: 61 points.
    pub fn default_for(dim: usize) -> Result<Self> {
        Self::spherical(dim, DEFAULT_DIRECTIONS, &DEFAULT_RADII)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evaluates a reference characteristic function on every grid point.
    pub fn evaluate<F: Fn(&Vector) -> CfValue>(&self, f: F) -> Vec<CfValue> {
        self.points.iter().map(f).collect()
    }
}

/// Sharded ECF accumulator; shards merge by compensated summation.
#[derive(Debug, Clone)]
pub struct EcfAccumulator<'g> {
    grid: &'g ThetaGrid,
    re: Vec<CompensatedSum>,
    im: Vec<CompensatedSum>,
    n: usize,
}

impl<'g> EcfAccumulator<'g> {
    pub fn new(grid: &'g ThetaGrid) -> Self {
        Self {
            grid,
            re: vec![CompensatedSum::default(); grid.len()],
            im: vec![CompensatedSum::default(); grid.len()],
            n: 0,
        }
    }

    pub fn push(&mut self, x: &Vector) {
        for (k, theta) in self.grid.points.iter().enumerate() {
            let (s, c) = theta.dot(x).sin_cos();
            self.re[k].add(c);
            self.im[k].add(s);
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &EcfAccumulator<'_>) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::invalid("cannot merge accumulators over different grids"));
        }
        for k in 0..self.re.len() {
            self.re[k].merge(&other.re[k]);
            self.im[k].merge(&other.im[k]);
        }
        self.n += other.n;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn finish(&self, delta: f64) -> Result<EcfEstimate> {
        if self.n == 0 {
            return Err(Error::invalid("ECF of an empty sample"));
        }
        check_delta(delta)?;
        let n = self.n as f64;
        let values = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(re, im)| Complex::new(re.value() / n, im.value() / n))
            .collect();
        Ok(EcfEstimate {
            grid: self.grid.clone(),
            values,
            n_samples: self.n,
            delta,
            radius: hoeffding_radius(self.n, delta),
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcfEstimate {
    pub grid: ThetaGrid,
    pub values: Vec<CfValue>,
    pub n_samples: usize,
    pub delta: f64,
    /// Same radius at every grid point.
    pub radius: f64,
}

impl EcfEstimate {
    /// Writes `theta_1..theta_d, re, im, radius, n_samples` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.grid.dim).map(|i| format!("theta_{i}")).collect();
        header.extend(["re", "im", "radius", "n_samples"].map(String::from));
        w.write_record(&header)?;
        for (theta, v) in self.grid.points.iter().zip(&self.values) {
            let mut row: Vec<String> = theta.iter().map(|x| x.to_string()).collect();
            row.push(v.re.to_string());
            row.push(v.im.to_string());
            row.push(self.radius.to_string());
            row.push(self.n_samples.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(1/N) ∑ e^{i⟨θ, xᵢ⟩}` on every grid point.
pub fn estimate_ecf(samples: &[Vector], grid: &ThetaGrid, delta: f64) -> Result<EcfEstimate> {
    if samples.is_empty() {
        return Err(Error::invalid("ECF of an empty sample"));
    }
    if let Some(i) = samples.iter().position(|x| x.len() != grid.dim) {
        return Err(Error::invalid(format!(
            "sample {i} has dimension {} but the grid is {}-dimensional",
            samples[i].len(),
            grid.dim
        )));
    }
    let mut acc = EcfAccumulator::new(grid);
    for x in samples {
        acc.push(x);
    }
    acc.finish(delta)
}

/// `max_θ |a(θ) − reference(θ)|`.
pub fn sup_distance(a: &EcfEstimate, reference: &[CfValue]) -> Result<f64> {
    if reference.len() != a.values.len() {
        return Err(Error::invalid(format!(
            "reference has {} values but the grid has {} points",
            reference.len(),
            a.values.len()
        )));
    }
    Ok(a.values
        .iter()
        .zip(reference)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSampleDistance {
    pub distance: f64,
    /// `a.radius + b.radius`.
    pub radius: f64,
}

pub fn two_sample_distance(a: &EcfEstimate, b: &EcfEstimate) -> Result<TwoSampleDistance> {
    if a.grid != b.grid {
        return Err(Error::invalid("ECF estimates are on different grids"));
    }
    Ok(TwoSampleDistance {
        distance: sup_distance(a, &b.values)?,
        radius: a.radius + b.radius,
    })
}
