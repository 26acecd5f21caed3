//! Explosive processes `(Uₙ, Bₙ, Qₙ)` constructed to satisfy the hypotheses
//! of the stable limit theorem.
//!
//! The first three variants build increments `ΔUₙ = c·P⁻ⁿ·M·Wₙ` with `Wₙ ∼ μ`
//! i.i.d., so that `Bₙ ΔUₙ` equals `Wₙ` (or `S·Wₙ`) pathwise and
//! `Bₙ Uₙ = ∑_{j<n} Pʲ M W_{n−j}` is a finite piece of the limit series.
//! `ExplosiveVar` is a plain `Uₙ = A Uₙ₋₁ + εₙ` recursion for the Lemma
//! demonstrations; its limit is not independent of the path.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::LimitLaw;
use crate::matalg::{spectral_radius, SquareMatrix, Vector};
use crate::rng::{par_map_indexed, StreamKey};

/// Largest matrix norm a cached power may reach.
pub const MAX_POWER_NORM: f64 = 1e300;

const PROB_SUM_TOL: f64 = 1e-12;

/// Finite law on values of type `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteLaw<T> {
    pub values: Vec<T>,
    pub probs: Vec<f64>,
}

impl<T> DiscreteLaw<T> {
    pub fn uniform(values: Vec<T>) -> Self {
        let p = 1.0 / values.len() as f64;
        let probs = vec![p; values.len()];
        Self { values, probs }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.probs.len() {
            return Err(Error::invalid(format!(
                "{what}: need matching non-empty values and probabilities"
            )));
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid(format!("{what}: probabilities must be positive")));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!(
                "{what}: probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Index of one draw, by inversion of a single uniform.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.values.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    /// `Bₙ = Qₙ = Pⁿ`, `ΔUₙ = P⁻ⁿ Wₙ`; η = I and G = Ω.
    SyntheticCanonical { p: SquareMatrix, mu: LimitLaw },
    /// λ drawn once; `Bₙ = λ⁻¹Pⁿ`, `Qₙ = Pⁿ`, `ΔUₙ = λP⁻ⁿWₙ`; η = λI and
    /// G = {λ ∈ event_g}.
    RandomScaled {
        p: SquareMatrix,
        mu: LimitLaw,
        lambda: DiscreteLaw<f64>,
        event_g: Vec<f64>,
    },
    /// S drawn once; `Bₙ = Qₙ = Pⁿ`, `ΔUₙ = P⁻ⁿ S Wₙ`.
    DiscreteS {
        p: SquareMatrix,
        mu: LimitLaw,
        s: DiscreteLaw<SquareMatrix>,
    },
    /// `U₀ = 0`, `Uₙ = A Uₙ₋₁ + εₙ`, `Bₙ = Qₙ = A⁻ⁿ`.
    ExplosiveVar { a: SquareMatrix, noise: LimitLaw },
}

impl ProcessSpec {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ProcessSpec::SyntheticCanonical { .. } => "synthetic_canonical",
            ProcessSpec::RandomScaled { .. } => "random_scaled",
            ProcessSpec::DiscreteS { .. } => "discrete_s",
            ProcessSpec::ExplosiveVar { .. } => "explosive_var",
        }
    }

    pub fn dim(&self) -> usize {
        self.law().dim()
    }

    /// The increment (or noise) law.
    pub fn law(&self) -> &LimitLaw {
        match self {
            ProcessSpec::SyntheticCanonical { mu, .. }
            | ProcessSpec::RandomScaled { mu, .. }
            | ProcessSpec::DiscreteS { mu, .. } => mu,
            ProcessSpec::ExplosiveVar { noise, .. } => noise,
        }
    }

    /// The matrix `P` of condition (iii); `A⁻¹` for the VAR variant.
    pub fn p(&self) -> Result<SquareMatrix> {
        match self {
            ProcessSpec::SyntheticCanonical { p, .. }
            | ProcessSpec::RandomScaled { p, .. }
            | ProcessSpec::DiscreteS { p, .. } => Ok(p.clone()),
            ProcessSpec::ExplosiveVar { a, .. } => a.inverse(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p()?;
        if p.dim() != self.law().dim() {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but the law is {}-dimensional",
                p.dim(),
                p.dim(),
                self.law().dim()
            )));
        }
        let rho = spectral_radius(&p)?;
        if rho >= 1.0 {
            return Err(Error::hypothesis(match self {
                ProcessSpec::ExplosiveVar { .. } => {
                    format!("spectral radius of A⁻¹ is {rho}, not below 1")
                }
                _ => format!("spectral radius of P is {rho}, not below 1"),
            }));
        }
        if !p.is_invertible() {
            return Err(Error::hypothesis("P must be invertible"));
        }
        match self {
            ProcessSpec::RandomScaled {
                lambda, event_g, ..
            } => {
                lambda.validate("lambda")?;
                if lambda.values.iter().any(|l| !(l.is_finite() && *l != 0.0)) {
                    return Err(Error::invalid("lambda atoms must be finite and nonzero"));
                }
                if let Some(g) = event_g.iter().find(|g| !lambda.values.contains(g)) {
                    return Err(Error::invalid(format!(
                        "event_g value {g} is not a lambda atom"
                    )));
                }
                if event_g.is_empty() {
                    return Err(Error::invalid("event_g must have positive probability"));
                }
            }
            ProcessSpec::DiscreteS { s, .. } => {
                s.validate("s")?;
                if s.values.iter().any(|m| m.dim() != p.dim()) {
                    return Err(Error::invalid("S values must match the dimension of P"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Time-0 randomness of a path and the limit-theorem objects it determines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub lambda: Option<f64>,
    pub lambda_index: Option<usize>,
    pub s_index: Option<usize>,
    pub s: Option<SquareMatrix>,
    /// The random matrix η with `Qₙ Bₙ⁻¹ → η`.
    pub eta: SquareMatrix,
    pub in_g: bool,
}

impl Latent {
    /// Index of the latent atom (λ or S), if the variant has one.
    pub fn atom_index(&self) -> Option<usize> {
        self.lambda_index.or(self.s_index)
    }

    pub fn eta_invertible(&self) -> bool {
        self.eta.is_invertible()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPath {
    pub path_id: u64,
    pub n: usize,
    /// `U₀ … Uₙ`.
    pub u: Vec<Vector>,
    /// `B₀ … Bₙ`.
    pub b: Vec<SquareMatrix>,
    /// `Q₀ … Qₙ`.
    pub q: Vec<SquareMatrix>,
    /// `W₁ … Wₙ` (noise `ε` for the VAR variant).
    pub noise: Vec<Vector>,
    pub latent: Latent,
}

impl ProcessPath {
    /// `ΔUₖ`, with `ΔU₀ = 0`.
    pub fn increment(&self, k: usize) -> Vector {
        if k == 0 {
            Vector::zeros(self.u[0].len())
        } else {
            &self.u[k] - &self.u[k - 1]
        }
    }

    /// Writes rows `path_id, n, u_1..u_d, in_G, lambda, s_index`.
    pub fn write_csv<W: Write>(paths: &[ProcessPath], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = paths.first().map_or(0, |p| p.u[0].len());
        let mut header = vec!["path_id".to_string(), "n".to_string()];
        header.extend((1..=d).map(|i| format!("u_{i}")));
        header.extend(["in_G", "lambda", "s_index"].map(String::from));
        w.write_record(&header)?;
        for path in paths {
            for (k, u) in path.u.iter().enumerate() {
                let mut row = vec![path.path_id.to_string(), k.to_string()];
                row.extend(u.iter().map(|x| x.to_string()));
                row.push(path.latent.in_g.to_string());
                row.push(path.latent.lambda.map(|l| l.to_string()).unwrap_or_default());
                row.push(path.latent.s_index.map(|i| i.to_string()).unwrap_or_default());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledCheckpoint {
    pub n: usize,
    pub bu: Vector,
    pub qu: Vector,
}

/// `(n, BₙUₙ, QₙUₙ)` for every requested `n`.
pub fn checkpoint_scaled(path: &ProcessPath, n_list: &[usize]) -> Result<Vec<ScaledCheckpoint>> {
    n_list
        .iter()
        .map(|&n| {
            if n > path.n {
                return Err(Error::invalid(format!(
                    "checkpoint {n} is beyond the path length {}",
                    path.n
                )));
            }
            Ok(ScaledCheckpoint {
                n,
                bu: path.b[n].apply(&path.u[n]),
                qu: path.q[n].apply(&path.u[n]),
            })
        })
        .collect()
}

/// What a verification statistic needs from one path at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub n: usize,
    pub b: SquareMatrix,
    pub q: SquareMatrix,
    pub u: Vector,
    pub bu: Vector,
    pub qu: Vector,
    /// `(r, B_{n−r})` for each requested lag.
    pub lagged_b: Vec<(usize, SquareMatrix)>,
}

/// Reduced view of a path: latent state, the noise prefix used by event
/// families, and checkpoint data.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub path_id: u64,
    pub latent: Latent,
    /// `W₁, W₂` (fewer if the path is shorter).
    pub prefix: Vec<Vector>,
    pub checkpoints: Vec<CheckpointData>,
}

impl PathSample {
    pub fn at(&self, n: usize) -> Option<&CheckpointData> {
        self.checkpoints.iter().find(|c| c.n == n)
    }
}

/// Number of leading noise vectors kept in a [`PathSample`].
pub const PREFIX_LEN: usize = 2;

/// Validated spec with cached matrix powers up to a maximal length.
#[derive(Debug, Clone)]
pub struct ProcessSimulator {
    spec: ProcessSpec,
    max_n: usize,
    /// `Pᵏ` (`A⁻ᵏ` for the VAR variant).
    forward: Vec<SquareMatrix>,
    /// `P⁻ᵏ` (`Aᵏ` for the VAR variant).
    backward: Vec<SquareMatrix>,
    a: Option<SquareMatrix>,
}

impl ProcessSimulator {
    pub fn new(spec: ProcessSpec, max_n: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(Error::invalid("path length must be at least 1"));
        }
        spec.validate()?;
        let p = spec.p()?;
        let p_inv = p.inverse()?;
        let d = p.dim();
        let mut forward = vec![SquareMatrix::identity(d)];
        let mut backward = vec![SquareMatrix::identity(d)];
        for k in 1..=max_n {
            let next = backward[k - 1].mul(&p_inv);
            if !(next.norm() <= MAX_POWER_NORM) {
                return Err(Error::Range {
                    what: format!("‖P^-{k}‖"),
                    max_n: k - 1,
                });
            }
            backward.push(next);
            forward.push(forward[k - 1].mul(&p));
        }
        let a = match &spec {
            ProcessSpec::ExplosiveVar { a, .. } => Some(a.clone()),
            _ => None,
        };
        Ok(Self {
            spec,
            max_n,
            forward,
            backward,
            a,
        })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Latent {
        let d = self.spec.dim();
        match &self.spec {
            ProcessSpec::RandomScaled {
                lambda, event_g, ..
            } => {
                let i = lambda.sample_index(rng);
                let l = lambda.values[i];
                Latent {
                    lambda: Some(l),
                    lambda_index: Some(i),
                    s_index: None,
                    s: None,
                    eta: SquareMatrix::scaled_identity(d, l),
                    in_g: event_g.contains(&l),
                }
            }
            ProcessSpec::DiscreteS { s, .. } => {
                let i = s.sample_index(rng);
                Latent {
                    lambda: None,
                    lambda_index: None,
                    s_index: Some(i),
                    s: Some(s.values[i].clone()),
                    eta: SquareMatrix::identity(d),
                    in_g: true,
                }
            }
            _ => Latent {
                lambda: None,
                lambda_index: None,
                s_index: None,
                s: None,
                eta: SquareMatrix::identity(d),
                in_g: true,
            },
        }
    }

    fn b_at(&self, k: usize, latent: &Latent) -> SquareMatrix {
        match latent.lambda {
            Some(l) => self.forward[k].scale(1.0 / l),
            None => self.forward[k].clone(),
        }
    }

    fn q_at(&self, k: usize) -> SquareMatrix {
        self.forward[k].clone()
    }

    /// `Uₖ` from `Uₖ₋₁` and the `k`-th noise draw.
    fn step(&self, k: usize, prev: &Vector, w: &Vector, latent: &Latent) -> Vector {
        if let Some(a) = &self.a {
            return a.apply(prev) + w;
        }
        let mut inc = match &latent.s {
            Some(s) => s.apply(w),
            None => w.clone(),
        };
        inc = self.backward[k].apply(&inc);
        if let Some(l) = latent.lambda {
            inc *= l;
        }
        prev + inc
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.max_n {
            return Err(Error::invalid(format!(
                "path length {n} must lie in 1..={}",
                self.max_n
            )));
        }
        Ok(())
    }

    /// Full path of length `n`: the latent draw comes first, then `W₁ … Wₙ`.
    pub fn simulate<R: Rng + ?Sized>(&self, path_id: u64, n: usize, rng: &mut R) -> Result<ProcessPath> {
        self.check_len(n)?;
        let latent = self.draw_latent(rng);
        let d = self.spec.dim();
        let mut u = vec![Vector::zeros(d)];
        let mut noise = Vec::with_capacity(n);
        for k in 1..=n {
            let w = self.spec.law().sample(rng);
            let next = self.step(k, &u[k - 1], &w, &latent);
            u.push(next);
            noise.push(w);
        }
        let b = (0..=n).map(|k| self.b_at(k, &latent)).collect();
        let q = (0..=n).map(|k| self.q_at(k)).collect();
        Ok(ProcessPath {
            path_id,
            n,
            u,
            b,
            q,
            noise,
            latent,
        })
    }

    /// Same draws as [`simulate`](Self::simulate) up to the last checkpoint, but
    /// only the checkpoint data is kept.
    pub fn simulate_sample<R: Rng + ?Sized>(
        &self,
        path_id: u64,
        checkpoints: &[usize],
        lags: &[usize],
        rng: &mut R,
    ) -> Result<PathSample> {
        let n = checkpoints.iter().copied().max().ok_or_else(|| {
            Error::invalid("need at least one checkpoint")
        })?;
        self.check_len(n)?;
        for &c in checkpoints {
            for &r in lags {
                if r > c {
                    return Err(Error::invalid(format!(
                        "lag {r} reaches before time 0 at checkpoint {c}"
                    )));
                }
            }
        }
        let latent = self.draw_latent(rng);
        let mut u = Vector::zeros(self.spec.dim());
        let mut prefix = Vec::with_capacity(PREFIX_LEN);
        let mut u_at = vec![None; n + 1];
        for k in 1..=n {
            let w = self.spec.law().sample(rng);
            u = self.step(k, &u, &w, &latent);
            if prefix.len() < PREFIX_LEN {
                prefix.push(w);
            }
            if checkpoints.contains(&k) {
                u_at[k] = Some(u.clone());
            }
        }
        let checkpoints = checkpoints
            .iter()
            .map(|&c| {
                let u = u_at[c].clone().unwrap_or_else(|| Vector::zeros(self.spec.dim()));
                let b = self.b_at(c, &latent);
                let q = self.q_at(c);
                CheckpointData {
                    n: c,
                    bu: b.apply(&u),
                    qu: q.apply(&u),
                    lagged_b: lags.iter().map(|&r| (r, self.b_at(c - r, &latent))).collect(),
                    b,
                    q,
                    u,
                }
            })
            .collect();
        Ok(PathSample {
            path_id,
            latent,
            prefix,
            checkpoints,
        })
    }
}

/// `simulate_path` for a single path.
pub fn simulate_path<R: Rng + ?Sized>(spec: &ProcessSpec, n: usize, rng: &mut R) -> Result<ProcessPath> {
    ProcessSimulator::new(spec.clone(), n)?.simulate(0, n, rng)
}

/// Monte Carlo batch of reduced paths; path `i` uses stream `i` of `key`.
pub fn simulate_samples(
    sim: &ProcessSimulator,
    n_paths: usize,
    checkpoints: &[usize],
    lags: &[usize],
    key: StreamKey,
    workers: usize,
) -> Result<Vec<PathSample>> {
    par_map_indexed(n_paths, workers, |i| {
        sim.simulate_sample(i, checkpoints, lags, &mut key.stream(i))
    })?
    .into_iter()
    .collect()
}
