//! Experiment execution.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use stablim::ecf::{estimate_ecf, sup_distance, two_sample_distance, CompensatedSum, EcfEstimate};
use stablim::laws::{cf_increment, series_cf_product, LimitLaw};
use stablim::matalg::{power_sequence, SquareMatrix, Vector};
use stablim::processes::{simulate_samples, ProcessPath, ProcessSimulator, ProcessSpec};
use stablim::rng::{domain, par_map_indexed, StreamKey};
use stablim::series::{lemma_diagnostics, truncation_index, IncrementLaw, LemmaOptions, LimitSeries, TruncationPlan};
use stablim::verify::{
    check_condition_i, check_condition_ii, check_condition_iii, mixing_statistic, non_mixing_gap, stable_statistic,
    ConditionalReference, ConvergenceVerdict, EventFamily, Scaled, StatisticValue,
};

use crate::config::{Experiment, ExperimentConfig, MixingExpectation, Truncation};
use crate::error::{CliError, CliResult};
use crate::report::{write_atomically, Rule, RunReport, StreamUse, Verdict, REPORT_SCHEMA};

/// Everything a run produces before it is written out.
struct Outcome {
    verdicts: Vec<Verdict>,
    statistics: BTreeMap<String, f64>,
    streams: Vec<StreamUse>,
    artifacts: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            verdicts: Vec::new(),
            statistics: BTreeMap::new(),
            streams: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn stat(&mut self, name: impl Into<String>, value: f64) {
        self.statistics.insert(name.into(), value);
    }

    fn verdict(&mut self, v: Verdict) {
        self.stat(v.name.clone(), v.statistic);
        self.stat(format!("{}.threshold", v.name), v.threshold);
        self.verdicts.push(v);
    }

    fn statistic_value(&mut self, prefix: &str, s: &StatisticValue) {
        self.stat(format!("{prefix}.radius"), s.radius);
        self.stat(format!("{prefix}.n_used"), s.n_used as f64);
        self.stat(format!("{prefix}.argmax_theta"), s.argmax_theta as f64);
    }

    fn convergence(&mut self, v: &ConvergenceVerdict) {
        for ((label, &s), &t) in v.labels.iter().zip(&v.statistics).zip(&v.thresholds) {
            self.verdict(Verdict::at_most(format!("{}/{label}", v.condition), s, t));
        }
        self.stat(format!("{}.n_used", v.condition), v.n_used as f64);
    }

    fn uses(&mut self, purpose: &str, key: StreamKey, count: usize) {
        self.streams.push(StreamUse {
            purpose: purpose.into(),
            seed: key.seed,
            domain: key.domain,
            first: 0,
            count: count as u64,
        });
    }
}

/// Runs the experiment, writes `report.json` and CSV artifacts into `out`
/// when given, and returns the report.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> CliResult<RunReport> {
    config.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let start = Instant::now();
    let outcome = execute(config, out)?;
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: config.kind(),
        config: config.clone(),
        pass: outcome.verdicts.iter().all(|v| v.pass),
        verdicts: outcome.verdicts,
        statistics: outcome.statistics,
        streams: outcome.streams,
        artifacts: outcome.artifacts,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

fn execute(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<Outcome> {
    let mut o = Outcome::new();
    match &cfg.experiment {
        Experiment::SampleLaw { law } => sample_law(cfg, law, out, &mut o)?,
        Experiment::Series {
            p,
            law,
            truncation,
            compare_direct,
            cov_tolerance,
        } => series(cfg, p, law, *truncation, *compare_direct, *cov_tolerance, out, &mut o)?,
        Experiment::Lemma {
            p,
            law,
            horizon,
            last_term_tolerance,
        } => lemma(cfg, p, law, *horizon, *last_term_tolerance, out, &mut o)?,
        Experiment::Simulate { process, n, csv_paths } => simulate(cfg, process, *n, *csv_paths, out, &mut o)?,
        Experiment::VerifyMixing {
            process,
            n,
            r,
            scaled,
            events,
            expect,
            min_gap,
        } => {
            let r = r.unwrap_or(n - 1);
            let family = family_for(process, events.as_ref());
            let grid = cfg.grid.build(process.dim())?;
            let paths = process_samples(cfg, process, &[*n], &[], &mut o)?;
            let reference = match process {
                ProcessSpec::SyntheticCanonical { .. } | ProcessSpec::ExplosiveVar { .. } => {
                    ConditionalReference::from_spec(process, r, &grid, Scaled::Bu)?
                }
                _ => ConditionalReference::unconditional(process.law(), &process.p()?, r, &grid),
            };
            let limit = reference.constant().expect("unconditional reference");
            let t = mixing_statistic(&paths, *n, *scaled, &family, &grid, limit, cfg.delta)?;
            o.statistic_value("mixing_statistic", &t);
            o.stat("r", r as f64);
            match expect {
                MixingExpectation::Mixing => {
                    o.verdict(Verdict::at_most("mixing_statistic", t.value, t.threshold()));
                }
                MixingExpectation::NonMixing => {
                    let gap = non_mixing_gap(process, r, &family, &grid)?;
                    o.stat("closed_form_gap.theta_index", gap.theta_index as f64);
                    o.verdict(Verdict::new("closed_form_gap", gap.gap, Rule::AtLeast, *min_gap));
                    o.verdict(Verdict::new(
                        "mixing_statistic",
                        t.value,
                        Rule::AtLeast,
                        gap.gap - t.threshold(),
                    ));
                }
            }
        }
        Experiment::VerifyStable {
            process,
            n,
            r,
            scaled,
            events,
        } => {
            let r = r.unwrap_or(n - 1);
            let family = family_for(process, events.as_ref());
            let grid = cfg.grid.build(process.dim())?;
            let paths = process_samples(cfg, process, &[*n], &[], &mut o)?;
            let reference = ConditionalReference::from_spec(process, r, &grid, *scaled)?;
            let s = stable_statistic(&paths, *n, *scaled, &family, &grid, &reference, cfg.delta)?;
            o.statistic_value("stable_statistic", &s);
            o.stat("r", r as f64);
            o.verdict(Verdict::at_most("stable_statistic", s.value, s.threshold()));
        }
        Experiment::Conditions {
            process,
            checkpoints,
            lags,
            tolerance,
            k_grid,
            tightness_bound,
        } => {
            let paths = process_samples(cfg, process, checkpoints, lags, &mut o)?;
            o.convergence(&check_condition_i(&paths, checkpoints, *tolerance)?);
            o.convergence(&check_condition_ii(&paths, checkpoints, k_grid, *tightness_bound)?);
            o.convergence(&check_condition_iii(&paths, &process.p()?, lags, checkpoints, *tolerance)?);
        }
    }
    Ok(o)
}

fn draws<F>(cfg: &ExperimentConfig, key: StreamKey, f: F) -> CliResult<Vec<Vector>>
where
    F: Fn(&mut stablim::rng::StreamRng) -> Vector + Sync + Send,
{
    Ok(par_map_indexed(cfg.n_paths, cfg.workers, |i| f(&mut key.stream(i)))?)
}

fn write_ecf(out: Option<&Path>, name: &str, est: &EcfEstimate, o: &mut Outcome) -> CliResult<()> {
    if let Some(dir) = out {
        write_atomically(&dir.join(name), |w| Ok(est.write_csv(w)?))?;
        o.artifacts.push(name.into());
    }
    Ok(())
}

fn ecf_verdict(
    name: &str,
    est: &EcfEstimate,
    reference: &[stablim::laws::CfValue],
    o: &mut Outcome,
) -> CliResult<()> {
    let d = sup_distance(est, reference)?;
    o.stat(format!("{name}.radius"), est.radius);
    o.verdict(Verdict::at_most(name, d, 3.0 * est.radius));
    Ok(())
}

fn sample_law(cfg: &ExperimentConfig, law: &LimitLaw, out: Option<&Path>, o: &mut Outcome) -> CliResult<()> {
    let grid = cfg.grid.build(law.dim())?;
    let key = StreamKey::new(cfg.seed, domain::LAW_DRAWS);
    let xs = draws(cfg, key, |rng| law.sample(rng))?;
    o.uses("law draws", key, cfg.n_paths);
    let est = estimate_ecf(&xs, &grid, cfg.delta)?;
    ecf_verdict("ecf_vs_cf", &est, &grid.evaluate(|t| cf_increment(law, t)), o)?;
    write_ecf(out, "ecf.csv", &est, o)
}

#[allow(clippy::too_many_arguments)]
fn series(
    cfg: &ExperimentConfig,
    p: &SquareMatrix,
    law: &LimitLaw,
    truncation: Truncation,
    compare_direct: bool,
    cov_tolerance: f64,
    out: Option<&Path>,
    o: &mut Outcome,
) -> CliResult<()> {
    let plan = match truncation {
        Truncation::Terms(r) => TruncationPlan::fixed(p, r)?,
        Truncation::Tolerance(tol) => truncation_index(p, tol)?,
    };
    o.stat("r", plan.r as f64);
    o.stat("tail_norm_bound", plan.tail_norm_bound);
    o.stat("gelfand.k0", plan.certificate.k0 as f64);
    o.stat("gelfand.rate", plan.certificate.rate);
    let grid = cfg.grid.build(p.dim())?;
    let series = LimitSeries::new(p, law.clone(), &plan)?;
    let key = StreamKey::new(cfg.seed, domain::SERIES_DRAWS);
    let xs = draws(cfg, key, |rng| series.sample(rng))?;
    o.uses("series draws", key, cfg.n_paths);
    let est = estimate_ecf(&xs, &grid, cfg.delta)?;
    let exact = grid.evaluate(|t| series_cf_product(law, series.powers(), None, t));
    ecf_verdict("ecf_vs_truncated_cf", &est, &exact, o)?;
    write_ecf(out, "ecf.csv", &est, o)?;

    if let LimitLaw::Normal(normal) = law {
        let target = series
            .powers()
            .iter()
            .fold(SquareMatrix::zeros(p.dim()), |acc, pj| acc.add(&pj.mul(normal.cov()).mul(&pj.transpose())));
        let cov = second_moment(&xs);
        let err = cov.sub(&target).frobenius_norm() / target.frobenius_norm();
        o.verdict(Verdict::at_most("covariance_relative_error", err, cov_tolerance));
    }

    if compare_direct {
        let key = StreamKey::new(cfg.seed, domain::REFERENCE_DRAWS);
        let direct = draws(cfg, key, |rng| law.sample(rng))?;
        o.uses("direct increment draws", key, cfg.n_paths);
        let direct = estimate_ecf(&direct, &grid, cfg.delta)?;
        let two = two_sample_distance(&est, &direct)?;
        o.verdict(Verdict::at_most("two_sample_vs_direct", two.distance, two.radius));
    }
    Ok(())
}

/// `(1/N) ∑ xxᵀ` with compensated sums in index order.
fn second_moment(xs: &[Vector]) -> SquareMatrix {
    let d = xs.first().map_or(0, Vector::len);
    let mut sums = vec![CompensatedSum::default(); d * d];
    for x in xs {
        for i in 0..d {
            for j in 0..d {
                sums[i * d + j].add(x[i] * x[j]);
            }
        }
    }
    let n = xs.len() as f64;
    let entries: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();
    SquareMatrix::from_row_slice(d, &entries).expect("square moment matrix")
}

#[allow(clippy::too_many_arguments)]
fn lemma(
    cfg: &ExperimentConfig,
    p: &SquareMatrix,
    law: &IncrementLaw,
    horizon: usize,
    last_term_tolerance: f64,
    out: Option<&Path>,
    o: &mut Outcome,
) -> CliResult<()> {
    let key = StreamKey::new(cfg.seed, domain::LEMMA_PATHS);
    let options = LemmaOptions {
        horizon,
        n_paths: cfg.n_paths,
        keep_partial_sums: false,
        workers: cfg.workers,
    };
    let run = lemma_diagnostics(p, law, options, key)?;
    o.uses("lemma paths", key, cfg.n_paths);
    let agg = &run.aggregate;
    o.stat("late_exceedance_fraction", agg.late_exceedance_fraction);
    o.stat("mean_exceedance_count", agg.mean_exceedance_count);
    o.stat("mean_log_moment", agg.mean_log_moment);
    o.stat("max_last_term_norm", agg.max_last_term_norm);
    let freq = agg.exceedance_frequency[horizon];
    o.stat("exceedance_frequency_at_horizon", freq);

    let closed_form = match law {
        IncrementLaw::Law(_) => {
            o.verdict(Verdict::new(
                "max_last_term_norm",
                agg.max_last_term_norm,
                Rule::AtMost,
                last_term_tolerance,
            ));
            None
        }
        IncrementLaw::LogCauchyRay(_) => {
            let curve = log_cauchy_frequencies(p, horizon);
            let f = curve[horizon];
            let radius = 3.0 * (f * (1.0 - f) / cfg.n_paths as f64).sqrt();
            o.stat("closed_form_frequency_at_horizon", f);
            o.verdict(Verdict::at_most("exceedance_frequency_error", (freq - f).abs(), radius));
            o.verdict(Verdict::new("exceedance_frequency_at_horizon", freq, Rule::Above, 0.0));
            Some(curve)
        }
    };

    if let Some(dir) = out {
        write_atomically(&dir.join("lemma.csv"), |w| Ok(run.write_csv(w)?))?;
        o.artifacts.push("lemma.csv".into());
        write_atomically(&dir.join("lemma_frequency.csv"), |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["j", "frequency"];
            if closed_form.is_some() {
                header.push("closed_form");
            }
            csv.write_record(&header).map_err(stablim::Error::from)?;
            for (j, f) in agg.exceedance_frequency.iter().enumerate() {
                let mut row = vec![j.to_string(), f.to_string()];
                if let Some(c) = &closed_form {
                    row.push(c[j].to_string());
                }
                csv.write_record(&row).map_err(stablim::Error::from)?;
            }
            csv.flush().map_err(stablim::Error::from)?;
            Ok(())
        })?;
        o.artifacts.push("lemma_frequency.csv".into());
    }
    Ok(())
}

/// `P(‖Pʲ e^C e₁‖ > 1) = ½ − arctan(−log‖Pʲe₁‖)/π` for standard Cauchy `C`.
pub fn log_cauchy_frequencies(p: &SquareMatrix, horizon: usize) -> Vec<f64> {
    let mut e1 = Vector::zeros(p.dim());
    e1[0] = 1.0;
    power_sequence(p, horizon)
        .iter()
        .map(|pj| 0.5 - (-pj.apply(&e1).norm().ln()).atan() / std::f64::consts::PI)
        .collect()
}

fn simulate(
    cfg: &ExperimentConfig,
    process: &ProcessSpec,
    n: usize,
    csv_paths: usize,
    out: Option<&Path>,
    o: &mut Outcome,
) -> CliResult<()> {
    let paths = process_samples(cfg, process, &[n], &[], o)?;
    let finite = paths
        .iter()
        .filter(|p| p.checkpoints[0].bu.iter().chain(p.checkpoints[0].qu.iter()).all(|x| x.is_finite()))
        .count();
    let in_g = paths.iter().filter(|p| p.latent.in_g).count();
    let mut norm = CompensatedSum::default();
    for p in &paths {
        norm.add(p.checkpoints[0].bu.norm());
    }
    let total = paths.len() as f64;
    o.stat("fraction_in_g", in_g as f64 / total);
    o.stat("mean_norm_bu", norm.value() / total);
    o.verdict(Verdict::new("finite_fraction", finite as f64 / total, Rule::AtLeast, 1.0));

    if let Some(dir) = out {
        let sim = ProcessSimulator::new(process.clone(), n)?;
        let key = StreamKey::new(cfg.seed, domain::PROCESS_PATHS);
        let shown = csv_paths.min(cfg.n_paths);
        let full: Vec<ProcessPath> = par_map_indexed(shown, cfg.workers, |i| sim.simulate(i, n, &mut key.stream(i)))?
            .into_iter()
            .collect::<stablim::Result<_>>()?;
        write_atomically(&dir.join("paths.csv"), |w| Ok(ProcessPath::write_csv(&full, w)?))?;
        o.artifacts.push("paths.csv".into());
    }
    Ok(())
}

fn process_samples(
    cfg: &ExperimentConfig,
    process: &ProcessSpec,
    checkpoints: &[usize],
    lags: &[usize],
    o: &mut Outcome,
) -> CliResult<Vec<stablim::processes::PathSample>> {
    let max_n = checkpoints.iter().copied().max().unwrap_or(0);
    let sim = ProcessSimulator::new(process.clone(), max_n)?;
    let key = StreamKey::new(cfg.seed, domain::PROCESS_PATHS);
    let paths = simulate_samples(&sim, cfg.n_paths, checkpoints, lags, key, cfg.workers)?;
    o.uses("process paths", key, cfg.n_paths);
    Ok(paths)
}

fn family_for(process: &ProcessSpec, events: Option<&EventFamily>) -> EventFamily {
    events.cloned().unwrap_or_else(|| {
        EventFamily::default_for(matches!(
            process,
            ProcessSpec::RandomScaled { .. } | ProcessSpec::DiscreteS { .. }
        ))
    })
}

/// Re-executes the configuration stored in a report, optionally with a
/// different worker count or seed, and checks every statistic bit for bit.
pub fn replay(stored: &RunReport, workers: Option<usize>, seed: Option<u64>, out: Option<&Path>) -> CliResult<RunReport> {
    let mut config = stored.config.clone();
    if let Some(w) = workers {
        config.workers = w;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let fresh = run(&config, out)?;
    stored.compare_statistics(&fresh)?;
    Ok(fresh)
}
