//! The experiment drivers behind each CLI verb.

use std::path::Path;

use mletpf::metrics::{cumulative_rmse_series, time_averaged_rmse, CostLedger, RunSummary};
use mletpf::models::{synthesize_observations, ModelSpec, ObservationStream, ReferenceTrajectory, TimeGrid};
use mletpf::multilevel::{run_etpf, run_mletpf, FilterRun};
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;

use crate::output::{num, read_matrix, series_table, Table};
use crate::{CliError, ExperimentConfig};

/// Model, grid and synthetic twin data of one experiment.
pub struct Setup {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub obs: ObservationStream,
    pub reference: ReferenceTrajectory,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let model = cfg.model.build()?;
    let grid = TimeGrid::new(cfg.multilevel.h0, cfg.multilevel.refinement)?;
    let o = &cfg.observations;
    let (obs, reference) = synthesize_observations(
        &model,
        &vec![o.variance; cfg.dimension()],
        o.spacing,
        o.t_end,
        &grid,
        o.reference_level,
        &o.initial,
        o.seed,
    )?;
    Ok(Setup { model, grid, obs, reference })
}

pub fn summarise(run: &FilterRun, truth: &Array2<f64>, cfg: &ExperimentConfig, seed: u64) -> Result<RunSummary, CliError> {
    Ok(RunSummary {
        rmse: time_averaged_rmse(run.estimates().view(), truth.view())?,
        level_mean_abs: run.mean_level_abs(),
        level_mean_variance: run.mean_level_variance(),
        cost: run.ledger,
        total_cost: run.ledger.total(),
        config: json!({ "hash": cfg.hash(), "seed": seed, "experiment": cfg }),
    })
}

pub fn multilevel_run(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> Result<FilterRun, CliError> {
    let (levels, n0) = cfg.levels_and_samples()?;
    Ok(run_mletpf(&setup.model, &setup.obs, &cfg.multilevel_config(levels, n0), &cfg.prior(), seed)?)
}

/// Single-level filter on the finest level with `N_0` particles.
pub fn single_level_run(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> Result<FilterRun, CliError> {
    let (levels, n0) = cfg.levels_and_samples()?;
    Ok(run_etpf(&setup.model, &setup.obs, &setup.grid, levels, n0, &cfg.filter_config(), &cfg.prior(), seed)?)
}

pub struct VarianceDecay {
    pub run: FilterRun,
    pub summary: RunSummary,
    pub table: Table,
}

/// Per level: mean over all assimilation steps of `Tr(V_l)` and of the
/// 1-norm of the level mean.
pub fn variance_decay(cfg: &ExperimentConfig, seed: u64) -> Result<VarianceDecay, CliError> {
    let setup = setup(cfg)?;
    let run = multilevel_run(cfg, &setup, seed)?;
    let mut table = Table::new(["level", "samples", "step", "mean_variance_trace", "mean_abs_difference"]);
    for (l, ((&n, v), a)) in
        run.schedule.iter().zip(run.mean_level_variance()).zip(run.mean_level_abs()).enumerate()
    {
        table.push(vec![l.to_string(), n.to_string(), num(setup.grid.step(l)), num(v), num(a)]);
    }
    let summary = summarise(&run, &setup.reference.states, cfg, seed)?;
    Ok(VarianceDecay { run, summary, table })
}

/// One accuracy target of the cost sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPoint {
    pub epsilon: f64,
    pub levels: usize,
    pub samples: usize,
    pub rmse_mletpf: f64,
    pub cost_mletpf: CostLedger,
    pub rmse_etpf: f64,
    pub cost_etpf: CostLedger,
}

pub fn cost_table(points: &[CostPoint]) -> Table {
    let mut columns: Vec<String> =
        ["epsilon", "levels", "samples", "rmse_mletpf", "cost_mletpf", "rmse_etpf", "cost_etpf"].map(String::from).into();
    for filter in ["mletpf", "etpf"] {
        for part in ["model_ops", "transform_ops", "sort_ops", "likelihood_ops"] {
            columns.push(format!("{part}_{filter}"));
        }
    }
    let mut table = Table::new(columns);
    for p in points {
        let mut row = vec![
            num(p.epsilon),
            p.levels.to_string(),
            p.samples.to_string(),
            num(p.rmse_mletpf),
            p.cost_mletpf.total().to_string(),
            num(p.rmse_etpf),
            p.cost_etpf.total().to_string(),
        ];
        for c in [&p.cost_mletpf, &p.cost_etpf] {
            row.extend([c.model_ops, c.transform_ops, c.sort_ops, c.likelihood_ops].map(|v| v.to_string()));
        }
        table.push(row);
    }
    table
}

/// Posterior-mean proxy from the `[truth]` run, read from `cache_dir` when
/// an earlier run left it there.
pub fn truth_proxy(cfg: &ExperimentConfig, setup: &Setup, cache_dir: Option<&Path>) -> Result<Array2<f64>, CliError> {
    let truth = cfg
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Config(vec![crate::config::FieldError { field: "truth".into(), reason: "required by the cost sweep".into() }]))?;
    let key = cfg.truth_key().expect("truth present");
    let path = cache_dir.map(|d| d.join(format!("truth-{key}.csv")));
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        let m = read_matrix(&std::fs::read_to_string(p)?)?;
        if m.nrows() == setup.obs.len() && m.ncols() == cfg.dimension() + 1 {
            return Ok(m.slice(ndarray::s![.., 1..]).to_owned());
        }
    }
    let run = run_etpf(
        &setup.model,
        &setup.obs,
        &setup.grid,
        truth.level,
        truth.samples,
        &cfg.filter_config(),
        &cfg.prior(),
        truth.seed,
    )?;
    let est = run.estimates();
    if let (Some(p), Some(dir)) = (path, cache_dir) {
        std::fs::create_dir_all(dir)?;
        std::fs::write(p, series_table(&run.times(), &est, "x").to_csv(&key, truth.seed))?;
    }
    Ok(est)
}

/// Both filters at every `epsilon` of the config, scored against the truth proxy.
pub fn cost_vs_accuracy(cfg: &ExperimentConfig, seed: u64, cache_dir: Option<&Path>) -> Result<Vec<CostPoint>, CliError> {
    if cfg.epsilons.is_empty() {
        return Err(CliError::Config(vec![crate::config::FieldError {
            field: "epsilons".into(),
            reason: "the cost sweep needs at least one target".into(),
        }]));
    }
    let setup = setup(cfg)?;
    let truth = truth_proxy(cfg, &setup, cache_dir)?;
    let filter = cfg.filter_config();
    let prior = cfg.prior();
    cfg.epsilons
        .par_iter()
        .map(|&epsilon| {
            let (levels, samples) = cfg.accuracy_targets(epsilon)?;
            let ml = run_mletpf(&setup.model, &setup.obs, &cfg.multilevel_config(levels, samples), &prior, seed)?;
            let sl = run_etpf(&setup.model, &setup.obs, &setup.grid, levels, samples, &filter, &prior, seed)?;
            Ok(CostPoint {
                epsilon,
                levels,
                samples,
                rmse_mletpf: time_averaged_rmse(ml.estimates().view(), truth.view())?,
                cost_mletpf: ml.ledger,
                rmse_etpf: time_averaged_rmse(sl.estimates().view(), truth.view())?,
                cost_etpf: sl.ledger,
            })
        })
        .collect()
}

pub struct Stability {
    pub observation_rmse: Vec<f64>,
    pub estimator_rmse: Vec<f64>,
    pub observation_moment_rmse: Vec<f64>,
    pub estimator_moment_rmse: Vec<f64>,
    pub summary: RunSummary,
    pub table: Table,
}

impl Stability {
    /// Share of the final `tail` fraction of steps where the estimator's
    /// cumulative error is below the observations'.
    pub fn fraction_below(&self, tail: f64) -> f64 {
        let n = self.estimator_rmse.len();
        let start = ((1.0 - tail) * n as f64).floor() as usize;
        let below = (start..n).filter(|&k| self.estimator_rmse[k] < self.observation_rmse[k]).count();
        below as f64 / (n - start).max(1) as f64
    }
}

/// Cumulative errors of observations and multilevel estimates against the
/// reference path, for states and for second moments.
pub fn stability(cfg: &ExperimentConfig, seed: u64) -> Result<Stability, CliError> {
    let setup = setup(cfg)?;
    let run = multilevel_run(cfg, &setup, seed)?;
    let reference = &setup.reference.states;
    let squared = |a: &Array2<f64>| a.mapv(|v| v * v);
    let observation_rmse = cumulative_rmse_series(setup.obs.values.view(), reference.view())?;
    let estimator_rmse = cumulative_rmse_series(run.estimates().view(), reference.view())?;
    let ref2 = squared(reference);
    let observation_moment_rmse = cumulative_rmse_series(squared(&setup.obs.values).view(), ref2.view())?;
    let estimator_moment_rmse = cumulative_rmse_series(run.second_moments().view(), ref2.view())?;

    let mut table = Table::new([
        "k",
        "t",
        "observation_rmse",
        "estimator_rmse",
        "observation_second_moment_rmse",
        "estimator_second_moment_rmse",
    ]);
    for (k, t) in setup.obs.times.iter().enumerate() {
        table.push(vec![
            (k + 1).to_string(),
            num(*t),
            num(observation_rmse[k]),
            num(estimator_rmse[k]),
            num(observation_moment_rmse[k]),
            num(estimator_moment_rmse[k]),
        ]);
    }
    let summary = summarise(&run, reference, cfg, seed)?;
    Ok(Stability { observation_rmse, estimator_rmse, observation_moment_rmse, estimator_moment_rmse, summary, table })
}

pub struct FilterOutput {
    pub estimates: Table,
    pub reference: String,
    pub summary: RunSummary,
}

fn filter_output(cfg: &ExperimentConfig, setup: &Setup, run: &FilterRun, seed: u64) -> Result<FilterOutput, CliError> {
    Ok(FilterOutput {
        estimates: series_table(&run.times(), &run.estimates(), "x"),
        reference: setup.reference.to_csv(&setup.obs),
        summary: summarise(run, &setup.reference.states, cfg, seed)?,
    })
}

pub fn run_multilevel(cfg: &ExperimentConfig, seed: u64) -> Result<FilterOutput, CliError> {
    let setup = setup(cfg)?;
    let run = multilevel_run(cfg, &setup, seed)?;
    filter_output(cfg, &setup, &run, seed)
}

pub fn run_single_level(cfg: &ExperimentConfig, seed: u64) -> Result<FilterOutput, CliError> {
    let setup = setup(cfg)?;
    let run = single_level_run(cfg, &setup, seed)?;
    filter_output(cfg, &setup, &run, seed)
}
