//! Multilevel ensemble transform particle filter.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filter::{etpf_assimilate, posterior_mean, sorted_order, Ensemble, FilterConfig, TransformMode};
use crate::metrics::{variance_trace_estimate, CostLedger};
use crate::models::{
    draw_initial, propagate_ensemble, propagate_pair, ModelSpec, NoiseKey, ObservationStream, Stream, TimeGrid,
};
use crate::transport::{assignment_coupling_counted, localisation_matrix, squared_distances};
use crate::{Error, Result};

/// Fine and coarse ensembles of one difference estimator, paired by index.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPair {
    pub level: usize,
    pub fine: Ensemble,
    pub coarse: Ensemble,
}

impl LevelPair {
    /// Pair whose fine and coarse members both start at `particles`.
    pub fn new(level: usize, particles: Array2<f64>, time: f64) -> Result<Self> {
        if level == 0 {
            return Err(Error::arg("a level pair needs level >= 1"));
        }
        let fine = Ensemble::new(particles.clone(), level, time)?;
        let coarse = Ensemble::new(particles, level - 1, time)?;
        Ok(Self { level, fine, coarse })
    }

    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    /// Fine-minus-coarse particle differences, one row per pair.
    pub fn differences(&self) -> Array2<f64> {
        &self.fine.particles() - &self.coarse.particles()
    }

    /// Weighted fine mean minus weighted coarse mean.
    pub fn difference_mean(&self) -> Vec<f64> {
        posterior_mean(&self.fine).iter().zip(posterior_mean(&self.coarse)).map(|(f, c)| f - c).collect()
    }
}

/// Gaussian initial distribution with independent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Prior {
    pub fn isotropic(mean: Vec<f64>, std: f64) -> Self {
        let d = mean.len();
        Self { mean, std: vec![std; d] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelConfig {
    pub refinement: usize,
    pub h0: f64,
    /// Finest level `L`.
    pub levels: usize,
    pub n0: usize,
    pub schedule_exponent: f64,
    pub filter: FilterConfig,
}

impl MultilevelConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.h0, self.refinement)
    }

    pub fn schedule(&self) -> Result<Vec<usize>> {
        sample_schedule(self.n0, self.refinement, self.levels, self.schedule_exponent)
    }
}

/// Relative slack absorbing rounding before a ceiling.
const CEIL_SLACK: f64 = 1e-9;

fn robust_ceil(x: f64) -> f64 {
    (x - CEIL_SLACK * x.abs().max(1.0)).ceil()
}

/// Finest level whose bias bound `t_end^alpha d h_L^alpha` reaches `epsilon`.
pub fn level_count(epsilon: f64, alpha: f64, refinement: usize, t_end: f64, d: usize) -> Result<usize> {
    if !(epsilon > 0.0) || !(alpha > 0.0) || refinement < 2 || !(t_end > 0.0) || d == 0 {
        return Err(Error::arg("level count needs epsilon, alpha, t_end > 0, M >= 2 and d >= 1"));
    }
    let l = (t_end.powf(alpha) * d as f64 / epsilon).ln() / (alpha * (refinement as f64).ln());
    Ok(robust_ceil(l).max(0.0) as usize)
}

/// `N_{l+1} = ceil(N_l M^{-exponent})` for `l < L`.
pub fn sample_schedule(n0: usize, refinement: usize, levels: usize, exponent: f64) -> Result<Vec<usize>> {
    if n0 == 0 || refinement == 0 || !exponent.is_finite() {
        return Err(Error::arg("sample schedule needs N_0 >= 1, M >= 1 and a finite exponent"));
    }
    let factor = (refinement as f64).powf(-exponent);
    let mut out = vec![n0];
    for _ in 0..levels {
        let prev = *out.last().unwrap() as f64;
        out.push((robust_ceil(prev * factor) as usize).max(1));
    }
    Ok(out)
}

fn reorder_rows(x: ArrayView2<'_, f64>, sigma: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for (j, &i) in sigma.iter().enumerate() {
        out.row_mut(j).assign(&x.row(i));
    }
    out
}

/// Reorders `coarse` against `fine` so that equal indices realise the
/// optimal fine/coarse coupling; `fine` is left in place.
pub fn multilevel_couple(fine: &mut Ensemble, coarse: &mut Ensemble, cfg: &FilterConfig, ledger: &mut CostLedger) -> Result<()> {
    let n = fine.len();
    let d = fine.dimension();
    if coarse.len() != n || coarse.dimension() != d {
        return Err(Error::arg(format!(
            "fine ensemble is {n}x{d}, coarse is {}x{}",
            coarse.len(),
            coarse.dimension()
        )));
    }
    let xf = fine.particles();
    let xc = coarse.particles();
    let coupled = match cfg.mode {
        TransformMode::Global if d > 1 => {
            let cost = squared_distances(xc, xf);
            ledger.transform_ops += (n * n * d) as u64;
            let sigma = assignment_coupling_counted(cost.view(), &mut ledger.transform_ops)?;
            ledger.transform_ops += (n * d) as u64;
            reorder_rows(xc, &sigma)
        }
        TransformMode::Localised if cfg.r_loc_c > 0.0 => {
            let c = localisation_matrix(d, cfg.r_loc_c)?;
            let mut out = Array2::zeros((n, d));
            for m in 0..d {
                let support: Vec<(usize, f64)> = c.support(m).collect();
                let cost = Array2::from_shape_fn((n, n), |(i, j)| {
                    support.iter().map(|&(k, t)| t * (xc[[i, k]] - xf[[j, k]]).powi(2)).sum::<f64>()
                });
                ledger.transform_ops += (n * n * support.len()) as u64;
                let sigma = assignment_coupling_counted(cost.view(), &mut ledger.transform_ops)?;
                for (j, &i) in sigma.iter().enumerate() {
                    out[[j, m]] = xc[[i, m]];
                }
                ledger.transform_ops += n as u64;
            }
            out
        }
        _ => {
            let mut out = Array2::zeros((n, d));
            for m in 0..d {
                let f: Vec<f64> = xf.column(m).to_vec();
                let c: Vec<f64> = xc.column(m).to_vec();
                let fine_rank = sorted_order(&f, ledger);
                let coarse_rank = sorted_order(&c, ledger);
                for (&j, &i) in fine_rank.iter().zip(&coarse_rank) {
                    out[[j, m]] = c[i];
                }
                ledger.transform_ops += n as u64;
            }
            out
        }
    };
    coarse.replace_particles(coupled);
    Ok(())
}

/// Assimilates `y` into both members of `pair`, then recouples them.
pub fn mletpf_assimilate(pair: &mut LevelPair, y: &[f64], cfg: &FilterConfig, ledger: &mut CostLedger) -> Result<()> {
    etpf_assimilate(&mut pair.fine, y, cfg, ledger)?;
    etpf_assimilate(&mut pair.coarse, y, cfg, ledger)?;
    multilevel_couple(&mut pair.fine, &mut pair.coarse, cfg, ledger)
}

/// Telescoping sum of the level-0 mean and the difference means.
pub fn combine_estimates(level_means: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = level_means.first().ok_or_else(|| Error::arg("no level estimates to combine"))?;
    let mut out = first.clone();
    for term in &level_means[1..] {
        if term.len() != out.len() {
            return Err(Error::arg("level estimates differ in dimension"));
        }
        for (o, t) in out.iter_mut().zip(term) {
            *o += t;
        }
    }
    Ok(out)
}

/// Diagnostics recorded after one assimilation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub estimate: Vec<f64>,
    /// Estimate of the componentwise second moment.
    pub second_moment: Vec<f64>,
    /// Level-0 mean followed by the difference means of levels `1..=L`.
    pub level_means: Vec<Vec<f64>>,
    /// Trace of the sample covariance per level; NaN when `N_l < 2`.
    pub level_variances: Vec<f64>,
    /// Cumulative cost after this step.
    pub cost: CostLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub schedule: Vec<usize>,
    pub steps: Vec<StepRecord>,
    pub ledger: CostLedger,
}

impl FilterRun {
    fn stack(&self, f: impl Fn(&StepRecord) -> &[f64]) -> Array2<f64> {
        let d = self.steps.first().map_or(0, |s| f(s).len());
        let mut out = Array2::zeros((self.steps.len(), d));
        for (k, s) in self.steps.iter().enumerate() {
            out.row_mut(k).assign(&ndarray::ArrayView1::from(f(s)));
        }
        out
    }

    pub fn estimates(&self) -> Array2<f64> {
        self.stack(|s| &s.estimate)
    }

    pub fn second_moments(&self) -> Array2<f64> {
        self.stack(|s| &s.second_moment)
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.time).collect()
    }

    /// Per level, mean over steps of the 1-norm of the level mean.
    pub fn mean_level_abs(&self) -> Vec<f64> {
        self.level_average(|s, l| s.level_means[l].iter().map(|v| v.abs()).sum())
    }

    /// Per level, mean over steps of the variance trace.
    pub fn mean_level_variance(&self) -> Vec<f64> {
        self.level_average(|s, l| s.level_variances[l])
    }

    fn level_average(&self, f: impl Fn(&StepRecord, usize) -> f64) -> Vec<f64> {
        let levels = self.schedule.len();
        let k = self.steps.len() as f64;
        (0..levels).map(|l| self.steps.iter().map(|s| f(s, l)).sum::<f64>() / k).collect()
    }
}

enum Estimator {
    Single(Ensemble),
    Pair(LevelPair),
}

struct Slot {
    estimator: Estimator,
    key: NoiseKey,
    ledger: CostLedger,
}

impl Slot {
    fn advance(&mut self, model: &ModelSpec, grid: &TimeGrid, to: f64, y: &[f64], cfg: &FilterConfig) -> Result<()> {
        match &mut self.estimator {
            Estimator::Single(ens) => {
                propagate_ensemble(ens, model, grid, to, &self.key, &mut self.ledger)?;
                etpf_assimilate(ens, y, cfg, &mut self.ledger)
            }
            Estimator::Pair(pair) => {
                propagate_pair(pair, model, grid, to, &self.key, &mut self.ledger)?;
                mletpf_assimilate(pair, y, cfg, &mut self.ledger)
            }
        }
    }

    fn mean(&self) -> Vec<f64> {
        match &self.estimator {
            Estimator::Single(ens) => posterior_mean(ens),
            Estimator::Pair(pair) => pair.difference_mean(),
        }
    }

    fn second_moment(&self) -> Vec<f64> {
        match &self.estimator {
            Estimator::Single(ens) => ens.second_moment(),
            Estimator::Pair(pair) => {
                pair.fine.second_moment().iter().zip(pair.coarse.second_moment()).map(|(f, c)| f - c).collect()
            }
        }
    }

    fn variance(&self) -> f64 {
        let samples = match &self.estimator {
            Estimator::Single(ens) => ens.particles().to_owned(),
            Estimator::Pair(pair) => pair.differences(),
        };
        variance_trace_estimate(samples.view()).unwrap_or(f64::NAN)
    }
}

fn check_observations(model: &ModelSpec, obs: &ObservationStream, grid: &TimeGrid) -> Result<()> {
    if obs.dimension() != model.dimension() {
        return Err(Error::arg("observation and model dimensions differ"));
    }
    if obs.is_empty() {
        return Err(Error::arg("observation stream is empty"));
    }
    if obs.spacing() < grid.h0 {
        return Err(Error::arg("observation spacing is finer than the base step"));
    }
    grid.steps_in(0, obs.spacing())?;
    Ok(())
}

fn run_slots(
    model: &ModelSpec,
    obs: &ObservationStream,
    grid: &TimeGrid,
    cfg: &FilterConfig,
    schedule: Vec<usize>,
    mut slots: Vec<Slot>,
) -> Result<FilterRun> {
    cfg.validate(model.dimension())?;
    let mut steps = Vec::with_capacity(obs.len());
    for (k, &t) in obs.times.iter().enumerate() {
        let y = obs.values.row(k).to_vec();
        let results: Vec<Result<()>> =
            slots.par_iter_mut().map(|slot| slot.advance(model, grid, t, &y, cfg)).collect();
        results.into_iter().collect::<Result<Vec<()>>>()?;

        let level_means: Vec<Vec<f64>> = slots.iter().map(Slot::mean).collect();
        let moments: Vec<Vec<f64>> = slots.iter().map(Slot::second_moment).collect();
        let mut cost = CostLedger::default();
        for slot in &slots {
            cost.merge(&slot.ledger);
        }
        steps.push(StepRecord {
            time: t,
            estimate: combine_estimates(&level_means)?,
            second_moment: combine_estimates(&moments)?,
            level_variances: slots.iter().map(Slot::variance).collect(),
            level_means,
            cost,
        });
    }
    let ledger = steps.last().map(|s| s.cost).unwrap_or_default();
    Ok(FilterRun { schedule, steps, ledger })
}

/// Runs the multilevel filter over `obs`; estimator `l` draws all of its
/// randomness from its own keyed streams.
pub fn run_mletpf(
    model: &ModelSpec,
    obs: &ObservationStream,
    cfg: &MultilevelConfig,
    prior: &Prior,
    seed: u64,
) -> Result<FilterRun> {
    let grid = cfg.grid()?;
    check_observations(model, obs, &grid)?;
    let schedule = cfg.schedule()?;
    let mut slots = Vec::with_capacity(schedule.len());
    for (l, &n) in schedule.iter().enumerate() {
        let init = NoiseKey::new(seed, Stream::Initial, l as u64);
        let particles = draw_initial(&init, n, &prior.mean, &prior.std)?;
        let estimator = if l == 0 {
            Estimator::Single(Ensemble::new(particles, 0, 0.0)?)
        } else {
            Estimator::Pair(LevelPair::new(l, particles, 0.0)?)
        };
        slots.push(Slot {
            estimator,
            key: NoiseKey::new(seed, Stream::Propagation, l as u64),
            ledger: CostLedger::default(),
        });
    }
    run_slots(model, obs, &grid, &cfg.filter, schedule, slots)
}

/// Runs a single-level filter with `n` particles at `level`, using the
/// same streams as the level-0 estimator of [`run_mletpf`].
#[allow(clippy::too_many_arguments)]
pub fn run_etpf(
    model: &ModelSpec,
    obs: &ObservationStream,
    grid: &TimeGrid,
    level: usize,
    n: usize,
    filter: &FilterConfig,
    prior: &Prior,
    seed: u64,
) -> Result<FilterRun> {
    check_observations(model, obs, grid)?;
    let init = NoiseKey::new(seed, Stream::Initial, 0);
    let particles = draw_initial(&init, n, &prior.mean, &prior.std)?;
    let slot = Slot {
        estimator: Estimator::Single(Ensemble::new(particles, level, 0.0)?),
        key: NoiseKey::new(seed, Stream::Propagation, 0),
        ledger: CostLedger::default(),
    };
    run_slots(model, obs, grid, filter, vec![n], vec![slot])
}
