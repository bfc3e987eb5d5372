//! Twin-experiment data: one reference path and noisy observations of it.

use std::fmt::Write as _;

use ndarray::Array2;

use super::{BrownianIncrements, ModelSpec, NoiseKey, Stream, TimeGrid};
use crate::{Error, Result};

/// Noisy observations `Y_k = X'(t_k) + N(0, R)` at `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    pub times: Vec<f64>,
    /// `N_y x d`.
    pub values: Array2<f64>,
    /// Diagonal of `R`.
    pub noise_variance: Vec<f64>,
    pub seed: u64,
}

impl ObservationStream {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Constant spacing between assimilation times.
    pub fn spacing(&self) -> f64 {
        match self.times.first() {
            Some(&t) => t,
            None => 0.0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.ncols()
    }
}

/// Reference path sampled at the assimilation times.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub initial: Vec<f64>,
    pub times: Vec<f64>,
    /// `N_y x d`.
    pub states: Array2<f64>,
}

impl ReferenceTrajectory {
    /// CSV with one row per assimilation time: `t, x_1..x_d, y_1..y_d`.
    pub fn to_csv(&self, obs: &ObservationStream) -> String {
        let d = self.states.ncols();
        let mut out = String::from("t");
        for k in 1..=d {
            write!(out, ",x_{k}").unwrap();
        }
        for k in 1..=d {
            write!(out, ",y_{k}").unwrap();
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for v in self.states.row(k) {
                write!(out, ",{v}").unwrap();
            }
            for v in obs.values.row(k) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Simulates the reference path on level `ref_level` of `grid` from `x0` and
/// observes it every `dt` up to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_observations(
    model: &ModelSpec,
    noise_variance: &[f64],
    dt: f64,
    t_end: f64,
    grid: &TimeGrid,
    ref_level: usize,
    x0: &[f64],
    seed: u64,
) -> Result<(ObservationStream, ReferenceTrajectory)> {
    let d = model.dimension();
    if noise_variance.len() != d || noise_variance.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::arg("observation variance needs one non-negative entry per component"));
    }
    if x0.len() != d {
        return Err(Error::arg("reference initial state has the wrong dimension"));
    }
    if dt < grid.h0 * (1.0 - 1e-12) {
        return Err(Error::arg(format!("observation spacing {dt} is below the base step {}", grid.h0)));
    }
    let n_obs = (t_end / dt).round() as usize;
    if n_obs == 0 || ((n_obs as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::arg(format!("t_end = {t_end} is not a whole number of spacings {dt}")));
    }

    let h = grid.step(ref_level);
    let steps = grid.steps_in(ref_level, dt)?;
    let path_key = NoiseKey::new(seed, Stream::Reference, 0);
    let obs_key = NoiseKey::new(seed, Stream::Observation, 0);

    let mut x = x0.to_vec();
    let mut scratch = vec![0.0; d];
    let mut states = Array2::zeros((n_obs, d));
    let mut values = Array2::zeros((n_obs, d));
    let mut times = Vec::with_capacity(n_obs);
    let mut z = vec![0.0; d];
    for k in 0..n_obs {
        let from = k as f64 * dt;
        let block = (from / h).round() as u64;
        let inc = BrownianIncrements::draw(&path_key, 0, block, ref_level, h, steps, model.channels());
        for s in 0..steps {
            if !model.advance(&mut x, h, inc.at(s), &mut scratch) {
                return Err(Error::Divergence { level: ref_level, time: from + (s + 1) as f64 * h });
            }
        }
        obs_key.standard_normals(0, k as u64, &mut z);
        for c in 0..d {
            states[[k, c]] = x[c];
            values[[k, c]] = x[c] + noise_variance[c].sqrt() * z[c];
        }
        times.push((k + 1) as f64 * dt);
    }

    Ok((
        ObservationStream { times: times.clone(), values, noise_variance: noise_variance.to_vec(), seed },
        ReferenceTrajectory { initial: x0.to_vec(), times, states },
    ))
}
