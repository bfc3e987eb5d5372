use ndarray::Array2;
use rayon::prelude::*;

use super::{BrownianIncrements, ModelSpec, NoiseKey, TimeGrid};
use crate::filter::Ensemble;
use crate::metrics::CostLedger;
use crate::multilevel::LevelPair;
use crate::{Error, Result};

/// `n` particles drawn from `N(mean, diag(std^2))`.
pub fn draw_initial(key: &NoiseKey, n: usize, mean: &[f64], std: &[f64]) -> Result<Array2<f64>> {
    if mean.len() != std.len() || std.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::arg("initial distribution needs one non-negative std per component"));
    }
    let d = mean.len();
    let mut particles = Array2::zeros((n, d));
    let mut z = vec![0.0; d];
    for (i, mut row) in particles.rows_mut().into_iter().enumerate() {
        key.standard_normals(i as u64, 0, &mut z);
        for k in 0..d {
            row[k] = mean[k] + std[k] * z[k];
        }
    }
    Ok(particles)
}

/// Lowest-index error among per-particle results.
fn first_error(results: Vec<Option<Error>>) -> Result<()> {
    match results.into_iter().flatten().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn interval(grid: &TimeGrid, level: usize, from: f64, to: f64) -> Result<(f64, usize, u64)> {
    let h = grid.step(level);
    let steps = grid.steps_in(level, to - from)?;
    let block = (from / h).round() as u64;
    Ok((h, steps, block))
}

/// Advances every particle of `ens` from `ens.time` to `to`.
pub fn propagate_ensemble(
    ens: &mut Ensemble,
    model: &ModelSpec,
    grid: &TimeGrid,
    to: f64,
    key: &NoiseKey,
    ledger: &mut CostLedger,
) -> Result<()> {
    let d = model.dimension();
    if ens.dimension() != d {
        return Err(Error::arg("ensemble and model dimensions differ"));
    }
    let level = ens.level;
    let from = ens.time;
    let (h, steps, block) = interval(grid, level, from, to)?;
    let channels = model.channels();

    let particles = ens.particles_mut_slice();
    let results: Vec<Option<Error>> = particles
        .par_chunks_mut(d)
        .enumerate()
        .map(|(i, x)| {
            let inc = BrownianIncrements::draw(key, i as u64, block, level, h, steps, channels);
            let mut scratch = vec![0.0; d];
            for s in 0..steps {
                if !model.advance(x, h, inc.at(s), &mut scratch) {
                    return Some(Error::Divergence { level, time: from + (s + 1) as f64 * h });
                }
            }
            None
        })
        .collect();
    first_error(results)?;
    ledger.model_ops += (ens.len() * steps * d) as u64;
    ens.time = to;
    Ok(())
}

/// Advances a fine/coarse pair from its current time to `to`, driving each
/// coarse particle with the summed increments of its fine partner.
pub fn propagate_pair(
    pair: &mut LevelPair,
    model: &ModelSpec,
    grid: &TimeGrid,
    to: f64,
    key: &NoiseKey,
    ledger: &mut CostLedger,
) -> Result<()> {
    let d = model.dimension();
    let level = pair.level;
    if level == 0 {
        return Err(Error::arg("level 0 has no coarse partner"));
    }
    if pair.fine.dimension() != d || pair.coarse.dimension() != d || pair.fine.len() != pair.coarse.len() {
        return Err(Error::arg("pair ensembles do not match each other or the model"));
    }
    let from = pair.fine.time;
    let (h, steps, block) = interval(grid, level, from, to)?;
    let factor = grid.refinement;
    let coarse_steps = grid.steps_in(level - 1, to - from)?;
    let h_coarse = grid.step(level - 1);
    let channels = model.channels();

    let fine = pair.fine.particles_mut_slice();
    let coarse = pair.coarse.particles_mut_slice();
    let results: Vec<Option<Error>> = fine
        .par_chunks_mut(d)
        .zip(coarse.par_chunks_mut(d))
        .enumerate()
        .map(|(i, (xf, xc))| {
            let inc = BrownianIncrements::draw(key, i as u64, block, level, h, steps, channels);
            let coarse_inc = match inc.coarsen(factor) {
                Ok(c) => c,
                Err(e) => return Some(e),
            };
            let mut scratch = vec![0.0; d];
            for s in 0..steps {
                if !model.advance(xf, h, inc.at(s), &mut scratch) {
                    return Some(Error::Divergence { level, time: from + (s + 1) as f64 * h });
                }
            }
            for s in 0..coarse_steps {
                if !model.advance(xc, h_coarse, coarse_inc.at(s), &mut scratch) {
                    return Some(Error::Divergence {
                        level: level - 1,
                        time: from + (s + 1) as f64 * h_coarse,
                    });
                }
            }
            None
        })
        .collect();
    first_error(results)?;
    let n = pair.fine.len();
    ledger.model_ops += (n * (steps + coarse_steps) * d) as u64;
    pair.fine.time = to;
    pair.coarse.time = to;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Stream;

    fn pair_from(particles: Array2<f64>, level: usize) -> LevelPair {
        LevelPair::new(level, particles, 0.0).unwrap()
    }

    #[test]
    fn zero_model_leaves_pair_unchanged() {
        let model = ModelSpec::linear(2, 0.0, 0.0);
        let grid = TimeGrid::new(0.25, 2).unwrap();
        let x = ndarray::array![[1.0, -2.0], [0.5, 3.0]];
        let mut pair = pair_from(x.clone(), 2);
        let key = NoiseKey::new(1, Stream::Propagation, 2);
        propagate_pair(&mut pair, &model, &grid, 0.5, &key, &mut CostLedger::default()).unwrap();
        assert_eq!(pair.fine.particles(), x.view());
        assert_eq!(pair.coarse.particles(), x.view());
        assert_eq!(pair.fine.time, 0.5);
    }

    #[test]
    fn linear_drift_one_coarse_step() {
        // f(x) = -x, M = 2, one coarse step of h0 = 0.1 against two fine steps
        let model = ModelSpec::linear(1, 1.0, 0.0);
        let grid = TimeGrid::new(0.1, 2).unwrap();
        let mut pair = pair_from(ndarray::array![[1.0]], 1);
        let key = NoiseKey::new(1, Stream::Propagation, 1);
        propagate_pair(&mut pair, &model, &grid, 0.1, &key, &mut CostLedger::default()).unwrap();
        let coarse = pair.coarse.particles()[[0, 0]];
        let fine = pair.fine.particles()[[0, 0]];
        assert!((coarse - 0.9).abs() < 1e-15);
        assert!((fine - 0.95f64.powi(2)).abs() < 1e-15);
        assert!(((fine - coarse) - 0.1f64.powi(2) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn pure_noise_totals_agree_bitwise() {
        // zero drift: the state is the accumulated noise, identical on both levels
        use crate::models::{Dynamics, NoiseMode};
        let shared = ModelSpec::new("shared", 3, Dynamics::Linear { rate: 0.0 }, vec![0.5; 3], NoiseMode::SharedScalar)
            .unwrap();
        for model in [ModelSpec::linear(3, 0.0, 1.0), shared] {
            let grid = TimeGrid::new(1.0 / 16.0, 2).unwrap();
            let mut pair = pair_from(Array2::zeros((5, 3)), 3);
            let key = NoiseKey::new(7, Stream::Propagation, 3);
            let mut ledger = CostLedger::default();
            for k in 1..=4 {
                propagate_pair(&mut pair, &model, &grid, k as f64 / 16.0, &key, &mut ledger).unwrap();
            }
            // quantised increments times a power of two sum exactly
            assert_eq!(pair.fine.particles(), pair.coarse.particles());
            assert_eq!(ledger.model_ops, (5 * 4 * (8 + 4) * 3) as u64);
        }
    }

    #[test]
    fn pairing_by_index_is_stable_under_threads() {
        let model = ModelSpec::double_well(0.5);
        let grid = TimeGrid::new(1.0 / 16.0, 2).unwrap();
        let key = NoiseKey::new(3, Stream::Propagation, 2);
        let init = draw_initial(&NoiseKey::new(3, Stream::Initial, 2), 64, &[0.0], &[1.0]).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut pair = pair_from(init.clone(), 2);
                propagate_pair(&mut pair, &model, &grid, 0.5, &key, &mut CostLedger::default()).unwrap();
                pair
            })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.fine.particles(), b.fine.particles());
        assert_eq!(a.coarse.particles(), b.coarse.particles());
    }

    #[test]
    fn divergence_names_level() {
        let model = ModelSpec::double_well(0.0);
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let mut pair = pair_from(ndarray::array![[0.5], [1e200]], 1);
        let err = propagate_pair(&mut pair, &model, &grid, 1.0, &NoiseKey::new(0, Stream::Propagation, 1), &mut CostLedger::default())
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { level: 1, .. }));
    }
}
