//! Stochastic test systems and their Euler–Maruyama discretisation.
//!
//! All models have additive noise: `dX = f(X) dt + s dW`. The Lorenz-63
//! system drives all three components with one shared Brownian path; the
//! others use independent channels per component.

mod noise;
mod observe;
mod propagate;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use noise::{BrownianIncrements, NoiseKey, Stream};
pub use observe::{synthesize_observations, ObservationStream, ReferenceTrajectory};
pub use propagate::{draw_initial, propagate_ensemble, propagate_pair};

/// Lorenz-96 forcing and grid spacing used by the 40-component benchmark.
pub const LORENZ96_FORCING: f64 = 8.0;
pub const LORENZ96_SPACING: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// One Brownian path broadcast to every component.
    SharedScalar,
    /// One Brownian path per component.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// `f(x) = -V'(x)` with `V(x) = x^4/4 - x^2/2`.
    DoubleWell,
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Lorenz96 { forcing: f64, spacing: f64 },
    /// `f(x) = -rate * x`, componentwise.
    Linear { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    name: String,
    dimension: usize,
    dynamics: Dynamics,
    diffusion_scale: Vec<f64>,
    noise_mode: NoiseMode,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        dynamics: Dynamics,
        diffusion_scale: Vec<f64>,
        noise_mode: NoiseMode,
    ) -> Result<Self> {
        if dimension == 0 || diffusion_scale.len() != dimension {
            return Err(Error::arg(format!(
                "model needs d >= 1 and one diffusion scale per component (d = {dimension}, {} scales)",
                diffusion_scale.len()
            )));
        }
        match dynamics {
            Dynamics::Lorenz63 { .. } if dimension != 3 => {
                return Err(Error::arg("Lorenz-63 has exactly 3 components"));
            }
            Dynamics::Lorenz96 { spacing, .. } if dimension < 4 || spacing <= 0.0 => {
                return Err(Error::arg("Lorenz-96 needs d >= 4 and a positive grid spacing"));
            }
            _ => {}
        }
        Ok(Self { name: name.into(), dimension, dynamics, diffusion_scale, noise_mode })
    }

    /// Double-well OU process with noise amplitude `xi`.
    pub fn double_well(xi: f64) -> Self {
        Self::new("double-well", 1, Dynamics::DoubleWell, vec![xi], NoiseMode::Independent).unwrap()
    }

    /// Stochastic Lorenz-63 (`sigma = 10`, `rho = 28`, `beta = 8/3`) with
    /// shared noise amplitude `phi`.
    pub fn lorenz63(phi: f64) -> Self {
        Self::new(
            "lorenz63",
            3,
            Dynamics::Lorenz63 { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 },
            vec![phi; 3],
            NoiseMode::SharedScalar,
        )
        .unwrap()
    }

    /// Stochastic Lorenz-96 on `d` periodic components.
    pub fn lorenz96(d: usize, forcing: f64, spacing: f64, noise: f64) -> Result<Self> {
        Self::new(
            "lorenz96",
            d,
            Dynamics::Lorenz96 { forcing, spacing },
            vec![noise; d],
            NoiseMode::Independent,
        )
    }

    /// Linear relaxation `dX = -rate X dt + scale dW` in `d` components.
    pub fn linear(d: usize, rate: f64, scale: f64) -> Self {
        Self::new("linear", d, Dynamics::Linear { rate }, vec![scale; d], NoiseMode::Independent)
            .unwrap()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn diffusion_scale(&self) -> &[f64] {
        &self.diffusion_scale
    }

    pub fn noise_mode(&self) -> NoiseMode {
        self.noise_mode
    }

    /// Number of Brownian channels one Euler step consumes.
    pub fn channels(&self) -> usize {
        match self.noise_mode {
            NoiseMode::SharedScalar => 1,
            NoiseMode::Independent => self.dimension,
        }
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match self.dynamics {
            Dynamics::DoubleWell => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = drift_double_well(v);
                }
            }
            Dynamics::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            Dynamics::Lorenz96 { forcing, spacing } => lorenz96_into(x, forcing, spacing, out),
            Dynamics::Linear { rate } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = -rate * v;
                }
            }
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.drift_into(x, &mut out);
        out
    }

    /// In-place Euler–Maruyama step; returns `false` if the new state is not
    /// finite.
    pub(crate) fn advance(&self, x: &mut [f64], h: f64, dw: &[f64], scratch: &mut [f64]) -> bool {
        self.drift_into(x, scratch);
        match self.noise_mode {
            NoiseMode::SharedScalar => {
                for ((v, f), s) in x.iter_mut().zip(scratch.iter()).zip(&self.diffusion_scale) {
                    *v += h * f + s * dw[0];
                }
            }
            NoiseMode::Independent => {
                for (((v, f), s), w) in x.iter_mut().zip(scratch.iter()).zip(&self.diffusion_scale).zip(dw) {
                    *v += h * f + s * w;
                }
            }
        }
        x.iter().all(|v| v.is_finite())
    }
}

pub fn drift_double_well(x: f64) -> f64 {
    -x * x * x + x
}

/// Lorenz-63 drift with `sigma = 10`, `rho = 28`, `beta = 8/3`.
pub fn drift_lorenz63(state: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    ModelSpec::lorenz63(0.0).drift_into(&state, &mut out);
    out
}

/// Lorenz-96 drift on 40 periodic components with `F = 8`, `dX = 0.25`.
pub fn drift_lorenz96(state: &[f64]) -> Result<Vec<f64>> {
    if state.len() != 40 {
        return Err(Error::arg(format!("Lorenz-96 state must have 40 components, got {}", state.len())));
    }
    let mut out = vec![0.0; 40];
    lorenz96_into(state, LORENZ96_FORCING, LORENZ96_SPACING, &mut out);
    Ok(out)
}

fn lorenz96_into(x: &[f64], forcing: f64, spacing: f64, out: &mut [f64]) {
    let n = x.len();
    let scale = 1.0 / (3.0 * spacing);
    for j in 0..n {
        let prev = x[(j + n - 1) % n];
        let prev2 = x[(j + n - 2) % n];
        let next = x[(j + 1) % n];
        out[j] = -(prev * next - prev2 * prev) * scale - x[j] + forcing;
    }
}

/// One Euler–Maruyama step `x + h f(x) + s dW`.
///
/// `level` and `time` only label the error if the step leaves the finite
/// range.
pub fn euler_maruyama_step(
    x: &[f64],
    model: &ModelSpec,
    h: f64,
    dw: &[f64],
    level: usize,
    time: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::arg(format!("step size must be positive, got {h}")));
    }
    if x.len() != model.dimension() || dw.len() != model.channels() {
        return Err(Error::arg(format!(
            "state/noise sizes ({}, {}) do not match the model ({}, {})",
            x.len(),
            dw.len(),
            model.dimension(),
            model.channels()
        )));
    }
    let mut next = x.to_vec();
    let mut scratch = vec![0.0; x.len()];
    if model.advance(&mut next, h, dw, &mut scratch) {
        Ok(next)
    } else {
        Err(Error::Divergence { level, time: time + h })
    }
}

/// Step sizes `h_l = h_0 M^{-l}` of the level hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub h0: f64,
    pub refinement: usize,
}

impl TimeGrid {
    pub fn new(h0: f64, refinement: usize) -> Result<Self> {
        if !(h0 > 0.0) || refinement == 0 {
            return Err(Error::arg("time grid needs h0 > 0 and M >= 1"));
        }
        Ok(Self { h0, refinement })
    }

    pub fn step(&self, level: usize) -> f64 {
        self.h0 / (self.refinement as f64).powi(level as i32)
    }

    /// Number of level-`level` steps spanning `interval`; errors unless the
    /// interval is a whole number of steps.
    pub fn steps_in(&self, level: usize, interval: f64) -> Result<usize> {
        let ratio = interval / self.step(level);
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::arg(format!(
                "interval {interval} is not a whole number of steps of size {}",
                self.step(level)
            )));
        }
        Ok(steps as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_drift() {
        assert_eq!(drift_double_well(0.0), 0.0);
        assert_eq!(drift_double_well(1.0), 0.0);
        assert_eq!(drift_double_well(2.0), -6.0);
    }

    #[test]
    fn lorenz63_drift() {
        assert_eq!(drift_lorenz63([0.0; 3]), [0.0; 3]);
        let d = drift_lorenz63([1.0, 1.0, 1.0]);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        assert_eq!(drift_lorenz63([1.0, 0.0, 0.0]), [-10.0, 28.0, 0.0]);
    }

    #[test]
    fn lorenz96_drift() {
        assert_eq!(drift_lorenz96(&[0.0; 40]).unwrap(), vec![8.0; 40]);
        // a constant state at the forcing value is a fixed point
        assert_eq!(drift_lorenz96(&[8.0; 40]).unwrap(), vec![0.0; 40]);
        assert!(drift_lorenz96(&[0.0; 39]).is_err());
    }

    #[test]
    fn lorenz96_unit_vector_stencil() {
        // e_1 (one-based) is index 0; evaluate the stencil term by term
        let mut e = vec![0.0; 40];
        e[0] = 1.0;
        let d = drift_lorenz96(&e).unwrap();
        let x = |j: isize| e[j.rem_euclid(40) as usize];
        for j in 0..40isize {
            let expected = -(x(j - 1) * x(j + 1) - x(j - 2) * x(j - 1)) / 0.75 - x(j) + 8.0;
            assert_eq!(d[j as usize], expected);
        }
        // products of a unit vector with itself never appear: only -X(j) survives
        assert_eq!(d[0], 7.0);
        assert!(d[1..].iter().all(|&v| v == 8.0));
    }

    #[test]
    fn euler_maruyama_examples() {
        let pure_noise = ModelSpec::linear(1, 0.0, 1.0);
        assert_eq!(euler_maruyama_step(&[0.0], &pure_noise, 0.1, &[0.3], 0, 0.0).unwrap(), vec![0.3]);

        let dw = ModelSpec::double_well(0.5);
        assert_eq!(euler_maruyama_step(&[0.0], &dw, 0.7, &[0.0], 0, 0.0).unwrap(), vec![0.0]);
        assert_eq!(euler_maruyama_step(&[1.0], &dw, 1.0 / 16.0, &[0.0], 0, 0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn shared_noise_broadcasts() {
        let m = ModelSpec::lorenz63(0.4);
        let x = euler_maruyama_step(&[0.0; 3], &m, 0.01, &[1.0], 0, 0.0).unwrap();
        assert_eq!(x, vec![0.4; 3]);
        assert!(euler_maruyama_step(&[0.0; 3], &m, 0.01, &[1.0, 1.0, 1.0], 0, 0.0).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let m = ModelSpec::double_well(0.0);
        let err = euler_maruyama_step(&[1e120], &m, 1.0, &[0.0], 3, 2.0).unwrap_err();
        assert_eq!(err, Error::Divergence { level: 3, time: 3.0 });
        assert!(euler_maruyama_step(&[1.0], &m, 0.0, &[0.0], 0, 0.0).is_err());
    }

    #[test]
    fn time_grid() {
        let g = TimeGrid::new(1.0 / 16.0, 2).unwrap();
        assert_eq!(g.step(3), 1.0 / 128.0);
        assert_eq!(g.steps_in(3, 1.0 / 16.0).unwrap(), 8);
        assert!(g.steps_in(0, 0.1).is_err());
    }
}
