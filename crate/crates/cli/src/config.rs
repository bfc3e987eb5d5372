//! Experiment files: one TOML document per experiment, with an optional
//! `[desk]` table of overrides for short runs.

use std::fmt;
use std::path::Path;

use mletpf::filter::{FilterConfig, TransformMode};
use mletpf::models::ModelSpec;
use mletpf::multilevel::{level_count, MultilevelConfig, Prior};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    DoubleWell { xi: f64 },
    Lorenz63 { phi: f64 },
    Lorenz96 { dimension: usize, forcing: f64, spacing: f64, noise: f64 },
    Linear { dimension: usize, rate: f64, scale: f64 },
}

impl ModelConfig {
    pub fn dimension(&self) -> usize {
        match self {
            ModelConfig::DoubleWell { .. } => 1,
            ModelConfig::Lorenz63 { .. } => 3,
            ModelConfig::Lorenz96 { dimension, .. } | ModelConfig::Linear { dimension, .. } => *dimension,
        }
    }

    pub fn build(&self) -> Result<ModelSpec, CliError> {
        Ok(match *self {
            ModelConfig::DoubleWell { xi } => ModelSpec::double_well(xi),
            ModelConfig::Lorenz63 { phi } => ModelSpec::lorenz63(phi),
            ModelConfig::Lorenz96 { dimension, forcing, spacing, noise } => {
                ModelSpec::lorenz96(dimension, forcing, spacing, noise)?
            }
            ModelConfig::Linear { dimension, rate, scale } => ModelSpec::linear(dimension, rate, scale),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Observation noise variance, the same on every component.
    pub variance: f64,
    pub spacing: f64,
    pub t_end: f64,
    /// Level on which the reference path is integrated.
    pub reference_level: usize,
    pub initial: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Defaults to the reference initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub mode: TransformMode,
    #[serde(default)]
    pub r_loc_c: f64,
    /// Likelihood localisation radius; absent means no tapering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_loc_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultilevelSection {
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    pub h0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_exponent")]
    pub schedule_exponent: f64,
}

fn default_refinement() -> usize {
    2
}

fn default_alpha() -> f64 {
    1.0
}

fn default_exponent() -> f64 {
    1.5
}

/// High-accuracy single-level run that stands in for the true posterior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub level: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskOverrides {
    pub t_end: Option<f64>,
    pub reference_level: Option<usize>,
    pub levels: Option<usize>,
    pub n0: Option<usize>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub truth_level: Option<usize>,
    pub truth_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelConfig,
    pub observations: ObservationConfig,
    pub prior: PriorConfig,
    pub filter: FilterSection,
    pub multilevel: MultilevelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    /// Accuracy targets of the cost sweep, largest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub desk: Option<DeskOverrides>,
}

fn default_seed() -> u64 {
    1
}

/// One failed check, named by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies the `[desk]` overrides and drops the table.
    pub fn desk_scale(&self) -> Result<Self, CliError> {
        let mut out = self.clone();
        let Some(desk) = out.desk.take() else {
            return Err(CliError::Config(vec![FieldError {
                field: "desk".into(),
                reason: "no desk-scale overrides in this config".into(),
            }]));
        };
        if let Some(t) = desk.t_end {
            out.observations.t_end = t;
        }
        if let Some(l) = desk.reference_level {
            out.observations.reference_level = l;
        }
        if desk.levels.is_some() || desk.n0.is_some() {
            out.multilevel.epsilon = None;
        }
        if let Some(l) = desk.levels {
            out.multilevel.levels = Some(l);
        }
        if let Some(n) = desk.n0 {
            out.multilevel.n0 = Some(n);
        }
        if let Some(e) = desk.epsilon {
            out.multilevel.epsilon = Some(e);
            out.multilevel.levels = None;
            out.multilevel.n0 = None;
        }
        if let Some(e) = desk.epsilons {
            out.epsilons = e;
        }
        if let Some(truth) = out.truth.as_mut() {
            if let Some(l) = desk.truth_level {
                truth.level = l;
            }
            if let Some(n) = desk.truth_samples {
                truth.samples = n;
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let mut fail = |field: &str, reason: &str| errs.push(FieldError { field: field.into(), reason: reason.into() });
        let d = self.model.dimension();
        match self.model {
            ModelConfig::DoubleWell { xi } if !(xi >= 0.0) => fail("model.xi", "must be non-negative"),
            ModelConfig::Lorenz63 { phi } if !(phi >= 0.0) => fail("model.phi", "must be non-negative"),
            ModelConfig::Lorenz96 { dimension, spacing, noise, .. } => {
                if dimension < 4 {
                    fail("model.dimension", "needs at least 4 components");
                }
                if !(spacing > 0.0) {
                    fail("model.spacing", "must be positive");
                }
                if !(noise >= 0.0) {
                    fail("model.noise", "must be non-negative");
                }
            }
            ModelConfig::Linear { dimension, scale, .. } => {
                if dimension == 0 {
                    fail("model.dimension", "must be positive");
                }
                if !(scale >= 0.0) {
                    fail("model.scale", "must be non-negative");
                }
            }
            _ => {}
        }

        let o = &self.observations;
        if !(o.variance > 0.0 && o.variance.is_finite()) {
            fail("observations.variance", "must be positive and finite");
        }
        if !(o.spacing > 0.0) {
            fail("observations.spacing", "must be positive");
        }
        if !(o.t_end > 0.0) {
            fail("observations.t_end", "must be positive");
        } else if o.spacing > 0.0 {
            let n = (o.t_end / o.spacing).round();
            if n < 1.0 || (n * o.spacing - o.t_end).abs() > 1e-9 * o.t_end {
                fail("observations.t_end", "must be a whole number of observation spacings");
            }
        }
        if o.initial.len() != d {
            fail("observations.initial", "length must match the model dimension");
        }
        if let Some(m) = &self.prior.mean {
            if m.len() != d {
                fail("prior.mean", "length must match the model dimension");
            }
        }
        if !(self.prior.std >= 0.0) {
            fail("prior.std", "must be non-negative");
        }

        if !(self.filter.r_loc_c >= 0.0) {
            fail("filter.r_loc_c", "must be non-negative");
        }
        if let Some(r) = self.filter.r_loc_r {
            if !(r >= 0.0) {
                fail("filter.r_loc_r", "must be non-negative");
            }
        }

        let m = &self.multilevel;
        if m.refinement < 2 {
            fail("multilevel.refinement", "must be at least 2");
        }
        if !(m.h0 > 0.0) {
            fail("multilevel.h0", "must be positive");
        } else if o.spacing > 0.0 {
            let r = o.spacing / m.h0;
            if r < 1.0 - 1e-12 || (r - r.round()).abs() > 1e-9 * r {
                fail("multilevel.h0", "must divide the observation spacing");
            }
        }
        if !(m.alpha > 0.0) {
            fail("multilevel.alpha", "must be positive");
        }
        if !(m.schedule_exponent >= 0.0) {
            fail("multilevel.schedule_exponent", "must be non-negative");
        }
        match (m.epsilon, m.levels, m.n0) {
            (Some(e), None, None) => {
                if !(e > 0.0) {
                    fail("multilevel.epsilon", "must be positive");
                }
            }
            (None, Some(_), Some(n)) => {
                if n == 0 {
                    fail("multilevel.n0", "must be positive");
                }
            }
            (Some(_), _, _) => fail("multilevel.epsilon", "give either epsilon or both levels and n0"),
            (None, None, _) => fail("multilevel.levels", "missing (or give epsilon)"),
            (None, _, None) => fail("multilevel.n0", "missing (or give epsilon)"),
        }

        if let Some(t) = &self.truth {
            if t.samples == 0 {
                fail("truth.samples", "must be positive");
            }
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0)) {
            fail("epsilons", "must be positive");
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            fail("epsilons", "must be strictly decreasing");
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    /// `(L, N_0)` of the multilevel run, derived from epsilon when given.
    pub fn levels_and_samples(&self) -> Result<(usize, usize), CliError> {
        match (self.multilevel.epsilon, self.multilevel.levels, self.multilevel.n0) {
            (Some(e), _, _) => self.accuracy_targets(e),
            (None, Some(l), Some(n)) => Ok((l, n)),
            _ => unreachable!("validated"),
        }
    }

    /// `L` from the bias bound and `N_0 = ceil(epsilon^-2)`.
    pub fn accuracy_targets(&self, epsilon: f64) -> Result<(usize, usize), CliError> {
        let m = &self.multilevel;
        let l = level_count(epsilon, m.alpha, m.refinement, self.observations.t_end, self.dimension())?;
        let n = (epsilon.powi(-2) - 1e-9).ceil().max(1.0) as usize;
        Ok((l, n))
    }

    pub fn filter_config(&self) -> FilterConfig {
        let r = vec![self.observations.variance; self.dimension()];
        let r_loc_r = self.filter.r_loc_r.unwrap_or(f64::INFINITY);
        match self.filter.mode {
            TransformMode::Global => FilterConfig { r_loc_r, ..FilterConfig::global(r) },
            TransformMode::Localised => FilterConfig::localised(r, self.filter.r_loc_c, r_loc_r),
        }
    }

    pub fn multilevel_config(&self, levels: usize, n0: usize) -> MultilevelConfig {
        MultilevelConfig {
            refinement: self.multilevel.refinement,
            h0: self.multilevel.h0,
            levels,
            n0,
            schedule_exponent: self.multilevel.schedule_exponent,
            filter: self.filter_config(),
        }
    }

    pub fn prior(&self) -> Prior {
        let mean = self.prior.mean.clone().unwrap_or_else(|| self.observations.initial.clone());
        let d = mean.len();
        Prior { mean, std: vec![self.prior.std; d] }
    }

    /// Hex SHA-256 of the canonical TOML form (desk table excluded).
    pub fn hash(&self) -> String {
        digest(&toml::to_string(self).expect("config serialises"))
    }

    /// Hash of everything the truth-proxy run depends on.
    pub fn truth_key(&self) -> Option<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            model: &'a ModelConfig,
            observations: &'a ObservationConfig,
            prior: &'a PriorConfig,
            filter: &'a FilterSection,
            refinement: usize,
            h0: f64,
            truth: &'a TruthConfig,
        }
        let truth = self.truth.as_ref()?;
        let key = Key {
            model: &self.model,
            observations: &self.observations,
            prior: &self.prior,
            filter: &self.filter,
            refinement: self.multilevel.refinement,
            h0: self.multilevel.h0,
            truth,
        };
        Some(digest(&toml::to_string(&key).expect("key serialises")))
    }
}

fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
