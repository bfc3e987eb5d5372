//! Single-level ensemble transform particle filter.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::metrics::CostLedger;
use crate::transport::{
    check_probability_vector, localisation_matrix, localised_cost, lp_transport_counted,
    monotone_coupling_counted, squared_distances, Coupling, LocalisationMatrix,
};
use crate::{Error, Result};

/// Weighted particle ensemble at one discretisation level.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    particles: Array2<f64>,
    weights: Vec<f64>,
    pub level: usize,
    pub time: f64,
}

impl Ensemble {
    /// Evenly weighted ensemble; rows of `particles` are particles.
    pub fn new(particles: Array2<f64>, level: usize, time: f64) -> Result<Self> {
        let n = particles.nrows();
        if n == 0 || particles.ncols() == 0 {
            return Err(Error::arg("ensemble needs at least one particle and one component"));
        }
        let particles = particles.as_standard_layout().into_owned();
        Ok(Self { particles, weights: vec![1.0 / n as f64; n], level, time })
    }

    pub fn with_weights(particles: Array2<f64>, weights: Vec<f64>, level: usize, time: f64) -> Result<Self> {
        let mut ens = Self::new(particles, level, time)?;
        ens.set_weights(weights)?;
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.particles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particles(&self) -> ArrayView2<'_, f64> {
        self.particles.view()
    }

    /// Row-major particle storage, `d` values per particle.
    pub fn particles_mut_slice(&mut self) -> &mut [f64] {
        self.particles.as_slice_mut().expect("particles are stored in standard layout")
    }

    pub fn particle(&self, i: usize) -> ArrayView1<'_, f64> {
        self.particles.row(i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::arg("weight vector length differs from ensemble size"));
        }
        check_probability_vector(&weights, "ensemble weights")?;
        self.weights = weights;
        Ok(())
    }

    fn reset_uniform(&mut self) {
        let n = self.len();
        self.weights = vec![1.0 / n as f64; n];
    }

    /// Unweighted particle mean.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.particles.columns().into_iter().map(|c| c.sum() / n).collect()
    }

    /// Unweighted mean of the squared components.
    pub fn second_moment(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.particles.columns().into_iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect()
    }

    pub(crate) fn replace_particles(&mut self, particles: Array2<f64>) {
        debug_assert_eq!(particles.dim(), self.particles.dim());
        self.particles = particles.as_standard_layout().into_owned();
    }

    /// CSV snapshot: `x_1,..,x_d,w` header then one row per particle.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dimension() {
            let _ = write!(out, "x_{},", k + 1);
        }
        out.push_str("w\n");
        for (row, w) in self.particles.rows().into_iter().zip(&self.weights) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{w}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMode {
    /// One multivariate transport problem on squared Euclidean distance.
    Global,
    /// One transport problem per component on a localised cost.
    Localised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Localisation radius of the transport cost.
    pub r_loc_c: f64,
    /// Localisation radius of the likelihood; `inf` disables tapering.
    pub r_loc_r: f64,
    /// Diagonal of the observation noise covariance.
    pub obs_variance: Vec<f64>,
    pub mode: TransformMode,
}

impl FilterConfig {
    pub fn global(obs_variance: Vec<f64>) -> Self {
        Self { r_loc_c: 0.0, r_loc_r: f64::INFINITY, obs_variance, mode: TransformMode::Global }
    }

    pub fn localised(obs_variance: Vec<f64>, r_loc_c: f64, r_loc_r: f64) -> Self {
        Self { r_loc_c, r_loc_r, obs_variance, mode: TransformMode::Localised }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        check_variance(&self.obs_variance, d)?;
        if !(self.r_loc_c >= 0.0) || !(self.r_loc_r >= 0.0) {
            return Err(Error::arg("localisation radii must be non-negative"));
        }
        Ok(())
    }
}

fn check_variance(r: &[f64], d: usize) -> Result<()> {
    if r.len() != d {
        return Err(Error::arg(format!("observation variance has {} entries, state has {d}", r.len())));
    }
    if r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::arg("observation variance must be positive and finite"));
    }
    Ok(())
}

fn check_pair(x: &[f64], y: &[f64], r: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::arg("state and observation dimensions differ"));
    }
    check_variance(r, x.len())
}

/// `-1/2 (x - y)^T R^{-1} (x - y)` for diagonal `R`.
pub fn gaussian_log_likelihood(x: &[f64], y: &[f64], r: &[f64]) -> Result<f64> {
    check_pair(x, y, r)?;
    Ok(-0.5 * x.iter().zip(y).zip(r).map(|((a, b), v)| (a - b).powi(2) / v).sum::<f64>())
}

/// Log-likelihood seen by component `m`, residuals tapered with radius `r_loc_r`.
pub fn localised_log_likelihood(x: &[f64], y: &[f64], r: &[f64], m: usize, r_loc_r: f64) -> Result<f64> {
    check_pair(x, y, r)?;
    let c = localisation_matrix(x.len(), r_loc_r)?;
    if m >= x.len() {
        return Err(Error::arg(format!("component {m} out of range")));
    }
    Ok(-0.5 * c.support(m).map(|(n, t)| t * (x[n] - y[n]).powi(2) / r[n]).sum::<f64>())
}

/// Posterior weights after one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Global(Vec<f64>),
    /// Column `m` holds the weight vector of component `m`.
    Localised(Array2<f64>),
}

impl Weights {
    pub fn component(&self, m: usize) -> Vec<f64> {
        match self {
            Weights::Global(w) => w.clone(),
            Weights::Localised(table) => table.column(m).to_vec(),
        }
    }
}

fn normalise_log_weights(prior: &[f64], log_lik: impl Iterator<Item = f64>, time: f64) -> Result<Vec<f64>> {
    let mut logw: Vec<f64> = prior
        .iter()
        .zip(log_lik)
        .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || logw.iter().any(|v| v.is_nan()) {
        return Err(Error::Degeneracy { time });
    }
    for v in logw.iter_mut() {
        *v = (*v - max).exp();
    }
    let total: f64 = logw.iter().sum();
    for v in logw.iter_mut() {
        *v /= total;
    }
    Ok(logw)
}

/// Importance weights of `ens` given observation `y`.
pub fn update_weights(ens: &Ensemble, y: &[f64], cfg: &FilterConfig, ledger: &mut CostLedger) -> Result<Weights> {
    let d = ens.dimension();
    if y.len() != d {
        return Err(Error::arg("observation dimension differs from ensemble"));
    }
    cfg.validate(d)?;
    let r = &cfg.obs_variance;
    let scaled: Vec<Vec<f64>> = ens
        .particles
        .rows()
        .into_iter()
        .map(|x| x.iter().zip(y).zip(r).map(|((a, b), v)| (a - b).powi(2) / v).collect())
        .collect();
    match cfg.mode {
        TransformMode::Global => {
            ledger.likelihood_ops += (ens.len() * d) as u64;
            let ll = scaled.iter().map(|q| -0.5 * q.iter().sum::<f64>());
            Ok(Weights::Global(normalise_log_weights(&ens.weights, ll, ens.time)?))
        }
        TransformMode::Localised => {
            let c = localisation_matrix(d, cfg.r_loc_r)?;
            let mut table = Array2::zeros((ens.len(), d));
            for m in 0..d {
                let support: Vec<(usize, f64)> = c.support(m).collect();
                ledger.likelihood_ops += (ens.len() * support.len()) as u64;
                let ll = scaled.iter().map(|q| -0.5 * support.iter().map(|&(n, t)| t * q[n]).sum::<f64>());
                let w = normalise_log_weights(&ens.weights, ll, ens.time)?;
                table.column_mut(m).assign(&ArrayView1::from(&w));
            }
            Ok(Weights::Localised(table))
        }
    }
}

/// Indices of `values` in ascending order, ties by index.
pub(crate) fn sorted_order(values: &[f64], ledger: &mut CostLedger) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let mut comparisons = 0u64;
    order.sort_by(|&a, &b| {
        comparisons += 1;
        values[a].total_cmp(&values[b]).then(a.cmp(&b))
    });
    ledger.sort_ops += comparisons;
    order
}

/// Permutes `transformed` so that its ranks match those of `original`.
pub fn rank_reorder(original: &[f64], transformed: &[f64]) -> Result<Vec<f64>> {
    rank_reorder_counted(original, transformed, &mut CostLedger::default())
}

pub(crate) fn rank_reorder_counted(original: &[f64], transformed: &[f64], ledger: &mut CostLedger) -> Result<Vec<f64>> {
    if original.len() != transformed.len() {
        return Err(Error::arg("rank reordering needs equal lengths"));
    }
    let ranks = sorted_order(original, ledger);
    let sorted = sorted_order(transformed, ledger);
    let mut out = vec![0.0; original.len()];
    for (r, s) in ranks.iter().zip(&sorted) {
        out[*r] = transformed[*s];
    }
    Ok(out)
}

/// Univariate transform of `values` with weights `w` through the monotone
/// coupling, with ranks restored against `values`.
fn univariate_transform(values: &[f64], w: &[f64], ledger: &mut CostLedger) -> Result<Vec<f64>> {
    let t = monotone_transform(values, w, ledger)?;
    rank_reorder_counted(values, &t, ledger)
}

fn monotone_transform(values: &[f64], w: &[f64], ledger: &mut CostLedger) -> Result<Vec<f64>> {
    let n = values.len();
    let order = sorted_order(values, ledger);
    let sorted_w: Vec<f64> = order.iter().map(|&i| w[i]).collect();
    let coupling = monotone_coupling_counted(&sorted_w, &mut ledger.transform_ops)?;
    let mut out = vec![0.0; n];
    for &(r, c, t) in coupling.entries() {
        out[order[c]] += n as f64 * t * values[order[r]];
    }
    ledger.transform_ops += coupling.entries().len() as u64;
    Ok(out)
}

/// `out[j, k] = N sum_i T_ij x[i, k]` for the listed components.
fn apply_coupling(coupling: &Coupling, x: ArrayView2<'_, f64>, out: &mut Array2<f64>, components: &[usize], ledger: &mut CostLedger) {
    let n = x.nrows() as f64;
    for &(i, j, t) in coupling.entries() {
        for &k in components {
            out[[j, k]] += n * t * x[[i, k]];
        }
    }
    ledger.transform_ops += (coupling.entries().len() * components.len()) as u64;
}

/// Replaces `ens` by its linear ensemble transform under `weights`; the
/// result is evenly weighted.
pub fn transform_ensemble(ens: &mut Ensemble, weights: &Weights, cfg: &FilterConfig, ledger: &mut CostLedger) -> Result<()> {
    let n = ens.len();
    let d = ens.dimension();
    let uniform = vec![1.0 / n as f64; n];
    let x = ens.particles.view();
    let mut out = Array2::zeros((n, d));
    match (cfg.mode, weights) {
        (TransformMode::Global, Weights::Global(w)) => {
            if w.len() != n {
                return Err(Error::arg("weight vector length differs from ensemble size"));
            }
            if d == 1 {
                let column: Vec<f64> = x.column(0).to_vec();
                let t = univariate_transform(&column, w, ledger)?;
                out.column_mut(0).assign(&ArrayView1::from(&t));
            } else {
                let cost = squared_distances(x, x);
                ledger.transform_ops += (n * n * d) as u64;
                let coupling = lp_transport_counted(cost.view(), w, &uniform, &mut ledger.transform_ops)?;
                let all: Vec<usize> = (0..d).collect();
                apply_coupling(&coupling, x, &mut out, &all, ledger);
            }
        }
        (TransformMode::Localised, Weights::Localised(table)) => {
            if table.dim() != (n, d) {
                return Err(Error::arg("weight table shape differs from ensemble"));
            }
            let c: Option<LocalisationMatrix> =
                if cfg.r_loc_c > 0.0 { Some(localisation_matrix(d, cfg.r_loc_c)?) } else { None };
            for m in 0..d {
                let w = table.column(m).to_vec();
                match &c {
                    None => {
                        let column: Vec<f64> = x.column(m).to_vec();
                        let t = univariate_transform(&column, &w, ledger)?;
                        out.column_mut(m).assign(&ArrayView1::from(&t));
                    }
                    Some(c) => {
                        let cost = localised_cost(x, m, c)?;
                        ledger.transform_ops += (n * n * c.support(m).count()) as u64;
                        let coupling = lp_transport_counted(cost.view(), &w, &uniform, &mut ledger.transform_ops)?;
                        apply_coupling(&coupling, x, &mut out, &[m], ledger);
                    }
                }
            }
        }
        _ => return Err(Error::arg("weights do not match the transform mode")),
    }
    ens.replace_particles(out);
    ens.reset_uniform();
    Ok(())
}

/// `sum_i w_i x_i`.
pub fn posterior_mean(ens: &Ensemble) -> Vec<f64> {
    let mut mean = vec![0.0; ens.dimension()];
    for (row, w) in ens.particles.rows().into_iter().zip(&ens.weights) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    mean
}

/// Weighting followed by the ensemble transform.
pub fn etpf_assimilate(ens: &mut Ensemble, y: &[f64], cfg: &FilterConfig, ledger: &mut CostLedger) -> Result<()> {
    let weights = update_weights(ens, y, cfg, ledger)?;
    transform_ensemble(ens, &weights, cfg, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn flat() -> FilterConfig {
        FilterConfig::global(vec![1.0])
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_log_likelihood(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(gaussian_log_likelihood(&[2.0], &[0.0], &[2.0]).unwrap(), -1.0);
        assert_eq!(gaussian_log_likelihood(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), -1.0);
        assert!(gaussian_log_likelihood(&[1.0], &[0.0], &[0.0]).is_err());
        assert!(gaussian_log_likelihood(&[1.0], &[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn localised_examples() {
        let x = [1.0, 2.0, -1.0];
        let y = [0.0, 0.5, 0.0];
        let r = [1.0, 2.0, 0.5];
        let full = gaussian_log_likelihood(&x, &y, &r).unwrap();
        for m in 0..3 {
            assert_eq!(localised_log_likelihood(&x, &y, &r, m, f64::INFINITY).unwrap(), full);
        }
        assert_eq!(localised_log_likelihood(&x, &y, &r, 1, 0.0).unwrap(), -0.5 * 1.5f64.powi(2) / 2.0);
        let ones = [1.0; 3];
        let zeros = [0.0; 3];
        assert_eq!(localised_log_likelihood(&ones, &zeros, &ones, 1, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn weight_examples() {
        let ens = Ensemble::new(array![[0.0], [1.0]], 0, 0.0).unwrap();
        let mut ledger = CostLedger::default();
        let mut cfg = flat();
        cfg.obs_variance = vec![1e300];
        let Weights::Global(w) = update_weights(&ens, &[0.0], &cfg, &mut ledger).unwrap() else { panic!() };
        assert_eq!(w, vec![0.5, 0.5]);

        // log-likelihoods (0, -ln 3): residuals 0 and sqrt(2 ln 3) with R = 1
        let ens = Ensemble::new(array![[0.0], [(2.0 * 3f64.ln()).sqrt()]], 0, 0.0).unwrap();
        let Weights::Global(w) = update_weights(&ens, &[0.0], &flat(), &mut ledger).unwrap() else { panic!() };
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);

        let ens = Ensemble::with_weights(array![[0.0], [5.0]], vec![1.0, 0.0], 0, 0.0).unwrap();
        let Weights::Global(w) = update_weights(&ens, &[5.0], &flat(), &mut ledger).unwrap() else { panic!() };
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn underflow_is_degeneracy() {
        let ens = Ensemble::with_weights(array![[0.0], [1.0]], vec![1.0, 0.0], 0, 3.5).unwrap();
        let mut cfg = flat();
        cfg.obs_variance = vec![f64::MIN_POSITIVE];
        // huge but finite log-likelihood difference still normalises
        assert!(update_weights(&ens, &[1.0], &cfg, &mut CostLedger::default()).is_ok());
        let ens = Ensemble::new(array![[f64::INFINITY], [f64::INFINITY]], 0, 3.5).unwrap();
        let err = update_weights(&ens, &[0.0], &flat(), &mut CostLedger::default()).unwrap_err();
        assert_eq!(err, Error::Degeneracy { time: 3.5 });
    }

    #[test]
    fn transform_examples() {
        let mut ledger = CostLedger::default();
        let x = array![[0.3, 1.0], [2.0, -1.0], [0.5, 0.5]];
        let mut ens = Ensemble::new(x.clone(), 0, 0.0).unwrap();
        let w = Weights::Global(vec![1.0 / 3.0; 3]);
        transform_ensemble(&mut ens, &w, &FilterConfig::global(vec![1.0, 1.0]), &mut ledger).unwrap();
        for (a, b) in ens.particles().iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-15);
        }

        let mut ens = Ensemble::new(array![[0.0], [1.0]], 0, 0.0).unwrap();
        transform_ensemble(&mut ens, &Weights::Global(vec![0.75, 0.25]), &flat(), &mut ledger).unwrap();
        assert_eq!(ens.particles().column(0).to_vec(), vec![0.0, 0.5]);
        assert_eq!(ens.weights(), &[0.5, 0.5]);
        assert_eq!(ens.mean(), vec![0.25]);

        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mut ens = Ensemble::new(x, 0, 0.0).unwrap();
        transform_ensemble(&mut ens, &Weights::Global(vec![1.0, 0.0, 0.0]), &FilterConfig::global(vec![1.0; 2]), &mut ledger)
            .unwrap();
        for row in ens.particles().rows() {
            assert!((row[0] - 1.0).abs() < 1e-15 && (row[1] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_mean_examples() {
        let ens = Ensemble::new(array![[1.0, 0.0], [3.0, 2.0]], 0, 0.0).unwrap();
        assert_eq!(posterior_mean(&ens), vec![2.0, 1.0]);
        let ens = Ensemble::with_weights(array![[1.0, 5.0], [3.0, 2.0]], vec![1.0, 0.0], 0, 0.0).unwrap();
        assert_eq!(posterior_mean(&ens), vec![1.0, 5.0]);
        let ens = Ensemble::with_weights(array![[0.0], [1.0]], vec![0.75, 0.25], 0, 0.0).unwrap();
        assert_eq!(posterior_mean(&ens), vec![0.25]);
    }

    #[test]
    fn assimilate_examples() {
        let mut ledger = CostLedger::default();
        let mut cfg = flat();
        cfg.obs_variance = vec![1e300];
        let mut ens = Ensemble::new(array![[0.2], [-1.0], [0.7]], 0, 0.0).unwrap();
        etpf_assimilate(&mut ens, &[0.0], &cfg, &mut ledger).unwrap();
        assert_eq!(ens.particles().column(0).to_vec(), vec![0.2, -1.0, 0.7]);

        let mut ens = Ensemble::new(array![[4.0, -2.0]], 0, 0.0).unwrap();
        etpf_assimilate(&mut ens, &[0.0, 0.0], &FilterConfig::global(vec![1.0, 1.0]), &mut ledger).unwrap();
        assert_eq!(ens.particles().row(0).to_vec(), vec![4.0, -2.0]);
        assert_eq!(ens.weights(), &[1.0]);

        let mut ens = Ensemble::new(array![[0.0], [(2.0 * 3f64.ln()).sqrt()]], 0, 0.0).unwrap();
        etpf_assimilate(&mut ens, &[0.0], &flat(), &mut ledger).unwrap();
        let out = ens.particles().column(0).to_vec();
        assert!(out[0].abs() < 1e-15);
        assert!((out[1] - 0.5 * (2.0 * 3f64.ln()).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rank_reorder_examples() {
        assert_eq!(rank_reorder(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 5.0, 6.0]);
        assert_eq!(rank_reorder(&[3.0, 1.0, 2.0], &[10.0, 20.0, 30.0]).unwrap(), vec![30.0, 10.0, 20.0]);
        assert_eq!(rank_reorder(&[7.0, 7.0, 7.0], &[3.0, 1.0, 2.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(rank_reorder(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ensemble_csv() {
        let ens = Ensemble::with_weights(array![[1.0, 2.5], [0.0, -1.0]], vec![0.25, 0.75], 0, 0.0).unwrap();
        assert_eq!(ens.to_csv(), "x_1,x_2,w\n1,2.5,0.25\n0,-1,0.75\n");
    }

    #[test]
    fn ledger_counts_solver_entries() {
        let mut ledger = CostLedger::default();
        let mut ens = Ensemble::new(array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]], 0, 0.0).unwrap();
        transform_ensemble(&mut ens, &Weights::Global(vec![0.5, 0.3, 0.2]), &FilterConfig::global(vec![1.0; 2]), &mut ledger)
            .unwrap();
        assert!(ledger.transform_ops >= 3);
    }

    fn ensemble_strategy() -> impl Strategy<Value = (Array2<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..12, 1usize..4).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(-5.0f64..5.0, n * d),
                proptest::collection::vec(-5.0f64..5.0, d),
                proptest::collection::vec(0.2f64..3.0, d),
            )
                .prop_map(move |(x, y, r)| (Array2::from_shape_vec((n, d), x).unwrap(), y, r))
        })
    }

    proptest! {
        #[test]
        fn weights_are_normalised((x, y, r) in ensemble_strategy(), localised in any::<bool>()) {
            let ens = Ensemble::new(x, 0, 0.0).unwrap();
            let d = ens.dimension();
            let cfg = if localised { FilterConfig::localised(r, 0.0, 1.0) } else { FilterConfig::global(r) };
            let w = update_weights(&ens, &y, &cfg, &mut CostLedger::default()).unwrap();
            for m in 0..d {
                let s: f64 = w.component(m).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn transform_stays_in_hull((x, y, r) in ensemble_strategy(), mode in 0usize..3) {
            let mut ens = Ensemble::new(x.clone(), 0, 0.0).unwrap();
            let cfg = match mode {
                0 => FilterConfig::global(r),
                1 => FilterConfig::localised(r, 0.0, 2.0),
                _ => FilterConfig::localised(r, 1.0, 2.0),
            };
            let w = update_weights(&ens, &y, &cfg, &mut CostLedger::default()).unwrap();
            transform_ensemble(&mut ens, &w, &cfg, &mut CostLedger::default()).unwrap();
            for (m, col) in ens.particles().columns().into_iter().enumerate() {
                let lo = x.column(m).iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.column(m).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                for v in col {
                    prop_assert!(*v >= lo - tol && *v <= hi + tol);
                }
            }
        }

        #[test]
        fn localised_univariate_matches_global(v in proptest::collection::vec(-3.0f64..3.0, 1..15), y in -3.0f64..3.0) {
            let x = Array2::from_shape_vec((v.len(), 1), v).unwrap();
            let mut a = Ensemble::new(x.clone(), 0, 0.0).unwrap();
            let mut b = Ensemble::new(x, 0, 0.0).unwrap();
            let mut ledger = CostLedger::default();
            etpf_assimilate(&mut a, &[y], &FilterConfig::global(vec![0.5]), &mut ledger).unwrap();
            etpf_assimilate(&mut b, &[y], &FilterConfig::localised(vec![0.5], 0.0, 1.0), &mut ledger).unwrap();
            prop_assert_eq!(a.particles(), b.particles());
        }

        #[test]
        fn rank_reorder_is_a_permutation(pairs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..20)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mut out = rank_reorder(&a, &b).unwrap();
            let mut sorted_b = b.clone();
            out.sort_by(f64::total_cmp);
            sorted_b.sort_by(f64::total_cmp);
            prop_assert_eq!(out, sorted_b);
        }
    }
}
