//! Discrete optimal transport between weighted ensembles.
//!
//! Three exact solvers back the filter:
//!
//! - [`monotone_coupling`] for sorted univariate ensembles (`O(N)` after the
//!   sort),
//! - [`lp_transport`] for arbitrary square cost matrices,
//! - [`assignment_coupling`] for the uniform/uniform case, where every vertex
//!   of the transport polytope is a permutation.
//!
//! Localisation tapers ([`localisation_matrix`]) turn one multivariate problem
//! into `d` per-component problems with costs from [`localised_cost`].

mod assignment;
mod localisation;
mod monotone;
mod network;
mod simplex;

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

pub use assignment::{assignment_coupling, assignment_coupling_counted};
pub use localisation::{localisation_matrix, periodic_separation, taper, LocalisationMatrix};
pub use monotone::{monotone_coupling, monotone_coupling_counted};
pub use network::{lp_transport, lp_transport_counted};

/// Tolerance on `sum(p) = 1` for probability vectors handed to the solvers.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Sparse `N x N` transport plan with its prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    size: usize,
    entries: Vec<(usize, usize, f64)>,
    row_marginals: Vec<f64>,
    col_marginals: Vec<f64>,
}

impl Coupling {
    pub(crate) fn new(
        size: usize,
        entries: Vec<(usize, usize, f64)>,
        row_marginals: Vec<f64>,
        col_marginals: Vec<f64>,
    ) -> Self {
        Self { size, entries, row_marginals, col_marginals }
    }

    /// Plan with mass `1/N` on `(sigma[j], j)`.
    pub fn from_permutation(sigma: &[usize]) -> Self {
        let n = sigma.len();
        let mass = 1.0 / n as f64;
        Self {
            size: n,
            entries: sigma.iter().enumerate().map(|(j, &i)| (i, j, mass)).collect(),
            row_marginals: vec![mass; n],
            col_marginals: vec![mass; n],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Stored `(row, col, mass)` triples, all with positive mass.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_marginals(&self) -> &[f64] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[f64] {
        &self.col_marginals
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.size];
        for &(i, _, t) in &self.entries {
            s[i] += t;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.size];
        for &(_, j, t) in &self.entries {
            s[j] += t;
        }
        s
    }

    pub fn objective(&self, cost: ArrayView2<'_, f64>) -> f64 {
        self.entries.iter().map(|&(i, j, t)| t * cost[[i, j]]).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.size, self.size));
        for &(i, j, t) in &self.entries {
            m[[i, j]] += t;
        }
        m
    }

    /// Linear ensemble transform `out[j] = sum_i N T[i][j] values[i]`.
    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        let n = self.size as f64;
        let mut out = vec![0.0; self.size];
        for &(i, j, t) in &self.entries {
            out[j] += n * t * values[i];
        }
        out
    }
}

/// Validates a probability vector and returns it renormalised to sum 1.
pub(crate) fn check_probability_vector(p: &[f64], what: &str) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::arg(format!("{what} must be non-empty")));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::arg(format!("{what} contain an invalid entry {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::arg(format!("{what} sum to {total}, expected 1")));
    }
    Ok(p.iter().map(|x| x / total).collect())
}

/// Localised squared distance between particles for the transport problem of
/// component `m`: `cost[i][j] = sum_n C[m][n] (x_i(n) - x_j(n))^2`.
pub fn localised_cost(
    particles: ArrayView2<'_, f64>,
    m: usize,
    localisation: &LocalisationMatrix,
) -> Result<Array2<f64>> {
    let (n, d) = particles.dim();
    if localisation.dimension() != d {
        return Err(Error::arg(format!(
            "localisation matrix is {0}x{0} but particles have {d} components",
            localisation.dimension()
        )));
    }
    if m >= d {
        return Err(Error::arg(format!("component {m} out of range for d = {d}")));
    }
    let support: Vec<(usize, f64)> = localisation.support(m).collect();
    let mut cost = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let c: f64 = support
                .iter()
                .map(|&(k, w)| w * (particles[[i, k]] - particles[[j, k]]).powi(2))
                .sum();
            cost[[i, j]] = c;
            cost[[j, i]] = c;
        }
    }
    Ok(cost)
}

/// Full squared Euclidean distance matrix between the rows of two ensembles.
pub fn squared_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y).powi(2)).sum()
    })
}
