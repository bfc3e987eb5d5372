//! Error metrics, variance diagnostics and the operation-count ledger.
//!
//! Ledger units: a model op is one component update inside an Euler step, a
//! transform op is one elementary step of a coupling solver or of applying a
//! transform, a sort op is one comparison, a likelihood op is one
//! residual term of a log-likelihood.

use std::ops::AddAssign;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub model_ops: u64,
    pub transform_ops: u64,
    pub sort_ops: u64,
    pub likelihood_ops: u64,
}

impl CostLedger {
    pub fn total(&self) -> u64 {
        self.model_ops + self.transform_ops + self.sort_ops + self.likelihood_ops
    }

    pub fn merge(&mut self, other: &CostLedger) {
        *self += *other;
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, rhs: Self) {
        self.model_ops += rhs.model_ops;
        self.transform_ops += rhs.transform_ops;
        self.sort_ops += rhs.sort_ops;
        self.likelihood_ops += rhs.likelihood_ops;
    }
}

/// End-of-run summary written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rmse: f64,
    /// Per level, mean over steps of the difference-mean norm (level 0: mean).
    pub level_mean_abs: Vec<f64>,
    /// Per level, mean over steps of `Tr(V_l)`.
    pub level_mean_variance: Vec<f64>,
    pub cost: CostLedger,
    pub total_cost: u64,
    pub config: serde_json::Value,
}

fn check_shapes(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::arg(format!("shape mismatch: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

fn squared_errors(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>())
        .collect()
}

/// `sqrt(1/N_y sum_k |estimate_k - truth_k|^2)`.
pub fn time_averaged_rmse(estimates: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(estimates, truth)?;
    let n = estimates.nrows();
    if n == 0 {
        return Err(Error::arg("RMSE of an empty series"));
    }
    Ok((squared_errors(estimates, truth).iter().sum::<f64>() / n as f64).sqrt())
}

/// Running RMSE: entry `k` averages the first `k + 1` squared errors.
pub fn cumulative_rmse_series(series: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_shapes(series, reference)?;
    let mut acc = 0.0;
    Ok(squared_errors(series, reference)
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            acc += e;
            (acc / (k + 1) as f64).sqrt()
        })
        .collect())
}

/// Trace of the unbiased sample covariance of the rows of `samples`.
pub fn variance_trace_estimate(samples: ArrayView2<'_, f64>) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::arg(format!("variance needs at least 2 samples, got {n}")));
    }
    let mut trace = 0.0;
    for col in samples.columns() {
        let mean = col.sum() / n as f64;
        trace += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    Ok(trace)
}

/// Discretisation-bias estimate `|E[X_L] - E[X_{L-1}]| / (M - 1)`.
pub fn bias_estimate(diff_mean_finest: &[f64], refinement: usize) -> Result<f64> {
    if refinement < 2 {
        return Err(Error::arg("bias estimate needs M >= 2"));
    }
    let norm = diff_mean_finest.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(norm / (refinement - 1) as f64)
}

/// Model cost `sum_l h_l^{-gamma} N_l t_end` of a level hierarchy.
pub fn theoretical_cost(samples: &[usize], steps: &[f64], gamma: f64, t_end: f64) -> Result<f64> {
    if samples.len() != steps.len() {
        return Err(Error::arg("sample and step lists differ in length"));
    }
    Ok(samples
        .iter()
        .zip(steps)
        .map(|(&n, &h)| h.powf(-gamma) * n as f64 * t_end)
        .sum())
}

/// Model cost `h^{-gamma} N t_end` of a single-level estimator.
pub fn single_level_cost(samples: usize, step: f64, gamma: f64, t_end: f64) -> f64 {
    step.powf(-gamma) * samples as f64 * t_end
}

/// Least-squares slope of `log2(y)` against `log2(x)`.
pub fn log2_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::arg("slope fit needs at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::arg("slope fit needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rmse_examples() {
        let t = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(time_averaged_rmse(t.view(), t.view()).unwrap(), 0.0);
        let e = array![[1.5], [1.5], [1.5]];
        let z = array![[0.0], [0.0], [0.0]];
        assert_eq!(time_averaged_rmse(e.view(), z.view()).unwrap(), 1.5);
        let e = array![[3.0], [4.0]];
        let z = array![[0.0], [0.0]];
        assert_eq!(time_averaged_rmse(e.view(), z.view()).unwrap(), (25.0f64 / 2.0).sqrt());
        assert!(time_averaged_rmse(e.view(), t.view()).is_err());
    }

    #[test]
    fn cumulative_examples() {
        let z = array![[0.0], [0.0], [0.0]];
        assert_eq!(cumulative_rmse_series(z.view(), z.view()).unwrap(), vec![0.0; 3]);
        let ones = array![[1.0], [-1.0], [1.0]];
        assert_eq!(cumulative_rmse_series(ones.view(), z.view()).unwrap(), vec![1.0; 3]);
        let e = array![[0.0], [2.0]];
        let z2 = array![[0.0], [0.0]];
        assert_eq!(cumulative_rmse_series(e.view(), z2.view()).unwrap(), vec![0.0, 2.0f64.sqrt()]);
    }

    #[test]
    fn cumulative_final_entry_is_rmse() {
        let a = array![[0.3, 1.0], [2.0, -1.0], [0.1, 0.7], [4.0, 4.0]];
        let b = array![[0.0, 1.5], [1.0, -1.2], [0.4, 0.0], [3.0, 2.0]];
        let series = cumulative_rmse_series(a.view(), b.view()).unwrap();
        let rmse = time_averaged_rmse(a.view(), b.view()).unwrap();
        assert!((series.last().unwrap() - rmse).abs() < 1e-15);
    }

    #[test]
    fn variance_examples() {
        let same = array![[2.0, 1.0], [2.0, 1.0], [2.0, 1.0]];
        assert_eq!(variance_trace_estimate(same.view()).unwrap(), 0.0);
        assert_eq!(variance_trace_estimate(array![[-1.0], [1.0]].view()).unwrap(), 2.0);
        assert_eq!(variance_trace_estimate(array![[1.0, 0.0], [-1.0, 0.0]].view()).unwrap(), 2.0);
        assert!(variance_trace_estimate(array![[1.0]].view()).is_err());
    }

    #[test]
    fn bias_examples() {
        assert_eq!(bias_estimate(&[0.0], 2).unwrap(), 0.0);
        assert_eq!(bias_estimate(&[0.1], 2).unwrap(), 0.1);
        assert!((bias_estimate(&[-0.3], 4).unwrap() - 0.1).abs() < 1e-16);
        assert!(bias_estimate(&[0.1], 1).is_err());
    }

    #[test]
    fn cost_examples() {
        assert_eq!(theoretical_cost(&[10], &[1.0], 1.0, 1.0).unwrap(), 10.0);
        assert_eq!(theoretical_cost(&[4, 1], &[1.0, 0.5], 1.0, 1.0).unwrap(), 6.0);
        assert_eq!(theoretical_cost(&[4, 3, 2], &[1.0, 0.5, 0.25], 0.0, 2.0).unwrap(), 18.0);
        assert!(theoretical_cost(&[4], &[1.0, 0.5], 1.0, 1.0).is_err());
        assert_eq!(single_level_cost(8, 0.25, 1.0, 2.0), 64.0);
    }

    #[test]
    fn ledger_merge_is_commutative() {
        let a = CostLedger { model_ops: 3, transform_ops: 5, sort_ops: 7, likelihood_ops: 11 };
        let b = CostLedger { model_ops: 13, transform_ops: 17, sort_ops: 19, likelihood_ops: 23 };
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.total(), a.total() + b.total());
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.0)).collect();
        assert!((log2_slope(&x, &y).unwrap() + 2.0).abs() < 1e-12);
        assert!(log2_slope(&[1.0], &[1.0]).is_err());
    }
}
