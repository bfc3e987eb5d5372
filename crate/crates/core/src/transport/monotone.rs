//! North-west corner coupling for sorted univariate ensembles.

use super::{check_probability_vector, Coupling};
use crate::Result;

/// Monotone coupling between `weights` (rows) and the uniform distribution
/// (columns).
///
/// Rows must already be ordered by ascending particle value; the plan then
/// minimises any convex ground cost of the value differences. The cumulative
/// masses of the two marginals are merged, so each overlap of a row interval
/// with a column interval becomes one entry and at most `2N - 1` entries are
/// produced.
pub fn monotone_coupling(weights: &[f64]) -> Result<Coupling> {
    monotone_coupling_counted(weights, &mut 0)
}

pub fn monotone_coupling_counted(weights: &[f64], ops: &mut u64) -> Result<Coupling> {
    let rows = check_probability_vector(weights, "weights")?;
    let n = rows.len();
    let cols = vec![1.0 / n as f64; n];

    let mut entries = Vec::with_capacity(2 * n - 1);
    let (mut i, mut j) = (0usize, 0usize);
    let mut row_lo = 0.0;
    let mut row_hi = rows[0];
    while i < n && j < n {
        *ops += 1;
        let col_lo = j as f64 / n as f64;
        let col_hi = if j + 1 == n { 1.0 } else { (j + 1) as f64 / n as f64 };
        let row_top = if i + 1 == n { 1.0 } else { row_hi };
        let lo = f64::max(row_lo, col_lo);
        let hi = f64::min(row_top, col_hi);
        if hi > lo {
            entries.push((i, j, hi - lo));
        }
        if row_top <= col_hi {
            i += 1;
            if i < n {
                row_lo = row_hi;
                row_hi += rows[i];
            }
        }
        if col_hi <= row_top {
            j += 1;
        }
    }
    Ok(Coupling::new(n, entries, rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::lp_transport;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn sorted_entries(c: &Coupling) -> Vec<(usize, usize, f64)> {
        let mut e = c.entries().to_vec();
        e.sort_by_key(|a| (a.0, a.1));
        e
    }

    #[test]
    fn single_particle() {
        let c = monotone_coupling(&[1.0]).unwrap();
        assert_eq!(c.entries(), &[(0, 0, 1.0)]);
    }

    #[test]
    fn uniform_weights_give_identity() {
        let c = monotone_coupling(&[0.5, 0.5]).unwrap();
        assert_eq!(sorted_entries(&c), vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn skewed_two_particles() {
        let c = monotone_coupling(&[0.75, 0.25]).unwrap();
        assert_eq!(
            sorted_entries(&c),
            vec![(0, 0, 0.5), (0, 1, 0.25), (1, 1, 0.25)]
        );
        // 1D squared-distance cost for sorted particles (0, 1)
        let cost = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        let lp = lp_transport(cost.view(), &[0.75, 0.25], &[0.5, 0.5]).unwrap();
        assert!((c.objective(cost.view()) - lp.objective(cost.view())).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(monotone_coupling(&[]).is_err());
        assert!(monotone_coupling(&[1.5, -0.5]).is_err());
        assert!(monotone_coupling(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn zero_weight_rows_are_empty() {
        let c = monotone_coupling(&[0.0, 1.0, 0.0]).unwrap();
        assert!(c.entries().iter().all(|&(i, _, _)| i == 1));
        assert_eq!(c.entries().len(), 3);
    }

    proptest! {
        #[test]
        fn marginals_and_sparsity(raw in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let c = monotone_coupling(&w).unwrap();
            prop_assert!(c.entries().len() < 2 * w.len());
            prop_assert!(c.entries().iter().all(|e| e.2 > 0.0));
            for (s, r) in c.row_sums().iter().zip(c.row_marginals()) {
                prop_assert!((s - r).abs() <= 1e-12);
            }
            for (s, r) in c.col_sums().iter().zip(c.col_marginals()) {
                prop_assert!((s - r).abs() <= 1e-12);
            }
        }

        #[test]
        fn optimal_for_sorted_particles(
            raw in prop::collection::vec(0.01f64..1.0, 1..8),
            xs in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            let n = raw.len();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let mut x = xs[..n].to_vec();
            x.sort_by(f64::total_cmp);
            let cost = Array2::from_shape_fn((n, n), |(i, j)| (x[i] - x[j]).powi(2));
            let mono = monotone_coupling(&w).unwrap();
            let lp = lp_transport(cost.view(), &w, &vec![1.0 / n as f64; n]).unwrap();
            prop_assert!((mono.objective(cost.view()) - lp.objective(cost.view())).abs() <= 1e-9);
        }
    }
}
