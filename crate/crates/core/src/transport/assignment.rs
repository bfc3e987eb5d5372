//! Hungarian algorithm (shortest augmenting path form, `O(N^3)`).

use ndarray::ArrayView2;

use crate::{Error, Result};

/// Permutation `sigma` minimising `sum_j cost[sigma[j]][j]`.
///
/// `sigma[j]` is the row assigned to column `j`. Ties are broken towards the
/// lowest index, so the result is deterministic.
pub fn assignment_coupling(cost: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    assignment_coupling_counted(cost, &mut 0)
}

pub fn assignment_coupling_counted(cost: ArrayView2<'_, f64>, ops: &mut u64) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(Error::arg(format!("assignment needs a square cost matrix, got {n}x{m}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::arg("assignment costs must be finite"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based arrays; column 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0usize;
        min_to.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[col0] = true;
            let i0 = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = col0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    col1 = j;
                }
            }
            *ops += n as u64;
            if col1 == 0 {
                return Err(Error::Solver("assignment search found no free column".into()));
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    Ok((1..=n).map(|j| row_of_col[j] - 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn objective(cost: &Array2<f64>, sigma: &[usize]) -> f64 {
        sigma.iter().enumerate().map(|(j, &i)| cost[[i, j]]).sum()
    }

    fn brute_force(cost: &Array2<f64>) -> f64 {
        fn rec(cost: &Array2<f64>, j: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let n = cost.nrows();
            if j == n {
                *best = best.min(acc);
                return;
            }
            for i in 0..n {
                if !used[i] {
                    used[i] = true;
                    rec(cost, j + 1, used, acc + cost[[i, j]], best);
                    used[i] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.nrows()], 0.0, &mut best);
        best
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(assignment_coupling(array![[2.0]].view()).unwrap(), vec![0]);
        assert_eq!(
            assignment_coupling(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap(),
            vec![0, 1]
        );
        assert_eq!(
            assignment_coupling(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap(),
            vec![1, 0]
        );
    }

    #[test]
    fn non_square_rejected() {
        assert!(assignment_coupling(Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn four_by_four_against_brute_force() {
        let cost = array![
            [7.0, 3.0, 9.0, 1.5],
            [2.0, 8.0, 4.0, 6.0],
            [5.5, 1.0, 3.0, 9.0],
            [4.0, 6.5, 2.5, 3.0]
        ];
        let sigma = assignment_coupling(cost.view()).unwrap();
        assert_eq!(objective(&cost, &sigma), brute_force(&cost));
    }

    proptest! {
        #[test]
        fn matches_enumeration(n in 1usize..7, values in prop::collection::vec(-10.0f64..10.0, 36)) {
            let cost = Array2::from_shape_fn((n, n), |(i, j)| values[i * 6 + j]);
            let sigma = assignment_coupling(cost.view()).unwrap();
            let mut seen = sigma.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            prop_assert!((objective(&cost, &sigma) - brute_force(&cost)).abs() <= 1e-9);
        }
    }
}
