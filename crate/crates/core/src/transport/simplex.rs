//! Transportation simplex on the bipartite spanning-tree basis.

use ndarray::ArrayView2;

/// Optimal flow (row-major `n x n`), or `None` if the pivot budget runs out.
pub(super) fn network_simplex(cost: ArrayView2<'_, f64>, rows: &[f64], cols: &[f64], ops: &mut u64) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut flow = vec![0.0; n * n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
    least_cost_basis(cost, rows, cols, &mut flow, &mut adj, ops);

    let scale = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-13 * (1.0 + scale);
    let cells = n * n;
    let block = n.max(16);
    let mut cursor = 0usize;
    let mut pot = vec![0.0; 2 * n];
    let mut parent = vec![usize::MAX; 2 * n];
    let mut depth = vec![0usize; 2 * n];
    let mut stack = Vec::with_capacity(2 * n);
    let max_pivots = 20 * cells + 1000;

    for _ in 0..max_pivots {
        tree_potentials(cost, &adj, &mut pot, &mut parent, &mut depth, &mut stack);
        *ops += 2 * n as u64;

        // block pricing over cells in cyclic order
        let mut best = usize::MAX;
        let mut best_rc = -eps;
        let mut scanned = 0;
        while scanned < cells {
            let end = (scanned + block).min(cells);
            for _ in scanned..end {
                let (i, j) = (cursor / n, cursor % n);
                let rc = cost[[i, j]] - pot[i] - pot[n + j];
                if rc < best_rc {
                    best_rc = rc;
                    best = cursor;
                }
                cursor += 1;
                if cursor == cells {
                    cursor = 0;
                }
            }
            *ops += (end - scanned) as u64;
            scanned = end;
            if best != usize::MAX {
                break;
            }
        }
        if best == usize::MAX {
            return Some(flow);
        }

        let (a, b) = (best / n, n + best % n);
        // tree path a -> apex <- b
        let (mut x, mut y) = (a, b);
        let mut from_a = Vec::new();
        let mut from_b = Vec::new();
        while x != y {
            if depth[x] >= depth[y] {
                from_a.push(x);
                x = parent[x];
            } else {
                from_b.push(y);
                y = parent[y];
            }
        }
        // nodes from b back to a
        let mut path = from_b;
        path.push(x);
        path.extend(from_a.iter().rev());
        *ops += path.len() as u64;

        let cell = |u: usize, v: usize| if u < n { u * n + (v - n) } else { v * n + (u - n) };
        let mut theta = f64::INFINITY;
        let mut leaving = 0;
        for (k, w) in path.windows(2).enumerate() {
            if k % 2 == 0 {
                let f = flow[cell(w[0], w[1])];
                if f < theta {
                    theta = f;
                    leaving = k;
                }
            }
        }
        flow[best] += theta;
        for (k, w) in path.windows(2).enumerate() {
            let c = cell(w[0], w[1]);
            if k == leaving {
                flow[c] = 0.0;
            } else if k % 2 == 0 {
                flow[c] = (flow[c] - theta).max(0.0);
            } else {
                flow[c] += theta;
            }
        }
        let (u, v) = (path[leaving], path[leaving + 1]);
        adj[u].retain(|&w| w != v);
        adj[v].retain(|&w| w != u);
        adj[a].push(b);
        adj[b].push(a);
    }
    None
}

/// Matrix-minimum starting basis: cells in increasing cost, each allocation
/// closing one row or column, giving a spanning tree of `2n - 1` cells.
fn least_cost_basis(
    cost: ArrayView2<'_, f64>,
    rows: &[f64],
    cols: &[f64],
    flow: &mut [f64],
    adj: &mut [Vec<usize>],
    ops: &mut u64,
) {
    let n = rows.len();
    let mut order: Vec<(f64, usize)> = cost.iter().copied().zip(0..n * n).collect();
    let mut comparisons = 0u64;
    order.sort_unstable_by(|p, q| {
        comparisons += 1;
        p.0.total_cmp(&q.0).then(p.1.cmp(&q.1))
    });
    *ops += comparisons;
    let mut rem_r = rows.to_vec();
    let mut rem_c = cols.to_vec();
    let mut row_open = vec![true; n];
    let mut col_open = vec![true; n];
    let (mut open_rows, mut open_cols) = (n, n);
    for (_, idx) in order {
        let (i, j) = (idx / n, idx % n);
        if !row_open[i] || !col_open[j] {
            continue;
        }
        adj[i].push(n + j);
        adj[n + j].push(i);
        let close_row = if open_rows == 1 && open_cols == 1 {
            flow[idx] = rem_r[i].min(rem_c[j]);
            break;
        } else if open_rows == 1 {
            false
        } else if open_cols == 1 {
            true
        } else {
            rem_r[i] <= rem_c[j]
        };
        if close_row {
            let delta = rem_r[i];
            flow[idx] = delta;
            rem_c[j] = (rem_c[j] - delta).max(0.0);
            rem_r[i] = 0.0;
            row_open[i] = false;
            open_rows -= 1;
        } else {
            let delta = rem_c[j];
            flow[idx] = delta;
            rem_r[i] = (rem_r[i] - delta).max(0.0);
            rem_c[j] = 0.0;
            col_open[j] = false;
            open_cols -= 1;
        }
    }
}

/// Dual values with `pot[i] + pot[n + j] = cost[i][j]` on every basic cell,
/// rooted at row 0, plus parent and depth of every node.
fn tree_potentials(
    cost: ArrayView2<'_, f64>,
    adj: &[Vec<usize>],
    pot: &mut [f64],
    parent: &mut [usize],
    depth: &mut [usize],
    stack: &mut Vec<usize>,
) {
    let n = adj.len() / 2;
    parent.fill(usize::MAX);
    pot[0] = 0.0;
    depth[0] = 0;
    parent[0] = 0;
    stack.clear();
    stack.push(0);
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if parent[v] != usize::MAX {
                continue;
            }
            parent[v] = u;
            depth[v] = depth[u] + 1;
            pot[v] = if u < n { cost[[u, v - n]] - pot[u] } else { cost[[v, u - n]] - pot[u] };
            stack.push(v);
        }
    }
}
