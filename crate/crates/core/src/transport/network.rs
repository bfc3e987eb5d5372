//! Exact transportation LP.
//!
//! The transportation simplex is tried first. Should it exhaust its pivot
//! budget, the problem is re-solved as a min-cost flow by successive
//! shortest paths.
//!
//! The bipartite min-cost-flow problem is solved with Dijkstra on reduced
//! costs, started from a greedy flow on the arcs that are tight under the
//! row and column minima. The optimal flow is then pushed
//! to a vertex of the transportation polytope by cancelling any cycle left in
//! its support, which leaves a forest with at most `2N - 1` edges.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ndarray::ArrayView2;

use super::simplex::network_simplex;
use super::{check_probability_vector, Coupling};
use crate::{Error, Result};

/// Residual supply or demand below this is treated as exhausted.
const MASS_TOL: f64 = 1e-14;

/// Optimal coupling of `rows` and `cols` under `cost`.
pub fn lp_transport(cost: ArrayView2<'_, f64>, rows: &[f64], cols: &[f64]) -> Result<Coupling> {
    lp_transport_counted(cost, rows, cols, &mut 0)
}

pub fn lp_transport_counted(
    cost: ArrayView2<'_, f64>,
    rows: &[f64],
    cols: &[f64],
    ops: &mut u64,
) -> Result<Coupling> {
    let n = rows.len();
    if cost.dim() != (n, n) || cols.len() != n {
        return Err(Error::arg(format!(
            "cost is {:?} but marginals have lengths {} and {}",
            cost.dim(),
            n,
            cols.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::arg("transport costs must be finite"));
    }
    let rows = check_probability_vector(rows, "row marginals")?;
    let cols = check_probability_vector(cols, "column marginals")?;

    let flow = match network_simplex(cost, &rows, &cols, ops) {
        Some(flow) => flow,
        None => {
            let mut flow = vec![0.0; n * n];
            successive_shortest_paths(cost, &rows, &cols, &mut flow, ops)?;
            cancel_support_cycles(cost, &mut flow, n, ops);
            flow
        }
    };

    let entries = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let t = flow[i * n + j];
            (t > 0.0).then_some((i, j, t))
        })
        .collect();
    Ok(Coupling::new(n, entries, rows, cols))
}

fn successive_shortest_paths(
    cost: ArrayView2<'_, f64>,
    rows: &[f64],
    cols: &[f64],
    flow: &mut [f64],
    ops: &mut u64,
) -> Result<()> {
    let n = rows.len();
    let mut excess = rows.to_vec();
    let mut deficit = cols.to_vec();
    // Node potentials, sources 0..n and sinks n..2n; the reduced cost of arc
    // (i, j) is cost[i][j] + potential[i] - potential[n + j] >= 0.
    let mut potential = vec![0.0; 2 * n];
    for j in 0..n {
        potential[n + j] = (0..n).map(|i| cost[[i, j]]).fold(f64::INFINITY, f64::min);
    }
    for i in 0..n {
        potential[i] = -(0..n).map(|j| cost[[i, j]] - potential[n + j]).fold(f64::INFINITY, f64::min);
    }
    // greedy flow on tight arcs
    for i in 0..n {
        for j in 0..n {
            if excess[i] <= MASS_TOL {
                break;
            }
            if deficit[j] <= MASS_TOL || cost[[i, j]] + potential[i] - potential[n + j] > 0.0 {
                continue;
            }
            let delta = excess[i].min(deficit[j]);
            flow[i * n + j] += delta;
            excess[i] -= delta;
            deficit[j] -= delta;
        }
    }
    *ops += 3 * (n * n) as u64;

    let mut dist = vec![f64::INFINITY; 2 * n];
    let mut pred = vec![usize::MAX; 2 * n];
    let mut done = vec![false; 2 * n];
    let mut heap = BinaryHeap::new();

    let max_rounds = 8 * n * n + 16;
    for _ in 0..max_rounds {
        if excess.iter().all(|&e| e <= MASS_TOL) || deficit.iter().all(|&e| e <= MASS_TOL) {
            return Ok(());
        }
        heap.clear();
        for v in 0..2 * n {
            dist[v] = f64::INFINITY;
            pred[v] = usize::MAX;
            done[v] = false;
        }
        for i in 0..n {
            if excess[i] > MASS_TOL {
                dist[i] = 0.0;
                heap.push(Reverse(HeapKey::new(0.0, i, n)));
            }
        }

        let mut target = None;
        while let Some(Reverse(key)) = heap.pop() {
            let best = key.node;
            if done[best] || key.dist > dist[best].to_bits() {
                continue;
            }
            done[best] = true;
            let best_d = dist[best];
            *ops += 1;
            if best < n {
                let i = best;
                for j in 0..n {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[[i, j]] + potential[i] - potential[v]).max(0.0);
                    let nd = best_d + rc;
                    if nd < dist[v] {
                        dist[v] = nd;
                        pred[v] = i;
                        heap.push(Reverse(HeapKey::new(nd, v, n)));
                    }
                }
                *ops += n as u64;
            } else {
                let j = best - n;
                if deficit[j] > MASS_TOL {
                    target = Some(best);
                    break;
                }
                for i in 0..n {
                    if done[i] || flow[i * n + j] <= 0.0 {
                        continue;
                    }
                    let rc = (-cost[[i, j]] + potential[best] - potential[i]).max(0.0);
                    let nd = best_d + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        pred[i] = best;
                        heap.push(Reverse(HeapKey::new(nd, i, n)));
                    }
                }
                *ops += n as u64;
            }
        }
        let Some(target) = target else {
            // Remaining imbalance is rounding residue between the two marginals.
            return Ok(());
        };

        let reach = dist[target];
        for v in 0..2 * n {
            potential[v] += dist[v].min(reach);
        }

        // bottleneck along the path
        let mut delta = deficit[target - n];
        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u >= n {
                // reverse arc: sink u cancels flow on (v, u)
                delta = delta.min(flow[v * n + (u - n)]);
            }
            v = u;
        }
        let source = v;
        delta = delta.min(excess[source]);
        if !(delta > 0.0) {
            return Err(Error::Solver("zero-capacity augmenting path".into()));
        }

        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u < n {
                flow[u * n + (v - n)] += delta;
            } else {
                let cell = &mut flow[v * n + (u - n)];
                *cell = if *cell <= delta { 0.0 } else { *cell - delta };
            }
            *ops += 1;
            v = u;
        }
        excess[source] = if excess[source] <= delta { 0.0 } else { excess[source] - delta };
        let d = &mut deficit[target - n];
        *d = if *d <= delta { 0.0 } else { *d - delta };
    }
    Err(Error::Solver("successive shortest paths did not terminate".into()))
}

/// Dijkstra queue key: distance, then sinks before sources, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct HeapKey {
    /// Bit pattern of a non-negative distance, which orders like the value.
    dist: u64,
    source: bool,
    node: usize,
}

impl HeapKey {
    fn new(dist: f64, node: usize, n: usize) -> Self {
        Self { dist: dist.to_bits(), source: node < n, node }
    }
}

/// Removes cycles from the support of an optimal flow without increasing its
/// cost, so the result is a basic (vertex) solution.
fn cancel_support_cycles(cost: ArrayView2<'_, f64>, flow: &mut [f64], n: usize, ops: &mut u64) {
    loop {
        let Some(cycle) = find_support_cycle(flow, n) else {
            return;
        };
        *ops += cycle.len() as u64;
        // cycle alternates +,-,+,- starting with the closing edge
        let signed_cost: f64 = cycle
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| if k % 2 == 0 { cost[[i, j]] } else { -cost[[i, j]] })
            .sum();
        let shrink_parity = if signed_cost > 0.0 { 0 } else { 1 };
        let theta = cycle
            .iter()
            .enumerate()
            .filter(|(k, _)| k % 2 == shrink_parity)
            .map(|(_, &(i, j))| flow[i * n + j])
            .fold(f64::INFINITY, f64::min);
        let mut zeroed = false;
        for (k, &(i, j)) in cycle.iter().enumerate() {
            let cell = &mut flow[i * n + j];
            if k % 2 == shrink_parity {
                if !zeroed && *cell <= theta {
                    *cell = 0.0;
                    zeroed = true;
                } else {
                    *cell = (*cell - theta).max(0.0);
                }
            } else {
                *cell += theta;
            }
        }
    }
}

/// Finds one cycle in the bipartite support graph, as an alternating list of
/// cells whose first element is the edge that closed it.
fn find_support_cycle(flow: &[f64], n: usize) -> Option<Vec<(usize, usize)>> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn root(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
    for i in 0..n {
        for j in 0..n {
            if flow[i * n + j] <= 0.0 {
                continue;
            }
            let (a, b) = (root(&mut parent, i), root(&mut parent, n + j));
            if a == b {
                let path = forest_path(&adjacency, n + j, i);
                let mut cycle = vec![(i, j)];
                for w in path.windows(2) {
                    let (u, v) = (w[0], w[1]);
                    cycle.push(if u < n { (u, v - n) } else { (v, u - n) });
                }
                return Some(cycle);
            }
            parent[a] = b;
            adjacency[i].push(n + j);
            adjacency[n + j].push(i);
        }
    }
    None
}

fn forest_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut prev = vec![usize::MAX; adjacency.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    prev[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adjacency[u] {
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut v = to;
    while v != from {
        v = prev[v];
        path.push(v);
    }
    path.reverse();
    path
}
