//! Discrete maximal correlation: the best coupling of two finite
//! distributions under the profit `⟨u_j, y_k⟩`.
//!
//! Three exact routes, chosen by problem shape:
//! * equal-size uniform distributions with `n <= 9`: enumeration of all
//!   permutations;
//! * equal-size uniform distributions with `n <= 2000`: shortest augmenting
//!   path assignment (Hungarian method with potentials);
//! * anything else: the transportation simplex on the `n × m` profit table.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::EmpiricalDistribution;

pub const EXHAUSTIVE_MAX: usize = 9;
pub const ASSIGNMENT_MAX: usize = 2000;
pub const SIMPLEX_MAX_CELLS: usize = 250_000;

/// Sparse coupling as `(source index, target index, mass)` triplets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    pub entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn source_marginal(&self, n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n];
        for &(j, _, x) in &self.entries {
            m[j] += x;
        }
        m
    }

    pub fn target_marginal(&self, n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n];
        for &(_, k, x) in &self.entries {
            m[k] += x;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMethod {
    Exhaustive,
    Assignment,
    TransportSimplex,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssignmentResult {
    pub value: f64,
    pub coupling: Coupling,
    pub method: CouplingMethod,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major `n × m` table of `⟨source_j, target_k⟩`.
pub fn profit_table(source: &[&[f64]], target: &[&[f64]]) -> Vec<f64> {
    let mut table = Vec::with_capacity(source.len() * target.len());
    for u in source {
        for y in target {
            table.push(dot(u, y));
        }
    }
    table
}

/// Mean profit of the permutation coupling `j ↦ perm[j]`, summed in `j` order.
pub fn permutation_value(profit: &[f64], perm: &[usize]) -> f64 {
    let n = perm.len();
    perm.iter()
        .enumerate()
        .map(|(j, &k)| profit[j * n + k])
        .sum::<f64>()
        / n as f64
}

/// Advances to the next permutation in lexicographic order.
pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Best permutation by enumeration; ties keep the lexicographically first.
pub fn max_assignment_exhaustive(profit: &[f64], n: usize) -> (f64, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = permutation_value(profit, &perm);
    let mut best_perm = perm.clone();
    while next_permutation(&mut perm) {
        let v = permutation_value(profit, &perm);
        if v > best {
            best = v;
            best_perm.copy_from_slice(&perm);
        }
    }
    (best, best_perm)
}

/// Maximum-profit assignment of `n` rows into `m >= n` columns; returns the
/// column of each row.
pub fn max_assignment(profit: &[f64], n: usize, m: usize) -> Vec<usize> {
    assert!(n <= m && profit.len() == n * m);
    // Minimize the negated profit with row/column potentials, 1-based.
    let cost = |i: usize, j: usize| -profit[(i - 1) * m + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut cols = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            cols[owner[j] - 1] = j - 1;
        }
    }
    cols
}

/// Transportation simplex maximizing `Σ x_jk profit_jk` subject to row sums
/// `supply` and column sums `demand` (both summing to one).
pub fn transport_simplex_max(supply: &[f64], demand: &[f64], profit: &[f64]) -> Result<Coupling> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(Error::Empty("marginals"));
    }
    if profit.len() != n * m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            found: profit.len(),
        });
    }
    // Northwest-corner start: n + m - 1 basic cells forming a spanning tree.
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(n + m - 1);
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let x = s[i].min(d[j]);
        basis.push((i, j));
        flow.push(x);
        s[i] -= x;
        d[j] -= x;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = profit.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let eps = 1e-12 * scale;
    let mut is_basic = vec![false; n * m];
    for &(r, c) in &basis {
        is_basic[r * m + c] = true;
    }
    let nodes = n + m;
    let max_pivots = 1000 + 50 * n * m;
    for _ in 0..max_pivots {
        // adjacency of the basis tree: node r for rows, n + c for columns
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for (e, &(r, c)) in basis.iter().enumerate() {
            adj[r].push(e);
            adj[n + c].push(e);
        }
        let other = |e: usize, node: usize| {
            let (r, c) = basis[e];
            if node == r {
                n + c
            } else {
                r
            }
        };
        // potentials with u_r + v_c = profit on basic cells
        let mut pot = vec![f64::NAN; nodes];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &e in &adj[node] {
                let next = other(e, node);
                if pot[next].is_nan() {
                    let (r, c) = basis[e];
                    pot[next] = profit[r * m + c] - pot[node];
                    stack.push(next);
                }
            }
        }
        if pot.iter().any(|p| p.is_nan()) {
            return Err(Error::Numerical("transport simplex basis is not a spanning tree".into()));
        }
        let mut entering = None;
        let mut best = eps;
        for r in 0..n {
            for c in 0..m {
                if !is_basic[r * m + c] {
                    let reduced = profit[r * m + c] - pot[r] - pot[n + c];
                    if reduced > best {
                        best = reduced;
                        entering = Some((r, c));
                    }
                }
            }
        }
        let Some((er, ec)) = entering else {
            let entries = basis
                .iter()
                .zip(&flow)
                .filter(|(_, &x)| x > 0.0)
                .map(|(&(r, c), &x)| (r, c, x))
                .collect();
            return Ok(Coupling { entries });
        };
        // tree path from row er to column ec
        let mut parent_edge = vec![usize::MAX; nodes];
        let mut seen = vec![false; nodes];
        seen[er] = true;
        let mut stack = vec![er];
        while let Some(node) = stack.pop() {
            if node == n + ec {
                break;
            }
            for &e in &adj[node] {
                let next = other(e, node);
                if !seen[next] {
                    seen[next] = true;
                    parent_edge[next] = e;
                    stack.push(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = n + ec;
        while node != er {
            let e = parent_edge[node];
            path.push(e);
            node = other(e, node);
        }
        // Walking from column ec: edges alternate -, +, -, ...
        let mut theta = f64::INFINITY;
        let mut leaving = 0;
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 0 && flow[e] < theta {
                theta = flow[e];
                leaving = e;
            }
        }
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[e] -= theta;
            } else {
                flow[e] += theta;
            }
        }
        let (lr, lc) = basis[leaving];
        is_basic[lr * m + lc] = false;
        is_basic[er * m + ec] = true;
        basis[leaving] = (er, ec);
        flow[leaving] = theta;
    }
    Err(Error::Numerical("transport simplex exceeded its pivot budget".into()))
}

fn is_uniform(weights: &[f64]) -> bool {
    let target = 1.0 / weights.len() as f64;
    weights.iter().all(|w| (w - target).abs() <= 1e-12 * target)
}

/// Maximal correlation between two finite distributions, with the
/// optimal coupling.
pub fn max_corr_assignment(
    source: &EmpiricalDistribution,
    target: &EmpiricalDistribution,
) -> Result<AssignmentResult> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    let n = source.len();
    let m = target.len();
    let src: Vec<&[f64]> = source.atoms().collect();
    let tgt: Vec<&[f64]> = target.atoms().collect();
    if n == m && is_uniform(source.weights()) && is_uniform(target.weights()) {
        return max_corr_rows(&src, &tgt);
    }
    if n * m > SIMPLEX_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "{n} × {m} coupling exceeds {SIMPLEX_MAX_CELLS} cells"
        )));
    }
    let profit = profit_table(&src, &tgt);
    let coupling = transport_simplex_max(source.weights(), target.weights(), &profit)?;
    let value = coupling
        .entries
        .iter()
        .map(|&(j, k, x)| x * profit[j * m + k])
        .sum();
    Ok(AssignmentResult {
        value,
        coupling,
        method: CouplingMethod::TransportSimplex,
    })
}

/// Equal-weight samples of equal size; rows may repeat.
pub fn max_corr_rows(source: &[&[f64]], target: &[&[f64]]) -> Result<AssignmentResult> {
    let n = source.len();
    if n == 0 {
        return Err(Error::Empty("rows"));
    }
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: target.len(),
        });
    }
    let d = source[0].len();
    if let Some(bad) = source.iter().chain(target).find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let profit = profit_table(source, target);
    let (perm, method) = if n <= EXHAUSTIVE_MAX {
        (max_assignment_exhaustive(&profit, n).1, CouplingMethod::Exhaustive)
    } else if n <= ASSIGNMENT_MAX {
        (max_assignment(&profit, n, n), CouplingMethod::Assignment)
    } else {
        return Err(Error::TooLarge(format!(
            "assignment size {n} exceeds {ASSIGNMENT_MAX}"
        )));
    };
    let w = 1.0 / n as f64;
    Ok(AssignmentResult {
        value: permutation_value(&profit, &perm),
        coupling: Coupling {
            entries: perm.iter().enumerate().map(|(j, &k)| (j, k, w)).collect(),
        },
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_empirical;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn uniform(rows: Vec<Vec<f64>>) -> EmpiricalDistribution {
        EmpiricalDistribution::uniform(rows).unwrap()
    }

    #[test]
    fn sorted_pairing_in_one_dimension() {
        let s = uniform(vec![vec![0.0], vec![1.0]]);
        let r = max_corr_assignment(&s, &s).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.coupling.entries, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn identity_is_optimal_against_itself() {
        let rows = vec![vec![1.0, 2.0], vec![-0.5, 0.3], vec![2.0, -1.0], vec![0.0, 0.7]];
        let p = uniform(rows.clone());
        let r = max_corr_assignment(&p, &p).unwrap();
        let mean_sq = rows.iter().map(|r| dot(r, r)).sum::<f64>() / 4.0;
        assert!((r.value - mean_sq).abs() < 1e-14);
    }

    #[test]
    fn exhaustive_matches_hungarian_six_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let pts = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..6).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
            };
            let (a, b) = (pts(&mut rng), pts(&mut rng));
            let ar: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
            let br: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
            let profit = profit_table(&ar, &br);
            let (v, perm) = max_assignment_exhaustive(&profit, 6);
            let hung = max_assignment(&profit, 6, 6);
            assert_eq!(perm, hung);
            assert_eq!(v, permutation_value(&profit, &hung));
        }
    }

    #[test]
    fn rectangular_assignment() {
        // rows pick the best distinct columns
        let profit = vec![1.0, 5.0, 2.0, 4.0, 6.0, 0.0];
        let cols = max_assignment(&profit, 2, 3);
        assert_eq!(cols, vec![1, 0]);
    }

    #[test]
    fn simplex_general_weights() {
        // d=1: source {0,1} with (0.3,0.7), target {0,1} with (0.6,0.4);
        // comonotone coupling puts 0.4 on (1,1).
        let s = validate_empirical(vec![vec![0.0], vec![1.0]], vec![0.3, 0.7]).unwrap();
        let t = validate_empirical(vec![vec![0.0], vec![1.0]], vec![0.6, 0.4]).unwrap();
        let r = max_corr_assignment(&s, &t).unwrap();
        assert_eq!(r.method, CouplingMethod::TransportSimplex);
        assert!((r.value - 0.4).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_size_errors() {
        let s = uniform(vec![vec![0.0], vec![1.0]]);
        let t = uniform(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(max_corr_assignment(&s, &t).is_err());
        let big: Vec<Vec<f64>> = (0..2001).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = big.iter().map(Vec::as_slice).collect();
        assert!(matches!(max_corr_rows(&refs, &refs), Err(Error::TooLarge(_))));
    }

    fn brute_force_lp(supply: &[f64], demand: &[f64], profit: &[f64]) -> f64 {
        // For 2 × m problems the optimum puts row 0's mass on the columns with
        // the largest advantage profit[0][k] - profit[1][k] (greedy is exact).
        let m = demand.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            let da = profit[a] - profit[m + a];
            let db = profit[b] - profit[m + b];
            db.total_cmp(&da)
        });
        let mut left = supply[0];
        let mut value = 0.0;
        for k in order {
            let x = left.min(demand[k]);
            left -= x;
            value += x * profit[k] + (demand[k] - x) * profit[m + k];
        }
        value
    }

    proptest! {
        #[test]
        fn simplex_matches_greedy_two_rows(
            s0 in 0.05f64..0.95,
            raw in prop::collection::vec(0.05f64..1.0, 2..7),
            profit in prop::collection::vec(-2.0f64..2.0, 14),
        ) {
            let total: f64 = raw.iter().sum();
            let demand: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let m = demand.len();
            let profit = &profit[..2 * m];
            let supply = [s0, 1.0 - s0];
            let c = transport_simplex_max(&supply, &demand, profit).unwrap();
            let v: f64 = c.entries.iter().map(|&(j, k, x)| x * profit[j * m + k]).sum();
            prop_assert!((v - brute_force_lp(&supply, &demand, profit)).abs() < 1e-12);
            let rows = c.source_marginal(2);
            let cols = c.target_marginal(m);
            prop_assert!((rows[0] - supply[0]).abs() < 1e-12 && (rows[1] - supply[1]).abs() < 1e-12);
            for (a, b) in cols.iter().zip(&demand) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
