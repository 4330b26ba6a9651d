//! Evaluation of the piecewise-affine dual potential
//! `w*(u) = max_k ⟨u, Y_k⟩ - w_k` and the cell an input point falls in.

use crate::error::{Error, Result};
use crate::types::{DualWeights, EmpiricalDistribution};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(w*(u), k)` where `k` is the lowest index attaining the maximum.
pub fn potential_eval(
    w: &DualWeights,
    target: &EmpiricalDistribution,
    u: &[f64],
) -> Result<(f64, usize)> {
    if u.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: u.len(),
        });
    }
    if w.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: w.len(),
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, (atom, wk)) in target.atoms().zip(w.as_slice()).enumerate() {
        let v = dot(u, atom) - wk;
        if v > best {
            best = v;
            arg = k;
        }
    }
    Ok((best, arg))
}

const LEAF_SIZE: usize = 8;
/// Targets this small are scanned directly.
const SCAN_MAX: usize = 32;
const NO_CHILD: u32 = u32::MAX;

/// Atom coordinates prepared for repeated argmax queries.
///
/// Binding a weight vector fits `w_k ≈ c + ⟨b, Y_k⟩ + ½ Σ_i s_i Y_ki²` with
/// `s_i > 0` and leaves residuals `r_k ≥ r_min`. With `z_k = S^{1/2} Y_k`,
/// `q = S^{-1/2}(u - b)` and `h_k = √(2 (r_k - r_min))`,
///
/// `⟨u, Y_k⟩ - w_k = ½‖q‖² - c - r_min - ½ ‖(q, 0) - (z_k, h_k)‖²`,
///
/// so the argmax is a nearest-neighbour query among the lifted points
/// `(z_k, h_k)`. The fit only shapes the search: when `w` is close to a
/// convex quadratic the lifted heights are small and the query is local.
/// Boxes of a kd-tree bound their pieces through the squared distance from
/// `(q, 0)`; boxes whose padded bound falls strictly below the incumbent are
/// skipped. Piece values are computed directly, so results are identical to
/// the brute-force scan, including the lowest-index tie break.
pub struct PotentialIndex {
    dim: usize,
    n: usize,
    coords: Vec<f64>,
}

struct Node {
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

/// Per-evaluation view binding the index to a weight vector.
pub struct BoundPotential<'a> {
    index: &'a PotentialIndex,
    weights: Vec<f64>,
    /// `b_i` and `s_i^{-1/2}` of the quadratic fit.
    shift: Vec<f64>,
    inv_sqrt_s: Vec<f64>,
    /// `c + r_min`.
    offset: f64,
    /// Magnitude of the terms entering the bound, for round-off padding.
    magnitude: f64,
    /// Original atom index of each slot; nodes cover slot ranges.
    slots: Vec<u32>,
    /// `(Y_k, w_k)` in slot order.
    pieces: Vec<f64>,
    nodes: Vec<Node>,
    /// Bounding boxes of `(z_k, h_k)`, `2 (d + 1)` values per node: lows then highs.
    boxes: Vec<f64>,
}

/// Least-squares fit of `w ≈ c + ⟨b, y⟩ + ½ Σ s_i y_i²`, returning `(c, b, s)`
/// with every `s_i` positive.
fn fit_quadratic(dim: usize, coords: &[f64], w: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = w.len();
    let fallback = || {
        let c = w.iter().sum::<f64>() / n as f64;
        (c, vec![0.0; dim], vec![1.0; dim])
    };
    let p = 2 * dim + 1;
    if n < 2 * p {
        return fallback();
    }
    let features = |k: usize, out: &mut [f64]| {
        let y = &coords[k * dim..(k + 1) * dim];
        out[0] = 1.0;
        for i in 0..dim {
            out[1 + i] = y[i];
            out[1 + dim + i] = 0.5 * y[i] * y[i];
        }
    };
    let mut ata = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut atb = nalgebra::DVector::<f64>::zeros(p);
    let mut f = vec![0.0; p];
    for (k, wk) in w.iter().enumerate() {
        features(k, &mut f);
        for a in 0..p {
            atb[a] += f[a] * wk;
            for b in 0..p {
                ata[(a, b)] += f[a] * f[b];
            }
        }
    }
    let Some(sol) = ata.cholesky().map(|c| c.solve(&atb)) else {
        return fallback();
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return fallback();
    }
    let mut s: Vec<f64> = sol.as_slice()[1 + dim..].to_vec();
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return fallback();
    }
    for v in &mut s {
        *v = v.max(1e-3 * top);
    }
    (sol[0], sol.as_slice()[1..1 + dim].to_vec(), s)
}

impl PotentialIndex {
    pub fn new(target: &EmpiricalDistribution) -> Self {
        Self {
            dim: target.dim(),
            n: target.len(),
            coords: target.coords().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bind(&self, w: &[f64]) -> BoundPotential<'_> {
        assert_eq!(w.len(), self.n);
        let dim = self.dim;
        let lift = dim + 1;
        let atom = |k: usize| &self.coords[k * dim..(k + 1) * dim];
        let (c, shift, s) = if self.n > 0 {
            fit_quadratic(dim, &self.coords, w)
        } else {
            (0.0, vec![0.0; dim], vec![1.0; dim])
        };
        let sqrt_s: Vec<f64> = s.iter().map(|v| v.sqrt()).collect();
        let residual = |k: usize| {
            let y = atom(k);
            let q: f64 = (0..dim).map(|i| shift[i] * y[i] + 0.5 * s[i] * y[i] * y[i]).sum();
            w[k] - c - q
        };
        let r_min = (0..self.n).map(residual).fold(f64::INFINITY, f64::min);
        let mut points = Vec::with_capacity(self.n * lift);
        let mut magnitude = c.abs() + r_min.abs();
        for (k, wk) in w.iter().enumerate() {
            let mut z2 = 0.0;
            for i in 0..dim {
                let z = sqrt_s[i] * atom(k)[i];
                z2 += z * z;
                points.push(z);
            }
            let h2 = (2.0 * (residual(k) - r_min)).max(0.0);
            points.push(h2.sqrt());
            magnitude = magnitude.max(z2 + h2 + wk.abs());
        }
        let mut order: Vec<u32> = (0..self.n as u32).collect();
        let mut bound = BoundPotential {
            index: self,
            weights: w.to_vec(),
            shift,
            inv_sqrt_s: sqrt_s.iter().map(|v| 1.0 / v).collect(),
            offset: c + r_min,
            magnitude,
            slots: Vec::new(),
            pieces: Vec::new(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if self.n > 0 {
            bound.build(&points, &mut order, 0, self.n);
        }
        bound.pieces = order
            .iter()
            .flat_map(|&k| atom(k as usize).iter().copied().chain(std::iter::once(w[k as usize])))
            .collect();
        bound.slots = order;
        bound
    }
}

impl BoundPotential<'_> {
    fn build(&mut self, points: &[f64], order: &mut [u32], start: usize, end: usize) -> u32 {
        let lift = self.index.dim + 1;
        let at = |k: u32| &points[k as usize * lift..(k as usize + 1) * lift];
        let members = &mut order[start..end];
        let mut lo = vec![f64::INFINITY; lift];
        let mut hi = vec![f64::NEG_INFINITY; lift];
        for &k in members.iter() {
            for (i, v) in at(k).iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            start: start as u32,
            end: end as u32,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..lift)
            .map(|a| (a, hi[a] - lo[a]))
            .fold((0, f64::NEG_INFINITY), |best, (a, s)| if s > best.1 { (a, s) } else { best })
            .0;
        let mid = members.len() / 2;
        members.select_nth_unstable_by(mid, |&a, &b| at(a)[axis].total_cmp(&at(b)[axis]).then(a.cmp(&b)));
        let left = self.build(points, order, start, start + mid);
        let right = self.build(points, order, start + mid, end);
        self.nodes[id as usize].left = left;
        self.nodes[id as usize].right = right;
        id
    }

    /// Squared distance from `(q, 0)` to a node's box.
    #[inline]
    fn box_distance<const D: usize>(&self, node: usize, q: &[f64]) -> f64 {
        let lift = if D == 0 { self.index.dim } else { D } + 1;
        let b = &self.boxes[node * 2 * lift..(node + 1) * 2 * lift];
        let (lo, hi) = b.split_at(lift);
        let mut d2 = lo[lift - 1] * lo[lift - 1];
        for i in 0..lift - 1 {
            let gap = (lo[i] - q[i]).max(q[i] - hi[i]).max(0.0);
            d2 += gap * gap;
        }
        d2
    }

    /// `(w*(u), original atom index)` with lowest-index tie break.
    #[inline]
    pub fn eval(&self, u: &[f64]) -> (f64, usize) {
        self.eval_from(u, None)
    }

    /// Same as [`eval`](Self::eval); `hint` is a likely maximizer used to
    /// tighten pruning and does not affect the result.
    pub fn eval_from(&self, u: &[f64], hint: Option<usize>) -> (f64, usize) {
        if self.index.n <= SCAN_MAX {
            return match self.index.dim {
                1 => self.scan::<1>(u),
                2 => self.scan::<2>(u),
                3 => self.scan::<3>(u),
                _ => self.scan::<0>(u),
            };
        }
        match self.index.dim {
            1 => self.search::<1>(u, hint),
            2 => self.search::<2>(u, hint),
            3 => self.search::<3>(u, hint),
            _ => self.search::<0>(u, hint),
        }
    }

    fn scan<const D: usize>(&self, u: &[f64]) -> (f64, usize) {
        let dim = if D == 0 { self.index.dim } else { D };
        let mut best = f64::NEG_INFINITY;
        let mut arg = usize::MAX;
        for (k, (y, w)) in self.index.coords.chunks_exact(dim).zip(&self.weights).enumerate() {
            let v = dot(u, y) - w;
            if v > best {
                best = v;
                arg = k;
            }
        }
        (best, arg)
    }

    /// `D` is the dimension when known at compile time, 0 otherwise.
    fn search<const D: usize>(&self, u: &[f64], hint: Option<usize>) -> (f64, usize) {
        let dim = if D == 0 { self.index.dim } else { D };
        let lift = dim + 1;
        let (mut best, mut arg) = match hint {
            Some(h) if h < self.index.n => (
                dot(u, &self.index.coords[h * dim..(h + 1) * dim]) - self.weights[h],
                h,
            ),
            _ => (f64::NEG_INFINITY, usize::MAX),
        };
        if self.nodes.is_empty() {
            return (best, arg);
        }
        let mut q = [0.0; 16];
        let mut q_heap = Vec::new();
        let q: &mut [f64] = if dim <= q.len() {
            &mut q[..dim]
        } else {
            q_heap.resize(dim, 0.0);
            &mut q_heap
        };
        for i in 0..dim {
            q[i] = (u[i] - self.shift[i]) * self.inv_sqrt_s[i];
        }
        let q2: f64 = q.iter().map(|v| v * v).sum();
        let top = 0.5 * q2 - self.offset;
        let pad = 1e-9 * (q2 + self.magnitude + self.offset.abs() + 1.0);
        let bound = |node: usize| top - 0.5 * self.box_distance::<D>(node, q) + pad;
        let mut stack: [(u32, f64); 64] = [(0, 0.0); 64];
        let mut depth = 1;
        stack[0] = (0, f64::INFINITY);
        while depth > 0 {
            depth -= 1;
            let (id, b) = stack[depth];
            if b < best {
                continue;
            }
            let node = &self.nodes[id as usize];
            if node.left == NO_CHILD {
                for slot in node.start as usize..node.end as usize {
                    let z = &self.pieces[slot * lift..(slot + 1) * lift];
                    let v = dot(u, &z[..dim]) - z[dim];
                    let k = self.slots[slot] as usize;
                    if v > best || (v == best && k < arg) {
                        best = v;
                        arg = k;
                    }
                }
                continue;
            }
            let bl = bound(node.left as usize);
            let br = bound(node.right as usize);
            // visit the more promising child first
            let (first, fb, second, sb) = if bl >= br {
                (node.left, bl, node.right, br)
            } else {
                (node.right, br, node.left, bl)
            };
            if sb >= best {
                stack[depth] = (second, sb);
                depth += 1;
            }
            if fb >= best {
                stack[depth] = (first, fb);
                depth += 1;
            }
        }
        (best, arg)
    }
}
