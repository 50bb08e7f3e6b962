//! Primal network simplex for the dense transportation problem with
//! squared Euclidean cost, and the monotone rearrangement in one dimension.

use super::{PointSet, Result, TransportError, TransportPlan};
use crate::linalg;

pub const DEFAULT_PAIR_CAP: usize = 4_000_000;
const MASS_TOL: f64 = 1e-9;
const TOL_MONO: f64 = 1e-9;

fn check_inputs(src: &PointSet, tgt: &PointSet, cap: usize) -> Result<()> {
    if src.dim != tgt.dim {
        return Err(TransportError::Dimension(src.dim, tgt.dim));
    }
    if src.is_empty() || tgt.is_empty() {
        return Err(TransportError::Empty);
    }
    let (a, b) = (src.total_mass(), tgt.total_mass());
    if (a - b).abs() > MASS_TOL * a.max(b) {
        return Err(TransportError::Imbalance { src: a, tgt: b });
    }
    let pairs = src.len().saturating_mul(tgt.len());
    if pairs > cap {
        return Err(TransportError::Size { pairs, cap });
    }
    Ok(())
}

/// Exact optimal plan. One-dimensional inputs use the monotone
/// rearrangement; otherwise the network simplex runs on all pairs.
pub fn solve_exact(src: &PointSet, tgt: &PointSet, cap: usize) -> Result<TransportPlan> {
    check_inputs(src, tgt, cap)?;
    if src.dim == 1 {
        return monotone_1d(src, tgt);
    }
    network_simplex(src, tgt, cap)
}

/// North-west corner rule on sorted supports; optimal for convex costs on the line.
pub fn monotone_1d(src: &PointSet, tgt: &PointSet) -> Result<TransportPlan> {
    check_inputs(src, tgt, usize::MAX)?;
    if src.dim != 1 {
        return Err(TransportError::Dimension(src.dim, 1));
    }
    let order = |p: &PointSet| {
        let mut idx: Vec<usize> = (0..p.len()).filter(|&i| p.weights[i] > 0.0).collect();
        idx.sort_by(|&a, &b| p.coords[a].total_cmp(&p.coords[b]));
        idx
    };
    let (si, ti) = (order(src), order(tgt));
    let scale = src.total_mass() / tgt.total_mass();
    let mut pairs = Vec::new();
    let (mut a, mut b) = (0, 0);
    let mut ra = src.weights[si[0]];
    let mut rb = tgt.weights[ti[0]] * scale;
    loop {
        let m = ra.min(rb);
        if m > 0.0 {
            pairs.push((si[a], ti[b], m));
        }
        ra -= m;
        rb -= m;
        let a_done = ra <= 1e-15 * src.weights[si[a]];
        let b_done = rb <= 1e-15 * tgt.weights[ti[b]];
        if a_done {
            a += 1;
        }
        if b_done {
            b += 1;
        }
        if a == si.len() || b == ti.len() {
            break;
        }
        if a_done {
            ra = src.weights[si[a]];
        }
        if b_done {
            rb = tgt.weights[ti[b]] * scale;
        }
    }
    Ok(TransportPlan::from_pairs(src.clone(), tgt.clone(), &pairs, TOL_MONO))
}

struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    flow: Vec<f64>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
}

struct Problem<'a> {
    src: &'a PointSet,
    tgt: &'a PointSet,
    m: usize,
    n: usize,
    root: usize,
    art: f64,
}

impl Problem<'_> {
    fn real_arcs(&self) -> usize {
        self.m * self.n
    }

    fn ends(&self, arc: usize) -> (usize, usize) {
        let real = self.real_arcs();
        if arc < real {
            (arc / self.n, self.m + arc % self.n)
        } else {
            let v = arc - real;
            if v < self.m {
                (v, self.root)
            } else {
                (self.root, v)
            }
        }
    }

    fn cost(&self, arc: usize) -> f64 {
        let real = self.real_arcs();
        if arc < real {
            linalg::dist2(self.src.point(arc / self.n), self.tgt.point(arc % self.n))
        } else if arc - real < self.m {
            0.0
        } else {
            self.art
        }
    }
}

/// Network simplex with block search pricing and the strongly feasible
/// leaving-arc rule.
pub fn network_simplex(src: &PointSet, tgt: &PointSet, cap: usize) -> Result<TransportPlan> {
    check_inputs(src, tgt, cap)?;
    let m = src.len();
    let n = tgt.len();
    let nodes = m + n + 1;
    let root = m + n;
    let total = src.total_mass() + tgt.total_mass();
    let scale = nodes as f64 / total;
    let tscale = src.total_mass() / tgt.total_mass();
    let mut maxc: f64 = 0.0;
    for i in 0..m {
        for j in 0..n {
            maxc = maxc.max(linalg::dist2(src.point(i), tgt.point(j)));
        }
    }
    let pb = Problem { src, tgt, m, n, root, art: (maxc + 1.0) * nodes as f64 };
    let real = pb.real_arcs();

    let mut t = Tree {
        parent: vec![root; nodes],
        pred: (0..nodes).map(|v| real + v).collect(),
        up: (0..nodes).map(|v| v < m).collect(),
        flow: (0..nodes)
            .map(|v| {
                if v < m {
                    src.weights[v] * scale
                } else if v < m + n {
                    tgt.weights[v - m] * tscale * scale
                } else {
                    0.0
                }
            })
            .collect(),
        depth: (0..nodes).map(|v| if v == root { 0 } else { 1 }).collect(),
        pi: (0..nodes).map(|v| if v >= m && v < root { pb.art } else { 0.0 }).collect(),
        children: vec![Vec::new(); nodes],
    };
    t.children[root] = (0..root).collect();

    let eps = 1e-12 * (maxc + 1.0);
    let block = ((real as f64).sqrt() as usize).max(10);
    let max_pivots = 200usize.saturating_mul(real).max(10_000);
    let mut next = 0usize;
    let mut pivots = 0usize;
    loop {
        let mut best = usize::MAX;
        let mut min = -eps;
        let mut count = 0;
        for _ in 0..real {
            let e = next;
            next += 1;
            if next == real {
                next = 0;
            }
            let (u, v) = pb.ends(e);
            let rc = pb.cost(e) + t.pi[u] - t.pi[v];
            if rc < min {
                min = rc;
                best = e;
            }
            count += 1;
            if count == block {
                if best != usize::MAX {
                    break;
                }
                count = 0;
            }
        }
        if best == usize::MAX {
            break;
        }
        pivot(&pb, &mut t, best);
        pivots += 1;
        if pivots > max_pivots {
            return Err(TransportError::Convergence { iterations: pivots, residual: min });
        }
    }

    let mut pairs = Vec::new();
    for v in 0..root {
        let arc = t.pred[v];
        if arc < real && t.flow[v] > 0.0 {
            let (i, j) = (arc / n, arc % n);
            pairs.push((i, j, t.flow[v] / scale));
        }
    }
    pairs.sort_by_key(|p| (p.0, p.1));
    Ok(TransportPlan::from_pairs(src.clone(), tgt.clone(), &pairs, TOL_MONO))
}

fn pivot(pb: &Problem, t: &mut Tree, enter: usize) {
    let (u, v) = pb.ends(enter);
    // join node
    let (mut a, mut b) = (u, v);
    while a != b {
        if t.depth[a] >= t.depth[b] {
            a = t.parent[a];
        } else {
            b = t.parent[b];
        }
    }
    let join = a;

    // Flow is pushed along u -> v, then up from v to the join, then down to u.
    let mut delta = f64::INFINITY;
    let mut leave = usize::MAX;
    let mut leave_on_u_side = false;
    let mut w = u;
    while w != join {
        if t.up[w] && t.flow[w] < delta {
            delta = t.flow[w];
            leave = w;
            leave_on_u_side = true;
        }
        w = t.parent[w];
    }
    w = v;
    while w != join {
        if !t.up[w] && t.flow[w] <= delta {
            delta = t.flow[w];
            leave = w;
            leave_on_u_side = false;
        }
        w = t.parent[w];
    }

    w = u;
    while w != join {
        if t.up[w] {
            t.flow[w] -= delta;
        } else {
            t.flow[w] += delta;
        }
        w = t.parent[w];
    }
    w = v;
    while w != join {
        if t.up[w] {
            t.flow[w] += delta;
        } else {
            t.flow[w] -= delta;
        }
        w = t.parent[w];
    }
    t.flow[leave] = 0.0;

    // The subtree hanging below `leave` contains `q`; re-root it at `q` and
    // attach it to `p` through the entering arc.
    let (q, p) = if leave_on_u_side { (u, v) } else { (v, u) };
    let mut path = vec![q];
    while *path.last().unwrap() != leave {
        let last = *path.last().unwrap();
        path.push(t.parent[last]);
    }
    let old_parent = t.parent[leave];
    remove_child(&mut t.children[old_parent], leave);
    for k in (1..path.len()).rev() {
        let (child, par) = (path[k - 1], path[k]);
        remove_child(&mut t.children[par], child);
        t.children[child].push(par);
        t.parent[par] = child;
        t.pred[par] = t.pred[child];
        t.up[par] = !t.up[child];
        t.flow[par] = t.flow[child];
    }
    t.parent[q] = p;
    t.pred[q] = enter;
    t.up[q] = q == u;
    t.flow[q] = delta;
    t.children[p].push(q);

    let mut stack = vec![q];
    while let Some(x) = stack.pop() {
        let par = t.parent[x];
        let c = pb.cost(t.pred[x]);
        t.pi[x] = if t.up[x] { t.pi[par] - c } else { t.pi[par] + c };
        t.depth[x] = t.depth[par] + 1;
        stack.extend_from_slice(&t.children[x]);
    }
}

fn remove_child(list: &mut Vec<usize>, x: usize) {
    if let Some(pos) = list.iter().position(|&c| c == x) {
        list.swap_remove(pos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(src: &PointSet, tgt: &PointSet) -> f64 {
        fn rec(k: usize, used: &mut Vec<bool>, acc: f64, s: &PointSet, t: &PointSet, best: &mut f64) {
            if k == s.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..t.len() {
                if !used[j] {
                    used[j] = true;
                    rec(k + 1, used, acc + linalg::dist2(s.point(k), t.point(j)), s, t, best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(0, &mut vec![false; tgt.len()], 0.0, src, tgt, &mut best);
        best
    }

    #[test]
    fn identical_sets_give_identity() {
        let pts = PointSet::uniform(2, vec![0.0, 0.0, 1.0, 0.0, 0.3, 0.7, 0.9, 0.2]);
        let plan = network_simplex(&pts, &pts, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(plan.cost(), 0.0);
        assert!(plan.src_index.iter().zip(&plan.tgt_index).all(|(a, b)| a == b));
    }

    #[test]
    fn imbalance_and_size_errors() {
        let a = PointSet::uniform(2, vec![0.0, 0.0, 1.0, 1.0]);
        let b = PointSet::uniform(2, vec![0.0, 0.0]);
        assert!(matches!(solve_exact(&a, &b, DEFAULT_PAIR_CAP), Err(TransportError::Imbalance { .. })));
        assert!(matches!(solve_exact(&a, &a, 3), Err(TransportError::Size { .. })));
    }

    #[test]
    fn unequal_counts_split_mass() {
        let a = PointSet::new(1, vec![0.0, 1.0, 2.0], vec![2.0; 3], 1.0).unwrap();
        let b = PointSet::new(1, vec![0.5, 1.5], vec![3.0; 2], 1.0).unwrap();
        let ns = network_simplex(&a, &b, DEFAULT_PAIR_CAP).unwrap();
        let mono = monotone_1d(&a, &b).unwrap();
        assert!((ns.cost() - mono.cost()).abs() < 1e-12);
        let (r, c) = ns.marginal_errors();
        assert!(r < 1e-12 && c < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_permutation_brute_force(
            n in 2usize..7,
            raw in proptest::collection::vec(0.0f64..1.0, 28),
        ) {
            let src = PointSet::uniform(2, raw[..2 * n].to_vec());
            let tgt = PointSet::uniform(2, raw[14..14 + 2 * n].to_vec());
            let plan = network_simplex(&src, &tgt, DEFAULT_PAIR_CAP).unwrap();
            let bf = brute_force(&src, &tgt);
            prop_assert!((plan.cost() - bf).abs() <= 1e-12 * (1.0 + bf));
            let (r, c) = plan.marginal_errors();
            prop_assert!(r <= 1e-9 && c <= 1e-9);
            prop_assert!(plan.monotonicity_min(10_000, 1) >= -1e-9);
        }

        #[test]
        fn simplex_agrees_with_monotone_rearrangement(
            xs in proptest::collection::vec(-1.0f64..1.0, 12),
            ys in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let a = PointSet::uniform(1, xs);
            let b = PointSet::uniform(1, ys);
            let ns = network_simplex(&a, &b, DEFAULT_PAIR_CAP).unwrap();
            let mono = monotone_1d(&a, &b).unwrap();
            prop_assert!((ns.cost() - mono.cost()).abs() <= 1e-10);
        }
    }
}
