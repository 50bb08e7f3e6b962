//! Log-domain Sinkhorn iterations with geometric annealing of the
//! regularization.

use serde::{Deserialize, Serialize};

use super::{PointSet, Result, TransportError, TransportPlan};
use crate::linalg;

/// Regularization schedule: start at `start` (default: the largest pair
/// cost), multiply by `factor` until the target is reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annealing {
    pub start: Option<f64>,
    pub factor: f64,
    pub stage_iterations: usize,
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for Annealing {
    fn default() -> Self {
        Annealing { start: None, factor: 0.5, stage_iterations: 200, max_iterations: 20_000, tol: 1e-9 }
    }
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn solve_entropic(src: &PointSet, tgt: &PointSet, reg: f64, schedule: &Annealing) -> Result<TransportPlan> {
    if src.dim != tgt.dim {
        return Err(TransportError::Dimension(src.dim, tgt.dim));
    }
    if src.is_empty() || tgt.is_empty() {
        return Err(TransportError::Empty);
    }
    if !(reg > 0.0) || !(schedule.factor > 0.0 && schedule.factor < 1.0) {
        return Err(TransportError::Parameter(format!("reg = {reg}, factor = {}", schedule.factor)));
    }
    let total = src.total_mass();
    let (ta, tb) = (total, tgt.total_mass());
    if (ta - tb).abs() > 1e-9 * ta.max(tb) {
        return Err(TransportError::Imbalance { src: ta, tgt: tb });
    }
    let (m, n) = (src.len(), tgt.len());
    let cost = |i: usize, j: usize| linalg::dist2(src.point(i), tgt.point(j));
    let log_a: Vec<f64> = src.weights.iter().map(|w| (w / ta).ln()).collect();
    let log_b: Vec<f64> = tgt.weights.iter().map(|w| (w / tb).ln()).collect();
    let maxc = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| cost(i, j)).fold(0.0, f64::max);

    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut eps = schedule.start.unwrap_or(maxc.max(reg)).max(reg);
    let mut iterations = 0usize;
    let mut residual;
    loop {
        let last = eps <= reg;
        let stage_cap = if last { schedule.max_iterations } else { schedule.stage_iterations };
        let stage_tol = if last { schedule.tol } else { schedule.tol.max(1e-4) };
        let mut k = 0;
        loop {
            for i in 0..m {
                f[i] = eps * log_a[i] - eps * log_sum_exp((0..n).map(|j| (g[j] - cost(i, j)) / eps));
            }
            for j in 0..n {
                g[j] = eps * log_b[j] - eps * log_sum_exp((0..m).map(|i| (f[i] - cost(i, j)) / eps));
            }
            iterations += 1;
            k += 1;
            residual = (0..m)
                .map(|i| {
                    let row: f64 = (0..n).map(|j| ((f[i] + g[j] - cost(i, j)) / eps).exp()).sum();
                    (row - log_a[i].exp()).abs()
                })
                .sum::<f64>();
            if residual <= stage_tol || k >= stage_cap {
                break;
            }
        }
        if last {
            if residual > schedule.tol {
                return Err(TransportError::Convergence { iterations, residual });
            }
            break;
        }
        eps = (eps * schedule.factor).max(reg);
    }

    let floor = 1e-14;
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let p = ((f[i] + g[j] - cost(i, j)) / eps).exp();
            if p > floor {
                pairs.push((i, j, p * total));
            }
        }
    }
    Ok(TransportPlan::from_pairs(src.clone(), tgt.clone(), &pairs, 10.0 * reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{network_simplex, DEFAULT_PAIR_CAP};

    #[test]
    fn near_identity_on_identical_sets() {
        let coords: Vec<f64> = (0..10).flat_map(|k| [k as f64 * 0.1, (k % 3) as f64 * 0.2]).collect();
        let pts = PointSet::uniform(2, coords);
        let plan = solve_entropic(&pts, &pts, 1e-3, &Annealing::default()).unwrap();
        assert!(plan.cost() < 1e-3 * pts.total_mass());
        let (r, c) = plan.marginal_errors();
        assert!(r < 1e-6 && c < 1e-6);
    }

    #[test]
    fn close_to_exact_cost() {
        let a = PointSet::uniform(2, vec![0.0, 0.0, 1.0, 0.1, 0.4, 0.8, 0.7, 0.5]);
        let b = PointSet::uniform(2, vec![0.2, 0.3, 0.9, 0.9, 0.1, 0.6, 0.6, 0.0]);
        let exact = network_simplex(&a, &b, DEFAULT_PAIR_CAP).unwrap().cost();
        let ent = solve_entropic(&a, &b, 1e-3, &Annealing::default()).unwrap().cost();
        assert!((ent - exact).abs() <= 0.03 * exact);
    }

    #[test]
    fn rejects_bad_regularization() {
        let a = PointSet::uniform(1, vec![0.0]);
        assert!(matches!(
            solve_entropic(&a, &a, 0.0, &Annealing::default()),
            Err(TransportError::Parameter(_))
        ));
    }
}
