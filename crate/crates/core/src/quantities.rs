//! Localized energy `E_R`, flatness `D_R`, the λ-control ratio, L∞
//! statistics of the plan support, and the topological and global
//! half-space checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Domain, GeometryError};
use crate::linalg;
use crate::transport::{MapField, TransportPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantityError {
    #[error("{invalid} of {required} cells in B_R ∩ Ω0 have no map value")]
    Coverage { invalid: usize, required: usize },
    #[error("E = 0 while λ1/λ0 = {0}: inconsistent solver output")]
    Contradiction(f64),
    #[error("no support pairs anchored in the ball of radius {0}")]
    EmptySupport(f64),
    #[error("domain {0} has no chart extension")]
    MissingExtension(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, QuantityError>;

/// Largest fraction of required cells allowed to be invalid.
pub const COVERAGE_LIMIT: f64 = 0.02;

/// Scalar diagnostics of a configuration at radius `R` around the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub r: f64,
    pub e: f64,
    pub d: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Largest displacement of support pairs with `x0 ∈ B_R`.
    pub m: f64,
    /// `‖g0‖ + ‖g1‖` on `B_R`.
    pub delta: f64,
    /// `δ² / D`, or 0 when `D = 0`.
    pub delta2_over_d: f64,
}

impl EnergyReport {
    /// `ε' = R^{-(d+2)} ∫_{B_R} |T - x|^2 λ0 χ_{Ω0} + D`.
    pub fn smallness(&self, dim: usize) -> f64 {
        self.lambda0 * geometry::ball_volume(dim, 1.0) * self.e + self.d
    }
}

fn in_ball(x: &[f64], r: f64) -> bool {
    linalg::dot(x, x) < r * r
}

/// Midpoint-rule value of `R^{-2} ⨍_{B_R} |T - x|^2 χ_{Ω0}` from a map field
/// whose cell weights are source masses.
pub fn energy_e(map: &MapField, dom0: &Domain, r: f64) -> Result<f64> {
    let grid = &map.grid;
    let mut sum = 0.0;
    let (mut required, mut invalid) = (0, 0);
    for k in 0..grid.len() {
        let c = grid.center(k);
        if !in_ball(&c, r) {
            continue;
        }
        if map.valid[k] {
            required += 1;
            let u = map.displacement(k);
            sum += map.weight[k] / dom0.lambda * linalg::dot(u, u);
        } else if dom0.cell_fraction(&c, grid.h) > 0.0 {
            required += 1;
            invalid += 1;
        }
    }
    if invalid as f64 > COVERAGE_LIMIT * required as f64 {
        return Err(QuantityError::Coverage { invalid, required });
    }
    Ok(sum / (r * r * geometry::ball_volume(grid.dim, r)))
}

/// The same normalized average evaluated directly on support pairs with `x0 ∈ B_R`.
pub fn energy_from_plan(plan: &TransportPlan, r: f64) -> f64 {
    let sum: f64 = (0..plan.len())
        .filter(|&k| in_ball(plan.x0(k), r))
        .map(|k| plan.mass[k] / plan.lambda0 * linalg::dist2(plan.x0(k), plan.x1(k)))
        .sum();
    sum / (r * r * geometry::ball_volume(plan.dim, r))
}

/// Full report from plan support pairs and the two charts.
pub fn energy_report(plan: &TransportPlan, dom0: &Domain, dom1: &Domain, r: f64) -> Result<EnergyReport> {
    let e = energy_from_plan(plan, r);
    let d = geometry::deviation_d(&dom0.chart, &dom1.chart, r)?;
    let m = (0..plan.len())
        .filter(|&k| in_ball(plan.x0(k), r))
        .map(|k| linalg::dist2(plan.x0(k), plan.x1(k)).sqrt())
        .fold(0.0, f64::max);
    let delta = dom0.chart.sup_norm(r) + dom1.chart.sup_norm(r);
    Ok(EnergyReport {
        r,
        e,
        d,
        lambda0: plan.lambda0,
        lambda1: plan.lambda1,
        m,
        delta,
        delta2_over_d: if d > 0.0 { delta * delta / d } else { 0.0 },
    })
}

/// `|λ - 1|^2 / E` with `λ = λ1/λ0`; `0/0` is reported as 0.
pub fn control_lambda(report: &EnergyReport) -> Result<f64> {
    let lambda = report.lambda1 / report.lambda0;
    let num = (lambda - 1.0).powi(2);
    if report.e == 0.0 {
        if num <= 1e-24 {
            return Ok(0.0);
        }
        return Err(QuantityError::Contradiction(lambda));
    }
    Ok(num / report.e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfStats {
    pub radius: f64,
    pub pairs: usize,
    pub sup: f64,
    /// Largest `(x1 - x0)·e1`, pointing into the domains.
    pub inward: f64,
    /// Largest `(x1 - x0)·(-e1)`.
    pub outward: f64,
    pub tangential: f64,
    pub ratio: f64,
}

/// Displacement statistics over support pairs with `x0` or `x1` in `B_radius`,
/// normalized by `E^{1/(d+2)} + D^{1/2}`.
pub fn linf_statistics(plan: &TransportPlan, e: f64, d: f64, radius: f64) -> Result<LinfStats> {
    let mut stats = LinfStats {
        radius,
        pairs: 0,
        sup: 0.0,
        inward: f64::NEG_INFINITY,
        outward: f64::NEG_INFINITY,
        tangential: 0.0,
        ratio: 0.0,
    };
    for k in 0..plan.len() {
        let (a, b) = (plan.x0(k), plan.x1(k));
        if !(in_ball(a, radius) || in_ball(b, radius)) || plan.mass[k] <= 0.0 {
            continue;
        }
        let u: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
        stats.pairs += 1;
        stats.sup = stats.sup.max(linalg::norm(&u));
        stats.inward = stats.inward.max(u[0]);
        stats.outward = stats.outward.max(-u[0]);
        stats.tangential = stats.tangential.max(linalg::norm(&u[1..]));
    }
    if stats.pairs == 0 {
        return Err(QuantityError::EmptySupport(radius));
    }
    let scale = e.powf(1.0 / (plan.dim as f64 + 2.0)) + d.sqrt();
    stats.ratio = if scale > 0.0 { stats.sup / scale } else if stats.sup == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologicalCheck {
    pub holds: bool,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
}

/// Checks `T(B_{R/2}(p) ∩ Ω0) ⊂ B_R(p)` and the same for `T^{-1}` on support
/// pairs carrying non-negligible mass.
pub fn check_topological(plan: &TransportPlan, p: &[f64], r: f64) -> TopologicalCheck {
    let max_mass = plan.mass.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-12 * max_mass;
    let rel = |x: &[f64]| -> Vec<f64> { x.iter().zip(p).map(|(a, b)| a - b).collect() };
    let mut out = TopologicalCheck { holds: true, violations: 0, witnesses: Vec::new() };
    for k in 0..plan.len() {
        if plan.mass[k] <= floor {
            continue;
        }
        let (a, b) = (rel(plan.x0(k)), rel(plan.x1(k)));
        let forward = in_ball(&a, r / 2.0) && !in_ball(&b, r);
        let backward = in_ball(&b, r / 2.0) && !in_ball(&a, r);
        if forward || backward {
            out.holds = false;
            out.violations += 1;
            if out.witnesses.len() < 10 {
                out.witnesses.push(Witness {
                    x0: plan.x0(k).to_vec(),
                    x1: plan.x1(k).to_vec(),
                    mass: plan.mass[k],
                });
            }
        }
    }
    out
}

/// Whether the sampled indicator lies above the extended chart, up to one cell.
pub fn check_global_halfspace(dom: &Domain) -> Result<bool> {
    let ext = dom.extension.as_ref().ok_or(QuantityError::MissingExtension(dom.side))?;
    let ind = dom.sampled_indicator();
    let tol = ind.h * (1.0 + ext.max_slope());
    for (k, inside) in ind.inside.iter().enumerate() {
        if !inside {
            continue;
        }
        let x = ind.center(k);
        let s = if dom.dim > 1 { x[1].clamp(-ext.half_width, ext.half_width) } else { 0.0 };
        if x[0] < ext.eval_unchecked(s).0 - tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, BoundaryGraph};
    use crate::transport::{extract_map, grid_for, sample_domain, PointSet};
    use std::sync::Arc;

    fn half_disk_box() -> Domain {
        let chart = BoundaryGraph::flat(2, 1.0, 129, 0.5).unwrap();
        Domain::above_graph(0, 1.0, chart, BBox::new(vec![0.0, -1.5], vec![1.5, 1.5])).unwrap()
    }

    fn shifted_plan(dom: &Domain, h: f64, v: &[f64]) -> TransportPlan {
        let src = sample_domain(dom, &grid_for(dom, h));
        let pairs: Vec<(usize, usize, f64)> = (0..src.len()).map(|i| (i, i, src.weights[i])).collect();
        let tgt = src.map_affine(&linalg::identity(2), v, 1.0, 1.0);
        TransportPlan::from_pairs(src, tgt, &pairs, 1e-9)
    }

    #[test]
    fn identity_has_zero_energy() {
        let dom = half_disk_box();
        let plan = shifted_plan(&dom, 1.0 / 32.0, &[0.0, 0.0]);
        assert_eq!(energy_from_plan(&plan, 1.0), 0.0);
        let map = extract_map(&plan, &grid_for(&dom, 1.0 / 32.0), 0.0).unwrap();
        assert_eq!(energy_e(&map, &dom, 1.0).unwrap(), 0.0);
        assert!(check_topological(&plan, &[0.0, 0.0], 1.0).holds);
    }

    #[test]
    fn constant_displacement_closed_form() {
        let dom = half_disk_box();
        let h = 1.0 / 64.0;
        let v = [0.0, 0.05];
        let plan = shifted_plan(&dom, h, &v);
        let map = extract_map(&plan, &grid_for(&dom, h), 0.0).unwrap();
        let r = 0.8;
        // |B_R ∩ Ω0| / |B_R| = 1/2 for the flat half-space
        let oracle = 0.05f64.powi(2) / (r * r) * 0.5;
        let e = energy_e(&map, &dom, r).unwrap();
        assert!((e - oracle).abs() < 0.03 * oracle, "{e} vs {oracle}");
        assert!((energy_from_plan(&plan, r) - e).abs() < 1e-12);
    }

    #[test]
    fn lambda_control_cases() {
        let mut rep = EnergyReport {
            r: 1.0,
            e: 0.0,
            d: 0.0,
            lambda0: 1.0,
            lambda1: 1.0,
            m: 0.0,
            delta: 0.0,
            delta2_over_d: 0.0,
        };
        assert_eq!(control_lambda(&rep).unwrap(), 0.0);
        rep.lambda1 = 1.1;
        assert!(matches!(control_lambda(&rep), Err(QuantityError::Contradiction(_))));
        rep.e = 0.01;
        assert!((control_lambda(&rep).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_target_fails_checks() {
        let w = 0.5;
        let chart = BoundaryGraph::flat(1, w, 1, 0.5).unwrap();
        let eps = 0.1;
        let member = Arc::new(move |x: &[f64]| (x[0] > -1.0 - eps && x[0] < -1.0) || (x[0] > 0.0 && x[0] < 2.0 - eps));
        let dom1 = Domain::new(1, 1.0, chart.clone(), BBox::new(vec![-1.5], vec![2.5]), member)
            .unwrap()
            .with_extension(chart);
        assert!(!check_global_halfspace(&dom1).unwrap());
        let src = PointSet::new(1, vec![0.05, 0.5], vec![1.0, 1.0], 1.0).unwrap();
        let tgt = PointSet::new(1, vec![-1.05, 0.4], vec![1.0, 1.0], 1.0).unwrap();
        let plan = TransportPlan::from_pairs(src, tgt, &[(0, 0, 1.0), (1, 1, 1.0)], 1e-9);
        let check = check_topological(&plan, &[0.0], 1.0);
        assert!(!check.holds);
        assert_eq!(check.witnesses.len(), 1);
        assert_eq!(check.witnesses[0].x1, vec![-1.05]);
    }

    #[test]
    fn halfspace_needs_extension() {
        let chart = BoundaryGraph::flat(1, 0.5, 1, 0.5).unwrap();
        let dom = Domain::new(0, 1.0, chart, BBox::new(vec![0.0], vec![2.0]), Arc::new(|x: &[f64]| x[0] > 0.0)).unwrap();
        assert!(matches!(check_global_halfspace(&dom), Err(QuantityError::MissingExtension(0))));
        assert!(check_global_halfspace(&dom.clone().with_extension(dom.chart.clone())).unwrap());
    }

    #[test]
    fn tangential_translation_statistics() {
        let dom = half_disk_box();
        let t = 0.02;
        let plan = shifted_plan(&dom, 1.0 / 32.0, &[0.0, t]);
        let e = energy_from_plan(&plan, 1.0);
        let s = linf_statistics(&plan, e, 0.0, 0.5).unwrap();
        assert!((s.sup - t).abs() < 1e-12);
        assert!(s.inward.abs() < 1e-12 && (s.tangential - t).abs() < 1e-12);
    }
}
