//! Built-in instance families. Each generator produces the two domains, a
//! discrete optimal plan and its barycentric map on the source grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use otbound::campanato::Problem;
use otbound::geometry::{self, BBox, BoundaryGraph, ClosedForm, Domain, Membership, TangencyFrame};
use otbound::linalg::{self, Mat};
use otbound::quantities::COVERAGE_LIMIT;
use otbound::transport::{
    self, extract_map, grid_for, sample_domain, AffineChange, GridSpec, PointSet, TransportPlan,
};
use serde::{Deserialize, Serialize};

use crate::{stage, LabError, Result};

/// Half-width of the box `(0, L) × (-L, L)` used by the half-space families.
pub const BOX: f64 = 2.5;
/// Chart window and node count for the half-space families.
pub const CHART_WIDTH: f64 = 2.0;
pub const CHART_NODES: usize = 1025;
pub const ALPHA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Identity { dim: usize },
    /// Tangential shift `x -> x + t e_2`.
    Translation { t: f64 },
    /// `x -> (1+t)^{1/2} x` with target density `1/(1+t)`.
    Dilation { t: f64 },
    /// `x -> diag(1+a, 1-a) x`.
    Saddle { a: f64 },
    /// Unit-Jacobian perturbation of the identity built from a harmonic
    /// partial Legendre transform; the target boundary bends with amplitude `a`.
    FlatPerturbation { a: f64 },
    /// Identity map on `{x_1 > amplitude |x_2|^{1+alpha}}`.
    PowerGraph { alpha: f64, amplitude: f64 },
    /// One-dimensional boundary-layer separation: `(0,2)` onto
    /// `(-1-eps,-1) ∪ (0,2-eps)`.
    LayerSplit { eps: f64 },
    /// The same plan times the identity in `x_2`.
    LayerSplitProduct { eps: f64 },
    /// Tilted, offset target boundary, solved exactly and then normalized.
    TiltedTangency { angle: f64, offset: f64 },
}

pub struct CatalogEntry {
    pub name: &'static str,
    pub params: &'static str,
    pub summary: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    let e = |name, params, summary| CatalogEntry { name, params, summary };
    vec![
        e("identity", "dim", "identical half-space boxes, T = id"),
        e("translation", "t", "tangential shift by t e2"),
        e("dilation", "t (lambda = 1/(1+t))", "isotropic scaling with compensating density"),
        e("saddle", "a", "linear map diag(1+a, 1-a), flat boundaries"),
        e("flat-perturbation", "a", "unit-Jacobian smooth perturbation with curved target boundary"),
        e("power-graph", "alpha, amplitude", "identity on the region above A|x2|^(1+alpha)"),
        e("layer-split", "eps", "1D boundary-layer separation counterexample"),
        e("layer-split-product", "eps", "2D product of the 1D counterexample with the identity"),
        e("tilted-tangency", "angle, offset", "exact solve on a tilted target, then tangency normalization"),
    ]
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Identity { dim } => write!(f, "identity(dim={dim})"),
            Family::Translation { t } => write!(f, "translation(t={t})"),
            Family::Dilation { t } => write!(f, "dilation(t={t})"),
            Family::Saddle { a } => write!(f, "saddle(a={a})"),
            Family::FlatPerturbation { a } => write!(f, "flat-perturbation(a={a})"),
            Family::PowerGraph { alpha, amplitude } => write!(f, "power-graph(alpha={alpha},A={amplitude})"),
            Family::LayerSplit { eps } => write!(f, "layer-split(eps={eps})"),
            Family::LayerSplitProduct { eps } => write!(f, "layer-split-product(eps={eps})"),
            Family::TiltedTangency { angle, offset } => write!(f, "tilted-tangency(angle={angle},offset={offset})"),
        }
    }
}

pub type ExactMap = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A generated configuration: the problem at `per_unit` cells per unit
/// length, studied at the origin with radius `radius`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub family: Family,
    pub per_unit: usize,
    pub radius: f64,
    pub problem: Problem,
    pub frame: Option<TangencyFrame>,
}

impl Instance {
    pub fn h(&self) -> f64 {
        1.0 / self.per_unit as f64
    }

    pub fn dim(&self) -> usize {
        self.problem.plan.dim
    }
}

/// Closed-form harmonic perturbation `H(p, y)` and its derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Perturbation {
    pub a: f64,
    pub k: f64,
}

impl Perturbation {
    pub fn new(a: f64) -> Self {
        Perturbation { a, k: 0.5 * PI }
    }

    /// `(H_p, H_y, H_pp)`; `H_yy = -H_pp`.
    pub fn derivs(&self, p: f64, y: f64) -> (f64, f64, f64) {
        let k = self.k;
        let (e1, e2) = ((-k * p).exp(), (-2.0 * k * p).exp());
        let hp = -e1 * (k * y).cos() + e2 * (2.0 * k * y).cos();
        let hy = -e1 * (k * y).sin() + e2 * (2.0 * k * y).sin();
        let hpp = k * e1 * (k * y).cos() - 2.0 * k * e2 * (2.0 * k * y).cos();
        (hp, hy, hpp)
    }

    /// `p` with `p + a H_p(p, y) = x`.
    fn solve_p(&self, x: f64, y: f64) -> f64 {
        let mut p = x;
        for _ in 0..50 {
            let (hp, _, hpp) = self.derivs(p, y);
            let step = (p + self.a * hp - x) / (1.0 + self.a * hpp);
            p -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        p
    }

    /// `y` with `y - a H_y(p, y) = z`.
    fn solve_y(&self, p: f64, z: f64) -> f64 {
        let mut y = z;
        for _ in 0..50 {
            let (_, hy, hpp) = self.derivs(p, y);
            // d/dy of H_y is H_yy = -H_pp
            let step = (y - self.a * hy - z) / (1.0 + self.a * hpp);
            y -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let p = self.solve_p(x[0], x[1]);
        let (_, hy, _) = self.derivs(p, x[1]);
        vec![p, x[1] - self.a * hy]
    }

    pub fn inverse(&self, t: &[f64]) -> Vec<f64> {
        let y = self.solve_y(t[0], t[1]);
        let (hp, _, _) = self.derivs(t[0], y);
        vec![t[0] + self.a * hp, y]
    }

    /// Target boundary `x_1 = g_1(z)`: the image of `{x_1 = 0}`.
    pub fn boundary(&self, z: f64) -> f64 {
        let image = |y: f64| {
            let p = self.solve_p(0.0, y);
            let (_, hy, _) = self.derivs(p, y);
            (p, y - self.a * hy)
        };
        let (mut lo, mut hi) = (z - 1.0, z + 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if image(mid).1 < z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        image(0.5 * (lo + hi)).0
    }
}

fn half_box(lo0: f64, hi0: f64, half: f64) -> BBox {
    BBox::new(vec![lo0, -half], vec![hi0, half])
}

fn flat_chart(dim: usize) -> Result<BoundaryGraph> {
    BoundaryGraph::flat(dim, if dim == 1 { 1.0 } else { CHART_WIDTH }, CHART_NODES, ALPHA).map_err(stage("geometry"))
}

fn boxed(bbox: BBox, inner: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Membership {
    Arc::new(move |x: &[f64]| bbox.contains(x) && inner(x))
}

/// Plan pairing each source cell with its closed-form image.
fn closed_form_problem(
    dom0: Domain,
    dom1: Domain,
    per_unit: usize,
    map: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Problem> {
    let grid = grid_for(&dom0, 1.0 / per_unit as f64);
    let src = sample_domain(&dom0, &grid);
    let tgt_coords: Vec<f64> = (0..src.len()).flat_map(|i| map(src.point(i))).collect();
    let tgt = PointSet::new(src.dim, tgt_coords, src.weights.clone(), dom1.lambda).map_err(stage("transport"))?;
    let pairs: Vec<(usize, usize, f64)> = (0..src.len()).map(|i| (i, i, src.weights[i])).collect();
    let plan = TransportPlan::from_pairs(src, tgt, &pairs, 1e-9);
    let map = extract_map(&plan, &grid, COVERAGE_LIMIT).map_err(stage("transport"))?;
    Ok(Problem { plan, map, dom0, dom1 })
}

fn linear_problem(m: Mat, per_unit: usize) -> Result<Problem> {
    let det = m.determinant();
    let dom0 = Domain::above_graph(0, 1.0, flat_chart(2)?, half_box(0.0, BOX, BOX)).map_err(stage("geometry"))?;
    let dom1 = dom0.image(&m, &[0.0, 0.0], 1.0 / det).map_err(stage("geometry"))?;
    let dom1 = dom1.with_extension(flat_chart(2)?);
    closed_form_problem(dom0, dom1, per_unit, |x| linalg::mat_vec(&m, x))
}

/// The piecewise optimal map of the 1D counterexample.
pub fn layer_split_map(eps: f64, x: f64) -> f64 {
    if x < eps {
        x - 1.0 - eps
    } else {
        x - eps
    }
}

fn layer_split_domains(eps: f64, dim: usize, half: f64) -> Result<(Domain, Domain)> {
    let chart = flat_chart(dim)?;
    let (lo, hi) = if dim == 1 { (vec![0.0], vec![2.0]) } else { (vec![0.0, -half], vec![2.0, half]) };
    let box0 = BBox::new(lo.clone(), hi.clone());
    let mut lo1 = lo;
    lo1[0] = -1.0 - eps;
    let mut hi1 = hi;
    hi1[0] = 2.0 - eps;
    let box1 = BBox::new(lo1, hi1);
    let dom0 = Domain::new(0, 1.0, chart.clone(), box0.clone(), boxed(box0, |_| true)).map_err(stage("geometry"))?;
    let member1 = boxed(box1.clone(), move |x: &[f64]| x[0] < -1.0 || x[0] > 0.0);
    let dom1 = Domain::new(1, 1.0, chart, box1, member1).map_err(stage("geometry"))?;
    Ok((dom0, dom1))
}

fn layer_split_1d(eps: f64, per_unit: usize) -> Result<(Domain, Domain, TransportPlan, GridSpec)> {
    let (dom0, dom1) = layer_split_domains(eps, 1, 0.0)?;
    let h = 1.0 / per_unit as f64;
    let grid0 = grid_for(&dom0, h);
    let grid1 = grid_for(&dom1, h);
    let src = sample_domain(&dom0, &grid0);
    let mut tgt = sample_domain(&dom1, &grid1);
    transport::balance_masses(&src, &mut tgt);
    let plan = transport::monotone_1d(&src, &tgt).map_err(stage("transport"))?;
    Ok((dom0, dom1, plan, grid0))
}

fn layer_split_product(eps: f64, per_unit: usize) -> Result<Problem> {
    let half = 2.0;
    let (_, _, line, _) = layer_split_1d(eps, per_unit)?;
    let (dom0, dom1) = layer_split_domains(eps, 2, half)?;
    let h = 1.0 / per_unit as f64;
    let rows = (2.0 * half * per_unit as f64).round() as usize;
    let ys: Vec<f64> = (0..rows).map(|l| -half + (l as f64 + 0.5) * h).collect();
    let lift = |p: &PointSet| {
        let coords = (0..p.len()).flat_map(|i| ys.iter().flat_map(move |&y| [p.coords[i], y])).collect();
        let weights = (0..p.len()).flat_map(|i| ys.iter().map(move |_| p.weights[i] * h)).collect();
        PointSet::new(2, coords, weights, p.lambda)
    };
    let src = lift(&line.src).map_err(stage("transport"))?;
    let tgt = lift(&line.tgt).map_err(stage("transport"))?;
    let pairs: Vec<(usize, usize, f64)> = (0..line.len())
        .flat_map(|k| {
            let (i, j, m) = (line.src_index[k], line.tgt_index[k], line.mass[k]);
            (0..rows).map(move |l| (i * rows + l, j * rows + l, m * h))
        })
        .collect();
    let plan = TransportPlan::from_pairs(src, tgt, &pairs, 1e-9);
    let grid = grid_for(&dom0, h);
    let map = extract_map(&plan, &grid, COVERAGE_LIMIT).map_err(stage("transport"))?;
    Ok(Problem { plan, map, dom0, dom1 })
}

fn tilted(angle: f64, offset: f64, per_unit: usize) -> Result<(Problem, TangencyFrame)> {
    let slope = angle.tan();
    let width = 0.8;
    let chart0 = BoundaryGraph::flat(2, width, 257, ALPHA).map_err(stage("geometry"))?;
    let dom0 = Domain::above_graph(0, 1.0, chart0, half_box(0.0, 1.0, 1.0)).map_err(stage("geometry"))?;
    let chart1 = BoundaryGraph::from_fn(2, width, 257, ALPHA, |s| offset + slope * s).map_err(stage("geometry"))?;
    let box1 = half_box(offset - slope.abs() - 0.01, 1.0 + offset, 1.0);
    let member1 = boxed(box1.clone(), move |x: &[f64]| x[0] > offset + slope * x[1] && x[0] < 1.0 + offset);
    let dom1 = Domain::new(1, 1.0, chart1, box1, member1).map_err(stage("geometry"))?;
    let h = 1.0 / per_unit as f64;
    let grid0 = grid_for(&dom0, h);
    let src = sample_domain(&dom0, &grid0);
    let mut tgt = sample_domain(&dom1, &grid_for(&dom1, h));
    transport::balance_masses(&src, &mut tgt);
    let plan = transport::solve_exact(&src, &tgt, transport::DEFAULT_PAIR_CAP).map_err(stage("transport"))?;
    let map = extract_map(&plan, &grid0, COVERAGE_LIMIT).map_err(stage("transport"))?;

    let (hat0, hat1, frame) =
        geometry::normalize_tangency(&dom0, &dom1, &[0.0, 0.0], 0.5).map_err(stage("geometry"))?;
    let (m1, s1) = frame.target_affine();
    let inv = linalg::inverse(&m1).map_err(stage("linalg"))?;
    let b: Vec<f64> = linalg::mat_vec(&inv, &s1).iter().map(|v| -v).collect();
    let change = AffineChange::new(m1, b).map_err(stage("transport"))?;
    let plan_hat = change.apply_plan(&plan);
    let hat_grid = grid_for(&hat0, h);
    let map_hat = change.apply_map(&map, &hat_grid);
    Ok((Problem { plan: plan_hat, map: map_hat, dom0: hat0, dom1: hat1 }, frame))
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Identity { dim } => *dim,
            Family::LayerSplit { .. } => 1,
            _ => 2,
        }
    }

    /// Study radius at the origin.
    pub fn radius(&self) -> f64 {
        match self {
            Family::TiltedTangency { .. } => 0.5,
            _ => 1.0,
        }
    }

    /// Closed-form optimal map, when the family has one.
    pub fn exact_map(&self) -> Option<ExactMap> {
        match *self {
            Family::Identity { .. } | Family::PowerGraph { .. } => Some(Box::new(|x: &[f64]| x.to_vec())),
            Family::Translation { t } => Some(Box::new(move |x: &[f64]| vec![x[0], x[1] + t])),
            Family::Dilation { t } => {
                let s = (1.0 + t).sqrt();
                Some(Box::new(move |x: &[f64]| x.iter().map(|v| s * v).collect()))
            }
            Family::Saddle { a } => Some(Box::new(move |x: &[f64]| vec![(1.0 + a) * x[0], (1.0 - a) * x[1]])),
            Family::FlatPerturbation { a } => {
                let pert = Perturbation::new(a);
                Some(Box::new(move |x: &[f64]| pert.forward(x)))
            }
            Family::LayerSplit { eps } => Some(Box::new(move |x: &[f64]| vec![layer_split_map(eps, x[0])])),
            Family::LayerSplitProduct { eps } => Some(Box::new(move |x: &[f64]| vec![layer_split_map(eps, x[0]), x[1]])),
            Family::TiltedTangency { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        match *self {
            Family::Identity { dim } if !(1..=2).contains(&dim) => bad(format!("identity dim {dim} not in {{1, 2}}")),
            Family::Translation { t } if t.abs() > 0.5 => bad(format!("translation |t| = {t} exceeds 0.5")),
            Family::Dilation { t } if !(-0.5..=1.0).contains(&t) => bad(format!("dilation t = {t} outside [-0.5, 1]")),
            Family::Saddle { a } if a.abs() >= 0.5 => bad(format!("saddle |a| = {a} must be below 0.5")),
            Family::FlatPerturbation { a } if !(0.0..=0.05).contains(&a) => {
                bad(format!("perturbation amplitude {a} outside [0, 0.05]"))
            }
            Family::PowerGraph { alpha, amplitude }
                if !(alpha > 0.0 && alpha < 1.0)
                    || amplitude.abs() * (1.0 + alpha) * CHART_WIDTH.powf(alpha) > 0.25 =>
            {
                bad(format!("power graph alpha = {alpha}, amplitude = {amplitude} too steep"))
            }
            Family::LayerSplit { eps } | Family::LayerSplitProduct { eps } if !(eps > 0.0 && eps < 1.0) => {
                bad(format!("eps = {eps} not in (0, 1)"))
            }
            Family::TiltedTangency { angle, offset } if angle.tan().abs() > 0.25 || offset.abs() > 0.2 => {
                bad(format!("tilt angle {angle} or offset {offset} too large"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, per_unit: usize) -> Result<Instance> {
        self.validate()?;
        if per_unit == 0 {
            return Err(LabError::Config("resolution must be positive".into()));
        }
        let mut frame = None;
        let problem = match *self {
            Family::Identity { dim: 1 } => {
                let chart = flat_chart(1)?;
                let bbox = BBox::new(vec![0.0], vec![2.0]);
                let dom = Domain::above_graph(0, 1.0, chart, bbox).map_err(stage("geometry"))?;
                let mut dom1 = dom.clone();
                dom1.side = 1;
                closed_form_problem(dom, dom1, per_unit, |x| x.to_vec())?
            }
            Family::Identity { .. } => linear_problem(linalg::identity(2), per_unit)?,
            Family::Translation { t } => {
                let dom0 =
                    Domain::above_graph(0, 1.0, flat_chart(2)?, half_box(0.0, BOX, BOX)).map_err(stage("geometry"))?;
                let box1 = BBox::new(vec![0.0, -BOX + t], vec![BOX, BOX + t]);
                let dom1 = Domain::above_graph(1, 1.0, flat_chart(2)?, box1).map_err(stage("geometry"))?;
                closed_form_problem(dom0, dom1, per_unit, |x| vec![x[0], x[1] + t])?
            }
            Family::Dilation { t } => {
                let s = (1.0 + t).sqrt();
                linear_problem(Mat::from_diagonal_element(2, 2, s), per_unit)?
            }
            Family::Saddle { a } => linear_problem(Mat::from_row_slice(2, 2, &[1.0 + a, 0.0, 0.0, 1.0 - a]), per_unit)?,
            Family::FlatPerturbation { a } => {
                let pert = Perturbation::new(a);
                let dom0 =
                    Domain::above_graph(0, 1.0, flat_chart(2)?, half_box(0.0, BOX, BOX)).map_err(stage("geometry"))?;
                let chart1 = BoundaryGraph::from_fn(2, CHART_WIDTH, CHART_NODES, ALPHA, |z| pert.boundary(z))
                    .map_err(stage("geometry"))?;
                let src_box = half_box(0.0, BOX, BOX);
                let box1 = half_box(-2.5 * a - 0.01, BOX + 0.1, BOX + 0.1);
                let member1 = boxed(box1.clone(), move |y: &[f64]| src_box.contains(&pert.inverse(y)));
                let dom1 = Domain::new(1, 1.0, chart1.clone(), box1, member1)
                    .map_err(stage("geometry"))?
                    .with_extension(chart1);
                closed_form_problem(dom0, dom1, per_unit, |x| pert.forward(x))?
            }
            Family::PowerGraph { alpha, amplitude } => {
                let form = ClosedForm::Power { amplitude, exponent: 1.0 + alpha };
                let chart = BoundaryGraph::from_closed_form(2, CHART_WIDTH, CHART_NODES, alpha, form)
                    .map_err(stage("geometry"))?;
                let dom0 = Domain::above_graph(0, 1.0, chart.clone(), half_box(0.0, BOX, BOX)).map_err(stage("geometry"))?;
                let dom1 = Domain::above_graph(1, 1.0, chart, half_box(0.0, BOX, BOX)).map_err(stage("geometry"))?;
                closed_form_problem(dom0, dom1, per_unit, |x| x.to_vec())?
            }
            Family::LayerSplit { eps } => {
                let (dom0, dom1, plan, grid) = layer_split_1d(eps, per_unit)?;
                let map = extract_map(&plan, &grid, COVERAGE_LIMIT).map_err(stage("transport"))?;
                Problem { plan, map, dom0, dom1 }
            }
            Family::LayerSplitProduct { eps } => layer_split_product(eps, per_unit)?,
            Family::TiltedTangency { angle, offset } => {
                let (p, f) = tilted(angle, offset, per_unit)?;
                frame = Some(f);
                p
            }
        };
        Ok(Instance { family: self.clone(), per_unit, radius: self.radius(), problem, frame })
    }

    /// Small instance (at most about 200 points per side) solved with the
    /// exact solver instead of the closed form.
    pub fn coarse(&self) -> Result<(PointSet, PointSet)> {
        self.validate()?;
        let side = 12usize;
        let window = |x: &[f64]| x[0] < 1.0 && x[1].abs() < 0.5;
        let inst = match self {
            Family::TiltedTangency { .. } => self.build(8)?,
            Family::LayerSplit { .. } | Family::Identity { dim: 1 } => self.build(40)?,
            Family::LayerSplitProduct { .. } => {
                let (mut src, mut tgt) = (Vec::new(), Vec::new());
                let (_, _, line, _) = layer_split_1d(self.eps(), 8)?;
                let ys = [-0.25, -0.0, 0.25];
                let point = |p: &PointSet, i: usize, y: f64| [p.coords[i], y];
                for i in 0..line.src.len() {
                    for &y in &ys {
                        src.extend(point(&line.src, i, y));
                    }
                }
                for j in 0..line.tgt.len() {
                    for &y in &ys {
                        tgt.extend(point(&line.tgt, j, y));
                    }
                }
                let ws = |p: &PointSet| p.weights.iter().flat_map(|w| [*w / 3.0; 3]).collect::<Vec<f64>>();
                let s = PointSet::new(2, src, ws(&line.src), 1.0).map_err(stage("transport"))?;
                let t = PointSet::new(2, tgt, ws(&line.tgt), 1.0).map_err(stage("transport"))?;
                return Ok((s, t));
            }
            _ => self.build(side)?,
        };
        let plan = &inst.problem.plan;
        if self.dim() == 1 || matches!(self, Family::TiltedTangency { .. }) {
            return Ok((plan.src.clone(), plan.tgt.clone()));
        }
        let keep: Vec<usize> = (0..plan.len()).filter(|&k| window(plan.x0(k))).collect();
        let x0: Vec<f64> = keep.iter().flat_map(|&k| plan.x0(k).to_vec()).collect();
        let x1: Vec<f64> = keep.iter().flat_map(|&k| plan.x1(k).to_vec()).collect();
        let w: Vec<f64> = keep.iter().map(|&k| plan.mass[k]).collect();
        let s = PointSet::new(2, x0, w.clone(), plan.lambda0).map_err(stage("transport"))?;
        let t = PointSet::new(2, x1, w, plan.lambda1).map_err(stage("transport"))?;
        Ok((s, t))
    }

    fn eps(&self) -> f64 {
        match *self {
            Family::LayerSplit { eps } | Family::LayerSplitProduct { eps } => eps,
            _ => 0.0,
        }
    }

    /// Representative members used by the catalog-wide suites.
    pub fn representatives() -> Vec<Family> {
        vec![
            Family::Identity { dim: 1 },
            Family::Identity { dim: 2 },
            Family::Translation { t: 0.1 },
            Family::Dilation { t: 0.04 },
            Family::Saddle { a: 0.05 },
            Family::FlatPerturbation { a: 0.02 },
            Family::PowerGraph { alpha: ALPHA, amplitude: 0.05 },
            Family::LayerSplit { eps: 0.1 },
            Family::LayerSplitProduct { eps: 0.1 },
            Family::TiltedTangency { angle: 0.1, offset: 0.05 },
        ]
    }

    /// Parses `name` with the primary parameter `value` (family default when `None`).
    pub fn parse(name: &str, value: Option<f64>) -> Result<Family> {
        let v = |d: f64| value.unwrap_or(d);
        let fam = match name {
            "identity" => Family::Identity { dim: value.map_or(2, |d| d as usize) },
            "translation" => Family::Translation { t: v(0.1) },
            "dilation" => Family::Dilation { t: v(0.04) },
            "saddle" => Family::Saddle { a: v(0.05) },
            "flat-perturbation" | "perturbation" => Family::FlatPerturbation { a: v(0.02) },
            "power-graph" => Family::PowerGraph { alpha: ALPHA, amplitude: v(0.05) },
            "layer-split" => Family::LayerSplit { eps: v(0.1) },
            "layer-split-product" => Family::LayerSplitProduct { eps: v(0.1) },
            "tilted-tangency" => Family::TiltedTangency { angle: v(0.1), offset: 0.05 },
            other => return Err(LabError::Config(format!("unknown family '{other}'"))),
        };
        fam.validate()?;
        Ok(fam)
    }

    /// Value of the primary parameter.
    pub fn parameter(&self) -> f64 {
        match *self {
            Family::Identity { dim } => dim as f64,
            Family::Translation { t } | Family::Dilation { t } => t,
            Family::Saddle { a } | Family::FlatPerturbation { a } => a,
            Family::PowerGraph { amplitude, .. } => amplitude,
            Family::LayerSplit { eps } | Family::LayerSplitProduct { eps } => eps,
            Family::TiltedTangency { angle, .. } => angle,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Identity { .. } => "identity",
            Family::Translation { .. } => "translation",
            Family::Dilation { .. } => "dilation",
            Family::Saddle { .. } => "saddle",
            Family::FlatPerturbation { .. } => "flat-perturbation",
            Family::PowerGraph { .. } => "power-graph",
            Family::LayerSplit { .. } => "layer-split",
            Family::LayerSplitProduct { .. } => "layer-split-product",
            Family::TiltedTangency { .. } => "tilted-tangency",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_round_trips_and_preserves_area() {
        let pert = Perturbation::new(0.04);
        for x in [[0.1, 0.3], [0.5, -1.2], [1.7, 0.9]] {
            let t = pert.forward(&x);
            let back = pert.inverse(&t);
            assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
            let e = 1e-5;
            let fx = |dx: f64, dy: f64| pert.forward(&[x[0] + dx, x[1] + dy]);
            let (a, b) = (fx(e, 0.0), fx(-e, 0.0));
            let (c, d) = (fx(0.0, e), fx(0.0, -e));
            let j00 = (a[0] - b[0]) / (2.0 * e);
            let j10 = (a[1] - b[1]) / (2.0 * e);
            let j01 = (c[0] - d[0]) / (2.0 * e);
            let j11 = (c[1] - d[1]) / (2.0 * e);
            assert!((j00 * j11 - j01 * j10 - 1.0).abs() < 1e-7);
            assert!((j01 - j10).abs() < 1e-7, "Jacobian must be symmetric");
        }
    }

    #[test]
    fn perturbed_boundary_is_tangent_at_origin() {
        let pert = Perturbation::new(0.04);
        assert!(pert.boundary(0.0).abs() < 1e-12);
        let s = 1e-4;
        assert!((pert.boundary(s) - pert.boundary(-s)).abs() < 1e-12);
        let z = 0.7;
        let g = pert.boundary(z);
        let x = pert.inverse(&[g, z]);
        assert!(x[0].abs() < 1e-10);
    }

    #[test]
    fn layer_split_plan_matches_piecewise_map() {
        let inst = Family::LayerSplit { eps: 0.1 }.build(100).unwrap();
        let map = &inst.problem.map;
        for k in 0..map.grid.len() {
            let x = map.grid.center(k)[0];
            let t = x + map.displacement(k)[0];
            assert!((t - layer_split_map(0.1, x)).abs() <= 2.0 * inst.h(), "x = {x}, T = {t}");
        }
    }

    #[test]
    fn every_representative_builds() {
        for fam in Family::representatives() {
            let inst = fam.build(8).unwrap_or_else(|e| panic!("{fam}: {e}"));
            assert!(!inst.problem.plan.is_empty());
        }
    }
}
