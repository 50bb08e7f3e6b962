//! One-step affine improvement, its iteration across dyadic scales, the
//! Hölder seminorm of `∇T`, and the regularity report tying them together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eulerian::{self, TrajectorySet};
use crate::geometry::{self, Domain};
use crate::harmonic::{self, Face, HalfCube, NeumannData, PotentialField};
use crate::linalg::{self, Mat};
use crate::quantities::{self, EnergyReport, COVERAGE_LIMIT};
use crate::transport::{AffineChange, MapField, TransportPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CampanatoError {
    #[error("topological condition fails: {violations} support pairs leave the ball")]
    Topological { violations: usize },
    #[error("outside the perturbative regime: {0}")]
    OutOfRegime(String),
    #[error("averaged Hessian has antisymmetric part {defect:.3e} (relative); reflection is broken")]
    Symmetry { defect: f64 },
    #[error("grid spacing {h} too coarse for radius {r}")]
    Resolution { h: f64, r: f64 },
    #[error("{invalid} of {required} map cells in the ball are invalid")]
    Coverage { invalid: usize, required: usize },
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, CampanatoError>;

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CampanatoError {
    move |e| CampanatoError::Stage { stage, message: e.to_string() }
}

/// Knobs of a single improvement step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub theta: f64,
    pub alpha: f64,
    /// Radius (at unit scale) of the harmonic approximation; gradients and
    /// Hessians are averaged over half of it.
    pub harmonic_radius: f64,
    pub tau: f64,
    pub time_bins: usize,
    pub face_bins: usize,
    /// Poisson cells across the cube side.
    pub poisson_cells: usize,
    /// Largest admissible `E + D`.
    pub threshold: f64,
    /// Largest relative antisymmetric part of the averaged Hessian.
    pub symmetry_tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            theta: 0.5,
            alpha: 0.5,
            harmonic_radius: 0.25,
            tau: 0.05,
            time_bins: 32,
            face_bins: 32,
            poisson_cells: 64,
            threshold: 0.5,
            symmetry_tol: 0.1,
        }
    }
}

impl StepConfig {
    pub fn beta(&self) -> f64 {
        0.5 * (self.alpha + 1.0)
    }
}

/// Plan, sampled map and both domains in a common frame with the study point at 0.
#[derive(Clone, Debug)]
pub struct Problem {
    pub plan: TransportPlan,
    pub map: MapField,
    pub dom0: Domain,
    pub dom1: Domain,
}

/// Ingredients of one affine renormalization `x̂0 = B^{-*} x0`, `x̂1 = B (x1 - b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineStep {
    /// Averaged `∇φ` near 0, in the original length scale.
    pub b_bar: Vec<f64>,
    /// Averaged `∇²φ` near 0 (symmetrized).
    pub a_bar: Mat,
    /// `exp(-Ā/2)`.
    pub b_bar_mat: Mat,
    /// Vertical offset `g1(b̄') e1`.
    pub b_tilde: Vec<f64>,
    /// Symmetric square root realigning the two normals.
    pub b_tilde_mat: Mat,
    /// Rotation returning the common normal to `-e1`.
    pub rotation: Mat,
    pub b_mat: Mat,
    pub b: Vec<f64>,
    pub lambda_hat: f64,
    pub symmetrization: f64,
    /// `|B̃² u0 - u1|` for the normalized transformed normals.
    pub alignment_defect: f64,
    /// `(|B - Id|² + |b|²/R²) / (E + D)`.
    pub constant: f64,
}

/// Result of [`one_step`] at radius `R`.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub step: AffineStep,
    pub problem: Problem,
    pub radius: f64,
    pub e: f64,
    pub d: f64,
    pub e_hat: f64,
    pub d_hat: f64,
    /// Good-slice radius at unit scale.
    pub slice_radius: f64,
    pub poisson_constant: f64,
    pub harmonic_error: f64,
    pub harmonic_dirichlet: f64,
}

fn frame_norm(m: &Mat) -> f64 {
    let d = m.nrows();
    linalg::frobenius(&(m - linalg::identity(d)))
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = linalg::norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Flux Neumann problem on the good-slice half-cube of the problem seen at unit scale.
fn harmonic_potential(
    problem: &Problem,
    report: &EnergyReport,
    radius: f64,
    cfg: &StepConfig,
) -> Result<(PotentialField, f64)> {
    let d = problem.plan.dim;
    let traj = TrajectorySet::from_plan(&problem.plan, problem.map.grid.h).dilate(radius);
    let g0 = problem.dom0.chart.dilate(radius);
    let g1 = problem.dom1.chart.dilate(radius);
    let reach = 2.0f64.min(g0.half_width).min(g1.half_width);
    let delta = g0.sup_norm(reach) + g1.sup_norm(reach);
    let good = eulerian::select_good_slice(
        &traj,
        cfg.tau,
        delta,
        report.e,
        report.m / radius,
        cfg.time_bins,
        cfg.face_bins,
    )
    .map_err(stage("flux"))?;
    let slice = &good.slice;
    let bins = slice.neumann_bins();
    let cube = HalfCube::uniform(d, 0.0, slice.r, cfg.poisson_cells).map_err(stage("harmonic"))?;
    let data = NeumannData::new(|face: Face, x: &[f64]| {
        if face.axis == 0 && !face.upper {
            0.0
        } else {
            slice.neumann_value(&bins, face, x)
        }
    });
    let phi = harmonic::solve_neumann(&cube, &data, harmonic::CG_TOL).map_err(stage("harmonic"))?;
    Ok((phi, slice.r))
}

/// Executes one improvement step at radius `R` around the origin.
pub fn one_step(problem: &Problem, radius: f64, cfg: &StepConfig) -> Result<StepOutcome> {
    let d = problem.plan.dim;
    let report = quantities::energy_report(&problem.plan, &problem.dom0, &problem.dom1, radius)
        .map_err(stage("quantities"))?;
    if report.e + report.d > cfg.threshold {
        return Err(CampanatoError::OutOfRegime(format!(
            "E + D = {:.3e} exceeds {:.3e}",
            report.e + report.d,
            cfg.threshold
        )));
    }
    let topo = quantities::check_topological(&problem.plan, &vec![0.0; d], radius);
    if !topo.holds {
        return Err(CampanatoError::Topological { violations: topo.violations });
    }

    let (phi, slice_radius) = harmonic_potential(problem, &report, radius, cfg)?;
    let rho = 0.5 * cfg.harmonic_radius;
    let grad = phi.ball_average_gradient(rho);
    let hess = Mat::from_row_slice(d, d, &phi.ball_average_hessian(rho));
    let (a_bar, skew) = linalg::symmetrize(&hess);
    let rel_skew = skew / linalg::frobenius(&a_bar).max(1e-12);
    if skew > 1e-12 && rel_skew > cfg.symmetry_tol {
        return Err(CampanatoError::Symmetry { defect: rel_skew });
    }
    let b_bar: Vec<f64> = grad.iter().map(|v| v * radius).collect();
    let (b_bar_mat, _) = linalg::sym_exp(&(&a_bar * -0.5));

    let g0 = &problem.dom0.chart;
    let g1 = &problem.dom1.chart;
    let tangential = if d == 1 { 0.0 } else { b_bar[1] };
    let mut b_tilde = vec![0.0; d];
    b_tilde[0] = g1.eval_unchecked(tangential).0;
    let nu0 = geometry::outward_normal(g0, 0.0).map_err(stage("geometry"))?;
    let nu1 = geometry::outward_normal(g1, tangential).map_err(stage("geometry"))?;
    let b_bar_inv = linalg::inverse(&b_bar_mat).map_err(stage("matrix"))?;
    let u0 = normalize(&linalg::mat_vec(&b_bar_mat, &nu0));
    let u1 = normalize(&linalg::mat_vec(&b_bar_inv.transpose(), &nu1));
    let transfer = linalg::block_transfer(&u0, &u1);
    let (b_tilde_mat, _) = linalg::sym_sqrt(&transfer).map_err(stage("matrix"))?;
    let sq = &b_tilde_mat * &b_tilde_mat;
    let moved = linalg::mat_vec(&sq, &u0);
    let alignment_defect = linalg::norm(&moved.iter().zip(&u1).map(|(a, b)| a - b).collect::<Vec<_>>());
    let composite = &b_tilde_mat * &b_bar_mat;
    let rotation = linalg::rotation_to_minus_e1(&normalize(&linalg::mat_vec(&composite, &nu0)));
    let b_mat = &rotation * composite;
    if frame_norm(&b_mat) >= 0.5 {
        return Err(CampanatoError::OutOfRegime(format!("|B - Id| = {:.3e}", frame_norm(&b_mat))));
    }
    let b: Vec<f64> = b_bar.iter().zip(&b_tilde).map(|(a, c)| a + c).collect();

    let change = AffineChange::new(b_mat.clone(), b.clone()).map_err(stage("transport"))?;
    let lambda_hat = change.lambda_hat(problem.dom1.lambda);
    let plan = change.apply_plan(&problem.plan);
    let map = change.apply_map(&problem.map, &problem.map.grid);
    let b_inv_t = linalg::inverse(&b_mat).map_err(stage("matrix"))?.transpose();
    let dom0 = problem.dom0.image(&b_inv_t, &vec![0.0; d], problem.dom0.lambda).map_err(stage("geometry"))?;
    let shift: Vec<f64> = linalg::mat_vec(&b_mat, &b).iter().map(|v| -v).collect();
    let dom1 = problem.dom1.image(&b_mat, &shift, lambda_hat).map_err(stage("geometry"))?;

    let next_radius = cfg.theta * radius;
    let hat = quantities::energy_report(&plan, &dom0, &dom1, next_radius).map_err(stage("quantities"))?;

    let scaled_map = problem.map.dilate(radius);
    let scaled_dom = problem.dom0.dilate(radius);
    let (harmonic_error, harmonic_dirichlet) =
        harmonic::harmonic_approximation(&scaled_map, &phi, &scaled_dom, cfg.harmonic_radius)
            .map_err(stage("harmonic"))?;

    let size = frame_norm(&b_mat).powi(2) + linalg::dot(&b, &b) / (radius * radius);
    let constant = if report.e + report.d > 0.0 { size / (report.e + report.d) } else { 0.0 };
    let step = AffineStep {
        b_bar,
        a_bar,
        b_bar_mat,
        b_tilde,
        b_tilde_mat,
        rotation,
        b_mat,
        b,
        lambda_hat,
        symmetrization: skew,
        alignment_defect,
        constant,
    };
    Ok(StepOutcome {
        step,
        problem: Problem { plan, map, dom0, dom1 },
        radius,
        e: report.e,
        d: report.d,
        e_hat: hat.e,
        d_hat: hat.d,
        slice_radius,
        poisson_constant: phi.c,
        harmonic_error,
        harmonic_dirichlet,
    })
}

/// One rung of the ladder at radius `θ^k R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub k: usize,
    pub radius: f64,
    pub e: f64,
    pub d: f64,
    /// `A_k^{-1} A_k^{-*}`.
    pub a_bar: Mat,
    /// `A_k^{-1} a_k`.
    pub a_vec: Vec<f64>,
    /// `|Ā_k - Id|² + θ^{-2k} |ā_k|² / R²`.
    pub frame: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Topological { violations: usize },
    Resolution { level: usize, radius: f64, h: f64 },
    Failed { level: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoLadder {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub levels: Vec<Level>,
    pub steps: Vec<AffineStep>,
    pub stop: Option<StopReason>,
}

impl CampanatoLadder {
    /// `max_k E_k / (θ^{2αk}(E_0 + D_0))`.
    pub fn fitted_c_prime(&self) -> f64 {
        let Some(first) = self.levels.first() else { return 0.0 };
        let base = first.e + first.d;
        if base == 0.0 {
            return 0.0;
        }
        self.levels
            .iter()
            .map(|l| l.e / (self.theta.powf(2.0 * self.alpha * l.k as f64) * base))
            .fold(0.0, f64::max)
    }

    /// Smallest `C_β` with `E_{k+1} ≤ θ^{2β} E_k + C_β D_k` for all recorded steps.
    pub fn fitted_c_beta(&self) -> f64 {
        let q = self.theta.powf(2.0 * self.beta);
        self.levels
            .windows(2)
            .map(|w| {
                let excess = w[1].e - q * w[0].e;
                if excess <= 0.0 {
                    0.0
                } else if w[0].d > 0.0 {
                    excess / w[0].d
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn max_frame(&self) -> f64 {
        self.levels.iter().map(|l| l.frame).fold(0.0, f64::max)
    }
}

/// Iterates [`one_step`] from radius `R` for `depth` steps; stops early (with
/// a recorded reason) when a precondition fails or `θ^k R < 16 h`.
pub fn iterate(problem: &Problem, radius: f64, depth: usize, cfg: &StepConfig) -> Result<CampanatoLadder> {
    let d = problem.plan.dim;
    let mut ladder = CampanatoLadder {
        theta: cfg.theta,
        alpha: cfg.alpha,
        beta: cfg.beta(),
        levels: Vec::new(),
        steps: Vec::new(),
        stop: None,
    };
    let topo = quantities::check_topological(&problem.plan, &vec![0.0; d], radius);
    if !topo.holds {
        ladder.stop = Some(StopReason::Topological { violations: topo.violations });
        return Ok(ladder);
    }
    let first = quantities::energy_report(&problem.plan, &problem.dom0, &problem.dom1, radius)
        .map_err(stage("quantities"))?;
    ladder.levels.push(Level {
        k: 0,
        radius,
        e: first.e,
        d: first.d,
        a_bar: linalg::identity(d),
        a_vec: vec![0.0; d],
        frame: 0.0,
    });
    let mut current = problem.clone();
    let mut a_k = linalg::identity(d);
    let mut shift_k = vec![0.0; d];
    for k in 0..depth {
        let r_k = cfg.theta.powi(k as i32) * radius;
        let h = current.map.grid.h;
        if cfg.theta * r_k < 16.0 * h {
            ladder.stop = Some(StopReason::Resolution { level: k + 1, radius: cfg.theta * r_k, h });
            break;
        }
        let out = match one_step(&current, r_k, cfg) {
            Ok(out) => out,
            Err(CampanatoError::Topological { violations }) if k == 0 => {
                ladder.levels.clear();
                ladder.stop = Some(StopReason::Topological { violations });
                break;
            }
            Err(e) => {
                ladder.stop = Some(StopReason::Failed { level: k, message: e.to_string() });
                break;
            }
        };
        let bm = &out.step.b_mat;
        let summed: Vec<f64> = shift_k.iter().zip(&out.step.b).map(|(a, b)| a + b).collect();
        shift_k = linalg::mat_vec(bm, &summed);
        a_k = bm * &a_k;
        let inv = linalg::inverse(&a_k).map_err(stage("matrix"))?;
        let a_bar = &inv * inv.transpose();
        let a_vec = linalg::mat_vec(&inv, &shift_k);
        let kk = (k + 1) as i32;
        let frame = frame_norm(&a_bar).powi(2)
            + cfg.theta.powi(-2 * kk) * linalg::dot(&a_vec, &a_vec) / (radius * radius);
        ladder.levels.push(Level {
            k: k + 1,
            radius: cfg.theta * r_k,
            e: out.e_hat,
            d: out.d_hat,
            a_bar,
            a_vec,
            frame,
        });
        ladder.steps.push(out.step);
        current = out.problem;
    }
    Ok(ladder)
}

/// `R^{2α} [∇T]²_{α, B_{R/16}}` from node pairs with separation in `[4h, R/8]`.
pub fn holder_estimate(map: &MapField, dom0: &Domain, radius: f64, alpha: f64) -> Result<f64> {
    let grid = &map.grid;
    let h = grid.h;
    if h > radius / 256.0 * (1.0 + 1e-9) {
        return Err(CampanatoError::Resolution { h, r: radius });
    }
    let window = radius / 16.0;
    let mut nodes: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let (mut required, mut invalid) = (0usize, 0usize);
    for k in 0..grid.len() {
        let c = grid.center(k);
        if linalg::dot(&c, &c) >= window * window {
            continue;
        }
        if map.valid[k] {
            required += 1;
            match map.gradient(k) {
                Some(g) => nodes.push((c, g)),
                None => invalid += 1,
            }
        } else if dom0.cell_fraction(&c, h) > 0.0 {
            required += 1;
            invalid += 1;
        }
    }
    if invalid as f64 > COVERAGE_LIMIT * required as f64 {
        return Err(CampanatoError::Coverage { invalid, required });
    }
    let (lo, hi) = (4.0 * h * (1.0 - 1e-9), radius / 8.0);
    let mut best: f64 = 0.0;
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let sep = linalg::dist2(&nodes[i].0, &nodes[j].0).sqrt();
            if sep < lo || sep > hi {
                continue;
            }
            let diff = linalg::dist2(&nodes[i].1, &nodes[j].1).sqrt();
            best = best.max(diff / sep.powf(alpha));
        }
    }
    Ok(radius.powf(2.0 * alpha) * best * best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub radius: f64,
    pub depth: usize,
    pub step: StepConfig,
    /// Bound on the fitted `C'`.
    pub c_prime_max: f64,
    /// Bound on the Hölder estimate divided by `ε'`.
    pub linear_max: f64,
    /// Bound on `|Ā_k - Id|² + θ^{-2k}|ā_k|²`.
    pub frame_max: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            radius: 1.0,
            depth: 3,
            step: StepConfig::default(),
            c_prime_max: 50.0,
            linear_max: 1e3,
            frame_max: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
    PreconditionFailed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub status: Status,
    pub epsilon_prime: f64,
    pub energy: EnergyReport,
    pub lambda_control: Option<f64>,
    pub ladder: CampanatoLadder,
    /// `None` when the grid is too coarse for the estimate.
    pub holder: Option<f64>,
    /// Hölder estimate divided by `ε'` (0 when both vanish).
    pub linear_constant: Option<f64>,
    pub clauses: Vec<Clause>,
}

/// Runs quantities, ladder and Hölder estimate on a normalized problem.
pub fn verify_theorem(problem: &Problem, cfg: &TheoremConfig) -> Result<RegularityReport> {
    let d = problem.plan.dim;
    let r = cfg.radius;
    let energy = quantities::energy_report(&problem.plan, &problem.dom0, &problem.dom1, r)
        .map_err(stage("quantities"))?;
    let epsilon_prime = energy.smallness(d);
    let lambda_control = quantities::control_lambda(&energy).ok();
    let empty = CampanatoLadder {
        theta: cfg.step.theta,
        alpha: cfg.step.alpha,
        beta: cfg.step.beta(),
        levels: Vec::new(),
        steps: Vec::new(),
        stop: None,
    };
    let early = |status: Status, ladder: CampanatoLadder| RegularityReport {
        status,
        epsilon_prime,
        energy: energy.clone(),
        lambda_control,
        ladder,
        holder: None,
        linear_constant: None,
        clauses: Vec::new(),
    };
    for (name, dom) in [("source", &problem.dom0), ("target", &problem.dom1)] {
        if let Err(e) = dom.chart.check_normalized() {
            return Ok(early(Status::PreconditionFailed(format!("tangency: {name} chart {e}")), empty));
        }
    }
    let topo = quantities::check_topological(&problem.plan, &vec![0.0; d], r);
    if !topo.holds {
        let mut ladder = empty;
        ladder.stop = Some(StopReason::Topological { violations: topo.violations });
        return Ok(early(Status::PreconditionFailed("topological".into()), ladder));
    }
    if energy.e + energy.d > cfg.step.threshold {
        return Ok(early(
            Status::PreconditionFailed(format!("smallness: E + D = {:.3e}", energy.e + energy.d)),
            empty,
        ));
    }
    let ladder = iterate(problem, r, cfg.depth, &cfg.step)?;
    let holder = match holder_estimate(&problem.map, &problem.dom0, r, cfg.step.alpha) {
        Ok(v) => Some(v),
        Err(CampanatoError::Resolution { .. }) => None,
        Err(e) => return Err(e),
    };
    let linear_constant = holder.map(|v| if epsilon_prime > 0.0 { v / epsilon_prime } else { 0.0 });
    let clause = |name: &str, value: f64, bound: f64| Clause {
        name: name.into(),
        value,
        bound,
        passed: value <= bound,
    };
    let reached = match &ladder.stop {
        None | Some(StopReason::Resolution { .. }) => 0.0,
        _ => 1.0,
    };
    let mut clauses = vec![
        clause("ladder completed", reached, 0.0),
        clause("decay constant C'", ladder.fitted_c_prime(), cfg.c_prime_max),
        clause("frames bounded", ladder.max_frame(), cfg.frame_max),
    ];
    if let Some(c) = linear_constant {
        clauses.push(clause("Hölder estimate / ε'", c, cfg.linear_max));
    }
    let status = if clauses.iter().all(|c| c.passed) { Status::Pass } else { Status::Fail };
    Ok(RegularityReport { status, epsilon_prime, energy, lambda_control, ladder, holder, linear_constant, clauses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, BoundaryGraph};
    use crate::transport::{GridSpec, PointSet};

    /// Closed-form problem `T(x) = M x` from the cells of `grid` inside `{x1 > 0}`.
    fn linear_problem(m: Mat, half: f64, per_unit: usize) -> Problem {
        let n = (2.0 * half * per_unit as f64).round() as usize;
        let grid = GridSpec::new(vec![0.0, -half], 1.0 / per_unit as f64, vec![n / 2, n]);
        let det = m.determinant();
        let cells: Vec<usize> = (0..grid.len()).collect();
        let vol = grid.cell_volume();
        let src_coords: Vec<f64> = cells.iter().flat_map(|&k| grid.center(k)).collect();
        let tgt_coords: Vec<f64> = cells.iter().flat_map(|&k| linalg::mat_vec(&m, &grid.center(k))).collect();
        let lambda1 = 1.0 / det;
        let src = PointSet::new(2, src_coords, vec![vol; cells.len()], 1.0).unwrap();
        let tgt = PointSet::new(2, tgt_coords, vec![vol; cells.len()], lambda1).unwrap();
        let pairs: Vec<_> = (0..cells.len()).map(|i| (i, i, vol)).collect();
        let plan = TransportPlan::from_pairs(src, tgt, &pairs, 1e-9);
        let mut disp = Vec::new();
        for &k in &cells {
            let c = grid.center(k);
            let t = linalg::mat_vec(&m, &c);
            disp.extend(t.iter().zip(&c).map(|(a, b)| a - b));
        }
        let map = MapField { grid: grid.clone(), disp, valid: vec![true; cells.len()], weight: vec![vol; cells.len()] };
        let flat = BoundaryGraph::flat(2, 0.8 * half, 513, 0.5).unwrap();
        let dom0 = Domain::above_graph(0, 1.0, flat.clone(), BBox::new(vec![-1e-9, -half], vec![half, half])).unwrap();
        let hi = linalg::mat_vec(&m, &[half, half]);
        let dom1 = Domain::above_graph(1, lambda1, flat, BBox::new(vec![-1e-9, -hi[1]], vec![hi[0], hi[1]])).unwrap();
        Problem { plan, map, dom0, dom1 }
    }

    #[test]
    fn identity_step_is_trivial() {
        let p = linear_problem(linalg::identity(2), 2.5, 16);
        let out = one_step(&p, 1.0, &StepConfig::default()).unwrap();
        assert!(frame_norm(&out.step.b_mat) < 1e-12);
        assert!(linalg::norm(&out.step.b) < 1e-12);
        assert_eq!(out.e_hat, 0.0);
        let ladder = iterate(&p, 1.0, 2, &StepConfig::default()).unwrap();
        assert!(ladder.levels.iter().all(|l| l.e == 0.0 && l.frame < 1e-20));
    }

    #[test]
    fn saddle_step_recovers_hessian() {
        let a = 0.05;
        let m = Mat::from_row_slice(2, 2, &[1.0 + a, 0.0, 0.0, 1.0 - a]);
        let p = linear_problem(m, 2.5, 64);
        let out = one_step(&p, 1.0, &StepConfig { tau: 0.02, ..StepConfig::default() }).unwrap();
        let ab = &out.step.a_bar;
        assert!((ab[(0, 0)] - a).abs() < 0.15 * a, "{ab}");
        assert!((ab[(1, 1)] + a).abs() < 0.15 * a, "{ab}");
        assert_eq!(ab[(0, 1)], 0.0);
        assert_eq!(out.step.b_bar[0], 0.0);
        assert!(out.step.alignment_defect < 1e-10);
        assert!(out.e_hat < 0.1 * out.e, "{} vs {}", out.e_hat, out.e);
    }

    #[test]
    fn affine_map_has_zero_holder_seminorm() {
        let m = Mat::from_row_slice(2, 2, &[1.02, 0.01, 0.01, 0.99]);
        let p = linear_problem(m, 1.0, 256);
        let v = holder_estimate(&p.map, &p.dom0, 1.0, 0.5).unwrap();
        assert!(v < 1e-18, "{v}");
        assert!(matches!(
            holder_estimate(&p.map, &p.dom0, 0.5, 0.5),
            Err(CampanatoError::Resolution { .. })
        ));
    }
}
