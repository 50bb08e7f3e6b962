//! Straight-line trajectories of a plan, their Eulerian density and momentum,
//! boundary fluxes through cubes `Q_R = (-R, R)^d`, good-slice selection, and
//! the explicit competitor pieces (boundary shear, singular layer, smooth
//! main part).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundaryGraph;
use crate::harmonic::Face;
use crate::linalg;
use crate::transport::{GridSpec, TransportPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EulerianError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cell {cell} at slab {slab} has zero density but nonzero momentum")]
    InfiniteCost { slab: usize, cell: usize },
    #[error(
        "solvability constant {c_tilde:.6e} differs from c0 - c1 = {c0:.6e} - {c1:.6e}; \
         the kept-density and initial/terminal mass balances do not close"
    )]
    Inconsistent { c_tilde: f64, c0: f64, c1: f64 },
    #[error("singular density takes the negative value {0:.3e}; flux splitting is inconsistent")]
    SignViolation(f64),
}

pub type Result<T> = std::result::Result<T, EulerianError>;

/// Trajectories `X(t) = t x1 + (1 - t) x0` carrying the plan masses. Each
/// particle occupies a cube of side `particle_side` when rasterized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub mass: Vec<f64>,
    pub lambda0: f64,
    pub particle_side: f64,
}

impl TrajectorySet {
    pub fn from_plan(plan: &TransportPlan, particle_side: f64) -> Self {
        TrajectorySet {
            dim: plan.dim,
            x0: plan.x0.clone(),
            x1: plan.x1.clone(),
            mass: plan.mass.clone(),
            lambda0: plan.lambda0,
            particle_side,
        }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    /// Coordinates divided by `factor`, masses by `factor^d`: the same densities at unit scale.
    pub fn dilate(&self, factor: f64) -> TrajectorySet {
        TrajectorySet {
            dim: self.dim,
            x0: self.x0.iter().map(|v| v / factor).collect(),
            x1: self.x1.iter().map(|v| v / factor).collect(),
            mass: self.mass.iter().map(|m| m / factor.powi(self.dim as i32)).collect(),
            lambda0: self.lambda0,
            particle_side: self.particle_side / factor,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn start(&self, k: usize) -> &[f64] {
        &self.x0[k * self.dim..(k + 1) * self.dim]
    }

    pub fn end(&self, k: usize) -> &[f64] {
        &self.x1[k * self.dim..(k + 1) * self.dim]
    }

    pub fn position(&self, k: usize, t: f64) -> Vec<f64> {
        self.start(k).iter().zip(self.end(k)).map(|(a, b)| t * b + (1.0 - t) * a).collect()
    }

    pub fn velocity(&self, k: usize) -> Vec<f64> {
        self.end(k).iter().zip(self.start(k)).map(|(b, a)| b - a).collect()
    }
}

/// Slab-averaged density and momentum on `nt` time slabs times the cells of `grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerianField {
    pub grid: GridSpec,
    pub nt: usize,
    pub rho: Vec<f64>,
    pub j: Vec<f64>,
}

/// Overlaps of the interval `[a, b]` with the cells along one axis.
fn axis_overlaps(grid: &GridSpec, axis: usize, a: f64, b: f64) -> Vec<(usize, f64)> {
    let h = grid.h;
    let lo = grid.lo[axis];
    let n = grid.n[axis];
    let first = ((a - lo) / h).floor().max(0.0) as usize;
    let last = (((b - lo) / h).floor() as isize).min(n as isize - 1);
    let mut out = Vec::new();
    if last < 0 {
        return out;
    }
    for c in first..=(last as usize) {
        let cl = lo + c as f64 * h;
        let w = b.min(cl + h) - a.max(cl);
        if w > 0.0 {
            out.push((c, w));
        }
    }
    out
}

/// Area-weighted deposit of a cube of side `side` centered at `p`.
fn deposit(grid: &GridSpec, p: &[f64], side: f64, mut add: impl FnMut(usize, f64)) {
    let d = grid.dim;
    let per_axis: Vec<Vec<(usize, f64)>> =
        (0..d).map(|i| axis_overlaps(grid, i, p[i] - 0.5 * side, p[i] + 0.5 * side)).collect();
    let vol = side.powi(d as i32);
    if d == 1 {
        for &(c, w) in &per_axis[0] {
            add(c, w / vol);
        }
    } else {
        for &(c0, w0) in &per_axis[0] {
            for &(c1, w1) in &per_axis[1] {
                add(c0 * grid.n[1] + c1, w0 * w1 / vol);
            }
        }
    }
}

/// Density of the particles at time `t` on `grid`.
pub fn density_at(traj: &TrajectorySet, grid: &GridSpec, t: f64) -> Vec<f64> {
    let mut rho = vec![0.0; grid.len()];
    let vol = grid.cell_volume();
    for k in 0..traj.len() {
        let m = traj.mass[k];
        deposit(grid, &traj.position(k, t), traj.particle_side, |c, w| rho[c] += m * w / vol);
    }
    rho
}

/// Rasterizes `(ρ, j)` by depositing every particle at the midpoint time of each slab.
pub fn rasterize_eulerian(traj: &TrajectorySet, grid: &GridSpec, nt: usize) -> EulerianField {
    let d = grid.dim;
    let cells = grid.len();
    let vol = grid.cell_volume();
    let mut rho = vec![0.0; nt * cells];
    let mut j = vec![0.0; nt * cells * d];
    for s in 0..nt {
        let t = (s as f64 + 0.5) / nt as f64;
        for k in 0..traj.len() {
            let m = traj.mass[k];
            let v = traj.velocity(k);
            deposit(grid, &traj.position(k, t), traj.particle_side, |c, w| {
                let idx = s * cells + c;
                rho[idx] += m * w / vol;
                for i in 0..d {
                    j[idx * d + i] += m * w / vol * v[i];
                }
            });
        }
    }
    EulerianField { grid: grid.clone(), nt, rho, j }
}

fn bump(u: f64, c: f64, r: f64) -> (f64, f64) {
    let z = (u - c) / r;
    if z.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let a = std::f64::consts::FRAC_PI_2 * z;
    (a.cos().powi(2), -std::f64::consts::FRAC_PI_2 / r * (2.0 * a).sin())
}

impl EulerianField {
    pub fn cells(&self) -> usize {
        self.grid.len()
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().cloned().fold(0.0, f64::max)
    }

    pub fn slice_mass(&self, s: usize) -> f64 {
        let c = self.cells();
        self.rho[s * c..(s + 1) * c].iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn slice_momentum(&self, s: usize) -> Vec<f64> {
        let (c, d) = (self.cells(), self.grid.dim);
        let mut out = vec![0.0; d];
        for k in 0..c {
            for i in 0..d {
                out[i] += self.j[(s * c + k) * d + i];
            }
        }
        out.iter().map(|v| v * self.grid.cell_volume()).collect()
    }

    /// Benamou–Brenier cost `∫∫ |j|^2 / ρ`.
    pub fn cost(&self) -> Result<f64> {
        let (c, d) = (self.cells(), self.grid.dim);
        let w = self.grid.cell_volume() / self.nt as f64;
        let mut sum = 0.0;
        for idx in 0..self.rho.len() {
            let j2: f64 = self.j[idx * d..(idx + 1) * d].iter().map(|v| v * v).sum();
            if self.rho[idx] > 0.0 {
                sum += j2 / self.rho[idx] * w;
            } else if j2 > 0.0 {
                return Err(EulerianError::InfiniteCost { slab: idx / c, cell: idx % c });
            }
        }
        Ok(sum)
    }

    /// Relative weak continuity residual `|∫∫ ∂_t ζ ρ + ∇ζ·j| / ∫∫ (|∂_t ζ| ρ + |∇ζ| |j|)`
    /// for the product bump `ζ` centered at `(tc, xc)` with radii `tr`, `xr`.
    pub fn weak_residual(&self, tc: f64, tr: f64, xc: &[f64], xr: f64) -> f64 {
        let (c, d) = (self.cells(), self.grid.dim);
        let w = self.grid.cell_volume() / self.nt as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for s in 0..self.nt {
            let t = (s as f64 + 0.5) / self.nt as f64;
            let (bt, dbt) = bump(t, tc, tr);
            if bt == 0.0 && dbt == 0.0 {
                continue;
            }
            for k in 0..c {
                let x = self.grid.center(k);
                let parts: Vec<(f64, f64)> = (0..d).map(|i| bump(x[i], xc[i], xr)).collect();
                let bx: f64 = parts.iter().map(|p| p.0).product();
                if bx == 0.0 && parts.iter().all(|p| p.1 == 0.0) {
                    continue;
                }
                let idx = s * c + k;
                let mut term = dbt * bx * self.rho[idx];
                let mut absterm = (dbt * bx * self.rho[idx]).abs();
                for i in 0..d {
                    let gi = bt * parts[i].1 * (0..d).filter(|&l| l != i).map(|l| parts[l].0).product::<f64>();
                    term += gi * self.j[idx * d + i];
                    absterm += (gi * self.j[idx * d + i]).abs();
                }
                num += term * w;
                den += absterm * w;
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num.abs() / den
        }
    }
}

/// One crossing of `∂Q_R`: positive mass for exits, negative for entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub traj: usize,
    pub t: f64,
    pub point: Vec<f64>,
    pub face: Face,
    pub mass: f64,
    pub kept: bool,
}

/// Open time interval during which the segment lies in the open cube `Q_r`,
/// with the faces through which it enters and leaves.
fn cube_interval(x0: &[f64], v: &[f64], r: f64) -> Option<(f64, Face, f64, Face)> {
    let (mut ta, mut tb) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut fa = Face { axis: 0, upper: false };
    let mut fb = fa;
    for i in 0..x0.len() {
        if v[i] == 0.0 {
            if x0[i].abs() >= r {
                return None;
            }
            continue;
        }
        let lo = (-r - x0[i]) / v[i];
        let hi = (r - x0[i]) / v[i];
        let (enter, leave) = if v[i] > 0.0 { (lo, hi) } else { (hi, lo) };
        if enter > ta {
            ta = enter;
            fa = Face { axis: i, upper: v[i] < 0.0 };
        }
        if leave < tb {
            tb = leave;
            fb = Face { axis: i, upper: v[i] > 0.0 };
        }
    }
    if ta < tb {
        Some((ta, fa, tb, fb))
    } else {
        None
    }
}

/// Distance to `∂Q_r`: `r - |x|_∞` inside, Euclidean distance outside.
pub fn dist_to_cube_boundary(x: &[f64], r: f64) -> f64 {
    let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if linf < r {
        r - linf
    } else {
        x.iter().map(|v| (v.abs() - r).max(0.0).powi(2)).sum::<f64>().sqrt()
    }
}

pub fn in_open_cube(x: &[f64], r: f64) -> bool {
    x.iter().all(|v| v.abs() < r)
}

/// Boundary fluxes of the trajectories through `∂Q_R` with the kept/early/late
/// splitting for parameters `τ` and `δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxSlice {
    pub dim: usize,
    pub r: f64,
    pub tau: f64,
    pub delta: f64,
    pub lambda0: f64,
    /// Time bins on `(0,1)`.
    pub nt: usize,
    /// Bins along each face (one in `d = 1`).
    pub nb: usize,
    pub crossings: Vec<Crossing>,
    /// Binned masses indexed `[face][time][position]`.
    pub f: Vec<f64>,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub f_kept: Vec<f64>,
    /// `∫ f^2` with `f` the bin-averaged flux density.
    pub flux_l2: f64,
    /// `Σ mass |x1 - x0|^2` over kept trajectories.
    pub kept_cost: f64,
    /// `∫ dist(·, ∂Q)(ρ0 + ρ1)`.
    pub dist_kept: f64,
    /// `∫ dist(·, ∂Q)(ρ'0 + ρ'1)`.
    pub dist_early_late: f64,
    pub rho0_in_q: f64,
    pub rho1_in_q: f64,
    pub mass0_in_q: f64,
    pub mass1_in_q: f64,
}

impl FluxSlice {
    pub fn faces(&self) -> Vec<Face> {
        Face::all(self.dim)
    }

    pub fn bin_index(&self, face: Face, tbin: usize, sbin: usize) -> usize {
        ((face.axis * 2 + face.upper as usize) * self.nt + tbin) * self.nb + sbin
    }

    /// Length of a face bin (1 in `d = 1`).
    pub fn bin_area(&self) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            2.0 * self.r / self.nb as f64
        }
    }

    fn locate(&self, c: &Crossing) -> (usize, usize) {
        let tbin = ((c.t * self.nt as f64).floor().max(0.0) as usize).min(self.nt - 1);
        let sbin = if self.dim == 1 {
            0
        } else {
            let s = c.point[1 - c.face.axis];
            (((s + self.r) / (2.0 * self.r) * self.nb as f64).floor().max(0.0) as usize).min(self.nb - 1)
        };
        (tbin, sbin)
    }

    pub fn net_flux(&self) -> f64 {
        self.crossings.iter().map(|c| c.mass).sum()
    }

    pub fn net_kept_flux(&self) -> f64 {
        self.crossings.iter().filter(|c| c.kept).map(|c| c.mass).sum()
    }

    /// `|Ω0 ∩ Q| - |Ω1 ∩ Q| - ∫ f` in mass units; zero at trajectory level.
    pub fn mass_balance_defect(&self) -> f64 {
        self.mass0_in_q - self.mass1_in_q - self.net_flux()
    }

    /// `f̄ = ∫ (f - f') dt` per face bin, as volume flux per unit face area.
    pub fn neumann_bins(&self) -> Vec<f64> {
        let faces = self.faces();
        let mut out = vec![0.0; faces.len() * self.nb];
        for c in self.crossings.iter().filter(|c| !c.kept) {
            let (_, sbin) = self.locate(c);
            let fi = c.face.axis * 2 + c.face.upper as usize;
            out[fi * self.nb + sbin] += c.mass / self.lambda0 / self.bin_area();
        }
        out
    }

    /// Value of `f̄` at a point of `face`.
    pub fn neumann_value(&self, bins: &[f64], face: Face, x: &[f64]) -> f64 {
        let sbin = if self.dim == 1 {
            0
        } else {
            let s = x[1 - face.axis];
            (((s + self.r) / (2.0 * self.r) * self.nb as f64).floor().max(0.0) as usize).min(self.nb - 1)
        };
        bins[(face.axis * 2 + face.upper as usize) * self.nb + sbin]
    }

    /// Largest `|f̄|` on face points with `x1 < δ`; zero by construction.
    pub fn neumann_support_defect(&self) -> f64 {
        self.crossings
            .iter()
            .filter(|c| !c.kept && c.point[0] < self.delta)
            .map(|c| c.mass.abs())
            .fold(0.0, f64::max)
    }

    /// `|Q ∩ {x1 > δ}|`.
    pub fn upper_volume(&self) -> f64 {
        (self.r - self.delta) * (2.0 * self.r).powi(self.dim as i32 - 1)
    }

    /// Constants `c0`, `c1` of the main construction, from
    /// `|Q ∩ {x1>δ}| - ∫_Q ρ_i = c_i |Q ∩ {x1>δ}|` in volume units.
    pub fn main_constants(&self) -> (f64, f64) {
        let v = self.upper_volume();
        (1.0 - self.rho0_in_q / self.lambda0 / v, 1.0 - self.rho1_in_q / self.lambda0 / v)
    }
}

/// Computes all crossings of `∂Q_r` and the binned fluxes.
pub fn flux_slice(traj: &TrajectorySet, r: f64, tau: f64, delta: f64, nt: usize, nb: usize) -> Result<FluxSlice> {
    if !(tau > 0.0 && tau < 0.25) {
        return Err(EulerianError::Precondition(format!("τ = {tau} not in (0, 1/4)")));
    }
    if delta < 0.0 {
        return Err(EulerianError::Precondition(format!("δ = {delta} is negative")));
    }
    let d = traj.dim;
    let nb = if d == 1 { 1 } else { nb.max(1) };
    let nt = nt.max(1);
    let bins = 2 * d * nt * nb;
    let mut out = FluxSlice {
        dim: d,
        r,
        tau,
        delta,
        lambda0: traj.lambda0,
        nt,
        nb,
        crossings: Vec::new(),
        f: vec![0.0; bins],
        f_plus: vec![0.0; bins],
        f_minus: vec![0.0; bins],
        f_kept: vec![0.0; bins],
        flux_l2: 0.0,
        kept_cost: 0.0,
        dist_kept: 0.0,
        dist_early_late: 0.0,
        rho0_in_q: 0.0,
        rho1_in_q: 0.0,
        mass0_in_q: 0.0,
        mass1_in_q: 0.0,
    };
    for k in 0..traj.len() {
        let m = traj.mass[k];
        let (a, b) = (traj.start(k), traj.end(k));
        if in_open_cube(a, r) {
            out.mass0_in_q += m;
        }
        if in_open_cube(b, r) {
            out.mass1_in_q += m;
        }
        let v = traj.velocity(k);
        let Some((ta, fa, tb, fb)) = cube_interval(a, &v, r) else { continue };
        let mut kept_any = false;
        if tb > 0.0 && tb <= 1.0 && ta.max(0.0) < tb {
            let p = traj.position(k, tb);
            let kept = p[0] < delta || tb < tau;
            if kept {
                kept_any = true;
                out.dist_kept += m * dist_to_cube_boundary(a, r);
                if in_open_cube(a, r) {
                    out.rho0_in_q += m;
                }
                if tb < tau {
                    out.dist_early_late += m * dist_to_cube_boundary(a, r);
                }
            }
            out.crossings.push(Crossing { traj: k, t: tb, point: p, face: fb, mass: m, kept });
        }
        if (0.0..1.0).contains(&ta) && ta < tb.min(1.0) {
            let p = traj.position(k, ta);
            let kept = p[0] < delta || ta > 1.0 - tau;
            if kept {
                kept_any = true;
                out.dist_kept += m * dist_to_cube_boundary(b, r);
                if in_open_cube(b, r) {
                    out.rho1_in_q += m;
                }
                if ta > 1.0 - tau {
                    out.dist_early_late += m * dist_to_cube_boundary(b, r);
                }
            }
            out.crossings.push(Crossing { traj: k, t: ta, point: p, face: fa, mass: -m, kept });
        }
        if kept_any {
            out.kept_cost += m * linalg::dist2(a, b);
        }
    }
    for idx in 0..out.crossings.len() {
        let (tbin, sbin) = out.locate(&out.crossings[idx]);
        let c = &out.crossings[idx];
        let bi = out.bin_index(c.face, tbin, sbin);
        out.f[bi] += c.mass;
        if c.mass > 0.0 {
            out.f_plus[bi] += c.mass;
        } else {
            out.f_minus[bi] -= c.mass;
        }
        if c.kept {
            out.f_kept[bi] += c.mass;
        }
    }
    let cell = out.bin_area() / nt as f64;
    out.flux_l2 = out.f.iter().map(|m| (m / traj.lambda0).powi(2) / cell).sum();
    Ok(out)
}

/// The four good-slice functionals at one radius, raw and divided by their bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceScore {
    pub r: f64,
    pub flux_l2: f64,
    pub kept_cost: f64,
    pub dist_kept: f64,
    pub dist_early_late: f64,
    pub normalized: [f64; 4],
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodSlice {
    pub r: f64,
    pub slice: FluxSlice,
    pub scores: Vec<SliceScore>,
}

pub const SLICE_SCAN: usize = 32;

/// Scans `R_k = 1 + (k + 1/2)/32` and returns the radius minimizing
/// `F1/E + F2/(ME) + F3/E + F4/(τ²E)`; the first radius when `E = 0`.
pub fn select_good_slice(
    traj: &TrajectorySet,
    tau: f64,
    delta: f64,
    e: f64,
    m: f64,
    nt: usize,
    nb: usize,
) -> Result<GoodSlice> {
    let mut best: Option<(f64, FluxSlice)> = None;
    let mut scores = Vec::with_capacity(SLICE_SCAN);
    for k in 0..SLICE_SCAN {
        let r = 1.0 + (k as f64 + 0.5) / SLICE_SCAN as f64;
        let s = flux_slice(traj, r, tau, delta, nt, nb)?;
        let vol = traj.lambda0;
        let raw = [s.flux_l2, s.kept_cost / vol, s.dist_kept / vol, s.dist_early_late / vol];
        let normalized = if e > 0.0 {
            [raw[0] / e, raw[1] / (m.max(f64::MIN_POSITIVE) * e), raw[2] / e, raw[3] / (tau * tau * e)]
        } else {
            [0.0; 4]
        };
        let total: f64 = normalized.iter().sum();
        scores.push(SliceScore {
            r,
            flux_l2: raw[0],
            kept_cost: raw[1],
            dist_kept: raw[2],
            dist_early_late: raw[3],
            normalized,
            total,
        });
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, s));
        }
    }
    let (_, slice) = best.expect("scan is nonempty");
    Ok(GoodSlice { r: slice.r, slice, scores })
}

/// Explicit shear competitor in the boundary layer `{x1 < δ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCompetitor {
    pub cost_closed: f64,
    pub cost_quadrature: f64,
    pub field: EulerianField,
}

/// Shearing construction: density one above the interpolated graph
/// `g_t = g0 + (t - τ)/(1 - 2τ) (g1 - g0)` and velocity `-ḡ/(1 - 2τ) e1`
/// between `g_t` and `δ`, for `t ∈ (τ, 1 - τ)`; `ḡ = g0 - g1`.
/// The cost is `(1/(1-2τ)) ∫_{Q'} (δ - (g0 + g1)/2) ḡ^2`.
pub fn competitor_boundary(
    g0: &BoundaryGraph,
    g1: &BoundaryGraph,
    delta: f64,
    tau: f64,
    r: f64,
    n: usize,
    nt: usize,
) -> Result<BoundaryCompetitor> {
    if g0.dim != 2 || g1.dim != 2 {
        return Err(EulerianError::Precondition("boundary competitor needs d = 2".into()));
    }
    let width = g0.sup_norm(r) + g1.sup_norm(r);
    if delta < width * (1.0 - 1e-12) {
        return Err(EulerianError::Precondition(format!("δ = {delta} below ‖g0‖ + ‖g1‖ = {width}")));
    }
    if !(tau > 0.0 && tau < 0.25) {
        return Err(EulerianError::Precondition(format!("τ = {tau} not in (0, 1/4)")));
    }
    let val = |g: &BoundaryGraph, s: f64| g.eval_unchecked(s).0;
    let span = 1.0 - 2.0 * tau;

    // closed form by composite Simpson in x'
    let ns = 4000;
    let hs = 2.0 * r / ns as f64;
    let integrand = |s: f64| {
        let (a, b) = (val(g0, s), val(g1, s));
        (delta - 0.5 * (a + b)) * (a - b).powi(2)
    };
    let mut simpson = integrand(-r) + integrand(r);
    for k in 1..ns {
        simpson += integrand(-r + k as f64 * hs) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let cost_closed = simpson * hs / 3.0 / span;

    // space-time field on (-δ_lo, δ) × (-r, r) with slab-midpoint quadrature
    let lo = -width.max(delta) - 4.0 * (2.0 * r / n as f64);
    let h = 2.0 * r / n as f64;
    let n0 = ((delta - lo) / h).ceil() as usize;
    let grid = GridSpec::new(vec![delta - n0 as f64 * h, -r], h, vec![n0, n]);
    let cells = grid.len();
    let mut rho = vec![0.0; nt * cells];
    let mut j = vec![0.0; nt * cells * 2];
    let sub = 8;
    for s in 0..nt {
        let t = (s as f64 + 0.5) / nt as f64;
        let lam = ((t - tau) / span).clamp(0.0, 1.0);
        let active = t > tau && t < 1.0 - tau;
        for k in 0..cells {
            let c = grid.center(k);
            let x2 = c[1];
            // fraction of the cell above g_t, by subsampling in x'
            let mut frac = 0.0;
            let mut vel = 0.0;
            for q in 0..sub {
                let sx = x2 - 0.5 * h + (q as f64 + 0.5) * h / sub as f64;
                let (a, b) = (val(g0, sx), val(g1, sx));
                let gt = a + lam * (b - a);
                let bot = c[0] - 0.5 * h;
                let top = c[0] + 0.5 * h;
                let f = ((top - gt.max(bot)) / h).clamp(0.0, 1.0);
                frac += f / sub as f64;
                if active {
                    vel += -(a - b) / span * f / sub as f64;
                }
            }
            let idx = s * cells + k;
            rho[idx] = frac;
            j[idx * 2] = vel;
        }
    }
    let field = EulerianField { grid, nt, rho, j };
    let cost_quadrature = field.cost()?;
    Ok(BoundaryCompetitor { cost_closed, cost_quadrature, field })
}

/// Singular density on `(0,1) × ∂Q` absorbing `f - f'` outside `(τ, 1-τ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularCompetitor {
    /// Time nodes `k / nt`.
    pub times: Vec<f64>,
    /// Density per area indexed `[face][position][time node]`.
    pub rho: Vec<f64>,
    pub min: f64,
    /// `max |ρ^sing|` at `t = 0` and `t = 1`.
    pub endpoint: f64,
    /// Largest defect of `∂_t ρ^sing = f^main - (f - f')` over time bins.
    pub continuity_defect: f64,
    /// Largest `|∫_τ^{1-τ} (f^main - f̄/(1-2τ)) dt|` over face bins.
    pub main_balance_defect: f64,
}

/// Evaluates the three-case singular density from the atoms of `f - f'`.
pub fn competitor_singular(slice: &FluxSlice) -> Result<SingularCompetitor> {
    let tau = slice.tau;
    let span = 1.0 - 2.0 * tau;
    let nfaces = 2 * slice.dim;
    let nb = slice.nb;
    let nt = slice.nt;
    let area = slice.bin_area();
    let times: Vec<f64> = (0..=nt).map(|k| k as f64 / nt as f64).collect();
    // atoms of f - f' per face bin, in volume units per area
    let mut atoms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); nfaces * nb];
    for c in slice.crossings.iter().filter(|c| !c.kept) {
        let sbin = if slice.dim == 1 {
            0
        } else {
            let s = c.point[1 - c.face.axis];
            (((s + slice.r) / (2.0 * slice.r) * nb as f64).floor().max(0.0) as usize).min(nb - 1)
        };
        let fi = c.face.axis * 2 + c.face.upper as usize;
        atoms[fi * nb + sbin].push((c.t, c.mass / slice.lambda0 / area));
    }
    let mut rho = vec![0.0; nfaces * nb * (nt + 1)];
    let (mut min, mut endpoint, mut cont, mut bal) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for b in 0..nfaces * nb {
        let list = &atoms[b];
        let upto = |t: f64| list.iter().filter(|(s, _)| *s < t).map(|(_, m)| m).sum::<f64>();
        let from = |t: f64| list.iter().filter(|(s, _)| *s > t).map(|(_, m)| m).sum::<f64>();
        let early = upto(tau);
        let late = from(1.0 - tau);
        let total: f64 = list.iter().map(|(_, m)| m).sum();
        let value = |t: f64| -> f64 {
            if t <= tau {
                -upto(t)
            } else if t < 1.0 - tau {
                (t + tau - 1.0) / span * early + (t - tau) / span * late
            } else {
                from(t)
            }
        };
        for (k, &t) in times.iter().enumerate() {
            let v = value(t);
            rho[b * (nt + 1) + k] = v;
            min = min.min(v);
        }
        endpoint = endpoint.max(value(0.0).abs()).max(value(1.0).abs());
        // f^main on (τ, 1-τ) is (f - f') plus the uniform rate (early + late)/(1 - 2τ)
        let rate = (early + late) / span;
        for k in 0..nt {
            let (a, c) = (times[k], times[k + 1]);
            let inner = (c.min(1.0 - tau) - a.max(tau)).max(0.0);
            let jump: f64 = list.iter().filter(|(s, _)| *s >= a && *s < c).map(|(_, m)| m).sum();
            let main_part = if inner > 0.0 {
                rate * inner
                    + list
                        .iter()
                        .filter(|(s, _)| *s >= a.max(tau) && *s < c.min(1.0 - tau))
                        .map(|(_, m)| m)
                        .sum::<f64>()
            } else {
                0.0
            };
            let lhs = value(c) - value(a);
            cont = cont.max((lhs - (main_part - jump)).abs());
        }
        let middle: f64 = list.iter().filter(|(s, _)| *s >= tau && *s <= 1.0 - tau).map(|(_, m)| m).sum();
        bal = bal.max((middle + early + late - total).abs());
    }
    let scale = slice.crossings.iter().map(|c| c.mass.abs()).fold(0.0, f64::max) / slice.lambda0 / area;
    if min < -1e-9 * scale.max(1.0) {
        return Err(EulerianError::SignViolation(min));
    }
    Ok(SingularCompetitor {
        times,
        rho,
        min,
        endpoint,
        continuity_defect: cont,
        main_balance_defect: bal,
    })
}

/// Cost of the interpolating density `s̃` between `c0` and `c1` with
/// momentum `∇φ̃ / (1 - 2τ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainSmooth {
    pub time_factor: f64,
    pub time_factor_quadrature: f64,
    pub cost: f64,
    pub cost_quadrature: f64,
}

/// `∫_0^1 dt / (t c1 + (1-t) c0)`.
pub fn time_factor(c0: f64, c1: f64) -> f64 {
    if (c0 - c1).abs() <= 1e-12 * c0.abs().max(c1.abs()) {
        1.0 / c0
    } else {
        (c0 / c1).ln() / (c0 - c1)
    }
}

pub fn competitor_main_smooth(dirichlet: f64, c0: f64, c1: f64, c_tilde: f64, tau: f64, tol: f64) -> Result<MainSmooth> {
    if !(0.5..=2.0).contains(&c0) || !(0.5..=2.0).contains(&c1) {
        return Err(EulerianError::Precondition(format!("c0 = {c0}, c1 = {c1} outside [1/2, 2]")));
    }
    if (c_tilde - (c0 - c1)).abs() > tol {
        return Err(EulerianError::Inconsistent { c_tilde, c0, c1 });
    }
    let span = 1.0 - 2.0 * tau;
    let tf = time_factor(c0, c1);
    let n = 2000;
    let g = |t: f64| 1.0 / (t * c1 + (1.0 - t) * c0);
    let h = 1.0 / n as f64;
    let mut q = g(0.0) + g(1.0);
    for k in 1..n {
        q += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let tq = q * h / 3.0;
    Ok(MainSmooth {
        time_factor: tf,
        time_factor_quadrature: tq,
        cost: tf * dirichlet / span,
        cost_quadrature: tq * dirichlet / span,
    })
}

/// `∫∫ (1/ρ)|j - ρ∇φ|^2 - (∫∫ (1/ρ)|j|^2 - ∫_{x1>-δ} |∇φ|^2)` over cells of
/// the field with centers in `Q_r`, evaluated directly and through the
/// expanded square; returns `(direct, expanded)`.
pub fn orthogonality_defect(
    field: &EulerianField,
    grad_phi: impl Fn(&[f64]) -> Vec<f64>,
    delta: f64,
    r: f64,
) -> Result<(f64, f64)> {
    let (c, d) = (field.cells(), field.grid.dim);
    let w = field.grid.cell_volume() / field.nt as f64;
    let vol = field.grid.cell_volume();
    let grads: Vec<Option<Vec<f64>>> = (0..c)
        .map(|k| {
            let x = field.grid.center(k);
            in_open_cube(&x, r).then(|| grad_phi(&x))
        })
        .collect();
    let (mut sq, mut jj, mut cross, mut rg) = (0.0, 0.0, 0.0, 0.0);
    for s in 0..field.nt {
        for k in 0..c {
            let Some(g) = &grads[k] else { continue };
            let idx = s * c + k;
            let rho = field.rho[idx];
            let j = &field.j[idx * d..(idx + 1) * d];
            let j2 = linalg::dot(j, j);
            if rho <= 0.0 {
                if j2 > 0.0 {
                    return Err(EulerianError::InfiniteCost { slab: s, cell: k });
                }
                continue;
            }
            let diff: Vec<f64> = j.iter().zip(g).map(|(a, b)| a - rho * b).collect();
            sq += linalg::dot(&diff, &diff) / rho * w;
            jj += j2 / rho * w;
            cross += linalg::dot(j, g) * w;
            rg += rho * linalg::dot(g, g) * w;
        }
    }
    let mut upper = 0.0;
    for k in 0..c {
        if let Some(g) = &grads[k] {
            if field.grid.center(k)[0] > -delta {
                upper += linalg::dot(g, g) * vol;
            }
        }
    }
    let direct = sq - (jj - upper);
    let expanded = rg - 2.0 * cross + upper;
    Ok((direct, expanded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::PointSet;

    fn single(x0: Vec<f64>, x1: Vec<f64>, m: f64) -> TrajectorySet {
        let d = x0.len();
        TrajectorySet { dim: d, x0, x1, mass: vec![m], lambda0: 1.0, particle_side: 0.1 }
    }

    #[test]
    fn interior_trajectory_has_no_flux() {
        let t = single(vec![0.1, 0.2], vec![0.3, -0.2], 1.0);
        let s = flux_slice(&t, 1.0, 0.1, 0.0, 8, 4).unwrap();
        assert!(s.crossings.is_empty());
        assert_eq!(s.mass_balance_defect(), 0.0);
    }

    #[test]
    fn exit_is_one_atom() {
        let t = single(vec![0.5, 0.0], vec![1.5, 0.0], 2.0);
        let s = flux_slice(&t, 1.0, 0.1, 0.0, 10, 4).unwrap();
        assert_eq!(s.crossings.len(), 1);
        let c = &s.crossings[0];
        assert!((c.t - 0.5).abs() < 1e-15 && c.mass == 2.0);
        assert_eq!(c.face, Face { axis: 0, upper: true });
        assert_eq!(s.f_plus.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(s.f_minus.iter().sum::<f64>(), 0.0);
        assert_eq!(s.mass_balance_defect(), 0.0);
    }

    #[test]
    fn tangent_trajectory_does_not_cross() {
        let t = single(vec![-0.5, 1.0], vec![0.5, 1.0], 1.0);
        let s = flux_slice(&t, 1.0, 0.1, 0.0, 10, 4).unwrap();
        assert!(s.crossings.is_empty());
    }

    #[test]
    fn one_particle_bookkeeping() {
        let grid = GridSpec::cube(vec![-1.0, -1.0], 2.0, 20);
        let a = vec![-0.5, -0.5];
        let b = vec![0.5, 0.3];
        let t = TrajectorySet { dim: 2, x0: a.clone(), x1: b.clone(), mass: vec![1.5], lambda0: 1.0, particle_side: 0.1 };
        let field = rasterize_eulerian(&t, &grid, 10);
        for s in 0..10 {
            assert!((field.slice_mass(s) - 1.5).abs() < 1e-12);
            let p = field.slice_momentum(s);
            assert!((p[0] - 1.5).abs() < 1e-12 && (p[1] - 1.2).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_plan_field() {
        let grid = GridSpec::cube(vec![0.0, 0.0], 1.0, 16);
        let coords: Vec<f64> = (0..grid.len()).flat_map(|k| grid.center(k)).collect();
        let pts = PointSet::new(2, coords, vec![grid.cell_volume(); grid.len()], 1.0).unwrap();
        let pairs: Vec<_> = (0..pts.len()).map(|i| (i, i, pts.weights[i])).collect();
        let plan = TransportPlan::from_pairs(pts.clone(), pts, &pairs, 1e-9);
        let t = TrajectorySet::from_plan(&plan, grid.h);
        let f = rasterize_eulerian(&t, &grid, 4);
        assert!(f.j.iter().all(|v| *v == 0.0));
        assert!(f.rho.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(f.cost().unwrap(), 0.0);
    }

    #[test]
    fn singular_density_for_early_entry() {
        // entry at t = 0.05 through the upper x1 face, above δ
        let t = single(vec![1.2, 0.0], vec![-0.8, 0.0], 1.0);
        let s = flux_slice(&t, 1.0, 0.2, 0.0, 20, 1).unwrap();
        let c = &s.crossings[0];
        assert!(!c.kept && c.mass < 0.0);
        let sing = competitor_singular(&s).unwrap();
        assert!(sing.min >= 0.0 && sing.endpoint == 0.0);
        assert!(sing.continuity_defect < 1e-12);
        // ramps up to the atom mass after the entry, then decays linearly to zero
        let b = (c.face.axis * 2 + c.face.upper as usize) * s.nb;
        let at = |k: usize| sing.rho[b * (s.nt + 1) + k];
        let area = s.bin_area();
        assert!((at(4) - 1.0 / area).abs() < 1e-12);
        assert!((at(10) - 0.5 / area).abs() < 1e-12);
    }

    #[test]
    fn main_time_factor_cases() {
        let a = competitor_main_smooth(2.0, 1.0, 1.0, 0.0, 0.1, 1e-9).unwrap();
        assert!((a.cost - 2.0 / 0.8).abs() < 1e-12);
        let b = competitor_main_smooth(2.0, 1.1, 0.9, 0.2, 0.1, 1e-9).unwrap();
        assert!((b.time_factor - b.time_factor_quadrature).abs() < 1e-10);
        assert!(matches!(
            competitor_main_smooth(1.0, 1.1, 0.9, 0.0, 0.1, 1e-9),
            Err(EulerianError::Inconsistent { .. })
        ));
    }

    #[test]
    fn boundary_competitor_matches_closed_form() {
        let delta = 0.04;
        let g0 = BoundaryGraph::flat(2, 1.0, 201, 0.5).unwrap();
        let g1 = BoundaryGraph::from_fn(2, 1.0, 201, 0.5, |s| delta * (std::f64::consts::PI * s / 2.0).cos()).unwrap();
        let bc = competitor_boundary(&g0, &g1, delta, 0.1, 1.0, 400, 40).unwrap();
        assert!((bc.cost_quadrature - bc.cost_closed).abs() < 0.03 * bc.cost_closed);
        let same = competitor_boundary(&g0, &g0, 0.0, 0.1, 1.0, 50, 10).unwrap();
        assert_eq!(same.cost_closed, 0.0);
        assert!(competitor_boundary(&g0, &g1, 0.5 * delta, 0.1, 1.0, 50, 10).is_err());
    }
}
