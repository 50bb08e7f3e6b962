//! Neumann Poisson problems `Δφ = c` on the half-cube
//! `(x1_min, R) × (-R, R)^{d-1}`, discretized by cell-centred finite volumes
//! and solved with conjugate gradients on the mean-zero subspace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Domain;
use crate::linalg;
use crate::transport::MapField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicError {
    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("invalid half-cube: {0}")]
    Config(String),
    #[error("{invalid} of {required} map cells in the ball are invalid")]
    Coverage { invalid: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, HarmonicError>;

/// Face of an axis-aligned box: `x_axis = upper ? hi : lo`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    pub fn all(dim: usize) -> Vec<Face> {
        (0..dim).flat_map(|axis| [Face { axis, upper: false }, Face { axis, upper: true }]).collect()
    }

    pub fn normal_sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }
}

/// Cell grid on `(x1_min, r) × (-r, r)^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfCube {
    pub dim: usize,
    pub x1_min: f64,
    pub r: f64,
    pub n: Vec<usize>,
}

impl HalfCube {
    pub fn new(dim: usize, x1_min: f64, r: f64, n: Vec<usize>) -> Result<Self> {
        if !(1..=2).contains(&dim) || n.len() != dim || n.iter().any(|&k| k < 2) {
            return Err(HarmonicError::Config(format!("dim {dim}, cells {n:?}")));
        }
        if !(x1_min < r) || r <= 0.0 {
            return Err(HarmonicError::Config(format!("x1_min = {x1_min}, r = {r}")));
        }
        Ok(HalfCube { dim, x1_min, r, n })
    }

    /// Roughly square cells with `n` cells across the tangential width `2r`.
    pub fn uniform(dim: usize, x1_min: f64, r: f64, n: usize) -> Result<Self> {
        let h = 2.0 * r / n as f64;
        let n0 = (((r - x1_min) / h).round() as usize).max(2);
        let cells = if dim == 1 { vec![n0] } else { vec![n0, n] };
        HalfCube::new(dim, x1_min, r, cells)
    }

    pub fn lo(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.x1_min
        } else {
            -self.r
        }
    }

    pub fn hi(&self, _axis: usize) -> f64 {
        self.r
    }

    pub fn h(&self, axis: usize) -> f64 {
        (self.hi(axis) - self.lo(axis)) / self.n[axis] as f64
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|i| self.h(i)).product()
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    fn index(&self, k: usize) -> [usize; 2] {
        if self.dim == 1 {
            [k, 0]
        } else {
            [k / self.n[1], k % self.n[1]]
        }
    }

    fn flat(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.n[1] + idx[1]
        }
    }

    pub fn center(&self, k: usize) -> Vec<f64> {
        let idx = self.index(k);
        (0..self.dim).map(|i| self.lo(i) + (idx[i] as f64 + 0.5) * self.h(i)).collect()
    }

    fn neighbor(&self, k: usize, axis: usize, upper: bool) -> Option<usize> {
        let mut idx = self.index(k);
        if upper {
            if idx[axis] + 1 == self.n[axis] {
                return None;
            }
            idx[axis] += 1;
        } else {
            if idx[axis] == 0 {
                return None;
            }
            idx[axis] -= 1;
        }
        Some(self.flat(idx))
    }

    /// Center of the boundary face of cell `k` on `face`.
    fn face_point(&self, k: usize, face: Face) -> Vec<f64> {
        let mut x = self.center(k);
        x[face.axis] = if face.upper { self.hi(face.axis) } else { self.lo(face.axis) };
        x
    }

    fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.h(axis)
    }
}

pub type FaceFlux<'a> = Box<dyn Fn(Face, &[f64]) -> f64 + 'a>;
pub type Source<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// Neumann data `ν·∇φ` on each face and an optional source: `Δφ = c + s`.
pub struct NeumannData<'a> {
    pub flux: FaceFlux<'a>,
    pub source: Option<Source<'a>>,
}

impl<'a> NeumannData<'a> {
    pub fn new(flux: impl Fn(Face, &[f64]) -> f64 + 'a) -> Self {
        NeumannData { flux: Box::new(flux), source: None }
    }

    pub fn zero() -> Self {
        NeumannData::new(|_, _| 0.0)
    }

    pub fn with_source(mut self, source: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        self.source = Some(Box::new(source));
        self
    }
}

/// Discrete solution with its solvability constant and cell-centred gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub cube: HalfCube,
    pub phi: Vec<f64>,
    pub grad: Vec<f64>,
    pub c: f64,
    /// Data quadrature `Σ g |face|`.
    pub boundary_flux: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Whether the solution is extended evenly across `x1 = 0`.
    pub mirrored: bool,
}

fn apply(cube: &HalfCube, coef: &[f64], x: &[f64], out: &mut [f64]) {
    for k in 0..cube.len() {
        let mut acc = 0.0;
        for axis in 0..cube.dim {
            for upper in [false, true] {
                if let Some(nb) = cube.neighbor(k, axis, upper) {
                    acc += coef[axis] * (x[k] - x[nb]);
                }
            }
        }
        out[k] = acc;
    }
}

fn project_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

pub const CG_TOL: f64 = 1e-10;

/// Solves the Neumann problem; the constant `c` is fixed by discrete
/// compatibility so that `c |cube| + ∫ s = Σ g |face|` holds exactly.
pub fn solve_neumann(cube: &HalfCube, data: &NeumannData, tol: f64) -> Result<PotentialField> {
    let n = cube.len();
    let vol = cube.cell_volume();
    let coef: Vec<f64> = (0..cube.dim).map(|i| vol / (cube.h(i) * cube.h(i))).collect();
    let mut bterm = vec![0.0; n];
    let mut bface: Vec<Vec<(Face, f64)>> = vec![Vec::new(); n];
    let mut boundary_flux = 0.0;
    for k in 0..n {
        for face in Face::all(cube.dim) {
            if cube.neighbor(k, face.axis, face.upper).is_none() {
                let g = (data.flux)(face, &cube.face_point(k, face));
                let q = g * cube.face_area(face.axis);
                bterm[k] += q;
                boundary_flux += q;
                bface[k].push((face, g));
            }
        }
    }
    let source: Vec<f64> = match &data.source {
        Some(s) => (0..n).map(|k| s(&cube.center(k)) * vol).collect(),
        None => vec![0.0; n],
    };
    let c = (boundary_flux - source.iter().sum::<f64>()) / cube.volume();
    // A φ = G - (c + s) vol with A the positive semidefinite difference operator
    let mut b: Vec<f64> = (0..n).map(|k| bterm[k] - c * vol - source[k]).collect();
    project_mean(&mut b);
    let bnorm = linalg::norm(&b);
    let mut phi = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = 0.0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = linalg::dot(&r, &r);
        let max_iter = 20 * n + 100;
        loop {
            apply(cube, &coef, &p, &mut ap);
            let alpha = rr / linalg::dot(&p, &ap);
            for k in 0..n {
                phi[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            project_mean(&mut r);
            let rr_new = linalg::dot(&r, &r);
            iterations += 1;
            residual = rr_new.sqrt() / bnorm;
            if residual <= tol {
                break;
            }
            if iterations >= max_iter {
                return Err(HarmonicError::Solver { iterations, residual });
            }
            let beta = rr_new / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_new;
        }
        project_mean(&mut phi);
    }

    let d = cube.dim;
    let mut grad = vec![0.0; n * d];
    for k in 0..n {
        for axis in 0..d {
            let face_grad = |upper: bool| -> f64 {
                match cube.neighbor(k, axis, upper) {
                    Some(nb) => {
                        let s = if upper { 1.0 } else { -1.0 };
                        s * (phi[nb] - phi[k]) / cube.h(axis)
                    }
                    None => {
                        let face = Face { axis, upper };
                        let g = bface[k].iter().find(|(f, _)| *f == face).map_or(0.0, |(_, g)| *g);
                        face.normal_sign() * g
                    }
                }
            };
            grad[k * d + axis] = 0.5 * (face_grad(false) + face_grad(true));
        }
    }
    Ok(PotentialField {
        cube: cube.clone(),
        phi,
        grad,
        c,
        boundary_flux,
        iterations,
        residual,
        mirrored: cube.x1_min == 0.0,
    })
}

impl PotentialField {
    /// `c |cube| + ∫ s - Σ g |face|`, relative to the data size.
    pub fn compatibility_defect(&self, source_integral: f64) -> f64 {
        let scale = self.boundary_flux.abs().max(1e-300);
        (self.c * self.cube.volume() + source_integral - self.boundary_flux).abs() / scale.max(1.0)
    }

    fn fold(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut y = x.to_vec();
        let mut sign = 1.0;
        if self.mirrored && y[0] < 0.0 {
            y[0] = -y[0];
            sign = -1.0;
        }
        (y, sign)
    }

    fn interp(&self, values: &[f64], stride: usize, comp: usize, x: &[f64]) -> f64 {
        let cube = &self.cube;
        let d = cube.dim;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for i in 0..d {
            let u = ((x[i] - cube.lo(i)) / cube.h(i) - 0.5).clamp(0.0, (cube.n[i] - 1) as f64);
            let f = u.floor().min((cube.n[i] - 2) as f64);
            base[i] = f as usize;
            frac[i] = u - f;
        }
        let mut out = 0.0;
        for corner in 0..(1usize << d) {
            let mut idx = base;
            let mut w = 1.0;
            for i in 0..d {
                if corner >> i & 1 == 1 {
                    idx[i] += 1;
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            out += w * values[cube.flat(idx) * stride + comp];
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (y, _) = self.fold(x);
        self.interp(&self.phi, 1, 0, &y)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (y, sign) = self.fold(x);
        let d = self.cube.dim;
        (0..d)
            .map(|i| {
                let g = self.interp(&self.grad, d, i, &y);
                if i == 0 {
                    sign * g
                } else {
                    g
                }
            })
            .collect()
    }

    fn cell_hessian(&self, k: usize) -> Vec<f64> {
        let cube = &self.cube;
        let d = cube.dim;
        let mut hess = vec![0.0; d * d];
        for j in 0..d {
            let (a, b, span) = match (cube.neighbor(k, j, false), cube.neighbor(k, j, true)) {
                (Some(lo), Some(hi)) => (hi, lo, 2.0),
                (None, Some(hi)) => (hi, k, 1.0),
                (Some(lo), None) => (k, lo, 1.0),
                (None, None) => continue,
            };
            for i in 0..d {
                hess[i * d + j] = (self.grad[a * d + i] - self.grad[b * d + i]) / (span * cube.h(j));
            }
        }
        hess
    }

    /// Cells of the (mirrored) solution with centers in `B_rho`, each with its
    /// reflection sign for the first coordinate.
    fn ball_cells(&self, rho: f64) -> Vec<(usize, f64)> {
        let mut cells = Vec::new();
        for k in 0..self.cube.len() {
            let c = self.cube.center(k);
            if linalg::dot(&c, &c) < rho * rho {
                cells.push((k, 1.0));
                if self.mirrored {
                    cells.push((k, -1.0));
                }
            }
        }
        cells
    }

    /// Average of `∇φ` over the cells of `B_rho`.
    pub fn ball_average_gradient(&self, rho: f64) -> Vec<f64> {
        let d = self.cube.dim;
        let cells = self.ball_cells(rho);
        let mut avg = vec![0.0; d];
        for &(k, s) in &cells {
            for i in 0..d {
                avg[i] += if i == 0 { s } else { 1.0 } * self.grad[k * d + i];
            }
        }
        let m = cells.len().max(1) as f64;
        avg.iter().map(|v| v / m).collect()
    }

    /// Average of `∇²φ` over the cells of `B_rho`, row-major.
    pub fn ball_average_hessian(&self, rho: f64) -> Vec<f64> {
        let d = self.cube.dim;
        let cells = self.ball_cells(rho);
        let mut avg = vec![0.0; d * d];
        for &(k, s) in &cells {
            let h = self.cell_hessian(k);
            for i in 0..d {
                for j in 0..d {
                    let flip = if (i == 0) != (j == 0) { s } else { 1.0 };
                    avg[i * d + j] += flip * h[i * d + j];
                }
            }
        }
        let m = cells.len().max(1) as f64;
        avg.iter().map(|v| v / m).collect()
    }

    /// `∫ |∇φ|^2` over the cells whose centers satisfy `keep` (mirrored copies included).
    pub fn dirichlet(&self, keep: impl Fn(&[f64]) -> bool) -> f64 {
        let d = self.cube.dim;
        let vol = self.cube.cell_volume();
        let mut sum = 0.0;
        for k in 0..self.cube.len() {
            let c = self.cube.center(k);
            let g2: f64 = self.grad[k * d..(k + 1) * d].iter().map(|v| v * v).sum();
            if keep(&c) {
                sum += g2 * vol;
            }
            if self.mirrored {
                let mut m = c.clone();
                m[0] = -m[0];
                if keep(&m) {
                    sum += g2 * vol;
                }
            }
        }
        sum
    }

    /// Largest `|φ(s, x') - φ(-s, x')|` over cell centers of the half-cube.
    pub fn reflection_defect(&self) -> f64 {
        if !self.mirrored {
            return 0.0;
        }
        (0..self.cube.len())
            .map(|k| {
                let c = self.cube.center(k);
                let mut m = c.clone();
                m[0] = -m[0];
                (self.value(&c) - self.value(&m)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `(∫_{B_r} |T - x - ∇φ|^2 χ_{Ω0}, ∫_{B_r} |∇φ|^2)` on the map's cells.
pub fn harmonic_approximation(map: &MapField, phi: &PotentialField, dom0: &Domain, r: f64) -> Result<(f64, f64)> {
    let grid = &map.grid;
    let vol = grid.cell_volume();
    let (mut err, mut dir) = (0.0, 0.0);
    let (mut required, mut invalid) = (0, 0);
    for k in 0..grid.len() {
        let c = grid.center(k);
        if linalg::dot(&c, &c) >= r * r {
            continue;
        }
        let g = phi.gradient(&c);
        dir += linalg::dot(&g, &g) * vol;
        if map.valid[k] {
            required += 1;
            let u = map.displacement(k);
            let diff: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - b).collect();
            err += map.weight[k] / dom0.lambda * linalg::dot(&diff, &diff);
        } else if dom0.cell_fraction(&c, grid.h) > 0.0 {
            required += 1;
            invalid += 1;
        }
    }
    if invalid as f64 > 0.02 * required as f64 {
        return Err(HarmonicError::Coverage { invalid, required });
    }
    Ok((err, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn exact_flux(grad: impl Fn(&[f64]) -> Vec<f64>) -> impl Fn(Face, &[f64]) -> f64 {
        move |face: Face, x: &[f64]| face.normal_sign() * grad(x)[face.axis]
    }

    fn l2_error(field: &PotentialField, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let n = field.cube.len();
        let ex: Vec<f64> = (0..n).map(|k| exact(&field.cube.center(k))).collect();
        let mean = ex.iter().sum::<f64>() / n as f64;
        let vol = field.cube.cell_volume();
        (0..n).map(|k| (field.phi[k] - (ex[k] - mean)).powi(2) * vol).sum::<f64>().sqrt()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let cube = HalfCube::uniform(2, 0.0, 1.0, 16).unwrap();
        let f = solve_neumann(&cube, &NeumannData::zero(), CG_TOL).unwrap();
        assert!(f.phi.iter().all(|v| *v == 0.0));
        assert_eq!(f.c, 0.0);
    }

    #[test]
    fn manufactured_cosine_with_source_converges() {
        let exact = |x: &[f64]| (PI * x[0] / 2.0).cos() * (PI * x[1] / 2.0).cos() + 0.3 * (x[0] * x[0] + x[1] * x[1]) / 4.0;
        let grad = |x: &[f64]| {
            vec![
                -PI / 2.0 * (PI * x[0] / 2.0).sin() * (PI * x[1] / 2.0).cos() + 0.15 * x[0],
                -PI / 2.0 * (PI * x[0] / 2.0).cos() * (PI * x[1] / 2.0).sin() + 0.15 * x[1],
            ]
        };
        let lap = |x: &[f64]| -PI * PI / 2.0 * (PI * x[0] / 2.0).cos() * (PI * x[1] / 2.0).cos();
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let cube = HalfCube::uniform(2, 0.0, 1.0, n).unwrap();
            let data = NeumannData::new(exact_flux(grad)).with_source(lap);
            let f = solve_neumann(&cube, &data, CG_TOL).unwrap();
            assert!((f.c - 0.3).abs() < 0.01);
            errs.push(l2_error(&f, exact));
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn uniform_outward_flux_gives_quadratic() {
        // φ = c |x|^2 / 4 has ν·∇φ = c x_i / 2 on the faces
        let c = 0.8;
        let cube = HalfCube::uniform(2, 0.0, 1.0, 32).unwrap();
        let data = NeumannData::new(move |face: Face, x: &[f64]| face.normal_sign() * c * x[face.axis] / 2.0);
        let f = solve_neumann(&cube, &data, CG_TOL).unwrap();
        assert!((f.c - c).abs() < 1e-12);
        let g = f.gradient(&[0.3, -0.4]);
        assert!((g[0] - 0.12).abs() < 1e-3 && (g[1] + 0.16).abs() < 1e-3);
        assert!(f.reflection_defect() <= 1e-10);
        assert!(f.compatibility_defect(0.0) <= 1e-10);
    }

    #[test]
    fn mirrored_averages_have_block_structure() {
        let cube = HalfCube::uniform(2, 0.0, 1.0, 32).unwrap();
        let data = NeumannData::new(|face: Face, x: &[f64]| if face.axis == 1 { 0.2 * x[0] + 0.1 } else { 0.05 });
        let f = solve_neumann(&cube, &data, CG_TOL).unwrap();
        let b = f.ball_average_gradient(0.125);
        let a = f.ball_average_hessian(0.125);
        assert!(b[0].abs() < 1e-12);
        assert!(a[1].abs() < 1e-12 && a[2].abs() < 1e-12);
    }
}
