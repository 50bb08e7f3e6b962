//! Boundary charts, normals, Hölder seminorms of the normal field, the
//! flatness deviation `D_R`, and the tangency normalization.
//!
//! Ambient dimensions 1 and 2 are supported. In `d = 1` a chart is a single
//! boundary value; in `d = 2` it is a graph `x_1 = g(x')` sampled on a uniform
//! grid over `(-W, W)` and interpolated by cubic Hermite splines.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("x' = {point} lies outside the chart window (-{half_width}, {half_width})")]
    ChartRange { point: f64, half_width: f64 },
    #[error("chart not normalized at the origin: g(0) = {value:.3e}, g'(0) = {slope:.3e}")]
    NotNormalized { value: f64, slope: f64 },
    #[error("graph slope {0:.4} exceeds 1/4 on the working window")]
    TooSteep(f64),
    #[error("grid spacing {h:.3e} too coarse for radius {r} (need h <= r/{factor})")]
    Resolution { h: f64, r: f64, factor: f64 },
    #[error("Hölder exponents differ: {0} vs {1}")]
    ExponentMismatch(f64, f64),
    #[error("density value {0} outside [1/2, 2]")]
    Density(f64),
    #[error("not nearly tangent: |g1(0)|^2 + |g1'(0)|^2 = {value:.3e} exceeds {threshold:.3e}")]
    NotNearlyTangent { value: f64, threshold: f64 },
    #[error("unsupported dimension {0}")]
    Dimension(usize),
    #[error("no boundary crossing in the chart column at x' = {0}")]
    Rechart(f64),
    #[error("invalid chart: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Optional closed-form evaluator attached to a chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedForm {
    Flat,
    Linear { slope: f64 },
    Quadratic { c: f64 },
    Power { amplitude: f64, exponent: f64 },
}

impl ClosedForm {
    /// Value and derivative at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            ClosedForm::Flat => (0.0, 0.0),
            ClosedForm::Linear { slope } => (slope * s, slope),
            ClosedForm::Quadratic { c } => (c * s * s, 2.0 * c * s),
            ClosedForm::Power { amplitude, exponent } => {
                let a = s.abs();
                (
                    amplitude * a.powf(exponent),
                    amplitude * exponent * a.powf(exponent - 1.0) * s.signum() * (a > 0.0) as u8 as f64,
                )
            }
        }
    }

    /// Closed form of `s -> g(factor * s) / factor`.
    pub fn dilate(&self, factor: f64) -> ClosedForm {
        match *self {
            ClosedForm::Flat => ClosedForm::Flat,
            ClosedForm::Linear { slope } => ClosedForm::Linear { slope },
            ClosedForm::Quadratic { c } => ClosedForm::Quadratic { c: c * factor },
            ClosedForm::Power { amplitude, exponent } => ClosedForm::Power {
                amplitude: amplitude * factor.powf(exponent - 1.0),
                exponent,
            },
        }
    }
}

/// Boundary chart `x_1 = g(x')` of a domain lying above its graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGraph {
    /// Ambient dimension.
    pub dim: usize,
    pub half_width: f64,
    pub samples: Vec<f64>,
    pub alpha: f64,
    pub closed_form: Option<ClosedForm>,
}

impl BoundaryGraph {
    pub fn new(dim: usize, half_width: f64, samples: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::build(dim, half_width, samples, alpha, None)
    }

    fn build(
        dim: usize,
        half_width: f64,
        samples: Vec<f64>,
        alpha: f64,
        closed_form: Option<ClosedForm>,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(GeometryError::Dimension(dim));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GeometryError::Config(format!("alpha = {alpha} not in (0,1)")));
        }
        let need = if dim == 1 { 1 } else { 4 };
        if samples.len() < need || half_width <= 0.0 {
            return Err(GeometryError::Config("too few samples or empty window".into()));
        }
        let g = BoundaryGraph { dim, half_width, samples, alpha, closed_form };
        let steep = g.max_slope();
        if steep > 0.25 + 1e-12 {
            return Err(GeometryError::TooSteep(steep));
        }
        Ok(g)
    }

    pub fn from_fn(
        dim: usize,
        half_width: f64,
        nodes: usize,
        alpha: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let samples = Self::node_positions(dim, half_width, nodes).map(f).collect();
        Self::build(dim, half_width, samples, alpha, None)
    }

    pub fn from_closed_form(
        dim: usize,
        half_width: f64,
        nodes: usize,
        alpha: f64,
        form: ClosedForm,
    ) -> Result<Self> {
        let samples = Self::node_positions(dim, half_width, nodes).map(|s| form.eval(s).0).collect();
        Self::build(dim, half_width, samples, alpha, Some(form))
    }

    pub fn flat(dim: usize, half_width: f64, nodes: usize, alpha: f64) -> Result<Self> {
        Self::from_closed_form(dim, half_width, nodes, alpha, ClosedForm::Flat)
    }

    fn node_positions(dim: usize, w: f64, nodes: usize) -> impl Iterator<Item = f64> {
        let n = if dim == 1 { 1 } else { nodes.max(2) };
        let h = if n > 1 { 2.0 * w / (n - 1) as f64 } else { 0.0 };
        (0..n).map(move |k| if n == 1 { 0.0 } else { -w + k as f64 * h })
    }

    /// Sample spacing of the chart grid.
    pub fn spacing(&self) -> f64 {
        if self.dim == 1 {
            self.half_width
        } else {
            2.0 * self.half_width / (self.samples.len() - 1) as f64
        }
    }

    pub fn node(&self, k: usize) -> f64 {
        if self.dim == 1 {
            0.0
        } else {
            -self.half_width + k as f64 * self.spacing()
        }
    }

    fn node_slope(&self, i: usize) -> f64 {
        let y = &self.samples;
        let m = y.len();
        let h = self.spacing();
        if i == 0 {
            (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
        } else if i == m - 1 {
            (3.0 * y[m - 1] - 4.0 * y[m - 2] + y[m - 3]) / (2.0 * h)
        } else {
            (y[i + 1] - y[i - 1]) / (2.0 * h)
        }
    }

    fn hermite(&self, s: f64) -> (f64, f64) {
        let m = self.samples.len();
        let h = self.spacing();
        let u = (s + self.half_width) / h;
        let i = (u.floor().max(0.0) as usize).min(m - 2);
        let t = u - i as f64;
        let (y0, y1) = (self.samples[i], self.samples[i + 1]);
        let (d0, d1) = (self.node_slope(i) * h, self.node_slope(i + 1) * h);
        let (t2, t3) = (t * t, t * t * t);
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1;
        let der = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * d1;
        (val, der / h)
    }

    fn check_window(&self, s: f64) -> Result<()> {
        if self.dim == 2 && s.abs() > self.half_width * (1.0 + 1e-12) {
            return Err(GeometryError::ChartRange { point: s, half_width: self.half_width });
        }
        Ok(())
    }

    /// Value and slope at `s` without the window check.
    pub fn eval_unchecked(&self, s: f64) -> (f64, f64) {
        if self.dim == 1 {
            return (self.samples[0], 0.0);
        }
        match &self.closed_form {
            Some(cf) => cf.eval(s),
            None => self.hermite(s),
        }
    }

    pub fn value(&self, s: f64) -> Result<f64> {
        self.check_window(s)?;
        Ok(self.eval_unchecked(s).0)
    }

    pub fn slope(&self, s: f64) -> Result<f64> {
        self.check_window(s)?;
        Ok(self.eval_unchecked(s).1)
    }

    /// Largest slope magnitude over the chart nodes.
    pub fn max_slope(&self) -> f64 {
        if self.dim == 1 {
            return 0.0;
        }
        (0..self.samples.len())
            .map(|k| self.nodal_slope(k).abs())
            .fold(0.0, f64::max)
    }

    fn nodal_slope(&self, k: usize) -> f64 {
        match &self.closed_form {
            Some(cf) => cf.eval(self.node(k)).1,
            None => self.node_slope(k),
        }
    }

    /// `max |g|` over chart nodes with `|x'| <= r`.
    pub fn sup_norm(&self, r: f64) -> f64 {
        (0..self.samples.len())
            .filter(|&k| self.node(k).abs() <= r)
            .map(|k| self.samples[k].abs())
            .fold(0.0, f64::max)
    }

    /// Checks `g(0) = 0` and `g'(0) = 0` up to one grid cell.
    pub fn check_normalized(&self) -> Result<()> {
        let tol = if self.dim == 1 { 1e-9 } else { self.spacing() };
        let (value, slope) = self.eval_unchecked(0.0);
        if value.abs() > tol || slope.abs() > tol {
            return Err(GeometryError::NotNormalized { value, slope });
        }
        Ok(())
    }

    /// Chart of the dilated domain `Ω / factor`.
    pub fn dilate(&self, factor: f64) -> BoundaryGraph {
        BoundaryGraph {
            dim: self.dim,
            half_width: self.half_width / factor,
            samples: self.samples.iter().map(|v| v / factor).collect(),
            alpha: self.alpha,
            closed_form: self.closed_form.as_ref().map(|c| c.dilate(factor)),
        }
    }
}

/// Outer unit normal `(-1, g'(x')) / sqrt(1 + |g'|^2)` of the region above the graph.
pub fn outward_normal(graph: &BoundaryGraph, s: f64) -> Result<Vec<f64>> {
    if graph.dim == 1 {
        return Ok(vec![-1.0]);
    }
    let p = graph.slope(s)?;
    let n = (1.0 + p * p).sqrt();
    Ok(vec![-1.0 / n, p / n])
}

/// Pair-enumeration estimate of `[ν]_{α, B_r}` over chart nodes separated by
/// at least four grid cells.
pub fn holder_seminorm_normals(graph: &BoundaryGraph, r: f64) -> Result<f64> {
    if graph.dim == 1 {
        return Ok(0.0);
    }
    if r > graph.half_width * (1.0 + 1e-12) {
        return Err(GeometryError::ChartRange { point: r, half_width: graph.half_width });
    }
    let h = graph.spacing();
    if h > r / 32.0 {
        return Err(GeometryError::Resolution { h, r, factor: 32.0 });
    }
    let nodes: Vec<(f64, [f64; 2])> = (0..graph.samples.len())
        .map(|k| (graph.node(k), graph.nodal_slope(k)))
        .filter(|(s, _)| s.abs() <= r * (1.0 + 1e-12))
        .map(|(s, p)| {
            let n = (1.0 + p * p).sqrt();
            (s, [-1.0 / n, p / n])
        })
        .collect();
    let mut best: f64 = 0.0;
    for i in 0..nodes.len() {
        for j in (i + 4)..nodes.len() {
            let (si, ni) = nodes[i];
            let (sj, nj) = nodes[j];
            let num = ((ni[0] - nj[0]).powi(2) + (ni[1] - nj[1]).powi(2)).sqrt();
            best = best.max(num / (sj - si).abs().powf(graph.alpha));
        }
    }
    Ok(best)
}

/// `R^{2α}([ν_0]^2 + [ν_1]^2)` over `B_R`.
pub fn deviation_d(g0: &BoundaryGraph, g1: &BoundaryGraph, r: f64) -> Result<f64> {
    if (g0.alpha - g1.alpha).abs() > 1e-15 {
        return Err(GeometryError::ExponentMismatch(g0.alpha, g1.alpha));
    }
    g0.check_normalized()?;
    g1.check_normalized()?;
    let s0 = holder_seminorm_normals(g0, r)?;
    let s1 = holder_seminorm_normals(g1, r)?;
    Ok(r.powf(2.0 * g0.alpha) * (s0 * s0 + s1 * s1))
}

pub fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        1 => 2.0 * r,
        2 => std::f64::consts::PI * r * r,
        _ => 4.0 / 3.0 * std::f64::consts::PI * r.powi(3),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        BBox { lo, hi }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| *v > *l && *v < *h)
    }

    /// Bounding box of the image of this box under `x -> m x + shift`.
    pub fn image(&self, m: &Mat, shift: &[f64]) -> BBox {
        let d = self.lo.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for corner in 0..(1usize << d) {
            let c: Vec<f64> = (0..d)
                .map(|i| if corner >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                .collect();
            let y = linalg::mat_vec(m, &c);
            for i in 0..d {
                lo[i] = lo[i].min(y[i] + shift[i]);
                hi[i] = hi[i].max(y[i] + shift[i]);
            }
        }
        BBox { lo, hi }
    }
}

pub type Membership = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Bounded open set with a boundary chart at the study point and a global
/// membership predicate restricted to a bounding box.
#[derive(Clone)]
pub struct Domain {
    pub side: usize,
    pub lambda: f64,
    pub dim: usize,
    pub chart: BoundaryGraph,
    /// Graph over the whole bounding box, used for the global half-space check.
    pub extension: Option<BoundaryGraph>,
    pub bbox: BBox,
    pub indicator_resolution: f64,
    member: Membership,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("side", &self.side)
            .field("lambda", &self.lambda)
            .field("dim", &self.dim)
            .field("chart", &self.chart)
            .field("bbox", &self.bbox)
            .finish_non_exhaustive()
    }
}

/// Indicator sampled at cell centers of a uniform grid over the bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledIndicator {
    pub lo: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
    pub inside: Vec<bool>,
}

impl SampledIndicator {
    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mut rest = idx;
        let mut x = vec![0.0; self.shape.len()];
        for i in (0..self.shape.len()).rev() {
            let k = rest % self.shape[i];
            rest /= self.shape[i];
            x[i] = self.lo[i] + (k as f64 + 0.5) * self.h;
        }
        x
    }
}

impl Domain {
    pub fn new(
        side: usize,
        lambda: f64,
        chart: BoundaryGraph,
        bbox: BBox,
        member: Membership,
    ) -> Result<Self> {
        if !(0.5..=2.0).contains(&lambda) {
            return Err(GeometryError::Density(lambda));
        }
        let dim = chart.dim;
        if bbox.lo.len() != dim || bbox.hi.len() != dim {
            return Err(GeometryError::Config("bounding box dimension mismatch".into()));
        }
        let indicator_resolution = chart.spacing().min(0.05);
        Ok(Domain { side, lambda, dim, chart, extension: None, bbox, indicator_resolution, member })
    }

    /// Region `{x_1 > g(x')}` inside the box, with `g` held constant beyond the window.
    pub fn above_graph(side: usize, lambda: f64, chart: BoundaryGraph, bbox: BBox) -> Result<Self> {
        let g = chart.clone();
        let member: Membership = Arc::new(move |x: &[f64]| {
            let s = if x.len() > 1 { x[1].clamp(-g.half_width, g.half_width) } else { 0.0 };
            x[0] > g.eval_unchecked(s).0
        });
        let mut dom = Domain::new(side, lambda, chart.clone(), bbox, member)?;
        dom.extension = Some(chart);
        Ok(dom)
    }

    pub fn with_extension(mut self, extension: BoundaryGraph) -> Self {
        self.extension = Some(extension);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bbox.contains(x) && (self.member)(x)
    }

    /// Volume fraction of the cube with center `c` and side `h` inside the
    /// domain, by 4x supersampling per axis.
    pub fn cell_fraction(&self, c: &[f64], h: f64) -> f64 {
        const SUB: usize = 4;
        let d = self.dim;
        let total = SUB.pow(d as u32);
        let mut hits = 0usize;
        let mut x = vec![0.0; d];
        for k in 0..total {
            let mut rest = k;
            for i in 0..d {
                let j = rest % SUB;
                rest /= SUB;
                x[i] = c[i] - 0.5 * h + (j as f64 + 0.5) * h / SUB as f64;
            }
            if self.contains(&x) {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    pub fn sampled_indicator(&self) -> SampledIndicator {
        let h = self.indicator_resolution;
        let shape: Vec<usize> = (0..self.dim)
            .map(|i| ((self.bbox.hi[i] - self.bbox.lo[i]) / h).ceil().max(1.0) as usize)
            .collect();
        let total: usize = shape.iter().product();
        let mut ind = SampledIndicator { lo: self.bbox.lo.clone(), h, shape, inside: Vec::new() };
        ind.inside = (0..total).map(|k| self.contains(&ind.center(k))).collect();
        ind
    }

    /// Boundary crossing along the `e_1` column through `x'`.
    fn crossing(&self, s: f64, reach: f64) -> Result<f64> {
        let lo_lim = self.bbox.lo[0];
        let hi_lim = self.bbox.hi[0];
        let mut lo = (-reach).max(lo_lim);
        let mut hi = reach.min(hi_lim - 1e-12 * (1.0 + hi_lim.abs()));
        let at = |t: f64| {
            let x = if self.dim == 1 { vec![t] } else { vec![t, s] };
            (self.member)(&x) && self.bbox.contains(&x)
        };
        if at(lo) || !at(hi) {
            return Err(GeometryError::Rechart(s));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if at(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Re-samples the boundary chart from the membership predicate.
    pub fn rechart(&self, half_width: f64, nodes: usize) -> Result<BoundaryGraph> {
        let reach = half_width.max(0.5);
        let samples = BoundaryGraph::node_positions(self.dim, half_width, nodes)
            .map(|s| self.crossing(s, reach))
            .collect::<Result<Vec<f64>>>()?;
        BoundaryGraph::new(self.dim, half_width, samples, self.chart.alpha)
    }

    /// Image `{m x + shift : x ∈ Ω}` with the density value `lambda`, re-charted.
    pub fn image(&self, m: &Mat, shift: &[f64], lambda: f64) -> Result<Domain> {
        let inv = linalg::inverse(m).map_err(|e| GeometryError::Config(e.to_string()))?;
        let inner = self.member.clone();
        let old_box = self.bbox.clone();
        let s = shift.to_vec();
        let member: Membership = Arc::new(move |y: &[f64]| {
            let z: Vec<f64> = y.iter().zip(&s).map(|(a, b)| a - b).collect();
            let x = linalg::mat_vec(&inv, &z);
            old_box.contains(&x) && inner(&x)
        });
        let bbox = self.bbox.image(m, shift);
        let mut dom = Domain {
            side: self.side,
            lambda,
            dim: self.dim,
            chart: self.chart.clone(),
            extension: None,
            bbox,
            indicator_resolution: self.indicator_resolution,
            member,
        };
        dom.chart = dom.rechart(self.chart.half_width, self.chart.samples.len())?;
        Ok(dom)
    }

    /// Dilation `Ω / factor` (density unchanged).
    pub fn dilate(&self, factor: f64) -> Domain {
        let inner = self.member.clone();
        let member: Membership = Arc::new(move |y: &[f64]| {
            let x: Vec<f64> = y.iter().map(|v| v * factor).collect();
            inner(&x)
        });
        let scale = |v: &Vec<f64>| v.iter().map(|x| x / factor).collect::<Vec<f64>>();
        Domain {
            side: self.side,
            lambda: self.lambda,
            dim: self.dim,
            chart: self.chart.dilate(factor),
            extension: self.extension.as_ref().map(|e| e.dilate(factor)),
            bbox: BBox { lo: scale(&self.bbox.lo), hi: scale(&self.bbox.hi) },
            indicator_resolution: self.indicator_resolution / factor,
            member,
        }
    }
}

/// Change of frame produced by [`normalize_tangency`]: translate by `-p`,
/// rotate `ν_0(p)` to `-e_1`, apply the symmetric tilt, and re-align the
/// common normal with `-e_1`.
#[derive(Clone, Debug)]
pub struct TangencyFrame {
    pub rotation: Mat,
    pub translation: Vec<f64>,
    /// `(A, A^{1/2}, b)` with `A` symmetric and `A ν_0 = ν_1`.
    pub tilt: Option<(Mat, Mat, Vec<f64>)>,
    pub post_rotation: Mat,
}

impl TangencyFrame {
    fn tilt_parts(&self) -> (Mat, Vec<f64>) {
        match &self.tilt {
            Some((_, b, v)) => (b.clone(), v.clone()),
            None => (linalg::identity(self.translation.len()), vec![0.0; self.translation.len()]),
        }
    }

    /// Linear part and shift of the source-side map `x0 -> P B^{-1} Q (x0 - p)`.
    pub fn source_affine(&self) -> (Mat, Vec<f64>) {
        let (b, _) = self.tilt_parts();
        let binv = linalg::inverse(&b).expect("tilt is positive definite");
        let m = &self.post_rotation * binv * &self.rotation;
        let shift = linalg::mat_vec(&m, &self.translation).iter().map(|v| -v).collect();
        (m, shift)
    }

    /// Linear part and shift of the target-side map `x1 -> P B (Q (x1 - p) - b)`.
    pub fn target_affine(&self) -> (Mat, Vec<f64>) {
        let (b, v) = self.tilt_parts();
        let pb = &self.post_rotation * &b;
        let m = &pb * &self.rotation;
        let qp = linalg::mat_vec(&self.rotation, &self.translation);
        let inner: Vec<f64> = qp.iter().zip(&v).map(|(a, c)| a + c).collect();
        let shift = linalg::mat_vec(&pb, &inner).iter().map(|x| -x).collect();
        (m, shift)
    }

    /// `|det B|` of the tilt.
    pub fn tilt_det(&self) -> f64 {
        self.tilt_parts().0.determinant().abs()
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let d = self.translation.len();
        let id = linalg::identity(d);
        let (b, v) = self.tilt_parts();
        (&self.rotation - &id).abs().max() <= tol
            && (&self.post_rotation - &id).abs().max() <= tol
            && (b - id).abs().max() <= tol
            && v.iter().chain(&self.translation).all(|x| x.abs() <= tol)
    }
}

/// Moves `p` to the origin, aligns `ν_0(p)` with `-e_1`, and removes the
/// residual offset and tilt of `∂Ω_1` with the symmetric frame `A^{1/2}`,
/// `b = g_1(0) e_1`.
pub fn normalize_tangency(
    dom0: &Domain,
    dom1: &Domain,
    p: &[f64],
    threshold: f64,
) -> Result<(Domain, Domain, TangencyFrame)> {
    let d = dom0.dim;
    let s_p = if d == 2 { p[1] } else { 0.0 };
    let nu0 = outward_normal(&dom0.chart, s_p)?;
    let q = linalg::rotation_to_minus_e1(&nu0);
    let qp = linalg::mat_vec(&q, p);
    let shift: Vec<f64> = qp.iter().map(|v| -v).collect();
    let a0 = dom0.image(&q, &shift, dom0.lambda)?;
    let a1 = dom1.image(&q, &shift, dom1.lambda)?;

    let (g1, p1) = a1.chart.eval_unchecked(0.0);
    let value = g1 * g1 + p1 * p1;
    if value > threshold {
        return Err(GeometryError::NotNearlyTangent { value, threshold });
    }
    let mut e1 = vec![0.0; d];
    e1[0] = -1.0;
    let nu1 = outward_normal(&a1.chart, 0.0)?;
    let a = linalg::block_transfer(&e1, &nu1);
    let (b, _) = linalg::sym_sqrt(&a).map_err(|e| GeometryError::Config(e.to_string()))?;
    let mut bvec = vec![0.0; d];
    bvec[0] = g1;
    let binv = linalg::inverse(&b).map_err(|e| GeometryError::Config(e.to_string()))?;
    let n_hat = linalg::mat_vec(&b, &e1);
    let nn = linalg::norm(&n_hat);
    let post = linalg::rotation_to_minus_e1(&n_hat.iter().map(|v| v / nn).collect::<Vec<_>>());

    let det_b = b.determinant().abs();
    let m0 = &post * &binv;
    let hat0 = a0.image(&m0, &vec![0.0; d], dom0.lambda)?;
    let m1 = &post * &b;
    let s1: Vec<f64> = linalg::mat_vec(&m1, &bvec).iter().map(|v| -v).collect();
    let hat1 = a1.image(&m1, &s1, dom1.lambda / (det_b * det_b))?;
    let frame = TangencyFrame {
        rotation: q,
        translation: p.to_vec(),
        tilt: Some((a, b, bvec)),
        post_rotation: post,
    };
    Ok((hat0, hat1, frame))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_box() -> BBox {
        BBox::new(vec![-2.0, -2.0], vec![2.0, 2.0])
    }

    #[test]
    fn flat_normal_is_minus_e1() {
        let g = BoundaryGraph::flat(2, 1.0, 101, 0.5).unwrap();
        assert_eq!(outward_normal(&g, 0.3).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn linear_chart_fails_normalization() {
        let g = BoundaryGraph::from_fn(2, 1.0, 201, 0.5, |s| 0.1 * s).unwrap();
        assert!(matches!(g.check_normalized(), Err(GeometryError::NotNormalized { .. })));
    }

    #[test]
    fn normal_matches_level_set_difference() {
        let c = 0.1;
        let g = BoundaryGraph::from_fn(2, 1.0, 401, 0.5, |s| c * s * s).unwrap();
        let h = g.spacing();
        let n = outward_normal(&g, h).unwrap();
        // gradient of the level-set function φ(x) = g(x') - x_1 by central differences
        let phi = |x1: f64, x2: f64| c * x2 * x2 - x1;
        let e = 1e-5;
        let gx = (phi(e, h) - phi(-e, h)) / (2.0 * e);
        let gy = (phi(0.0, h + e) - phi(0.0, h - e)) / (2.0 * e);
        let gn = (gx * gx + gy * gy).sqrt();
        assert!((n[0] - gx / gn).abs() < 4.0 * h * h);
        assert!((n[1] - gy / gn).abs() < 4.0 * h * h);
        assert!((linalg::norm(&n) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outside_window_is_range_error() {
        let g = BoundaryGraph::flat(2, 1.0, 11, 0.5).unwrap();
        assert!(matches!(outward_normal(&g, 1.5), Err(GeometryError::ChartRange { .. })));
    }

    #[test]
    fn steep_chart_is_rejected() {
        assert!(matches!(
            BoundaryGraph::from_fn(2, 1.0, 101, 0.5, |s| 0.3 * s),
            Err(GeometryError::TooSteep(_))
        ));
    }

    #[test]
    fn seminorm_trivial_cases() {
        let flat = BoundaryGraph::flat(2, 1.0, 257, 0.5).unwrap();
        assert_eq!(holder_seminorm_normals(&flat, 0.5).unwrap(), 0.0);
        let affine = BoundaryGraph::from_fn(2, 1.0, 257, 0.5, |s| 0.2 * s + 0.1).unwrap();
        assert!(holder_seminorm_normals(&affine, 0.5).unwrap() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_resolution_error() {
        let g = BoundaryGraph::flat(2, 1.0, 41, 0.5).unwrap();
        assert!(matches!(
            holder_seminorm_normals(&g, 0.5),
            Err(GeometryError::Resolution { .. })
        ));
    }

    #[test]
    fn tilted_target_gets_symmetric_frame() {
        let phi: f64 = 0.05;
        let chart = BoundaryGraph::flat(2, 1.0, 201, 0.5).unwrap();
        let d0 = Domain::above_graph(0, 1.0, chart.clone(), window_box()).unwrap();
        let tan = phi.tan();
        let tilted = BoundaryGraph::from_fn(2, 1.0, 201, 0.5, move |s| tan * s).unwrap();
        let d1 = Domain::above_graph(1, 1.0, tilted, window_box()).unwrap();
        let (h0, h1, frame) = normalize_tangency(&d0, &d1, &[0.0, 0.0], 0.1).unwrap();
        let (a, _, _) = frame.tilt.clone().unwrap();
        assert!((&a - a.transpose()).abs().max() < 1e-14);
        let img = linalg::mat_vec(&a, &[-1.0, 0.0]);
        let nu1 = outward_normal(&d1.chart, 0.0).unwrap();
        assert!((img[0] - nu1[0]).abs() < 1e-9 && (img[1] - nu1[1]).abs() < 1e-9);
        assert!(linalg::frobenius(&(a - linalg::identity(2))) <= 2.0 * phi);
        h0.chart.check_normalized().unwrap();
        h1.chart.check_normalized().unwrap();
    }

    #[test]
    fn offset_target_gets_vertical_translation() {
        let chart = BoundaryGraph::flat(2, 1.0, 201, 0.5).unwrap();
        let d0 = Domain::above_graph(0, 1.0, chart.clone(), window_box()).unwrap();
        let up = BoundaryGraph::from_fn(2, 1.0, 201, 0.5, |_| 0.01).unwrap();
        let d1 = Domain::above_graph(1, 1.0, up, window_box()).unwrap();
        let (_, h1, frame) = normalize_tangency(&d0, &d1, &[0.0, 0.0], 0.1).unwrap();
        let (a, _, b) = frame.tilt.clone().unwrap();
        assert!((a - linalg::identity(2)).abs().max() < 1e-9);
        assert!((b[0] - 0.01).abs() < 1e-9 && b[1].abs() < 1e-12);
        assert!(h1.chart.sup_norm(0.9) < 1e-9);
    }

    #[test]
    fn tangent_pair_gives_identity_frame() {
        let chart = BoundaryGraph::flat(2, 1.0, 201, 0.5).unwrap();
        let d0 = Domain::above_graph(0, 1.0, chart.clone(), window_box()).unwrap();
        let d1 = Domain::above_graph(1, 1.0, chart, window_box()).unwrap();
        let (_, _, frame) = normalize_tangency(&d0, &d1, &[0.0, 0.0], 0.1).unwrap();
        assert!(frame.is_identity(1e-9));
    }

    #[test]
    fn far_from_tangent_is_rejected() {
        let chart = BoundaryGraph::flat(2, 1.0, 201, 0.5).unwrap();
        let d0 = Domain::above_graph(0, 1.0, chart, window_box()).unwrap();
        let up = BoundaryGraph::from_fn(2, 1.0, 201, 0.5, |_| 0.3).unwrap();
        let d1 = Domain::above_graph(1, 1.0, up, window_box()).unwrap();
        assert!(matches!(
            normalize_tangency(&d0, &d1, &[0.0, 0.0], 0.01),
            Err(GeometryError::NotNearlyTangent { .. })
        ));
    }

    #[test]
    fn membership_agrees_with_chart() {
        let chart = BoundaryGraph::from_closed_form(
            2,
            1.0,
            201,
            0.5,
            ClosedForm::Power { amplitude: 0.1, exponent: 1.5 },
        )
        .unwrap();
        let dom = Domain::above_graph(0, 1.0, chart.clone(), window_box()).unwrap();
        for k in 0..50 {
            let s = -0.95 + 0.038 * k as f64;
            let g = chart.value(s).unwrap();
            assert!(dom.contains(&[g + 1e-9, s]));
            assert!(!dom.contains(&[g - 1e-9, s]));
        }
        let re = dom.rechart(1.0, 201).unwrap();
        for (a, b) in re.samples.iter().zip(&chart.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
