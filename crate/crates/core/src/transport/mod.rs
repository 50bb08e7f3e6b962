//! Discrete optimal transport between sampled constant densities.

mod affine;
mod map;
mod plan;
mod simplex;
mod sinkhorn;

pub use affine::AffineChange;
pub use map::{extract_map, inverse_map, GridSpec, MapField};
pub use plan::{PointSet, TransportPlan};
pub use simplex::{monotone_1d, network_simplex, solve_exact, DEFAULT_PAIR_CAP};
pub use sinkhorn::{solve_entropic, Annealing};

use thiserror::Error;

use crate::geometry::Domain;
use crate::linalg::MatrixError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("total masses differ: source {src}, target {tgt}")]
    Imbalance { src: f64, tgt: f64 },
    #[error("{pairs} candidate pairs exceed the cap of {cap}")]
    Size { pairs: usize, cap: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("{invalid} of {required} required cells carry no plan mass (limit {limit})")]
    Coverage { invalid: usize, required: usize, limit: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("empty point set")]
    Empty,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// Cell-center samples of `λ χ_Ω` on `grid`; each point carries the mass
/// `λ |cell ∩ Ω|` from 4x supersampling. Cells with no overlap are dropped.
pub fn sample_domain(dom: &Domain, grid: &GridSpec) -> PointSet {
    let vol = grid.cell_volume();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for k in 0..grid.len() {
        let c = grid.center(k);
        let frac = dom.cell_fraction(&c, grid.h);
        if frac > 0.0 {
            coords.extend_from_slice(&c);
            weights.push(dom.lambda * frac * vol);
        }
    }
    PointSet { dim: grid.dim, coords, weights, lambda: dom.lambda }
}

/// Grid of spacing `h` covering the bounding box of `dom`, anchored at its lower corner.
pub fn grid_for(dom: &Domain, h: f64) -> GridSpec {
    let n = (0..dom.dim)
        .map(|i| ((dom.bbox.hi[i] - dom.bbox.lo[i]) / h - 1e-9).ceil().max(1.0) as usize)
        .collect();
    GridSpec { dim: dom.dim, lo: dom.bbox.lo.clone(), h, n }
}

/// Rescales target weights so both sides carry the source mass. Returns the
/// applied factor.
pub fn balance_masses(src: &PointSet, tgt: &mut PointSet) -> f64 {
    let factor = src.total_mass() / tgt.total_mass();
    for w in &mut tgt.weights {
        *w *= factor;
    }
    factor
}
