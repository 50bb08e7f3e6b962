use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, TransportError};
use crate::linalg;

/// Weighted point cloud sampling `λ χ_Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(TransportError::Dimension(coords.len(), dim * weights.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(TransportError::Parameter("weights must be finite and nonnegative".into()));
        }
        Ok(PointSet { dim, coords, weights, lambda })
    }

    /// Equal-mass points with total mass equal to the count.
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Self {
        let n = coords.len() / dim;
        PointSet { dim, coords, weights: vec![1.0; n], lambda: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Image under `x -> m x + shift` with every weight multiplied by `scale`.
    pub fn map_affine(&self, m: &linalg::Mat, shift: &[f64], scale: f64, lambda: f64) -> PointSet {
        let coords = (0..self.len())
            .flat_map(|i| {
                let y = linalg::mat_vec(m, self.point(i));
                y.into_iter().zip(shift).map(|(a, b)| a + b).collect::<Vec<_>>()
            })
            .collect();
        PointSet {
            dim: self.dim,
            coords,
            weights: self.weights.iter().map(|w| w * scale).collect(),
            lambda,
        }
    }
}

/// Support of a discrete coupling together with its marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub mass: Vec<f64>,
    pub src: PointSet,
    pub tgt: PointSet,
    pub src_index: Vec<usize>,
    pub tgt_index: Vec<usize>,
    pub lambda0: f64,
    pub lambda1: f64,
    pub tol_mono: f64,
}

impl TransportPlan {
    /// Builds a plan from `(source index, target index, mass)` triples.
    pub fn from_pairs(src: PointSet, tgt: PointSet, pairs: &[(usize, usize, f64)], tol_mono: f64) -> Self {
        let dim = src.dim;
        let mut plan = TransportPlan {
            dim,
            x0: Vec::with_capacity(pairs.len() * dim),
            x1: Vec::with_capacity(pairs.len() * dim),
            mass: Vec::with_capacity(pairs.len()),
            src_index: Vec::with_capacity(pairs.len()),
            tgt_index: Vec::with_capacity(pairs.len()),
            lambda0: src.lambda,
            lambda1: tgt.lambda,
            src: PointSet { dim, coords: Vec::new(), weights: Vec::new(), lambda: 0.0 },
            tgt: PointSet { dim, coords: Vec::new(), weights: Vec::new(), lambda: 0.0 },
            tol_mono,
        };
        for &(i, j, m) in pairs {
            plan.x0.extend_from_slice(src.point(i));
            plan.x1.extend_from_slice(tgt.point(j));
            plan.mass.push(m);
            plan.src_index.push(i);
            plan.tgt_index.push(j);
        }
        plan.src = src;
        plan.tgt = tgt;
        plan
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn x0(&self, k: usize) -> &[f64] {
        &self.x0[k * self.dim..(k + 1) * self.dim]
    }

    pub fn x1(&self, k: usize) -> &[f64] {
        &self.x1[k * self.dim..(k + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `Σ mass |x1 - x0|^2`, summed in ascending order of the terms.
    pub fn cost(&self) -> f64 {
        let mut terms: Vec<f64> =
            (0..self.len()).map(|k| self.mass[k] * linalg::dist2(self.x0(k), self.x1(k))).collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }

    /// Largest displacement `|x1 - x0|` on the support.
    pub fn max_displacement(&self) -> f64 {
        (0..self.len())
            .map(|k| linalg::dist2(self.x0(k), self.x1(k)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest relative marginal defect on the source and target sides.
    pub fn marginal_errors(&self) -> (f64, f64) {
        let mut rows = vec![0.0; self.src.len()];
        let mut cols = vec![0.0; self.tgt.len()];
        for k in 0..self.len() {
            rows[self.src_index[k]] += self.mass[k];
            cols[self.tgt_index[k]] += self.mass[k];
        }
        let rel = |sums: &[f64], w: &[f64]| {
            sums.iter()
                .zip(w)
                .filter(|(_, w)| **w > 0.0)
                .map(|(s, w)| (s - w).abs() / w)
                .fold(0.0, f64::max)
        };
        (rel(&rows, &self.src.weights), rel(&cols, &self.tgt.weights))
    }

    /// Minimum of `(y1 - x1)·(y0 - x0)` over support pairs: all pairs when
    /// there are at most `samples` of them, otherwise a seeded random sample.
    pub fn monotonicity_min(&self, samples: usize, seed: u64) -> f64 {
        let n = self.len();
        let eval = |a: usize, b: usize| {
            (0..self.dim)
                .map(|i| (self.x1(b)[i] - self.x1(a)[i]) * (self.x0(b)[i] - self.x0(a)[i]))
                .sum::<f64>()
        };
        let mut best = f64::INFINITY;
        if n * n <= samples {
            for a in 0..n {
                for b in 0..n {
                    best = best.min(eval(a, b));
                }
            }
        } else if n > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                best = best.min(eval(rng.gen_range(0..n), rng.gen_range(0..n)));
            }
        }
        best
    }

    pub fn is_monotone(&self, samples: usize, seed: u64) -> bool {
        self.monotonicity_min(samples, seed) >= -self.tol_mono
    }

    /// Plan of the reverse problem with the roles of the marginals swapped.
    pub fn inverse(&self) -> TransportPlan {
        TransportPlan {
            dim: self.dim,
            x0: self.x1.clone(),
            x1: self.x0.clone(),
            mass: self.mass.clone(),
            src: self.tgt.clone(),
            tgt: self.src.clone(),
            src_index: self.tgt_index.clone(),
            tgt_index: self.src_index.clone(),
            lambda0: self.lambda1,
            lambda1: self.lambda0,
            tol_mono: self.tol_mono,
        }
    }
}
