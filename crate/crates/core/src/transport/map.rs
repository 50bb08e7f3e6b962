use serde::{Deserialize, Serialize};

use super::{Result, TransportError, TransportPlan};

/// Uniform cell-centred grid: cell `k` along axis `i` has center `lo[i] + (k + 1/2) h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub h: f64,
    pub n: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, h: f64, n: Vec<usize>) -> Self {
        GridSpec { dim: lo.len(), lo, h, n }
    }

    /// Grid of `per_side^d` cells covering `[lo, lo + side]^d`.
    pub fn cube(lo: Vec<f64>, side: f64, per_side: usize) -> Self {
        let d = lo.len();
        GridSpec { dim: d, lo, h: side / per_side as f64, n: vec![per_side; d] }
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Multi-index of a flat index; the last axis varies fastest.
    pub fn unflatten(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for i in (0..self.dim).rev() {
            idx[i] = k % self.n[i];
            k /= self.n[i];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn center(&self, k: usize) -> Vec<f64> {
        self.unflatten(k)
            .iter()
            .zip(&self.lo)
            .map(|(&i, lo)| lo + (i as f64 + 0.5) * self.h)
            .collect()
    }

    /// Cell containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let u = ((x[i] - self.lo[i]) / self.h).floor();
            if u < 0.0 || u >= self.n[i] as f64 {
                return None;
            }
            idx.push(u as usize);
        }
        Some(self.flatten(&idx))
    }

    pub fn neighbor(&self, k: usize, axis: usize, step: isize) -> Option<usize> {
        let mut idx = self.unflatten(k);
        let j = idx[axis] as isize + step;
        if j < 0 || j >= self.n[axis] as isize {
            return None;
        }
        idx[axis] = j as usize;
        Some(self.flatten(&idx))
    }
}

/// Displacement `T(x) - x` sampled at grid cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapField {
    pub grid: GridSpec,
    pub disp: Vec<f64>,
    pub valid: Vec<bool>,
    /// Source mass carried by each cell.
    pub weight: Vec<f64>,
}

impl MapField {
    pub fn displacement(&self, k: usize) -> &[f64] {
        &self.disp[k * self.grid.dim..(k + 1) * self.grid.dim]
    }

    /// The field in coordinates divided by `factor`.
    pub fn dilate(&self, factor: f64) -> MapField {
        let d = self.grid.dim;
        MapField {
            grid: GridSpec::new(self.grid.lo.iter().map(|v| v / factor).collect(), self.grid.h / factor, self.grid.n.clone()),
            disp: self.disp.iter().map(|v| v / factor).collect(),
            valid: self.valid.clone(),
            weight: self.weight.iter().map(|w| w / factor.powi(d as i32)).collect(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Largest displacement length over valid cells.
    pub fn sup(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&k| self.valid[k])
            .map(|k| self.displacement(k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Central-difference Jacobian of `T` at cell `k` (row `i` = `∂_j T_i`),
    /// using one-sided differences next to invalid cells.
    pub fn gradient(&self, k: usize) -> Option<Vec<f64>> {
        let d = self.grid.dim;
        let mut jac = vec![0.0; d * d];
        for j in 0..d {
            let fwd = self.grid.neighbor(k, j, 1).filter(|&c| self.valid[c]);
            let bwd = self.grid.neighbor(k, j, -1).filter(|&c| self.valid[c]);
            let (a, b, span) = match (bwd, fwd) {
                (Some(b), Some(f)) => (f, b, 2.0),
                (None, Some(f)) => (f, k, 1.0),
                (Some(b), None) => (k, b, 1.0),
                (None, None) => return None,
            };
            for i in 0..d {
                jac[i * d + j] = (self.displacement(a)[i] - self.displacement(b)[i]) / (span * self.grid.h)
                    + if i == j { 1.0 } else { 0.0 };
            }
        }
        Some(jac)
    }

    /// Largest `|∂_1 T_2 - ∂_2 T_1|` over cells whose four neighbours are valid.
    pub fn max_curl(&self) -> f64 {
        if self.grid.dim < 2 {
            return 0.0;
        }
        let mut best: f64 = 0.0;
        for k in 0..self.grid.len() {
            if !self.valid[k] {
                continue;
            }
            let nb: Vec<Option<usize>> = [(0, 1), (0, -1), (1, 1), (1, -1)]
                .iter()
                .map(|&(a, s)| self.grid.neighbor(k, a, s).filter(|&c| self.valid[c]))
                .collect();
            if nb.iter().any(Option::is_none) {
                continue;
            }
            let h2 = 2.0 * self.grid.h;
            let d12 = (self.displacement(nb[0].unwrap())[1] - self.displacement(nb[1].unwrap())[1]) / h2;
            let d21 = (self.displacement(nb[2].unwrap())[0] - self.displacement(nb[3].unwrap())[0]) / h2;
            best = best.max((d12 - d21).abs());
        }
        best
    }

    /// Multilinear interpolation of the displacement; `None` when a
    /// surrounding cell is invalid or outside the grid.
    pub fn interpolate(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.grid.dim;
        let mut base = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for i in 0..d {
            let u = (x[i] - self.grid.lo[i]) / self.grid.h - 0.5;
            let mut f = u.floor();
            if f < 0.0 && u > -0.5 - 1e-12 {
                f = 0.0;
            }
            if f as isize + 1 >= self.grid.n[i] as isize && u < self.grid.n[i] as f64 - 0.5 + 1e-12 {
                f = self.grid.n[i] as f64 - 2.0;
            }
            if f < 0.0 || f + 1.0 >= self.grid.n[i] as f64 {
                return None;
            }
            base.push(f as usize);
            frac.push((u - f).clamp(0.0, 1.0));
        }
        let mut out = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut idx = base.clone();
            let mut w = 1.0;
            for i in 0..d {
                if corner >> i & 1 == 1 {
                    idx[i] += 1;
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            if w == 0.0 {
                continue;
            }
            let k = self.grid.flatten(&idx);
            if !self.valid[k] {
                return None;
            }
            for i in 0..d {
                out[i] += w * self.displacement(k)[i];
            }
        }
        Some(out)
    }
}

/// Barycentric projection of `plan` onto `grid`: every cell holding source
/// points gets the mass-weighted mean displacement. Fails when more than
/// `coverage_limit` of those cells receive no plan mass.
pub fn extract_map(plan: &TransportPlan, grid: &GridSpec, coverage_limit: f64) -> Result<MapField> {
    let d = grid.dim;
    if d != plan.dim {
        return Err(TransportError::Dimension(d, plan.dim));
    }
    let cells = grid.len();
    let mut required = vec![false; cells];
    for i in 0..plan.src.len() {
        if plan.src.weights[i] > 0.0 {
            if let Some(k) = grid.locate(plan.src.point(i)) {
                required[k] = true;
            }
        }
    }
    let mut weight = vec![0.0; cells];
    let mut acc = vec![0.0; cells * d];
    for p in 0..plan.len() {
        if let Some(k) = grid.locate(plan.x0(p)) {
            let m = plan.mass[p];
            weight[k] += m;
            for i in 0..d {
                acc[k * d + i] += m * (plan.x1(p)[i] - plan.x0(p)[i]);
            }
        }
    }
    let valid: Vec<bool> = weight.iter().map(|w| *w > 0.0).collect();
    for k in 0..cells {
        if valid[k] {
            for i in 0..d {
                acc[k * d + i] /= weight[k];
            }
        }
    }
    let req = required.iter().filter(|r| **r).count();
    let invalid = (0..cells).filter(|&k| required[k] && !valid[k]).count();
    if req > 0 && invalid as f64 > coverage_limit * req as f64 {
        return Err(TransportError::Coverage { invalid, required: req, limit: coverage_limit });
    }
    Ok(MapField { grid: grid.clone(), disp: acc, valid, weight })
}

/// Barycentric projection of the reverse plan.
pub fn inverse_map(plan: &TransportPlan, grid: &GridSpec, coverage_limit: f64) -> Result<MapField> {
    extract_map(&plan.inverse(), grid, coverage_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{solve_exact, PointSet, DEFAULT_PAIR_CAP};

    fn grid_points(grid: &GridSpec, shift: &[f64]) -> PointSet {
        let coords = (0..grid.len())
            .flat_map(|k| grid.center(k).iter().zip(shift).map(|(a, b)| a + b).collect::<Vec<_>>())
            .collect();
        PointSet::uniform(grid.dim, coords)
    }

    #[test]
    fn flatten_round_trip() {
        let g = GridSpec::new(vec![0.0, -1.0], 0.1, vec![5, 7]);
        for k in 0..g.len() {
            assert_eq!(g.flatten(&g.unflatten(k)), k);
            assert_eq!(g.locate(&g.center(k)), Some(k));
        }
    }

    #[test]
    fn translation_gives_constant_field() {
        let g = GridSpec::cube(vec![0.0, 0.0], 1.0, 6);
        let v = [0.03, -0.02];
        let plan = solve_exact(&grid_points(&g, &[0.0, 0.0]), &grid_points(&g, &v), DEFAULT_PAIR_CAP).unwrap();
        let fwd = extract_map(&plan, &g, 0.0).unwrap();
        let back = inverse_map(&plan, &GridSpec { lo: vec![v[0], v[1]], ..g.clone() }, 0.0).unwrap();
        for k in 0..g.len() {
            assert!((fwd.displacement(k)[0] - v[0]).abs() < 1e-12);
            assert!((back.displacement(k)[1] + v[1]).abs() < 1e-12);
        }
        assert!(fwd.max_curl() < 1e-9);
        let t = fwd.interpolate(&[0.4, 0.55]).unwrap();
        assert!((t[0] - v[0]).abs() < 1e-12);
    }

    #[test]
    fn missing_mass_is_coverage_error() {
        let g = GridSpec::cube(vec![0.0], 1.0, 4);
        let src = grid_points(&g, &[0.0]);
        let plan = TransportPlan::from_pairs(src.clone(), src, &[(0, 0, 1.0)], 1e-9);
        assert!(matches!(extract_map(&plan, &g, 0.1), Err(TransportError::Coverage { .. })));
    }
}
