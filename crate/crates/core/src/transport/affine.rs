use super::{GridSpec, MapField, Result, TransportPlan};
use crate::linalg::{self, Mat};

/// Change of variables `x̂0 = B^{-*} x0`, `x̂1 = B (x1 - b)`. Masses are
/// divided by `|det B|`, so the source density is unchanged and the target
/// density becomes `λ |det B|^{-2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineChange {
    pub matrix: Mat,
    pub shift: Vec<f64>,
    inv_adjoint: Mat,
    det: f64,
}

impl AffineChange {
    pub fn new(matrix: Mat, shift: Vec<f64>) -> Result<Self> {
        let inv = linalg::inverse(&matrix)?;
        let det = matrix.determinant().abs();
        Ok(AffineChange { inv_adjoint: inv.transpose(), matrix, shift, det })
    }

    pub fn identity(d: usize) -> Self {
        AffineChange::new(linalg::identity(d), vec![0.0; d]).expect("identity is invertible")
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn lambda_hat(&self, lambda: f64) -> f64 {
        lambda / (self.det * self.det)
    }

    pub fn source_point(&self, x0: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.inv_adjoint, x0)
    }

    pub fn target_point(&self, x1: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x1.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        linalg::mat_vec(&self.matrix, &z)
    }

    pub fn apply_plan(&self, plan: &TransportPlan) -> TransportPlan {
        let d = plan.dim;
        let scale = 1.0 / self.det;
        let zero = vec![0.0; d];
        let bshift: Vec<f64> = linalg::mat_vec(&self.matrix, &self.shift).iter().map(|v| -v).collect();
        let src = plan.src.map_affine(&self.inv_adjoint, &zero, scale, plan.lambda0);
        let tgt = plan.tgt.map_affine(&self.matrix, &bshift, scale, self.lambda_hat(plan.lambda1));
        let pairs: Vec<(usize, usize, f64)> = (0..plan.len())
            .map(|k| (plan.src_index[k], plan.tgt_index[k], plan.mass[k] * scale))
            .collect();
        TransportPlan::from_pairs(src, tgt, &pairs, plan.tol_mono)
    }

    /// Resamples `B (T(B^* x̂) - b) - x̂` on `grid` by interpolating `map`.
    pub fn apply_map(&self, map: &MapField, grid: &GridSpec) -> MapField {
        let d = grid.dim;
        let bt = self.matrix.transpose();
        let mut disp = vec![0.0; grid.len() * d];
        let mut valid = vec![false; grid.len()];
        let mut weight = vec![0.0; grid.len()];
        for k in 0..grid.len() {
            let xh = grid.center(k);
            let x = linalg::mat_vec(&bt, &xh);
            if let Some(u) = map.interpolate(&x) {
                let t: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
                let y = self.target_point(&t);
                for i in 0..d {
                    disp[k * d + i] = y[i] - xh[i];
                }
                valid[k] = true;
                weight[k] = map.grid.locate(&x).map_or(0.0, |c| map.weight[c]) * grid.cell_volume()
                    / map.grid.cell_volume();
            }
        }
        MapField { grid: grid.clone(), disp, valid, weight }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MatrixError;
    use crate::transport::{solve_exact, PointSet, TransportError, DEFAULT_PAIR_CAP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::uniform(2, (0..2 * n).map(|_| rng.gen::<f64>()).collect())
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            AffineChange::new(m, vec![0.0, 0.0]),
            Err(TransportError::Matrix(MatrixError::Singular(_)))
        ));
    }

    #[test]
    fn identity_leaves_plan_unchanged() {
        let a = random_points(6, 1);
        let b = random_points(6, 2);
        let plan = solve_exact(&a, &b, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(AffineChange::identity(2).apply_plan(&plan), plan);
    }

    #[test]
    fn shift_moves_targets() {
        let a = random_points(5, 3);
        let plan = solve_exact(&a, &a, DEFAULT_PAIR_CAP).unwrap();
        let v = vec![0.3, -0.1];
        let moved = AffineChange::new(linalg::identity(2), v.clone()).unwrap().apply_plan(&plan);
        for k in 0..plan.len() {
            assert!((moved.x1(k)[0] - (plan.x1(k)[0] - v[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn transform_commutes_with_solve() {
        let a = random_points(50, 4);
        let b = random_points(50, 5);
        let change = AffineChange::new(Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), vec![0.0, 0.0]).unwrap();
        let moved = change.apply_plan(&solve_exact(&a, &b, DEFAULT_PAIR_CAP).unwrap());
        let fresh = solve_exact(&moved.src, &moved.tgt, DEFAULT_PAIR_CAP).unwrap();
        assert!((moved.cost() - fresh.cost()).abs() <= 0.02 * fresh.cost());
        assert!(moved.monotonicity_min(1_000_000, 0) >= -1e-9);
    }
}
