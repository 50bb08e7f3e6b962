use approx::assert_relative_eq;
use otbound::eulerian::{self, TrajectorySet};
use otbound::geometry::{BBox, BoundaryGraph, Domain};
use otbound::linalg::{self, Mat};
use otbound::quantities;
use otbound::transport::{self, grid_for, sample_domain, AffineChange, PointSet, TransportPlan, DEFAULT_PAIR_CAP};
use proptest::prelude::*;

fn half_box(half: f64) -> Domain {
    let chart = BoundaryGraph::flat(2, 0.8 * half, 257, 0.5).unwrap();
    Domain::above_graph(0, 1.0, chart, BBox::new(vec![0.0, -half], vec![half, half])).unwrap()
}

fn shifted(dom: &Domain, h: f64, v: [f64; 2]) -> TransportPlan {
    let src = sample_domain(dom, &grid_for(dom, h));
    let tgt = src.map_affine(&linalg::identity(2), &v, 1.0, 1.0);
    let pairs: Vec<_> = (0..src.len()).map(|i| (i, i, src.weights[i])).collect();
    TransportPlan::from_pairs(src, tgt, &pairs, 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_change_preserves_optimality(
        n in 2usize..7,
        raw in proptest::collection::vec(0.0f64..1.0, 24),
        m in proptest::collection::vec(-0.4f64..0.4, 4),
        b in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        let src = PointSet::uniform(2, raw[..2 * n].to_vec());
        let tgt = PointSet::uniform(2, raw[12..12 + 2 * n].to_vec());
        let plan = transport::solve_exact(&src, &tgt, DEFAULT_PAIR_CAP).unwrap();
        let mat = Mat::from_row_slice(2, 2, &[1.0 + m[0], m[1], m[2], 1.0 + m[3]]);
        prop_assume!(mat.determinant().abs() > 0.1);
        let change = AffineChange::new(mat, b).unwrap();
        let moved = change.apply_plan(&plan);
        let resolved = transport::solve_exact(&moved.src, &moved.tgt, DEFAULT_PAIR_CAP).unwrap();
        prop_assert!((moved.cost() - resolved.cost()).abs() <= 1e-10 * (1.0 + resolved.cost()));
    }

    #[test]
    fn translation_energy_is_closed_form(t in -0.4f64..0.4, s in 0.0f64..0.3) {
        let dom = half_box(2.0);
        let h = 1.0 / 32.0;
        let plan = shifted(&dom, h, [s, t]);
        let e = quantities::energy_from_plan(&plan, 1.0);
        let closed = 0.5 * (s * s + t * t);
        prop_assert!((e - closed).abs() <= 4.0 * h * closed + 1e-15);
    }
}

#[test]
fn translation_flux_balances_mass() {
    let dom = half_box(2.0);
    let h = 1.0 / 32.0;
    let plan = shifted(&dom, h, [0.0, 0.3]);
    let traj = TrajectorySet::from_plan(&plan, h);
    let slice = eulerian::flux_slice(&traj, 1.25, 0.1, 0.0, 32, 32).unwrap();
    assert!(slice.mass_balance_defect() < 1e-9);
    assert_relative_eq!(slice.net_flux(), slice.mass0_in_q - slice.mass1_in_q, epsilon = 1e-9);
}

#[test]
fn dilation_lambda_control_is_bounded() {
    let mut ratios = Vec::new();
    for t in [0.02, 0.04, 0.08] {
        let s = (1.0_f64 + t).sqrt();
        let dom = half_box(2.0);
        let src = sample_domain(&dom, &grid_for(&dom, 1.0 / 32.0));
        let tgt = src.map_affine(&Mat::from_diagonal_element(2, 2, s), &[0.0, 0.0], 1.0, 1.0 / (1.0 + t));
        let pairs: Vec<_> = (0..src.len()).map(|i| (i, i, src.weights[i])).collect();
        let plan = TransportPlan::from_pairs(src, tgt, &pairs, 1e-9);
        let e = quantities::energy_from_plan(&plan, 1.0);
        let lambda = 1.0 / (1.0 + t);
        ratios.push((lambda - 1.0).powi(2) / e);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 1.5, "{ratios:?}");
}
