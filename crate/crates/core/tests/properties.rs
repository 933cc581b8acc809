use minvec_core::banach::{lp_norm, LpSpace};
use minvec_core::minvec::{solve_min_vector, MinimalVectorProblem, SolverConfig};
use minvec_core::operators::OperatorMatrix;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn operator(entries: &[f64], d: usize) -> OperatorMatrix {
    let m = DMatrix::from_fn(d, d, |i, j| {
        f64::from(u8::from(i == j)) + 0.4 * entries[i * d + j]
    });
    OperatorMatrix::new(m).unwrap()
}

fn unit(v: &[f64], p: f64) -> Option<DVector<f64>> {
    let n = lp_norm(v, p);
    (n > 1e-3).then(|| DVector::from_column_slice(v) / n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn duality_map_identities(
        v in prop::collection::vec(-10.0..10.0f64, 1..12),
        p in prop::sample::select(vec![1.5, 2.0, 2.5, 4.0]),
    ) {
        let x = DVector::from_vec(v);
        let space = LpSpace::new(x.len(), p).unwrap();
        let norm = space.norm(&x).unwrap();
        prop_assume!(norm > 1e-6);
        let f = space.duality_map(&x).unwrap();
        let scale = norm * norm;
        prop_assert!((f.apply(&x) - scale).abs() <= 1e-10 * scale);
        prop_assert!((space.dual_norm(&f).unwrap() - norm).abs() <= 1e-10 * norm);
    }

    #[test]
    fn norm_decreases_as_eps_grows(
        entries in prop::collection::vec(-1.0..1.0f64, 9),
        x in prop::collection::vec(-1.0..1.0f64, 3),
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
        n in 1usize..3,
    ) {
        let q = operator(&entries, 3);
        let x0 = unit(&x, p);
        prop_assume!(x0.is_some());
        let x0 = x0.unwrap();
        let space = LpSpace::new(3, p).unwrap();
        let cfg = SolverConfig::default();
        let mut last = f64::INFINITY;
        for eps in [0.2, 0.4, 0.6, 0.8] {
            let problem = MinimalVectorProblem::new(&q, x0.clone(), eps, n, space).unwrap();
            let sol = solve_min_vector(&problem, &cfg).unwrap();
            prop_assert!(sol.norm <= last * (1.0 + 1e-9));
            last = sol.norm;
        }
    }

    #[test]
    fn scaling_q_rescales_minimal_vector(
        entries in prop::collection::vec(-1.0..1.0f64, 9),
        x in prop::collection::vec(-1.0..1.0f64, 3),
        c in 0.3..3.0f64,
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
        n in 1usize..4,
    ) {
        let q = operator(&entries, 3);
        let x0 = unit(&x, p);
        prop_assume!(x0.is_some());
        let x0 = x0.unwrap();
        let space = LpSpace::new(3, p).unwrap();
        let cfg = SolverConfig::default();
        let base = solve_min_vector(
            &MinimalVectorProblem::new(&q, x0.clone(), 0.5, n, space).unwrap(),
            &cfg,
        )
        .unwrap();
        let scaled_q = q.scale(c);
        let scaled = solve_min_vector(
            &MinimalVectorProblem::new(&scaled_q, x0, 0.5, n, space).unwrap(),
            &cfg,
        )
        .unwrap();
        let expected = base.norm * c.powi(-(n as i32));
        prop_assert!((scaled.norm - expected).abs() <= 1e-7 * expected);
        prop_assert!(scaled.multiplier <= 1e-10);
    }
}
