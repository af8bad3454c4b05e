use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use stiga::assembly::{dense_kronecker, KroneckerOperator, SparseMatrix};
use stiga::bspline::KnotVector;
use stiga::errors::rate;

/// Open knot vector on [0, 1] from sorted interior knots.
fn knot_vector(mut interior: Vec<f64>, degree: usize) -> KnotVector {
    interior.sort_by(f64::total_cmp);
    let mut knots = vec![0.0; degree + 1];
    knots.extend(interior);
    knots.extend(vec![1.0; degree + 1]);
    KnotVector::new(knots, degree).unwrap()
}

fn sparse(rows: usize, cols: usize, seed: &[f64]) -> SparseMatrix {
    let dense = DMatrix::from_fn(rows, cols, |i, j| {
        let v = seed[(i * cols + j) % seed.len()];
        if (i + 2 * j) % 3 == 0 { 0.0 } else { v }
    });
    SparseMatrix::from_dense(&dense)
}

proptest! {
    #[test]
    fn basis_is_a_nonnegative_partition_of_unity(
        interior in prop::collection::vec(0.01f64..0.99, 0..6),
        degree in 1usize..5,
        t in 0.0f64..=1.0,
    ) {
        let kv = knot_vector(interior, degree);
        let b = kv.eval_basis(t).unwrap();
        prop_assert_eq!(b.values.len(), degree + 1);
        prop_assert!(b.values.iter().all(|&v| v >= 0.0));
        prop_assert!((b.values.iter().sum::<f64>() - 1.0).abs() <= 1e-13);
        prop_assert!(b.first + degree < kv.num_basis());
    }

    #[test]
    fn basis_derivatives_sum_to_zero(
        interior in prop::collection::vec(0.01f64..0.99, 0..6),
        degree in 1usize..5,
        t in 0.0f64..=1.0,
    ) {
        let kv = knot_vector(interior, degree);
        let d = kv.eval_basis_derivs(t, 2).unwrap();
        let scale = d.rows[1].iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!(d.rows[1].iter().sum::<f64>().abs() <= 1e-10 * scale);
    }

    #[test]
    fn kronecker_apply_matches_dense_product(
        seed in prop::collection::vec(-1.0f64..1.0, 8..20),
        nt in 1usize..5,
        ns in 1usize..6,
        scale in -2.0f64..2.0,
    ) {
        let (a, b) = (sparse(nt, nt, &seed), sparse(ns, ns, &seed[3..]));
        let op = KroneckerOperator::new(Arc::new(a.clone()), Arc::new(b.clone()), scale);
        let x: Vec<f64> = (0..nt * ns).map(|i| seed[i % seed.len()] + i as f64 * 0.1).collect();
        let y = op.mul_vec(&x);
        let dense = dense_kronecker(&a.to_dense(), &b.to_dense()) * scale;
        let expected = dense * nalgebra::DVector::from_column_slice(&x);
        for (u, v) in y.iter().zip(expected.iter()) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn rate_of_exact_power_law_is_its_exponent(c in 0.1f64..10.0, k in 0.5f64..6.0) {
        let r = rate(c, c * 0.5f64.powf(k)).unwrap();
        prop_assert!((r - k).abs() <= 1e-12);
    }
}
