//! Dense `f64` linear algebra, activations and the seeded random source.

mod activation;
mod matrix;
mod rng;
mod vector;

pub use activation::{sigmoid, sigmoid_deriv, sigmoid_scalar, tanh_act, tanh_deriv, Activation};
pub use matrix::Matrix;
pub use rng::{init_scale, Rng};
pub use vector::Vector;

/// Checked matrix-vector product.
pub fn matvec(m: &Matrix, v: &Vector) -> crate::Result<Vector> {
    m.matvec(v)
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_examples() {
        let v = Vector::from([1.0, 2.0, 3.0]);
        assert_eq!(matvec(&Matrix::identity(3), &v).unwrap(), v);
        assert_eq!(
            matvec(&Matrix::zeros(2, 3), &Vector::from([5.0, 5.0, 5.0])).unwrap(),
            Vector::from([0.0, 0.0])
        );
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(
            matvec(&m, &Vector::from([1.0, 1.0])).unwrap(),
            Vector::from([3.0, 7.0])
        );
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let err = matvec(&Matrix::zeros(2, 3), &Vector::zeros(2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("vector[2]"), "{msg}");
    }

    #[test]
    fn activation_examples() {
        let zero = Vector::from([0.0]);
        assert_eq!(sigmoid(&zero)[0], 0.5);
        assert_eq!(sigmoid_deriv(&zero)[0], 0.25);
        let big = sigmoid(&Vector::from([30.0, -30.0]));
        assert!((big[0] - 1.0).abs() < 1e-12);
        assert!(big[1].abs() < 1e-12 && big[1] > 0.0);
        assert_eq!(tanh_act(&zero)[0], 0.0);
        assert_eq!(tanh_deriv(&zero)[0], 1.0);
        assert!((tanh_act(&Vector::from([1.0]))[0] - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_never_overflows() {
        let v = sigmoid(&Vector::from([-1e308, 1e308, -800.0, 800.0]));
        assert!(v.is_finite());
        assert_eq!(v[1], 1.0);
        assert!(v[0] >= 0.0);
    }

    #[test]
    fn activation_derivatives_match_centered_differences() {
        let h = 1e-5;
        for act in [Activation::Tanh, Activation::Sigmoid, Activation::Identity] {
            for i in 0..=100 {
                let x = -5.0 + 0.1 * i as f64;
                let fd = (act.eval(x + h) - act.eval(x - h)) / (2.0 * h);
                let exact = act.deriv(x);
                let rel = (fd - exact).abs() / exact.abs();
                assert!(rel < 1e-6, "{act} at {x}: fd {fd} vs {exact}");
                assert!(exact <= act.deriv_bound());
            }
        }
    }

    #[test]
    fn gaussian_is_reproducible_and_standard() {
        let a = Rng::new(42).gaussian(16).unwrap();
        let b = Rng::new(42).gaussian(16).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        let draws = Rng::new(3).gaussian(100_000).unwrap();
        let mean = draws.sum() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!(Rng::new(1).gaussian(0).is_err());
    }

    #[test]
    fn spectral_radius_simple_cases() {
        let d = Matrix::diag(&[0.5, 0.2]);
        assert!((d.spectral_radius_est(200).unwrap() - 0.5).abs() < 1e-9);
        let s = Matrix::identity(4).scale(2.0);
        assert!((s.spectral_radius_est(10).unwrap() - 2.0).abs() < 1e-12);
        assert!(Matrix::zeros(2, 3).spectral_radius_est(10).is_err());
    }

    #[test]
    fn spectral_radius_matches_dense_eigensolver() {
        // Positive entries give a real, simple dominant eigenvalue.
        let mut rng = Rng::new(5);
        for _ in 0..5 {
            let m =
                Matrix::from_vec(5, 5, (0..25).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
            let est = m.spectral_radius_est(500).unwrap();
            let oracle = nalgebra::DMatrix::from_row_slice(5, 5, m.data())
                .complex_eigenvalues()
                .iter()
                .map(|c| c.norm())
                .fold(0.0_f64, f64::max);
            assert!((est - oracle).abs() < 1e-6, "{est} vs {oracle}");
        }
    }

    #[test]
    fn spectral_radius_handles_rotation_pairs() {
        // Rotation by 60 degrees scaled by 0.8: eigenvalues 0.8 e^{+-i pi/3}.
        let (c, s) = (
            0.8 * (std::f64::consts::PI / 3.0).cos(),
            0.8 * (std::f64::consts::PI / 3.0).sin(),
        );
        let m = Matrix::from_rows(&[&[c, -s], &[s, c]]);
        assert!((m.spectral_radius_est(400).unwrap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn operator_norm_of_non_normal_matrix() {
        let m = Matrix::from_rows(&[&[0.0, 4.0], &[0.0, 0.0]]);
        assert!((m.operator_norm_est(50) - 4.0).abs() < 1e-9);
        assert_eq!(m.spectral_radius_est(50).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn matvec_distributes_over_addition(
            m in proptest::collection::vec(-10.0f64..10.0, 64),
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            let m = Matrix::from_vec(8, 8, m).unwrap();
            let (a, b) = (Vector::from(a), Vector::from(b));
            let lhs = m.apply(&a.add(&b));
            let rhs = m.apply(&a).add(&m.apply(&b));
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
