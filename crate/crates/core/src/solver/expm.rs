use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemigroupError {
    #[error("generator must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("matrix exponential overflowed (norm of dt*A = {0:.3e})")]
    Overflow(f64),
}

fn norm_one(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `S(dt) = exp(-dt A)` by scaling and squaring around a truncated Taylor series.
///
/// The scaled matrix has 1-norm at most 1/2, where 20 series terms leave a
/// remainder below 1e-25.
pub fn semigroup_step(a: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>, SemigroupError> {
    if !a.is_square() {
        return Err(SemigroupError::NotSquare(a.nrows(), a.ncols()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SemigroupError::BadStep(dt));
    }
    let n = a.nrows();
    let m = a * (-dt);
    let norm = norm_one(&m);
    if !norm.is_finite() {
        return Err(SemigroupError::Overflow(norm));
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = &m * 0.5f64.powi(squarings);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
        if norm_one(&term) <= f64::EPSILON * 1e-3 * norm_one(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().all(|v| v.is_finite()) {
        Ok(result)
    } else {
        Err(SemigroupError::Overflow(norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max() / b.abs().max().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn zero_generator_gives_identity() {
        let s = semigroup_step(&DMatrix::zeros(2, 2), 0.7).unwrap();
        assert_eq!(s, DMatrix::identity(2, 2));
    }

    #[test]
    fn scalar_case() {
        let s = semigroup_step(&DMatrix::from_element(1, 1, 0.5), 0.1).unwrap();
        assert!((s[(0, 0)] - (-0.05f64).exp()).abs() < 1e-15);
        assert!((s[(0, 0)] - 0.951229).abs() < 1e-6);
    }

    #[test]
    fn diagonal_case() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let s = semigroup_step(&a, 1.0).unwrap();
        assert!((s[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn rotation_generator() {
        // A = [[0, -w], [w, 0]] gives exp(-dt A) = rotation by -w dt.
        let w = 3.0;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
        let s = semigroup_step(&a, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[w.cos(), w.sin(), -w.sin(), w.cos()]);
        assert!(rel_err(&s, &expected) < 1e-12, "{s} vs {expected}");
    }

    #[test]
    fn errors() {
        assert!(matches!(semigroup_step(&DMatrix::zeros(2, 3), 1.0), Err(SemigroupError::NotSquare(2, 3))));
        assert!(matches!(semigroup_step(&DMatrix::zeros(2, 2), 0.0), Err(SemigroupError::BadStep(_))));
        assert!(matches!(
            semigroup_step(&DMatrix::from_element(1, 1, -1e6), 1.0),
            Err(SemigroupError::Overflow(_))
        ));
    }

    proptest! {
        // Cross-check against nalgebra's Pade-based exponential.
        #[test]
        fn agrees_with_pade(entries in proptest::collection::vec(-1.0f64..1.0, 9), dt in 0.01f64..3.0) {
            let a = DMatrix::from_row_slice(3, 3, &entries);
            let ours = semigroup_step(&a, dt).unwrap();
            let reference = (&a * (-dt)).exp();
            prop_assert!(rel_err(&ours, &reference) < 1e-12, "{} vs {}", ours, reference);
        }

        #[test]
        fn semigroup_property(entries in proptest::collection::vec(-1.0f64..1.0, 4), dt in 0.01f64..2.0) {
            let a = DMatrix::from_row_slice(2, 2, &entries);
            let half = semigroup_step(&a, dt).unwrap();
            let full = semigroup_step(&a, 2.0 * dt).unwrap();
            prop_assert!(rel_err(&(&half * &half), &full) < 1e-12);
        }
    }
}
