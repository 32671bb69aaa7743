use nalgebra::{DMatrix, DVector};

use crate::error::{QopError, Result};
use crate::theta::C64;

pub type DenseMatrix = DMatrix<C64>;

pub const DEFAULT_CONDITION_CAP: f64 = 1e10;

/// Solution of `A X = B` together with diagnostics.
#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub x: DenseMatrix,
    pub condition: f64,
    pub residual: f64,
}

/// Frobenius norm.
pub fn frobenius(a: &DenseMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_difference(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let scale = frobenius(a).max(frobenius(b));
    if scale == 0.0 {
        return 0.0;
    }
    frobenius(&(a - b)) / scale
}

pub fn vector_relative_difference(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return 0.0;
    }
    (a - b).norm() / scale
}

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &DenseMatrix) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.kronecker(b)
}

pub fn solve_linear(a: &DenseMatrix, b: &DenseMatrix) -> Result<LinearSolution> {
    solve_linear_with_cap(a, b, DEFAULT_CONDITION_CAP)
}

/// LU solve, gated by a condition-number cap and re-verified by residual.
pub fn solve_linear_with_cap(a: &DenseMatrix, b: &DenseMatrix, cap: f64) -> Result<LinearSolution> {
    if a.nrows() != a.ncols() {
        return Err(QopError::Shape(format!(
            "solve_linear: A is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(QopError::Shape(format!(
            "solve_linear: A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let condition = condition_number(a);
    if !condition.is_finite() || condition > cap {
        return Err(QopError::IllConditioned { condition, cap });
    }
    let x = a.clone().lu().solve(b).ok_or(QopError::IllConditioned {
        condition: f64::INFINITY,
        cap,
    })?;
    let b_norm = frobenius(b);
    let residual = if b_norm == 0.0 {
        frobenius(&(a * &x))
    } else {
        frobenius(&(a * &x - b)) / b_norm
    };
    // Backward-stable LU: residual is bounded by a small multiple of n·ε·κ.
    let allowed = 1e-12 * (a.nrows() as f64) * condition.max(1.0);
    if residual > allowed.max(1e-10) {
        return Err(QopError::IllConditioned { condition, cap });
    }
    Ok(LinearSolution {
        x,
        condition,
        residual,
    })
}

/// Eigenvalues and unit-norm eigenvectors (as columns).
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: DenseMatrix,
}

impl Eigen {
    /// Largest `‖A v − λ v‖ / ‖A‖` over the returned pairs.
    pub fn max_residual(&self, a: &DenseMatrix) -> f64 {
        let scale = frobenius(a).max(f64::MIN_POSITIVE);
        (0..self.values.len())
            .map(|i| {
                let v = self.vectors.column(i);
                (a * v - v * self.values[i]).norm() / scale
            })
            .fold(0.0, f64::max)
    }
}

const SCHUR_MAX_ITER: usize = 10_000;

/// General complex eigen-decomposition via the Schur form `A = Z T Z^H`
/// followed by back-substitution on the triangular factor.
pub fn eig_decompose(a: &DenseMatrix) -> Result<Eigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(QopError::Shape(format!(
            "eig_decompose: A is {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(
        QopError::EigenNonConvergence {
            iterations: SCHUR_MAX_ITER,
        },
    )?;
    let (z, t) = schur.unpack();
    let t_norm = frobenius(&t).max(f64::MIN_POSITIVE);
    let floor = f64::EPSILON * t_norm;

    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let lambda = values[i];
        let mut y = DVector::<C64>::zeros(n);
        y[i] = C64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for k in (j + 1)..=i {
                acc += t[(j, k)] * y[k];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < floor {
                denom = C64::new(floor, 0.0);
            }
            y[j] = -acc / denom;
        }
        let v = &z * y;
        let norm = v.norm();
        vectors.set_column(i, &(v / C64::new(norm, 0.0)));
    }
    Ok(Eigen { values, vectors })
}

/// Orthonormal basis (columns) of the column space of `a`, keeping singular
/// values above `rel_tol · σ_max`. Built from the Hermitian eigenproblem of
/// `A A^H` (the complex SVD's singular vectors are not relied upon).
pub fn column_space(a: &DenseMatrix, rel_tol: f64) -> DenseMatrix {
    let eig = (a * a.adjoint()).symmetric_eigen();
    let smax2 = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    // eigenvalues of A A^H resolve σ² only down to ~ε·σ_max²
    column_space_above(a, (rel_tol * rel_tol).max(1e-13) * smax2, eig)
}

/// As [`column_space`] with an absolute floor on the singular values.
pub fn column_space_absolute(a: &DenseMatrix, sigma_floor: f64) -> DenseMatrix {
    let eig = (a * a.adjoint()).symmetric_eigen();
    column_space_above(a, sigma_floor * sigma_floor, eig)
}

fn column_space_above(
    a: &DenseMatrix,
    floor2: f64,
    eig: nalgebra::SymmetricEigen<C64, nalgebra::Dyn>,
) -> DenseMatrix {
    let mut keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > floor2)
        .collect();
    // descending order for a stable layout
    keep.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut basis = DenseMatrix::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_system_returns_rhs() {
        let a = DenseMatrix::identity(3, 3);
        let b = random_matrix(3, 4);
        let sol = solve_linear(&a, &b).unwrap();
        assert!(relative_difference(&sol.x, &b) < 1e-15);
        assert!((sol.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_against_hand_inverse() {
        let a = DenseMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(3.0, 0.0),
            ],
        );
        let b = DenseMatrix::identity(2, 2);
        let inv = DenseMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.6, 0.0),
                C64::new(-0.2, 0.0),
                C64::new(-0.2, 0.0),
                C64::new(0.4, 0.0),
            ],
        );
        let sol = solve_linear(&a, &b).unwrap();
        assert!(relative_difference(&sol.x, &inv) < 1e-14);
    }

    #[test]
    fn random_system_residual() {
        let a = random_matrix(9, 9);
        let b = random_matrix(9, 10);
        let sol = solve_linear(&a, &b).unwrap();
        assert!(frobenius(&(&a * &sol.x - &b)) / frobenius(&b) < 1e-12);
    }

    #[test]
    fn singular_system_reports_condition() {
        let mut a = random_matrix(4, 1);
        let c0 = a.column(0).clone_owned();
        a.set_column(1, &c0);
        match solve_linear(&a, &DenseMatrix::identity(4, 4)) {
            Err(QopError::IllConditioned { condition, .. }) => assert!(condition > 1e10),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn diagonal_eigenvalues() {
        let d = [C64::new(1.0, 0.0), C64::new(-2.0, 1.0), C64::new(0.5, 0.25)];
        let a = DenseMatrix::from_diagonal(&DVector::from_row_slice(&d));
        let e = eig_decompose(&a).unwrap();
        for v in d {
            assert!(e.values.iter().any(|w| (w - v).norm() < 1e-14));
        }
    }

    #[test]
    fn hermitian_eigenvalues_are_real() {
        let r = random_matrix(5, 2);
        let h = &r + r.adjoint();
        let e = eig_decompose(&h).unwrap();
        for v in &e.values {
            assert!(v.im.abs() < 1e-12);
        }
        assert!(e.max_residual(&h) < 1e-12);
    }

    #[test]
    fn random_eigen_residuals() {
        for seed in 0..5 {
            let a = random_matrix(4, 100 + seed);
            let e = eig_decompose(&a).unwrap();
            assert!(e.max_residual(&a) < 1e-10, "seed {seed}");
            for i in 0..4 {
                assert!((e.vectors.column(i).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn column_space_of_rank_two() {
        let a = random_matrix(4, 7);
        let mut b = a.clone();
        let c = a.column(0) + a.column(1);
        b.set_column(2, &c);
        b.set_column(3, &a.column(0).clone_owned());
        let basis = column_space(&b, 1e-10);
        assert_eq!(basis.ncols(), 2);
    }
}
