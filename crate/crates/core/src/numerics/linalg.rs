use nalgebra::{DMatrix, SymmetricEigen};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Relative pivot floor below which a Gram matrix counts as singular.
const PIVOT_FLOOR: f64 = 1e-10;

/// Solves `g · x = rhs` for symmetric positive definite `g` by Cholesky
/// factorisation.
///
/// Fails with [`Error::DegenerateGram`] naming the first pivot that falls
/// below `1e-10` times the largest diagonal entry.
pub fn solve_spd(g: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = g.rows();
    if g.cols() != n || rhs.rows() != n {
        return Err(Error::Shape(format!(
            "solve_spd with g {:?} and rhs {:?}",
            g.shape(),
            rhs.shape()
        )));
    }
    let largest = (0..n).map(|i| g[(i, i)]).fold(0.0_f64, f64::max);
    let floor = PIVOT_FLOOR * largest;

    // Lower-triangular factor, row-major.
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = g[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return Err(Error::DegenerateGram { pivot: j });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }

    let mut x = rhs.clone();
    for c in 0..rhs.cols() {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Leading principal directions of a sample matrix.
#[derive(Clone, Debug)]
pub struct PrincipalComponents {
    /// `n × k'` orthonormal basis, columns by descending variance.
    pub basis: Matrix,
    /// Sample-covariance eigenvalues matching the basis columns.
    pub eigenvalues: Vec<f64>,
    /// Number of components that were asked for; `basis.cols()` may be fewer.
    pub requested: usize,
}

impl PrincipalComponents {
    pub fn count(&self) -> usize {
        self.basis.cols()
    }

    pub fn is_truncated(&self) -> bool {
        self.count() < self.requested
    }
}

/// Top-`k` principal components of `x`, whose columns are samples.
///
/// The covariance is mean-centred. When there are fewer samples than
/// dimensions the eigenproblem is solved on the sample Gram matrix instead of
/// the `n × n` covariance; both give the same nonzero spectrum. Directions
/// with eigenvalue at or below `1e-10` of the largest are not returned, so a
/// rank-deficient or constant sample set yields fewer than `k` columns.
pub fn top_k_principal_components(x: &Matrix, k: usize) -> PrincipalComponents {
    let (n, m) = x.shape();
    let empty = |requested| PrincipalComponents {
        basis: Matrix::zeros(n, 0),
        eigenvalues: Vec::new(),
        requested,
    };
    if m < 2 || n == 0 || k == 0 {
        return empty(k);
    }

    let mut centred = DMatrix::<f64>::zeros(n, m);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / m as f64;
        for (j, &v) in row.iter().enumerate() {
            centred[(i, j)] = v - mean;
        }
    }
    let denom = (m - 1) as f64;

    let (values, vectors) = if n <= m {
        let cov = (&centred * centred.transpose()) / denom;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let gram = (centred.transpose() * &centred) / denom;
        let eig = SymmetricEigen::new(gram);
        let lifted = &centred * &eig.eigenvectors;
        (eig.eigenvalues, lifted)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let largest = values[order[0]];
    if !(largest > 1e-14) {
        return empty(k);
    }

    let mut columns = Vec::new();
    let mut eigenvalues = Vec::new();
    for &idx in order.iter().take(k) {
        let lambda = values[idx];
        if lambda <= 1e-10 * largest {
            break;
        }
        let mut v: Vec<f64> = vectors.column(idx).iter().copied().collect();
        let len = super::norm(&v);
        if len == 0.0 {
            break;
        }
        v.iter_mut().for_each(|e| *e /= len);
        // Sign convention: largest-magnitude entry positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0_f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        columns.push(v);
        eigenvalues.push(lambda);
    }
    let basis = if columns.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&columns)
    };
    PrincipalComponents {
        basis,
        eigenvalues,
        requested: k,
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows() != m.cols() {
        return Err(Error::Shape(format!("eigenvalues of a {:?} matrix", m.shape())));
    }
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let mut values: Vec<f64> = SymmetricEigen::new(dm).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_system() {
        let v = Matrix::from_rows(&[[1.5], [-2.0], [0.25]]);
        assert_eq!(solve_spd(&Matrix::identity(3), &v).unwrap(), v);
    }

    #[test]
    fn diagonal_system() {
        let g = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let rhs = Matrix::from_rows(&[[2.0], [8.0]]);
        let x = solve_spd(&g, &rhs).unwrap();
        assert!(x.max_abs_diff(&Matrix::from_rows(&[[1.0], [2.0]])) < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = Rng::new(21);
        for _ in 0..50 {
            let b = random(9, 6, &mut rng);
            let g = b.transpose().matmul(&b).unwrap();
            let rhs = random(6, 2, &mut rng);
            let x = solve_spd(&g, &rhs).unwrap();
            let residual = g.matmul(&x).unwrap().sub(&rhs).unwrap().frobenius_norm();
            assert!(residual < 1e-8 * rhs.frobenius_norm(), "residual {residual}");
        }
    }

    #[test]
    fn singular_gram_reports_pivot() {
        // Second column duplicates the first.
        let a = Matrix::from_columns(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.0, 1.0, 0.0]]);
        let g = a.transpose().matmul(&a).unwrap();
        match solve_spd(&g, &Matrix::identity(3)) {
            Err(Error::DegenerateGram { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected DegenerateGram, got {other:?}"),
        }
    }

    #[test]
    fn constant_samples_have_no_components() {
        let x = Matrix::from_columns(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]);
        let pcs = top_k_principal_components(&x, 1);
        assert_eq!(pcs.count(), 0);
        assert!(pcs.is_truncated());
    }

    #[test]
    fn axis_aligned_samples() {
        let x = Matrix::from_columns(&[[-2.0, 0.0], [-1.0, 0.0], [0.5, 0.0], [3.0, 0.0]]);
        let pcs = top_k_principal_components(&x, 1);
        assert_eq!(pcs.count(), 1);
        assert!((pcs.basis[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(pcs.basis[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn rank_is_capped_by_sample_count() {
        let mut rng = Rng::new(4);
        let x = random(10, 4, &mut rng);
        let pcs = top_k_principal_components(&x, 6);
        assert_eq!(pcs.count(), 3);
    }

    /// Cyclic Jacobi rotations on a symmetric matrix; returns (values, vectors as columns).
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let (vkp, vkq) = (v[k][p], v[k][q]);
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..n).map(|i| a[i][i]).collect();
        let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
        (values, vectors)
    }

    fn covariance(x: &Matrix) -> Vec<Vec<f64>> {
        let (n, m) = x.shape();
        let means: Vec<f64> = (0..n).map(|i| x.row(i).iter().sum::<f64>() / m as f64).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..m).map(|s| (x[(i, s)] - means[i]) * (x[(j, s)] - means[j])).sum::<f64>() / (m - 1) as f64)
                    .collect()
            })
            .collect()
    }

    /// Sine of the largest principal angle between two orthonormal bases.
    fn subspace_sine(a: &Matrix, b: &Matrix) -> f64 {
        // || (I - B Bᵀ) A ||_2 bounded above by the Frobenius norm.
        let proj = b.matmul(&b.transpose().matmul(a).unwrap()).unwrap();
        a.sub(&proj).unwrap().frobenius_norm()
    }

    #[test]
    fn matches_jacobi_eigendecomposition() {
        let mut rng = Rng::new(17);
        // Anisotropic scales keep the leading eigenvalues well separated.
        let mut x = random(10, 50, &mut rng);
        for i in 0..10 {
            let s = 10.0 / (i + 1) as f64;
            x.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        let (values, vectors) = jacobi_eigen(covariance(&x));
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        for k in [1, 3, 5] {
            let pcs = top_k_principal_components(&x, k);
            let oracle = Matrix::from_columns(&order[..k].iter().map(|&i| vectors[i].clone()).collect::<Vec<_>>());
            assert!(subspace_sine(&pcs.basis, &oracle) < 1e-6, "k={k}");
            for (got, &i) in pcs.eigenvalues.iter().zip(&order) {
                assert!((got - values[i]).abs() < 1e-9 * values[order[0]]);
            }
        }
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        let mut rng = Rng::new(23);
        let x = random(12, 6, &mut rng);
        let (values, vectors) = jacobi_eigen(covariance(&x));
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let pcs = top_k_principal_components(&x, 3);
        let oracle = Matrix::from_columns(&order[..3].iter().map(|&i| vectors[i].clone()).collect::<Vec<_>>());
        assert!(subspace_sine(&pcs.basis, &oracle) < 1e-6);
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn principal_basis_is_orthonormal(x in matrix_strategy(8, 20), k in 1usize..8) {
            let pcs = top_k_principal_components(&x, k);
            let gram = pcs.basis.transpose().matmul(&pcs.basis).unwrap();
            prop_assert!(gram.max_abs_diff(&Matrix::identity(pcs.count())) < 1e-8);
            prop_assert!(pcs.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn spd_solve_residual(b in matrix_strategy(9, 5), rhs in matrix_strategy(5, 2)) {
            let mut g = b.transpose().matmul(&b).unwrap();
            for i in 0..5 {
                g.row_mut(i)[i] += 0.1;
            }
            let x = solve_spd(&g, &rhs).unwrap();
            let resid = g.matmul(&x).unwrap().sub(&rhs).unwrap().frobenius_norm();
            prop_assert!(resid < 1e-8 * rhs.frobenius_norm().max(1e-300));
        }
    }
}
