//! Small dense linear-algebra helpers on top of nalgebra. Large
//! factorizations go through faer's blocked kernels.

use faer::prelude::*;
use faer::{Mat, MatRef};
use nalgebra::{DMatrix, DVector};

pub fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn from_faer(a: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

impl Lu {
    /// `None` when the matrix is not square or has a zero or non-finite pivot.
    pub fn new(a: &DMatrix<f64>) -> Option<Lu> {
        if a.nrows() != a.ncols() {
            return None;
        }
        let lu = to_faer(a).partial_piv_lu();
        let u = lu.U();
        if (0..u.nrows()).any(|i| !(u[(i, i)] != 0.0 && u[(i, i)].is_finite())) {
            return None;
        }
        Some(Lu { lu })
    }

    pub fn dim(&self) -> usize {
        self.lu.U().nrows()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = to_faer(b);
        self.lu.solve_in_place(x.as_mut());
        from_faer(x.as_ref())
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        DVector::from_fn(b.len(), |i, _| x[(i, 0)])
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// Spectral norm estimate by power iteration on `A^T A`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    // deterministic start vector with no special structure
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64) * 0.7548776662).fract());
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..300 {
        let w = a * &v;
        let z = a.transpose() * &w;
        let zn = z.norm();
        if zn == 0.0 {
            return 0.0;
        }
        let next = w.norm();
        v = z / zn;
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / |b|` in the Euclidean norm (`|a - b|` when `b = 0`).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = norm2(b);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Rows `rows` and columns `cols` of `a`.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_matches_svd() {
        for (m, n, seed) in [(7, 5, 1u64), (20, 30, 2), (1, 4, 3), (40, 40, 4)] {
            let a = DMatrix::from_fn(m, n, |i, j| (((i * 31 + j * 17) as u64 * seed) % 97) as f64 / 97.0 - 0.4);
            let exact = a.clone().svd(false, false).singular_values.max();
            assert!((spectral_norm(&a) - exact).abs() <= 1e-6 * exact, "{m}x{n}");
        }
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 2)), 0.0);
        assert_eq!(spectral_norm(&DMatrix::zeros(0, 2)), 0.0);
    }

    #[test]
    fn lu_solves_and_rejects_singular() {
        let a = DMatrix::from_fn(30, 30, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + 2 * j) as f64) });
        let lu = Lu::new(&a).unwrap();
        let x = DVector::from_fn(30, |i, _| (i as f64).sin());
        assert!((lu.solve_vec(&(&a * &x)) - &x).norm() < 1e-12);
        assert!((&a * lu.inverse() - DMatrix::identity(30, 30)).norm() < 1e-12);
        let mut s = a.clone();
        s.row_mut(3).fill(0.0);
        assert!(Lu::new(&s).is_none());
        assert!(Lu::new(&DMatrix::zeros(2, 3)).is_none());
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[0.0, 1.0], &[0.0, 2.0]) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(&[3.0, 4.0], &[0.0, 0.0]), 5.0);
    }
}
