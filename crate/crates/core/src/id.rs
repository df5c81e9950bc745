//! Interpolative decomposition by column-pivoted Householder QR.

use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Mat, Par};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{from_faer, to_faer};

/// Stopping rule for the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdMode {
    /// Stop once the next pivot norm is at most `tol` times the first.
    Tolerance(f64),
    /// Fixed rank; ranks beyond the numerical rank are padded with further
    /// pivot columns carrying zero coefficients.
    Rank(usize),
}

#[derive(Debug, Clone)]
pub struct IdResult {
    /// Skeleton positions, ascending.
    pub skeleton: Vec<usize>,
    /// `k x n` for columns (`M ~ M[:, J] * interp`), `m x k` for rows
    /// (`M ~ interp * M[J, :]`). Identity on the skeleton.
    pub interp: DMatrix<f64>,
    pub rank: usize,
    /// Norm of the first rejected pivot column (0 when none is left).
    pub residual: f64,
}

/// Column ID: `M ~ M[:, skeleton] * interp`.
pub fn id_columns(m: &DMatrix<f64>, mode: IdMode) -> Result<IdResult> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if let IdMode::Tolerance(t) = mode {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("ID tolerance must be nonnegative, got {t}")));
        }
    }
    let (rows, n) = m.shape();
    let kmax = rows.min(n);
    let want = match mode {
        IdMode::Rank(r) => r.min(n),
        IdMode::Tolerance(_) => n,
    };
    // blocked QR with column pivoting: M P = Q R
    let (mut perm, mut r_fac): (Vec<usize>, Mat<f64>) = if kmax == 0 {
        ((0..n).collect(), Mat::zeros(0, n))
    } else {
        let qr = to_faer(m).col_piv_qr();
        (qr.P().arrays().0.to_vec(), qr.thin_R().to_owned())
    };
    let r00 = if kmax > 0 { r_fac[(0, 0)].abs() } else { 0.0 };
    let thresh = match mode {
        IdMode::Tolerance(t) => t * r00,
        IdMode::Rank(_) => 1e-15 * r00,
    };
    let mut k = 0;
    loop {
        while k < kmax && k < want {
            let d = r_fac[(k, k)].abs();
            if d == 0.0 || (k > 0 && d <= thresh) {
                break;
            }
            k += 1;
        }
        if k >= kmax || k >= want {
            break;
        }
        // The blocked factorization downdates pivot norms, which can go
        // stale near roundoff and cut the rank too early. Refactor the
        // trailing block whenever one of its columns is still too large.
        let trail = r_fac.get(k..kmax, k..n).to_owned();
        let big = k > 0 && (0..n - k).any(|j| trail.col(j).norm_l2() > thresh);
        if !big {
            break;
        }
        let qr = trail.col_piv_qr();
        let p2 = qr.P().arrays().0.to_vec();
        let r22 = qr.thin_R();
        let top = r_fac.get(..k, k..n).to_owned();
        let old = perm[k..].to_vec();
        for (j, &src) in p2.iter().enumerate() {
            perm[k + j] = old[src];
            for i in 0..k {
                r_fac[(i, k + j)] = top[(i, src)];
            }
            for i in 0..kmax - k {
                r_fac[(k + i, k + j)] = r22[(i, j)];
            }
        }
        if r_fac[(k, k)].abs() <= thresh {
            break;
        }
    }
    let diag = |k: usize| r_fac[(k, k)].abs();
    let residual = if k < kmax { diag(k) } else { 0.0 };
    let k_qr = k;
    let rank = match mode {
        IdMode::Tolerance(_) => k_qr,
        IdMode::Rank(_) => want,
    };
    // T = R11^{-1} R12
    let mut t_f = r_fac.get(..k_qr, k_qr..).to_owned();
    solve_upper_triangular_in_place(r_fac.get(..k_qr, ..k_qr), t_f.as_mut(), Par::Seq);
    let t = from_faer(t_f.as_ref());
    // rows of [I T] in pivot order, padded with identity rows
    let mut interp_p = DMatrix::<f64>::zeros(rank, n);
    for i in 0..rank {
        interp_p[(i, perm[i])] = 1.0;
    }
    for i in 0..k_qr {
        for j in rank..n {
            interp_p[(i, perm[j])] = t[(i, j - k_qr)];
        }
    }
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by_key(|&i| perm[i]);
    let skeleton: Vec<usize> = order.iter().map(|&i| perm[i]).collect();
    let interp = DMatrix::from_fn(rank, n, |i, j| interp_p[(order[i], j)]);
    Ok(IdResult { skeleton, interp, rank, residual })
}

/// Row ID: `M ~ interp * M[skeleton, :]`, computed on the transpose.
pub fn id_rows(m: &DMatrix<f64>, mode: IdMode) -> Result<IdResult> {
    let r = id_columns(&m.transpose(), mode)?;
    Ok(IdResult { interp: r.interp.transpose(), ..r })
}
