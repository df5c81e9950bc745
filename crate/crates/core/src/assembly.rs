//! QBX-mediated system matrix blocks `A(X_i, Y_j) = K(X_i, Y_j) W(Y_j)` plus
//! the identity term, and a reference dense matrix-vector product.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Dim, Discretization, Side};
use crate::kernels::{dlp_unchecked, green_unchecked, qbx_entry, KernelKind, Layer};
use crate::point::{self, Point};

/// Integral operator `a I + K` realized through QBX.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: KernelKind,
    /// Identity coefficient `a` multiplying the density.
    pub identity: f64,
    pub p_qbx: usize,
    pub side: Side,
    /// Use the plain kernel when the source is farther than `5 r` from the
    /// target's expansion center.
    pub plain_far: bool,
    /// Average the expansions from both sides of the surface, giving the
    /// principal-value operator; the identity term is then added as is.
    pub two_sided: bool,
}

/// Distance (in expansion radii) beyond which `plain_far` switches to the
/// plain kernel.
pub const PLAIN_FAR_FACTOR: f64 = 5.0;

impl OperatorSpec {
    /// `-1/2 I + D` with interior centers: interior Dirichlet problem.
    pub fn interior_double_layer(dim: Dim, p_qbx: usize) -> Self {
        OperatorSpec {
            kind: KernelKind::new(dim, Layer::Double),
            identity: -0.5,
            p_qbx,
            side: Side::Interior,
            plain_far: false,
            two_sided: true,
        }
    }

    /// First-kind single-layer operator `S`.
    pub fn single_layer(dim: Dim, p_qbx: usize) -> Self {
        OperatorSpec {
            kind: KernelKind::new(dim, Layer::Single),
            identity: 0.0,
            p_qbx,
            side: Side::Interior,
            plain_far: false,
            two_sided: false,
        }
    }

    pub fn validate(&self, disc: &Discretization) -> Result<()> {
        if self.kind.dim != disc.dim {
            return Err(Error::InvalidParameter("operator and discretization dimensions differ".into()));
        }
        if !disc.has_qbx() {
            return Err(Error::InvalidParameter("discretization has no QBX centers".into()));
        }
        if disc.side != Some(self.side) {
            return Err(Error::InvalidParameter("QBX centers sit on the wrong side for this operator".into()));
        }
        if self.p_qbx > crate::kernels::MAX_DEGREE {
            return Err(Error::InvalidParameter(format!("p_qbx {} too large", self.p_qbx)));
        }
        if self.kind.layer == Layer::Single && self.identity != 0.0 {
            return Err(Error::InvalidParameter("single-layer presets are first kind (a = 0)".into()));
        }
        Ok(())
    }

    /// One-sided jump of the kernel's layer potential on the centers' side.
    fn jump(&self) -> f64 {
        match (self.kind.layer, self.side) {
            (Layer::Single, _) => 0.0,
            (Layer::Double, Side::Interior) => -0.5,
            (Layer::Double, Side::Exterior) => 0.5,
        }
    }

    /// Value added on the diagonal: QBX yields the one-sided limit, the
    /// operator wants the principal value plus `a`.
    pub fn diagonal_shift(&self) -> f64 {
        if self.two_sided {
            self.identity
        } else {
            self.identity - self.jump()
        }
    }

    /// Matrix entry for global target `k` and source `l`.
    #[inline]
    pub fn entry(&self, disc: &Discretization, k: usize, l: usize) -> f64 {
        let v = disc.weights[l] * self.kernel_at(disc, k, &disc.nodes[l], &disc.normals[l]);
        if k == l {
            v + self.diagonal_shift()
        } else {
            v
        }
    }

    /// QBX-mediated kernel from a source point `y` (normal `n_y`) seen by
    /// global target `k`, without weight.
    #[inline]
    pub fn kernel_at(&self, disc: &Discretization, k: usize, y: &Point, n_y: &Point) -> f64 {
        let c = &disc.qbx_centers[k];
        if self.plain_far && point::dist(c, y) > PLAIN_FAR_FACTOR * disc.qbx_radii[k] {
            return self.plain(&disc.nodes[k], y, n_y);
        }
        let x = &disc.nodes[k];
        if self.two_sided {
            let c2 = disc.mirrored_center(k);
            0.5 * (qbx_entry(self.kind, x, c, y, n_y, self.p_qbx) + qbx_entry(self.kind, x, &c2, y, n_y, self.p_qbx))
        } else {
            qbx_entry(self.kind, x, c, y, n_y, self.p_qbx)
        }
    }

    /// Plain kernel for well-separated pairs.
    #[inline]
    pub fn plain(&self, x: &Point, y: &Point, n_y: &Point) -> f64 {
        match self.kind.layer {
            Layer::Single => green_unchecked(self.kind.dim, x, y),
            Layer::Double => dlp_unchecked(self.kind.dim, x, y, n_y),
        }
    }
}

/// Dense block of the system matrix with its index tuples.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub entries: DMatrix<f64>,
}

/// Assemble `A(rows, cols)` as a matrix.
pub fn block_matrix(spec: &OperatorSpec, disc: &Discretization, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let m = rows.len();
    let mut a = DMatrix::zeros(m, cols.len());
    if m == 0 {
        return a;
    }
    a.as_mut_slice()
        .par_chunks_mut(m)
        .zip(cols.par_iter())
        .for_each(|(col, &l)| {
            for (v, &k) in col.iter_mut().zip(rows) {
                *v = spec.entry(disc, k, l);
            }
        });
    a
}

/// Assemble one block, validating the tuples.
pub fn assemble_block(spec: &OperatorSpec, disc: &Discretization, rows: &[usize], cols: &[usize]) -> Result<DenseBlock> {
    spec.validate(disc)?;
    let n = disc.len();
    if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("index {bad} out of range for {n} nodes")));
    }
    let entries = block_matrix(spec, disc, rows, cols);
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(DenseBlock { rows: rows.to_vec(), cols: cols.to_vec(), entries })
}

/// The full `n x n` matrix.
pub fn assemble_dense(spec: &OperatorSpec, disc: &Discretization) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..disc.len()).collect();
    Ok(assemble_block(spec, disc, &all, &all)?.entries)
}

/// `b = A sigma` evaluated row by row without storing the matrix.
pub fn apply_dense(spec: &OperatorSpec, disc: &Discretization, sigma: &[f64]) -> Result<Vec<f64>> {
    spec.validate(disc)?;
    if sigma.len() != disc.len() {
        return Err(Error::Dimension { expected: disc.len(), got: sigma.len() });
    }
    let b: Vec<f64> = (0..disc.len())
        .into_par_iter()
        .map(|k| sigma.iter().enumerate().map(|(l, s)| spec.entry(disc, k, l) * s).sum())
        .collect();
    if b.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(b)
}

/// Layer potential `sum_l K(x, y_l) w_l sigma_l` at off-surface targets by
/// the plain node quadrature; accurate for targets a few panel sizes away
/// from the surface.
pub fn evaluate_potential(spec: &OperatorSpec, disc: &Discretization, sigma: &[f64], targets: &[Point]) -> Result<Vec<f64>> {
    if sigma.len() != disc.len() {
        return Err(Error::Dimension { expected: disc.len(), got: sigma.len() });
    }
    if spec.kind.dim != disc.dim {
        return Err(Error::InvalidParameter("operator and discretization dimensions differ".into()));
    }
    let mut out = Vec::with_capacity(targets.len());
    for x in targets {
        if let Some(l) = disc.nodes.iter().position(|y| point::dist(x, y) == 0.0) {
            return Err(Error::InvalidParameter(format!("target coincides with node {l}")));
        }
        let u: f64 = (0..disc.len())
            .map(|l| spec.plain(x, &disc.nodes[l], &disc.normals[l]) * disc.weights[l] * sigma[l])
            .sum();
        out.push(u);
    }
    Ok(out)
}

/// Dense-oracle multiply for an already assembled matrix.
pub fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

const MATRIX_MAGIC: &[u8; 4] = b"SKQM";

/// Write a matrix as: magic `SKQM`, rows and cols as little-endian `u64`,
/// then row-major little-endian `f64` entries.
pub fn write_matrix_binary<W: Write>(mut out: W, a: &DMatrix<f64>) -> Result<()> {
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(a.nrows() as u64).to_le_bytes())?;
    out.write_all(&(a.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(a.ncols() * 8);
    for i in 0..a.nrows() {
        buf.clear();
        for j in 0..a.ncols() {
            buf.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Inverse of [`write_matrix_binary`].
pub fn read_matrix_binary<R: std::io::Read>(mut inp: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    inp.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::InvalidParameter("not a matrix file".into()));
    }
    let mut word = [0u8; 8];
    inp.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    inp.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut a = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            inp.read_exact(&mut word)?;
            a[(i, j)] = f64::from_le_bytes(word);
        }
    }
    Ok(a)
}
