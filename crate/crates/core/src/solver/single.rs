use nalgebra::DMatrix;

use super::{compress_plan, leaf_clusters, Factor};
use crate::assembly::OperatorSpec;
use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::skeletonization::SkelParams;
use crate::tree::ClusterTree;

/// One skeletonized level over the tree leaves; the root is the dense
/// reduced matrix `D_hat + S`.
#[derive(Debug, Clone)]
pub struct SingleLevelFactor {
    pub factor: Factor,
}

impl SingleLevelFactor {
    /// Block-diagonal `D_hat` in root ordering.
    pub fn d_hat(&self) -> DMatrix<f64> {
        let k = self.factor.root.nrows();
        let mut d = DMatrix::zeros(k, k);
        let mut off = 0;
        for blk in &self.factor.levels[0].blocks {
            let r = blk.rank();
            d.view_mut((off, off), (r, r)).copy_from(&blk.d_hat);
            off += r;
        }
        d
    }

    /// Skeleton matrix `S`: original entries between skeletons of different
    /// clusters, zero diagonal blocks.
    pub fn skeleton_matrix(&self) -> DMatrix<f64> {
        &self.factor.root - self.d_hat()
    }

    /// Dense `D + L S R` in tree ordering.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.factor.n;
        let blocks = &self.factor.levels[0].blocks;
        let mut big_l = DMatrix::zeros(n, self.factor.root.nrows());
        let mut big_r = DMatrix::zeros(self.factor.root.ncols(), n);
        let mut a = DMatrix::zeros(n, n);
        let mut off = 0;
        for blk in blocks {
            for (i, &gi) in blk.rows.iter().enumerate() {
                for (j, &gj) in blk.cols.iter().enumerate() {
                    a[(gi, gj)] = blk.d[(i, j)];
                }
                for t in 0..blk.rank() {
                    big_l[(gi, off + t)] = blk.l[(i, t)];
                }
            }
            for (j, &gj) in blk.cols.iter().enumerate() {
                for t in 0..blk.rank() {
                    big_r[(off + t, gj)] = blk.r[(t, j)];
                }
            }
            off += blk.rank();
        }
        a + big_l * self.skeleton_matrix() * big_r
    }
}

pub fn compress_single_level(spec: &OperatorSpec, disc: &Discretization, tree: &ClusterTree, params: &SkelParams) -> Result<SingleLevelFactor> {
    let leaves = tree.leaves();
    if leaves.len() < 2 {
        return Err(Error::InvalidParameter("compression needs at least two clusters".into()));
    }
    let level0 = leaf_clusters(tree);
    let parents = vec![vec![0; leaves.len()]];
    Ok(SingleLevelFactor { factor: compress_plan(spec, disc, tree, level0, &parents, params)? })
}

pub fn solve_single_level(factor: &SingleLevelFactor, b: &[f64]) -> Result<Vec<f64>> {
    factor.factor.solve(b)
}
