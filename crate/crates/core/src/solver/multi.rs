use super::{compress_plan, leaf_clusters, Factor};
use crate::assembly::OperatorSpec;
use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::skeletonization::SkelParams;
use crate::tree::ClusterTree;

pub type MultiLevelFactor = Factor;

/// Skeletonize levels `0..num_levels - 1` following the tree; the root box
/// is factored densely.
pub fn compress_multilevel(spec: &OperatorSpec, disc: &Discretization, tree: &ClusterTree, params: &SkelParams) -> Result<MultiLevelFactor> {
    let nl = tree.num_levels();
    if nl < 2 || tree.leaves().len() < 2 {
        return Err(Error::InvalidParameter("compression needs at least two clusters".into()));
    }
    let level0 = leaf_clusters(tree);
    let parents: Result<Vec<Vec<usize>>> = (0..nl - 1).map(|l| tree.parent_positions(l)).collect();
    compress_plan(spec, disc, tree, level0, &parents?, params)
}

pub fn solve_multilevel(factor: &MultiLevelFactor, b: &[f64]) -> Result<Vec<f64>> {
    factor.solve(b)
}

pub fn apply_multilevel(factor: &MultiLevelFactor, sigma: &[f64]) -> Result<Vec<f64>> {
    factor.apply(sigma)
}
