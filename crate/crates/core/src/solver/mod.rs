//! Telescoping compressed factorization `A ~ D + L (D_hat + S) R`, applied
//! recursively over tree levels, with the matching direct solve and forward
//! apply.
//!
//! All index sets live in the tree's renumbered ordering. [`FastSolver`]
//! wraps a factor and permutes vectors to and from the original ordering.

mod multi;
mod single;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{block_matrix, OperatorSpec};
use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::linalg::Lu;
use crate::skeletonization::{skeletonize_level, Cluster, ClusterDiagnostics, SkelParams};
use crate::tree::{build_tree, ClusterTree};

pub use multi::{apply_multilevel, compress_multilevel, solve_multilevel, MultiLevelFactor};
pub use single::{compress_single_level, solve_single_level, SingleLevelFactor};

/// One skeletonized cluster of one level.
#[derive(Debug, Clone)]
pub struct LevelBlock {
    /// Active row (target) and column (source) indices, in block order.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Diagonal block of the level matrix and its LU factors.
    pub d: DMatrix<f64>,
    d_lu: Lu,
    /// `n x k` target interpolation matrix.
    pub l: DMatrix<f64>,
    /// `k x n` source interpolation matrix.
    pub r: DMatrix<f64>,
    pub row_skeleton: Vec<usize>,
    pub col_skeleton: Vec<usize>,
    /// `(R D^{-1} L)^{-1}`, mapping column skeleton to row skeleton.
    pub d_hat: DMatrix<f64>,
}

impl LevelBlock {
    pub fn rank(&self) -> usize {
        self.row_skeleton.len()
    }

    fn solve_d(&self, b: &DVector<f64>) -> DVector<f64> {
        self.d_lu.solve_vec(b)
    }

    fn memory(&self) -> usize {
        8 * (2 * self.d.len() + self.l.len() + self.r.len() + self.d_hat.len())
    }
}

#[derive(Debug, Clone)]
pub struct LevelFactor {
    pub blocks: Vec<LevelBlock>,
    pub diagnostics: Vec<ClusterDiagnostics>,
    pub proxy_count: usize,
}

/// Multilevel factor: skeletonized levels plus a dense root.
#[derive(Debug, Clone)]
pub struct Factor {
    pub n: usize,
    pub levels: Vec<LevelFactor>,
    pub root_rows: Vec<usize>,
    pub root_cols: Vec<usize>,
    pub root: DMatrix<f64>,
    root_lu: Lu,
}

fn gather(v: &[f64], idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn scatter(v: &mut [f64], idx: &[usize], x: &DVector<f64>) {
    for (&i, &xi) in idx.iter().zip(x.iter()) {
        v[i] = xi;
    }
}

/// Diagonal block of the level matrix for a cluster formed from `children`
/// of the previous level: `D_hat` of each child on its own block, original
/// entries between siblings.
fn merged_block(spec: &OperatorSpec, disc: &Discretization, children: &[&LevelBlock]) -> (Vec<usize>, Vec<usize>, DMatrix<f64>) {
    let rows: Vec<usize> = children.iter().flat_map(|c| c.row_skeleton.iter().copied()).collect();
    let cols: Vec<usize> = children.iter().flat_map(|c| c.col_skeleton.iter().copied()).collect();
    let mut d = DMatrix::zeros(rows.len(), cols.len());
    let mut off = 0;
    for (a, ca) in children.iter().enumerate() {
        let mut coff = 0;
        for (b, cb) in children.iter().enumerate() {
            let ka = ca.rank();
            let kb = cb.rank();
            let blk = if a == b { ca.d_hat.clone() } else { block_matrix(spec, disc, &ca.row_skeleton, &cb.col_skeleton) };
            d.view_mut((off, coff), (ka, kb)).copy_from(&blk);
            coff += kb;
        }
        off += ca.rank();
    }
    (rows, cols, d)
}

fn factor_block(level: usize, block: usize, d: DMatrix<f64>, rows: Vec<usize>, cols: Vec<usize>, sk: crate::skeletonization::SkeletonizedCluster) -> Result<LevelBlock> {
    let singular = || Error::SingularBlock { level, block };
    let d_lu = Lu::new(&d).ok_or_else(singular)?;
    let l = sk.target.interp;
    let r = sk.source.interp;
    let m = &r * d_lu.solve(&l);
    let d_hat = Lu::new(&m).ok_or_else(singular)?.inverse();
    if d_hat.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(LevelBlock {
        rows,
        cols,
        d,
        d_lu,
        l,
        r,
        row_skeleton: sk.target.skeleton,
        col_skeleton: sk.source.skeleton,
        d_hat,
    })
}

/// One cluster per nonempty leaf, rows and columns alike.
pub fn leaf_clusters(tree: &ClusterTree) -> Vec<Cluster> {
    tree.leaves()
        .iter()
        .map(|&b| {
            let v: Vec<usize> = tree.boxes[b].nodes.clone().collect();
            Cluster { rows: v.clone(), cols: v }
        })
        .collect()
}

/// Compress with an explicit level plan: `parents[l][i]` is the position of
/// level-`l` cluster `i` among the level-`l+1` clusters. After the last
/// planned level exactly one cluster must remain; it becomes the dense root.
pub(crate) fn compress_plan(
    spec: &OperatorSpec,
    disc: &Discretization,
    tree: &ClusterTree,
    level0: Vec<Cluster>,
    parents: &[Vec<usize>],
    params: &SkelParams,
) -> Result<Factor> {
    spec.validate(disc)?;
    params.validate()?;
    if disc.len() != tree.len() {
        return Err(Error::Dimension { expected: tree.len(), got: disc.len() });
    }
    let mut levels: Vec<LevelFactor> = Vec::new();
    let mut clusters = level0;
    // diagonal blocks of the current level
    let mut diag: Vec<DMatrix<f64>> = clusters.iter().map(|c| block_matrix(spec, disc, &c.rows, &c.cols)).collect();
    for (lvl, parent) in parents.iter().enumerate() {
        if parent.len() != clusters.len() {
            return Err(Error::InvalidParameter(format!("level {lvl}: parent map has wrong length")));
        }
        let skel = skeletonize_level(spec, disc, tree, &clusters, params)?;
        let diagnostics: Vec<ClusterDiagnostics> = skel.clusters.iter().map(|c| c.diagnostics).collect();
        let blocks: Result<Vec<LevelBlock>> = skel
            .clusters
            .into_par_iter()
            .zip(std::mem::take(&mut diag))
            .zip(std::mem::take(&mut clusters))
            .enumerate()
            .map(|(i, ((sk, d), cl))| factor_block(lvl, i, d, cl.rows, cl.cols, sk))
            .collect();
        let blocks = blocks?;
        let n_next = parent.iter().copied().max().map_or(0, |m| m + 1);
        let mut groups: Vec<Vec<&LevelBlock>> = vec![Vec::new(); n_next];
        for (b, &p) in blocks.iter().zip(parent) {
            groups[p].push(b);
        }
        let merged: Vec<(Vec<usize>, Vec<usize>, DMatrix<f64>)> =
            groups.par_iter().map(|g| merged_block(spec, disc, g)).collect();
        for (rows, cols, d) in merged {
            clusters.push(Cluster { rows, cols });
            diag.push(d);
        }
        levels.push(LevelFactor { blocks, diagnostics, proxy_count: skel.proxy_count });
    }
    if clusters.len() != 1 {
        return Err(Error::InvalidParameter(format!("level plan leaves {} clusters at the root", clusters.len())));
    }
    let root_cl = clusters.pop().unwrap();
    let root = diag.pop().unwrap();
    let root_lu = Lu::new(&root).ok_or(Error::SingularReduced)?;
    Ok(Factor { n: disc.len(), levels, root_rows: root_cl.rows, root_cols: root_cl.cols, root, root_lu })
}

impl Factor {
    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Solve `A x = b` (renumbered ordering).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b)?;
        let mut rhs = b.to_vec();
        // upward: keep D^{-1} b and b_hat per block
        let mut hats: Vec<Vec<DVector<f64>>> = Vec::with_capacity(self.levels.len());
        let mut saved: Vec<Vec<DVector<f64>>> = Vec::with_capacity(self.levels.len());
        for lvl in &self.levels {
            let (bs, bh): (Vec<DVector<f64>>, Vec<DVector<f64>>) = lvl
                .blocks
                .par_iter()
                .map(|blk| {
                    let bi = gather(&rhs, &blk.rows);
                    let y = blk.solve_d(&bi);
                    let bhat = &blk.d_hat * (&blk.r * y);
                    (bi, bhat)
                })
                .unzip();
            for (blk, bh) in lvl.blocks.iter().zip(&bh) {
                scatter(&mut rhs, &blk.row_skeleton, bh);
            }
            saved.push(bs);
            hats.push(bh);
        }
        let root_rhs = gather(&rhs, &self.root_rows);
        let xr = self.root_lu.solve_vec(&root_rhs);
        let mut x = vec![0.0; self.n];
        scatter(&mut x, &self.root_cols, &xr);
        // downward: x = D^{-1}(b - L b_hat + L D_hat x_hat)
        for (li, lvl) in self.levels.iter().enumerate().rev() {
            let parts: Vec<DVector<f64>> = lvl
                .blocks
                .par_iter()
                .enumerate()
                .map(|(i, blk)| {
                    let xhat = gather(&x, &blk.col_skeleton);
                    let corr = &blk.d_hat * xhat - &hats[li][i];
                    blk.solve_d(&(&saved[li][i] + &blk.l * corr))
                })
                .collect();
            for (blk, xi) in lvl.blocks.iter().zip(&parts) {
                scatter(&mut x, &blk.cols, xi);
            }
        }
        Ok(x)
    }

    /// Compressed forward product `A v` (renumbered ordering).
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(self.apply_from(0, v))
    }

    fn apply_from(&self, level: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        if level == self.levels.len() {
            let y = &self.root * gather(v, &self.root_cols);
            scatter(&mut out, &self.root_rows, &y);
            return out;
        }
        let lvl = &self.levels[level];
        let mut u = vec![0.0; self.n];
        let us: Vec<DVector<f64>> = lvl.blocks.par_iter().map(|blk| &blk.r * gather(v, &blk.cols)).collect();
        for (blk, ui) in lvl.blocks.iter().zip(&us) {
            scatter(&mut u, &blk.col_skeleton, ui);
        }
        let w = self.apply_from(level + 1, &u);
        let parts: Vec<DVector<f64>> = lvl
            .blocks
            .par_iter()
            .zip(&us)
            .map(|(blk, ui)| &blk.d * gather(v, &blk.cols) + &blk.l * (gather(&w, &blk.row_skeleton) - &blk.d_hat * ui))
            .collect();
        for (blk, p) in lvl.blocks.iter().zip(&parts) {
            scatter(&mut out, &blk.rows, p);
        }
        out
    }

    pub fn stats(&self) -> Vec<LevelStats> {
        let mut out: Vec<LevelStats> = self
            .levels
            .iter()
            .enumerate()
            .map(|(l, lvl)| {
                let ranks: Vec<usize> = lvl.blocks.iter().map(|b| b.rank()).collect();
                let sizes: Vec<usize> = lvl.blocks.iter().map(|b| b.rows.len()).collect();
                LevelStats {
                    level: l,
                    clusters: ranks.len(),
                    mean_size: sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64,
                    max_size: sizes.iter().copied().max().unwrap_or(0),
                    mean_rank: ranks.iter().sum::<usize>() as f64 / ranks.len().max(1) as f64,
                    max_rank: ranks.iter().copied().max().unwrap_or(0),
                    proxy_count: lvl.proxy_count,
                    memory_bytes: lvl.blocks.iter().map(|b| b.memory()).sum(),
                }
            })
            .collect();
        let nr = self.root_rows.len();
        out.push(LevelStats {
            level: self.levels.len(),
            clusters: 1,
            mean_size: nr as f64,
            max_size: nr,
            mean_rank: nr as f64,
            max_rank: nr,
            proxy_count: 0,
            memory_bytes: 16 * self.root.len(),
        });
        out
    }

    pub fn memory_bytes(&self) -> usize {
        self.stats().iter().map(|s| s.memory_bytes).sum()
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &ClusterDiagnostics> {
        self.levels.iter().flat_map(|l| l.diagnostics.iter())
    }
}

/// Per-level factor statistics. The last entry is the dense root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub clusters: usize,
    pub mean_size: f64,
    pub max_size: usize,
    pub mean_rank: f64,
    pub max_rank: usize,
    pub proxy_count: usize,
    pub memory_bytes: usize,
}

pub fn write_stats_csv<W: Write>(out: W, stats: &[LevelStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "clusters", "mean_size", "max_size", "mean_rank", "max_rank", "proxy_count", "memory_bytes"])?;
    for s in stats {
        w.write_record(&[
            s.level.to_string(),
            s.clusters.to_string(),
            format!("{:.2}", s.mean_size),
            s.max_size.to_string(),
            format!("{:.2}", s.mean_rank),
            s.max_rank.to_string(),
            s.proxy_count.to_string(),
            s.memory_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Which factorization [`FastSolver`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Levels {
    Single,
    Multi,
}

/// Tree, renumbered discretization and factor, taking and returning vectors
/// in the caller's node ordering.
#[derive(Debug, Clone)]
pub struct FastSolver {
    pub spec: OperatorSpec,
    pub tree: ClusterTree,
    /// Discretization in the tree's ordering.
    pub disc: Discretization,
    pub factor: Factor,
}

impl FastSolver {
    pub fn new(spec: &OperatorSpec, disc: &Discretization, leaf_panels: usize, params: &SkelParams, levels: Levels) -> Result<Self> {
        spec.validate(disc)?;
        let tree = build_tree(disc, leaf_panels)?;
        let disc = disc.renumbered(&tree.perm, &tree.panel_order);
        let factor = match levels {
            Levels::Single => compress_single_level(spec, &disc, &tree, params)?.factor,
            Levels::Multi => compress_multilevel(spec, &disc, &tree, params)?,
        };
        Ok(FastSolver { spec: *spec, tree, disc, factor })
    }

    fn to_tree_order(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.tree.len() {
            return Err(Error::Dimension { expected: self.tree.len(), got: v.len() });
        }
        Ok(self.tree.perm.iter().map(|&o| v[o]).collect())
    }

    fn from_tree_order(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &o) in self.tree.perm.iter().enumerate() {
            out[o] = v[i];
        }
        out
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.factor.solve(&self.to_tree_order(b)?)?;
        Ok(self.from_tree_order(&x))
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let y = self.factor.apply(&self.to_tree_order(v)?)?;
        Ok(self.from_tree_order(&y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_dense, matvec};
    use crate::geometry::{build_circle, build_starfish, build_torus, Dim, Side};
    use crate::linalg::{relative_error, spectral_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn starfish(panels: usize, q: usize, cap: usize) -> (OperatorSpec, Discretization, ClusterTree) {
        let raw = build_starfish(0.25, 5, panels, q).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let tree = build_tree(&raw, cap).unwrap();
        let disc = raw.renumbered(&tree.perm, &tree.panel_order);
        (OperatorSpec::interior_double_layer(Dim::Two, 6), disc, tree)
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn single_level_reconstruction_exact_at_tight_tolerance() {
        let (spec, disc, tree) = starfish(48, 8, 4);
        assert!(disc.len() <= 400);
        let a = assemble_dense(&spec, &disc).unwrap();
        let f = compress_single_level(&spec, &disc, &tree, &SkelParams::new(1.5, 40, 1e-15)).unwrap();
        let err = spectral_norm(&(&a - f.reconstruct())) / spectral_norm(&a);
        assert!(err <= 1e-10, "{err}");
        // S has zero diagonal blocks
        let s = f.skeleton_matrix();
        let mut off = 0;
        for blk in &f.factor.levels[0].blocks {
            let k = blk.rank();
            assert!(s.view((off, off), (k, k)).iter().all(|&v| v == 0.0));
            off += k;
        }
        // the forward apply agrees with the explicit reconstruction
        let v = random(disc.len(), 3);
        let y1 = f.factor.apply(&v).unwrap();
        let y2 = matvec(&f.reconstruct(), &v);
        assert!(relative_error(&y1, &y2) < 1e-13);
    }

    #[test]
    fn single_level_solve_matches_dense() {
        let (spec, disc, tree) = starfish(48, 8, 4);
        let a = assemble_dense(&spec, &disc).unwrap();
        let f = compress_single_level(&spec, &disc, &tree, &SkelParams::new(1.5, 40, 1e-15)).unwrap();
        let b = random(disc.len(), 5);
        let want = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let got = solve_single_level(&f, &b).unwrap();
        assert!(relative_error(&got, want.as_slice()) < 1e-8);
        // b = A e_j gives back e_j
        let j = 17;
        let col: Vec<f64> = a.column(j).iter().copied().collect();
        let x = solve_single_level(&f, &col).unwrap();
        let mut e = vec![0.0; disc.len()];
        e[j] = 1.0;
        assert!(relative_error(&x, &e) < 1e-8);
        assert!(solve_single_level(&f, &vec![0.0; disc.len()]).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(solve_single_level(&f, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn one_cluster_rejected() {
        let raw = build_circle(1.0, 8, 4).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let tree = build_tree(&raw, 100).unwrap();
        let disc = raw.renumbered(&tree.perm, &tree.panel_order);
        let spec = OperatorSpec::interior_double_layer(Dim::Two, 4);
        let p = SkelParams::new(1.5, 20, 1e-8);
        assert!(compress_single_level(&spec, &disc, &tree, &p).is_err());
        assert!(compress_multilevel(&spec, &disc, &tree, &p).is_err());
    }

    #[test]
    fn multilevel_matches_dense_lu() {
        let (spec, disc, tree) = starfish(96, 8, 2);
        assert!(disc.len() <= 1000 && tree.num_levels() >= 4);
        let a = assemble_dense(&spec, &disc).unwrap();
        let f = compress_multilevel(&spec, &disc, &tree, &SkelParams::new(1.5, 40, 1e-15)).unwrap();
        assert_eq!(f.levels.len(), tree.num_levels() - 1);
        let b = random(disc.len(), 9);
        let want = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let got = solve_multilevel(&f, &b).unwrap();
        assert!(relative_error(&got, want.as_slice()) < 1e-7, "{}", relative_error(&got, want.as_slice()));
        let v = random(disc.len(), 10);
        let y = apply_multilevel(&f, &v).unwrap();
        assert!(relative_error(&y, &matvec(&a, &v)) < 1e-12);
        // round trip
        let back = solve_multilevel(&f, &y).unwrap();
        assert!(relative_error(&back, &v) < 1e-10);
    }

    #[test]
    fn forward_error_tracks_tolerance() {
        let (spec, disc, tree) = starfish(96, 8, 2);
        let a = assemble_dense(&spec, &disc).unwrap();
        let v = random(disc.len(), 11);
        let exact = matvec(&a, &v);
        for tol in [1e-4, 1e-8, 1e-12] {
            let f = compress_multilevel(&spec, &disc, &tree, &SkelParams::new(1.5, 40, tol)).unwrap();
            let err = relative_error(&apply_multilevel(&f, &v).unwrap(), &exact);
            assert!(err <= 100.0 * tol, "tol={tol} err={err}");
        }
    }

    #[test]
    fn two_level_tree_equals_single_level() {
        let raw = build_circle(1.0, 16, 6).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let tree = build_tree(&raw, 4).unwrap();
        assert_eq!(tree.num_levels(), 2);
        let disc = raw.renumbered(&tree.perm, &tree.panel_order);
        let spec = OperatorSpec::interior_double_layer(Dim::Two, 4);
        let p = SkelParams::new(1.5, 30, 1e-10);
        let s = compress_single_level(&spec, &disc, &tree, &p).unwrap();
        let m = compress_multilevel(&spec, &disc, &tree, &p).unwrap();
        assert_eq!(s.factor.root, m.root);
        let b = random(disc.len(), 1);
        assert_eq!(s.factor.solve(&b).unwrap(), m.solve(&b).unwrap());
    }

    #[test]
    fn torus_multilevel_and_original_ordering() {
        let raw = build_torus(10.0, 2.0, 24, 6, 3).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let spec = OperatorSpec::interior_double_layer(Dim::Three, 3);
        let p = SkelParams::new(1.5, 100, 1e-10);
        let solver = FastSolver::new(&spec, &raw, 6, &p, Levels::Multi).unwrap();
        let a = assemble_dense(&spec, &raw).unwrap();
        let v = random(raw.len(), 4);
        let b = matvec(&a, &v);
        assert!(relative_error(&solver.apply(&v).unwrap(), &b) < 1e-8);
        assert!(relative_error(&solver.solve(&b).unwrap(), &v) < 1e-7);
        let stats = solver.factor.stats();
        assert_eq!(stats.len(), solver.factor.levels.len() + 1);
        let mut csv_out = Vec::new();
        write_stats_csv(&mut csv_out, &stats).unwrap();
        assert_eq!(String::from_utf8(csv_out).unwrap().lines().count(), stats.len() + 1);
    }
}
