//! Proxy-ball skeletonization of one tree level: near/far splitting and the
//! weighted proxy matrices whose interpolative decompositions give the
//! interpolation factors `L_i` (targets) and `R_j` (sources).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::assembly::{block_matrix, OperatorSpec};
use crate::error::{Error, Result};
use crate::error_model::{estimate_proxy_order, ModelConstants};
use crate::geometry::{Dim, Discretization};
use crate::id::{id_columns, id_rows, IdMode, IdResult};
use crate::kernels::{sphere_order_for_count, sphere_rule, KernelKind, Layer};
use crate::linalg::{frobenius, spectral_norm};
use crate::point::{self, Point};
use crate::tree::ClusterTree;

#[derive(Debug, Clone)]
pub struct ProxyBall {
    pub dim: Dim,
    pub center: Point,
    pub cluster_radius: f64,
    pub max_qbx_radius: f64,
    /// `alpha * (cluster_radius + max_qbx_radius)`.
    pub radius: f64,
    pub points: Vec<Point>,
    /// Quadrature weights of the proxy rule on the scaled sphere/circle.
    pub weights: Vec<f64>,
    /// Highest harmonic degree the proxy rule integrates exactly.
    pub exact_degree: usize,
}

impl ProxyBall {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Proxy ball from explicit geometry. In 3D the point count is the largest
/// product rule not exceeding `q`.
pub fn make_proxy_ball(dim: Dim, center: Point, cluster_radius: f64, max_qbx_radius: f64, alpha: f64, q: usize) -> Result<ProxyBall> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("proxy factor alpha must exceed 1, got {alpha}")));
    }
    if q == 0 {
        return Err(Error::InvalidParameter("proxy count must be positive".into()));
    }
    let mut radius = alpha * (cluster_radius + max_qbx_radius);
    if radius <= 0.0 {
        // a lone node: any positive radius encloses it
        radius = alpha * f64::EPSILON.sqrt();
    }
    let (unit, w, exact) = match dim {
        Dim::Two => {
            let pts: Vec<Point> = (0..q)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / q as f64;
                    [th.cos(), th.sin(), 0.0]
                })
                .collect();
            (pts, vec![2.0 * PI * radius / q as f64; q], q - 1)
        }
        Dim::Three => {
            let p = sphere_order_for_count(q).unwrap_or(0);
            let rule = sphere_rule(p);
            let w = rule.weights.iter().map(|w| w * radius * radius).collect();
            (rule.points, w, rule.exact_degree)
        }
    };
    let points = unit.iter().map(|u| point::add(&center, &point::scale(u, radius))).collect();
    Ok(ProxyBall { dim, center, cluster_radius, max_qbx_radius, radius, points, weights: w, exact_degree: exact })
}

/// Proxy ball around the active nodes of one cluster: centered at their
/// mean, enclosing them and their expansion centers.
pub fn make_proxy(disc: &Discretization, rows: &[usize], cols: &[usize], alpha: f64, q: usize) -> Result<ProxyBall> {
    if rows.is_empty() && cols.is_empty() {
        return Err(Error::InvalidParameter("empty cluster".into()));
    }
    let (center, r_cl, r_qbx) = cluster_geometry(disc, rows, cols);
    make_proxy_ball(disc.dim, center, r_cl, r_qbx, alpha, q)
}

fn cluster_geometry(disc: &Discretization, rows: &[usize], cols: &[usize]) -> (Point, f64, f64) {
    let mut all: Vec<usize> = rows.iter().chain(cols).copied().collect();
    all.sort_unstable();
    all.dedup();
    let center = point::mean_of(&disc.nodes, &all);
    let r_cl = all.iter().map(|&i| point::dist(&disc.nodes[i], &center)).fold(0.0, f64::max);
    let r_qbx = if disc.has_qbx() { rows.iter().map(|&i| disc.qbx_radii[i]).fold(0.0, f64::max) } else { 0.0 };
    (center, r_cl, r_qbx)
}

/// Indices (renumbered ordering) near and far from a proxy ball.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearFarSplit {
    pub near: Vec<usize>,
    pub far: Vec<usize>,
}

/// Near nodes lie within the proxy radius; `own` nodes belong to neither set.
pub fn split_near_far(tree: &ClusterTree, proxy: &ProxyBall, own: &[usize]) -> NearFarSplit {
    let mut is_own = vec![false; tree.len()];
    for &i in own {
        is_own[i] = true;
    }
    let mut is_near = vec![false; tree.len()];
    let near: Vec<usize> = tree.area_query(&proxy.center, proxy.radius).into_iter().filter(|&i| !is_own[i]).collect();
    for &i in &near {
        is_near[i] = true;
    }
    let far = (0..tree.len()).filter(|&i| !is_own[i] && !is_near[i]).collect();
    NearFarSplit { near, far }
}

/// Targets whose expansion balls (on either side) may reach into the proxy
/// ball: `|x - c| <= r_pxy + 2 r_x`, restricted by `keep`. `r_max` bounds
/// all expansion radii.
pub fn qbx_near_targets(tree: &ClusterTree, disc: &Discretization, proxy: &ProxyBall, r_max: f64, keep: &dyn Fn(usize) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    tree.query_nodes(&proxy.center, proxy.radius + 2.0 * r_max, &mut |i| {
        if keep(i) && point::dist(&disc.nodes[i], &proxy.center) <= proxy.radius + 2.0 * disc.qbx_radii[i] {
            out.push(i);
        }
    });
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkelSide {
    Target,
    Source,
}

#[derive(Debug, Clone)]
pub struct ClusterSkeleton {
    pub side: SkelSide,
    /// Skeleton indices (renumbered ordering), a subset of the cluster tuple.
    pub skeleton: Vec<usize>,
    /// Skeleton positions within the tuple.
    pub positions: Vec<usize>,
    /// `L_i` (`n_i x k_i`) for targets, `R_j` (`k_j x n_j`) for sources.
    pub interp: DMatrix<f64>,
}

impl ClusterSkeleton {
    pub fn rank(&self) -> usize {
        self.skeleton.len()
    }

    fn from_id(side: SkelSide, tuple: &[usize], id: IdResult) -> Self {
        ClusterSkeleton {
            side,
            skeleton: id.skeleton.iter().map(|&p| tuple[p]).collect(),
            positions: id.skeleton,
            interp: id.interp,
        }
    }
}

/// Proxy matrix of a target cluster:
/// `[w_pxy G(X_i, P) | A(X_i, Y_near)]`, with `G` seen through the same
/// expansions as the operator.
pub fn target_proxy_matrix(spec: &OperatorSpec, disc: &Discretization, rows: &[usize], near: &[usize], proxy: &ProxyBall, w_pxy: f64) -> DMatrix<f64> {
    let sl = OperatorSpec { kind: KernelKind::new(spec.kind.dim, Layer::Single), ..*spec };
    let q = proxy.len();
    let mut b = DMatrix::zeros(rows.len(), q + near.len());
    for (k, p) in proxy.points.iter().enumerate() {
        for (i, &x) in rows.iter().enumerate() {
            b[(i, k)] = w_pxy * sl.kernel_at(disc, x, p, &[0.0; 3]);
        }
    }
    if !near.is_empty() {
        b.columns_mut(q, near.len()).copy_from(&block_matrix(spec, disc, rows, near));
    }
    b
}

/// Proxy matrix of a source cluster: `[K(P, Y_j) W(Y_j) ; A(X_near, Y_j)]`.
pub fn source_proxy_matrix(spec: &OperatorSpec, disc: &Discretization, cols: &[usize], near: &[usize], proxy: &ProxyBall) -> DMatrix<f64> {
    let q = proxy.len();
    let mut b = DMatrix::zeros(q + near.len(), cols.len());
    for (j, &y) in cols.iter().enumerate() {
        for (k, p) in proxy.points.iter().enumerate() {
            b[(k, j)] = disc.weights[y] * spec.plain(p, &disc.nodes[y], &disc.normals[y]);
        }
    }
    if !near.is_empty() {
        b.rows_mut(q, near.len()).copy_from(&block_matrix(spec, disc, near, cols));
    }
    b
}

/// Row ID of the target proxy matrix.
pub fn skeletonize_target(b: &DMatrix<f64>, rows: &[usize], mode: IdMode) -> Result<ClusterSkeleton> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("empty cluster".into()));
    }
    Ok(ClusterSkeleton::from_id(SkelSide::Target, rows, id_rows(b, mode)?))
}

/// Column ID of the source proxy matrix.
pub fn skeletonize_source(b: &DMatrix<f64>, cols: &[usize], mode: IdMode) -> Result<ClusterSkeleton> {
    if cols.is_empty() {
        return Err(Error::InvalidParameter("empty cluster".into()));
    }
    Ok(ClusterSkeleton::from_id(SkelSide::Source, cols, id_columns(b, mode)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxyCount {
    Fixed(usize),
    /// Chosen per level from the model constants and the level's largest
    /// proxy radius.
    Auto(ModelConstants),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkelParams {
    pub alpha: f64,
    pub proxy: ProxyCount,
    pub tol: f64,
    /// Scale proxy columns by the near-field weight norm; off means `W(P) = I`.
    pub weighted: bool,
    /// One skeleton shared by rows and columns, from a single ID of both
    /// proxy matrices stacked. Off: separate row and column IDs with the
    /// smaller rank raised to match.
    pub joint: bool,
}

impl SkelParams {
    pub fn new(alpha: f64, q: usize, tol: f64) -> Self {
        SkelParams { alpha, proxy: ProxyCount::Fixed(q), tol, weighted: true, joint: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) {
            return Err(Error::InvalidParameter(format!("proxy factor alpha must exceed 1, got {}", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("ID tolerance must be positive, got {}", self.tol)));
        }
        if self.proxy == ProxyCount::Fixed(0) {
            return Err(Error::InvalidParameter("proxy count must be positive".into()));
        }
        Ok(())
    }
}

/// Active row and column indices of one cluster (renumbered ordering).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterDiagnostics {
    pub cluster: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub rank: usize,
    pub r_pxy: f64,
    pub proxy_count: usize,
    pub near_sources: usize,
    pub near_targets: usize,
    pub w_pxy: f64,
    pub w_far_max: f64,
    pub w_cluster_max: f64,
    pub norm_l: f64,
    pub norm_r: f64,
}

#[derive(Debug, Clone)]
pub struct SkeletonizedCluster {
    pub target: ClusterSkeleton,
    pub source: ClusterSkeleton,
    pub diagnostics: ClusterDiagnostics,
}

#[derive(Debug, Clone)]
pub struct LevelSkeleton {
    pub clusters: Vec<SkeletonizedCluster>,
    pub proxy_count: usize,
}

/// Column ID of `[B_t^T ; B_s]` (each part scaled to unit Frobenius norm):
/// one skeleton serves as both row and column skeleton, with `L = T^T`,
/// `R = T`.
fn joint_skeleton(bt: &DMatrix<f64>, bs: &DMatrix<f64>, tuple: &[usize], mode: IdMode) -> Result<(ClusterSkeleton, ClusterSkeleton)> {
    let st = frobenius(bt).max(f64::MIN_POSITIVE);
    let ss = frobenius(bs).max(f64::MIN_POSITIVE);
    let mut m = DMatrix::zeros(bt.ncols() + bs.nrows(), tuple.len());
    m.rows_mut(0, bt.ncols()).copy_from(&(bt.transpose() / st));
    m.rows_mut(bt.ncols(), bs.nrows()).copy_from(&(bs / ss));
    let mut id = id_columns(&m, mode)?;
    if id.rank == 0 {
        id = id_columns(&m, IdMode::Rank(1))?;
    }
    let tid = IdResult { skeleton: id.skeleton.clone(), interp: id.interp.transpose(), rank: id.rank, residual: id.residual };
    Ok((
        ClusterSkeleton::from_id(SkelSide::Target, tuple, tid),
        ClusterSkeleton::from_id(SkelSide::Source, tuple, id),
    ))
}

fn separate_skeletons(bt: &DMatrix<f64>, bs: &DMatrix<f64>, cl: &Cluster, mode: IdMode) -> Result<(ClusterSkeleton, ClusterSkeleton)> {
    let mut target = skeletonize_target(bt, &cl.rows, mode)?;
    let mut source = skeletonize_source(bs, &cl.cols, mode)?;
    // the solver needs square R D^{-1} L blocks
    let k = target.rank().max(source.rank()).max(1);
    if target.rank() < k {
        target = skeletonize_target(bt, &cl.rows, IdMode::Rank(k))?;
    }
    if source.rank() < k {
        source = skeletonize_source(bs, &cl.cols, IdMode::Rank(k))?;
    }
    if target.rank() != source.rank() {
        return Err(Error::InvalidParameter(format!("cannot equalize ranks {} and {}", target.rank(), source.rank())));
    }
    Ok((target, source))
}

/// Skeletonize every cluster of one level. Near fields only see indices
/// that are still active at this level.
pub fn skeletonize_level(
    spec: &OperatorSpec,
    disc: &Discretization,
    tree: &ClusterTree,
    clusters: &[Cluster],
    params: &SkelParams,
) -> Result<LevelSkeleton> {
    params.validate()?;
    let n = disc.len();
    let mut row_owner = vec![usize::MAX; n];
    let mut col_owner = vec![usize::MAX; n];
    for (c, cl) in clusters.iter().enumerate() {
        if cl.rows.is_empty() || cl.cols.is_empty() {
            return Err(Error::InvalidParameter(format!("cluster {c} is empty")));
        }
        cl.rows.iter().for_each(|&i| row_owner[i] = c);
        cl.cols.iter().for_each(|&i| col_owner[i] = c);
    }
    let r_qbx_max = disc.qbx_radii.iter().copied().fold(0.0, f64::max);
    let geo: Vec<(Point, f64, f64)> = clusters.iter().map(|c| cluster_geometry(disc, &c.rows, &c.cols)).collect();
    let q = match params.proxy {
        ProxyCount::Fixed(q) => q,
        ProxyCount::Auto(k) => {
            let r_max = geo.iter().map(|g| params.alpha * (g.1 + g.2)).fold(0.0, f64::max);
            estimate_proxy_order(params.tol, params.alpha, r_max, &k)?.1
        }
    };
    let weight_max = |idx: &mut dyn Iterator<Item = usize>| idx.map(|i| disc.weights[i]).fold(0.0, f64::max);
    let out: Result<Vec<SkeletonizedCluster>> = clusters
        .par_iter()
        .enumerate()
        .map(|(c, cl)| {
            let (center, r_cl, r_qbx) = geo[c];
            let proxy = make_proxy_ball(disc.dim, center, r_cl, r_qbx, params.alpha, q)?;
            let near_src: Vec<usize> = tree
                .area_query(&proxy.center, proxy.radius)
                .into_iter()
                .filter(|&i| col_owner[i] != usize::MAX && col_owner[i] != c)
                .collect();
            let keep = |i: usize| row_owner[i] != usize::MAX && row_owner[i] != c;
            let near_tgt = qbx_near_targets(tree, disc, &proxy, r_qbx_max, &keep);

            let w_cluster_max = weight_max(&mut cl.cols.iter().copied());
            let mut is_near = vec![false; 0];
            if !near_src.is_empty() {
                is_near = vec![false; n];
                near_src.iter().for_each(|&i| is_near[i] = true);
            }
            let w_far_max = weight_max(
                &mut (0..n).filter(|&i| col_owner[i] != usize::MAX && col_owner[i] != c && !is_near.get(i).copied().unwrap_or(false)),
            );
            let w_pxy = if !params.weighted {
                1.0
            } else if near_src.is_empty() {
                cl.cols.iter().map(|&i| disc.weights[i]).sum::<f64>() / cl.cols.len() as f64
            } else {
                weight_max(&mut near_src.iter().copied())
            };

            let bt = target_proxy_matrix(spec, disc, &cl.rows, &near_src, &proxy, w_pxy);
            let bs = source_proxy_matrix(spec, disc, &cl.cols, &near_tgt, &proxy);
            let mode = IdMode::Tolerance(params.tol);
            let (target, source) = if params.joint && cl.rows == cl.cols {
                joint_skeleton(&bt, &bs, &cl.rows, mode)?
            } else {
                separate_skeletons(&bt, &bs, cl, mode)?
            };
            let k = target.rank();
            let diagnostics = ClusterDiagnostics {
                cluster: c,
                n_rows: cl.rows.len(),
                n_cols: cl.cols.len(),
                rank: k,
                r_pxy: proxy.radius,
                proxy_count: proxy.len(),
                near_sources: near_src.len(),
                near_targets: near_tgt.len(),
                w_pxy,
                w_far_max,
                w_cluster_max,
                norm_l: spectral_norm(&target.interp),
                norm_r: spectral_norm(&source.interp),
            };
            Ok(SkeletonizedCluster { target, source, diagnostics })
        })
        .collect();
    let clusters = out?;
    let proxy_count = clusters.first().map(|c| c.diagnostics.proxy_count).unwrap_or(q);
    Ok(LevelSkeleton { clusters, proxy_count })
}

/// Per-cluster diagnostics as CSV rows.
pub fn write_diagnostics_csv<W: std::io::Write>(out: W, level: usize, diags: &[ClusterDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "level", "cluster", "n_rows", "n_cols", "rank", "r_pxy", "proxy_count", "near_sources", "near_targets", "w_pxy",
        "w_far_max", "norm_l", "norm_r",
    ])?;
    for d in diags {
        w.write_record(&[
            level.to_string(),
            d.cluster.to_string(),
            d.n_rows.to_string(),
            d.n_cols.to_string(),
            d.rank.to_string(),
            format!("{:.6e}", d.r_pxy),
            d.proxy_count.to_string(),
            d.near_sources.to_string(),
            d.near_targets.to_string(),
            format!("{:.6e}", d.w_pxy),
            format!("{:.6e}", d.w_far_max),
            format!("{:.6e}", d.norm_l),
            format!("{:.6e}", d.norm_r),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::OperatorSpec;
    use crate::geometry::{build_starfish, build_torus, Side};
    use crate::linalg::submatrix;
    use crate::tree::build_tree;

    #[test]
    fn proxy_radius_rule() {
        let p = make_proxy_ball(Dim::Three, [0.0; 3], 1.0, 0.1, 1.15, 192).unwrap();
        assert!((p.radius - 1.265).abs() < 1e-12);
        for x in &p.points {
            assert!((point::dist(x, &p.center) - p.radius).abs() < 1e-12);
        }
        assert!(p.len() <= 192);
        assert_eq!(p.len(), 190);
        assert!(make_proxy_ball(Dim::Three, [0.0; 3], 1.0, 0.1, 1.0, 192).is_err());
        assert!(make_proxy_ball(Dim::Two, [0.0; 3], 1.0, 0.1, 1.5, 0).is_err());
    }

    #[test]
    fn circle_proxy_angles() {
        let p = make_proxy_ball(Dim::Two, [1.0, 2.0, 0.0], 1.0, 0.0, 2.0, 4).unwrap();
        let want = [[3.0, 2.0], [1.0, 4.0], [-1.0, 2.0], [1.0, 0.0]];
        for (x, w) in p.points.iter().zip(want) {
            assert!((x[0] - w[0]).abs() < 1e-12 && (x[1] - w[1]).abs() < 1e-12);
        }
        let total: f64 = p.weights.iter().sum();
        assert!((total - 2.0 * PI * 2.0).abs() < 1e-12);
    }

    fn starfish() -> (OperatorSpec, Discretization, ClusterTree) {
        let raw = build_starfish(0.25, 5, 64, 8).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let tree = build_tree(&raw, 4).unwrap();
        let disc = raw.renumbered(&tree.perm, &tree.panel_order);
        (OperatorSpec::interior_double_layer(Dim::Two, 6), disc, tree)
    }

    #[test]
    fn split_matches_brute_force() {
        let (_, disc, tree) = starfish();
        for &b in tree.leaves().iter().take(10) {
            let own: Vec<usize> = tree.boxes[b].nodes.clone().collect();
            let proxy = make_proxy(&disc, &own, &own, 1.5, 16).unwrap();
            let s = split_near_far(&tree, &proxy, &own);
            let brute: Vec<usize> = (0..disc.len())
                .filter(|i| !own.contains(i) && point::dist(&disc.nodes[*i], &proxy.center) <= proxy.radius)
                .collect();
            assert_eq!(s.near, brute);
            assert_eq!(s.near.len() + s.far.len() + own.len(), disc.len());
            assert!(s.far.iter().all(|&i| point::dist(&disc.nodes[i], &proxy.center) > proxy.radius));
            // proxy encloses the cluster and its expansion centers
            for &i in &own {
                assert!(point::dist(&disc.qbx_centers[i], &proxy.center) < proxy.radius);
            }
        }
        let own: Vec<usize> = tree.boxes[tree.leaves()[0]].nodes.clone().collect();
        let big = make_proxy_ball(Dim::Two, [0.0; 3], 10.0, 0.0, 1.5, 8).unwrap();
        assert!(split_near_far(&tree, &big, &own).far.is_empty());
        let away = make_proxy_ball(Dim::Two, [50.0, 0.0, 0.0], 0.1, 0.0, 1.5, 8).unwrap();
        assert!(split_near_far(&tree, &away, &[]).near.is_empty());
    }

    fn leaf_clusters(tree: &ClusterTree) -> Vec<Cluster> {
        tree.leaves()
            .iter()
            .map(|&b| {
                let v: Vec<usize> = tree.boxes[b].nodes.clone().collect();
                Cluster { rows: v.clone(), cols: v }
            })
            .collect()
    }

    fn far_set(tree: &ClusterTree, disc: &Discretization, d: &ClusterDiagnostics, cl: &Cluster, sources: bool) -> Vec<usize> {
        let (center, _, _) = cluster_geometry(disc, &cl.rows, &cl.cols);
        (0..tree.len())
            .filter(|i| !cl.rows.contains(i))
            .filter(|&i| {
                if sources {
                    point::dist(&disc.nodes[i], &center) > d.r_pxy
                } else {
                    point::dist(&disc.nodes[i], &center) > d.r_pxy + 2.0 * disc.qbx_radii[i]
                }
            })
            .collect()
    }

    #[test]
    fn far_field_reconstruction() {
        let (spec, disc, tree) = starfish();
        let clusters = leaf_clusters(&tree);
        for tol in [1e-6, 1e-10] {
            let lvl = skeletonize_level(&spec, &disc, &tree, &clusters, &SkelParams::new(1.5, 40, tol)).unwrap();
            for (cl, sk) in clusters.iter().zip(&lvl.clusters).step_by(3) {
                let d = &sk.diagnostics;
                // targets: A(X_i, Y_far) ~ L A(X_s, Y_far)
                let far = far_set(&tree, &disc, d, cl, true);
                let a = block_matrix(&spec, &disc, &cl.rows, &far);
                let a_s = block_matrix(&spec, &disc, &sk.target.skeleton, &far);
                let err = (&a - &sk.target.interp * a_s).norm() / a.norm();
                assert!(err < 100.0 * tol, "target tol={tol} err={err}");
                // sources: A(X_far, Y_j) ~ A(X_far, Y_s) R
                let far = far_set(&tree, &disc, d, cl, false);
                let a = block_matrix(&spec, &disc, &far, &cl.cols);
                let a_s = block_matrix(&spec, &disc, &far, &sk.source.skeleton);
                let err = (&a - a_s * &sk.source.interp).norm() / a.norm();
                assert!(err < 100.0 * tol, "source tol={tol} err={err}");
            }
        }
    }

    #[test]
    fn skeleton_invariants_and_monotone_rank() {
        let (spec, disc, tree) = starfish();
        let clusters = leaf_clusters(&tree);
        let loose = skeletonize_level(&spec, &disc, &tree, &clusters, &SkelParams::new(1.5, 40, 1e-4)).unwrap();
        let tight = skeletonize_level(&spec, &disc, &tree, &clusters, &SkelParams::new(1.5, 40, 1e-8)).unwrap();
        for ((cl, a), b) in clusters.iter().zip(&loose.clusters).zip(&tight.clusters) {
            assert!(a.target.rank() <= b.target.rank());
            assert_eq!(a.target.rank(), a.source.rank());
            assert!(a.target.skeleton.iter().all(|i| cl.rows.contains(i)));
            assert!(a.source.skeleton.iter().all(|i| cl.cols.contains(i)));
            assert_eq!(a.target.interp.shape(), (cl.rows.len(), a.target.rank()));
            assert_eq!(a.source.interp.shape(), (a.source.rank(), cl.cols.len()));
            let l_s = submatrix(&a.target.interp, &a.target.positions, &(0..a.target.rank()).collect::<Vec<_>>());
            assert_eq!(l_s, DMatrix::identity(a.target.rank(), a.target.rank()));
        }
    }

    #[test]
    fn single_node_cluster() {
        let (spec, disc, _) = starfish();
        let proxy = make_proxy(&disc, &[3], &[3], 1.5, 16).unwrap();
        let b = source_proxy_matrix(&spec, &disc, &[3], &[], &proxy);
        let s = skeletonize_source(&b, &[3], IdMode::Tolerance(1e-10)).unwrap();
        assert_eq!(s.skeleton, vec![3]);
        assert_eq!(s.interp, DMatrix::from_element(1, 1, 1.0));
        assert!(skeletonize_source(&b, &[], IdMode::Tolerance(1e-10)).is_err());
    }

    #[test]
    fn single_layer_roles_agree() {
        let raw = build_starfish(0.25, 5, 64, 8).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let tree = build_tree(&raw, 4).unwrap();
        let disc = raw.renumbered(&tree.perm, &tree.panel_order);
        let spec = OperatorSpec::single_layer(Dim::Two, 6);
        let clusters = leaf_clusters(&tree);
        // ranks are forced equal; compare the unforced ones
        for cl in &clusters {
            let proxy = make_proxy(&disc, &cl.rows, &cl.cols, 1.5, 40).unwrap();
            let bt = target_proxy_matrix(&spec, &disc, &cl.rows, &[], &proxy, 1.0);
            let bs = source_proxy_matrix(&spec, &disc, &cl.cols, &[], &proxy);
            let kt = skeletonize_target(&bt, &cl.rows, IdMode::Tolerance(1e-8)).unwrap().rank();
            let ks = skeletonize_source(&bs, &cl.cols, IdMode::Tolerance(1e-8)).unwrap().rank();
            assert!(kt <= 2 * ks && ks <= 2 * kt, "{kt} vs {ks}");
        }
    }

    #[test]
    fn diagnostics_constants() {
        let raw = build_torus(10.0, 2.0, 30, 8, 3).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let tree = build_tree(&raw, 8).unwrap();
        let disc = raw.renumbered(&tree.perm, &tree.panel_order);
        let spec = OperatorSpec::interior_double_layer(Dim::Three, 3);
        let clusters = leaf_clusters(&tree);
        let lvl = skeletonize_level(&spec, &disc, &tree, &clusters, &SkelParams::new(1.5, 60, 1e-6)).unwrap();
        let diags: Vec<ClusterDiagnostics> = lvl.clusters.iter().map(|c| c.diagnostics).collect();
        let k = crate::error_model::measure_constants(Dim::Three, 1.5, &diags);
        for (cl, sk) in clusters.iter().zip(&lvl.clusters) {
            let w: f64 = cl.cols.iter().map(|&i| disc.weights[i]).fold(0.0, f64::max);
            let b1 = (1.0 + spectral_norm(&sk.source.interp)) * w;
            assert!(k.c1 >= b1 * (1.0 - 1e-9));
            assert!(sk.diagnostics.r_pxy <= k.r_pxy);
        }
        assert!(k.c0 >= 1.0);
    }
}
