//! 2:1-balanced quadtree/octree over panel centroids.
//!
//! Whole panels are binned by centroid. The finished tree fixes a node
//! renumbering (depth-first leaf order) under which every cluster at every
//! level is a contiguous index range.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{Dim, Discretization};
use crate::point::{self, Point};

/// Refinement never goes deeper than this.
pub const MAX_TREE_DEPTH: usize = 24;

#[derive(Debug, Clone)]
pub struct TreeBox {
    pub center: Point,
    pub half: f64,
    pub depth: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Panels binned here (leaves only), original panel numbering.
    pub panels: Vec<usize>,
    /// Node range in the renumbered ordering.
    pub nodes: Range<usize>,
    /// Bounding box of the nodes.
    pub node_lo: Point,
    pub node_hi: Point,
    /// Bounding box of the QBX expansion balls (empty when no centers).
    pub ball_lo: Point,
    pub ball_hi: Point,
}

impl TreeBox {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn touches(&self, other: &TreeBox, dim: usize) -> bool {
        let tol = 1e-12 * (self.half + other.half);
        (0..dim).all(|k| (self.center[k] - other.center[k]).abs() <= self.half + other.half + tol)
    }
}

/// Which side of the matrix a tuple indexes. Rows and columns share one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleSide {
    Rows,
    Columns,
}

#[derive(Debug, Clone)]
pub struct ClusterTree {
    pub dim: Dim,
    pub boxes: Vec<TreeBox>,
    /// `perm[new] = old` node index.
    pub perm: Vec<usize>,
    /// `inverse[old] = new` node index.
    pub inverse: Vec<usize>,
    /// Panel order matching the renumbering.
    pub panel_order: Vec<usize>,
    /// Per level, the boxes forming the clusters (depth-first order).
    level_boxes: Vec<Vec<usize>>,
    /// Node coordinates in the renumbered ordering.
    points: Vec<Point>,
}

fn child_slot(center: &Point, x: &Point, dim: usize) -> usize {
    (0..dim).fold(0, |s, k| if x[k] > center[k] { s | (1 << k) } else { s })
}

fn empty_box(center: Point, half: f64, depth: usize, parent: Option<usize>) -> TreeBox {
    TreeBox {
        center,
        half,
        depth,
        parent,
        children: Vec::new(),
        panels: Vec::new(),
        nodes: 0..0,
        node_lo: [f64::INFINITY; 3],
        node_hi: [f64::NEG_INFINITY; 3],
        ball_lo: [f64::INFINITY; 3],
        ball_hi: [f64::NEG_INFINITY; 3],
    }
}

struct Builder<'a> {
    dim: usize,
    centroids: &'a [Point],
    boxes: Vec<TreeBox>,
}

impl Builder<'_> {
    fn split(&mut self, b: usize) -> Result<()> {
        let depth = self.boxes[b].depth + 1;
        if depth > MAX_TREE_DEPTH {
            return Err(Error::TreeDepth(MAX_TREE_DEPTH));
        }
        let (c, h) = (self.boxes[b].center, self.boxes[b].half * 0.5);
        let first = self.boxes.len();
        for s in 0..(1 << self.dim) {
            let mut cc = c;
            for k in 0..self.dim {
                cc[k] += if s & (1 << k) != 0 { h } else { -h };
            }
            self.boxes.push(empty_box(cc, h, depth, Some(b)));
        }
        let panels = std::mem::take(&mut self.boxes[b].panels);
        for p in panels {
            let s = child_slot(&c, &self.centroids[p], self.dim);
            self.boxes[first + s].panels.push(p);
        }
        self.boxes[b].children = (first..first + (1 << self.dim)).collect();
        Ok(())
    }

    fn spread(&self, b: usize) -> f64 {
        let ps = &self.boxes[b].panels;
        ps.iter()
            .map(|&p| point::dist(&self.centroids[p], &self.centroids[ps[0]]))
            .fold(0.0, f64::max)
    }

    fn refine(&mut self, b: usize, cap: usize) -> Result<()> {
        // coincident centroids cannot be separated: stop in one leaf
        if self.boxes[b].panels.len() <= cap || self.spread(b) == 0.0 {
            return Ok(());
        }
        self.split(b)?;
        for c in self.boxes[b].children.clone() {
            self.refine(c, cap)?;
        }
        Ok(())
    }

    fn leaves_touching(&self, b: usize, root: usize, out: &mut Vec<usize>) {
        if !self.boxes[root].touches(&self.boxes[b], self.dim) {
            return;
        }
        if self.boxes[root].is_leaf() {
            if root != b {
                out.push(root);
            }
            return;
        }
        for &c in &self.boxes[root].children {
            self.leaves_touching(b, c, out);
        }
    }

    fn balance(&mut self) -> Result<()> {
        loop {
            let mut changed = false;
            let leaves: Vec<usize> = (0..self.boxes.len()).filter(|&b| self.boxes[b].is_leaf()).collect();
            let mut to_split = Vec::new();
            let mut nb = Vec::new();
            for &l in &leaves {
                nb.clear();
                self.leaves_touching(l, 0, &mut nb);
                for &m in &nb {
                    if self.boxes[m].depth + 1 < self.boxes[l].depth {
                        to_split.push(m);
                    }
                }
            }
            to_split.sort_unstable();
            to_split.dedup();
            for m in to_split {
                if self.boxes[m].is_leaf() {
                    self.split(m)?;
                    changed = true;
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }
}

/// Build the balanced tree. Leaves hold at most `max_panels_per_leaf`
/// panels unless their centroids coincide.
pub fn build_tree(disc: &Discretization, max_panels_per_leaf: usize) -> Result<ClusterTree> {
    if max_panels_per_leaf == 0 {
        return Err(Error::InvalidParameter("max_panels_per_leaf must be at least 1".into()));
    }
    if disc.panels.is_empty() {
        return Err(Error::InvalidParameter("empty discretization".into()));
    }
    let dim = disc.dim.n();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in &disc.centroids {
        for k in 0..dim {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let mut center = [0.0; 3];
    let mut half: f64 = 0.0;
    for k in 0..dim {
        center[k] = 0.5 * (lo[k] + hi[k]);
        half = half.max(0.5 * (hi[k] - lo[k]));
    }
    half = if half > 0.0 { half * (1.0 + 1e-9) } else { 1.0 };
    let mut root = empty_box(center, half, 0, None);
    root.panels = (0..disc.panels.len()).collect();
    let mut builder = Builder { dim, centroids: &disc.centroids, boxes: vec![root] };
    builder.refine(0, max_panels_per_leaf)?;
    builder.balance()?;
    let mut boxes = builder.boxes;

    // depth-first renumbering
    let mut panel_order = Vec::with_capacity(disc.panels.len());
    let mut perm = Vec::with_capacity(disc.len());
    fn visit(b: usize, boxes: &mut [TreeBox], disc: &Discretization, order: &mut Vec<usize>, perm: &mut Vec<usize>) {
        let start = perm.len();
        if boxes[b].is_leaf() {
            for &p in &boxes[b].panels {
                order.push(p);
                perm.extend(disc.panels[p].clone());
            }
        } else {
            for c in boxes[b].children.clone() {
                visit(c, boxes, disc, order, perm);
            }
        }
        boxes[b].nodes = start..perm.len();
    }
    visit(0, &mut boxes, disc, &mut panel_order, &mut perm);
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let points: Vec<Point> = perm.iter().map(|&o| disc.nodes[o]).collect();

    // bounding boxes, children before parents
    for b in (0..boxes.len()).rev() {
        if boxes[b].is_leaf() {
            for new in boxes[b].nodes.clone() {
                let old = perm[new];
                let x = disc.nodes[old];
                let (c, r) = if disc.has_qbx() { (disc.qbx_centers[old], disc.qbx_radii[old]) } else { (x, 0.0) };
                for k in 0..3 {
                    boxes[b].node_lo[k] = boxes[b].node_lo[k].min(x[k]);
                    boxes[b].node_hi[k] = boxes[b].node_hi[k].max(x[k]);
                    boxes[b].ball_lo[k] = boxes[b].ball_lo[k].min(c[k] - r);
                    boxes[b].ball_hi[k] = boxes[b].ball_hi[k].max(c[k] + r);
                }
            }
        } else {
            for c in boxes[b].children.clone() {
                for k in 0..3 {
                    boxes[b].node_lo[k] = boxes[b].node_lo[k].min(boxes[c].node_lo[k]);
                    boxes[b].node_hi[k] = boxes[b].node_hi[k].max(boxes[c].node_hi[k]);
                    boxes[b].ball_lo[k] = boxes[b].ball_lo[k].min(boxes[c].ball_lo[k]);
                    boxes[b].ball_hi[k] = boxes[b].ball_hi[k].max(boxes[c].ball_hi[k]);
                }
            }
        }
    }

    // levels: depth d_max - l boxes plus shallower leaves, nonempty only
    let d_max = boxes.iter().filter(|b| b.is_leaf() && !b.nodes.is_empty()).map(|b| b.depth).max().unwrap_or(0);
    let mut level_boxes = Vec::with_capacity(d_max + 1);
    for l in 0..=d_max {
        let target = d_max - l;
        let mut list = Vec::new();
        fn collect(b: usize, target: usize, boxes: &[TreeBox], out: &mut Vec<usize>) {
            if boxes[b].nodes.is_empty() {
                return;
            }
            if boxes[b].depth == target || boxes[b].is_leaf() {
                out.push(b);
                return;
            }
            for &c in &boxes[b].children {
                collect(c, target, boxes, out);
            }
        }
        collect(0, target, &boxes, &mut list);
        level_boxes.push(list);
    }

    Ok(ClusterTree { dim: disc.dim, boxes, perm, inverse, panel_order, level_boxes, points })
}

impl ClusterTree {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn num_levels(&self) -> usize {
        self.level_boxes.len()
    }

    /// Nonempty leaves in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        self.level_boxes[0].clone()
    }

    /// Boxes acting as clusters at level `l` (0 = leaves).
    pub fn level_clusters(&self, l: usize) -> Result<&[usize]> {
        self.level_boxes
            .get(l)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidParameter(format!("level {l} out of range 0..{}", self.num_levels())))
    }

    /// Contiguous index ranges (renumbered ordering) of the level-`l` clusters.
    pub fn level_tuples(&self, l: usize, _side: TupleSide) -> Result<Vec<Range<usize>>> {
        Ok(self.level_clusters(l)?.iter().map(|&b| self.boxes[b].nodes.clone()).collect())
    }

    /// Position of each level-`l` cluster's parent cluster in level `l + 1`.
    pub fn parent_positions(&self, l: usize) -> Result<Vec<usize>> {
        let upper = self.level_clusters(l + 1)?;
        let lower = self.level_clusters(l)?;
        let mut out = Vec::with_capacity(lower.len());
        let mut j = 0;
        for &b in lower {
            while !(self.boxes[upper[j]].nodes.start <= self.boxes[b].nodes.start
                && self.boxes[b].nodes.end <= self.boxes[upper[j]].nodes.end)
            {
                j += 1;
            }
            out.push(j);
        }
        Ok(out)
    }

    /// Node coordinates in renumbered order.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn ball_hits_box(lo: &Point, hi: &Point, c: &Point, r: f64, dim: usize) -> bool {
        let mut d2 = 0.0;
        for k in 0..dim {
            let e = if c[k] < lo[k] {
                lo[k] - c[k]
            } else if c[k] > hi[k] {
                c[k] - hi[k]
            } else {
                0.0
            };
            d2 += e * e;
        }
        d2 <= r * r
    }

    /// Renumbered indices of all nodes `y` with `|y - center| <= radius`.
    pub fn area_query(&self, center: &Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.query_nodes(center, radius, &mut |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Visit every node within `radius` of `center`.
    pub fn query_nodes(&self, center: &Point, radius: f64, f: &mut dyn FnMut(usize)) {
        let dim = self.dim.n();
        let mut stack = vec![0usize];
        while let Some(b) = stack.pop() {
            let bx = &self.boxes[b];
            if bx.nodes.is_empty() || !Self::ball_hits_box(&bx.node_lo, &bx.node_hi, center, radius, dim) {
                continue;
            }
            if bx.is_leaf() {
                for i in bx.nodes.clone() {
                    if point::dist(&self.points[i], center) <= radius {
                        f(i);
                    }
                }
            } else {
                stack.extend(bx.children.iter().copied());
            }
        }
    }

    /// Leaf node ranges whose expansion balls may come within `radius` of
    /// `center` (conservative; callers filter exactly).
    pub fn query_ball_leaves(&self, center: &Point, radius: f64) -> Vec<Range<usize>> {
        let dim = self.dim.n();
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(b) = stack.pop() {
            let bx = &self.boxes[b];
            if bx.nodes.is_empty() || !Self::ball_hits_box(&bx.ball_lo, &bx.ball_hi, center, radius, dim) {
                continue;
            }
            if bx.is_leaf() {
                out.push(bx.nodes.clone());
            } else {
                stack.extend(bx.children.iter().copied());
            }
        }
        out
    }

    /// Text dump: one line per box.
    pub fn dump(&self) -> String {
        let mut s = String::from("# box depth cx cy cz half parent nodes children panels\n");
        for (i, b) in self.boxes.iter().enumerate() {
            let parent = b.parent.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            let children: Vec<String> = b.children.iter().map(|c| c.to_string()).collect();
            let panels: Vec<String> = b.panels.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                s,
                "{i} {} {:.6e} {:.6e} {:.6e} {:.6e} {parent} {}..{} [{}] [{}]",
                b.depth,
                b.center[0],
                b.center[1],
                b.center[2],
                b.half,
                b.nodes.start,
                b.nodes.end,
                children.join(","),
                panels.join(",")
            );
        }
        s
    }
}

impl Discretization {
    /// Copy with nodes reordered so that new node `i` is old node `perm[i]`.
    /// Panels are reordered by `panel_order`, which must be consistent with `perm`.
    pub fn renumbered(&self, perm: &[usize], panel_order: &[usize]) -> Discretization {
        let pick = |v: &Vec<Point>| perm.iter().map(|&o| v[o]).collect::<Vec<_>>();
        let mut panels = Vec::with_capacity(panel_order.len());
        let mut node_panel = vec![0; perm.len()];
        let mut start = 0;
        for (ip, &p) in panel_order.iter().enumerate() {
            let len = self.panels[p].len();
            panels.push(start..start + len);
            node_panel[start..start + len].iter_mut().for_each(|v| *v = ip);
            start += len;
        }
        Discretization {
            dim: self.dim,
            nodes: pick(&self.nodes),
            weights: perm.iter().map(|&o| self.weights[o]).collect(),
            normals: pick(&self.normals),
            panels,
            centroids: panel_order.iter().map(|&p| self.centroids[p]).collect(),
            panel_sizes: panel_order.iter().map(|&p| self.panel_sizes[p]).collect(),
            panel_radii: panel_order.iter().map(|&p| self.panel_radii[p]).collect(),
            node_panel,
            qbx_centers: if self.has_qbx() { pick(&self.qbx_centers) } else { Vec::new() },
            qbx_radii: if self.has_qbx() { perm.iter().map(|&o| self.qbx_radii[o]).collect() } else { Vec::new() },
            side: self.side,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_starfish, build_torus, Side};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Discretization with one node per panel at given points.
    fn point_cloud(points: &[Point], dim: Dim) -> Discretization {
        let n = points.len();
        Discretization {
            dim,
            nodes: points.to_vec(),
            weights: vec![1.0; n],
            normals: vec![[1.0, 0.0, 0.0]; n],
            panels: (0..n).map(|i| i..i + 1).collect(),
            centroids: points.to_vec(),
            panel_sizes: vec![0.0; n],
            panel_radii: vec![0.0; n],
            node_panel: (0..n).collect(),
            qbx_centers: Vec::new(),
            qbx_radii: Vec::new(),
            side: None,
        }
    }

    fn check_balance(t: &ClusterTree) {
        let dim = t.dim.n();
        let leaves: Vec<&TreeBox> = t.boxes.iter().filter(|b| b.is_leaf()).collect();
        for a in &leaves {
            for b in &leaves {
                if a.touches(b, dim) {
                    assert!(a.depth.abs_diff(b.depth) <= 1, "unbalanced leaves {} {}", a.depth, b.depth);
                }
            }
        }
    }

    #[test]
    fn coincident_centroids_end_in_one_leaf() {
        let d = point_cloud(&vec![[0.5, 0.5, 0.0]; 20], Dim::Two);
        let t = build_tree(&d, 2).unwrap();
        assert_eq!(t.leaves().len(), 1);
        assert_eq!(t.num_levels(), 1);
    }

    #[test]
    fn separated_clusters_one_leaf_each() {
        let pts = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [10.0, 10.0, 0.0]];
        let d = point_cloud(&pts, Dim::Two);
        let t = build_tree(&d, 1).unwrap();
        assert_eq!(t.leaves().len(), 4);
        for &l in &t.leaves() {
            assert_eq!(t.boxes[l].panels.len(), 1);
        }
    }

    #[test]
    fn depth_overflow_reported() {
        let pts = [[0.0, 0.0, 0.0], [1e-9, 0.0, 0.0], [1.0, 1.0, 0.0]];
        let d = point_cloud(&pts, Dim::Two);
        assert!(matches!(build_tree(&d, 1), Err(Error::TreeDepth(_))));
    }

    #[test]
    fn balanced_on_graded_cloud() {
        // dense cluster in one corner forces deep refinement next to coarse boxes
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts: Vec<Point> = (0..300).map(|_| [rng.gen_range(0.0..0.01), rng.gen_range(0.0..0.01), 0.0]).collect();
        pts.extend((0..20).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0]));
        let t = build_tree(&point_cloud(&pts, Dim::Two), 3).unwrap();
        check_balance(&t);
        let mut pts3: Vec<Point> =
            (0..300).map(|_| [rng.gen_range(0.0..0.02), rng.gen_range(0.0..0.02), rng.gen_range(0.0..0.02)]).collect();
        pts3.extend((0..30).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]));
        let t3 = build_tree(&point_cloud(&pts3, Dim::Three), 4).unwrap();
        check_balance(&t3);
    }

    #[test]
    fn leaves_respect_capacity_and_permutation_is_bijection() {
        let d = build_starfish(0.25, 16, 256, 4).unwrap();
        let t = build_tree(&d, 8).unwrap();
        for &l in &t.leaves() {
            assert!(t.boxes[l].panels.len() <= 8);
        }
        let mut seen = vec![false; d.len()];
        for &o in &t.perm {
            assert!(!seen[o]);
            seen[o] = true;
        }
        assert!(seen.iter().all(|&s| s));
        for (new, &old) in t.perm.iter().enumerate() {
            assert_eq!(t.inverse[old], new);
        }
        check_balance(&t);
    }

    #[test]
    fn level_tuples_partition_and_nest() {
        let d = build_torus(10.0, 2.0, 40, 8, 3).unwrap();
        let t = build_tree(&d, 4).unwrap();
        for l in 0..t.num_levels() {
            let tuples = t.level_tuples(l, TupleSide::Rows).unwrap();
            let mut next = 0;
            for r in &tuples {
                assert_eq!(r.start, next);
                assert!(!r.is_empty());
                next = r.end;
            }
            assert_eq!(next, d.len());
            if l + 1 < t.num_levels() {
                let up = t.level_tuples(l + 1, TupleSide::Columns).unwrap();
                let parents = t.parent_positions(l).unwrap();
                // every parent tuple is the ordered concatenation of its children
                for (j, u) in up.iter().enumerate() {
                    let kids: Vec<&Range<usize>> =
                        tuples.iter().zip(&parents).filter(|(_, &p)| p == j).map(|(r, _)| r).collect();
                    assert_eq!(kids.first().unwrap().start, u.start);
                    assert_eq!(kids.last().unwrap().end, u.end);
                    for w in kids.windows(2) {
                        assert_eq!(w[0].end, w[1].start);
                    }
                }
            }
        }
        let root = t.level_tuples(t.num_levels() - 1, TupleSide::Rows).unwrap();
        assert_eq!(root, vec![0..d.len()]);
        assert_eq!(t.level_tuples(0, TupleSide::Rows).unwrap().len(), t.leaves().len());
        assert!(t.level_tuples(t.num_levels(), TupleSide::Rows).is_err());
    }

    #[test]
    fn panels_stay_whole_in_leaves() {
        let d = build_starfish(0.25, 4, 64, 4).unwrap();
        let t = build_tree(&d, 3).unwrap();
        let r = d.renumbered(&t.perm, &t.panel_order);
        for &l in &t.leaves() {
            let nodes = t.boxes[l].nodes.clone();
            for i in nodes.clone() {
                let p = &r.panels[r.node_panel[i]];
                assert!(nodes.start <= p.start && p.end <= nodes.end);
            }
        }
        for (i, &o) in t.perm.iter().enumerate() {
            assert_eq!(r.nodes[i], d.nodes[o]);
            assert_eq!(r.weights[i], d.weights[o]);
        }
    }

    #[test]
    fn area_query_matches_brute_force() {
        let d = build_torus(10.0, 2.0, 30, 8, 3).unwrap().attach_qbx_centers(Side::Interior, 0.5).unwrap();
        let t = build_tree(&d, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let c = [rng.gen_range(-13.0..13.0), rng.gen_range(-13.0..13.0), rng.gen_range(-3.0..3.0)];
            let r = rng.gen_range(0.1..8.0);
            let got = t.area_query(&c, r);
            let brute: Vec<usize> = (0..t.len()).filter(|&i| point::dist(&t.points()[i], &c) <= r).collect();
            assert_eq!(got, brute);
        }
        assert_eq!(t.area_query(&[0.0; 3], 1e3).len(), d.len());
        assert!(t.area_query(&[0.0, 0.0, 50.0], 1.0).is_empty());
    }

    #[test]
    fn dump_lists_every_box() {
        let d = build_starfish(0.0, 0, 16, 2).unwrap();
        let t = build_tree(&d, 2).unwrap();
        assert_eq!(t.dump().lines().count(), t.boxes.len() + 1);
    }
}
