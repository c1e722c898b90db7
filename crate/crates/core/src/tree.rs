//! Quadtrees over points in the complex plane and certified row-norm bounds
//! for Cauchy-like matrices.
//!
//! A dual-tree traversal pairs source and target cells. Well-separated pairs
//! are summarized through the Gram matrix of the source generators, and all
//! remaining leaf pairs are summed exactly. The resulting bound `u` satisfies
//! `exact <= u <= nu * exact` row by row.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// Default maximum number of points in a leaf.
pub const DEFAULT_LEAF_SIZE: usize = 32;

/// Depth at which subdivision stops regardless of leaf size.
const MAX_DEPTH: usize = 48;

#[derive(Clone, Debug)]
pub struct QuadNode {
    /// Lower-left corner of the square cell.
    pub corner: [f64; 2],
    pub side: f64,
    /// Child node ids in NW, NE, SW, SE order, empty quadrants omitted.
    pub children: Vec<usize>,
    start: usize,
    end: usize,
}

impl QuadNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    fn contains(&self, z: C64) -> bool {
        let eps = 1e-12 * self.side.max(1.0);
        z.re >= self.corner[0] - eps
            && z.re <= self.corner[0] + self.side + eps
            && z.im >= self.corner[1] - eps
            && z.im <= self.corner[1] + self.side + eps
    }
}

/// Quadtree with square cells. Node 0 is the root and every parent precedes
/// its children.
#[derive(Clone, Debug)]
pub struct PointQuadtree {
    pub points: Vec<C64>,
    pub nodes: Vec<QuadNode>,
    pub leaf_size: usize,
    perm: Vec<usize>,
}

impl PointQuadtree {
    pub fn build(points: &[C64], leaf_size: usize) -> Result<Self> {
        if leaf_size == 0 {
            return Err(Error::InvalidArgument("leaf size must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument("quadtree needs at least one point".into()));
        }
        if points.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for z in points {
            lo = [lo[0].min(z.re), lo[1].min(z.im)];
            hi = [hi[0].max(z.re), hi[1].max(z.im)];
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let mut tree = Self {
            points: points.to_vec(),
            nodes: vec![QuadNode {
                corner: lo,
                side,
                children: vec![],
                start: 0,
                end: points.len(),
            }],
            leaf_size,
            perm: (0..points.len()).collect(),
        };

        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let node = &tree.nodes[id];
            if node.len() <= leaf_size || depth >= MAX_DEPTH || node.side == 0.0 {
                continue;
            }
            let (start, end, corner, half) = (node.start, node.end, node.corner, node.side / 2.0);
            let mid = [corner[0] + half, corner[1] + half];
            let quadrant = |z: C64| -> usize {
                let east = z.re >= mid[0];
                let north = z.im >= mid[1];
                match (north, east) {
                    (true, false) => 0,
                    (true, true) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                }
            };
            let slice = &mut tree.perm[start..end];
            let pts = &tree.points;
            slice.sort_by_key(|&p| quadrant(pts[p]));
            let mut bounds = [start; 5];
            for q in 0..4 {
                let count = slice.iter().filter(|&&p| quadrant(pts[p]) == q).count();
                bounds[q + 1] = bounds[q] + count;
            }
            let offsets = [[0.0, half], [half, half], [0.0, 0.0], [half, 0.0]];
            let mut children = Vec::with_capacity(4);
            for q in 0..4 {
                if bounds[q] == bounds[q + 1] {
                    continue;
                }
                let child = tree.nodes.len();
                tree.nodes.push(QuadNode {
                    corner: [corner[0] + offsets[q][0], corner[1] + offsets[q][1]],
                    side: half,
                    children: vec![],
                    start: bounds[q],
                    end: bounds[q + 1],
                });
                children.push(child);
            }
            if children.len() == 1 && tree.all_coincident(start, end) {
                tree.nodes.pop();
                continue;
            }
            tree.nodes[id].children = children.clone();
            for &c in children.iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        Ok(tree)
    }

    fn all_coincident(&self, start: usize, end: usize) -> bool {
        let first = self.points[self.perm[start]];
        self.perm[start..end].iter().all(|&p| self.points[p] == first)
    }

    /// Point indices covered by `node`.
    pub fn points_of(&self, node: usize) -> &[usize] {
        let n = &self.nodes[node];
        &self.perm[n.start..n.end]
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    /// Leaves of the subtree rooted at `node`, in depth-first order.
    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = vec![];
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.is_leaf() {
                out.push(id);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// Checks that every point sits in exactly one leaf whose cell contains it.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![0usize; self.points.len()];
        for leaf in self.leaves() {
            for &p in self.points_of(leaf) {
                seen[p] += 1;
                if !self.nodes[leaf].contains(self.points[p]) {
                    return false;
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }
}

/// Squared minimum and maximum distances between two square cells.
pub fn box_distances(a: &QuadNode, b: &QuadNode) -> (f64, f64) {
    let mut dmin = 0.0;
    let mut dmax = 0.0;
    for k in 0..2 {
        let (alo, ahi) = (a.corner[k], a.corner[k] + a.side);
        let (blo, bhi) = (b.corner[k], b.corner[k] + b.side);
        let gap = (blo - ahi).max(alo - bhi).max(0.0);
        let span = (bhi - alo).abs().max((ahi - blo).abs());
        dmin += gap * gap;
        dmax += span * span;
    }
    (dmin, dmax)
}

/// Precomputed interaction lists, reusable across generator updates.
#[derive(Clone, Debug)]
pub struct InteractionPlan {
    pub targets: PointQuadtree,
    pub sources: PointQuadtree,
    pub nu: f64,
    /// Per target node: aggregated `(source node, 1 / d_min^2)` entries.
    pub aggregated: Vec<Vec<(usize, f64)>>,
    /// Per target node: source leaves summed exactly.
    pub exact: Vec<Vec<usize>>,
}

impl InteractionPlan {
    pub fn target_leaves(&self) -> Vec<usize> {
        self.targets.leaves()
    }

    pub fn aggregated_count(&self) -> usize {
        self.aggregated.iter().map(Vec::len).sum()
    }

    pub fn exact_count(&self) -> usize {
        self.exact.iter().map(Vec::len).sum()
    }

    /// Number of times each source point is covered for target leaf `leaf`.
    pub fn coverage(&self, leaf: usize) -> Vec<usize> {
        let mut hits = vec![0; self.sources.points.len()];
        let nodes = self.aggregated[leaf]
            .iter()
            .map(|&(s, _)| s)
            .chain(self.exact[leaf].iter().copied());
        for s in nodes {
            for &j in self.sources.points_of(s) {
                hits[j] += 1;
            }
        }
        hits
    }
}

/// Builds quadtrees on targets `x` and sources `y` and the interaction lists
/// for admissibility factor `nu`.
pub fn build_plan(x: &[C64], y: &[C64], nu: f64, leaf_size: usize) -> Result<InteractionPlan> {
    if !(nu >= 1.0) {
        return Err(Error::InvalidArgument(format!("nu must be at least 1, got {nu}")));
    }
    let targets = PointQuadtree::build(x, leaf_size)?;
    let sources = PointQuadtree::build(y, leaf_size)?;
    let mut aggregated = vec![Vec::new(); targets.nodes.len()];
    let mut exact = vec![Vec::new(); targets.nodes.len()];

    let mut stack = vec![(0usize, 0usize)];
    while let Some((s, t)) = stack.pop() {
        let (sn, tn) = (&sources.nodes[s], &targets.nodes[t]);
        let (dmin, dmax) = box_distances(sn, tn);
        if dmin > 0.0 && dmax <= nu * dmin {
            for leaf in targets.leaves_under(t) {
                let (dl, _) = box_distances(sn, &targets.nodes[leaf]);
                aggregated[leaf].push((s, 1.0 / dl));
            }
            continue;
        }
        match (sn.is_leaf(), tn.is_leaf()) {
            (true, true) => {
                if dmin == 0.0 {
                    check_coincident(&targets, t, &sources, s)?;
                }
                exact[t].push(s);
            }
            (false, true) => push_children(&mut stack, sn, |c| (c, t)),
            (true, false) => push_children(&mut stack, tn, |c| (s, c)),
            (false, false) => {
                if tn.side >= sn.side {
                    push_children(&mut stack, tn, |c| (s, c));
                } else {
                    push_children(&mut stack, sn, |c| (c, t));
                }
            }
        }
    }
    Ok(InteractionPlan {
        targets,
        sources,
        nu,
        aggregated,
        exact,
    })
}

fn push_children(stack: &mut Vec<(usize, usize)>, node: &QuadNode, pair: impl Fn(usize) -> (usize, usize)) {
    for &c in node.children.iter().rev() {
        stack.push(pair(c));
    }
}

fn check_coincident(tgt: &PointQuadtree, t: usize, src: &PointQuadtree, s: usize) -> Result<()> {
    for &i in tgt.points_of(t) {
        for &j in src.points_of(s) {
            if tgt.points[i] == src.points[j] {
                return Err(Error::CoincidentPoints { target: i, src: j });
            }
        }
    }
    Ok(())
}

/// Upper bounds on the squared row norms of the Cauchy-like matrix with
/// entries `(G[i, :] B[:, j]) / (x_i - y_j)`.
///
/// `g` is `n x p` column-major and `b` is `p x m` row-major.
pub fn certified_upper_bounds(plan: &InteractionPlan, g: &[C64], b: &[C64], p: usize) -> Result<Vec<f64>> {
    let n = plan.targets.points.len();
    let m = plan.sources.points.len();
    crate::error::check_len(n * p, g.len())?;
    crate::error::check_len(p * m, b.len())?;
    let gram = source_grams(&plan.sources, b, p);
    let x = &plan.targets.points;
    let y = &plan.sources.points;

    let per_leaf: Vec<(usize, Vec<f64>)> = plan
        .target_leaves()
        .into_par_iter()
        .map(|leaf| {
            let idx = plan.targets.points_of(leaf);
            let mut out = Vec::with_capacity(idx.len());
            let mut gi = vec![ZERO; p];
            for &i in idx {
                for l in 0..p {
                    gi[l] = g[l * n + i];
                }
                let mut u = 0.0;
                for &(s, alpha) in &plan.aggregated[leaf] {
                    let h = &gram[s * p * p..(s + 1) * p * p];
                    let mut q = ZERO;
                    for a in 0..p {
                        for c in 0..p {
                            q += gi[a] * h[a * p + c] * gi[c].conj();
                        }
                    }
                    u += alpha * q.re.max(0.0);
                }
                for &s in &plan.exact[leaf] {
                    for &j in plan.sources.points_of(s) {
                        let mut num = ZERO;
                        for l in 0..p {
                            num += gi[l] * b[l * m + j];
                        }
                        u += num.norm_sqr() / (x[i] - y[j]).norm_sqr();
                    }
                }
                out.push(u);
            }
            (leaf, out)
        })
        .collect();

    let mut u = vec![0.0; n];
    for (leaf, vals) in per_leaf {
        for (&i, v) in plan.targets.points_of(leaf).iter().zip(vals) {
            u[i] = v;
        }
    }
    Ok(u)
}

/// `H_s = sum_{j in s} B[:, j] B[:, j]^*` for every source node, row-major
/// `p x p` blocks, accumulated from the leaves upward.
pub fn source_grams(tree: &PointQuadtree, b: &[C64], p: usize) -> Vec<C64> {
    let m = tree.points.len();
    let mut gram = vec![ZERO; tree.nodes.len() * p * p];
    for id in (0..tree.nodes.len()).rev() {
        let node = &tree.nodes[id];
        let mut h = vec![ZERO; p * p];
        if node.is_leaf() {
            for &j in tree.points_of(id) {
                for a in 0..p {
                    for c in 0..p {
                        h[a * p + c] += b[a * m + j] * b[c * m + j].conj();
                    }
                }
            }
        } else {
            for &child in &node.children {
                for (acc, v) in h.iter_mut().zip(&gram[child * p * p..(child + 1) * p * p]) {
                    *acc += v;
                }
            }
        }
        gram[id * p * p..(id + 1) * p * p].copy_from_slice(&h);
    }
    gram
}
