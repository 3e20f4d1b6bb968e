//! Nearest-record search under an additively weighted block metric.
//!
//! Every weight computation asks the same question: for a query point `q` of
//! the integration variable, which record `k` minimizes
//! `offset_k + sum_b c_b |q_b - p_{k,b}|`? The offset collects the distance of
//! the record's design (and any fixed context) to the current query context.
//! Ties go to the smallest record index.
//!
//! [`brute_nearest`] is the reference linear scan. [`Neighbors`] answers the
//! same queries with a k-d tree whose nodes carry the smallest offset below
//! them, and [`sweep_assign_1d`] handles one-dimensional integration variables
//! by a pair of monotone sweeps. Both return exactly the brute-force answer.

use crate::metric::accumulate_blocks;

/// Block structure `(dim, coefficient)` of the integration coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockNorm {
    blocks: Vec<(usize, f64)>,
    dim: usize,
}

impl BlockNorm {
    pub fn new(blocks: Vec<(usize, f64)>) -> Self {
        let dim = blocks.iter().map(|b| b.0).sum();
        Self { blocks, dim }
    }

    pub fn single(dim: usize, coefficient: f64) -> Self {
        Self::new(vec![(dim, coefficient)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[(usize, f64)] {
        &self.blocks
    }

    #[inline]
    pub fn offset_distance(&self, offset: f64, a: &[f64], b: &[f64]) -> f64 {
        accumulate_blocks(&self.blocks, offset, a, b)
    }

    /// Lower bound of `offset_distance(min_offset, q, p)` over all `p` in the box.
    #[inline]
    fn box_bound(&self, min_offset: f64, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let mut total = min_offset;
        let mut at = 0;
        for &(dim, c) in &self.blocks {
            let mut ss = 0.0;
            for i in at..at + dim {
                let d = if q[i] < lo[i] {
                    lo[i] - q[i]
                } else if q[i] > hi[i] {
                    q[i] - hi[i]
                } else {
                    0.0
                };
                ss += d * d;
            }
            total += c * ss.sqrt();
            at += dim;
        }
        total
    }
}

#[inline]
fn better(d: f64, i: usize, best_d: f64, best_i: usize) -> bool {
    d < best_d || (d == best_d && i < best_i)
}

/// Reference linear scan. Returns `None` when no admissible record exists.
pub fn brute_nearest(
    norm: &BlockNorm,
    points: &[f64],
    offsets: &[f64],
    q: &[f64],
    skip: Option<usize>,
) -> Option<(usize, f64)> {
    let dim = norm.dim();
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in points.chunks_exact(dim).enumerate() {
        if Some(k) == skip {
            continue;
        }
        let d = norm.offset_distance(offsets[k], q, p);
        match best {
            Some((bi, bd)) if !better(d, k, bd, bi) => {}
            _ => best = Some((k, d)),
        }
    }
    best
}

const LEAF_SIZE: usize = 8;
const NONE: u32 = u32::MAX;

trait Search {
    fn nearest_excluding(&self, q: &[f64], skip: usize, best: (usize, f64)) -> (usize, f64);
}

/// k-d tree over record points, rebuilt whenever the offsets change.
pub struct Neighbors<'a> {
    norm: &'a BlockNorm,
    points: &'a [f64],
    offsets: &'a [f64],
    inner: Box<dyn Search + 'a>,
}

impl<'a> Neighbors<'a> {
    pub fn new(norm: &'a BlockNorm, points: &'a [f64], offsets: &'a [f64]) -> Self {
        debug_assert_eq!(points.len(), offsets.len() * norm.dim());
        let inner: Box<dyn Search + 'a> = match norm.blocks() {
            &[(dim, c)] => {
                macro_rules! fixed {
                    ($($d:literal)*) => {
                        match dim {
                            $($d => Box::new(FixedTree::<$d>::new(c, points, offsets)),)*
                            _ => Box::new(GenericTree::new(norm, points, offsets)),
                        }
                    };
                }
                fixed!(1 2 3 4 5 6 7 8 9 10 12 16)
            }
            _ => Box::new(GenericTree::new(norm, points, offsets)),
        };
        Neighbors { norm, points, offsets, inner }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    fn point(&self, k: usize) -> &[f64] {
        let d = self.norm.dim();
        &self.points[k * d..(k + 1) * d]
    }

    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        self.nearest_excluding(q, usize::MAX)
    }

    /// Nearest record other than `skip`.
    pub fn nearest_excluding(&self, q: &[f64], skip: usize) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let best = self.inner.nearest_excluding(q, skip, (usize::MAX, f64::INFINITY));
        (best.0 != usize::MAX).then_some(best)
    }

    /// Nearest record for a query known to coincide with record `k`'s point;
    /// the record itself seeds the search bound.
    pub fn nearest_from_record(&self, k: usize) -> (usize, f64) {
        let q = self.point(k);
        let d = self.norm.offset_distance(self.offsets[k], q, q);
        self.inner.nearest_excluding(q, usize::MAX, (k, d))
    }
}

/// Tree for any block structure.
struct GenericTree<'a> {
    norm: &'a BlockNorm,
    points: &'a [f64],
    offsets: &'a [f64],
    axis_scale: Vec<f64>,
    perm: Vec<u32>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    min_offset: Vec<f64>,
    range: Vec<(u32, u32)>,
    children: Vec<(u32, u32)>,
}

impl<'a> GenericTree<'a> {
    fn new(norm: &'a BlockNorm, points: &'a [f64], offsets: &'a [f64]) -> Self {
        let n = offsets.len();
        let nodes = 2 * n.div_ceil(LEAF_SIZE) + 1;
        let mut tree = GenericTree {
            norm,
            points,
            offsets,
            axis_scale: norm.blocks().iter().flat_map(|&(d, c)| std::iter::repeat(c).take(d)).collect(),
            perm: (0..n as u32).collect(),
            lo: Vec::with_capacity(nodes * norm.dim()),
            hi: Vec::with_capacity(nodes * norm.dim()),
            min_offset: Vec::with_capacity(nodes),
            range: Vec::with_capacity(nodes),
            children: Vec::with_capacity(nodes),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let dim = self.norm.dim();
        let id = self.range.len();
        let base = self.lo.len();
        self.lo.resize(base + dim, f64::INFINITY);
        self.hi.resize(base + dim, f64::NEG_INFINITY);
        let mut min_off = f64::INFINITY;
        let mut max_off = f64::NEG_INFINITY;
        {
            let (lo, hi) = (&mut self.lo[base..], &mut self.hi[base..]);
            for &k in &self.perm[start..end] {
                let k = k as usize;
                let p = &self.points[k * dim..(k + 1) * dim];
                for i in 0..dim {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
                let off = self.offsets[k];
                min_off = min_off.min(off);
                max_off = max_off.max(off);
            }
        }
        // Spreads in distance units. Splitting on the offset separates records
        // whose context is far from the query's, which the bound then prunes.
        let mut axis = dim;
        let mut spread = max_off - min_off;
        for i in 0..dim {
            let s = self.axis_scale[i] * (self.hi[base + i] - self.lo[base + i]);
            if s > spread {
                axis = i;
                spread = s;
            }
        }
        self.min_offset.push(min_off);
        self.range.push((start as u32, end as u32));
        self.children.push((NONE, NONE));
        if end - start > LEAF_SIZE && spread > 0.0 {
            let mid = start + (end - start) / 2;
            let points = self.points;
            let offsets = self.offsets;
            let slice = &mut self.perm[start..end];
            if axis == dim {
                slice.select_nth_unstable_by(mid - start, |&a, &b| offsets[a as usize].total_cmp(&offsets[b as usize]));
            } else {
                slice.select_nth_unstable_by(mid - start, |&a, &b| {
                    points[a as usize * dim + axis].total_cmp(&points[b as usize * dim + axis])
                });
            }
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.children[id] = (left, right);
        }
        id as u32
    }

    fn node_bound(&self, node: usize, q: &[f64]) -> f64 {
        let dim = q.len();
        let lo = &self.lo[node * dim..(node + 1) * dim];
        let hi = &self.hi[node * dim..(node + 1) * dim];
        self.norm.box_bound(self.min_offset[node], q, lo, hi)
    }

    fn search(&self, node: usize, q: &[f64], skip: usize, best: &mut (usize, f64)) {
        let (left, right) = self.children[node];
        if left == NONE {
            let dim = self.norm.dim();
            let (s, e) = self.range[node];
            for &k in &self.perm[s as usize..e as usize] {
                let k = k as usize;
                if k == skip || self.offsets[k] > best.1 {
                    continue;
                }
                let d = self.norm.offset_distance(self.offsets[k], q, &self.points[k * dim..(k + 1) * dim]);
                if better(d, k, best.1, best.0) {
                    *best = (k, d);
                }
            }
            return;
        }
        let bl = self.node_bound(left as usize, q);
        let br = self.node_bound(right as usize, q);
        let (first, b1, second, b2) = if bl <= br { (left, bl, right, br) } else { (right, br, left, bl) };
        if b1 <= best.1 {
            self.search(first as usize, q, skip, best);
        }
        if b2 <= best.1 {
            self.search(second as usize, q, skip, best);
        }
    }
}

impl Search for GenericTree<'_> {
    fn nearest_excluding(&self, q: &[f64], skip: usize, mut best: (usize, f64)) -> (usize, f64) {
        self.search(0, q, skip, &mut best);
        best
    }
}

#[derive(Clone, Copy)]
struct Record<const D: usize> {
    point: [f64; D],
    offset: f64,
    index: u32,
}

#[derive(Clone, Copy)]
struct Node<const D: usize> {
    lo: [f64; D],
    hi: [f64; D],
    min_offset: f64,
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

/// Tree for a single Euclidean block of fixed dimension. Records are stored
/// contiguously in tree order. Splits are chosen from the cell bounds handed
/// down by the parent, and the tight boxes are merged bottom-up, so a build
/// touches every coordinate once per level only inside the median selection.
struct FixedTree<const D: usize> {
    c: f64,
    records: Vec<Record<D>>,
    nodes: Vec<Node<D>>,
}

impl<const D: usize> FixedTree<D> {
    fn new(c: f64, points: &[f64], offsets: &[f64]) -> Self {
        let records: Vec<Record<D>> = points
            .chunks_exact(D)
            .zip(offsets)
            .enumerate()
            .map(|(k, (p, &offset))| Record { point: p.try_into().expect("dimension"), offset, index: k as u32 })
            .collect();
        let n = records.len();
        let mut tree = FixedTree { c, records, nodes: Vec::with_capacity(2 * n.div_ceil(LEAF_SIZE) + 1) };
        if n > 0 {
            let root = tree.leaf_box(0, n);
            tree.build(0, n, root.lo, root.hi, root.min_offset, offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        tree
    }

    fn leaf_box(&self, start: usize, end: usize) -> Node<D> {
        let mut node = Node {
            lo: [f64::INFINITY; D],
            hi: [f64::NEG_INFINITY; D],
            min_offset: f64::INFINITY,
            start: start as u32,
            end: end as u32,
            left: NONE,
            right: NONE,
        };
        for r in &self.records[start..end] {
            for i in 0..D {
                node.lo[i] = node.lo[i].min(r.point[i]);
                node.hi[i] = node.hi[i].max(r.point[i]);
            }
            node.min_offset = node.min_offset.min(r.offset);
        }
        node
    }

    fn build(&mut self, start: usize, end: usize, lo: [f64; D], hi: [f64; D], off_lo: f64, off_hi: f64) -> u32 {
        if end - start <= LEAF_SIZE {
            let node = self.leaf_box(start, end);
            self.nodes.push(node);
            return (self.nodes.len() - 1) as u32;
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, min_offset: off_lo, start: start as u32, end: end as u32, left: NONE, right: NONE });
        let mut axis = D;
        let mut spread = off_hi - off_lo;
        for i in 0..D {
            let s = self.c * (hi[i] - lo[i]);
            if s > spread {
                axis = i;
                spread = s;
            }
        }
        let mid = start + (end - start) / 2;
        let slice = &mut self.records[start..end];
        let (left, right) = if axis == D {
            slice.select_nth_unstable_by(mid - start, |a, b| a.offset.total_cmp(&b.offset));
            let m = self.records[mid].offset;
            (self.build(start, mid, lo, hi, off_lo, m), self.build(mid, end, lo, hi, m, off_hi))
        } else {
            slice.select_nth_unstable_by(mid - start, |a, b| a.point[axis].total_cmp(&b.point[axis]));
            let m = self.records[mid].point[axis];
            let (mut left_hi, mut right_lo) = (hi, lo);
            left_hi[axis] = m;
            right_lo[axis] = m;
            (self.build(start, mid, lo, left_hi, off_lo, off_hi), self.build(mid, end, right_lo, hi, off_lo, off_hi))
        };
        let (a, b) = (self.nodes[left as usize], self.nodes[right as usize]);
        let node = &mut self.nodes[id];
        for i in 0..D {
            node.lo[i] = a.lo[i].min(b.lo[i]);
            node.hi[i] = a.hi[i].max(b.hi[i]);
        }
        node.min_offset = a.min_offset.min(b.min_offset);
        node.left = left;
        node.right = right;
        id as u32
    }

    #[inline]
    fn bound(&self, node: &Node<D>, q: &[f64; D]) -> f64 {
        let mut ss = 0.0;
        for i in 0..D {
            let (a, b) = (node.lo[i] - q[i], q[i] - node.hi[i]);
            let t = if a > b { a } else { b };
            let t = if t > 0.0 { t } else { 0.0 };
            ss += t * t;
        }
        node.min_offset + self.c * ss.sqrt()
    }

    fn search(&self, node: &Node<D>, q: &[f64; D], skip: u32, best: &mut (u32, f64)) {
        if node.left == NONE {
            for r in &self.records[node.start as usize..node.end as usize] {
                if r.offset > best.1 || r.index == skip {
                    continue;
                }
                let mut ss = 0.0;
                for i in 0..D {
                    let t = q[i] - r.point[i];
                    ss += t * t;
                }
                let d = r.offset + self.c * ss.sqrt();
                if d < best.1 || (d == best.1 && r.index < best.0) {
                    *best = (r.index, d);
                }
            }
            return;
        }
        let (left, right) = (&self.nodes[node.left as usize], &self.nodes[node.right as usize]);
        let (bl, br) = (self.bound(left, q), self.bound(right, q));
        let (first, b1, second, b2) = if bl <= br { (left, bl, right, br) } else { (right, br, left, bl) };
        if b1 <= best.1 {
            self.search(first, q, skip, best);
        }
        if b2 <= best.1 {
            self.search(second, q, skip, best);
        }
    }
}

impl<const D: usize> Search for FixedTree<D> {
    fn nearest_excluding(&self, q: &[f64], skip: usize, best: (usize, f64)) -> (usize, f64) {
        let q: &[f64; D] = q.try_into().expect("dimension");
        let skip = u32::try_from(skip).unwrap_or(NONE);
        let mut b = (u32::try_from(best.0).unwrap_or(NONE), best.1);
        if let Some(root) = self.nodes.first() {
            if self.bound(root, q) <= b.1 {
                self.search(root, q, skip, &mut b);
            }
        }
        (if b.0 == NONE { usize::MAX } else { b.0 as usize }, b.1)
    }
}

/// Owner of each query for a one-dimensional integration variable.
///
/// `order` lists the records sorted by position, `queries` must be sorted
/// ascending. For a query `q`, records left of it have distance
/// `offset + c (q - x)` and records right of it `offset + c (x - q)`, so the
/// best left candidate is a running minimum of `offset - c x` and the best
/// right one a running minimum of `offset + c x`. The two candidates are then
/// compared with the exact metric.
pub fn sweep_assign_1d(
    coefficient: f64,
    points: &[f64],
    offsets: &[f64],
    order: &[usize],
    queries: &[f64],
) -> Vec<usize> {
    let m = queries.len();
    let mut owner = vec![0usize; m];
    if order.is_empty() {
        return owner;
    }
    let norm = [(1usize, coefficient)];
    let exact = |k: usize, q: f64| accumulate_blocks(&norm, offsets[k], &[q], &[points[k]]);

    // left candidates
    let mut left: Vec<Option<usize>> = vec![None; m];
    let mut best: Option<(f64, usize)> = None;
    let mut r = 0;
    for (j, &q) in queries.iter().enumerate() {
        while r < order.len() && points[order[r]] <= q {
            let k = order[r];
            let key = offsets[k] - coefficient * points[k];
            if best.map_or(true, |(bk, bi)| key < bk || (key == bk && k < bi)) {
                best = Some((key, k));
            }
            r += 1;
        }
        left[j] = best.map(|b| b.1);
    }
    // right candidates, merged with the left ones
    let mut best: Option<(f64, usize)> = None;
    let mut r = order.len();
    for j in (0..m).rev() {
        let q = queries[j];
        while r > 0 && points[order[r - 1]] >= q {
            let k = order[r - 1];
            let key = offsets[k] + coefficient * points[k];
            if best.map_or(true, |(bk, bi)| key < bk || (key == bk && k < bi)) {
                best = Some((key, k));
            }
            r -= 1;
        }
        owner[j] = match (left[j], best.map(|b| b.1)) {
            (Some(a), Some(b)) => {
                let (da, db) = (exact(a, q), exact(b, q));
                if better(db, b, da, a) {
                    b
                } else {
                    a
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("nonempty record set"),
        };
    }
    owner
}

/// Record indices sorted by a one-dimensional position, ties by index.
#[derive(Clone, Debug, Default)]
pub struct SortedPositions {
    order: Vec<usize>,
}

impl SortedPositions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers record `k` (the next index) at `position`; `positions` holds
    /// the positions of records `0..k`.
    pub fn insert(&mut self, positions: &[f64], k: usize, position: f64) {
        let at = self.order.partition_point(|&i| {
            let p = positions[i];
            p < position || (p == position && i < k)
        });
        self.order.insert(at, k);
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let pts = (0..n * dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let offs = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() * 0.3 }).collect();
        (pts, offs)
    }

    #[test]
    fn tree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, dim) in &[(1, 1), (5, 2), (60, 1), (200, 3), (300, 5), (150, 10)] {
            let norm = BlockNorm::single(dim, 1.3);
            let (pts, offs) = random_case(&mut rng, n, dim);
            let tree = Neighbors::new(&norm, &pts, &offs);
            for _ in 0..100 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
                assert_eq!(tree.nearest(&q), brute_nearest(&norm, &pts, &offs, &q, None));
                let skip = rng.gen_range(0..n);
                assert_eq!(
                    tree.nearest_excluding(&q, skip),
                    brute_nearest(&norm, &pts, &offs, &q, Some(skip))
                );
            }
            for k in 0..n {
                let q = &pts[k * dim..(k + 1) * dim];
                let (i, d) = tree.nearest_from_record(k);
                assert_eq!(Some((i, d)), brute_nearest(&norm, &pts, &offs, q, None));
            }
        }
    }

    #[test]
    fn multi_block_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let norm = BlockNorm::new(vec![(1, 0.01), (2, 1.0)]);
        let (pts, offs) = random_case(&mut rng, 400, 3);
        let tree = Neighbors::new(&norm, &pts, &offs);
        for _ in 0..200 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() - 0.5).collect();
            assert_eq!(tree.nearest(&q), brute_nearest(&norm, &pts, &offs, &q, None));
        }
    }

    #[test]
    fn duplicates_resolve_to_smallest_index() {
        let norm = BlockNorm::single(2, 1.0);
        let pts = vec![0.1, 0.2, 0.1, 0.2, 0.1, 0.2];
        let offs = vec![0.0; 3];
        let tree = Neighbors::new(&norm, &pts, &offs);
        assert_eq!(tree.nearest(&[0.4, -0.3]).unwrap().0, 0);
        assert_eq!(tree.nearest_excluding(&[0.4, -0.3], 0).unwrap().0, 1);
        let order = [0, 1, 2];
        let one_d = vec![0.3, 0.3, 0.3];
        assert_eq!(sweep_assign_1d(1.0, &one_d, &offs, &order, &[-1.0, 0.3, 2.0]), vec![0, 0, 0]);
    }

    #[test]
    fn sweep_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let norm = BlockNorm::single(1, 0.7);
        for n in [1usize, 2, 7, 50, 300] {
            let (pts, offs) = random_case(&mut rng, n, 1);
            let mut sorted = SortedPositions::new();
            for k in 0..n {
                sorted.insert(&pts, k, pts[k]);
            }
            let mut queries: Vec<f64> = (0..500).map(|_| rng.gen::<f64>() * 1.4 - 0.7).collect();
            queries.extend_from_slice(&pts);
            queries.sort_by(f64::total_cmp);
            let got = sweep_assign_1d(0.7, &pts, &offs, sorted.order(), &queries);
            for (j, &q) in queries.iter().enumerate() {
                assert_eq!(got[j], brute_nearest(&norm, &pts, &offs, &[q], None).unwrap().0);
            }
        }
    }

    #[test]
    fn sorted_positions_keep_order() {
        let pos = [0.5, 0.1, 0.5, -1.0];
        let mut s = SortedPositions::new();
        for k in 0..pos.len() {
            s.insert(&pos, k, pos[k]);
        }
        assert_eq!(s.order(), &[3, 1, 0, 2]);
    }
}
