//! Static 3-d tree with exact nearest and k-nearest queries. Ties on
//! distance resolve to the lowest point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::pointcloud::{squared_distance, Point};

#[derive(Clone, Debug)]
pub struct KdTree<'a> {
    points: &'a [Point],
    /// Point indices arranged as an implicit balanced tree: the median of
    /// `order[lo..hi]` sits at `(lo + hi) / 2`.
    order: Vec<usize>,
    axes: Vec<u8>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point]) -> KdTree<'a> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes);
        KdTree {
            points,
            order,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(index, squared distance)` of the nearest point; `None` when empty.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = Candidate(f64::INFINITY, usize::MAX);
        self.search(q, 0, self.order.len(), &mut best);
        Some((best.1, best.0))
    }

    fn search(&self, q: &Point, lo: usize, hi: usize, best: &mut Candidate) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let c = Candidate(squared_distance(q, &self.points[i]), i);
        if c < *best {
            *best = c;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        if diff * diff <= best.0 {
            self.search(q, far.0, far.1, best);
        }
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn k_nearest(&self, q: &Point, k: usize) -> Vec<(usize, f64)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search_k(q, 0, self.order.len(), k, &mut heap);
        }
        let mut v: Vec<Candidate> = heap.into_vec();
        v.sort();
        v.into_iter().map(|c| (c.1, c.0)).collect()
    }

    fn search_k(
        &self,
        q: &Point,
        lo: usize,
        hi: usize,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let c = Candidate(squared_distance(q, &self.points[i]), i);
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_k(q, near.0, near.1, k, heap);
        if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
            self.search_k(q, far.0, far.1, k, heap);
        }
    }
}

fn build(points: &[Point], order: &mut [usize], axes: &mut [u8]) {
    if order.len() <= 1 {
        return;
    }
    // split on the axis of largest spread
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, right) = order.split_at_mut(mid);
    let (aleft, aright) = axes.split_at_mut(mid);
    build(points, left, aleft);
    build(points, &mut right[1..], &mut aright[1..]);
}
