//! Static kd-tree over a point snapshot.
//!
//! Radius queries are closed (`‖p − c‖ ≤ r`, compared on squared distances)
//! and nearest-neighbor ties resolve to the lower point index, so results are
//! identical to a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::{Point3, PointCloud};
use crate::error::{check_radius, Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// Builds an index over a snapshot of `cloud`.
pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::new(cloud.points())
}

impl SpatialIndex {
    pub fn new(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        assert!(points.len() < u32::MAX as usize, "index supports < 2^32 points");
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build(0, points.len());
        Ok(index)
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mut lo = self.points[self.order[start] as usize];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let spread = hi - lo;
        let axis = spread.imax();
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .partial_cmp(&points[b as usize][axis])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id as usize] = Node::Split {
            axis: axis as u8,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Indices of all points with `‖p − center‖ ≤ radius`, ascending.
    pub fn radius_neighbors(&self, center: &Point3, radius: f64) -> Result<Vec<usize>> {
        check_radius(radius)?;
        let mut out = Vec::new();
        self.for_each_within(center, radius, |i, _| out.push(i));
        out.sort_unstable();
        Ok(out)
    }

    /// Calls `f(index, squared_distance)` for every point within `radius`, in
    /// a traversal order that is fixed for a given index.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, center: &Point3, radius: f64, mut f: F) {
        let r2 = radius * radius;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            match self.nodes[id as usize] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start as usize..end as usize] {
                        let d2 = (self.points[i as usize] - center).norm_squared();
                        if d2 <= r2 {
                            f(i as usize, d2);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let c = center[axis as usize];
                    if c + radius >= value {
                        stack.push(right);
                    }
                    if c - radius <= value {
                        stack.push(left);
                    }
                }
            }
        }
    }

    /// Appends neighbor indices within `radius` to `out` (traversal order).
    pub fn collect_within(&self, center: &Point3, radius: f64, out: &mut Vec<usize>) {
        self.for_each_within(center, radius, |i, _| out.push(i));
    }

    pub fn count_within(&self, center: &Point3, radius: f64) -> usize {
        let mut n = 0;
        self.for_each_within(center, radius, |_, _| n += 1);
        n
    }

    /// Globally nearest point and its distance; `None` when `max_distance` is
    /// given and nothing lies within it.
    pub fn nearest_neighbor(&self, query: &Point3, max_distance: Option<f64>) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, max_distance.map_or(f64::INFINITY, |d| d * d));
        let bounded = max_distance.is_some();
        self.nearest_rec(0, query, &mut best, bounded);
        (best.0 != usize::MAX).then(|| (best.0, best.1.sqrt()))
    }

    fn nearest_rec(&self, id: u32, q: &Point3, best: &mut (usize, f64), bounded: bool) {
        match self.nodes[id as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let i = i as usize;
                    let d2 = (self.points[i] - q).norm_squared();
                    let better = d2 < best.1
                        || (d2 == best.1 && (i < best.0 || (best.0 == usize::MAX && bounded)));
                    if better {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best, bounded);
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best, bounded);
                }
            }
        }
    }

    /// The `k` nearest points as `(index, distance)`, sorted by distance then index.
    pub fn k_nearest(&self, query: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.index, c.d2.sqrt())).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_rec(&self, id: u32, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[id as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate {
                        d2: (self.points[i as usize] - q).norm_squared(),
                        index: i as usize,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.d2)
                };
                if diff * diff <= worst {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }
}

/// Max-heap entry ordered by (distance, index).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}
