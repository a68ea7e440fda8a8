use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{distance_squared, GeometryError, Point3, PointCloud};

const LEAF_SIZE: usize = 8;

/// Static kd-tree over a fixed point set.
///
/// The tree is implicit: `order` is a permutation of point indices laid out so
/// that the median of every range is its splitting point and `axis[mid]` holds
/// the split axis. Ranges of at most `LEAF_SIZE` points are scanned linearly.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    axis: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        assert!(points.len() < u32::MAX as usize, "cloud too large to index");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut axis = alloc::vec![0u8; points.len()];
        build(&points, &mut order, &mut axis, 0);
        Self { points, order, axis }
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

    /// Closest indexed point as `(index, distance)`. Ties go to the lower index.
    pub fn nearest(&self, query: &Point3) -> Result<(usize, f64), GeometryError> {
        if self.points.is_empty() {
            return Err(GeometryError::EmptyIndex);
        }
        let mut best = Candidate { dist2: f64::INFINITY, index: u32::MAX };
        self.nearest_in(query, 0, self.order.len(), &mut best);
        Ok((best.index as usize, libm::sqrt(best.dist2)))
    }

    fn nearest_in(&self, q: &Point3, lo: usize, hi: usize, best: &mut Candidate) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let c = Candidate { dist2: distance_squared(q, &self.points[i as usize]), index: i };
                if c < *best {
                    *best = c;
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let i = self.order[mid];
        let c = Candidate { dist2: distance_squared(q, &self.points[i as usize]), index: i };
        if c < *best {
            *best = c;
        }
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[i as usize][ax];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.nearest_in(q, near.0, near.1, best);
        if diff * diff <= best.dist2 {
            self.nearest_in(q, far.0, far.1, best);
        }
    }

    /// The `k` closest points as `(index, squared distance)`, ascending.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(query, k, 0, self.order.len(), &mut heap);
        let mut out: Vec<(usize, f64)> =
            heap.into_iter().map(|c| (c.index as usize, c.dist2)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_in(&self, q: &Point3, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        let offer = |heap: &mut BinaryHeap<Candidate>, i: u32| {
            let c = Candidate { dist2: distance_squared(q, &self.points[i as usize]), index: i };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(heap, i);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let i = self.order[mid];
        offer(heap, i);
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[i as usize][ax];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.knn_in(q, k, near.0, near.1, heap);
        let bound = if heap.len() < k { f64::INFINITY } else { heap.peek().unwrap().dist2 };
        if diff * diff <= bound {
            self.knn_in(q, k, far.0, far.1, heap);
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within_radius(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() && radius >= 0.0 {
            self.radius_in(query, radius * radius, 0, self.order.len(), &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_in(&self, q: &Point3, r2: f64, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                if distance_squared(q, &self.points[i as usize]) <= r2 {
                    out.push(i as usize);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let i = self.order[mid];
        if distance_squared(q, &self.points[i as usize]) <= r2 {
            out.push(i as usize);
        }
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[i as usize][ax];
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_in(q, r2, lo, mid, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_in(q, r2, mid + 1, hi, out);
        }
    }
}

fn build(points: &[Point3], order: &mut [u32], axis: &mut [u8], offset: usize) {
    let n = order.len();
    if n <= LEAF_SIZE {
        return;
    }
    // Split along the axis of largest extent.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let ax = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][ax].total_cmp(&points[b as usize][ax]).then(a.cmp(&b))
    });
    axis[offset + mid] = ax as u8;
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, axis, offset);
    build(points, &mut rest[1..], axis, offset + mid + 1);
}

/// Euclidean distance from `p` to the closest point of the index.
pub fn nearest_distance(p: &Point3, index: &SpatialIndex) -> Result<f64, GeometryError> {
    index.nearest(p).map(|(_, d)| d)
}
