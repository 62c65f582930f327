//! Exact nearest-neighbour search over a static cloud.
//!
//! Results match a linear scan bit for bit: distances are compared as
//! squared Euclidean values computed the same way, and ties go to the
//! lowest point index.

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// A neighbour found in the indexed cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Euclidean distance in meters.
    pub distance: f64,
}

/// A source point paired with its nearest target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    coords: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn better(d2: f64, index: usize, best: Option<(usize, f64)>) -> bool {
    match best {
        None => true,
        Some((bi, bd)) => d2 < bd || (d2 == bd && index < bi),
    }
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::with_leaf_size(cloud, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(cloud: &PointCloud, leaf_size: usize) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let coords: Vec<[f64; 3]> = cloud.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut tree = KdTree {
            order: (0..coords.len()).collect(),
            coords,
            nodes: Vec::new(),
            leaf_size: leaf_size.max(1),
        };
        tree.build_node(0, tree.coords.len());
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.coords[i][a]);
                hi[a] = hi[a].max(self.coords[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .expect("three axes");
        let mid = start + (end - start) / 2;
        let coords = &self.coords;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            coords[i][axis].total_cmp(&coords[j][axis]).then(i.cmp(&j))
        });
        let value = self.coords[self.order[mid]][axis];
        self.nodes.push(Node::Split { axis, value, left: 0, right: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn point(&self, index: usize) -> [f64; 3] {
        self.coords[index]
    }

    /// Nearest indexed point within `max_dist` (inclusive) of `query`. `max_dist`
    /// may be infinite.
    pub fn nearest_within(&self, query: &Point3, max_dist: f64) -> Result<Option<Neighbor>> {
        if !(max_dist > 0.0) {
            return Err(Error::InvalidDistance(max_dist));
        }
        Ok(self
            .nearest_sq(&[query.x, query.y, query.z], max_dist * max_dist)
            .map(|(index, d2)| Neighbor { index, distance: d2.sqrt() }))
    }

    /// Nearest indexed point regardless of distance.
    pub fn nearest(&self, query: &Point3) -> Neighbor {
        let (index, d2) = self
            .nearest_sq(&[query.x, query.y, query.z], f64::INFINITY)
            .expect("tree is non-empty");
        Neighbor { index, distance: d2.sqrt() }
    }

    /// Hot-path query: `(index, squared distance)` of the nearest point with
    /// squared distance `<= max_d2`.
    pub(crate) fn nearest_sq(&self, q: &[f64; 3], max_d2: f64) -> Option<(usize, f64)> {
        let mut best = None;
        self.search(0, q, max_d2, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64; 3], max_d2: f64, best: &mut Option<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = dist2(&self.coords[i], q);
                    if d2 <= max_d2 && better(d2, i, *best) {
                        *best = Some((i, d2));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, max_d2, best);
                let bound = best.map_or(max_d2, |(_, d)| d);
                if diff * diff <= bound {
                    self.search(far, q, max_d2, best);
                }
            }
        }
    }

    /// The `k` nearest points, closest first (ties by index).
    pub fn nearest_k(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        let q = [query.x, query.y, query.z];
        let mut found: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search_k(0, &q, k, &mut found);
        }
        found.into_iter().map(|(d2, index)| Neighbor { index, distance: d2.sqrt() }).collect()
    }

    fn search_k(&self, node: usize, q: &[f64; 3], k: usize, found: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let entry = (dist2(&self.coords[i], q), i);
                    if found.len() == k {
                        let worst = found[k - 1];
                        if entry.0 > worst.0 || (entry.0 == worst.0 && entry.1 > worst.1) {
                            continue;
                        }
                    }
                    let pos = found.partition_point(|e| e.0 < entry.0 || (e.0 == entry.0 && e.1 < entry.1));
                    found.insert(pos, entry);
                    found.truncate(k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_k(near, q, k, found);
                if found.len() < k || diff * diff <= found[k - 1].0 {
                    self.search_k(far, q, k, found);
                }
            }
        }
    }
}
