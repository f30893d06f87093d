//! Exact 3D k-d tree for nearest-neighbor queries over point sets.
//!
//! Built once over a slice of points; queries return exact results with a
//! deterministic tie-break (smallest index wins on equal distance), so a
//! linear scan over the same points produces identical answers.

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Index into the original point slice.
    point: u32,
    /// Split axis (0, 1, 2).
    axis: u8,
    left: i32,
    right: i32,
}

const NIL: i32 = -1;

/// Static k-d tree over `Vector3<f64>` points.
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    points: Vec<Vector3<f64>>,
    root: i32,
}

/// One nearest-neighbor result: index into the build slice and squared
/// Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl KdTree {
    /// Build from a point slice. Median splits on the widest-spread axis
    /// of each subset.
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order, &mut nodes);
        KdTree {
            nodes,
            points: points.to_vec(),
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_rec(points: &[Vector3<f64>], order: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
        if order.is_empty() {
            return NIL;
        }
        // Pick the axis with the largest coordinate spread.
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in order.iter() {
            let p = &points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let spread = hi - lo;
        let axis = if spread.x >= spread.y && spread.x >= spread.z {
            0
        } else if spread.y >= spread.z {
            1
        } else {
            2
        };

        let mid = order.len() / 2;
        // Deterministic ordering: coordinate, then original index.
        order.select_nth_unstable_by(mid, |&a, &b| {
            let ca = points[a as usize][axis];
            let cb = points[b as usize][axis];
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        });
        let point = order[mid];

        let slot = nodes.len();
        nodes.push(Node {
            point,
            axis: axis as u8,
            left: NIL,
            right: NIL,
        });
        let (left_half, rest) = order.split_at_mut(mid);
        let left = Self::build_rec(points, left_half, nodes);
        let right = Self::build_rec(points, &mut rest[1..], nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        slot as i32
    }

    /// Exact nearest neighbor, or `None` for an empty tree.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<Neighbor> {
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        };
        self.nearest_rec(self.root, query, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    fn nearest_rec(&self, node: i32, query: &Vector3<f64>, best: &mut Neighbor) {
        if node == NIL {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        let d = (self.points[idx] - query).norm_squared();
        if d < best.dist_sq || (d == best.dist_sq && idx < best.index) {
            *best = Neighbor {
                index: idx,
                dist_sq: d,
            };
        }
        let axis = n.axis as usize;
        let delta = query[axis] - self.points[idx][axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, query, best);
        if delta * delta <= best.dist_sq {
            self.nearest_rec(far, query, best);
        }
    }

    /// Exact k nearest neighbors, sorted by ascending distance with ties
    /// broken by ascending index. Returns fewer than `k` if the tree is
    /// smaller.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        // Bounded insertion into a sorted vec; k is small (~10) in all uses,
        // so this beats a heap on constant factors and keeps ordering
        // deterministic.
        let mut found: Vec<Neighbor> = Vec::with_capacity(k + 1);
        self.knn_rec(self.root, query, k, &mut found);
        found
    }

    fn knn_rec(&self, node: i32, query: &Vector3<f64>, k: usize, found: &mut Vec<Neighbor>) {
        if node == NIL {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        let d = (self.points[idx] - query).norm_squared();
        let candidate = Neighbor {
            index: idx,
            dist_sq: d,
        };
        let pos = found.partition_point(|e| {
            e.dist_sq < candidate.dist_sq
                || (e.dist_sq == candidate.dist_sq && e.index < candidate.index)
        });
        if pos < k {
            found.insert(pos, candidate);
            found.truncate(k);
        }

        let axis = n.axis as usize;
        let delta = query[axis] - self.points[idx][axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_rec(near, query, k, found);
        let worst = if found.len() < k {
            f64::INFINITY
        } else {
            found[k - 1].dist_sq
        };
        if delta * delta <= worst {
            self.knn_rec(far, query, k, found);
        }
    }

    /// Nearest neighbor within `radius` (inclusive), or `None`.
    pub fn nearest_within(&self, query: &Vector3<f64>, radius: f64) -> Option<Neighbor> {
        self.nearest(query)
            .filter(|n| n.dist_sq <= radius * radius)
    }
}
