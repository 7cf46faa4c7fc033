//! Exact nearest-neighbor search over an immutable point set.
//!
//! The tree returns exactly what an exhaustive scan returns: the same squared
//! distance bits and, among equidistant points, the lowest point index.

use crate::error::{Error, Result};
use crate::geom::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// k-d tree over a borrowed-then-owned copy of the points.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// A query hit: point index plus squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub dist_sq: f64,
}

impl Hit {
    pub fn dist(&self) -> f64 {
        self.dist_sq.sqrt()
    }

    #[inline]
    fn better_than(&self, o: &Hit) -> bool {
        self.dist_sq < o.dist_sq || (self.dist_sq == o.dist_sq && self.index < o.index)
    }
}

impl NnIndex {
    pub fn new(points: &[Vec3]) -> NnIndex {
        let mut idx = NnIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            idx.build(0, points.len());
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = self.points[self.order[start]];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            lo = lo.component_min(self.points[i]);
            hi = hi.component_max(self.points[i]);
        }
        let span = hi - lo;
        let axis = if span.x >= span.y && span.x >= span.z {
            0
        } else if span.y >= span.z {
            1
        } else {
            2
        };
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Nearest point to `q`; ties go to the lowest index.
    pub fn nearest(&self, q: Vec3) -> Result<Hit> {
        if self.points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut best = Hit {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        };
        self.nearest_rec(0, q, &mut best);
        Ok(best)
    }

    /// Nearest distance, or `+∞` for an empty index.
    pub fn nearest_dist(&self, q: Vec3) -> f64 {
        self.nearest(q).map(|h| h.dist()).unwrap_or(f64::INFINITY)
    }

    fn nearest_rec(&self, node: usize, q: Vec3, best: &mut Hit) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let hit = Hit {
                        index: i,
                        dist_sq: q.dist_sq(self.points[i]),
                    };
                    if hit.better_than(best) {
                        *best = hit;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, best);
                // Strict comparison: an equidistant point on the far side may
                // still win the index tie-break.
                if diff * diff <= best.dist_sq {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// Indices of all points with `‖p − q‖ ≤ radius`, ascending by index.
    pub fn within(&self, q: Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.within_rec(0, q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: Vec3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if q.dist_sq(self.points[i]) <= r2 {
                        out.push(i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.within_rec(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.within_rec(right, q, r2, out);
                }
            }
        }
    }

    /// The `k` nearest points ordered by (distance, index).
    pub fn knn(&self, q: Vec3, k: usize) -> Vec<Hit> {
        let mut best: Vec<Hit> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.knn_rec(0, q, k, &mut best);
        }
        best
    }

    fn knn_rec(&self, node: usize, q: Vec3, k: usize, best: &mut Vec<Hit>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let hit = Hit {
                        index: i,
                        dist_sq: q.dist_sq(self.points[i]),
                    };
                    if best.len() < k || hit.better_than(best.last().unwrap()) {
                        let pos = best.partition_point(|b| b.better_than(&hit));
                        best.insert(pos, hit);
                        best.truncate(k);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, best);
                let bound = if best.len() < k {
                    f64::INFINITY
                } else {
                    best.last().unwrap().dist_sq
                };
                if diff * diff <= bound {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }
}

/// Exhaustive nearest search with the same tie rule as [`NnIndex::nearest`].
pub fn nearest_brute(points: &[Vec3], q: Vec3) -> Result<Hit> {
    let mut best: Option<Hit> = None;
    for (i, p) in points.iter().enumerate() {
        let hit = Hit {
            index: i,
            dist_sq: q.dist_sq(*p),
        };
        if best.is_none_or(|b| hit.better_than(&b)) {
            best = Some(hit);
        }
    }
    best.ok_or(Error::EmptyPointSet)
}

/// Minimum distance between two point sets (`+∞` if either is empty).
pub fn set_distance(a: &[Vec3], b_index: &NnIndex) -> f64 {
    a.iter()
        .map(|p| b_index.nearest_dist(*p))
        .fold(f64::INFINITY, f64::min)
}
