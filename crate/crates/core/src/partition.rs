//! Unsupervised macro-component hints and the partition noise injectors.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::ingest::SurfaceObject;
use crate::nn::NnIndex;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Contiguous labels in order of first element.
    pub fn labels(&mut self) -> Vec<usize> {
        let roots: Vec<usize> = (0..self.parent.len()).map(|i| self.find(i)).collect();
        crate::ingest::contiguous_labels(&roots)
    }
}

/// Point → partition assignment with contiguous ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assign: Vec<usize>,
    pub count: usize,
}

impl Partition {
    /// Compacts arbitrary labels to `0..k`, preserving their relative order.
    pub fn from_labels(labels: &[usize]) -> Partition {
        let mut ids: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
        for (k, v) in ids.values_mut().enumerate() {
            *v = k;
        }
        Partition {
            assign: labels.iter().map(|l| ids[l]).collect(),
            count: ids.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &a in &self.assign {
            s[a] += 1;
        }
        s
    }

    pub fn members(&self, part: usize) -> Vec<usize> {
        (0..self.assign.len())
            .filter(|&i| self.assign[i] == part)
            .collect()
    }

    pub fn supports(&self, points: &[Vec3]) -> Vec<Vec<Vec3>> {
        let mut out = vec![Vec::new(); self.count];
        for (p, &a) in points.iter().zip(&self.assign) {
            out[a].push(*p);
        }
        out
    }

    pub fn centroids(&self, points: &[Vec3]) -> Vec<Vec3> {
        self.supports(points)
            .iter()
            .map(|s| Vec3::centroid(s))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub link_radius: f64,
    pub max_frac: f64,
    pub min_count: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            link_radius: 0.03,
            max_frac: 0.6,
            min_count: 8,
        }
    }
}

/// Splits `ids` by the median along the longest bounding-box axis. The lower
/// half receives `⌊n/2⌋` points; ties in the coordinate order by point id.
fn median_bisect(points: &[Vec3], ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut lo = points[ids[0]];
    let mut hi = lo;
    for &i in ids {
        lo = lo.component_min(points[i]);
        hi = hi.component_max(points[i]);
    }
    let span = hi - lo;
    let axis = if span.x >= span.y && span.x >= span.z {
        0
    } else if span.y >= span.z {
        1
    } else {
        2
    };
    let mut sorted = ids.to_vec();
    sorted.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let right = sorted.split_off(sorted.len() / 2);
    (sorted, right)
}

fn groups_of(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

/// Connected components of the radius graph, recursive median splitting of
/// groups holding more than `max_frac` of the points, then absorption of
/// groups below `min_count` into the group of their nearest foreign point.
pub fn partition_hints(obj: &SurfaceObject, cfg: &PartitionConfig) -> Partition {
    let n = obj.len();
    if n == 0 {
        return Partition {
            assign: Vec::new(),
            count: 0,
        };
    }
    let pts = &obj.points;
    let index = NnIndex::new(pts);
    let mut dsu = Dsu::new(n);
    for (i, p) in pts.iter().enumerate() {
        for j in index.within(*p, cfg.link_radius) {
            dsu.union(i, j);
        }
    }
    let initial = dsu.labels();

    // Oversized groups.
    let limit = cfg.max_frac * n as f64;
    let mut labels = vec![0usize; n];
    let mut next = 0;
    for (_, ids) in groups_of(&initial) {
        let mut stack = vec![ids];
        while let Some(g) = stack.pop() {
            if g.len() as f64 > limit && g.len() > 1 {
                let (a, b) = median_bisect(pts, &g);
                // Right half first onto the stack so the left half is labeled first.
                stack.push(b);
                stack.push(a);
            } else {
                for &i in &g {
                    labels[i] = next;
                }
                next += 1;
            }
        }
    }

    // Small fragments.
    loop {
        let groups = groups_of(&labels);
        if groups.len() <= 1 {
            break;
        }
        let small = groups
            .iter()
            .filter(|(_, ids)| ids.len() < cfg.min_count)
            .min_by_key(|(l, ids)| (ids.len(), **l));
        let Some((&label, ids)) = small else { break };
        let mut best: Option<(f64, usize)> = None;
        for &i in ids {
            for (j, q) in pts.iter().enumerate() {
                if labels[j] == label {
                    continue;
                }
                let d = pts[i].dist_sq(*q);
                if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                    best = Some((d, j));
                }
            }
        }
        let target = labels[best.expect("another group exists").1];
        for &i in ids {
            labels[i] = target;
        }
    }
    Partition::from_labels(&labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Merge,
    Split,
    Random,
}

impl std::str::FromStr for NoiseMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "merge" => Ok(NoiseMode::Merge),
            "split" => Ok(NoiseMode::Split),
            "random" => Ok(NoiseMode::Random),
            other => Err(format!("unknown noise mode {other:?}")),
        }
    }
}

/// Perturbs a partition. `strength ∈ [0,1]` is the fraction of partition
/// pairs merged (closest centroids first), of partitions bisected (largest
/// first), or of points relabeled uniformly at random.
pub fn inject_noise(
    p: &Partition,
    points: &[Vec3],
    mode: NoiseMode,
    strength: f64,
    seed: u64,
) -> Partition {
    let strength = strength.clamp(0.0, 1.0);
    if strength == 0.0 || p.count == 0 {
        return p.clone();
    }
    match mode {
        NoiseMode::Merge => {
            let c = p.centroids(points);
            let mut pairs = Vec::new();
            for a in 0..p.count {
                for b in a + 1..p.count {
                    pairs.push((c[a].dist_sq(c[b]), a, b));
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
            let take = (strength * pairs.len() as f64).round() as usize;
            let mut dsu = Dsu::new(p.count);
            for &(_, a, b) in pairs.iter().take(take) {
                dsu.union(a, b);
            }
            let roots: Vec<usize> = (0..p.count).map(|k| dsu.find(k)).collect();
            Partition::from_labels(&p.assign.iter().map(|&a| roots[a]).collect::<Vec<_>>())
        }
        NoiseMode::Split => {
            let sizes = p.sizes();
            let mut order: Vec<usize> = (0..p.count).collect();
            order.sort_by_key(|&k| (std::cmp::Reverse(sizes[k]), k));
            let take = (strength * p.count as f64).round() as usize;
            let mut labels: Vec<usize> = p.assign.clone();
            let mut fresh = p.count;
            for &k in order.iter().take(take) {
                let members = p.members(k);
                if members.len() < 2 {
                    continue;
                }
                let (_, right) = median_bisect(points, &members);
                for i in right {
                    labels[i] = fresh;
                }
                fresh += 1;
            }
            Partition::from_labels(&labels)
        }
        NoiseMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = p
                .assign
                .iter()
                .map(|&a| {
                    if rng.random::<f64>() < strength {
                        rng.random_range(0..p.count)
                    } else {
                        a
                    }
                })
                .collect();
            Partition::from_labels(&labels)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Points on a regular grid filling an axis-aligned box surface region.
    fn cube_grid(origin: Vec3, size: f64, step: f64) -> Vec<Vec3> {
        let n = (size / step).round() as usize;
        let mut v = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    v.push(origin + Vec3::new(i as f64, j as f64, k as f64) * step);
                }
            }
        }
        v
    }

    fn make(points: Vec<Vec3>) -> SurfaceObject {
        let n = points.len();
        // Keep raw coordinates: scale is irrelevant to the tested radii when
        // objects are already within [-1, 1].
        SurfaceObject {
            id: "p".into(),
            points,
            normals: vec![Vec3::Z; n],
            component_of: vec![0; n],
            extent: 2.0,
        }
    }

    #[test]
    fn two_separated_cubes() {
        let mut pts = cube_grid(Vec3::new(-1.0, 0.0, 0.0), 0.5, 0.05);
        pts.extend(cube_grid(Vec3::new(0.5, 0.0, 0.0), 0.5, 0.05));
        let cfg = PartitionConfig {
            link_radius: 0.1,
            max_frac: 1.0,
            min_count: 1,
        };
        let p = partition_hints(&make(pts), &cfg);
        assert_eq!(p.count, 2);
    }

    #[test]
    fn fragment_is_absorbed() {
        let mut pts = cube_grid(Vec3::ZERO, 0.5, 0.05);
        let base = pts.len();
        // 3-point fragment, 0.15 from the cube face (beyond link radius 0.1)
        // but adjacent to nothing else.
        for k in 0..3 {
            pts.push(Vec3::new(0.65, 0.1 + 0.01 * k as f64, 0.1));
        }
        assert!(pts[base].dist(Vec3::new(0.5, 0.1, 0.1)) > 0.1);
        let cfg = PartitionConfig {
            link_radius: 0.1,
            max_frac: 1.0,
            min_count: 5,
        };
        let p = partition_hints(&make(pts), &cfg);
        assert_eq!(p.count, 1);
    }

    #[test]
    fn fragment_within_link_radius_joins_directly() {
        let mut pts = cube_grid(Vec3::ZERO, 0.5, 0.05);
        for k in 0..3 {
            pts.push(Vec3::new(0.55, 0.1 + 0.01 * k as f64, 0.1));
        }
        let cfg = PartitionConfig {
            link_radius: 0.1,
            max_frac: 1.0,
            min_count: 5,
        };
        assert_eq!(partition_hints(&make(pts), &cfg).count, 1);
    }

    #[test]
    fn oversized_cube_is_split() {
        let pts = cube_grid(Vec3::ZERO, 1.0, 0.1);
        let n = pts.len();
        let cfg = PartitionConfig {
            link_radius: 0.15,
            max_frac: 0.4,
            min_count: 8,
        };
        let p = partition_hints(&make(pts), &cfg);
        assert!(p.count >= 3, "got {}", p.count);
        for s in p.sizes() {
            assert!(s as f64 <= 0.4 * n as f64);
        }
    }

    #[test]
    fn single_point_object() {
        let o = make(vec![Vec3::ZERO]);
        assert_eq!(partition_hints(&o, &PartitionConfig::default()).count, 1);
    }

    fn three_blobs() -> (Vec<Vec3>, Partition) {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in [Vec3::ZERO, Vec3::X, Vec3::new(3.0, 0.0, 0.0)].iter().enumerate() {
            for i in 0..10 {
                pts.push(*c + Vec3::new(0.01 * i as f64, 0.0, 0.0));
                labels.push(k);
            }
        }
        (pts, Partition::from_labels(&labels))
    }

    #[test]
    fn zero_strength_is_identity() {
        let (pts, p) = three_blobs();
        for mode in [NoiseMode::Merge, NoiseMode::Split, NoiseMode::Random] {
            assert_eq!(inject_noise(&p, &pts, mode, 0.0, 9), p);
        }
    }

    #[test]
    fn random_with_single_label_is_identity() {
        let pts = vec![Vec3::ZERO, Vec3::X, Vec3::Y];
        let p = Partition::from_labels(&[0, 0, 0]);
        assert_eq!(inject_noise(&p, &pts, NoiseMode::Random, 1.0, 3), p);
    }

    #[test]
    fn full_merge_collapses() {
        let (pts, p) = three_blobs();
        assert_eq!(inject_noise(&p, &pts, NoiseMode::Merge, 1.0, 0).count, 1);
        // One of three pairs: the nearest centroids (blobs 0 and 1) merge.
        let m = inject_noise(&p, &pts, NoiseMode::Merge, 0.34, 0);
        assert_eq!(m.count, 2);
        assert_eq!(m.assign[0], m.assign[10]);
        assert_ne!(m.assign[0], m.assign[20]);
    }

    #[test]
    fn split_bisects() {
        let (pts, p) = three_blobs();
        let s = inject_noise(&p, &pts, NoiseMode::Split, 1.0, 0);
        assert_eq!(s.count, 6);
        assert!(s.sizes().iter().all(|&n| n == 5));
    }

    #[test]
    fn random_is_seeded() {
        let (pts, p) = three_blobs();
        let a = inject_noise(&p, &pts, NoiseMode::Random, 1.0, 42);
        let b = inject_noise(&p, &pts, NoiseMode::Random, 1.0, 42);
        assert_eq!(a, b);
        assert_ne!(a, p);
    }
}
