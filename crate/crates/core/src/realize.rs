//! Component-owned realization, decoding energy, assembly-graph poses and
//! the collision and support audits.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};
use crate::nn::NnIndex;

pub const DEFAULT_MARGIN: f64 = 0.0;
pub const DEFAULT_KEEP_FLOOR: f64 = 0.90;
pub const SWEEP_KEEP_FLOORS: [f64; 3] = [0.85, 0.90, 0.95];
pub const SWEEP_MARGINS: [f64; 3] = [0.0, 0.25, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealizeConfig {
    pub margin: f64,
    pub keep_floor: f64,
}

impl Default for RealizeConfig {
    fn default() -> Self {
        RealizeConfig {
            margin: DEFAULT_MARGIN,
            keep_floor: DEFAULT_KEEP_FLOOR,
        }
    }
}

/// Keep mask from per-point `d_own − d_other` values. Per partition, at least
/// `ceil(keep_floor · n)` points survive, topped up by smallest difference.
pub fn keep_by_margin(diff: &[f64], owner: &[usize], partitions: usize, margin: f64, keep_floor: f64) -> Result<Vec<bool>> {
    if diff.len() != owner.len() {
        return Err(Error::DimensionMismatch {
            expected: owner.len(),
            got: diff.len(),
        });
    }
    if !(0.0..=1.0).contains(&keep_floor) {
        return Err(Error::InvalidArgument(format!("keep floor {keep_floor} outside [0, 1]")));
    }
    if let Some(&p) = owner.iter().find(|&&p| p >= partitions) {
        return Err(Error::UnknownPartition(p));
    }
    let mut keep: Vec<bool> = diff.iter().map(|&d| d <= margin).collect();
    let mut members = vec![Vec::new(); partitions];
    for (i, &p) in owner.iter().enumerate() {
        members[p].push(i);
    }
    for mut m in members {
        let need = (keep_floor * m.len() as f64 - 1e-9).ceil().max(0.0) as usize;
        let have = m.iter().filter(|&&i| keep[i]).count();
        if have >= need {
            continue;
        }
        m.sort_by(|&a, &b| diff[a].total_cmp(&diff[b]).then(a.cmp(&b)));
        for &i in m.iter().take(need) {
            keep[i] = true;
        }
    }
    Ok(keep)
}

/// Keeps a decoded point iff `d_own ≤ d_other + m`, subject to the keep floor.
/// A single-partition object keeps everything.
pub fn realize_component_owned(
    points: &[Vec3],
    owner: &[usize],
    supports: &[Vec<Vec3>],
    cfg: &RealizeConfig,
) -> Result<Vec<bool>> {
    if points.len() != owner.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: owner.len(),
        });
    }
    if let Some(&p) = owner.iter().find(|&&p| p >= supports.len()) {
        return Err(Error::UnknownPartition(p));
    }
    if supports.iter().any(Vec::is_empty) {
        return Err(Error::EmptyPointSet);
    }
    let own: Vec<NnIndex> = supports.iter().map(|s| NnIndex::new(s)).collect();
    let diff: Vec<f64> = points
        .iter()
        .zip(owner)
        .map(|(&q, &k)| {
            let d_own = own[k].nearest_dist(q);
            let d_other = (0..own.len())
                .filter(|&j| j != k)
                .map(|j| own[j].nearest_dist(q))
                .fold(f64::INFINITY, f64::min);
            d_own - d_other
        })
        .collect();
    keep_by_margin(&diff, owner, supports.len(), cfg.margin, cfg.keep_floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingCandidate {
    pub log_p_ar: f64,
    pub seam_compat: Vec<f64>,
}

/// `E = −log p_AR + λ Σ −log max(Ĉ, ε)`.
pub fn decoding_energy(cand: &DecodingCandidate, lambda: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("energy floor {eps} must be positive")));
    }
    if !cand.log_p_ar.is_finite() || cand.seam_compat.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("decoding candidate"));
    }
    let seam: f64 = cand.seam_compat.iter().map(|&c| -c.max(eps).ln()).sum();
    Ok(-cand.log_p_ar + lambda * seam)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Largest tolerated penetration proxy on a pair.
    pub delta_coll: f64,
    /// Band around a node's samples that counts as inside it.
    pub band: f64,
    pub delta_support: f64,
    pub r_max: f64,
    pub d_max: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            delta_coll: 0.05,
            band: 0.02,
            delta_support: 0.05,
            r_max: 0.5,
            d_max: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub parent: usize,
    pub child: usize,
    /// Child pose in the parent's frame.
    pub relative: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyGraph {
    /// Pose of each node used when it is a root.
    pub roots: Vec<Pose>,
    pub edges: Vec<GraphEdge>,
    pub cfg: AuditConfig,
}

impl AssemblyGraph {
    pub fn new(nodes: usize, cfg: AuditConfig) -> Self {
        AssemblyGraph {
            roots: vec![Pose::IDENTITY; nodes],
            edges: Vec::new(),
            cfg,
        }
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn add_edge(&mut self, parent: usize, child: usize, relative: Pose) {
        self.edges.push(GraphEdge { parent, child, relative });
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.edges
            .iter()
            .any(|e| (e.parent == a && e.child == b) || (e.parent == b && e.child == a))
    }
}

/// Global pose per node by composing relative poses down each root path.
/// Errors on a cycle (listing its nodes), on a node with two parents, and on
/// depth beyond `d_max`.
pub fn accumulate_transforms(graph: &AssemblyGraph) -> Result<Vec<Pose>> {
    let n = graph.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut relative = vec![Pose::IDENTITY; n];
    for e in &graph.edges {
        if e.parent >= n || e.child >= n {
            return Err(Error::UnknownComponent(e.parent.max(e.child)));
        }
        if e.parent == e.child {
            return Err(Error::Cycle(vec![e.child]));
        }
        if parent[e.child].is_some() {
            return Err(Error::InvalidArgument(format!("node {} has two parents", e.child)));
        }
        parent[e.child] = Some(e.parent);
        relative[e.child] = e.relative;
    }
    let mut pose: Vec<Option<Pose>> = vec![None; n];
    let mut depth = vec![0usize; n];
    for start in 0..n {
        if pose[start].is_some() {
            continue;
        }
        // Walk up to a resolved node or a root, tracking the path.
        let mut path = vec![start];
        let mut on_path = BTreeSet::from([start]);
        let mut cur = start;
        while pose[cur].is_none() {
            let Some(p) = parent[cur] else { break };
            if on_path.contains(&p) {
                let at = path.iter().position(|&x| x == p).expect("on path");
                let mut cycle = path[at..].to_vec();
                cycle.reverse();
                return Err(Error::Cycle(cycle));
            }
            path.push(p);
            on_path.insert(p);
            cur = p;
        }
        for &v in path.iter().rev() {
            if pose[v].is_some() {
                continue;
            }
            match parent[v] {
                None => {
                    pose[v] = Some(graph.roots[v]);
                    depth[v] = 0;
                }
                Some(p) => {
                    let pp = pose[p].expect("parent resolved first");
                    depth[v] = depth[p] + 1;
                    if depth[v] > graph.cfg.d_max {
                        return Err(Error::DepthExceeded {
                            depth: depth[v],
                            max: graph.cfg.d_max,
                        });
                    }
                    pose[v] = Some(Pose::compose(&pp, &relative[v]));
                }
            }
        }
    }
    Ok(pose.into_iter().map(|p| p.expect("all resolved")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairViolation {
    pub a: usize,
    pub b: usize,
    pub penetration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub local: Vec<PairViolation>,
    pub non_local: Vec<PairViolation>,
    pub max_penetration: f64,
}

fn inside_fraction(samples: &[Vec3], center: Vec3, other: &NnIndex, cfg: &AuditConfig) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .filter(|p| p.dist(center) <= cfg.r_max && other.nearest_dist(**p) <= cfg.band)
        .count() as f64
        / samples.len() as f64
}

/// Symmetric sample-overlap proxy for the penetration between two placed nodes.
pub fn penetration_proxy(a: &[Vec3], ca: Vec3, b: &[Vec3], cb: Vec3, cfg: &AuditConfig) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (ia, ib) = (NnIndex::new(a), NnIndex::new(b));
    0.5 * (inside_fraction(a, cb, &ib, cfg) + inside_fraction(b, ca, &ia, cfg))
}

/// Checks every node pair; `samples[v]` are in node `v`'s local frame.
/// Adjacent pairs are local, all others non-local.
pub fn collision_audit(graph: &AssemblyGraph, samples: &[Vec<Vec3>]) -> Result<CollisionReport> {
    if samples.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            got: samples.len(),
        });
    }
    let poses = accumulate_transforms(graph)?;
    let world: Vec<Vec<Vec3>> = samples
        .iter()
        .zip(&poses)
        .map(|(s, p)| s.iter().map(|q| p.apply(*q)).collect())
        .collect();
    let idx: Vec<NnIndex> = world.iter().map(|w| NnIndex::new(w)).collect();
    let mut report = CollisionReport {
        local: Vec::new(),
        non_local: Vec::new(),
        max_penetration: 0.0,
    };
    let cfg = &graph.cfg;
    for a in 0..graph.len() {
        for b in a + 1..graph.len() {
            let (ca, cb) = (poses[a].translation, poses[b].translation);
            if world[a].is_empty() || world[b].is_empty() || ca.dist(cb) > 2.0 * cfg.r_max + cfg.band {
                continue;
            }
            let pen = 0.5 * (inside_fraction(&world[a], cb, &idx[b], cfg) + inside_fraction(&world[b], ca, &idx[a], cfg));
            report.max_penetration = report.max_penetration.max(pen);
            if pen > cfg.delta_coll {
                let v = PairViolation { a, b, penetration: pen };
                if graph.is_adjacent(a, b) {
                    report.local.push(v);
                } else {
                    report.non_local.push(v);
                }
            }
        }
    }
    Ok(report)
}

/// Components whose downward rays meet neither the ground plane nor another
/// component within `delta`. A ray from `p` hits a foreign sample `q` when
/// `q` lies laterally within `delta` and `0 ≤ p.z − q.z ≤ delta`.
pub fn support_violation(components: &[Vec<Vec3>], ground_z: f64, delta: f64) -> Result<Vec<usize>> {
    if components.iter().any(Vec::is_empty) {
        return Err(Error::EmptyPointSet);
    }
    let mut flagged = Vec::new();
    for (k, pts) in components.iter().enumerate() {
        let min_z = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        if min_z - ground_z <= delta {
            continue;
        }
        let foreign: Vec<Vec3> = components
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, c)| c.iter().copied())
            .collect();
        let grounded = !foreign.is_empty() && {
            let idx = NnIndex::new(&foreign);
            let r = delta * std::f64::consts::SQRT_2;
            pts.iter().filter(|p| p.z <= min_z + delta).any(|p| {
                idx.within(*p, r).into_iter().any(|i| {
                    let q = foreign[i];
                    let lateral = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                    let drop = p.z - q.z;
                    lateral <= delta && (0.0..=delta).contains(&drop)
                })
            })
        };
        if !grounded {
            flagged.push(k);
        }
    }
    Ok(flagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use proptest::prelude::*;

    fn ball(center: Vec3, r: f64) -> Vec<Vec3> {
        let mut v = Vec::new();
        for i in -2..=2 {
            for j in -2..=2 {
                for k in -2..=2 {
                    v.push(center + Vec3::new(i as f64, j as f64, k as f64) * (r / 2.0));
                }
            }
        }
        v
    }

    #[test]
    fn single_partition_keeps_everything() {
        let pts = vec![Vec3::ZERO, Vec3::X, Vec3::new(5.0, 0.0, 0.0)];
        let supports = vec![vec![Vec3::ZERO]];
        for m in [-1.0, 0.0, 0.5] {
            let cfg = RealizeConfig { margin: m, keep_floor: 0.0 };
            assert_eq!(realize_component_owned(&pts, &[0, 0, 0], &supports, &cfg).unwrap(), vec![true; 3]);
        }
    }

    #[test]
    fn equidistant_point_is_kept() {
        let supports = vec![vec![Vec3::ZERO], vec![Vec3::new(2.0, 0.0, 0.0)]];
        let cfg = RealizeConfig { margin: 0.0, keep_floor: 0.0 };
        let keep = realize_component_owned(&[Vec3::X, Vec3::new(1.5, 0.0, 0.0)], &[0, 0], &supports, &cfg).unwrap();
        assert_eq!(keep, vec![true, false]);
    }

    #[test]
    fn keep_floor_tops_up_by_smallest_margin() {
        let delta = 0.01;
        // Differences −δ, 0, δ, …, 8δ in shuffled order.
        let order = [4, 0, 9, 2, 7, 1, 8, 3, 6, 5];
        let diff: Vec<f64> = order.iter().map(|&k| (k as f64 - 1.0) * delta).collect();
        let mut owner = vec![0; 10];
        owner.push(1);
        let mut d = diff.clone();
        d.push(-1.0);
        let keep = keep_by_margin(&d, &owner, 2, 0.0, 0.9).unwrap();
        let kept: Vec<usize> = (0..10).filter(|&i| keep[i]).map(|i| order[i]).collect();
        assert_eq!(kept.len(), 9);
        assert!(!kept.contains(&9));
        assert!(keep[10]);
        assert!(matches!(keep_by_margin(&[0.0], &[3], 2, 0.0, 0.9), Err(Error::UnknownPartition(3))));
    }

    #[test]
    fn unknown_partition_errors() {
        let supports = vec![vec![Vec3::ZERO]];
        let err = realize_component_owned(&[Vec3::X], &[1], &supports, &RealizeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownPartition(1)));
    }

    #[test]
    fn energy_examples() {
        let c = DecodingCandidate {
            log_p_ar: -1.5,
            seam_compat: vec![0.3, 0.9],
        };
        assert_eq!(decoding_energy(&c, 0.0, 0.05).unwrap(), 1.5);
        let ones = DecodingCandidate {
            log_p_ar: 0.0,
            seam_compat: vec![1.0, 1.0],
        };
        assert_eq!(decoding_energy(&ones, 2.0, 0.05).unwrap(), 0.0);
        let floor = DecodingCandidate {
            log_p_ar: 0.0,
            seam_compat: vec![0.01],
        };
        assert!((decoding_energy(&floor, 1.0, 0.05).unwrap() - 2.995_732_273_553_991).abs() < 1e-12);
        assert!(decoding_energy(&floor, 1.0, 0.0).is_err());
        assert!(decoding_energy(&floor, 1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn energy_monotone(c in 0.06f64..1.0, dc in 0.0f64..0.5, lp in -10.0f64..0.0, dl in 0.01f64..5.0, lambda in 0.01f64..3.0) {
            let e = |lp: f64, c: f64| decoding_energy(&DecodingCandidate { log_p_ar: lp, seam_compat: vec![c, 0.5] }, lambda, 0.05).unwrap();
            prop_assert!(e(lp, (c + dc).min(1.0)) <= e(lp, c));
            prop_assert!(e(lp, c) < e(lp - dl, c));
        }

        #[test]
        fn keep_floor_and_margin_monotone(diff in prop::collection::vec(-1.0f64..1.0, 1..60), floor in 0.0f64..1.0, m in -0.5f64..0.5, dm in 0.0f64..0.5) {
            let owner: Vec<usize> = (0..diff.len()).map(|i| i % 3).collect();
            let a = keep_by_margin(&diff, &owner, 3, m, floor).unwrap();
            let b = keep_by_margin(&diff, &owner, 3, m + dm, floor).unwrap();
            for p in 0..3 {
                let n = owner.iter().filter(|&&o| o == p).count();
                let k = (0..diff.len()).filter(|&i| owner[i] == p && a[i]).count();
                prop_assert!(k as f64 >= floor * n as f64 - 1e-9);
            }
            prop_assert!(b.iter().filter(|&&x| x).count() >= a.iter().filter(|&&x| x).count());
            let all = keep_by_margin(&diff, &owner, 3, f64::INFINITY, floor).unwrap();
            prop_assert!(all.iter().all(|&x| x));
        }
    }

    fn translate(x: f64, y: f64, z: f64) -> Pose {
        Pose::new(Rotation::IDENTITY, Vec3::new(x, y, z), 1.0)
    }

    #[test]
    fn chains_accumulate() {
        let mut g = AssemblyGraph::new(4, AuditConfig::default());
        for k in 0..3 {
            g.add_edge(k, k + 1, Pose::IDENTITY);
        }
        assert!(accumulate_transforms(&g).unwrap().iter().all(|p| *p == Pose::IDENTITY));
        let mut g = AssemblyGraph::new(4, AuditConfig::default());
        for k in 0..3 {
            g.add_edge(k, k + 1, translate(1.0, 0.0, 0.0));
        }
        let poses = accumulate_transforms(&g).unwrap();
        assert_eq!(poses[3].translation, Vec3::new(3.0, 0.0, 0.0));
        for e in &g.edges {
            let expect = Pose::compose(&poses[e.parent], &e.relative);
            assert!(expect.translation.dist(poses[e.child].translation) < 1e-12);
        }
    }

    #[test]
    fn depth_and_cycles_are_reported() {
        let cfg = AuditConfig { d_max: 2, ..Default::default() };
        let mut g = AssemblyGraph::new(4, cfg);
        for k in 0..3 {
            g.add_edge(k, k + 1, Pose::IDENTITY);
        }
        assert!(matches!(accumulate_transforms(&g), Err(Error::DepthExceeded { depth: 3, max: 2 })));
        let mut g = AssemblyGraph::new(3, AuditConfig::default());
        g.add_edge(0, 1, Pose::IDENTITY);
        g.add_edge(1, 2, Pose::IDENTITY);
        g.add_edge(2, 0, Pose::IDENTITY);
        let Err(Error::Cycle(c)) = accumulate_transforms(&g) else { panic!("expected cycle") };
        assert_eq!(BTreeSet::from_iter(c), BTreeSet::from([0, 1, 2]));
    }

    /// Unit steps with a 90° turn after each; four steps return to the start.
    fn square_walk(closed: bool) -> AssemblyGraph {
        let step = Pose::new(Rotation::about_axis(Vec3::Z, std::f64::consts::FRAC_PI_2), Vec3::X, 1.0);
        let n = if closed { 4 } else { 5 };
        let mut g = AssemblyGraph::new(n, AuditConfig::default());
        for k in 0..4 {
            g.add_edge(k, (k + 1) % n, step);
        }
        g
    }

    #[test]
    fn square_loop_cycle_or_fold_back() {
        assert!(matches!(accumulate_transforms(&square_walk(true)), Err(Error::Cycle(_))));
        let poses = accumulate_transforms(&square_walk(false)).unwrap();
        assert!(poses[4].translation.norm() < 1e-12);
        let samples = vec![ball(Vec3::ZERO, 0.2); 5];
        let r = collision_audit(&square_walk(false), &samples).unwrap();
        assert!(r.local.is_empty());
        assert_eq!(r.non_local.len(), 1);
        assert_eq!((r.non_local[0].a, r.non_local[0].b), (0, 4));
    }

    #[test]
    fn spiral_folds_node_five_onto_node_zero() {
        // Regular pentagon walk: five unit edges turning 72° close the loop.
        let turn = Rotation::about_axis(Vec3::Z, 2.0 * std::f64::consts::PI / 5.0);
        let mut g = AssemblyGraph::new(6, AuditConfig::default());
        for k in 0..5 {
            g.add_edge(k, k + 1, Pose::new(turn, Vec3::X, 1.0));
        }
        let samples = vec![ball(Vec3::ZERO, 0.2); 6];
        let r = collision_audit(&g, &samples).unwrap();
        assert!(r.local.is_empty());
        assert_eq!(r.non_local.len(), 1);
        assert_eq!((r.non_local[0].a, r.non_local[0].b), (0, 5));
        assert!((r.max_penetration - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_nodes_are_clean() {
        let mut g = AssemblyGraph::new(2, AuditConfig::default());
        g.roots[1] = translate(10.0, 0.0, 0.0);
        let r = collision_audit(&g, &[ball(Vec3::ZERO, 0.2), ball(Vec3::ZERO, 0.2)]).unwrap();
        assert!(r.local.is_empty() && r.non_local.is_empty());
        assert_eq!(r.max_penetration, 0.0);
        let s = ball(Vec3::ZERO, 0.2);
        assert_eq!(penetration_proxy(&s, Vec3::ZERO, &s, Vec3::ZERO, &AuditConfig::default()), 1.0);
    }

    fn slab(z0: f64, z1: f64, x0: f64) -> Vec<Vec3> {
        let mut v = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for z in [z0, z1] {
                    v.push(Vec3::new(x0 + 0.04 * i as f64, 0.04 * j as f64, z));
                }
            }
        }
        v
    }

    #[test]
    fn support_examples() {
        let d = 0.05;
        assert!(support_violation(&[slab(-1.0, -0.8, 0.0)], -1.0, d).unwrap().is_empty());
        assert_eq!(support_violation(&[slab(-1.0, -0.8, 3.0), slab(0.5, 0.7, 0.0)], -1.0, d).unwrap(), vec![1]);
        let stack = [slab(-1.0, -0.8, 0.0), slab(-0.796, -0.6, 0.0), slab(-0.596, -0.4, 0.0)];
        assert!(support_violation(&stack, -1.0, d).unwrap().is_empty());
        assert!(support_violation(&[vec![]], -1.0, d).is_err());
    }
}
