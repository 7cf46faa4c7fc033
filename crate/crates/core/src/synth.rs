//! Procedural multi-component assemblies with exact ownership, attachment
//! seams, decoy parts and planted collisions.
//!
//! Boxes and cylinder caps are sampled on one global lattice of spacing `h`,
//! box bounds are lattice multiples in x and y, and attachments are stacked
//! along z. Coincident contact faces therefore sample identical (x, y)
//! columns and sit exactly `gap` apart, while a decoy block crossing a box
//! wall shares sample positions with that wall.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::ingest::{normalize_points, ObjectRecord, RawMesh, SurfaceObject};
use crate::partition::Partition;

pub const MIN_DENSITY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Box { lo: Vec3, hi: Vec3 },
    Cylinder { x: f64, y: f64, radius: f64, z0: f64, z1: f64 },
    Sphere { center: Vec3, radius: f64 },
}

impl Shape {
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match *self {
            Shape::Box { lo, hi } => (lo, hi),
            Shape::Cylinder { x, y, radius, z0, z1 } => (
                Vec3::new(x - radius, y - radius, z0),
                Vec3::new(x + radius, y + radius, z1),
            ),
            Shape::Sphere { center, radius } => {
                let r = Vec3::new(radius, radius, radius);
                (center - r, center + r)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Box { lo, hi } => {
                let d = hi - lo;
                2.0 * (d.x * d.y + d.y * d.z + d.x * d.z)
            }
            Shape::Cylinder { radius, z0, z1, .. } => {
                let tau = std::f64::consts::TAU;
                tau * radius * (z1 - z0) + tau * radius * radius
            }
            Shape::Sphere { radius, .. } => 2.0 * std::f64::consts::TAU * radius * radius,
        }
    }

    fn shifted(&self, dz: f64) -> Shape {
        match *self {
            Shape::Box { lo, hi } => Shape::Box {
                lo: lo + Vec3::Z * dz,
                hi: hi + Vec3::Z * dz,
            },
            Shape::Cylinder { x, y, radius, z0, z1 } => Shape::Cylinder {
                x,
                y,
                radius,
                z0: z0 + dz,
                z1: z1 + dz,
            },
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center + Vec3::Z * dz,
                radius,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Top,
    Bottom,
}

impl Face {
    fn sign(self) -> f64 {
        match self {
            Face::Top => 1.0,
            Face::Bottom => -1.0,
        }
    }
}

/// `child` rests on `face` of `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub parent: usize,
    pub child: usize,
    pub face: Face,
    /// Sink the child into the parent instead of leaving a gap.
    pub collide: bool,
}

/// A part that crosses `target`'s wall; it shares `target`'s z shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoy {
    pub component: usize,
    pub target: usize,
}

/// Primitives in design space, where attached faces coincide exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblySpec {
    pub seed: u64,
    pub lattice: f64,
    pub gap: f64,
    pub penetration: f64,
    pub primitives: Vec<Shape>,
    pub attachments: Vec<Attachment>,
    pub decoys: Vec<Decoy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub component_count: usize,
    /// Valid attachment edges `(parent, child)`.
    pub seams: Vec<(usize, usize)>,
    /// Attachment edges realized with interpenetration.
    pub collisions: Vec<(usize, usize)>,
    /// `(decoy, target)` pairs.
    pub decoys: Vec<(usize, usize)>,
}

impl GroundTruth {
    pub fn is_seam(&self, a: usize, b: usize) -> bool {
        self.seams.iter().any(|&(p, c)| (p, c) == (a, b) || (p, c) == (b, a))
    }

    /// Parent of `child` along a valid or colliding attachment.
    pub fn parent_of(&self, child: usize) -> Option<usize> {
        self.seams
            .iter()
            .chain(&self.collisions)
            .find(|e| e.1 == child)
            .map(|e| e.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub density: usize,
    pub decoys: bool,
    pub collisions: bool,
    pub gap: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            density: 900,
            decoys: false,
            collisions: false,
            gap: 0.004,
        }
    }
}

/// Lattice spacing giving roughly `density` samples on a nominal primitive.
pub fn lattice_for(density: usize) -> f64 {
    const NOMINAL_AREA: f64 = 0.5;
    (NOMINAL_AREA / density as f64).sqrt()
}

fn lattice_range(lo: f64, hi: f64, h: f64) -> impl Iterator<Item = f64> {
    let a = (lo / h - 1e-9).ceil() as i64;
    let b = (hi / h + 1e-9).floor() as i64;
    (a..=b).map(move |k| k as f64 * h)
}

fn sample_shape(shape: &Shape, h: f64, pts: &mut Vec<Vec3>, nrm: &mut Vec<Vec3>) {
    match *shape {
        Shape::Box { lo, hi } => {
            for (axis, normal_sign) in [(0usize, -1.0), (0, 1.0), (1, -1.0), (1, 1.0), (2, -1.0), (2, 1.0)] {
                let fixed = if normal_sign < 0.0 { lo[axis] } else { hi[axis] };
                let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut n = [0.0; 3];
                n[axis] = normal_sign;
                for a in lattice_range(lo[u], hi[u], h) {
                    for b in lattice_range(lo[w], hi[w], h) {
                        let mut p = [0.0; 3];
                        p[axis] = fixed;
                        p[u] = a;
                        p[w] = b;
                        pts.push(Vec3::from_array(p));
                        nrm.push(Vec3::from_array(n));
                    }
                }
            }
        }
        Shape::Cylinder { x, y, radius, z0, z1 } => {
            for (z, s) in [(z0, -1.0), (z1, 1.0)] {
                for a in lattice_range(x - radius, x + radius, h) {
                    for b in lattice_range(y - radius, y + radius, h) {
                        if (a - x).powi(2) + (b - y).powi(2) <= radius * radius {
                            pts.push(Vec3::new(a, b, z));
                            nrm.push(Vec3::Z * s);
                        }
                    }
                }
            }
            let ring = ((std::f64::consts::TAU * radius / h).round() as usize).max(8);
            for z in lattice_range(z0, z1, h) {
                for k in 0..ring {
                    let t = k as f64 * std::f64::consts::TAU / ring as f64;
                    let d = Vec3::new(t.cos(), t.sin(), 0.0);
                    pts.push(Vec3::new(x, y, z) + d * radius);
                    nrm.push(d);
                }
            }
        }
        Shape::Sphere { center, radius } => {
            let n = ((2.0 * std::f64::consts::TAU * radius * radius / (h * h)).round() as usize).max(8);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * k as f64;
                let d = Vec3::new(r * t.cos(), r * t.sin(), z);
                pts.push(center + d * radius);
                nrm.push(d);
            }
        }
    }
}

impl AssemblySpec {
    /// Checks indices and that attachments form a forest.
    pub fn validate(&self) -> Result<()> {
        let n = self.primitives.len();
        if n == 0 {
            return Err(Error::InvalidSpec("no primitives".into()));
        }
        if !(self.lattice > 0.0) {
            return Err(Error::InvalidSpec("lattice must be positive".into()));
        }
        let mut parent = vec![None; n];
        for a in &self.attachments {
            if a.parent >= n || a.child >= n || a.parent == a.child {
                return Err(Error::InvalidSpec(format!("bad attachment {}→{}", a.parent, a.child)));
            }
            if parent[a.child].replace(a.parent).is_some() {
                return Err(Error::InvalidSpec(format!("component {} has two parents", a.child)));
            }
        }
        for start in 0..n {
            let mut path = vec![start];
            let mut cur = start;
            while let Some(p) = parent[cur] {
                if let Some(pos) = path.iter().position(|&v| v == p) {
                    return Err(Error::Cycle(path[pos..].to_vec()));
                }
                path.push(p);
                cur = p;
            }
        }
        for d in &self.decoys {
            if d.component >= n || d.target >= n {
                return Err(Error::InvalidSpec("bad decoy".into()));
            }
        }
        Ok(())
    }

    /// Final z shift of every component: gaps accumulate down the tree.
    fn shifts(&self) -> Vec<f64> {
        let n = self.primitives.len();
        let mut shift = vec![0.0; n];
        let mut done = vec![false; n];
        let of_child: Vec<Option<&Attachment>> = (0..n)
            .map(|c| self.attachments.iter().find(|a| a.child == c))
            .collect();
        fn resolve(
            c: usize,
            of_child: &[Option<&Attachment>],
            spec: &AssemblySpec,
            shift: &mut [f64],
            done: &mut [bool],
        ) -> f64 {
            if done[c] {
                return shift[c];
            }
            let s = match of_child[c] {
                None => 0.0,
                Some(a) => {
                    let base = resolve(a.parent, of_child, spec, shift, done);
                    let offset = if a.collide { -spec.penetration } else { spec.gap };
                    base + a.face.sign() * offset
                }
            };
            shift[c] = s;
            done[c] = true;
            s
        }
        for c in 0..n {
            resolve(c, &of_child, self, &mut shift, &mut done);
        }
        for d in &self.decoys {
            shift[d.component] = shift[d.target];
        }
        shift
    }

    /// Primitives at their realized positions.
    pub fn realized(&self) -> Vec<Shape> {
        let s = self.shifts();
        self.primitives.iter().zip(s).map(|(p, dz)| p.shifted(dz)).collect()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut gt = GroundTruth {
            component_count: self.primitives.len(),
            seams: Vec::new(),
            collisions: Vec::new(),
            decoys: self.decoys.iter().map(|d| (d.component, d.target)).collect(),
        };
        for a in &self.attachments {
            if a.collide {
                gt.collisions.push((a.parent, a.child));
            } else {
                gt.seams.push((a.parent, a.child));
            }
        }
        gt
    }

    /// Triangle meshes of every realized primitive, one shell each.
    pub fn to_mesh(&self) -> RawMesh {
        let mut mesh = RawMesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            normals: None,
        };
        for s in self.realized() {
            append_mesh(&mut mesh, &s);
        }
        mesh
    }
}

fn append_mesh(mesh: &mut RawMesh, shape: &Shape) {
    let base = mesh.vertices.len();
    match *shape {
        Shape::Box { lo, hi } => {
            for i in 0..8 {
                mesh.vertices.push(Vec3::new(
                    if i & 1 == 0 { lo.x } else { hi.x },
                    if i & 2 == 0 { lo.y } else { hi.y },
                    if i & 4 == 0 { lo.z } else { hi.z },
                ));
            }
            // Outward-wound quads.
            let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
            for q in quads {
                mesh.triangles.push([base + q[0], base + q[1], base + q[2]]);
                mesh.triangles.push([base + q[0], base + q[2], base + q[3]]);
            }
        }
        Shape::Cylinder { x, y, radius, z0, z1 } => {
            let k = 16;
            for z in [z0, z1] {
                for i in 0..k {
                    let t = i as f64 * std::f64::consts::TAU / k as f64;
                    mesh.vertices.push(Vec3::new(x + radius * t.cos(), y + radius * t.sin(), z));
                }
            }
            mesh.vertices.push(Vec3::new(x, y, z0));
            mesh.vertices.push(Vec3::new(x, y, z1));
            let (c0, c1) = (base + 2 * k, base + 2 * k + 1);
            for i in 0..k {
                let j = (i + 1) % k;
                mesh.triangles.push([base + i, base + j, base + k + j]);
                mesh.triangles.push([base + i, base + k + j, base + k + i]);
                mesh.triangles.push([c0, base + j, base + i]);
                mesh.triangles.push([c1, base + k + i, base + k + j]);
            }
        }
        Shape::Sphere { center, radius } => {
            let (rings, segs) = (8, 12);
            mesh.vertices.push(center - Vec3::Z * radius);
            for r in 1..rings {
                let phi = std::f64::consts::PI * r as f64 / rings as f64;
                for s in 0..segs {
                    let t = std::f64::consts::TAU * s as f64 / segs as f64;
                    mesh.vertices.push(
                        center + Vec3::new(phi.sin() * t.cos(), phi.sin() * t.sin(), -phi.cos()) * radius,
                    );
                }
            }
            mesh.vertices.push(center + Vec3::Z * radius);
            let top = base + 1 + (rings - 1) * segs;
            let at = |r: usize, s: usize| base + 1 + (r - 1) * segs + (s % segs);
            for s in 0..segs {
                mesh.triangles.push([base, at(1, s + 1), at(1, s)]);
                mesh.triangles.push([top, at(rings - 1, s), at(rings - 1, s + 1)]);
            }
            for r in 1..rings - 1 {
                for s in 0..segs {
                    mesh.triangles.push([at(r, s), at(r, s + 1), at(r + 1, s + 1)]);
                    mesh.triangles.push([at(r, s), at(r + 1, s + 1), at(r + 1, s)]);
                }
            }
        }
    }
}

/// Samples and normalizes a spec.
pub fn generate(id: impl Into<String>, spec: &AssemblySpec) -> Result<(SurfaceObject, GroundTruth)> {
    spec.validate()?;
    let mut pts = Vec::new();
    let mut nrm = Vec::new();
    let mut comp = Vec::new();
    for (k, s) in spec.realized().iter().enumerate() {
        let before = pts.len();
        sample_shape(s, spec.lattice, &mut pts, &mut nrm);
        comp.extend(std::iter::repeat_n(k, pts.len() - before));
    }
    if BTreeSet::from_iter(comp.iter().copied()).len() != spec.primitives.len() {
        return Err(Error::InvalidSpec("a primitive received no samples".into()));
    }
    let obj = normalize_points(id, &pts, &nrm, &comp)?;
    Ok((obj, spec.ground_truth()))
}

fn snap(v: f64, h: f64) -> f64 {
    (v / h).round() * h
}

fn sep_ok(a: (Vec3, Vec3), b: (Vec3, Vec3), sep: f64) -> bool {
    a.0.x > b.1.x + sep
        || b.0.x > a.1.x + sep
        || a.0.y > b.1.y + sep
        || b.0.y > a.1.y + sep
        || a.0.z > b.1.z + sep
        || b.0.z > a.1.z + sep
}

/// Minimum clearance between parts that do not touch by design.
const SEPARATION: f64 = 0.08;

/// Random attachment tree of exactly `components` parts, decoys excluded.
pub fn random_spec(seed: u64, components: usize, opts: &SynthOptions) -> Result<AssemblySpec> {
    if opts.density < MIN_DENSITY {
        return Err(Error::InvalidArgument(format!(
            "density {} below {MIN_DENSITY} points per primitive",
            opts.density
        )));
    }
    let h = lattice_for(opts.density);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prims: Vec<Shape> = Vec::new();
    let mut atts: Vec<Attachment> = Vec::new();

    let (rx, ry) = (snap(rng.random_range(0.35..0.6), h), snap(rng.random_range(0.35..0.6), h));
    let rz = rng.random_range(0.12..0.3);
    prims.push(Shape::Box {
        lo: Vec3::new(-rx, -ry, -rz),
        hi: Vec3::new(rx, ry, rz),
    });

    // Columns grow from a 2x2 cell grid on each root face; extra parts stack.
    let margin = 2.0 * h;
    let cell = (
        0.5 * (2.0 * rx - 2.0 * margin - SEPARATION - 0.1),
        0.5 * (2.0 * ry - 2.0 * margin - SEPARATION - 0.1),
    );
    let mut slots: Vec<(Face, usize, usize)> = Vec::new();
    for face in [Face::Top, Face::Bottom] {
        for cx in 0..2 {
            for cy in 0..2 {
                slots.push((face, cx, cy));
            }
        }
    }
    let wanted = components.max(1) - 1;
    let columns = wanted.min(slots.len());
    for k in (1..slots.len()).rev() {
        slots.swap(k, rng.random_range(0..=k));
    }
    // Column heights: one part each, the remainder spread at random.
    let mut heights = vec![1usize; columns];
    for _ in columns..wanted {
        let c = rng.random_range(0..columns);
        heights[c] += 1;
    }
    for (c, &(face, cx, cy)) in slots.iter().take(columns).enumerate() {
        let x_lo = -rx + margin + cx as f64 * (cell.0 + SEPARATION + 0.1);
        let y_lo = -ry + margin + cy as f64 * (cell.1 + SEPARATION + 0.1);
        let mut parent = 0;
        let mut foot = (x_lo, y_lo, x_lo + cell.0, y_lo + cell.1);
        for level in 0..heights[c] {
            let Shape::Box { lo: plo, hi: phi } = prims[parent] else {
                unreachable!("columns only grow on boxes");
            };
            let (fw, fd) = (foot.2 - foot.0, foot.3 - foot.1);
            let w = snap(fw * rng.random_range(0.6..0.95), h).max(4.0 * h).min(fw);
            let d = snap(fd * rng.random_range(0.6..0.95), h).max(4.0 * h).min(fd);
            let x0 = snap(foot.0 + rng.random_range(0.0..=1.0) * (fw - w), h).max(foot.0);
            let y0 = snap(foot.1 + rng.random_range(0.0..=1.0) * (fd - d), h).max(foot.1);
            let height = snap(rng.random_range(0.12..0.3), h).max(3.0 * h);
            let (z0, z1) = match face {
                Face::Top => (phi.z, phi.z + height),
                Face::Bottom => (plo.z - height, plo.z),
            };
            let last = level + 1 == heights[c];
            let child = if last && rng.random_bool(0.25) {
                let r = 0.5 * w.min(d);
                Shape::Cylinder {
                    x: x0 + 0.5 * w,
                    y: y0 + 0.5 * d,
                    radius: r,
                    z0,
                    z1,
                }
            } else {
                Shape::Box {
                    lo: Vec3::new(x0, y0, z0),
                    hi: Vec3::new(x0 + w, y0 + d, z1),
                }
            };
            prims.push(child);
            atts.push(Attachment {
                parent,
                child: prims.len() - 1,
                face,
                collide: false,
            });
            parent = prims.len() - 1;
            let m = margin.min(0.1 * w.min(d));
            foot = (x0 + m, y0 + m, x0 + w - m, y0 + d - m);
        }
    }

    if opts.collisions && !atts.is_empty() {
        let k = rng.random_range(0..atts.len());
        atts[k].collide = true;
    }

    let mut decoys = Vec::new();
    if opts.decoys {
        let order: Vec<usize> = (0..atts.len()).collect();
        for k in order {
            let a = atts[k];
            if a.collide {
                continue;
            }
            if let Some(d) = place_decoy(&prims, &a, h, &mut rng) {
                prims.push(d);
                decoys.push(Decoy {
                    component: prims.len() - 1,
                    target: a.child,
                });
            }
        }
    }

    let spec = AssemblySpec {
        seed,
        lattice: h,
        gap: opts.gap,
        penetration: 0.05,
        primitives: prims,
        attachments: atts,
        decoys,
    };
    spec.validate()?;
    Ok(spec)
}

/// A square rod piercing one side wall of a box child just above its contact
/// face. Rod faces are orthogonal to the wall and share its lattice points.
fn place_decoy(prims: &[Shape], a: &Attachment, h: f64, rng: &mut ChaCha8Rng) -> Option<Shape> {
    let Shape::Box { lo, hi } = prims[a.child] else {
        return None;
    };
    let side = 2.0 * h;
    let outer = snap(0.15, h);
    let lift = snap(0.03, h).max(h);
    let (z0, z1) = match a.face {
        Face::Top => (lo.z + lift, lo.z + lift + side),
        Face::Bottom => (hi.z - lift - side, hi.z - lift),
    };
    if z1 > hi.z || z0 < lo.z {
        return None;
    }
    let wall = rng.random_range(0..4);
    let (dlo, dhi) = if wall < 2 {
        let inner = snap((0.4 * (hi.x - lo.x)).min(0.12), h).max(h);
        let yc = snap(0.5 * (lo.y + hi.y), h);
        let (x0, x1) = if wall == 0 { (lo.x - outer, lo.x + inner) } else { (hi.x - inner, hi.x + outer) };
        (Vec3::new(x0, yc - h, z0), Vec3::new(x1, yc + h, z1))
    } else {
        let inner = snap((0.4 * (hi.y - lo.y)).min(0.12), h).max(h);
        let xc = snap(0.5 * (lo.x + hi.x), h);
        let (y0, y1) = if wall == 2 { (lo.y - outer, lo.y + inner) } else { (hi.y - inner, hi.y + outer) };
        (Vec3::new(xc - h, y0, z0), Vec3::new(xc + h, y1, z1))
    };
    let d = Shape::Box { lo: dlo, hi: dhi };
    let bb = d.bounds();
    let clear = prims.iter().enumerate().all(|(k, p)| {
        k == a.child || (k == a.parent && sep_ok(bb, p.bounds(), 0.5 * lift)) || sep_ok(bb, p.bounds(), SEPARATION)
    });
    clear.then_some(d)
}

/// Deterministic per-object seed.
pub fn object_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` assemblies whose requested component counts cycle through 2..=12.
pub fn generate_corpus(n: usize, seed: u64, opts: &SynthOptions) -> Result<Vec<ObjectRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("corpus size must be at least 1".into()));
    }
    (0..n)
        .map(|i| {
            let comps = 2 + i % 11;
            let spec = random_spec(object_seed(seed, i), comps, opts)?;
            let (obj, gt) = generate(format!("synth-{seed}-{i:04}"), &spec)?;
            let part = Partition::from_labels(&obj.component_of);
            let mut rec = ObjectRecord::bare(obj, part);
            rec.ground_truth = Some(gt);
            Ok(rec)
        })
        .collect()
}

/// Two stacked boxes.
pub fn tower_spec(density: usize, gap: f64) -> AssemblySpec {
    let h = lattice_for(density);
    let s = |v: f64| snap(v, h);
    AssemblySpec {
        seed: 0,
        lattice: h,
        gap,
        penetration: 0.05,
        primitives: vec![
            Shape::Box {
                lo: Vec3::new(s(-0.4), s(-0.4), -0.3),
                hi: Vec3::new(s(0.4), s(0.4), 0.0),
            },
            Shape::Box {
                lo: Vec3::new(s(-0.25), s(-0.25), 0.0),
                hi: Vec3::new(s(0.25), s(0.25), 0.3),
            },
        ],
        attachments: vec![Attachment {
            parent: 0,
            child: 1,
            face: Face::Top,
            collide: false,
        }],
        decoys: vec![],
    }
}

/// A top with four legs hanging below it.
pub fn table_spec(density: usize, gap: f64) -> AssemblySpec {
    let h = lattice_for(density);
    let s = |v: f64| snap(v, h);
    let mut prims = vec![Shape::Box {
        lo: Vec3::new(s(-0.6), s(-0.4), 0.0),
        hi: Vec3::new(s(0.6), s(0.4), 0.08),
    }];
    let mut atts = Vec::new();
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let (cx, cy) = (s(sx * 0.45), s(sy * 0.28));
        prims.push(Shape::Box {
            lo: Vec3::new(cx - s(0.06), cy - s(0.06), -0.6),
            hi: Vec3::new(cx + s(0.06), cy + s(0.06), 0.0),
        });
        atts.push(Attachment {
            parent: 0,
            child: prims.len() - 1,
            face: Face::Bottom,
            collide: false,
        });
    }
    AssemblySpec {
        seed: 0,
        lattice: h,
        gap,
        penetration: 0.05,
        primitives: prims,
        attachments: atts,
        decoys: vec![],
    }
}

/// Seat on a base with one back block and a decoy crossing the back near the seat.
pub fn chair_spec(density: usize, gap: f64) -> AssemblySpec {
    let h = lattice_for(density);
    let s = |v: f64| snap(v, h);
    let seat = Shape::Box {
        lo: Vec3::new(s(-0.4), s(-0.4), 0.0),
        hi: Vec3::new(s(0.4), s(0.4), 0.1),
    };
    let base = Shape::Box {
        lo: Vec3::new(s(-0.3), s(-0.3), -0.5),
        hi: Vec3::new(s(0.3), s(0.3), 0.0),
    };
    let back = Shape::Box {
        lo: Vec3::new(s(-0.3), s(0.1), 0.1),
        hi: Vec3::new(s(0.3), s(0.3), 0.7),
    };
    let prims = vec![seat, base, back];
    let atts = vec![
        Attachment { parent: 0, child: 1, face: Face::Bottom, collide: false },
        Attachment { parent: 0, child: 2, face: Face::Top, collide: false },
    ];
    let a = atts[1];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut prims2 = prims.clone();
    if let Some(d) = place_decoy(&prims, &a, h, &mut rng) {
        prims2.push(d);
    }
    let decoys = if prims2.len() > prims.len() {
        vec![Decoy { component: 3, target: 2 }]
    } else {
        vec![]
    };
    AssemblySpec {
        seed: 0,
        lattice: h,
        gap,
        penetration: 0.05,
        primitives: prims2,
        attachments: atts,
        decoys,
    }
}
