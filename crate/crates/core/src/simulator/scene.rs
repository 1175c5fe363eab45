//! Seeded ground-truth scenes: a gentle heightfield carrying closed
//! building blocks (plain boxes, courtyard rings and overhanging slabs).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::triangle_point;
use crate::geometry::Point3;
use crate::surface::SurfaceMesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Side of the square ground patch, meters.
    pub extent: f64,
    pub buildings: usize,
    /// Ground grid spacing, meters.
    pub ground_cell: f64,
    /// Peak ground undulation, meters.
    pub ground_amplitude: f64,
    /// Ground-truth evaluation samples per m² of exposed surface.
    pub truth_density: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            extent: 80.0,
            buildings: 8,
            ground_cell: 2.0,
            ground_amplitude: 0.6,
            truth_density: 100.0,
        }
    }
}

/// Block shapes in local coordinates: x across, y along, z up from the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box {
        half_x: f64,
        half_y: f64,
        height: f64,
    },
    /// Rectangular ring around an open courtyard.
    Courtyard {
        half_x: f64,
        half_y: f64,
        inner_x: f64,
        inner_y: f64,
        height: f64,
    },
    /// A narrow stem carrying a wider slab: T-shaped profile in x, extruded along y.
    Overhang {
        stem_x: f64,
        cap_x: f64,
        half_y: f64,
        stem_height: f64,
        height: f64,
    },
}

impl Shape {
    /// Half extents of the footprint.
    pub fn half_footprint(&self) -> (f64, f64) {
        match *self {
            Shape::Box { half_x, half_y, .. } | Shape::Courtyard { half_x, half_y, .. } => {
                (half_x, half_y)
            }
            Shape::Overhang { cap_x, half_y, .. } => (cap_x, half_y),
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            Shape::Box { height, .. }
            | Shape::Courtyard { height, .. }
            | Shape::Overhang { height, .. } => height,
        }
    }

    /// Strict containment of a local point.
    fn contains_local(&self, p: &Point3) -> bool {
        if !(p.z > 0.0 && p.z < self.height()) {
            return false;
        }
        let (x, y) = (p.x.abs(), p.y.abs());
        match *self {
            Shape::Box { half_x, half_y, .. } => x < half_x && y < half_y,
            Shape::Courtyard {
                half_x,
                half_y,
                inner_x,
                inner_y,
                ..
            } => x < half_x && y < half_y && !(x <= inner_x && y <= inner_y),
            Shape::Overhang {
                stem_x,
                cap_x,
                half_y,
                stem_height,
                ..
            } => y < half_y && (x < stem_x || (p.z > stem_height && x < cap_x)),
        }
    }

    /// Closed, outward-oriented triangle mesh in local coordinates.
    fn local_mesh(&self) -> (Vec<Point3>, Vec<[u32; 3]>) {
        let mut b = MeshBuilder::default();
        match *self {
            Shape::Box {
                half_x,
                half_y,
                height,
            } => {
                b.prism(&rect(half_x, half_y), 0.0, height);
            }
            Shape::Courtyard {
                half_x,
                half_y,
                inner_x,
                inner_y,
                height,
            } => {
                let outer = rect(half_x, half_y);
                let inner = rect(inner_x, inner_y);
                for z in [0.0, height] {
                    // Ring between the two rectangles as four quads.
                    for i in 0..4 {
                        let j = (i + 1) % 4;
                        let q = [
                            Point3::new(outer[i].0, outer[i].1, z),
                            Point3::new(outer[j].0, outer[j].1, z),
                            Point3::new(inner[j].0, inner[j].1, z),
                            Point3::new(inner[i].0, inner[i].1, z),
                        ];
                        if z == 0.0 {
                            b.quad([q[3], q[2], q[1], q[0]]);
                        } else {
                            b.quad(q);
                        }
                    }
                }
                b.walls(&outer, 0.0, height, false);
                b.walls(&inner, 0.0, height, true);
            }
            Shape::Overhang {
                stem_x,
                cap_x,
                half_y,
                stem_height,
                height,
            } => {
                // Profile in (x, z), counter-clockwise seen from -y.
                let prof = [
                    (-stem_x, 0.0),
                    (stem_x, 0.0),
                    (stem_x, stem_height),
                    (cap_x, stem_height),
                    (cap_x, height),
                    (-cap_x, height),
                    (-cap_x, stem_height),
                    (-stem_x, stem_height),
                ];
                let at = |k: usize, y: f64| Point3::new(prof[k].0, y, prof[k].1);
                for k in 0..8 {
                    let l = (k + 1) % 8;
                    b.quad([at(k, half_y), at(l, half_y), at(l, -half_y), at(k, -half_y)]);
                }
                let caps: [[usize; 3]; 6] = [
                    [0, 1, 2],
                    [0, 2, 7],
                    [5, 6, 7],
                    [5, 7, 2],
                    [5, 2, 3],
                    [5, 3, 4],
                ];
                for t in caps {
                    b.tri([at(t[0], -half_y), at(t[1], -half_y), at(t[2], -half_y)]);
                    b.tri([at(t[0], half_y), at(t[2], half_y), at(t[1], half_y)]);
                }
            }
        }
        b.finish()
    }
}

/// Counter-clockwise rectangle corners seen from above.
fn rect(hx: f64, hy: f64) -> [(f64, f64); 4] {
    [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
}

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
    index: std::collections::HashMap<[u64; 3], u32>,
}

impl MeshBuilder {
    fn vertex(&mut self, p: Point3) -> u32 {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let n = self.vertices.len() as u32;
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            n
        })
    }

    fn tri(&mut self, t: [Point3; 3]) {
        let ids = t.map(|p| self.vertex(p));
        self.triangles.push(ids);
    }

    /// Counter-clockwise quad as seen from the side its normal points to.
    fn quad(&mut self, q: [Point3; 4]) {
        self.tri([q[0], q[1], q[2]]);
        self.tri([q[0], q[2], q[3]]);
    }

    fn walls(&mut self, ring: &[(f64, f64); 4], z0: f64, z1: f64, inward: bool) {
        for i in 0..4 {
            let j = (i + 1) % 4;
            let (a, b) = (ring[i], ring[j]);
            let q = [
                Point3::new(a.0, a.1, z0),
                Point3::new(b.0, b.1, z0),
                Point3::new(b.0, b.1, z1),
                Point3::new(a.0, a.1, z1),
            ];
            if inward {
                self.quad([q[1], q[0], q[3], q[2]]);
            } else {
                self.quad(q);
            }
        }
    }

    fn prism(&mut self, ring: &[(f64, f64); 4], z0: f64, z1: f64) {
        let p = |k: usize, z: f64| Point3::new(ring[k].0, ring[k].1, z);
        self.quad([p(0, z1), p(1, z1), p(2, z1), p(3, z1)]);
        self.quad([p(3, z0), p(2, z0), p(1, z0), p(0, z0)]);
        self.walls(ring, z0, z1, false);
    }

    fn finish(self) -> (Vec<Point3>, Vec<[u32; 3]>) {
        (self.vertices, self.triangles)
    }
}

/// A shape placed in the world: rotated by `yaw` about +z, with `center`
/// at the middle of its base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub shape: Shape,
    pub center: Point3,
    pub yaw: f64,
}

impl Block {
    fn to_local(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let d = *p - self.center;
        Point3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    fn to_world(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        self.center + Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.shape.contains_local(&self.to_local(p))
    }

    /// Radius of the footprint's bounding circle.
    pub fn radius(&self) -> f64 {
        let (hx, hy) = self.shape.half_footprint();
        hx.hypot(hy)
    }
}

/// Piecewise-linear ground over a regular grid; cell (i, j) is split along
/// its (i, j)-(i+1, j+1) diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightfield {
    pub origin: (f64, f64),
    pub cell: f64,
    pub n: usize,
    /// (n + 1)² heights, row-major in y.
    pub heights: Vec<f64>,
}

impl Heightfield {
    fn h(&self, i: usize, j: usize) -> f64 {
        self.heights[j * (self.n + 1) + i]
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin.0) / self.cell).clamp(0.0, self.n as f64);
        let fy = ((y - self.origin.1) / self.cell).clamp(0.0, self.n as f64);
        let i = (fx.floor() as usize).min(self.n - 1);
        let j = (fy.floor() as usize).min(self.n - 1);
        let (u, v) = (fx - i as f64, fy - j as f64);
        let (h00, h10, h11, h01) = (
            self.h(i, j),
            self.h(i + 1, j),
            self.h(i + 1, j + 1),
            self.h(i, j + 1),
        );
        if u >= v {
            h00 + u * (h10 - h00) + v * (h11 - h10)
        } else {
            h00 + v * (h01 - h00) + u * (h11 - h01)
        }
    }

    fn mesh(&self) -> (Vec<Point3>, Vec<[u32; 3]>) {
        let n = self.n;
        let mut v = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                v.push(Point3::new(
                    self.origin.0 + i as f64 * self.cell,
                    self.origin.1 + j as f64 * self.cell,
                    self.h(i, j),
                ));
            }
        }
        let id = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut t = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        (v, t)
    }
}

/// Ground truth for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub params: SceneParams,
    pub ground: Heightfield,
    pub blocks: Vec<Block>,
    /// Ground followed by each block; blocks do not share vertices.
    pub mesh: SurfaceMesh,
    /// Face ranges of `mesh`: ground first, then one range per block.
    pub face_ranges: Vec<std::ops::Range<usize>>,
    /// Area-uniform samples of the exposed surface.
    pub truth_samples: Vec<Point3>,
    pub diagonal: f64,
}

impl SyntheticScene {
    pub fn bounds(&self) -> (Point3, Point3) {
        self.mesh.bbox().expect("scene mesh is non-empty")
    }

    /// Bounding-sphere center and radius of the scene box.
    pub fn bounding_sphere(&self) -> (Point3, f64) {
        let (lo, hi) = self.bounds();
        ((lo + hi) / 2.0, lo.distance(&hi) / 2.0)
    }

    /// True when `p` is below the ground or strictly inside a block.
    pub fn is_solid(&self, p: &Point3) -> bool {
        p.z < self.ground.height(p.x, p.y) || self.blocks.iter().any(|b| b.contains(p))
    }

    /// A point of face `f` is exposed when it is not buried or enclosed;
    /// `tol` absorbs the point sitting exactly on its own surface.
    pub fn is_exposed(&self, p: &Point3, face: usize, tol: f64) -> bool {
        let block = self
            .face_ranges
            .iter()
            .position(|r| r.contains(&face))
            .expect("face in range");
        if block > 0 && p.z < self.ground.height(p.x, p.y) - tol {
            return false;
        }
        !self
            .blocks
            .iter()
            .enumerate()
            .any(|(k, b)| k + 1 != block && b.contains(p))
    }

    pub fn write_ply<W: Write>(&self, w: &mut W) -> Result<()> {
        self.mesh.write_ply(w)
    }
}

pub fn generate_scene(seed: u64, extent: f64, buildings: usize) -> Result<SyntheticScene> {
    generate_scene_with(
        seed,
        &SceneParams {
            extent,
            buildings,
            ..SceneParams::default()
        },
    )
}

pub fn generate_scene_with(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    if !(params.extent > 0.0) || !params.extent.is_finite() {
        return Err(Error::Config(format!(
            "scene extent must be positive, got {}",
            params.extent
        )));
    }
    if !(params.ground_cell > 0.0) || !(params.truth_density > 0.0) {
        return Err(Error::Config(
            "ground cell and truth density must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = params.extent;
    let n = ((e / params.ground_cell).round() as usize).max(1);
    let cell = e / n as f64;
    let (kx, ky) = (
        rng.random_range(1.0..2.5) * std::f64::consts::TAU / e,
        rng.random_range(1.0..2.5) * std::f64::consts::TAU / e,
    );
    let (px, py) = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let amp = params.ground_amplitude;
    let mut heights = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (-e / 2.0 + i as f64 * cell, -e / 2.0 + j as f64 * cell);
            heights.push(amp * (kx * x + px).sin() * (ky * y + py).cos());
        }
    }
    let ground = Heightfield {
        origin: (-e / 2.0, -e / 2.0),
        cell,
        n,
        heights,
    };

    // Footprints inside the central region, separated by streets.
    let inner = 0.3 * e;
    let street = 0.05 * e;
    let mut blocks: Vec<Block> = Vec::new();
    let mut attempts = 0;
    while blocks.len() < params.buildings && attempts < 1000 * params.buildings.max(1) {
        attempts += 1;
        let hx = rng.random_range(0.05..0.1) * e;
        let hy = rng.random_range(0.05..0.1) * e;
        let height = rng.random_range(0.08..0.2) * e;
        let shape = match rng.random_range(0..3) {
            0 => Shape::Box {
                half_x: hx,
                half_y: hy,
                height,
            },
            1 => Shape::Courtyard {
                half_x: hx,
                half_y: hy,
                inner_x: 0.5 * hx,
                inner_y: 0.5 * hy,
                height,
            },
            _ => Shape::Overhang {
                stem_x: 0.5 * hx,
                cap_x: hx,
                half_y: hy,
                stem_height: 0.5 * height,
                height,
            },
        };
        let x = rng.random_range(-inner..inner);
        let y = rng.random_range(-inner..inner);
        let yaw = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
        let r = hx.hypot(hy);
        if blocks
            .iter()
            .any(|b| b.center.distance(&Point3::new(x, y, b.center.z)) < b.radius() + r + street)
        {
            continue;
        }
        // Sink the base below the lowest ground point under the footprint.
        let mut base = f64::INFINITY;
        for a in 0..=4 {
            for c in 0..=4 {
                let (lx, ly) = (hx * (a as f64 / 2.0 - 1.0), hy * (c as f64 / 2.0 - 1.0));
                let (s, co) = f64::sin_cos(yaw);
                base = base.min(ground.height(x + co * lx - s * ly, y + s * lx + co * ly));
            }
        }
        blocks.push(Block {
            shape,
            center: Point3::new(x, y, base - 0.5),
            yaw,
        });
    }

    let (mut vertices, mut triangles) = ground.mesh();
    let mut face_ranges = vec![0..triangles.len()];
    for b in &blocks {
        let (lv, lt) = b.shape.local_mesh();
        let off = vertices.len() as u32;
        vertices.extend(lv.iter().map(|p| b.to_world(p)));
        let start = triangles.len();
        triangles.extend(lt.iter().map(|t| t.map(|i| i + off)));
        face_ranges.push(start..triangles.len());
    }
    let mesh = SurfaceMesh::new(vertices, triangles);
    let (lo, hi) = mesh.bbox().expect("ground is non-empty");
    let diagonal = lo.distance(&hi);
    let mut scene = SyntheticScene {
        seed,
        params: params.clone(),
        ground,
        blocks,
        mesh,
        face_ranges,
        truth_samples: Vec::new(),
        diagonal,
    };
    scene.truth_samples = exposed_samples(&scene, params.truth_density, &mut rng)
        .into_iter()
        .map(|s| s.0)
        .collect();
    Ok(scene)
}

/// Area-uniform samples of the exposed surface with their face ids:
/// `ceil(area * density)` candidates per face, buried or enclosed ones dropped.
pub fn exposed_samples(
    scene: &SyntheticScene,
    density: f64,
    rng: &mut impl Rng,
) -> Vec<(Point3, usize)> {
    let tol = 1e-9 * scene.diagonal;
    let mut out = Vec::new();
    for f in 0..scene.mesh.num_faces() {
        let [a, b, c] = scene.mesh.face_points(f);
        let n = (scene.mesh.face_area(f) * density).ceil() as usize;
        for _ in 0..n {
            let p = triangle_point(&a, &b, &c, rng.random(), rng.random());
            if scene.is_exposed(&p, f, tol) {
                out.push((p, f));
            }
        }
    }
    out
}
