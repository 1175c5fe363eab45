//! Software depth-buffer rasterization for per-view face visibility.
//!
//! Samples sit at the centers of a grid covering the image at
//! `resolution_scale` times its resolution. Depth is camera-frame z,
//! interpolated perspective-correctly (1/z is affine in screen space).

use rayon::prelude::*;

use crate::geometry::{Point3, Projection, ViewPose};
use crate::surface::SurfaceMesh;

/// Triangles are clipped against this camera-frame depth before projection.
const NEAR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterParams {
    /// Sample grid resolution relative to the image, in (0, 1].
    pub resolution_scale: f64,
    /// Absolute depth tolerance of the visibility test, meters.
    pub depth_tolerance: f64,
}

impl RasterParams {
    pub fn for_scene(diagonal: f64) -> Self {
        RasterParams {
            resolution_scale: 0.25,
            depth_tolerance: 1e-3 * diagonal,
        }
    }
}

/// For each face, the sorted indices (into the view list) of the views that see it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisibilityTable {
    pub num_views: usize,
    pub visible: Vec<Vec<u32>>,
}

impl VisibilityTable {
    pub fn views_of(&self, face: usize) -> &[u32] {
        &self.visible[face]
    }

    pub fn is_visible(&self, face: usize, view: usize) -> bool {
        self.visible[face].binary_search(&(view as u32)).is_ok()
    }
}

/// Sample grid size for a view.
pub fn sample_grid(view: &ViewPose, resolution_scale: f64) -> (usize, usize) {
    let k = &view.intrinsics;
    let w = ((k.width as f64 * resolution_scale).round() as usize).max(1);
    let h = ((k.height as f64 * resolution_scale).round() as usize).max(1);
    (w, h)
}

/// Pixel coordinates of the center of sample (i, j).
pub fn sample_center(view: &ViewPose, grid: (usize, usize), i: usize, j: usize) -> (f64, f64) {
    let k = &view.intrinsics;
    (
        (i as f64 + 0.5) * k.width as f64 / grid.0 as f64,
        (j as f64 + 0.5) * k.height as f64 / grid.1 as f64,
    )
}

/// Screen-space vertex: sample-grid coordinates plus camera depth.
#[derive(Debug, Clone, Copy)]
struct SVert {
    x: f64,
    y: f64,
    z: f64,
}

struct Frame<'a> {
    view: &'a ViewPose,
    grid: (usize, usize),
    /// Pixel-to-sample scale per axis.
    sx: f64,
    sy: f64,
}

impl Frame<'_> {
    fn new(view: &ViewPose, resolution_scale: f64) -> Frame<'_> {
        let grid = sample_grid(view, resolution_scale);
        let k = &view.intrinsics;
        Frame {
            view,
            grid,
            sx: grid.0 as f64 / k.width as f64,
            sy: grid.1 as f64 / k.height as f64,
        }
    }

    fn to_screen(&self, cam: &Point3) -> SVert {
        let k = &self.view.intrinsics;
        let u = k.focal * cam.x / cam.z + k.cx;
        let v = k.focal * cam.y / cam.z + k.cy;
        SVert {
            x: u * self.sx,
            y: v * self.sy,
            z: cam.z,
        }
    }

    /// Screen triangles of a camera-frame triangle after near clipping.
    fn clip_project(&self, tri: [Point3; 3]) -> Vec<[SVert; 3]> {
        let poly = clip_near(&tri);
        if poly.len() < 3 {
            return Vec::new();
        }
        let s: Vec<SVert> = poly.iter().map(|p| self.to_screen(p)).collect();
        (1..s.len() - 1).map(|i| [s[0], s[i], s[i + 1]]).collect()
    }
}

/// Sutherland-Hodgman against z >= NEAR.
fn clip_near(tri: &[Point3; 3]) -> Vec<Point3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (ia, ib) = (a.z >= NEAR, b.z >= NEAR);
        if ia {
            out.push(a);
        }
        if ia != ib {
            let t = (NEAR - a.z) / (b.z - a.z);
            let mut p = a.lerp(&b, t);
            p.z = NEAR;
            out.push(p);
        }
    }
    out
}

/// Calls `f(sample_index, depth)` for every sample center inside `t`
/// (edges inclusive).
fn raster(t: &[SVert; 3], grid: (usize, usize), mut f: impl FnMut(usize, f64)) {
    let area = edge(&t[0], &t[1], t[2].x, t[2].y);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_x = t.iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
    let max_x = t.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = t.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = t.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
    let i0 = (min_x - 0.5).ceil().max(0.0);
    let i1 = (max_x - 0.5).floor().min(grid.0 as f64 - 1.0);
    let j0 = (min_y - 0.5).ceil().max(0.0);
    let j1 = (max_y - 0.5).floor().min(grid.1 as f64 - 1.0);
    if i0 > i1 || j0 > j1 {
        return;
    }
    let inv_z = [1.0 / t[0].z, 1.0 / t[1].z, 1.0 / t[2].z];
    for j in j0 as usize..=j1 as usize {
        let y = j as f64 + 0.5;
        for i in i0 as usize..=i1 as usize {
            let x = i as f64 + 0.5;
            let w0 = edge(&t[1], &t[2], x, y) / area;
            let w1 = edge(&t[2], &t[0], x, y) / area;
            let w2 = edge(&t[0], &t[1], x, y) / area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let z = 1.0 / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
            f(j * grid.0 + i, z);
        }
    }
}

fn edge(a: &SVert, b: &SVert, x: f64, y: f64) -> f64 {
    (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x)
}

/// True when every vertex projects in front of the camera and inside the image.
pub fn projects_in_bounds(view: &ViewPose, pts: &[Point3; 3]) -> bool {
    pts.iter().all(|p| match view.project(p) {
        Projection::Pixel { u, v, .. } => view.intrinsics.contains(u, v),
        Projection::BehindCamera => false,
    })
}

/// Nearest camera depth per sample of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub grid: (usize, usize),
    /// Row-major, `f64::INFINITY` where nothing was drawn.
    pub depth: Vec<f64>,
    sx: f64,
    sy: f64,
}

impl DepthBuffer {
    pub fn render(mesh: &SurfaceMesh, view: &ViewPose, resolution_scale: f64) -> DepthBuffer {
        let frame = Frame::new(view, resolution_scale);
        let cam: Vec<Point3> = mesh.vertices.iter().map(|p| view.to_camera(p)).collect();
        let mut depth = vec![f64::INFINITY; frame.grid.0 * frame.grid.1];
        for t in &mesh.triangles {
            for st in frame.clip_project(t.map(|i| cam[i as usize])) {
                raster(&st, frame.grid, |s, z| {
                    if z < depth[s] {
                        depth[s] = z;
                    }
                });
            }
        }
        DepthBuffer {
            grid: frame.grid,
            depth,
            sx: frame.sx,
            sy: frame.sy,
        }
    }

    /// Depth of the sample whose cell contains pixel (u, v).
    pub fn depth_at(&self, u: f64, v: f64) -> Option<f64> {
        let (x, y) = ((u * self.sx).floor(), (v * self.sy).floor());
        if !(x >= 0.0 && y >= 0.0) || x as usize >= self.grid.0 || y as usize >= self.grid.1 {
            return None;
        }
        Some(self.depth[y as usize * self.grid.0 + x as usize])
    }
}

/// Faces of `mesh` visible in `view`, in increasing order.
pub fn visible_faces(mesh: &SurfaceMesh, view: &ViewPose, params: &RasterParams) -> Vec<u32> {
    let frame = Frame::new(view, params.resolution_scale);
    let cam: Vec<Point3> = mesh.vertices.iter().map(|p| view.to_camera(p)).collect();
    let tri_cam = |f: usize| mesh.triangles[f].map(|i| cam[i as usize]);
    let depth = DepthBuffer::render(mesh, view, params.resolution_scale).depth;
    let mut out = Vec::new();
    for f in 0..mesh.num_faces() {
        if !projects_in_bounds(view, &mesh.face_points(f)) {
            continue;
        }
        // In bounds with positive depth: no clipping happens.
        let c = tri_cam(f);
        let t = [
            frame.to_screen(&c[0]),
            frame.to_screen(&c[1]),
            frame.to_screen(&c[2]),
        ];
        let mut covered = false;
        let mut wins = false;
        raster(&t, frame.grid, |s, z| {
            covered = true;
            wins |= z <= depth[s] + params.depth_tolerance;
        });
        if !covered {
            // Sub-sample face: test the sample under its projected centroid.
            let x = (t[0].x + t[1].x + t[2].x) / 3.0;
            let y = (t[0].y + t[1].y + t[2].y) / 3.0;
            let (i, j) = (x.floor(), y.floor());
            if i >= 0.0 && j >= 0.0 && (i as usize) < frame.grid.0 && (j as usize) < frame.grid.1 {
                let z = 3.0 / (1.0 / t[0].z + 1.0 / t[1].z + 1.0 / t[2].z);
                let s = j as usize * frame.grid.0 + i as usize;
                wins = z <= depth[s] + params.depth_tolerance;
            }
        }
        if wins {
            out.push(f as u32);
        }
    }
    out
}

/// Visibility of every face in every view; views are rasterized in parallel.
pub fn build_visibility(
    mesh: &SurfaceMesh,
    views: &[ViewPose],
    params: &RasterParams,
) -> VisibilityTable {
    let per_view: Vec<Vec<u32>> = views
        .par_iter()
        .map(|v| visible_faces(mesh, v, params))
        .collect();
    let mut visible = vec![Vec::new(); mesh.num_faces()];
    for (vi, faces) in per_view.iter().enumerate() {
        for &f in faces {
            visible[f as usize].push(vi as u32);
        }
    }
    VisibilityTable {
        num_views: views.len(),
        visible,
    }
}

/// Area in px² of the triangle's projection clipped to the image rectangle.
/// Zero when any vertex is behind the camera.
pub fn projected_area(view: &ViewPose, pts: &[Point3; 3]) -> f64 {
    let mut poly = Vec::with_capacity(7);
    for p in pts {
        match view.project(p) {
            Projection::Pixel { u, v, .. } => poly.push((u, v)),
            Projection::BehindCamera => return 0.0,
        }
    }
    let k = &view.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    poly = clip_half(&poly, |p| p.0, 0.0, true);
    poly = clip_half(&poly, |p| p.0, w, false);
    poly = clip_half(&poly, |p| p.1, 0.0, true);
    poly = clip_half(&poly, |p| p.1, h, false);
    shoelace(&poly).abs()
}

fn clip_half(
    poly: &[(f64, f64)],
    coord: impl Fn(&(f64, f64)) -> f64,
    bound: f64,
    keep_above: bool,
) -> Vec<(f64, f64)> {
    let inside = |p: &(f64, f64)| {
        if keep_above {
            coord(p) >= bound
        } else {
            coord(p) <= bound
        }
    };
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (ia, ib) = (inside(&a), inside(&b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let t = (bound - coord(&a)) / (coord(&b) - coord(&a));
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| poly[i].0 * poly[(i + 1) % n].1 - poly[(i + 1) % n].0 * poly[i].1)
        .sum::<f64>()
}
