//! Ray-cast visibility oracle and synthetic quality inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skyloop_core::quality::{Observations, QualityRecord};
use skyloop_core::surface::SurfaceMesh;
use skyloop_core::{Intrinsics, Point3, Projection, ViewPose};

/// Ground grid plus randomly placed tilted plates above it.
pub fn occluder_scene(seed: u64, plates: usize) -> SurfaceMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::new();
    let mut t = Vec::new();
    let n = 10;
    for j in 0..=n {
        for i in 0..=n {
            v.push(Point3::new(2.0 * i as f64, 2.0 * j as f64, 0.0));
        }
    }
    for j in 0..n {
        for i in 0..n {
            let a = (j * (n + 1) + i) as u32;
            let b = a + 1;
            let c = a + (n + 1) as u32;
            t.push([a, b, c + 1]);
            t.push([a, c + 1, c]);
        }
    }
    for _ in 0..plates {
        let c = Point3::new(
            rng.random_range(0.0..20.0),
            rng.random_range(0.0..20.0),
            rng.random_range(1.0..6.0),
        );
        let h = rng.random_range(0.3..1.2);
        let tilt = Point3::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            0.0,
        );
        let base = v.len() as u32;
        for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            v.push(Point3::new(
                c.x + dx * h,
                c.y + dy * h,
                c.z + tilt.x * dx * h + tilt.y * dy * h,
            ));
        }
        t.push([base, base + 1, base + 2]);
        t.push([base, base + 2, base + 3]);
    }
    SurfaceMesh::new(v, t)
}

pub fn random_views(seed: u64, k: usize) -> Vec<ViewPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| {
            let c = Point3::new(
                rng.random_range(-5.0..25.0),
                rng.random_range(-5.0..25.0),
                rng.random_range(12.0..30.0),
            );
            let target = Point3::new(
                rng.random_range(5.0..15.0),
                rng.random_range(5.0..15.0),
                0.0,
            );
            ViewPose::look_at(i as u32, c, target, Intrinsics::centered(400.0, 320, 240)).unwrap()
        })
        .collect()
}

/// Möller-Trumbore, edges inclusive; returns the ray parameter.
pub fn intersect(o: &Point3, d: &Point3, tri: &[Point3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let s = *o - tri[0];
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = d.dot(&q) / det;
    let t = e2.dot(&q) / det;
    (u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0).then_some(t)
}

/// A face is visible when its vertices project in bounds and some sample
/// ray hits it within `eps` of the nearest hit; faces hit by no sample ray
/// are judged at the sample under their projected centroid.
pub fn raycast_visible(mesh: &SurfaceMesh, view: &ViewPose, scale: f64, eps: f64) -> Vec<bool> {
    let k = view.intrinsics;
    let gw = ((k.width as f64 * scale).round() as usize).max(1);
    let gh = ((k.height as f64 * scale).round() as usize).max(1);
    let fwd = view.forward();
    let depth_along = |u: f64, v: f64, f: usize| -> Option<f64> {
        let d = view.unproject(u, v, 1.0) - view.center;
        intersect(&view.center, &d, &mesh.face_points(f)).map(|t| t * d.dot(&fwd))
    };
    let nf = mesh.num_faces();
    let mut hit = vec![false; nf];
    let mut wins = vec![false; nf];
    let mut nearest = vec![f64::INFINITY; gw * gh];
    for j in 0..gh {
        for i in 0..gw {
            let (u, v) = (
                (i as f64 + 0.5) * k.width as f64 / gw as f64,
                (j as f64 + 0.5) * k.height as f64 / gh as f64,
            );
            let hits: Vec<(usize, f64)> = (0..nf)
                .filter_map(|f| depth_along(u, v, f).map(|z| (f, z)))
                .collect();
            let zmin = hits.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
            nearest[j * gw + i] = zmin;
            for (f, z) in hits {
                hit[f] = true;
                wins[f] |= z <= zmin + eps;
            }
        }
    }
    (0..nf)
        .map(|f| {
            let px: Option<Vec<(f64, f64)>> = mesh
                .face_points(f)
                .iter()
                .map(|p| match view.project(p) {
                    Projection::Pixel { u, v, .. } if k.contains(u, v) => Some((u, v)),
                    _ => None,
                })
                .collect();
            let Some(px) = px else { return false };
            if hit[f] {
                return wins[f];
            }
            let (u, v) = (
                (px[0].0 + px[1].0 + px[2].0) / 3.0,
                (px[0].1 + px[1].1 + px[2].1) / 3.0,
            );
            let (i, j) = (
                (u * gw as f64 / k.width as f64).floor(),
                (v * gh as f64 / k.height as f64).floor(),
            );
            if i < 0.0 || j < 0.0 || i as usize >= gw || j as usize >= gh {
                return false;
            }
            // Depth of the face's plane along the centroid's pixel ray.
            let d = view.unproject(u, v, 1.0) - view.center;
            let p = mesh.face_points(f);
            let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let t = (p[0] - view.center).dot(&n) / d.dot(&n);
            t * d.dot(&fwd) <= nearest[j as usize * gw + i as usize] + eps
        })
        .collect()
}

pub fn observations(
    mesh: &SurfaceMesh,
    views: &[ViewPose],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Observations {
    let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    mesh.vertices
        .iter()
        .map(|p| {
            views
                .iter()
                .filter_map(|v| v.project(p).pixel().map(|(u, w)| (u, w, v.view_id)))
                .map(|(u, w, id)| {
                    if sigma == 0.0 {
                        (id, u, w)
                    } else {
                        (id, u + noise.sample(rng), w + noise.sample(rng))
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<QualityRecord> {
    (0..n)
        .map(|i| {
            let r = rng.random_range(0..12);
            QualityRecord {
                face: i as u32,
                gsd: (r > 0 && rng.random_bool(0.95)).then(|| rng.random_range(0.001..0.1)),
                redundancy: r,
                reproj_error: (r > 0 && rng.random_bool(0.9)).then(|| rng.random_range(0.0..3.0)),
                q_total: None,
            }
        })
        .collect()
}
