//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyloop_core::quality::QualityRecord;
use skyloop_core::surface::SurfaceMesh;
use skyloop_core::Point3;

pub fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..30.0),
            )
        })
        .collect()
}

/// Flat `n x n` grid of unit squares, two faces each.
pub fn grid_mesh(n: usize) -> SurfaceMesh {
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push(Point3::new(i as f64, j as f64, 0.0));
        }
    }
    let mut t = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = (j * (n + 1) + i) as u32;
            let c = a + (n + 1) as u32;
            t.push([a, a + 1, c + 1]);
            t.push([a, c + 1, c]);
        }
    }
    SurfaceMesh::new(v, t)
}

/// Fused records: good everywhere except a few round low-quality patches.
pub fn patchy_records(mesh: &SurfaceMesh, seed: u64) -> Vec<QualityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = mesh.bbox().expect("non-empty mesh");
    let centers: Vec<Point3> = (0..6)
        .map(|_| {
            Point3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                0.0,
            )
        })
        .collect();
    let radius = 0.06 * lo.distance(&hi);
    (0..mesh.num_faces())
        .map(|f| {
            let c = mesh.face_centroid(f);
            let low = centers.iter().any(|k| k.distance(&c) < radius);
            QualityRecord {
                face: f as u32,
                gsd: None,
                redundancy: 1,
                reproj_error: None,
                q_total: Some(if low {
                    rng.random_range(0.0..0.2)
                } else {
                    rng.random_range(0.5..1.0)
                }),
            }
        })
        .collect()
}
