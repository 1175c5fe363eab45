//! Reference DBSCAN, exhaustive tours and planner fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyloop_core::quality::QualityRecord;
use skyloop_core::surface::SurfaceMesh;
use skyloop_core::Point3;

/// Textbook DBSCAN over a full distance matrix, visiting points in index order.
pub fn reference_dbscan(pts: &[Point3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = pts.len();
    let region = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| pts[i].distance(&pts[j]) <= eps)
            .collect()
    };
    const UNDEF: i64 = -2;
    const NOISE: i64 = -1;
    let mut label = vec![UNDEF; n];
    let mut c = 0i64;
    for p in 0..n {
        if label[p] != UNDEF {
            continue;
        }
        let nb = region(p);
        if nb.len() < min_pts {
            label[p] = NOISE;
            continue;
        }
        label[p] = c;
        let mut seeds: Vec<usize> = nb.into_iter().filter(|&q| q != p).collect();
        let mut k = 0;
        while k < seeds.len() {
            let q = seeds[k];
            k += 1;
            if label[q] == NOISE {
                label[q] = c;
            }
            if label[q] != UNDEF {
                continue;
            }
            label[q] = c;
            let nq = region(q);
            if nq.len() >= min_pts {
                seeds.extend(nq);
            }
        }
        c += 1;
    }
    label
        .into_iter()
        .map(|l| (l >= 0).then_some(l as usize))
        .collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// A flat grid of `n * n * 2` faces with a noisy patch of low quality.
pub fn grid_mesh(n: usize) -> SurfaceMesh {
    let mut v = Vec::new();
    let mut t = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            v.push(Point3::new(i as f64, j as f64, 0.0));
        }
    }
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

pub fn patchy_records(mesh: &SurfaceMesh, seed: u64) -> Vec<QualityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Point3> = (0..4)
        .map(|_| {
            Point3::new(
                rng.random_range(5.0..45.0),
                rng.random_range(5.0..45.0),
                0.0,
            )
        })
        .collect();
    (0..mesh.num_faces())
        .map(|f| {
            let c = mesh.face_centroid(f);
            let near = centers.iter().any(|k| k.distance(&c) < 4.0);
            let q = if near {
                rng.random_range(0.0..0.2)
            } else {
                rng.random_range(0.5..1.0)
            };
            QualityRecord {
                face: f as u32,
                gsd: None,
                redundancy: 1,
                reproj_error: None,
                q_total: Some(q),
            }
        })
        .collect()
}
