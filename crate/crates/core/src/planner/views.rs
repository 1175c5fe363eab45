//! Candidate viewpoint generation along face normals and greedy sparsification.

use log::debug;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::OrientedBox;
use super::LowQualityCluster;
use crate::geometry::Point3;
use crate::surface::SurfaceMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub position: Point3,
    pub look_at: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointParams {
    /// Members beyond this count are subsampled by deficit weight.
    pub max_rays_per_cluster: usize,
    /// Fractions of the exit distance at which candidates are placed.
    pub scales: Vec<f64>,
    pub seed: u64,
}

impl Default for ViewpointParams {
    fn default() -> Self {
        ViewpointParams {
            max_rays_per_cluster: 200,
            scales: vec![0.5, 0.75, 1.0],
            seed: 0,
        }
    }
}

/// Faces whose normals seed rays for `cluster`, in member order.
fn ray_faces(cluster: &LowQualityCluster, params: &ViewpointParams) -> Vec<u32> {
    if cluster.members.len() <= params.max_rays_per_cluster {
        return cluster.members.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(
        params.seed ^ (cluster.id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    );
    let idx: Vec<usize> = (0..cluster.members.len()).collect();
    let uniform = cluster.weights.iter().all(|&w| w <= 0.0);
    let mut picked: Vec<usize> = idx
        .choose_multiple_weighted(&mut rng, params.max_rays_per_cluster, |&i| {
            if uniform {
                1.0
            } else {
                cluster.weights[i]
            }
        })
        .map(|it| it.copied().collect())
        .unwrap_or_default();
    picked.sort_unstable();
    picked.into_iter().map(|i| cluster.members[i]).collect()
}

/// Candidates along rays from `g` in direction `dir`, placed at the given
/// fractions of the box exit distance and kept only when inside the box.
pub fn ray_candidates(
    g: &Point3,
    dir: &Point3,
    obb: &OrientedBox,
    scales: &[f64],
) -> Vec<Viewpoint> {
    let Some((_, t_hit)) = obb.ray_interval(g, dir) else {
        return Vec::new();
    };
    if !(t_hit > 0.0) {
        return Vec::new();
    }
    let tol = 1e-9 * (1.0 + obb.extents().iter().fold(0.0f64, |a, &b| a.max(b)));
    scales
        .iter()
        .map(|s| Viewpoint {
            position: *g + *dir * (s * t_hit),
            look_at: *g,
        })
        .filter(|v| obb.contains(&v.position, tol))
        .collect()
}

/// Candidate viewpoints for every cluster, in cluster order.
pub fn generate_viewpoints(
    clusters: &[LowQualityCluster],
    mesh: &SurfaceMesh,
    obb: &OrientedBox,
    params: &ViewpointParams,
) -> Vec<Viewpoint> {
    let per_cluster: Vec<Vec<Viewpoint>> = clusters
        .par_iter()
        .map(|c| {
            let mut out = Vec::new();
            for f in ray_faces(c, params) {
                let Some(n) = mesh.face_normal(f as usize).normalized() else {
                    continue;
                };
                out.extend(ray_candidates(&c.centroid, &n, obb, &params.scales));
            }
            if out.is_empty() {
                debug!("cluster {} produced no candidates", c.id);
            }
            out
        })
        .collect();
    per_cluster.into_iter().flatten().collect()
}

/// Selection size for a pool of `n` candidates.
pub fn adaptive_target(n: usize, cap: usize) -> usize {
    cap.min(10usize.max((3.0 * (n as f64).sqrt()).ceil() as usize))
}

/// Greedy farthest-point selection seeded by the candidate nearest the
/// pool centroid. Stops at `target` or when no candidate is at least
/// `d_min` from every selected one. Ties go to the lower index.
pub fn sparsify(points: &[Point3], d_min: f64, target: usize) -> Vec<usize> {
    if points.is_empty() || target == 0 {
        return Vec::new();
    }
    let c = Point3::centroid(points).expect("non-empty");
    let seed = argmin(points.iter().map(|p| p.distance(&c)));
    let mut selected = vec![seed];
    let mut dist: Vec<f64> = points.iter().map(|p| p.distance(&points[seed])).collect();
    while selected.len() < target {
        let next = argmax(dist.iter().copied());
        if !(dist[next] >= d_min) {
            break;
        }
        selected.push(next);
        let q = points[next];
        dist.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(p.distance(&q)));
    }
    selected
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in it.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in it.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}
