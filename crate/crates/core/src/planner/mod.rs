//! Quality-driven view planning: low-quality face clustering, candidate
//! viewpoints inside a plane-aligned box, greedy sparsification and tour
//! sequencing.

pub mod dbscan;
pub mod frame;
pub mod tour;
pub mod views;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Point3;
use crate::quality::{percentile, QualityRecord};
use crate::surface::SurfaceMesh;

pub use dbscan::dbscan;
pub use frame::{build_obb, fit_base_plane, BasePlane, OrientedBox, PlaneProvenance, RansacParams};
pub use tour::{optimize_tour, Tour, TourCost};
pub use views::{adaptive_target, generate_viewpoints, sparsify, Viewpoint, ViewpointParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowQualityCluster {
    pub id: usize,
    /// Member face ids, ascending.
    pub members: Vec<u32>,
    /// Mean of the member face centroids.
    pub centroid: Point3,
    /// Quality deficit max(0, tau - q) per member.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    /// Fixed threshold; `None` uses `tau_percentile` of the scores.
    pub tau_quality: Option<f64>,
    pub tau_percentile: f64,
    /// DBSCAN radius as a fraction of the scene diagonal.
    pub eps_spatial: f64,
    pub n_min_floor: usize,
    pub n_min_fraction: f64,
    pub ransac_iterations: usize,
    pub ransac_eps: f64,
    pub ransac_min_inlier_ratio: f64,
    pub obb_alpha: f64,
    pub obb_inflate: f64,
    pub max_rays_per_cluster: usize,
    pub scales: Vec<f64>,
    pub d_min: f64,
    pub target_cap: usize,
    pub altitude_weight: f64,
    pub max_2opt_passes: usize,
    pub seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            tau_quality: None,
            tau_percentile: 25.0,
            eps_spatial: 0.008,
            n_min_floor: 5,
            n_min_fraction: 0.001,
            ransac_iterations: 100,
            ransac_eps: 0.01,
            ransac_min_inlier_ratio: 0.1,
            obb_alpha: 0.8,
            obb_inflate: 1e-6,
            max_rays_per_cluster: 200,
            scales: vec![0.5, 0.75, 1.0],
            d_min: 0.02,
            target_cap: 50,
            altitude_weight: 0.3,
            max_2opt_passes: 1000,
            seed: 7,
        }
    }
}

/// Threshold and the faces scoring at or below it. Unobserved faces score 0.
pub fn detect_low_quality(
    records: &[QualityRecord],
    tau: Option<f64>,
    tau_percentile: f64,
) -> (f64, Vec<u32>) {
    if records.is_empty() {
        return (tau.unwrap_or(0.0), Vec::new());
    }
    let tau = tau.unwrap_or_else(|| {
        let mut s: Vec<f64> = records.iter().map(|r| r.score()).collect();
        s.sort_by(f64::total_cmp);
        percentile(&s, tau_percentile)
    });
    (
        tau,
        records
            .iter()
            .filter(|r| r.score() <= tau)
            .map(|r| r.face)
            .collect(),
    )
}

pub fn min_cluster_size(n_low: usize, floor: usize, fraction: f64) -> usize {
    floor.max((fraction * n_low as f64).ceil() as usize)
}

/// DBSCAN over the centroids of `low` faces; noise is dropped.
pub fn cluster_faces(
    low: &[u32],
    mesh: &SurfaceMesh,
    scores: &[f64],
    tau: f64,
    eps: f64,
    min_points: usize,
) -> Vec<LowQualityCluster> {
    let pts: Vec<Point3> = low
        .iter()
        .map(|&f| mesh.face_centroid(f as usize))
        .collect();
    let labels = dbscan(&pts, eps, min_points);
    let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters: Vec<LowQualityCluster> = (0..k)
        .map(|id| LowQualityCluster {
            id,
            members: vec![],
            centroid: Point3::ORIGIN,
            weights: vec![],
        })
        .collect();
    let mut sums = vec![Point3::ORIGIN; k];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = *l {
            let f = low[i];
            clusters[c].members.push(f);
            clusters[c]
                .weights
                .push((tau - scores[f as usize]).max(0.0));
            sums[c] += pts[i];
        }
    }
    for (c, s) in clusters.iter_mut().zip(sums) {
        c.centroid = s / c.members.len() as f64;
    }
    clusters
}

/// Distinct colors per cluster; faces outside every cluster are gray.
pub fn cluster_colors(num_faces: usize, clusters: &[LowQualityCluster]) -> Vec<[u8; 3]> {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    let mut out = vec![[128, 128, 128]; num_faces];
    for c in clusters {
        for &f in &c.members {
            out[f as usize] = PALETTE[c.id % PALETTE.len()];
        }
    }
    out
}

/// Everything the planner decided, in a form that serializes deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub tau_quality: f64,
    pub low_quality_faces: Vec<u32>,
    pub clusters: Vec<LowQualityCluster>,
    pub plane: BasePlane,
    pub obb: Option<OrientedBox>,
    pub candidates: Vec<Viewpoint>,
    pub selected: Vec<Viewpoint>,
    pub start: Point3,
    /// `selected` in flight order.
    pub trajectory: Vec<Viewpoint>,
    pub trajectory_cost: f64,
    pub nearest_neighbor_cost: f64,
}

impl PlanResult {
    /// Euclidean length of the flight from `start` through the trajectory.
    pub fn total_length(&self) -> f64 {
        let mut prev = self.start;
        let mut len = 0.0;
        for w in &self.trajectory {
            len += prev.distance(&w.position);
            prev = w.position;
        }
        len
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    /// `{"waypoints": [{position, look_at}...], "summary": {...}}`.
    pub fn write_trajectory_json<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Wp {
            position: [f64; 3],
            look_at: [f64; 3],
        }
        #[derive(Serialize)]
        struct Summary {
            viewpoint_count: usize,
            total_length: f64,
            cost: f64,
        }
        #[derive(Serialize)]
        struct Out {
            waypoints: Vec<Wp>,
            summary: Summary,
        }
        let a = |p: &Point3| [p.x, p.y, p.z];
        let out = Out {
            waypoints: self
                .trajectory
                .iter()
                .map(|v| Wp {
                    position: a(&v.position),
                    look_at: a(&v.look_at),
                })
                .collect(),
            summary: Summary {
                viewpoint_count: self.trajectory.len(),
                total_length: self.total_length(),
                cost: self.trajectory_cost,
            },
        };
        serde_json::to_writer_pretty(w, &out)?;
        Ok(())
    }
}

/// Full planning pass over a mesh with fused quality.
///
/// `envelope` are extra points (typically past camera centers) the
/// viewpoint box must enclose besides the mesh; `cameras` feed the plane
/// fallback and orientation.
pub fn plan(
    mesh: &SurfaceMesh,
    records: &[QualityRecord],
    cameras: &[Point3],
    envelope: &[Point3],
    start: Point3,
    diagonal: f64,
    params: &PlannerParams,
) -> PlanResult {
    let (tau, low) = detect_low_quality(records, params.tau_quality, params.tau_percentile);
    let scores: Vec<f64> = records.iter().map(|r| r.score()).collect();
    let n_min = min_cluster_size(low.len(), params.n_min_floor, params.n_min_fraction);
    let clusters = cluster_faces(
        &low,
        mesh,
        &scores,
        tau,
        params.eps_spatial * diagonal,
        n_min,
    );
    let ransac = RansacParams {
        iterations: params.ransac_iterations,
        eps_dist: params.ransac_eps * diagonal,
        min_inlier_ratio: params.ransac_min_inlier_ratio,
        seed: params.seed,
    };
    let plane = fit_base_plane(&mesh.vertices, cameras, &ransac);
    let box_points: Vec<Point3> = mesh.vertices.iter().chain(envelope).copied().collect();
    let obb = build_obb(
        &box_points,
        &plane,
        params.obb_alpha,
        params.obb_inflate * diagonal,
    );
    let vp = ViewpointParams {
        max_rays_per_cluster: params.max_rays_per_cluster,
        scales: params.scales.clone(),
        seed: params.seed,
    };
    let candidates = match &obb {
        Some(b) if !clusters.is_empty() => generate_viewpoints(&clusters, mesh, b, &vp),
        _ => Vec::new(),
    };
    let positions: Vec<Point3> = candidates.iter().map(|c| c.position).collect();
    let target = adaptive_target(candidates.len(), params.target_cap);
    let picked = sparsify(&positions, params.d_min * diagonal, target);
    let selected: Vec<Viewpoint> = picked.iter().map(|&i| candidates[i]).collect();
    let cost = TourCost {
        up: plane.normal,
        altitude_weight: params.altitude_weight,
    };
    let sel_pos: Vec<Point3> = selected.iter().map(|v| v.position).collect();
    let tour = optimize_tour(&start, &sel_pos, &cost, params.max_2opt_passes);
    PlanResult {
        tau_quality: tau,
        low_quality_faces: low,
        clusters,
        plane,
        obb,
        trajectory: tour.order.iter().map(|&i| selected[i]).collect(),
        candidates,
        selected,
        start,
        trajectory_cost: tour.cost,
        nearest_neighbor_cost: tour.nearest_neighbor_cost,
    }
}
