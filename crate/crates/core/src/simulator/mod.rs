//! Synthetic stand-in for an online structure-from-motion front end: a
//! ground-truth scene, simulated flights, and noisy sparse observations.

pub mod scene;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Point3, Projection, ViewPose};
use crate::planner::Viewpoint;
use crate::quality::DepthBuffer;

pub use scene::{
    exposed_samples, generate_scene, generate_scene_with, Block, Heightfield, SceneParams, Shape,
    SyntheticScene,
};

/// A ground-truth surface point that features are detected at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u32,
    pub truth: Point3,
    /// Reported 3D position; differs from `truth` only with 3D noise.
    pub position: Point3,
    /// Unit outward normal of the surface it lies on.
    pub normal: Point3,
}

/// A landmark seen in at least two views so far, with the measurements
/// this batch contributes.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTrack {
    pub id: u32,
    pub point: Point3,
    /// `(view_id, u, v)`.
    pub observations: Vec<(u32, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub id: u32,
    pub views: Vec<ViewPose>,
    pub tracks: Vec<SparseTrack>,
    /// Last batch of a flight segment; the loop replans after it.
    pub segment_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureParams {
    pub intrinsics: Intrinsics,
    /// Pixel noise standard deviation.
    pub sigma_px: f64,
    /// Landmark position noise standard deviation, meters.
    pub sigma_3d: f64,
    /// Landmarks per m² of exposed surface.
    pub feature_density: f64,
    /// Depth-test tolerance relative to the landmark depth.
    pub depth_tolerance: f64,
    /// Depth-buffer resolution relative to the image.
    pub resolution_scale: f64,
    pub seed: u64,
}

impl Default for CaptureParams {
    fn default() -> Self {
        CaptureParams {
            intrinsics: Intrinsics::centered(500.0, 640, 480),
            sigma_px: 1.0,
            sigma_3d: 0.0,
            feature_density: 0.5,
            depth_tolerance: 0.01,
            resolution_scale: 1.0,
            seed: 0,
        }
    }
}

/// Flight simulator over one scene. Keeps every measurement so far so
/// that landmarks become tracks once a second view sees them, with stable ids.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub scene: SyntheticScene,
    pub params: CaptureParams,
    landmarks: Vec<Landmark>,
    history: Vec<Vec<(u32, f64, f64)>>,
    emitted: Vec<bool>,
    next_view: u32,
    next_batch: u32,
}

const LANDMARK_STREAM: u64 = 0x6c61_6e64_6d61_726b;
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0000;

impl Simulator {
    pub fn new(scene: SyntheticScene, params: CaptureParams) -> Result<Self> {
        if !(params.feature_density > 0.0) || params.sigma_px < 0.0 || params.sigma_3d < 0.0 {
            return Err(Error::Config(
                "feature density must be positive and noise non-negative".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ LANDMARK_STREAM);
        let samples = exposed_samples(&scene, params.feature_density, &mut rng);
        let noise = Normal::new(0.0, params.sigma_3d).map_err(|e| Error::Config(e.to_string()))?;
        let landmarks: Vec<Landmark> = samples
            .into_iter()
            .enumerate()
            .map(|(i, (p, f))| {
                let normal = scene
                    .mesh
                    .face_normal(f)
                    .normalized()
                    .unwrap_or(Point3::new(0.0, 0.0, 1.0));
                let position = if params.sigma_3d > 0.0 {
                    p + Point3::new(
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                    )
                } else {
                    p
                };
                Landmark {
                    id: i as u32,
                    truth: p,
                    position,
                    normal,
                }
            })
            .collect();
        let n = landmarks.len();
        Ok(Simulator {
            scene,
            params,
            landmarks,
            history: vec![Vec::new(); n],
            emitted: vec![false; n],
            next_view: 0,
            next_batch: 0,
        })
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn views_captured(&self) -> u32 {
        self.next_view
    }

    /// Landmarks visible in `view` with their exact projections.
    pub fn visible_landmarks(&self, view: &ViewPose) -> Vec<(u32, f64, f64)> {
        let zbuf = DepthBuffer::render(&self.scene.mesh, view, self.params.resolution_scale);
        let mut out = Vec::new();
        for l in &self.landmarks {
            if l.normal.dot(&(view.center - l.truth)) <= 0.0 {
                continue;
            }
            let Projection::Pixel { u, v, depth } = view.project(&l.truth) else {
                continue;
            };
            if !view.intrinsics.contains(u, v) {
                continue;
            }
            let Some(z) = zbuf.depth_at(u, v) else {
                continue;
            };
            if depth <= z + self.params.depth_tolerance * depth {
                out.push((l.id, u, v));
            }
        }
        out
    }

    /// Flies `trajectory` and returns the views and tracks it produced.
    /// Waypoints inside solid geometry are skipped.
    pub fn capture(&mut self, trajectory: &[Viewpoint]) -> Result<ObservationBatch> {
        if trajectory.is_empty() {
            return Err(Error::EmptyInput("trajectory"));
        }
        let mut views = Vec::new();
        for w in trajectory {
            if self.scene.is_solid(&w.position) {
                warn!(
                    "waypoint {:?} is inside the scene surface; view skipped",
                    w.position
                );
                continue;
            }
            match ViewPose::look_at(
                self.next_view,
                w.position,
                w.look_at,
                self.params.intrinsics,
            ) {
                Ok(v) => {
                    views.push(v);
                    self.next_view += 1;
                }
                Err(e) => warn!("waypoint {:?}: {e}; view skipped", w.position),
            }
        }
        let sigma = self.params.sigma_px;
        let seed = self.params.seed ^ NOISE_STREAM;
        let per_view: Vec<Vec<(u32, f64, f64)>> = views
            .par_iter()
            .map(|v| {
                let mut obs = self.visible_landmarks(v);
                if sigma > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        seed.wrapping_add((v.view_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
                    );
                    let n = Normal::new(0.0, sigma).expect("sigma is positive");
                    for o in &mut obs {
                        o.1 += n.sample(&mut rng);
                        o.2 += n.sample(&mut rng);
                    }
                }
                obs
            })
            .collect();

        let mut touched: Vec<u32> = Vec::new();
        let mut fresh: Vec<Vec<(u32, f64, f64)>> = Vec::new();
        let mut slot: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
        for (v, obs) in views.iter().zip(&per_view) {
            for &(id, u, w) in obs {
                self.history[id as usize].push((v.view_id, u, w));
                let k = *slot.entry(id).or_insert_with(|| {
                    touched.push(id);
                    fresh.push(Vec::new());
                    fresh.len() - 1
                });
                fresh[k].push((v.view_id, u, w));
            }
        }
        let mut order: Vec<usize> = (0..touched.len()).collect();
        order.sort_by_key(|&k| touched[k]);
        let mut tracks = Vec::new();
        for k in order {
            let id = touched[k] as usize;
            if self.history[id].len() < 2 {
                continue;
            }
            let observations = if self.emitted[id] {
                std::mem::take(&mut fresh[k])
            } else {
                self.history[id].clone()
            };
            self.emitted[id] = true;
            tracks.push(SparseTrack {
                id: id as u32,
                point: self.landmarks[id].position,
                observations,
            });
        }
        let id = self.next_batch;
        self.next_batch += 1;
        Ok(ObservationBatch {
            id,
            views,
            tracks,
            segment_end: true,
        })
    }

    /// `capture` in consecutive chunks of at most `batch_size` waypoints;
    /// only the last batch ends the segment.
    pub fn capture_batches(
        &mut self,
        trajectory: &[Viewpoint],
        batch_size: usize,
    ) -> Result<Vec<ObservationBatch>> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let chunks: Vec<&[Viewpoint]> = trajectory.chunks(batch_size).collect();
        let mut out = Vec::with_capacity(chunks.len());
        for (i, c) in chunks.iter().enumerate() {
            let mut b = self.capture(c)?;
            b.segment_end = i + 1 == chunks.len();
            out.push(b);
        }
        if out.is_empty() {
            return Err(Error::EmptyInput("trajectory"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetKind {
    Nadir,
    Circle,
}

impl std::str::FromStr for PresetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nadir" => Ok(PresetKind::Nadir),
            "circle" => Ok(PresetKind::Circle),
            _ => Err(Error::Config(format!(
                "unknown preset '{s}', expected nadir or circle"
            ))),
        }
    }
}

/// Baseline flights sized by the scene's bounding-sphere radius R.
///
/// Nadir: a serpentine grid at altitude 0.5R above ground level with
/// spacing 0.2R, cell-centered over [-0.8R, 0.8R]², looking straight down.
/// Circle: a three-turn helix of radius 0.7R sampled every 20 degrees,
/// climbing linearly from 0.2R to 1.2R and looking at the scene center.
pub fn preset_trajectory(kind: PresetKind, scene: &SyntheticScene) -> Vec<Viewpoint> {
    let (c, r) = scene.bounding_sphere();
    match kind {
        PresetKind::Nadir => {
            let spacing = 0.2 * r;
            let n = (1.6 * r / spacing).round() as usize;
            let h = 0.5 * r;
            let mut out = Vec::with_capacity(n * n);
            for j in 0..n {
                let y = c.y - 0.8 * r + spacing * (j as f64 + 0.5);
                for k in 0..n {
                    let i = if j % 2 == 0 { k } else { n - 1 - k };
                    let x = c.x - 0.8 * r + spacing * (i as f64 + 0.5);
                    out.push(Viewpoint {
                        position: Point3::new(x, y, h),
                        look_at: Point3::new(x, y, 0.0),
                    });
                }
            }
            out
        }
        PresetKind::Circle => {
            let per_turn = 18;
            let n = 3 * per_turn;
            (0..n)
                .map(|i| {
                    let theta = (20.0 * i as f64).to_radians();
                    let z = 0.2 * r + r * i as f64 / (n - 1) as f64;
                    let position =
                        Point3::new(c.x + 0.7 * r * theta.cos(), c.y + 0.7 * r * theta.sin(), z);
                    Viewpoint {
                        position,
                        look_at: c,
                    }
                })
                .collect()
        }
    }
}
