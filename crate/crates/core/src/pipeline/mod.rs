//! Explore-and-exploit orchestration: each batch of images runs ingestion,
//! incremental triangulation, energy update, min-cut, extraction, outlier
//! filtering, quality assessment and, at the end of a flight segment,
//! replanning.

pub mod config;
pub mod format;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::delaunay::{TetComplex, VertexId};
use crate::error::{Error, Result};
use crate::eval::{evaluate, sample_mesh, EvalReport};
use crate::geometry::{Point3, ViewPose};
use crate::planner::{cluster_colors, plan, PlanResult};
use crate::quality::{
    assess, build_visibility, fuse_quality, fuse_quality_with, quality_color, write_quality_csv,
    Observations, QualityAnchors, QualityRecord,
};
use crate::simulator::{generate_scene_with, preset_trajectory, ObservationBatch, Simulator};
use crate::surface::{
    extract_surface, filter_outliers, update_energy, CutSolver, EnergyGraph, FilterReport, NewRay,
    RayId, RayStore, SurfaceMesh,
};

pub use config::{AnchorMode, LoopConfig};
pub use format::{read_batch, write_batch, BATCH_HEADER};

/// Wall-clock cost of one batch. Kept out of every byte-compared artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub batch: u32,
    pub images: usize,
    pub rays_total: usize,
    pub rays_modified: usize,
    pub ingest_s: f64,
    pub delaunay_s: f64,
    pub energy_s: f64,
    pub cut_s: f64,
    pub extract_s: f64,
    pub quality_s: f64,
    /// Present when the batch ended a segment and was replanned.
    pub plan_ms: Option<f64>,
    pub total_s: f64,
    pub per_image_s: f64,
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Counts and stage times of [`LoopState::ingest_batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ingested {
    pub new_points: usize,
    pub rays_modified: usize,
    pub ingest_s: f64,
    pub delaunay_s: f64,
    pub energy_s: f64,
}

/// Files produced by one batch, as bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationArtifacts {
    pub batch: u32,
    pub mesh_ply: Vec<u8>,
    pub quality_csv: Vec<u8>,
    pub trajectory_json: Option<Vec<u8>>,
    pub timing: TimingRow,
}

/// Everything the loop owns between batches.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub complex: Option<TetComplex>,
    pub graph: EnergyGraph,
    pub rays: RayStore,
    pub solver: CutSolver,
    /// Filtered mesh of the latest cut.
    pub mesh: SurfaceMesh,
    pub filter: FilterReport,
    pub records: Vec<QualityRecord>,
    pub anchors: Option<QualityAnchors>,
    pub plan: Option<PlanResult>,
    pub views: Vec<ViewPose>,
    view_index: HashMap<u32, usize>,
    pub track_vertex: BTreeMap<u32, VertexId>,
    vertex_tracks: BTreeMap<VertexId, Vec<u32>>,
    /// Measurements per track, first occurrence per view.
    track_obs: BTreeMap<u32, Vec<(u32, f64, f64)>>,
    pub batches: u32,
    /// Append-only.
    pub timing: Vec<TimingRow>,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn bbox_diagonal<'a>(pts: impl Iterator<Item = &'a Point3>) -> f64 {
    let mut it = pts.peekable();
    let Some(&first) = it.peek().copied() else {
        return 0.0;
    };
    let (lo, hi) = it.fold((first, first), |(lo, hi), p| {
        (lo.min_by_component(p), hi.max_by_component(p))
    });
    lo.distance(&hi)
}

fn merge_anchors(old: Option<QualityAnchors>, new: QualityAnchors) -> QualityAnchors {
    match old {
        None => new,
        Some(o) => QualityAnchors {
            gsd_inv: o.gsd_inv.or(new.gsd_inv),
            redundancy: o.redundancy.or(new.redundancy),
            reproj_inv: o.reproj_inv.or(new.reproj_inv),
        },
    }
}

impl LoopState {
    pub fn new(cfg: &LoopConfig) -> Self {
        LoopState {
            complex: None,
            graph: EnergyGraph::new(cfg.energy_params()),
            rays: RayStore::default(),
            solver: CutSolver::new(),
            mesh: SurfaceMesh::default(),
            filter: FilterReport::default(),
            records: Vec::new(),
            anchors: None,
            plan: None,
            views: Vec::new(),
            view_index: HashMap::new(),
            track_vertex: BTreeMap::new(),
            vertex_tracks: BTreeMap::new(),
            track_obs: BTreeMap::new(),
            batches: 0,
            timing: Vec::new(),
        }
    }

    /// Mean fused score over all faces, unobserved faces counting 0.
    pub fn mean_quality(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.score()).sum::<f64>() / self.records.len() as f64
    }

    /// Diagonal of the box around all triangulated points and cameras.
    pub fn diagonal(&self) -> f64 {
        let pts = self.complex.as_ref().map_or(&[][..], |c| &c.points()[1..]);
        bbox_diagonal(pts.iter().chain(self.views.iter().map(|v| &v.center)))
    }

    /// Measurements of every mesh vertex, through the tracks merged into it.
    pub fn observations(&self) -> Observations {
        self.mesh
            .vertex_ids
            .iter()
            .map(|v| {
                self.vertex_tracks
                    .get(v)
                    .into_iter()
                    .flatten()
                    .flat_map(|t| self.track_obs.get(t).into_iter().flatten().copied())
                    .collect()
            })
            .collect()
    }

    /// Runs the full per-batch cycle. On error the state is restored to
    /// what it was before the call.
    pub fn run_iteration(
        &mut self,
        cfg: &LoopConfig,
        batch: &ObservationBatch,
    ) -> Result<IterationArtifacts> {
        let snapshot = self.clone();
        match self.step(cfg, batch) {
            Ok(a) => Ok(a),
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    /// Ingestion, Delaunay insertion and energy update only. Leaves the cut,
    /// mesh and quality stale; `run_iteration` is the normal entry point.
    pub fn ingest_batch(&mut self, cfg: &LoopConfig, batch: &ObservationBatch) -> Result<Ingested> {
        if batch.views.is_empty() {
            return Err(Error::EmptyInput("batch has no views"));
        }

        // Ingestion.
        let t = Instant::now();
        for v in &batch.views {
            if self.view_index.contains_key(&v.view_id) {
                return Err(Error::Ingestion(format!(
                    "view {} already ingested",
                    v.view_id
                )));
            }
            self.view_index.insert(v.view_id, self.views.len());
            self.views.push(v.clone());
        }
        let mut new_points: Vec<(u32, Point3)> = Vec::new();
        let mut pending = HashSet::new();
        let mut measurements: Vec<(u32, u32)> = Vec::new();
        for tr in &batch.tracks {
            if !tr.point.is_finite() {
                return Err(Error::Ingestion(format!(
                    "track {} has a non-finite position",
                    tr.id
                )));
            }
            if !self.track_vertex.contains_key(&tr.id) && pending.insert(tr.id) {
                new_points.push((tr.id, tr.point));
            }
            let obs = self.track_obs.entry(tr.id).or_default();
            for &(view, u, v) in &tr.observations {
                if !self.view_index.contains_key(&view) {
                    return Err(Error::Ingestion(format!(
                        "track {} refers to unknown view {view}",
                        tr.id
                    )));
                }
                if !(u.is_finite() && v.is_finite()) {
                    return Err(Error::Ingestion(format!(
                        "track {} has a non-finite measurement",
                        tr.id
                    )));
                }
                if obs.iter().all(|o| o.0 != view) {
                    obs.push((view, u, v));
                    measurements.push((view, tr.id));
                }
            }
        }
        let ingest_s = secs(t);

        // Incremental Delaunay.
        let t = Instant::now();
        let mut deltas = Vec::new();
        let bootstrapped = self.complex.is_none();
        if bootstrapped {
            let pts: Vec<Point3> = new_points.iter().map(|p| p.1).collect();
            let tol = cfg.dup_tolerance * bbox_diagonal(pts.iter());
            let complex = TetComplex::bootstrap_with_tolerance(&pts, tol)?;
            for &(id, p) in &new_points {
                let v = complex
                    .find_duplicate(&p)
                    .ok_or_else(|| Error::Numerical(format!("bootstrap lost track {id}")))?;
                self.track_vertex.insert(id, v);
                self.vertex_tracks.entry(v).or_default().push(id);
            }
            self.graph.rebuild_smoothness(&complex);
            self.complex = Some(complex);
        } else {
            let complex = self.complex.as_mut().expect("bootstrapped");
            for &(id, p) in &new_points {
                let v = match complex.insert(p) {
                    Ok(d) => {
                        let v = d.new_point_index;
                        deltas.push(d);
                        v
                    }
                    Err(Error::DuplicatePoint(v)) => v as VertexId,
                    Err(e) => return Err(e),
                };
                self.track_vertex.insert(id, v);
                self.vertex_tracks.entry(v).or_default().push(id);
            }
        }
        let delaunay_s = secs(t);
        let complex = self.complex.as_ref().expect("bootstrapped");

        // Energy over new and affected rays.
        let t = Instant::now();
        let new_rays: Vec<NewRay> = measurements
            .iter()
            .map(|&(view, track)| NewRay {
                id: RayId { view, track },
                camera: self.views[self.view_index[&view]].center,
                target: self.track_vertex[&track],
            })
            .collect();
        let report = update_energy(complex, &deltas, &new_rays, &mut self.rays, &mut self.graph);
        let energy_s = secs(t);
        if report.failed_rays > 0 {
            warn!(
                "batch {}: {} rays could not be traced",
                batch.id, report.failed_rays
            );
        }
        Ok(Ingested {
            new_points: new_points.len(),
            rays_modified: report.modified_rays.len(),
            ingest_s,
            delaunay_s,
            energy_s,
        })
    }

    fn step(&mut self, cfg: &LoopConfig, batch: &ObservationBatch) -> Result<IterationArtifacts> {
        let t_all = Instant::now();
        let ing = self.ingest_batch(cfg, batch)?;
        let complex = self.complex.as_ref().expect("bootstrapped");

        let t = Instant::now();
        let cut = self.solver.solve(&mut self.graph, complex);
        let cut_s = secs(t);

        let t = Instant::now();
        let raw = extract_surface(complex, &cut);
        let (mesh, filter) = filter_outliers(&raw, cfg.outlier_k, cfg.outlier_iterations);
        self.mesh = mesh;
        self.filter = filter;
        let extract_s = secs(t);

        // Quality.
        let t = Instant::now();
        let diagonal = self.diagonal();
        let table = build_visibility(&self.mesh, &self.views, &cfg.raster_params(diagonal));
        let mut records = assess(&self.mesh, &self.views, &table, &self.observations());
        match cfg.anchors {
            AnchorMode::Fixed => {
                let anchors = merge_anchors(self.anchors, QualityAnchors::from_records(&records));
                fuse_quality_with(&mut records, &cfg.quality_weights(), &anchors);
                self.anchors = Some(anchors);
            }
            AnchorMode::PerBatch => fuse_quality(&mut records, &cfg.quality_weights()),
        }
        self.records = records;
        let quality_s = secs(t);

        let mut plan_ms = None;
        let mut trajectory_json = None;
        if batch.segment_end {
            let t = Instant::now();
            let cameras: Vec<Point3> = self.views.iter().map(|v| v.center).collect();
            let start = batch.views.last().expect("non-empty").center;
            let p = plan(
                &self.mesh,
                &self.records,
                &cameras,
                &cameras,
                start,
                diagonal,
                &cfg.planner_params(),
            );
            plan_ms = Some(t.elapsed().as_secs_f64() * 1e3);
            let mut buf = Vec::new();
            p.write_trajectory_json(&mut buf)?;
            trajectory_json = Some(buf);
            self.plan = Some(p);
        }

        let mut mesh_ply = Vec::new();
        self.mesh.write_ply(&mut mesh_ply)?;
        let mut quality_csv = Vec::new();
        write_quality_csv(&self.records, &mut quality_csv)?;

        self.batches += 1;
        let total_s = secs(t_all);
        let timing = TimingRow {
            batch: batch.id,
            images: batch.views.len(),
            rays_total: self.rays.len(),
            rays_modified: ing.rays_modified,
            ingest_s: ing.ingest_s,
            delaunay_s: ing.delaunay_s,
            energy_s: ing.energy_s,
            cut_s,
            extract_s,
            quality_s,
            plan_ms,
            total_s,
            per_image_s: total_s / batch.views.len() as f64,
        };
        self.timing.push(timing.clone());
        info!(
            "batch {}: {} views, {} new points, {} rays ({} modified), {} faces, mean quality {:.4}",
            batch.id,
            batch.views.len(),
            ing.new_points,
            self.rays.len(),
            ing.rays_modified,
            self.mesh.num_faces(),
            self.mean_quality()
        );
        Ok(IterationArtifacts {
            batch: batch.id,
            mesh_ply,
            quality_csv,
            trajectory_json,
            timing,
        })
    }

    /// Quality-colored and cluster-colored PLY of the current mesh.
    pub fn debug_plys(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let colors: Vec<[u8; 3]> = self
            .records
            .iter()
            .map(|r| quality_color(r.score()))
            .collect();
        let mut q = Vec::new();
        self.mesh.write_colored_ply(&mut q, &colors)?;
        let clusters = self.plan.as_ref().map_or(&[][..], |p| &p.clusters[..]);
        let mut c = Vec::new();
        self.mesh
            .write_colored_ply(&mut c, &cluster_colors(self.mesh.num_faces(), clusters))?;
        Ok((q, c))
    }
}

/// Scene-level outcome of one explore-exploit iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub batches: usize,
    pub images_total: usize,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub observed_faces: usize,
    pub mean_q_total: f64,
    pub tau_quality: f64,
    pub low_quality_faces: usize,
    pub clusters: usize,
    pub viewpoints: usize,
    pub trajectory_length: f64,
    pub trajectory_cost: f64,
    pub nearest_neighbor_cost: f64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The planner found no low-quality cluster to revisit.
    Converged,
    IterationCap,
    /// Every planned waypoint was inside solid geometry.
    NoCapturableViewpoints,
}

/// Deterministic summary of a closed-loop run. Wall-clock timing lives in
/// the separate timing ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub scene_seed: u64,
    pub scene_diagonal: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: Vec<IterationReport>,
}

impl LoopReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Artifacts as of the end of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutput {
    pub artifacts: IterationArtifacts,
    pub quality_ply: Vec<u8>,
    pub clusters_ply: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopOutcome {
    pub report: LoopReport,
    pub timing: Vec<TimingRow>,
    /// Every batch fed to the loop, in order, for recording and replay.
    pub batches: Vec<ObservationBatch>,
    pub outputs: Vec<IterationOutput>,
    pub state: LoopState,
}

/// Flies the configured baseline, then repeatedly flies the planned
/// trajectory, until the iteration cap or an empty plan.
pub fn run_closed_loop(cfg: &LoopConfig, scene_seed: u64) -> Result<ClosedLoopOutcome> {
    let scene = generate_scene_with(scene_seed, &cfg.scene_params())?;
    let d = cfg.eval_threshold * scene.diagonal;
    let mut sim = Simulator::new(scene, cfg.capture_params())?;
    let mut state = LoopState::new(cfg);
    let mut trajectory = preset_trajectory(cfg.initial_flight, &sim.scene);
    let mut report = LoopReport {
        scene_seed,
        scene_diagonal: sim.scene.diagonal,
        converged: false,
        stop_reason: StopReason::IterationCap,
        iterations: Vec::new(),
    };
    let mut all_batches = Vec::new();
    let mut outputs = Vec::new();
    for iteration in 1..=cfg.iterations {
        let mut batches = sim.capture_batches(&trajectory, cfg.batch_size)?;
        batches.retain(|b| !b.views.is_empty());
        let Some(last) = batches.last_mut() else {
            report.stop_reason = StopReason::NoCapturableViewpoints;
            break;
        };
        last.segment_end = true;
        let mut artifacts = None;
        for b in &batches {
            artifacts = Some(state.run_iteration(cfg, b)?);
        }
        let artifacts = artifacts.expect("at least one batch");
        let plan = state.plan.as_ref().expect("segment end replans");
        let eval = if state.mesh.is_empty() {
            EvalReport::from_pr(d, 0.0, 0.0)
        } else {
            evaluate(
                &sample_mesh(&state.mesh, cfg.eval_density, cfg.eval_seed),
                &sim.scene.truth_samples,
                d,
            )?
        };
        report.iterations.push(IterationReport {
            iteration,
            batches: batches.len(),
            images_total: state.views.len(),
            mesh_vertices: state.mesh.vertices.len(),
            mesh_faces: state.mesh.num_faces(),
            observed_faces: state.records.iter().filter(|r| r.redundancy > 0).count(),
            mean_q_total: state.mean_quality(),
            tau_quality: plan.tau_quality,
            low_quality_faces: plan.low_quality_faces.len(),
            clusters: plan.clusters.len(),
            viewpoints: plan.trajectory.len(),
            trajectory_length: plan.total_length(),
            trajectory_cost: plan.trajectory_cost,
            nearest_neighbor_cost: plan.nearest_neighbor_cost,
            eval,
        });
        info!(
            "iteration {iteration}: mean quality {:.4}, F {:.2} (P {:.2}, R {:.2}), {} viewpoints planned",
            state.mean_quality(),
            eval.f_score,
            eval.precision,
            eval.recall,
            plan.trajectory.len()
        );
        let (quality_ply, clusters_ply) = state.debug_plys()?;
        outputs.push(IterationOutput {
            artifacts,
            quality_ply,
            clusters_ply,
        });
        trajectory = plan.trajectory.clone();
        all_batches.extend(batches);
        if trajectory.is_empty() {
            report.converged = true;
            report.stop_reason = StopReason::Converged;
            break;
        }
    }
    Ok(ClosedLoopOutcome {
        report,
        timing: state.timing.clone(),
        batches: all_batches,
        outputs,
        state,
    })
}

/// Runs recorded batches through a fresh state; returns the artifacts of
/// every batch.
pub fn replay(
    cfg: &LoopConfig,
    batches: &[ObservationBatch],
) -> Result<(LoopState, Vec<IterationArtifacts>)> {
    let mut state = LoopState::new(cfg);
    let mut out = Vec::with_capacity(batches.len());
    for b in batches {
        out.push(state.run_iteration(cfg, b)?);
    }
    Ok((state, out))
}
