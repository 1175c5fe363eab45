//! Per-face quality: ground sampling distance, observation redundancy,
//! reprojection error, and their percentile-normalized fusion.

pub mod raster;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Projection, ViewPose};
use crate::surface::SurfaceMesh;

pub use raster::{build_visibility, projected_area, DepthBuffer, RasterParams, VisibilityTable};

/// Floor applied before inverting GSD and reprojection error.
const INV_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub face: u32,
    /// Meters per pixel; `None` when no visible view has a nonzero footprint.
    pub gsd: Option<f64>,
    pub redundancy: u32,
    /// Pixels; `None` when no (vertex, visible view) pair has a measurement.
    pub reproj_error: Option<f64>,
    /// Present iff `redundancy >= 1`.
    pub q_total: Option<f64>,
}

impl QualityRecord {
    /// Fused score with unobserved faces counted as 0.
    pub fn score(&self) -> f64 {
        self.q_total.unwrap_or(0.0)
    }
}

/// 2D measurements per mesh vertex: `(view_id, u, v)`.
pub type Observations = Vec<Vec<(u32, f64, f64)>>;

/// Minimum over visible views of sqrt(area / projected area).
pub fn face_gsd(
    mesh: &SurfaceMesh,
    face: usize,
    views: &[ViewPose],
    table: &VisibilityTable,
) -> Option<f64> {
    let pts = mesh.face_points(face);
    let area = mesh.face_area(face);
    table
        .views_of(face)
        .iter()
        .filter_map(|&vi| {
            let p = projected_area(&views[vi as usize], &pts);
            (p > 0.0).then(|| (area / p).sqrt())
        })
        .min_by(f64::total_cmp)
}

pub fn face_redundancy(face: usize, table: &VisibilityTable) -> u32 {
    table.views_of(face).len() as u32
}

/// Mean pixel distance between projected face vertices and their
/// measurements over visible views.
pub fn face_reproj_error(
    mesh: &SurfaceMesh,
    face: usize,
    views: &[ViewPose],
    table: &VisibilityTable,
    obs: &Observations,
) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for &vi in table.views_of(face) {
        let view = &views[vi as usize];
        for &m in &mesh.triangles[face] {
            let Some(&(_, u, v)) = obs[m as usize].iter().find(|o| o.0 == view.view_id) else {
                continue;
            };
            if let Projection::Pixel { u: pu, v: pv, .. } = view.project(&mesh.vertices[m as usize])
            {
                sum += ((pu - u).powi(2) + (pv - v).powi(2)).sqrt();
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Raw indicators for every face; `q_total` is left unset.
pub fn assess(
    mesh: &SurfaceMesh,
    views: &[ViewPose],
    table: &VisibilityTable,
    obs: &Observations,
) -> Vec<QualityRecord> {
    (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| QualityRecord {
            face: f as u32,
            gsd: face_gsd(mesh, f, views, table),
            redundancy: face_redundancy(f, table),
            reproj_error: face_reproj_error(mesh, f, views, table, obs),
            q_total: None,
        })
        .collect()
}

/// Blue (0) through green to red (1); values are clamped.
pub fn quality_color(q: f64) -> [u8; 3] {
    let q = if q.is_nan() { 0.0 } else { q.clamp(0.0, 1.0) };
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [
        c(2.0 * q - 1.0),
        c(1.0 - (2.0 * q - 1.0).abs()),
        c(1.0 - 2.0 * q),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub gsd: f64,
    pub redundancy: f64,
    pub reproj: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            gsd: 0.1,
            redundancy: 0.8,
            reproj: 0.1,
        }
    }
}

/// Normalization range of one component: values are clamped to [lo, hi]
/// and mapped linearly to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub lo: f64,
    pub hi: f64,
}

impl Anchor {
    /// 5th/95th percentiles; `None` for an empty sample.
    pub fn from_values(values: &mut [f64]) -> Option<Anchor> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(Anchor {
            lo: percentile(values, 5.0),
            hi: percentile(values, 95.0),
        })
    }

    /// Degenerate ranges map values inside them to 0.5.
    pub fn normalize(&self, x: f64) -> f64 {
        if x < self.lo {
            0.0
        } else if x > self.hi {
            1.0
        } else if self.hi > self.lo {
            (x - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        }
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let (i, frac) = (rank.floor() as usize, rank.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Anchors of the three transformed components (GSD⁻¹, R, E⁻¹), each
/// computed over observed faces where the indicator is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityAnchors {
    pub gsd_inv: Option<Anchor>,
    pub redundancy: Option<Anchor>,
    pub reproj_inv: Option<Anchor>,
}

fn components(r: &QualityRecord) -> [Option<f64>; 3] {
    if r.redundancy == 0 {
        return [None; 3];
    }
    [
        r.gsd.map(|g| 1.0 / g.max(INV_FLOOR)),
        Some(r.redundancy as f64),
        r.reproj_error.map(|e| 1.0 / e.max(INV_FLOOR)),
    ]
}

impl QualityAnchors {
    pub fn from_records(records: &[QualityRecord]) -> Self {
        let mut cols: [Vec<f64>; 3] = Default::default();
        for r in records {
            for (k, c) in components(r).into_iter().enumerate() {
                if let Some(c) = c {
                    cols[k].push(c);
                }
            }
        }
        let [g, r, e] = cols.map(|mut c| Anchor::from_values(&mut c));
        QualityAnchors {
            gsd_inv: g,
            redundancy: r,
            reproj_inv: e,
        }
    }
}

/// Sets `q_total` using percentile anchors of the records themselves.
pub fn fuse_quality(records: &mut [QualityRecord], w: &QualityWeights) {
    let anchors = QualityAnchors::from_records(records);
    fuse_quality_with(records, w, &anchors);
}

/// Sets `q_total` against fixed anchors. Unknown components contribute 0.
pub fn fuse_quality_with(
    records: &mut [QualityRecord],
    w: &QualityWeights,
    anchors: &QualityAnchors,
) {
    let a = [anchors.gsd_inv, anchors.redundancy, anchors.reproj_inv];
    let wk = [w.gsd, w.redundancy, w.reproj];
    for r in records.iter_mut() {
        if r.redundancy == 0 {
            r.q_total = None;
            continue;
        }
        let q: f64 = components(r)
            .iter()
            .zip(a.iter().zip(wk))
            .map(|(c, (anchor, wk))| match (c, anchor) {
                (Some(c), Some(anchor)) => wk * anchor.normalize(*c),
                _ => 0.0,
            })
            .sum();
        r.q_total = Some(q.clamp(0.0, 1.0));
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with header `face_id,gsd,redundancy,reproj_error,q_total`; unknown
/// values are empty fields.
pub fn write_quality_csv<W: Write>(records: &[QualityRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["face_id", "gsd", "redundancy", "reproj_error", "q_total"])
        .map_err(csv_err)?;
    for r in records {
        wr.write_record([
            r.face.to_string(),
            opt(r.gsd),
            r.redundancy.to_string(),
            opt(r.reproj_error),
            opt(r.q_total),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_quality_csv<R: Read>(r: R) -> Result<Vec<QualityRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let bad = |m: String| Error::Ingestion(format!("quality csv: {m}"));
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>()
        != ["face_id", "gsd", "redundancy", "reproj_error", "q_total"]
    {
        return Err(bad("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = row.get(i).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| bad(format!("row {}: bad number {s:?}", line + 1)))
        };
        let int = |i: usize| -> Result<u32> {
            row.get(i)
                .unwrap_or("")
                .parse::<u32>()
                .map_err(|_| bad(format!("row {}: bad integer", line + 1)))
        };
        out.push(QualityRecord {
            face: int(0)?,
            gsd: num(1)?,
            redundancy: int(2)?,
            reproj_error: num(3)?,
            q_total: num(4)?,
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Ingestion(format!("quality csv: {e}"))
}
