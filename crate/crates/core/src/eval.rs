//! Precision, recall and F-score of a reconstruction against ground truth.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::surface::SurfaceMesh;

/// Percentages in [0, 100] at threshold `d` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub d: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl EvalReport {
    pub fn from_pr(d: f64, precision: f64, recall: f64) -> Self {
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            d,
            precision,
            recall,
            f_score,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Uniform grid over a point set with cell size equal to the query radius,
/// so a radius query only inspects the 27 surrounding cells.
pub struct RadiusIndex<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> RadiusIndex<'a> {
    pub fn new(points: &'a [Point3], radius: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key_of(p, radius))
                .or_default()
                .push(i as u32);
        }
        RadiusIndex {
            points,
            cell: radius,
            cells,
        }
    }

    fn key_of(p: &Point3, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// True iff some indexed point lies strictly closer than the radius.
    pub fn any_within(&self, q: &Point3) -> bool {
        let k = Self::key_of(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if list
                            .iter()
                            .any(|&i| self.points[i as usize].distance(q) < self.cell)
                        {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Percentage of `queries` with a point of `reference` strictly within `d`.
pub fn fraction_within(queries: &[Point3], reference: &[Point3], d: f64) -> f64 {
    let index = RadiusIndex::new(reference, d);
    let hits = queries.par_iter().filter(|q| index.any_within(q)).count();
    100.0 * hits as f64 / queries.len() as f64
}

pub fn evaluate(reconstructed: &[Point3], truth: &[Point3], d: f64) -> Result<EvalReport> {
    if reconstructed.is_empty() {
        return Err(Error::EmptyInput("reconstructed point set"));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("ground-truth point set"));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Config(format!(
            "distance threshold must be positive, got {d}"
        )));
    }
    let precision = fraction_within(reconstructed, truth, d);
    let recall = fraction_within(truth, reconstructed, d);
    Ok(EvalReport::from_pr(d, precision, recall))
}

/// Uniform point in triangle (a, b, c) from two uniform variates.
pub fn triangle_point(a: &Point3, b: &Point3, c: &Point3, r1: f64, r2: f64) -> Point3 {
    let s = r1.sqrt();
    *a * (1.0 - s) + *b * (s * (1.0 - r2)) + *c * (s * r2)
}

/// Area-uniform samples: each face gets `ceil(area * density)` points, so
/// every face meets the density exactly or better.
pub fn sample_mesh(mesh: &SurfaceMesh, density: f64, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for f in 0..mesh.num_faces() {
        let [a, b, c] = mesh.face_points(f);
        let n = (mesh.face_area(f) * density).ceil() as usize;
        for _ in 0..n {
            out.push(triangle_point(&a, &b, &c, rng.random(), rng.random()));
        }
    }
    out
}
