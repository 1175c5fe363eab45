use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::delaunay::{CellId, TetComplex, VertexId};
use crate::error::{Error, Result};
use crate::geometry::{triangle_area, triangle_normal, Point3, Vec3};

use super::energy::CutResult;

/// Triangle mesh. Faces are oriented so their normal points from the
/// inside cell towards the outside cell they separate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3>,
    /// Delaunay vertex each mesh vertex came from (0 when loaded from file).
    pub vertex_ids: Vec<VertexId>,
    pub triangles: Vec<[u32; 3]>,
    /// `(inside, outside)` cell pair per triangle; empty when not extracted.
    pub provenance: Vec<(CellId, CellId)>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        let n = vertices.len();
        SurfaceMesh {
            vertices,
            vertex_ids: vec![0; n],
            triangles,
            provenance: Vec::new(),
        }
    }

    pub fn num_faces(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn face_points(&self, f: usize) -> [Point3; 3] {
        self.triangles[f].map(|v| self.vertices[v as usize])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        triangle_area(&a, &b, &c)
    }

    /// Unit outward normal, or zero for a degenerate face.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_points(f);
        triangle_normal(&a, &b, &c)
            .normalized()
            .unwrap_or(Point3::ORIGIN)
    }

    pub fn face_centroid(&self, f: usize) -> Point3 {
        let [a, b, c] = self.face_points(f);
        (a + b + c) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_faces()).map(|f| self.face_area(f)).sum()
    }

    pub fn max_edge_length(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        a.distance(&b).max(b.distance(&c)).max(c.distance(&a))
    }

    /// Number of faces incident to each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry(if a < b { (a, b) } else { (b, a) }).or_insert(0) += 1;
            }
        }
        m
    }

    /// Faces with at least one edge that no other face shares.
    pub fn boundary_faces(&self) -> Vec<usize> {
        let counts = self.edge_counts();
        (0..self.triangles.len())
            .filter(|&f| {
                let t = self.triangles[f];
                (0..3).any(|k| {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    counts[&if a < b { (a, b) } else { (b, a) }] == 1
                })
            })
            .collect()
    }

    /// Keeps faces where `keep[f]` holds and drops vertices no longer used.
    pub fn retain_faces(&self, keep: &[bool]) -> SurfaceMesh {
        let mut used = vec![false; self.vertices.len()];
        for (f, t) in self.triangles.iter().enumerate() {
            if keep[f] {
                t.iter().for_each(|&v| used[v as usize] = true);
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut out = SurfaceMesh::default();
        for (v, &u) in used.iter().enumerate() {
            if u {
                remap[v] = out.vertices.len() as u32;
                out.vertices.push(self.vertices[v]);
                out.vertex_ids.push(self.vertex_ids[v]);
            }
        }
        for (f, t) in self.triangles.iter().enumerate() {
            if keep[f] {
                out.triangles.push(t.map(|v| remap[v as usize]));
                if let Some(p) = self.provenance.get(f) {
                    out.provenance.push(*p);
                }
            }
        }
        out
    }

    pub fn bbox(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (lo.min_by_component(p), hi.max_by_component(p))
        }))
    }

    pub fn write_ply<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "ply\nformat ascii 1.0")?;
        writeln!(w, "element vertex {}", self.vertices.len())?;
        writeln!(w, "property double x\nproperty double y\nproperty double z")?;
        writeln!(w, "element face {}", self.triangles.len())?;
        writeln!(w, "property list uchar int vertex_indices\nend_header")?;
        for p in &self.vertices {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// ASCII PLY with one RGB color per face.
    pub fn write_colored_ply<W: Write>(&self, w: &mut W, face_colors: &[[u8; 3]]) -> Result<()> {
        if face_colors.len() != self.triangles.len() {
            return Err(Error::Io(format!(
                "{} colors for {} faces",
                face_colors.len(),
                self.triangles.len()
            )));
        }
        writeln!(w, "ply\nformat ascii 1.0")?;
        writeln!(w, "element vertex {}", self.vertices.len())?;
        writeln!(w, "property double x\nproperty double y\nproperty double z")?;
        writeln!(w, "element face {}", self.triangles.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(
            w,
            "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header"
        )?;
        for p in &self.vertices {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        for (t, c) in self.triangles.iter().zip(face_colors) {
            writeln!(w, "3 {} {} {} {} {} {}", t[0], t[1], t[2], c[0], c[1], c[2])?;
        }
        Ok(())
    }

    pub fn write_obj<W: Write>(&self, w: &mut W) -> Result<()> {
        for p in &self.vertices {
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Reads an ASCII PLY file with a vertex element (x, y, z first) and a
    /// face element of vertex-index lists. Polygons are fan-triangulated.
    pub fn read_ply<R: BufRead>(r: R) -> Result<SurfaceMesh> {
        let bad = |m: &str| Error::Ingestion(format!("ply: {m}"));
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file"))?
                .map_err(Error::from)
        };
        if next()?.trim() != "ply" {
            return Err(bad("missing magic"));
        }
        let (mut nv, mut nf) = (None, None);
        loop {
            let line = next()?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["format", fmt, ..] if *fmt != "ascii" => {
                    return Err(bad("only ascii is supported"))
                }
                ["element", "vertex", n] => {
                    nv = Some(n.parse::<usize>().map_err(|_| bad("vertex count"))?)
                }
                ["element", "face", n] => {
                    nf = Some(n.parse::<usize>().map_err(|_| bad("face count"))?)
                }
                ["end_header"] => break,
                _ => {}
            }
        }
        let (nv, nf) = (nv.ok_or_else(|| bad("no vertex element"))?, nf.unwrap_or(0));
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next()?;
            let v: Vec<f64> = line
                .split_whitespace()
                .take(3)
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("vertex coordinate"))?;
            if v.len() < 3 || v.iter().any(|x| !x.is_finite()) {
                return Err(bad("vertex needs three finite coordinates"));
            }
            vertices.push(Point3::new(v[0], v[1], v[2]));
        }
        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let line = next()?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("face index"))?;
            let (&k, rest) = idx.split_first().ok_or_else(|| bad("empty face"))?;
            if rest.len() < k || k < 3 || rest[..k].iter().any(|&i| i >= nv) {
                return Err(bad("malformed face"));
            }
            for j in 1..k - 1 {
                triangles.push([rest[0] as u32, rest[j] as u32, rest[j + 1] as u32]);
            }
        }
        Ok(SurfaceMesh::new(vertices, triangles))
    }

    pub fn read_obj<R: BufRead>(r: R) -> Result<SurfaceMesh> {
        let bad = |m: &str| Error::Ingestion(format!("obj: {m}"));
        let mut vertices = Vec::new();
        let mut faces: Vec<Vec<usize>> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first() {
                Some(&"v") => {
                    let v: Vec<f64> = toks[1..]
                        .iter()
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("vertex"))?;
                    if v.len() < 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Point3::new(v[0], v[1], v[2]));
                }
                Some(&"f") => {
                    let idx: Vec<usize> = toks[1..]
                        .iter()
                        .map(|t| t.split('/').next().unwrap_or("").parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("face index"))?;
                    faces.push(idx);
                }
                _ => {}
            }
        }
        let mut triangles = Vec::new();
        for f in faces {
            if f.len() < 3 || f.iter().any(|&i| i == 0 || i > vertices.len()) {
                return Err(bad("malformed face"));
            }
            for j in 1..f.len() - 1 {
                triangles.push([(f[0] - 1) as u32, (f[j] - 1) as u32, (f[j + 1] - 1) as u32]);
            }
        }
        Ok(SurfaceMesh::new(vertices, triangles))
    }
}

/// One triangle per facet between an inside cell and an outside cell,
/// oriented outward. Mesh vertices are ordered by Delaunay vertex index.
pub fn extract_surface(complex: &TetComplex, cut: &CutResult) -> SurfaceMesh {
    let mut tris: Vec<([VertexId; 3], (CellId, CellId))> = Vec::new();
    for c in complex.finite_cells() {
        if !cut.is_inside(c) {
            continue;
        }
        let cell = complex.cell(c);
        for i in 0..4 {
            let n = cell.neighbors[i];
            if complex.is_infinite(n) || !cut.is_inside(n) {
                let [a, b, d] = cell.face(i);
                // The face triple has the cell on its positive side; reverse it.
                tris.push(([a, d, b], (c, n)));
            }
        }
    }
    let mut ids: Vec<VertexId> = tris.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<VertexId, u32> = ids
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i as u32))
        .collect();
    SurfaceMesh {
        vertices: ids.iter().map(|&v| complex.point(v)).collect(),
        triangles: tris.iter().map(|(t, _)| t.map(|v| index[&v])).collect(),
        provenance: tris.iter().map(|(_, p)| *p).collect(),
        vertex_ids: ids,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterReport {
    /// Faces removed in each iteration that ran.
    pub removed_per_iteration: Vec<usize>,
    /// Threshold used in each iteration.
    pub thresholds: Vec<f64>,
}

/// Iterative boundary peeling: in each pass, boundary faces whose longest
/// edge exceeds `mean + k * std` (over boundary faces) are removed together.
/// Stops after `n_it` passes or when a pass removes nothing.
pub fn filter_outliers(mesh: &SurfaceMesh, k: f64, n_it: usize) -> (SurfaceMesh, FilterReport) {
    let mut current = mesh.clone();
    let mut report = FilterReport::default();
    for _ in 0..n_it {
        let boundary = current.boundary_faces();
        if boundary.is_empty() {
            report.removed_per_iteration.push(0);
            break;
        }
        let lens: Vec<f64> = boundary
            .iter()
            .map(|&f| current.max_edge_length(f))
            .collect();
        let n = lens.len() as f64;
        let mean = lens.iter().sum::<f64>() / n;
        let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        let tau = mean + k * var.sqrt();
        report.thresholds.push(tau);
        let mut keep = vec![true; current.num_faces()];
        let mut removed = 0;
        for (&f, &l) in boundary.iter().zip(&lens) {
            if l > tau {
                keep[f] = false;
                removed += 1;
            }
        }
        report.removed_per_iteration.push(removed);
        if removed == 0 {
            break;
        }
        current = current.retain_faces(&keep);
    }
    (current, report)
}
