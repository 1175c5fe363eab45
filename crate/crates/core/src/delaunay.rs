//! Incremental 3D Delaunay tetrahedralization.
//!
//! Cells are stored in an append-only arena; destroyed cells are marked
//! dead and their ids are never reused, so a cell id names one tetrahedron
//! for the lifetime of the complex. Vertex 0 is the vertex at infinity:
//! every hull facet is closed off by an infinite cell containing it.
//!
//! Degenerate configurations (five cospherical points, points coplanar with
//! a hull facet) are resolved by symbolic perturbation in lexicographic
//! order of the coordinates, which makes the triangulation of a point set
//! unique and independent of insertion order.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Ray3};
use crate::predicates::{insphere_unchecked, orient3d_unchecked, Sign};

pub type VertexId = u32;
pub type CellId = u32;

/// The vertex at infinity.
pub const INFINITE: VertexId = 0;
/// Neighbor slot not yet connected.
const NO_CELL: CellId = u32::MAX;

/// Local vertex triples of the face opposite each local vertex, ordered so
/// that the cell lies on the positive side of the face.
pub const FACE_VERTICES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub vertices: [VertexId; 4],
    /// `neighbors[i]` is across the face opposite `vertices[i]`.
    pub neighbors: [CellId; 4],
    /// Insertion counter at the time the cell was created.
    pub generation: u32,
    alive: bool,
}

impl Cell {
    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn is_infinite(&self) -> bool {
        self.vertices.contains(&INFINITE)
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.vertices.iter().position(|&x| x == v)
    }

    pub fn neighbor_index(&self, c: CellId) -> Option<usize> {
        self.neighbors.iter().position(|&x| x == c)
    }

    /// Global vertex ids of the face opposite local vertex `i`, oriented
    /// with the cell on the positive side.
    pub fn face(&self, i: usize) -> [VertexId; 3] {
        let f = FACE_VERTICES[i];
        [
            self.vertices[f[0]],
            self.vertices[f[1]],
            self.vertices[f[2]],
        ]
    }
}

/// Cells removed and created by one insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InsertionDelta {
    pub new_point_index: VertexId,
    pub destroyed_cell_ids: Vec<CellId>,
    pub created_cell_ids: Vec<CellId>,
}

/// One step of a segment walk: a cell and the local index of the face the
/// segment entered through (`None` for the first cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkStep {
    pub cell: CellId,
    pub entry_face: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkError {
    /// No consistent exit face was found (degenerate crossing loop).
    Stuck,
    /// The starting vertex has no incident cell containing the direction.
    NoStartCell,
}

/// Where a sight segment ends relative to its target vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SightTraversal {
    /// Cells from the camera side to the last cell before the vertex.
    pub steps: Vec<WalkStep>,
    /// Cell entered by the continuation of the ray past the vertex, with
    /// the local index of its face opposite the vertex. `None` when the
    /// continuation leaves the hull at the vertex.
    pub behind: Option<(CellId, u8)>,
    /// Cells outside `steps` and `behind` whose destruction may change the
    /// traversal: the infinite cells around `v` when the segment or its
    /// continuation leaves the hull at `v`.
    pub witnesses: Vec<CellId>,
}

#[derive(Debug)]
pub struct TetComplex {
    points: Vec<Point3>,
    cells: Vec<Cell>,
    vertex_cell: Vec<CellId>,
    live_cells: usize,
    insertions: u32,
    dup_tolerance: f64,
    hint: AtomicU32,
    stamp: Vec<u32>,
    stamp_value: u32,
}

impl Clone for TetComplex {
    fn clone(&self) -> Self {
        TetComplex {
            points: self.points.clone(),
            cells: self.cells.clone(),
            vertex_cell: self.vertex_cell.clone(),
            live_cells: self.live_cells,
            insertions: self.insertions,
            dup_tolerance: self.dup_tolerance,
            hint: AtomicU32::new(self.hint.load(Ordering::Relaxed)),
            stamp: self.stamp.clone(),
            stamp_value: self.stamp_value,
        }
    }
}

impl PartialEq for TetComplex {
    fn eq(&self, o: &Self) -> bool {
        self.points == o.points
            && self.cells == o.cells
            && self.vertex_cell == o.vertex_cell
            && self.live_cells == o.live_cells
            && self.insertions == o.insertions
            && self.dup_tolerance == o.dup_tolerance
    }
}

impl TetComplex {
    /// Triangulates `points`, which must contain four affinely independent
    /// points. Duplicates (within the tolerance) are skipped.
    ///
    /// The duplicate tolerance defaults to 1e-7 times the bounding-box
    /// diagonal of the input.
    pub fn bootstrap(points: &[Point3]) -> Result<TetComplex> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        let diag = bbox_diagonal(points);
        Self::bootstrap_with_tolerance(points, 1e-7 * diag)
    }

    pub fn bootstrap_with_tolerance(points: &[Point3], dup_tolerance: f64) -> Result<TetComplex> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        let [i0, i1, i2, i3] = find_simplex(points).ok_or(Error::Coplanar)?;
        let mut complex = TetComplex {
            points: vec![Point3::ORIGIN],
            cells: Vec::new(),
            vertex_cell: vec![NO_CELL],
            live_cells: 0,
            insertions: 0,
            dup_tolerance,
            hint: AtomicU32::new(0),
            stamp: Vec::new(),
            stamp_value: 0,
        };
        let (mut a, mut b) = (points[i0], points[i1]);
        let (c, d) = (points[i2], points[i3]);
        if orient3d_unchecked(&a, &b, &c, &d) == Sign::Negative {
            std::mem::swap(&mut a, &mut b);
        }
        for p in [a, b, c, d] {
            complex.points.push(p);
            complex.vertex_cell.push(NO_CELL);
        }
        complex.init_simplex([1, 2, 3, 4]);
        for (i, p) in points.iter().enumerate() {
            if [i0, i1, i2, i3].contains(&i) {
                continue;
            }
            match complex.insert(*p) {
                Ok(_) | Err(Error::DuplicatePoint(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(complex)
    }

    fn init_simplex(&mut self, v: [VertexId; 4]) {
        // cell 0: the finite tetrahedron; cells 1..=4: one infinite cell per face.
        self.push_cell(v);
        for i in 0..4 {
            let mut verts = v;
            verts[i] = INFINITE;
            // Reverse the finite face so its positive side is the exterior.
            let (j, k) = match i {
                0 => (1, 2),
                _ => (0, if i == 1 { 2 } else { 1 }),
            };
            verts.swap(j, k);
            self.push_cell(verts);
        }
        let n = self.cells.len() as CellId;
        for c in 0..n {
            for i in 0..4 {
                if self.cells[c as usize].neighbors[i] != NO_CELL {
                    continue;
                }
                let face = sorted3(self.face_of(c, i));
                for o in 0..n {
                    if o == c {
                        continue;
                    }
                    if let Some(j) = (0..4).find(|&j| sorted3(self.face_of(o, j)) == face) {
                        self.cells[c as usize].neighbors[i] = o;
                        self.cells[o as usize].neighbors[j] = c;
                    }
                }
            }
        }
        self.hint.store(0, Ordering::Relaxed);
    }

    fn push_cell(&mut self, vertices: [VertexId; 4]) -> CellId {
        let id = self.cells.len() as CellId;
        self.cells.push(Cell {
            vertices,
            neighbors: [NO_CELL; 4],
            generation: self.insertions,
            alive: true,
        });
        self.stamp.push(0);
        for &v in &vertices {
            self.vertex_cell[v as usize] = id;
        }
        self.live_cells += 1;
        id
    }

    fn face_of(&self, c: CellId, i: usize) -> [VertexId; 3] {
        self.cells[c as usize].face(i)
    }

    pub fn dup_tolerance(&self) -> f64 {
        self.dup_tolerance
    }

    pub fn set_dup_tolerance(&mut self, tol: f64) {
        self.dup_tolerance = tol;
    }

    /// Number of finite vertices.
    pub fn num_vertices(&self) -> usize {
        self.points.len() - 1
    }

    pub fn point(&self, v: VertexId) -> Point3 {
        self.points[v as usize]
    }

    /// Finite vertex positions indexed by `VertexId - 1`.
    pub fn points(&self) -> &[Point3] {
        &self.points[1..]
    }

    pub fn cell(&self, c: CellId) -> &Cell {
        &self.cells[c as usize]
    }

    /// Total number of cell ids ever allocated (alive or dead).
    pub fn cell_capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn num_live_cells(&self) -> usize {
        self.live_cells
    }

    pub fn is_alive(&self, c: CellId) -> bool {
        self.cells.get(c as usize).is_some_and(|x| x.alive)
    }

    pub fn is_infinite(&self, c: CellId) -> bool {
        self.cells[c as usize].is_infinite()
    }

    pub fn live_cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.alive)
            .map(|(i, _)| i as CellId)
    }

    pub fn finite_cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.alive && !c.is_infinite())
            .map(|(i, _)| i as CellId)
    }

    pub fn num_finite_cells(&self) -> usize {
        self.finite_cells().count()
    }

    pub fn insertions(&self) -> u32 {
        self.insertions
    }

    fn orient_face(&self, c: CellId, i: usize, p: &Point3) -> Sign {
        let [a, b, d] = self.face_of(c, i);
        orient3d_unchecked(
            &self.points[a as usize],
            &self.points[b as usize],
            &self.points[d as usize],
            p,
        )
    }

    /// Finite vertex positions of a finite cell.
    pub fn cell_points(&self, c: CellId) -> [Point3; 4] {
        let v = self.cells[c as usize].vertices;
        [
            self.point(v[0]),
            self.point(v[1]),
            self.point(v[2]),
            self.point(v[3]),
        ]
    }

    /// Whether the circumsphere of `c` (or, for an infinite cell, the open
    /// half-space beyond its hull facet) contains `p`, with ties resolved
    /// symbolically.
    pub fn in_conflict(&self, c: CellId, p: &Point3) -> bool {
        let cell = &self.cells[c as usize];
        match cell.index_of(INFINITE) {
            None => {
                let [a, b, cc, d] = self.cell_points(c);
                perturbed_insphere(&a, &b, &cc, &d, p) == Sign::Positive
            }
            Some(k) => match self.orient_face(c, k, p) {
                Sign::Positive => true,
                Sign::Negative => false,
                Sign::Zero => {
                    let [a, b, cc] = self.face_of(c, k).map(|v| self.points[v as usize]);
                    let n = cell.neighbors[k];
                    let ncell = &self.cells[n as usize];
                    let j = ncell.neighbor_index(c).expect("hull facet neighbor");
                    let aux = self.points[ncell.vertices[j] as usize];
                    perturbed_in_circle(&a, &b, &cc, p, &aux)
                }
            },
        }
    }

    /// Returns a live cell whose closure contains `p`, or an infinite cell
    /// whose hull facet sees `p` strictly from outside.
    pub fn locate(&self, p: &Point3) -> CellId {
        let start = self.hint.load(Ordering::Relaxed);
        let start = if self.is_alive(start) {
            start
        } else {
            self.any_live_cell()
        };
        let found = self
            .walk_to(start, p)
            .unwrap_or_else(|| self.locate_brute_force(p));
        self.hint.store(found, Ordering::Relaxed);
        found
    }

    fn any_live_cell(&self) -> CellId {
        self.cells
            .iter()
            .rposition(|c| c.alive)
            .expect("complex has cells") as CellId
    }

    fn walk_to(&self, start: CellId, p: &Point3) -> Option<CellId> {
        let mut c = start;
        let mut prev = NO_CELL;
        let limit = 4 * self.cells.len() + 64;
        for step in 0..limit {
            let cell = &self.cells[c as usize];
            if let Some(k) = cell.index_of(INFINITE) {
                if self.orient_face(c, k, p) == Sign::Positive {
                    return Some(c);
                }
                prev = c;
                c = cell.neighbors[k];
                continue;
            }
            let offset = (c as usize).wrapping_mul(2654435761).wrapping_add(step) >> 7;
            let mut moved = false;
            for j in 0..4 {
                let i = (offset + j) & 3;
                let n = cell.neighbors[i];
                if n == prev {
                    continue;
                }
                if self.orient_face(c, i, p) == Sign::Negative {
                    prev = c;
                    c = n;
                    moved = true;
                    break;
                }
            }
            if !moved {
                // The remembered face was skipped; confirm it too.
                if prev != NO_CELL {
                    if let Some(i) = cell.neighbor_index(prev) {
                        if self.orient_face(c, i, p) == Sign::Negative {
                            let n = prev;
                            prev = c;
                            c = n;
                            continue;
                        }
                    }
                }
                return Some(c);
            }
        }
        None
    }

    fn locate_brute_force(&self, p: &Point3) -> CellId {
        let mut fallback = None;
        for c in self.live_cells() {
            let cell = &self.cells[c as usize];
            match cell.index_of(INFINITE) {
                None => {
                    if (0..4).all(|i| self.orient_face(c, i, p) != Sign::Negative) {
                        return c;
                    }
                }
                Some(k) => {
                    if fallback.is_none() && self.orient_face(c, k, p) == Sign::Positive {
                        fallback = Some(c);
                    }
                }
            }
        }
        fallback.unwrap_or_else(|| self.any_live_cell())
    }

    /// Inserts `p`, restoring the Delaunay property by retriangulating the
    /// cavity of cells in conflict with it.
    pub fn insert(&mut self, p: Point3) -> Result<InsertionDelta> {
        if !p.is_finite() {
            return Err(Error::NonFinite);
        }
        let start = self.locate(&p);
        if let Some(v) = self.near_vertex(&self.cells[start as usize].vertices, &p) {
            return Err(Error::DuplicatePoint(v as usize));
        }
        if !self.in_conflict(start, &p) {
            return Err(Error::Numerical(
                "located cell is not in conflict with the new point".into(),
            ));
        }

        // Grow the cavity.
        self.stamp_value = self.stamp_value.wrapping_add(1);
        if self.stamp_value == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.stamp_value = 1;
        }
        let mark = self.stamp_value;
        let mut cavity = vec![start];
        self.stamp[start as usize] = mark;
        let mut boundary: Vec<(CellId, usize)> = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for i in 0..4 {
                let n = self.cells[c as usize].neighbors[i];
                if self.stamp[n as usize] == mark {
                    continue;
                }
                if self.in_conflict(n, &p) {
                    self.stamp[n as usize] = mark;
                    cavity.push(n);
                    queue.push_back(n);
                } else {
                    boundary.push((c, i));
                }
            }
        }
        for &c in &cavity {
            if let Some(v) = self.near_vertex(&self.cells[c as usize].vertices, &p) {
                return Err(Error::DuplicatePoint(v as usize));
            }
        }

        let v_new = self.points.len() as VertexId;
        self.points.push(p);
        self.vertex_cell.push(NO_CELL);
        self.insertions += 1;

        let mut created = Vec::with_capacity(boundary.len());
        let mut edge_map: HashMap<(VertexId, VertexId), (CellId, usize)> =
            HashMap::with_capacity(boundary.len() * 3);
        for &(c, i) in &boundary {
            let old = &self.cells[c as usize];
            let outside = old.neighbors[i];
            let mut verts = old.vertices;
            verts[i] = v_new;
            let nc = self.push_cell(verts);
            created.push(nc);
            self.cells[nc as usize].neighbors[i] = outside;
            let back = self.cells[outside as usize]
                .neighbor_index(c)
                .expect("symmetric neighbors");
            self.cells[outside as usize].neighbors[back] = nc;
            for j in 0..4 {
                if j == i {
                    continue;
                }
                // Face j contains the new vertex and the two facet vertices other than verts[j].
                let mut e = [0; 2];
                let mut k = 0;
                for (l, &v) in verts.iter().enumerate() {
                    if l != i && l != j {
                        e[k] = v;
                        k += 1;
                    }
                }
                let key = if e[0] < e[1] {
                    (e[0], e[1])
                } else {
                    (e[1], e[0])
                };
                if let Some((oc, oj)) = edge_map.remove(&key) {
                    self.cells[nc as usize].neighbors[j] = oc;
                    self.cells[oc as usize].neighbors[oj] = nc;
                } else {
                    edge_map.insert(key, (nc, j));
                }
            }
        }
        debug_assert!(
            edge_map.is_empty(),
            "cavity boundary is not a closed surface"
        );

        for &c in &cavity {
            self.cells[c as usize].alive = false;
        }
        self.live_cells -= cavity.len();
        // Refresh vertex anchors that may point at dead cells.
        for &nc in &created {
            for &v in &self.cells[nc as usize].vertices {
                self.vertex_cell[v as usize] = nc;
            }
        }
        self.hint.store(
            *created.last().expect("non-empty cavity"),
            Ordering::Relaxed,
        );
        cavity.sort_unstable();
        Ok(InsertionDelta {
            new_point_index: v_new,
            destroyed_cell_ids: cavity,
            created_cell_ids: created,
        })
    }

    fn near_vertex(&self, verts: &[VertexId; 4], p: &Point3) -> Option<VertexId> {
        verts
            .iter()
            .copied()
            .filter(|&v| v != INFINITE)
            .find(|&v| self.points[v as usize].distance(p) <= self.dup_tolerance)
    }

    /// Nearest finite vertex to `p` among the located cell's vertices and
    /// their stars, if within the duplicate tolerance.
    pub fn find_duplicate(&self, p: &Point3) -> Option<VertexId> {
        let c = self.locate(p);
        self.near_vertex(&self.cells[c as usize].vertices, p)
    }

    /// Live cells incident to vertex `v`.
    pub fn incident_cells(&self, v: VertexId) -> Vec<CellId> {
        let start = self.vertex_cell[v as usize];
        debug_assert!(self.is_alive(start));
        let mut out = vec![start];
        let mut i = 0;
        while i < out.len() {
            let c = out[i];
            let cell = &self.cells[c as usize];
            for j in 0..4 {
                if cell.vertices[j] == v {
                    continue;
                }
                let n = cell.neighbors[j];
                if !out.contains(&n) {
                    out.push(n);
                }
            }
            i += 1;
        }
        out
    }

    /// Incident cell of `v` whose cone at `v` contains the direction towards
    /// `target` (or away from it when `reverse`). Prefers cells that contain
    /// the direction in their interior, then the smallest id.
    fn cone_cell(&self, v: VertexId, target: &Point3, reverse: bool) -> Option<(CellId, usize)> {
        let mut best: Option<(usize, CellId, usize)> = None;
        for c in self.incident_cells(v) {
            let cell = &self.cells[c as usize];
            if cell.is_infinite() {
                continue;
            }
            let k = cell.index_of(v).expect("incident");
            let mut zeros = 0;
            let mut inside = true;
            for j in 0..4 {
                if j == k {
                    continue;
                }
                let s = self.orient_face(c, j, target);
                let s = if reverse { s.flip() } else { s };
                match s {
                    Sign::Negative => {
                        inside = false;
                        break;
                    }
                    Sign::Zero => zeros += 1,
                    Sign::Positive => {}
                }
            }
            if inside && zeros < 3 && best.is_none_or(|(bz, bc, _)| (zeros, c) < (bz, bc)) {
                best = Some((zeros, c, k));
            }
        }
        best.map(|(_, c, k)| (c, k))
    }

    /// Traverses the sight segment between finite vertex `v` and `camera`.
    /// Steps are ordered from the camera side to the last cell before `v`.
    pub fn sight_traversal(
        &self,
        v: VertexId,
        camera: &Point3,
    ) -> std::result::Result<SightTraversal, WalkError> {
        let behind = self.cone_cell(v, camera, true).map(|(c, k)| (c, k as u8));
        let mut witnesses = Vec::new();
        let hull_star = || -> Vec<CellId> {
            let mut h: Vec<CellId> = self
                .incident_cells(v)
                .into_iter()
                .filter(|&c| self.is_infinite(c))
                .collect();
            h.sort_unstable();
            h
        };
        if behind.is_none() {
            witnesses = hull_star();
        }
        let mut steps = Vec::new();
        match self.cone_cell(v, camera, false) {
            Some((c, k)) => {
                steps.push(WalkStep {
                    cell: c,
                    entry_face: None,
                });
                if self.orient_face(c, k, camera) == Sign::Negative {
                    let n = self.cells[c as usize].neighbors[k];
                    let entry = self.cells[n as usize].neighbor_index(c).expect("symmetric") as u8;
                    let q = self.point(v);
                    self.walk_segment(n, Some(entry), &q, camera, &mut steps)?;
                }
            }
            None => {
                // The ray leaves the hull at v itself. Lowest id among the
                // visible hull faces, so the choice only changes when the
                // hull star of v does.
                if witnesses.is_empty() {
                    witnesses = hull_star();
                }
                let hull = witnesses
                    .iter()
                    .copied()
                    .find(|&c| {
                        let k = self.cells[c as usize].index_of(INFINITE).expect("infinite");
                        self.orient_face(c, k, camera) != Sign::Negative
                    })
                    .ok_or(WalkError::NoStartCell)?;
                steps.push(WalkStep {
                    cell: hull,
                    entry_face: None,
                });
            }
        }
        // `steps` runs from v towards the camera; flip it and move the entry
        // faces to the camera-to-vertex direction.
        let mut out = Vec::with_capacity(steps.len());
        for i in (0..steps.len()).rev() {
            let entry = if i + 1 < steps.len() {
                let next = steps[i + 1].cell;
                Some(
                    self.cells[steps[i].cell as usize]
                        .neighbor_index(next)
                        .expect("walk neighbors") as u8,
                )
            } else {
                None
            };
            out.push(WalkStep {
                cell: steps[i].cell,
                entry_face: entry,
            });
        }
        Ok(SightTraversal {
            steps: out,
            behind,
            witnesses,
        })
    }

    /// Cells crossed by the segment [origin, origin + t_max * direction].
    pub fn walk_ray(
        &self,
        ray: &Ray3,
        t_max: f64,
    ) -> std::result::Result<Vec<WalkStep>, WalkError> {
        let q = ray.origin();
        let s = ray.at(t_max);
        let start = self.locate(&q);
        let mut steps = Vec::new();
        if !self.is_infinite(start) {
            self.walk_segment_from(start, None, &q, &s, &mut steps)?;
            return Ok(steps);
        }
        // Origin outside the hull: find the hull facet the segment enters by.
        let entry = self
            .live_cells()
            .filter(|&c| self.is_infinite(c))
            .find(|&c| {
                let k = self.cells[c as usize].index_of(INFINITE).expect("infinite");
                self.orient_face(c, k, &q) == Sign::Positive
                    && self.orient_face(c, k, &s) == Sign::Negative
                    && self.line_crosses_face(c, k, &q, &s).is_some()
            });
        match entry {
            None => steps.push(WalkStep {
                cell: start,
                entry_face: None,
            }),
            Some(c) => {
                steps.push(WalkStep {
                    cell: c,
                    entry_face: None,
                });
                let k = self.cells[c as usize].index_of(INFINITE).expect("infinite");
                let n = self.cells[c as usize].neighbors[k];
                let e = self.cells[n as usize].neighbor_index(c).expect("symmetric") as u8;
                self.walk_segment(n, Some(e), &q, &s, &mut steps)?;
            }
        }
        Ok(steps)
    }

    fn walk_segment_from(
        &self,
        c: CellId,
        entry: Option<u8>,
        q: &Point3,
        s: &Point3,
        steps: &mut Vec<WalkStep>,
    ) -> std::result::Result<(), WalkError> {
        self.walk_segment(c, entry, q, s, steps)
    }

    /// Straight walk along line q -> s starting in `c`, stopping at the
    /// cell containing `s` or at the first infinite cell.
    fn walk_segment(
        &self,
        mut c: CellId,
        mut entry: Option<u8>,
        q: &Point3,
        s: &Point3,
        steps: &mut Vec<WalkStep>,
    ) -> std::result::Result<(), WalkError> {
        let first = steps.len();
        let limit = self.cells.len() + 8;
        loop {
            if steps.len() - first > limit || steps[first..].iter().any(|w| w.cell == c) {
                return Err(WalkError::Stuck);
            }
            steps.push(WalkStep {
                cell: c,
                entry_face: entry,
            });
            if self.is_infinite(c) {
                return Ok(());
            }
            let mut best: Option<(usize, usize)> = None;
            for i in 0..4 {
                if Some(i as u8) == entry {
                    continue;
                }
                if self.orient_face(c, i, s) != Sign::Negative {
                    continue;
                }
                if let Some(zeros) = self.line_crosses_face(c, i, q, s) {
                    let n = self.cells[c as usize].neighbors[i];
                    if steps[first..].iter().any(|w| w.cell == n) {
                        continue;
                    }
                    if best.is_none_or(|(bz, _)| zeros < bz) {
                        best = Some((zeros, i));
                    }
                }
            }
            match best {
                None => {
                    let beyond_any = (0..4).any(|i| {
                        Some(i as u8) != entry && self.orient_face(c, i, s) == Sign::Negative
                    });
                    return if beyond_any {
                        Err(WalkError::Stuck)
                    } else {
                        Ok(())
                    };
                }
                Some((_, i)) => {
                    let n = self.cells[c as usize].neighbors[i];
                    entry =
                        Some(self.cells[n as usize].neighbor_index(c).expect("symmetric") as u8);
                    c = n;
                }
            }
        }
    }

    /// If the line through q and s passes through the closed face `i` of
    /// `c`, returns how many edge tests were exactly zero.
    fn line_crosses_face(&self, c: CellId, i: usize, q: &Point3, s: &Point3) -> Option<usize> {
        let t = self.face_of(c, i).map(|v| self.points[v as usize]);
        let signs = [
            orient3d_unchecked(q, s, &t[0], &t[1]),
            orient3d_unchecked(q, s, &t[1], &t[2]),
            orient3d_unchecked(q, s, &t[2], &t[0]),
        ];
        let pos = signs.iter().filter(|&&x| x == Sign::Positive).count();
        let neg = signs.iter().filter(|&&x| x == Sign::Negative).count();
        let zeros = 3 - pos - neg;
        if (pos == 0 || neg == 0) && zeros < 3 {
            Some(zeros)
        } else {
            None
        }
    }

    /// Structural and Delaunay audit. With `check_empty_sphere` each finite
    /// cell is tested against every finite vertex (quadratic cost).
    pub fn audit(&self, check_empty_sphere: bool) -> std::result::Result<(), String> {
        let mut live = 0;
        for c in self.live_cells() {
            live += 1;
            let cell = &self.cells[c as usize];
            if cell.vertices.iter().filter(|&&v| v == INFINITE).count() > 1 {
                return Err(format!("cell {c} has several infinite vertices"));
            }
            if !cell.is_infinite() {
                let [a, b, cc, d] = self.cell_points(c);
                if orient3d_unchecked(&a, &b, &cc, &d) != Sign::Positive {
                    return Err(format!("cell {c} is not positively oriented"));
                }
            }
            for i in 0..4 {
                let n = cell.neighbors[i];
                if !self.is_alive(n) {
                    return Err(format!("cell {c} points at dead neighbor {n}"));
                }
                let back = self.cells[n as usize]
                    .neighbor_index(c)
                    .ok_or(format!("asymmetric {c}-{n}"))?;
                if sorted3(cell.face(i)) != sorted3(self.cells[n as usize].face(back)) {
                    return Err(format!("cells {c} and {n} disagree on their shared face"));
                }
                if cell.face(i) == self.cells[n as usize].face(back) {
                    return Err(format!(
                        "cells {c} and {n} share a face with equal orientation"
                    ));
                }
            }
        }
        if live != self.live_cells {
            return Err("live cell count mismatch".into());
        }
        for (v, &c) in self.vertex_cell.iter().enumerate() {
            if !self.is_alive(c) || self.cells[c as usize].index_of(v as VertexId).is_none() {
                return Err(format!("vertex {v} anchor is stale"));
            }
        }
        if check_empty_sphere {
            for c in self.live_cells() {
                for v in 1..self.points.len() as VertexId {
                    if self.cells[c as usize].vertices.contains(&v) {
                        continue;
                    }
                    if self.in_conflict(c, &self.points[v as usize]) {
                        return Err(format!("vertex {v} violates the empty sphere of cell {c}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Finite cells as sorted vertex quadruples.
    pub fn finite_cell_sets(&self) -> Vec<[VertexId; 4]> {
        let mut out: Vec<[VertexId; 4]> = self
            .finite_cells()
            .map(|c| {
                let mut v = self.cells[c as usize].vertices;
                v.sort_unstable();
                v
            })
            .collect();
        out.sort_unstable();
        out
    }
}

fn sorted3(mut f: [VertexId; 3]) -> [VertexId; 3] {
    f.sort_unstable();
    f
}

fn bbox_diagonal(points: &[Point3]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let (lo, hi) = points.iter().fold((*first, *first), |(lo, hi), p| {
        (lo.min_by_component(p), hi.max_by_component(p))
    });
    lo.distance(&hi)
}

fn find_simplex(points: &[Point3]) -> Option<[usize; 4]> {
    let i0 = 0;
    let p0 = *points.first()?;
    let i1 = points.iter().position(|p| *p != p0)?;
    let p1 = points[i1];
    for i2 in (i1 + 1)..points.len() {
        let p2 = points[i2];
        if (p1 - p0).cross(&(p2 - p0)).norm_squared() == 0.0 {
            continue;
        }
        if let Some(i3) = (i2 + 1..points.len())
            .find(|&i| orient3d_unchecked(&p0, &p1, &p2, &points[i]) != Sign::Zero)
        {
            return Some([i0, i1, i2, i3]);
        }
    }
    None
}

/// In-sphere sign for a positively oriented finite tetrahedron with exact
/// cospherical ties broken by lexicographic symbolic perturbation. Never
/// returns zero for distinct points.
pub fn perturbed_insphere(p0: &Point3, p1: &Point3, p2: &Point3, p3: &Point3, p: &Point3) -> Sign {
    let s = insphere_unchecked(p0, p1, p2, p3, p);
    if s != Sign::Zero {
        return s;
    }
    let mut order: [(usize, &Point3); 5] = [(0, p0), (1, p1), (2, p2), (3, p3), (4, p)];
    order.sort_by(|a, b| a.1.lex_cmp(b.1));
    for &(which, _) in order.iter().rev().take(3) {
        let o = match which {
            4 => return Sign::Negative,
            3 => orient3d_unchecked(p0, p1, p2, p),
            2 => orient3d_unchecked(p0, p1, p, p3),
            1 => orient3d_unchecked(p0, p, p2, p3),
            _ => orient3d_unchecked(p, p1, p2, p3),
        };
        if o != Sign::Zero {
            return o;
        }
    }
    Sign::Negative
}

/// Whether `p`, coplanar with triangle (a, b, c), lies inside its
/// circumcircle, with symbolic tie-breaking. `aux` is any point off the
/// plane; it fixes the in-plane orientation.
fn perturbed_in_circle(a: &Point3, b: &Point3, c: &Point3, p: &Point3, aux: &Point3) -> bool {
    // The circumcircle is the trace of any sphere through a, b, c on their plane.
    let local = orient3d_unchecked(a, b, c, aux);
    let raw = insphere_unchecked(a, b, c, aux, p);
    let s = if local == Sign::Positive {
        raw
    } else {
        raw.flip()
    };
    if s != Sign::Zero {
        return s == Sign::Positive;
    }
    let mut order: [(usize, &Point3); 4] = [(0, a), (1, b), (2, c), (3, p)];
    order.sort_by(|x, y| x.1.lex_cmp(y.1));
    for &(which, _) in order.iter().rev().take(3) {
        let o = match which {
            3 => return false,
            2 => orient3d_unchecked(a, b, p, aux),
            1 => orient3d_unchecked(a, p, c, aux),
            _ => orient3d_unchecked(p, b, c, aux),
        };
        if o != Sign::Zero {
            return o == local;
        }
    }
    true
}
