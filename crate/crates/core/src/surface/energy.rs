//! Visibility and smoothness energy on the dual graph of the complex.
//!
//! Capacities are fixed-point integers (`CAPACITY_SCALE` units per unit of
//! weight) so incremental and from-scratch accumulation agree exactly.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delaunay::{CellId, InsertionDelta, SightTraversal, TetComplex, VertexId, WalkStep};
use crate::geometry::Point3;

pub const CAPACITY_SCALE: f64 = 1000.0;

pub fn to_fixed(w: f64) -> i64 {
    (w * CAPACITY_SCALE).round() as i64
}

pub fn from_fixed(c: i64) -> f64 {
    c as f64 / CAPACITY_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub alpha_free: f64,
    pub alpha_occ: f64,
    pub alpha_con: f64,
    /// Weight of the smoothness term.
    pub lambda: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            alpha_free: 1000.0,
            alpha_occ: 1000.0,
            alpha_con: 100.0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Source(CellId),
    Sink(CellId),
    /// Directed facet capacity from one cell into its neighbor.
    Facet {
        from: CellId,
        to: CellId,
    },
}

pub type Contribution = (Element, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RayId {
    pub view: u32,
    pub track: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayStatus {
    Active,
    /// Traversal failed; the ray contributes nothing until a retry succeeds.
    Dirty,
    Retired,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SightRay {
    pub id: RayId,
    pub camera: Point3,
    pub target: VertexId,
    pub traversal: Vec<WalkStep>,
    pub behind: Option<(CellId, u8)>,
    /// Extra cells the traversal depends on; see `SightTraversal`.
    pub witnesses: Vec<CellId>,
    pub status: RayStatus,
    pub contributions: Vec<Contribution>,
}

/// A ray to add: camera center and the complex vertex it observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewRay {
    pub id: RayId,
    pub camera: Point3,
    pub target: VertexId,
}

/// Energy terms of one traversal, in camera-to-target order.
///
/// The first cell is linked to the source with `alpha_free`; each crossed
/// facet gets `alpha_con` in the propagation direction; the cell behind the
/// target gets `alpha_occ` to the sink and its facet opposite the target
/// gets `alpha_con`. When nothing finite lies behind the target, the sink
/// link goes to the last traversed cell instead.
pub fn ray_energy(
    traversal: &SightTraversal,
    complex: &TetComplex,
    params: &EnergyParams,
) -> Vec<Contribution> {
    let steps = &traversal.steps;
    let Some(first) = steps.first() else {
        return Vec::new();
    };
    let con = to_fixed(params.alpha_con);
    let mut out = Vec::with_capacity(steps.len() + 3);
    out.push((Element::Source(first.cell), to_fixed(params.alpha_free)));
    for w in steps.windows(2) {
        out.push((
            Element::Facet {
                from: w[0].cell,
                to: w[1].cell,
            },
            con,
        ));
    }
    match traversal.behind {
        Some((ts, k)) => {
            let beyond = complex.cell(ts).neighbors[k as usize];
            out.push((
                Element::Facet {
                    from: ts,
                    to: beyond,
                },
                con,
            ));
            out.push((Element::Sink(ts), to_fixed(params.alpha_occ)));
        }
        None => {
            let last = steps.last().expect("non-empty").cell;
            out.push((Element::Sink(last), to_fixed(params.alpha_occ)));
        }
    }
    out
}

/// Smoothness weight of the facet shared by finite cells `a` and `b`:
/// `lambda * alpha_con * |v . n| / |v|`, with `v` joining the two vertices
/// opposite the facet and `n` the unit facet normal.
pub fn smoothness_weight(complex: &TetComplex, a: CellId, b: CellId, params: &EnergyParams) -> f64 {
    let (ca, cb) = (complex.cell(a), complex.cell(b));
    if ca.is_infinite() || cb.is_infinite() {
        return 0.0;
    }
    let (Some(i), Some(j)) = (ca.neighbor_index(b), cb.neighbor_index(a)) else {
        return 0.0;
    };
    // Canonical point order, so the weight is bit-identical whichever side
    // of the facet computes it and however the cells store their vertices.
    let mut f = ca.face(i).map(|v| complex.point(v));
    f.sort_by(|a, b| a.lex_cmp(b));
    let (x, y) = (complex.point(ca.vertices[i]), complex.point(cb.vertices[j]));
    let v = if x.lex_cmp(&y).is_lt() { y - x } else { x - y };
    smoothness_from_geometry(&f[0], &f[1], &f[2], &v, params)
}

pub fn smoothness_from_geometry(
    p: &Point3,
    q: &Point3,
    r: &Point3,
    v: &Point3,
    params: &EnergyParams,
) -> f64 {
    let Some(n) = (*q - *p).cross(&(*r - *p)).normalized() else {
        return 0.0;
    };
    let len = v.norm();
    if len == 0.0 {
        return 0.0;
    }
    params.lambda * params.alpha_con * (v.dot(&n).abs() / len).min(1.0)
}

fn facet_key(a: CellId, b: CellId) -> (CellId, CellId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Accumulated capacities. Terminal links are dense by cell id; facet terms
/// are keyed by cell pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyGraph {
    pub params: EnergyParams,
    source: Vec<i64>,
    sink: Vec<i64>,
    vis: HashMap<(CellId, CellId), i64>,
    smooth: HashMap<(CellId, CellId), i64>,
    dirty_cells: Vec<CellId>,
    dirty_facets: Vec<(CellId, CellId)>,
}

impl EnergyGraph {
    pub fn new(params: EnergyParams) -> Self {
        EnergyGraph {
            params,
            ..Default::default()
        }
    }

    fn ensure(&mut self, c: CellId) {
        let n = c as usize + 1;
        if self.source.len() < n {
            self.source.resize(n, 0);
            self.sink.resize(n, 0);
        }
    }

    pub fn source(&self, c: CellId) -> i64 {
        self.source.get(c as usize).copied().unwrap_or(0)
    }

    pub fn sink(&self, c: CellId) -> i64 {
        self.sink.get(c as usize).copied().unwrap_or(0)
    }

    /// Visibility part of the directed facet capacity.
    pub fn visibility(&self, from: CellId, to: CellId) -> i64 {
        self.vis.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn smoothness(&self, a: CellId, b: CellId) -> i64 {
        self.smooth.get(&facet_key(a, b)).copied().unwrap_or(0)
    }

    /// Total directed capacity of the facet from `from` into `to`.
    pub fn facet_capacity(&self, from: CellId, to: CellId) -> i64 {
        self.visibility(from, to) + self.smoothness(from, to)
    }

    pub fn apply(&mut self, c: &Contribution, sign: i64) {
        let w = c.1 * sign;
        match c.0 {
            Element::Source(cell) => {
                self.ensure(cell);
                self.source[cell as usize] += w;
                self.dirty_cells.push(cell);
            }
            Element::Sink(cell) => {
                self.ensure(cell);
                self.sink[cell as usize] += w;
                self.dirty_cells.push(cell);
            }
            Element::Facet { from, to } => {
                let e = self.vis.entry((from, to)).or_insert(0);
                *e += w;
                if *e == 0 {
                    self.vis.remove(&(from, to));
                }
                self.dirty_facets.push(facet_key(from, to));
            }
        }
    }

    pub fn set_smoothness(&mut self, a: CellId, b: CellId, w: i64) {
        let k = facet_key(a, b);
        let old = if w == 0 {
            self.smooth.remove(&k)
        } else {
            self.smooth.insert(k, w)
        };
        if old.unwrap_or(0) != w {
            self.dirty_facets.push(k);
        }
    }

    fn remove_smoothness(&mut self, a: CellId, b: CellId) {
        self.set_smoothness(a, b, 0);
    }

    /// Queues the terminal links of `c` for the next solver sync.
    fn mark_cell(&mut self, c: CellId) {
        self.dirty_cells.push(c);
    }

    /// Directed visibility entries, sorted.
    pub fn visibility_entries(&self) -> Vec<((CellId, CellId), i64)> {
        let mut v: Vec<_> = self.vis.iter().map(|(k, w)| (*k, *w)).collect();
        v.sort_unstable();
        v
    }

    pub fn smoothness_entries(&self) -> Vec<((CellId, CellId), i64)> {
        let mut v: Vec<_> = self.smooth.iter().map(|(k, w)| (*k, *w)).collect();
        v.sort_unstable();
        v
    }

    pub fn num_cells(&self) -> usize {
        self.source.len()
    }

    /// Recomputes smoothness on every live finite-finite facet.
    pub fn rebuild_smoothness(&mut self, complex: &TetComplex) {
        let old: Vec<_> = self.smooth.keys().copied().collect();
        for (a, b) in old {
            self.remove_smoothness(a, b);
        }
        for c in complex.finite_cells() {
            for &n in &complex.cell(c).neighbors {
                if c < n && !complex.is_infinite(n) {
                    let w = to_fixed(smoothness_weight(complex, c, n, &self.params));
                    self.set_smoothness(c, n, w);
                }
            }
        }
    }

    fn take_dirty(&mut self) -> (Vec<CellId>, Vec<(CellId, CellId)>) {
        let mut cells = std::mem::take(&mut self.dirty_cells);
        cells.sort_unstable();
        cells.dedup();
        let mut facets = std::mem::take(&mut self.dirty_facets);
        facets.sort_unstable();
        facets.dedup();
        (cells, facets)
    }
}

/// Rays plus the inverted index from cells to the rays touching them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayStore {
    rays: Vec<SightRay>,
    by_id: HashMap<RayId, u32>,
    /// Entries are (ray, epoch); an entry is live while the ray's epoch
    /// still matches. Unindexing bumps the epoch instead of searching the
    /// list, which keeps it O(1) for cells crossed by many rays.
    cell_rays: Vec<Vec<(u32, u32)>>,
    /// Live entries per cell; a list is compacted once stale entries outnumber them.
    cell_live: Vec<u32>,
    epoch: Vec<u32>,
    /// Rays awaiting a successful trace, so retries cost O(dirty).
    dirty: BTreeSet<u32>,
}

impl RayStore {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn rays(&self) -> &[SightRay] {
        &self.rays
    }

    pub fn get(&self, id: RayId) -> Option<&SightRay> {
        self.by_id.get(&id).map(|&i| &self.rays[i as usize])
    }

    pub fn count(&self, status: RayStatus) -> usize {
        self.rays.iter().filter(|r| r.status == status).count()
    }

    fn is_live(&self, (r, e): (u32, u32)) -> bool {
        self.epoch[r as usize] == e
    }

    /// Ray indices listed under cell `c`.
    pub fn rays_through(&self, c: CellId) -> Vec<u32> {
        self.cell_rays
            .get(c as usize)
            .into_iter()
            .flatten()
            .filter(|&&x| self.is_live(x))
            .map(|x| x.0)
            .collect()
    }

    /// Takes the live rays listed under a destroyed cell.
    fn drain_cell(&mut self, c: CellId, out: &mut Vec<u32>) {
        if let Some(list) = self.cell_rays.get_mut(c as usize) {
            let list = std::mem::take(list);
            out.extend(list.into_iter().filter(|&x| self.is_live(x)).map(|x| x.0));
        }
    }

    fn cells_of(contribs: &[Contribution], witnesses: &[CellId]) -> Vec<CellId> {
        let mut cells: Vec<CellId> = Vec::with_capacity(contribs.len() + witnesses.len() + 1);
        cells.extend_from_slice(witnesses);
        for (e, _) in contribs {
            match *e {
                Element::Source(c) | Element::Sink(c) => cells.push(c),
                Element::Facet { from, to } => {
                    cells.push(from);
                    cells.push(to);
                }
            }
        }
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    fn index(&mut self, r: u32) {
        for c in Self::cells_of(
            &self.rays[r as usize].contributions,
            &self.rays[r as usize].witnesses,
        ) {
            let c = c as usize;
            if self.cell_rays.len() <= c {
                self.cell_rays.resize_with(c + 1, Vec::new);
                self.cell_live.resize(c + 1, 0);
            }
            self.cell_live[c] += 1;
            let e = self.epoch[r as usize];
            let live = self.cell_live[c] as usize;
            let mut list = std::mem::take(&mut self.cell_rays[c]);
            if list.len() >= 2 * live + 8 {
                list.retain(|&x| self.is_live(x));
            }
            list.push((r, e));
            self.cell_rays[c] = list;
        }
    }

    fn unindex(&mut self, r: u32) {
        for c in Self::cells_of(
            &self.rays[r as usize].contributions,
            &self.rays[r as usize].witnesses,
        ) {
            if let Some(n) = self.cell_live.get_mut(c as usize) {
                *n = n.saturating_sub(1);
            }
        }
        self.epoch[r as usize] += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    /// Indices of rays whose energy was (re)computed, ascending.
    pub modified_rays: Vec<u32>,
    pub new_rays: usize,
    pub affected_rays: usize,
    /// Rays whose traversal failed in this update.
    pub failed_rays: usize,
}

fn trace(
    complex: &TetComplex,
    camera: &Point3,
    target: VertexId,
    params: &EnergyParams,
) -> Option<(SightTraversal, Vec<Contribution>)> {
    let tr = complex.sight_traversal(target, camera).ok()?;
    let contribs = ray_energy(&tr, complex, params);
    Some((tr, contribs))
}

/// Brings energy terms up to date after `deltas` were applied to `complex`
/// and `new_rays` were observed. Rays touching a destroyed cell have their
/// old terms subtracted and are retraced; new rays are traced fresh; rays
/// that previously failed are retried.
pub fn update_energy(
    complex: &TetComplex,
    deltas: &[InsertionDelta],
    new_rays: &[NewRay],
    store: &mut RayStore,
    graph: &mut EnergyGraph,
) -> UpdateReport {
    let params = graph.params;
    let mut destroyed: Vec<CellId> = deltas
        .iter()
        .flat_map(|d| d.destroyed_cell_ids.iter().copied())
        .collect();
    destroyed.sort_unstable();
    destroyed.dedup();

    // Smoothness: drop terms of destroyed cells, add terms of surviving new cells.
    for &c in &destroyed {
        let cell = complex.cell(c).clone();
        for &n in &cell.neighbors {
            graph.remove_smoothness(c, n);
        }
        graph.mark_cell(c);
    }
    let mut created: Vec<CellId> = deltas
        .iter()
        .flat_map(|d| d.created_cell_ids.iter().copied())
        .filter(|&c| complex.is_alive(c))
        .collect();
    created.sort_unstable();
    for &c in &created {
        graph.mark_cell(c);
        if complex.is_infinite(c) {
            continue;
        }
        for &n in &complex.cell(c).neighbors {
            if !complex.is_infinite(n) {
                let w = to_fixed(smoothness_weight(complex, c, n, &params));
                graph.set_smoothness(c, n, w);
            }
        }
    }

    let mut affected: Vec<u32> = Vec::new();
    for &c in &destroyed {
        store.drain_cell(c, &mut affected);
    }
    affected.extend(store.dirty.iter().copied());
    let mut fresh = 0;
    for nr in new_rays {
        match store.by_id.get(&nr.id) {
            Some(&i) => {
                let r = &mut store.rays[i as usize];
                r.camera = nr.camera;
                r.target = nr.target;
                if r.status == RayStatus::Retired {
                    r.status = RayStatus::Dirty;
                }
                affected.push(i);
            }
            None => {
                let i = store.rays.len() as u32;
                store.epoch.push(0);
                store.rays.push(SightRay {
                    id: nr.id,
                    camera: nr.camera,
                    target: nr.target,
                    traversal: Vec::new(),
                    behind: None,
                    witnesses: Vec::new(),
                    status: RayStatus::Dirty,
                    contributions: Vec::new(),
                });
                store.by_id.insert(nr.id, i);
                affected.push(i);
                fresh += 1;
            }
        }
    }
    affected.sort_unstable();
    affected.dedup();
    affected.retain(|&i| store.rays[i as usize].status != RayStatus::Retired);

    for &r in &affected {
        let old = std::mem::take(&mut store.rays[r as usize].contributions);
        for c in &old {
            graph.apply(c, -1);
        }
        store.rays[r as usize].contributions = old;
        store.unindex(r);
        store.rays[r as usize].contributions.clear();
    }

    let traced: Vec<Option<(SightTraversal, Vec<Contribution>)>> = affected
        .par_iter()
        .map(|&r| {
            let ray = &store.rays[r as usize];
            trace(complex, &ray.camera, ray.target, &params)
        })
        .collect();

    let mut failed = 0;
    for (&r, t) in affected.iter().zip(traced) {
        let ray = &mut store.rays[r as usize];
        match t {
            Some((tr, contribs)) => {
                for c in &contribs {
                    graph.apply(c, 1);
                }
                ray.traversal = tr.steps;
                ray.behind = tr.behind;
                ray.witnesses = tr.witnesses;
                ray.contributions = contribs;
                ray.status = RayStatus::Active;
                store.dirty.remove(&r);
                store.index(r);
            }
            None => {
                ray.traversal.clear();
                ray.behind = None;
                ray.witnesses.clear();
                ray.status = RayStatus::Dirty;
                store.dirty.insert(r);
                failed += 1;
            }
        }
    }

    UpdateReport {
        new_rays: fresh,
        affected_rays: affected.len() - fresh,
        failed_rays: failed,
        modified_rays: affected,
    }
}

/// Withdraws a ray's terms and stops tracking it.
pub fn retire_ray(id: RayId, store: &mut RayStore, graph: &mut EnergyGraph) -> bool {
    let Some(&r) = store.by_id.get(&id) else {
        return false;
    };
    let contribs = store.rays[r as usize].contributions.clone();
    for c in &contribs {
        graph.apply(c, -1);
    }
    store.unindex(r);
    let ray = &mut store.rays[r as usize];
    ray.contributions.clear();
    ray.traversal.clear();
    ray.behind = None;
    ray.status = RayStatus::Retired;
    store.dirty.remove(&r);
    true
}

/// Capacity of the source link that pins infinite cells outside.
pub const INFINITE_CAPACITY: i64 = 1 << 40;

/// Min-cut state kept across solves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutSolver {
    flow: super::maxflow::DynamicMaxflow,
    applied_t: Vec<(i64, i64)>,
    arcs: HashMap<(CellId, CellId), (usize, i64, i64)>,
    initialized: bool,
}

/// Inside/outside labels by cell id, plus the minimum cut value.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub inside: Vec<bool>,
    pub cut_value: i64,
}

impl CutResult {
    pub fn is_inside(&self, c: CellId) -> bool {
        self.inside.get(c as usize).copied().unwrap_or(false)
    }
}

impl CutSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn desired_t(graph: &EnergyGraph, complex: &TetComplex, c: CellId) -> (i64, i64) {
        if !complex.is_alive(c) {
            return (graph.source(c), graph.sink(c));
        }
        let inf = if complex.is_infinite(c) {
            INFINITE_CAPACITY
        } else {
            0
        };
        (graph.source(c) + inf, graph.sink(c))
    }

    /// Pushes pending capacity changes into the solver and re-solves.
    pub fn solve(&mut self, graph: &mut EnergyGraph, complex: &TetComplex) -> CutResult {
        let n = complex.cell_capacity();
        if self.flow.num_nodes() < n {
            let missing = n - self.flow.num_nodes();
            self.flow.add_nodes(missing);
            self.applied_t.resize(n, (0, 0));
        }
        let (cells, facets) = graph.take_dirty();
        let cells = if self.initialized {
            cells
        } else {
            self.initialized = true;
            let mut all: Vec<CellId> = complex.live_cells().chain(cells).collect();
            all.sort_unstable();
            all.dedup();
            all
        };
        for c in cells {
            let want = Self::desired_t(graph, complex, c);
            let have = self.applied_t[c as usize];
            if want != have {
                self.flow
                    .add_tweights(c as usize, want.0 - have.0, want.1 - have.1);
                self.applied_t[c as usize] = want;
            }
        }
        for (a, b) in facets {
            let want = (graph.facet_capacity(a, b), graph.facet_capacity(b, a));
            match self.arcs.get_mut(&(a, b)) {
                Some((arc, ab, ba)) => {
                    if want.0 != *ab {
                        self.flow.add_arc_capacity(*arc, want.0 - *ab);
                    }
                    if want.1 != *ba {
                        self.flow.add_arc_capacity(*arc ^ 1, want.1 - *ba);
                    }
                    *ab = want.0;
                    *ba = want.1;
                }
                None => {
                    if want != (0, 0) {
                        let arc = self.flow.add_edge(a as usize, b as usize, want.0, want.1);
                        self.arcs.insert((a, b), (arc, want.0, want.1));
                    }
                }
            }
        }
        let cut_value = self.flow.maxflow();
        let mut inside = vec![false; n];
        for c in complex.finite_cells() {
            inside[c as usize] = self.flow.segment(c as usize) == super::maxflow::Segment::Sink;
        }
        CutResult { inside, cut_value }
    }
}
