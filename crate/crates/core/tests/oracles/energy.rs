//! From-scratch energy accumulation and dual-graph min cut.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyloop_core::delaunay::{TetComplex, VertexId};
use skyloop_core::surface::energy::{to_fixed, INFINITE_CAPACITY};
use skyloop_core::surface::{
    update_energy, CutSolver, EnergyGraph, EnergyParams, NewRay, RayId, RayStatus, RayStore,
};
use skyloop_core::Point3;

pub fn sphere_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = 5.0 + rng.random_range(-0.05..0.05);
            let rho = (1.0 - z * z).sqrt();
            Point3::new(r * rho * t.cos(), r * rho * t.sin(), r * z)
        })
        .collect()
}

pub fn cameras(k: usize) -> Vec<Point3> {
    (0..k)
        .map(|i| {
            let a = i as f64 / k as f64 * std::f64::consts::TAU;
            Point3::new(
                14.0 * a.cos(),
                14.0 * a.sin(),
                if i % 2 == 0 { 6.0 } else { -3.0 },
            )
        })
        .collect()
}

pub fn vertex_of(t: &TetComplex, p: &Point3) -> VertexId {
    (1..=t.num_vertices() as VertexId)
        .find(|&v| t.point(v) == *p)
        .expect("vertex present")
}

/// Rays from every camera to every point whose outward direction faces it.
pub fn rays_for(t: &TetComplex, cams: &[Point3], pts: &[(u32, Point3)]) -> Vec<NewRay> {
    let mut out = Vec::new();
    for (vi, c) in cams.iter().enumerate() {
        for &(track, p) in pts {
            if p.dot(&(*c - p)) > 0.0 {
                out.push(NewRay {
                    id: RayId {
                        view: vi as u32,
                        track,
                    },
                    camera: *c,
                    target: vertex_of(t, &p),
                });
            }
        }
    }
    out
}

/// From-scratch capacities: every active ray retraced and accumulated by
/// the endpoint rules, smoothness recomputed from geometry.
pub struct Scratch {
    pub source: BTreeMap<u32, i64>,
    pub sink: BTreeMap<u32, i64>,
    pub vis: BTreeMap<(u32, u32), i64>,
    pub smooth: BTreeMap<(u32, u32), i64>,
}

pub fn from_scratch(t: &TetComplex, store: &RayStore, params: &EnergyParams) -> Scratch {
    let mut s = Scratch {
        source: BTreeMap::new(),
        sink: BTreeMap::new(),
        vis: BTreeMap::new(),
        smooth: BTreeMap::new(),
    };
    for ray in store
        .rays()
        .iter()
        .filter(|r| r.status == RayStatus::Active)
    {
        let tr = t
            .sight_traversal(ray.target, &ray.camera)
            .expect("traversal");
        let cells: Vec<u32> = tr.steps.iter().map(|w| w.cell).collect();
        *s.source.entry(cells[0]).or_default() += to_fixed(params.alpha_free);
        for w in cells.windows(2) {
            *s.vis.entry((w[0], w[1])).or_default() += to_fixed(params.alpha_con);
        }
        match tr.behind {
            Some((ts, k)) => {
                let beyond = t.cell(ts).neighbors[k as usize];
                *s.vis.entry((ts, beyond)).or_default() += to_fixed(params.alpha_con);
                *s.sink.entry(ts).or_default() += to_fixed(params.alpha_occ);
            }
            None => {
                *s.sink.entry(*cells.last().unwrap()).or_default() += to_fixed(params.alpha_occ)
            }
        }
    }
    for c in t.finite_cells() {
        let cell = t.cell(c);
        for i in 0..4 {
            let n = cell.neighbors[i];
            if n < c || t.is_infinite(n) {
                continue;
            }
            let other = t.cell(n);
            let j = (0..4).find(|&j| other.neighbors[j] == c).unwrap();
            let mut f = cell.face(i).map(|v| t.point(v));
            f.sort_by(|a, b| a.lex_cmp(b));
            let (x, y) = (t.point(cell.vertices[i]), t.point(other.vertices[j]));
            let v = if x.lex_cmp(&y).is_lt() { y - x } else { x - y };
            // |cos| of the angle between the apex segment and the facet normal.
            let m = (f[1] - f[0]).cross(&(f[2] - f[0]));
            let unit = m / m.norm();
            let w = params.lambda * params.alpha_con * (v.dot(&unit).abs() / v.norm()).min(1.0);
            let w = to_fixed(w);
            if w != 0 {
                s.smooth.insert((c, n), w);
            }
        }
    }
    s
}

pub fn assert_matches_scratch(t: &TetComplex, g: &EnergyGraph, store: &RayStore) {
    let s = from_scratch(t, store, &g.params);
    for c in t.live_cells() {
        assert_eq!(
            g.source(c),
            s.source.get(&c).copied().unwrap_or(0),
            "source of {c}"
        );
        assert_eq!(
            g.sink(c),
            s.sink.get(&c).copied().unwrap_or(0),
            "sink of {c}"
        );
    }
    let vis: BTreeMap<(u32, u32), i64> = g.visibility_entries().into_iter().collect();
    assert_eq!(vis, s.vis);
    let smooth: BTreeMap<(u32, u32), i64> = g.smoothness_entries().into_iter().collect();
    assert_eq!(smooth, s.smooth);
}

pub struct Scene {
    pub complex: TetComplex,
    pub store: RayStore,
    pub graph: EnergyGraph,
    pub solver: CutSolver,
    pub cams: Vec<Point3>,
}

pub fn build_scene(seed: u64, initial: usize) -> (Scene, Vec<Point3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sphere_points(initial + 200, &mut rng);
    let complex = TetComplex::bootstrap(&pts[..initial]).unwrap();
    let mut graph = EnergyGraph::new(EnergyParams::default());
    graph.rebuild_smoothness(&complex);
    let mut store = RayStore::default();
    let cams = cameras(8);
    let tracked: Vec<(u32, Point3)> = pts[..initial]
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u32, *p))
        .collect();
    let rays = rays_for(&complex, &cams, &tracked);
    let report = update_energy(&complex, &[], &rays, &mut store, &mut graph);
    assert_eq!(report.failed_rays, 0);
    (
        Scene {
            complex,
            store,
            graph,
            solver: CutSolver::new(),
            cams,
        },
        pts[initial..].to_vec(),
    )
}

/// Dinic on the explicit dual graph, infinite cells pinned to the source.
pub fn oracle_cut(t: &TetComplex, g: &EnergyGraph) -> i64 {
    let cells: Vec<u32> = t.live_cells().collect();
    let idx: HashMap<u32, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let n = cells.len();
    let (s, tt) = (n, n + 1);
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut adj = vec![Vec::new(); n + 2];
    let mut add = |u: usize, v: usize, c: i64| {
        adj[u].push(to.len());
        to.push(v);
        cap.push(c);
        adj[v].push(to.len());
        to.push(u);
        cap.push(0);
    };
    for (i, &c) in cells.iter().enumerate() {
        let inf = if t.is_infinite(c) {
            INFINITE_CAPACITY
        } else {
            0
        };
        add(s, i, g.source(c) + inf);
        add(i, tt, g.sink(c));
        for &nb in &t.cell(c).neighbors {
            add(i, idx[&nb], g.facet_capacity(c, nb));
        }
    }
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; n + 2];
        let mut q = std::collections::VecDeque::from([s]);
        prev[s] = s;
        while let Some(u) = q.pop_front() {
            for &e in &adj[u] {
                if cap[e] > 0 && prev[to[e]] == usize::MAX {
                    prev[to[e]] = e;
                    q.push_back(to[e]);
                }
            }
        }
        if prev[tt] == usize::MAX {
            return flow;
        }
        let mut f = i64::MAX;
        let mut v = tt;
        while v != s {
            let e = prev[v];
            f = f.min(cap[e]);
            v = to[e ^ 1];
        }
        let mut v = tt;
        while v != s {
            let e = prev[v];
            cap[e] -= f;
            cap[e ^ 1] += f;
            v = to[e ^ 1];
        }
        flow += f;
    }
}
