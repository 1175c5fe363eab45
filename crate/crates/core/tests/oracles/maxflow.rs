//! Independent Dinic max-flow and randomized dynamic instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skyloop_core::surface::maxflow::{DynamicMaxflow, Segment};

/// Independent Dinic max-flow over an explicit capacity list.
pub fn dinic(
    n: usize,
    source_caps: &[i64],
    sink_caps: &[i64],
    edges: &[(usize, usize, i64, i64)],
) -> i64 {
    let s = n;
    let t = n + 1;
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut adj = vec![Vec::new(); n + 2];
    let mut add = |u: usize, v: usize, c: i64, rc: i64, to: &mut Vec<usize>, cap: &mut Vec<i64>| {
        adj[u].push(to.len());
        to.push(v);
        cap.push(c);
        adj[v].push(to.len());
        to.push(u);
        cap.push(rc);
    };
    for i in 0..n {
        add(s, i, source_caps[i], 0, &mut to, &mut cap);
        add(i, t, sink_caps[i], 0, &mut to, &mut cap);
    }
    for &(u, v, c, rc) in edges {
        add(u, v, c, rc, &mut to, &mut cap);
    }
    let mut flow = 0;
    loop {
        let mut level = vec![-1i64; n + 2];
        level[s] = 0;
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &adj[u] {
                if cap[e] > 0 && level[to[e]] < 0 {
                    level[to[e]] = level[u] + 1;
                    q.push_back(to[e]);
                }
            }
        }
        if level[t] < 0 {
            return flow;
        }
        let mut it = vec![0usize; n + 2];
        fn dfs(
            u: usize,
            t: usize,
            f: i64,
            adj: &[Vec<usize>],
            to: &[usize],
            cap: &mut [i64],
            level: &[i64],
            it: &mut [usize],
        ) -> i64 {
            if u == t {
                return f;
            }
            while it[u] < adj[u].len() {
                let e = adj[u][it[u]];
                let v = to[e];
                if cap[e] > 0 && level[v] == level[u] + 1 {
                    let d = dfs(v, t, f.min(cap[e]), adj, to, cap, level, it);
                    if d > 0 {
                        cap[e] -= d;
                        cap[e ^ 1] += d;
                        return d;
                    }
                }
                it[u] += 1;
            }
            0
        }
        loop {
            let f = dfs(s, t, i64::MAX, &adj, &to, &mut cap, &level, &mut it);
            if f == 0 {
                break;
            }
            flow += f;
        }
    }
}

pub struct Instance {
    pub n: usize,
    pub src: Vec<i64>,
    pub snk: Vec<i64>,
    pub edges: Vec<(usize, usize, i64, i64)>,
    pub arc_ids: Vec<usize>,
    pub g: DynamicMaxflow,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Instance {
        let n = rng.random_range(2..30);
        let mut inst = Instance {
            n: 0,
            src: vec![],
            snk: vec![],
            edges: vec![],
            arc_ids: vec![],
            g: DynamicMaxflow::new(),
        };
        inst.add_nodes(rng, n);
        let m = rng.random_range(n..4 * n);
        for _ in 0..m {
            inst.add_random_edge(rng);
        }
        inst
    }

    pub fn add_nodes(&mut self, rng: &mut ChaCha8Rng, k: usize) {
        self.g.add_nodes(k);
        for _ in 0..k {
            let (s, t) = (
                rng.random_range(0..40) * (rng.random_bool(0.5) as i64),
                rng.random_range(0..40) * (rng.random_bool(0.5) as i64),
            );
            self.g.add_tweights(self.n, s, t);
            self.src.push(s);
            self.snk.push(t);
            self.n += 1;
        }
    }

    pub fn add_random_edge(&mut self, rng: &mut ChaCha8Rng) {
        let u = rng.random_range(0..self.n);
        let mut v = rng.random_range(0..self.n);
        if u == v {
            v = (v + 1) % self.n;
        }
        let (c, rc) = (rng.random_range(0..30), rng.random_range(0..30));
        self.arc_ids.push(self.g.add_edge(u, v, c, rc));
        self.edges.push((u, v, c, rc));
    }

    pub fn random_update(&mut self, rng: &mut ChaCha8Rng) {
        match rng.random_range(0..6) {
            0 | 1 => {
                let i = rng.random_range(0..self.n);
                let ds = rng.random_range(-self.src[i]..=30);
                let dt = rng.random_range(-self.snk[i]..=30);
                self.src[i] += ds;
                self.snk[i] += dt;
                self.g.add_tweights(i, ds, dt);
            }
            2 | 3 => {
                let k = rng.random_range(0..self.edges.len());
                let forward = rng.random_bool(0.5);
                let (_, _, c, rc) = &mut self.edges[k];
                let cur = if forward { c } else { rc };
                let d = rng.random_range(-*cur..=30);
                *cur += d;
                let a = if forward {
                    self.arc_ids[k]
                } else {
                    self.arc_ids[k] ^ 1
                };
                self.g.add_arc_capacity(a, d);
            }
            4 => self.add_random_edge(rng),
            _ => {
                self.add_nodes(rng, 1);
                self.add_random_edge(rng);
            }
        }
    }

    pub fn oracle(&self) -> i64 {
        dinic(self.n, &self.src, &self.snk, &self.edges)
    }

    /// Cost of the cut induced by the solver's labeling.
    pub fn labeling_cost(&self) -> i64 {
        let sink: Vec<bool> = (0..self.n)
            .map(|i| self.g.segment(i) == Segment::Sink)
            .collect();
        let mut cost = 0;
        for i in 0..self.n {
            cost += if sink[i] { self.src[i] } else { self.snk[i] };
        }
        for &(u, v, c, rc) in &self.edges {
            if !sink[u] && sink[v] {
                cost += c;
            }
            if sink[u] && !sink[v] {
                cost += rc;
            }
        }
        cost
    }
}
