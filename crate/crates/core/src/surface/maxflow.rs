//! Boykov–Kolmogorov augmenting-path max-flow with search-tree reuse
//! across solves (dynamic graph cuts).
//!
//! Capacities are integers. Between solves, terminal and arc capacities can
//! be changed in either direction; every edit is applied to the residual
//! graph as a reparameterization that keeps, for every s-t cut `S`,
//! `capacity(S) = cut_offset_flow + residual(S)`, so the next solve only has
//! to push the flow made possible by the edit.

use std::collections::VecDeque;

pub type NodeId = usize;
pub type ArcId = usize;

const NONE: ArcId = usize::MAX;
const TERMINAL: ArcId = usize::MAX - 1;
const ORPHAN: ArcId = usize::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    first: ArcId,
    parent: ArcId,
    ts: u64,
    dist: u32,
    is_sink: bool,
    is_marked: bool,
    active: bool,
    /// Source residual minus sink residual.
    tr_cap: i64,
}

#[derive(Debug, Clone, PartialEq)]
struct Arc {
    head: NodeId,
    next: ArcId,
    r_cap: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DynamicMaxflow {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: i64,
    offset: i64,
    time: u64,
    active: VecDeque<NodeId>,
    marked: Vec<NodeId>,
    orphans: VecDeque<NodeId>,
    solved_once: bool,
}

#[inline]
fn sister(a: ArcId) -> ArcId {
    a ^ 1
}

impl DynamicMaxflow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Appends `n` isolated nodes, returning the id of the first.
    pub fn add_nodes(&mut self, n: usize) -> NodeId {
        let first = self.nodes.len();
        self.nodes.extend((0..n).map(|_| Node {
            first: NONE,
            parent: NONE,
            ts: 0,
            dist: 0,
            is_sink: false,
            is_marked: false,
            active: false,
            tr_cap: 0,
        }));
        first
    }

    /// Adds arcs `u -> v` (capacity `cap`) and `v -> u` (capacity `rev_cap`).
    /// Returns the id of the forward arc; the reverse arc is `id ^ 1`.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId, cap: i64, rev_cap: i64) -> ArcId {
        assert!(u != v && cap >= 0 && rev_cap >= 0);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: v,
            next: self.nodes[u].first,
            r_cap: cap,
        });
        self.arcs.push(Arc {
            head: u,
            next: self.nodes[v].first,
            r_cap: rev_cap,
        });
        self.nodes[u].first = a;
        self.nodes[v].first = a + 1;
        self.mark_node(u);
        self.mark_node(v);
        a
    }

    /// Adds `ds` to the source capacity and `dt` to the sink capacity of
    /// `i`. Either delta may be negative as long as the resulting
    /// capacity stays non-negative (the caller tracks capacities).
    pub fn add_tweights(&mut self, i: NodeId, ds: i64, dt: i64) {
        let tr = self.nodes[i].tr_cap;
        let mut rs = tr.max(0) + ds;
        let mut rt = (-tr).max(0) + dt;
        if rs < 0 {
            self.offset += -rs;
            rt += -rs;
            rs = 0;
        }
        if rt < 0 {
            self.offset += -rt;
            rs += -rt;
            rt = 0;
        }
        let m = rs.min(rt);
        self.flow += m;
        self.nodes[i].tr_cap = rs - rt;
        self.mark_node(i);
    }

    /// Adds `delta` to the capacity of arc `a` (which may be negative as long
    /// as the resulting capacity is non-negative).
    pub fn add_arc_capacity(&mut self, a: ArcId, delta: i64) {
        let b = sister(a);
        let u = self.arcs[b].head;
        let v = self.arcs[a].head;
        let r = self.arcs[a].r_cap + delta;
        if r >= 0 {
            self.arcs[a].r_cap = r;
        } else {
            // The arc carries more flow than its new capacity: cancel the
            // excess and reroute it through the terminals.
            let e = -r;
            self.arcs[a].r_cap = 0;
            self.arcs[b].r_cap -= e;
            debug_assert!(self.arcs[b].r_cap >= 0);
            self.offset += e;
            self.add_tweights(u, e, 0);
            self.add_tweights(v, 0, e);
        }
        self.orphan_if_broken(u, a);
        self.orphan_if_broken(v, b);
        self.mark_node(u);
        self.mark_node(v);
    }

    /// If `x`'s tree parent arc is `x_to_parent` and it lost its residual,
    /// detach `x` from the tree.
    fn orphan_if_broken(&mut self, x: NodeId, x_to_parent: ArcId) {
        if self.nodes[x].parent != x_to_parent {
            return;
        }
        let used = if self.nodes[x].is_sink {
            x_to_parent
        } else {
            sister(x_to_parent)
        };
        if self.arcs[used].r_cap == 0 {
            self.nodes[x].parent = ORPHAN;
            self.orphans.push_back(x);
        }
    }

    pub fn residual(&self, a: ArcId) -> i64 {
        self.arcs[a].r_cap
    }

    /// Value of the minimum cut of the current capacities (valid after
    /// `maxflow`).
    pub fn cut_value(&self) -> i64 {
        self.flow - self.offset
    }

    pub fn segment(&self, i: NodeId) -> Segment {
        let n = &self.nodes[i];
        if n.parent != NONE && n.is_sink {
            Segment::Sink
        } else {
            Segment::Source
        }
    }

    /// Checks the search-tree invariants after a solve: parent arcs carry
    /// residual capacity, terminal roots have the matching sign, and both
    /// trees are closed under residual reachability.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            match n.parent {
                NONE => {}
                ORPHAN => return Err(format!("node {i} left orphaned")),
                TERMINAL => {
                    if (n.tr_cap < 0) != n.is_sink || n.tr_cap == 0 {
                        return Err(format!("node {i} root sign mismatch (tr {})", n.tr_cap));
                    }
                }
                a => {
                    let used = if n.is_sink { a } else { sister(a) };
                    if self.arcs[used].r_cap <= 0
                        || self.nodes[self.arcs[a].head].is_sink != n.is_sink
                    {
                        return Err(format!("node {i} has an invalid parent arc"));
                    }
                }
            }
            let mut a = n.first;
            while a != NONE {
                let j = self.arcs[a].head;
                let nj = &self.nodes[j];
                if n.parent != NONE
                    && !n.is_sink
                    && self.arcs[a].r_cap > 0
                    && (nj.parent == NONE || nj.is_sink)
                {
                    return Err(format!("source tree not closed at {i}->{j}"));
                }
                if nj.parent != NONE
                    && nj.is_sink
                    && self.arcs[a].r_cap > 0
                    && (n.parent == NONE || !n.is_sink)
                {
                    return Err(format!("sink tree not closed at {i}->{j}"));
                }
                a = self.arcs[a].next;
            }
            if n.parent == NONE && n.tr_cap != 0 {
                return Err(format!("free node {i} has terminal capacity"));
            }
        }
        Ok(())
    }

    fn mark_node(&mut self, i: NodeId) {
        if !self.nodes[i].is_marked {
            self.nodes[i].is_marked = true;
            self.marked.push(i);
        }
    }

    fn set_active(&mut self, i: NodeId) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<NodeId> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != NONE {
                return Some(i);
            }
        }
        None
    }

    fn init_fresh(&mut self) {
        self.active.clear();
        self.orphans.clear();
        self.marked.clear();
        self.time = 0;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.active = false;
            n.is_marked = false;
            n.ts = 0;
            if n.tr_cap != 0 {
                n.is_sink = n.tr_cap < 0;
                n.parent = TERMINAL;
                n.dist = 1;
                self.set_active(i);
            } else {
                n.parent = NONE;
            }
        }
    }

    fn init_reuse(&mut self) {
        self.time += 1;
        let marked = std::mem::take(&mut self.marked);
        for &i in &marked {
            self.nodes[i].is_marked = false;
        }
        for &i in &marked {
            self.set_active(i);
            let tr = self.nodes[i].tr_cap;
            if tr == 0 {
                if self.nodes[i].parent != NONE && self.nodes[i].parent != ORPHAN {
                    self.nodes[i].parent = ORPHAN;
                    self.orphans.push_back(i);
                }
                continue;
            }
            let want_sink = tr < 0;
            let p = self.nodes[i].parent;
            if p == NONE || p == ORPHAN || self.nodes[i].is_sink != want_sink {
                self.nodes[i].is_sink = want_sink;
                let mut a = self.nodes[i].first;
                while a != NONE {
                    let j = self.arcs[a].head;
                    let nj = &self.nodes[j];
                    if nj.parent == sister(a) {
                        self.nodes[j].parent = ORPHAN;
                        self.orphans.push_back(j);
                    } else if nj.parent != NONE && nj.parent != ORPHAN {
                        let cap = if want_sink {
                            self.arcs[sister(a)].r_cap
                        } else {
                            self.arcs[a].r_cap
                        };
                        if nj.is_sink != want_sink && cap > 0 {
                            self.set_active(j);
                        }
                    }
                    a = self.arcs[a].next;
                }
            }
            let n = &mut self.nodes[i];
            n.parent = TERMINAL;
            n.ts = self.time;
            n.dist = 1;
        }
        self.adopt();
    }

    fn adopt(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            if self.nodes[i].parent != ORPHAN {
                continue;
            }
            self.process_orphan(i);
        }
    }

    /// Computes the maximum flow, reusing search trees from the previous
    /// solve. Returns the minimum cut value.
    pub fn maxflow(&mut self) -> i64 {
        if self.solved_once {
            self.init_reuse();
        } else {
            self.init_fresh();
            self.solved_once = true;
        }
        let mut current: Option<NodeId> = None;
        loop {
            let mut i = match current {
                Some(c) => {
                    self.nodes[c].active = false;
                    if self.nodes[c].parent == NONE {
                        None
                    } else {
                        Some(c)
                    }
                }
                None => None,
            };
            if i.is_none() {
                i = self.next_active();
            }
            let Some(i) = i else { break };

            let found = self.grow(i);
            self.time += 1;
            match found {
                Some(a) => {
                    self.nodes[i].active = true;
                    current = Some(i);
                    self.augment(a);
                    self.adopt();
                }
                None => current = None,
            }
        }
        if let Some(c) = current {
            self.nodes[c].active = false;
        }
        self.cut_value()
    }

    /// Grows the tree of `i`; returns an arc from the source tree to the
    /// sink tree when the trees touch.
    fn grow(&mut self, i: NodeId) -> Option<ArcId> {
        let i_sink = self.nodes[i].is_sink;
        let (its, idist) = (self.nodes[i].ts, self.nodes[i].dist);
        let mut a = self.nodes[i].first;
        while a != NONE {
            let cap = if i_sink {
                self.arcs[sister(a)].r_cap
            } else {
                self.arcs[a].r_cap
            };
            if cap != 0 {
                let j = self.arcs[a].head;
                let nj = &self.nodes[j];
                if nj.parent == NONE {
                    let n = &mut self.nodes[j];
                    n.is_sink = i_sink;
                    n.parent = sister(a);
                    n.ts = its;
                    n.dist = idist + 1;
                    self.set_active(j);
                } else if nj.is_sink != i_sink {
                    return Some(if i_sink { sister(a) } else { a });
                } else if nj.ts <= its && nj.dist > idist {
                    let n = &mut self.nodes[j];
                    n.parent = sister(a);
                    n.ts = its;
                    n.dist = idist + 1;
                }
            }
            a = self.arcs[a].next;
        }
        None
    }

    fn augment(&mut self, middle: ArcId) {
        let mut bottleneck = self.arcs[middle].r_cap;
        // source side
        let mut i = self.arcs[sister(middle)].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[sister(a)].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        // sink side
        let mut i = self.arcs[middle].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);
        debug_assert!(bottleneck > 0);

        self.arcs[sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[sister(middle)].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a].r_cap += bottleneck;
            self.arcs[sister(a)].r_cap -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[sister(a)].r_cap == 0 {
                self.nodes[i].parent = ORPHAN;
                self.orphans.push_front(i);
            }
            i = next;
        }
        self.nodes[i].tr_cap -= bottleneck;
        if self.nodes[i].tr_cap == 0 {
            self.nodes[i].parent = ORPHAN;
            self.orphans.push_front(i);
        }

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[sister(a)].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[a].r_cap == 0 {
                self.nodes[i].parent = ORPHAN;
                self.orphans.push_front(i);
            }
            i = next;
        }
        self.nodes[i].tr_cap += bottleneck;
        if self.nodes[i].tr_cap == 0 {
            self.nodes[i].parent = ORPHAN;
            self.orphans.push_front(i);
        }
        self.flow += bottleneck;
    }

    fn process_orphan(&mut self, i: NodeId) {
        let i_sink = self.nodes[i].is_sink;
        let mut best: Option<(u32, ArcId)> = None;
        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            // residual towards i from the tree side
            let cap = if i_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[sister(a0)].r_cap
            };
            if cap != 0 {
                let start = self.arcs[a0].head;
                if self.nodes[start].is_sink == i_sink && self.nodes[start].parent != NONE {
                    if let Some(d) = self.origin_distance(start) {
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, a0));
                        }
                        // stamp the path so later checks stop early
                        let mut j = start;
                        let mut dd = d;
                        while self.nodes[j].ts != self.time {
                            self.nodes[j].ts = self.time;
                            self.nodes[j].dist = dd;
                            dd = dd.saturating_sub(1);
                            j = self.arcs[self.nodes[j].parent].head;
                        }
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }
        match best {
            Some((d, a)) => {
                let n = &mut self.nodes[i];
                n.parent = a;
                n.ts = self.time;
                n.dist = d + 1;
            }
            None => {
                self.nodes[i].parent = NONE;
                let mut a0 = self.nodes[i].first;
                while a0 != NONE {
                    let j = self.arcs[a0].head;
                    let p = self.nodes[j].parent;
                    if p == NONE {
                        a0 = self.arcs[a0].next;
                        continue;
                    }
                    if self.nodes[j].is_sink == i_sink {
                        let cap = if i_sink {
                            self.arcs[a0].r_cap
                        } else {
                            self.arcs[sister(a0)].r_cap
                        };
                        if cap != 0 {
                            self.set_active(j);
                        }
                        if p != TERMINAL && p != ORPHAN && self.arcs[p].head == i {
                            self.nodes[j].parent = ORPHAN;
                            self.orphans.push_back(j);
                        }
                    } else {
                        // The other tree may now be able to absorb i.
                        let cap = if i_sink {
                            self.arcs[sister(a0)].r_cap
                        } else {
                            self.arcs[a0].r_cap
                        };
                        if cap != 0 {
                            self.set_active(j);
                        }
                    }
                    a0 = self.arcs[a0].next;
                }
            }
        }
    }

    /// Distance from `j` to its terminal along parent arcs, or `None` if the
    /// path runs into an orphan.
    fn origin_distance(&mut self, mut j: NodeId) -> Option<u32> {
        let mut d = 0u32;
        loop {
            if self.nodes[j].ts == self.time {
                return Some(d + self.nodes[j].dist);
            }
            let a = self.nodes[j].parent;
            d += 1;
            if a == TERMINAL {
                self.nodes[j].ts = self.time;
                self.nodes[j].dist = 1;
                return Some(d);
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            j = self.arcs[a].head;
        }
    }
}
