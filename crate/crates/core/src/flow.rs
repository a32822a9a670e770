//! Maximum flow / minimum cut on real-capacity networks.
//!
//! Dinic's blocking-flow algorithm over a compressed adjacency layout. The
//! returned cut is the canonical one: its source side is exactly the set of
//! nodes reachable from the source in the final residual graph, which is the
//! unique inclusion-minimal minimum cut.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{GirpError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capacity {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: Capacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub node_count: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<FlowArc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow_value: f64,
    /// Nodes other than the source that stay reachable in the residual graph.
    pub source_side: Vec<usize>,
    /// Flow on each input arc, in input order.
    pub arc_flows: Vec<f64>,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Self {
        FlowNetwork {
            node_count,
            source,
            sink,
            arcs: Vec::new(),
        }
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) {
        self.arcs.push(FlowArc {
            from,
            to,
            capacity: Capacity::Finite(capacity),
        });
    }

    pub fn add_infinite_arc(&mut self, from: usize, to: usize) {
        self.arcs.push(FlowArc {
            from,
            to,
            capacity: Capacity::Infinite,
        });
    }

    fn validate(&self) -> Result<()> {
        let n = self.node_count;
        if self.source >= n || self.sink >= n || self.source == self.sink {
            return Err(GirpError::MalformedNetwork(format!(
                "source {} / sink {} invalid for {n} nodes",
                self.source, self.sink
            )));
        }
        for a in &self.arcs {
            if a.from >= n || a.to >= n {
                return Err(GirpError::MalformedNetwork(format!(
                    "arc {} -> {} out of range",
                    a.from, a.to
                )));
            }
            match a.capacity {
                Capacity::Finite(c) if !(c.is_finite() && c >= 0.0) => {
                    return Err(GirpError::MalformedNetwork(format!(
                        "arc {} -> {} has capacity {c}",
                        a.from, a.to
                    )));
                }
                Capacity::Infinite
                    if a.from == self.source
                        || a.to == self.source
                        || a.from == self.sink
                        || a.to == self.sink =>
                {
                    return Err(GirpError::InfiniteTerminalArc {
                        from: a.from,
                        to: a.to,
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Sum of finite capacities plus one; stands in for infinite arcs.
    pub fn infinity_sentinel(&self) -> f64 {
        self.arcs
            .iter()
            .map(|a| match a.capacity {
                Capacity::Finite(c) => c,
                Capacity::Infinite => 0.0,
            })
            .sum::<f64>()
            + 1.0
    }

    /// DIMACS max-flow text, nodes numbered from 1.
    pub fn to_dimacs(&self) -> String {
        let inf = self.infinity_sentinel();
        let mut out = String::new();
        let _ = writeln!(out, "c girp cut network");
        let _ = writeln!(out, "p max {} {}", self.node_count, self.arcs.len());
        let _ = writeln!(out, "n {} s", self.source + 1);
        let _ = writeln!(out, "n {} t", self.sink + 1);
        for a in &self.arcs {
            let c = match a.capacity {
                Capacity::Finite(c) => c,
                Capacity::Infinite => inf,
            };
            let _ = writeln!(out, "a {} {} {}", a.from + 1, a.to + 1, c);
        }
        out
    }

    /// Capacity of the cut whose source side is `{source} ∪ side`.
    pub fn cut_capacity(&self, side: &[bool]) -> f64 {
        let inf = self.infinity_sentinel();
        let in_s = |v: usize| v == self.source || (v != self.sink && side[v]);
        self.arcs
            .iter()
            .filter(|a| in_s(a.from) && !in_s(a.to))
            .map(|a| match a.capacity {
                Capacity::Finite(c) => c,
                Capacity::Infinite => inf,
            })
            .sum()
    }
}

/// Residual graph in compressed adjacency form. Arc `e` and `e ^ 1` are a
/// forward/backward pair.
struct Residual {
    offsets: Vec<usize>,
    adj: Vec<usize>,
    head: Vec<usize>,
    residual: Vec<f64>,
    level: Vec<u32>,
    cursor: Vec<usize>,
    eps: f64,
}

const UNSEEN: u32 = u32::MAX;

impl Residual {
    fn build(net: &FlowNetwork, inf: f64) -> Self {
        let n = net.node_count;
        let m = net.arcs.len();
        let mut head = Vec::with_capacity(2 * m);
        let mut residual = Vec::with_capacity(2 * m);
        let mut degree = vec![0usize; n + 1];
        let mut max_cap: f64 = 1.0;
        for a in &net.arcs {
            let c = match a.capacity {
                Capacity::Finite(c) => {
                    max_cap = max_cap.max(c);
                    c
                }
                Capacity::Infinite => inf,
            };
            head.push(a.to);
            residual.push(c);
            head.push(a.from);
            residual.push(0.0);
            degree[a.from] += 1;
            degree[a.to] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![0usize; 2 * m];
        for (i, a) in net.arcs.iter().enumerate() {
            adj[fill[a.from]] = 2 * i;
            fill[a.from] += 1;
            adj[fill[a.to]] = 2 * i + 1;
            fill[a.to] += 1;
        }
        Residual {
            offsets,
            adj,
            head,
            residual,
            level: vec![UNSEEN; n],
            cursor: vec![0; n],
            eps: 1e-12 * max_cap,
        }
    }

    fn arcs_of(&self, v: usize) -> &[usize] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    fn bfs(&mut self, s: usize) {
        self.level.fill(UNSEEN);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for i in self.offsets[v]..self.offsets[v + 1] {
                let e = self.adj[i];
                let w = self.head[e];
                if self.residual[e] > self.eps && self.level[w] == UNSEEN {
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
    }

    /// One blocking flow on the current level graph.
    fn blocking_flow(&mut self, s: usize, t: usize) -> f64 {
        for v in 0..self.cursor.len() {
            self.cursor[v] = self.offsets[v];
        }
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                let push = path
                    .iter()
                    .map(|&e| self.residual[e])
                    .fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.residual[e] -= push;
                    self.residual[e ^ 1] += push;
                }
                total += push;
                let cut = path
                    .iter()
                    .position(|&e| self.residual[e] <= self.eps)
                    .expect("bottleneck arc saturates");
                path.truncate(cut);
                v = path.last().map_or(s, |&e| self.head[e]);
                continue;
            }
            let mut advanced = false;
            while self.cursor[v] < self.offsets[v + 1] {
                let e = self.adj[self.cursor[v]];
                let w = self.head[e];
                if self.residual[e] > self.eps && self.level[w] == self.level[v] + 1 {
                    path.push(e);
                    v = w;
                    advanced = true;
                    break;
                }
                self.cursor[v] += 1;
            }
            if !advanced {
                if v == s {
                    break;
                }
                self.level[v] = UNSEEN;
                let e = path.pop().expect("non-source node has an entry arc");
                v = self.head[e ^ 1];
                self.cursor[v] += 1;
            }
        }
        total
    }
}

/// Maximum flow and the canonical minimum cut.
pub fn max_flow(net: &FlowNetwork) -> Result<MinCut> {
    net.validate()?;
    let inf = net.infinity_sentinel();
    let (s, t) = (net.source, net.sink);
    let mut g = Residual::build(net, inf);
    loop {
        g.bfs(s);
        if g.level[t] == UNSEEN {
            break;
        }
        if g.blocking_flow(s, t) <= 0.0 {
            break;
        }
    }
    // After the last BFS, `level` marks exactly the residual-reachable set.
    let source_side: Vec<usize> = (0..net.node_count)
        .filter(|&v| v != s && g.level[v] != UNSEEN)
        .collect();
    let arc_flows: Vec<f64> = net
        .arcs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let cap = match a.capacity {
                Capacity::Finite(c) => c,
                Capacity::Infinite => inf,
            };
            (cap - g.residual[2 * i]).clamp(0.0, cap)
        })
        .collect();
    let flow_value = g
        .arcs_of(s)
        .iter()
        .filter(|&&e| e % 2 == 0)
        .map(|&e| arc_flows[e / 2])
        .sum::<f64>()
        - g.arcs_of(s)
            .iter()
            .filter(|&&e| e % 2 == 1)
            .map(|&e| arc_flows[e / 2])
            .sum::<f64>();
    Ok(MinCut {
        flow_value,
        source_side,
        arc_flows,
    })
}
