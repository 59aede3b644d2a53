//! Max-flow (Dinic) and the capacitated bipartite matching test used by the
//! optimal router.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::PlacementMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    pub capacity: u64,
}

/// Directed network with integer capacities and a designated source and sink.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    num_nodes: usize,
    source: usize,
    sink: usize,
    edges: Vec<FlowEdge>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= num_nodes || sink >= num_nodes {
            return Err(Error::Validation(format!("source {source} / sink {sink} outside {num_nodes} nodes")));
        }
        if source == sink {
            return Err(Error::Validation("source and sink must differ".into()));
        }
        Ok(Self { num_nodes, source, sink, edges: Vec::new() })
    }

    /// Adds an edge and returns its index into [`MaxFlow::edge_flows`].
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: u64) -> Result<usize> {
        if from >= self.num_nodes || to >= self.num_nodes {
            return Err(Error::Validation(format!("edge {from}->{to} outside {} nodes", self.num_nodes)));
        }
        if from == to {
            return Err(Error::Validation(format!("self-loop on node {from}")));
        }
        self.edges.push(FlowEdge { from, to, capacity });
        Ok(self.edges.len() - 1)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxFlow {
    pub value: u64,
    /// Flow on each edge, indexed like [`FlowNetwork::edges`].
    pub edge_flows: Vec<u64>,
}

/// Residual graph. Arc `2e` is edge `e`, arc `2e + 1` its reverse.
struct Residual {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u64>,
    level: Vec<i32>,
    next: Vec<usize>,
}

impl Residual {
    fn new(net: &FlowNetwork) -> Self {
        let mut head = vec![Vec::new(); net.num_nodes];
        let mut to = Vec::with_capacity(net.edges.len() * 2);
        let mut cap = Vec::with_capacity(net.edges.len() * 2);
        for e in &net.edges {
            head[e.from].push(to.len());
            to.push(e.to);
            cap.push(e.capacity);
            head[e.to].push(to.len());
            to.push(e.from);
            cap.push(0);
        }
        Self { head, to, cap, level: vec![-1; net.num_nodes], next: vec![0; net.num_nodes] }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &arc in &self.head[u] {
                let v = self.to[arc];
                if self.cap[arc] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, limit: u64) -> u64 {
        if u == t {
            return limit;
        }
        while self.next[u] < self.head[u].len() {
            let arc = self.head[u][self.next[u]];
            let v = self.to[arc];
            if self.cap[arc] > 0 && self.level[v] == self.level[u] + 1 {
                let pushed = self.dfs(v, t, limit.min(self.cap[arc]));
                if pushed > 0 {
                    self.cap[arc] -= pushed;
                    self.cap[arc ^ 1] += pushed;
                    return pushed;
                }
            }
            self.next[u] += 1;
        }
        0
    }
}

/// Maximum s-t flow by Dinic's blocking-flow algorithm.
pub fn max_flow(net: &FlowNetwork) -> MaxFlow {
    let mut r = Residual::new(net);
    let (s, t) = (net.source, net.sink);
    let mut value = 0u64;
    while r.bfs(s, t) {
        r.next.fill(0);
        loop {
            let pushed = r.dfs(s, t, u64::MAX);
            if pushed == 0 {
                break;
            }
            value += pushed;
        }
    }
    let edge_flows = net.edges.iter().enumerate().map(|(e, edge)| edge.capacity - r.cap[2 * e]).collect();
    MaxFlow { value, edge_flows }
}

/// Outcome of testing one candidate `lambda0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    /// `(expert, gpu)` pairs read off saturated expert->GPU edges, in
    /// ascending expert order. Complete only when `feasible`.
    pub matching: Vec<(usize, usize)>,
}

/// Can every expert in `active` be matched to one hosting GPU with no GPU
/// matched more than `lambda0` times?
///
/// Network: source -> expert (cap 1), expert -> GPU where hosted (cap 1),
/// GPU -> sink (cap `lambda0`). Edges are inserted experts-ascending then
/// GPUs-ascending, which fixes the matching returned for a given input.
pub fn feasibility_test(active: &[usize], placement: &PlacementMap, lambda0: u64) -> Feasibility {
    let m = active.len();
    let g = placement.num_gpus();
    let (source, sink) = (0, m + g + 1);
    let gpu_node = |gpu: usize| 1 + m + gpu;
    let mut net = FlowNetwork::new(m + g + 2, source, sink).expect("source != sink");
    let mut pairs = Vec::new();
    for j in 0..m {
        net.add_edge(source, 1 + j, 1).expect("valid node");
    }
    for (j, &expert) in active.iter().enumerate() {
        for &gpu in placement.replicas(expert) {
            let e = net.add_edge(1 + j, gpu_node(gpu), 1).expect("valid node");
            pairs.push((e, expert, gpu));
        }
    }
    for gpu in 0..g {
        net.add_edge(gpu_node(gpu), sink, lambda0).expect("valid node");
    }
    let flow = max_flow(&net);
    let matching =
        pairs.into_iter().filter(|&(e, _, _)| flow.edge_flows[e] > 0).map(|(_, expert, gpu)| (expert, gpu)).collect();
    Feasibility { feasible: flow.value == m as u64, matching }
}
