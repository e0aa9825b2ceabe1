//! Dinic max-flow over real capacities, used for exact binary MAP inference.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    eps: f64,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            eps: 0.0,
        }
    }

    /// Residual capacities at or below `eps` count as saturated.
    pub fn set_tolerance(&mut self, eps: f64) {
        self.eps = eps;
    }

    /// Adds `u -> v` with capacity `forward` and `v -> u` with capacity `backward`
    /// as one residual pair.
    pub fn add_edge(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(forward);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(backward);
    }

    fn levels(&self, s: usize) -> Vec<Option<usize>> {
        let mut level = vec![None; self.head.len()];
        level[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let lu = level[u].expect("queued nodes have a level");
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > self.eps && level[v].is_none() {
                    level[v] = Some(lu + 1);
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn push(&mut self, u: usize, t: usize, limit: f64, level: &[Option<usize>], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.head[u].len() {
            let e = self.head[u][next[u]];
            let v = self.to[e];
            if self.cap[e] > self.eps && level[v].is_some() && level[v] == level[u].map(|l| l + 1) {
                let pushed = self.push(v, t, limit.min(self.cap[e]), level, next);
                if pushed > 0.0 {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            let level = self.levels(s);
            if level[t].is_none() {
                return flow;
            }
            let mut next = vec![0; self.head.len()];
            loop {
                let pushed = self.push(s, t, f64::INFINITY, &level, &mut next);
                if pushed <= 0.0 {
                    break;
                }
                flow += pushed;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph. After `max_flow` this is
    /// the smallest source side among all minimum cuts.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l.is_some()).collect()
    }
}
