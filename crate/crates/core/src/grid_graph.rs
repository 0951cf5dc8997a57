//! Shortest paths and minimum cuts on small weighted graphs.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    weight: f64,
    hops: usize,
    node: usize,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        // reversed for a min-heap
        o.weight.total_cmp(&self.weight).then(o.hops.cmp(&self.hops)).then(o.node.cmp(&self.node))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Undirected graph with nonnegative edge weights.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub weight: f64,
    pub nodes: Vec<usize>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { adj: vec![Vec::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        self.adj[a].push((b, w));
        self.adj[b].push((a, w));
    }

    /// Lightest path from any source to any target; ties broken by hop
    /// count, then node id.
    pub fn shortest_path(&self, sources: &[usize], targets: &[usize]) -> Option<Path> {
        let n = self.adj.len();
        let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
        let mut prev = vec![usize::MAX; n];
        let mut is_target = vec![false; n];
        for &t in targets {
            is_target[t] = true;
        }
        let mut heap = BinaryHeap::new();
        for &s in sources {
            best[s] = Some((0.0, 0));
            heap.push(Key { weight: 0.0, hops: 0, node: s });
        }
        let better = |a: (f64, usize), b: Option<(f64, usize)>| match b {
            None => true,
            Some(b) => a.0 < b.0 || (a.0 == b.0 && a.1 < b.1),
        };
        while let Some(k) = heap.pop() {
            if best[k.node] != Some((k.weight, k.hops)) {
                continue;
            }
            if is_target[k.node] {
                let mut nodes = vec![k.node];
                let mut u = k.node;
                while prev[u] != usize::MAX {
                    u = prev[u];
                    nodes.push(u);
                }
                nodes.reverse();
                return Some(Path { weight: k.weight, nodes });
            }
            for &(v, w) in &self.adj[k.node] {
                let cand = (k.weight + w, k.hops + 1);
                if better(cand, best[v]) {
                    best[v] = Some(cand);
                    prev[v] = k.node;
                    heap.push(Key { weight: cand.0, hops: cand.1, node: v });
                }
            }
        }
        None
    }
}

/// Dinic max-flow on a directed graph with real capacities.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    to: Vec<usize>,
    cap: Vec<f64>,
    head: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        FlowNetwork { to: Vec::new(), cap: Vec::new(), head: vec![Vec::new(); n] }
    }

    /// Edge usable in both directions with capacity `c`.
    pub fn add_undirected(&mut self, a: usize, b: usize, c: f64) {
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(c);
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.head.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > eps && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        level
    }

    /// One blocking-flow augmentation along the level graph, iteratively.
    fn augment(&mut self, s: usize, t: usize, level: &[usize], it: &mut [usize], eps: f64) -> f64 {
        let mut stack: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let pushed = stack.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                for &e in &stack {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                }
                return pushed;
            }
            let mut advanced = false;
            while it[u] < self.head[u].len() {
                let e = self.head[u][it[u]];
                let v = self.to[e];
                if self.cap[e] > eps && level[v] == level[u] + 1 {
                    stack.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                it[u] += 1;
            }
            if !advanced {
                match stack.pop() {
                    None => return 0.0,
                    Some(e) => {
                        u = self.to[e ^ 1];
                        it[u] += 1;
                    }
                }
            }
        }
    }

    /// Maximum flow value and the source side of a minimum cut.
    pub fn max_flow(&mut self, s: usize, t: usize) -> (f64, Vec<bool>) {
        let eps = 1e-15;
        let mut flow = 0.0;
        loop {
            let level = self.levels(s, eps);
            if level[t] == usize::MAX {
                let side = level.iter().map(|&l| l != usize::MAX).collect();
                return (flow, side);
            }
            let mut it = vec![0; self.head.len()];
            loop {
                let f = self.augment(s, t, &level, &mut it, eps);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_path_prefers_fewer_hops_on_ties() {
        let mut g = Graph::new(4);
        g.add_edge(0, 1, 0.0);
        g.add_edge(1, 3, 1.0);
        g.add_edge(0, 3, 1.0);
        g.add_edge(0, 2, 0.5);
        let p = g.shortest_path(&[0], &[3]).unwrap();
        assert_eq!(p.weight, 1.0);
        assert_eq!(p.nodes, vec![0, 3]);
        assert!(g.shortest_path(&[0], &[]).is_none());
    }

    #[test]
    fn max_flow_equals_min_cut() {
        // two parallel routes of bottlenecks 2 and 3
        let mut f = FlowNetwork::new(6);
        f.add_undirected(0, 1, 5.0);
        f.add_undirected(1, 2, 2.0);
        f.add_undirected(2, 5, 9.0);
        f.add_undirected(0, 3, 3.0);
        f.add_undirected(3, 4, 7.0);
        f.add_undirected(4, 5, 4.0);
        let (v, side) = f.max_flow(0, 5);
        assert!((v - 5.0).abs() < 1e-14);
        assert!(side[0] && side[1] && !side[5]);
    }
}
