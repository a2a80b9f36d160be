//! Min-cost max-flow by successive shortest paths with Johnson potentials.
//!
//! Costs must be nonnegative, so the initial potentials are zero and every
//! search is a Dijkstra on reduced costs. Arcs are explored in insertion
//! order and heap ties break on node index, which makes the returned flow a
//! deterministic function of the insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
pub struct MinCostFlow {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    initial: Vec<i64>,
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}
impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            initial: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Add arc `u -> v`; returns its id for [`MinCostFlow::flow`].
    pub fn add_arc(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        assert!(cost >= 0.0, "arc costs must be nonnegative");
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.cap.push(cap);
        self.cost.push(cost);
        self.initial.push(cap);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0);
        self.cost.push(-cost);
        self.initial.push(0);
        id
    }

    pub fn flow(&self, arc: usize) -> i64 {
        self.initial[arc] - self.cap[arc]
    }

    /// Push as much flow as possible from `s` to `t` at minimum cost.
    /// Returns `(flow, cost)`.
    pub fn run(&mut self, s: usize, t: usize) -> (i64, f64) {
        let n = self.node_count();
        let mut potential = vec![0.0; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut prev_arc = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut total_flow = 0;
        let mut total_cost = 0.0;

        loop {
            dist.fill(f64::INFINITY);
            prev_arc.fill(usize::MAX);
            done.fill(false);
            dist[s] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(State { dist: 0.0, node: s });
            while let Some(State { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                if u == t {
                    break;
                }
                for &e in &self.adj[u] {
                    if self.cap[e] <= 0 {
                        continue;
                    }
                    let v = self.to[e];
                    if done[v] {
                        continue;
                    }
                    // Rounding can leave reduced costs a hair below zero.
                    let reduced = (self.cost[e] + potential[u] - potential[v]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev_arc[v] = e;
                        heap.push(State { dist: nd, node: v });
                    }
                }
            }
            if !done[t] {
                break;
            }
            // Settled nodes get their exact distance; others are capped at dist[t].
            let dt = dist[t];
            for v in 0..n {
                potential[v] += if done[v] { dist[v] } else { dt };
            }

            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                let e = prev_arc[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev_arc[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                total_cost += push as f64 * self.cost[e];
                v = self.to[e ^ 1];
            }
            total_flow += push;
        }
        (total_flow, total_cost)
    }
}
