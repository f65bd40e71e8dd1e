//! Primal network simplex for uncapacitated transportation problems.
//!
//! Sources `0..m` supply integer amounts, sinks `0..n` demand them, and every
//! source-sink pair is an arc. The spanning tree is kept as parent pointers
//! plus doubly linked child lists, so a pivot only touches the subtree that
//! is re-hung. Leaving arcs are chosen to keep the tree strongly feasible,
//! which rules out cycling on degenerate pivots.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

const NONE: usize = usize::MAX;

/// Optimal flow on one source-sink pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEntry {
    pub source: usize,
    pub sink: usize,
    pub flow: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub cost: f64,
    pub flows: Vec<FlowEntry>,
    pub pivots: usize,
}

struct Solver<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    art_cost: f64,
    root: usize,
    parent: Vec<usize>,
    pred: Vec<usize>,
    // true: pred arc points from the node to its parent
    up: Vec<bool>,
    flow: Vec<i64>,
    pi: Vec<f64>,
    depth: Vec<usize>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
}

impl Solver<'_> {
    fn arc_count(&self) -> usize {
        self.m * self.n + self.m + self.n
    }

    fn ends(&self, arc: usize) -> (usize, usize) {
        let real = self.m * self.n;
        if arc < real {
            (arc / self.n, self.m + arc % self.n)
        } else {
            let v = arc - real;
            if v < self.m {
                (v, self.root)
            } else {
                (self.root, v)
            }
        }
    }

    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.m * self.n {
            self.cost[arc]
        } else {
            self.art_cost
        }
    }

    fn reduced_cost(&self, arc: usize) -> f64 {
        let (u, v) = self.ends(arc);
        self.arc_cost(arc) + self.pi[u] - self.pi[v]
    }

    fn detach(&mut self, x: usize) {
        let p = self.parent[x];
        let (prev, next) = (self.prev_sib[x], self.next_sib[x]);
        if prev == NONE {
            self.first_child[p] = next;
        } else {
            self.next_sib[prev] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
        self.prev_sib[x] = NONE;
        self.next_sib[x] = NONE;
    }

    fn attach(&mut self, x: usize, p: usize) {
        self.parent[x] = p;
        let head = self.first_child[p];
        self.next_sib[x] = head;
        self.prev_sib[x] = NONE;
        if head != NONE {
            self.prev_sib[head] = x;
        }
        self.first_child[p] = x;
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    fn pivot(&mut self, in_arc: usize) {
        let (first, second) = self.ends(in_arc);
        let join = self.join(first, second);

        // flow goes first -> second on the entering arc, then second -> join -> first
        let mut delta = i64::MAX;
        let mut out = NONE;
        let mut out_first_side = false;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                out = u;
                out_first_side = true;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                out = u;
                out_first_side = false;
            }
            u = self.parent[u];
        }
        assert!(out != NONE, "unbounded transport problem");

        if delta > 0 {
            let mut u = first;
            while u != join {
                self.flow[u] += if self.up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[u] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if out_first_side { (first, second) } else { (second, first) };
        let rc = self.reduced_cost(in_arc);
        let shift = if u_in == second { rc } else { -rc };

        // reverse the path u_in -> ... -> out, then hang u_in below v_in
        let mut carry_arc = in_arc;
        let mut carry_up = u_in == first;
        let mut carry_flow = delta;
        let mut new_parent = v_in;
        let mut x = u_in;
        loop {
            let old_parent = self.parent[x];
            let (old_arc, old_up, old_flow) = (self.pred[x], self.up[x], self.flow[x]);
            self.detach(x);
            self.attach(x, new_parent);
            self.pred[x] = carry_arc;
            self.up[x] = carry_up;
            self.flow[x] = carry_flow;
            if x == out {
                break;
            }
            carry_arc = old_arc;
            carry_up = !old_up;
            carry_flow = old_flow;
            new_parent = x;
            x = old_parent;
        }

        // refresh potentials and depths below u_in
        let mut stack = vec![u_in];
        while let Some(y) = stack.pop() {
            self.pi[y] += shift;
            self.depth[y] = self.depth[self.parent[y]] + 1;
            let mut c = self.first_child[y];
            while c != NONE {
                stack.push(c);
                c = self.next_sib[c];
            }
        }
    }
}

/// Solves `min sum cost[i*n + j] * x_ij` subject to row sums `supply` and
/// column sums `demand`, `x >= 0`. Supplies and demands must be positive
/// and balanced.
pub fn solve_transport(supply: &[i64], demand: &[i64], cost: &[f64]) -> Solution {
    let (m, n) = (supply.len(), demand.len());
    assert!(m > 0 && n > 0, "empty transport problem");
    assert_eq!(cost.len(), m * n, "cost matrix shape");
    assert_eq!(supply.iter().sum::<i64>(), demand.iter().sum::<i64>(), "unbalanced transport problem");
    assert!(supply.iter().chain(demand).all(|&s| s > 0), "supplies and demands must be positive");

    let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let nodes = m + n + 1;
    let root = m + n;
    let art_cost = (m + n + 1) as f64 * max_cost + 1.0;
    let mut s = Solver {
        m,
        n,
        cost,
        art_cost,
        root,
        parent: vec![NONE; nodes],
        pred: vec![NONE; nodes],
        up: vec![false; nodes],
        flow: vec![0; nodes],
        pi: vec![0.0; nodes],
        depth: vec![0; nodes],
        first_child: vec![NONE; nodes],
        next_sib: vec![NONE; nodes],
        prev_sib: vec![NONE; nodes],
    };
    for v in 0..m + n {
        s.attach(v, root);
        s.pred[v] = m * n + v;
        s.depth[v] = 1;
        if v < m {
            s.up[v] = true;
            s.flow[v] = supply[v];
            s.pi[v] = -art_cost;
        } else {
            s.up[v] = false;
            s.flow[v] = demand[v - m];
            s.pi[v] = art_cost;
        }
    }

    let total = s.arc_count();
    let block = ((total as f64).sqrt().ceil() as usize).max(10).min(total);
    let eps = 1e-12 * (art_cost + 1.0);
    let mut next_arc = 0usize;
    let mut pivots = 0usize;
    loop {
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        while scanned < total {
            let a = next_arc;
            next_arc += 1;
            if next_arc == total {
                next_arc = 0;
            }
            let rc = s.reduced_cost(a);
            if rc < best_rc {
                best_rc = rc;
                best = a;
            }
            scanned += 1;
            in_block += 1;
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            break;
        }
        s.pivot(best);
        pivots += 1;
    }

    let mut flows = Vec::new();
    let mut total_cost = 0.0;
    for v in 0..m + n {
        let arc = s.pred[v];
        let f = s.flow[v];
        if arc < m * n {
            if f > 0 {
                total_cost += f as f64 * cost[arc];
                flows.push(FlowEntry { source: arc / n, sink: arc % n, flow: f });
            }
        } else {
            assert_eq!(f, 0, "artificial arc carries flow at optimum");
        }
    }
    flows.sort_by_key(|e| (e.source, e.sink));
    Solution { cost: total_cost, flows, pivots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::{Rng, SeedableRng};

    fn check_marginals(sol: &Solution, supply: &[i64], demand: &[i64]) {
        let mut rows = vec![0; supply.len()];
        let mut cols = vec![0; demand.len()];
        for e in &sol.flows {
            rows[e.source] += e.flow;
            cols[e.sink] += e.flow;
        }
        assert_eq!(rows, supply);
        assert_eq!(cols, demand);
    }

    #[test]
    fn two_by_two() {
        // points {0, 1} vs {0, 2}
        let cost = [0.0, 4.0, 1.0, 1.0];
        let sol = solve_transport(&[1, 1], &[1, 1], &cost);
        assert_eq!(sol.cost, 1.0);
        check_marginals(&sol, &[1, 1], &[1, 1]);
    }

    #[test]
    fn unequal_sizes_balance() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..50 {
            let m = rng.random_range(1..8);
            let n = rng.random_range(1..8);
            let cost: Vec<f64> = (0..m * n).map(|_| rng.random::<f64>()).collect();
            let supply = vec![n as i64; m];
            let demand = vec![m as i64; n];
            let sol = solve_transport(&supply, &demand, &cost);
            check_marginals(&sol, &supply, &demand);
            let recomputed: f64 = sol.flows.iter().map(|e| e.flow as f64 * cost[e.source * n + e.sink]).sum();
            assert!((recomputed - sol.cost).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_zero_costs() {
        let sol = solve_transport(&[3, 3, 3], &[3, 3, 3], &[0.0; 9]);
        assert_eq!(sol.cost, 0.0);
        check_marginals(&sol, &[3, 3, 3], &[3, 3, 3]);
    }
}
