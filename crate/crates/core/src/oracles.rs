//! Independent reference solvers.
//!
//! These are deliberately implemented with different algorithmic families
//! than the main pipeline, so agreement between the two is evidence rather
//! than tautology. Correctness anchors only; no attention paid to speed.

use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, FlowAssignment, VertexId};
use std::collections::VecDeque;

/// Dinic's blocking-flow algorithm on integer capacities.
///
/// Returns the maximum flow value and an integral flow vector. The result
/// carries its own certificate: the sink is unreachable in the residual
/// graph on return.
pub fn dinic_maxflow(
    g: &DirectedMultigraph,
    s: VertexId,
    t: VertexId,
) -> Result<(u64, FlowAssignment)> {
    let caps = g.capacities().ok_or(Error::MissingCapacities)?;
    let n = g.vertex_count();
    let m = g.arc_count();

    // Forward/backward residual arcs, interleaved: arc e -> slots 2e, 2e+1.
    let mut to = Vec::with_capacity(2 * m);
    let mut cap = Vec::with_capacity(2 * m);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(u, v)) in g.arcs().iter().enumerate() {
        adj[u].push(to.len());
        to.push(v);
        cap.push(caps[e] as i64);
        adj[v].push(to.len());
        to.push(u);
        cap.push(0);
    }

    let mut level = vec![-1i32; n];
    let mut iter = vec![0usize; n];
    let mut total = 0u64;

    loop {
        level.iter_mut().for_each(|l| *l = -1);
        level[s] = 0;
        let mut q = VecDeque::new();
        q.push_back(s);
        while let Some(v) = q.pop_front() {
            for &slot in &adj[v] {
                if cap[slot] > 0 && level[to[slot]] < 0 {
                    level[to[slot]] = level[v] + 1;
                    q.push_back(to[slot]);
                }
            }
        }
        if level[t] < 0 {
            break;
        }
        iter.iter_mut().for_each(|i| *i = 0);
        loop {
            let pushed = dfs(s, t, i64::MAX, &adj, &to, &mut cap, &level, &mut iter);
            if pushed == 0 {
                break;
            }
            total += pushed as u64;
        }
    }

    let flow: Vec<f64> = (0..m).map(|e| cap[2 * e + 1] as f64).collect();
    Ok((total, FlowAssignment::new(flow)))
}

fn dfs(
    v: usize,
    t: usize,
    limit: i64,
    adj: &[Vec<usize>],
    to: &[usize],
    cap: &mut [i64],
    level: &[i32],
    iter: &mut [usize],
) -> i64 {
    if v == t {
        return limit;
    }
    while iter[v] < adj[v].len() {
        let slot = adj[v][iter[v]];
        let w = to[slot];
        if cap[slot] > 0 && level[w] == level[v] + 1 {
            let d = dfs(w, t, limit.min(cap[slot]), adj, to, cap, level, iter);
            if d > 0 {
                cap[slot] -= d;
                cap[slot ^ 1] += d;
                return d;
            }
        }
        iter[v] += 1;
    }
    0
}

/// An undirected bipartite graph for the matching oracles: edges between
/// left vertices `0..n_left` and right vertices `0..n_right`.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    pub n_left: usize,
    pub n_right: usize,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct MatchingResult {
    /// Matched right vertex per left vertex.
    pub pair_left: Vec<Option<usize>>,
    /// Matched left vertex per right vertex.
    pub pair_right: Vec<Option<usize>>,
    pub size: usize,
    /// Koenig vertex cover (left ids, right ids) of the same size.
    pub cover_left: Vec<usize>,
    pub cover_right: Vec<usize>,
}

/// Hopcroft-Karp maximum bipartite matching with a Koenig cover certificate.
pub fn hopcroft_karp(g: &BipartiteGraph) -> MatchingResult {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); g.n_left];
    for &(u, v) in &g.edges {
        assert!(u < g.n_left && v < g.n_right);
        adj[u].push(v);
    }
    let mut pair_left: Vec<Option<usize>> = vec![None; g.n_left];
    let mut pair_right: Vec<Option<usize>> = vec![None; g.n_right];
    let mut dist = vec![usize::MAX; g.n_left];

    loop {
        // BFS layers over free left vertices.
        let mut q = VecDeque::new();
        for u in 0..g.n_left {
            if pair_left[u].is_none() {
                dist[u] = 0;
                q.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                match pair_right[v] {
                    None => found = true,
                    Some(u2) => {
                        if dist[u2] == usize::MAX {
                            dist[u2] = dist[u] + 1;
                            q.push_back(u2);
                        }
                    }
                }
            }
        }
        if !found {
            break;
        }
        for u in 0..g.n_left {
            if pair_left[u].is_none() {
                augment(u, &adj, &mut pair_left, &mut pair_right, &mut dist);
            }
        }
    }

    // Koenig cover from the final layering: Z = left vertices reachable by
    // alternating paths from free left vertices; cover = (L \ Z) u (R n Z).
    let mut reach_left = vec![false; g.n_left];
    let mut reach_right = vec![false; g.n_right];
    let mut q = VecDeque::new();
    for u in 0..g.n_left {
        if pair_left[u].is_none() {
            reach_left[u] = true;
            q.push_back(u);
        }
    }
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if pair_left[u] == Some(v) {
                continue;
            }
            if !reach_right[v] {
                reach_right[v] = true;
                if let Some(u2) = pair_right[v] {
                    if !reach_left[u2] {
                        reach_left[u2] = true;
                        q.push_back(u2);
                    }
                }
            }
        }
    }
    let size = pair_left.iter().filter(|p| p.is_some()).count();
    MatchingResult {
        cover_left: (0..g.n_left).filter(|&u| !reach_left[u]).collect(),
        cover_right: (0..g.n_right).filter(|&v| reach_right[v]).collect(),
        pair_left,
        pair_right,
        size,
    }
}

fn augment(
    u: usize,
    adj: &[Vec<usize>],
    pair_left: &mut [Option<usize>],
    pair_right: &mut [Option<usize>],
    dist: &mut [usize],
) -> bool {
    for i in 0..adj[u].len() {
        let v = adj[u][i];
        let ok = match pair_right[v] {
            None => true,
            Some(u2) => {
                dist[u2] == dist[u] + 1 && augment(u2, adj, pair_left, pair_right, dist)
            }
        };
        if ok {
            pair_left[u] = Some(v);
            pair_right[v] = Some(u);
            return true;
        }
    }
    dist[u] = usize::MAX;
    false
}

/// Exhaustive perfect b-matching decision for tiny instances.
///
/// The instance is given by side sizes, integer demands and an edge list;
/// `|b|_1` must be at most 16. Returns a witness multiset (edge id ->
/// multiplicity) when a perfect b-matching exists.
pub fn brute_force_perfect_bmatching(
    n_left: usize,
    n_right: usize,
    b_left: &[u64],
    b_right: &[u64],
    edges: &[(usize, usize)],
) -> Result<Option<Vec<u64>>> {
    let total: u64 = b_left.iter().sum::<u64>() + b_right.iter().sum::<u64>();
    if total > 16 {
        return Err(Error::BruteForceCap { total });
    }
    if b_left.iter().sum::<u64>() != b_right.iter().sum::<u64>() {
        return Ok(None);
    }
    assert_eq!(b_left.len(), n_left);
    assert_eq!(b_right.len(), n_right);

    let mut mult = vec![0u64; edges.len()];
    let mut def_left: Vec<u64> = b_left.to_vec();
    let mut def_right: Vec<u64> = b_right.to_vec();
    if search(0, edges, &mut mult, &mut def_left, &mut def_right) {
        Ok(Some(mult))
    } else {
        Ok(None)
    }
}

fn search(
    u: usize,
    edges: &[(usize, usize)],
    mult: &mut [u64],
    def_left: &mut [u64],
    def_right: &mut [u64],
) -> bool {
    // Saturate left vertices one at a time; enumerate which incident edge
    // takes the next unit of u's demand.
    if u == def_left.len() {
        return def_right.iter().all(|&d| d == 0);
    }
    if def_left[u] == 0 {
        return search(u + 1, edges, mult, def_left, def_right);
    }
    for (e, &(a, b)) in edges.iter().enumerate() {
        if a != u || def_right[b] == 0 {
            continue;
        }
        mult[e] += 1;
        def_left[u] -= 1;
        def_right[b] -= 1;
        if search(u, edges, mult, def_left, def_right) {
            return true;
        }
        mult[e] -= 1;
        def_left[u] += 1;
        def_right[b] += 1;
    }
    false
}
