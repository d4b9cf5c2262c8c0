//! Instance generators for tests and benchmarks: random unit-capacity
//! digraphs, structured max-flow families, random bipartite instances and
//! random fractional matchings/flows. All deterministic under a seed.

use crate::graph::{DirectedMultigraph, FlowAssignment};
use crate::reduction::BMatchingInstance;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random unit-capacity digraph with `n` vertices and up to `m` arcs
/// (self-loops skipped); source 0, sink n-1.
pub fn random_unit_digraph(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DirectedMultigraph {
    let mut arcs = Vec::with_capacity(m);
    for _ in 0..m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            arcs.push((u, v));
        }
    }
    let caps = vec![1; arcs.len()];
    DirectedMultigraph::with_capacities(n, arcs, caps)
}

/// Layered DAG: source, `layers` layers of `width` vertices, sink; unit
/// arcs between consecutive layers with the given density.
pub fn layered_dag(
    rng: &mut ChaCha8Rng,
    layers: usize,
    width: usize,
    density: f64,
) -> DirectedMultigraph {
    let n = 2 + layers * width;
    let s = 0;
    let t = n - 1;
    let vertex = |layer: usize, i: usize| 1 + layer * width + i;
    let mut arcs = Vec::new();
    for i in 0..width {
        arcs.push((s, vertex(0, i)));
    }
    for l in 0..layers.saturating_sub(1) {
        for i in 0..width {
            let mut any = false;
            for j in 0..width {
                if rng.gen_bool(density) {
                    arcs.push((vertex(l, i), vertex(l + 1, j)));
                    any = true;
                }
            }
            if !any {
                arcs.push((vertex(l, i), vertex(l + 1, rng.gen_range(0..width))));
            }
        }
    }
    for i in 0..width {
        arcs.push((vertex(layers - 1, i), t));
    }
    let caps = vec![1; arcs.len()];
    DirectedMultigraph::with_capacities(n, arcs, caps)
}

/// Random d-out-regular digraph (an expander-ish family), unit capacities.
pub fn random_regular_digraph(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DirectedMultigraph {
    let mut arcs = Vec::new();
    for u in 0..n {
        let mut used = vec![false; n];
        used[u] = true;
        let mut added = 0;
        while added < d.min(n - 1) {
            let v = rng.gen_range(0..n);
            if !used[v] {
                used[v] = true;
                arcs.push((u, v));
                added += 1;
            }
        }
    }
    let caps = vec![1; arcs.len()];
    DirectedMultigraph::with_capacities(n, arcs, caps)
}

/// `k` vertex-disjoint s-t paths of the given lengths, unit capacities.
pub fn parallel_paths(lengths: &[usize]) -> DirectedMultigraph {
    let interior: usize = lengths.iter().map(|&l| l.saturating_sub(1)).sum();
    let n = 2 + interior;
    let s = 0;
    let t = n - 1;
    let mut arcs = Vec::new();
    let mut next = 1;
    for &len in lengths {
        assert!(len >= 1);
        let mut prev = s;
        for _ in 0..len - 1 {
            arcs.push((prev, next));
            prev = next;
            next += 1;
        }
        arcs.push((prev, t));
    }
    let caps = vec![1; arcs.len()];
    DirectedMultigraph::with_capacities(n, arcs, caps)
}

/// Random bipartite graph with unit demands.
pub fn random_bipartite(
    rng: &mut ChaCha8Rng,
    n_p: usize,
    n_q: usize,
    density: f64,
) -> BMatchingInstance {
    let mut edges = Vec::new();
    for p in 0..n_p {
        for q in 0..n_q {
            if rng.gen_bool(density) {
                edges.push((p, q));
            }
        }
    }
    BMatchingInstance {
        b_p: vec![1; n_p],
        b_q: vec![1; n_q],
        edges,
    }
}

/// Random b-matching instance with demands up to `b_max`.
pub fn random_bmatching(
    rng: &mut ChaCha8Rng,
    n_p: usize,
    n_q: usize,
    density: f64,
    b_max: u64,
) -> BMatchingInstance {
    let mut edges = Vec::new();
    for p in 0..n_p {
        for q in 0..n_q {
            if rng.gen_bool(density) {
                edges.push((p, q));
            }
        }
    }
    BMatchingInstance {
        b_p: (0..n_p).map(|_| rng.gen_range(1..=b_max)).collect(),
        b_q: (0..n_q).map(|_| rng.gen_range(1..=b_max)).collect(),
        edges,
    }
}

/// Random tiny instance with balanced demand totals (for perfect-matching
/// decision tests against brute force).
pub fn random_tiny_balanced(rng: &mut ChaCha8Rng, cap_total: u64) -> BMatchingInstance {
    loop {
        let n_p = rng.gen_range(1..=3);
        let n_q = rng.gen_range(1..=3);
        let mut b_p: Vec<u64> = (0..n_p).map(|_| rng.gen_range(1..=3)).collect();
        let mut b_q: Vec<u64> = (0..n_q).map(|_| rng.gen_range(1..=3)).collect();
        let sp: u64 = b_p.iter().sum();
        let sq: u64 = b_q.iter().sum();
        if sp > sq {
            b_q[0] += sp - sq;
        } else {
            b_p[0] += sq - sp;
        }
        let inst = BMatchingInstance {
            b_p,
            b_q,
            edges: Vec::new(),
        };
        if inst.demand_total() > cap_total {
            continue;
        }
        let mut edges = Vec::new();
        for p in 0..n_p {
            for q in 0..n_q {
                if rng.gen_bool(0.6) {
                    edges.push((p, q));
                }
            }
        }
        return BMatchingInstance { edges, ..inst };
    }
}

/// Random feasible fractional b-matching of an instance: a random positive
/// vector scaled inside the feasible polytope.
pub fn random_fractional_matching(
    rng: &mut ChaCha8Rng,
    inst: &BMatchingInstance,
    max_entry: f64,
) -> Vec<f64> {
    let mut x: Vec<f64> = (0..inst.edge_count())
        .map(|_| rng.gen_range(0.0..max_entry))
        .collect();
    loop {
        let (dp, dq) = inst.degrees(&x);
        let mut worst = 1.0f64;
        for (p, &d) in dp.iter().enumerate() {
            if inst.b_p[p] > 0 {
                worst = worst.max(d / inst.b_p[p] as f64);
            } else if d > 0.0 {
                worst = f64::INFINITY;
            }
        }
        for (q, &d) in dq.iter().enumerate() {
            if inst.b_q[q] > 0 {
                worst = worst.max(d / inst.b_q[q] as f64);
            } else if d > 0.0 {
                worst = f64::INFINITY;
            }
        }
        if worst <= 1.0 {
            return x;
        }
        if worst.is_infinite() {
            for v in x.iter_mut() {
                *v = 0.0;
            }
            return x;
        }
        for v in x.iter_mut() {
            *v /= worst * 1.0000001;
        }
    }
}

/// Random feasible fractional s-t flow: a random scaling of a maximum
/// flow, optionally with some path flows damped individually.
pub fn random_fractional_flow(
    rng: &mut ChaCha8Rng,
    g: &DirectedMultigraph,
    s: usize,
    t: usize,
) -> Option<FlowAssignment> {
    let (value, flow) = crate::oracles::dinic_maxflow(g, s, t).ok()?;
    if value == 0 {
        return None;
    }
    let d = crate::graph::decompose_flow(g, &flow).ok()?;
    let mut f = vec![0.0; g.arc_count()];
    for path in &d.paths {
        let scale = rng.gen_range(0.1..1.0);
        for &a in &path.arcs {
            f[a] += path.amount * scale;
        }
    }
    Some(FlowAssignment::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = random_unit_digraph(&mut rng(7), 10, 30);
        let b = random_unit_digraph(&mut rng(7), 10, 30);
        assert_eq!(a.arcs(), b.arcs());
    }

    #[test]
    fn layered_dag_paths_exist() {
        let g = layered_dag(&mut rng(3), 3, 4, 0.5);
        let (v, _) = crate::oracles::dinic_maxflow(&g, 0, g.vertex_count() - 1).unwrap();
        assert!(v > 0);
    }

    #[test]
    fn parallel_paths_value_is_path_count() {
        let g = parallel_paths(&[1, 2, 3, 4]);
        let (v, _) = crate::oracles::dinic_maxflow(&g, 0, g.vertex_count() - 1).unwrap();
        assert_eq!(v, 4);
    }

    #[test]
    fn fractional_matchings_feasible() {
        let mut r = rng(11);
        for _ in 0..20 {
            let inst = random_bmatching(&mut r, 4, 4, 0.5, 8);
            let x = random_fractional_matching(&mut r, &inst, 4.0);
            assert!(inst.is_feasible(&x, 1e-9));
        }
    }

    #[test]
    fn fractional_flows_feasible() {
        let mut r = rng(13);
        for _ in 0..20 {
            let g = random_unit_digraph(&mut r, 8, 20);
            if let Some(f) = random_fractional_flow(&mut r, &g, 0, 7) {
                assert!(crate::graph::check_feasible(
                    &g,
                    &f,
                    crate::graph::FeasibilityMode::Directed,
                    1e-9
                )
                .unwrap());
            }
        }
    }
}
