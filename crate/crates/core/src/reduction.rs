//! Reductions: maximum s-t flow to perfect b-matching, instance
//! normalization, and the b-matching to minimum-cost flow encoding that the
//! path follower actually solves.

use crate::error::{Error, Result};
use crate::graph::{
    check_feasible, cut_capacity, min_cut_from_max_flow, DirectedMultigraph, FeasibilityMode,
    FlowAssignment, VertexId,
};
use std::fmt::Write as _;

/// A bipartite b-matching instance. Demands may be zero; a zero-demand
/// vertex simply must stay unmatched.
#[derive(Debug, Clone, PartialEq)]
pub struct BMatchingInstance {
    pub b_p: Vec<u64>,
    pub b_q: Vec<u64>,
    /// Edges as (P index, Q index) pairs.
    pub edges: Vec<(usize, usize)>,
}

impl BMatchingInstance {
    pub fn n_p(&self) -> usize {
        self.b_p.len()
    }

    pub fn n_q(&self) -> usize {
        self.b_q.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.n_p() + self.n_q()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge thickness: `min(b_p, b_q)` of its endpoints.
    pub fn thickness(&self, e: usize) -> u64 {
        let (p, q) = self.edges[e];
        self.b_p[p].min(self.b_q[q])
    }

    pub fn total_thickness(&self) -> u64 {
        (0..self.edges.len()).map(|e| self.thickness(e)).sum()
    }

    pub fn demand_total(&self) -> u64 {
        self.b_p.iter().sum::<u64>() + self.b_q.iter().sum::<u64>()
    }

    /// Balanced means the total thickness is at most four times `|b|_1`.
    pub fn is_balanced(&self) -> bool {
        self.total_thickness() <= 4 * self.demand_total()
    }

    /// Fractional degree of every vertex under edge values `x`.
    pub fn degrees(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dp = vec![0.0; self.n_p()];
        let mut dq = vec![0.0; self.n_q()];
        for (e, &(p, q)) in self.edges.iter().enumerate() {
            dp[p] += x[e];
            dq[q] += x[e];
        }
        (dp, dq)
    }

    /// Whether `x` is a feasible fractional b-matching.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        if x.iter().any(|&v| v < -tol) {
            return false;
        }
        let (dp, dq) = self.degrees(x);
        dp.iter().zip(&self.b_p).all(|(d, &b)| *d <= b as f64 + tol)
            && dq.iter().zip(&self.b_q).all(|(d, &b)| *d <= b as f64 + tol)
    }

    /// Whether `x` saturates every vertex exactly.
    pub fn check_perfect(&self, x: &[f64], tol: f64) -> Result<()> {
        let (dp, dq) = self.degrees(x);
        for (p, (&d, &b)) in dp.iter().zip(&self.b_p).enumerate() {
            if (d - b as f64).abs() > tol {
                return Err(Error::NotPerfect {
                    vertex: p,
                    degree: d,
                    demand: b as f64,
                });
            }
        }
        for (q, (&d, &b)) in dq.iter().zip(&self.b_q).enumerate() {
            if (d - b as f64).abs() > tol {
                return Err(Error::NotPerfect {
                    vertex: self.n_p() + q,
                    degree: d,
                    demand: b as f64,
                });
            }
        }
        Ok(())
    }
}

/// The b-matching encoding of one max-flow feasibility question
/// "is there a feasible s-t flow of value F?", with enough bookkeeping to
/// translate flows to matchings and back.
#[derive(Debug, Clone)]
pub struct FlowEncoding {
    pub instance: BMatchingInstance,
    pub f_value: u64,
    /// The preprocessed graph (arcs into `s` and out of `t` removed).
    pub graph: DirectedMultigraph,
    /// Original arc id per kept arc.
    pub kept_arcs: Vec<usize>,
    /// Original arc ids that were dropped by preprocessing.
    pub removed_arcs: Vec<usize>,
    /// Arc count of the original graph.
    pub original_arc_count: usize,
    pub source: VertexId,
    pub sink: VertexId,
    /// P-side ids: p_e = e, p_v via this map, p_t explicit; Q symmetric.
    pub p_of_vertex: Vec<Option<usize>>,
    pub q_of_vertex: Vec<Option<usize>>,
    pub p_sink: usize,
    pub q_source: usize,
}

impl FlowEncoding {
    /// Edge id of the (p_e, q_e) pair for kept arc `e`.
    pub fn arc_edge(&self, e: usize) -> usize {
        e
    }

    /// Edge id of (q_tail(e), p_e) — or (q_s, p_e) when the tail is `s`.
    pub fn tail_edge(&self, e: usize) -> usize {
        self.graph.arc_count() + e
    }

    /// Edge id of (q_e, p_head(e)) — or (q_e, p_t) when the head is `t`.
    pub fn head_edge(&self, e: usize) -> usize {
        2 * self.graph.arc_count() + e
    }

    /// Edge id of (p_v, q_v) for an interior vertex.
    pub fn vertex_edge(&self, v: VertexId) -> Option<usize> {
        self.p_of_vertex[v]
            .map(|i| 3 * self.graph.arc_count() + (i - self.graph.arc_count()))
    }
}

fn out_in_capacity(g: &DirectedMultigraph, s: VertexId, t: VertexId) -> (u64, u64) {
    let caps = g.capacities().expect("capacities checked by caller");
    let mut out_s = 0;
    let mut in_t = 0;
    for (e, &(u, v)) in g.arcs().iter().enumerate() {
        if u == s {
            out_s += caps[e];
        }
        if v == t {
            in_t += caps[e];
        }
    }
    (out_s, in_t)
}

/// Encode "does g admit a feasible s-t flow of value F?" as a perfect
/// b-matching instance.
///
/// For each arc `e` two vertices `p_e`, `q_e` with demand `u_e` and an edge
/// between them; for each interior vertex `v` a pair `(p_v, q_v)` with
/// demands `incap(v)` / `outcap(v)` wired to the arcs at `v`; and the
/// special vertices `q_s`, `p_t` with demands `outcap(s) - F`,
/// `incap(t) - F`. Arcs entering `s` or leaving `t` carry no s-t flow and
/// are dropped first (the removed ids are reported back).
pub fn maxflow_to_bmatching(
    g: &DirectedMultigraph,
    s: VertexId,
    t: VertexId,
    f_value: u64,
) -> Result<FlowEncoding> {
    let caps = g.capacities().ok_or(Error::MissingCapacities)?;
    let mut kept_arcs = Vec::new();
    let mut removed_arcs = Vec::new();
    let mut arcs = Vec::new();
    let mut kept_caps = Vec::new();
    for (e, &(u, v)) in g.arcs().iter().enumerate() {
        if v == s || u == t {
            removed_arcs.push(e);
        } else {
            kept_arcs.push(e);
            arcs.push((u, v));
            kept_caps.push(caps[e]);
        }
    }
    let graph = DirectedMultigraph::with_capacities(g.vertex_count(), arcs, kept_caps);
    let caps = graph.capacities().unwrap().to_vec();
    let (out_s, in_t) = out_in_capacity(&graph, s, t);
    if f_value > out_s.min(in_t) {
        return Err(Error::FlowValueOutOfRange {
            value: f_value as i64,
            max: out_s.min(in_t) as i64,
        });
    }

    let m = graph.arc_count();
    let n = graph.vertex_count();

    // P side: p_e (ids 0..m), p_v for interior vertices, p_t last.
    // Q side: q_e (ids 0..m), q_v for interior vertices, q_s last.
    let mut b_p: Vec<u64> = caps.clone();
    let mut b_q: Vec<u64> = caps.clone();
    let mut p_of_vertex = vec![None; n];
    let mut q_of_vertex = vec![None; n];
    let mut incap = vec![0u64; n];
    let mut outcap = vec![0u64; n];
    for (e, &(u, v)) in graph.arcs().iter().enumerate() {
        outcap[u] += caps[e];
        incap[v] += caps[e];
    }
    for v in 0..n {
        if v != s && v != t {
            p_of_vertex[v] = Some(b_p.len());
            b_p.push(incap[v]);
            q_of_vertex[v] = Some(b_q.len());
            b_q.push(outcap[v]);
        }
    }
    let p_sink = b_p.len();
    b_p.push(in_t - f_value);
    let q_source = b_q.len();
    b_q.push(out_s - f_value);

    // Edges: (p_e,q_e), then tail edges, then head edges, then (p_v,q_v).
    let mut edges = Vec::with_capacity(3 * m + n.saturating_sub(2));
    for e in 0..m {
        edges.push((e, e));
    }
    for (e, &(u, _)) in graph.arcs().iter().enumerate() {
        let qu = if u == s { q_source } else { q_of_vertex[u].unwrap() };
        edges.push((e, qu));
    }
    for (e, &(_, v)) in graph.arcs().iter().enumerate() {
        let pv = if v == t { p_sink } else { p_of_vertex[v].unwrap() };
        edges.push((pv, e));
    }
    for v in 0..n {
        if let (Some(pv), Some(qv)) = (p_of_vertex[v], q_of_vertex[v]) {
            edges.push((pv, qv));
        }
    }

    Ok(FlowEncoding {
        instance: BMatchingInstance { b_p, b_q, edges },
        f_value,
        graph,
        kept_arcs,
        removed_arcs,
        original_arc_count: g.arc_count(),
        source: s,
        sink: t,
        p_of_vertex,
        q_of_vertex,
        p_sink,
        q_source,
    })
}

/// Turn a feasible s-t flow of value `F` (fractional allowed) into a
/// perfect fractional b-matching of the instance built for that `F`.
pub fn flow_to_matching(enc: &FlowEncoding, f: &FlowAssignment) -> Result<Vec<f64>> {
    let g = &enc.graph;
    if f.len() != enc.original_arc_count {
        return Err(Error::DimensionMismatch {
            what: "flow entries",
            expected: enc.original_arc_count,
            got: f.len(),
        });
    }
    let kept: Vec<f64> = enc.kept_arcs.iter().map(|&e| f.0[e]).collect();
    let kept = FlowAssignment::new(kept);
    if !check_feasible(g, &kept, FeasibilityMode::Directed, 1e-9)? {
        return Err(Error::InfeasibleFlow(
            "flow violates capacity constraints".into(),
        ));
    }
    let caps = g.capacities().unwrap();
    let mut x = vec![0.0; enc.instance.edge_count()];
    let mut outflow = vec![0.0; g.vertex_count()];
    for (e, &(u, _)) in g.arcs().iter().enumerate() {
        x[enc.arc_edge(e)] = kept.0[e];
        x[enc.tail_edge(e)] = caps[e] as f64 - kept.0[e];
        x[enc.head_edge(e)] = caps[e] as f64 - kept.0[e];
        outflow[u] += kept.0[e];
    }
    for v in 0..g.vertex_count() {
        if let Some(edge) = enc.vertex_edge(v) {
            x[edge] = outflow[v];
        }
    }
    enc.instance.check_perfect(&x, 1e-6)?;
    Ok(x)
}

/// Recover the s-t flow from a perfect b-matching of the encoding:
/// `f_e = x_{(p_e, q_e)}`, zero on arcs dropped by preprocessing.
pub fn matching_to_flow(enc: &FlowEncoding, x: &[f64]) -> Result<FlowAssignment> {
    if x.len() != enc.instance.edge_count() {
        return Err(Error::DimensionMismatch {
            what: "matching entries",
            expected: enc.instance.edge_count(),
            got: x.len(),
        });
    }
    enc.instance.check_perfect(x, 1e-6)?;
    let mut f = vec![0.0; enc.original_arc_count];
    for (e, &orig) in enc.kept_arcs.iter().enumerate() {
        f[orig] = x[enc.arc_edge(e)];
    }
    Ok(FlowAssignment::new(f))
}

/// Outcome of one perfect-matching decision.
#[derive(Debug, Clone)]
pub enum MatchOutcome {
    /// Witness: integral multiplicity per instance edge.
    Perfect(Vec<u64>),
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MaxFlowResult {
    pub value: u64,
    pub flow: FlowAssignment,
    pub cut: Vec<VertexId>,
    pub matcher_calls: usize,
}

/// Binary search for the maximum s-t flow value, using a perfect-b-matching
/// decider as the only subroutine. The search range is
/// `[0, min(outcap(s), incap(t))]`. Observed outcomes are audited for
/// monotonicity; a non-monotone matcher is an internal fault.
pub fn binary_search_maxflow<M>(
    g: &DirectedMultigraph,
    s: VertexId,
    t: VertexId,
    mut matcher: M,
) -> Result<MaxFlowResult>
where
    M: FnMut(&FlowEncoding) -> Result<MatchOutcome>,
{
    g.capacities().ok_or(Error::MissingCapacities)?;
    let enc0 = maxflow_to_bmatching(g, s, t, 0)?;
    let (out_s, in_t) = out_in_capacity(&enc0.graph, s, t);
    let upper = out_s.min(in_t);

    let mut lo = 0u64;
    let mut hi = upper;
    let mut best_witness: Option<(FlowEncoding, Vec<u64>)> = None;
    let mut calls = 0usize;
    let mut min_infeasible = u64::MAX;
    let mut max_feasible = 0u64;

    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        let enc = maxflow_to_bmatching(g, s, t, mid)?;
        calls += 1;
        match matcher(&enc)? {
            MatchOutcome::Perfect(w) => {
                max_feasible = max_feasible.max(mid);
                best_witness = Some((enc, w));
                lo = mid;
            }
            MatchOutcome::Infeasible => {
                min_infeasible = min_infeasible.min(mid);
                hi = mid - 1;
            }
        }
        if max_feasible >= min_infeasible {
            return Err(Error::fault(
                "matcher-monotonicity",
                calls,
                format!("perfect at {max_feasible} but infeasible at {min_infeasible}"),
            ));
        }
    }

    let value = lo;
    let flow = match best_witness {
        Some((enc, w)) if enc.f_value == value => {
            let x: Vec<f64> = w.iter().map(|&c| c as f64).collect();
            matching_to_flow(&enc, &x)?
        }
        _ => {
            // Either F* = 0 (no feasible probe was ever made) or the last
            // feasible witness was for a smaller value; re-probe at F*.
            if value == 0 {
                FlowAssignment::zero(g.arc_count())
            } else {
                let enc = maxflow_to_bmatching(g, s, t, value)?;
                calls += 1;
                match matcher(&enc)? {
                    MatchOutcome::Perfect(w) => {
                        let x: Vec<f64> = w.iter().map(|&c| c as f64).collect();
                        matching_to_flow(&enc, &x)?
                    }
                    MatchOutcome::Infeasible => {
                        return Err(Error::fault(
                            "matcher-monotonicity",
                            calls,
                            format!("value {value} accepted earlier but rejected on re-probe"),
                        ))
                    }
                }
            }
        }
    };

    let cut = min_cut_from_max_flow(g, &flow, s, t)?;
    let cap = cut_capacity(g, &cut)?;
    if cap != value {
        return Err(Error::fault(
            "maxflow-mincut",
            calls,
            format!("flow value {value} but cut capacity {cap}"),
        ));
    }
    Ok(MaxFlowResult {
        value,
        flow,
        cut,
        matcher_calls: calls,
    })
}

/// Result of padding an instance with complete bipartite 6x6 blocks.
#[derive(Debug, Clone)]
pub struct NormalizedInstance {
    pub instance: BMatchingInstance,
    /// Edge count of the original instance; its edges keep their ids.
    pub original_edges: usize,
    pub pad_blocks: usize,
}

/// Pad with isolated K_{6,6} blocks of unit demands until
/// `|b|_1 <= 2 * edge_count`. The original instance survives as an induced
/// sub-instance on the first `original_edges` edges; padding never breaks
/// balance and the padded part is always perfectly matchable.
pub fn normalize_instance(inst: &BMatchingInstance) -> NormalizedInstance {
    let b1 = inst.demand_total();
    let m = inst.edge_count() as u64;
    // Each block adds 12 to |b|_1 and 36 edges.
    let blocks = if b1 > 2 * m {
        (b1 - 2 * m).div_ceil(60) as usize
    } else {
        0
    };
    let mut out = inst.clone();
    for _ in 0..blocks {
        let p0 = out.n_p();
        let q0 = out.n_q();
        out.b_p.extend([1u64; 6]);
        out.b_q.extend([1u64; 6]);
        for i in 0..6 {
            for j in 0..6 {
                out.edges.push((p0 + i, q0 + j));
            }
        }
    }
    NormalizedInstance {
        original_edges: inst.edge_count(),
        pad_blocks: blocks,
        instance: out,
    }
}

/// Where an arc of the min-cost graph comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    /// One of the `d(e)` parallel copies encoding instance edge `edge`.
    Direct { edge: usize, copy: u32 },
    /// `(v, v*)` for a non-hub vertex v.
    ToHub { vertex: usize },
    /// `(v*, v)`.
    FromHub { vertex: usize },
}

/// The minimum-cost sigma-flow encoding of a perfect b-matching question:
/// one vertex per instance vertex plus a hub `v*`, `d(e)` unit-length
/// parallel arcs per instance edge, and unit-length arcs between every
/// vertex and the hub in both directions.
#[derive(Debug, Clone)]
pub struct MinCostInstance {
    pub graph: DirectedMultigraph,
    pub kinds: Vec<ArcKind>,
    /// Demand vector: `-b_p` at each supply vertex `s_p`, `+b_q` at each
    /// `t_q`, zero at the hub.
    pub sigma: Vec<f64>,
    pub hub: VertexId,
    pub n_p: usize,
    pub n_q: usize,
    /// `|b|_1` of the underlying instance.
    pub demand_total: u64,
    pub instance_edges: usize,
}

impl MinCostInstance {
    pub fn arc_count(&self) -> usize {
        self.graph.arc_count()
    }

    pub fn vertex_of_p(&self, p: usize) -> VertexId {
        p
    }

    pub fn vertex_of_q(&self, q: usize) -> VertexId {
        self.n_p + q
    }

    /// Arc ids (v -> hub, hub -> v) owned by non-hub vertex `v`.
    pub fn hub_arcs_of_vertex(&self, v: VertexId) -> (usize, usize) {
        // Arc layout: all direct copies first, then per vertex (to, from).
        let direct = self.arc_count() - 2 * (self.n_p + self.n_q);
        (direct + 2 * v, direct + 2 * v + 1)
    }
}

/// Build the min-cost encoding. Errors when the two sides' demand totals
/// differ (no perfect b-matching can exist then).
pub fn bmatching_to_mincost(inst: &BMatchingInstance) -> Result<MinCostInstance> {
    let p_total: u64 = inst.b_p.iter().sum();
    let q_total: u64 = inst.b_q.iter().sum();
    if p_total != q_total {
        return Err(Error::UnbalancedSides { p_total, q_total });
    }
    let n_p = inst.n_p();
    let n_q = inst.n_q();
    let hub = n_p + n_q;
    let mut arcs = Vec::new();
    let mut kinds = Vec::new();
    for (e, &(p, q)) in inst.edges.iter().enumerate() {
        let d = inst.thickness(e);
        for copy in 0..d {
            arcs.push((p, n_p + q));
            kinds.push(ArcKind::Direct {
                edge: e,
                copy: copy as u32,
            });
        }
    }
    for v in 0..(n_p + n_q) {
        arcs.push((v, hub));
        kinds.push(ArcKind::ToHub { vertex: v });
        arcs.push((hub, v));
        kinds.push(ArcKind::FromHub { vertex: v });
    }
    let mut sigma = vec![0.0; hub + 1];
    for (p, &b) in inst.b_p.iter().enumerate() {
        sigma[p] = -(b as f64); // supplies b_p
    }
    for (q, &b) in inst.b_q.iter().enumerate() {
        sigma[n_p + q] = b as f64; // absorbs b_q
    }
    Ok(MinCostInstance {
        graph: DirectedMultigraph::new(hub + 1, arcs),
        kinds,
        sigma,
        hub,
        n_p,
        n_q,
        demand_total: p_total + q_total,
        instance_edges: inst.edge_count(),
    })
}

/// A fractional b-matching extracted from a near-optimal min-cost flow.
#[derive(Debug, Clone)]
pub enum NearPerfect {
    Matching { x: Vec<f64>, size: f64 },
    Infeasible { cost: f64, threshold: f64 },
}

/// Read a fractional b-matching off a feasible sigma-flow near the optimum.
///
/// `lengths` are the current (possibly stretched) arc lengths and
/// `total_stretch` the cumulative length increase; if the flow's cost
/// exceeds `|b|_1/2 + total_stretch + 1/2` no perfect b-matching exists.
/// Otherwise direct-arc flows are aggregated per instance edge and trimmed
/// to per-vertex feasibility (flow routed through the hub can leave tiny
/// overflows).
pub fn extract_near_perfect(
    inst: &BMatchingInstance,
    mincost: &MinCostInstance,
    f: &FlowAssignment,
    lengths: &[f64],
    total_stretch: f64,
) -> Result<NearPerfect> {
    if f.len() != mincost.arc_count() {
        return Err(Error::DimensionMismatch {
            what: "flow entries",
            expected: mincost.arc_count(),
            got: f.len(),
        });
    }
    if f.0.iter().any(|&v| v < -1e-7) {
        return Err(Error::InfeasibleFlow("negative arc flow".into()));
    }
    let cost: f64 = f.0.iter().zip(lengths.iter()).map(|(a, b)| a * b).sum();
    let threshold = mincost.demand_total as f64 / 2.0 + total_stretch + 0.5 + 1e-6;
    if cost > threshold {
        return Ok(NearPerfect::Infeasible { cost, threshold });
    }

    let mut x = vec![0.0; inst.edge_count()];
    for (a, kind) in mincost.kinds.iter().enumerate() {
        if let ArcKind::Direct { edge, .. } = kind {
            x[*edge] += f.0[a].max(0.0);
        }
    }
    // Trim per-vertex overflow, largest incident value first.
    let mut by_vertex_p: Vec<Vec<usize>> = vec![Vec::new(); inst.n_p()];
    let mut by_vertex_q: Vec<Vec<usize>> = vec![Vec::new(); inst.n_q()];
    for (e, &(p, q)) in inst.edges.iter().enumerate() {
        by_vertex_p[p].push(e);
        by_vertex_q[q].push(e);
    }
    let (mut dp, mut dq) = inst.degrees(&x);
    for p in 0..inst.n_p() {
        if dp[p] > inst.b_p[p] as f64 {
            let mut order = by_vertex_p[p].clone();
            order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap());
            for e in order {
                let over = dp[p] - inst.b_p[p] as f64;
                if over <= 0.0 {
                    break;
                }
                let cut = over.min(x[e]);
                x[e] -= cut;
                let (pp, qq) = inst.edges[e];
                dp[pp] -= cut;
                dq[qq] -= cut;
            }
        }
    }
    for q in 0..inst.n_q() {
        if dq[q] > inst.b_q[q] as f64 {
            let mut order = by_vertex_q[q].clone();
            order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap());
            for e in order {
                let over = dq[q] - inst.b_q[q] as f64;
                if over <= 0.0 {
                    break;
                }
                let cut = over.min(x[e]);
                x[e] -= cut;
                let (pp, qq) = inst.edges[e];
                dp[pp] -= cut;
                dq[qq] -= cut;
            }
        }
    }
    debug_assert!(inst.is_feasible(&x, 1e-6));
    let size: f64 = x.iter().sum();
    Ok(NearPerfect::Matching { x, size })
}

/// Canonical text form of a b-matching instance:
/// `p bmatch nP nQ m`, demand lines `d p|q <index> <b>` (1-based), edge
/// lines `e <p> <q>` (1-based), in index order. Emit and parse are exact
/// inverses.
pub fn emit_bmatch(inst: &BMatchingInstance) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "p bmatch {} {} {}",
        inst.n_p(),
        inst.n_q(),
        inst.edge_count()
    )
    .unwrap();
    for (i, b) in inst.b_p.iter().enumerate() {
        writeln!(s, "d p {} {}", i + 1, b).unwrap();
    }
    for (i, b) in inst.b_q.iter().enumerate() {
        writeln!(s, "d q {} {}", i + 1, b).unwrap();
    }
    for &(p, q) in &inst.edges {
        writeln!(s, "e {} {}", p + 1, q + 1).unwrap();
    }
    s
}

pub fn parse_bmatch(text: &str) -> Result<BMatchingInstance> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut b_p = Vec::new();
    let mut b_q = Vec::new();
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let err = |msg: &str| Error::Parse(format!("line {}: {}", lineno + 1, msg));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("p") => {
                if it.next() != Some("bmatch") {
                    return Err(err("expected `p bmatch nP nQ m`"));
                }
                let np = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad nP"))?;
                let nq = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad nQ"))?;
                let m = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad m"))?;
                header = Some((np, nq, m));
                b_p = vec![0u64; np];
                b_q = vec![0u64; nq];
            }
            Some("d") => {
                let (np, nq, _) = header.ok_or_else(|| err("demand before problem line"))?;
                let side = it.next().ok_or_else(|| err("missing side"))?;
                let idx: usize = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad index"))?;
                let b: u64 = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad demand"))?;
                match side {
                    "p" if idx >= 1 && idx <= np => b_p[idx - 1] = b,
                    "q" if idx >= 1 && idx <= nq => b_q[idx - 1] = b,
                    _ => return Err(err("demand index out of range")),
                }
            }
            Some("e") => {
                let (np, nq, _) = header.ok_or_else(|| err("edge before problem line"))?;
                let p: usize = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad edge endpoint"))?;
                let q: usize = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad edge endpoint"))?;
                if p < 1 || p > np || q < 1 || q > nq {
                    return Err(err("edge endpoint out of range"));
                }
                edges.push((p - 1, q - 1));
            }
            _ => return Err(err("unknown line tag")),
        }
    }
    let (_, _, m) = header.ok_or_else(|| Error::Parse("missing problem line".into()))?;
    if edges.len() != m {
        return Err(Error::Parse(format!(
            "edge count mismatch: declared {m}, found {}",
            edges.len()
        )));
    }
    Ok(BMatchingInstance { b_p, b_q, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::st_flow_value;
    use crate::oracles::dinic_maxflow;

    fn single_arc() -> DirectedMultigraph {
        DirectedMultigraph::with_capacities(2, vec![(0, 1)], vec![1])
    }

    #[test]
    fn single_arc_demands() {
        let enc = maxflow_to_bmatching(&single_arc(), 0, 1, 1).unwrap();
        assert_eq!(enc.instance.b_p[0], 1);
        assert_eq!(enc.instance.b_q[0], 1);
        assert_eq!(enc.instance.b_q[enc.q_source], 0);
        assert_eq!(enc.instance.b_p[enc.p_sink], 0);
    }

    #[test]
    fn f_zero_leaves_source_capacity() {
        let g = DirectedMultigraph::with_capacities(
            3,
            vec![(0, 1), (0, 1), (1, 2)],
            vec![1, 1, 2],
        );
        let enc = maxflow_to_bmatching(&g, 0, 2, 0).unwrap();
        assert_eq!(enc.instance.b_q[enc.q_source], 2);
        assert_eq!(enc.instance.b_p[enc.p_sink], 2);
    }

    #[test]
    fn instance_counts_match_construction() {
        // Diamond with a chord.
        let g = DirectedMultigraph::with_capacities(
            4,
            vec![(0, 1), (0, 2), (1, 3), (2, 3), (1, 2)],
            vec![1; 5],
        );
        let enc = maxflow_to_bmatching(&g, 0, 3, 2).unwrap();
        let (m, n) = (5, 4);
        assert_eq!(enc.instance.vertex_count(), 2 * (m + n - 1));
        assert_eq!(enc.instance.edge_count(), 3 * m + n - 2);
        assert!(enc.instance.is_balanced());
    }

    #[test]
    fn f_out_of_range_rejected() {
        assert!(matches!(
            maxflow_to_bmatching(&single_arc(), 0, 1, 2),
            Err(Error::FlowValueOutOfRange { .. })
        ));
    }

    #[test]
    fn preprocessing_removes_and_logs() {
        let g = DirectedMultigraph::with_capacities(
            3,
            vec![(0, 1), (1, 0), (2, 1), (1, 2)],
            vec![1; 4],
        );
        let enc = maxflow_to_bmatching(&g, 0, 2, 1).unwrap();
        assert_eq!(enc.removed_arcs, vec![1, 2]);
        assert_eq!(enc.kept_arcs, vec![0, 3]);
    }

    #[test]
    fn flow_matching_roundtrip_unit_path() {
        let g = DirectedMultigraph::with_capacities(3, vec![(0, 1), (1, 2)], vec![1, 1]);
        let enc = maxflow_to_bmatching(&g, 0, 2, 1).unwrap();
        let f = FlowAssignment::new(vec![1.0, 1.0]);
        let x = flow_to_matching(&enc, &f).unwrap();
        enc.instance.check_perfect(&x, 1e-9).unwrap();
        let back = matching_to_flow(&enc, &x).unwrap();
        assert_eq!(back.0, f.0);
    }

    #[test]
    fn zero_flow_maps_to_perfect_matching() {
        let g = DirectedMultigraph::with_capacities(
            4,
            vec![(0, 1), (1, 2), (2, 3), (1, 3)],
            vec![1, 2, 1, 1],
        );
        let enc = maxflow_to_bmatching(&g, 0, 3, 0).unwrap();
        let x = flow_to_matching(&enc, &FlowAssignment::zero(4)).unwrap();
        enc.instance.check_perfect(&x, 1e-9).unwrap();
    }

    #[test]
    fn fractional_flow_maps_to_fractional_perfect_matching() {
        // Two parallel 2-arc paths carrying half a unit each, F = 1.
        let g = DirectedMultigraph::with_capacities(
            4,
            vec![(0, 1), (1, 3), (0, 2), (2, 3)],
            vec![1; 4],
        );
        let enc = maxflow_to_bmatching(&g, 0, 3, 1).unwrap();
        let f = FlowAssignment::new(vec![0.5, 0.5, 0.5, 0.5]);
        let x = flow_to_matching(&enc, &f).unwrap();
        enc.instance.check_perfect(&x, 1e-9).unwrap();
        let back = matching_to_flow(&enc, &x).unwrap();
        assert_eq!(back.0, f.0);
    }

    #[test]
    fn imperfect_matching_rejected() {
        let enc = maxflow_to_bmatching(&single_arc(), 0, 1, 1).unwrap();
        let x = vec![0.0; enc.instance.edge_count()];
        assert!(matches!(
            matching_to_flow(&enc, &x),
            Err(Error::NotPerfect { .. })
        ));
    }

    #[test]
    fn feasibility_equivalence_brute_force() {
        // Perfect matching exists at F iff a feasible s-t flow of value F
        // exists; cross-checked with the exhaustive matcher where small
        // enough and with Dinic everywhere.
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let n = rng.gen_range(3..=6);
            let m = rng.gen_range(2..=8);
            let mut arcs = Vec::new();
            for _ in 0..m {
                let u = rng.gen_range(0..n);
                let mut v = rng.gen_range(0..n);
                while v == u {
                    v = rng.gen_range(0..n);
                }
                arcs.push((u, v));
            }
            let g = DirectedMultigraph::with_capacities(n, arcs, vec![1; m]);
            let (fstar, _) = dinic_maxflow(&g, 0, n - 1).unwrap();
            let enc_probe = maxflow_to_bmatching(&g, 0, n - 1, 0).unwrap();
            let (out_s, in_t) = out_in_capacity(&enc_probe.graph, 0, n - 1);
            for f_val in 0..=out_s.min(in_t) {
                let enc = maxflow_to_bmatching(&g, 0, n - 1, f_val).unwrap();
                if enc.instance.demand_total() <= 16 {
                    let perfect = crate::oracles::brute_force_perfect_bmatching(
                        enc.instance.n_p(),
                        enc.instance.n_q(),
                        &enc.instance.b_p,
                        &enc.instance.b_q,
                        &enc.instance.edges,
                    )
                    .unwrap()
                    .is_some();
                    assert_eq!(perfect, f_val <= fstar, "F={f_val}, F*={fstar}");
                }
            }
        }
    }

    fn dinic_matcher(enc: &FlowEncoding) -> Result<MatchOutcome> {
        let (v, mut fl) = dinic_maxflow(&enc.graph, enc.source, enc.sink)?;
        if v < enc.f_value {
            return Ok(MatchOutcome::Infeasible);
        }
        // Drain surplus along source-to-sink paths to hit exactly F.
        let mut excess = v - enc.f_value;
        while excess > 0 {
            let d = crate::graph::decompose_flow(&enc.graph, &fl)?;
            let p = &d.paths[0];
            for &a in &p.arcs {
                fl.0[a] -= 1.0;
            }
            excess -= 1;
        }
        let mut full = vec![0.0; enc.original_arc_count];
        for (e, &orig) in enc.kept_arcs.iter().enumerate() {
            full[orig] = fl.0[e];
        }
        let x = flow_to_matching(enc, &FlowAssignment::new(full))?;
        Ok(MatchOutcome::Perfect(
            x.iter().map(|&v| v.round() as u64).collect(),
        ))
    }

    #[test]
    fn binary_search_with_dinic_backed_matcher() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for _ in 0..40 {
            let n = rng.gen_range(3..=8);
            let m = rng.gen_range(2..=14);
            let mut arcs = Vec::new();
            for _ in 0..m {
                let u = rng.gen_range(0..n);
                let mut v = rng.gen_range(0..n);
                while v == u {
                    v = rng.gen_range(0..n);
                }
                arcs.push((u, v));
            }
            let g = DirectedMultigraph::with_capacities(n, arcs, vec![1; m]);
            let (want, _) = dinic_maxflow(&g, 0, n - 1).unwrap();
            let result = binary_search_maxflow(&g, 0, n - 1, dinic_matcher).unwrap();
            assert_eq!(result.value, want);
            let val = st_flow_value(&result.flow, 0, n - 1, &g, 1e-9).unwrap();
            assert_eq!(val.round() as u64, want);
            assert_eq!(cut_capacity(&g, &result.cut).unwrap(), want);
            // call budget: ceil(log2 |u|_1) + 1
            let u1: u64 = g.capacities().unwrap().iter().sum();
            let budget = (u1.max(1) as f64).log2().ceil() as usize + 1;
            assert!(
                result.matcher_calls <= budget.max(1) + 1,
                "{} calls for |u|={u1}",
                result.matcher_calls
            );
        }
    }

    #[test]
    fn binary_search_disconnected_and_parallel() {
        let g = DirectedMultigraph::with_capacities(3, vec![(1, 2)], vec![1]);
        let r = binary_search_maxflow(&g, 0, 2, |_| Ok(MatchOutcome::Infeasible)).unwrap();
        assert_eq!(r.value, 0);

        let k = 5;
        let g = DirectedMultigraph::with_capacities(2, vec![(0, 1); k], vec![1; k]);
        let r = binary_search_maxflow(&g, 0, 1, dinic_matcher).unwrap();
        assert_eq!(r.value, k as u64);
    }

    #[test]
    fn normalization_ratios_and_equivalence() {
        // Sparse instance with |b|_1 = 6m forces padding.
        let inst = BMatchingInstance {
            b_p: vec![3, 3],
            b_q: vec![3, 3],
            edges: vec![(0, 0), (1, 1)],
        };
        assert!(inst.is_balanced());
        let norm = normalize_instance(&inst);
        let out = &norm.instance;
        assert!(out.demand_total() <= 2 * out.edge_count() as u64);
        assert!(out.is_balanced());
        assert_eq!(norm.original_edges, 2);
        assert!(norm.pad_blocks > 0);
        // Padding is perfectly matchable on its own: block demands are 1
        // and each block is complete bipartite.

        let ok = BMatchingInstance {
            b_p: vec![1, 1],
            b_q: vec![1, 1],
            edges: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        };
        let norm2 = normalize_instance(&ok);
        assert_eq!(norm2.instance, ok);
        assert_eq!(norm2.pad_blocks, 0);
    }

    #[test]
    fn mincost_construction_counts() {
        let inst = BMatchingInstance {
            b_p: vec![1],
            b_q: vec![1],
            edges: vec![(0, 0)],
        };
        let mc = bmatching_to_mincost(&inst).unwrap();
        assert_eq!(mc.arc_count(), 1 + 4);
        assert_eq!(mc.graph.vertex_count(), 3);
        assert_eq!(mc.sigma, vec![-1.0, 1.0, 0.0]);
        let (to, from) = mc.hub_arcs_of_vertex(0);
        assert_eq!(mc.graph.arcs()[to], (0, mc.hub));
        assert_eq!(mc.graph.arcs()[from], (mc.hub, 0));
        let (to_q, from_q) = mc.hub_arcs_of_vertex(mc.vertex_of_q(0));
        assert_eq!(mc.graph.arcs()[to_q], (1, mc.hub));
        assert_eq!(mc.graph.arcs()[from_q], (mc.hub, 1));
    }

    #[test]
    fn mincost_parallel_copies_match_thickness() {
        let inst = BMatchingInstance {
            b_p: vec![2, 3],
            b_q: vec![2, 3],
            edges: vec![(0, 0), (0, 1), (1, 1)],
        };
        let mc = bmatching_to_mincost(&inst).unwrap();
        for (e, _) in inst.edges.iter().enumerate() {
            let copies = mc
                .kinds
                .iter()
                .filter(|k| matches!(k, ArcKind::Direct { edge, .. } if *edge == e))
                .count() as u64;
            assert_eq!(copies, inst.thickness(e));
        }
        assert!(
            mc.arc_count() as u64
                <= 2 * inst.vertex_count() as u64 + inst.total_thickness()
        );
    }

    #[test]
    fn mincost_rejects_unbalanced_sides() {
        let inst = BMatchingInstance {
            b_p: vec![2],
            b_q: vec![1],
            edges: vec![(0, 0)],
        };
        assert!(matches!(
            bmatching_to_mincost(&inst),
            Err(Error::UnbalancedSides { .. })
        ));
    }

    #[test]
    fn extract_threshold_rule() {
        let inst = BMatchingInstance {
            b_p: vec![1],
            b_q: vec![1],
            edges: vec![(0, 0)],
        };
        let mc = bmatching_to_mincost(&inst).unwrap();
        let lengths = vec![1.0; mc.arc_count()];
        // All flow through the hub: cost 2 above the 0.5 + 0.5 threshold.
        let (to, _) = mc.hub_arcs_of_vertex(0);
        let (_, from_q) = mc.hub_arcs_of_vertex(mc.vertex_of_q(0));
        let mut f = vec![0.0; mc.arc_count()];
        f[to] = 1.0;
        f[from_q] = 1.0;
        let got =
            extract_near_perfect(&inst, &mc, &FlowAssignment::new(f), &lengths, 0.0).unwrap();
        assert!(matches!(got, NearPerfect::Infeasible { .. }));

        // Optimal direct routing extracts the perfect matching.
        let mut f = vec![0.0; mc.arc_count()];
        f[0] = 1.0;
        let got =
            extract_near_perfect(&inst, &mc, &FlowAssignment::new(f), &lengths, 0.0).unwrap();
        match got {
            NearPerfect::Matching { x, size } => {
                assert_eq!(x, vec![1.0]);
                assert_eq!(size, 1.0);
            }
            _ => panic!("expected matching"),
        }
    }

    #[test]
    fn bmatch_format_roundtrip() {
        let inst = BMatchingInstance {
            b_p: vec![2, 1],
            b_q: vec![1, 2],
            edges: vec![(0, 0), (0, 1), (1, 1)],
        };
        let text = emit_bmatch(&inst);
        let parsed = parse_bmatch(&text).unwrap();
        assert_eq!(parsed, inst);
        assert_eq!(emit_bmatch(&parsed), text);
    }

    #[test]
    fn bmatch_format_rejects_malformed() {
        assert!(parse_bmatch("d p 1 2\n").is_err());
        assert!(parse_bmatch("p bmatch 1 1 1\ne 1 2\n").is_err());
        assert!(parse_bmatch("p bmatch 1 1 2\ne 1 1\n").is_err());
    }
}
