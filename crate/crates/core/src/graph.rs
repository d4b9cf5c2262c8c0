//! Directed multigraphs, sigma-flows, feasibility predicates, flow
//! decomposition and cut extraction.
//!
//! Demands follow the excess convention: `sigma_v = inflow(v) - outflow(v)`.
//! An s-t flow of value `F` has demand `F * chi_{s,t}` where `chi` is `-1`
//! at `s` and `+1` at `t`.

use crate::error::{Error, Result};
use std::fmt::Write as _;

pub type VertexId = usize;
pub type ArcId = usize;

/// A directed multigraph with dense vertex and arc ids.
///
/// Parallel arcs are kept as distinct ids; several constructions in this
/// crate rely on multiplicity not being collapsed. Self-loops are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedMultigraph {
    n: usize,
    arcs: Vec<(VertexId, VertexId)>,
    capacities: Option<Vec<u64>>,
}

impl DirectedMultigraph {
    pub fn new(n: usize, arcs: Vec<(VertexId, VertexId)>) -> Self {
        for &(u, v) in &arcs {
            assert!(u < n && v < n, "arc endpoint out of range");
            assert_ne!(u, v, "self-loops are not allowed");
        }
        DirectedMultigraph {
            n,
            arcs,
            capacities: None,
        }
    }

    pub fn with_capacities(n: usize, arcs: Vec<(VertexId, VertexId)>, caps: Vec<u64>) -> Self {
        assert_eq!(arcs.len(), caps.len(), "one capacity per arc");
        let mut g = Self::new(n, arcs);
        g.capacities = Some(caps);
        g
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[(VertexId, VertexId)] {
        &self.arcs
    }

    pub fn tail(&self, e: ArcId) -> VertexId {
        self.arcs[e].0
    }

    pub fn head(&self, e: ArcId) -> VertexId {
        self.arcs[e].1
    }

    pub fn capacities(&self) -> Option<&[u64]> {
        self.capacities.as_deref()
    }

    pub fn capacity(&self, e: ArcId) -> Option<u64> {
        self.capacities.as_ref().map(|c| c[e])
    }

    /// Arc ids leaving each vertex.
    pub fn out_arcs(&self) -> Vec<Vec<ArcId>> {
        let mut out = vec![Vec::new(); self.n];
        for (e, &(u, _)) in self.arcs.iter().enumerate() {
            out[u].push(e);
        }
        out
    }

    /// Arc ids entering each vertex.
    pub fn in_arcs(&self) -> Vec<Vec<ArcId>> {
        let mut inc = vec![Vec::new(); self.n];
        for (e, &(_, v)) in self.arcs.iter().enumerate() {
            inc[v].push(e);
        }
        inc
    }

    /// Per-vertex excess `inflow - outflow` of a flow vector.
    pub fn excess(&self, f: &FlowAssignment) -> Vec<f64> {
        let mut ex = vec![0.0; self.n];
        for (e, &(u, v)) in self.arcs.iter().enumerate() {
            ex[u] -= f.0[e];
            ex[v] += f.0[e];
        }
        ex
    }

    /// Plain-text edge list, one `id tail head [cap]` line per arc.
    pub fn edge_list_dump(&self) -> String {
        let mut s = String::new();
        for (e, &(u, v)) in self.arcs.iter().enumerate() {
            match self.capacity(e) {
                Some(c) => writeln!(s, "{e} {u} {v} {c}").unwrap(),
                None => writeln!(s, "{e} {u} {v}").unwrap(),
            }
        }
        s
    }
}

/// Per-vertex demand; entries sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector(pub Vec<f64>);

impl DemandVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if sum.abs() > 1e-9 {
            return Err(Error::UnbalancedComponentDemand { vertex: 0, sum });
        }
        Ok(DemandVector(values))
    }

    pub fn zero(n: usize) -> Self {
        DemandVector(vec![0.0; n])
    }

    /// `F * chi_{s,t}`: `-F` at the source, `+F` at the sink.
    pub fn st(n: usize, s: VertexId, t: VertexId, value: f64) -> Self {
        let mut v = vec![0.0; n];
        v[s] = -value;
        v[t] = value;
        DemandVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-arc flow values. Negative entries are meaningful only in
/// undirected-projection contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAssignment(pub Vec<f64>);

impl FlowAssignment {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(values.iter().all(|x| x.is_finite()), "flow must be finite");
        FlowAssignment(values)
    }

    pub fn zero(m: usize) -> Self {
        FlowAssignment(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Whether `f` conserves the demand `sigma`: at every vertex,
/// `inflow - outflow = sigma_v` within `tol`.
pub fn check_sigma_flow(
    g: &DirectedMultigraph,
    f: &FlowAssignment,
    sigma: &DemandVector,
    tol: f64,
) -> Result<bool> {
    if f.len() != g.arc_count() {
        return Err(Error::DimensionMismatch {
            what: "flow entries",
            expected: g.arc_count(),
            got: f.len(),
        });
    }
    if sigma.len() != g.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "demand entries",
            expected: g.vertex_count(),
            got: sigma.len(),
        });
    }
    let ex = g.excess(f);
    Ok(ex
        .iter()
        .zip(sigma.0.iter())
        .all(|(e, s)| (e - s).abs() <= tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityMode {
    /// `0 <= f_e <= u_e`.
    Directed,
    /// `|f_e| <= u_e`; reverse flow along the orientation is allowed.
    Undirected,
}

/// Capacity feasibility of a flow vector.
pub fn check_feasible(
    g: &DirectedMultigraph,
    f: &FlowAssignment,
    mode: FeasibilityMode,
    tol: f64,
) -> Result<bool> {
    let caps = g.capacities().ok_or(Error::MissingCapacities)?;
    if f.len() != g.arc_count() {
        return Err(Error::DimensionMismatch {
            what: "flow entries",
            expected: g.arc_count(),
            got: f.len(),
        });
    }
    Ok(f.0.iter().zip(caps.iter()).all(|(&fe, &ue)| match mode {
        FeasibilityMode::Directed => fe >= -tol && fe <= ue as f64 + tol,
        FeasibilityMode::Undirected => fe.abs() <= ue as f64 + tol,
    }))
}

/// Value of an s-t flow: the net out-flow of `s`.
///
/// Errors if any vertex other than `s`, `t` has net imbalance beyond `tol`.
pub fn st_flow_value(
    f: &FlowAssignment,
    s: VertexId,
    t: VertexId,
    g: &DirectedMultigraph,
    tol: f64,
) -> Result<f64> {
    if f.len() != g.arc_count() {
        return Err(Error::DimensionMismatch {
            what: "flow entries",
            expected: g.arc_count(),
            got: f.len(),
        });
    }
    let ex = g.excess(f);
    for (v, &e) in ex.iter().enumerate() {
        if v != s && v != t && e.abs() > tol {
            return Err(Error::NotStFlow { vertex: v, excess: e });
        }
    }
    if (ex[s] + ex[t]).abs() > tol {
        return Err(Error::NotStFlow {
            vertex: t,
            excess: ex[s] + ex[t],
        });
    }
    Ok(-ex[s])
}

/// One extracted path or cycle with its flow amount.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowComponent {
    /// Arc ids in order along the walk.
    pub arcs: Vec<ArcId>,
    pub amount: f64,
}

/// Decomposition of a nonnegative flow into source-to-sink paths and cycles.
#[derive(Debug, Clone)]
pub struct FlowDecomposition {
    pub paths: Vec<FlowComponent>,
    pub cycles: Vec<FlowComponent>,
}

impl FlowDecomposition {
    /// Re-superpose the components into a flow vector.
    pub fn reconstruct(&self, m: usize) -> FlowAssignment {
        let mut f = vec![0.0; m];
        for c in self.paths.iter().chain(self.cycles.iter()) {
            for &e in &c.arcs {
                f[e] += c.amount;
            }
        }
        FlowAssignment(f)
    }
}

/// Decompose a nonnegative flow into paths (surplus vertex to deficit
/// vertex) and cycles by repeated walks on the positive support, removing
/// the bottleneck arc each time. Deterministic: the lowest-id usable arc is
/// taken at every step.
pub fn decompose_flow(g: &DirectedMultigraph, f: &FlowAssignment) -> Result<FlowDecomposition> {
    if f.len() != g.arc_count() {
        return Err(Error::DimensionMismatch {
            what: "flow entries",
            expected: g.arc_count(),
            got: f.len(),
        });
    }
    if let Some(&bad) = f.0.iter().find(|&&x| x < -1e-9) {
        return Err(Error::InfeasibleFlow(format!(
            "decompose_flow needs a nonnegative flow, found {bad}"
        )));
    }

    let mut rem: Vec<f64> = f.0.clone();
    let scale = f.0.iter().cloned().fold(1.0_f64, f64::max);
    let cutoff = 1e-12 * scale;

    let mut out = g.out_arcs();
    // Per-vertex cursor into the out-arc lists, so a walk never rescans
    // exhausted arcs and the total work stays near-linear per extraction.
    let mut cursor = vec![0usize; g.vertex_count()];

    let mut excess = g.excess(&FlowAssignment(rem.clone()));
    let mut paths = Vec::new();
    let mut cycles = Vec::new();

    // Sort out-arc lists so the walk is deterministic by arc id.
    for list in out.iter_mut() {
        list.sort_unstable();
    }

    let next_arc = |v: VertexId, rem: &[f64], out: &[Vec<ArcId>], cursor: &mut [usize]| -> Option<ArcId> {
        while cursor[v] < out[v].len() {
            let e = out[v][cursor[v]];
            if rem[e] > cutoff {
                return Some(e);
            }
            cursor[v] += 1;
        }
        None
    };

    loop {
        // Prefer walks starting at surplus vertices (excess < 0 means the
        // vertex emits flow); any remaining support is pure circulation.
        let start = (0..g.vertex_count())
            .find(|&v| excess[v] < -1e-9 && next_arc(v, &rem, &out, &mut cursor).is_some());
        let (start, want_path) = match start {
            Some(v) => (v, true),
            None => {
                let v = (0..g.vertex_count())
                    .find(|&v| next_arc(v, &rem, &out, &mut cursor).is_some());
                match v {
                    Some(v) => (v, false),
                    None => break,
                }
            }
        };

        // Walk forward until a deficit vertex (for paths) or a repeat
        // vertex (cycle) is hit.
        let mut walk: Vec<ArcId> = Vec::new();
        let mut seen_at = vec![usize::MAX; g.vertex_count()];
        let mut v = start;
        seen_at[v] = 0;
        let stop_vertex = loop {
            if want_path && excess[v] > 1e-9 && !walk.is_empty() {
                break None;
            }
            let e = match next_arc(v, &rem, &out, &mut cursor) {
                Some(e) => e,
                None => {
                    // Dead end: conservation must be violated.
                    return Err(Error::ConservationViolated {
                        vertex: v,
                        residual: excess[v],
                    });
                }
            };
            walk.push(e);
            v = g.head(e);
            if seen_at[v] != usize::MAX {
                break Some(v);
            }
            seen_at[v] = walk.len();
        };

        match stop_vertex {
            None => {
                let amount = walk
                    .iter()
                    .map(|&e| rem[e])
                    .fold(f64::INFINITY, f64::min)
                    .min(-excess[start])
                    .min(excess[v]);
                for &e in &walk {
                    rem[e] -= amount;
                }
                excess[start] += amount;
                excess[v] -= amount;
                paths.push(FlowComponent { arcs: walk, amount });
            }
            Some(repeat) => {
                let cycle_start = seen_at[repeat];
                let cycle: Vec<ArcId> = walk[cycle_start..].to_vec();
                let amount = cycle.iter().map(|&e| rem[e]).fold(f64::INFINITY, f64::min);
                for &e in &cycle {
                    rem[e] -= amount;
                }
                cycles.push(FlowComponent {
                    arcs: cycle,
                    amount,
                });
                // The prefix of the walk is untouched; cursors may now point
                // at drained arcs, which next_arc skips lazily.
            }
        }
        for c in cursor.iter_mut() {
            *c = 0;
        }
    }

    Ok(FlowDecomposition { paths, cycles })
}

/// Minimum s-t cut from an integral maximum flow: the vertices reachable
/// from `s` in the residual graph.
pub fn min_cut_from_max_flow(
    g: &DirectedMultigraph,
    f: &FlowAssignment,
    s: VertexId,
    t: VertexId,
) -> Result<Vec<VertexId>> {
    let caps = g.capacities().ok_or(Error::MissingCapacities)?;
    let tol = 1e-9;
    let mut adj: Vec<Vec<VertexId>> = vec![Vec::new(); g.vertex_count()];
    for (e, &(u, v)) in g.arcs().iter().enumerate() {
        if f.0[e] < caps[e] as f64 - tol {
            adj[u].push(v); // residual forward capacity
        }
        if f.0[e] > tol {
            adj[v].push(u); // residual backward capacity
        }
    }
    let mut seen = vec![false; g.vertex_count()];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    if seen[t] {
        return Err(Error::InfeasibleFlow(
            "sink reachable in residual graph: flow is not maximum".into(),
        ));
    }
    Ok((0..g.vertex_count()).filter(|&v| seen[v]).collect())
}

/// Capacity of a cut given as a vertex set containing `s`.
pub fn cut_capacity(g: &DirectedMultigraph, cut: &[VertexId]) -> Result<u64> {
    let caps = g.capacities().ok_or(Error::MissingCapacities)?;
    let mut inside = vec![false; g.vertex_count()];
    for &v in cut {
        inside[v] = true;
    }
    Ok(g.arcs()
        .iter()
        .enumerate()
        .filter(|(_, &(u, v))| inside[u] && !inside[v])
        .map(|(e, _)| caps[e])
        .sum())
}
