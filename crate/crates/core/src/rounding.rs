//! Rounding fractional b-matchings and s-t flows to integral ones, and the
//! augmenting-path finisher that turns near-perfect integral b-matchings
//! into perfect ones (or certifies that none exists).

use crate::error::{Error, Result};
use crate::graph::{
    check_feasible, decompose_flow, st_flow_value, DirectedMultigraph, FeasibilityMode,
    FlowAssignment, VertexId,
};
use crate::reduction::{flow_to_matching, matching_to_flow, maxflow_to_bmatching, BMatchingInstance};

const SNAP: f64 = 1e-9;

/// Integral perfect matching inside the support of a fractional perfect
/// matching (all demands 1, every vertex fractional degree exactly 1).
///
/// Cycle canceling: every vertex touching a fractional edge has at least
/// two incident fractional edges, so the fractional support always
/// contains a cycle; shifting weight around it by the bottleneck kills at
/// least one fractional entry per round.
pub fn round_perfect(inst: &BMatchingInstance, x: &[f64]) -> Result<Vec<u64>> {
    if inst.n_p() != inst.n_q() {
        return Err(Error::UnbalancedSides {
            p_total: inst.n_p() as u64,
            q_total: inst.n_q() as u64,
        });
    }
    if inst.b_p.iter().chain(&inst.b_q).any(|&b| b != 1) {
        return Err(Error::InfeasibleFlow(
            "round_perfect requires unit demands".into(),
        ));
    }
    inst.check_perfect(x, SNAP)?;
    if x.iter().any(|&v| v < -SNAP || v > 1.0 + SNAP) {
        return Err(Error::InfeasibleFlow(
            "matching values outside [0, 1]".into(),
        ));
    }

    let mut w: Vec<f64> = x
        .iter()
        .map(|&v| {
            if v > 1.0 - SNAP {
                1.0
            } else if v < SNAP {
                0.0
            } else {
                v
            }
        })
        .collect();

    // Adjacency over fractional edges only, refreshed lazily.
    let n = inst.vertex_count();
    let is_frac = |v: f64| v > SNAP && v < 1.0 - SNAP;
    loop {
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut any = None;
        for (e, &(p, q)) in inst.edges.iter().enumerate() {
            if is_frac(w[e]) {
                incident[p].push(e);
                incident[inst.n_p() + q].push(e);
                any = Some(e);
            }
        }
        let Some(start_edge) = any else { break };

        // Walk fractional edges, never reusing the arrival edge, until a
        // vertex repeats; the suffix is an even cycle.
        let mut path_vertices = vec![inst.edges[start_edge].0];
        let mut path_edges: Vec<usize> = Vec::new();
        let mut seen_at = vec![usize::MAX; n];
        seen_at[path_vertices[0]] = 0;
        let cycle = loop {
            let v = *path_vertices.last().unwrap();
            let came_by = path_edges.last().copied();
            let e = *incident[v]
                .iter()
                .find(|&&e| is_frac(w[e]) && Some(e) != came_by)
                .expect("fractional vertex must have a second fractional edge");
            let (p, q) = inst.edges[e];
            let next = if v == p { inst.n_p() + q } else { p };
            path_edges.push(e);
            if seen_at[next] != usize::MAX {
                break &path_edges[seen_at[next]..];
            }
            seen_at[next] = path_edges.len();
            path_vertices.push(next);
        };

        // Alternate +theta / -theta around the cycle; even length in a
        // bipartite graph, so the shift preserves all degrees.
        debug_assert_eq!(cycle.len() % 2, 0);
        let mut up = f64::INFINITY; // room on even-position edges
        let mut down = f64::INFINITY; // weight on odd-position edges
        for (i, &e) in cycle.iter().enumerate() {
            if i % 2 == 0 {
                up = up.min(1.0 - w[e]);
                down = down.min(w[e]);
            } else {
                up = up.min(w[e]);
                down = down.min(1.0 - w[e]);
            }
        }
        let theta = up.min(down);
        let sign = if up <= down { 1.0 } else { -1.0 };
        for (i, &e) in cycle.iter().enumerate() {
            let dir = if i % 2 == 0 { sign } else { -sign };
            w[e] += dir * theta;
            if w[e] > 1.0 - SNAP {
                w[e] = 1.0;
            }
            if w[e] < SNAP {
                w[e] = 0.0;
            }
        }
    }

    let result: Vec<u64> = w.iter().map(|&v| if v > 0.5 { 1 } else { 0 }).collect();
    // Support containment and perfection.
    for (e, &r) in result.iter().enumerate() {
        if r == 1 && x[e] <= SNAP {
            return Err(Error::fault(
                "rounding-support",
                e,
                "rounded matching left the fractional support".to_string(),
            ));
        }
    }
    let as_f: Vec<f64> = result.iter().map(|&v| v as f64).collect();
    inst.check_perfect(&as_f, SNAP)?;
    Ok(result)
}

/// Greedy split of one side's weights into unit-capacity copies; each item
/// spans at most two copies.
fn split_side(weights: &[(usize, f64)], copies: usize) -> Vec<(usize, usize, f64)> {
    // (item, copy index, amount)
    let mut out = Vec::new();
    let mut copy = 0usize;
    let mut room = 1.0f64;
    for &(item, mut amount) in weights {
        while amount > SNAP {
            if copy >= copies {
                debug_assert!(amount <= SNAP * 16.0, "overflow beyond declared copies");
                break;
            }
            let take = amount.min(room);
            out.push((item, copy, take));
            amount -= take;
            room -= take;
            if room <= SNAP {
                copy += 1;
                room = 1.0;
            }
        }
    }
    out
}

/// Round a feasible fractional b-matching to an integral one of size
/// exactly `floor(|x|_1)`.
///
/// Pipeline: subtract integral parts; split demand->unit copies; pad with
/// dummy vertices to a perfect fractional matching; round it; strip the
/// dummies, re-add the integral parts and trim to the exact target size.
pub fn round_bmatching(inst: &BMatchingInstance, x: &[f64]) -> Result<Vec<u64>> {
    if x.len() != inst.edge_count() {
        return Err(Error::DimensionMismatch {
            what: "matching entries",
            expected: inst.edge_count(),
            got: x.len(),
        });
    }
    if !inst.is_feasible(x, 1e-7) {
        return Err(Error::InfeasibleFlow("fractional b-matching infeasible".into()));
    }
    let size_target = {
        let s: f64 = x.iter().sum();
        // guard against 2.9999999996 flooring to 2
        (s + 1e-7).floor() as u64
    };

    // (i) integral parts come off first.
    let mut base = vec![0u64; inst.edge_count()];
    let mut frac = vec![0.0f64; inst.edge_count()];
    let mut b_p = inst.b_p.clone();
    let mut b_q = inst.b_q.clone();
    for (e, &v) in x.iter().enumerate() {
        let mut whole = v.floor() as u64;
        let mut rest = v - whole as f64;
        if rest > 1.0 - SNAP {
            whole += 1;
            rest = 0.0;
        }
        if rest < SNAP {
            rest = 0.0;
        }
        base[e] = whole;
        frac[e] = rest;
        let (p, q) = inst.edges[e];
        b_p[p] -= whole.min(b_p[p]);
        b_q[q] -= whole.min(b_q[q]);
    }

    // (ii) split every remaining demand into unit copies. P side first,
    // then Q side; an edge ends up in at most four pieces.
    let p_copy_base: Vec<usize> = b_p
        .iter()
        .scan(0usize, |acc, &b| {
            let start = *acc;
            *acc += b as usize;
            Some(start)
        })
        .collect();
    let n_p_copies: usize = b_p.iter().sum::<u64>() as usize;
    let q_copy_base: Vec<usize> = b_q
        .iter()
        .scan(0usize, |acc, &b| {
            let start = *acc;
            *acc += b as usize;
            Some(start)
        })
        .collect();
    let n_q_copies: usize = b_q.iter().sum::<u64>() as usize;

    // split P side: per vertex, distribute incident fractional weights
    let mut p_pieces: Vec<(usize, usize, f64)> = Vec::new(); // (edge, p_copy, amount)
    for p in 0..inst.n_p() {
        let weights: Vec<(usize, f64)> = inst
            .edges
            .iter()
            .enumerate()
            .filter(|(e, &(ep, _))| ep == p && frac[*e] > SNAP)
            .map(|(e, _)| (e, frac[e]))
            .collect();
        for (edge, copy, amount) in split_side(&weights, b_p[p] as usize) {
            p_pieces.push((edge, p_copy_base[p] + copy, amount));
        }
    }
    // split Q side on the P-side pieces
    let mut pieces: Vec<(usize, usize, usize, f64)> = Vec::new(); // (edge, p_copy, q_copy, w)
    for q in 0..inst.n_q() {
        let weights: Vec<(usize, f64)> = p_pieces
            .iter()
            .enumerate()
            .filter(|(_, &(e, _, _))| inst.edges[e].1 == q)
            .map(|(i, &(_, _, w))| (i, w))
            .collect();
        for (piece_idx, copy, amount) in split_side(&weights, b_q[q] as usize) {
            let (edge, p_copy, _) = p_pieces[piece_idx];
            pieces.push((edge, p_copy, q_copy_base[q] + copy, amount));
        }
    }

    // (iii) dummy padding to a perfect fractional matching.
    let frac_size: f64 = pieces.iter().map(|&(_, _, _, w)| w).sum();
    let d_p = n_p_copies as f64 - frac_size;
    let d_q = n_q_copies as f64 - frac_size;
    let dummies_q = d_p.ceil() as usize; // dummies on the Q side absorb P deficit
    let dummies_p = d_q.ceil() as usize;

    let total_p = n_p_copies + dummies_p;
    let total_q = n_q_copies + dummies_q;
    let unit = BMatchingInstance {
        b_p: vec![1; total_p],
        b_q: vec![1; total_q],
        edges: Vec::new(),
    };
    let mut unit = unit;
    let mut values = Vec::new();
    // origin of each unit edge: Some(original edge) or None for dummy edges
    let mut origin: Vec<Option<usize>> = Vec::new();
    for &(edge, pc, qc, w) in &pieces {
        unit.edges.push((pc, qc));
        values.push(w);
        origin.push(Some(edge));
    }

    // greedy dummy assignment: fill dummies sequentially from vertex
    // deficits; each real vertex touches at most two dummies.
    let mut deg_p = vec![0.0f64; total_p];
    let mut deg_q = vec![0.0f64; total_q];
    for (i, &(pc, qc)) in unit.edges.iter().enumerate() {
        deg_p[pc] += values[i];
        deg_q[qc] += values[i];
    }
    let p_deficits: Vec<(usize, f64)> = (0..n_p_copies)
        .filter(|&pc| 1.0 - deg_p[pc] > SNAP)
        .map(|pc| (pc, 1.0 - deg_p[pc]))
        .collect();
    for (item, copy, amount) in split_side(&p_deficits, dummies_q) {
        unit.edges.push((item, n_q_copies + copy));
        values.push(amount);
        origin.push(None);
        deg_q[n_q_copies + copy] += amount;
    }
    let q_deficits: Vec<(usize, f64)> = (0..n_q_copies)
        .filter(|&qc| 1.0 - deg_q[qc] > SNAP)
        .map(|qc| (qc, 1.0 - deg_q[qc]))
        .collect();
    for (item, copy, amount) in split_side(&q_deficits, dummies_p) {
        unit.edges.push((n_p_copies + copy, item));
        values.push(amount);
        origin.push(None);
    }
    // recompute degrees including dummy assignments
    let mut deg_p = vec![0.0f64; total_p];
    let mut deg_q = vec![0.0f64; total_q];
    for (i, &(pc, qc)) in unit.edges.iter().enumerate() {
        deg_p[pc] += values[i];
        deg_q[qc] += values[i];
    }
    // the two leftover dummies (one per side) are matched to each other;
    // their deficits must agree
    let last_p_dummy = (n_p_copies..total_p).find(|&pc| 1.0 - deg_p[pc] > SNAP);
    let last_q_dummy = (n_q_copies..total_q).find(|&qc| 1.0 - deg_q[qc] > SNAP);
    match (last_p_dummy, last_q_dummy) {
        (Some(pd), Some(qd)) => {
            let def_p = 1.0 - deg_p[pd];
            let def_q = 1.0 - deg_q[qd];
            if (def_p - def_q).abs() > 1e-7 {
                return Err(Error::fault(
                    "dummy-deficits",
                    pd,
                    format!("leftover dummy deficits differ: {def_p} vs {def_q}"),
                ));
            }
            unit.edges.push((pd, qd));
            values.push(def_p);
            origin.push(None);
        }
        (None, None) => {}
        _ => {
            return Err(Error::fault(
                "dummy-deficits",
                0,
                "exactly one side has a leftover dummy".to_string(),
            ))
        }
    }

    // (iv) round the perfect fractional matching on the unit instance.
    let selected = if unit.edges.is_empty() {
        Vec::new()
    } else {
        round_perfect(&unit, &values)?
    };

    // (v) translate back, drop dummy edges, re-add integral parts.
    let mut result = base;
    for (i, &sel) in selected.iter().enumerate() {
        if sel == 1 {
            if let Some(edge) = origin[i] {
                result[edge] += 1;
            }
        }
    }

    // The dummy-dummy edge can push the count one above the target; trim.
    let mut size: u64 = result.iter().sum();
    if size < size_target {
        return Err(Error::fault(
            "rounding-size",
            0,
            format!("rounded size {size} below floor {size_target}"),
        ));
    }
    let mut e = 0;
    while size > size_target {
        if result[e] > 0 {
            result[e] -= 1;
            size -= 1;
        } else {
            e += 1;
        }
    }

    let as_f: Vec<f64> = result.iter().map(|&v| v as f64).collect();
    if !inst.is_feasible(&as_f, SNAP) {
        return Err(Error::fault(
            "rounding-feasibility",
            0,
            "integral rounding violates demands".to_string(),
        ));
    }
    Ok(result)
}

/// Round a feasible fractional s-t flow of value `F` to an integral
/// feasible flow of value exactly `floor(F)`.
pub fn round_flow(
    g: &DirectedMultigraph,
    f: &FlowAssignment,
    s: VertexId,
    t: VertexId,
) -> Result<FlowAssignment> {
    g.capacities().ok_or(Error::MissingCapacities)?;
    if !check_feasible(g, f, FeasibilityMode::Directed, 1e-7)? {
        return Err(Error::InfeasibleFlow("flow violates capacities".into()));
    }
    let value = st_flow_value(f, s, t, g, 1e-7)?;
    let floor_value = (value + 1e-7).floor();
    let fractional = (value - floor_value).abs() > 1e-7;

    // Pad to an integral target value by a unit s-t arc when needed.
    let (work_graph, work_flow, target) = if fractional {
        let mut arcs = g.arcs().to_vec();
        let mut caps = g.capacities().unwrap().to_vec();
        arcs.push((s, t));
        caps.push(1);
        let mut fv = f.0.clone();
        fv.push(floor_value + 1.0 - value);
        (
            DirectedMultigraph::with_capacities(g.vertex_count(), arcs, caps),
            FlowAssignment::new(fv),
            floor_value as u64 + 1,
        )
    } else {
        (g.clone(), f.clone(), floor_value as u64)
    };

    let enc = maxflow_to_bmatching(&work_graph, s, t, target)?;
    let x = flow_to_matching(&enc, &work_flow)?;
    let integral = round_bmatching(&enc.instance, &x)?;
    let as_f: Vec<f64> = integral.iter().map(|&v| v as f64).collect();
    enc.instance.check_perfect(&as_f, 1e-7)?;
    let mut rounded = matching_to_flow(&enc, &as_f)?;

    if fractional {
        let pad_arc = work_graph.arc_count() - 1;
        let pad_flow = rounded.0[pad_arc].round() as u64;
        rounded.0.truncate(g.arc_count());
        if pad_flow == 0 {
            // The rounding saturated a real path instead of the pad; drain
            // one unit along any s-t path of the support.
            let d = decompose_flow(g, &rounded)?;
            let path = d
                .paths
                .iter()
                .find(|p| p.amount >= 1.0 - 1e-9)
                .ok_or_else(|| {
                    Error::fault("round-flow-drain", 0, "no unit path to drain".to_string())
                })?;
            for &a in &path.arcs {
                rounded.0[a] -= 1.0;
            }
        }
    }

    for v in rounded.0.iter_mut() {
        *v = v.round();
    }
    if !check_feasible(g, &rounded, FeasibilityMode::Directed, 1e-9)? {
        return Err(Error::fault(
            "round-flow-feasibility",
            0,
            "rounded flow violates capacities".to_string(),
        ));
    }
    let got = st_flow_value(&rounded, s, t, g, 1e-9)?;
    if (got - floor_value).abs() > 1e-9 {
        return Err(Error::fault(
            "round-flow-value",
            0,
            format!("rounded value {got}, wanted {floor_value}"),
        ));
    }
    Ok(rounded)
}

/// Result of the augmenting-path finisher.
#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    /// The final (maximum) b-matching.
    pub x: Vec<u64>,
    pub perfect: bool,
    pub augmentations: usize,
}

/// Grow an integral feasible b-matching by augmenting paths until it is
/// perfect or provably cannot be.
pub fn augment_to_perfect(inst: &BMatchingInstance, x: &[u64]) -> Result<AugmentOutcome> {
    let as_f: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    if !inst.is_feasible(&as_f, SNAP) {
        return Err(Error::InfeasibleFlow("integral b-matching infeasible".into()));
    }
    let mut x = x.to_vec();
    let mut deg_p = vec![0u64; inst.n_p()];
    let mut deg_q = vec![0u64; inst.n_q()];
    for (e, &(p, q)) in inst.edges.iter().enumerate() {
        deg_p[p] += x[e];
        deg_q[q] += x[e];
    }
    let mut by_p: Vec<Vec<usize>> = vec![Vec::new(); inst.n_p()];
    let mut by_q: Vec<Vec<usize>> = vec![Vec::new(); inst.n_q()];
    for (e, &(p, q)) in inst.edges.iter().enumerate() {
        by_p[p].push(e);
        by_q[q].push(e);
    }

    let mut augmentations = 0usize;
    loop {
        let Some(start) = (0..inst.n_p()).find(|&p| deg_p[p] < inst.b_p[p]) else {
            break;
        };
        // Alternating DFS: forward over any edge (add a copy), backward
        // over positive edges (remove a copy). parent_edge[q] remembers the
        // forward edge, parent_back[p] the backward one.
        let mut visited_p = vec![false; inst.n_p()];
        let mut visited_q = vec![false; inst.n_q()];
        let mut parent_edge: Vec<usize> = vec![usize::MAX; inst.n_q()];
        let mut parent_back: Vec<usize> = vec![usize::MAX; inst.n_p()];
        visited_p[start] = true;
        let mut stack = vec![start];
        let mut found_q = None;
        'search: while let Some(p) = stack.pop() {
            for &e in &by_p[p] {
                let q = inst.edges[e].1;
                if visited_q[q] {
                    continue;
                }
                visited_q[q] = true;
                parent_edge[q] = e;
                if deg_q[q] < inst.b_q[q] {
                    found_q = Some(q);
                    break 'search;
                }
                for &e2 in &by_q[q] {
                    if x[e2] == 0 {
                        continue;
                    }
                    let p2 = inst.edges[e2].0;
                    if !visited_p[p2] {
                        visited_p[p2] = true;
                        parent_back[p2] = e2;
                        stack.push(p2);
                    }
                }
            }
        }
        match found_q {
            None => {
                // No augmenting path from an unsaturated vertex: maximum.
                let perfect = (0..inst.n_p()).all(|p| deg_p[p] == inst.b_p[p])
                    && (0..inst.n_q()).all(|q| deg_q[q] == inst.b_q[q]);
                return Ok(AugmentOutcome {
                    x,
                    perfect,
                    augmentations,
                });
            }
            Some(mut q) => {
                augmentations += 1;
                loop {
                    let e = parent_edge[q];
                    x[e] += 1;
                    let p = inst.edges[e].0;
                    deg_q[q] += 1;
                    deg_p[p] += 1;
                    if p == start || parent_back[p] == usize::MAX {
                        break;
                    }
                    let e2 = parent_back[p];
                    x[e2] -= 1;
                    deg_p[p] -= 1;
                    q = inst.edges[e2].1;
                    deg_q[q] -= 1;
                }
            }
        }
    }
    let perfect = (0..inst.n_q()).all(|q| deg_q[q] == inst.b_q[q]);
    Ok(AugmentOutcome {
        x,
        perfect,
        augmentations,
    })
}
