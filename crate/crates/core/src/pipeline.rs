//! End-to-end drivers: the perfect-matching decider built from the path
//! follower plus rounding plus augmenting paths, the binary-search
//! max-flow solver on top of it, and the maximum b-matching driver.

use crate::accel::accelerated_solve;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::graph::{cut_capacity, min_cut_from_max_flow, DirectedMultigraph, FlowAssignment};
use crate::ipm::basic_path_following;
use crate::oracles::dinic_maxflow;
use crate::reduction::{
    binary_search_maxflow, bmatching_to_mincost, extract_near_perfect, normalize_instance,
    BMatchingInstance, FlowEncoding, MatchOutcome, NearPerfect,
};
use crate::report::{Record, Telemetry};
use crate::rounding::{augment_to_perfect, round_bmatching};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Basic,
    Accelerated,
    Dinic,
}

impl std::str::FromStr for SolveMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "basic" => Ok(SolveMode::Basic),
            "accelerated" => Ok(SolveMode::Accelerated),
            "dinic" => Ok(SolveMode::Dinic),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMode::Basic => "basic",
            SolveMode::Accelerated => "accelerated",
            SolveMode::Dinic => "dinic",
        })
    }
}

#[derive(Debug, Default, Clone)]
pub struct PipelineStats {
    pub iterations: usize,
    pub boosts: usize,
    pub matcher_calls: usize,
    pub light_violations: usize,
    pub theory_faults: usize,
    pub empirical_step_constant: Option<f64>,
}

/// Decide perfect b-matching on one instance via the interior-point
/// pipeline: normalize, encode as min-cost flow, path-follow, extract the
/// near-perfect fractional matching, round, finish with augmenting paths.
pub fn decide_perfect_bmatching(
    instance: &BMatchingInstance,
    cfg: &Config,
    mode: SolveMode,
    telemetry: &Telemetry,
    stats: &mut PipelineStats,
) -> Result<MatchOutcome> {
    if instance.b_p.iter().sum::<u64>() != instance.b_q.iter().sum::<u64>() {
        return Ok(MatchOutcome::Infeasible);
    }
    let norm = normalize_instance(instance);
    let inst = &norm.instance;
    let mc = bmatching_to_mincost(inst)?;
    let params = crate::accel::SmoothnessParams::new(mc.arc_count(), cfg);
    telemetry.push(Record::Header {
        mode: mode.to_string(),
        n: inst.vertex_count(),
        m: inst.edge_count(),
        n_hat: mc.graph.vertex_count(),
        m_hat: mc.arc_count(),
        gamma_hat: cfg.gamma_hat,
        c_energy: cfg.c_energy,
        c_incr: cfg.c_incr,
        c_decr: cfg.c_decr,
        theta: params.theta,
        lambda_hat: params.lambda_hat,
        boost_budget: params.boost_budget,
        demand_total: mc.demand_total,
    });

    let (sol, total_stretch) = match mode {
        SolveMode::Basic => {
            let (sol, follow) = basic_path_following(&mc, cfg, telemetry)?;
            stats.iterations += follow.iterations;
            stats.empirical_step_constant = Some(
                stats
                    .empirical_step_constant
                    .unwrap_or(0.0)
                    .max(follow.empirical_step_constant),
            );
            (sol, 0.0)
        }
        SolveMode::Accelerated => {
            let (sol, accel) = accelerated_solve(&mc, cfg, telemetry)?;
            stats.iterations += accel.iterations;
            stats.boosts += accel.boosts;
            stats.light_violations += accel.light_violations;
            stats.theory_faults += accel.theory_faults;
            (sol, accel.total_length_increase)
        }
        SolveMode::Dinic => {
            return Err(Error::Parse(
                "the matching decider has no dinic mode".into(),
            ))
        }
    };

    let flow = FlowAssignment::new(sol.flow.clone());
    match extract_near_perfect(inst, &mc, &flow, &sol.lengths, total_stretch)? {
        NearPerfect::Infeasible { .. } => Ok(MatchOutcome::Infeasible),
        NearPerfect::Matching { x, .. } => {
            let integral = round_bmatching(inst, &x)?;
            let out = augment_to_perfect(inst, &integral)?;
            if out.perfect {
                Ok(MatchOutcome::Perfect(
                    out.x[..norm.original_edges].to_vec(),
                ))
            } else {
                Ok(MatchOutcome::Infeasible)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxFlowAnswer {
    pub value: u64,
    pub flow: FlowAssignment,
    pub cut: Vec<usize>,
    pub stats: PipelineStats,
    pub wall_ms: u64,
}

/// Maximum s-t flow and minimum cut through the selected mode. The
/// emitted flow and cut are always cross-verified (value equals cut
/// capacity) before returning.
pub fn maxflow_pipeline(
    g: &DirectedMultigraph,
    s: usize,
    t: usize,
    cfg: &Config,
    mode: SolveMode,
    telemetry: &Telemetry,
) -> Result<MaxFlowAnswer> {
    let started = Instant::now();
    let mut stats = PipelineStats::default();
    let (value, flow, cut) = match mode {
        SolveMode::Dinic => {
            let (value, flow) = dinic_maxflow(g, s, t)?;
            let cut = min_cut_from_max_flow(g, &flow, s, t)?;
            let cap = cut_capacity(g, &cut)?;
            if cap != value {
                return Err(Error::fault(
                    "maxflow-mincut",
                    0,
                    format!("flow {value} vs cut {cap}"),
                ));
            }
            (value, flow, cut)
        }
        SolveMode::Basic | SolveMode::Accelerated => {
            let result = binary_search_maxflow(g, s, t, |enc: &FlowEncoding| {
                stats.matcher_calls += 1;
                decide_perfect_bmatching(&enc.instance, cfg, mode, telemetry, &mut stats)
            })?;
            (result.value, result.flow, result.cut)
        }
    };
    let wall_ms = started.elapsed().as_millis() as u64;
    let faults = telemetry
        .records()
        .iter()
        .filter(|r| matches!(r, Record::Fault { .. }))
        .count();
    telemetry.push(Record::Summary {
        f_star: Some(value),
        cut_capacity: Some(cut_capacity(g, &cut)?),
        matching_size: None,
        iterations: stats.iterations,
        boosts: stats.boosts,
        matcher_calls: stats.matcher_calls,
        wall_ms,
        faults,
        empirical_step_constant: stats.empirical_step_constant,
    });
    Ok(MaxFlowAnswer {
        value,
        flow,
        cut,
        stats,
        wall_ms,
    })
}

#[derive(Debug, Clone)]
pub struct MatchingAnswer {
    pub size: u64,
    /// Multiplicity per instance edge.
    pub x: Vec<u64>,
    pub stats: PipelineStats,
    pub wall_ms: u64,
}

/// Encode a maximum b-matching problem as a max-flow instance: source to
/// every P vertex with capacity `b_p`, an arc of capacity `d(e)` per edge,
/// every Q vertex to the sink with capacity `b_q`.
pub fn matching_flow_network(inst: &BMatchingInstance) -> (DirectedMultigraph, usize, usize) {
    let np = inst.n_p();
    let nq = inst.n_q();
    let s = 0usize;
    let t = 1 + np + nq;
    let mut arcs = Vec::new();
    let mut caps = Vec::new();
    for (p, &b) in inst.b_p.iter().enumerate() {
        arcs.push((s, 1 + p));
        caps.push(b);
    }
    for (e, &(p, q)) in inst.edges.iter().enumerate() {
        arcs.push((1 + p, 1 + np + q));
        caps.push(inst.thickness(e));
    }
    for (q, &b) in inst.b_q.iter().enumerate() {
        arcs.push((1 + np + q, t));
        caps.push(b);
    }
    (
        DirectedMultigraph::with_capacities(2 + np + nq, arcs, caps),
        s,
        t,
    )
}

/// Maximum-cardinality b-matching through the flow pipeline.
pub fn matching_pipeline(
    inst: &BMatchingInstance,
    cfg: &Config,
    mode: SolveMode,
    telemetry: &Telemetry,
) -> Result<MatchingAnswer> {
    let started = Instant::now();
    let (g, s, t) = matching_flow_network(inst);
    let answer = maxflow_pipeline(&g, s, t, cfg, mode, telemetry)?;
    let np = inst.n_p();
    let x: Vec<u64> = (0..inst.edge_count())
        .map(|e| answer.flow.0[np + e].round() as u64)
        .collect();
    let size: u64 = x.iter().sum();
    if size != answer.value {
        return Err(Error::fault(
            "matching-size",
            0,
            format!("edge multiplicities sum to {size}, flow value {}", answer.value),
        ));
    }
    let as_f: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    if !inst.is_feasible(&as_f, 1e-9) {
        return Err(Error::fault(
            "matching-feasibility",
            0,
            "recovered matching violates demands".to_string(),
        ));
    }
    let wall_ms = started.elapsed().as_millis() as u64;
    telemetry.push(Record::Summary {
        f_star: None,
        cut_capacity: None,
        matching_size: Some(size),
        iterations: answer.stats.iterations,
        boosts: answer.stats.boosts,
        matcher_calls: answer.stats.matcher_calls,
        wall_ms,
        faults: 0,
        empirical_step_constant: answer.stats.empirical_step_constant,
    });
    Ok(MatchingAnswer {
        size,
        x,
        stats: answer.stats,
        wall_ms,
    })
}
