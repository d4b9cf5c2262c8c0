//! The primal-dual central-path follower.
//!
//! State is a triple (f, s, nu) of positive arc flows, positive slacks and
//! measures >= 1, with `mu_e = f_e s_e` and `mu_hat = sum(mu) / sum(nu)`.
//! One improvement step performs a descent guided by the electrical flow
//! associated with the solution (resistances `s_e / f_e`), followed by a
//! centering correction driven by a second electrical solve. Every law the
//! analysis relies on is re-checked numerically after each step; a
//! violation is a fault, not a warning.

use crate::config::Config;
use crate::electrical::{LaplacianStructure, Resistances};
use crate::error::{Error, Result};
use crate::reduction::MinCostInstance;
use crate::report::{Record, Telemetry};
use std::sync::Arc;

/// Primal-dual state over some arc universe.
#[derive(Debug, Clone)]
pub struct PrimalDualSolution {
    pub flow: Vec<f64>,
    pub slack: Vec<f64>,
    pub measure: Vec<f64>,
    /// Current arc lengths; stretching moves these together with slacks.
    pub lengths: Vec<f64>,
}

impl PrimalDualSolution {
    pub fn arc_count(&self) -> usize {
        self.flow.len()
    }

    /// Measure-weighted average of `f_e s_e / nu_e`.
    pub fn mu_hat(&self) -> f64 {
        self.duality_gap() / self.measure_total()
    }

    /// `sum_e f_e s_e`.
    pub fn duality_gap(&self) -> f64 {
        self.flow
            .iter()
            .zip(&self.slack)
            .map(|(f, s)| f * s)
            .sum()
    }

    pub fn measure_total(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// Measure-weighted 2-norm of the deviation of `mu_e / nu_e` from the
    /// average; the solution is gamma-centered iff this is <= gamma * mu.
    pub fn centrality(&self) -> f64 {
        let mu = self.mu_hat();
        let mut acc = 0.0;
        for e in 0..self.arc_count() {
            let d = self.flow[e] * self.slack[e] / self.measure[e] - mu;
            acc += self.measure[e] * d * d;
        }
        acc.sqrt()
    }

    /// `r_e = s_e / f_e`.
    pub fn resistances(&self) -> Resistances {
        Resistances(
            self.flow
                .iter()
                .zip(&self.slack)
                .map(|(f, s)| s / f)
                .collect(),
        )
    }

    pub fn positive(&self) -> bool {
        self.flow.iter().all(|&f| f > 0.0) && self.slack.iter().all(|&s| s > 0.0)
    }
}

/// `rho_e = |fhat_e| / f_e`.
pub fn congestion(fhat: &[f64], flow: &[f64]) -> Vec<f64> {
    fhat.iter()
        .zip(flow)
        .map(|(h, f)| (h / f).abs())
        .collect()
}

/// Measure-weighted p-norm.
pub fn weighted_norm(x: &[f64], nu: &[f64], p: u32) -> f64 {
    let mut acc = 0.0;
    for (v, w) in x.iter().zip(nu) {
        acc += w * v.powi(p as i32);
    }
    acc.powf(1.0 / p as f64)
}

/// Largest admissible step: `min(sqrt(gamma_hat) / |rho|_{nu,4}, 1/2)`.
pub fn max_step_size(rho: &[f64], nu: &[f64], gamma_hat: f64) -> f64 {
    let norm4 = weighted_norm(rho, nu, 4);
    if norm4 <= 0.0 {
        0.5
    } else {
        (gamma_hat.sqrt() / norm4).min(0.5)
    }
}

/// Solver workspace: the arc universe, its demand, and the prefactored
/// Laplacian sparsity pattern (reused across all iterations).
pub struct IpmWorkspace {
    pub n: usize,
    pub arcs: Vec<(usize, usize)>,
    pub sigma: Vec<f64>,
    pub structure: Arc<LaplacianStructure>,
    /// Arc count of the base (unaugmented) encoding; the scale `m` that
    /// all exponent formulas refer to.
    pub base_arc_count: usize,
}

impl IpmWorkspace {
    pub fn from_mincost(mc: &MinCostInstance) -> IpmWorkspace {
        IpmWorkspace {
            n: mc.graph.vertex_count(),
            arcs: mc.graph.arcs().to_vec(),
            sigma: mc.sigma.clone(),
            structure: LaplacianStructure::new(mc.graph.vertex_count(), mc.graph.arcs()),
            base_arc_count: mc.arc_count(),
        }
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Per-vertex excess `inflow - outflow` of an arc vector.
    pub fn excess(&self, f: &[f64]) -> Vec<f64> {
        let mut ex = vec![0.0; self.n];
        for (e, &(u, v)) in self.arcs.iter().enumerate() {
            ex[u] -= f[e];
            ex[v] += f[e];
        }
        ex
    }

    /// One electrical solve: potentials for `sigma` under resistances `r`,
    /// the induced arc flow and its energy.
    pub fn solve_electrical(
        &self,
        r: &[f64],
        sigma: &[f64],
        cfg: &Config,
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let res = Resistances::new(r.to_vec())?;
        let phi = self.structure.solve(&res, sigma, cfg.solver)?;
        let mut flow = vec![0.0; self.arc_count()];
        let mut energy = 0.0;
        for (e, &(u, v)) in self.arcs.iter().enumerate() {
            let fe = (phi[v] - phi[u]) / r[e];
            flow[e] = fe;
            energy += r[e] * fe * fe;
        }
        Ok((phi, flow, energy))
    }
}

/// The explicit 0-centered feasible starting point: unit slacks, unit flow
/// and measure on direct arcs, and hub-arc flows balancing each vertex's
/// demand, with measures equal to flows so that every `mu_e / nu_e` is 1.
pub fn initial_solution(mc: &MinCostInstance) -> Result<PrimalDualSolution> {
    let m = mc.arc_count();
    let mut flow = vec![1.0; m];
    let mut measure = vec![1.0; m];
    let slack = vec![1.0; m];
    let lengths = vec![1.0; m];

    // Direct-copy count at each non-hub vertex.
    let mut copies = vec![0.0f64; mc.graph.vertex_count()];
    for (a, kind) in mc.kinds.iter().enumerate() {
        if matches!(kind, crate::reduction::ArcKind::Direct { .. }) {
            let (u, v) = mc.graph.arcs()[a];
            copies[u] += 1.0;
            copies[v] += 1.0;
        }
    }

    for v in 0..mc.graph.vertex_count() {
        if v == mc.hub {
            continue;
        }
        let (to_hub, from_hub) = mc.hub_arcs_of_vertex(v);
        let demand = mc.sigma[v].abs();
        let r_v = copies[v] - demand;
        // Supply vertices route surplus out through the hub pair, demand
        // vertices route deficit in; the case split keeps flows >= 1.
        let (big, small) = if mc.sigma[v] < 0.0 {
            // s_p: direct copies already carry `copies[v]` out of v.
            (from_hub, to_hub)
        } else {
            (to_hub, from_hub)
        };
        if r_v >= 0.0 {
            flow[big] = r_v + 1.0;
            measure[big] = r_v + 1.0;
            flow[small] = 1.0;
            measure[small] = 1.0;
        } else {
            flow[big] = 1.0;
            measure[big] = 1.0;
            flow[small] = 1.0 - r_v;
            measure[small] = 1.0 - r_v;
        }
    }

    let sol = PrimalDualSolution {
        flow,
        slack,
        measure,
        lengths,
    };

    let total: f64 = sol.measure_total();
    if total > 3.0 * m as f64 + 1e-6 {
        return Err(Error::fault(
            "initial-measure",
            0,
            format!("sum nu = {total} exceeds 3m = {}", 3 * m),
        ));
    }
    let ws_excess = {
        let mut ex = vec![0.0; mc.graph.vertex_count()];
        for (e, &(u, v)) in mc.graph.arcs().iter().enumerate() {
            ex[u] -= sol.flow[e];
            ex[v] += sol.flow[e];
        }
        ex
    };
    for (v, (&got, &want)) in ws_excess.iter().zip(&mc.sigma).enumerate() {
        if (got - want).abs() > 1e-7 {
            return Err(Error::fault(
                "initial-feasibility",
                0,
                format!("vertex {v}: excess {got}, demand {want}"),
            ));
        }
    }
    Ok(sol)
}

/// Step-size selection for one improvement step.
#[derive(Debug, Clone, Copy)]
pub enum StepSize {
    /// `min(sqrt(gamma_hat)/|rho|_4, 1/2)` from the computed congestion.
    Adaptive,
    Fixed(f64),
}

/// Everything one improvement step produced, for audits and phase logic.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub delta: f64,
    pub retries: u32,
    /// Congestion of the descent electrical flow wrt the primal flow.
    pub rho: Vec<f64>,
    /// Relative resistance change, scaled by (1 - delta).
    pub kappa: Vec<f64>,
    /// Relative flow change, scaled by (1 - delta).
    pub kappa_bar: Vec<f64>,
    pub kappa_hat: Vec<f64>,
    /// Energy of the descent electrical flow under the pre-step
    /// resistances.
    pub energy_descent: f64,
    pub mu_before: f64,
    pub mu_after: f64,
    pub centrality_after: f64,
}

fn rel_ok(lhs: f64, rhs: f64, rel: f64) -> bool {
    lhs <= rhs * (1.0 + rel) + 1e-12
}

/// The descent electrical flow associated with a solution, plus the
/// quantities every consumer needs from it. Constructing it runs the
/// congestion-energy audits.
#[derive(Debug, Clone)]
pub struct DescentSolve {
    pub potentials: Vec<f64>,
    pub fhat: Vec<f64>,
    pub rho: Vec<f64>,
    pub resistances: Vec<f64>,
    pub energy: f64,
}

pub fn descent_solve(
    ws: &IpmWorkspace,
    sol: &PrimalDualSolution,
    cfg: &Config,
    step: usize,
) -> Result<DescentSolve> {
    let m = ws.arc_count();
    let gamma = cfg.gamma_hat;
    let rel = cfg.audit_rel;
    let mu = sol.mu_hat();

    let r: Vec<f64> = sol
        .flow
        .iter()
        .zip(&sol.slack)
        .map(|(f, s)| s / f)
        .collect();
    let (potentials, fhat, energy) = ws.solve_electrical(&r, &ws.sigma, cfg)?;
    let rho = congestion(&fhat, &sol.flow);

    // E(fhat) <= E(f) = sum mu_e = mu * sum nu (flow energy identity).
    let energy_primal = sol.duality_gap();
    if !rel_ok(energy, energy_primal, rel) {
        return Err(Error::fault(
            "energy-optimality",
            step,
            format!("E(fhat) = {energy} above E(f) = {energy_primal}"),
        ));
    }
    // Congestion-energy bound: |rho|_{nu,2}^2 <= E(fhat)/((1-gamma) mu).
    let rho2 = weighted_norm(&rho, &sol.measure, 2);
    if !rel_ok(rho2 * rho2, energy / ((1.0 - gamma) * mu), rel) {
        return Err(Error::fault(
            "congestion-energy",
            step,
            format!("|rho|_2^2 = {} above energy bound", rho2 * rho2),
        ));
    }
    // Per-arc sandwich: r_e fhat_e^2 within (1 +- gamma) nu_e mu rho_e^2.
    let gamma_actual = (sol.centrality() / mu).max(gamma);
    for e in 0..m {
        let lhs = r[e] * fhat[e] * fhat[e];
        let mid = sol.measure[e] * mu * rho[e] * rho[e];
        if !rel_ok((1.0 - gamma_actual) * mid, lhs, rel)
            || !rel_ok(lhs, (1.0 + gamma_actual) * mid, rel)
        {
            return Err(Error::fault(
                "congestion-sandwich",
                step,
                format!("arc {e}: r f^2 = {lhs}, nu mu rho^2 = {mid}"),
            ));
        }
    }

    Ok(DescentSolve {
        potentials,
        fhat,
        rho,
        resistances: r,
        energy,
    })
}

/// One descent + centering step on a precomputed descent solve. Mutates
/// `sol` in place on success; on a centrality overshoot the step is
/// retried with half the step size, up to `cfg.max_step_retries` times.
pub fn improvement_step_with(
    ws: &IpmWorkspace,
    sol: &mut PrimalDualSolution,
    descent: &DescentSolve,
    size: StepSize,
    cfg: &Config,
    step: usize,
) -> Result<StepReport> {
    let mu_before = sol.mu_hat();
    let nu_total = sol.measure_total();
    let delta_request = match size {
        StepSize::Adaptive => max_step_size(&descent.rho, &sol.measure, cfg.gamma_hat),
        StepSize::Fixed(d) => d.min(0.5),
    };

    let mut delta = delta_request;
    let mut retries = 0u32;
    loop {
        match attempt_step(
            ws,
            sol,
            &descent.resistances,
            &descent.fhat,
            &descent.rho,
            delta,
            cfg,
            step,
            mu_before,
            nu_total,
        ) {
            Ok(mut report) => {
                report.retries = retries;
                report.rho = descent.rho.clone();
                report.energy_descent = descent.energy;
                report.mu_before = mu_before;
                return Ok(report);
            }
            Err(StepFailure::Retryable(why)) => {
                retries += 1;
                if retries > cfg.max_step_retries {
                    return Err(Error::fault(
                        "step-retry-budget",
                        step,
                        format!("after {retries} retries: {why}"),
                    ));
                }
                delta *= 0.5;
            }
            Err(StepFailure::Fatal(e)) => return Err(e),
        }
    }
}

/// Convenience wrapper: solve the descent flow, then step.
pub fn improvement_step(
    ws: &IpmWorkspace,
    sol: &mut PrimalDualSolution,
    size: StepSize,
    cfg: &Config,
    step: usize,
) -> Result<StepReport> {
    let descent = descent_solve(ws, sol, cfg, step)?;
    improvement_step_with(ws, sol, &descent, size, cfg, step)
}

enum StepFailure {
    Retryable(String),
    Fatal(Error),
}

impl From<Error> for StepFailure {
    fn from(e: Error) -> Self {
        StepFailure::Fatal(e)
    }
}

#[allow(clippy::too_many_arguments)]
fn attempt_step(
    ws: &IpmWorkspace,
    sol: &mut PrimalDualSolution,
    r: &[f64],
    fhat: &[f64],
    rho: &[f64],
    delta: f64,
    cfg: &Config,
    step: usize,
    mu_before: f64,
    nu_total: f64,
) -> std::result::Result<StepReport, StepFailure> {
    let m = ws.arc_count();
    let gamma = cfg.gamma_hat;
    let rel = cfg.audit_rel;

    // Descent: convex-combine toward the electrical flow, shift the dual
    // embedding by the (scaled) electrical potentials.
    let mut f_bar = vec![0.0; m];
    let mut s_bar = vec![0.0; m];
    for e in 0..m {
        f_bar[e] = (1.0 - delta) * sol.flow[e] + delta * fhat[e];
        s_bar[e] = sol.slack[e] * (1.0 - delta / (1.0 - delta) * fhat[e] / sol.flow[e]);
        if f_bar[e] <= 0.0 || s_bar[e] <= 0.0 {
            return Err(StepFailure::Retryable(format!(
                "interior lost at arc {e}: f_bar = {}, s_bar = {}",
                f_bar[e], s_bar[e]
            )));
        }
    }
    let gap_bar: f64 = f_bar.iter().zip(&s_bar).map(|(f, s)| f * s).sum();
    let mu_bar = gap_bar / nu_total;

    // Intermediate centrality may grow to at most 3 gamma.
    let mut norm_sq = 0.0;
    for e in 0..m {
        let d = f_bar[e] * s_bar[e] / sol.measure[e] - mu_bar;
        norm_sq += sol.measure[e] * d * d;
    }
    if !rel_ok(norm_sq, 9.0 * gamma * gamma * mu_bar * mu_bar, rel) {
        return Err(StepFailure::Retryable(format!(
            "descent centrality^2 = {norm_sq} above 9 gamma^2 mu_bar^2"
        )));
    }

    // Centering: project onto the exactly-centered flow f_prime, repair
    // its demand error with a second electrical flow.
    let mut f_prime = vec![0.0; m];
    let mut f_star = vec![0.0; m];
    for e in 0..m {
        let mu_e = f_bar[e] * s_bar[e] / sol.measure[e];
        f_star[e] = (mu_e - mu_bar) / mu_e * f_bar[e];
        f_prime[e] = f_bar[e] - f_star[e];
    }
    let sigma_tilde = ws.excess(&f_star);
    let r_tilde: Vec<f64> = s_bar
        .iter()
        .zip(&f_prime)
        .map(|(s, f)| s / f)
        .collect();
    let (_phi_t, f_tilde, _energy_t) = ws
        .solve_electrical(&r_tilde, &sigma_tilde, cfg)
        .map_err(StepFailure::Fatal)?;

    // Interior bound of the centering flow.
    let mut kappa_hat = vec![0.0; m];
    for e in 0..m {
        let rho_c = (f_tilde[e] / f_prime[e]).abs();
        if rho_c > 0.5 + rel {
            return Err(StepFailure::Retryable(format!(
                "centering congestion {rho_c} above 1/2 at arc {e}"
            )));
        }
        let mu_e = f_bar[e] * s_bar[e] / sol.measure[e];
        kappa_hat[e] = ((mu_e - mu_bar) / mu_e).abs() + rho_c;
    }
    let kh_norm = weighted_norm(&kappa_hat, &sol.measure, 2);
    if kh_norm > 1.0 / 16.0 + rel {
        return Err(StepFailure::Fatal(Error::fault(
            "kappa-hat-norm",
            step,
            format!("|kappa_hat|_2 = {kh_norm} above 1/16"),
        )));
    }

    let mut f_next = vec![0.0; m];
    let mut s_next = vec![0.0; m];
    for e in 0..m {
        f_next[e] = f_prime[e] + f_tilde[e];
        s_next[e] = s_bar[e] * (1.0 - f_tilde[e] / f_prime[e]);
        if f_next[e] <= 0.0 || s_next[e] <= 0.0 {
            return Err(StepFailure::Retryable(format!(
                "interior lost after centering at arc {e}"
            )));
        }
    }

    let gap_next: f64 = f_next.iter().zip(&s_next).map(|(f, s)| f * s).sum();
    let mu_next = gap_next / nu_total;
    if mu_next > (1.0 - delta) * mu_before + 1e-9 {
        return Err(StepFailure::Fatal(Error::fault(
            "mu-decrease",
            step,
            format!("mu {mu_next} above (1 - {delta}) * {mu_before}"),
        )));
    }

    let mut cent_sq = 0.0;
    for e in 0..m {
        let d = f_next[e] * s_next[e] / sol.measure[e] - mu_next;
        cent_sq += sol.measure[e] * d * d;
    }
    let centrality_after = cent_sq.sqrt();
    if centrality_after > gamma * mu_next * (1.0 + rel) {
        return Err(StepFailure::Retryable(format!(
            "post-step centrality {centrality_after} above gamma mu = {}",
            gamma * mu_next
        )));
    }

    // Conservation of the new primal flow.
    let excess = ws.excess(&f_next);
    for (v, (&got, &want)) in excess.iter().zip(&ws.sigma).enumerate() {
        if (got - want).abs() > 1e-8 * (1.0 + want.abs()) {
            return Err(StepFailure::Fatal(Error::fault(
                "conservation",
                step,
                format!("vertex {v}: excess {got}, demand {want}"),
            )));
        }
    }

    // Relative-change vectors of Theorem-style bookkeeping.
    let mut kappa = vec![0.0; m];
    let mut kappa_bar = vec![0.0; m];
    for e in 0..m {
        let r_next = s_next[e] / f_next[e];
        kappa[e] = (1.0 - delta) * r_next / r[e] - 1.0;
        kappa_bar[e] = (1.0 - delta) * sol.flow[e] / f_next[e] - 1.0;
        let budget = 4.0 * (delta * rho[e] + kappa_hat[e]);
        if kappa[e].abs() > budget * (1.0 + rel) + 1e-12
            || kappa_bar[e].abs() > budget * (1.0 + rel) + 1e-12
        {
            return Err(StepFailure::Fatal(Error::fault(
                "kappa-bound",
                step,
                format!(
                    "arc {e}: |kappa| = {}, |kappa_bar| = {}, budget = {budget}",
                    kappa[e].abs(),
                    kappa_bar[e].abs()
                ),
            )));
        }
        if kappa[e].abs() > 0.5 + rel || kappa_bar[e].abs() > 0.5 + rel {
            return Err(StepFailure::Fatal(Error::fault(
                "kappa-infinity",
                step,
                format!("arc {e}: kappa {} kappa_bar {}", kappa[e], kappa_bar[e]),
            )));
        }
    }

    sol.flow = f_next;
    sol.slack = s_next;
    Ok(StepReport {
        delta,
        retries: 0,
        rho: Vec::new(),
        kappa,
        kappa_bar,
        kappa_hat,
        energy_descent: 0.0,
        mu_before,
        mu_after: mu_next,
        centrality_after,
    })
}

#[derive(Debug, Clone)]
pub struct PathFollowStats {
    pub iterations: usize,
    /// max over iterations of `1 / (delta sqrt(m))`.
    pub empirical_step_constant: f64,
}

/// Run the basic path follower until `mu_hat <= 1/(8m)`, with adaptive
/// step sizes. The iteration budget is a fault threshold, not a tuning
/// knob: exhausting it means some per-step guarantee broke.
pub fn basic_path_following(
    mc: &MinCostInstance,
    cfg: &Config,
    telemetry: &Telemetry,
) -> Result<(PrimalDualSolution, PathFollowStats)> {
    let ws = IpmWorkspace::from_mincost(mc);
    let mut sol = initial_solution(mc)?;
    path_follow_on(&ws, &mut sol, cfg, telemetry).map(|stats| (sol, stats))
}

pub(crate) fn path_follow_on(
    ws: &IpmWorkspace,
    sol: &mut PrimalDualSolution,
    cfg: &Config,
    telemetry: &Telemetry,
) -> Result<PathFollowStats> {
    let m = ws.base_arc_count as f64;
    let threshold = cfg.termination_scale / (8.0 * m);
    let budget =
        (cfg.iteration_budget_factor * m.sqrt() * (8.0 * m).ln()).ceil() as usize + 2;
    let floor = 1.0 / (41.0 * m.sqrt());

    let mut t = 0usize;
    let mut c_emp = 0.0f64;
    while sol.mu_hat() > threshold {
        if t >= budget {
            return Err(Error::fault(
                "iteration-budget",
                t,
                format!("mu = {} after {t} iterations (budget {budget})", sol.mu_hat()),
            ));
        }
        let report = improvement_step(ws, sol, StepSize::Adaptive, cfg, t)?;
        if report.delta < floor {
            return Err(Error::fault(
                "step-size-floor",
                t,
                format!("delta = {} below 1/(41 sqrt(m)) = {floor}", report.delta),
            ));
        }
        c_emp = c_emp.max(1.0 / (report.delta * m.sqrt()));
        telemetry.push(Record::Iter {
            t,
            mu_hat: report.mu_after,
            centrality: report.centrality_after,
            delta: report.delta,
            energy: report.energy_descent,
            nu_total: sol.measure_total(),
        });
        t += 1;
    }
    Ok(PathFollowStats {
        iterations: t,
        empirical_step_constant: c_emp,
    })
}

/// Recover the dual line embedding from slacks: the unique (up to
/// translation) `y` with `s_e = len_e - y_head + y_tail`, pinned at
/// `y_hub = 0`. Errors when no consistent embedding exists.
pub fn dual_potentials_from_slacks(
    n: usize,
    arcs: &[(usize, usize)],
    lengths: &[f64],
    slack: &[f64],
    root: usize,
) -> Result<Vec<f64>> {
    let mut y = vec![f64::NAN; n];
    y[root] = 0.0;
    let mut adj: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    for (e, &(u, v)) in arcs.iter().enumerate() {
        adj[u].push((v, e, true));
        adj[v].push((u, e, false));
    }
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        for &(w, e, forward) in &adj[v] {
            if y[w].is_nan() {
                // s_e = len_e - y_head + y_tail
                y[w] = if forward {
                    y[v] + lengths[e] - slack[e]
                } else {
                    y[v] - lengths[e] + slack[e]
                };
                stack.push(w);
            }
        }
    }
    for (e, &(u, v)) in arcs.iter().enumerate() {
        if y[u].is_nan() || y[v].is_nan() {
            continue;
        }
        let expect = lengths[e] - y[v] + y[u];
        if (expect - slack[e]).abs() > 1e-9 * (1.0 + slack[e].abs()) {
            return Err(Error::InconsistentSlacks {
                arc: e,
                residual: expect - slack[e],
            });
        }
    }
    for yv in y.iter_mut() {
        if yv.is_nan() {
            *yv = 0.0;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{bmatching_to_mincost, BMatchingInstance};

    fn tiny_instance() -> MinCostInstance {
        bmatching_to_mincost(&BMatchingInstance {
            b_p: vec![1],
            b_q: vec![1],
            edges: vec![(0, 0)],
        })
        .unwrap()
    }

    fn k22() -> MinCostInstance {
        bmatching_to_mincost(&BMatchingInstance {
            b_p: vec![1, 1],
            b_q: vec![1, 1],
            edges: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        })
        .unwrap()
    }

    #[test]
    fn mu_hat_examples() {
        // f_e s_e = nu_e everywhere -> 1.
        let sol = PrimalDualSolution {
            flow: vec![2.0, 0.5],
            slack: vec![0.5, 2.0],
            measure: vec![1.0, 1.0],
            lengths: vec![1.0, 1.0],
        };
        assert!((sol.mu_hat() - 1.0).abs() < 1e-15);
        // Scaling all flows by c scales mu_hat by c.
        let scaled = PrimalDualSolution {
            flow: sol.flow.iter().map(|f| 3.0 * f).collect(),
            ..sol.clone()
        };
        assert!((scaled.mu_hat() - 3.0).abs() < 1e-12);
        // Two arcs, mu = (2, 4), nu = (1, 3) -> 6/4.
        let sol = PrimalDualSolution {
            flow: vec![1.0, 2.0],
            slack: vec![2.0, 2.0],
            measure: vec![1.0, 3.0],
            lengths: vec![1.0, 1.0],
        };
        assert!((sol.mu_hat() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn centrality_examples() {
        let sol = PrimalDualSolution {
            flow: vec![1.0, 1.0],
            slack: vec![0.9, 1.1],
            measure: vec![1.0, 1.0],
            lengths: vec![1.0, 1.0],
        };
        assert!((sol.mu_hat() - 1.0).abs() < 1e-15);
        assert!((sol.centrality() - 0.02f64.sqrt()).abs() < 1e-12);
        // 0-centered solution.
        let sol0 = PrimalDualSolution {
            flow: vec![2.0, 4.0],
            slack: vec![1.0, 1.0],
            measure: vec![2.0, 4.0],
            lengths: vec![1.0, 1.0],
        };
        assert!(sol0.centrality() < 1e-15);
    }

    #[test]
    fn gamma_centered_implies_mu_band() {
        // Fact-style implication: centered => every mu_e within the band.
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let m = rng.gen_range(2..12);
            let mut sol = PrimalDualSolution {
                flow: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
                slack: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
                measure: (0..m).map(|_| rng.gen_range(1.0..3.0)).collect(),
                lengths: vec![1.0; m],
            };
            // flatten until nearly centered
            let mu = sol.mu_hat();
            for e in 0..m {
                sol.slack[e] = mu * sol.measure[e] / sol.flow[e]
                    * rng.gen_range(0.999..1.001);
            }
            let mu = sol.mu_hat();
            let gamma = sol.centrality() / mu;
            for e in 0..m {
                let mu_e = sol.flow[e] * sol.slack[e] / sol.measure[e];
                assert!(mu_e >= (1.0 - gamma) * mu - 1e-12);
                assert!(mu_e <= (1.0 + gamma) * mu + 1e-12);
            }
        }
    }

    #[test]
    fn duality_gap_identities() {
        let mc = k22();
        let sol = initial_solution(&mc).unwrap();
        // gap / mu = sum nu exactly; initial gap = sum nu <= 3m.
        let gap = sol.duality_gap();
        assert!((gap / sol.mu_hat() - sol.measure_total()).abs() < 1e-9);
        assert!(gap <= 3.0 * mc.arc_count() as f64 + 1e-9);
    }

    #[test]
    fn initial_solution_centered_and_feasible() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let np = rng.gen_range(1..5);
            let nq = rng.gen_range(1..5);
            let mut edges = Vec::new();
            for p in 0..np {
                for q in 0..nq {
                    if rng.gen_bool(0.6) {
                        edges.push((p, q));
                    }
                }
            }
            let mut b_p: Vec<u64> = (0..np).map(|_| rng.gen_range(1..4)).collect();
            let mut b_q: Vec<u64> = (0..nq).map(|_| rng.gen_range(1..4)).collect();
            // equalize totals
            let sp: u64 = b_p.iter().sum();
            let sq: u64 = b_q.iter().sum();
            if sp > sq {
                b_q[0] += sp - sq;
            } else {
                b_p[0] += sq - sp;
            }
            let inst = BMatchingInstance { b_p, b_q, edges };
            let mc = bmatching_to_mincost(&inst).unwrap();
            let sol = initial_solution(&mc).unwrap();
            assert!(sol.centrality() < 1e-12);
            assert!((sol.mu_hat() - 1.0).abs() < 1e-12);
            assert!(sol.positive());
            assert!(sol.measure_total() <= 3.0 * mc.arc_count() as f64);
        }
    }

    #[test]
    fn resistances_and_congestion_basics() {
        let sol = PrimalDualSolution {
            flow: vec![1.0],
            slack: vec![1.0],
            measure: vec![1.0],
            lengths: vec![1.0],
        };
        assert_eq!(sol.resistances().0, vec![1.0]);
        let doubled = PrimalDualSolution {
            slack: vec![2.0],
            ..sol.clone()
        };
        assert_eq!(doubled.resistances().0, vec![2.0]);
        assert_eq!(congestion(&[1.0], &[1.0]), vec![1.0]);
        assert_eq!(congestion(&[0.0], &[1.0]), vec![0.0]);
    }

    #[test]
    fn step_size_rule() {
        // |rho|_4 = 1, gamma = 1/400 -> delta = 1/20.
        let d = max_step_size(&[1.0], &[1.0], 1.0 / 400.0);
        assert!((d - 0.05).abs() < 1e-15);
        // huge congestion -> tiny step; zero congestion -> cap at 1/2.
        assert!(max_step_size(&[1e6], &[1.0], 1.0 / 400.0) < 1e-6);
        assert_eq!(max_step_size(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 400.0), 0.5);
    }

    #[test]
    fn improvement_step_decreases_mu_and_recenter() {
        let mc = k22();
        let ws = IpmWorkspace::from_mincost(&mc);
        let cfg = Config::default();
        let mut sol = initial_solution(&mc).unwrap();
        let mu0 = sol.mu_hat();
        let report = improvement_step(&ws, &mut sol, StepSize::Adaptive, &cfg, 0).unwrap();
        assert!(report.delta > 0.0);
        assert!(report.mu_after <= (1.0 - report.delta) * mu0 + 1e-9);
        assert!(sol.centrality() <= cfg.gamma_hat * sol.mu_hat() * (1.0 + 1e-8));
        assert!(sol.positive());
    }

    #[test]
    fn zero_delta_step_is_pure_centering() {
        let mc = tiny_instance();
        let ws = IpmWorkspace::from_mincost(&mc);
        let cfg = Config::default();
        let mut sol = initial_solution(&mc).unwrap();
        // perturb slightly off-center, then re-center with delta = 0
        sol.slack[0] *= 1.0005;
        let mu0 = sol.mu_hat();
        let report =
            improvement_step(&ws, &mut sol, StepSize::Fixed(0.0), &cfg, 0).unwrap();
        assert!(report.mu_after <= mu0 + 1e-9);
        assert!(sol.centrality() <= cfg.gamma_hat * sol.mu_hat());
    }

    #[test]
    fn basic_path_following_reaches_threshold() {
        let mc = k22();
        let cfg = Config::default();
        let telemetry = Telemetry::new();
        let (sol, stats) = basic_path_following(&mc, &cfg, &telemetry).unwrap();
        let m = mc.arc_count() as f64;
        assert!(sol.mu_hat() <= 1.0 / (8.0 * m));
        assert!(sol.duality_gap() <= 0.5 + 1e-9);
        assert!(stats.iterations > 0);
        // per-iteration records were emitted
        let recs = telemetry.records();
        assert!(recs.len() >= stats.iterations);
    }

    #[test]
    fn dual_embedding_roundtrip() {
        use rand::prelude::*;
        let mc = k22();
        let n = mc.graph.vertex_count();
        let arcs = mc.graph.arcs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let shift = y[mc.hub];
            for v in y.iter_mut() {
                *v -= shift;
            }
            let lengths = vec![1.0; arcs.len()];
            let slack: Vec<f64> = arcs
                .iter()
                .enumerate()
                .map(|(e, &(u, v))| lengths[e] - y[v] + y[u])
                .collect();
            let got =
                dual_potentials_from_slacks(n, arcs, &lengths, &slack, mc.hub).unwrap();
            for (a, b) in got.iter().zip(&y) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        // s = lengths -> y = 0
        let lengths = vec![1.0; arcs.len()];
        let y = dual_potentials_from_slacks(n, arcs, &lengths, &lengths, mc.hub).unwrap();
        assert!(y.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn inconsistent_slacks_detected() {
        let mc = k22();
        let arcs = mc.graph.arcs();
        let lengths = vec![1.0; arcs.len()];
        let mut slack = lengths.clone();
        slack[0] = 0.25; // breaks every cycle through arc 0
        assert!(matches!(
            dual_potentials_from_slacks(
                mc.graph.vertex_count(),
                arcs,
                &lengths,
                &slack,
                mc.hub
            ),
            Err(Error::InconsistentSlacks { .. })
        ));
    }
}
