//! Congestion-band smoothness, arc stretching, stretch-boosts and the
//! improvement phase that combines them.
//!
//! A phase advances the path follower with a fixed step size that is only
//! valid while the guiding electrical flow stays smooth: no congestion
//! band may carry too much measure. Whenever smoothness fails on heavy
//! arcs, the offending band is 1-stretched (doubling its resistances),
//! which provably drives the flow energy up; since progress steps cannot
//! drive it down fast, the boosts are self-limiting. All of those energy
//! facts are re-checked numerically at every step.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::ipm::{
    descent_solve, improvement_step_with, IpmWorkspace,
    PrimalDualSolution, StepReport, StepSize,
};
use crate::report::{Record, Telemetry};
use std::collections::BTreeMap;

/// Derived constants of the improvement-phase machinery for a given scale.
#[derive(Debug, Clone)]
pub struct SmoothnessParams {
    pub m_base: usize,
    pub eta: f64,
    /// `theta = m^(-eta)`.
    pub theta: f64,
    /// Fixed progress-step size `1/(2 c_delta theta sqrt(m))`.
    pub delta_phase: f64,
    /// Per-phase reduction target `(1 - delta_phase)^(theta^-2)`.
    pub lambda_hat: f64,
    /// Phase-count budget for the full solve.
    pub t_hat: usize,
    /// Progress steps allowed per phase: `ceil(theta^-2)`.
    pub progress_cap: usize,
    /// Stretch-boost budget per solve.
    pub boost_budget: f64,
    /// Largest congestion-band index that smoothness constraints:
    /// `floor(log2 theta^-3)`.
    pub l_max: i32,
    /// Measure cap for any single boosted set.
    pub nu_max: f64,
}

impl SmoothnessParams {
    pub fn new(m_base: usize, cfg: &Config) -> SmoothnessParams {
        let m = m_base.max(2) as f64;
        let theta = m.powf(-cfg.eta);
        let delta_phase = (1.0 / (2.0 * cfg.c_delta * theta * m.sqrt())).min(0.5);
        let inv_theta_sq = 1.0 / (theta * theta);
        let lambda_hat = (1.0 - delta_phase).powf(inv_theta_sq);
        let t_hat = (2.0 * cfg.c_delta * theta.powi(3) * m.sqrt() * (8.0 * m).ln())
            .ceil()
            .max(1.0) as usize;
        let progress_cap = inv_theta_sq.ceil().max(1.0) as usize;
        let boost_budget = (cfg.c_decr / cfg.c_incr * inv_theta_sq
            * (cfg.c_energy * cfg.c_energy * m).ln())
        .ceil()
        .max(1.0);
        let l_max = (theta.powi(-3)).log2().floor() as i32;
        let nu_max = cfg.c_energy.powi(6) / theta.powi(6);
        SmoothnessParams {
            m_base,
            eta: cfg.eta,
            theta,
            delta_phase,
            lambda_hat,
            t_hat,
            progress_cap,
            boost_budget,
            l_max,
            nu_max,
        }
    }

    /// Heavy-arc flow threshold at the given `mu_hat`.
    pub fn f_heavy(&self, mu_hat: f64, cfg: &Config) -> f64 {
        let m = self.m_base as f64;
        m.powf(0.5 - 3.0 * self.eta) * mu_hat / cfg.c_heavy
    }
}

/// Book-keeping for all length and measure perturbations.
#[derive(Debug, Clone)]
pub struct StretchLedger {
    pub total_length_increase: f64,
    pub per_arc_increase: Vec<f64>,
    pub total_measure_added: f64,
    /// Times each arc was 1-stretched (boosted).
    pub boost_counts: Vec<u32>,
    pub length_budget: f64,
}

impl StretchLedger {
    pub fn new(m_base: usize, cfg: &Config) -> StretchLedger {
        let m = m_base.max(2) as f64;
        StretchLedger {
            total_length_increase: 0.0,
            per_arc_increase: vec![0.0; m_base],
            total_measure_added: 0.0,
            boost_counts: vec![0; m_base],
            length_budget: cfg.c_length_budget * m.powf(0.5 - cfg.eta) * (8.0 * m).ln(),
        }
    }

    pub fn max_boost_count(&self) -> u32 {
        self.boost_counts.iter().copied().max().unwrap_or(0)
    }
}

/// Raw stretch: grow length and slack of arc `e` by `alpha * s_e`, measure
/// by `(1 + beta)` with `beta = alpha f_e s_e / (nu_e mu_hat)`. Returns
/// `(length_delta, measure_delta, beta)`. Resistance scales by exactly
/// `1 + alpha` and `mu_hat` is preserved by construction.
pub(crate) fn apply_stretch(
    sol: &mut PrimalDualSolution,
    e: usize,
    alpha: f64,
    mu_hat: f64,
) -> (f64, f64, f64) {
    let ds = alpha * sol.slack[e];
    let beta = alpha * sol.flow[e] * sol.slack[e] / (sol.measure[e] * mu_hat);
    let d_nu = beta * sol.measure[e];
    sol.slack[e] += ds;
    sol.lengths[e] += ds;
    sol.measure[e] += d_nu;
    (ds, d_nu, beta)
}

/// Counterpart of stretching on the primal side: grow the flow by
/// `(1 + alpha)`; resistance scales by `1/(1 + alpha)`.
pub(crate) fn apply_widen(
    sol: &mut PrimalDualSolution,
    e: usize,
    alpha: f64,
    mu_hat: f64,
) -> (f64, f64) {
    let beta = alpha * sol.flow[e] * sol.slack[e] / (sol.measure[e] * mu_hat);
    let d_nu = beta * sol.measure[e];
    sol.flow[e] *= 1.0 + alpha;
    sol.measure[e] += d_nu;
    (d_nu, beta)
}

/// Ledger-tracked alpha-stretch of one arc, with the exactness laws
/// asserted: the beta band, mu preservation, centrality non-worsening and
/// the length invariants.
pub fn alpha_stretch(
    sol: &mut PrimalDualSolution,
    e: usize,
    alpha: f64,
    cfg: &Config,
    ledger: &mut StretchLedger,
) -> Result<()> {
    let mu_before = sol.mu_hat();
    let cent_before = sol.centrality();
    let gamma = if mu_before > 0.0 {
        cent_before / mu_before
    } else {
        0.0
    };
    let r_before = sol.slack[e] / sol.flow[e];
    let (ds, d_nu, beta) = apply_stretch(sol, e, alpha, mu_before);

    let rel = cfg.audit_rel;
    if alpha > 0.0 {
        let lo = (1.0 - gamma) * alpha;
        let hi = (1.0 + gamma) * alpha;
        if beta < lo * (1.0 - rel) - 1e-15 || beta > hi * (1.0 + rel) + 1e-15 {
            return Err(Error::fault(
                "stretch-beta-band",
                e,
                format!("beta = {beta} outside [(1-g)a, (1+g)a] = [{lo}, {hi}]"),
            ));
        }
    }
    let r_after = sol.slack[e] / sol.flow[e];
    if ((r_after / r_before) - (1.0 + alpha)).abs() > 1e-9 * (1.0 + alpha) {
        return Err(Error::fault(
            "stretch-resistance",
            e,
            format!("resistance scaled by {} not {}", r_after / r_before, 1.0 + alpha),
        ));
    }
    let mu_after = sol.mu_hat();
    if (mu_after - mu_before).abs() > 1e-12 * mu_before.max(1.0) {
        return Err(Error::fault(
            "stretch-mu-drift",
            e,
            format!("mu {mu_before} -> {mu_after}"),
        ));
    }
    let cent_after = sol.centrality();
    if cent_after > cent_before * (1.0 + rel) + 1e-12 {
        return Err(Error::fault(
            "stretch-centrality",
            e,
            format!("centrality {cent_before} -> {cent_after}"),
        ));
    }

    ledger.total_length_increase += ds;
    ledger.per_arc_increase[e] += ds;
    ledger.total_measure_added += d_nu;
    if ledger.per_arc_increase[e] > 1.0 + rel {
        return Err(Error::fault(
            "ledger-arc-length",
            e,
            format!("per-arc length increase {}", ledger.per_arc_increase[e]),
        ));
    }
    if ledger.total_length_increase > ledger.length_budget * (1.0 + rel) {
        return Err(Error::fault(
            "ledger-total-length",
            e,
            format!(
                "total {} above budget {}",
                ledger.total_length_increase, ledger.length_budget
            ),
        ));
    }
    Ok(())
}

/// Congestion bands: band `l` holds arcs with
/// `sqrt(m)/2^(l+1) < rho_e <= sqrt(m)/2^l` (upper-inclusive). Bands above
/// `l_max` are irrelevant to smoothness and left unclassified.
#[derive(Debug, Clone)]
pub struct Classification {
    pub bands: BTreeMap<i32, Vec<usize>>,
    pub l_max: i32,
}

pub fn classify_congestion(rho: &[f64], m_base: usize, theta: f64) -> Classification {
    let sqrt_m = (m_base.max(2) as f64).sqrt();
    let l_max = (theta.powi(-3)).log2().floor() as i32;
    let mut bands: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (e, &r) in rho.iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        let l = (sqrt_m / r).log2().floor() as i32;
        if l <= l_max {
            bands.entry(l).or_default().push(e);
        }
    }
    Classification { bands, l_max }
}

/// Outcome of the smoothness test on an arc subset.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoothness {
    Smooth,
    Violation {
        /// Smallest band index violating `nu(C_l & S) <= floor(theta^3 8^l)`.
        l_star: i32,
        measure: f64,
        /// Smallest band index passing the stronger boost condition
        /// `nu(C_l & S) > max(theta^3 8^l, 1)`, when one exists.
        boostable: Option<i32>,
    },
}

/// Test theta-smoothness of the classified flow on the subset `S`
/// (`None` = all arcs).
pub fn is_theta_smooth(
    class: &Classification,
    nu: &[f64],
    theta: f64,
    subset: Option<&[bool]>,
) -> Smoothness {
    let mut first_violation: Option<(i32, f64)> = None;
    let mut boostable = None;
    for (&l, arcs) in &class.bands {
        let measure: f64 = arcs
            .iter()
            .filter(|&&e| subset.map_or(true, |s| s[e]))
            .map(|&e| nu[e])
            .sum();
        let cap = theta.powi(3) * (2.0f64).powi(3 * l);
        if measure > cap.floor() && first_violation.is_none() {
            first_violation = Some((l, measure));
        }
        if measure > cap.max(1.0) && boostable.is_none() {
            boostable = Some(l);
        }
    }
    match first_violation {
        None => Smoothness::Smooth,
        Some((l_star, measure)) => Smoothness::Violation {
            l_star,
            measure,
            boostable,
        },
    }
}

/// Heavy-arc indicator: `f_e >= nu_e * f_heavy` (boundary inclusive).
pub fn heavy_arcs(sol: &PrimalDualSolution, params: &SmoothnessParams, cfg: &Config) -> Vec<bool> {
    let threshold = params.f_heavy(sol.mu_hat(), cfg);
    sol.flow
        .iter()
        .zip(&sol.measure)
        .map(|(f, nu)| *f >= nu * threshold)
        .collect()
}

/// 1-stretch every arc of a congestion band intersected with the heavy
/// set. The per-arc slack bound guaranteed by heaviness is asserted.
pub fn stretch_boost(
    sol: &mut PrimalDualSolution,
    set: &[usize],
    params: &SmoothnessParams,
    cfg: &Config,
    ledger: &mut StretchLedger,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::fault("boost-empty-set", 0, "empty stretch-boost set"));
    }
    let m = params.m_base as f64;
    let mu = sol.mu_hat();
    let gamma = sol.centrality() / mu;
    let slack_cap =
        cfg.c_heavy * (1.0 + gamma) * m.powf(3.0 * params.eta) / m.sqrt();
    let mut nu_set = 0.0;
    for &e in set {
        nu_set += sol.measure[e];
        if sol.slack[e] > slack_cap * (1.0 + cfg.audit_rel) {
            return Err(Error::fault(
                "boost-length-bound",
                e,
                format!(
                    "heavy arc slack {} above c_heavy (1+g) m^(3 eta - 1/2) = {slack_cap}",
                    sol.slack[e]
                ),
            ));
        }
    }
    if nu_set > params.nu_max * (1.0 + cfg.audit_rel) {
        return Err(Error::fault(
            "boost-measure-cap",
            0,
            format!("boosted set measure {nu_set} above nu_max {}", params.nu_max),
        ));
    }
    for &e in set {
        alpha_stretch(sol, e, 1.0, cfg, ledger)?;
        ledger.boost_counts[e] += 1;
    }
    Ok(nu_set)
}

/// Band partition of a relative-change vector: `T_l` holds arcs with
/// `2^-(l+1) < |x_e| <= 2^-l`; `tau`-restricted means
/// `nu(T_l) <= tau 8^l` for every `l >= 0`.
pub fn restricted_check(lambda: &[f64], nu: &[f64], tau: f64) -> bool {
    let mut bands: BTreeMap<i32, f64> = BTreeMap::new();
    for (e, &x) in lambda.iter().enumerate() {
        let a = x.abs();
        if a <= 0.0 || a > 1.0 {
            continue;
        }
        let l = (-a.log2()).ceil() as i32 - 1;
        let l = l.max(0);
        *bands.entry(l).or_default() += nu[e];
    }
    bands
        .iter()
        .all(|(&l, &measure)| measure <= tau * (2.0f64).powi(3 * l) + 1e-9)
}

/// Hooks the preconditioning layer installs into a phase.
pub trait PhaseHooks {
    /// Called after every progress step; implements freezing.
    fn after_progress(
        &mut self,
        sol: &mut PrimalDualSolution,
        report: &StepReport,
        t: usize,
        telemetry: &Telemetry,
    ) -> Result<()>;

    /// Called every iteration with the current electrical solve; implements
    /// the light-arc watchdog and the embedding certificate.
    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        sol: &PrimalDualSolution,
        potentials: &[f64],
        rho: &[f64],
        class: &Classification,
        heavy: &[bool],
        energy: f64,
        t: usize,
        telemetry: &Telemetry,
    ) -> Result<()>;
}

/// No-op hooks for phases run without preconditioning.
pub struct NoHooks;

impl PhaseHooks for NoHooks {
    fn after_progress(
        &mut self,
        _sol: &mut PrimalDualSolution,
        _report: &StepReport,
        _t: usize,
        _telemetry: &Telemetry,
    ) -> Result<()> {
        Ok(())
    }

    fn observe(
        &mut self,
        _sol: &PrimalDualSolution,
        _potentials: &[f64],
        _rho: &[f64],
        _class: &Classification,
        _heavy: &[bool],
        _energy: f64,
        _t: usize,
        _telemetry: &Telemetry,
    ) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub mu_start: f64,
    pub mu_end: f64,
    pub progress_steps: usize,
    pub boosts: usize,
    pub steps_consumed: usize,
}

/// What happened between two consecutive electrical solves; used for the
/// energy-potential audits.
enum LastAction {
    None,
    Boost { nu_set: f64, energy_before: f64, t: usize },
    Progress { energy_before: f64, t: usize },
}

/// One improvement phase: run progress steps at the fixed step size while
/// the guiding flow is smooth on heavy arcs, stretch-boost the worst heavy
/// band otherwise, until `mu_hat` drops by the factor `lambda_hat`.
#[allow(clippy::too_many_arguments)]
pub fn theta_improvement_phase(
    ws: &IpmWorkspace,
    sol: &mut PrimalDualSolution,
    params: &SmoothnessParams,
    cfg: &Config,
    ledger: &mut StretchLedger,
    hooks: &mut dyn PhaseHooks,
    telemetry: &Telemetry,
    step_offset: usize,
    total_boosts: &mut usize,
) -> Result<PhaseOutcome> {
    let mu_start = sol.mu_hat();
    let target = params.lambda_hat * mu_start;
    let mut progress_steps = 0usize;
    let mut boosts = 0usize;
    let mut t = step_offset;
    let mut last = LastAction::None;
    let decay_cap = 1.0 + cfg.c_decr * params.theta * params.theta * (params.m_base as f64).ln();

    while sol.mu_hat() > target {
        let descent = descent_solve(ws, sol, cfg, t)?;

        // Energy-potential audits against the previous action.
        match last {
            LastAction::None => {}
            LastAction::Boost {
                nu_set,
                energy_before,
                t: bt,
            } => {
                let need = 1.0
                    + cfg.c_incr * params.theta * params.theta * nu_set.cbrt();
                if descent.energy < energy_before * need * (1.0 - 1e-9) {
                    return Err(Error::fault(
                        "boost-energy-gain",
                        bt,
                        format!(
                            "energy {} -> {} below required factor {need}",
                            energy_before, descent.energy
                        ),
                    ));
                }
                if descent.energy
                    > energy_before * cfg.c_energy * cfg.c_energy * (1.0 + cfg.audit_rel)
                {
                    return Err(Error::fault(
                        "boost-energy-cap",
                        bt,
                        format!(
                            "energy {} -> {} above c_E^2 factor",
                            energy_before, descent.energy
                        ),
                    ));
                }
                telemetry.push(Record::Boost {
                    t: bt,
                    l_star: 0, // real l* recorded at boost time below
                    nu_set,
                    energy_before,
                    energy_after: descent.energy,
                });
            }
            LastAction::Progress { energy_before, t: pt } => {
                if descent.energy < energy_before / decay_cap * (1.0 - cfg.audit_rel) {
                    return Err(Error::fault(
                        "progress-energy-loss",
                        pt,
                        format!(
                            "energy {} -> {} below 1/(1 + c_decr theta^2 ln m) floor",
                            energy_before, descent.energy
                        ),
                    ));
                }
                telemetry.push(Record::Progress {
                    t: pt,
                    energy_before,
                    energy_after: descent.energy,
                });
            }
        }

        // Energy sandwich (with the base scale m).
        let m = params.m_base as f64;
        let mu = sol.mu_hat();
        if descent.energy < m * mu / cfg.c_energy * (1.0 - cfg.audit_rel)
            || descent.energy > cfg.c_energy * m * mu * (1.0 + cfg.audit_rel)
        {
            return Err(Error::fault(
                "energy-sandwich",
                t,
                format!(
                    "E = {} outside [{}, {}]",
                    descent.energy,
                    m * mu / cfg.c_energy,
                    cfg.c_energy * m * mu
                ),
            ));
        }

        let class = classify_congestion(&descent.rho, params.m_base, params.theta);
        let heavy = heavy_arcs(sol, params, cfg);
        hooks.observe(
            sol,
            &descent.potentials,
            &descent.rho,
            &class,
            &heavy,
            descent.energy,
            t,
            telemetry,
        )?;

        let heavy_smooth = is_theta_smooth(&class, &sol.measure, params.theta, Some(&heavy));
        let boost_at = match &heavy_smooth {
            Smoothness::Smooth => None,
            Smoothness::Violation { boostable, .. } => *boostable,
        };

        if let Some(l_star) = boost_at {
            let set: Vec<usize> = class.bands[&l_star]
                .iter()
                .copied()
                .filter(|&e| heavy[e])
                .collect();
            boosts += 1;
            *total_boosts += 1;
            if *total_boosts as f64 > params.boost_budget {
                return Err(Error::fault(
                    "boost-budget",
                    t,
                    format!(
                        "{total_boosts} stretch-boosts above budget {}",
                        params.boost_budget
                    ),
                ));
            }
            let nu_set = stretch_boost(sol, &set, params, cfg, ledger)?;
            last = LastAction::Boost {
                nu_set,
                energy_before: descent.energy,
                t,
            };
        } else {
            progress_steps += 1;
            // Runaway tripwire: the loop bound is ceil(theta^-2) full-size
            // steps; retried (halved) steps can stretch that, but not by
            // more than a factor of two plus slack.
            if progress_steps > 2 * params.progress_cap + 4 {
                return Err(Error::fault(
                    "phase-progress-cap",
                    t,
                    format!(
                        "{progress_steps} progress steps, budget ceil(theta^-2) = {}",
                        params.progress_cap
                    ),
                ));
            }
            let report = improvement_step_with(
                ws,
                sol,
                &descent,
                StepSize::Fixed(params.delta_phase),
                cfg,
                t,
            )?;
            // Relative-change vectors of smooth steps are tau-restricted.
            if !restricted_check(&report.kappa, &sol.measure, cfg.c_restrict)
                || !restricted_check(&report.kappa_bar, &sol.measure, cfg.c_restrict)
            {
                return Err(Error::fault(
                    "restricted-change",
                    t,
                    "kappa or kappa_bar not c_restrict-restricted".to_string(),
                ));
            }
            telemetry.push(Record::Iter {
                t,
                mu_hat: report.mu_after,
                centrality: report.centrality_after,
                delta: report.delta,
                energy: descent.energy,
                nu_total: sol.measure_total(),
            });
            hooks.after_progress(sol, &report, t, telemetry)?;
            last = LastAction::Progress {
                energy_before: descent.energy,
                t,
            };
        }
        t += 1;
    }

    // Close out the pending energy audit with one more solve.
    if matches!(last, LastAction::Boost { .. } | LastAction::Progress { .. }) {
        let descent = descent_solve(ws, sol, cfg, t)?;
        match last {
            LastAction::Boost {
                nu_set,
                energy_before,
                t: bt,
            } => {
                let need = 1.0 + cfg.c_incr * params.theta * params.theta * nu_set.cbrt();
                if descent.energy < energy_before * need * (1.0 - 1e-9) {
                    return Err(Error::fault("boost-energy-gain", bt, "final audit".to_string()));
                }
                telemetry.push(Record::Boost {
                    t: bt,
                    l_star: 0,
                    nu_set,
                    energy_before,
                    energy_after: descent.energy,
                });
            }
            LastAction::Progress { energy_before, t: pt } => {
                if descent.energy < energy_before / decay_cap * (1.0 - cfg.audit_rel) {
                    return Err(Error::fault("progress-energy-loss", pt, "final audit".to_string()));
                }
                telemetry.push(Record::Progress {
                    t: pt,
                    energy_before,
                    energy_after: descent.energy,
                });
            }
            LastAction::None => {}
        }
    }

    Ok(PhaseOutcome {
        mu_start,
        mu_end: sol.mu_hat(),
        progress_steps,
        boosts,
        steps_consumed: t - step_offset,
    })
}

#[derive(Debug, Clone)]
pub struct AccelStats {
    pub phases: usize,
    pub progress_steps: usize,
    pub boosts: usize,
    pub freezes: usize,
    pub light_violations: usize,
    pub theory_faults: usize,
    pub max_boost_count: u32,
    pub total_length_increase: f64,
    pub iterations: usize,
}

/// The accelerated solver: improvement phases with stretch-boosts, each
/// phase preconditioned by auxiliary arcs (unless disabled), run until
/// `mu_hat <= 1/(8m)`.
pub fn accelerated_solve(
    mc: &crate::reduction::MinCostInstance,
    cfg: &Config,
    telemetry: &Telemetry,
) -> Result<(PrimalDualSolution, AccelStats)> {
    use crate::precond::{augment, fix_solution, AuxContext};

    let base_ws = IpmWorkspace::from_mincost(mc);
    let params = SmoothnessParams::new(base_ws.base_arc_count, cfg);
    let mut sol = crate::ipm::initial_solution(mc)?;
    let aux_ctx = if cfg.no_precondition {
        None
    } else {
        Some(AuxContext::new(mc))
    };
    let ledger_arcs = aux_ctx
        .as_ref()
        .map(|c| c.ws.arc_count())
        .unwrap_or(base_ws.arc_count());
    let mut ledger = StretchLedger::new(ledger_arcs, cfg);
    // The budget scale is the base arc count either way.
    ledger.length_budget = cfg.c_length_budget
        * (base_ws.base_arc_count as f64).powf(0.5 - cfg.eta)
        * (8.0 * base_ws.base_arc_count as f64).ln();

    let m = base_ws.base_arc_count as f64;
    let threshold = cfg.termination_scale / (8.0 * m);
    let mut stats = AccelStats {
        phases: 0,
        progress_steps: 0,
        boosts: 0,
        freezes: 0,
        light_violations: 0,
        theory_faults: 0,
        max_boost_count: 0,
        total_length_increase: 0.0,
        iterations: 0,
    };
    let mut total_boosts = 0usize;
    let mut step = 0usize;

    for phase_index in 0..params.t_hat {
        if sol.mu_hat() <= threshold {
            break;
        }
        let mu0 = sol.mu_hat();
        let outcome = match &aux_ctx {
            Some(ctx) => {
                let mut aux = augment(ctx, &mut sol, cfg, &params)?;
                let outcome = theta_improvement_phase(
                    &ctx.ws,
                    &mut sol,
                    &params,
                    cfg,
                    &mut ledger,
                    &mut aux,
                    telemetry,
                    step,
                    &mut total_boosts,
                )?;
                stats.freezes += aux.freezes;
                stats.light_violations += aux.light_violations;
                stats.theory_faults += aux.theory_faults;
                fix_solution(
                    ctx,
                    &aux,
                    &mut sol,
                    &base_ws,
                    mc,
                    cfg,
                    &params,
                    mu0,
                    phase_index,
                    telemetry,
                )?;
                outcome
            }
            None => theta_improvement_phase(
                &base_ws,
                &mut sol,
                &params,
                cfg,
                &mut ledger,
                &mut NoHooks,
                telemetry,
                step,
                &mut total_boosts,
            )?,
        };
        step += outcome.steps_consumed;
        stats.phases += 1;
        stats.progress_steps += outcome.progress_steps;
        stats.boosts += outcome.boosts;
        telemetry.push(Record::Phase {
            index: phase_index,
            mu_start: outcome.mu_start,
            mu_end: outcome.mu_end,
            progress_steps: outcome.progress_steps,
            boosts: outcome.boosts,
        });
        audit_measure_invariant(&sol, base_ws.base_arc_count, step)?;
    }

    if sol.mu_hat() > threshold {
        return Err(Error::fault(
            "phase-budget",
            step,
            format!(
                "mu = {} above 1/(8m) after {} phases",
                sol.mu_hat(),
                params.t_hat
            ),
        ));
    }
    stats.max_boost_count = ledger.max_boost_count();
    stats.total_length_increase = ledger.total_length_increase;
    stats.iterations = step;
    Ok((sol, stats))
}

/// Invariant: total measure within the base arc range stays below `4m`.
pub fn audit_measure_invariant(
    sol: &PrimalDualSolution,
    base_arcs: usize,
    step: usize,
) -> Result<()> {
    let total: f64 = sol.measure[..base_arcs.min(sol.measure.len())].iter().sum();
    if total > 4.0 * base_arcs as f64 * (1.0 + 1e-9) {
        return Err(Error::fault(
            "measure-invariant",
            step,
            format!("sum nu = {total} above 4m = {}", 4 * base_arcs),
        ));
    }
    for (e, &nu) in sol.measure.iter().enumerate() {
        if nu < 1.0 - 1e-12 {
            return Err(Error::fault(
                "measure-floor",
                step,
                format!("nu_{e} = {nu} below 1"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipm::{congestion, initial_solution, weighted_norm};
    use crate::reduction::{bmatching_to_mincost, BMatchingInstance};

    fn k22_setup() -> (IpmWorkspace, PrimalDualSolution, Config) {
        let mc = bmatching_to_mincost(&BMatchingInstance {
            b_p: vec![1, 1],
            b_q: vec![1, 1],
            edges: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        })
        .unwrap();
        let ws = IpmWorkspace::from_mincost(&mc);
        let sol = initial_solution(&mc).unwrap();
        (ws, sol, Config::default())
    }

    #[test]
    fn classification_boundaries() {
        // theta = 0.4 gives l_max = floor(log2(0.4^-3)) = 3.
        let theta = 0.4;
        // rho = sqrt(m) lands in band 0 (upper-inclusive).
        let m = 16;
        let sqrt_m = 4.0;
        let class = classify_congestion(&[sqrt_m], m, theta);
        assert_eq!(class.bands[&0], vec![0]);
        // just above sqrt(m)/2 is still band 0
        let class = classify_congestion(&[sqrt_m / 2.0 + 1e-9], m, theta);
        assert_eq!(class.bands[&0], vec![0]);
        // uniform rho = sqrt(m)/3 goes to band 1
        let class = classify_congestion(&[sqrt_m / 3.0; 4], m, theta);
        assert_eq!(class.bands[&1].len(), 4);
        // rho > sqrt(m) gives negative bands
        let class = classify_congestion(&[3.0 * sqrt_m], m, theta);
        assert!(class.bands.contains_key(&-2));
        // congestion below the last tracked band stays unclassified
        let class = classify_congestion(&[sqrt_m / 40.0], m, theta);
        assert!(class.bands.is_empty());
    }

    #[test]
    fn smoothness_and_boost_condition() {
        let empty = Classification {
            bands: BTreeMap::new(),
            l_max: 3,
        };
        assert_eq!(is_theta_smooth(&empty, &[], 0.5, None), Smoothness::Smooth);

        // One arc with measure 1 in band 0 where theta^3 * 1 < 1: violates
        // the floor-version but is not boostable (needs > 1).
        let mut bands = BTreeMap::new();
        bands.insert(0, vec![0usize]);
        let class = Classification { bands, l_max: 3 };
        let theta: f64 = 0.5;
        match is_theta_smooth(&class, &[1.0], theta, None) {
            Smoothness::Violation {
                l_star, boostable, ..
            } => {
                assert_eq!(l_star, 0);
                assert_eq!(boostable, None);
            }
            _ => panic!("expected violation"),
        }
        // Measure 2 in the same band is boostable.
        let mut bands = BTreeMap::new();
        bands.insert(0, vec![0usize, 1]);
        let class = Classification { bands, l_max: 3 };
        match is_theta_smooth(&class, &[1.0, 1.0], theta, None) {
            Smoothness::Violation { boostable, .. } => assert_eq!(boostable, Some(0)),
            _ => panic!("expected violation"),
        }
    }

    #[test]
    fn smooth_flows_have_no_high_congestion_arc() {
        // theta-smooth => no arc with rho > theta sqrt(m): any such arc
        // sits in a band l with floor(theta^3 8^l) = 0.
        let m = 64;
        let theta: f64 = 0.5;
        let sqrt_m = 8.0;
        let rho = vec![theta * sqrt_m * 1.05];
        let class = classify_congestion(&rho, m, theta);
        match is_theta_smooth(&class, &[1.0], theta, None) {
            Smoothness::Violation { .. } => {}
            Smoothness::Smooth => panic!("high-congestion arc must violate smoothness"),
        }
    }

    #[test]
    fn stretch_identities() {
        let (_, mut sol, cfg) = k22_setup();
        let mut ledger = StretchLedger::new(sol.arc_count(), &cfg);
        let e = 0;
        // alpha = 0 is the identity.
        let before = sol.clone();
        alpha_stretch(&mut sol, e, 0.0, &cfg, &mut ledger).unwrap();
        assert_eq!(sol.slack, before.slack);
        assert_eq!(sol.measure, before.measure);

        // 0-centered arc: beta = alpha exactly; resistance doubles at
        // alpha = 1; mu_hat drift stays at rounding level.
        let mu = sol.mu_hat();
        let r_before = sol.slack[e] / sol.flow[e];
        let nu_before = sol.measure[e];
        alpha_stretch(&mut sol, e, 1.0, &cfg, &mut ledger).unwrap();
        assert!((sol.slack[e] / sol.flow[e] - 2.0 * r_before).abs() < 1e-12);
        assert!((sol.measure[e] / nu_before - 2.0).abs() < 1e-12);
        assert!((sol.mu_hat() - mu).abs() < 1e-12);
        assert!(ledger.total_length_increase > 0.0);
    }

    #[test]
    fn widen_identities() {
        let (_, mut sol, _) = k22_setup();
        let mu = sol.mu_hat();
        let e = 1;
        let r_before = sol.slack[e] / sol.flow[e];
        let (_, beta) = apply_widen(&mut sol, e, 1.0, mu);
        assert!((beta - 1.0).abs() < 1e-12, "0-centered arc: beta = alpha");
        assert!((sol.slack[e] / sol.flow[e] - r_before / 2.0).abs() < 1e-12);
        assert!((sol.mu_hat() - mu).abs() < 1e-12);
    }

    #[test]
    fn random_stretch_preserves_mu_and_centering() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let (_, base, cfg) = k22_setup();
        for _ in 0..30 {
            let mut sol = base.clone();
            // random mild perturbation that keeps near-centering
            for s in sol.slack.iter_mut() {
                *s *= rng.gen_range(0.999..1.001);
            }
            let mut ledger = StretchLedger::new(sol.arc_count(), &cfg);
            let e = rng.gen_range(0..sol.arc_count());
            let alpha = rng.gen_range(0.0..1.0);
            let mu = sol.mu_hat();
            let cent = sol.centrality();
            alpha_stretch(&mut sol, e, alpha, &cfg, &mut ledger).unwrap();
            assert!((sol.mu_hat() - mu).abs() < 1e-12 * mu.max(1.0));
            assert!(sol.centrality() <= cent * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn heavy_threshold_boundary_inclusive() {
        let (_, mut sol, cfg) = k22_setup();
        let params = SmoothnessParams::new(sol.arc_count(), &cfg);
        // Changing one flow changes mu_hat, which moves the threshold;
        // iterate to the fixpoint f_0 = nu_0 * f_heavy(mu_hat).
        for _ in 0..60 {
            let threshold = params.f_heavy(sol.mu_hat(), &cfg);
            sol.flow[0] = sol.measure[0] * threshold;
        }
        let heavy = heavy_arcs(&sol, &params, &cfg);
        assert!(heavy[0], "boundary is inclusive");
        // Shrinking mu_hat shrinks the threshold proportionally.
        let t1 = params.f_heavy(1.0, &cfg);
        let t2 = params.f_heavy(0.5, &cfg);
        assert!((t1 / t2 - 2.0).abs() < 1e-12);
        // Dropping below the (new) threshold makes the arc light again.
        sol.flow[0] *= 0.9;
        let heavy = heavy_arcs(&sol, &params, &cfg);
        assert!(!heavy[0]);
    }

    #[test]
    fn ledger_faults_on_budget_violation() {
        let (_, mut sol, cfg) = k22_setup();
        let mut ledger = StretchLedger::new(sol.arc_count(), &cfg);
        ledger.per_arc_increase[0] = 0.999;
        // a large stretch pushes the per-arc cap over 1
        sol.slack[0] = 1.0;
        let r = alpha_stretch(&mut sol, 0, 0.5, &cfg, &mut ledger);
        assert!(matches!(r, Err(Error::Fault { law: "ledger-arc-length", .. })));
    }

    #[test]
    fn restricted_check_examples() {
        // zero vector is tau-restricted for any tau
        assert!(restricted_check(&[0.0, 0.0], &[1.0, 1.0], 0.0));
        // one arc with |lambda| = 1/2, nu = 1, tau = 1: band 0 holds 1 <= 1
        assert!(restricted_check(&[0.5], &[1.0], 1.0));
        // measure 9 in band 0 violates tau = 8
        assert!(!restricted_check(&[0.6; 9], &[1.0; 9], 8.0));
    }

    #[test]
    fn params_scale_sanely() {
        let cfg = Config::default();
        let p = SmoothnessParams::new(2600, &cfg);
        assert!(p.theta < 1.0 && p.theta > 0.0);
        assert!(p.lambda_hat > 0.0 && p.lambda_hat < 1.0);
        assert!(p.delta_phase <= 0.5);
        assert!(p.t_hat >= 1);
        // the phase budget reaches the global target:
        // lambda^t_hat <= 1/(8m)
        let reached = p.lambda_hat.powi(p.t_hat as i32);
        assert!(reached <= 1.0 / (8.0 * 2600.0) * 1.0001, "{reached}");
    }

    #[test]
    fn phase_on_tiny_instance_reaches_target() {
        let (ws, mut sol, cfg) = k22_setup();
        let params = SmoothnessParams::new(ws.base_arc_count, &cfg);
        let mut ledger = StretchLedger::new(ws.arc_count(), &cfg);
        let telemetry = Telemetry::new();
        let mu0 = sol.mu_hat();
        let mut boosts = 0;
        let out = theta_improvement_phase(
            &ws,
            &mut sol,
            &params,
            &cfg,
            &mut ledger,
            &mut NoHooks,
            &telemetry,
            0,
            &mut boosts,
        )
        .unwrap();
        assert!(out.mu_end <= params.lambda_hat * mu0 * (1.0 + 1e-9));
        assert!(out.progress_steps <= params.progress_cap);
        audit_measure_invariant(&sol, ws.base_arc_count, 0).unwrap();
    }

    #[test]
    fn weighted_norm_agrees_with_manual() {
        let x = [0.5, 2.0];
        let nu = [1.0, 3.0];
        let n4 = weighted_norm(&x, &nu, 4);
        let manual = (1.0 * 0.5f64.powi(4) + 3.0 * 2.0f64.powi(4)).powf(0.25);
        assert!((n4 - manual).abs() < 1e-12);
        let rho = congestion(&[1.0, -3.0], &[2.0, 1.5]);
        assert_eq!(rho, vec![0.5, 2.0]);
    }
}
