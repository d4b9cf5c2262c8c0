use serde::{Deserialize, Serialize};

/// How linear systems in the electrical-flow computations are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolverKind {
    /// Sparse Cholesky on the grounded system, with iterative refinement.
    Exact,
    /// Jacobi-preconditioned conjugate gradient with energy-error target `eps`.
    ConjugateGradient { eps: f64 },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Exact
    }
}

/// All tunable constants of the solver.
///
/// The defaults are the values the audit inequalities are calibrated
/// against; loosening one of them without re-running the acceptance suite
/// is asking for faults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    /// Centering parameter. Solutions are kept `gamma_hat`-centered.
    pub gamma_hat: f64,
    /// Congestion-band exponent; the smoothness scale is `theta = m^(-eta)`.
    pub eta: f64,
    /// Step-size constant for progress steps inside improvement phases.
    pub c_delta: f64,
    /// Energy sandwich constant: `m*mu/c_e <= E <= c_e*m*mu`.
    pub c_energy: f64,
    /// Guaranteed energy gain per stretch-boost: factor `1 + c_incr*theta^2`.
    pub c_incr: f64,
    /// Cap on energy loss per progress step: factor `1 + c_decr*theta^2*ln(m)`.
    pub c_decr: f64,
    /// Heavy-arc threshold constant.
    pub c_heavy: f64,
    /// Restriction constant for the per-step relative-change vectors.
    pub c_restrict: f64,
    /// Divisor in the auxiliary-arc base flow.
    pub c_aux: f64,
    /// Allowed drift band of auxiliary flows, as a multiplicative factor.
    pub c_freeze: f64,
    /// Separated-sets threshold constant (independent of `c_heavy`).
    pub c_kstar: f64,
    /// Multiplier on the total length-increase budget `m^(1/2-eta)*ln(8m)`.
    pub c_length_budget: f64,
    /// Multiplier `K` in the per-phase fix bound `lambda*(1 + K*m^(-1/2))`.
    pub c_fix: f64,
    /// Multiplier on the demand-repair measure bound of the fixing step.
    pub c_fix_measure: f64,
    /// Generic numeric tolerance (conservation checks, integrality snapping).
    pub tol: f64,
    /// Relative slack granted to audited inequalities.
    pub audit_rel: f64,
    /// Termination threshold is `1/(8m)`; this factor may only shrink it.
    pub termination_scale: f64,
    /// Iteration budget multiplier for the basic path following.
    pub iteration_budget_factor: f64,
    /// Retry limit when a step overshoots centrality and delta is halved.
    pub max_step_retries: u32,
    pub solver: SolverKind,
    /// Run improvement phases without auxiliary-arc preconditioning.
    pub no_precondition: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            gamma_hat: 1.0 / 400.0,
            eta: 1.0 / 14.0,
            c_delta: 2.0,
            c_energy: 64.0,
            c_incr: 1.0 / 36.0,
            c_decr: 8.0,
            c_heavy: 16.0,
            c_restrict: 8.0,
            c_aux: 4.0,
            c_freeze: 8.0,
            c_kstar: 4096.0,
            c_length_budget: 8.0,
            c_fix: 1.0,
            c_fix_measure: 64.0,
            tol: 1e-9,
            audit_rel: 1e-8,
            termination_scale: 1.0,
            iteration_budget_factor: 64.0,
            max_step_retries: 5,
            solver: SolverKind::Exact,
            no_precondition: false,
        }
    }
}

impl Config {
    /// Set a named constant; used by the CLI `--constants k=v` flag.
    pub fn set_constant(&mut self, key: &str, value: f64) -> Result<(), String> {
        match key {
            "gamma_hat" => self.gamma_hat = value,
            "eta" => self.eta = value,
            "c_delta" => self.c_delta = value,
            "c_energy" => self.c_energy = value,
            "c_incr" => self.c_incr = value,
            "c_decr" => self.c_decr = value,
            "c_heavy" => self.c_heavy = value,
            "c_restrict" => self.c_restrict = value,
            "c_aux" => self.c_aux = value,
            "c_freeze" => self.c_freeze = value,
            "c_kstar" => self.c_kstar = value,
            "c_length_budget" => self.c_length_budget = value,
            "c_fix" => self.c_fix = value,
            "c_fix_measure" => self.c_fix_measure = value,
            "tol" => self.tol = value,
            "audit_rel" => self.audit_rel = value,
            "termination_scale" => {
                if value > 1.0 {
                    return Err("termination threshold is configurable only downward".into());
                }
                self.termination_scale = value;
            }
            "iteration_budget_factor" => self.iteration_budget_factor = value,
            _ => return Err(format!("unknown constant `{key}`")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn termination_only_tightens() {
        let mut c = Config::default();
        assert!(c.set_constant("termination_scale", 0.5).is_ok());
        assert!(c.set_constant("termination_scale", 2.0).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = Config::default();
        assert!(c.set_constant("c_bogus", 1.0).is_err());
    }
}
