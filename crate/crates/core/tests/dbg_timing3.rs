use ohmflow::corpus;
use ohmflow::ipm::*;
use ohmflow::reduction::*;
use ohmflow::precond::*;
use ohmflow::accel::*;
use ohmflow::report::Telemetry;
use ohmflow::Config;
use std::time::Instant;

#[test]
fn phase_cost_probe() {
    let mut rng = corpus::rng(42);
    let g = corpus::random_unit_digraph(&mut rng, 60, 300);
    let enc = maxflow_to_bmatching(&g, 0, 59, 1).unwrap();
    let norm = normalize_instance(&enc.instance);
    let mc = bmatching_to_mincost(&norm.instance).unwrap();
    let cfg = Config::default();
    let base_ws = IpmWorkspace::from_mincost(&mc);
    let params = SmoothnessParams::new(base_ws.base_arc_count, &cfg);
    println!("t_hat={} progress_cap={} delta={}", params.t_hat, params.progress_cap, params.delta_phase);
    let mut sol = initial_solution(&mc).unwrap();
    let ctx = AuxContext::new(&mc);
    let mut ledger = StretchLedger::new(ctx.ws.arc_count(), &cfg);
    let telemetry = Telemetry::new();
    let mut boosts = 0;
    for phase in 0..6 {
        let mu0 = sol.mu_hat();
        let t0 = Instant::now();
        let mut aux = augment(&ctx, &mut sol, &cfg, &params).unwrap();
        let t_aug = t0.elapsed();
        let t0 = Instant::now();
        let out = theta_improvement_phase(&ctx.ws, &mut sol, &params, &cfg, &mut ledger, &mut aux, &telemetry, 0, &mut boosts).unwrap();
        let t_phase = t0.elapsed();
        let t0 = Instant::now();
        fix_solution(&ctx, &aux, &mut sol, &base_ws, &mc, &cfg, &params, mu0, phase, &telemetry).unwrap();
        let t_fix = t0.elapsed();
        println!("phase {phase}: augment {t_aug:?} | {} steps in {t_phase:?} | fix {t_fix:?}", out.progress_steps);
    }
}
