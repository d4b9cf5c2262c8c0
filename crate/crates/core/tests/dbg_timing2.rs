use ohmflow::corpus;
use ohmflow::ipm::*;
use ohmflow::reduction::*;
use ohmflow::precond::AuxContext;
use ohmflow::Config;
use std::time::Instant;

#[test]
fn solve_cost_probe() {
    let mut rng = corpus::rng(42);
    let g = corpus::random_unit_digraph(&mut rng, 60, 300);
    let enc = maxflow_to_bmatching(&g, 0, 59, 1).unwrap();
    let norm = normalize_instance(&enc.instance);
    let mc = bmatching_to_mincost(&norm.instance).unwrap();
    let cfg = Config::default();
    println!("mincost: n={} m={}", mc.graph.vertex_count(), mc.arc_count());
    let ws = IpmWorkspace::from_mincost(&mc);
    let sol = initial_solution(&mc).unwrap();

    let t0 = Instant::now();
    let iters = 200;
    for _ in 0..iters {
        let _ = descent_solve(&ws, &sol, &cfg, 0).unwrap();
    }
    println!("base descent_solve: {:?}/iter", t0.elapsed() / iters);

    let ctx = AuxContext::new(&mc);
    let mut sol2 = initial_solution(&mc).unwrap();
    let params = ohmflow::accel::SmoothnessParams::new(ws.base_arc_count, &cfg);
    let _aux = ohmflow::precond::augment(&ctx, &mut sol2, &cfg, &params).unwrap();
    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = descent_solve(&ctx.ws, &sol2, &cfg, 0).unwrap();
    }
    println!("aug descent_solve: {:?}/iter (n={} m={})", t0.elapsed() / iters, ctx.ws.n, ctx.ws.arc_count());
}
