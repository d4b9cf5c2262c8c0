//! Weighted Laplacians, electrical sigma-flows, inducing potentials,
//! energy, and the effective-conductance duality lower bound.
//!
//! An electrical sigma-flow is the unique energy-minimizing sigma-flow for
//! resistances `r`; it is induced by vertex potentials via
//! `f_e = (phi_head - phi_tail) / r_e`, and the potentials solve the
//! Laplacian system `L phi = sigma`.

mod cg;
mod cholesky;

pub use cholesky::SymbolicLdl;

use crate::config::SolverKind;
use crate::error::{Error, Result};
use crate::graph::{DemandVector, DirectedMultigraph, FlowAssignment};
use std::fmt::Write as _;
use std::sync::Arc;

/// Per-arc positive resistances.
#[derive(Debug, Clone, PartialEq)]
pub struct Resistances(pub Vec<f64>);

impl Resistances {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (e, &r) in values.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::NonpositiveResistance { arc: e, value: r });
            }
        }
        Ok(Resistances(values))
    }

    pub fn uniform(m: usize, r: f64) -> Self {
        Resistances::new(vec![r; m]).unwrap()
    }

    /// Ratio of the largest to the smallest resistance. Downstream code
    /// treats this as a health metric: approximate solves are only well
    /// behaved while the ratio stays polynomially bounded.
    pub fn ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &r in &self.0 {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if self.0.is_empty() {
            1.0
        } else {
            hi / lo
        }
    }
}

/// Sparsity-pattern-level data for a graph: distinct vertex pairs, the
/// arc-to-pair map, connected components, grounding choices and the
/// symbolic factorization. Shared across resistance updates.
#[derive(Debug)]
pub struct LaplacianStructure {
    n: usize,
    arcs: Vec<(usize, usize)>,
    pairs: Vec<(u32, u32)>,
    pair_of_arc: Vec<usize>,
    comp: Vec<usize>,
    n_comps: usize,
    comp_size: Vec<usize>,
    symbolic: SymbolicLdl,
}

impl LaplacianStructure {
    pub fn new(n: usize, arcs: &[(usize, usize)]) -> Arc<LaplacianStructure> {
        // Distinct undirected pairs; parallel arcs share a pair.
        let mut keyed: Vec<(u32, u32, usize)> = arcs
            .iter()
            .enumerate()
            .map(|(e, &(u, v))| {
                let (lo, hi) = if u < v { (u, v) } else { (v, u) };
                (lo as u32, hi as u32, e)
            })
            .collect();
        keyed.sort_unstable();
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let mut pair_of_arc = vec![0usize; arcs.len()];
        for &(lo, hi, e) in &keyed {
            if pairs.last() != Some(&(lo, hi)) {
                pairs.push((lo, hi));
            }
            pair_of_arc[e] = pairs.len() - 1;
        }

        // Connected components via union-find.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], v: usize) -> usize {
            let mut root = v;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = v;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for &(u, v) in &pairs {
            let ru = find(&mut parent, u as usize);
            let rv = find(&mut parent, v as usize);
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut n_comps = 0;
        let mut grounded = vec![false; n];
        for v in 0..n {
            let root = find(&mut parent, v);
            if comp[root] == usize::MAX {
                comp[root] = n_comps;
                n_comps += 1;
                grounded[root] = true; // lowest id in its component
            }
            comp[v] = comp[root];
        }
        let mut comp_size = vec![0usize; n_comps];
        for v in 0..n {
            comp_size[comp[v]] += 1;
        }

        let symbolic = SymbolicLdl::analyze(n, &pairs, &grounded);
        Arc::new(LaplacianStructure {
            n,
            arcs: arcs.to_vec(),
            pairs,
            pair_of_arc,
            comp,
            n_comps,
            comp_size,
            symbolic,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn component_of(&self, v: usize) -> usize {
        self.comp[v]
    }

    pub fn component_count(&self) -> usize {
        self.n_comps
    }

    /// Whether `v` is the grounded representative of its component.
    pub fn is_grounded(&self, v: usize) -> bool {
        self.symbolic.reduced_of[v] == usize::MAX
    }

    fn pair_weights(&self, r: &Resistances) -> Vec<f64> {
        assert_eq!(r.0.len(), self.arcs.len());
        let mut w = vec![0.0f64; self.pairs.len()];
        for (e, &p) in self.pair_of_arc.iter().enumerate() {
            w[p] += 1.0 / r.0[e];
        }
        w
    }

    fn check_component_balance(&self, sigma: &[f64]) -> Result<()> {
        let mut sums = vec![0.0f64; self.n_comps];
        for v in 0..self.n {
            sums[self.comp[v]] += sigma[v];
        }
        for v in 0..self.n {
            let s = sums[self.comp[v]];
            if s.abs() > 1e-7 {
                return Err(Error::UnbalancedComponentDemand { vertex: v, sum: s });
            }
        }
        Ok(())
    }

    fn shift_mean_zero(&self, phi: &mut [f64]) {
        let mut means = vec![0.0f64; self.n_comps];
        for v in 0..self.n {
            means[self.comp[v]] += phi[v];
        }
        for c in 0..self.n_comps {
            means[c] /= self.comp_size[c] as f64;
        }
        for v in 0..self.n {
            phi[v] -= means[self.comp[v]];
        }
    }

    /// `y = L phi` for the Laplacian with the given pair weights.
    fn apply(&self, weights: &[f64], phi: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (pid, &(u, v)) in self.pairs.iter().enumerate() {
            let w = weights[pid];
            let (u, v) = (u as usize, v as usize);
            let d = phi[u] - phi[v];
            y[u] += w * d;
            y[v] -= w * d;
        }
    }

    /// Solve `L phi = sigma`, returning mean-zero-per-component potentials.
    pub fn solve(&self, r: &Resistances, sigma: &[f64], kind: SolverKind) -> Result<Vec<f64>> {
        if sigma.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "demand entries",
                expected: self.n,
                got: sigma.len(),
            });
        }
        self.check_component_balance(sigma)?;
        let weights = self.pair_weights(r);
        let mut phi = match kind {
            SolverKind::Exact => {
                let factor = self.symbolic.factor(&weights)?;
                let nr = self.symbolic.reduced_dim();
                let mut b = vec![0.0f64; nr];
                for v in 0..self.n {
                    let rv = self.symbolic.reduced_of[v];
                    if rv != usize::MAX {
                        b[rv] = sigma[v];
                    }
                }
                factor.solve_reduced(&mut b);
                let mut phi = vec![0.0f64; self.n];
                for v in 0..self.n {
                    let rv = self.symbolic.reduced_of[v];
                    if rv != usize::MAX {
                        phi[v] = b[rv];
                    }
                }
                // Two rounds of iterative refinement keep the residual near
                // machine precision even when the resistance ratio is large.
                let mut y = vec![0.0f64; self.n];
                for _ in 0..2 {
                    self.apply(&weights, &phi, &mut y);
                    let mut res = vec![0.0f64; nr];
                    for v in 0..self.n {
                        let rv = self.symbolic.reduced_of[v];
                        if rv != usize::MAX {
                            res[rv] = sigma[v] - y[v];
                        }
                    }
                    factor.solve_reduced(&mut res);
                    for v in 0..self.n {
                        let rv = self.symbolic.reduced_of[v];
                        if rv != usize::MAX {
                            phi[v] += res[rv];
                        }
                    }
                }
                phi
            }
            SolverKind::ConjugateGradient { eps } => {
                let problem = cg::CgProblem {
                    n: self.n,
                    pairs: &self.pairs,
                    weights: &weights,
                    comp: &self.comp,
                    n_comps: self.n_comps,
                };
                problem.solve(sigma, eps)?
            }
        };
        self.shift_mean_zero(&mut phi);
        Ok(phi)
    }
}

/// A weighted Laplacian: structure plus the weights induced by one
/// resistance vector. Immutable once built; solving does not mutate.
#[derive(Debug, Clone)]
pub struct LaplacianSystem {
    structure: Arc<LaplacianStructure>,
    resistances: Resistances,
}

/// Assemble the Laplacian of `g` under resistances `r` (`L = B R^-1 B^T`).
pub fn build_laplacian(g: &DirectedMultigraph, r: &Resistances) -> Result<LaplacianSystem> {
    if r.0.len() != g.arc_count() {
        return Err(Error::DimensionMismatch {
            what: "resistances",
            expected: g.arc_count(),
            got: r.0.len(),
        });
    }
    Resistances::new(r.0.clone())?;
    Ok(LaplacianSystem {
        structure: LaplacianStructure::new(g.vertex_count(), g.arcs()),
        resistances: r.clone(),
    })
}

impl LaplacianSystem {
    pub fn structure(&self) -> &Arc<LaplacianStructure> {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.structure.n
    }

    /// Dense assembly, for tests and small-scale inspection.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.structure.n;
        let w = self.structure.pair_weights(&self.resistances);
        let mut a = vec![vec![0.0f64; n]; n];
        for (pid, &(u, v)) in self.structure.pairs.iter().enumerate() {
            let (u, v) = (u as usize, v as usize);
            a[u][u] += w[pid];
            a[v][v] += w[pid];
            a[u][v] -= w[pid];
            a[v][u] -= w[pid];
        }
        a
    }

    /// Coordinate-format text dump (`row col value` per nonzero, 0-based).
    pub fn coordinate_dump(&self) -> String {
        let w = self.structure.pair_weights(&self.resistances);
        let mut diag = vec![0.0f64; self.structure.n];
        let mut s = String::new();
        for (pid, &(u, v)) in self.structure.pairs.iter().enumerate() {
            diag[u as usize] += w[pid];
            diag[v as usize] += w[pid];
            writeln!(s, "{} {} {}", u, v, -w[pid]).unwrap();
            writeln!(s, "{} {} {}", v, u, -w[pid]).unwrap();
        }
        for (v, d) in diag.iter().enumerate() {
            writeln!(s, "{v} {v} {d}").unwrap();
        }
        s
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let w = self.structure.pair_weights(&self.resistances);
        let mut y = vec![0.0; self.structure.n];
        self.structure.apply(&w, phi, &mut y);
        y
    }

    /// Potentials `phi` with `L phi = sigma`, normalized to zero mean per
    /// connected component. Errors when `sigma` does not sum to zero on
    /// every component (no sigma-flow exists then).
    pub fn solve_potentials(&self, sigma: &DemandVector, kind: SolverKind) -> Result<Vec<f64>> {
        self.structure.solve(&self.resistances, &sigma.0, kind)
    }
}

/// The outcome of one electrical-flow computation.
#[derive(Debug, Clone)]
pub struct ElectricalSolve {
    /// Arc flow induced from the potentials: `(phi_head - phi_tail) / r_e`.
    pub flow: FlowAssignment,
    pub potentials: Vec<f64>,
    /// `sum_e r_e f_e^2`.
    pub energy: f64,
    /// Energy norm of the flow correcting the achieved demands to the
    /// requested ones; near zero for the exact solver.
    pub demand_residual: f64,
}

/// Flow induced by potentials under Ohm's law, arc by arc.
pub fn induced_flow(g: &DirectedMultigraph, r: &Resistances, phi: &[f64]) -> FlowAssignment {
    let f = g
        .arcs()
        .iter()
        .enumerate()
        .map(|(e, &(u, v))| (phi[v] - phi[u]) / r.0[e])
        .collect();
    FlowAssignment::new(f)
}

/// Compute the electrical sigma-flow of `g` under resistances `r`.
pub fn electrical_flow(
    g: &DirectedMultigraph,
    r: &Resistances,
    sigma: &DemandVector,
    kind: SolverKind,
) -> Result<ElectricalSolve> {
    let system = build_laplacian(g, r)?;
    let phi = system.solve_potentials(sigma, kind)?;
    let flow = induced_flow(g, r, &phi);
    let energy = energy(&flow, r);

    // Residual demand and the energy of its correcting flow.
    let achieved = g.excess(&flow);
    let res: Vec<f64> = sigma
        .0
        .iter()
        .zip(achieved.iter())
        .map(|(want, got)| want - got)
        .collect();
    let demand_residual = if res.iter().all(|x| x.abs() < 1e-300) {
        0.0
    } else {
        let corr_kind = match kind {
            SolverKind::Exact => SolverKind::Exact,
            SolverKind::ConjugateGradient { eps } => {
                SolverKind::ConjugateGradient { eps: eps * 0.1 }
            }
        };
        match system.structure.solve(r, &res, corr_kind) {
            Ok(phi_r) => {
                let dot: f64 = res.iter().zip(phi_r.iter()).map(|(a, b)| a * b).sum();
                dot.max(0.0).sqrt()
            }
            Err(_) => f64::NAN,
        }
    };

    Ok(ElectricalSolve {
        flow,
        potentials: phi,
        energy,
        demand_residual,
    })
}

/// `E_r(f) = sum_e r_e f_e^2`.
pub fn energy(f: &FlowAssignment, r: &Resistances) -> f64 {
    f.0.iter().zip(r.0.iter()).map(|(fe, re)| re * fe * fe).sum()
}

/// Effective-conductance lower bound: for potentials `phi` with
/// `sigma^T phi = 1` (rescaled internally), the value
/// `sum_e (phi_v - phi_u)^2 / r_e` upper-bounds `1 / E_r(f*)`, with
/// equality at `phi = phi* / E_r(f*)`.
pub fn conductance_lower_bound(
    g: &DirectedMultigraph,
    r: &Resistances,
    sigma: &DemandVector,
    phi: &[f64],
) -> Result<f64> {
    let dot: f64 = sigma.0.iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
    if dot.abs() < 1e-300 {
        return Err(Error::DegeneratePotentials);
    }
    let mut total = 0.0;
    for (e, &(u, v)) in g.arcs().iter().enumerate() {
        let d = (phi[v] - phi[u]) / dot;
        total += d * d / r.0[e];
    }
    Ok(total)
}
