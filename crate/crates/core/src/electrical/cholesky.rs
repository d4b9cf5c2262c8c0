//! Sparse LDL^T factorization with a minimum-degree ordering.
//!
//! The symbolic phase (ordering, elimination tree, column counts, assembly
//! positions) is computed once per sparsity pattern; only the numeric phase
//! reruns when edge weights change. This is the workhorse behind every
//! electrical-flow computation, so the numeric path avoids allocation.

use crate::error::{Error, Result};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

/// Minimum-degree elimination order with lazy degree updates.
/// Deterministic: ties break on vertex id.
fn min_degree_order(n: usize, pairs: &[(u32, u32)]) -> Vec<u32> {
    let mut neigh: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
    for &(u, v) in pairs {
        neigh[u as usize].insert(v);
        neigh[v as usize].insert(u);
    }
    let mut heap: BinaryHeap<Reverse<(usize, u32)>> = (0..n as u32)
        .map(|v| Reverse((neigh[v as usize].len(), v)))
        .collect();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((d, v))) = heap.pop() {
        let vi = v as usize;
        if eliminated[vi] || neigh[vi].len() != d {
            continue; // stale entry
        }
        eliminated[vi] = true;
        order.push(v);
        let nb: Vec<u32> = neigh[vi].iter().copied().collect();
        for &u in &nb {
            neigh[u as usize].remove(&v);
        }
        for i in 0..nb.len() {
            for j in (i + 1)..nb.len() {
                let (a, b) = (nb[i] as usize, nb[j] as usize);
                if neigh[a].insert(nb[j]) {
                    neigh[b].insert(nb[i]);
                }
            }
        }
        for &u in &nb {
            heap.push(Reverse((neigh[u as usize].len(), u)));
        }
        neigh[vi].clear();
    }
    order
}

/// Symbolic data for the reduced (grounded) Laplacian of a fixed pattern.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    /// Reduced dimension.
    nr: usize,
    /// Reduced index per original vertex; usize::MAX for grounded vertices.
    pub reduced_of: Vec<usize>,
    /// CSC column pointers of the permuted upper-triangular matrix.
    ap: Vec<usize>,
    /// Row indices (in permuted reduced coordinates).
    ai: Vec<usize>,
    /// Assembly slot in `ax` for each distinct vertex pair (off-diagonal),
    /// or usize::MAX when the pair touches a grounded vertex.
    pair_slot: Vec<usize>,
    /// Assembly slot of each reduced vertex's diagonal entry.
    diag_slot: Vec<usize>,
    /// Pairs as (reduced endpoints) for diagonal accumulation; grounded
    /// endpoints recorded as usize::MAX.
    pair_reduced: Vec<(usize, usize)>,
    /// Elimination tree and column counts of L.
    parent: Vec<isize>,
    lp: Vec<usize>,
    nnz_a: usize,
}

/// Numeric factor L D L^T of the reduced system.
pub struct LdlFactor<'a> {
    sym: &'a SymbolicLdl,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl SymbolicLdl {
    /// Analyze the pattern given by distinct vertex pairs and a set of
    /// grounded vertices (one per connected component).
    pub fn analyze(n: usize, pairs: &[(u32, u32)], grounded: &[bool]) -> SymbolicLdl {
        // Reduced index assignment in minimum-degree order over the
        // subgraph of non-grounded vertices.
        let mut reduced_vertices: Vec<u32> = Vec::new();
        let mut tmp_index = vec![u32::MAX; n];
        for v in 0..n {
            if !grounded[v] {
                tmp_index[v] = reduced_vertices.len() as u32;
                reduced_vertices.push(v as u32);
            }
        }
        let nr = reduced_vertices.len();
        let sub_pairs: Vec<(u32, u32)> = pairs
            .iter()
            .filter(|&&(u, v)| !grounded[u as usize] && !grounded[v as usize])
            .map(|&(u, v)| (tmp_index[u as usize], tmp_index[v as usize]))
            .collect();
        let order = min_degree_order(nr, &sub_pairs);
        // position in elimination order = new index
        let mut newidx = vec![usize::MAX; nr];
        for (k, &v) in order.iter().enumerate() {
            newidx[v as usize] = k;
        }
        let mut reduced_of = vec![usize::MAX; n];
        for (sub, &orig) in reduced_vertices.iter().enumerate() {
            reduced_of[orig as usize] = newidx[sub];
        }

        // Upper-triangular CSC pattern (row <= col in new indices),
        // including the diagonal, with slot positions for assembly.
        // entries: (col, row, pair_id or usize::MAX for diagonals)
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(sub_pairs.len() + nr);
        let mut pair_reduced = Vec::with_capacity(pairs.len());
        for (pid, &(u, v)) in pairs.iter().enumerate() {
            let ru = reduced_of[u as usize];
            let rv = reduced_of[v as usize];
            pair_reduced.push((ru, rv));
            if ru != usize::MAX && rv != usize::MAX {
                let (lo, hi) = if ru < rv { (ru, rv) } else { (rv, ru) };
                entries.push((hi, lo, pid));
            }
        }
        for k in 0..nr {
            entries.push((k, k, usize::MAX));
        }
        entries.sort_unstable();

        let mut ap = vec![0usize; nr + 1];
        let mut ai = Vec::with_capacity(entries.len());
        let mut pair_slot = vec![usize::MAX; pairs.len()];
        let mut diag_slot = vec![usize::MAX; nr];
        for &(col, row, pid) in &entries {
            ap[col + 1] += 1;
            if pid == usize::MAX {
                diag_slot[col] = ai.len();
            } else {
                pair_slot[pid] = ai.len();
            }
            ai.push(row);
        }
        for k in 0..nr {
            ap[k + 1] += ap[k];
        }

        // Elimination tree and column counts (SuiteSparse LDL symbolic).
        let mut parent = vec![-1isize; nr];
        let mut lnz = vec![0usize; nr];
        let mut flag = vec![usize::MAX; nr];
        for k in 0..nr {
            parent[k] = -1;
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                while i < k && flag[i] != k {
                    if parent[i] == -1 {
                        parent[i] = k as isize;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i] as usize;
                }
            }
        }
        let mut lp = vec![0usize; nr + 1];
        for k in 0..nr {
            lp[k + 1] = lp[k] + lnz[k];
        }

        SymbolicLdl {
            nr,
            reduced_of,
            nnz_a: ai.len(),
            ap,
            ai,
            pair_slot,
            diag_slot,
            pair_reduced,
            parent,
            lp,
        }
    }

    pub fn reduced_dim(&self) -> usize {
        self.nr
    }

    pub fn l_nnz(&self) -> usize {
        self.lp[self.nr]
    }

    /// Numeric factorization for the given per-pair weights. The implied
    /// matrix is the grounded graph Laplacian: `diag[v] = sum of incident
    /// weights` (including weights to grounded neighbours), off-diagonal
    /// `-w` per pair.
    pub fn factor(&self, weights: &[f64]) -> Result<LdlFactor<'_>> {
        assert_eq!(weights.len(), self.pair_reduced.len());
        let nr = self.nr;
        let mut ax = vec![0.0f64; self.nnz_a];
        for (pid, &(ru, rv)) in self.pair_reduced.iter().enumerate() {
            let w = weights[pid];
            if ru != usize::MAX {
                ax[self.diag_slot[ru]] += w;
            }
            if rv != usize::MAX {
                ax[self.diag_slot[rv]] += w;
            }
            let slot = self.pair_slot[pid];
            if slot != usize::MAX {
                ax[slot] -= w;
            }
        }

        // Up-looking numeric LDL (SuiteSparse ldl_numeric).
        let mut li = vec![0usize; self.l_nnz()];
        let mut lx = vec![0.0f64; self.l_nnz()];
        let mut d = vec![0.0f64; nr];
        let mut y = vec![0.0f64; nr];
        let mut pattern = vec![0usize; nr];
        let mut flag = vec![usize::MAX; nr];
        let mut lnz = vec![0usize; nr];

        for k in 0..nr {
            let mut top = nr;
            flag[k] = k;
            for p in self.ap[k]..self.ap[k + 1] {
                let mut i = self.ai[p];
                if i > k {
                    continue;
                }
                y[i] += ax[p];
                let mut len = 0usize;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i] as usize;
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for s in top..nr {
                let i = pattern[s];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = self.lp[i] + lnz[i];
                for p in self.lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k] > 0.0) {
                return Err(Error::fault(
                    "spd-factorization",
                    k,
                    format!("nonpositive pivot {} at column {k}", d[k]),
                ));
            }
        }

        Ok(LdlFactor {
            sym: self,
            li,
            lx,
            d,
        })
    }
}

impl LdlFactor<'_> {
    /// Solve the reduced system in place: `b` holds the right-hand side in
    /// reduced permuted coordinates and the solution on return.
    pub fn solve_reduced(&self, b: &mut [f64]) {
        let nr = self.sym.nr;
        for j in 0..nr {
            let bj = b[j];
            if bj != 0.0 {
                for p in self.sym.lp[j]..self.sym.lp[j + 1] {
                    b[self.li[p]] -= self.lx[p] * bj;
                }
            }
        }
        for j in 0..nr {
            b[j] /= self.d[j];
        }
        for j in (0..nr).rev() {
            let mut bj = b[j];
            for p in self.sym.lp[j]..self.sym.lp[j + 1] {
                bj -= self.lx[p] * b[self.li[p]];
            }
            b[j] = bj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solves_small_grounded_laplacian() {
        // Path 0-1-2 with unit weights, grounded at 0.
        let pairs = vec![(0u32, 1u32), (1, 2)];
        let grounded = vec![true, false, false];
        let sym = SymbolicLdl::analyze(3, &pairs, &grounded);
        assert_eq!(sym.reduced_dim(), 2);
        let f = sym.factor(&[1.0, 1.0]).unwrap();
        // Reduced system over {1,2}: [[2,-1],[-1,1]]; solve rhs = (1, 0):
        // solution x1 = 1, x2 = 1.
        let r1 = sym.reduced_of[1];
        let r2 = sym.reduced_of[2];
        let mut b = vec![0.0; 2];
        b[r1] = 1.0;
        f.solve_reduced(&mut b);
        assert!((b[r1] - 1.0).abs() < 1e-12, "{b:?}");
        assert!((b[r2] - 1.0).abs() < 1e-12, "{b:?}");
    }

    #[test]
    fn ordering_covers_all_vertices() {
        let pairs = vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
        let order = min_degree_order(4, &pairs);
        let mut seen = vec![false; 4];
        for &v in &order {
            assert!(!seen[v as usize]);
            seen[v as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn random_laplacians_match_dense_solve() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let n = rng.gen_range(2..=12);
            let mut pairs = Vec::new();
            // random spanning tree plus extras keeps it connected
            for v in 1..n {
                pairs.push((rng.gen_range(0..v) as u32, v as u32));
            }
            for _ in 0..rng.gen_range(0..8) {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                if u != v {
                    pairs.push((u.min(v) as u32, u.max(v) as u32));
                }
            }
            pairs.sort_unstable();
            pairs.dedup();
            let w: Vec<f64> = (0..pairs.len())
                .map(|_| rng.gen_range(0.1..10.0))
                .collect();
            let mut grounded = vec![false; n];
            grounded[0] = true;
            let sym = SymbolicLdl::analyze(n, &pairs, &grounded);
            let f = sym.factor(&w).unwrap();

            // dense reference on the reduced system
            let nr = n - 1;
            let mut a = vec![vec![0.0f64; nr]; nr];
            for (pid, &(u, v)) in pairs.iter().enumerate() {
                let (u, v) = (u as usize, v as usize);
                let ru = sym.reduced_of[u];
                let rv = sym.reduced_of[v];
                if ru != usize::MAX {
                    a[ru][ru] += w[pid];
                }
                if rv != usize::MAX {
                    a[rv][rv] += w[pid];
                }
                if ru != usize::MAX && rv != usize::MAX {
                    a[ru][rv] -= w[pid];
                    a[rv][ru] -= w[pid];
                }
            }
            let rhs: Vec<f64> = (0..nr).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b = rhs.clone();
            f.solve_reduced(&mut b);
            // check A * b = rhs
            for i in 0..nr {
                let mut s = 0.0;
                for j in 0..nr {
                    s += a[i][j] * b[j];
                }
                assert!((s - rhs[i]).abs() < 1e-8, "row {i}: {s} vs {}", rhs[i]);
            }
        }
    }
}
