//! Linear solves for the coupled complex boundary system.
//!
//! The complex Robin problem is written as the real 2m×2m block system
//!
//! ```text
//! K = [ A  -F ]    A = D + E
//!     [ F   A ]
//! ```
//!
//! K does not depend on the source, so one factorization serves every
//! forward and adjoint solve on a mesh. K + Kᵀ = diag(2A, 2A) is positive
//! definite, so LU without pivoting exists and is stable; we factor it in
//! skyline (envelope) storage after a reverse Cuthill-McKee reordering of the
//! node graph, interleaving the real and imaginary unknowns of each node.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::FemSystem;
use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Relative residual every solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
const KRYLOV_TOLERANCE: f64 = 1e-12;
/// Envelope entries above which the direct path is abandoned for Krylov.
const DEFAULT_ENVELOPE_BUDGET: usize = 150_000_000;

/// Reverse Cuthill-McKee ordering of a symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize| -> (Vec<usize>, usize) {
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        dist[start] = 0;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (dist, last)
    };
    while order.len() < n {
        // Pseudo-peripheral start: lowest degree unvisited node, then the
        // far end of a BFS sweep from it.
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)).unwrap();
        let (dist, far) = bfs_levels(seed);
        let ecc = dist[far];
        let far_level: Vec<usize> = (0..n).filter(|&v| dist[v] == ecc).collect();
        let start = *far_level.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    (0..a.nrows()).map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect()).collect()
}

/// LU factors in envelope storage for a matrix with symmetric sparsity.
#[derive(Debug, Clone)]
pub struct SkylineLu {
    n: usize,
    /// First column of the envelope of row i (= first row of column i).
    env: Vec<usize>,
    lower_ptr: Vec<usize>,
    /// Strict lower rows: row i holds columns env[i]..i.
    lower: Vec<f64>,
    upper_ptr: Vec<usize>,
    /// Upper columns including the diagonal: column j holds rows env[j]..=j.
    upper: Vec<f64>,
}

impl SkylineLu {
    pub fn envelope_size(matrix: &CsrMatrix) -> usize {
        (0..matrix.nrows()).map(|i| i - matrix.row(i).0.first().map_or(i, |&j| j.min(i))).sum()
    }

    /// Factors `matrix` (already in the desired ordering) without pivoting.
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        let n = matrix.nrows();
        assert_eq!(n, matrix.ncols());
        let mut env: Vec<usize> = (0..n).collect();
        for (i, j, _) in matrix.triplets() {
            let (lo, hi) = (i.min(j), i.max(j));
            env[hi] = env[hi].min(lo);
        }
        let mut lower_ptr = vec![0usize; n + 1];
        let mut upper_ptr = vec![0usize; n + 1];
        for i in 0..n {
            lower_ptr[i + 1] = lower_ptr[i] + (i - env[i]);
            upper_ptr[i + 1] = upper_ptr[i] + (i - env[i] + 1);
        }
        let mut lower = vec![0.0; lower_ptr[n]];
        let mut upper = vec![0.0; upper_ptr[n]];
        for (i, j, v) in matrix.triplets() {
            if j < i {
                lower[lower_ptr[i] + (j - env[i])] = v;
            } else {
                upper[upper_ptr[j] + (i - env[j])] = v;
            }
        }
        let scale = matrix.norm_inf();
        for i in 0..n {
            let ei = env[i];
            // Row i of L, columns ei..i.
            for c in ei..i {
                let lo = ei.max(env[c]);
                let lrow = &lower[lower_ptr[i] + (lo - ei)..lower_ptr[i] + (c - ei)];
                let ucol = &upper[upper_ptr[c] + (lo - env[c])..upper_ptr[c] + (c - env[c])];
                let s = dot(lrow, ucol);
                let diag = upper[upper_ptr[c + 1] - 1];
                let idx = lower_ptr[i] + (c - ei);
                lower[idx] = (lower[idx] - s) / diag;
            }
            // Column i of U, rows ei..=i; the diagonal needs row i of L.
            for r in ei..=i {
                let lo = ei.max(env[r]);
                let lrow = &lower[lower_ptr[r] + (lo - env[r])..lower_ptr[r] + (r - env[r])];
                let ucol = &upper[upper_ptr[i] + (lo - ei)..upper_ptr[i] + (r - ei)];
                let s = dot(lrow, ucol);
                upper[upper_ptr[i] + (r - ei)] -= s;
            }
            let pivot = upper[upper_ptr[i + 1] - 1];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::SingularSystem { row: i, pivot });
            }
        }
        Ok(Self { n, env, lower_ptr, lower, upper_ptr, upper })
    }

    pub fn fill(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let row = &self.lower[self.lower_ptr[i]..self.lower_ptr[i + 1]];
            x[i] -= dot(row, &x[self.env[i]..i]);
        }
        for i in (0..self.n).rev() {
            let col = &self.upper[self.upper_ptr[i]..self.upper_ptr[i + 1]];
            let (above, diag) = col.split_at(col.len() - 1);
            x[i] /= diag[0];
            let xi = x[i];
            for (xr, &u) in x[self.env[i]..i].iter_mut().zip(above) {
                *xr -= u * xi;
            }
        }
    }
}

/// Jacobi-preconditioned BiCGSTAB, used when the envelope is too large.
fn bicgstab(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a.get(i, i)).collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(x, d)| x * d).collect() };
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precond(&p);
        v = a.mul_vec(&y);
        alpha = rho_new / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let z = precond(&s);
        let t = a.mul_vec(&z);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        if norm2(&r) <= tol * bnorm {
            return Ok(x);
        }
    }
    let res: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    if norm2(&res) <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::NotConverged(format!("BiCGSTAB residual {:e} after {max_iter} iterations", norm2(&res) / bnorm)))
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Direct { perm: Vec<usize>, inv: Vec<usize>, lu: SkylineLu },
    Krylov,
}

/// A reusable solver for one fixed sparse matrix: reordered skyline LU with
/// iterative refinement, or BiCGSTAB when the envelope exceeds the budget.
#[derive(Debug)]
pub struct SparseSolver {
    matrix: CsrMatrix,
    backend: Backend,
    solves: AtomicUsize,
}

impl SparseSolver {
    pub fn new(matrix: CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        Self::with_budget(matrix, perm, DEFAULT_ENVELOPE_BUDGET)
    }

    /// `perm[new] = old`. When the permuted envelope exceeds `budget` the
    /// Krylov fallback is used instead of factoring.
    pub fn with_budget(matrix: CsrMatrix, perm: Vec<usize>, budget: usize) -> Result<Self> {
        let n = matrix.nrows();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let permuted = CsrMatrix::from_triplets(n, n, matrix.triplets().map(|(i, j, v)| (inv[i], inv[j], v)).collect());
        let backend =
            if SkylineLu::envelope_size(&permuted) > budget { Backend::Krylov } else { Backend::Direct { lu: SkylineLu::factor(&permuted)?, perm, inv } };
        Ok(Self { matrix, backend, solves: AtomicUsize::new(0) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct { .. })
    }

    pub fn fill(&self) -> usize {
        match &self.backend {
            Backend::Direct { lu, .. } => lu.fill(),
            Backend::Krylov => self.matrix.nnz(),
        }
    }

    /// Number of right-hand sides solved so far.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn apply_lu(&self, perm: &[usize], inv: &[usize], lu: &SkylineLu, rhs: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = perm.iter().map(|&old| rhs[old]).collect();
        lu.solve_in_place(&mut y);
        inv.iter().map(|&new| y[new]).collect()
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x).iter().zip(rhs).map(|(ax, b)| b - ax).collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: rhs.len() });
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let bnorm = norm2(rhs);
        if bnorm == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        match &self.backend {
            Backend::Direct { perm, inv, lu } => {
                let mut x = self.apply_lu(perm, inv, lu, rhs);
                for _ in 0..3 {
                    let r = self.residual(&x, rhs);
                    if norm2(&r) <= 1e-2 * SOLVE_TOLERANCE * bnorm {
                        break;
                    }
                    let dx = self.apply_lu(perm, inv, lu, &r);
                    x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
                }
                let rel = norm2(&self.residual(&x, rhs)) / bnorm;
                if rel > SOLVE_TOLERANCE {
                    return Err(Error::NotConverged(format!("direct solve residual {rel:e}")));
                }
                Ok(x)
            }
            Backend::Krylov => bicgstab(&self.matrix, rhs, KRYLOV_TOLERANCE, 20 * self.dim().max(100)),
        }
    }
}

/// Nodal values of the real and imaginary parts of a complex P1 field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFieldSplit {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Factorization metadata.
#[derive(Debug, Clone, Copy)]
pub struct FactorInfo {
    pub fill: usize,
    pub factor_seconds: f64,
    pub probe_residual: f64,
    pub direct: bool,
}

/// The factored CCBM block matrix of one mesh.
#[derive(Debug)]
pub struct BlockFactorization {
    m: usize,
    solver: SparseSolver,
    pub info: FactorInfo,
}

impl BlockFactorization {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of block solves performed with this factorization.
    pub fn solve_count(&self) -> usize {
        self.solver.solve_count()
    }

    /// Applies K to (re, im).
    pub fn apply(&self, x: &ComplexFieldSplit) -> ComplexFieldSplit {
        let stacked: Vec<f64> = x.re.iter().chain(&x.im).copied().collect();
        let y = self.solver.matrix().mul_vec(&stacked);
        let (re, im) = y.split_at(self.m);
        ComplexFieldSplit { re: re.to_vec(), im: im.to_vec() }
    }

    /// Solves K (re, im) = (rhs_re, rhs_im).
    pub fn solve(&self, rhs_re: &[f64], rhs_im: &[f64]) -> Result<ComplexFieldSplit> {
        for v in [rhs_re, rhs_im] {
            if v.len() != self.m {
                return Err(Error::DimensionMismatch { expected: self.m, got: v.len() });
            }
        }
        let stacked: Vec<f64> = rhs_re.iter().chain(rhs_im).copied().collect();
        let x = self.solver.solve(&stacked)?;
        let (re, im) = x.split_at(self.m);
        Ok(ComplexFieldSplit { re: re.to_vec(), im: im.to_vec() })
    }
}

fn block_matrix(system: &FemSystem) -> CsrMatrix {
    let m = system.m();
    let a = system.robin_free_operator();
    let mut trip = Vec::with_capacity(2 * a.nnz() + 2 * system.f.nnz());
    for (i, j, v) in a.triplets() {
        trip.push((i, j, v));
        trip.push((m + i, m + j, v));
    }
    for (i, j, v) in system.f.triplets() {
        trip.push((i, m + j, -v));
        trip.push((m + i, j, v));
    }
    CsrMatrix::from_triplets(2 * m, 2 * m, trip)
}

/// Node-wise RCM, expanded so each node's (re, im) pair is adjacent.
fn interleaved_ordering(system: &FemSystem) -> Vec<usize> {
    let m = system.m();
    let node_perm = reverse_cuthill_mckee(&adjacency(&system.robin_free_operator()));
    node_perm.iter().flat_map(|&v| [v, m + v]).collect()
}

/// Factors the CCBM block matrix and probes the result with one random
/// right-hand side.
pub fn factorize_ccbm(system: &FemSystem) -> Result<BlockFactorization> {
    factorize_ccbm_with_budget(system, DEFAULT_ENVELOPE_BUDGET)
}

pub fn factorize_ccbm_with_budget(system: &FemSystem, budget: usize) -> Result<BlockFactorization> {
    let start = Instant::now();
    let m = system.m();
    let solver = SparseSolver::with_budget(block_matrix(system), interleaved_ordering(system), budget)?;
    let factor_seconds = start.elapsed().as_secs_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let probe: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = solver.solve(&probe)?;
    let r: Vec<f64> = solver.matrix().mul_vec(&x).iter().zip(&probe).map(|(a, b)| a - b).collect();
    let probe_residual = norm2(&r) / norm2(&probe);
    let info = FactorInfo { fill: solver.fill(), factor_seconds, probe_residual, direct: solver.is_direct() };
    // The probe solve is bookkeeping, not part of any run.
    solver.solves.store(0, Ordering::Relaxed);
    Ok(BlockFactorization { m, solver, info })
}

/// Forward CCBM solve: K (u_re, u_im) = (B p + b2, b1).
pub fn solve_ccbm(fact: &BlockFactorization, system: &FemSystem, p: &[f64]) -> Result<ComplexFieldSplit> {
    if p.len() != system.m0_len() {
        return Err(Error::DimensionMismatch { expected: system.m0_len(), got: p.len() });
    }
    let bp = system.b.mul_vec(p);
    let rhs_re: Vec<f64> = bp.iter().zip(&system.b2).map(|(a, b)| a + b).collect();
    fact.solve(&rhs_re, &system.b1)
}

/// Adjoint solve: K (w_re, w_im) = (E u_im, 0).
pub fn solve_adjoint(fact: &BlockFactorization, system: &FemSystem, u_im: &[f64]) -> Result<ComplexFieldSplit> {
    if u_im.len() != system.m() {
        return Err(Error::DimensionMismatch { expected: system.m(), got: u_im.len() });
    }
    fact.solve(&system.e.mul_vec(u_im), &vec![0.0; system.m()])
}

/// Factored D + E for pure Neumann forward problems.
#[derive(Debug)]
pub struct NeumannSolver {
    solver: SparseSolver,
}

impl NeumannSolver {
    pub fn new(system: &FemSystem) -> Result<Self> {
        let a = system.robin_free_operator();
        let perm = reverse_cuthill_mckee(&adjacency(&a));
        Ok(Self { solver: SparseSolver::new(a, perm)? })
    }

    /// Solves (D + E) u = B p + ∫_Γ g2 ψ.
    pub fn solve(&self, system: &FemSystem, p: &[f64], boundary_nodes: &[usize], g2: &[f64]) -> Result<Vec<f64>> {
        if p.len() != system.m0_len() {
            return Err(Error::DimensionMismatch { expected: system.m0_len(), got: p.len() });
        }
        let load = crate::assembly::assemble_boundary_load(&system.mesh, &system.f, boundary_nodes, g2)?;
        let rhs: Vec<f64> = system.b.mul_vec(p).iter().zip(&load).map(|(a, b)| a + b).collect();
        self.solver.solve(&rhs)
    }
}

/// One-shot Neumann forward solve.
pub fn solve_neumann(system: &FemSystem, p: &[f64], boundary_nodes: &[usize], g2: &[f64]) -> Result<Vec<f64>> {
    NeumannSolver::new(system)?.solve(system, p, boundary_nodes, g2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk_mesh, mark_region};
    use std::sync::Arc;

    fn system(rings: usize, whole: bool) -> FemSystem {
        let mesh = Arc::new(generate_disk_mesh(1.0, rings));
        let region = if whole { mark_region(&mesh, |_| true).unwrap() } else { mark_region(&mesh, |p| p[0].abs() < 0.5 && p[1].abs() < 0.5).unwrap() };
        FemSystem::assemble(mesh, Arc::new(region)).unwrap()
    }

    #[test]
    fn skyline_lu_matches_dense_solution() {
        // Nonsymmetric values on a symmetric pattern.
        let a = CsrMatrix::from_triplets(
            4,
            4,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, -1.0), (1, 1, 5.0), (1, 3, 2.0), (3, 1, 0.5), (2, 2, 3.0), (3, 3, 6.0), (2, 3, -1.0), (3, 2, 1.0)],
        );
        let lu = SkylineLu::factor(&a).unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = a.mul_vec(&x_true);
        lu.solve_in_place(&mut b);
        for (x, t) in b.iter().zip(x_true) {
            assert!((x - t).abs() < 1e-13);
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let s = system(4, true);
        let perm = reverse_cuthill_mckee(&adjacency(&s.d));
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..s.m()).collect::<Vec<_>>());
    }

    #[test]
    fn seven_node_factorization_probe() {
        let s = system(1, true);
        let f = factorize_ccbm(&s).unwrap();
        assert_eq!(f.m(), 7);
        assert!(f.info.probe_residual <= SOLVE_TOLERANCE);
        assert!(f.info.direct);
    }

    #[test]
    fn random_rhs_residual() {
        let s = system(6, false);
        let f = factorize_ccbm(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let re: Vec<f64> = (0..s.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..s.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = f.solve(&re, &im).unwrap();
        let k = f.apply(&x);
        let r: Vec<f64> = k.re.iter().chain(&k.im).zip(re.iter().chain(&im)).map(|(a, b)| a - b).collect();
        let rhs: Vec<f64> = re.iter().chain(&im).copied().collect();
        assert!(norm2(&r) / norm2(&rhs) <= SOLVE_TOLERANCE);
    }

    #[test]
    fn krylov_fallback_meets_the_same_contract() {
        let s = system(5, false);
        let f = factorize_ccbm_with_budget(&s, 0).unwrap();
        assert!(!f.info.direct);
        assert!(f.info.probe_residual <= SOLVE_TOLERANCE);
        let direct = factorize_ccbm(&s).unwrap();
        let p = vec![1.0; s.m0_len()];
        let a = solve_ccbm(&f, &s, &p).unwrap();
        let b = solve_ccbm(&direct, &s, &p).unwrap();
        for (x, y) in a.re.iter().zip(&b.re) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_boundary_coupling_decouples() {
        let mut s = system(3, true);
        s.f = CsrMatrix::zeros(s.m(), s.m());
        let f = factorize_ccbm(&s).unwrap();
        let rhs: Vec<f64> = (0..s.m()).map(|i| i as f64).collect();
        let x = f.solve(&rhs, &vec![0.0; s.m()]).unwrap();
        assert!(x.im.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn constant_source_with_matching_data() {
        let c = 2.5;
        let mut s = system(4, true);
        let nodes = s.mesh.boundary_nodes();
        s.set_boundary_data(&nodes, &vec![c; nodes.len()], &vec![0.0; nodes.len()]).unwrap();
        let f = factorize_ccbm(&s).unwrap();
        let u = solve_ccbm(&f, &s, &vec![c; s.m0_len()]).unwrap();
        assert!(u.re.iter().all(|v| (v - c).abs() < 1e-10));
        assert!(u.im.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_data_zero_solution_and_superposition() {
        let mut s = system(4, false);
        let f0 = factorize_ccbm(&s).unwrap();
        let u = solve_ccbm(&f0, &s, &vec![0.0; s.m0_len()]).unwrap();
        assert!(u.re.iter().chain(&u.im).all(|&v| v == 0.0));
        let w = solve_adjoint(&f0, &s, &vec![0.0; s.m()]).unwrap();
        assert!(w.re.iter().chain(&w.im).all(|&v| v == 0.0));

        let nodes = s.mesh.boundary_nodes();
        let g1: Vec<f64> = (0..nodes.len()).map(|i| (i as f64).sin()).collect();
        s.set_boundary_data(&nodes, &g1, &vec![0.3; nodes.len()]).unwrap();
        let f = factorize_ccbm(&s).unwrap();
        let p1: Vec<f64> = (0..s.m0_len()).map(|i| i as f64 * 0.1).collect();
        let p2: Vec<f64> = (0..s.m0_len()).map(|i| 1.0 - i as f64 * 0.05).collect();
        let p12: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a + b).collect();
        let (a, b, c, z) = (
            solve_ccbm(&f, &s, &p1).unwrap(),
            solve_ccbm(&f, &s, &p2).unwrap(),
            solve_ccbm(&f, &s, &p12).unwrap(),
            solve_ccbm(&f, &s, &vec![0.0; s.m0_len()]).unwrap(),
        );
        for i in 0..s.m() {
            assert!((c.re[i] - (a.re[i] + b.re[i] - z.re[i])).abs() < 1e-9);
            assert!((c.im[i] - (a.im[i] + b.im[i] - z.im[i])).abs() < 1e-9);
        }
        // Adjoint is linear in u_im.
        let wa = solve_adjoint(&f, &s, &a.im).unwrap();
        let scaled: Vec<f64> = a.im.iter().map(|v| 3.0 * v).collect();
        let wb = solve_adjoint(&f, &s, &scaled).unwrap();
        for i in 0..s.m() {
            assert!((wb.im[i] - 3.0 * wa.im[i]).abs() < 1e-9 * (1.0 + wa.im[i].abs()));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = system(2, false);
        let f = factorize_ccbm(&s).unwrap();
        assert!(matches!(solve_ccbm(&f, &s, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(solve_adjoint(&f, &s, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn neumann_constant_source() {
        let s = system(5, true);
        let nodes = s.mesh.boundary_nodes();
        let zeros = vec![0.0; nodes.len()];
        let u = solve_neumann(&s, &vec![1.75; s.m0_len()], &nodes, &zeros).unwrap();
        assert!(u.iter().all(|v| (v - 1.75).abs() < 1e-10));
        let u0 = solve_neumann(&s, &vec![0.0; s.m0_len()], &nodes, &zeros).unwrap();
        assert!(u0.iter().all(|&v| v == 0.0));
    }
}
