//! First-order operator-splitting solver for [`ConicProblem`] instances.
//!
//! Two-block splitting: the packed variables `y` are updated by an
//! equality-penalized least-squares step (a conjugate-gradient solve against
//! a precomputed sparse Gram matrix), then every PSD block is projected onto
//! the cone through a dense eigendecomposition, followed by scaled dual
//! ascent with residual balancing of the penalty parameter.
//!
//! The solve is deterministic: identical inputs and options produce
//! bit-identical iterates. Block projections may run concurrently (they
//! write disjoint buffers and each decomposition is sequential), so the
//! parallel and sequential builds agree bitwise.

pub mod eig;

use faer::Mat;
use num_complex::Complex64;

use crate::conic::{lower_norm_sqr, ConicProblem, PsdBlock};
use crate::par::{self, ExecMode};
use crate::{Error, Result};
use eig::SpectralWorkspace;

/// Stopping tolerances and penalty schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub max_iters: usize,
    /// Initial penalty (ADMM step) `rho`.
    pub penalty: f64,
    /// Multiplicative factor applied when residuals drift apart.
    pub penalty_adapt: f64,
    /// Residual ratio that triggers a penalty update.
    pub penalty_ratio: f64,
    /// Residuals are evaluated every this many iterations.
    pub check_every: usize,
    /// Streams `{iter, obj, r_primal, r_dual}` records to stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            tol_gap: 1e-6,
            max_iters: 50_000,
            penalty: 1.0,
            penalty_adapt: 2.0,
            penalty_ratio: 10.0,
            check_every: 25,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol_primal: tol,
            tol_dual: tol,
            tol_gap: tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0 && self.tol_gap > 0.0) {
            return Err(Error::Precondition("solver tolerances must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Precondition("max_iters must be >= 1".into()));
        }
        if !(self.penalty > 0.0) {
            return Err(Error::Precondition("penalty must be > 0".into()));
        }
        Ok(())
    }
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    /// All residuals below the configured tolerances.
    Optimal,
    /// Iteration budget exhausted; best iterate returned.
    MaxIters,
    /// The equality system appears inconsistent (diverging multipliers).
    Infeasible,
}

/// Scaled primal/dual residuals and relative objective gap.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Solution of a conic solve: packed primal values plus the equality-row
/// multipliers, with the sign convention that the Lagrangian is
/// `objective + <multiplier, rhs - A(primal)>`.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub eq_multipliers: Vec<f64>,
    pub status: SolverStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }

    /// Dual objective `<multipliers, rhs>` of the equality rows.
    pub fn eq_dual_objective(&self, problem: &ConicProblem) -> f64 {
        self.eq_multipliers
            .iter()
            .zip(problem.eq_rhs())
            .map(|(m, b)| m * b)
            .sum()
    }
}

/// Over-relaxation factor of the splitting step.
const OVER_RELAX: f64 = 1.7;

/// Penalty is kept inside this range by the residual balancing.
const RHO_MIN: f64 = 1e-8;
const RHO_MAX: f64 = 1e8;

/// Checks between penalty updates; back-to-back rescaling of the scaled
/// duals destabilizes the over-relaxed iteration.
const ADAPT_COOLDOWN: usize = 4;

/// Divergence guard for the infeasibility heuristic.
const DIVERGENCE_SCALE: f64 = 1e10;

/// Solves the conic program at the requested accuracy.
pub fn solve(problem: &ConicProblem, opts: &SolverOptions) -> Result<SolverResult> {
    solve_with_mode(problem, opts, ExecMode::default())
}

/// [`solve`] with an explicit execution mode; results are identical in both.
pub fn solve_with_mode(
    problem: &ConicProblem,
    opts: &SolverOptions,
    mode: ExecMode,
) -> Result<SolverResult> {
    opts.validate()?;
    let p = problem.n_vars();
    let m_eq = problem.eq_rhs().len();
    let c = problem.objective();
    let b_norm = problem.eq_rhs().iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();

    let gram = GramSystem::build(problem);
    let mut states: Vec<BlockState> = problem.blocks().iter().map(BlockState::new).collect();

    let mut y = vec![0.0; p];
    // Pinned coordinates start at their target values.
    for (row, &rhs) in problem.eq_rows().iter().zip(problem.eq_rhs()) {
        if let [(v, cf)] = row.as_slice() {
            y[*v as usize] = rhs / cf;
        }
    }
    let mut u0 = vec![0.0; m_eq];
    let mut rho = opts.penalty;

    let mut rhs = vec![0.0; p];
    let mut eq_vals = vec![0.0; m_eq];
    let mut cg = CgWorkspace::new(p);

    let mut best: Option<SolverResult> = None;
    let mut iterations = 0;
    let mut checks_since_adapt = ADAPT_COOLDOWN;

    for iter in 1..=opts.max_iters {
        iterations = iter;

        // y-update: (E'E + sum B'WB) y = E'(b - u0) + sum B'W(X - C - U) - c/rho
        rhs.iter_mut().zip(c).for_each(|(r, ci)| *r = -ci / rho);
        for ((row, &bi), &ui) in problem
            .eq_rows()
            .iter()
            .zip(problem.eq_rhs())
            .zip(u0.iter())
        {
            let w = bi - ui;
            for &(v, cf) in row {
                rhs[v as usize] += cf * w;
            }
        }
        for (state, block) in states.iter_mut().zip(problem.blocks()) {
            state.accumulate_rhs(block, &mut rhs);
        }
        gram.solve(&rhs, &mut y, &mut cg);

        let check = iter % opts.check_every == 0 || iter == opts.max_iters;

        // Cone updates: X = proj(B y + C + U), U += B y + C - X.
        let y_ref = &y;
        par::chunks_mut_indexed(mode, &mut states, 1, |i, chunk| {
            chunk[0].update(&problem.blocks()[i], y_ref, rho, check);
        });
        for state in &states {
            if let Some(msg) = &state.error {
                return Err(Error::Numeric(msg.clone()));
            }
        }

        // Equality dual ascent.
        problem.eq_apply(&y, &mut eq_vals);
        let mut eq_res_sq = 0.0;
        for ((u, &val), &bi) in u0.iter_mut().zip(eq_vals.iter()).zip(problem.eq_rhs()) {
            let r = val - bi;
            eq_res_sq += r * r;
            *u += OVER_RELAX * r;
        }

        if !check {
            continue;
        }

        // Residuals.
        let mut prim_sq = eq_res_sq;
        let mut x_norm_sq = 0.0f64;
        let mut bc_norm_sq = 0.0f64;
        for state in &states {
            prim_sq += state.prim_sq;
            x_norm_sq = x_norm_sq.max(state.x_norm_sq);
            bc_norm_sq = bc_norm_sq.max(state.bc_norm_sq);
        }
        let prim_scale = 1.0 + b_norm.max(x_norm_sq.sqrt()).max(bc_norm_sq.sqrt());
        let r_primal = prim_sq.sqrt() / prim_scale;

        // Dual residual: || c - E'mu - sum B'W(S) || with S = -rho U, mu = -rho u0.
        let mut station = c.to_vec();
        for (i, &u) in u0.iter().enumerate() {
            let mu = rho * u;
            for &(v, cf) in &problem.eq_rows()[i] {
                station[v as usize] += cf * mu;
            }
        }
        for (state, block) in states.iter().zip(problem.blocks()) {
            state.accumulate_scaled_dual(block, rho, &mut station);
        }
        let r_dual =
            station.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + c_norm);

        let obj = problem.objective_value(&y);
        let mut dual_obj = 0.0;
        for (&u, &bi) in u0.iter().zip(problem.eq_rhs()) {
            dual_obj -= rho * u * bi;
        }
        for (state, block) in states.iter().zip(problem.blocks()) {
            dual_obj += rho * block.constant_inner(&state.u);
        }
        let gap = (obj - dual_obj).abs() / (1.0 + obj.abs() + dual_obj.abs());

        if !(r_primal.is_finite() && r_dual.is_finite() && gap.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite residuals at iteration {iter}"
            )));
        }

        if opts.verbose {
            let warm: u64 = states.iter().map(|s| s.warm_hits).sum();
            let full: u64 = states.iter().map(|s| s.full_evds).sum();
            let ranks: Vec<usize> = states.iter().map(|s| s.last_n_pos).collect();
            eprintln!(
                "iter={iter} obj={obj:.9e} r_primal={r_primal:.3e} r_dual={r_dual:.3e} gap={gap:.3e} rho={rho:.3e} warm={warm} full={full} ranks={ranks:?}"
            );
        }

        let residuals = Residuals {
            primal: r_primal,
            dual: r_dual,
            gap,
        };
        let combined = r_primal.max(r_dual).max(gap);
        if best
            .as_ref()
            .map(|b| {
                combined
                    < b.residuals
                        .primal
                        .max(b.residuals.dual)
                        .max(b.residuals.gap)
            })
            .unwrap_or(true)
        {
            best = Some(SolverResult {
                primal: y.clone(),
                objective_value: obj,
                eq_multipliers: u0.iter().map(|&u| -rho * u).collect(),
                status: SolverStatus::MaxIters,
                residuals,
                iterations: iter,
            });
        }

        if r_primal <= opts.tol_primal && r_dual <= opts.tol_dual && gap <= opts.tol_gap {
            let mut result = best.take().expect("snapshot exists");
            result.status = SolverStatus::Optimal;
            result.iterations = iter;
            return Ok(result);
        }

        // Diverging equality multipliers signal an inconsistent system.
        let u0_norm = u0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rho * u0_norm > DIVERGENCE_SCALE * (1.0 + b_norm) && r_primal > 1e3 * opts.tol_primal
        {
            let mut result = best.take().expect("snapshot exists");
            result.status = SolverStatus::Infeasible;
            result.iterations = iter;
            return Ok(result);
        }

        // Residual balancing, with a cooldown between updates. Frozen once
        // all residuals come within two decades of their tolerances;
        // adapting near the solution sets off limit cycles.
        checks_since_adapt += 1;
        let near_convergence = r_primal < 100.0 * opts.tol_primal
            && r_dual < 100.0 * opts.tol_dual
            && gap < 100.0 * opts.tol_gap;
        if !near_convergence && checks_since_adapt >= ADAPT_COOLDOWN {
            if r_primal > opts.penalty_ratio * r_dual && rho * opts.penalty_adapt <= RHO_MAX {
                rho *= opts.penalty_adapt;
                let inv = 1.0 / opts.penalty_adapt;
                u0.iter_mut().for_each(|u| *u *= inv);
                states.iter_mut().for_each(|s| s.scale_dual(inv));
                checks_since_adapt = 0;
            } else if r_dual > opts.penalty_ratio * r_primal && rho / opts.penalty_adapt >= RHO_MIN {
                rho /= opts.penalty_adapt;
                let f = opts.penalty_adapt;
                u0.iter_mut().for_each(|u| *u *= f);
                states.iter_mut().for_each(|s| s.scale_dual(f));
                checks_since_adapt = 0;
            }
        }
    }

    let mut result = best.expect("at least one residual check");
    result.iterations = iterations;
    Ok(result)
}

/// Projects a real symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues to zero. Distance-minimizing in Frobenius norm; idempotent.
pub fn project_psd(a: &Mat<f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    let mut ws = SpectralWorkspace::new();
    let (vals, u) = ws.symmetric_eigen(a.as_ref())?;
    let mut out = Mat::<f64>::zeros(n, n);
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        for j in 0..n {
            let w = lambda * u[(j, k)];
            for i in 0..n {
                out[(i, j)] += u[(i, k)] * w;
            }
        }
    }
    // Exact symmetry against rounding in the reconstruction.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Per-block iterate buffers (lower triangles of side x side matrices).
struct BlockState {
    side: usize,
    /// B(y) + C.
    bc: Vec<f64>,
    /// Projected cone variable X.
    x: Vec<f64>,
    /// Scaled dual U.
    u: Vec<f64>,
    /// Scratch for the complex lift of the embedded block. Holds the
    /// previous lift on entry, which prices the drift of the iterate.
    herm: Option<Mat<Complex64>>,
    ws: SpectralWorkspace,
    /// Warm Ritz basis (positive eigenspace plus guard vectors).
    basis: Option<Mat<Complex64>>,
    /// Iterations since the margin was replenished.
    since_full: usize,
    /// Warm attempts suspended until this many iterations pass.
    backoff: usize,
    /// Diagnostics: warm projections taken / full decompositions.
    warm_hits: u64,
    full_evds: u64,
    last_n_pos: usize,
    /// Certified lower bound on the distance of the spectrum outside the
    /// basis from zero; consumed by iterate drift, replenished by a full
    /// decomposition.
    neg_margin: f64,
    prim_sq: f64,
    x_norm_sq: f64,
    bc_norm_sq: f64,
    error: Option<String>,
}

/// Warm projections are only worthwhile above this Hermitian side.
const FAST_MIN_SIDE: usize = 128;
/// Guard vectors kept below the positive eigenspace; wide enough to absorb
/// the near-zero cluster of degenerate boundary directions.
const FAST_GUARDS: usize = 12;
/// Largest warm basis; beyond this the full decomposition is competitive.
const FAST_MAX_BASIS: usize = 56;
/// Checks to skip warm attempts after the certificate dies immediately.
const WARM_BACKOFF: usize = 25;
/// Ritz-pair residual acceptance threshold, relative to the block norm.
const FAST_RES_TOL: f64 = 1e-9;

impl BlockState {
    fn new(block: &PsdBlock) -> Self {
        let side = block.side();
        let herm = block
            .hermitian_side()
            .map(|s| Mat::<Complex64>::zeros(s, s));
        Self {
            side,
            bc: vec![0.0; side * side],
            x: vec![0.0; side * side],
            u: vec![0.0; side * side],
            herm,
            ws: SpectralWorkspace::new(),
            basis: None,
            since_full: 0,
            backoff: 0,
            warm_hits: 0,
            full_evds: 0,
            last_n_pos: 0,
            neg_margin: 0.0,
            prim_sq: 0.0,
            x_norm_sq: 0.0,
            bc_norm_sq: 0.0,
            error: None,
        }
    }

    /// rhs += B'W(X - C - U) = B'W((X - BC - U) + B(y_prev)) : evaluated
    /// directly from the stored lower triangles.
    fn accumulate_rhs(&mut self, block: &PsdBlock, rhs: &mut [f64]) {
        // tmp = X - U - C; reuse bc as scratch (it is rebuilt in update()).
        let side = self.side;
        for r in 0..side {
            let start = r * side;
            for i in start..start + r + 1 {
                self.bc[i] = self.x[i] - self.u[i];
            }
        }
        for &(entry, v) in block.constants() {
            self.bc[entry as usize] -= v;
        }
        block.adjoint_accumulate(&self.bc, rhs);
    }

    fn update(&mut self, block: &PsdBlock, y: &[f64], _rho: f64, check: bool) {
        let side = self.side;
        block.eval_lower(y, &mut self.bc);
        let ovr = OVER_RELAX;
        if ovr != 1.0 {
            for r in 0..side {
                let start = r * side;
                for i in start..start + r + 1 {
                    self.bc[i] = ovr * self.bc[i] + (1.0 - ovr) * self.x[i];
                }
            }
        }
        // V = BC + U stored into U; then X = proj(V), U = V - X.
        for r in 0..side {
            let start = r * side;
            for i in start..start + r + 1 {
                self.u[i] += self.bc[i];
            }
        }
        let projected = if let Some(s) = block.hermitian_side() {
            self.project_hermitian(s)
        } else {
            self.project_real()
        };
        if let Err(e) = projected {
            self.error = Some(e.to_string());
            return;
        }
        for r in 0..side {
            let start = r * side;
            for i in start..start + r + 1 {
                self.u[i] -= self.x[i];
            }
        }
        if check {
            // True violation uses the unrelaxed B(y) + C when OVER_RELAX = 1.
            let mut prim = 0.0;
            for r in 0..side {
                let start = r * side;
                for (off, i) in (start..start + r + 1).enumerate() {
                    let d = self.bc[i] - self.x[i];
                    let w = if off == r { 1.0 } else { 2.0 };
                    prim += w * d * d;
                }
            }
            self.prim_sq = prim;
            self.x_norm_sq = lower_norm_sqr(side, &self.x);
            self.bc_norm_sq = lower_norm_sqr(side, &self.bc);
        }
    }

    /// Projection through the complex lift: the block is the real embedding
    /// of an `s x s` Hermitian matrix, so clipping the Hermitian eigenvalues
    /// and re-embedding is the exact PSD projection at half the cost.
    ///
    /// Large blocks keep a warm Ritz basis spanning the positive eigenspace.
    /// One subspace-iteration step refreshes it per solve iteration; the
    /// refreshed pairs are accepted only when their residuals are tiny and
    /// the spectrum outside the basis is still certified negative (the
    /// certificate is bought by a full decomposition and consumed by the
    /// Frobenius drift of the iterate). Any doubt falls back to the full
    /// decomposition.
    fn project_hermitian(&mut self, s: usize) -> Result<()> {
        let side = self.side;
        // Lift V into H, measuring the drift against the previous lift.
        let mut drift_sq = 0.0;
        let mut scale_sq = 0.0;
        {
            let h = self.herm.as_mut().expect("hermitian scratch");
            for i in 0..s {
                for j in 0..=i {
                    let re = self.u[i * side + j];
                    let im = if i == j { 0.0 } else { self.u[(s + i) * side + j] };
                    let v = Complex64::new(re, im);
                    let w = if i == j { 1.0 } else { 2.0 };
                    drift_sq += w * (v - h[(i, j)]).norm_sqr();
                    scale_sq += w * v.norm_sqr();
                    h[(i, j)] = v;
                }
            }
        }
        let scale = scale_sq.sqrt().max(1.0);
        self.neg_margin -= drift_sq.sqrt();
        self.since_full += 1;
        if self.backoff > 0 {
            self.backoff -= 1;
        }

        if s >= FAST_MIN_SIDE
            && self.backoff == 0
            && self.basis.is_some()
            && self.neg_margin > 1e-7 * scale
            && self.try_warm_projection(s, scale)?
        {
            self.warm_hits += 1;
            return Ok(());
        }

        // Full decomposition; rebuilds the warm basis and its certificate.
        let h = self.herm.as_ref().expect("hermitian scratch");
        let (vals, vecs) = self.ws.hermitian_eigen(h.as_ref())?;
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
        let n_pos = order.iter().take_while(|&&k| vals[k] > 0.0).count();
        self.last_n_pos = n_pos;
        if n_pos <= s - n_pos {
            self.reconstruct_from_pairs(
                s,
                order[..n_pos].iter().map(|&k| vals[k]),
                |col, i| vecs[(i, order[col])],
                false,
            );
        } else {
            // Fewer negative eigenvalues: X = V + sum |lambda| v v^H.
            let neg = &order[n_pos..];
            self.reconstruct_from_pairs(
                s,
                neg.iter().map(|&k| -vals[k]),
                |col, i| vecs[(i, neg[col])],
                true,
            );
        }
        if s >= FAST_MIN_SIDE {
            // A margin that died within a couple of iterations means the
            // spectrum just outside any tractable basis hugs zero; pause
            // the warm attempts.
            if self.since_full <= 2 && self.basis.is_some() {
                self.backoff = WARM_BACKOFF;
            }
            if n_pos + FAST_GUARDS <= FAST_MAX_BASIS {
                let keep = (n_pos + FAST_GUARDS).min(s);
                let basis = Mat::from_fn(s, keep, |i, c| vecs[(i, order[c])]);
                self.neg_margin = if keep < s { -vals[order[keep]] } else { f64::INFINITY };
                self.basis = Some(basis);
            } else {
                self.basis = None;
                self.neg_margin = 0.0;
            }
        }
        self.since_full = 0;
        self.full_evds += 1;
        Ok(())
    }

    /// One subspace-iteration + Rayleigh-Ritz refinement of the warm basis.
    /// Returns false when the refreshed pairs cannot be certified.
    fn try_warm_projection(&mut self, s: usize, scale: f64) -> Result<bool> {
        use faer::linalg::matmul::matmul;
        let h = self.herm.as_ref().expect("hermitian scratch");
        // Mirror the lower triangle for the dense products.
        let hfull = Mat::from_fn(s, s, |i, j| {
            if i >= j {
                h[(i, j)]
            } else {
                h[(j, i)].conj()
            }
        });
        let q_prev = self.basis.as_ref().expect("warm basis");
        let k = q_prev.ncols();
        let mut q = Mat::<Complex64>::zeros(s, k);
        matmul(
            q.as_mut(),
            faer::Accum::Replace,
            hfull.as_ref(),
            q_prev.as_ref(),
            Complex64::ONE,
            faer::Par::Seq,
        );
        // Modified Gram-Schmidt with one reorthogonalization pass.
        for j in 0..k {
            for _ in 0..2 {
                for i in 0..j {
                    let mut dot = Complex64::ZERO;
                    for r in 0..s {
                        dot += q[(r, i)].conj() * q[(r, j)];
                    }
                    for r in 0..s {
                        let corr = dot * q[(r, i)];
                        q[(r, j)] -= corr;
                    }
                }
            }
            let norm = (0..s).map(|r| q[(r, j)].norm_sqr()).sum::<f64>().sqrt();
            if norm <= 1e-10 * scale {
                return Ok(false);
            }
            let inv = Complex64::new(1.0 / norm, 0.0);
            for r in 0..s {
                q[(r, j)] *= inv;
            }
        }
        let mut y = Mat::<Complex64>::zeros(s, k);
        matmul(
            y.as_mut(),
            faer::Accum::Replace,
            hfull.as_ref(),
            q.as_ref(),
            Complex64::ONE,
            faer::Par::Seq,
        );
        let mut t = Mat::<Complex64>::zeros(k, k);
        matmul(
            t.as_mut(),
            faer::Accum::Replace,
            q.adjoint(),
            y.as_ref(),
            Complex64::ONE,
            faer::Par::Seq,
        );
        for i in 0..k {
            for j in 0..i {
                let avg = 0.5 * (t[(i, j)] + t[(j, i)].conj());
                t[(i, j)] = avg;
                t[(j, i)] = avg.conj();
            }
            t[(i, i)] = Complex64::new(t[(i, i)].re, 0.0);
        }
        let (mu, w) = self.ws.hermitian_eigen(t.as_ref())?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| mu[b].partial_cmp(&mu[a]).unwrap());
        // Ritz vectors P = Q W and residuals H P - P diag(mu) = Y W - P diag(mu).
        let mut p = Mat::<Complex64>::zeros(s, k);
        let mut res = Mat::<Complex64>::zeros(s, k);
        matmul(
            p.as_mut(),
            faer::Accum::Replace,
            q.as_ref(),
            w.as_ref(),
            Complex64::ONE,
            faer::Par::Seq,
        );
        matmul(
            res.as_mut(),
            faer::Accum::Replace,
            y.as_ref(),
            w.as_ref(),
            Complex64::ONE,
            faer::Par::Seq,
        );
        for c in 0..k {
            let mut res_sq = 0.0;
            for r in 0..s {
                res_sq += (res[(r, c)] - mu[c] * p[(r, c)]).norm_sqr();
            }
            if res_sq.sqrt() > FAST_RES_TOL * scale {
                return Ok(false);
            }
        }
        let pos: Vec<usize> = order
            .iter()
            .copied()
            .take_while(|&c| mu[c] > 0.0)
            .collect();
        self.reconstruct_from_pairs(s, pos.iter().map(|&c| mu[c]), |col, i| {
            p[(i, pos[col])]
        }, false);
        let reordered = Mat::from_fn(s, k, |i, c| p[(i, order[c])]);
        self.basis = Some(reordered);
        Ok(true)
    }

    /// Writes the projection into the real-embedded lower triangle, either
    /// as `X = sum_i lambda_i v_i v_i^H` from the positive pairs, or as
    /// `X = V + sum_i |lambda_i| v_i v_i^H` over the negative pairs when
    /// those are fewer (subtracting the negative part of V).
    fn reconstruct_from_pairs(
        &mut self,
        s: usize,
        lambdas: impl Iterator<Item = f64> + Clone,
        vec_at: impl Fn(usize, usize) -> Complex64,
        add_to_v: bool,
    ) {
        use faer::linalg::matmul::matmul;
        let side = self.side;
        let r = lambdas.clone().count();
        let mut wmat = Mat::<Complex64>::zeros(s, r);
        for (col, lambda) in lambdas.enumerate() {
            let sc = lambda.sqrt();
            for i in 0..s {
                wmat[(i, col)] = sc * vec_at(col, i);
            }
        }
        let mut part = Mat::<Complex64>::zeros(s, s);
        matmul(
            part.as_mut(),
            faer::Accum::Replace,
            wmat.as_ref(),
            wmat.adjoint(),
            Complex64::ONE,
            faer::Par::Seq,
        );
        let h = self.herm.as_ref().expect("hermitian scratch");
        for i in 0..s {
            for j in 0..=i {
                let v = if add_to_v {
                    h[(i, j)] + part[(i, j)]
                } else {
                    part[(i, j)]
                };
                self.x[i * side + j] = v.re;
                self.x[(s + i) * side + (s + j)] = v.re;
                self.x[(s + i) * side + j] = if i == j { 0.0 } else { v.im };
                if i > j {
                    self.x[(s + j) * side + i] = -v.im;
                }
            }
        }
    }

    fn project_real(&mut self) -> Result<()> {
        let side = self.side;
        let a = Mat::from_fn(side, side, |i, j| {
            if i >= j {
                self.u[i * side + j]
            } else {
                self.u[j * side + i]
            }
        });
        let (vals, vecs) = self.ws.symmetric_eigen(a.as_ref())?;
        let pos = vals.iter().filter(|&&l| l > 0.0).count();
        let use_pos = pos <= side - pos;
        let sel: Vec<usize> = (0..side)
            .filter(|&k| if use_pos { vals[k] > 0.0 } else { vals[k] < 0.0 })
            .collect();
        let mut w = Mat::<f64>::zeros(side, sel.len());
        for (col, &k) in sel.iter().enumerate() {
            let scale = vals[k].abs().sqrt();
            for i in 0..side {
                w[(i, col)] = scale * vecs[(i, k)];
            }
        }
        let mut part = Mat::<f64>::zeros(side, side);
        faer::linalg::matmul::matmul(
            part.as_mut(),
            faer::Accum::Replace,
            w.as_ref(),
            w.transpose(),
            1.0,
            faer::Par::Seq,
        );
        for i in 0..side {
            for j in 0..=i {
                self.x[i * side + j] = if use_pos {
                    part[(i, j)]
                } else {
                    a[(i, j)] + part[(i, j)]
                };
            }
        }
        Ok(())
    }

    /// station += rho * B'W(U)  (the PSD dual is S = -rho U).
    fn accumulate_scaled_dual(&self, block: &PsdBlock, rho: f64, station: &mut [f64]) {
        let side = self.side as u32;
        for t in block.terms() {
            let r = t.entry / side;
            let c = t.entry % side;
            let w = if r == c { 1.0 } else { 2.0 };
            station[t.var as usize] += rho * w * t.coeff * self.u[t.entry as usize];
        }
    }

    fn scale_dual(&mut self, factor: f64) {
        let side = self.side;
        for r in 0..side {
            let start = r * side;
            for i in start..start + r + 1 {
                self.u[i] *= factor;
            }
        }
    }
}

/// Precomputed normal-equation system `G = E'E + sum_j B_j' W B_j`.
///
/// For the assembled problems `G` is banded in the natural variable order
/// (lag couplings only reach nearest neighbors), so the exact solve is a
/// one-time banded Cholesky plus cheap substitutions. Wide-band imports
/// fall back to preconditioned conjugate gradients.
struct GramSystem {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
    inv_diag: Vec<f64>,
    /// Lower band Cholesky factor, `band[r * (bw + 1) + d] = L[r, r - d]`.
    band: Option<BandedCholesky>,
}

/// Bandwidth above which the direct factorization is abandoned.
const MAX_BANDWIDTH: usize = 96;

struct BandedCholesky {
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a banded SPD matrix given in CSR form.
    fn new(p: usize, bw: usize, row_ptr: &[usize], col_idx: &[u32], vals: &[f64]) -> Option<Self> {
        let stride = bw + 1;
        let mut l = vec![0.0f64; p * stride];
        // Dense-in-band copy.
        for r in 0..p {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[k] as usize;
                if c <= r {
                    l[r * stride + (r - c)] = vals[k];
                }
            }
        }
        for i in 0..p {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = l[i * stride + (i - j)];
                let kpast = j.saturating_sub(bw).max(lo);
                for k in kpast..j {
                    sum -= l[i * stride + (i - k)] * l[j * stride + (j - k)];
                }
                if j < i {
                    l[i * stride + (i - j)] = sum / l[j * stride];
                } else {
                    if sum <= 0.0 {
                        return None;
                    }
                    l[i * stride] = sum.sqrt();
                }
            }
        }
        Some(Self { bw, l })
    }

    fn solve(&self, b: &mut [f64]) {
        let p = b.len();
        let stride = self.bw + 1;
        for i in 0..p {
            let lo = i.saturating_sub(self.bw);
            let mut acc = b[i];
            for k in lo..i {
                acc -= self.l[i * stride + (i - k)] * b[k];
            }
            b[i] = acc / self.l[i * stride];
        }
        for i in (0..p).rev() {
            let hi = (i + self.bw).min(p - 1);
            let mut acc = b[i];
            for k in i + 1..=hi {
                acc -= self.l[k * stride + (k - i)] * b[k];
            }
            b[i] = acc / self.l[i * stride];
        }
    }
}

impl GramSystem {
    fn build(problem: &ConicProblem) -> Self {
        use std::collections::HashMap;
        let p = problem.n_vars();
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for block in problem.blocks() {
            let side = block.side() as u32;
            let terms = block.terms();
            let mut start = 0usize;
            while start < terms.len() {
                let entry = terms[start].entry;
                let mut end = start + 1;
                while end < terms.len() && terms[end].entry == entry {
                    end += 1;
                }
                let w = if entry / side == entry % side { 1.0 } else { 2.0 };
                for a in &terms[start..end] {
                    for b in &terms[start..end] {
                        *map.entry((a.var, b.var)).or_insert(0.0) += w * a.coeff * b.coeff;
                    }
                }
                start = end;
            }
        }
        for row in problem.eq_rows() {
            for &(v1, c1) in row {
                for &(v2, c2) in row {
                    *map.entry((v1, v2)).or_insert(0.0) += c1 * c2;
                }
            }
        }
        let mut entries: Vec<((u32, u32), f64)> = map.into_iter().collect();
        entries.sort_unstable_by_key(|(k, _)| *k);
        let mut row_ptr = vec![0usize; p + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        let mut bw = 0usize;
        for ((r, c), v) in entries {
            row_ptr[r as usize + 1] += 1;
            col_idx.push(c);
            vals.push(v);
            bw = bw.max((r as i64 - c as i64).unsigned_abs() as usize);
        }
        for i in 0..p {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut inv_diag = vec![1.0; p];
        for r in 0..p {
            for k in row_ptr[r]..row_ptr[r + 1] {
                if col_idx[k] as usize == r && vals[k] > 0.0 {
                    inv_diag[r] = 1.0 / vals[k];
                }
            }
        }
        let band = if bw <= MAX_BANDWIDTH {
            BandedCholesky::new(p, bw, &row_ptr, &col_idx, &vals)
        } else {
            None
        };
        Self {
            row_ptr,
            col_idx,
            vals,
            inv_diag,
            band,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k] as usize];
            }
            *o = acc;
        }
    }

    fn solve(&self, rhs: &[f64], y: &mut [f64], ws: &mut CgWorkspace) {
        if let Some(band) = &self.band {
            y.copy_from_slice(rhs);
            band.solve(y);
            return;
        }
        self.solve_cg(rhs, y, ws);
    }

    /// Jacobi-preconditioned conjugate gradients, warm-started at `y`.
    /// Fallback for imported problems whose Gram is not banded.
    fn solve_cg(&self, rhs: &[f64], y: &mut [f64], ws: &mut CgWorkspace) {
        let rhs_norm_sq: f64 = rhs.iter().map(|v| v * v).sum();
        if rhs_norm_sq == 0.0 {
            y.fill(0.0);
            return;
        }
        let tol_sq = rhs_norm_sq * 1e-26;
        let CgWorkspace { r, z, d, q } = ws;
        self.apply(y, q);
        for i in 0..y.len() {
            r[i] = rhs[i] - q[i];
        }
        let mut rz = 0.0;
        for i in 0..y.len() {
            z[i] = self.inv_diag[i] * r[i];
            rz += r[i] * z[i];
        }
        d.copy_from_slice(z);
        for _ in 0..4000 {
            let rn: f64 = r.iter().map(|v| v * v).sum();
            if rn <= tol_sq {
                break;
            }
            self.apply(d, q);
            let dq: f64 = d.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
            if dq <= 0.0 {
                break;
            }
            let alpha = rz / dq;
            for i in 0..y.len() {
                y[i] += alpha * d[i];
                r[i] -= alpha * q[i];
            }
            let mut rz_new = 0.0;
            for i in 0..y.len() {
                z[i] = self.inv_diag[i] * r[i];
                rz_new += r[i] * z[i];
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..y.len() {
                d[i] = z[i] + beta * d[i];
            }
        }
    }
}

struct CgWorkspace {
    r: Vec<f64>,
    z: Vec<f64>,
    d: Vec<f64>,
    q: Vec<f64>,
}

impl CgWorkspace {
    fn new(p: usize) -> Self {
        Self {
            r: vec![0.0; p],
            z: vec![0.0; p],
            d: vec![0.0; p],
            q: vec![0.0; p],
        }
    }
}
