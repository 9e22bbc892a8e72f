//! Assembly of the atomic-norm SDPs as real-embedded conic programs.
//!
//! A [`ConicProblem`] is `min c'y  s.t.  E y = b,  B_j(y) + C_j >= 0` over a
//! packed real variable vector `y`. Hermitian blocks are stored through the
//! real embedding `H -> [[Re H, -Im H], [Im H, Re H]]`, which is symmetric
//! and PSD exactly when `H` is, with every eigenvalue doubled in
//! multiplicity. Only the lower triangle of each block is stored; the upper
//! triangle is implied by symmetry.

use num_complex::Complex64;

use faer::Mat;

use crate::model::{Measurements, ProblemDims};
use crate::solver::eig::SpectralWorkspace;
use crate::toeplitz::GPoly;
use crate::{Error, Result};

/// Full-form SDP assembly is refused above this `N*M`; the paper-scale path
/// is the decoupled form.
pub const FULL_SDP_CAPACITY: usize = 2000;

/// One affine coefficient of a PSD block: `block[entry] += coeff * y[var]`,
/// with `entry = row * side + col`, `row >= col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTerm {
    pub entry: u32,
    pub var: u32,
    pub coeff: f64,
}

/// A PSD cone block described by its lower-triangle affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    side: usize,
    hermitian_side: Option<usize>,
    terms: Vec<BlockTerm>,
    constants: Vec<(u32, f64)>,
}

impl PsdBlock {
    /// Side length of the (real symmetric) block.
    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    /// `Some(s)` when the block is the real embedding of an `s x s`
    /// Hermitian matrix (`side == 2s`).
    #[inline]
    pub fn hermitian_side(&self) -> Option<usize> {
        self.hermitian_side
    }

    #[inline]
    pub fn terms(&self) -> &[BlockTerm] {
        &self.terms
    }

    #[inline]
    pub fn constants(&self) -> &[(u32, f64)] {
        &self.constants
    }

    /// Writes `B(y) + C` into the lower triangle of `out` (a `side*side`
    /// row-major buffer). The upper triangle is left untouched.
    pub(crate) fn eval_lower(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.side * self.side);
        let side = self.side;
        for r in 0..side {
            out[r * side..r * side + r + 1].fill(0.0);
        }
        for &(entry, v) in &self.constants {
            out[entry as usize] += v;
        }
        for t in &self.terms {
            out[t.entry as usize] += t.coeff * y[t.var as usize];
        }
    }

    /// Accumulates the adjoint `out += B^T(s)`, reading the lower triangle
    /// of the symmetric matrix `s` with off-diagonal weight 2.
    pub(crate) fn adjoint_accumulate(&self, s_lower: &[f64], out: &mut [f64]) {
        let side = self.side as u32;
        for t in &self.terms {
            let r = t.entry / side;
            let c = t.entry % side;
            let w = if r == c { 1.0 } else { 2.0 };
            out[t.var as usize] += w * t.coeff * s_lower[t.entry as usize];
        }
    }

    /// `<C, S>` over the full symmetric matrices, from lower triangles.
    pub(crate) fn constant_inner(&self, s_lower: &[f64]) -> f64 {
        let side = self.side as u32;
        let mut acc = 0.0;
        for &(entry, v) in &self.constants {
            let w = if entry / side == entry % side { 1.0 } else { 2.0 };
            acc += w * v * s_lower[entry as usize];
        }
        acc
    }
}

/// Frobenius norm squared of a symmetric matrix stored as a lower triangle.
pub(crate) fn lower_norm_sqr(side: usize, buf: &[f64]) -> f64 {
    let mut acc = 0.0;
    for r in 0..side {
        let row = &buf[r * side..r * side + r + 1];
        for (c, v) in row.iter().enumerate() {
            acc += if c == r { v * v } else { 2.0 * v * v };
        }
    }
    acc
}

/// Named layout of the decoupled-form variables
/// (`t1` lags, `t2` lags, `Z` entries, column-major).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoupledLayout {
    dims: ProblemDims,
}

impl DecoupledLayout {
    pub fn new(dims: ProblemDims) -> Self {
        Self { dims }
    }

    #[inline]
    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn n_vars(&self) -> usize {
        let (n, m) = (self.dims.n(), self.dims.m());
        (2 * n - 1) + (2 * m - 1) + 2 * n * m
    }

    /// `t1[0]` and `Re t1[k]` for `k >= 1`.
    pub fn t1_re(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            2 * k - 1
        }
    }

    pub fn t1_im(&self, k: usize) -> usize {
        debug_assert!(k >= 1);
        2 * k
    }

    fn t2_offset(&self) -> usize {
        2 * self.dims.n() - 1
    }

    pub fn t2_re(&self, k: usize) -> usize {
        self.t2_offset() + if k == 0 { 0 } else { 2 * k - 1 }
    }

    pub fn t2_im(&self, k: usize) -> usize {
        debug_assert!(k >= 1);
        self.t2_offset() + 2 * k
    }

    fn z_offset(&self) -> usize {
        self.t2_offset() + 2 * self.dims.m() - 1
    }

    /// `Re Z[m, n]`; `vec(Z)` is column-major so this is lifted index `n*M+m`.
    pub fn z_re(&self, m: usize, n: usize) -> usize {
        self.z_offset() + 2 * (n * self.dims.m() + m)
    }

    pub fn z_im(&self, m: usize, n: usize) -> usize {
        self.z_re(m, n) + 1
    }

    fn t1_cvar(&self, k: i64) -> CVar {
        lag_cvar(k, |k| self.t1_re(k), |k| self.t1_im(k))
    }

    fn t2_cvar(&self, k: i64) -> CVar {
        lag_cvar(k, |k| self.t2_re(k), |k| self.t2_im(k))
    }

    pub fn read_t1(&self, y: &[f64]) -> crate::toeplitz::LagGen1D {
        read_lags(y, self.dims.n(), |k| self.t1_cvar(k))
    }

    pub fn read_t2(&self, y: &[f64]) -> crate::toeplitz::LagGen1D {
        read_lags(y, self.dims.m(), |k| self.t2_cvar(k))
    }

    /// Reads `Z` as an `M x N` complex matrix.
    pub fn read_z(&self, y: &[f64]) -> Mat<Complex64> {
        let (n, m) = (self.dims.n(), self.dims.m());
        Mat::from_fn(m, n, |mi, ni| {
            Complex64::new(y[self.z_re(mi, ni)], y[self.z_im(mi, ni)])
        })
    }
}

/// Named layout of the full-form variables (`T` lags, `z`, scalar `t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullLayout {
    dims: ProblemDims,
}

impl FullLayout {
    pub fn new(dims: ProblemDims) -> Self {
        Self { dims }
    }

    #[inline]
    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    /// Canonical index of the lag pair `(l, m)` with `l > 0 || (l == 0 && m > 0)`.
    fn canonical(&self, l: i64, m: i64) -> usize {
        let mm = self.dims.m() as i64;
        debug_assert!(l > 0 || (l == 0 && m > 0));
        if l == 0 {
            (m - 1) as usize
        } else {
            (mm - 1) as usize + ((l - 1) * (2 * mm - 1) + m + mm - 1) as usize
        }
    }

    pub fn t00(&self) -> usize {
        0
    }

    pub fn t_re(&self, l: i64, m: i64) -> usize {
        if l == 0 && m == 0 {
            0
        } else if l > 0 || (l == 0 && m > 0) {
            1 + 2 * self.canonical(l, m)
        } else {
            1 + 2 * self.canonical(-l, -m)
        }
    }

    fn t_cvar(&self, l: i64, m: i64) -> CVar {
        if l == 0 && m == 0 {
            CVar::real(0)
        } else if l > 0 || (l == 0 && m > 0) {
            let c = self.canonical(l, m);
            CVar::complex(1 + 2 * c, 2 + 2 * c)
        } else {
            let c = self.canonical(-l, -m);
            CVar::complex(1 + 2 * c, 2 + 2 * c).conj()
        }
    }

    fn z_offset(&self) -> usize {
        let (n, m) = (self.dims.n(), self.dims.m());
        (2 * n - 1) * (2 * m - 1)
    }

    pub fn z_re(&self, i: usize) -> usize {
        self.z_offset() + 2 * i
    }

    pub fn z_im(&self, i: usize) -> usize {
        self.z_offset() + 2 * i + 1
    }

    pub fn t_scalar(&self) -> usize {
        self.z_offset() + 2 * self.dims.total()
    }

    pub fn n_vars(&self) -> usize {
        self.t_scalar() + 1
    }

    pub fn read_t_lags(&self, y: &[f64]) -> crate::toeplitz::LagGen2D {
        let (n, m) = (self.dims.n(), self.dims.m());
        let mut gen = crate::toeplitz::LagGen2D::zeros(n, m);
        for l in -(n as i64 - 1)..=(n as i64 - 1) {
            for mm in -(m as i64 - 1)..=(m as i64 - 1) {
                *gen.get_mut(l, mm) = self.t_cvar(l, mm).value(y);
            }
        }
        gen
    }

    pub fn read_z_vec(&self, y: &[f64]) -> Vec<Complex64> {
        (0..self.dims.total())
            .map(|i| Complex64::new(y[self.z_re(i)], y[self.z_im(i)]))
            .collect()
    }
}

/// How the packed variables map back to named quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Packing {
    Decoupled(DecoupledLayout),
    Full(FullLayout),
    /// Imported or hand-built problems without a named layout.
    Opaque,
}

/// A real-embedded conic program with linear objective, affine equality
/// rows and PSD blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    n_vars: usize,
    objective: Vec<f64>,
    eq_rows: Vec<Vec<(u32, f64)>>,
    eq_rhs: Vec<f64>,
    blocks: Vec<PsdBlock>,
    packing: Packing,
}

impl ConicProblem {
    #[inline]
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    #[inline]
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    #[inline]
    pub fn eq_rows(&self) -> &[Vec<(u32, f64)>] {
        &self.eq_rows
    }

    #[inline]
    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    #[inline]
    pub fn blocks(&self) -> &[PsdBlock] {
        &self.blocks
    }

    #[inline]
    pub fn packing(&self) -> &Packing {
        &self.packing
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }

    pub(crate) fn eq_apply(&self, y: &[f64], out: &mut [f64]) {
        for (row, o) in self.eq_rows.iter().zip(out.iter_mut()) {
            *o = row.iter().map(|&(v, c)| c * y[v as usize]).sum();
        }
    }


    /// Materializes block `idx` at `y` as a dense symmetric matrix.
    pub fn block_dense(&self, idx: usize, y: &[f64]) -> Mat<f64> {
        let b = &self.blocks[idx];
        let side = b.side();
        let mut buf = vec![0.0; side * side];
        b.eval_lower(y, &mut buf);
        Mat::from_fn(side, side, |r, c| {
            if r >= c {
                buf[r * side + c]
            } else {
                buf[c * side + r]
            }
        })
    }

    /// Equality violation and per-block minimum eigenvalues at a point.
    pub fn check_point(&self, y: &[f64]) -> Result<FeasibilityReport> {
        if y.len() != self.n_vars {
            return Err(Error::Dimension {
                what: "packed point",
                expected: self.n_vars,
                got: y.len(),
            });
        }
        let mut eq = vec![0.0; self.eq_rhs.len()];
        self.eq_apply(y, &mut eq);
        let max_eq_violation = eq
            .iter()
            .zip(&self.eq_rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut ws = SpectralWorkspace::new();
        let mut block_min_eigs = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let dense = self.block_dense(i, y);
            let min = if let Some(s) = b.hermitian_side() {
                let h = Mat::from_fn(s, s, |r, c| {
                    Complex64::new(dense[(r, c)], dense[(s + r, c)])
                });
                let (vals, _) = ws.hermitian_eigen(h.as_ref())?;
                vals.into_iter().fold(f64::INFINITY, f64::min)
            } else {
                let (vals, _) = ws.symmetric_eigen(dense.as_ref())?;
                vals.into_iter().fold(f64::INFINITY, f64::min)
            };
            block_min_eigs.push(min);
        }
        Ok(FeasibilityReport {
            max_eq_violation,
            block_min_eigs,
        })
    }
}

/// Constraint residuals of a candidate point.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub max_eq_violation: f64,
    pub block_min_eigs: Vec<f64>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_eq_violation <= tol && self.block_min_eigs.iter().all(|&e| e >= -tol)
    }
}

/// Builder for hand-rolled or imported problems.
pub struct ConicProblemBuilder {
    n_vars: usize,
    objective: Vec<f64>,
    eq_rows: Vec<Vec<(u32, f64)>>,
    eq_rhs: Vec<f64>,
    blocks: Vec<PsdBlock>,
    packing: Packing,
}

impl ConicProblemBuilder {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            blocks: Vec::new(),
            packing: Packing::Opaque,
        }
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) -> &mut Self {
        self.objective[var] = coeff;
        self
    }

    pub fn add_equality(&mut self, row: Vec<(u32, f64)>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    /// Adds a real symmetric PSD block; returns its index.
    pub fn add_block(&mut self, side: usize) -> usize {
        self.blocks.push(PsdBlock {
            side,
            hermitian_side: None,
            terms: Vec::new(),
            constants: Vec::new(),
        });
        self.blocks.len() - 1
    }

    pub fn add_term(&mut self, block: usize, row: usize, col: usize, var: usize, coeff: f64) {
        let b = &mut self.blocks[block];
        debug_assert!(row >= col && row < b.side);
        b.terms.push(BlockTerm {
            entry: (row * b.side + col) as u32,
            var: var as u32,
            coeff,
        });
    }

    pub fn add_constant(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let b = &mut self.blocks[block];
        debug_assert!(row >= col && row < b.side);
        b.constants.push(((row * b.side + col) as u32, value));
    }

    /// Declares a block to be the real embedding of an `s x s` Hermitian
    /// matrix (`side` must equal `2s`); the solver then projects it through
    /// the cheaper complex decomposition.
    pub fn mark_hermitian(&mut self, block: usize, herm_side: usize) {
        let b = &mut self.blocks[block];
        assert_eq!(b.side, 2 * herm_side);
        b.hermitian_side = Some(herm_side);
    }

    pub(crate) fn push_hermitian_block(&mut self, block: PsdBlock) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub(crate) fn set_packing(&mut self, packing: Packing) {
        self.packing = packing;
    }

    pub fn build(mut self) -> Result<ConicProblem> {
        if self.blocks.is_empty() {
            return Err(Error::Problem("no PSD blocks".into()));
        }
        let mut used = vec![false; self.n_vars];
        for b in &mut self.blocks {
            canonicalize_terms(&mut b.terms);
            canonicalize_constants(&mut b.constants);
            for t in &b.terms {
                if t.var as usize >= self.n_vars {
                    return Err(Error::Problem(format!("term variable {} out of range", t.var)));
                }
                if !t.coeff.is_finite() {
                    return Err(Error::Problem("non-finite block coefficient".into()));
                }
                used[t.var as usize] = true;
            }
        }
        for row in &self.eq_rows {
            if row.is_empty() {
                return Err(Error::Problem("empty equality row".into()));
            }
            for &(v, c) in row {
                if v as usize >= self.n_vars {
                    return Err(Error::Problem(format!("equality variable {v} out of range")));
                }
                if !c.is_finite() {
                    return Err(Error::Problem("non-finite equality coefficient".into()));
                }
                used[v as usize] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Problem(format!(
                "variable {v} appears in no block or equality row"
            )));
        }
        Ok(ConicProblem {
            n_vars: self.n_vars,
            objective: self.objective,
            eq_rows: self.eq_rows,
            eq_rhs: self.eq_rhs,
            blocks: self.blocks,
            packing: self.packing,
        })
    }
}

fn canonicalize_terms(terms: &mut Vec<BlockTerm>) {
    terms.sort_unstable_by_key(|t| (t.entry, t.var));
    let mut out: Vec<BlockTerm> = Vec::with_capacity(terms.len());
    for t in terms.iter() {
        if let Some(last) = out.last_mut() {
            if last.entry == t.entry && last.var == t.var {
                last.coeff += t.coeff;
                continue;
            }
        }
        out.push(*t);
    }
    out.retain(|t| t.coeff != 0.0);
    *terms = out;
}

fn canonicalize_constants(constants: &mut Vec<(u32, f64)>) {
    constants.sort_unstable_by_key(|c| c.0);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(constants.len());
    for &(e, v) in constants.iter() {
        if let Some(last) = out.last_mut() {
            if last.0 == e {
                last.1 += v;
                continue;
            }
        }
        out.push((e, v));
    }
    out.retain(|c| c.1 != 0.0);
    *constants = out;
}

/// A complex value formed from packed real variables:
/// `sign_re * y[re] + j * sign_im * y[im]`.
#[derive(Debug, Clone, Copy)]
struct CVar {
    re: u32,
    re_sign: f64,
    im: Option<(u32, f64)>,
}

impl CVar {
    fn real(re: usize) -> Self {
        Self {
            re: re as u32,
            re_sign: 1.0,
            im: None,
        }
    }

    fn complex(re: usize, im: usize) -> Self {
        Self {
            re: re as u32,
            re_sign: 1.0,
            im: Some((im as u32, 1.0)),
        }
    }

    fn conj(self) -> Self {
        Self {
            im: self.im.map(|(i, s)| (i, -s)),
            ..self
        }
    }

    fn value(&self, y: &[f64]) -> Complex64 {
        let re = self.re_sign * y[self.re as usize];
        let im = self.im.map(|(i, s)| s * y[i as usize]).unwrap_or(0.0);
        Complex64::new(re, im)
    }
}

fn lag_cvar(k: i64, re: impl Fn(usize) -> usize, im: impl Fn(usize) -> usize) -> CVar {
    if k == 0 {
        CVar::real(re(0))
    } else if k > 0 {
        CVar::complex(re(k as usize), im(k as usize))
    } else {
        CVar::complex(re((-k) as usize), im((-k) as usize)).conj()
    }
}

fn read_lags(
    y: &[f64],
    block: usize,
    cvar: impl Fn(i64) -> CVar,
) -> crate::toeplitz::LagGen1D {
    let mut gen = crate::toeplitz::LagGen1D::zeros(block);
    for k in -(block as i64 - 1)..=(block as i64 - 1) {
        *gen.get_mut(k) = cvar(k).value(y);
    }
    gen
}

/// Accumulates the real embedding of a Hermitian block whose entries are
/// complex-linear in the packed variables. Callers add entries of the lower
/// triangle only (`i >= j`); the mirror positions follow from Hermitianity.
struct HermitianBlockBuilder {
    herm_side: usize,
    terms: Vec<BlockTerm>,
}

impl HermitianBlockBuilder {
    fn new(herm_side: usize) -> Self {
        Self {
            herm_side,
            terms: Vec::new(),
        }
    }

    #[inline]
    fn push(&mut self, row: usize, col: usize, var: u32, coeff: f64) {
        debug_assert!(row >= col);
        let side = 2 * self.herm_side;
        self.terms.push(BlockTerm {
            entry: (row * side + col) as u32,
            var,
            coeff,
        });
    }

    /// Adds `w * v` to the Hermitian entry `H[i, j]`, `i >= j`.
    fn add(&mut self, i: usize, j: usize, w: Complex64, v: CVar) {
        debug_assert!(i >= j);
        let s = self.herm_side;
        // Re H[i,j] = Re(w)*re - Im(w)*im, placed at (i, j) and (s+i, s+j).
        // Im H[i,j] = Im(w)*re + Re(w)*im, placed at (s+i, j); the Hermitian
        // mirror contributes -Im H[i,j] at (s+j, i) when i > j.
        let re_re = w.re * v.re_sign;
        if re_re != 0.0 {
            self.push(i, j, v.re, re_re);
            self.push(s + i, s + j, v.re, re_re);
        }
        let im_re = w.im * v.re_sign;
        if im_re != 0.0 {
            self.push(s + i, j, v.re, im_re);
            if i > j {
                self.push(s + j, i, v.re, -im_re);
            }
        }
        if let Some((imv, im_sign)) = v.im {
            let re_im = -w.im * im_sign;
            if re_im != 0.0 {
                self.push(i, j, imv, re_im);
                self.push(s + i, s + j, imv, re_im);
            }
            let im_im = w.re * im_sign;
            if im_im != 0.0 {
                self.push(s + i, j, imv, im_im);
                if i > j {
                    self.push(s + j, i, imv, -im_im);
                }
            }
        }
    }

    fn finish(self) -> PsdBlock {
        PsdBlock {
            side: 2 * self.herm_side,
            hermitian_side: Some(self.herm_side),
            terms: self.terms,
            constants: Vec::new(),
        }
    }
}

fn check_measurements(x: &Measurements, dims: ProblemDims) -> Result<()> {
    if x.len() != dims.n() {
        return Err(Error::Dimension {
            what: "measurements",
            expected: dims.n(),
            got: x.len(),
        });
    }
    Ok(())
}

fn push_equalities(builder: &mut ConicProblemBuilder, x: &Measurements, re_of: impl Fn(usize) -> usize) {
    for (n, s) in x.samples().iter().enumerate() {
        let re = re_of(n);
        builder.add_equality(vec![(re as u32, 1.0)], s.re);
        builder.add_equality(vec![((re + 1) as u32, 1.0)], s.im);
    }
}

/// Assembles the decoupled two-dimensional SDP:
/// two one-fold Toeplitz blocks of sides `N` and `M` coupled through `Z`,
/// the rate band enforced on the `t2` lags, and `x = P vec(Z)`.
pub fn assemble_decoupled(
    x: &Measurements,
    rate_bound: f64,
    dims: ProblemDims,
) -> Result<ConicProblem> {
    check_measurements(x, dims)?;
    let g = GPoly::from_rate_bound(rate_bound)?;
    let (n, m) = (dims.n(), dims.m());
    let layout = DecoupledLayout::new(dims);
    let mut builder = ConicProblemBuilder::new(layout.n_vars());

    // Objective: (N t1[0] + M t2[0]) / (2 sqrt(NM)).
    let scale = 2.0 * ((n * m) as f64).sqrt();
    builder.set_objective(layout.t1_re(0), n as f64 / scale);
    builder.set_objective(layout.t2_re(0), m as f64 / scale);

    // Block 1: [[toep(t1), Z^H], [Z, toep(t2)]], Hermitian side N + M.
    let mut b1 = HermitianBlockBuilder::new(n + m);
    for i in 0..n {
        for j in 0..=i {
            b1.add(i, j, Complex64::ONE, layout.t1_cvar((i - j) as i64));
        }
    }
    for mi in 0..m {
        for ni in 0..n {
            let zv = CVar::complex(layout.z_re(mi, ni), layout.z_im(mi, ni));
            b1.add(n + mi, ni, Complex64::ONE, zv);
        }
    }
    for i in 0..m {
        for j in 0..=i {
            b1.add(n + i, n + j, Complex64::ONE, layout.t2_cvar((i - j) as i64));
        }
    }
    builder.push_hermitian_block(b1.finish());

    // Block 2: toep(t2^g), Hermitian side M - 1.
    let mut b2 = HermitianBlockBuilder::new(m - 1);
    let r1 = g.r1();
    for i in 0..m - 1 {
        for j in 0..=i {
            let k = (i - j) as i64;
            b2.add(i, j, r1.conj(), layout.t2_cvar(k + 1));
            b2.add(i, j, Complex64::new(g.r0, 0.0), layout.t2_cvar(k));
            b2.add(i, j, r1, layout.t2_cvar(k - 1));
        }
    }
    builder.push_hermitian_block(b2.finish());

    // x = P vec(Z): pins Z[n^2, n].
    push_equalities(&mut builder, x, |ni| layout.z_re(ni * ni, ni));

    builder.set_packing(Packing::Decoupled(layout));
    builder.build()
}

/// Assembles the full SDP over the two-fold Toeplitz lift. Gated to small
/// problems; `N = 25` would make the first block `14425 x 14425`.
pub fn assemble_full(x: &Measurements, rate_bound: f64, dims: ProblemDims) -> Result<ConicProblem> {
    check_measurements(x, dims)?;
    if dims.total() > FULL_SDP_CAPACITY {
        return Err(Error::Capacity {
            what: "full SDP lift",
            size: dims.total(),
            limit: FULL_SDP_CAPACITY,
        });
    }
    let g = GPoly::from_rate_bound(rate_bound)?;
    let (n, m, nm) = (dims.n(), dims.m(), dims.total());
    let layout = FullLayout::new(dims);
    let mut builder = ConicProblemBuilder::new(layout.n_vars());

    // Objective: trace(Toep(T)) / (2 |J|) + t / 2 = T[0,0]/2 + t/2.
    builder.set_objective(layout.t00(), 0.5);
    builder.set_objective(layout.t_scalar(), 0.5);

    // Block A: [[Toep(T), z], [z^H, t]], Hermitian side NM + 1.
    let mut ba = HermitianBlockBuilder::new(nm + 1);
    for r in 0..nm {
        let (p, i) = ((r / m) as i64, (r % m) as i64);
        for c in 0..=r {
            let (q, j) = ((c / m) as i64, (c % m) as i64);
            ba.add(r, c, Complex64::ONE, layout.t_cvar(p - q, i - j));
        }
    }
    for c in 0..nm {
        let zv = CVar::complex(layout.z_re(c), layout.z_im(c)).conj();
        ba.add(nm, c, Complex64::ONE, zv);
    }
    ba.add(nm, nm, Complex64::ONE, CVar::real(layout.t_scalar()));
    builder.push_hermitian_block(ba.finish());

    // Block B: Toep(T^g), Hermitian side N(M-1).
    let mut bb = HermitianBlockBuilder::new(n * (m - 1));
    let r1 = g.r1();
    let mg = m - 1;
    for r in 0..n * mg {
        let (p, i) = ((r / mg) as i64, (r % mg) as i64);
        for c in 0..=r {
            let (q, j) = ((c / mg) as i64, (c % mg) as i64);
            let (l, k) = (p - q, i - j);
            bb.add(r, c, r1.conj(), layout.t_cvar(l, k + 1));
            bb.add(r, c, Complex64::new(g.r0, 0.0), layout.t_cvar(l, k));
            bb.add(r, c, r1, layout.t_cvar(l, k - 1));
        }
    }
    builder.push_hermitian_block(bb.finish());

    push_equalities(&mut builder, x, |ni| layout.z_re(dims.measured_index(ni)));

    builder.set_packing(Packing::Full(layout));
    builder.build()
}

/// Packs the ground-truth feasible point of the decoupled SDP. With the
/// column-major `vec` convention, `Z = sum_k c_k b a^T` (unconjugated `a`),
/// so the rank-one certificates are `conj(a) conj(a)^H` on the `t1` side:
/// `t1` carries lags at `-f_k`, `t2` carries lags at `theta_k`, and the
/// objective value is `sum_k |c_k|`.
pub fn decoupled_truth_point(scene: &crate::model::ChirpScene) -> Vec<f64> {
    let dims = scene.dims();
    let (n, m) = (dims.n(), dims.m());
    let layout = DecoupledLayout::new(dims);
    let mut y = vec![0.0; layout.n_vars()];
    let ratio = (m as f64 / n as f64).sqrt();
    let mut t1 = crate::toeplitz::LagGen1D::zeros(n);
    let mut t2 = crate::toeplitz::LagGen1D::zeros(m);
    for comp in scene.components() {
        let w = comp.amplitude().norm();
        let f_neg = if comp.freq() == 0.0 { 0.0 } else { 1.0 - comp.freq() };
        t1.add_scaled_atom(f_neg, w * ratio);
        t2.add_scaled_atom(comp.rate(), w / ratio);
        let a = crate::model::atom_a(comp.freq(), dims).expect("valid freq");
        let b = crate::model::atom_b(comp.rate(), dims).expect("valid rate");
        for (mi, bm) in b.iter().enumerate() {
            for (ni, an) in a.iter().enumerate() {
                let z = comp.amplitude() * bm * an;
                y[layout.z_re(mi, ni)] += z.re;
                y[layout.z_im(mi, ni)] += z.im;
            }
        }
    }
    y[layout.t1_re(0)] = t1.get(0).re;
    for k in 1..n {
        y[layout.t1_re(k)] = t1.get(k as i64).re;
        y[layout.t1_im(k)] = t1.get(k as i64).im;
    }
    y[layout.t2_re(0)] = t2.get(0).re;
    for k in 1..m {
        y[layout.t2_re(k)] = t2.get(k as i64).re;
        y[layout.t2_im(k)] = t2.get(k as i64).im;
    }
    y
}

/// Packs the ground-truth feasible point of the full SDP:
/// `T = sum_k |c_k|` atom lag products, `z = z*`, `t = sum_k |c_k|`.
pub fn full_truth_point(scene: &crate::model::ChirpScene) -> Vec<f64> {
    let dims = scene.dims();
    let layout = FullLayout::new(dims);
    let mut y = vec![0.0; layout.n_vars()];
    let mut t_lags = crate::toeplitz::LagGen2D::for_dims(dims);
    let mut t_scalar = 0.0;
    for comp in scene.components() {
        let w = comp.amplitude().norm();
        t_lags.add_scaled_atom(comp.freq(), comp.rate(), w);
        t_scalar += w;
        let atom = crate::model::atom_d(comp.freq(), comp.rate(), dims).expect("valid atom");
        for (i, d) in atom.iter().enumerate() {
            let z = comp.amplitude() * d;
            y[layout.z_re(i)] += z.re;
            y[layout.z_im(i)] += z.im;
        }
    }
    y[layout.t00()] = t_lags.get(0, 0).re;
    let (n, m) = (dims.n() as i64, dims.m() as i64);
    for l in 0..n {
        for mm in -(m - 1)..=(m - 1) {
            if l == 0 && mm <= 0 {
                continue;
            }
            let v = t_lags.get(l, mm);
            y[layout.t_re(l, mm)] = v.re;
            y[layout.t_re(l, mm) + 1] = v.im;
        }
    }
    y[layout.t_scalar()] = t_scalar;
    y
}
