//! One-fold and two-fold Toeplitz maps from signed-lag generators, the
//! `g`-transformed variants that enforce the rate band `theta in [0, U]`,
//! and the adjoint (lag-accumulation) maps used by the conic solver.
//!
//! Generators are stored by signed lag rather than as a raster matrix:
//! conjugate symmetry `gen[-k] = conj(gen[k])` is then structural, which is
//! exactly the condition for the generated matrices to be Hermitian.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::model::{unit_phasor, ProblemDims};
use crate::{Error, Result};

/// Dense two-fold Toeplitz matrices above this `N*M` are refused; the solver
/// works through the lag maps and never materializes them at scale.
pub const DENSE_CAPACITY: usize = 2000;

/// Degree-one Hermitian trigonometric polynomial
/// `g(z) = r1*z^-1 + r0 + conj(r1)*z` with `r0` real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPoly {
    pub r0: f64,
    pub r1_re: f64,
    pub r1_im: f64,
}

impl GPoly {
    pub fn new(r0: f64, r1: Complex64) -> Self {
        Self {
            r0,
            r1_re: r1.re,
            r1_im: r1.im,
        }
    }

    #[inline]
    pub fn r1(&self) -> Complex64 {
        Complex64::new(self.r1_re, self.r1_im)
    }

    /// The band polynomial of the rate bound `U`:
    /// `r0 = -2cos(pi U)`, `r1 = exp(j pi U)`.
    ///
    /// Nonnegative on the unit circle exactly over `theta in [0, U]`.
    pub fn from_rate_bound(u: f64) -> Result<Self> {
        if !(u > 0.0 && u <= 0.5) {
            return Err(Error::Domain {
                name: "rate_bound",
                value: u,
                domain: "(0, 1/2]",
            });
        }
        Ok(Self::new(
            -2.0 * (u * PI).cos(),
            Complex64::from_polar(1.0, PI * u),
        ))
    }

    /// Evaluates `g` on the unit circle:
    /// `g(exp(j*2*pi*theta)) = r0 + 2*Re(r1*exp(-j*2*pi*theta))`.
    pub fn eval(&self, theta: f64) -> f64 {
        self.r0 + 2.0 * (self.r1() * unit_phasor(-theta)).re
    }

    /// The same band with coefficients divided by the maximum of `g` on the
    /// unit circle (`r0 + 2|r1|`). Positive rescaling keeps the
    /// nonnegativity set identical while conditioning the transformed
    /// Toeplitz block; narrow bands otherwise scale like `U^2`.
    pub fn normalized(&self) -> Self {
        let max_val = self.r0 + 2.0 * self.r1().norm();
        if max_val <= 0.0 {
            return *self;
        }
        let scale = 1.0 / max_val;
        Self::new(self.r0 * scale, self.r1() * scale)
    }
}

/// Lags `k = -(L-1)..=(L-1)` generating an `L x L` one-fold Toeplitz matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LagGen1D {
    block: usize,
    lags: Vec<Complex64>,
}

impl LagGen1D {
    pub fn zeros(block: usize) -> Self {
        assert!(block > 0);
        Self {
            block,
            lags: vec![Complex64::ZERO; 2 * block - 1],
        }
    }

    /// Generator of the rank-one matrix `v v^H` with `v[i] = exp(j*2*pi*i*f)`,
    /// scaled by `weight`.
    pub fn unit_atom(f: f64, block: usize) -> Self {
        let mut g = Self::zeros(block);
        g.add_scaled_atom(f, 1.0);
        g
    }

    /// Adds `weight * exp(j*2*pi*f*k)` to every lag.
    pub fn add_scaled_atom(&mut self, f: f64, weight: f64) {
        let l = self.block as i64;
        for k in -(l - 1)..=(l - 1) {
            *self.get_mut(k) += weight * unit_phasor(f * k as f64);
        }
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.block
    }

    #[inline]
    pub fn get(&self, k: i64) -> Complex64 {
        self.lags[(k + self.block as i64 - 1) as usize]
    }

    #[inline]
    pub fn get_mut(&mut self, k: i64) -> &mut Complex64 {
        &mut self.lags[(k + self.block as i64 - 1) as usize]
    }

    /// `max |gen[-k] - conj(gen[k])|`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let l = self.block as i64;
        let mut worst = self.get(0).im.abs();
        for k in 1..l {
            worst = worst.max((self.get(-k) - self.get(k).conj()).norm());
        }
        worst
    }
}

/// Lags `(l, m)`, `l = -(N-1)..=(N-1)`, `m = -(M-1)..=(M-1)`, generating a
/// two-fold (block-Toeplitz with Toeplitz blocks) matrix of side `N*M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagGen2D {
    outer: usize,
    inner: usize,
    lags: Vec<Complex64>,
}

impl LagGen2D {
    pub fn zeros(outer: usize, inner: usize) -> Self {
        assert!(outer > 0 && inner > 0);
        Self {
            outer,
            inner,
            lags: vec![Complex64::ZERO; (2 * outer - 1) * (2 * inner - 1)],
        }
    }

    pub fn for_dims(dims: ProblemDims) -> Self {
        Self::zeros(dims.n(), dims.m())
    }

    /// Generator of `d(f, theta) d(f, theta)^H` scaled by `weight`.
    pub fn unit_atom(f: f64, theta: f64, outer: usize, inner: usize) -> Self {
        let mut g = Self::zeros(outer, inner);
        g.add_scaled_atom(f, theta, 1.0);
        g
    }

    /// Adds `weight * exp(j*2*pi*(f*l + theta*m))` to every lag pair.
    pub fn add_scaled_atom(&mut self, f: f64, theta: f64, weight: f64) {
        let (no, ni) = (self.outer as i64, self.inner as i64);
        for l in -(no - 1)..=(no - 1) {
            for m in -(ni - 1)..=(ni - 1) {
                *self.get_mut(l, m) += weight * unit_phasor(f * l as f64 + theta * m as f64);
            }
        }
    }

    #[inline]
    pub fn outer(&self) -> usize {
        self.outer
    }

    #[inline]
    pub fn inner(&self) -> usize {
        self.inner
    }

    #[inline]
    fn idx(&self, l: i64, m: i64) -> usize {
        let row = (l + self.outer as i64 - 1) as usize;
        let col = (m + self.inner as i64 - 1) as usize;
        row * (2 * self.inner - 1) + col
    }

    #[inline]
    pub fn get(&self, l: i64, m: i64) -> Complex64 {
        self.lags[self.idx(l, m)]
    }

    #[inline]
    pub fn get_mut(&mut self, l: i64, m: i64) -> &mut Complex64 {
        let i = self.idx(l, m);
        &mut self.lags[i]
    }

    pub fn conjugate_asymmetry(&self) -> f64 {
        let (no, ni) = (self.outer as i64, self.inner as i64);
        let mut worst: f64 = 0.0;
        for l in -(no - 1)..=(no - 1) {
            for m in -(ni - 1)..=(ni - 1) {
                worst = worst.max((self.get(-l, -m) - self.get(l, m).conj()).norm());
            }
        }
        worst
    }
}

/// `toep(gen)[i, j] = gen[i - j]`.
pub fn toep1(gen: &LagGen1D) -> Mat<Complex64> {
    let l = gen.block_size();
    Mat::from_fn(l, l, |i, j| gen.get(i as i64 - j as i64))
}

/// The `g`-transformed lags of a one-fold generator:
/// `t^g[k] = conj(r1)*t[k+1] + r0*t[k] + r1*t[k-1]`.
///
/// For a single-atom generator at rate `theta` this multiplies every lag by
/// `g(exp(j*2*pi*theta))`, so the transformed matrix is PSD exactly when the
/// rate lies in the band.
pub fn g_lags_1d(gen: &LagGen1D, g: &GPoly) -> LagGen1D {
    let l = gen.block_size();
    assert!(l >= 2, "g-transform needs block size >= 2");
    let mut out = LagGen1D::zeros(l - 1);
    let r1 = g.r1();
    // Output lags reach +-(L-2); the +-1 offsets stay within +-(L-1),
    // so no zero-padding convention is needed.
    for k in -(l as i64 - 2)..=(l as i64 - 2) {
        *out.get_mut(k) =
            r1.conj() * gen.get(k + 1) + g.r0 * gen.get(k) + r1 * gen.get(k - 1);
    }
    out
}

/// `(L-1) x (L-1)` Toeplitz matrix of the `g`-transformed lags.
pub fn toep1_g(gen: &LagGen1D, g: &GPoly) -> Mat<Complex64> {
    toep1(&g_lags_1d(gen, g))
}

fn check_capacity(total: usize) -> Result<()> {
    if total > DENSE_CAPACITY {
        return Err(Error::Capacity {
            what: "two-fold Toeplitz matrix side",
            size: total,
            limit: DENSE_CAPACITY,
        });
    }
    Ok(())
}

/// Dense two-fold Toeplitz matrix: block `(p, q)` is the inner Toeplitz
/// matrix of the lags `gen[p - q, .]`. Intended for small sizes only.
pub fn toep2(gen: &LagGen2D) -> Result<Mat<Complex64>> {
    let (n, m) = (gen.outer(), gen.inner());
    check_capacity(n * m)?;
    Ok(Mat::from_fn(n * m, n * m, |r, c| {
        let (p, i) = ((r / m) as i64, (r % m) as i64);
        let (q, j) = ((c / m) as i64, (c % m) as i64);
        gen.get(p - q, i - j)
    }))
}

/// The inner-lag `g`-transform of a two-fold generator, applied per outer lag.
pub fn g_lags_2d(gen: &LagGen2D, g: &GPoly) -> LagGen2D {
    let (n, m) = (gen.outer(), gen.inner());
    assert!(m >= 2, "g-transform needs inner block size >= 2");
    let mut out = LagGen2D::zeros(n, m - 1);
    let r1 = g.r1();
    for l in -(n as i64 - 1)..=(n as i64 - 1) {
        for k in -(m as i64 - 2)..=(m as i64 - 2) {
            *out.get_mut(l, k) =
                r1.conj() * gen.get(l, k + 1) + g.r0 * gen.get(l, k) + r1 * gen.get(l, k - 1);
        }
    }
    out
}

/// Dense `N(M-1) x N(M-1)` two-fold Toeplitz matrix of the `g`-transformed
/// generator.
pub fn toep2_g(gen: &LagGen2D, g: &GPoly) -> Result<Mat<Complex64>> {
    toep2(&g_lags_2d(gen, g))
}

/// Adjoint of [`toep1`]: accumulates each diagonal,
/// `out[k] = sum_{i-j=k} X[i, j]`.
pub fn toep1_adjoint(x: &Mat<Complex64>) -> LagGen1D {
    let l = x.nrows();
    assert_eq!(l, x.ncols());
    let mut gen = LagGen1D::zeros(l);
    for i in 0..l {
        for j in 0..l {
            *gen.get_mut(i as i64 - j as i64) += x[(i, j)];
        }
    }
    gen
}

/// Adjoint of the lag transform in [`g_lags_1d`]: redistributes output lag
/// `k` into input lags `k+1`, `k`, `k-1` with weights `r1`, `r0`, `conj(r1)`.
fn g_lags_1d_adjoint(y: &LagGen1D, g: &GPoly, block: usize) -> LagGen1D {
    assert_eq!(y.block_size() + 1, block);
    let mut out = LagGen1D::zeros(block);
    let r1 = g.r1();
    let inner = block as i64 - 2;
    for k in -inner..=inner {
        let v = y.get(k);
        *out.get_mut(k + 1) += r1 * v;
        *out.get_mut(k) += g.r0 * v;
        *out.get_mut(k - 1) += r1.conj() * v;
    }
    out
}

/// Adjoint of [`toep1_g`] as a map from `(L-1) x (L-1)` matrices to lag
/// generators of block size `L`.
pub fn toep1_g_adjoint(x: &Mat<Complex64>, g: &GPoly) -> LagGen1D {
    g_lags_1d_adjoint(&toep1_adjoint(x), g, x.nrows() + 1)
}

/// Adjoint of [`toep2`].
pub fn toep2_adjoint(x: &Mat<Complex64>, outer: usize, inner: usize) -> LagGen2D {
    assert_eq!(x.nrows(), outer * inner);
    assert_eq!(x.ncols(), outer * inner);
    let mut gen = LagGen2D::zeros(outer, inner);
    for r in 0..outer * inner {
        let (p, i) = ((r / inner) as i64, (r % inner) as i64);
        for c in 0..outer * inner {
            let (q, j) = ((c / inner) as i64, (c % inner) as i64);
            *gen.get_mut(p - q, i - j) += x[(r, c)];
        }
    }
    gen
}

/// Adjoint of [`toep2_g`] back to generators with inner block size `inner`.
pub fn toep2_g_adjoint(x: &Mat<Complex64>, g: &GPoly, outer: usize, inner: usize) -> LagGen2D {
    let small = toep2_adjoint(x, outer, inner - 1);
    let mut out = LagGen2D::zeros(outer, inner);
    let r1 = g.r1();
    let span = inner as i64 - 2;
    for l in -(outer as i64 - 1)..=(outer as i64 - 1) {
        for k in -span..=span {
            let v = small.get(l, k);
            *out.get_mut(l, k + 1) += r1 * v;
            *out.get_mut(l, k) += g.r0 * v;
            *out.get_mut(l, k - 1) += r1.conj() * v;
        }
    }
    out
}
