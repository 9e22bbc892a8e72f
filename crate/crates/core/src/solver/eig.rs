//! Dense self-adjoint eigendecompositions with reusable workspaces.
//!
//! Real-embedded Hermitian blocks are projected through a complex
//! eigendecomposition of half the side length, which is both exact (the
//! embedding doubles every eigenvalue) and substantially cheaper than
//! decomposing the embedded matrix. Every decomposition runs sequentially so
//! that results do not depend on thread count; concurrency happens across
//! blocks, never inside one.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{Mat, MatRef, Par};
use num_complex::Complex64;
use std::collections::HashMap;

use crate::{Error, Result};

/// Eigendecomposition scratch buffers keyed by block side, reused across
/// solver iterations.
#[derive(Default)]
pub struct SpectralWorkspace {
    real: HashMap<usize, MemBuffer>,
    complex: HashMap<usize, MemBuffer>,
}

impl SpectralWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn real_stack(&mut self, n: usize) -> &mut MemBuffer {
        self.real.entry(n).or_insert_with(|| {
            MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
                n,
                ComputeEigenvectors::Yes,
                Par::Seq,
                Default::default(),
            ))
        })
    }

    fn complex_stack(&mut self, n: usize) -> &mut MemBuffer {
        self.complex.entry(n).or_insert_with(|| {
            MemBuffer::new(evd::self_adjoint_evd_scratch::<Complex64>(
                n,
                ComputeEigenvectors::Yes,
                Par::Seq,
                Default::default(),
            ))
        })
    }

    /// Eigendecomposition of a real symmetric matrix (lower triangle read).
    pub fn symmetric_eigen(&mut self, a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
        let n = a.nrows();
        let mut u = Mat::<f64>::zeros(n, n);
        let mut s = faer::diag::Diag::<f64>::zeros(n);
        evd::self_adjoint_evd(
            a,
            s.as_mut(),
            Some(u.as_mut()),
            Par::Seq,
            MemStack::new(self.real_stack(n)),
            Default::default(),
        )
        .map_err(|e| Error::Numeric(format!("symmetric eigendecomposition failed: {e:?}")))?;
        let vals = s.column_vector().iter().copied().collect();
        Ok((vals, u))
    }

    /// Eigendecomposition of a complex Hermitian matrix (lower triangle read).
    pub fn hermitian_eigen(
        &mut self,
        a: MatRef<'_, Complex64>,
    ) -> Result<(Vec<f64>, Mat<Complex64>)> {
        let n = a.nrows();
        let mut u = Mat::<Complex64>::zeros(n, n);
        let mut s = faer::diag::Diag::<Complex64>::zeros(n);
        evd::self_adjoint_evd(
            a,
            s.as_mut(),
            Some(u.as_mut()),
            Par::Seq,
            MemStack::new(self.complex_stack(n)),
            Default::default(),
        )
        .map_err(|e| Error::Numeric(format!("hermitian eigendecomposition failed: {e:?}")))?;
        let vals = s.column_vector().iter().map(|v| v.re).collect();
        Ok((vals, u))
    }
}

/// Eigenvalues of a complex Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: MatRef<'_, Complex64>) -> Vec<f64> {
    let mut ws = SpectralWorkspace::new();
    let (mut vals, _) = ws.hermitian_eigen(a).expect("eigendecomposition failed");
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Vec<f64> {
    let mut ws = SpectralWorkspace::new();
    let (mut vals, _) = ws.symmetric_eigen(a).expect("eigendecomposition failed");
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

/// Smallest singular value of a tall complex matrix via the Gram matrix.
pub fn min_singular_value(a: MatRef<'_, Complex64>) -> f64 {
    let k = a.ncols();
    let mut gram = Mat::<Complex64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut acc = Complex64::ZERO;
            for r in 0..a.nrows() {
                acc += a[(r, i)].conj() * a[(r, j)];
            }
            gram[(i, j)] = acc;
        }
    }
    let eigs = hermitian_eigenvalues(gram.as_ref());
    eigs.first().map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
}
