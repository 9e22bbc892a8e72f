//! Execution-mode plumbing for the data-parallel inner loops.
//!
//! Hot paths (PSD block projections, dual-polynomial grids, dictionary
//! sweeps) are written against [`ExecMode`]. With the `parallel` feature the
//! default mode fans work out over rayon; without it everything degrades to
//! the sequential code path. Outputs are written to disjoint slots, so the
//! two modes produce bit-identical results.

/// How data-parallel sections are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// Runs two closures, concurrently in parallel mode.
pub fn join<A, B, RA, RB>(mode: ExecMode, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    match mode {
        ExecMode::Sequential => (a(), b()),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => rayon::join(a, b),
    }
}

/// Applies `f` to every chunk of `out`, with the chunk's starting index.
///
/// Chunks are disjoint, so parallel execution is deterministic.
pub fn chunks_mut_indexed<T, F>(mode: ExecMode, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    assert!(chunk > 0);
    match mode {
        ExecMode::Sequential => {
            for (ci, c) in out.chunks_mut(chunk).enumerate() {
                f(ci * chunk, c);
            }
        }
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(ci, c)| f(ci * chunk, c));
        }
    }
}

/// Fold + reduce over an index range with an associative, commutative
/// combiner, e.g. a minimum-by tracking candidate.
pub fn map_reduce<T, M, R>(mode: ExecMode, n: usize, identity: T, map: M, reduce: R) -> T
where
    T: Send + Sync + Clone,
    M: Fn(usize) -> T + Send + Sync,
    R: Fn(T, T) -> T + Send + Sync,
{
    match mode {
        ExecMode::Sequential => (0..n).fold(identity, |acc, i| reduce(acc, map(i))),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .map(&map)
                .reduce(|| identity.clone(), &reduce)
        }
    }
}
