//! Batch execution helpers.
//!
//! With the `parallel` feature (default) per-sample maps and reductions run on
//! rayon; without it they run sequentially. Reductions always work over
//! fixed-size chunks combined in chunk order, so results are bit-identical
//! across thread counts, runs, and the two execution modes. The `_seq`
//! variants are always compiled and exist so benchmarks can compare both
//! paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
pub const REDUCE_CHUNK: usize = 64;

/// Order-preserving map over a slice.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential twin of [`map_collect`].
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Maps fixed-size chunks to partial accumulators, then combines them in
/// chunk order. Returns `None` on empty input.
pub fn chunked_map_reduce<T, A, M, C>(items: &[T], map_chunk: M, combine: C) -> Option<A>
where
    T: Sync,
    A: Send,
    M: Fn(&[T]) -> A + Send + Sync,
    C: Fn(A, A) -> A,
{
    let partials: Vec<A>;
    #[cfg(feature = "parallel")]
    {
        partials = items.par_chunks(REDUCE_CHUNK).map(|c| map_chunk(c)).collect();
    }
    #[cfg(not(feature = "parallel"))]
    {
        partials = items.chunks(REDUCE_CHUNK).map(|c| map_chunk(c)).collect();
    }
    partials.into_iter().reduce(combine)
}

/// Sequential twin of [`chunked_map_reduce`]; same chunking, same result.
pub fn chunked_map_reduce_seq<T, A, M, C>(items: &[T], map_chunk: M, combine: C) -> Option<A>
where
    M: Fn(&[T]) -> A,
    C: Fn(A, A) -> A,
{
    items
        .chunks(REDUCE_CHUNK)
        .map(map_chunk)
        .reduce(combine)
}
