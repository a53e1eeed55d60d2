//! Chunked data-parallel helpers.
//!
//! Every kernel splits the amplitude array into fixed-size chunks whose
//! length does not depend on the number of worker threads. Reductions return
//! one partial per chunk in ascending chunk order, so the combined result is
//! bit-identical for any thread count. With the `parallel` feature disabled
//! the same chunking runs on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Amplitudes per work chunk (before rounding up to a kernel's tuple span).
pub const CHUNK_AMPS: usize = 1 << 13;

/// Chunk length for an array of `2^n`-amplitude samples when each unit of
/// work spans `span` contiguous amplitudes. Always a power of two dividing
/// `2^n`.
pub fn chunk_len(n_qubits: usize, span: usize) -> usize {
    let dim = 1usize << n_qubits;
    CHUNK_AMPS.max(span).min(dim)
}

/// Thread-count knob shared by all kernels of an engine.
#[derive(Clone)]
pub struct Exec {
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
    threads: usize,
}

impl std::fmt::Debug for Exec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Exec").field("threads", &self.threads).finish()
    }
}

impl Default for Exec {
    fn default() -> Self {
        Self::new(None)
    }
}

impl Exec {
    /// `None` uses the global rayon pool. Without the `parallel` feature the
    /// thread count is always 1.
    pub fn new(threads: Option<usize>) -> Self {
        #[cfg(feature = "parallel")]
        {
            match threads {
                Some(t) => {
                    let t = t.max(1);
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(t)
                        .build()
                        .expect("failed to build rayon thread pool");
                    Self {
                        pool: Some(std::sync::Arc::new(pool)),
                        threads: t,
                    }
                }
                None => Self {
                    pool: None,
                    threads: rayon::current_num_threads(),
                },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Self { threads: 1 }
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(f);
        }
        f()
    }
}

/// Runs `f(chunk_index, out_chunk)` over disjoint chunks of `out`.
pub fn for_each_chunk_mut<T, G>(out: &mut [T], chunk: usize, f: G)
where
    T: Send,
    G: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Runs `f(chunk_index, out_chunk, in_chunk)` over aligned chunk pairs.
pub fn zip_chunks_mut<T, U, G>(out: &mut [T], input: &[U], chunk: usize, f: G)
where
    T: Send,
    U: Sync,
    G: Fn(usize, &mut [T], &[U]) + Sync + Send,
{
    debug_assert_eq!(out.len(), input.len());
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(chunk)
        .zip(input.par_chunks(chunk))
        .enumerate()
        .for_each(|(i, (o, x))| f(i, o, x));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(chunk)
        .zip(input.chunks(chunk))
        .enumerate()
        .for_each(|(i, (o, x))| f(i, o, x));
}

/// Like [`zip_chunks_mut`] but collects one result per chunk, in order.
pub fn zip_chunks_mut_map<T, U, R, G>(out: &mut [T], input: &[U], chunk: usize, f: G) -> Vec<R>
where
    T: Send,
    U: Sync,
    R: Send,
    G: Fn(usize, &mut [T], &[U]) -> R + Sync + Send,
{
    debug_assert_eq!(out.len(), input.len());
    #[cfg(feature = "parallel")]
    return out
        .par_chunks_mut(chunk)
        .zip(input.par_chunks(chunk))
        .enumerate()
        .map(|(i, (o, x))| f(i, o, x))
        .collect();
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(chunk)
        .zip(input.chunks(chunk))
        .enumerate()
        .map(|(i, (o, x))| f(i, o, x))
        .collect()
}

/// Runs `f(chunk_index, a_chunk, b_chunk, in_chunk)` where the three slices
/// are split into the same number of chunks with their own lengths.
pub fn zip3_chunks_mut<A, B, U, G>(
    a: &mut [A],
    a_chunk: usize,
    b: &mut [B],
    b_chunk: usize,
    input: &[U],
    in_chunk: usize,
    f: G,
) where
    A: Send,
    B: Send,
    U: Sync,
    G: Fn(usize, &mut [A], &mut [B], &[U]) + Sync + Send,
{
    debug_assert_eq!(a.len() / a_chunk, b.len() / b_chunk);
    debug_assert_eq!(a.len() / a_chunk, input.len() / in_chunk);
    #[cfg(feature = "parallel")]
    a.par_chunks_mut(a_chunk)
        .zip(b.par_chunks_mut(b_chunk))
        .zip(input.par_chunks(in_chunk))
        .enumerate()
        .for_each(|(i, ((x, y), z))| f(i, x, y, z));
    #[cfg(not(feature = "parallel"))]
    a.chunks_mut(a_chunk)
        .zip(b.chunks_mut(b_chunk))
        .zip(input.chunks(in_chunk))
        .enumerate()
        .for_each(|(i, ((x, y), z))| f(i, x, y, z));
}

/// Maps `f(start, len)` over `[0, total)` split into chunks; results in order.
pub fn map_ranges<R, G>(total: usize, chunk: usize, f: G) -> Vec<R>
where
    R: Send,
    G: Fn(usize, usize) -> R + Sync + Send,
{
    let count = total.div_ceil(chunk);
    let run = |i: usize| {
        let start = i * chunk;
        f(start, chunk.min(total - start))
    };
    #[cfg(feature = "parallel")]
    return (0..count).into_par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    (0..count).map(run).collect()
}
