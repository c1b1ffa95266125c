//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into the same contiguous chunks regardless of the
//! execution mode or thread count, and chunk results are combined in order, so
//! floating-point reductions are bit-identical between the two modes.

/// How independent work items are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Rayon thread pool. Falls back to sequential when the `parallel`
    /// feature is disabled.
    #[default]
    Parallel,
}

impl Parallelism {
    /// `Parallel` only when the crate was built with rayon.
    pub fn available(self) -> Self {
        if cfg!(feature = "parallel") {
            self
        } else {
            Parallelism::Sequential
        }
    }
}

/// Fixed number of chunks a batch is reduced over.
pub const REDUCTION_CHUNKS: usize = 8;

/// Splits `items` into at most `chunks` contiguous, nearly equal runs.
pub fn chunk_ranges(len: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    if len == 0 {
        return Vec::new();
    }
    let chunks = chunks.clamp(1, len);
    let base = len / chunks;
    let extra = len % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let size = base + usize::from(c < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode.available() {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over index ranges produced by [`chunk_ranges`], preserving order.
pub fn map_chunks<R, F>(len: usize, chunks: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let ranges = chunk_ranges(len, chunks);
    map(&ranges, mode, |r| f(r.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything_once() {
        for len in 0..40 {
            for chunks in 1..10 {
                let r = chunk_ranges(len, chunks);
                let flat: Vec<usize> = r.iter().flat_map(|x| x.clone()).collect();
                assert_eq!(flat, (0..len).collect::<Vec<_>>());
                assert!(r.len() <= chunks);
            }
        }
    }

    #[test]
    fn modes_agree() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let sum = |mode| -> Vec<f64> {
            map_chunks(xs.len(), REDUCTION_CHUNKS, mode, |r| xs[r].iter().sum::<f64>())
        };
        assert_eq!(sum(Parallelism::Sequential), sum(Parallelism::Parallel));
    }
}
