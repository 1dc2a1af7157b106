//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures sequentially. Callers only ever combine per-item or
//! per-chunk results in index order, so outputs are bit-identical between the
//! two builds and across thread counts.

/// Fixed chunk length used by reductions. Independent of the thread count so
/// that partial sums are always formed over the same sample ranges.
pub const REDUCTION_CHUNK: usize = 2048;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over fixed-size chunks `[start, end)` of `0..len`.
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = len.div_ceil(chunk);
    map_indexed(count, |c| {
        let start = c * chunk;
        f(start, (start + chunk).min(len))
    })
}

/// Fallible variant of [`map_indexed`]; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

/// Calls `f(i, chunk)` on consecutive `len`-sized chunks of `data` in place;
/// the first error in index order wins.
pub fn try_for_each_chunk_mut<T, E, F>(data: &mut [T], len: usize, f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut [T]) -> Result<(), E> + Sync + Send,
{
    let len = len.max(1);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(), E>> = {
        use rayon::prelude::*;
        data.par_chunks_mut(len).enumerate().map(|(i, c)| f(i, c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(), E>> = data.chunks_mut(len).enumerate().map(|(i, c)| f(i, c)).collect();
    results.into_iter().collect()
}

/// Pairwise tree reduction in index order.
pub fn tree_reduce<T, F>(mut items: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Caps the global worker pool. `0` leaves rayon's automatic sizing.
///
/// Returns `false` if the pool was already initialised or the crate was built
/// without the `parallel` feature.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return true;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Number of workers the helpers will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let spans = map_chunks(10, 4, |a, b| (a, b));
        assert_eq!(spans, vec![(0, 4), (4, 8), (8, 10)]);
        assert!(map_chunks(0, 4, |a, b| (a, b)).is_empty());
    }

    #[test]
    fn tree_reduce_is_ordered() {
        let v: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        let s = tree_reduce(v, |a, b| format!("({a}{b})")).unwrap();
        assert_eq!(s, "(((01)(23))((45)6))");
        assert_eq!(tree_reduce(Vec::<i32>::new(), |a, b| a + b), None);
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(10, |i| if i % 4 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn chunk_mut_fills_in_place_and_reports_first_error() {
        let mut v = vec![0usize; 10];
        try_for_each_chunk_mut(&mut v, 4, |i, c| {
            c.iter_mut().for_each(|x| *x = i);
            Ok::<_, ()>(())
        })
        .unwrap();
        assert_eq!(v, [0, 0, 0, 0, 1, 1, 1, 1, 2, 2]);
        let r = try_for_each_chunk_mut(&mut v, 3, |i, _| if i >= 1 { Err(i) } else { Ok(()) });
        assert_eq!(r, Err(1));
    }
}
