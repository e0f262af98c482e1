//! Deterministic fan-out over sample indices.
//!
//! Every worker owns one contiguous index range and results are reassembled
//! in index order, so the output is identical to the sequential map for any
//! worker count. The count comes from `JAMIDENT_THREADS` (default 1).

pub const THREADS_ENV: &str = "JAMIDENT_THREADS";

fn parse_thread_count(raw: Option<&str>) -> usize {
    raw.and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

pub fn thread_count() -> usize {
    parse_thread_count(std::env::var(THREADS_ENV).ok().as_deref())
}

/// Map `f` over `0..n` using up to `threads` workers.
pub fn parallel_map_with<T, F>(threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.max(1).min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    let f = &f;
    let mut parts: Vec<Vec<T>> = Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(n);
                scope.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        for h in handles {
            parts.push(h.join().expect("worker panicked"));
        }
    });
    parts.into_iter().flatten().collect()
}

/// Map `f` over `0..n` honoring `JAMIDENT_THREADS`.
pub fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    parallel_map_with(thread_count(), n, f)
}
