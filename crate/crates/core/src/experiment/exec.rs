use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "PROTOREP_WORKERS";

/// Seed of run `seed_index` in grid cell `cell`.
///
/// The first eight bytes (little endian) of
/// `SHA-256(master ‖ cell ‖ seed_index)` with each field as a little-endian u64.
pub fn derive_seed(master: u64, cell: usize, seed_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((cell as u64).to_le_bytes());
    h.update((seed_index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Worker count from [`WORKERS_ENV`], falling back to the available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every job on up to `workers` threads; results keep job order.
pub fn parallel_map<J, T, F>(jobs: &[J], workers: usize, f: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
{
    let workers = workers.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                slots.lock().expect("no worker panicked while holding the lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|s| s.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        let seeds: std::collections::HashSet<u64> =
            (0..10).flat_map(|c| (0..10).map(move |i| derive_seed(7, c, i))).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(derive_seed(0, 1, 0), derive_seed(0, 0, 1));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let jobs: Vec<u64> = (0..37).collect();
        let serial = parallel_map(&jobs, 1, |j| j * j);
        let threaded = parallel_map(&jobs, 4, |j| j * j);
        assert_eq!(serial, threaded);
        assert!(parallel_map(&Vec::<u64>::new(), 3, |j| *j).is_empty());
    }
}
