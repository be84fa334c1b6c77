//! Replica-parallel execution. Replica `i` is a pure function of its index
//! (which doubles as the noise `stream_id`), results come back in index
//! order, so the output does not depend on the number of workers.

use rayon::prelude::*;

use crate::error::{RdsError, Result};

/// Number of worker threads to use when none is configured.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run `f(0), ..., f(n - 1)` on a pool of `workers` threads.
pub fn run_replicas<T, F>(n: usize, workers: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(|i| f(i as u64)).collect())
}

/// Replica results with blow-ups split off.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes<T> {
    /// `(replica index, value)` for replicas that finished.
    pub ok: Vec<(usize, T)>,
    pub blow_ups: usize,
    pub attempted: usize,
}

impl<T> Outcomes<T> {
    /// Fraction of replicas that blew up.
    pub fn blow_up_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.blow_ups as f64 / self.attempted as f64
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.ok.iter().map(|(_, v)| v)
    }
}

/// Separate blow-ups from finished replicas; any other error is returned.
pub fn collect_outcomes<T>(results: Vec<Result<T>>) -> Result<Outcomes<T>> {
    let attempted = results.len();
    let mut ok = Vec::with_capacity(attempted);
    let mut blow_ups = 0;
    let mut first_blow_up = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(e) if e.is_blow_up() => {
                blow_ups += 1;
                first_blow_up.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() && attempted > 0 {
        return Err(first_blow_up.unwrap_or(RdsError::State("no replicas".into())));
    }
    Ok(Outcomes { ok, blow_ups, attempted })
}

/// [`run_replicas`] followed by [`collect_outcomes`].
pub fn run_outcomes<T, F>(n: usize, workers: usize, f: F) -> Result<Outcomes<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    collect_outcomes(run_replicas(n, workers, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_in_index_order_for_any_worker_count() {
        let f = |i: u64| Ok(i * i);
        let one = run_replicas(100, 1, f);
        let many = run_replicas(100, 8, f);
        assert_eq!(one, many);
        assert_eq!(one[7], Ok(49));
    }

    #[test]
    fn blow_ups_are_counted_separately() {
        let out = run_outcomes(10, 2, |i| {
            if i % 5 == 0 {
                Err(RdsError::BlowUp { step: 1, time: 0.1 })
            } else {
                Ok(i)
            }
        })
        .unwrap();
        assert_eq!(out.blow_ups, 2);
        assert_eq!(out.ok.len(), 8);
        assert_eq!(out.blow_up_rate(), 0.2);

        let err = run_outcomes(3, 1, |_| -> Result<u64> { Err(RdsError::Parameter("x".into())) });
        assert!(matches!(err, Err(RdsError::Parameter(_))));
    }
}
