//! Index-parallel map used by the mutation campaign.
//!
//! With the `parallel` feature the work is spread over a rayon pool;
//! without it, or with `jobs == Some(1)`, it is a plain loop. Results are
//! always in index order, so both paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(n: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match jobs {
        Some(1) => map_sequential(n, f),
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).into_par_iter().map(f).collect(),
        },
        None => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Parallel when the feature is on, sequential otherwise.
pub fn map_indexed<T, F>(n: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(n, jobs, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        map_sequential(n, f)
    }
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_sequential(1000, |i| i * i);
        assert_eq!(map_indexed(1000, None, |i| i * i), seq);
        assert_eq!(map_indexed(1000, Some(3), |i| i * i), seq);
        assert_eq!(map_indexed(1000, Some(1), |i| i * i), seq);
    }
}
