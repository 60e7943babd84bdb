//! Execution policy for the data-parallel loops (batch items, images,
//! samples). Without the `parallel` feature every policy runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this policy actually fans out to worker threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..n`, preserving index order in the output.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over `0..n` and folds the results with `combine`. The fold
    /// order is fixed by index for the sequential path only.
    pub fn map_reduce<T, F, R, I>(self, n: usize, identity: I, f: F, combine: R) -> T
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
        R: Fn(T, T) -> T + Sync + Send,
        I: Fn() -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).reduce(identity, combine);
        }
        (0..n).map(f).fold(identity(), combine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let v = exec.map(100, |i| i * 2);
            assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn map_reduce_sums() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let s = exec.map_reduce(101, || 0u64, |i| i as u64, |a, b| a + b);
            assert_eq!(s, 5050);
        }
    }
}

/// Independent seed for stream `index` under `global`, so per-item random
/// streams do not depend on how work is scheduled.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    let mut z = global ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
