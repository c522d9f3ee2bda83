//! Workloads shared by the criterion benchmarks under `benches/`.

use memlab_core::{presets, CacheTarget, HierarchyConfig, PChaseConfig};

/// Byte addresses of `passes` uniform sweeps over `array_bytes` at `stride`.
pub fn uniform_sweep(array_bytes: u64, stride: u64, passes: u64) -> Vec<u64> {
    let per_pass = array_bytes / stride;
    (0..passes * per_pass).map(|i| (i % per_pass) * stride).collect()
}

pub fn cache(name: &str) -> CacheTarget {
    presets::cache_target(name).expect("shipped cache preset")
}

pub fn hierarchy(name: &str) -> HierarchyConfig {
    presets::hierarchy(name).expect("shipped hierarchy preset")
}

/// A chase that overflows `c` by one line, so every set keeps contending.
pub fn contended_chase(c: u64, line: u64, passes: u64) -> PChaseConfig {
    let n = c + line;
    PChaseConfig::uniform(n, line, passes * n / line, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_wraps_each_pass() {
        assert_eq!(uniform_sweep(16, 4, 2), vec![0, 4, 8, 12, 0, 4, 8, 12]);
    }
}
