use std::path::Path;

use memlab_core::io::parse_config;
use memlab_core::{presets, CacheTarget, Error, HierarchyConfig, SimTarget};

use crate::error::CliError;

/// A simulated target together with its preferred probe unit.
pub struct Resolved {
    pub name: String,
    pub target: SimTarget,
    pub unit_bytes: u64,
}

impl Resolved {
    fn cache(t: CacheTarget) -> Self {
        Resolved {
            name: t.name,
            unit_bytes: t.probe_unit_bytes,
            target: SimTarget::Cache {
                config: t.cache,
                hit_cycles: t.hit_cycles,
                miss_cycles: t.miss_cycles,
            },
        }
    }

    fn hierarchy(h: HierarchyConfig) -> Self {
        Resolved {
            name: h.name.clone(),
            unit_bytes: 4,
            target: SimTarget::Hierarchy(h),
        }
    }
}

/// Looks `name` up among cache presets first, then hierarchy presets.
pub fn preset(name: &str) -> Result<Resolved, CliError> {
    match presets::cache_target(name) {
        Ok(t) => return Ok(Resolved::cache(t)),
        Err(Error::UnknownPreset(_)) => {}
        Err(e) => return Err(e.into()),
    }
    match presets::hierarchy(name) {
        Ok(h) => Ok(Resolved::hierarchy(h)),
        Err(Error::UnknownDevice(_)) => Err(Error::UnknownPreset(name.to_string()).into()),
        Err(e) => Err(e.into()),
    }
}

/// Reads a config file holding either a cache target or a hierarchy.
pub fn config_file(path: &Path) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path)?;
    // Hierarchy files are recognised by their latency table.
    if text.lines().any(|l| l.trim() == "[latencies]") {
        Ok(Resolved::hierarchy(parse_config(&text, path)?))
    } else {
        Ok(Resolved::cache(parse_config(&text, path)?))
    }
}
