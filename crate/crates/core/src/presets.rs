//! Shipped preset files.
//!
//! Presets live as TOML files under `presets/{caches,hierarchy,devices}` and
//! are embedded at build time. Setting `MEMLAB_PRESET_DIR` to a directory with
//! the same layout makes files there take precedence. Names are matched
//! case-insensitively.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cache::CacheConfig;
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyConfig;
use crate::io::{parse_config, Validate};
use crate::throughput::DeviceSpec;

pub const PRESET_DIR_ENV: &str = "MEMLAB_PRESET_DIR";

/// A single cache with fixed hit/miss latencies, used as a probe target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheTarget {
    pub name: String,
    pub hit_cycles: u32,
    pub miss_cycles: u32,
    /// Finest N step and size-search stride worth probing with.
    pub probe_unit_bytes: u64,
    pub cache: CacheConfig,
}

macro_rules! embedded {
    ($kind:literal: $($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../presets/", $kind, "/", $name, ".toml")))),*]
    };
}

const CACHES: &[(&str, &str)] = embedded!("caches":
    "toy-fig3", "gtx780-texL1", "maxwell-L1", "fermi-L1", "l1tlb", "l2tlb",
);
const HIERARCHIES: &[(&str, &str)] = embedded!("hierarchy":
    "GTX560Ti-L1on", "GTX560Ti-L1off", "GTX780", "GTX980-L1on", "GTX980-L1off",
);
const DEVICES: &[(&str, &str)] = embedded!("devices": "GTX560Ti", "GTX780", "GTX980");

fn from_override(kind: &str, name: &str) -> Option<(PathBuf, String)> {
    let dir = std::env::var_os(PRESET_DIR_ENV)?;
    let dir = Path::new(&dir).join(kind);
    let entries = std::fs::read_dir(&dir).ok()?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .find(|p| {
            p.extension().is_some_and(|x| x == "toml")
                && p.file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.eq_ignore_ascii_case(name))
        })
        .and_then(|p| std::fs::read_to_string(&p).ok().map(|t| (p, t)))
}

fn load<T: DeserializeOwned + Validate>(
    kind: &str,
    table: &[(&str, &str)],
    name: &str,
    missing: fn(String) -> Error,
) -> Result<T> {
    if let Some((path, text)) = from_override(kind, name) {
        return parse_config(&text, &path);
    }
    let (file, text) = table
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| missing(name.to_string()))?;
    parse_config(text, &Path::new("presets").join(kind).join(format!("{file}.toml")))
}

pub fn cache_target(name: &str) -> Result<CacheTarget> {
    load("caches", CACHES, name, Error::UnknownPreset)
}

pub fn hierarchy(name: &str) -> Result<HierarchyConfig> {
    load("hierarchy", HIERARCHIES, name, Error::UnknownDevice)
}

pub fn device(name: &str) -> Result<DeviceSpec> {
    load("devices", DEVICES, name, Error::UnknownDevice)
}

pub fn cache_target_names() -> Vec<&'static str> {
    CACHES.iter().map(|(n, _)| *n).collect()
}

pub fn hierarchy_names() -> Vec<&'static str> {
    HIERARCHIES.iter().map(|(n, _)| *n).collect()
}

pub fn device_names() -> Vec<&'static str> {
    DEVICES.iter().map(|(n, _)| *n).collect()
}

/// Embedded text of every preset as `(kind, name, text)`.
pub fn embedded_files() -> Vec<(&'static str, &'static str, &'static str)> {
    let tag = |kind: &'static str, t: &'static [(&'static str, &'static str)]| {
        t.iter().map(move |(n, s)| (kind, *n, *s))
    };
    tag("caches", CACHES)
        .chain(tag("hierarchy", HIERARCHIES))
        .chain(tag("devices", DEVICES))
        .collect()
}
