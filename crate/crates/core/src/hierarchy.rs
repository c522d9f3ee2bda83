//! Full global-memory load path: optional L1 data cache, L2 data cache, two
//! TLB levels, a page-activation window and a forward stream prefetcher.
//!
//! Latency is looked up per access pattern (P1..P6) rather than summed per
//! level; the table holds measured composite latencies.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheState};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::P1,
        Pattern::P2,
        Pattern::P3,
        Pattern::P4,
        Pattern::P5,
        Pattern::P6,
    ];
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Classification(format!("unknown pattern `{s}`")))
    }
}

/// Composite latency per pattern, plus optional single-level constants.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p4: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p5: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p6: Option<u32>,
    /// Hit latency of the data level, for average-latency demos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<u32>,
    /// Miss penalty of the data level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tm: Option<u32>,
}

impl LatencyTable {
    pub fn get(&self, p: Pattern) -> Option<u32> {
        match p {
            Pattern::P1 => self.p1,
            Pattern::P2 => self.p2,
            Pattern::P3 => self.p3,
            Pattern::P4 => self.p4,
            Pattern::P5 => self.p5,
            Pattern::P6 => self.p6,
        }
    }

    pub fn latency(&self, p: Pattern) -> Result<u32> {
        self.get(p).ok_or(Error::PatternUnavailable(p))
    }

    fn validate(&self) -> Result<()> {
        let defined: Vec<(Pattern, u32)> = Pattern::ALL
            .into_iter()
            .filter_map(|p| self.get(p).map(|l| (p, l)))
            .collect();
        if defined.iter().any(|(_, l)| *l == 0) || self.t0 == Some(0) || self.tm == Some(0) {
            return Err(Error::config("latency entries must be positive"));
        }
        if let Some(w) = defined.windows(2).find(|w| w[0].1 > w[1].1) {
            return Err(Error::config(format!(
                "{} latency {} exceeds {} latency {}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefetchConfig {
    pub enabled: bool,
    /// Forward reach of one stream as a fraction of the L2 size.
    pub span_fraction: Fraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCacheLevel {
    pub enabled: bool,
    pub cache: CacheConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    pub name: String,
    pub dram_size: u64,
    pub page_size: u64,
    /// Bytes of page entries active at launch; `None` means no switching cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_window: Option<u64>,
    /// L1 data hits skip address translation.
    #[serde(default)]
    pub l1_bypasses_tlb: bool,
    pub clock_overhead_cycles: u32,
    pub dep_chain_overhead_cycles: u32,
    pub latencies: LatencyTable,
    pub prefetcher: PrefetchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_data: Option<DataCacheLevel>,
    pub l2_data: CacheConfig,
    pub l1_tlb: CacheConfig,
    pub l2_tlb: CacheConfig,
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.page_size == 0 {
            return Err(Error::config("page size must be positive"));
        }
        if self.dram_size == 0 || self.dram_size > crate::cache::ADDRESS_LIMIT {
            return Err(Error::config("DRAM size must fit the address space"));
        }
        if let Some(w) = self.activation_window {
            if w == 0 || w % self.page_size != 0 {
                return Err(Error::config("activation window must be a multiple of the page size"));
            }
        }
        for (name, tlb) in [("l1_tlb", &self.l1_tlb), ("l2_tlb", &self.l2_tlb)] {
            if tlb.line_size != self.page_size {
                return Err(Error::config(format!("{name} entries must cover one page")));
            }
        }
        let f = self.prefetcher.span_fraction;
        if f.num == 0 || f.den == 0 || f.num > f.den {
            return Err(Error::config("prefetch span fraction must lie in (0, 1]"));
        }
        self.latencies.validate()?;
        if let Some(l1) = &self.l1_data {
            l1.cache.validate()?;
        }
        self.l2_data.validate()?;
        self.l1_tlb.validate()?;
        self.l2_tlb.validate()?;
        Ok(())
    }

    pub fn l1_enabled(&self) -> bool {
        self.l1_data.as_ref().is_some_and(|l| l.enabled)
    }

    /// The cache whose hit/miss decides the data bit of the pattern.
    pub fn data_cache(&self) -> &CacheConfig {
        match &self.l1_data {
            Some(l1) if l1.enabled => &l1.cache,
            _ => &self.l2_data,
        }
    }
}

/// One simulated load.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencySample {
    pub latency_cycles: u32,
    /// `None` for single-cache models, which have no TLB path.
    pub pattern: Option<Pattern>,
    pub data_hit: bool,
    /// `None` when the level was not consulted.
    pub l1_tlb_hit: Option<bool>,
    pub l2_tlb_hit: Option<bool>,
    pub page_switch: bool,
}

/// Maps the per-level bits of one load to its pattern.
pub fn classify(
    data_hit: bool,
    l1_tlb_hit: Option<bool>,
    l2_tlb_hit: Option<bool>,
    page_switch: bool,
) -> Result<Pattern> {
    use Pattern::*;
    let bad = || {
        Error::Classification(format!(
            "data_hit={data_hit} l1_tlb={l1_tlb_hit:?} l2_tlb={l2_tlb_hit:?} page_switch={page_switch}"
        ))
    };
    if page_switch {
        return match (data_hit, l1_tlb_hit, l2_tlb_hit) {
            (false, Some(false), Some(false)) => Ok(P6),
            _ => Err(bad()),
        };
    }
    match (data_hit, l1_tlb_hit, l2_tlb_hit) {
        (true, Some(true), None) | (true, None, None) => Ok(P1),
        (true, Some(false), Some(true)) => Ok(P2),
        (true, Some(false), Some(false)) => Ok(P3),
        // A data miss whose translation is found in either TLB level costs
        // the same table walk-free path.
        (false, Some(true), None) | (false, Some(false), Some(true)) => Ok(P4),
        (false, Some(false), Some(false)) => Ok(P5),
        _ => Err(bad()),
    }
}

/// Anything a pointer chase can run against.
pub trait MemoryModel {
    fn load(&mut self, addr: u64) -> Result<LatencySample>;

    /// Exclusive upper bound on loadable addresses.
    fn address_limit(&self) -> u64;
}

/// A lone cache with fixed hit and miss latencies.
#[derive(Clone, Debug)]
pub struct CacheModel {
    pub cache: CacheState,
    pub hit_cycles: u32,
    pub miss_cycles: u32,
}

impl CacheModel {
    pub fn new(cache: CacheState, hit_cycles: u32, miss_cycles: u32) -> Self {
        CacheModel {
            cache,
            hit_cycles,
            miss_cycles,
        }
    }
}

impl MemoryModel for CacheModel {
    fn load(&mut self, addr: u64) -> Result<LatencySample> {
        let out = self.cache.access(addr)?;
        Ok(LatencySample {
            latency_cycles: if out.hit {
                self.hit_cycles
            } else {
                self.miss_cycles
            },
            pattern: None,
            data_hit: out.hit,
            l1_tlb_hit: None,
            l2_tlb_hit: None,
            page_switch: false,
        })
    }

    fn address_limit(&self) -> u64 {
        crate::cache::ADDRESS_LIMIT
    }
}

#[derive(Clone, Debug)]
struct Stream {
    next_line: u64,
    last_line: u64,
}

/// Stateful simulator for one [`HierarchyConfig`].
#[derive(Clone, Debug)]
pub struct HierarchySim {
    cfg: HierarchyConfig,
    l1: Option<CacheState>,
    l2: CacheState,
    l1_tlb: CacheState,
    l2_tlb: CacheState,
    active_windows: HashSet<u64>,
    stream: Option<Stream>,
    span_lines: u64,
}

fn seeded(cfg: &CacheConfig, seed: u64, salt: u64) -> Result<CacheState> {
    CacheState::for_run(cfg.clone(), seed.wrapping_mul(8).wrapping_add(salt))
}

impl HierarchySim {
    pub fn new(cfg: HierarchyConfig) -> Result<Self> {
        Self::with_seed(cfg, 0)
    }

    pub fn with_seed(cfg: HierarchyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let l1 = match &cfg.l1_data {
            Some(l1) if l1.enabled => Some(seeded(&l1.cache, seed, 1)?),
            _ => None,
        };
        let span_bytes =
            cfg.l2_data.total_size * cfg.prefetcher.span_fraction.num / cfg.prefetcher.span_fraction.den;
        Ok(HierarchySim {
            l1,
            l2: seeded(&cfg.l2_data, seed, 2)?,
            l1_tlb: seeded(&cfg.l1_tlb, seed, 3)?,
            l2_tlb: seeded(&cfg.l2_tlb, seed, 4)?,
            active_windows: HashSet::from([0]),
            stream: None,
            span_lines: span_bytes / cfg.l2_data.line_size,
            cfg,
        })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.cfg
    }

    fn translate(&mut self, addr: u64) -> Result<(Option<bool>, Option<bool>)> {
        let l1 = self.l1_tlb.access(addr)?.hit;
        if l1 {
            return Ok((Some(true), None));
        }
        let l2 = self.l2_tlb.access(addr)?.hit;
        Ok((Some(false), Some(l2)))
    }

    /// L2 lookup with the stream prefetcher folded in.
    fn l2_lookup(&mut self, addr: u64) -> Result<bool> {
        let hit = self.l2.access(addr)?.hit;
        if hit {
            return Ok(true);
        }
        let line = addr / self.cfg.l2_data.line_size;
        if let Some(s) = &self.stream {
            if line >= s.next_line && line <= s.last_line {
                return Ok(true);
            }
        }
        if self.cfg.prefetcher.enabled && self.span_lines > 0 {
            let page_end = (addr / self.cfg.page_size + 1) * self.cfg.page_size;
            let last_in_page = page_end / self.cfg.l2_data.line_size - 1;
            self.stream = Some(Stream {
                next_line: line + 1,
                last_line: (line + self.span_lines).min(last_in_page),
            });
        }
        Ok(false)
    }
}

impl MemoryModel for HierarchySim {
    fn load(&mut self, addr: u64) -> Result<LatencySample> {
        if addr >= self.cfg.dram_size {
            return Err(Error::AddressOutOfRange {
                addr,
                limit: self.cfg.dram_size,
            });
        }
        let page_switch = match self.cfg.activation_window {
            Some(w) => self.active_windows.insert(addr / w),
            None => false,
        };
        let l1_hit = match self.l1.as_mut() {
            Some(l1) => Some(l1.access(addr)?.hit),
            None => None,
        };
        let (l1_tlb_hit, l2_tlb_hit) = if self.cfg.l1_bypasses_tlb && l1_hit == Some(true) {
            (None, None)
        } else {
            self.translate(addr)?
        };
        let data_hit = match l1_hit {
            Some(true) => true,
            Some(false) => {
                self.l2_lookup(addr)?;
                false
            }
            None => self.l2_lookup(addr)?,
        };
        let pattern = classify(data_hit, l1_tlb_hit, l2_tlb_hit, page_switch)?;
        Ok(LatencySample {
            latency_cycles: self.cfg.latencies.latency(pattern)?,
            pattern: Some(pattern),
            data_hit,
            l1_tlb_hit,
            l2_tlb_hit,
            page_switch,
        })
    }

    fn address_limit(&self) -> u64 {
        self.cfg.dram_size
    }
}
