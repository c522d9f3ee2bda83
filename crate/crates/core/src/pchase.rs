//! Pointer-chase arrays, fine-grained traversal and traces.
//!
//! Element `i` of a chase array holds the index of the element visited after
//! it. Element `i` lives at byte address `i * element_bytes`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyConfig, LatencySample, MemoryModel, Pattern};

/// Default upper bound on trace length, as a memory guard.
pub const DEFAULT_TRACE_CAP: u64 = 1 << 24;

/// One run of `hops` steps of `stride` elements starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: u64,
    pub stride: i64,
    pub hops: u64,
}

impl Segment {
    pub const fn new(start: u64, stride: i64, hops: u64) -> Self {
        Segment {
            start,
            stride,
            hops,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitPattern {
    /// `A[i] = (i + stride) mod len`, stride in elements.
    Uniform { stride: u64 },
    /// Consecutive segments; each ends where the next starts. After the last
    /// segment the walk returns to that segment's start, forming a loop.
    Segmented { segments: Vec<Segment> },
}

impl fmt::Display for InitPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitPattern::Uniform { stride } => write!(f, "uniform:{stride}"),
            InitPattern::Segmented { segments } => {
                write!(f, "segments:")?;
                for (i, s) in segments.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{}/{}/{}", s.start, s.stride, s.hops)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for InitPattern {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidPattern(format!("`{text}`: {why}"));
        let (kind, body) = text.split_once(':').ok_or_else(|| bad("missing `kind:`"))?;
        match kind.trim() {
            "uniform" => {
                let stride = body.trim().parse().map_err(|_| bad("stride is not an integer"))?;
                Ok(InitPattern::Uniform { stride })
            }
            "segments" => {
                let segments = body
                    .split(';')
                    .map(|part| {
                        let fields: Vec<&str> = part.trim().split('/').collect();
                        let [start, stride, hops] = fields[..] else {
                            return Err(bad("segments are start/stride/hops"));
                        };
                        Ok(Segment {
                            start: start.parse().map_err(|_| bad("bad segment start"))?,
                            stride: stride.parse().map_err(|_| bad("bad segment stride"))?,
                            hops: hops.parse().map_err(|_| bad("bad segment hop count"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(InitPattern::Segmented { segments })
            }
            _ => Err(bad("kind must be `uniform` or `segments`")),
        }
    }
}

fn four() -> u64 {
    4
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PChaseConfig {
    /// Array size `N` in bytes.
    pub array_bytes: u64,
    #[serde(default = "four")]
    pub element_bytes: u64,
    pub init: InitPattern,
    /// Timed loads `k`.
    pub iterations: u64,
    pub preheat: bool,
}

impl PChaseConfig {
    /// Uniform chase with stride and size given in bytes.
    pub fn uniform(array_bytes: u64, stride_bytes: u64, iterations: u64, preheat: bool) -> Self {
        PChaseConfig {
            array_bytes,
            element_bytes: 4,
            init: InitPattern::Uniform {
                stride: stride_bytes / 4,
            },
            iterations,
            preheat,
        }
    }

    pub fn len(&self) -> u64 {
        self.array_bytes / self.element_bytes.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.element_bytes == 0 || self.array_bytes == 0 {
            return Err(Error::InvalidPattern("array and element sizes must be positive".into()));
        }
        if self.array_bytes % self.element_bytes != 0 {
            return Err(Error::InvalidPattern(format!(
                "array size {} is not a multiple of the element size {}",
                self.array_bytes, self.element_bytes
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidPattern("iteration count must be at least 1".into()));
        }
        if let InitPattern::Uniform { stride: 0 } = self.init {
            return Err(Error::InvalidPattern("uniform stride must be at least 1 element".into()));
        }
        Ok(())
    }
}

/// Successor table of a chase array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChaseArray {
    Uniform { len: u64, stride: u64 },
    /// Only elements on the walk carry a successor.
    Explicit {
        len: u64,
        next: HashMap<u64, u64>,
        /// Distinct elements on the walk.
        walk_len: u64,
    },
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ChaseArray {
    pub fn len(&self) -> u64 {
        match self {
            ChaseArray::Uniform { len, .. } | ChaseArray::Explicit { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Successor of element `i`, if `i` is on the walk.
    pub fn next(&self, i: u64) -> Option<u64> {
        match self {
            ChaseArray::Uniform { len, stride } => (i < *len).then(|| (i + stride % len) % len),
            ChaseArray::Explicit { next, .. } => next.get(&i).copied(),
        }
    }

    /// Number of distinct elements one full pass from element 0 touches.
    pub fn cycle_len(&self) -> u64 {
        match self {
            ChaseArray::Uniform { len, stride } => len / gcd(*len, stride % len),
            ChaseArray::Explicit { walk_len, .. } => *walk_len,
        }
    }

    /// The stored array for uniform patterns.
    pub fn to_vec(&self) -> Option<Vec<u64>> {
        match self {
            ChaseArray::Uniform { len, .. } => (0..*len).map(|i| self.next(i)).collect(),
            ChaseArray::Explicit { .. } => None,
        }
    }

    /// Visited indices starting from element 0.
    pub fn walk(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::successors(Some(0u64), move |&i| self.next(i))
    }
}

/// Builds the successor table for `cfg`.
pub fn init_array(cfg: &PChaseConfig) -> Result<ChaseArray> {
    cfg.validate()?;
    let len = cfg.len();
    match &cfg.init {
        InitPattern::Uniform { stride } => Ok(ChaseArray::Uniform {
            len,
            stride: *stride,
        }),
        InitPattern::Segmented { segments } => build_segmented(len, segments),
    }
}

fn build_segmented(len: u64, segments: &[Segment]) -> Result<ChaseArray> {
    let first = segments
        .first()
        .ok_or_else(|| Error::InvalidPattern("no segments".into()))?;
    if first.start != 0 {
        return Err(Error::InvalidPattern("the walk must start at element 0".into()));
    }
    let mut next = HashMap::new();
    let mut visited = HashSet::from([0u64]);
    let mut cur = 0u64;
    for (n, seg) in segments.iter().enumerate() {
        if seg.start != cur {
            return Err(Error::InvalidPattern(format!(
                "segment {n} starts at {} but the previous one ends at {cur}",
                seg.start
            )));
        }
        for _ in 0..seg.hops {
            let to = cur as i128 + seg.stride as i128;
            if to < 0 || to >= len as i128 {
                return Err(Error::InvalidPattern(format!(
                    "segment {n} escapes the {len}-element array at {to}"
                )));
            }
            let to = to as u64;
            if !visited.insert(to) {
                return Err(Error::InvalidPattern(format!(
                    "segment {n} revisits element {to}"
                )));
            }
            next.insert(cur, to);
            cur = to;
        }
    }
    let loop_start = segments.last().map_or(0, |s| s.start);
    next.insert(cur, loop_start);
    Ok(ChaseArray::Explicit {
        len,
        walk_len: visited.len() as u64,
        next,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Simulated,
    Ingested,
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceSource::Simulated => "simulated",
            TraceSource::Ingested => "ingested",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub source: TraceSource,
    pub device: Option<String>,
    pub array_bytes: u64,
    pub element_bytes: u64,
    pub init: InitPattern,
    pub iterations: u64,
    pub preheat: bool,
    pub seed: Option<u64>,
    /// Whether latencies are already net of the measurement overhead.
    pub overhead_applied: bool,
    pub clock_overhead: u32,
    pub dep_chain_overhead: u32,
}

impl TraceMeta {
    pub fn for_config(cfg: &PChaseConfig, source: TraceSource) -> Self {
        TraceMeta {
            source,
            device: None,
            array_bytes: cfg.array_bytes,
            element_bytes: cfg.element_bytes,
            init: cfg.init.clone(),
            iterations: cfg.iterations,
            preheat: cfg.preheat,
            seed: None,
            overhead_applied: true,
            clock_overhead: 0,
            dep_chain_overhead: 0,
        }
    }

    pub fn config(&self) -> PChaseConfig {
        PChaseConfig {
            array_bytes: self.array_bytes,
            element_bytes: self.element_bytes,
            init: self.init.clone(),
            iterations: self.iterations,
            preheat: self.preheat,
        }
    }

    /// Uniform stride in bytes, if the chase was uniform.
    pub fn stride_bytes(&self) -> Option<u64> {
        match self.init {
            InitPattern::Uniform { stride } => Some(stride * self.element_bytes),
            InitPattern::Segmented { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    /// Visited element index.
    pub s_index: u64,
    /// Net latency in cycles.
    pub s_tvalue: u32,
    pub data_hit: Option<bool>,
    pub l1_tlb_hit: Option<bool>,
    pub l2_tlb_hit: Option<bool>,
    pub pattern: Option<Pattern>,
}

impl TraceRecord {
    fn from_sample(iteration: u64, s_index: u64, s: &LatencySample) -> Self {
        TraceRecord {
            iteration,
            s_index,
            s_tvalue: s.latency_cycles,
            data_hit: Some(s.data_hit),
            l1_tlb_hit: s.l1_tlb_hit,
            l2_tlb_hit: s.l2_tlb_hit,
            pattern: s.pattern,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn mean_latency(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.s_tvalue as f64).sum::<f64>() / self.records.len() as f64
    }

    /// Miss flags: recorded data bits when every record has them, otherwise
    /// latencies above the midpoint of a two-cluster split.
    pub fn miss_flags(&self) -> Vec<bool> {
        if self.records.iter().all(|r| r.data_hit.is_some()) {
            return self.records.iter().map(|r| r.data_hit == Some(false)).collect();
        }
        let latencies: Vec<u32> = self.records.iter().map(|r| r.s_tvalue).collect();
        let threshold = two_means_threshold(&latencies);
        latencies.iter().map(|&l| l as f64 > threshold).collect()
    }
}

/// Midpoint between the centroids of a 1-D 2-means split. A single distinct
/// value yields a threshold at that value (everything counts as a hit).
pub fn two_means_threshold(values: &[u32]) -> f64 {
    let (Some(&min), Some(&max)) = (values.iter().min(), values.iter().max()) else {
        return 0.0;
    };
    if min == max {
        return min as f64;
    }
    let (mut lo, mut hi) = (min as f64, max as f64);
    for _ in 0..64 {
        let mid = (lo + hi) / 2.0;
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0u64, 0.0, 0u64);
        for &v in values {
            if (v as f64) <= mid {
                s0 += v as f64;
                n0 += 1;
            } else {
                s1 += v as f64;
                n1 += 1;
            }
        }
        let (nlo, nhi) = (s0 / n0.max(1) as f64, s1 / n1.max(1) as f64);
        if nlo == lo && nhi == hi {
            break;
        }
        lo = nlo;
        hi = nhi;
    }
    (lo + hi) / 2.0
}

pub fn run_fine_grained<M: MemoryModel + ?Sized>(sim: &mut M, cfg: &PChaseConfig) -> Result<Trace> {
    run_fine_grained_capped(sim, cfg, DEFAULT_TRACE_CAP)
}

pub fn run_fine_grained_capped<M: MemoryModel + ?Sized>(
    sim: &mut M,
    cfg: &PChaseConfig,
    cap: u64,
) -> Result<Trace> {
    if cfg.iterations > cap {
        return Err(Error::TraceTooLong {
            requested: cfg.iterations,
            cap,
        });
    }
    let array = init_array(cfg)?;
    if cfg.array_bytes > sim.address_limit() {
        return Err(Error::AddressOutOfRange {
            addr: cfg.array_bytes - 1,
            limit: sim.address_limit(),
        });
    }
    let eb = cfg.element_bytes;
    if cfg.preheat {
        for i in array.walk().take(array.cycle_len() as usize) {
            sim.load(i * eb)?;
        }
    }
    let records = array
        .walk()
        .take(cfg.iterations as usize)
        .enumerate()
        .map(|(n, i)| {
            let s = sim.load(i * eb)?;
            Ok(TraceRecord::from_sample(n as u64, i, &s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trace {
        meta: TraceMeta::for_config(cfg, TraceSource::Simulated),
        records,
    })
}

/// Average latency over the timed loads.
pub fn run_classic<M: MemoryModel + ?Sized>(sim: &mut M, cfg: &PChaseConfig) -> Result<f64> {
    Ok(run_fine_grained(sim, cfg)?.mean_latency())
}

/// Stage of the latency-spectrum walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumStage {
    /// Cold targets and TLB flush: expect P5 or P6.
    ColdMiss,
    /// Second line of a page whose translation is cached: expect P4.
    TlbHitDataMiss,
    /// Cached targets revisited after the flush: expect P2 or P3.
    DataHitTlbMiss,
    /// Loop inside one cached line: expect P1.
    AllHit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpectrumPlan {
    pub config: PChaseConfig,
    /// Walk positions belonging to each stage, in order.
    pub stages: Vec<(SpectrumStage, Range<usize>)>,
}

impl SpectrumPlan {
    pub fn stage_at(&self, pos: usize) -> Option<SpectrumStage> {
        self.stages
            .iter()
            .find(|(_, r)| r.contains(&pos))
            .map(|(s, _)| *s)
            .or_else(|| self.stages.last().map(|(s, _)| *s))
    }
}

const SPECTRUM_TARGET_STRIDE: u64 = 32 << 20;
const SPECTRUM_MAX_TARGETS: u64 = 8;
const SPECTRUM_FLUSH_PAGES: u64 = 256;
const SPECTRUM_HOP_BACK: u64 = 1 << 20;
const SPECTRUM_LOOP_ITERATIONS: u64 = 64;

/// Builds the segmented walk that sweeps P5/P6, P4, P2/P3 and P1 in order.
///
/// Targets `t_i = i * 32 MB` are loaded cold, then a flush touches one line in
/// each of many other pages to push the targets out of both TLBs. Flush lines
/// are placed in data-cache sets the targets do not use, so the targets stay
/// cached. A hop 1 MB back inside the last flush page hits the L1 TLB but
/// misses the data cache. Revisiting the targets then hits data but misses
/// the TLBs, and a final loop inside one target line hits everywhere.
pub fn latency_spectrum(cfg: &HierarchyConfig, element_bytes: u64) -> Result<SpectrumPlan> {
    cfg.validate()?;
    let eb = element_bytes;
    let mut data_levels = vec![&cfg.l2_data];
    if let Some(l1) = cfg.l1_data.as_ref().filter(|l| l.enabled) {
        data_levels.push(&l1.cache);
    }
    let block = data_levels.iter().map(|c| c.block_size()).max().unwrap_or(32);
    let line = data_levels.iter().map(|c| c.line_size).min().unwrap_or(32);
    if line / eb < 3 {
        return Err(Error::InvalidPattern("data lines hold too few elements to loop".into()));
    }

    let fits = |targets: &[u64]| -> Result<bool> {
        for c in &data_levels {
            let mut per_set: HashMap<u32, u32> = HashMap::new();
            for &t in targets {
                let set = c.map_address(t)?.set_index;
                *per_set.entry(set).or_default() += 1;
                if per_set[&set] > c.slots(set) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };
    let mut m = SPECTRUM_MAX_TARGETS.min((cfg.dram_size - 1) / SPECTRUM_TARGET_STRIDE + 1);
    let targets = loop {
        let t: Vec<u64> = (0..m).map(|i| i * SPECTRUM_TARGET_STRIDE).collect();
        if fits(&t)? {
            break t;
        }
        m -= 1;
        if m == 0 {
            return Err(Error::InvalidPattern("no target fits the data cache".into()));
        }
    };

    let mut reserved: Vec<HashSet<u32>> = Vec::new();
    for c in &data_levels {
        reserved.push(
            targets
                .iter()
                .map(|&t| c.map_address(t).map(|d| d.set_index))
                .collect::<Result<_>>()?,
        );
    }
    let free = |addr: u64| -> Result<bool> {
        for (c, r) in data_levels.iter().zip(&reserved) {
            if r.contains(&c.map_address(addr)?.set_index) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let target_pages: HashSet<u64> = targets.iter().map(|t| t / cfg.page_size).collect();
    let mut flush = Vec::new();
    let mut page = 0u64;
    while (flush.len() as u64) < SPECTRUM_FLUSH_PAGES {
        page += 1;
        let base = page * cfg.page_size;
        if base + cfg.page_size > cfg.dram_size {
            return Err(Error::InvalidPattern("DRAM too small for the TLB flush".into()));
        }
        if target_pages.contains(&page) {
            continue;
        }
        let mut off = SPECTRUM_HOP_BACK.min(cfg.page_size / 2);
        let addr = loop {
            if off + block > cfg.page_size {
                return Err(Error::InvalidPattern("no free set for a flush line".into()));
            }
            let a = base + off;
            if free(a)? && free(a - SPECTRUM_HOP_BACK.min(cfg.page_size / 2))? {
                break a;
            }
            off += block;
        };
        flush.push(addr);
    }
    let hop = *flush.last().unwrap() - SPECTRUM_HOP_BACK.min(cfg.page_size / 2);

    let mut walk: Vec<u64> = targets.iter().map(|t| t / eb).collect();
    walk.extend(flush.iter().map(|a| a / eb));
    let cold_end = walk.len();
    walk.push(hop / eb);
    walk.extend(targets.iter().map(|t| t / eb + 1));
    let loop_start = walk.len() - 1;

    let mut segments = Vec::new();
    let mut i = 0;
    while i < loop_start {
        let stride = walk[i + 1] as i64 - walk[i] as i64;
        let mut j = i + 1;
        while j < loop_start && walk[j + 1] as i64 - walk[j] as i64 == stride {
            j += 1;
        }
        segments.push(Segment::new(walk[i], stride, (j - i) as u64));
        i = j;
    }
    let loop_hops = line / eb - 2;
    segments.push(Segment::new(walk[loop_start], 1, loop_hops));

    let prefix = loop_start + 1;
    let config = PChaseConfig {
        array_bytes: cfg.dram_size,
        element_bytes: eb,
        init: InitPattern::Segmented { segments },
        iterations: (prefix as u64) + SPECTRUM_LOOP_ITERATIONS,
        preheat: false,
    };
    let total = config.iterations as usize;
    Ok(SpectrumPlan {
        config,
        stages: vec![
            (SpectrumStage::ColdMiss, 0..cold_end),
            (SpectrumStage::TlbHitDataMiss, cold_end..cold_end + 1),
            (SpectrumStage::DataHitTlbMiss, cold_end + 1..prefix),
            (SpectrumStage::AllHit, prefix..total),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(len: u64, stride: u64) -> PChaseConfig {
        PChaseConfig {
            array_bytes: len * 4,
            element_bytes: 4,
            init: InitPattern::Uniform { stride },
            iterations: 1,
            preheat: false,
        }
    }

    #[test]
    fn listing_one_transcription() {
        let a = init_array(&uniform(8, 2)).unwrap();
        assert_eq!(a.to_vec().unwrap(), vec![2, 3, 4, 5, 6, 7, 0, 1]);
    }

    #[test]
    fn figure_twelve_segments() {
        let cfg = PChaseConfig {
            array_bytes: 32 * 4,
            element_bytes: 4,
            init: InitPattern::Segmented {
                segments: vec![
                    Segment::new(0, 8, 1),
                    Segment::new(8, 4, 1),
                    Segment::new(12, 2, 1),
                    Segment::new(14, 4, 1),
                    Segment::new(18, 2, 2),
                ],
            },
            iterations: 1,
            preheat: false,
        };
        let a = init_array(&cfg).unwrap();
        let walk: Vec<u64> = a.walk().take(9).collect();
        assert_eq!(walk, vec![0, 8, 12, 14, 18, 20, 22, 18, 20]);
        assert_eq!(a.cycle_len(), 7);
    }

    #[test]
    fn segment_errors() {
        let mk = |segments| PChaseConfig {
            array_bytes: 64,
            element_bytes: 4,
            init: InitPattern::Segmented { segments },
            iterations: 1,
            preheat: false,
        };
        // escape
        assert!(init_array(&mk(vec![Segment::new(0, 8, 2)])).is_err());
        // collision
        assert!(init_array(&mk(vec![Segment::new(0, 4, 2), Segment::new(8, -4, 1)])).is_err());
        // broken chain
        assert!(init_array(&mk(vec![Segment::new(0, 4, 1), Segment::new(5, 1, 1)])).is_err());
        // walk not starting at 0
        assert!(init_array(&mk(vec![Segment::new(1, 1, 1)])).is_err());
    }

    #[test]
    fn pattern_text_round_trip() {
        for text in ["uniform:8", "segments:0/8/1;8/4/1;12/-2/3"] {
            let p: InitPattern = text.parse().unwrap();
            assert_eq!(p.to_string(), text);
        }
        assert!("zigzag:3".parse::<InitPattern>().is_err());
        assert!("segments:0/1".parse::<InitPattern>().is_err());
    }

    #[test]
    fn cycle_length_matches_explicit_walk() {
        for len in 1..40u64 {
            for stride in 1..2 * len {
                let a = init_array(&uniform(len, stride)).unwrap();
                let mut seen = HashSet::new();
                for i in a.walk() {
                    if !seen.insert(i) {
                        break;
                    }
                }
                assert_eq!(seen.len() as u64, a.cycle_len(), "len {len} stride {stride}");
            }
        }
    }

    #[test]
    fn zero_iterations_rejected() {
        let mut cfg = uniform(8, 1);
        cfg.iterations = 0;
        assert!(init_array(&cfg).is_err());
    }
}
