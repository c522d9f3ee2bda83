//! Recovering cache parameters from pointer-chase traces.
//!
//! The fine-grained pipeline runs four steps against a [`Probe`]: cache size,
//! line size, set count (with layout) and replacement policy. The classic
//! average-latency estimators are pure functions over latency grids, so they
//! can be fed from simulations or from ingested measurements alike.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheState, SetLayout};
use crate::error::{Error, Result};
use crate::hierarchy::{CacheModel, HierarchyConfig, HierarchySim};
use crate::pchase::{run_fine_grained, PChaseConfig, Trace};

/// One uniform-stride query against a probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProbeQuery {
    pub array_bytes: u64,
    pub stride_bytes: u64,
    pub iterations: u64,
    pub preheat: bool,
    pub seed: u64,
}

/// Source of traces. Identical queries must return identical traces.
pub trait Probe {
    fn run(&self, q: &ProbeQuery) -> Result<Trace>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimTarget {
    Cache {
        config: CacheConfig,
        hit_cycles: u32,
        miss_cycles: u32,
    },
    Hierarchy(HierarchyConfig),
}

/// Probe backed by a fresh simulator per query.
#[derive(Clone, Debug)]
pub struct SimProbe {
    pub target: SimTarget,
}

impl SimProbe {
    pub fn cache(config: CacheConfig, hit_cycles: u32, miss_cycles: u32) -> Self {
        SimProbe {
            target: SimTarget::Cache {
                config,
                hit_cycles,
                miss_cycles,
            },
        }
    }
}

impl SimTarget {
    /// Runs `cfg` on a fresh simulator seeded with `seed`.
    pub fn simulate(&self, cfg: &PChaseConfig, seed: u64) -> Result<Trace> {
        let mut trace = match self {
            SimTarget::Cache {
                config,
                hit_cycles,
                miss_cycles,
            } => {
                let state = CacheState::for_run(config.clone(), seed)?;
                run_fine_grained(&mut CacheModel::new(state, *hit_cycles, *miss_cycles), cfg)?
            }
            SimTarget::Hierarchy(h) => {
                let mut sim = HierarchySim::with_seed(h.clone(), seed)?;
                let mut t = run_fine_grained(&mut sim, cfg)?;
                t.meta.device = Some(h.name.clone());
                t.meta.clock_overhead = h.clock_overhead_cycles;
                t.meta.dep_chain_overhead = h.dep_chain_overhead_cycles;
                t
            }
        };
        trace.meta.seed = Some(seed);
        Ok(trace)
    }
}

impl Probe for SimProbe {
    fn run(&self, q: &ProbeQuery) -> Result<Trace> {
        let cfg = PChaseConfig::uniform(q.array_bytes, q.stride_bytes, q.iterations, q.preheat);
        self.target.simulate(&cfg, q.seed)
    }
}

/// Probe answering from a fixed set of recorded traces.
#[derive(Clone, Debug, Default)]
pub struct DirProbe {
    pub traces: Vec<Trace>,
}

impl DirProbe {
    /// Loads every `*.csv` file in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let traces = paths
            .iter()
            .map(|p| crate::io::read_trace(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(DirProbe { traces })
    }
}

impl Probe for DirProbe {
    fn run(&self, q: &ProbeQuery) -> Result<Trace> {
        let matches = |t: &&Trace| {
            t.meta.array_bytes == q.array_bytes
                && t.meta.stride_bytes() == Some(q.stride_bytes)
                && t.meta.preheat == q.preheat
                && t.records.len() as u64 >= q.iterations
        };
        let found = self
            .traces
            .iter()
            .filter(matches)
            .find(|t| t.meta.seed == Some(q.seed))
            .or_else(|| self.traces.iter().filter(matches).find(|t| t.meta.seed.is_none()));
        let t = found.ok_or(Error::MissingCoverage {
            array_bytes: q.array_bytes,
            stride_bytes: q.stride_bytes,
            iterations: q.iterations,
        })?;
        let mut t = t.clone();
        t.records.truncate(q.iterations as usize);
        t.meta.iterations = q.iterations;
        Ok(t)
    }
}

/// Tunables of the fine-grained pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    /// Stride of the size search and granularity of every N grid.
    pub unit_bytes: u64,
    pub floor_bytes: u64,
    pub ceiling_bytes: u64,
    /// Timed passes per query in the size search.
    pub size_passes: u64,
    /// Timed passes per query in the line and set steps.
    pub passes: u64,
    /// Miss-count ratio treated as a "sudden increase" in the line step.
    pub jump_factor: f64,
    /// Independent runs of the replacement test.
    pub seeds: Vec<u64>,
    /// Initial replacement-test length, in passes over the array.
    pub replacement_passes: u64,
    /// Reconstructed evictions to collect over all seeds.
    pub min_evictions: u64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            unit_bytes: 4,
            floor_bytes: 1024,
            ceiling_bytes: 256 << 20,
            size_passes: 2,
            passes: 64,
            jump_factor: 2.0,
            seeds: vec![1, 2, 3],
            replacement_passes: 200,
            min_evictions: 10_000,
        }
    }
}

impl InferenceOptions {
    fn seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }
}

/// The (N, s) points behind one conclusion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub conclusion: String,
    pub points: Vec<(u64, u64)>,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyClass {
    Lru,
    NonLru,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferredParams {
    pub cache_size: u64,
    pub line_size: u64,
    pub num_sets: u32,
    pub set_layout: SetLayout,
    pub policy_class: PolicyClass,
    pub way_replacement_freq: Option<Vec<f64>>,
    pub periodic: bool,
    pub evidence: Vec<Evidence>,
}

impl InferredParams {
    /// Associativity for uniform layouts.
    pub fn ways(&self) -> Option<u32> {
        match &self.set_layout {
            SetLayout::Uniform { ways, .. } => Some(*ways),
            SetLayout::Unequal { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissRatePoint {
    pub array_bytes: u64,
    pub stride_bytes: u64,
    pub miss_rate: f64,
    pub miss_count: u64,
    pub iterations: u64,
}

impl MissRatePoint {
    pub fn from_trace(t: &Trace) -> Self {
        let flags = t.miss_flags();
        let miss_count = flags.iter().filter(|&&m| m).count() as u64;
        let k = flags.len() as u64;
        MissRatePoint {
            array_bytes: t.meta.array_bytes,
            stride_bytes: t.meta.stride_bytes().unwrap_or(0),
            miss_rate: if k == 0 { 0.0 } else { miss_count as f64 / k as f64 },
            miss_count,
            iterations: k,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MissRateSeries {
    pub points: Vec<MissRatePoint>,
}

fn query(array_bytes: u64, stride_bytes: u64, passes: u64, preheat: bool, seed: u64) -> ProbeQuery {
    ProbeQuery {
        array_bytes,
        stride_bytes,
        iterations: passes * (array_bytes / stride_bytes).max(1),
        preheat,
        seed,
    }
}

/// Byte address of every record.
fn addresses(t: &Trace) -> impl Iterator<Item = u64> + '_ {
    t.records.iter().map(move |r| r.s_index * t.meta.element_bytes)
}

/// Smallest `p <= max_period` with `flags[i] == flags[i - p]` throughout the
/// last four expected periods (`4 * expected` records). The record count must
/// cover the cold pass plus those four periods.
pub fn find_period(flags: &[bool], expected: usize, max_period: usize) -> Result<Option<usize>> {
    let window = 4 * expected;
    if expected == 0 || flags.len() < window + expected {
        return Err(Error::inference(format!(
            "{} records are too few for a period test over 4 x {expected}",
            flags.len()
        )));
    }
    Ok(period_in_window(flags, window, max_period))
}

/// Smallest `p <= max_period` (and at most half the window) under which the
/// last `window` flags are shift-invariant.
pub fn period_in_window(flags: &[bool], window: usize, max_period: usize) -> Option<usize> {
    let window = window.min(flags.len());
    let start = flags.len() - window;
    (1..=max_period.min(window / 2)).find(|&p| (start + p..flags.len()).all(|i| flags[i] == flags[i - p]))
}

fn all_hit(probe: &dyn Probe, n: u64, unit: u64, opts: &InferenceOptions) -> Result<bool> {
    let t = probe.run(&query(n, unit, opts.size_passes, true, opts.seed()))?;
    Ok(t.miss_flags().iter().all(|m| !m))
}

/// Largest N (on the unit grid) whose preheated walk never misses.
pub fn find_cache_size(probe: &dyn Probe, opts: &InferenceOptions) -> Result<(u64, Evidence)> {
    let u = opts.unit_bytes;
    let mut points = Vec::new();
    let mut lo = opts.floor_bytes.div_ceil(u).max(1) * u;
    points.push((lo, u));
    if !all_hit(probe, lo, u, opts)? {
        return Err(Error::inference(format!(
            "misses already at the search floor of {lo} bytes"
        )));
    }
    let hi = loop {
        let next = lo * 2;
        if next > opts.ceiling_bytes {
            return Err(Error::inference(format!(
                "cache larger than the search bound of {} bytes",
                opts.ceiling_bytes
            )));
        }
        points.push((next, u));
        if all_hit(probe, next, u, opts)? {
            lo = next;
        } else {
            break next;
        }
    };
    let (mut lo_u, mut hi_u) = (lo / u, hi / u);
    while hi_u - lo_u > 1 {
        let mid = (lo_u + hi_u) / 2;
        points.push((mid * u, u));
        if all_hit(probe, mid * u, u, opts)? {
            lo_u = mid;
        } else {
            hi_u = mid;
        }
    }
    let c = lo_u * u;
    Ok((
        c,
        Evidence {
            conclusion: format!("C = {c} B"),
            points,
            note: format!("largest all-hit N at s = {u} B; N = {} B misses", hi_u * u),
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSizeResult {
    pub line_size: u64,
    pub periodic: bool,
    /// Miss count per tested N beyond C.
    pub miss_counts: Vec<(u64, u64)>,
    pub evidence: Evidence,
}

/// Line size from the first appended element, past N = C + unit, that
/// misses: it opens a new line in a set that now overflows.
pub fn find_line_size(probe: &dyn Probe, c: u64, opts: &InferenceOptions) -> Result<LineSizeResult> {
    let u = opts.unit_bytes;
    let mut miss_counts = Vec::new();
    let mut points = Vec::new();
    let max_j = (c / u).max(2) + 1;
    for j in 1..=max_j {
        let n = c + j * u;
        let t = probe.run(&query(n, u, opts.passes, true, opts.seed()))?;
        let flags = t.miss_flags();
        points.push((n, u));
        miss_counts.push((n, flags.iter().filter(|&&m| m).count() as u64));
        if j < 2 {
            continue;
        }
        let tail = c + (j - 1) * u;
        let tail_missed = addresses(&t).zip(&flags).any(|(a, &m)| m && a == tail);
        if tail_missed {
            let b = (j - 1) * u;
            let periodic = find_period(&flags, (n / u) as usize, (n / u) as usize)?.is_some();
            let jumps: Vec<String> = miss_counts
                .windows(2)
                .filter(|w| w[1].1 as f64 >= opts.jump_factor * w[0].1.max(1) as f64)
                .map(|w| w[1].0.to_string())
                .collect();
            return Ok(LineSizeResult {
                line_size: b,
                periodic,
                miss_counts,
                evidence: Evidence {
                    conclusion: format!("b = {b} B ({})", if periodic { "periodic" } else { "aperiodic" }),
                    points,
                    note: format!(
                        "element at C + {b} is the first appended one to miss; \
                         miss-count jumps >= {}x at N = [{}]",
                        opts.jump_factor,
                        jumps.join(", ")
                    ),
                },
            });
        }
    }
    Err(Error::inference(format!(
        "no appended element missed up to N = C + {} B",
        max_j * u
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetCountResult {
    pub num_sets: u32,
    pub layout: SetLayout,
    /// Distinct missed lines per tested N.
    pub missed_lines: Vec<(u64, u64)>,
    pub evidence: Evidence,
}

/// Grows N past C one line at a time; each increment of more than one missed
/// line means another set started to overflow.
pub fn find_num_sets(
    probe: &dyn Probe,
    c: u64,
    b: u64,
    opts: &InferenceOptions,
) -> Result<SetCountResult> {
    let mut missed_lines = Vec::new();
    let mut jumps = Vec::new();
    let mut prev = 0u64;
    let max_j = c / b + 1;
    for j in 1..=max_j {
        let n = c + j * b;
        let t = probe.run(&query(n, b, opts.passes, true, opts.seed()))?;
        let lines: BTreeSet<u64> = addresses(&t)
            .zip(t.miss_flags())
            .filter(|(_, m)| *m)
            .map(|(a, _)| a / b)
            .collect();
        let count = lines.len() as u64;
        missed_lines.push((n, count));
        if count < prev {
            return Err(Error::inference(format!(
                "irregular mapping: missed lines fell from {prev} to {count} at N = {n}"
            )));
        }
        if count - prev > 1 {
            jumps.push(count - prev);
        }
        prev = count;
        if count == n / b {
            return set_layout_from_jumps(c, b, jumps, missed_lines);
        }
    }
    Err(Error::inference(format!(
        "not every line missed by N = C + {} B",
        max_j * b
    )))
}

fn set_layout_from_jumps(
    c: u64,
    b: u64,
    jumps: Vec<u64>,
    missed_lines: Vec<(u64, u64)>,
) -> Result<SetCountResult> {
    let t = jumps.len() as u32;
    if t == 0 {
        return Err(Error::inference("no set ever overflowed"));
    }
    let ways: Vec<u32> = jumps.iter().map(|j| (j - 1) as u32).collect();
    let covered: u64 = ways.iter().map(|&w| w as u64).sum::<u64>() * b;
    let (layout, note) = if covered == c && ways.iter().all(|&w| w == ways[0]) {
        (
            SetLayout::Uniform {
                num_sets: t,
                ways: ways[0],
            },
            format!("{t} sets of {} ways", ways[0]),
        )
    } else if covered == c {
        (
            SetLayout::Unequal {
                ways_per_set: ways.clone(),
            },
            format!("unequal ways {ways:?}"),
        )
    } else {
        let a = c / (t as u64 * b);
        (
            SetLayout::Uniform { num_sets: t, ways: a as u32 },
            format!("overflow jumps {jumps:?} do not cover C; ways taken as C/(T*b) = {a}"),
        )
    };
    let points = missed_lines.iter().map(|&(n, _)| (n, b)).collect();
    Ok(SetCountResult {
        num_sets: t,
        layout,
        evidence: Evidence {
            conclusion: format!("T = {t}"),
            points,
            note,
        },
        missed_lines,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementResult {
    pub policy_class: PolicyClass,
    /// Detected period per seed; `None` where aperiodic.
    pub periods: Vec<Option<usize>>,
    pub way_frequencies: Option<Vec<f64>>,
    pub evictions: u64,
    pub evidence: Evidence,
}

/// Victim ways reconstructed from the miss stream of an `a + 1`-line
/// contended set, where exactly one of those lines is absent at a time.
///
/// `misses` is the ordered list of missed contended lines, cold pass
/// included. Returns the evicted way of every eviction.
pub fn reconstruct_evictions(misses: &[u64], ways: usize) -> Vec<usize> {
    let mut slot: HashMap<u64, usize> = HashMap::new();
    let mut evicted = Vec::new();
    for (j, &line) in misses.iter().enumerate() {
        if slot.len() < ways && !slot.contains_key(&line) {
            let w = slot.len();
            slot.insert(line, w);
            continue;
        }
        // The line missing next is the one this miss displaced.
        let Some(&victim) = misses.get(j + 1) else {
            break;
        };
        let Some(&way) = slot.get(&victim) else {
            break;
        };
        slot.remove(&victim);
        slot.insert(line, way);
        evicted.push(way);
    }
    evicted
}

/// Periodicity test and, for non-LRU caches, per-way eviction frequencies.
pub fn detect_replacement(
    probe: &dyn Probe,
    c: u64,
    b: u64,
    opts: &InferenceOptions,
) -> Result<ReplacementResult> {
    let n = c + b;
    let per_pass = (n / b) as usize;
    let seeds = if opts.seeds.is_empty() { vec![0] } else { opts.seeds.clone() };
    let mut passes = opts.replacement_passes.max(5);
    loop {
        let mut periods = Vec::new();
        let mut tally: BTreeMap<usize, u64> = BTreeMap::new();
        let mut ways_seen = 0usize;
        let mut points = Vec::new();
        for &seed in &seeds {
            let t = probe.run(&query(n, b, passes, false, seed))?;
            points.push((n, b));
            let flags = t.miss_flags();
            periods.push(find_period(&flags, per_pass, per_pass)?);
            let lines: Vec<u64> = addresses(&t).map(|a| a / b).collect();
            let contended: BTreeSet<u64> = lines[per_pass..]
                .iter()
                .zip(&flags[per_pass..])
                .filter(|(_, m)| **m)
                .map(|(l, _)| *l)
                .collect();
            let misses: Vec<u64> = lines
                .iter()
                .zip(&flags)
                .filter(|(l, m)| **m && contended.contains(l))
                .map(|(l, _)| *l)
                .collect();
            let ways = contended.len().saturating_sub(1);
            ways_seen = ways_seen.max(ways);
            for w in reconstruct_evictions(&misses, ways) {
                *tally.entry(w).or_default() += 1;
            }
        }
        let aperiodic = periods.iter().all(Option::is_none);
        let evictions: u64 = tally.values().sum();
        let class = if aperiodic { PolicyClass::NonLru } else { PolicyClass::Lru };
        if class == PolicyClass::Lru {
            let p = periods.iter().flatten().next().copied().unwrap_or(0);
            return Ok(ReplacementResult {
                policy_class: class,
                periods,
                way_frequencies: None,
                evictions,
                evidence: Evidence {
                    conclusion: "LRU".into(),
                    points,
                    note: format!("miss sequence periodic with period {p} accesses"),
                },
            });
        }
        if evictions >= opts.min_evictions {
            let freqs: Vec<f64> = (0..ways_seen)
                .map(|w| *tally.get(&w).unwrap_or(&0) as f64 / evictions as f64)
                .collect();
            let shown: Vec<String> = freqs.iter().map(|f| format!("{f:.4}")).collect();
            return Ok(ReplacementResult {
                policy_class: class,
                periods,
                way_frequencies: Some(freqs),
                evictions,
                evidence: Evidence {
                    conclusion: "non-LRU".into(),
                    points,
                    note: format!(
                        "no period <= {per_pass} on any of {} seeds; {evictions} evictions give way \
                         frequencies [{}]",
                        seeds.len(),
                        shown.join(", ")
                    ),
                },
            });
        }
        passes *= 2;
        if passes > 1 << 24 {
            return Err(Error::inference(format!(
                "only {evictions} evictions reconstructed; policy looks non-LRU but frequencies are unreliable"
            )));
        }
    }
}

/// Runs the four-step pipeline.
pub fn infer(probe: &dyn Probe, opts: &InferenceOptions) -> Result<InferredParams> {
    let (c, size_ev) = find_cache_size(probe, opts)?;
    let line = find_line_size(probe, c, opts)?;
    let sets = find_num_sets(probe, c, line.line_size, opts)?;
    let repl = detect_replacement(probe, c, line.line_size, opts)?;
    Ok(InferredParams {
        cache_size: c,
        line_size: line.line_size,
        num_sets: sets.num_sets,
        set_layout: sets.layout,
        policy_class: repl.policy_class,
        way_replacement_freq: repl.way_frequencies,
        periodic: line.periodic && repl.policy_class == PolicyClass::Lru,
        evidence: vec![size_ev, line.evidence, sets.evidence, repl.evidence],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlbLayout {
    pub layout: SetLayout,
    /// Misses per pass at each N.
    pub misses_per_pass: Vec<(u64, u64)>,
    /// Entries replaced at least once, accumulated set by set.
    pub missed_entries: Vec<(u64, u64)>,
}

/// Set layout of a TLB from a miss-rate series at s = page size covering
/// N = C + page .. C + T * page.
pub fn infer_tlb_sets(series: &MissRateSeries, page: u64) -> Result<TlbLayout> {
    let mut pts: Vec<&MissRatePoint> = series.points.iter().collect();
    pts.sort_by_key(|p| p.array_bytes);
    let per_pass: Vec<(u64, u64)> = pts
        .iter()
        .map(|p| {
            let lines = p.array_bytes / page;
            (p.array_bytes, (p.miss_rate * lines as f64).round() as u64)
        })
        .collect();
    let first = per_pass
        .iter()
        .position(|&(_, m)| m > 0)
        .ok_or_else(|| Error::inference("no misses in the TLB series"))?;
    let mut ways = vec![per_pass[first].1.saturating_sub(1) as u32];
    let mut entries = vec![(per_pass[first].0, ways[0] as u64)];
    let mut all_missed = per_pass[first].1 == per_pass[first].0 / page;
    for w in per_pass[first..].windows(2) {
        if all_missed {
            break;
        }
        let inc = w[1].1.saturating_sub(w[0].1);
        if inc < 2 {
            return Err(Error::inference(format!(
                "layout not two-tier: increment of {inc} at N = {}; raw misses {per_pass:?}",
                w[1].0
            )));
        }
        ways.push((inc - 1) as u32);
        let total = entries.last().map_or(0, |e| e.1) + inc - 1;
        entries.push((w[1].0, total));
        all_missed = w[1].1 == w[1].0 / page;
    }
    if ways[1..].windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::inference(format!(
            "layout not two-tier: small-set increments differ, ways {ways:?}"
        )));
    }
    let layout = if ways.iter().all(|&w| w == ways[0]) {
        SetLayout::Uniform {
            num_sets: ways.len() as u32,
            ways: ways[0],
        }
    } else {
        SetLayout::Unequal { ways_per_set: ways }
    };
    Ok(TlbLayout {
        layout,
        misses_per_pass: per_pass,
        missed_entries: entries,
    })
}

/// One average-latency measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub array_bytes: u64,
    pub stride_bytes: u64,
    pub t_avg: f64,
}

/// Runs a preheated uniform chase and returns its average latency.
pub fn measure(probe: &dyn Probe, n: u64, s: u64, passes: u64, seed: u64) -> Result<LatencyPoint> {
    let t = probe.run(&query(n, s, passes, true, seed))?;
    Ok(LatencyPoint {
        array_bytes: n,
        stride_bytes: s,
        t_avg: t.mean_latency(),
    })
}

const FLAT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaavedraResult {
    pub cache_size: u64,
    pub line_size: u64,
    /// `N_large / s` at the fall point.
    pub associativity: f64,
    /// `C / (a * b)`; may be non-integral.
    pub num_sets: f64,
    pub integral: bool,
    pub evidence: Evidence,
}

/// Classic stride-sweep reading. `small` is the sweep at the largest N that
/// fits (every point at the hit latency); `large` is a sweep at N >= 4C.
pub fn saavedra_analysis(small: &[LatencyPoint], large: &[LatencyPoint]) -> Result<SaavedraResult> {
    let inconclusive = |why: &str| Error::inference(format!("saavedra inconclusive: {why}"));
    let mut large: Vec<LatencyPoint> = large.to_vec();
    large.sort_by_key(|p| p.stride_bytes);
    let t0 = large
        .iter()
        .chain(small)
        .map(|p| p.t_avg)
        .fold(f64::INFINITY, f64::min);
    let c = small
        .first()
        .map(|p| p.array_bytes)
        .ok_or_else(|| inconclusive("empty small-N sweep"))?;
    if small.iter().any(|p| (p.t_avg - t0).abs() > FLAT) {
        return Err(inconclusive("small-N sweep is not flat at the hit latency"));
    }
    let max = large.iter().map(|p| p.t_avg).fold(f64::NEG_INFINITY, f64::max);
    if !(max > t0 + FLAT) {
        return Err(inconclusive("no latency rise in the large-N sweep"));
    }
    let rise = large
        .iter()
        .position(|p| p.t_avg >= max - FLAT)
        .ok_or_else(|| inconclusive("no plateau"))?;
    let b = large[rise].stride_bytes;
    let fall = large[rise..]
        .iter()
        .find(|p| p.t_avg < max - FLAT)
        .ok_or_else(|| inconclusive("latency never falls"))?;
    let n_large = fall.array_bytes;
    let a = n_large as f64 / fall.stride_bytes as f64;
    let t = c as f64 / (a * b as f64);
    let integral = a.fract() == 0.0 && t.fract() == 0.0;
    let points = large.iter().map(|p| (p.array_bytes, p.stride_bytes)).collect();
    Ok(SaavedraResult {
        cache_size: c,
        line_size: b,
        associativity: a,
        num_sets: t,
        integral,
        evidence: Evidence {
            conclusion: format!("b = {b}, a = {a}, T = {t}"),
            points,
            note: format!(
                "plateau from s = {b}; falls at s = {} so a = {n_large}/{}",
                fall.stride_bytes, fall.stride_bytes
            ),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WongResult {
    pub cache_size: u64,
    pub line_size: u64,
    pub num_sets: u32,
    pub associativity: f64,
    pub integral: bool,
    /// Whether every step added the same number of misses.
    pub linear: bool,
    /// Added cycles per pass at each big step, hit cost removed.
    pub step_sizes: Vec<f64>,
    pub evidence: Evidence,
}

/// Share of the largest rise between neighbouring points that another rise
/// must reach to count as a staircase step.
const WONG_STEP_SHARE: f64 = 0.25;

/// Classic array-size sweep reading at a fixed stride: plateaus count the
/// sets and their width is taken as the line size.
pub fn wong_analysis(series: &[LatencyPoint]) -> Result<WongResult> {
    let inconclusive = |why: &str| Error::inference(format!("wong inconclusive: {why}"));
    let mut pts = series.to_vec();
    pts.sort_by_key(|p| p.array_bytes);
    let t0 = pts.iter().map(|p| p.t_avg).fold(f64::INFINITY, f64::min);
    let max = pts.iter().map(|p| p.t_avg).fold(f64::NEG_INFINITY, f64::max);
    if pts.len() < 3 || !(max > t0 + FLAT) {
        return Err(inconclusive("staircase absent"));
    }
    let c = pts
        .iter()
        .take_while(|p| (p.t_avg - t0).abs() <= FLAT)
        .last()
        .map(|p| p.array_bytes)
        .ok_or_else(|| inconclusive("series does not start at the hit latency"))?;
    let biggest = pts
        .windows(2)
        .map(|w| w[1].t_avg - w[0].t_avg)
        .fold(0.0, f64::max);
    let mut steps = Vec::new();
    let mut sizes = Vec::new();
    for w in pts.windows(2) {
        if w[1].t_avg - w[0].t_avg > WONG_STEP_SHARE * biggest {
            steps.push(w[1].array_bytes);
            let s = w[1].stride_bytes as f64;
            let total = |p: &LatencyPoint| p.t_avg * p.array_bytes as f64 / s;
            sizes.push(total(&w[1]) - total(&w[0]) - t0 * (w[1].array_bytes - w[0].array_bytes) as f64 / s);
        }
    }
    if steps.len() < 2 {
        return Err(inconclusive("fewer than two staircase steps"));
    }
    let t = steps.len() as u32;
    let b = steps[1] - steps[0];
    let a = c as f64 / (b as f64 * t as f64);
    let lo = sizes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sizes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let linear = hi <= lo * 1.1;
    let points = pts.iter().map(|p| (p.array_bytes, p.stride_bytes)).collect();
    Ok(WongResult {
        cache_size: c,
        line_size: b,
        num_sets: t,
        associativity: a,
        integral: a.fract() == 0.0,
        linear,
        step_sizes: sizes,
        evidence: Evidence {
            conclusion: format!("C = {c}, b = {b}, T = {t}, a = {a}"),
            points,
            note: format!("steps at N = {steps:?}"),
        },
    })
}

/// Whether the two classic readings contradict each other.
pub fn readings_disagree(s: &SaavedraResult, w: &WongResult) -> bool {
    s.line_size != w.line_size || s.num_sets != w.num_sets as f64 || !s.integral || !w.integral
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissRateEstimate {
    pub miss_rate: f64,
    /// Set when the raw value fell outside [0, 1] and was clamped.
    pub clamped: bool,
}

/// `r = (t_avg - t0) / tm`.
pub fn estimate_miss_rate(t_avg: f64, t0: f64, tm: f64) -> Result<MissRateEstimate> {
    if !(tm > 0.0) {
        return Err(Error::inference("miss penalty must be positive"));
    }
    let r = (t_avg - t0) / tm;
    Ok(MissRateEstimate {
        miss_rate: r.clamp(0.0, 1.0),
        clamped: !(0.0..=1.0).contains(&r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_of_fig4_pattern() {
        let cycle: Vec<bool> = (0..13).map(|i| i % 6 == 0).collect();
        let flags: Vec<bool> = cycle.iter().cycle().take(13 * 6).copied().collect();
        assert_eq!(find_period(&flags, 13, 13).unwrap(), Some(13));
        assert!(find_period(&flags[..40], 13, 13).is_err());
    }

    #[test]
    fn reconstruction_on_a_hand_trace() {
        // 3 ways, lines 0..3. Cold: 0,1,2 fill ways 0,1,2; 3 misses and evicts
        // the next-missing line 1 (way 1); then 1 evicts 0 (way 0).
        let misses = [0, 1, 2, 3, 1, 0];
        assert_eq!(reconstruct_evictions(&misses, 3), vec![1, 0]);
    }

    #[test]
    fn miss_rate_edges() {
        assert_eq!(estimate_miss_rate(100.0, 100.0, 50.0).unwrap().miss_rate, 0.0);
        assert_eq!(estimate_miss_rate(150.0, 100.0, 50.0).unwrap().miss_rate, 1.0);
        let c = estimate_miss_rate(200.0, 100.0, 50.0).unwrap();
        assert!(c.clamped && c.miss_rate == 1.0);
        assert!(estimate_miss_rate(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn uniform_tlb_layout() {
        // 4 sets of 8 ways, page 1: each further page overflows one more set.
        let points = (1..=4u64)
            .map(|j| {
                let lines = 32 + j;
                MissRatePoint {
                    array_bytes: lines,
                    stride_bytes: 1,
                    miss_rate: (9 * j) as f64 / lines as f64,
                    miss_count: 9 * j,
                    iterations: lines,
                }
            })
            .collect();
        let r = infer_tlb_sets(&MissRateSeries { points }, 1).unwrap();
        assert_eq!(r.layout, SetLayout::Uniform { num_sets: 4, ways: 8 });
    }
}
