//! Single-cache state machine.
//!
//! A [`CacheConfig`] describes one cache level: capacity, line size, how lines
//! are grouped into sets (equal or unequal way counts), how an address is split
//! into set/tag/offset, and which replacement policy runs inside a set.
//! [`CacheState`] holds the resident tags and answers hit/miss for each access.
//!
//! Sectored caches are supported through `sectors_per_block`: a resident block
//! of `sectors_per_block` consecutive lines shares one tag, and each line
//! (sector) is filled on its own first touch. Way counts in [`SetLayout`] are
//! always expressed in lines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the simulated address space.
pub const ADDRESS_BITS: u32 = 40;
pub const ADDRESS_LIMIT: u64 = 1 << ADDRESS_BITS;

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Inclusive range of address bits, `lo..=hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitRange {
    pub lo: u32,
    pub hi: u32,
}

impl BitRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        BitRange { lo, hi }
    }

    pub fn width(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn extract(&self, addr: u64) -> u64 {
        (addr >> self.lo) & ((1u64 << self.width()) - 1)
    }

    fn overlaps(&self, other: &BitRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Removes the bits of `range` from `x`, closing the gap.
fn squeeze(x: u64, range: BitRange) -> u64 {
    let low = x & ((1u64 << range.lo) - 1);
    let high = x >> (range.hi + 1);
    (high << range.lo) | low
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetLayout {
    Uniform { num_sets: u32, ways: u32 },
    /// Set 0 is listed first; way counts are per set.
    Unequal { ways_per_set: Vec<u32> },
}

impl SetLayout {
    pub fn num_sets(&self) -> u32 {
        match self {
            SetLayout::Uniform { num_sets, .. } => *num_sets,
            SetLayout::Unequal { ways_per_set } => ways_per_set.len() as u32,
        }
    }

    pub fn ways(&self, set: u32) -> u32 {
        match self {
            SetLayout::Uniform { ways, .. } => *ways,
            SetLayout::Unequal { ways_per_set } => ways_per_set[set as usize],
        }
    }

    pub fn total_ways(&self) -> u64 {
        match self {
            SetLayout::Uniform { num_sets, ways } => *num_sets as u64 * *ways as u64,
            SetLayout::Unequal { ways_per_set } => ways_per_set.iter().map(|&w| w as u64).sum(),
        }
    }

    pub fn max_ways(&self) -> u32 {
        (0..self.num_sets()).map(|s| self.ways(s)).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AddressMapping {
    /// Set bits sit immediately above the offset bits.
    StandardBits,
    /// Explicit bit fields. Bits outside `offset` and `set` form the tag.
    BitFields {
        offset: BitRange,
        set: BitRange,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        way: Option<BitRange>,
    },
    /// `set = line_index mod T`. For unequal layouts, lines are dealt to the
    /// sets round-robin, skipping sets whose ways are used up, so that one
    /// period of `sum(ways)` consecutive lines fills every set exactly.
    ModuloLine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReplacementPolicy {
    Lru,
    /// Victim way drawn from a fixed distribution, independent of recency.
    ProbabilisticWay { weights: Vec<f64>, rng_seed: u64 },
    /// Every other eviction hits `hot_way`; the rest rotate over the other ways.
    AlternatingWay { hot_way: u32 },
    /// Address bits (`AddressMapping::BitFields::way`) pick a group of ways;
    /// LRU inside the group.
    PinnedWayLru,
}

impl ReplacementPolicy {
    pub fn is_lru(&self) -> bool {
        matches!(self, ReplacementPolicy::Lru)
    }
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    /// Capacity `C` in bytes.
    pub total_size: u64,
    /// Line size `b` in bytes.
    pub line_size: u64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub sectors_per_block: u32,
    pub set_layout: SetLayout,
    pub mapping: AddressMapping,
    pub policy: ReplacementPolicy,
}

/// Result of splitting an address for one cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decomposed {
    pub set_index: u32,
    pub tag: u64,
    pub offset: u64,
    /// Line within the block; always 0 for unsectored caches.
    pub sector: u32,
}

impl CacheConfig {
    pub fn uniform(
        total_size: u64,
        line_size: u64,
        num_sets: u32,
        mapping: AddressMapping,
        policy: ReplacementPolicy,
    ) -> Result<Self> {
        let lines = total_size / line_size.max(1);
        let ways = (lines / num_sets.max(1) as u64) as u32;
        let cfg = CacheConfig {
            total_size,
            line_size,
            sectors_per_block: 1,
            set_layout: SetLayout::Uniform { num_sets, ways },
            mapping,
            policy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_sets(&self) -> u32 {
        self.set_layout.num_sets()
    }

    /// Block slots per set (ways divided by sectors per block).
    pub fn slots(&self, set: u32) -> u32 {
        self.set_layout.ways(set) / self.sectors_per_block
    }

    pub fn block_size(&self) -> u64 {
        self.line_size * self.sectors_per_block as u64
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.line_size;
        let c = self.total_size;
        if b == 0 || c == 0 {
            return Err(Error::config("cache and line sizes must be positive"));
        }
        if c % b != 0 {
            return Err(Error::config(format!("line size {b} does not divide cache size {c}")));
        }
        let s = self.sectors_per_block;
        if s == 0 || !s.is_power_of_two() || s > 32 {
            return Err(Error::config("sectors_per_block must be a power of two in 1..=32"));
        }
        match &self.set_layout {
            SetLayout::Uniform { num_sets, ways } => {
                if *num_sets == 0 || *ways == 0 {
                    return Err(Error::config("set and way counts must be at least 1"));
                }
                let product = *num_sets as u64 * *ways as u64 * b;
                if product != c {
                    return Err(Error::config(format!(
                        "T*a*b = {num_sets}*{ways}*{b} = {product} != C = {c}"
                    )));
                }
                if ways % s != 0 {
                    return Err(Error::config("ways must be a multiple of sectors_per_block"));
                }
            }
            SetLayout::Unequal { ways_per_set } => {
                if ways_per_set.iter().any(|&w| w == 0) {
                    return Err(Error::config("every set needs at least one way"));
                }
                let first = ways_per_set.first().copied();
                if ways_per_set.len() < 2 || ways_per_set.iter().all(|&w| Some(w) == first) {
                    return Err(Error::config(
                        "unequal layout needs at least two differing way counts",
                    ));
                }
                let sum: u64 = ways_per_set.iter().map(|&w| w as u64).sum();
                if sum * b != c {
                    return Err(Error::config(format!(
                        "sum of ways * b = {} != C = {c}",
                        sum * b
                    )));
                }
                if s != 1 {
                    return Err(Error::config("unequal layouts cannot be sectored"));
                }
            }
        }
        let t = self.num_sets();
        match &self.mapping {
            AddressMapping::StandardBits => {
                if !b.is_power_of_two() || !t.is_power_of_two() {
                    return Err(Error::config("standard bit mapping needs power-of-two b and T"));
                }
                if matches!(self.set_layout, SetLayout::Unequal { .. }) {
                    return Err(Error::config("standard bit mapping needs a uniform layout"));
                }
            }
            AddressMapping::BitFields { offset, set, way } => {
                if !b.is_power_of_two() || offset.lo != 0 || 1u64 << offset.width() != b {
                    return Err(Error::config("offset bits must be 0..log2(b)"));
                }
                if !t.is_power_of_two() || 1u64 << set.width() != t as u64 {
                    return Err(Error::config("set bit range width must equal log2(T)"));
                }
                let mut ranges = vec![*offset, *set];
                ranges.extend(way.iter().copied());
                for (i, r) in ranges.iter().enumerate() {
                    if r.lo > r.hi || r.hi >= ADDRESS_BITS {
                        return Err(Error::config(format!("bad bit range {}..={}", r.lo, r.hi)));
                    }
                    for other in &ranges[i + 1..] {
                        if r.overlaps(other) {
                            return Err(Error::config("bit ranges must be disjoint"));
                        }
                    }
                }
                if let Some(w) = way {
                    if w.lo < set.lo {
                        return Err(Error::config("way bits must sit above the set bits"));
                    }
                }
            }
            AddressMapping::ModuloLine => {}
        }
        match &self.policy {
            ReplacementPolicy::Lru => {}
            ReplacementPolicy::ProbabilisticWay { weights, .. } => {
                let max_slots = self.set_layout.max_ways() / s;
                if weights.len() != max_slots as usize {
                    return Err(Error::config(format!(
                        "{} way weights given for {} ways",
                        weights.len(),
                        max_slots
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::config("way weights must be non-negative"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::config(format!("way weights sum to {sum}, not 1")));
                }
            }
            ReplacementPolicy::AlternatingWay { hot_way } => {
                let min_slots = (0..t).map(|i| self.slots(i)).min().unwrap_or(0);
                if *hot_way >= min_slots || min_slots < 2 {
                    return Err(Error::config("hot way must exist in every set (ways >= 2)"));
                }
            }
            ReplacementPolicy::PinnedWayLru => {
                let AddressMapping::BitFields { way: Some(w), .. } = &self.mapping else {
                    return Err(Error::config("pinned-way policy needs way bits in the mapping"));
                };
                let groups = 1u32 << w.width();
                if (0..t).any(|i| self.slots(i) % groups != 0) {
                    return Err(Error::config("way bits must divide the ways evenly"));
                }
            }
        }
        Ok(())
    }

    /// Splits `addr` into (set, tag, offset, sector).
    pub fn map_address(&self, addr: u64) -> Result<Decomposed> {
        if addr >= ADDRESS_LIMIT {
            return Err(Error::AddressOutOfRange {
                addr,
                limit: ADDRESS_LIMIT,
            });
        }
        let sectors = self.sectors_per_block as u64;
        let d = match &self.mapping {
            AddressMapping::StandardBits => {
                let line_bits = self.line_size.trailing_zeros();
                let set_bits = self.num_sets().trailing_zeros();
                let line = addr >> line_bits;
                let block = line / sectors;
                Decomposed {
                    set_index: (block & ((1u64 << set_bits) - 1)) as u32,
                    tag: block >> set_bits,
                    offset: addr & (self.line_size - 1),
                    sector: (line % sectors) as u32,
                }
            }
            AddressMapping::ModuloLine => {
                let line = addr / self.line_size;
                let block = line / sectors;
                Decomposed {
                    set_index: modulo_set(&self.set_layout, block),
                    tag: block,
                    offset: addr % self.line_size,
                    sector: (line % sectors) as u32,
                }
            }
            AddressMapping::BitFields { offset, set, .. } => {
                let rest = addr >> offset.width();
                let shifted = BitRange::new(set.lo - offset.width(), set.hi - offset.width());
                let rest = squeeze(rest, shifted);
                Decomposed {
                    set_index: set.extract(addr) as u32,
                    tag: rest / sectors,
                    offset: offset.extract(addr),
                    sector: (rest % sectors) as u32,
                }
            }
        };
        Ok(d)
    }
}

fn modulo_set(layout: &SetLayout, block: u64) -> u32 {
    match layout {
        SetLayout::Uniform { num_sets, .. } => (block % *num_sets as u64) as u32,
        SetLayout::Unequal { ways_per_set } => {
            let period: u64 = ways_per_set.iter().map(|&w| w as u64).sum();
            let mut pos = block % period;
            // Deal round-robin over sets that still have ways in this round.
            let max = *ways_per_set.iter().max().unwrap_or(&0);
            for round in 0..max {
                let live = ways_per_set.iter().filter(|&&w| w > round).count() as u64;
                if pos < live {
                    return ways_per_set
                        .iter()
                        .enumerate()
                        .filter(|(_, &w)| w > round)
                        .nth(pos as usize)
                        .map(|(i, _)| i as u32)
                        .unwrap_or(0);
                }
                pos -= live;
            }
            0
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one access.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub set_index: u32,
    /// Way (block slot) holding the line after the access.
    pub way: u32,
    pub evicted_way: Option<u32>,
    pub evicted_tag: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub preheat_accesses: u64,
}

#[derive(Clone, Debug)]
struct Slot {
    tag: u64,
    sectors: u32,
    last_use: u64,
}

#[derive(Clone, Debug)]
struct SetState {
    slots: Vec<Option<Slot>>,
    evictions_per_slot: Vec<u64>,
    alternation: u64,
    rotation: u32,
}

/// Resident contents of one cache plus policy state.
#[derive(Clone, Debug)]
pub struct CacheState {
    cfg: CacheConfig,
    sets: Vec<SetState>,
    rng: Option<ChaCha8Rng>,
    clock: u64,
    stats: CacheStats,
    preheating: bool,
}

impl CacheState {
    pub fn new(cfg: CacheConfig) -> Result<Self> {
        let seed = match &cfg.policy {
            ReplacementPolicy::ProbabilisticWay { rng_seed, .. } => *rng_seed,
            _ => 0,
        };
        Self::with_seed(cfg, seed)
    }

    /// Like [`CacheState::new`] but overrides the configured RNG seed.
    pub fn with_seed(cfg: CacheConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let sets = (0..cfg.num_sets())
            .map(|s| {
                let n = cfg.slots(s) as usize;
                SetState {
                    slots: vec![None; n],
                    evictions_per_slot: vec![0; n],
                    alternation: 0,
                    rotation: 0,
                }
            })
            .collect();
        let rng = matches!(cfg.policy, ReplacementPolicy::ProbabilisticWay { .. })
            .then(|| ChaCha8Rng::seed_from_u64(seed));
        Ok(CacheState {
            cfg,
            sets,
            rng,
            clock: 0,
            stats: CacheStats::default(),
            preheating: false,
        })
    }

    /// Fresh state whose policy RNG (if any) is derived from the configured
    /// seed and `run_seed`, so independent runs draw independent streams.
    pub fn for_run(cfg: CacheConfig, run_seed: u64) -> Result<Self> {
        match cfg.policy {
            ReplacementPolicy::ProbabilisticWay { rng_seed, .. } => {
                Self::with_seed(cfg, rng_seed ^ splitmix64(run_seed))
            }
            _ => Self::new(cfg),
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    /// Clears counters and the per-slot eviction census; contents stay.
    pub fn reset_stats(&mut self) {
        self.stats = CacheStats::default();
        for set in &mut self.sets {
            set.evictions_per_slot.iter_mut().for_each(|c| *c = 0);
        }
    }

    /// Number of distinct (set, way) slots replaced since the last reset.
    pub fn missed_entries(&self) -> u64 {
        self.sets
            .iter()
            .flat_map(|s| s.evictions_per_slot.iter())
            .filter(|&&c| c > 0)
            .count() as u64
    }

    /// Tags resident in `set`, by way; `None` for free ways.
    pub fn resident(&self, set: u32) -> Vec<Option<u64>> {
        self.sets[set as usize]
            .slots
            .iter()
            .map(|s| s.as_ref().map(|s| s.tag))
            .collect()
    }

    /// Runs `addrs` through the cache without counting them as measured
    /// accesses.
    pub fn preheat<I: IntoIterator<Item = u64>>(&mut self, addrs: I) -> Result<()> {
        self.preheating = true;
        let result = addrs.into_iter().try_for_each(|a| self.access(a).map(|_| ()));
        self.preheating = false;
        result
    }

    pub fn access(&mut self, addr: u64) -> Result<AccessOutcome> {
        let d = self.cfg.map_address(addr)?;
        self.clock += 1;
        if self.preheating {
            self.stats.preheat_accesses += 1;
        } else {
            self.stats.accesses += 1;
        }
        let sector_bit = 1u32 << d.sector;
        let (lo, hi) = self.way_group(addr, d.set_index);
        let clock = self.clock;
        let set = &mut self.sets[d.set_index as usize];

        if let Some((way, slot)) = set.slots[lo..hi]
            .iter_mut()
            .enumerate()
            .find_map(|(i, s)| s.as_mut().filter(|s| s.tag == d.tag).map(|s| (i + lo, s)))
        {
            slot.last_use = clock;
            let hit = slot.sectors & sector_bit != 0;
            slot.sectors |= sector_bit;
            self.count(hit, false);
            return Ok(AccessOutcome {
                hit,
                set_index: d.set_index,
                way: way as u32,
                evicted_way: None,
                evicted_tag: None,
            });
        }

        let fresh = Slot {
            tag: d.tag,
            sectors: sector_bit,
            last_use: clock,
        };
        if let Some(way) = (lo..hi).find(|&i| set.slots[i].is_none()) {
            set.slots[way] = Some(fresh);
            self.count(false, false);
            return Ok(AccessOutcome {
                hit: false,
                set_index: d.set_index,
                way: way as u32,
                evicted_way: None,
                evicted_tag: None,
            });
        }

        let way = self.choose_victim(d.set_index, lo, hi);
        let set = &mut self.sets[d.set_index as usize];
        let old = set.slots[way].replace(fresh).map(|s| s.tag);
        if !self.preheating {
            set.evictions_per_slot[way] += 1;
        }
        self.count(false, true);
        Ok(AccessOutcome {
            hit: false,
            set_index: d.set_index,
            way: way as u32,
            evicted_way: Some(way as u32),
            evicted_tag: old,
        })
    }

    fn count(&mut self, hit: bool, evicted: bool) {
        if self.preheating {
            return;
        }
        if hit {
            self.stats.hits += 1;
        } else {
            self.stats.misses += 1;
        }
        if evicted {
            self.stats.evictions += 1;
        }
    }

    /// Range of ways an address may occupy.
    fn way_group(&self, addr: u64, set: u32) -> (usize, usize) {
        let slots = self.cfg.slots(set) as usize;
        match (&self.cfg.policy, &self.cfg.mapping) {
            (ReplacementPolicy::PinnedWayLru, AddressMapping::BitFields { way: Some(w), .. }) => {
                let groups = 1usize << w.width();
                let per = slots / groups;
                let g = w.extract(addr) as usize;
                (g * per, (g + 1) * per)
            }
            _ => (0, slots),
        }
    }

    fn choose_victim(&mut self, set_index: u32, lo: usize, hi: usize) -> usize {
        let set = &mut self.sets[set_index as usize];
        let lru = |set: &SetState| {
            (lo..hi)
                .min_by_key(|&i| set.slots[i].as_ref().map_or(0, |s| s.last_use))
                .unwrap_or(lo)
        };
        match &self.cfg.policy {
            ReplacementPolicy::Lru | ReplacementPolicy::PinnedWayLru => lru(set),
            ReplacementPolicy::ProbabilisticWay { weights, .. } => {
                let weights = &weights[..hi];
                let total: f64 = weights.iter().sum();
                let rng = self.rng.as_mut().expect("probabilistic policy has an rng");
                let mut draw = rng.gen::<f64>() * total;
                for (i, w) in weights.iter().enumerate() {
                    if draw < *w {
                        return i;
                    }
                    draw -= w;
                }
                weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
            }
            ReplacementPolicy::AlternatingWay { hot_way } => {
                let hot = *hot_way as usize;
                let n = hi - lo;
                let k = set.alternation;
                set.alternation += 1;
                if k % 2 == 0 {
                    hot
                } else {
                    let pick = set.rotation as usize % (n - 1);
                    set.rotation = set.rotation.wrapping_add(1);
                    if pick >= hot {
                        pick + 1
                    } else {
                        pick
                    }
                }
            }
        }
    }
}
