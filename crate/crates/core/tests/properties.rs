use std::path::Path;

use memlab_core::cache::{AddressMapping, CacheConfig, CacheState, ReplacementPolicy};
use memlab_core::hierarchy::{CacheModel, HierarchySim, Pattern};
use memlab_core::inference::find_period;
use memlab_core::io::{parse_trace, trace_to_string};
use memlab_core::pchase::{
    init_array, run_classic, run_fine_grained, InitPattern, PChaseConfig, Segment, TraceRecord,
};
use memlab_core::presets;
use memlab_core::smem::{conflict_degree, BankConfig, BankMode};
use memlab_core::throughput::{efficiency, required_warps, smem_warp_words_per_cycle, theoretical_smem_bw};
use proptest::prelude::*;

fn lru(c: u64, b: u64, t: u32) -> CacheConfig {
    CacheConfig::uniform(c, b, t, AddressMapping::StandardBits, ReplacementPolicy::Lru).unwrap()
}

/// Independent miss-rate oracle for an LRU, StandardBits cache at N >= 4C.
/// At s = N/a each touched set holds exactly a lines, so every load hits.
fn law_miss_rate(n: u64, s: u64, b: u64, a: u64) -> (u64, u64) {
    if s < b {
        (s, b)
    } else if s < n / a {
        (1, 1)
    } else {
        (0, 1)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn chase_flags(cfg: &CacheConfig, n: u64, s: u64, passes: u64, preheat: bool) -> Vec<bool> {
    let pc = PChaseConfig::uniform(n, s, passes * (n / s), preheat);
    let mut m = CacheModel::new(CacheState::new(cfg.clone()).unwrap(), 1, 10);
    run_fine_grained(&mut m, &pc).unwrap().miss_flags()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lru_sequence_has_period_n_over_b(
        t_log in 0u32..3,
        a in 1u32..5,
        b_log in 3u32..6,
    ) {
        let t = 1u32 << t_log;
        let b = 1u64 << b_log;
        let c = b * (t * a) as u64;
        let n = c + b;
        let per_pass = (n / b) as usize;
        let flags = chase_flags(&lru(c, b, t), n, b, 6, false);
        let p = find_period(&flags, per_pass, per_pass).unwrap();
        // All-miss sequences also repeat with every divisor of N/b.
        let p = p.expect("periodic");
        prop_assert_eq!(per_pass % p, 0);
        prop_assert!(flags[per_pass..].iter().any(|m| *m));
    }

    #[test]
    fn miss_rate_follows_the_stride_law(
        t_log in 0u32..3,
        a_log in 0u32..3,
        b_log in 3u32..6,
        n_mult in 2u32..4,
        s_log in 2u32..12,
    ) {
        let (t, a, b) = (1u32 << t_log, 1u64 << a_log, 1u64 << b_log);
        let c = b * a * t as u64;
        let n = c << n_mult;
        let s = 1u64 << s_log;
        prop_assume!(s <= n / 2);
        let cfg = lru(c, b, t);
        let mut state = CacheState::new(cfg).unwrap();
        let addrs: Vec<u64> = (0..n / s).map(|i| i * s).collect();
        state.preheat(addrs.iter().copied()).unwrap();
        state.reset_stats();
        for _ in 0..2 {
            for &x in &addrs {
                state.access(x).unwrap();
            }
        }
        let st = state.stats();
        let (num, den) = law_miss_rate(n, s, b, a);
        prop_assert_eq!(st.misses * den, st.accesses * num);
    }

    #[test]
    fn fitting_arrays_never_miss_after_preheat(
        t_log in 0u32..3,
        a in 1u32..5,
        b_log in 3u32..6,
        s_log in 2u32..8,
        frac in 1u64..=4,
    ) {
        let (t, b) = (1u32 << t_log, 1u64 << b_log);
        let c = b * (t * a) as u64;
        let n = (c * frac / 4).max(4) / 4 * 4;
        let s = (1u64 << s_log).min(n);
        prop_assume!(n % s == 0);
        let flags = chase_flags(&lru(c, b, t), n, s, 3, true);
        prop_assert!(flags.iter().all(|m| !m));
    }

    #[test]
    fn same_seed_same_evictions(seed in any::<u64>(), addrs in prop::collection::vec(0u64..1 << 16, 1..400)) {
        let cfg = presets::cache_target("fermi-L1").unwrap().cache;
        let run = |seed| {
            let mut c = CacheState::for_run(cfg.clone(), seed).unwrap();
            addrs.iter().map(|&a| c.access(a).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(seed), run(seed));
    }

    #[test]
    fn four_byte_degree_is_gcd(stride in 1u64..=1024) {
        prop_assert_eq!(conflict_degree(stride, &BankConfig::FOUR_BYTE).degree as u64, gcd(stride, 32).min(32));
    }

    #[test]
    fn eight_byte_mode_never_worse(half in 1u64..=128) {
        let stride = 2 * half;
        prop_assume!(!stride.is_power_of_two());
        let four = conflict_degree(stride, &BankConfig::eight_byte_banks(BankMode::FourByte)).degree;
        let eight = conflict_degree(stride, &BankConfig::eight_byte_banks(BankMode::EightByte)).degree;
        prop_assert!(eight <= four, "stride {}: 8-byte {} vs 4-byte {}", stride, eight, four);
    }

    #[test]
    fn uniform_walk_closes(len in 1u64..400, stride in 1u64..64) {
        let cfg = PChaseConfig {
            array_bytes: len * 4,
            element_bytes: 4,
            init: InitPattern::Uniform { stride },
            iterations: 1,
            preheat: false,
        };
        let arr = init_array(&cfg).unwrap();
        let cycle = arr.cycle_len();
        prop_assert_eq!(cycle, len / gcd(len, stride % len.max(1)).max(1));
        let walk: Vec<u64> = arr.walk().take(cycle as usize + 1).collect();
        prop_assert_eq!(walk[0], 0);
        prop_assert_eq!(walk[cycle as usize], 0);
        let distinct: std::collections::BTreeSet<_> = walk[..cycle as usize].iter().collect();
        prop_assert_eq!(distinct.len() as u64, cycle);
    }

    #[test]
    fn trace_indices_follow_the_array(n_words in 8u64..512, stride in 1u64..16, k in 1u64..600) {
        let cfg = PChaseConfig {
            array_bytes: n_words * 4,
            element_bytes: 4,
            init: InitPattern::Uniform { stride },
            iterations: k,
            preheat: false,
        };
        let target = presets::cache_target("maxwell-L1").unwrap();
        let mut m = CacheModel::new(CacheState::new(target.cache).unwrap(), 82, 214);
        let trace = run_fine_grained(&mut m, &cfg).unwrap();
        let arr = init_array(&cfg).unwrap();
        prop_assert_eq!(trace.records.len() as u64, k);
        prop_assert_eq!(trace.records[0].s_index, 0);
        for w in trace.records.windows(2) {
            prop_assert_eq!(arr.next(w[0].s_index), Some(w[1].s_index));
        }
    }

    #[test]
    fn classic_equals_mean_of_fine_grained(n_kb in 1u64..48, s_log in 2u32..9, seed in 0u64..50) {
        let n = n_kb * 1024;
        let s = 1u64 << s_log;
        let cfg = PChaseConfig::uniform(n, s, 3 * n / s, true);
        let target = presets::cache_target("fermi-L1").unwrap();
        let model = || CacheModel::new(CacheState::for_run(target.cache.clone(), seed).unwrap(), 96, 351);
        let fine = run_fine_grained(&mut model(), &cfg).unwrap();
        let classic = run_classic(&mut model(), &cfg).unwrap();
        prop_assert_eq!(classic, fine.mean_latency());
        prop_assert_eq!(run_fine_grained(&mut model(), &cfg).unwrap(), fine);
    }

    #[test]
    fn trace_csv_round_trips(
        lat in prop::collection::vec((1u32..5000, any::<Option<bool>>(), any::<Option<bool>>(), 0usize..7), 1..60),
        seed in any::<Option<u64>>(),
        device in prop::option::of("[A-Za-z0-9]{1,12}"),
    ) {
        let k = lat.len() as u64;
        let cfg = PChaseConfig::uniform(4096, 32, k, true);
        let mut trace = run_fine_grained(
            &mut CacheModel::new(CacheState::new(presets::cache_target("toy-fig3").unwrap().cache).unwrap(), 1, 10),
            &PChaseConfig::uniform(48, 4, 1, false),
        ).unwrap();
        trace.meta = memlab_core::pchase::TraceMeta::for_config(&cfg, memlab_core::pchase::TraceSource::Ingested);
        trace.meta.seed = seed;
        trace.meta.device = device;
        trace.records = lat
            .iter()
            .enumerate()
            .map(|(i, &(l, d, t1, p))| TraceRecord {
                iteration: i as u64,
                s_index: (i as u64 * 8) % 1024,
                s_tvalue: l,
                data_hit: d,
                l1_tlb_hit: t1,
                l2_tlb_hit: None,
                pattern: Pattern::ALL.get(p).copied(),
            })
            .collect();
        let text = trace_to_string(&trace);
        let back = parse_trace(&text, Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back, trace);
    }
}

#[test]
fn segmented_walk_covers_declared_hops() {
    let cfg = PChaseConfig {
        array_bytes: 64 * 4,
        element_bytes: 4,
        init: InitPattern::Segmented {
            segments: vec![Segment::new(0, 8, 3), Segment::new(24, 5, 2), Segment::new(34, 1, 4)],
        },
        iterations: 30,
        preheat: false,
    };
    let arr = init_array(&cfg).unwrap();
    let walk: Vec<u64> = arr.walk().take(11).collect();
    assert_eq!(walk, vec![0, 8, 16, 24, 29, 34, 35, 36, 37, 38, 34]);
}

#[test]
fn hierarchy_latencies_are_table_driven() {
    for name in presets::hierarchy_names() {
        let cfg = presets::hierarchy(name).unwrap();
        let mut sim = HierarchySim::with_seed(cfg.clone(), 5).unwrap();
        let pc = PChaseConfig::uniform(64 << 20, 1 << 16, 4096, false);
        let trace = run_fine_grained(&mut sim, &pc).unwrap();
        for r in &trace.records {
            let p = r.pattern.unwrap();
            assert_eq!(Some(r.s_tvalue), cfg.latencies.get(p), "{name}: {p}");
        }
    }
}

#[test]
fn efficiencies_lie_in_unit_interval_and_little_fits_peaks() {
    for name in presets::device_names() {
        let d = presets::device(name).unwrap();
        let e = efficiency(d.measured.smem_gbps, theoretical_smem_bw(&d.rates));
        assert!(e > 0.0 && e <= 1.0, "{name}: {e}");
        let g = efficiency(d.measured.global_gbps, memlab_core::throughput::theoretical_global_bw(&d.rates));
        assert!(g > 0.0 && g <= 1.0, "{name}: {g}");
        let need = required_warps(
            d.base_smem_latency().unwrap(),
            smem_warp_words_per_cycle(&d.rates),
            d.peak_shape.ilp,
        )
        .unwrap();
        assert!(need <= d.peak_shape.active_warps_per_sm() as u64, "{name}: {need}");
    }
}

#[test]
fn fermi_32_way_conflict_is_near_linear_and_slower_than_global() {
    let d = presets::device("GTX560Ti").unwrap();
    let ratio = d.calibration.latency(32).unwrap() / d.calibration.latency(2).unwrap();
    assert!((12.0..=16.0).contains(&ratio));
    let h = presets::hierarchy("GTX560Ti-L1off").unwrap();
    assert!(d.calibration.latency(32).unwrap() > h.latencies.get(Pattern::P2).unwrap() as f64);
}
