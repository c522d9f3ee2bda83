use memlab_core::hierarchy::{HierarchySim, MemoryModel, Pattern};
use memlab_core::pchase::{run_fine_grained, PChaseConfig};
use memlab_core::presets;

const MB: u64 = 1 << 20;

#[test]
fn repeated_load_on_kepler_is_p1_at_198() {
    let mut sim = HierarchySim::new(presets::hierarchy("GTX780").unwrap()).unwrap();
    let first = sim.load(0).unwrap();
    assert_eq!(first.pattern, Some(Pattern::P5));
    let again = sim.load(0).unwrap();
    assert_eq!((again.pattern, again.latency_cycles), (Some(Pattern::P1), 198));
}

#[test]
fn maxwell_l1_hit_skips_the_tlbs() {
    let cfg = presets::hierarchy("GTX980-L1on").unwrap();
    let mut sim = HierarchySim::new(cfg).unwrap();
    sim.load(0).unwrap();
    // Evict page 0 from both TLBs using lines in another L1 set.
    for p in 1..200u64 {
        sim.load(p * 2 * MB + 4096 + 128).unwrap();
    }
    let s = sim.load(0).unwrap();
    assert!(s.data_hit);
    assert_eq!((s.l1_tlb_hit, s.l2_tlb_hit), (None, None));
    assert_eq!((s.pattern, s.latency_cycles), (Some(Pattern::P1), 82));
}

#[test]
fn without_bypass_the_same_sequence_shows_a_tlb_miss() {
    let mut sim = HierarchySim::new(presets::hierarchy("GTX980-L1off").unwrap()).unwrap();
    sim.load(0).unwrap();
    for p in 1..200u64 {
        sim.load(p * 2 * MB + 4096).unwrap();
    }
    let s = sim.load(0).unwrap();
    assert!(s.data_hit);
    assert_eq!(s.pattern, Some(Pattern::P3));
}

#[test]
fn prefetch_disabled_cold_walk_misses_every_line() {
    let mut cfg = presets::hierarchy("GTX780").unwrap();
    cfg.prefetcher.enabled = false;
    let line = cfg.l2_data.line_size;
    let lines = 2048u64;
    let pc = PChaseConfig::uniform(lines * line, line, lines, false);
    let trace = run_fine_grained(&mut HierarchySim::new(cfg).unwrap(), &pc).unwrap();
    let misses = trace.records.iter().filter(|r| r.data_hit == Some(false)).count() as u64;
    assert_eq!(misses, lines);
}

#[test]
fn prefetcher_turns_the_sequential_stream_into_hits() {
    let cfg = presets::hierarchy("GTX780").unwrap();
    let line = cfg.l2_data.line_size;
    let lines = 2048u64;
    let pc = PChaseConfig::uniform(lines * line, line, lines, false);
    let trace = run_fine_grained(&mut HierarchySim::new(cfg).unwrap(), &pc).unwrap();
    let misses = trace.records.iter().filter(|r| r.data_hit == Some(false)).count();
    // The first miss starts a stream covering the rest of the walk.
    assert_eq!(misses, 1);
}

#[test]
fn one_window_yields_a_single_switch() {
    let cfg = presets::hierarchy("GTX780").unwrap();
    let window = cfg.activation_window.unwrap();
    let mut sim = HierarchySim::new(cfg).unwrap();
    let pc = PChaseConfig::uniform(window, 3 * MB, 2000, false);
    let trace = run_fine_grained(&mut sim, &pc).unwrap();
    assert!(trace.records.iter().all(|r| r.pattern != Some(Pattern::P6)));
    let next = sim.load(window + 64).unwrap();
    assert_eq!(next.pattern, Some(Pattern::P6));
    assert_eq!(sim.load(window + 2 * MB + 64).unwrap().pattern, Some(Pattern::P5));
}

#[test]
fn pattern_latencies_are_monotone() {
    for name in presets::hierarchy_names() {
        let l = presets::hierarchy(name).unwrap().latencies;
        let p = |x| l.get(x).unwrap();
        assert!(p(Pattern::P1) < p(Pattern::P4) && p(Pattern::P4) < p(Pattern::P5), "{name}");
    }
}

#[test]
fn fermi_has_no_switch_pattern() {
    let cfg = presets::hierarchy("GTX560Ti-L1off").unwrap();
    assert!(cfg.latencies.latency(Pattern::P6).is_err());
    let mut sim = HierarchySim::new(cfg.clone()).unwrap();
    for p in 0..cfg.dram_size / (64 * MB) {
        assert_ne!(sim.load(p * 64 * MB).unwrap().pattern, Some(Pattern::P6));
    }
}

#[test]
fn loads_past_dram_are_rejected() {
    let cfg = presets::hierarchy("GTX560Ti-L1on").unwrap();
    let limit = cfg.dram_size;
    let mut sim = HierarchySim::new(cfg).unwrap();
    assert!(sim.load(limit).is_err());
    assert!(sim.load(limit - 4).is_ok());
}

#[test]
fn same_seed_same_trace() {
    let cfg = presets::hierarchy("GTX980-L1off").unwrap();
    let pc = PChaseConfig::uniform(8 * MB, 4096, 20_000, true);
    let a = run_fine_grained(&mut HierarchySim::with_seed(cfg.clone(), 9).unwrap(), &pc).unwrap();
    let b = run_fine_grained(&mut HierarchySim::with_seed(cfg, 9).unwrap(), &pc).unwrap();
    assert_eq!(a, b);
}
