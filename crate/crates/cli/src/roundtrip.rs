use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use memlab_core::inference::{infer, InferenceOptions, PolicyClass, SimProbe};
use memlab_core::io::{write_report, Report};
use memlab_core::{AddressMapping, CacheConfig, ReplacementPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;
use crate::RoundtripArgs;

const FREQ_TOLERANCE: f64 = 0.02;

#[derive(Debug, Serialize)]
struct Case {
    index: usize,
    config: CacheConfig,
    recovered: bool,
    detail: String,
}

fn random_config(rng: &mut ChaCha8Rng) -> CacheConfig {
    let num_sets = 1u32 << rng.gen_range(0..5);
    let ways = rng.gen_range(1..=8u32);
    let line = 16u64 << rng.gen_range(0..4);
    let mapping = if rng.gen_bool(0.5) {
        AddressMapping::StandardBits
    } else {
        AddressMapping::ModuloLine
    };
    // A single way leaves nothing to choose, so only multi-way sets get a
    // probabilistic policy.
    let policy = if ways > 1 && rng.gen_bool(0.25) {
        let raw: Vec<u32> = (0..ways).map(|_| rng.gen_range(1..=4)).collect();
        let total: u32 = raw.iter().sum();
        ReplacementPolicy::ProbabilisticWay {
            weights: raw.iter().map(|&r| r as f64 / total as f64).collect(),
            rng_seed: rng.gen(),
        }
    } else {
        ReplacementPolicy::Lru
    };
    let size = line * (num_sets * ways) as u64;
    CacheConfig::uniform(size, line, num_sets, mapping, policy).expect("generated config is valid")
}

fn check(index: usize, cfg: CacheConfig) -> Case {
    let opts = InferenceOptions {
        floor_bytes: 4,
        ceiling_bytes: 1 << 20,
        ..InferenceOptions::default()
    };
    let probe = SimProbe::cache(cfg.clone(), 10, 100);
    let want_class = if cfg.policy.is_lru() { PolicyClass::Lru } else { PolicyClass::NonLru };
    let want = (cfg.total_size, cfg.line_size, cfg.num_sets(), want_class);
    let (recovered, detail) = match infer(&probe, &opts) {
        Err(e) => (false, e.to_string()),
        Ok(p) => {
            let got = (p.cache_size, p.line_size, p.num_sets, p.policy_class);
            let freq_ok = match (&cfg.policy, &p.way_replacement_freq) {
                (ReplacementPolicy::ProbabilisticWay { weights, .. }, Some(f)) => {
                    f.len() == weights.len()
                        && f.iter().zip(weights).all(|(a, b)| (a - b).abs() <= FREQ_TOLERANCE)
                }
                (ReplacementPolicy::ProbabilisticWay { .. }, None) => false,
                _ => true,
            };
            if got != want {
                (false, format!("expected {want:?}, inferred {got:?}"))
            } else if !freq_ok {
                (false, format!("way frequencies {:?} off", p.way_replacement_freq))
            } else {
                (true, format!("{want:?}"))
            }
        }
    };
    Case {
        index,
        config: cfg,
        recovered,
        detail,
    }
}

pub fn run(a: &RoundtripArgs, invocation: Vec<String>) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let configs: Vec<CacheConfig> = (0..a.random_configs).map(|_| random_config(&mut rng)).collect();
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(configs.len()));
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let case = check(i, cfg.clone());
                done.lock().expect("worker panicked").push(case);
            });
        }
    });
    let mut cases = done.into_inner().expect("worker panicked");
    cases.sort_by_key(|c| c.index);
    let ok = cases.iter().filter(|c| c.recovered).count();
    for c in cases.iter().filter(|c| !c.recovered) {
        println!("config {}: {}", c.index, c.detail);
    }
    println!("{ok}/{} recovered", cases.len());
    if let Some(path) = &a.out {
        let mut report = Report::new(invocation);
        report.add("cases", &cases)?;
        report.add("recovered", &ok)?;
        if ok < cases.len() {
            report.flags.push("mismatch".into());
        }
        write_report(&report, path)?;
    }
    if ok == cases.len() {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("{} of {} configs not recovered", cases.len() - ok, cases.len())))
    }
}
