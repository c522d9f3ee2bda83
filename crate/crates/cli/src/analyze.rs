use std::collections::BTreeMap;
use std::fmt::Write as _;

use memlab_core::inference::{find_period, period_in_window};
use memlab_core::io::{read_trace, write_report, Report};
use memlab_core::pchase::two_means_threshold;
use serde::Serialize;

use crate::error::CliError;
use crate::AnalyzeArgs;

#[derive(Serialize)]
struct Misses {
    loads: usize,
    misses: usize,
    miss_rate: f64,
    /// `data_bits` or `threshold`.
    method: &'static str,
    threshold_cycles: Option<f64>,
    mean_latency_cycles: f64,
}

#[derive(Serialize)]
struct Period {
    expected: usize,
    detected: Option<usize>,
    /// Records the shift test covered.
    window: usize,
}

/// Full test when the trace is long enough. A preheated trace carries no
/// cold pass, so two whole periods already make a usable window.
fn detect(flags: &[bool], expected: usize, preheated: bool) -> Result<Period, CliError> {
    match find_period(flags, expected, expected) {
        Ok(detected) => Ok(Period {
            expected,
            detected,
            window: 4 * expected,
        }),
        Err(_) if preheated && flags.len() >= 2 * expected => Ok(Period {
            expected,
            detected: period_in_window(flags, flags.len(), expected),
            window: flags.len(),
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct Bin {
    latency_cycles: u32,
    count: u64,
}

pub fn run(a: &AnalyzeArgs, invocation: Vec<String>) -> Result<(), CliError> {
    let trace = read_trace(&a.trace)?;
    let flags = trace.miss_flags();
    let has_bits = trace.records.iter().all(|r| r.data_hit.is_some());
    let latencies: Vec<u32> = trace.records.iter().map(|r| r.s_tvalue).collect();
    let misses = Misses {
        loads: flags.len(),
        misses: flags.iter().filter(|m| **m).count(),
        miss_rate: flags.iter().filter(|m| **m).count() as f64 / flags.len().max(1) as f64,
        method: if has_bits { "data_bits" } else { "threshold" },
        threshold_cycles: (!has_bits).then(|| two_means_threshold(&latencies)),
        mean_latency_cycles: trace.mean_latency(),
    };
    println!(
        "{} loads, {} misses (rate {:.4}, by {}), mean {:.2} cycles",
        misses.loads, misses.misses, misses.miss_rate, misses.method, misses.mean_latency_cycles
    );

    let expected = a.period.or_else(|| {
        trace
            .meta
            .stride_bytes()
            .filter(|s| *s > 0)
            .map(|s| (trace.meta.array_bytes / s).max(1) as usize)
    });
    let mut report = Report::new(invocation);
    match expected {
        Some(p) => match detect(&flags, p, trace.meta.preheat) {
            Ok(period) => {
                match period.detected {
                    Some(d) => println!("period {d} accesses (window {} loads)", period.window),
                    None => println!("no period <= {p} (window {} loads)", period.window),
                }
                report.add("period", &period)?;
            }
            Err(e) => {
                println!("period not tested: {e}");
                report.flags.push(format!("period not tested: {e}"));
            }
        },
        None => println!("period not tested: pass --period for segmented traces"),
    }

    let mut patterns: BTreeMap<String, u64> = BTreeMap::new();
    for p in trace.records.iter().filter_map(|r| r.pattern) {
        *patterns.entry(p.to_string()).or_default() += 1;
    }
    if !patterns.is_empty() {
        let shown: Vec<String> = patterns.iter().map(|(p, n)| format!("{p}={n}")).collect();
        println!("patterns {}", shown.join(" "));
        report.add("patterns", &patterns)?;
    }

    let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
    for &l in &latencies {
        *hist.entry(l).or_default() += 1;
    }
    for (l, n) in &hist {
        println!("  {l:>6} cycles: {n}");
    }
    if let Some(path) = &a.histogram {
        let mut csv = String::from("latency_cycles,count\n");
        for (l, n) in &hist {
            let _ = writeln!(csv, "{l},{n}");
        }
        std::fs::write(path, csv)?;
    }

    if let Some(path) = &a.out {
        let bins: Vec<Bin> = hist
            .into_iter()
            .map(|(latency_cycles, count)| Bin { latency_cycles, count })
            .collect();
        report.add("trace", &trace.meta)?;
        report.add("misses", &misses)?;
        report.add("histogram", &bins)?;
        write_report(&report, path)?;
    }
    Ok(())
}
