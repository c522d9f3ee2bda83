use memlab_core::io::{read_sweep, write_report, Report};
use memlab_core::presets;
use memlab_core::smem::{conflict_degree, BankConfig, BankMode};
use memlab_core::throughput::{
    back_solve_latency, efficiency, required_warps, smem_warp_words_per_cycle, theoretical_global_bw,
    theoretical_smem_bw,
};
use memlab_core::KernelShape;
use serde::Serialize;

use crate::error::CliError;
use crate::CalcArgs;

#[derive(Serialize)]
struct Bandwidth {
    global_theoretical_gbps: f64,
    global_measured_gbps: f64,
    global_efficiency: f64,
    smem_theoretical_gbps: f64,
    smem_measured_gbps: f64,
    smem_efficiency: f64,
}

#[derive(Serialize)]
struct Little {
    latency_cycles: f64,
    ilp: u32,
    warp_words_per_cycle: f64,
    required_warps: u64,
    max_warps_per_sm: u32,
}

#[derive(Serialize)]
struct BankReading {
    stride: u64,
    mode: BankMode,
    degree: u32,
    latency_cycles: f64,
}

#[derive(Serialize)]
struct SweepRow {
    cta_size: u32,
    ctas_per_sm: u32,
    ilp: u32,
    throughput_gbps: f64,
    efficiency: f64,
    implied_latency_cycles: f64,
}

pub fn run(a: &CalcArgs, invocation: Vec<String>) -> Result<(), CliError> {
    let dev = presets::device(&a.device)?;
    let r = &dev.rates;
    let (g, s) = (theoretical_global_bw(r), theoretical_smem_bw(r));
    let bw = Bandwidth {
        global_theoretical_gbps: g,
        global_measured_gbps: dev.measured.global_gbps,
        global_efficiency: efficiency(dev.measured.global_gbps, g),
        smem_theoretical_gbps: s,
        smem_measured_gbps: dev.measured.smem_gbps,
        smem_efficiency: efficiency(dev.measured.smem_gbps, s),
    };
    println!(
        "{}: global {:.2} GB/s theoretical, {:.2} measured ({:.1}%)",
        dev.name,
        g,
        bw.global_measured_gbps,
        100.0 * bw.global_efficiency
    );
    println!(
        "{}: shared W_SM {:.2} GB/s theoretical, {:.2} measured ({:.1}%)",
        dev.name,
        s,
        bw.smem_measured_gbps,
        100.0 * bw.smem_efficiency
    );

    let latency = match a.latency {
        Some(l) => l,
        None => dev.base_smem_latency()?,
    };
    let wwpc = smem_warp_words_per_cycle(r);
    let little = Little {
        latency_cycles: latency,
        ilp: a.ilp,
        warp_words_per_cycle: wwpc,
        required_warps: required_warps(latency, wwpc, a.ilp)?,
        max_warps_per_sm: dev.max_warps_per_sm,
    };
    println!(
        "{}: {} warps needed at {latency} cycles, ILP {} (SM holds {})",
        dev.name, little.required_warps, a.ilp, dev.max_warps_per_sm
    );

    let mut report = Report::new(invocation);
    report.add("device", &dev.name)?;
    report.add("bandwidth", &bw)?;
    report.add("little", &little)?;

    if let Some(stride) = a.stride {
        let modes = if dev.bank.bank_width_bytes == 8 {
            vec![BankMode::FourByte, BankMode::EightByte]
        } else {
            vec![dev.bank.mode]
        };
        let mut readings = Vec::new();
        for mode in modes {
            let cfg = BankConfig { mode, ..dev.bank };
            let degree = conflict_degree(stride, &cfg).degree;
            let latency_cycles = dev.calibration.latency(degree)?;
            println!("{}: stride {stride} in {mode:?} mode is {degree}-way, {latency_cycles:.1} cycles", dev.name);
            readings.push(BankReading {
                stride,
                mode,
                degree,
                latency_cycles,
            });
        }
        report.add("bank", &readings)?;
    }

    if let Some(path) = &a.sweep {
        let mut rows = Vec::new();
        for p in read_sweep(path)? {
            let shape = KernelShape {
                cta_size: p.cta_size,
                ctas_per_sm: p.ctas_per_sm,
                ilp: p.ilp,
            };
            rows.push(SweepRow {
                cta_size: p.cta_size,
                ctas_per_sm: p.ctas_per_sm,
                ilp: p.ilp,
                throughput_gbps: p.throughput_gbps,
                efficiency: efficiency(p.throughput_gbps, s),
                implied_latency_cycles: back_solve_latency(&shape, r, p.throughput_gbps)?,
            });
        }
        if let Some(best) = rows.iter().max_by(|x, y| x.throughput_gbps.total_cmp(&y.throughput_gbps)) {
            println!(
                "{}: sweep peak {:.2} GB/s at {}x{} threads, ILP {} ({:.1}% of W_SM)",
                dev.name,
                best.throughput_gbps,
                best.ctas_per_sm,
                best.cta_size,
                best.ilp,
                100.0 * best.efficiency
            );
        }
        report.add("sweep", &rows)?;
    }

    if let Some(path) = &a.out {
        write_report(&report, path)?;
    }
    Ok(())
}
