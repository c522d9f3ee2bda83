//! Closed-form bandwidth calculators and Little's-law sizing.
//!
//! All GB/s figures use 10^9 bytes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smem::{BankConfig, ConflictCalibration, WARP_LANES};

const WORD_BYTES: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRates {
    pub f_mem_mhz: f64,
    pub f_core_ghz: f64,
    pub bus_width_bits: u32,
    pub ddr_factor: u32,
    /// Per-bank shared-memory bandwidth in bytes per cycle.
    pub w_bank_bytes_per_cycle: f64,
}

impl DeviceRates {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.f_mem_mhz,
            self.f_core_ghz,
            self.bus_width_bits as f64,
            self.ddr_factor as f64,
            self.w_bank_bytes_per_cycle,
        ];
        if positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::config("device rates must be positive"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelShape {
    pub cta_size: u32,
    pub ctas_per_sm: u32,
    /// 4-byte words copied per thread per iteration.
    pub ilp: u32,
}

impl KernelShape {
    pub fn threads_per_sm(&self) -> u32 {
        self.cta_size * self.ctas_per_sm
    }

    pub fn active_warps_per_sm(&self) -> u32 {
        self.threads_per_sm() / WARP_LANES as u32
    }
}

/// Published measurements kept next to the device for efficiency reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredPeaks {
    pub global_gbps: f64,
    pub smem_gbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    pub max_warps_per_sm: u32,
    pub rates: DeviceRates,
    pub bank: BankConfig,
    pub calibration: ConflictCalibration,
    /// Shape at which the measured shared-memory peak occurred.
    pub peak_shape: KernelShape,
    pub measured: MeasuredPeaks,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.bank.validate()?;
        self.calibration.validate()?;
        if self.peak_shape.ilp == 0 || self.peak_shape.cta_size == 0 {
            return Err(Error::config("peak shape needs positive CTA size and ILP"));
        }
        Ok(())
    }

    /// Conflict-free shared-memory latency.
    pub fn base_smem_latency(&self) -> Result<f64> {
        self.calibration.latency(1)
    }
}

/// `f_mem * bus_width/8 * ddr_factor`.
pub fn theoretical_global_bw(r: &DeviceRates) -> f64 {
    r.f_mem_mhz * 1e6 * (r.bus_width_bits as f64 / 8.0) * r.ddr_factor as f64 / 1e9
}

/// `W_SM = f_core * W_bank * 32`.
pub fn theoretical_smem_bw(r: &DeviceRates) -> f64 {
    r.f_core_ghz * r.w_bank_bytes_per_cycle * 32.0
}

/// `2 * f_core * sizeof(int) * threads * ILP / latency`.
pub fn shared_throughput(shape: &KernelShape, r: &DeviceRates, total_latency_cycles: f64) -> Result<f64> {
    if !(total_latency_cycles > 0.0) {
        return Err(Error::config("total latency must be positive"));
    }
    Ok(2.0 * r.f_core_ghz * WORD_BYTES * shape.threads_per_sm() as f64 * shape.ilp as f64
        / total_latency_cycles)
}

/// Latency at which `shared_throughput` returns `gbps`.
pub fn back_solve_latency(shape: &KernelShape, r: &DeviceRates, gbps: f64) -> Result<f64> {
    if !(gbps > 0.0) {
        return Err(Error::config("throughput must be positive"));
    }
    Ok(2.0 * r.f_core_ghz * WORD_BYTES * shape.threads_per_sm() as f64 * shape.ilp as f64 / gbps)
}

pub fn efficiency(achieved_gbps: f64, theoretical_gbps: f64) -> f64 {
    achieved_gbps / theoretical_gbps
}

/// Warp-wide word requests the banks can serve per cycle: one word per lane.
pub fn smem_warp_words_per_cycle(r: &DeviceRates) -> f64 {
    r.w_bank_bytes_per_cycle * 32.0 / WORD_BYTES / WARP_LANES as f64
}

/// Little's law: `warps * ILP = latency * throughput`, with throughput in
/// warp-wide word requests per cycle.
pub fn required_warps(latency_cycles: f64, warp_words_per_cycle: f64, ilp: u32) -> Result<u64> {
    if ilp == 0 {
        return Err(Error::config("ILP must be at least 1"));
    }
    let warps = latency_cycles * warp_words_per_cycle / ilp as f64;
    // Guard against 93.99999 style rounding before the ceiling.
    Ok((warps - 1e-9).ceil().max(0.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(f_mem_mhz: f64, bus: u32) -> DeviceRates {
        DeviceRates {
            f_mem_mhz,
            f_core_ghz: 1.0,
            bus_width_bits: bus,
            ddr_factor: 4,
            w_bank_bytes_per_cycle: 4.0,
        }
    }

    #[test]
    fn doubling_bus_doubles_bandwidth() {
        let a = theoretical_global_bw(&rates(1502.0, 192));
        let b = theoretical_global_bw(&rates(1502.0, 384));
        assert!((b - 2.0 * a).abs() < 1e-9);
    }

    #[test]
    fn ilp_linearity() {
        let r = rates(1000.0, 256);
        let s1 = KernelShape { cta_size: 256, ctas_per_sm: 2, ilp: 2 };
        let s2 = KernelShape { ilp: 4, ..s1 };
        let a = shared_throughput(&s1, &r, 300.0).unwrap();
        let b = shared_throughput(&s2, &r, 300.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-9);
        assert!(shared_throughput(&s1, &r, 0.0).is_err());
    }

    #[test]
    fn little_toy_numbers() {
        assert_eq!(required_warps(10.0, 1.0, 1).unwrap(), 10);
        assert_eq!(required_warps(10.0, 1.0, 2).unwrap(), 5);
        assert!(required_warps(10.0, 1.0, 0).is_err());
    }

    #[test]
    fn back_solve_inverts() {
        let r = rates(1000.0, 256);
        let s = KernelShape { cta_size: 512, ctas_per_sm: 1, ilp: 4 };
        let lat = back_solve_latency(&s, &r, 50.0).unwrap();
        assert!((shared_throughput(&s, &r, lat).unwrap() - 50.0).abs() < 1e-9);
    }
}
