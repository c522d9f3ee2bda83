//! Shared-memory banks: word-to-bank mapping, conflict degree of one warp
//! access, and a latency model calibrated per device.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WARP_LANES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankMode {
    FourByte,
    EightByte,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub num_banks: u32,
    /// Physical bank width: 4 or 8 bytes.
    pub bank_width_bytes: u32,
    pub mode: BankMode,
}

impl BankConfig {
    pub const FOUR_BYTE: BankConfig = BankConfig {
        num_banks: 32,
        bank_width_bytes: 4,
        mode: BankMode::FourByte,
    };

    pub fn eight_byte_banks(mode: BankMode) -> Self {
        BankConfig {
            num_banks: 32,
            bank_width_bytes: 8,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_banks != 32 {
            return Err(Error::config("shared memory has 32 banks"));
        }
        match (self.bank_width_bytes, self.mode) {
            (4, BankMode::FourByte) | (8, _) => Ok(()),
            (4, BankMode::EightByte) => Err(Error::config("8-byte mode needs 8-byte banks")),
            (w, _) => Err(Error::config(format!("bank width {w} is not 4 or 8 bytes"))),
        }
    }
}

/// Location of a 4-byte word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BankSlot {
    pub bank: u32,
    pub row: u64,
    /// Half of an 8-byte bank row; always 0 on 4-byte banks.
    pub column: u32,
}

pub fn bank_of(word: u64, cfg: &BankConfig) -> BankSlot {
    let n = cfg.num_banks as u64;
    match (cfg.bank_width_bytes, cfg.mode) {
        (8, BankMode::EightByte) => BankSlot {
            bank: ((word / 2) % n) as u32,
            row: word / (2 * n),
            column: (word % 2) as u32,
        },
        // 8-byte banks addressed as 32 successive words per bank sweep; two
        // sweeps share one row.
        (8, BankMode::FourByte) => BankSlot {
            bank: (word % n) as u32,
            row: word / (2 * n),
            column: ((word / n) % 2) as u32,
        },
        _ => BankSlot {
            bank: (word % n) as u32,
            row: word / n,
            column: 0,
        },
    }
}

/// Word index requested by each lane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WarpAccess {
    words: Vec<u64>,
}

impl WarpAccess {
    pub fn new(words: Vec<u64>) -> Result<Self> {
        if words.len() != WARP_LANES {
            return Err(Error::config(format!(
                "a warp access has {WARP_LANES} lanes, got {}",
                words.len()
            )));
        }
        Ok(WarpAccess { words })
    }

    /// Lane `i` reads word `i * stride`.
    pub fn strided(stride: u64) -> Self {
        WarpAccess {
            words: (0..WARP_LANES as u64).map(|i| i * stride).collect(),
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictReport {
    /// Largest number of distinct rows requested from one bank.
    pub degree: u32,
    pub lanes_per_bank: Vec<Vec<u32>>,
}

pub fn analyze_access(access: &WarpAccess, cfg: &BankConfig) -> ConflictReport {
    let n = cfg.num_banks as usize;
    let mut lanes_per_bank = vec![Vec::new(); n];
    let mut rows: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); n];
    for (lane, &w) in access.words.iter().enumerate() {
        let slot = bank_of(w, cfg);
        lanes_per_bank[slot.bank as usize].push(lane as u32);
        rows[slot.bank as usize].insert(slot.row);
    }
    let degree = rows.iter().map(|r| r.len() as u32).max().unwrap_or(1).max(1);
    ConflictReport {
        degree,
        lanes_per_bank,
    }
}

pub fn conflict_degree(stride: u64, cfg: &BankConfig) -> ConflictReport {
    analyze_access(&WarpAccess::strided(stride), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationPoint {
    pub degree: u32,
    pub cycles: u32,
}

/// Measured latency per conflict degree; linear in between.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictCalibration {
    pub points: Vec<CalibrationPoint>,
}

impl ConflictCalibration {
    pub fn validate(&self) -> Result<()> {
        if self.points.first().map(|p| p.degree) != Some(1) {
            return Err(Error::config("calibration must start at degree 1"));
        }
        for w in self.points.windows(2) {
            if w[1].degree <= w[0].degree || w[1].cycles < w[0].cycles {
                return Err(Error::config(
                    "calibration degrees must increase and latencies must not decrease",
                ));
            }
        }
        Ok(())
    }

    pub fn latency(&self, degree: u32) -> Result<f64> {
        let pts = &self.points;
        if let Some(p) = pts.iter().find(|p| p.degree == degree) {
            return Ok(p.cycles as f64);
        }
        let upper = pts.iter().position(|p| p.degree > degree);
        match upper {
            Some(i) if i > 0 => {
                let (lo, hi) = (pts[i - 1], pts[i]);
                let t = (degree - lo.degree) as f64 / (hi.degree - lo.degree) as f64;
                Ok(lo.cycles as f64 + t * (hi.cycles as f64 - lo.cycles as f64))
            }
            _ => Err(Error::config(format!(
                "degree {degree} lies outside the calibrated range"
            ))),
        }
    }
}

/// Latency of one warp access: the calibrated latency of its conflict degree.
pub fn simulate_warp(
    access: &WarpAccess,
    cfg: &BankConfig,
    calibration: &ConflictCalibration,
) -> Result<f64> {
    calibration.latency(analyze_access(access, cfg).degree)
}
