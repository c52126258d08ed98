// SPDX-License-Identifier: Apache-2.0

//! Downlink OFDM resource grid with Comb4 PRS.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::{Error, Result};

/// Numerology and PRS layout of the transmitted frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub n_slots: usize,
    pub symbols_per_slot: usize,
    /// Cyclic prefix length as a fraction of the useful symbol time.
    pub cp_ratio: f64,
    /// Cyclic suffix length as a fraction of the useful symbol time.
    pub cs_ratio: f64,
    /// Count the cyclic suffix into the slow-time symbol spacing.
    pub include_cyclic_suffix: bool,
    pub prs_comb: usize,
    pub prs_slot_interval: usize,
    /// First PRS symbol within a slot (0-based).
    pub prs_first_symbol: usize,
    pub prs_symbol_count: usize,
    /// PRS sequence identity used for the Gold sequence initialisation.
    pub prs_id: u32,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl OfdmConfig {
    /// 70 GHz, 240 kHz, 2048 subcarriers, 16 slots of 14 symbols.
    pub fn full() -> Self {
        OfdmConfig {
            carrier_hz: 70e9,
            subcarrier_spacing_hz: 240e3,
            n_subcarriers: 2048,
            n_slots: 16,
            symbols_per_slot: 14,
            cp_ratio: 0.25,
            cs_ratio: 1.0 / 32.0,
            include_cyclic_suffix: false,
            prs_comb: 4,
            prs_slot_interval: 4,
            prs_first_symbol: 1,
            prs_symbol_count: 12,
            prs_id: 0,
        }
    }

    /// Reduced grid for desk-scale runs: 256 subcarriers, 4 slots.
    pub fn test_profile() -> Self {
        OfdmConfig {
            n_subcarriers: 256,
            n_slots: 4,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.carrier_hz > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return bad("carrier and subcarrier spacing must be positive".into());
        }
        if self.n_subcarriers == 0 || self.n_slots == 0 || self.symbols_per_slot == 0 {
            return bad("grid dimensions must be non-zero".into());
        }
        if !(self.cp_ratio >= 0.0 && self.cs_ratio >= 0.0) {
            return bad("cyclic prefix/suffix ratios must be non-negative".into());
        }
        if self.prs_comb != 4 {
            return bad(format!("only Comb4 PRS is supported, got comb {}", self.prs_comb));
        }
        if self.n_subcarriers % self.prs_comb != 0 {
            return bad(format!(
                "subcarrier count {} is not a multiple of the PRS comb {}",
                self.n_subcarriers, self.prs_comb
            ));
        }
        if self.prs_slot_interval == 0 {
            return bad("PRS slot interval must be at least 1".into());
        }
        if self.prs_first_symbol + self.prs_symbol_count > self.symbols_per_slot {
            return bad("PRS symbols exceed the slot".into());
        }
        Ok(())
    }

    pub fn n_symbols(&self) -> usize {
        self.n_slots * self.symbols_per_slot
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Useful symbol time `T = 1/Δf`.
    pub fn useful_symbol_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// Slow-time spacing `T_OFDM = T + T_CP` (plus `T_CS` when enabled).
    pub fn symbol_duration_s(&self) -> f64 {
        let cs = if self.include_cyclic_suffix {
            self.cs_ratio
        } else {
            0.0
        };
        self.useful_symbol_s() * (1.0 + self.cp_ratio + cs)
    }

    /// Position of global symbol `m` inside its slot's PRS block, if it carries PRS.
    pub fn prs_block_index(&self, m: usize) -> Option<usize> {
        let slot = m / self.symbols_per_slot;
        let l = m % self.symbols_per_slot;
        let in_slot = slot % self.prs_slot_interval == 0;
        let in_block = l >= self.prs_first_symbol && l < self.prs_first_symbol + self.prs_symbol_count;
        (in_slot && in_block).then(|| l - self.prs_first_symbol)
    }
}

/// First PRS subcarrier for the `m`-th PRS symbol of a Comb4 block.
///
/// `n0 = (m mod 4)/2 + 3/4 (1 - (-1)^(m mod 4))`, which cycles 0, 2, 1, 3.
pub fn prs_subcarrier_offset(m: usize) -> usize {
    let r = m % 4;
    let sign = if r % 2 == 0 { 1 } else { -1 };
    // 4·n0 = 2r + 3(1 - (-1)^r), always divisible by 4 for K = 4
    ((2 * r as i64 + 3 * (1 - sign)) / 4) as usize
}

/// Subcarriers carrying PRS on global symbol `m`; empty if `m` carries no PRS.
pub fn prs_subcarrier_set(m: usize, cfg: &OfdmConfig) -> Vec<usize> {
    let Some(l) = cfg.prs_block_index(m) else {
        return Vec::new();
    };
    let n0 = prs_subcarrier_offset(l);
    (0..)
        .map(|n| n * cfg.prs_comb + n0)
        .take_while(|&k| k < cfg.n_subcarriers)
        .collect()
}

/// Length-31 Gold sequence (`x³¹+x³+1`, `x³¹+x³+x²+x+1`, 1600-chip offset),
/// mapped to ±1.
pub fn gold_sequence(length: usize, init: u32) -> Vec<i8> {
    const NC: usize = 1600;
    let total = length + NC + 31;
    let mut x1 = vec![0u8; total];
    let mut x2 = vec![0u8; total];
    x1[0] = 1;
    for (i, b) in x2.iter_mut().take(31).enumerate() {
        *b = ((init >> i) & 1) as u8;
    }
    for n in 0..total - 31 {
        x1[n + 31] = (x1[n + 3] + x1[n]) & 1;
        x2[n + 31] = (x2[n + 3] + x2[n + 2] + x2[n + 1] + x2[n]) & 1;
    }
    (0..length)
        .map(|n| 1 - 2 * ((x1[n + NC] ^ x2[n + NC]) as i8))
        .collect()
}

/// Transmitted modulation symbols and the PRS occupancy mask, both `n_c × n_sym`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub values: Array2<Complex64>,
    pub prs_mask: Array2<bool>,
}

impl SymbolGrid {
    pub fn n_subcarriers(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_symbols(&self) -> usize {
        self.values.ncols()
    }
}

fn prs_init(cfg: &OfdmConfig, m: usize) -> u32 {
    let slot = (m / cfg.symbols_per_slot) as u64;
    let l = (m % cfg.symbols_per_slot) as u64;
    let id = cfg.prs_id as u64;
    let v = (1u64 << 22) * (id / 1024)
        + (1u64 << 10) * (cfg.symbols_per_slot as u64 * slot + l + 1) * (2 * (id % 1024) + 1)
        + id % 1024;
    (v % (1u64 << 31)) as u32
}

/// Fill the frame: Gold-sequence QPSK on PRS resource elements, random unit-power
/// QPSK elsewhere. Payload is a pure function of `seed`; PRS does not depend on it.
pub fn build_resource_grid(cfg: &OfdmConfig, seed: u64) -> Result<SymbolGrid> {
    cfg.validate()?;
    let n_c = cfg.n_subcarriers;
    let n_sym = cfg.n_symbols();
    let mut values = Array2::from_elem((n_c, n_sym), Complex64::new(0.0, 0.0));
    let mut prs_mask = Array2::from_elem((n_c, n_sym), false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for m in 0..n_sym {
        let prs = prs_subcarrier_set(m, cfg);
        if !prs.is_empty() {
            let bits = gold_sequence(2 * prs.len(), prs_init(cfg, m));
            for (i, &n) in prs.iter().enumerate() {
                values[[n, m]] = Complex64::new(bits[2 * i] as f64, bits[2 * i + 1] as f64)
                    * FRAC_1_SQRT_2;
                prs_mask[[n, m]] = true;
            }
        }
        for n in 0..n_c {
            if !prs_mask[[n, m]] {
                let re = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let im = if rng.random::<bool>() { 1.0 } else { -1.0 };
                values[[n, m]] = Complex64::new(re, im) * FRAC_1_SQRT_2;
            }
        }
    }
    Ok(SymbolGrid { values, prs_mask })
}
