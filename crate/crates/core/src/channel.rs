// SPDX-License-Identifier: Apache-2.0

//! Echo synthesis: delayed, Doppler-shifted and steered copies of the frame,
//! one `n_c × n_sym` grid per virtual receive element.
//!
//! [`ChannelSimulator::element`] regenerates any element on demand with its own
//! noise stream, so the pipeline can stream over elements instead of holding
//! the whole `n_c × n_sym × P × Q` tensor.

use ndarray::{s, Array2, Array4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{steering_matrix, PhaseConvention, UpaLayout};
use crate::scene::ScattererTruth;
use crate::waveform::{OfdmConfig, SymbolGrid};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Default ceiling for materialising a full snapshot tensor, bytes.
pub const DEFAULT_MEMORY_CAP: u64 = 1 << 30;

/// Per-resource-element SNR of a unit echo: mean `G_k²` over scatterers divided
/// by the noise power. `f64::INFINITY` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSpec {
    pub snr_db: f64,
}

impl SnrSpec {
    pub fn db(snr_db: f64) -> Self {
        SnrSpec { snr_db }
    }

    pub fn noiseless() -> Self {
        SnrSpec {
            snr_db: f64::INFINITY,
        }
    }

    pub fn noise_power(&self, signal_power: f64) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            signal_power / 10f64.powf(self.snr_db / 10.0)
        }
    }
}

/// Doppler shift `2 v f_c / c`.
pub fn doppler_hz(radial_velocity: f64, cfg: &OfdmConfig) -> f64 {
    2.0 * radial_velocity * cfg.carrier_hz / SPEED_OF_LIGHT
}

/// One scatterer's contribution to subcarrier `n` of symbol `m`, before steering.
pub fn received_symbol(
    s_tx: Complex64,
    truth: &ScattererTruth,
    n: usize,
    m: usize,
    cfg: &OfdmConfig,
) -> Complex64 {
    let f_n = n as f64 * cfg.subcarrier_spacing_hz;
    let delay_phase = -2.0 * PI * f_n * 2.0 * truth.range / SPEED_OF_LIGHT;
    let doppler_phase =
        2.0 * PI * doppler_hz(truth.radial_velocity, cfg) * m as f64 * cfg.symbol_duration_s();
    s_tx * truth.gain * Complex64::from_polar(1.0, delay_phase + doppler_phase)
}

/// Received symbols for every virtual element, shape `(n_c, n_sym, P, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualArraySnapshot {
    pub values: Array4<Complex64>,
}

/// Precomputed range/Doppler phase ramps and steering for a scatterer list.
pub struct ChannelSimulator<'a> {
    grid: &'a SymbolGrid,
    layout: UpaLayout,
    /// `n_c × K`: `G_k exp(-j2π nΔf 2R_k/c)`
    range_ramps: Array2<Complex64>,
    /// `K × n_sym`: `exp(j2π f_d(k) m T_OFDM)`
    doppler_ramps: Array2<Complex64>,
    /// per scatterer, `P × Q` steering phases
    steering: Vec<Array2<Complex64>>,
    noise_std: f64,
    seed: u64,
}

impl<'a> ChannelSimulator<'a> {
    pub fn new(
        grid: &'a SymbolGrid,
        truths: &[ScattererTruth],
        layout: UpaLayout,
        cfg: &OfdmConfig,
        snr: SnrSpec,
        seed: u64,
        convention: PhaseConvention,
    ) -> Result<Self> {
        cfg.validate()?;
        layout.validate()?;
        let n_c = cfg.n_subcarriers;
        let n_sym = cfg.n_symbols();
        if grid.values.dim() != (n_c, n_sym) {
            return Err(Error::Config(format!(
                "symbol grid is {:?}, config expects ({n_c}, {n_sym})",
                grid.values.dim()
            )));
        }
        let k = truths.len();
        let t_sym = cfg.symbol_duration_s();
        let range_ramps = Array2::from_shape_fn((n_c, k), |(n, i)| {
            let t = &truths[i];
            let ph = -2.0 * PI * n as f64 * cfg.subcarrier_spacing_hz * 2.0 * t.range
                / SPEED_OF_LIGHT;
            Complex64::from_polar(t.gain, ph)
        });
        let doppler_ramps = Array2::from_shape_fn((k, n_sym), |(i, m)| {
            let fd = doppler_hz(truths[i].radial_velocity, cfg);
            Complex64::from_polar(1.0, 2.0 * PI * fd * m as f64 * t_sym)
        });
        let steering = truths
            .iter()
            .map(|t| steering_matrix(&layout, t.angles(), convention))
            .collect();
        let signal_power = if truths.is_empty() {
            1.0
        } else {
            // expected per-element echo power, all scatterers together
            truths.iter().map(|t| t.gain * t.gain).sum::<f64>()
        };
        let noise_std = snr.noise_power(signal_power).sqrt();
        Ok(ChannelSimulator {
            grid,
            layout,
            range_ramps,
            doppler_ramps,
            steering,
            noise_std,
            seed,
        })
    }

    pub fn layout(&self) -> &UpaLayout {
        &self.layout
    }

    /// Noise standard deviation per complex resource element.
    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn noiseless_channel(&self, p: usize, q: usize) -> Array2<Complex64> {
        let weights: Vec<Complex64> = self.steering.iter().map(|a| a[[p, q]]).collect();
        let mut scaled = self.doppler_ramps.clone();
        for (mut row, w) in scaled.outer_iter_mut().zip(&weights) {
            row.mapv_inplace(|z| z * w);
        }
        self.range_ramps.dot(&scaled)
    }

    fn add_noise(&self, p: usize, q: usize, out: &mut Array2<Complex64>) {
        if self.noise_std == 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((p * self.layout.cols + q) as u64 + 1);
        let scale = self.noise_std * std::f64::consts::FRAC_1_SQRT_2;
        for z in out.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += Complex64::new(re, im) * scale;
        }
    }

    /// Received grid at virtual element `(p, q)`, noise included.
    pub fn element(&self, p: usize, q: usize) -> Array2<Complex64> {
        let mut rx = self.noiseless_channel(p, q) * &self.grid.values;
        self.add_noise(p, q, &mut rx);
        rx
    }

    pub fn snapshot_bytes(&self) -> u64 {
        (self.grid.values.len() * self.layout.len() * std::mem::size_of::<Complex64>()) as u64
    }

    /// Materialise the full tensor, refusing above `memory_cap` bytes.
    pub fn snapshot(&self, memory_cap: u64) -> Result<VirtualArraySnapshot> {
        let needed = self.snapshot_bytes();
        if needed > memory_cap {
            return Err(Error::MemoryCap {
                needed,
                cap: memory_cap,
            });
        }
        let (n_c, n_sym) = self.grid.values.dim();
        let (rows, cols) = (self.layout.rows, self.layout.cols);
        let elements: Vec<Array2<Complex64>> = (0..rows * cols)
            .into_par_iter()
            .map(|i| self.element(i / cols, i % cols))
            .collect();
        let mut values = Array4::zeros((n_c, n_sym, rows, cols));
        for (i, e) in elements.into_iter().enumerate() {
            values.slice_mut(s![.., .., i / cols, i % cols]).assign(&e);
        }
        Ok(VirtualArraySnapshot { values })
    }
}

/// Full received tensor `Σ_k s_Rx(n,m,k) A_k(p,q) + w`.
pub fn synthesize_rx(
    grid: &SymbolGrid,
    truths: &[ScattererTruth],
    layout: &UpaLayout,
    cfg: &OfdmConfig,
    snr: SnrSpec,
    seed: u64,
) -> Result<VirtualArraySnapshot> {
    ChannelSimulator::new(grid, truths, *layout, cfg, snr, seed, PhaseConvention::default())?
        .snapshot(DEFAULT_MEMORY_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ArrayRole;
    use crate::waveform::build_resource_grid;
    use approx::assert_abs_diff_eq;

    fn tiny_cfg() -> OfdmConfig {
        OfdmConfig {
            n_subcarriers: 32,
            n_slots: 1,
            ..OfdmConfig::full()
        }
    }

    fn truth(range: f64, v: f64, theta: f64, phi: f64) -> ScattererTruth {
        ScattererTruth {
            range,
            radial_velocity: v,
            theta,
            phi,
            gain: 1.0,
        }
    }

    fn layout() -> UpaLayout {
        UpaLayout::new(4, 4, 1.0, ArrayRole::Virtual).unwrap()
    }

    #[test]
    fn zero_delay_zero_doppler_is_identity() {
        let s = Complex64::new(0.3, -0.7);
        let t = ScattererTruth {
            gain: 2.5,
            ..truth(0.0, 0.0, 90.0, 90.0)
        };
        let cfg = OfdmConfig::full();
        let r = received_symbol(s, &t, 17, 33, &cfg);
        assert_abs_diff_eq!((r - s * 2.5).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn subcarrier_phase_step() {
        let cfg = OfdmConfig::full();
        let t = truth(100.0, 0.0, 90.0, 90.0);
        let one = Complex64::new(1.0, 0.0);
        let r0 = received_symbol(one, &t, 0, 0, &cfg);
        let r1 = received_symbol(one, &t, 1, 0, &cfg);
        let expected = -2.0 * PI * 240e3 * 200.0 / SPEED_OF_LIGHT;
        let got = (r1 / r0).arg();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn phase_is_linear_in_n_and_m() {
        let cfg = OfdmConfig::full();
        let t = truth(37.3, 4.2, 80.0, 70.0);
        let one = Complex64::new(1.0, 0.0);
        let step_n: Vec<Complex64> = (0..10)
            .map(|n| received_symbol(one, &t, n + 1, 3, &cfg) / received_symbol(one, &t, n, 3, &cfg))
            .collect();
        let step_m: Vec<Complex64> = (0..10)
            .map(|m| received_symbol(one, &t, 5, m + 1, &cfg) / received_symbol(one, &t, 5, m, &cfg))
            .collect();
        for w in step_n.windows(2).chain(step_m.windows(2)) {
            assert_abs_diff_eq!((w[0] - w[1]).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_scene_noiseless_is_zero() {
        let cfg = tiny_cfg();
        let grid = build_resource_grid(&cfg, 1).unwrap();
        let snap = synthesize_rx(&grid, &[], &layout(), &cfg, SnrSpec::noiseless(), 0).unwrap();
        assert!(snap.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn boresight_elements_identical() {
        let cfg = tiny_cfg();
        let grid = build_resource_grid(&cfg, 1).unwrap();
        let t = [truth(50.0, 3.0, 90.0, 90.0)];
        let snap = synthesize_rx(&grid, &t, &layout(), &cfg, SnrSpec::noiseless(), 0).unwrap();
        let reference = snap.values.slice(s![.., .., 0, 0]).to_owned();
        for p in 0..4 {
            for q in 0..4 {
                let e = snap.values.slice(s![.., .., p, q]);
                for (a, b) in e.iter().zip(reference.iter()) {
                    assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn matches_scalar_model() {
        let cfg = tiny_cfg();
        let grid = build_resource_grid(&cfg, 3).unwrap();
        let t = [truth(40.0, -6.0, 70.0, 120.0), truth(55.0, 2.0, 100.0, 60.0)];
        let lay = layout();
        let snap = synthesize_rx(&grid, &t, &lay, &cfg, SnrSpec::noiseless(), 0).unwrap();
        let a: Vec<_> = t
            .iter()
            .map(|t| steering_matrix(&lay, t.angles(), PhaseConvention::default()))
            .collect();
        for &(n, m, p, q) in &[(0, 0, 0, 0), (5, 7, 1, 3), (31, 13, 3, 2)] {
            let mut expected = Complex64::new(0.0, 0.0);
            for (k, tk) in t.iter().enumerate() {
                expected += received_symbol(grid.values[[n, m]], tk, n, m, &cfg) * a[k][[p, q]];
            }
            assert_abs_diff_eq!((snap.values[[n, m, p, q]] - expected).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn superposition() {
        let cfg = tiny_cfg();
        let grid = build_resource_grid(&cfg, 3).unwrap();
        let a = truth(40.0, -6.0, 70.0, 120.0);
        let b = truth(55.0, 2.0, 100.0, 60.0);
        let lay = layout();
        let run = |ts: &[ScattererTruth]| {
            synthesize_rx(&grid, ts, &lay, &cfg, SnrSpec::noiseless(), 0)
                .unwrap()
                .values
        };
        let both = run(&[a, b]);
        let sum = run(&[a]) + run(&[b]);
        for (x, y) in both.iter().zip(sum.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn noise_calibration_within_half_db() {
        let cfg = OfdmConfig {
            n_subcarriers: 512,
            n_slots: 4,
            ..OfdmConfig::full()
        };
        let grid = build_resource_grid(&cfg, 9).unwrap();
        let t = [
            ScattererTruth {
                gain: 0.7,
                ..truth(30.0, 0.0, 90.0, 90.0)
            },
            ScattererTruth {
                gain: 1.3,
                ..truth(47.0, 6.0, 70.0, 110.0)
            },
            truth(81.0, -9.0, 120.0, 60.0),
        ];
        let lay = UpaLayout::new(2, 2, 1.0, ArrayRole::Virtual).unwrap();
        for snr_db in [-10.0, 0.0, 15.0] {
            let clean = ChannelSimulator::new(
                &grid, &t, lay, &cfg, SnrSpec::noiseless(), 5, PhaseConvention::default(),
            )
            .unwrap();
            let noisy = ChannelSimulator::new(
                &grid, &t, lay, &cfg, SnrSpec::db(snr_db), 5, PhaseConvention::default(),
            )
            .unwrap();
            let (mut sig, mut noise, mut count) = (0.0, 0.0, 0usize);
            for p in 0..2 {
                for q in 0..2 {
                    let c = clean.element(p, q);
                    let n = noisy.element(p, q);
                    for (a, b) in c.iter().zip(n.iter()) {
                        sig += a.norm_sqr();
                        noise += (b - a).norm_sqr();
                        count += 1;
                    }
                }
            }
            assert!(count >= 100_000);
            let measured = 10.0 * (sig / noise).log10();
            assert!((measured - snr_db).abs() < 0.5, "{snr_db} dB -> {measured} dB");
        }
    }

    #[test]
    fn deterministic_noise() {
        let cfg = tiny_cfg();
        let grid = build_resource_grid(&cfg, 3).unwrap();
        let t = [truth(40.0, -6.0, 70.0, 120.0)];
        let a = synthesize_rx(&grid, &t, &layout(), &cfg, SnrSpec::db(0.0), 42).unwrap();
        let b = synthesize_rx(&grid, &t, &layout(), &cfg, SnrSpec::db(0.0), 42).unwrap();
        let c = synthesize_rx(&grid, &t, &layout(), &cfg, SnrSpec::db(0.0), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn memory_cap_refuses_full_tensor() {
        let cfg = OfdmConfig::full();
        let grid = build_resource_grid(&cfg, 0).unwrap();
        let lay = UpaLayout::new(16, 16, 1.0, ArrayRole::Virtual).unwrap();
        let t = [truth(40.0, 0.0, 90.0, 90.0)];
        let sim =
            ChannelSimulator::new(&grid, &t, lay, &cfg, SnrSpec::db(0.0), 0, PhaseConvention::default())
                .unwrap();
        // 2048 * 224 * 256 * 16 bytes
        assert_eq!(sim.snapshot_bytes(), 1_879_048_192);
        assert!(matches!(
            sim.snapshot(DEFAULT_MEMORY_CAP),
            Err(Error::MemoryCap { .. })
        ));
    }
}
