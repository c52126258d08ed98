// SPDX-License-Identifier: Apache-2.0

//! Baseline imager: the same RDM front end, with a 2D spatial FFT across the
//! virtual array in place of MUSIC.
//!
//! Steering `exp(-jπ·s·(p u + q w))` peaks in the inverse DFT at
//! `u = 2k / (N s)`, with `k` the signed (shifted) bin index.

use ndarray::{Array2, Array4, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::cfar::{ca_cfar_2d, local_maxima, osca_cfar_2d, CfarConfig};
use crate::geometry::angles_from_direction_cosines;
use crate::music::{extract_cell_manifold, CellManifold, DoaEstimate};
use crate::pointcloud::{reconstruct, Detection, PointCloud4D};
use crate::rdm::{bin_to_physical, integrate_elements};
use crate::waveform::OfdmConfig;
use crate::{Error, Result};

/// Magnitude of the (zero-padded) 2D spatial DFT, zero frequency centred.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrumFft {
    /// rows follow `u_axis`, columns `w_axis`
    pub values: Array2<f64>,
    pub u_axis: Vec<f64>,
    pub w_axis: Vec<f64>,
}

impl AngleSpectrumFft {
    pub fn power(&self) -> Array2<f64> {
        self.values.mapv(|v| v * v)
    }
}

/// Baseline angle-search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftSearch {
    /// zero-padding factor per axis
    pub pad: usize,
    /// CA-CFAR at `pad = 1`; window and guard are scaled by `pad`
    pub cfar: CfarConfig,
    /// peaks more than this many dB below the cell's strongest are dropped
    pub floor_db: f64,
    /// element spacing in units of `d = λ/2`
    pub spacing: f64,
}

impl FftSearch {
    pub fn new(pad: usize) -> Self {
        FftSearch {
            pad,
            cfar: CfarConfig {
                window: 9,
                guard: 2,
                p_fa: 1e-3,
                os_fraction: 0.75,
            },
            floor_db: 10.0,
            spacing: 1.0,
        }
    }

    fn scaled_cfar(&self) -> CfarConfig {
        CfarConfig {
            window: (self.cfar.window - 1) * self.pad + 1,
            guard: self.cfar.guard * self.pad,
            ..self.cfar
        }
    }
}

fn shifted_axis(n: usize, spacing: f64) -> Vec<f64> {
    let half = (n / 2) as f64;
    (0..n)
        .map(|i| 2.0 * (i as f64 - half) / (n as f64 * spacing))
        .collect()
}

/// 2D inverse DFT magnitude of the manifold, padded to `pad × (P, Q)`.
pub fn fft_angle_spectrum(cell: &CellManifold, pad: usize, spacing: f64) -> Result<AngleSpectrumFft> {
    if pad == 0 {
        return Err(Error::Config("padding factor must be ≥ 1".into()));
    }
    let (p, q) = cell.values.dim();
    let (np, nq) = (p * pad, q * pad);
    let mut buf = Array2::<Complex64>::zeros((np, nq));
    buf.slice_mut(ndarray::s![..p, ..q]).assign(&cell.values);
    let mut planner = FftPlanner::new();
    let fft_q = planner.plan_fft_inverse(nq);
    for mut row in buf.axis_iter_mut(Axis(0)) {
        fft_q.process(row.as_slice_mut().expect("standard layout"));
    }
    let mut t = buf.t().as_standard_layout().into_owned();
    let fft_p = planner.plan_fft_inverse(np);
    for mut row in t.axis_iter_mut(Axis(0)) {
        fft_p.process(row.as_slice_mut().expect("standard layout"));
    }
    let (hp, hq) = (np / 2, nq / 2);
    let values = Array2::from_shape_fn((np, nq), |(i, j)| {
        t[[(j + nq - hq) % nq, (i + np - hp) % np]].norm()
    });
    Ok(AngleSpectrumFft {
        values,
        u_axis: shifted_axis(np, spacing),
        w_axis: shifted_axis(nq, spacing),
    })
}

fn parabolic_offset(l: f64, c: f64, r: f64) -> f64 {
    let (l, c, r) = (l.ln(), c.ln(), r.ln());
    let den = l - 2.0 * c + r;
    if !den.is_finite() || den >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
}

/// Angle estimates from the spatial FFT of one cell.
///
/// Peaks pass a CA-CFAR on the power spectrum, must be local maxima, and must
/// lie within `floor_db` of the strongest peak. Non-physical `(u, w)` bins are
/// discarded.
pub fn estimate_doas_fft(cell: &CellManifold, search: &FftSearch) -> Result<Vec<DoaEstimate>> {
    let spec = fft_angle_spectrum(cell, search.pad, search.spacing)?;
    let power = spec.power();
    let mask = ca_cfar_2d(power.view(), &search.scaled_cfar())?;
    let peaks = local_maxima(power.view(), &mask.detected);
    let strongest = peaks.iter().map(|&ij| power[ij]).fold(0.0, f64::max);
    let floor = strongest * 10f64.powf(-search.floor_db / 10.0);
    let (np, nq) = power.dim();
    let du = spec.u_axis[1] - spec.u_axis[0];
    let dw = spec.w_axis[1] - spec.w_axis[0];
    let mut out = Vec::new();
    for (i, j) in peaks {
        if power[[i, j]] < floor {
            continue;
        }
        let mut u = spec.u_axis[i];
        let mut w = spec.w_axis[j];
        if i > 0 && i + 1 < np {
            u += du * parabolic_offset(power[[i - 1, j]], power[[i, j]], power[[i + 1, j]]);
        }
        if j > 0 && j + 1 < nq {
            w += dw * parabolic_offset(power[[i, j - 1]], power[[i, j]], power[[i, j + 1]]);
        }
        if u * u + w * w > 1.0 {
            continue;
        }
        if let Some(a) = angles_from_direction_cosines(u, w) {
            out.push(DoaEstimate {
                theta: a.theta,
                phi: a.phi,
                peak: power[[i, j]] / strongest,
            });
        }
    }
    out.sort_by(|a, b| b.peak.total_cmp(&a.peak));
    Ok(out)
}

/// Complete baseline imager on a divided tensor `(n_c, n_sym, P, Q)`.
pub fn fft4d_image(
    s_g: &Array4<Complex64>,
    cfg: &OfdmConfig,
    rdm_cfar: &CfarConfig,
    search: &FftSearch,
    bs_position: [f64; 3],
) -> Result<PointCloud4D> {
    let integ = integrate_elements(s_g, cfg);
    let mask = osca_cfar_2d(integ.power.view(), rdm_cfar)?;
    let cells = local_maxima(integ.power.view(), &mask.detected);
    let per_cell: Vec<Vec<Detection>> = cells
        .par_iter()
        .map(|&(alpha, beta)| {
            let cell = extract_cell_manifold(s_g, alpha, beta);
            let (range, velocity) = bin_to_physical(alpha, beta, cfg);
            estimate_doas_fft(&cell, search).map(|est| {
                est.into_iter()
                    .map(|e| Detection {
                        range,
                        velocity,
                        angles: crate::geometry::SteeringAngles {
                            theta: e.theta,
                            phi: e.phi,
                        },
                        alpha,
                        beta,
                        peak: e.peak,
                    })
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    let dets: Vec<Detection> = per_cell.into_iter().flatten().collect();
    let mut cloud = reconstruct(&dets, bs_position);
    cloud.sort_by_provenance();
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_rx, SnrSpec};
    use crate::geometry::{
        direction_cosines, steering_matrix, ArrayRole, PhaseConvention, SteeringAngles, UpaLayout,
    };
    use crate::rdm::divide_grid;
    use crate::scene::{scatterer_truth, Scatterer, Scene, DEFAULT_BS_POSITION};
    use crate::waveform::build_resource_grid;

    fn cell(targets: &[(f64, f64)]) -> CellManifold {
        let lay = UpaLayout::new(16, 16, 1.0, ArrayRole::Virtual).unwrap();
        let mut v = Array2::<Complex64>::zeros((16, 16));
        for &(t, p) in targets {
            v = v + steering_matrix(&lay, SteeringAngles::new(t, p).unwrap(), PhaseConvention::default());
        }
        CellManifold::new(v)
    }

    fn argmax(a: &Array2<f64>) -> (usize, usize) {
        let mut best = ((0, 0), f64::MIN);
        for (idx, &v) in a.indexed_iter() {
            if v > best.1 {
                best = (idx, v);
            }
        }
        best.0
    }

    #[test]
    fn boresight_peaks_at_dc() {
        let s = fft_angle_spectrum(&cell(&[(90.0, 90.0)]), 1, 1.0).unwrap();
        let (i, j) = argmax(&s.values);
        assert_eq!((s.u_axis[i], s.w_axis[j]), (0.0, 0.0));
        assert!((s.values[[i, j]] - 256.0).abs() < 1e-9);
    }

    #[test]
    fn peak_bin_follows_direction_cosines() {
        for &(t, p) in &[(60.0, 40.0), (120.0, 70.0), (75.0, 130.0), (100.0, 110.0)] {
            for pad in [1, 4] {
                let s = fft_angle_spectrum(&cell(&[(t, p)]), pad, 1.0).unwrap();
                let (i, j) = argmax(&s.values);
                let (u, w) = direction_cosines(SteeringAngles::new(t, p).unwrap(), PhaseConvention::default());
                let bin = 2.0 / (16 * pad) as f64;
                assert!((s.u_axis[i] - u).abs() <= bin, "u {} vs {u}", s.u_axis[i]);
                assert!((s.w_axis[j] - w).abs() <= bin, "w {} vs {w}", s.w_axis[j]);
            }
        }
    }

    #[test]
    fn angle_round_trip_within_bin() {
        let search = FftSearch::new(4);
        for &(t, p) in &[(60.0, 40.0), (120.0, 60.0), (80.0, 120.0), (45.0, 140.0)] {
            let est = estimate_doas_fft(&cell(&[(t, p)]), &search).unwrap();
            assert!(!est.is_empty());
            let (u, w) = direction_cosines(SteeringAngles::new(t, p).unwrap(), PhaseConvention::default());
            let (ue, we) = direction_cosines(
                SteeringAngles { theta: est[0].theta, phi: est[0].phi },
                PhaseConvention::default(),
            );
            let bin = 2.0 / 64.0;
            assert!((u - ue).abs() <= bin && (w - we).abs() <= bin, "{est:?} vs ({t}, {p})");
        }
    }

    #[test]
    fn unpadded_fft_merges_close_pair() {
        let search = FftSearch::new(1);
        let est = estimate_doas_fft(&cell(&[(85.0, 30.0), (90.0, 30.0)]), &search).unwrap();
        assert_eq!(est.len(), 1, "{est:?}");
    }

    #[test]
    fn well_separated_pair_gives_two_peaks() {
        let search = FftSearch::new(4);
        let est = estimate_doas_fft(&cell(&[(50.0, 60.0), (120.0, 60.0)]), &search).unwrap();
        assert_eq!(est.len(), 2, "{est:?}");
    }

    #[test]
    fn zero_padding_is_rejected() {
        assert!(fft_angle_spectrum(&cell(&[(90.0, 90.0)]), 0, 1.0).is_err());
    }

    fn image(scene: &Scene, snr: SnrSpec) -> PointCloud4D {
        let cfg = OfdmConfig {
            n_subcarriers: 64,
            n_slots: 4,
            ..OfdmConfig::full()
        };
        let grid = build_resource_grid(&cfg, 2).unwrap();
        let truths = scatterer_truth(scene).unwrap();
        let lay = UpaLayout::new(16, 16, 1.0, ArrayRole::Virtual).unwrap();
        let rx = synthesize_rx(&grid, &truths, &lay, &cfg, snr, 2).unwrap();
        let sg = divide_grid(&rx, &grid).unwrap();
        fft4d_image(&sg, &cfg, &CfarConfig::rdm_default(), &FftSearch::new(4), scene.bs_position).unwrap()
    }

    #[test]
    fn single_target_image() {
        let scene = Scene::new(
            vec![Scatterer { position: [30.0, 20.0, 35.0], velocity: 15.0, gain: 1.0 }],
            DEFAULT_BS_POSITION,
        )
        .unwrap();
        let cloud = image(&scene, SnrSpec::db(20.0));
        assert_eq!(cloud.len(), 1, "{:?}", cloud.points);
        let p = cloud.points[0];
        let err = ((p.x - 30.0).powi(2) + (p.y - 20.0).powi(2) + (p.z - 35.0).powi(2)).sqrt();
        // range bin ≈ 9.8 m at 64 subcarriers plus angle quantisation
        assert!(err < 12.0, "{p:?}");
    }

    #[test]
    fn empty_scene_gives_empty_cloud() {
        // bypasses validation, which rejects scenes without scatterers
        let scene = Scene { scatterers: vec![], bs_position: DEFAULT_BS_POSITION };
        assert!(image(&scene, SnrSpec::noiseless()).is_empty());
    }
}
