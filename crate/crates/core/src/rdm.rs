// SPDX-License-Identifier: Apache-2.0

//! Symbol division and the 2D-FFT range-Doppler map.
//!
//! Rows are range bins (IDFT over subcarriers, scaled by `1/N_c`), columns are
//! Doppler bins (unscaled DFT over symbols) in natural FFT order. Only the CSV
//! export shifts the Doppler axis so zero velocity sits in the middle.

use ndarray::{s, Array2, Array4, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::channel::VirtualArraySnapshot;
use crate::waveform::{OfdmConfig, SymbolGrid};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Bin-to-physical scale of a range-Doppler map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdmAxes {
    pub n_range: usize,
    pub n_doppler: usize,
    /// metres per range bin, `c / (2 Δf N_c)`
    pub range_step: f64,
    /// m/s per Doppler bin, `c / (2 f_c T_OFDM N_sym)`
    pub velocity_step: f64,
}

impl RdmAxes {
    pub fn new(cfg: &OfdmConfig) -> Self {
        let n_range = cfg.n_subcarriers;
        let n_doppler = cfg.n_symbols();
        RdmAxes {
            n_range,
            n_doppler,
            range_step: SPEED_OF_LIGHT / (2.0 * cfg.subcarrier_spacing_hz * n_range as f64),
            velocity_step: SPEED_OF_LIGHT
                / (2.0 * cfg.carrier_hz * cfg.symbol_duration_s() * n_doppler as f64),
        }
    }

    pub fn range(&self, alpha: usize) -> f64 {
        alpha as f64 * self.range_step
    }

    /// Velocity of Doppler bin `beta`; the upper half maps to negative velocities.
    pub fn velocity(&self, beta: usize) -> f64 {
        self.signed_doppler(beta) as f64 * self.velocity_step
    }

    pub fn signed_doppler(&self, beta: usize) -> i64 {
        let n = self.n_doppler as i64;
        let b = beta as i64;
        if b < (n + 1) / 2 {
            b
        } else {
            b - n
        }
    }

    /// Unambiguous range `c / (2 Δf)`.
    pub fn max_range(&self) -> f64 {
        self.range_step * self.n_range as f64
    }
}

/// Range and velocity of bin `(alpha, beta)`.
pub fn bin_to_physical(alpha: usize, beta: usize, cfg: &OfdmConfig) -> (f64, f64) {
    let axes = RdmAxes::new(cfg);
    (axes.range(alpha), axes.velocity(beta))
}

/// Predicted peak bins `α = ⌊2RΔfN_c/c⌋`, `β = ⌊2v f_c T_OFDM N_sym/c⌋ mod N_sym`.
pub fn peak_bins(range: f64, velocity: f64, cfg: &OfdmConfig) -> (usize, usize) {
    let n_c = cfg.n_subcarriers as f64;
    let n_sym = cfg.n_symbols() as i64;
    let alpha = (2.0 * range * cfg.subcarrier_spacing_hz * n_c / SPEED_OF_LIGHT).floor();
    let beta = (2.0 * velocity * cfg.carrier_hz * cfg.symbol_duration_s() * n_sym as f64
        / SPEED_OF_LIGHT)
        .floor() as i64;
    (
        (alpha as i64).rem_euclid(cfg.n_subcarriers as i64) as usize,
        beta.rem_euclid(n_sym) as usize,
    )
}

/// Complex range-Doppler map of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    pub complex_map: Array2<Complex64>,
    pub axes: RdmAxes,
}

impl Rdm {
    pub fn magnitude(&self) -> Array2<f64> {
        self.complex_map.mapv(|z| z.norm())
    }

    pub fn power(&self) -> Array2<f64> {
        self.complex_map.mapv(|z| z.norm_sqr())
    }
}

/// Square-law map averaged over elements; the OSCA-CFAR input.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedRdm {
    pub power: Array2<f64>,
    pub axes: RdmAxes,
    pub elements: usize,
}

impl IntegratedRdm {
    pub fn empty(axes: RdmAxes) -> Self {
        IntegratedRdm {
            power: Array2::zeros((axes.n_range, axes.n_doppler)),
            axes,
            elements: 0,
        }
    }

    /// Add one element's map. Callers add elements in a fixed order so the
    /// floating-point sum is reproducible.
    pub fn accumulate(&mut self, rdm: &Rdm) {
        self.power
            .zip_mut_with(&rdm.complex_map, |acc, z| *acc += z.norm_sqr());
        self.elements += 1;
    }

    /// Divide the running sum by the element count.
    pub fn finish(mut self) -> Self {
        if self.elements > 0 {
            let k = self.elements as f64;
            self.power.mapv_inplace(|x| x / k);
        }
        self
    }
}

/// Taper applied along subcarriers and symbols before the two transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RdmWindow {
    /// no weighting; matches the plain 2D-FFT map
    Rectangular,
    /// periodic Hann, about −31 dB first sidelobe
    ///
    /// The default: with rectangular weighting an off-bin mover leaves a
    /// Doppler sidelobe ridge that clears the CFAR at moderate SNR and shows
    /// up as points at absurd velocities.
    #[default]
    Hann,
}

impl RdmWindow {
    /// `None` for the rectangular window so the unweighted path stays bit-exact.
    pub fn weights(self, n: usize) -> Option<Vec<f64>> {
        match self {
            RdmWindow::Rectangular => None,
            RdmWindow::Hann => Some(
                (0..n)
                    .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
                    .collect(),
            ),
        }
    }
}

impl std::str::FromStr for RdmWindow {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" => Ok(RdmWindow::Rectangular),
            "hann" => Ok(RdmWindow::Hann),
            other => Err(Error::Config(format!("unknown RDM window `{other}`"))),
        }
    }
}

/// Reusable FFT plans for one grid size.
pub struct RdmProcessor {
    axes: RdmAxes,
    /// subcarrier and symbol weights
    taper: Option<(Vec<f64>, Vec<f64>)>,
    range_ifft: Arc<dyn Fft<f64>>,
    doppler_fft: Arc<dyn Fft<f64>>,
}

impl RdmProcessor {
    pub fn new(cfg: &OfdmConfig) -> Self {
        Self::with_window(cfg, RdmWindow::Rectangular)
    }

    pub fn with_window(cfg: &OfdmConfig, window: RdmWindow) -> Self {
        let axes = RdmAxes::new(cfg);
        let mut planner = FftPlanner::new();
        let taper = window
            .weights(axes.n_range)
            .zip(window.weights(axes.n_doppler));
        RdmProcessor {
            axes,
            taper,
            range_ifft: planner.plan_fft_inverse(axes.n_range),
            doppler_fft: planner.plan_fft_forward(axes.n_doppler),
        }
    }

    pub fn axes(&self) -> RdmAxes {
        self.axes
    }

    /// IDFT (with `1/N_c`) along subcarriers, then DFT along symbols.
    pub fn process(&self, s_g: ArrayView2<Complex64>) -> Rdm {
        assert_eq!(s_g.dim(), (self.axes.n_range, self.axes.n_doppler));
        let scale = 1.0 / self.axes.n_range as f64;
        // symbols × subcarriers so the range transform runs over contiguous rows
        let mut by_symbol = s_g.t().as_standard_layout().into_owned();
        if let Some((w_range, w_doppler)) = &self.taper {
            for (mut row, &wm) in by_symbol.outer_iter_mut().zip(w_doppler) {
                row.iter_mut().zip(w_range).for_each(|(z, &wn)| *z *= wn * wm);
            }
        }
        for mut row in by_symbol.outer_iter_mut() {
            let buf = row.as_slice_mut().expect("standard layout");
            self.range_ifft.process(buf);
            buf.iter_mut().for_each(|z| *z *= scale);
        }
        let mut map = by_symbol.t().as_standard_layout().into_owned();
        for mut row in map.outer_iter_mut() {
            self.doppler_fft
                .process(row.as_slice_mut().expect("standard layout"));
        }
        Rdm {
            complex_map: map,
            axes: self.axes,
        }
    }
}

/// `s_g = rx / s_Tx` for one element.
pub fn divide_element(rx: ArrayView2<Complex64>, grid: &SymbolGrid) -> Array2<Complex64> {
    assert_eq!(rx.dim(), grid.values.dim());
    let mut out = rx.to_owned();
    out.zip_mut_with(&grid.values, |z, s| {
        debug_assert!(s.norm_sqr() > 0.0, "resource grid has a zero symbol");
        *z /= s;
    });
    out
}

/// `s_g(n,m,p,q) = rx(n,m,p,q) / s_Tx(n,m)` over the whole tensor.
pub fn divide_grid(rx: &VirtualArraySnapshot, grid: &SymbolGrid) -> Result<Array4<Complex64>> {
    let (n_c, n_sym, _, _) = rx.values.dim();
    if (n_c, n_sym) != grid.values.dim() {
        return Err(Error::Config(format!(
            "snapshot grid ({n_c}, {n_sym}) does not match symbol grid {:?}",
            grid.values.dim()
        )));
    }
    let mut out = rx.values.clone();
    for ((n, m, _, _), z) in out.indexed_iter_mut() {
        *z /= grid.values[[n, m]];
    }
    Ok(out)
}

/// RDM of one element grid.
pub fn compute_rdm(s_g_element: ArrayView2<Complex64>, cfg: &OfdmConfig) -> Rdm {
    RdmProcessor::new(cfg).process(s_g_element)
}

/// Per-element RDMs of a divided tensor `(n_c, n_sym, P, Q)`, row-major over `(p, q)`.
pub fn element_rdms(s_g: &Array4<Complex64>, cfg: &OfdmConfig) -> Vec<Rdm> {
    let proc_ = RdmProcessor::new(cfg);
    let (_, _, rows, cols) = s_g.dim();
    (0..rows * cols)
        .map(|i| proc_.process(s_g.slice(s![.., .., i / cols, i % cols])))
        .collect()
}

/// Non-coherent (square-law) integration over all elements of a divided tensor.
pub fn integrate_elements(s_g: &Array4<Complex64>, cfg: &OfdmConfig) -> IntegratedRdm {
    let rdms = element_rdms(s_g, cfg);
    let mut acc = IntegratedRdm::empty(RdmAxes::new(cfg));
    for r in &rdms {
        acc.accumulate(r);
    }
    acc.finish()
}

/// CSV with the velocity axis in the first row and the range axis in the first
/// column. Doppler columns are reordered from most negative to most positive.
pub fn map_to_csv(map: ArrayView2<f64>, axes: &RdmAxes) -> String {
    let order = shifted_doppler_order(axes.n_doppler);
    let mut out = String::from("range_m\\velocity_mps");
    for &b in &order {
        let _ = write!(out, ",{}", axes.velocity(b));
    }
    out.push('\n');
    for (alpha, row) in map.axis_iter(Axis(0)).enumerate() {
        let _ = write!(out, "{}", axes.range(alpha));
        for &b in &order {
            let _ = write!(out, ",{}", row[b]);
        }
        out.push('\n');
    }
    out
}

fn shifted_doppler_order(n: usize) -> Vec<usize> {
    let half = n.div_ceil(2);
    (half..n).chain(0..half).collect()
}
