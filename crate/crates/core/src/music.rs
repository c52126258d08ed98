// SPDX-License-Identifier: Apache-2.0

//! Per-cell 2D MUSIC over the virtual array.
//!
//! One detected RDM cell gives a single `P × Q` snapshot of the planar array.
//! Its `Q` columns are used as snapshots of the `P`-element array along the
//! `p` axis (and its rows as snapshots along `q`). Each 1D covariance is
//! forward-backward smoothed, split into signal and noise subspaces, and turned
//! into a pseudo-spectrum over the same `(θ, φ)` grid. The two spectra are
//! normalised and multiplied; CA-CFAR plus local-maxima picking on the product
//! yields the angle estimates.
//!
//! Each grid cell holds the maximum of a 1D spectrum over the cell's spatial
//! frequency interval rather than a point sample. At high processing gain the
//! MUSIC peaks are far narrower than a 0.5° step and point samples miss them.
//!
//! Because the column spectrum depends only on `u = cosθ cosφ` and the row
//! spectrum only on `w = sinθ cosφ`, two sources in one cell can also produce
//! ghost peaks at the mixed `(u₁, w₂)`, `(u₂, w₁)` pairs. Peaks are ranked by
//! the 2D beam power of the cell at their exact position, which favours the
//! true pairs.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, Array4, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::cfar::{ca_cfar_1d, ca_cfar_2d, local_maxima, CfarConfig};
use crate::geometry::{
    angles_from_direction_cosines, axis_manifold, direction_cosines, PhaseConvention, SteeringAngles,
};
use crate::{Error, Result};

const DENOMINATOR_FLOOR: f64 = 1e-15;
const EIGEN_FLOOR: f64 = 1e-10;

/// Complex RDM value of every virtual element at one detected cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellManifold {
    pub values: Array2<Complex64>,
}

impl CellManifold {
    pub fn new(values: Array2<Complex64>) -> Self {
        CellManifold { values }
    }

    /// Columns as snapshots of the array along `p`: `P × Q`.
    pub fn column_snapshots(&self) -> ArrayView2<'_, Complex64> {
        self.values.view()
    }

    /// Rows as snapshots of the array along `q`: `Q × P`.
    pub fn row_snapshots(&self) -> ArrayView2<'_, Complex64> {
        self.values.t()
    }
}

/// RDM value at `(alpha, beta)` of every element of a divided tensor,
/// evaluated as a single-bin 2D DFT with the RDM's scaling.
pub fn extract_cell_manifold(s_g: &Array4<Complex64>, alpha: usize, beta: usize) -> CellManifold {
    let (n_c, n_sym, rows, cols) = s_g.dim();
    let range_tw: Array1<Complex64> = Array1::from_shape_fn(n_c, |n| {
        Complex64::from_polar(1.0 / n_c as f64, 2.0 * PI * (n * alpha % n_c) as f64 / n_c as f64)
    });
    let doppler_tw: Array1<Complex64> = Array1::from_shape_fn(n_sym, |m| {
        Complex64::from_polar(1.0, -2.0 * PI * (m * beta % n_sym) as f64 / n_sym as f64)
    });
    let values = Array2::from_shape_fn((rows, cols), |(p, q)| {
        let e = s_g.slice(s![.., .., p, q]);
        range_tw.dot(&e.dot(&doppler_tw))
    });
    CellManifold { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub subarray_len: usize,
    pub use_backward: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            subarray_len: 8,
            use_backward: true,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self, sensors: usize) -> Result<()> {
        if self.subarray_len == 0 || self.subarray_len > sensors {
            return Err(Error::Config(format!(
                "subarray length {} must lie in 1..={sensors}",
                self.subarray_len
            )));
        }
        Ok(())
    }
}

/// Forward(-backward) spatially smoothed covariance, `L_sub × L_sub`.
pub fn smooth_covariance(
    snapshots: ArrayView2<Complex64>,
    cfg: &SmoothingConfig,
) -> Result<Array2<Complex64>> {
    let (sensors, n_snap) = snapshots.dim();
    cfg.validate(sensors)?;
    if n_snap == 0 {
        return Err(Error::Config("no snapshots".into()));
    }
    let l = cfg.subarray_len;
    let n_sub = sensors - l + 1;
    let mut r = Array2::<Complex64>::zeros((l, l));
    for start in 0..n_sub {
        let x = snapshots.slice(s![start..start + l, ..]);
        let xh = x.t().mapv(|z| z.conj());
        r += &x.dot(&xh);
    }
    r /= Complex64::new((n_sub * n_snap) as f64, 0.0);
    if cfg.use_backward {
        // J conj(R) J
        let rb = Array2::from_shape_fn((l, l), |(i, j)| r[[l - 1 - i, l - 1 - j]].conj());
        r = (r + rb) * Complex64::new(0.5, 0.0);
    }
    // exact Hermitian symmetry
    let rh = r.t().mapv(|z| z.conj());
    Ok((&r + &rh) * Complex64::new(0.5, 0.0))
}

/// Eigen-split of a smoothed covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSubspace {
    /// `L × (L − N_x)`, eigenvectors of the smallest eigenvalues
    pub basis: Array2<Complex64>,
    /// descending
    pub eigenvalues: Vec<f64>,
    pub n_sources: usize,
}

/// Eigendecompose `r_x`, count sources by 1D CA-CFAR over the eigenvalues and
/// return the noise-subspace basis. `N_x` is clamped to `[1, L − 1]`.
pub fn noise_subspace(r_x: &Array2<Complex64>, cfar: &CfarConfig) -> Result<NoiseSubspace> {
    let (l, l2) = r_x.dim();
    if l != l2 || l < 2 {
        return Err(Error::Config(format!(
            "covariance must be square with size ≥ 2, got {l}x{l2}"
        )));
    }
    let m = DMatrix::from_fn(l, l, |i, j| r_x[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lmax = eigenvalues[0];
    let n_sources = if !(lmax.is_finite() && lmax > 0.0) {
        log::warn!("degenerate covariance (largest eigenvalue {lmax}); assuming one source");
        1
    } else {
        let floored: Vec<f64> = eigenvalues
            .iter()
            .map(|&v| v.max(EIGEN_FLOOR * lmax))
            .collect();
        ca_cfar_1d(&floored, cfar).clamp(1, l - 1)
    };
    let basis = Array2::from_shape_fn((l, l - n_sources), |(i, k)| {
        eig.eigenvectors[(i, order[n_sources + k])]
    });
    Ok(NoiseSubspace {
        basis,
        eigenvalues,
        n_sources,
    })
}

/// Search grid over `(θ, φ)` in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl AngleGrid {
    /// `step, 2·step, …` strictly inside `(0°, 180°)` on both axes.
    pub fn uniform(step: f64) -> Result<Self> {
        if !(step > 0.0 && step < 90.0) {
            return Err(Error::Config(format!("angle grid step {step} outside (0, 90)")));
        }
        let n = ((180.0 / step) - 1e-9).floor() as usize;
        let axis: Vec<f64> = (1..=n).map(|k| k as f64 * step).filter(|&a| a < 180.0).collect();
        Ok(AngleGrid {
            theta: axis.clone(),
            phi: axis,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.theta.len(), self.phi.len())
    }
}

/// Pseudo-spectrum sampled on an [`AngleGrid`]; rows follow `theta`, columns `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSpectrum {
    pub values: Array2<f64>,
    pub theta_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
}

impl PseudoSpectrum {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn normalized(&self) -> PseudoSpectrum {
        let m = self.max();
        PseudoSpectrum {
            values: self.values.mapv(|v| v / m),
            ..self.clone()
        }
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = ((0, 0), f64::MIN);
        for (idx, &v) in self.values.indexed_iter() {
            if v > best.1 {
                best = (idx, v);
            }
        }
        best.0
    }

    /// CSV with `phi` in the header row and `theta` in the first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg\\phi_deg");
        for p in &self.phi_grid {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
        for (t, row) in self.theta_grid.iter().zip(self.values.axis_iter(Axis(0))) {
            let _ = write!(out, "{t}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// `S(θ, φ) = 1 / ‖U_Nᴴ a(θ, φ)‖²` over the grid.
pub fn pseudo_spectrum_1d<F>(u_n: &Array2<Complex64>, manifold: F, grid: &AngleGrid) -> PseudoSpectrum
where
    F: Fn(SteeringAngles) -> Array1<Complex64> + Sync,
{
    let (nt, np) = grid.dim();
    let u_h = u_n.t().mapv(|z| z.conj());
    let mut values = Array2::<f64>::zeros((nt, np));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, v) in row.iter_mut().enumerate() {
                let a = manifold(SteeringAngles {
                    theta: grid.theta[i],
                    phi: grid.phi[j],
                });
                let proj = u_h.dot(&a);
                let den: f64 = proj.iter().map(|z| z.norm_sqr()).sum();
                *v = 1.0 / den.max(DENOMINATOR_FLOOR);
            }
        });
    PseudoSpectrum {
        values,
        theta_grid: grid.theta.clone(),
        phi_grid: grid.phi.clone(),
    }
}

/// One angle estimate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub theta: f64,
    pub phi: f64,
    /// product-spectrum value at the grid peak (normalised, ≤ 1)
    pub peak: f64,
}

/// Settings of the per-cell angle search.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaSearch {
    pub smoothing: SmoothingConfig,
    pub spectrum_cfar: CfarConfig,
    pub eigen_cfar: CfarConfig,
    pub grid: AngleGrid,
    /// element spacing in units of `d = λ/2`
    pub spacing: f64,
    pub convention: PhaseConvention,
}

impl DoaSearch {
    pub fn new(grid_step: f64) -> Result<Self> {
        Ok(DoaSearch {
            smoothing: SmoothingConfig::default(),
            spectrum_cfar: CfarConfig::spectrum_default(),
            eigen_cfar: CfarConfig::eigen_default(),
            grid: AngleGrid::uniform(grid_step)?,
            spacing: 1.0,
            convention: PhaseConvention::default(),
        })
    }
}

/// Everything computed for one cell.
#[derive(Debug, Clone)]
pub struct CellAnalysis {
    pub estimates: Vec<DoaEstimate>,
    pub column: NoiseSubspace,
    pub row: NoiseSubspace,
    /// normalised Hadamard product of the column and row spectra
    pub spectrum: PseudoSpectrum,
}

/// Full per-cell MUSIC analysis.
pub fn analyze_cell(cell: &CellManifold, search: &DoaSearch) -> Result<CellAnalysis> {
    let r_col = smooth_covariance(cell.column_snapshots(), &search.smoothing)?;
    let r_row = smooth_covariance(cell.row_snapshots(), &search.smoothing)?;
    let column = noise_subspace(&r_col, &search.eigen_cfar)?;
    let row = noise_subspace(&r_row, &search.eigen_cfar)?;
    let conv = search.convention;
    let col_null = AxisNull::new(&column.basis, search.spacing);
    let row_null = AxisNull::new(&row.basis, search.spacing);
    let (s_col, x_col) = col_null.cell_maxima(&search.grid, |a| direction_cosines(a, conv).0);
    let (s_row, x_row) = row_null.cell_maxima(&search.grid, |a| direction_cosines(a, conv).1);
    let spectrum = PseudoSpectrum {
        values: &s_col.values * &s_row.values,
        ..s_col
    }
    .normalized();

    let mask = ca_cfar_2d(spectrum.values.view(), &search.spectrum_cfar)?;
    // The 1D spectra cannot tell (u₁, w₁) from the ghost (u₁, w₂); the 2D beam
    // power at each peak can, so it decides which peaks are kept. Peaks on one
    // plateau refine to the same point and are merged.
    let mut candidates: Vec<(DoaEstimate, f64)> = local_maxima(spectrum.values.view(), &mask.detected)
        .into_iter()
        .map(|(i, j)| {
            let (u, w) = (x_col[[i, j]], x_row[[i, j]]);
            (refine_peak(&spectrum, i, j, u, w, conv), beam_power(cell, search.spacing, u, w))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.peak.total_cmp(&a.0.peak)));
    let merge = grid_step(&search.grid);
    let mut estimates: Vec<DoaEstimate> = Vec::new();
    for (e, _) in candidates {
        if estimates.len() == column.n_sources.max(row.n_sources) {
            break;
        }
        let dup = estimates
            .iter()
            .any(|k| (k.theta - e.theta).abs() <= merge && (k.phi - e.phi).abs() <= merge);
        if !dup {
            estimates.push(e);
        }
    }
    Ok(CellAnalysis {
        estimates,
        column,
        row,
        spectrum,
    })
}

/// Angle estimates for one cell; empty when nothing clears the CFAR.
pub fn estimate_doas(cell: &CellManifold, search: &DoaSearch) -> Result<Vec<DoaEstimate>> {
    Ok(analyze_cell(cell, search)?.estimates)
}

/// `|a_P(u)ᴴ X a_Q(w)*|²` for the cell's `P × Q` snapshot `X`.
fn beam_power(cell: &CellManifold, spacing: f64, u: f64, w: f64) -> f64 {
    let (rows, cols) = cell.values.dim();
    let a_u = axis_manifold(rows, spacing, u).mapv(|z| z.conj());
    let a_w = axis_manifold(cols, spacing, w).mapv(|z| z.conj());
    a_u.dot(&cell.values.dot(&a_w)).norm_sqr()
}

/// Smallest spacing of either grid axis.
fn grid_step(grid: &AngleGrid) -> f64 {
    grid.theta
        .windows(2)
        .chain(grid.phi.windows(2))
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Angles of the exact 1D maxima found in cell `(i, j)`; the grid point when
/// the pair is non-physical or the convention has no inverse.
fn refine_peak(
    s: &PseudoSpectrum,
    i: usize,
    j: usize,
    u: f64,
    w: f64,
    conv: PhaseConvention,
) -> DoaEstimate {
    let refined = match conv {
        PhaseConvention::DirectionCosine => angles_from_direction_cosines(u, w),
        PhaseConvention::PrintedBranches => None,
    };
    let (theta, phi) = refined.map_or((s.theta_grid[i], s.phi_grid[j]), |a| (a.theta, a.phi));
    DoaEstimate {
        theta,
        phi,
        peak: s.values[[i, j]],
    }
}

/// Null-space projection `‖U_Nᴴ a(x)‖²` of one array axis, kept as a
/// trigonometric polynomial in the spatial frequency `x`.
struct AxisNull {
    /// `c_k` for lags `k = 0 … L−1`; negative lags are conjugates
    coeffs: Vec<Complex64>,
    spacing: f64,
    /// exact local maxima of the spectrum on `[-1, 1]`, sorted by position
    peaks: Vec<(f64, f64)>,
}

const PEAK_SCAN: usize = 4096;
const GOLDEN_ITERS: usize = 80;

impl AxisNull {
    fn new(basis: &Array2<Complex64>, spacing: f64) -> Self {
        let l = basis.nrows();
        let proj = basis.dot(&basis.t().mapv(|z| z.conj()));
        let coeffs = (0..l)
            .map(|k| (k..l).map(|i| proj[[i, i - k]]).sum())
            .collect();
        let mut out = AxisNull {
            coeffs,
            spacing,
            peaks: Vec::new(),
        };
        out.peaks = out.find_peaks();
        out
    }

    fn spectrum(&self, x: f64) -> f64 {
        let base = PI * self.spacing * x;
        let mut den = self.coeffs[0].re;
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            den += 2.0 * (c * Complex64::from_polar(1.0, base * k as f64)).re;
        }
        1.0 / den.max(DENOMINATOR_FLOOR)
    }

    fn find_peaks(&self) -> Vec<(f64, f64)> {
        let xs: Vec<f64> = (0..=PEAK_SCAN)
            .map(|k| -1.0 + 2.0 * k as f64 / PEAK_SCAN as f64)
            .collect();
        let vals: Vec<f64> = xs.iter().map(|&x| self.spectrum(x)).collect();
        let mut peaks = Vec::new();
        for k in 0..=PEAK_SCAN {
            let left = k == 0 || vals[k] >= vals[k - 1];
            let right = k == PEAK_SCAN || vals[k] > vals[k + 1];
            if left && right {
                let lo = xs[k.saturating_sub(1)];
                let hi = xs[(k + 1).min(PEAK_SCAN)];
                let x = self.golden_max(lo, hi);
                peaks.push((x, self.spectrum(x)));
            }
        }
        peaks
    }

    fn golden_max(&self, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.spectrum(c), self.spectrum(d));
        for _ in 0..GOLDEN_ITERS {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.spectrum(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.spectrum(d);
            }
        }
        0.5 * (a + b)
    }

    /// Maximum over each grid cell and where it is reached.
    ///
    /// A cell spans half a step either side of its grid point. Its spatial
    /// frequencies form the interval between the extremes of a 3×3 half-step
    /// lattice (the frequency is monotone in each angle apart from kinks on
    /// the 90° lines), so the maximum is at an interval end or at an exact
    /// 1D peak inside it. Super-resolved peaks narrower than the grid step are
    /// therefore never lost between samples.
    fn cell_maxima<F>(&self, grid: &AngleGrid, freq: F) -> (PseudoSpectrum, Array2<f64>)
    where
        F: Fn(SteeringAngles) -> f64 + Sync,
    {
        let tl = half_step_lattice(&grid.theta);
        let pl = half_step_lattice(&grid.phi);
        let x = Array2::from_shape_fn((tl.len(), pl.len()), |(a, b)| {
            freq(SteeringAngles {
                theta: tl[a],
                phi: pl[b],
            })
        });
        let sx = x.mapv(|v| self.spectrum(v));
        let (nt, np) = grid.dim();
        let mut values = Array2::<f64>::zeros((nt, np));
        let mut at = Array2::<f64>::zeros((nt, np));
        values
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(at.axis_iter_mut(Axis(0)).into_par_iter())
            .enumerate()
            .for_each(|(i, (mut vrow, mut arow))| {
                for j in 0..np {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    let mut best = (f64::NEG_INFINITY, 0.0);
                    for a in 2 * i..=2 * i + 2 {
                        for b in 2 * j..=2 * j + 2 {
                            let xv = x[[a, b]];
                            lo = lo.min(xv);
                            hi = hi.max(xv);
                            if sx[[a, b]] > best.0 {
                                best = (sx[[a, b]], xv);
                            }
                        }
                    }
                    let first = self.peaks.partition_point(|p| p.0 < lo);
                    for &(px, pv) in self.peaks[first..].iter().take_while(|p| p.0 <= hi) {
                        if pv > best.0 {
                            best = (pv, px);
                        }
                    }
                    vrow[j] = best.0;
                    arow[j] = best.1;
                }
            });
        let spectrum = PseudoSpectrum {
            values,
            theta_grid: grid.theta.clone(),
            phi_grid: grid.phi.clone(),
        }
        .normalized();
        (spectrum, at)
    }
}

/// Cell edges and centres interleaved: `e₀, g₀, e₁, g₁, …, eₙ`, edges clamped to `[0°, 180°]`.
fn half_step_lattice(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut out = Vec::with_capacity(2 * n + 1);
    for k in 0..n {
        let lo = if k > 0 {
            0.5 * (g[k - 1] + g[k])
        } else if n > 1 {
            g[0] - 0.5 * (g[1] - g[0])
        } else {
            g[0]
        };
        out.push(lo.clamp(0.0, 180.0));
        out.push(g[k]);
    }
    let hi = if n > 1 { g[n - 1] + 0.5 * (g[n - 1] - g[n - 2]) } else { g[n - 1] };
    out.push(hi.clamp(0.0, 180.0));
    out
}
