// SPDX-License-Identifier: Apache-2.0

//! Uniform planar arrays, the MIMO virtual aperture and the 2D steering model.
//!
//! Element `(p, q)` of a layout sits at `(p * spacing * d, q * spacing * d)`
//! in the array plane, with `d = λ/2`. Index `(0, 0)` is the reference
//! element. The `p` axis is world `+x`, the `q` axis is world `+z`, and the
//! boresight points along world `-y` (see [`crate::scene`]).
//!
//! For a direction `(θ, φ)` the phase of an element at in-plane offset
//! `(x, z)` relative to the reference is
//!
//! ```text
//! exp(-j 2π (x·u + z·w) / λ),   u = cosθ·cosφ,   w = sinθ·cosφ
//! ```
//!
//! so `(θ, φ) = (90°, 90°)` is boresight.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result, SPEED_OF_LIGHT};

const SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayRole {
    Transmit,
    Receive,
    Virtual,
}

/// Rectangular antenna grid. `spacing` is in multiples of `d = λ/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaLayout {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub role: ArrayRole,
}

impl UpaLayout {
    pub fn new(rows: usize, cols: usize, spacing: f64, role: ArrayRole) -> Result<Self> {
        let layout = UpaLayout {
            rows,
            cols,
            spacing,
            role,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!(
                "array must have at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::Config(format!(
                "array spacing must be positive, got {}",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element positions in units of `d`, row-major.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for p in 0..self.rows {
            for q in 0..self.cols {
                out.push((p as f64 * self.spacing, q as f64 * self.spacing));
            }
        }
        out
    }
}

/// Direction of arrival in degrees; both angles lie strictly inside (0°, 180°).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringAngles {
    pub theta: f64,
    pub phi: f64,
}

impl SteeringAngles {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        let ok = |a: f64| a > 0.0 && a < 180.0;
        if !ok(theta) || !ok(phi) {
            return Err(Error::Config(format!(
                "steering angles must lie in (0, 180) degrees, got theta={theta}, phi={phi}"
            )));
        }
        Ok(SteeringAngles { theta, phi })
    }

    pub const BORESIGHT: SteeringAngles = SteeringAngles {
        theta: 90.0,
        phi: 90.0,
    };
}

/// How the sign branches of the phase model are resolved.
///
/// `DirectionCosine` uses `u = cosθ cosφ, w = sinθ cosφ` everywhere, which is
/// one-to-one over the front hemisphere. `PrintedBranches` applies the
/// four-quadrant `ξ`/`ψ` sign table literally: the exponent is multiplied by
/// `ξ` (−1 when θ > 90°) and the `q` term by `ψ`. That table maps θ and
/// 180° − θ onto the same phases, so it cannot be inverted; it is kept for
/// comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseConvention {
    #[default]
    DirectionCosine,
    PrintedBranches,
}

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Effective spatial frequencies `(u, w)` along the `p` and `q` axes.
pub fn direction_cosines(angles: SteeringAngles, convention: PhaseConvention) -> (f64, f64) {
    let (st, ct) = angles.theta.to_radians().sin_cos();
    let cp = angles.phi.to_radians().cos();
    match convention {
        PhaseConvention::DirectionCosine => (ct * cp, st * cp),
        PhaseConvention::PrintedBranches => {
            // Exactly 90° falls on the "< 90°" side; the cosine factor vanishes there.
            let theta_high = angles.theta > 90.0;
            let phi_high = angles.phi > 90.0;
            let xi = if theta_high { -1.0 } else { 1.0 };
            let psi = if theta_high == phi_high { 1.0 } else { -1.0 };
            (xi * ct * cp, xi * psi * st * cp)
        }
    }
}

/// Inverse of [`direction_cosines`] for [`PhaseConvention::DirectionCosine`].
///
/// Returns `None` for non-physical spatial frequencies (`u² + w² > 1`).
pub fn angles_from_direction_cosines(u: f64, w: f64) -> Option<SteeringAngles> {
    let r = u.hypot(w);
    if !r.is_finite() || r > 1.0 + 1e-12 {
        return None;
    }
    let r = r.min(1.0);
    if r < 1e-15 {
        return Some(SteeringAngles::BORESIGHT);
    }
    let (cos_phi, theta) = if w >= 0.0 {
        (r, w.atan2(u))
    } else {
        (-r, (-w).atan2(-u))
    };
    let eps = 1e-9;
    Some(SteeringAngles {
        theta: theta.to_degrees().clamp(eps, 180.0 - eps),
        phi: cos_phi.acos().to_degrees().clamp(eps, 180.0 - eps),
    })
}

/// Phase of an element at in-plane offset `(x, z)` metres from the reference.
pub fn phase_at(
    x: f64,
    z: f64,
    angles: SteeringAngles,
    lambda: f64,
    convention: PhaseConvention,
) -> Complex64 {
    let (u, w) = direction_cosines(angles, convention);
    Complex64::from_polar(1.0, -2.0 * PI * (x * u + z * w) / lambda)
}

/// Phase of virtual element `(p, q)` (0-based) relative to element `(0, 0)`.
pub fn steering_phase(
    p: usize,
    q: usize,
    angles: SteeringAngles,
    d: f64,
    lambda: f64,
    convention: PhaseConvention,
) -> Complex64 {
    phase_at(p as f64 * d, q as f64 * d, angles, lambda, convention)
}

/// `rows × cols` matrix of element phases for one direction.
pub fn steering_matrix(
    layout: &UpaLayout,
    angles: SteeringAngles,
    convention: PhaseConvention,
) -> Array2<Complex64> {
    let (col, row) = row_col_manifolds(layout, angles, convention);
    Array2::from_shape_fn((layout.rows, layout.cols), |(p, q)| col[p] * row[q])
}

/// Column 0 and row 0 of the steering matrix: the 1D manifolds along `p` and `q`.
pub fn row_col_manifolds(
    layout: &UpaLayout,
    angles: SteeringAngles,
    convention: PhaseConvention,
) -> (Array1<Complex64>, Array1<Complex64>) {
    let (u, w) = direction_cosines(angles, convention);
    (
        axis_manifold(layout.rows, layout.spacing, u),
        axis_manifold(layout.cols, layout.spacing, w),
    )
}

/// `exp(-j π spacing k s)` for `k = 0..len`, i.e. a ULA with `d = λ/2`.
pub fn axis_manifold(len: usize, spacing: f64, spatial_freq: f64) -> Array1<Complex64> {
    Array1::from_shape_fn(len, |k| {
        Complex64::from_polar(1.0, -PI * spacing * k as f64 * spatial_freq)
    })
}

/// Virtual receive array formed by all pairwise sums of Tx and Rx element positions.
///
/// The sums must tile a uniform grid at the Rx spacing with no duplicates and
/// no gaps, e.g. Tx 2×2 at 8d with Rx 8×8 at d gives 16×16 at d.
pub fn build_virtual_array(tx: &UpaLayout, rx: &UpaLayout) -> Result<UpaLayout> {
    tx.validate()?;
    rx.validate()?;
    let rows = tx.rows * rx.rows;
    let cols = tx.cols * rx.cols;
    let step = rx.spacing;

    let mut seen = vec![false; rows * cols];
    for (tp, tq) in tx.positions() {
        for (rp, rq) in rx.positions() {
            let (pi, qi) = match (grid_index(tp + rp, step), grid_index(tq + rq, step)) {
                (Some(pi), Some(qi)) if pi < rows && qi < cols => (pi, qi),
                _ => {
                    return Err(Error::Config(format!(
                        "Tx {}x{}@{}d and Rx {}x{}@{}d leave gaps in the virtual array",
                        tx.rows, tx.cols, tx.spacing, rx.rows, rx.cols, rx.spacing
                    )))
                }
            };
            let slot = &mut seen[pi * cols + qi];
            if *slot {
                return Err(Error::Config(format!(
                    "Tx {}x{}@{}d and Rx {}x{}@{}d produce overlapping virtual elements",
                    tx.rows, tx.cols, tx.spacing, rx.rows, rx.cols, rx.spacing
                )));
            }
            *slot = true;
        }
    }
    UpaLayout::new(rows, cols, step, ArrayRole::Virtual)
}

fn grid_index(pos: f64, step: f64) -> Option<usize> {
    let k = pos / step;
    let r = k.round();
    ((k - r).abs() < SPACING_TOL && r >= 0.0).then_some(r as usize)
}
