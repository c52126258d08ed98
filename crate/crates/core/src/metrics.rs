// SPDX-License-Identifier: Apache-2.0

//! Imaging deviation: projection Hausdorff distances and density difference
//! (spatial), velocity NMSE (kinematic), and their capped equal-weight sum.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::pointcloud::PointCloud4D;
use crate::scene::Scene;
use crate::{Error, Result};

/// Spatial deviation at which the overall score saturates: a Hausdorff term of
/// one scene diagonal plus a density difference of one. Also the empty-cloud value.
pub const SPATIAL_CAP: f64 = 2.0;
pub const NMSE_CAP: f64 = 1.0;

/// Directed distance `sup_a inf_b |a − b|`, skipping the inner loop as soon as
/// it cannot raise the running maximum.
fn directed_sq(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let mut cmax = 0.0f64;
    for p in a {
        let mut cmin = f64::INFINITY;
        for q in b {
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            let d = dx * dx + dy * dy;
            if d < cmin {
                cmin = d;
                if cmin < cmax {
                    break;
                }
            }
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    cmax
}

/// Symmetric Hausdorff distance between two planar point sets.
pub fn hausdorff_2d(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(directed_sq(a, b).max(directed_sq(b, a)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Xy,
    Xz,
    Yz,
}

impl Projection {
    fn apply(self, p: [f64; 3]) -> [f64; 2] {
        match self {
            Projection::Xy => [p[0], p[1]],
            Projection::Xz => [p[0], p[2]],
            Projection::Yz => [p[1], p[2]],
        }
    }
}

fn project(points: &[[f64; 3]], proj: Projection) -> Vec<[f64; 2]> {
    points.iter().map(|&p| proj.apply(p)).collect()
}

/// Spatial component with its parts. Hausdorff distances are in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialDeviation {
    pub hausdorff_xy: f64,
    pub hausdorff_xz: f64,
    pub hausdorff_yz: f64,
    pub density_diff: f64,
    /// mean Hausdorff / scene diagonal + density difference
    pub value: f64,
}

fn scene_scale(truth: &Scene) -> f64 {
    let d = truth.bbox_diagonal();
    if d > 0.0 {
        d
    } else {
        1.0
    }
}

/// Spatial deviation of an estimate against the ground-truth scatterers.
///
/// An empty estimate scores the cap; the Hausdorff terms are then reported as
/// the scene diagonal.
pub fn spatial_deviation(est: &PointCloud4D, truth: &Scene) -> Result<SpatialDeviation> {
    if truth.scatterers.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let n_truth = truth.scatterers.len() as f64;
    let scale = scene_scale(truth);
    if est.is_empty() {
        return Ok(SpatialDeviation {
            hausdorff_xy: scale,
            hausdorff_xz: scale,
            hausdorff_yz: scale,
            density_diff: 1.0,
            value: SPATIAL_CAP,
        });
    }
    let e: Vec<[f64; 3]> = est.points.iter().map(|p| p.position()).collect();
    let t: Vec<[f64; 3]> = truth.scatterers.iter().map(|s| s.position).collect();
    let h = |proj| hausdorff_2d(&project(&e, proj), &project(&t, proj));
    let (hxy, hxz, hyz) = (h(Projection::Xy)?, h(Projection::Xz)?, h(Projection::Yz)?);
    let density_diff = (est.len() as f64 - n_truth).abs() / n_truth;
    Ok(SpatialDeviation {
        hausdorff_xy: hxy,
        hausdorff_xz: hxz,
        hausdorff_yz: hyz,
        density_diff,
        value: (hxy + hxz + hyz) / 3.0 / scale + density_diff,
    })
}

/// Velocity error over estimated points matched to their nearest truth
/// scatterer within `match_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityError {
    pub nmse: f64,
    pub matched: usize,
}

/// `Σ(v_est − v_true)² / Σ v_true²` over matched pairs; plain MSE when every
/// matched truth velocity is zero; [`NMSE_CAP`] when nothing matches.
pub fn velocity_nmse(est: &PointCloud4D, truth: &Scene, match_radius: f64) -> VelocityError {
    let r2 = match_radius * match_radius;
    let (mut num, mut den, mut matched) = (0.0, 0.0, 0usize);
    for p in &est.points {
        let pos = p.position();
        let nearest = truth
            .scatterers
            .iter()
            .map(|s| {
                let d2: f64 = (0..3).map(|k| (s.position[k] - pos[k]).powi(2)).sum();
                (d2, s.velocity)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((d2, v)) = nearest {
            if d2 <= r2 && match_radius > 0.0 {
                num += (p.v - v).powi(2);
                den += v * v;
                matched += 1;
            }
        }
    }
    let nmse = if matched == 0 {
        NMSE_CAP
    } else if den > 0.0 {
        num / den
    } else {
        num / matched as f64
    };
    VelocityError { nmse, matched }
}

/// Equal-weight mix of both components, each clamped to its cap and scaled to `[0, 1]`.
pub fn overall_deviation(spatial: f64, kinematic: f64) -> f64 {
    0.5 * spatial.min(SPATIAL_CAP) / SPATIAL_CAP + 0.5 * kinematic.min(NMSE_CAP) / NMSE_CAP
}

/// Full deviation breakdown of one reconstructed cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub hausdorff_xy: f64,
    pub hausdorff_xz: f64,
    pub hausdorff_yz: f64,
    pub density_diff: f64,
    pub velocity_nmse: f64,
    pub spatial_deviation: f64,
    pub kinematic_deviation: f64,
    pub overall: f64,
    pub n_points: usize,
    pub n_truth: usize,
    pub n_matched: usize,
    pub match_radius: f64,
}

const FIELDS: [&str; 12] = [
    "hausdorff_xy",
    "hausdorff_xz",
    "hausdorff_yz",
    "density_diff",
    "velocity_nmse",
    "spatial_deviation",
    "kinematic_deviation",
    "overall",
    "n_points",
    "n_truth",
    "n_matched",
    "match_radius",
];

impl DeviationReport {
    pub fn evaluate(est: &PointCloud4D, truth: &Scene, match_radius: f64) -> Result<Self> {
        let s = spatial_deviation(est, truth)?;
        let v = velocity_nmse(est, truth, match_radius);
        Ok(DeviationReport {
            hausdorff_xy: s.hausdorff_xy,
            hausdorff_xz: s.hausdorff_xz,
            hausdorff_yz: s.hausdorff_yz,
            density_diff: s.density_diff,
            velocity_nmse: v.nmse,
            spatial_deviation: s.value,
            kinematic_deviation: v.nmse,
            overall: overall_deviation(s.value, v.nmse),
            n_points: est.len(),
            n_truth: truth.scatterers.len(),
            n_matched: v.matched,
            match_radius,
        })
    }

    fn values(&self) -> [String; 12] {
        [
            self.hausdorff_xy.to_string(),
            self.hausdorff_xz.to_string(),
            self.hausdorff_yz.to_string(),
            self.density_diff.to_string(),
            self.velocity_nmse.to_string(),
            self.spatial_deviation.to_string(),
            self.kinematic_deviation.to_string(),
            self.overall.to_string(),
            self.n_points.to_string(),
            self.n_truth.to_string(),
            self.n_matched.to_string(),
            self.match_radius.to_string(),
        ]
    }

    /// `key = value` lines, including the caps used for `overall`.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in FIELDS.iter().zip(self.values()) {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "spatial_cap = {SPATIAL_CAP}");
        let _ = writeln!(out, "nmse_cap = {NMSE_CAP}");
        out
    }

    pub fn csv_header() -> String {
        FIELDS.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.values().join(",")
    }
}
