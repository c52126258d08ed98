// SPDX-License-Identifier: Apache-2.0

//! World-frame 4D points and their CSV / ASCII-PLY serialisation.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::SteeringAngles;
use crate::scene::direction_from_angles;
use crate::{Error, Result};

/// One reconstructed point: position in metres, radial velocity in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
}

impl CloudPoint {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Where a point came from: its RDM cell and its angle-spectrum peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub alpha: usize,
    pub beta: usize,
    pub theta: f64,
    pub phi: f64,
    pub peak: f64,
}

/// A detection in radar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub range: f64,
    pub velocity: f64,
    pub angles: SteeringAngles,
    pub alpha: usize,
    pub beta: usize,
    pub peak: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud4D {
    pub points: Vec<CloudPoint>,
    /// same length as `points`; empty for imported clouds
    pub provenance: Vec<Provenance>,
}

impl PointCloud4D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Order points by `(alpha, beta, theta, phi)` so exports do not depend on
    /// the order in which cells were processed.
    pub fn sort_by_provenance(&mut self) {
        if self.provenance.len() != self.points.len() {
            return;
        }
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| {
            let (pa, pb) = (&self.provenance[a], &self.provenance[b]);
            (pa.alpha, pa.beta)
                .cmp(&(pb.alpha, pb.beta))
                .then(pa.theta.total_cmp(&pb.theta))
                .then(pa.phi.total_cmp(&pb.phi))
        });
        self.points = idx.iter().map(|&i| self.points[i]).collect();
        self.provenance = idx.iter().map(|&i| self.provenance[i]).collect();
    }

    /// `x,y,z,v` header followed by one row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,v\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.x, p.y, p.z, p.v);
        }
        out
    }

    /// Provenance table, one row per point in export order.
    pub fn provenance_csv(&self) -> String {
        let mut out = String::from("alpha,beta,theta_deg,phi_deg,peak\n");
        for p in &self.provenance {
            let _ = writeln!(out, "{},{},{},{},{}", p.alpha, p.beta, p.theta, p.phi, p.peak);
        }
        out
    }

    /// ASCII PLY with velocity as a per-vertex scalar.
    pub fn to_ply(&self) -> String {
        let mut out = String::new();
        out.push_str("ply\nformat ascii 1.0\ncomment 4D radar point cloud, velocity in m/s\n");
        let _ = writeln!(out, "element vertex {}", self.points.len());
        for name in ["x", "y", "z", "velocity"] {
            let _ = writeln!(out, "property double {name}");
        }
        out.push_str("end_header\n");
        for p in &self.points {
            let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, p.v);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_ply(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ply()).map_err(|e| Error::io(path, e))
    }
}

/// Convert detections to world coordinates around `bs_position`.
pub fn reconstruct(detections: &[Detection], bs_position: [f64; 3]) -> PointCloud4D {
    let mut cloud = PointCloud4D::default();
    for d in detections {
        let dir = direction_from_angles(d.angles);
        cloud.points.push(CloudPoint {
            x: bs_position[0] + d.range * dir[0],
            y: bs_position[1] + d.range * dir[1],
            z: bs_position[2] + d.range * dir[2],
            v: d.velocity,
        });
        cloud.provenance.push(Provenance {
            alpha: d.alpha,
            beta: d.beta,
            theta: d.angles.theta,
            phi: d.angles.phi,
            peak: d.peak,
        });
    }
    cloud
}

/// Parse a cloud written by [`PointCloud4D::to_csv`]. Provenance is not restored.
pub fn parse_cloud_csv(text: &str, path: &Path) -> Result<PointCloud4D> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "x,y,z,v" => {}
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "expected header `x,y,z,v`".into(),
            })
        }
    }
    let mut cloud = PointCloud4D::default();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg,
        };
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(e.to_string()))?;
        if vals.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", vals.len())));
        }
        cloud.points.push(CloudPoint {
            x: vals[0],
            y: vals[1],
            z: vals[2],
            v: vals[3],
        });
    }
    Ok(cloud)
}

pub fn load_cloud_csv(path: &Path) -> Result<PointCloud4D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_demo_scene, scatterer_truth, DEFAULT_BS_POSITION};
    use approx::assert_abs_diff_eq;

    fn det(range: f64, theta: f64, phi: f64) -> Detection {
        Detection {
            range,
            velocity: 1.5,
            angles: SteeringAngles { theta, phi },
            alpha: 0,
            beta: 0,
            peak: 1.0,
        }
    }

    #[test]
    fn boresight_reconstruction() {
        let c = reconstruct(&[det(100.0, 90.0, 90.0)], DEFAULT_BS_POSITION);
        let p = c.points[0];
        assert_abs_diff_eq!(p.x, 14.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.z, 20.0, epsilon = 1e-9);
        assert_eq!(p.v, 1.5);
    }

    #[test]
    fn truth_round_trip_is_identity() {
        let scene = generate_demo_scene();
        let truths = scatterer_truth(&scene).unwrap();
        let dets: Vec<Detection> = truths
            .iter()
            .map(|t| Detection {
                range: t.range,
                velocity: t.radial_velocity,
                angles: t.angles(),
                alpha: 0,
                beta: 0,
                peak: 1.0,
            })
            .collect();
        let cloud = reconstruct(&dets, scene.bs_position);
        for (p, s) in cloud.points.iter().zip(&scene.scatterers) {
            for k in 0..3 {
                assert!((p.position()[k] - s.position[k]).abs() < 1e-9);
            }
            assert_eq!(p.v, s.velocity);
        }
    }

    #[test]
    fn empty_detections_give_empty_cloud() {
        let c = reconstruct(&[], DEFAULT_BS_POSITION);
        assert!(c.is_empty());
        assert_eq!(c.to_csv(), "x,y,z,v\n");
    }

    #[test]
    fn one_point_csv_has_two_lines() {
        let c = reconstruct(&[det(50.0, 80.0, 100.0)], DEFAULT_BS_POSITION);
        assert_eq!(c.to_csv().lines().count(), 2);
    }

    #[test]
    fn csv_round_trip_is_identical() {
        let dets: Vec<Detection> = (0..20)
            .map(|k| det(10.0 + k as f64 * 3.7, 30.0 + k as f64 * 5.1, 100.0 - k as f64 * 2.3))
            .collect();
        let c = reconstruct(&dets, DEFAULT_BS_POSITION);
        let text = c.to_csv();
        let back = parse_cloud_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn csv_import_errors_carry_line() {
        let err = parse_cloud_csv("x,y,z,v\n1,2,3,4\n1,2,x,4\n", Path::new("c.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_cloud_csv("a,b\n", Path::new("c.csv")).is_err());
    }

    #[test]
    fn ply_header_is_well_formed() {
        let c = reconstruct(&[det(50.0, 80.0, 100.0), det(60.0, 70.0, 80.0)], DEFAULT_BS_POSITION);
        let ply = c.to_ply();
        let lines: Vec<&str> = ply.lines().collect();
        assert_eq!(lines[0], "ply");
        assert_eq!(lines[1], "format ascii 1.0");
        let end = lines.iter().position(|l| *l == "end_header").unwrap();
        let n: usize = lines
            .iter()
            .find_map(|l| l.strip_prefix("element vertex "))
            .unwrap()
            .parse()
            .unwrap();
        let props = lines[..end].iter().filter(|l| l.starts_with("property ")).count();
        assert_eq!(n, 2);
        assert_eq!(lines.len() - end - 1, n);
        for row in &lines[end + 1..] {
            assert_eq!(row.split_whitespace().count(), props);
            assert!(row.split_whitespace().all(|f| f.parse::<f64>().is_ok()));
        }
    }

    #[test]
    fn sorting_is_order_independent() {
        let mut dets: Vec<Detection> = (0..8)
            .map(|k| Detection {
                alpha: k % 3,
                beta: k % 2,
                ..det(20.0 + k as f64, 40.0 + k as f64, 60.0)
            })
            .collect();
        let mut a = reconstruct(&dets, DEFAULT_BS_POSITION);
        dets.reverse();
        let mut b = reconstruct(&dets, DEFAULT_BS_POSITION);
        a.sort_by_provenance();
        b.sort_by_provenance();
        assert_eq!(a, b);
        assert_eq!(a.provenance_csv().lines().count(), 9);
    }
}
