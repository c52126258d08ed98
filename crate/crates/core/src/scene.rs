// SPDX-License-Identifier: Apache-2.0

//! Ground-truth scatterer scenes and their range/velocity/angle truth.
//!
//! World frame: the BS array plane is x–z with its `p` axis along `+x` and its
//! `q` axis along `+z`; the boresight looks along `-y`, towards the scene. A
//! unit direction `(dx, dy, dz)` from the BS maps to
//! `u = dx = cosθ cosφ`, `w = dz = sinθ cosφ`, `-dy = sinφ`.
//!
//! Scene files hold one scatterer per line as `x,y,z,v[,gain]`; a line
//! `bs,x,y,z` overrides the default BS position and `#` starts a comment.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::geometry::SteeringAngles;
use crate::{Error, Result};

pub const DEFAULT_BS_POSITION: [f64; 3] = [14.0, 100.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 3],
    /// Radial velocity, m/s. Enters the Doppler model as `f_d = 2 v f_c / c`.
    pub velocity: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    pub bs_position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScattererTruth {
    pub range: f64,
    pub radial_velocity: f64,
    pub theta: f64,
    pub phi: f64,
    pub gain: f64,
}

impl ScattererTruth {
    pub fn angles(&self) -> SteeringAngles {
        SteeringAngles {
            theta: self.theta,
            phi: self.phi,
        }
    }
}

impl Scene {
    pub fn new(scatterers: Vec<Scatterer>, bs_position: [f64; 3]) -> Result<Self> {
        let scene = Scene {
            scatterers,
            bs_position,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scatterers.is_empty() {
            return Err(Error::Scene("scene has no scatterers".into()));
        }
        for (i, s) in self.scatterers.iter().enumerate() {
            let finite = s.position.iter().all(|c| c.is_finite()) && s.velocity.is_finite();
            if !finite {
                return Err(Error::Scene(format!("scatterer {i} has non-finite fields")));
            }
            if !(s.gain > 0.0 && s.gain.is_finite()) {
                return Err(Error::Scene(format!(
                    "scatterer {i} has non-positive gain {}",
                    s.gain
                )));
            }
            truth_of(s, self.bs_position).map_err(|e| match e {
                Error::Scene(msg) => Error::Scene(format!("scatterer {i}: {msg}")),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Reject scatterers beyond `max_range` metres from the BS.
    pub fn check_max_range(&self, max_range: f64) -> Result<()> {
        for (i, s) in self.scatterers.iter().enumerate() {
            let r = distance(s.position, self.bs_position);
            if r >= max_range {
                return Err(Error::Scene(format!(
                    "scatterer {i} at {r:.2} m is beyond the unambiguous range {max_range:.2} m"
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box diagonal of the scatterer positions.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &self.scatterers {
            for k in 0..3 {
                lo[k] = lo[k].min(s.position[k]);
                hi[k] = hi[k].max(s.position[k]);
            }
        }
        (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# x,y,z,v,gain\n");
        let [bx, by, bz] = self.bs_position;
        out.push_str(&format!("bs,{bx},{by},{bz}\n"));
        for s in &self.scatterers {
            let [x, y, z] = s.position;
            out.push_str(&format!("{x},{y},{z},{},{}\n", s.velocity, s.gain));
        }
        out
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit direction from the BS for a steering angle pair.
pub fn direction_from_angles(angles: SteeringAngles) -> [f64; 3] {
    let (st, ct) = angles.theta.to_radians().sin_cos();
    let (sp, cp) = angles.phi.to_radians().sin_cos();
    [ct * cp, -sp, st * cp]
}

/// Steering angles of a unit direction in the front hemisphere (`dy < 0`).
pub fn angles_from_direction(dir: [f64; 3]) -> Option<SteeringAngles> {
    let [u, dy, w] = dir;
    let normal = -dy;
    if normal <= 0.0 {
        return None;
    }
    let r = u.hypot(w);
    let (cos_phi, theta) = if r == 0.0 {
        (0.0, std::f64::consts::FRAC_PI_2)
    } else if w >= 0.0 {
        (r, w.atan2(u))
    } else {
        (-r, (-w).atan2(-u))
    };
    let eps = 1e-12;
    Some(SteeringAngles {
        theta: theta.to_degrees().clamp(eps, 180.0 - eps),
        phi: normal.atan2(cos_phi).to_degrees().clamp(eps, 180.0 - eps),
    })
}

fn truth_of(s: &Scatterer, bs: [f64; 3]) -> Result<ScattererTruth> {
    let d = [
        s.position[0] - bs[0],
        s.position[1] - bs[1],
        s.position[2] - bs[2],
    ];
    let range = distance(s.position, bs);
    if range < 1e-9 {
        return Err(Error::Scene("coincides with the BS".into()));
    }
    let dir = [d[0] / range, d[1] / range, d[2] / range];
    let angles = angles_from_direction(dir)
        .ok_or_else(|| Error::Scene("lies behind the array plane".into()))?;
    Ok(ScattererTruth {
        range,
        radial_velocity: s.velocity,
        theta: angles.theta,
        phi: angles.phi,
        gain: s.gain,
    })
}

/// Range, velocity and direction of every scatterer as seen from the BS.
pub fn scatterer_truth(scene: &Scene) -> Result<Vec<ScattererTruth>> {
    scene
        .scatterers
        .iter()
        .map(|s| truth_of(s, scene.bs_position))
        .collect()
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, path)
}

pub fn parse_scene(text: &str, path: &Path) -> Result<Scene> {
    let mut scatterers = Vec::new();
    let mut bs = DEFAULT_BS_POSITION;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums = |fs: &[&str]| -> Result<Vec<f64>> {
            fs.iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| parse_err(line_no, format!("`{f}` is not a number")))
                })
                .collect()
        };
        if fields[0].eq_ignore_ascii_case("bs") {
            let v = nums(&fields[1..])?;
            if v.len() != 3 {
                return Err(parse_err(line_no, "bs row needs x,y,z".into()));
            }
            bs = [v[0], v[1], v[2]];
            continue;
        }
        let v = nums(&fields)?;
        let gain = match v.len() {
            4 => 1.0,
            5 => v[4],
            n => {
                return Err(parse_err(
                    line_no,
                    format!("expected x,y,z,v[,gain], got {n} fields"),
                ))
            }
        };
        scatterers.push(Scatterer {
            position: [v[0], v[1], v[2]],
            velocity: v[3],
            gain,
        });
    }
    Scene::new(scatterers, bs)
}

/// Street scene with two cars (±10 m/s), two pedestrians (±2 m/s) and static
/// road furniture, observed from a BS at (14, 100, 20).
///
/// Objects are spread over roughly 25 m to 145 m of range so that most of them
/// fall in distinct range bins of the reduced test profile.
pub fn generate_demo_scene() -> Scene {
    let mut pts: Vec<Scatterer> = Vec::new();
    let mut add = |p: [f64; 3], v: f64| {
        pts.push(Scatterer {
            position: p,
            velocity: v,
            gain: 1.0,
        })
    };

    // cars: box wireframes, long axis along y so their motion is radial
    for (origin, v) in [([8.0, 55.0, 0.3], 10.0), ([18.0, 5.0, 0.3], -10.0)] {
        let (w, l, h) = (1.8, 4.5, 1.4);
        for &dx in &[0.0, w] {
            for &dz in &[0.0, h] {
                for k in 0..4 {
                    let dy = l * k as f64 / 3.0;
                    add([origin[0] + dx, origin[1] + dy, origin[2] + dz], v);
                }
            }
        }
        // roof line and windscreen
        add([origin[0] + w / 2.0, origin[1] + 1.5, origin[2] + h + 0.2], v);
        add([origin[0] + w / 2.0, origin[1] + 3.0, origin[2] + h + 0.2], v);
    }

    // pedestrians: head, shoulders, hips, knees, feet
    for (base, v) in [([5.0, 35.0], 2.0), ([23.0, -20.0], -2.0)] {
        let [x, y] = base;
        for (dx, z) in [
            (0.0, 1.7),
            (-0.25, 1.4),
            (0.25, 1.4),
            (0.0, 1.0),
            (-0.15, 0.5),
            (0.15, 0.5),
            (-0.15, 0.0),
            (0.15, 0.0),
        ] {
            add([x + dx, y, z], v);
        }
    }

    // street lamps with an arm over the road
    for y in [75.0, 15.0, -45.0] {
        for k in 0..7 {
            add([26.0, y, k as f64], 0.0);
        }
        add([24.5, y, 6.0], 0.0);
        add([23.0, y, 6.0], 0.0);
    }

    // traffic sign
    for z in [0.0, 1.0, 2.0] {
        add([2.0, 45.0, z], 0.0);
    }
    for (dx, dz) in [(-0.4, 2.4), (0.4, 2.4), (-0.4, 3.2), (0.4, 3.2)] {
        add([2.0 + dx, 45.0, dz], 0.0);
    }

    // guard rail along the kerb
    for k in 0..7 {
        add([1.0, -40.0 + 20.0 * k as f64, 0.8], 0.0);
    }

    Scene {
        scatterers: pts,
        bs_position: DEFAULT_BS_POSITION,
    }
}
