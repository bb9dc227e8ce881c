//! Electrode layouts projected onto the head plane.
//!
//! Positions are placed on a unit sphere following the 10-10 arc
//! subdivision, then flattened by an azimuthal equidistant projection
//! centred on the vertex (Cz). A polar angle of [`HEAD_RADIUS_DEG`] maps to
//! radius 1, so every electrode down to the 10% inferior ring (TP9/TP10)
//! lies inside the unit disc.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GeegaError, Result};

/// Polar angle from the vertex that projects onto the unit circle.
pub const HEAD_RADIUS_DEG: f64 = 120.0;

const HEADBAND_FILE: &str = include_str!("../../data/montage_headband4.txt");
const BCI2A_FILE: &str = include_str!("../../data/montage_bci2a22.txt");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Montage {
    pub name: String,
    pub electrodes: Vec<Electrode>,
}

impl Montage {
    pub fn new(name: &str, electrodes: Vec<Electrode>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &electrodes {
            if !seen.insert(e.name.as_str()) {
                return Err(GeegaError::Parameter(format!("duplicate electrode `{}`", e.name)));
            }
            if e.x * e.x + e.y * e.y > 1.0 + 1e-12 || !e.x.is_finite() || !e.y.is_finite() {
                return Err(GeegaError::Parameter(format!(
                    "electrode `{}` at ({}, {}) lies outside the unit disc",
                    e.name, e.x, e.y
                )));
            }
        }
        if electrodes.is_empty() {
            return Err(GeegaError::Parameter("montage has no electrodes".into()));
        }
        Ok(Montage {
            name: name.to_string(),
            electrodes,
        })
    }

    /// Parses `name x y` lines; blank lines and `#` comments are skipped.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut electrodes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || GeegaError::Parameter(format!("montage {name} line {}: expected `name x y`", i + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let x = parts[1].parse().map_err(|_| bad())?;
            let y = parts[2].parse().map_err(|_| bad())?;
            electrodes.push(Electrode {
                name: parts[0].to_string(),
                x,
                y,
            });
        }
        Montage::new(name, electrodes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("montage");
        Montage::parse(name, &text)
    }

    pub fn to_text(&self) -> String {
        self.electrodes
            .iter()
            .map(|e| format!("{} {:.6} {:.6}\n", e.name, e.x, e.y))
            .collect()
    }

    /// TP9, AF7, AF8, TP10.
    pub fn headband4() -> Self {
        Montage::parse("headband4", HEADBAND_FILE).expect("bundled montage is valid")
    }

    /// The 22-electrode motor-imagery layout.
    pub fn bci2a22() -> Self {
        Montage::parse("bci2a22", BCI2A_FILE).expect("bundled montage is valid")
    }

    /// Bundled montage with `channels` electrodes, if any.
    pub fn for_channel_count(channels: usize) -> Option<Self> {
        match channels {
            4 => Some(Montage::headband4()),
            22 => Some(Montage::bci2a22()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.electrodes.iter().map(|e| e.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.electrodes.iter().position(|e| e.name.eq_ignore_ascii_case(name))
    }
}

/// Label order of the bundled four-channel headband layout.
pub const HEADBAND4_LABELS: [&str; 4] = ["TP9", "AF7", "AF8", "TP10"];

/// Label order of the bundled 22-channel layout.
pub const BCI2A22_LABELS: [&str; 22] = [
    "Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "CP3", "CP1", "CPz", "CP2",
    "CP4", "P1", "Pz", "P2", "POz",
];

/// Unit-sphere position of a 10-10 label: x right, y towards the nose, z up.
pub fn sphere_position(label: &str) -> Option<[f64; 3]> {
    let split = label.find(|c: char| c.is_ascii_digit() || c == 'z')?;
    let (row, col) = label.split_at(split);
    // midline polar angle (positive = anterior) and equator azimuth of the row end
    let (mid_deg, end_az_deg): (f64, f64) = match row.to_ascii_uppercase().as_str() {
        "AF" => (67.5, 36.0),
        "F" => (45.0, 54.0),
        "FC" => (22.5, 72.0),
        "C" => (0.0, 90.0),
        "CP" => (-22.5, 108.0),
        "P" => (-45.0, 126.0),
        "PO" => (-67.5, 144.0),
        "T" => (0.0, 90.0),
        "FT" => (22.5, 72.0),
        "TP" => (-22.5, 108.0),
        _ => return None,
    };
    let lateral_row = matches!(row.to_ascii_uppercase().as_str(), "T" | "FT" | "TP");
    if col == "z" {
        if lateral_row {
            return None;
        }
        let a = mid_deg.to_radians();
        return Some([0.0, a.sin(), a.cos()]);
    }
    let n: u32 = col.parse().ok()?;
    let left = n % 2 == 1;
    let side = if left { -1.0 } else { 1.0 };
    let step = n.div_ceil(2);
    match (lateral_row, step) {
        // inferior ring: 10% below the equator
        (_, 5) => {
            let theta = 108f64.to_radians();
            let phi = end_az_deg.to_radians();
            Some([side * theta.sin() * phi.sin(), theta.sin() * phi.cos(), theta.cos()])
        }
        (true, 4) | (false, 1..=4) => Some(arc_point(mid_deg, end_az_deg, step as f64 / 4.0, side)),
        _ => None,
    }
}

/// Point a fraction `t` of the way along the row arc from the midline to the
/// equator end on the given side.
fn arc_point(mid_deg: f64, end_az_deg: f64, t: f64, side: f64) -> [f64; 3] {
    let a = mid_deg.to_radians();
    let phi = end_az_deg.to_radians();
    let m = [0.0, a.sin(), a.cos()];
    let e = [side * phi.sin(), phi.cos(), 0.0];
    // plane through both ends and its mirror image has normal (0, ny, nz)
    let ny = -a.cos();
    let nz = a.sin() - phi.cos();
    let len = (ny * ny + nz * nz).sqrt();
    let (ny, nz) = (ny / len, nz / len);
    let d = ny * m[1] + nz * m[2];
    let c = [0.0, d * ny, d * nz];
    let sub = |p: [f64; 3]| [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
    let (mu, eu) = (sub(m), sub(e));
    let r = (mu[0] * mu[0] + mu[1] * mu[1] + mu[2] * mu[2]).sqrt();
    let u = [mu[0] / r, mu[1] / r, mu[2] / r];
    let v = [side, 0.0, 0.0];
    let along_u = eu[0] * u[0] + eu[1] * u[1] + eu[2] * u[2];
    let along_v = eu[0] * v[0];
    let psi = along_v.atan2(along_u) * t;
    [
        c[0] + r * (psi.cos() * u[0] + psi.sin() * v[0]),
        c[1] + r * (psi.cos() * u[1] + psi.sin() * v[1]),
        c[2] + r * (psi.cos() * u[2] + psi.sin() * v[2]),
    ]
}

/// Azimuthal equidistant projection of a sphere point onto the head plane.
pub fn project(p: [f64; 3]) -> (f64, f64) {
    let theta = p[2].clamp(-1.0, 1.0).acos();
    let planar = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if planar < 1e-15 {
        return (0.0, 0.0);
    }
    let r = theta / HEAD_RADIUS_DEG.to_radians();
    (r * p[0] / planar, r * p[1] / planar)
}

/// Montage computed from 10-10 labels.
pub fn montage_from_labels(name: &str, labels: &[&str]) -> Result<Montage> {
    let electrodes = labels
        .iter()
        .map(|l| {
            let p = sphere_position(l)
                .ok_or_else(|| GeegaError::Parameter(format!("no standard position for `{l}`")))?;
            let (x, y) = project(p);
            Ok(Electrode {
                name: l.to_string(),
                x,
                y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Montage::new(name, electrodes)
}
