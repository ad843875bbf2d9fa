//! Lattice matrices in the row-vector convention: row k is cell vector k and
//! a fractional triple `f` maps to cartesian `f · L`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Volumes at or below this (Å³) are treated as degenerate.
pub const MIN_CELL_VOLUME: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("degenerate cell: volume {volume:e} Å³")]
    DegenerateCell { volume: f64 },
    #[error("invalid cell parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    rows: [[f64; 3]; 3],
}

/// Cosine of an angle in degrees, exact at the angles cells are usually
/// written with so that orthogonal cells produce exact zeros.
fn cos_deg(angle: f64) -> f64 {
    if angle == 90.0 {
        0.0
    } else if angle == 60.0 {
        0.5
    } else if angle == 120.0 {
        -0.5
    } else {
        angle.to_radians().cos()
    }
}

fn sin_deg(angle: f64) -> f64 {
    if angle == 90.0 {
        1.0
    } else {
        angle.to_radians().sin()
    }
}

/// Standard crystallographic setting: `a` along x, `b` in the x-y plane,
/// `c` completing a right-handed cell.
pub fn build_lattice_matrix(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<Lattice, LatticeError> {
    for (name, value) in [("a", a), ("b", b), ("c", c)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(LatticeError::InvalidParameter { name, value });
        }
    }
    for (name, value) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
        if !(value.is_finite() && value > 0.0 && value < 180.0) {
            return Err(LatticeError::InvalidParameter { name, value });
        }
    }
    let (ca, cb, cg) = (cos_deg(alpha), cos_deg(beta), cos_deg(gamma));
    let sg = sin_deg(gamma);
    let cx = cb;
    let cy = (ca - cb * cg) / sg;
    // Squared volume of the unit-edge cell; zero for coplanar edges.
    let unit_volume_sq = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
    if unit_volume_sq <= 1e-12 {
        return Err(LatticeError::DegenerateCell { volume: 0.0 });
    }
    let cz2 = (1.0 - cx * cx - cy * cy).max(0.0);
    let lattice = Lattice {
        rows: [[a, 0.0, 0.0], [b * cg, b * sg, 0.0], [c * cx, c * cy, c * cz2.sqrt()]],
    };
    let volume = lattice.volume();
    if volume <= MIN_CELL_VOLUME {
        return Err(LatticeError::DegenerateCell { volume });
    }
    Ok(lattice)
}

/// `f · L` with the lattice rows as cell vectors.
pub fn frac_to_cart(lattice: &Lattice, f: [f64; 3]) -> [f64; 3] {
    lattice.frac_to_cart(f)
}

impl Lattice {
    /// Accepts any right-handed, non-degenerate set of rows.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, LatticeError> {
        let lattice = Lattice { rows };
        let volume = lattice.volume();
        if !(volume > MIN_CELL_VOLUME) {
            return Err(LatticeError::DegenerateCell { volume });
        }
        Ok(lattice)
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    pub fn volume(&self) -> f64 {
        let [a, b, c] = self.rows;
        dot(a, cross(b, c))
    }

    pub fn frac_to_cart(&self, f: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, row) in self.rows.iter().enumerate() {
            for d in 0..3 {
                out[d] += f[k] * row[d];
            }
        }
        out
    }

    /// Recover `(a, b, c, alpha, beta, gamma)` from the Gram matrix.
    pub fn parameters(&self) -> [f64; 6] {
        let [ra, rb, rc] = self.rows;
        let (a, b, c) = (norm(ra), norm(rb), norm(rc));
        let angle =
            |u: [f64; 3], v: [f64; 3], lu: f64, lv: f64| (dot(u, v) / (lu * lv)).clamp(-1.0, 1.0).acos().to_degrees();
        [a, b, c, angle(rb, rc, b, c), angle(ra, rc, a, c), angle(ra, rb, a, b)]
    }

    /// Distance between adjacent lattice planes normal to each reciprocal
    /// axis: `V / |a_l × a_m|`.
    pub fn plane_spacings(&self) -> [f64; 3] {
        let v = self.volume();
        let [a, b, c] = self.rows;
        [v / norm(cross(b, c)), v / norm(cross(c, a)), v / norm(cross(a, b))]
    }

    /// `L · R`: rotates every cell vector by the orthogonal matrix `r`.
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> Lattice {
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in self.rows.iter().enumerate() {
            for j in 0..3 {
                rows[i][j] = (0..3).map(|k| row[k] * r[k][j]).sum();
            }
        }
        Lattice { rows }
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
