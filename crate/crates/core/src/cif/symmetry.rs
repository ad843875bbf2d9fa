use std::fmt;

use serde::{Deserialize, Serialize};

use super::CifError;

/// Affine map over fractional coordinates: `f' = R f + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymOp {
    /// Integer rotation part with entries in {-1, 0, 1}.
    pub rotation: [[i32; 3]; 3],
    /// Translation part reduced into [0, 1).
    pub translation: [f64; 3],
}

impl SymOp {
    pub fn identity() -> Self {
        SymOp {
            rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
            translation: [0.0; 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == SymOp::identity()
    }

    pub fn apply(&self, f: [f64; 3]) -> [f64; 3] {
        let mut out = self.translation;
        for (i, row) in self.rotation.iter().enumerate() {
            for j in 0..3 {
                out[i] += f64::from(row[j]) * f[j];
            }
        }
        out
    }

    /// Parse a Jones-faithful triple such as `x+1/2, -y, z-1/4`.
    pub fn parse(text: &str) -> Result<Self, CifError> {
        let bad = || CifError::InvalidSymmetryOp(text.to_string());
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut op = SymOp {
            rotation: [[0; 3]; 3],
            translation: [0.0; 3],
        };
        for (row, part) in parts.iter().enumerate() {
            let compact: String = part.chars().filter(|c| !c.is_whitespace()).collect();
            if compact.is_empty() {
                return Err(bad());
            }
            let (rot, trans) = parse_component(&compact).ok_or_else(bad)?;
            if rot.iter().any(|r| r.abs() > 1) {
                return Err(bad());
            }
            op.rotation[row] = rot;
            op.translation[row] = reduce_unit(trans);
        }
        Ok(op)
    }
}

/// One row of an operation: coefficients of x, y, z plus a constant.
fn parse_component(s: &str) -> Option<([i32; 3], f64)> {
    let mut rot = [0i32; 3];
    let mut trans = 0.0;
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let mut sign = 1.0;
        if bytes[i] == b'+' || bytes[i] == b'-' {
            if bytes[i] == b'-' {
                sign = -1.0;
            }
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let start = i;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.' || bytes[i] == b'/') {
            i += 1;
        }
        let coeff = if i > start {
            Some(parse_number(&s[start..i])?)
        } else {
            None
        };
        if i < bytes.len() && matches!(bytes[i].to_ascii_lowercase(), b'x' | b'y' | b'z') {
            let axis = usize::from(bytes[i].to_ascii_lowercase() - b'x');
            let c = coeff.unwrap_or(1.0) * sign;
            if c.fract() != 0.0 {
                return None;
            }
            rot[axis] += c as i32;
            i += 1;
        } else {
            trans += sign * coeff?;
        }
    }
    Some((rot, trans))
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.parse().ok()?;
            let d: f64 = d.parse().ok()?;
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

/// Reduce into [0, 1), mapping values that round up to 1.0 back to 0.0.
pub fn reduce_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl fmt::Display for SymOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axes = ['x', 'y', 'z'];
        for (row, rot) in self.rotation.iter().enumerate() {
            if row > 0 {
                f.write_str(",")?;
            }
            let mut wrote = false;
            for (k, &c) in rot.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                if c < 0 {
                    f.write_str("-")?;
                } else if wrote {
                    f.write_str("+")?;
                }
                write!(f, "{}", axes[k])?;
                wrote = true;
            }
            let t = self.translation[row];
            if t != 0.0 {
                if wrote {
                    f.write_str("+")?;
                }
                write!(f, "{}", fraction_string(t))?;
                wrote = true;
            }
            if !wrote {
                f.write_str("0")?;
            }
        }
        Ok(())
    }
}

/// Render common crystallographic fractions exactly, anything else as a
/// round-trippable decimal.
fn fraction_string(t: f64) -> String {
    for den in [2u32, 3, 4, 6, 8, 12] {
        let num = t * f64::from(den);
        if (num - num.round()).abs() < 1e-12 {
            let num = num.round() as u32;
            let exact = f64::from(num) / f64::from(den);
            if exact == t {
                return format!("{num}/{den}");
            }
        }
    }
    format!("{t}")
}
