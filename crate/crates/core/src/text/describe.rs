use std::collections::BTreeMap;
use std::fmt::Write;

use crate::cif::CrystalStructure;
use crate::elements::ElementTable;
use crate::graph::neighbor_search_in;
use crate::lattice::{Lattice, LatticeError};

/// Probe radius (Å) for coordination numbers in descriptions.
pub const COORDINATION_PROBE: f64 = 4.0;

const PARAM_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrystalSystem {
    Cubic,
    Tetragonal,
    Orthorhombic,
    Hexagonal,
    Trigonal,
    Monoclinic,
    Triclinic,
}

impl CrystalSystem {
    pub fn name(self) -> &'static str {
        match self {
            CrystalSystem::Cubic => "cubic",
            CrystalSystem::Tetragonal => "tetragonal",
            CrystalSystem::Orthorhombic => "orthorhombic",
            CrystalSystem::Hexagonal => "hexagonal",
            CrystalSystem::Trigonal => "trigonal",
            CrystalSystem::Monoclinic => "monoclinic",
            CrystalSystem::Triclinic => "triclinic",
        }
    }

    /// Classify from cell parameters alone, comparing within 1e-4.
    pub fn from_cell([a, b, c, alpha, beta, gamma]: [f64; 6]) -> Self {
        let eq = |x: f64, y: f64| (x - y).abs() <= PARAM_TOL;
        let right = |x: f64| eq(x, 90.0);
        let all_right = right(alpha) && right(beta) && right(gamma);
        if all_right {
            if eq(a, b) && eq(b, c) {
                CrystalSystem::Cubic
            } else if eq(a, b) || eq(b, c) || eq(a, c) {
                CrystalSystem::Tetragonal
            } else {
                CrystalSystem::Orthorhombic
            }
        } else if eq(a, b) && right(alpha) && right(beta) && eq(gamma, 120.0) {
            CrystalSystem::Hexagonal
        } else if eq(a, b) && eq(b, c) && eq(alpha, beta) && eq(beta, gamma) {
            CrystalSystem::Trigonal
        } else if [right(alpha), right(beta), right(gamma)].iter().filter(|&&r| r).count() == 2 {
            CrystalSystem::Monoclinic
        } else {
            CrystalSystem::Triclinic
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduced formula with elements ordered by electronegativity, then symbol.
pub fn reduced_formula(s: &CrystalStructure) -> String {
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for site in &s.sites {
        *counts.entry(site.z).or_default() += 1;
    }
    let divisor = counts.values().copied().fold(0, gcd).max(1);
    let table = ElementTable::get();
    let mut entries: Vec<_> = counts
        .iter()
        .map(|(&z, &n)| (table.by_z(z).expect("validated element"), n / divisor))
        .collect();
    entries.sort_by(|(a, _), (b, _)| {
        a.electronegativity
            .total_cmp(&b.electronegativity)
            .then(a.symbol.cmp(b.symbol))
    });
    let mut out = String::new();
    for (rec, n) in entries {
        out.push_str(rec.symbol);
        if n > 1 {
            write!(out, "{n}").unwrap();
        }
    }
    out
}

pub fn describe(s: &CrystalStructure) -> Result<String, LatticeError> {
    let lattice = s.lattice()?;
    Ok(describe_in(s, &lattice))
}

/// Template description built only from rotation- and translation-invariant
/// quantities of `s` placed in `lattice`.
pub fn describe_in(s: &CrystalStructure, lattice: &Lattice) -> String {
    let params = lattice.parameters();
    let [a, b, c, alpha, beta, gamma] = params;
    let system = CrystalSystem::from_cell(params);
    let neighbors = neighbor_search_in(lattice, &s.frac_coords(), COORDINATION_PROBE, usize::MAX);

    let mut coordination = vec![0usize; s.sites.len()];
    let mut nearest = vec![f64::INFINITY; s.sites.len()];
    for e in &neighbors.edges {
        coordination[e.src] += 1;
        nearest[e.src] = nearest[e.src].min(e.distance);
    }

    // Per element in order of first appearance.
    let mut order: Vec<u8> = Vec::new();
    for site in &s.sites {
        if !order.contains(&site.z) {
            order.push(site.z);
        }
    }

    let mut text = String::new();
    write!(
        text,
        "{} crystallizes in the {} crystal system. The unit cell has a = {a:.2}, b = {b:.2}, c = {c:.2} Å \
         and alpha = {alpha:.2}, beta = {beta:.2}, gamma = {gamma:.2} degrees. There are {} sites in the unit cell.",
        reduced_formula(s),
        system.name(),
        s.sites.len(),
    )
    .unwrap();

    let table = ElementTable::get();
    for z in order {
        let idx: Vec<usize> = (0..s.sites.len()).filter(|&i| s.sites[i].z == z).collect();
        let mean_cn = idx.iter().map(|&i| coordination[i] as f64).sum::<f64>() / idx.len() as f64;
        let nn = idx.iter().map(|&i| nearest[i]).fold(f64::INFINITY, f64::min);
        let symbol = table.by_z(z).expect("validated element").symbol;
        if mean_cn.fract() == 0.0 {
            write!(text, " {symbol} is {mean_cn:.0}-coordinate").unwrap();
        } else {
            write!(text, " {symbol} has mean coordination {mean_cn:.2}").unwrap();
        }
        if nn.is_finite() {
            write!(text, " with a nearest neighbor distance of {nn:.2} Å.").unwrap();
        } else {
            text.push_str(" with no neighbors within 4 Å.");
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cif::Site;

    fn rocksalt_primitive() -> CrystalStructure {
        let a = 6.0 / 2f64.sqrt();
        CrystalStructure::new(
            "nacl",
            [a, a, a, 60.0, 60.0, 60.0],
            vec![
                Site::new("Na", [0.0; 3]).unwrap(),
                Site::new("Cl", [0.5, 0.5, 0.5]).unwrap(),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn cubic_sodium() {
        let s = CrystalStructure::new(
            "na",
            [4.0, 4.0, 4.0, 90.0, 90.0, 90.0],
            vec![Site::new("Na", [0.0; 3]).unwrap()],
            vec![],
        )
        .unwrap();
        let text = describe(&s).unwrap();
        assert!(text.contains("Na"));
        assert!(text.contains("cubic"));
        assert!(text.contains("a = 4.00"));
        // Six neighbors at exactly 4.0 Å fall inside the closed probe radius.
        assert!(text.contains("Na is 6-coordinate"), "{text}");
    }

    #[test]
    fn rocksalt_is_six_coordinate() {
        // Brute-force oracle: Na-Cl images at 3.0 Å (6 of them), Na-Na at
        // 4.24 Å, so both species count exactly 6 within 4 Å.
        let s = rocksalt_primitive();
        let l = s.lattice().unwrap();
        let mut counts = [0usize; 2];
        for (i, fi) in s.frac_coords().iter().enumerate() {
            for fj in s.frac_coords() {
                for na in -3..=3 {
                    for nb in -3..=3 {
                        for nc in -3..=3 {
                            let d = [
                                fj[0] - fi[0] + na as f64,
                                fj[1] - fi[1] + nb as f64,
                                fj[2] - fi[2] + nc as f64,
                            ];
                            let c = l.frac_to_cart(d);
                            let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
                            if r > 1e-8 && r <= COORDINATION_PROBE {
                                counts[i] += 1;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(counts, [6, 6]);
        let text = describe(&s).unwrap();
        assert!(text.contains("Na is 6-coordinate"), "{text}");
        assert!(text.contains("Cl is 6-coordinate"), "{text}");
        assert!(text.starts_with("NaCl crystallizes in the trigonal"));
        assert!(text.contains("3.00 Å"));
    }

    #[test]
    fn rotation_invariant_text() {
        let s = rocksalt_primitive();
        let l = s.lattice().unwrap();
        let (sn, cs) = (0.3f64.sin(), 0.3f64.cos());
        let r = [[cs, -sn, 0.0], [sn, cs, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(describe_in(&s, &l), describe_in(&s, &l.rotated(&r)));
    }

    #[test]
    fn crystal_systems() {
        use CrystalSystem::*;
        assert_eq!(CrystalSystem::from_cell([3.0, 3.0, 3.0, 90.0, 90.0, 90.0]), Cubic);
        assert_eq!(CrystalSystem::from_cell([3.0, 3.0, 4.0, 90.0, 90.0, 90.0]), Tetragonal);
        assert_eq!(
            CrystalSystem::from_cell([3.0, 4.0, 5.0, 90.0, 90.0, 90.0]),
            Orthorhombic
        );
        assert_eq!(CrystalSystem::from_cell([3.0, 3.0, 5.0, 90.0, 90.0, 120.0]), Hexagonal);
        assert_eq!(CrystalSystem::from_cell([3.0, 3.0, 3.0, 70.0, 70.0, 70.0]), Trigonal);
        assert_eq!(CrystalSystem::from_cell([3.0, 4.0, 5.0, 90.0, 100.0, 90.0]), Monoclinic);
        assert_eq!(CrystalSystem::from_cell([3.0, 4.0, 5.0, 80.0, 100.0, 95.0]), Triclinic);
    }

    #[test]
    fn formula_reduction() {
        let s = CrystalStructure::new(
            "x",
            [4.0, 4.0, 4.0, 90.0, 90.0, 90.0],
            vec![
                Site::new("O", [0.0, 0.0, 0.5]).unwrap(),
                Site::new("Ti", [0.5, 0.5, 0.5]).unwrap(),
                Site::new("Sr", [0.0, 0.0, 0.0]).unwrap(),
                Site::new("O", [0.0, 0.5, 0.0]).unwrap(),
                Site::new("O", [0.5, 0.0, 0.0]).unwrap(),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(reduced_formula(&s), "SrTiO3");
    }
}
