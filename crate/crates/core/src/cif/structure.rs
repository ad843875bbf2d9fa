use serde::{Deserialize, Serialize};

use super::symmetry::{reduce_unit, SymOp};
use super::CifError;
use crate::elements::ElementTable;
use crate::lattice::{build_lattice_matrix, Lattice, LatticeError};

/// Per-axis fractional tolerance for merging coincident sites.
pub const SITE_MERGE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub symbol: String,
    pub z: u8,
    /// Fractional coordinates in [0, 1).
    pub frac: [f64; 3],
}

impl Site {
    pub fn new(symbol: &str, frac: [f64; 3]) -> Result<Self, CifError> {
        let z = ElementTable::get()
            .z_of(symbol)
            .ok_or_else(|| CifError::UnknownElement(symbol.to_string()))?;
        Ok(Site {
            symbol: symbol.to_string(),
            z,
            frac: frac.map(reduce_unit),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalStructure {
    pub source_id: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sites: Vec<Site>,
    /// Always contains the identity.
    pub symmetry_ops: Vec<SymOp>,
}

impl CrystalStructure {
    /// Validating constructor; fractional coordinates are reduced into [0, 1)
    /// and the identity operation is added when missing.
    pub fn new(
        source_id: impl Into<String>,
        cell: [f64; 6],
        sites: Vec<Site>,
        mut symmetry_ops: Vec<SymOp>,
    ) -> Result<Self, CifError> {
        if sites.is_empty() {
            return Err(CifError::EmptyStructure);
        }
        if !symmetry_ops.iter().any(SymOp::is_identity) {
            symmetry_ops.insert(0, SymOp::identity());
        }
        let [a, b, c, alpha, beta, gamma] = cell;
        let s = CrystalStructure {
            source_id: source_id.into(),
            a,
            b,
            c,
            alpha,
            beta,
            gamma,
            sites: sites
                .into_iter()
                .map(|mut site| {
                    site.frac = site.frac.map(reduce_unit);
                    site
                })
                .collect(),
            symmetry_ops,
        };
        s.lattice()?;
        Ok(s)
    }

    pub fn cell(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.alpha, self.beta, self.gamma]
    }

    pub fn lattice(&self) -> Result<Lattice, LatticeError> {
        build_lattice_matrix(self.a, self.b, self.c, self.alpha, self.beta, self.gamma)
    }

    pub fn is_expanded(&self) -> bool {
        self.symmetry_ops.iter().all(SymOp::is_identity)
    }

    pub fn frac_coords(&self) -> Vec<[f64; 3]> {
        self.sites.iter().map(|s| s.frac).collect()
    }

    /// Check every type invariant; used by tests and by the parser.
    pub fn validate(&self) -> Result<(), CifError> {
        if self.sites.is_empty() {
            return Err(CifError::EmptyStructure);
        }
        let table = ElementTable::get();
        for site in &self.sites {
            if table.z_of(&site.symbol) != Some(site.z) {
                return Err(CifError::UnknownElement(site.symbol.clone()));
            }
            if site.frac.iter().any(|&f| !(0.0..1.0).contains(&f)) {
                return Err(CifError::InvalidNumber(format!("{:?}", site.frac)));
            }
        }
        if !self.symmetry_ops.iter().any(SymOp::is_identity) {
            return Err(CifError::InvalidSymmetryOp("identity missing".into()));
        }
        self.lattice()?;
        Ok(())
    }
}

fn periodic_close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| {
        let d = (x - y).abs();
        d.min(1.0 - d) < tol
    })
}

/// Replace every site by its orbit under the structure's operations.
///
/// Images are reduced mod 1; an image of the same element within
/// [`SITE_MERGE_TOL`] (per axis, periodic) of an already kept site is
/// dropped, keeping the first occurrence. The result carries only the
/// identity, so a second expansion is a no-op.
pub fn expand_symmetry(s: &CrystalStructure) -> CrystalStructure {
    let mut sites: Vec<Site> = Vec::with_capacity(s.sites.len() * s.symmetry_ops.len());
    for site in &s.sites {
        for op in &s.symmetry_ops {
            let frac = op.apply(site.frac).map(reduce_unit);
            let duplicate = sites
                .iter()
                .any(|k| k.z == site.z && periodic_close(k.frac, frac, SITE_MERGE_TOL));
            if !duplicate {
                sites.push(Site {
                    symbol: site.symbol.clone(),
                    z: site.z,
                    frac,
                });
            }
        }
    }
    CrystalStructure {
        source_id: s.source_id.clone(),
        a: s.a,
        b: s.b,
        c: s.c,
        alpha: s.alpha,
        beta: s.beta,
        gamma: s.gamma,
        sites,
        symmetry_ops: vec![SymOp::identity()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(ops: &[&str], sites: &[(&str, [f64; 3])]) -> CrystalStructure {
        CrystalStructure::new(
            "t",
            [4.0, 4.0, 4.0, 90.0, 90.0, 90.0],
            sites.iter().map(|(e, f)| Site::new(e, *f).unwrap()).collect(),
            ops.iter().map(|o| SymOp::parse(o).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_only_expansion_is_unchanged() {
        let s = cubic(&["x,y,z"], &[("Na", [0.0, 0.0, 0.0]), ("Cl", [0.5, 0.5, 0.5])]);
        assert_eq!(expand_symmetry(&s), s);
    }

    #[test]
    fn inversion_fixed_point_gives_one_site() {
        let s = cubic(&["x,y,z", "-x,-y,-z"], &[("Na", [0.0, 0.0, 0.0])]);
        let e = expand_symmetry(&s);
        assert_eq!(e.sites.len(), 1);
        assert!(e.is_expanded());
    }

    #[test]
    fn centering_translation_doubles() {
        // Orbit oracle: {(0.1,0.1,0.1), (0.6,0.6,0.1)}, distinct modulo 1.
        let s = cubic(&["x,y,z", "x+1/2,y+1/2,z"], &[("Na", [0.1, 0.1, 0.1])]);
        let e = expand_symmetry(&s);
        assert_eq!(e.sites.len(), 2);
        let second = e.sites[1].frac;
        assert!((second[0] - 0.6).abs() < 1e-12 && (second[1] - 0.6).abs() < 1e-12);
        assert!((second[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn merge_respects_periodic_wraparound() {
        let s = cubic(&["x,y,z", "-x,y,z"], &[("Na", [0.99999, 0.3, 0.3])]);
        // -0.99999 -> 0.00001, which is 2e-5 away from 0.99999 across the boundary.
        assert_eq!(expand_symmetry(&s).sites.len(), 1);
    }

    #[test]
    fn different_elements_never_merge() {
        let s = cubic(&["x,y,z"], &[("Na", [0.0, 0.0, 0.0]), ("Cl", [0.0, 0.0, 0.0])]);
        assert_eq!(expand_symmetry(&s).sites.len(), 2);
    }

    #[test]
    fn identity_inserted_and_coords_normalized() {
        let s = CrystalStructure::new(
            "t",
            [4.0, 4.0, 4.0, 90.0, 90.0, 90.0],
            vec![Site {
                symbol: "Na".into(),
                z: 11,
                frac: [1.25, -0.25, 1.0],
            }],
            vec![SymOp::parse("-x,-y,-z").unwrap()],
        )
        .unwrap();
        assert!(s.symmetry_ops[0].is_identity());
        assert_eq!(s.sites[0].frac, [0.25, 0.75, 0.0]);
        s.validate().unwrap();
    }
}
