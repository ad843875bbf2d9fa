use std::fmt::Write;

use super::structure::CrystalStructure;

/// Serialize into the CIF subset [`super::parse_cif`] reads. Numbers use the
/// shortest representation that parses back to the same `f64`.
pub fn to_cif(s: &CrystalStructure) -> String {
    let mut out = String::new();
    let id = if s.source_id.is_empty() {
        "structure"
    } else {
        s.source_id.as_str()
    };
    let id: String = id.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    writeln!(out, "data_{id}").unwrap();
    let names = [
        "_cell_length_a",
        "_cell_length_b",
        "_cell_length_c",
        "_cell_angle_alpha",
        "_cell_angle_beta",
        "_cell_angle_gamma",
    ];
    for (name, value) in names.iter().zip(s.cell()) {
        writeln!(out, "{name:<18} {value:?}").unwrap();
    }
    out.push_str("loop_\n_symmetry_equiv_pos_as_xyz\n");
    for op in &s.symmetry_ops {
        writeln!(out, "'{op}'").unwrap();
    }
    out.push_str(
        "loop_\n_atom_site_label\n_atom_site_type_symbol\n_atom_site_fract_x\n_atom_site_fract_y\n_atom_site_fract_z\n",
    );
    for (i, site) in s.sites.iter().enumerate() {
        let [x, y, z] = site.frac;
        writeln!(out, "{}{} {} {x:?} {y:?} {z:?}", site.symbol, i + 1, site.symbol).unwrap();
    }
    out
}
