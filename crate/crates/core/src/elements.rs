//! Tabulated per-element properties for Z = 1..103.
//!
//! The table is shipped as `data/elements.tsv` and compiled into the crate.

use std::collections::HashMap;
use std::sync::OnceLock;

const TABLE_TSV: &str = include_str!("../data/elements.tsv");

/// Highest atomic number covered by the table.
pub const MAX_Z: u8 = 103;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    S,
    P,
    D,
    F,
}

impl Block {
    pub fn index(self) -> usize {
        match self {
            Block::S => 0,
            Block::P => 1,
            Block::D => 2,
            Block::F => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementRecord {
    pub z: u8,
    pub symbol: &'static str,
    /// 1..=18; f-block elements are placed in group 3.
    pub group: u8,
    /// 1..=7, with 8 for lanthanides and 9 for actinides.
    pub row: u8,
    pub block: Block,
    /// Pauling scale; 0.0 where undefined.
    pub electronegativity: f64,
    /// First ionization energy in eV.
    pub ionization_energy: f64,
    /// Covalent radius in pm.
    pub covalent_radius: f64,
    pub valence_electrons: u8,
    /// eV; 0.0 where unknown.
    pub electron_affinity: f64,
}

pub struct ElementTable {
    records: Vec<ElementRecord>,
    by_symbol: HashMap<&'static str, u8>,
}

impl ElementTable {
    /// The compiled-in table.
    pub fn get() -> &'static ElementTable {
        static TABLE: OnceLock<ElementTable> = OnceLock::new();
        TABLE.get_or_init(|| parse_table(TABLE_TSV))
    }

    pub fn by_z(&self, z: u8) -> Option<&ElementRecord> {
        if z == 0 {
            return None;
        }
        self.records.get(usize::from(z) - 1)
    }

    /// Exact, case-sensitive symbol lookup ("Na", not "NA").
    pub fn z_of(&self, symbol: &str) -> Option<u8> {
        self.by_symbol.get(symbol).copied()
    }

    pub fn records(&self) -> &[ElementRecord] {
        &self.records
    }
}

fn parse_table(src: &'static str) -> ElementTable {
    let mut records = Vec::with_capacity(usize::from(MAX_Z));
    let mut lines = src.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().expect("element table header");
    assert!(header.starts_with("z\tsymbol"), "unexpected element table header");
    for line in lines {
        let cols: Vec<&'static str> = line.split('\t').collect();
        assert_eq!(cols.len(), 10, "bad element row: {line}");
        let num = |i: usize| -> f64 { cols[i].parse().expect("numeric element column") };
        let block = match cols[4] {
            "s" => Block::S,
            "p" => Block::P,
            "d" => Block::D,
            "f" => Block::F,
            other => panic!("unknown block {other}"),
        };
        records.push(ElementRecord {
            z: cols[0].parse().expect("z"),
            symbol: cols[1],
            group: cols[2].parse().expect("group"),
            row: cols[3].parse().expect("row"),
            block,
            electronegativity: num(5),
            ionization_energy: num(6),
            covalent_radius: num(7),
            valence_electrons: cols[8].parse().expect("valence"),
            electron_affinity: num(9),
        });
    }
    for (i, r) in records.iter().enumerate() {
        assert_eq!(usize::from(r.z), i + 1, "element table must be dense and ordered");
    }
    let by_symbol = records.iter().map(|r| (r.symbol, r.z)).collect();
    ElementTable { records, by_symbol }
}

/// Extract an element symbol from a CIF type symbol or site label such as
/// `Fe2+`, `O1`, `CL3` or `Na`.
pub fn symbol_from_label(label: &str) -> Option<&'static str> {
    let letters: Vec<char> = label.chars().take_while(|c| c.is_ascii_alphabetic()).take(2).collect();
    let table = ElementTable::get();
    let first = letters.first()?.to_ascii_uppercase();
    if let Some(&second) = letters.get(1) {
        let two: String = [first, second.to_ascii_lowercase()].iter().collect();
        if let Some(z) = table.z_of(&two) {
            return table.by_z(z).map(|r| r.symbol);
        }
    }
    let one = first.to_string();
    table.z_of(&one).and_then(|z| table.by_z(z)).map(|r| r.symbol)
}
