//! CIF ingestion into validated [`CrystalStructure`]s.

mod parser;
mod structure;
mod symmetry;
mod writer;

use thiserror::Error;

use crate::lattice::LatticeError;

pub use crate::lattice::frac_to_cart;
pub use parser::parse_cif;
pub use structure::{expand_symmetry, CrystalStructure, Site, SITE_MERGE_TOL};
pub use symmetry::{reduce_unit, SymOp};
pub use writer::to_cif;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CifError {
    #[error("missing cell parameter {0}")]
    MissingCellParameter(&'static str),
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("malformed loop starting at {first_tag}: {values} values for {columns} columns")]
    MalformedLoop {
        first_tag: String,
        columns: usize,
        values: usize,
    },
    #[error("structure has no atomic sites")]
    EmptyStructure,
    #[error("invalid number {0:?}")]
    InvalidNumber(String),
    #[error("invalid symmetry operation {0:?}")]
    InvalidSymmetryOp(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}
