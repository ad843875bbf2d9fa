//! Tokenizer and reader for the CIF subset this crate understands: the six
//! cell tags, a symmetry-operation list and the atom-site loop. Everything
//! else is skipped. Only the first data block is read.

use std::collections::HashMap;

use super::structure::{CrystalStructure, Site};
use super::symmetry::SymOp;
use super::CifError;
use crate::elements::symbol_from_label;

const CELL_TAGS: [&str; 6] = [
    "_cell_length_a",
    "_cell_length_b",
    "_cell_length_c",
    "_cell_angle_alpha",
    "_cell_angle_beta",
    "_cell_angle_gamma",
];
const SYMOP_TAGS: [&str; 4] = [
    "_symmetry_equiv_pos_as_xyz",
    "_space_group_symop_operation_xyz",
    "_symmetry_equiv_pos_as_xyz_",
    "_space_group_symop.operation_xyz",
];

#[derive(Clone, Debug, PartialEq)]
enum Token {
    /// Unquoted word; may be a tag, a reserved word or a value.
    Bare(String),
    /// Quoted string or semicolon text field; always a value.
    Quoted(String),
}

impl Token {
    fn text(&self) -> &str {
        match self {
            Token::Bare(s) | Token::Quoted(s) => s,
        }
    }

    fn is_tag(&self) -> bool {
        matches!(self, Token::Bare(s) if s.starts_with('_'))
    }

    fn is_reserved(&self) -> bool {
        match self {
            Token::Bare(s) => {
                let lower = s.to_ascii_lowercase();
                lower == "loop_"
                    || lower.starts_with("data_")
                    || lower.starts_with("save_")
                    || lower == "global_"
                    || lower == "stop_"
            }
            Token::Quoted(_) => false,
        }
    }
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        if let Some(rest) = line.strip_prefix(';') {
            // Semicolon-delimited text field spanning lines.
            let mut field = String::from(rest);
            for next in lines.by_ref() {
                if next.starts_with(';') {
                    break;
                }
                field.push('\n');
                field.push_str(next);
            }
            tokens.push(Token::Quoted(field.trim().to_string()));
            continue;
        }
        tokenize_line(line, &mut tokens);
    }
    tokens
}

fn tokenize_line(line: &str, tokens: &mut Vec<Token>) {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            return;
        }
        if c == '\'' || c == '"' {
            // A quote closes only when followed by whitespace or end of line.
            let mut j = i + 1;
            while j < chars.len() && !(chars[j] == c && (j + 1 == chars.len() || chars[j + 1].is_whitespace())) {
                j += 1;
            }
            tokens.push(Token::Quoted(chars[i + 1..j.min(chars.len())].iter().collect()));
            i = j + 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        tokens.push(Token::Bare(chars[start..i].iter().collect()));
    }
}

/// A data block reduced to single-valued tags and loops.
#[derive(Debug, Default)]
struct Block {
    name: String,
    items: HashMap<String, String>,
    loops: Vec<Loop>,
}

#[derive(Debug)]
struct Loop {
    tags: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Loop {
    fn column(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }
}

fn read_first_block(tokens: &[Token]) -> Result<Block, CifError> {
    let mut block = Block::default();
    let mut i = 0;
    let mut seen_block = false;
    while i < tokens.len() {
        let tok = &tokens[i];
        let lower = tok.text().to_ascii_lowercase();
        if !tok.is_tag() && !tok.is_reserved() {
            // Stray value outside any tag; tolerate and move on.
            i += 1;
            continue;
        }
        if lower.starts_with("data_") && matches!(tok, Token::Bare(_)) {
            if seen_block {
                break;
            }
            seen_block = true;
            block.name = tok.text()[5..].to_string();
            i += 1;
        } else if lower == "loop_" {
            i += 1;
            let mut tags = Vec::new();
            while i < tokens.len() && tokens[i].is_tag() {
                tags.push(tokens[i].text().to_ascii_lowercase());
                i += 1;
            }
            let mut values = Vec::new();
            while i < tokens.len() && !tokens[i].is_tag() && !tokens[i].is_reserved() {
                values.push(tokens[i].text().to_string());
                i += 1;
            }
            if tags.is_empty() || values.len() % tags.len() != 0 {
                return Err(CifError::MalformedLoop {
                    first_tag: tags.first().cloned().unwrap_or_default(),
                    columns: tags.len(),
                    values: values.len(),
                });
            }
            let rows = values.chunks(tags.len()).map(<[String]>::to_vec).collect();
            block.loops.push(Loop { tags, rows });
        } else if tok.is_tag() {
            let key = lower;
            i += 1;
            if i < tokens.len() && !tokens[i].is_tag() && !tokens[i].is_reserved() {
                block.items.insert(key, tokens[i].text().to_string());
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    Ok(block)
}

/// Numeric CIF value with an optional standard uncertainty, `1.234(5)`.
/// `?` and `.` mean "not given".
fn parse_numeric(raw: &str) -> Result<Option<f64>, CifError> {
    let trimmed = raw.trim();
    if trimmed == "?" || trimmed == "." {
        return Ok(None);
    }
    let value = match trimmed.find('(') {
        Some(p) => &trimmed[..p],
        None => trimmed,
    };
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| CifError::InvalidNumber(raw.to_string()))
}

/// Parse CIF text into a validated structure. Symmetry operations are kept,
/// not applied; see [`super::expand_symmetry`].
pub fn parse_cif(text: &str) -> Result<CrystalStructure, CifError> {
    let tokens = tokenize(text);
    let block = read_first_block(&tokens)?;

    let mut cell = [0.0; 6];
    for (k, tag) in CELL_TAGS.iter().enumerate() {
        let raw = block.items.get(*tag).ok_or(CifError::MissingCellParameter(tag))?;
        cell[k] = parse_numeric(raw)?.ok_or(CifError::MissingCellParameter(tag))?;
    }

    let mut ops = Vec::new();
    for tag in SYMOP_TAGS {
        if let Some(single) = block.items.get(tag) {
            ops.push(SymOp::parse(single)?);
        }
        for lp in &block.loops {
            if let Some(col) = lp.column(tag) {
                for row in &lp.rows {
                    ops.push(SymOp::parse(&row[col])?);
                }
            }
        }
        if !ops.is_empty() {
            break;
        }
    }

    let mut sites = Vec::new();
    if let Some(lp) = block.loops.iter().find(|l| l.column("_atom_site_fract_x").is_some()) {
        let cols = ["_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z"].map(|t| lp.column(t));
        let [Some(cx), Some(cy), Some(cz)] = cols else {
            return Err(CifError::MalformedLoop {
                first_tag: "_atom_site_fract_x".into(),
                columns: lp.tags.len(),
                values: 0,
            });
        };
        let species_col = lp
            .column("_atom_site_type_symbol")
            .or_else(|| lp.column("_atom_site_label"))
            .ok_or_else(|| CifError::UnknownElement("<no species column>".into()))?;
        for row in &lp.rows {
            let label = &row[species_col];
            let symbol = symbol_from_label(label).ok_or_else(|| CifError::UnknownElement(label.clone()))?;
            let mut frac = [0.0; 3];
            for (k, col) in [cx, cy, cz].into_iter().enumerate() {
                frac[k] = parse_numeric(&row[col])?.ok_or_else(|| CifError::InvalidNumber(row[col].clone()))?;
            }
            sites.push(Site::new(symbol, frac)?);
        }
    }

    let structure = CrystalStructure::new(block.name, cell, sites, ops)?;
    structure.validate()?;
    Ok(structure)
}
