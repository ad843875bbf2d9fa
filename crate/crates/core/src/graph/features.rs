use crate::elements::{ElementRecord, ElementTable};

use super::GraphError;

/// Number of equal-width bins for every continuous attribute.
pub const CONTINUOUS_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub enum Encoding {
    /// One-hot over `categories` consecutive integer values starting at `first`.
    Categorical { first: u32, categories: usize },
    /// One-hot over equal-width bins spanning `[min, max]`.
    Binned { min: f64, max: f64, bins: usize },
}

impl Encoding {
    pub fn width(&self) -> usize {
        match self {
            Encoding::Categorical { categories, .. } => *categories,
            Encoding::Binned { bins, .. } => *bins,
        }
    }

    /// Hot index inside this block.
    pub fn index(&self, value: f64) -> usize {
        match *self {
            Encoding::Categorical { first, categories } => {
                let k = (value as i64 - i64::from(first)).clamp(0, categories as i64 - 1);
                k as usize
            }
            Encoding::Binned { min, max, bins } => {
                if max <= min {
                    return 0;
                }
                let t = ((value - min) / (max - min) * bins as f64).floor();
                (t.max(0.0) as usize).min(bins - 1)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Attribute {
    pub name: &'static str,
    pub encoding: Encoding,
    pub value: fn(&ElementRecord) -> f64,
}

/// The nine per-atom attributes and how each is one-hot encoded.
#[derive(Clone, Debug)]
pub struct AtomFeatureSpec {
    pub attributes: Vec<Attribute>,
}

fn binned(table: &ElementTable, value: fn(&ElementRecord) -> f64) -> Encoding {
    let (min, max) = table
        .records()
        .iter()
        .map(value)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Encoding::Binned {
        min,
        max,
        bins: CONTINUOUS_BINS,
    }
}

impl Default for AtomFeatureSpec {
    /// Group (18), row (9) and block (4) are categorical; the remaining six
    /// attributes are binned over the table's min..max.
    fn default() -> Self {
        let table = ElementTable::get();
        let continuous: [(&'static str, fn(&ElementRecord) -> f64); 6] = [
            ("electronegativity", |r| r.electronegativity),
            ("ionization_energy", |r| r.ionization_energy),
            ("covalent_radius", |r| r.covalent_radius),
            ("valence_electrons", |r| f64::from(r.valence_electrons)),
            ("electron_affinity", |r| r.electron_affinity),
            ("atomic_number", |r| f64::from(r.z)),
        ];
        let mut attributes = vec![
            Attribute {
                name: "group",
                encoding: Encoding::Categorical {
                    first: 1,
                    categories: 18,
                },
                value: |r| f64::from(r.group),
            },
            Attribute {
                name: "row",
                encoding: Encoding::Categorical {
                    first: 1,
                    categories: 9,
                },
                value: |r| f64::from(r.row),
            },
            Attribute {
                name: "block",
                encoding: Encoding::Categorical {
                    first: 0,
                    categories: 4,
                },
                value: |r| r.block.index() as f64,
            },
        ];
        for (name, value) in continuous {
            attributes.push(Attribute {
                name,
                encoding: binned(table, value),
                value,
            });
        }
        AtomFeatureSpec { attributes }
    }
}

impl AtomFeatureSpec {
    pub fn width(&self) -> usize {
        self.attributes.iter().map(|a| a.encoding.width()).sum()
    }

    /// Global hot positions, one per attribute.
    pub fn hot_indices(&self, z: u8) -> Result<Vec<usize>, GraphError> {
        let record = ElementTable::get().by_z(z).ok_or(GraphError::UnknownElement(z))?;
        let mut offset = 0;
        let mut hot = Vec::with_capacity(self.attributes.len());
        for attr in &self.attributes {
            hot.push(offset + attr.encoding.index((attr.value)(record)));
            offset += attr.encoding.width();
        }
        Ok(hot)
    }
}

/// Concatenated one-hot blocks for element `z`.
pub fn atom_features(z: u8, spec: &AtomFeatureSpec) -> Result<Vec<f64>, GraphError> {
    let mut v = vec![0.0; spec.width()];
    for k in spec.hot_indices(z)? {
        v[k] = 1.0;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_per_attribute() {
        let spec = AtomFeatureSpec::default();
        assert_eq!(spec.attributes.len(), 9);
        assert_eq!(spec.width(), 18 + 9 + 4 + 6 * CONTINUOUS_BINS);
        for z in 1..=103u8 {
            let v = atom_features(z, &spec).unwrap();
            assert_eq!(v.len(), spec.width());
            assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 9, "Z={z}");
            assert_eq!(v.iter().filter(|&&x| x != 0.0 && x != 1.0).count(), 0);
        }
    }

    #[test]
    fn same_group_shares_group_index() {
        let spec = AtomFeatureSpec::default();
        // Li, Na, K are all group 1.
        let group_hot = |z| spec.hot_indices(z).unwrap()[0];
        assert_eq!(group_hot(3), group_hot(11));
        assert_eq!(group_hot(11), group_hot(19));
        assert_ne!(group_hot(11), group_hot(17));
    }

    #[test]
    fn unknown_element_rejected() {
        let spec = AtomFeatureSpec::default();
        assert_eq!(atom_features(0, &spec), Err(GraphError::UnknownElement(0)));
        assert_eq!(atom_features(104, &spec), Err(GraphError::UnknownElement(104)));
    }

    #[test]
    fn bin_edges() {
        let e = Encoding::Binned {
            min: 0.0,
            max: 10.0,
            bins: 10,
        };
        assert_eq!(e.index(0.0), 0);
        assert_eq!(e.index(0.999), 0);
        assert_eq!(e.index(1.0), 1);
        assert_eq!(e.index(10.0), 9);
        assert_eq!(e.index(-3.0), 0);
    }
}
