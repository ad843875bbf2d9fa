use serde::{Deserialize, Serialize};

use crate::lattice::{dot, Lattice};

/// Distances within this many Å of each other are treated as tied when
/// ordering neighbors.
pub const DISTANCE_TIE_TOL: f64 = 1e-9;

/// Images closer than this are the center itself and are skipped.
pub const SELF_IMAGE_TOL: f64 = 1e-8;

/// Directed edge from center atom `src` to the image of atom `dst` displaced
/// by `image` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub image: [i32; 3],
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborList {
    pub edges: Vec<Edge>,
    /// Centers that ended up with no neighbor inside the cutoff.
    pub isolated: Vec<usize>,
}

/// For every center, all periodic images with `0 < d <= cutoff`, nearest
/// first, truncated to `max_neighbors`. Equal distances are ordered by
/// `(dst, image)`.
///
/// The image range is computed per pair from the lattice plane spacings, so
/// every image within the cutoff is visited and nothing else is.
pub fn neighbor_search_in(lattice: &Lattice, frac: &[[f64; 3]], cutoff: f64, max_neighbors: usize) -> NeighborList {
    let spacing = lattice.plane_spacings();
    let reach = spacing.map(|d| cutoff / d);
    let rows = lattice.rows();
    let mut out = NeighborList::default();
    let mut candidates: Vec<Edge> = Vec::new();
    for (i, fi) in frac.iter().enumerate() {
        candidates.clear();
        for (j, fj) in frac.iter().enumerate() {
            let delta = [fj[0] - fi[0], fj[1] - fi[1], fj[2] - fi[2]];
            let range = |k: usize| {
                let lo = (-reach[k] - delta[k]).ceil() as i32;
                let hi = (reach[k] - delta[k]).floor() as i32;
                lo..=hi
            };
            for na in range(0) {
                for nb in range(1) {
                    for nc in range(2) {
                        let f = [
                            delta[0] + f64::from(na),
                            delta[1] + f64::from(nb),
                            delta[2] + f64::from(nc),
                        ];
                        let mut cart = [0.0; 3];
                        for (k, row) in rows.iter().enumerate() {
                            for d in 0..3 {
                                cart[d] += f[k] * row[d];
                            }
                        }
                        let distance = dot(cart, cart).sqrt();
                        if distance > SELF_IMAGE_TOL && distance <= cutoff {
                            candidates.push(Edge {
                                src: i,
                                dst: j,
                                image: [na, nb, nc],
                                distance,
                            });
                        }
                    }
                }
            }
        }
        order_neighbors(&mut candidates);
        candidates.truncate(max_neighbors);
        if candidates.is_empty() {
            log::warn!("atom {i} has no neighbors within {cutoff} Å");
            out.isolated.push(i);
        }
        out.edges.extend(candidates.iter().cloned());
    }
    out
}

/// Sort by distance, then reorder each run of tied distances (chained within
/// [`DISTANCE_TIE_TOL`]) by `(dst, image)`.
pub(crate) fn order_neighbors(edges: &mut [Edge]) {
    edges.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let mut start = 0;
    while start < edges.len() {
        let mut end = start + 1;
        while end < edges.len() && edges[end].distance - edges[end - 1].distance <= DISTANCE_TIE_TOL {
            end += 1;
        }
        edges[start..end].sort_by(|a, b| (a.dst, a.image).cmp(&(b.dst, b.image)));
        start = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice_matrix;

    #[test]
    fn simple_cubic_six_neighbors() {
        let l = build_lattice_matrix(1.0, 1.0, 1.0, 90.0, 90.0, 90.0).unwrap();
        let nl = neighbor_search_in(&l, &[[0.0; 3]], 1.1, 12);
        assert_eq!(nl.edges.len(), 6);
        assert!(nl.edges.iter().all(|e| e.distance == 1.0));
        assert!(nl.isolated.is_empty());
        // Lexicographic tie order over image offsets.
        assert_eq!(nl.edges[0].image, [-1, 0, 0]);
        assert_eq!(nl.edges[5].image, [1, 0, 0]);
    }

    #[test]
    fn below_nearest_distance_isolates() {
        let l = build_lattice_matrix(1.0, 1.0, 1.0, 90.0, 90.0, 90.0).unwrap();
        let nl = neighbor_search_in(&l, &[[0.0; 3]], 0.9, 12);
        assert!(nl.edges.is_empty());
        assert_eq!(nl.isolated, vec![0]);
    }

    #[test]
    fn truncation_keeps_nearest() {
        let l = build_lattice_matrix(1.0, 1.0, 1.0, 90.0, 90.0, 90.0).unwrap();
        let nl = neighbor_search_in(&l, &[[0.0; 3]], 1.5, 8);
        // 6 at 1.0, then 2 of the 12 at sqrt(2).
        assert_eq!(nl.edges.len(), 8);
        assert_eq!(nl.edges.iter().filter(|e| e.distance == 1.0).count(), 6);
        assert_eq!(nl.edges[6].image, [-1, -1, 0]);
        assert_eq!(nl.edges[7].image, [-1, 0, -1]);
    }
}
