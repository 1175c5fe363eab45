//! Brute-force Delaunay oracle.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyloop_core::delaunay::TetComplex;
use skyloop_core::geometry::tetra_volume;
use skyloop_core::predicates::{insphere, orient3d};
use skyloop_core::{Point3, Sign};

pub type Key = [u64; 3];

pub fn key(p: &Point3) -> Key {
    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
}

pub fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
            )
        })
        .collect()
}

/// Finite cells as sets of coordinate keys, independent of vertex numbering.
pub fn cells_by_coords(t: &TetComplex) -> BTreeSet<[Key; 4]> {
    t.finite_cells()
        .map(|c| {
            let mut k = t.cell_points(c).map(|p| key(&p));
            k.sort_unstable();
            k
        })
        .collect()
}

/// Every non-degenerate 4-subset whose open circumsphere contains no other point.
pub fn brute_force_delaunay(points: &[Point3]) -> BTreeSet<[Key; 4]> {
    let n = points.len();
    let mut out = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let (pa, pb, pc, pd) = (&points[a], &points[b], &points[c], &points[d]);
                    if orient3d(pa, pb, pc, pd).unwrap() == Sign::Zero {
                        continue;
                    }
                    let empty = (0..n)
                        .filter(|&e| ![a, b, c, d].contains(&e))
                        .all(|e| insphere(pa, pb, pc, pd, &points[e]).unwrap() != Sign::Positive);
                    if empty {
                        let mut k = [key(pa), key(pb), key(pc), key(pd)];
                        k.sort_unstable();
                        out.insert(k);
                    }
                }
            }
        }
    }
    out
}

pub fn hull_volume(t: &TetComplex) -> f64 {
    t.finite_cells()
        .map(|c| {
            let [a, b, cc, d] = t.cell_points(c);
            tetra_volume(&a, &b, &cc, &d)
        })
        .sum()
}
