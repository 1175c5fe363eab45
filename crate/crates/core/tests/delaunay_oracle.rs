//! Incremental tetrahedralization against brute-force and order-independence oracles.

mod oracles;

use oracles::delaunay::*;
use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyloop_core::delaunay::{TetComplex, INFINITE};
use skyloop_core::geometry::tetra_volume;
use skyloop_core::predicates::orient3d;
use skyloop_core::{Point3, Ray3, Sign};

#[test]
fn matches_brute_force_on_small_sets() {
    for seed in 0..6 {
        let n = 20 + 8 * seed as usize;
        let pts = random_points(n, seed);
        let t = TetComplex::bootstrap(&pts).unwrap();
        t.audit(true).unwrap();
        assert_eq!(
            cells_by_coords(&t),
            brute_force_delaunay(&pts),
            "seed {seed}"
        );
    }
}

#[test]
fn insertion_order_does_not_matter() {
    let pts = random_points(200, 42);
    let reference = cells_by_coords(&TetComplex::bootstrap(&pts).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng);
        let t = TetComplex::bootstrap(&shuffled).unwrap();
        assert_eq!(cells_by_coords(&t), reference);
    }
}

#[test]
fn cospherical_lattice_is_canonical() {
    // A 4x4x4 lattice: every unit cube has eight cospherical corners.
    let mut pts = Vec::new();
    for x in 0..4 {
        for y in 0..4 {
            for z in 0..4 {
                pts.push(Point3::new(x as f64, y as f64, z as f64));
            }
        }
    }
    let reference = TetComplex::bootstrap(&pts).unwrap();
    reference.audit(true).unwrap();
    assert!((hull_volume(&reference) - 27.0).abs() < 1e-9);
    let cells = cells_by_coords(&reference);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..4 {
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng);
        let t = TetComplex::bootstrap(&shuffled).unwrap();
        t.audit(true).unwrap();
        assert_eq!(cells_by_coords(&t), cells);
    }
}

#[test]
fn exhaustive_audit_after_each_insertion() {
    let pts = random_points(500, 9);
    let mut t = TetComplex::bootstrap(&pts[..4]).unwrap();
    for (i, p) in pts[4..].iter().enumerate() {
        let d = t.insert(*p).unwrap();
        let destroyed: BTreeSet<_> = d.destroyed_cell_ids.iter().collect();
        assert!(d.created_cell_ids.iter().all(|c| !destroyed.contains(c)));
        assert!(d.destroyed_cell_ids.iter().all(|&c| !t.is_alive(c)));
        assert!(d.created_cell_ids.iter().all(|&c| t.is_alive(c)));
        t.audit(i % 50 == 0).unwrap();
    }
    t.audit(true).unwrap();
}

#[test]
fn locate_returns_containing_cell() {
    let pts = random_points(300, 5);
    let t = TetComplex::bootstrap(&pts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2_000 {
        let p = Point3::new(
            rng.random_range(-2.0..12.0),
            rng.random_range(-2.0..12.0),
            rng.random_range(-2.0..12.0),
        );
        let c = t.locate(&p);
        let cell = t.cell(c);
        if cell.is_infinite() {
            let k = cell.index_of(INFINITE).unwrap();
            let [a, b, d] = cell.face(k).map(|v| t.point(v));
            assert_eq!(orient3d(&a, &b, &d, &p).unwrap(), Sign::Positive);
        } else {
            for i in 0..4 {
                let [a, b, d] = cell.face(i).map(|v| t.point(v));
                assert_ne!(orient3d(&a, &b, &d, &p).unwrap(), Sign::Negative);
            }
        }
    }
}

/// Parameter interval of the line `q + t*dir` inside a finite tetrahedron.
fn clip(t: &TetComplex, c: u32, q: &Point3, dir: &Point3) -> (f64, f64) {
    let cell = t.cell(c);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..4 {
        let [a, b, d] = cell.face(i).map(|v| t.point(v));
        let n = (b - a).cross(&(d - a));
        let num = n.dot(&(*q - a));
        let den = n.dot(dir);
        // inside: num + t * den >= 0
        if den.abs() < 1e-300 {
            continue;
        }
        let root = -num / den;
        if den > 0.0 {
            lo = lo.max(root);
        } else {
            hi = hi.min(root);
        }
    }
    (lo, hi)
}

#[test]
fn walk_ray_visits_contiguous_cells() {
    let pts = random_points(400, 21);
    let t = TetComplex::bootstrap(&pts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..300 {
        let q = Point3::new(
            rng.random_range(1.0..9.0),
            rng.random_range(1.0..9.0),
            rng.random_range(1.0..9.0),
        );
        let dir = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let ray = Ray3::new(q, dir).unwrap();
        let t_max = rng.random_range(0.5..15.0);
        let steps = t.walk_ray(&ray, t_max).unwrap();
        for w in steps.windows(2) {
            let back = t.cell(w[1].cell).neighbors[w[1].entry_face.unwrap() as usize];
            assert_eq!(back, w[0].cell);
        }
        let mut prev_hi = 0.0;
        for (i, s) in steps.iter().enumerate() {
            if t.is_infinite(s.cell) {
                assert_eq!(i, steps.len() - 1);
                break;
            }
            let (lo, hi) = clip(&t, s.cell, &q, &ray.direction());
            let hi = hi.min(t_max);
            let lo = lo.max(0.0);
            assert!((lo - prev_hi).abs() < 1e-6, "gap between consecutive cells");
            assert!(hi >= lo - 1e-9);
            let mid = ray.at(0.5 * (lo + hi));
            let [a, b, c, d] = t.cell_points(s.cell);
            let tol = 1e-9;
            let total = tetra_volume(&a, &b, &c, &d);
            let parts = tetra_volume(&mid, &b, &c, &d)
                + tetra_volume(&a, &mid, &c, &d)
                + tetra_volume(&a, &b, &mid, &d)
                + tetra_volume(&a, &b, &c, &mid);
            assert!(
                (parts - total).abs() <= tol * (1.0 + total),
                "midpoint outside reported cell"
            );
            prev_hi = hi;
        }
        if !t.is_infinite(steps.last().unwrap().cell) {
            assert!((prev_hi - t_max).abs() < 1e-6, "walk stopped early");
        }
    }
}

#[test]
fn sight_traversal_links_camera_to_vertex() {
    let pts = random_points(300, 31);
    let t = TetComplex::bootstrap(&pts).unwrap();
    let index: HashMap<Key, u32> = (1..=t.num_vertices() as u32)
        .map(|v| (key(&t.point(v)), v))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let v = index[&key(&pts[rng.random_range(0..pts.len())])];
        let cam = Point3::new(
            rng.random_range(-5.0..15.0),
            rng.random_range(-5.0..15.0),
            25.0,
        );
        let tr = t.sight_traversal(v, &cam).unwrap();
        let first = tr.steps.first().unwrap();
        assert!(
            t.is_infinite(first.cell),
            "camera above the hull starts in an infinite cell"
        );
        assert!(t.cell(tr.steps.last().unwrap().cell).vertices.contains(&v));
        for w in tr.steps.windows(2) {
            let back = t.cell(w[1].cell).neighbors[w[1].entry_face.unwrap() as usize];
            assert_eq!(back, w[0].cell);
        }
        if let Some((c, k)) = tr.behind {
            assert_eq!(t.cell(c).vertices[k as usize], v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hull_volume_independent_of_order(
        pts in proptest::collection::vec((0u8..20, 0u8..20, 0u8..20), 8..60),
        seed in any::<u64>(),
    ) {
        let pts: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x as f64, y as f64, z as f64)).collect();
        let Ok(a) = TetComplex::bootstrap(&pts) else { return Ok(()) };
        prop_assert!(a.audit(true).is_ok());
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = TetComplex::bootstrap(&shuffled).unwrap();
        prop_assert!(b.audit(true).is_ok());
        prop_assert!((hull_volume(&a) - hull_volume(&b)).abs() < 1e-6);
        prop_assert_eq!(cells_by_coords(&a), cells_by_coords(&b));
    }
}
