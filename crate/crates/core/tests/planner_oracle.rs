//! Planner stages against reference implementations and exhaustive search.

mod oracles;

use oracles::planner::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyloop_core::planner::tour::nearest_neighbor;
use skyloop_core::planner::views::ray_candidates;
use skyloop_core::planner::{
    build_obb, dbscan, detect_low_quality, fit_base_plane, generate_viewpoints, optimize_tour,
    plan, sparsify, BasePlane, LowQualityCluster, PlaneProvenance, PlannerParams, RansacParams,
    TourCost, ViewpointParams,
};
use skyloop_core::quality::QualityRecord;
use skyloop_core::Point3;

#[test]
fn dbscan_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..40 {
        // Blobs plus background so that clusters, borders and noise all occur.
        let mut pts = Vec::new();
        for _ in 0..4 {
            let c = Point3::new(
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..2.0),
            );
            for _ in 0..35 {
                pts.push(
                    c + Point3::new(
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.3..0.3),
                    ),
                );
            }
        }
        while pts.len() < 200 {
            pts.push(Point3::new(
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..2.0),
            ));
        }
        let eps = rng.random_range(0.2..0.9);
        let min_pts = rng.random_range(3..8);
        assert_eq!(
            dbscan(&pts, eps, min_pts),
            reference_dbscan(&pts, eps, min_pts),
            "trial {trial}"
        );
    }
}

fn recs(q: &[f64]) -> Vec<QualityRecord> {
    q.iter()
        .enumerate()
        .map(|(i, &q)| QualityRecord {
            face: i as u32,
            gsd: None,
            redundancy: 1,
            reproj_error: None,
            q_total: Some(q),
        })
        .collect()
}

#[test]
fn percentile_threshold_selects_a_quarter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let q: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
        let (tau, low) = detect_low_quality(&recs(&q), None, 25.0);
        // Order statistics: tau interpolates between the 25th and 26th smallest.
        let mut s = q.clone();
        s.sort_by(f64::total_cmp);
        assert!(tau >= s[24] && tau <= s[25]);
        assert!((24..=26).contains(&low.len()), "{}", low.len());
    }
}

#[test]
fn ransac_recovers_tilted_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n_true = Point3::new(0.2, -0.3, 1.0).normalized().unwrap();
    let u = Point3::new(1.0, 0.0, 0.0)
        .cross(&n_true)
        .normalized()
        .unwrap();
    let v = n_true.cross(&u);
    let p0 = Point3::new(1.0, 2.0, 3.0);
    let mut pts: Vec<Point3> = (0..950)
        .map(|_| p0 + u * rng.random_range(-10.0..10.0) + v * rng.random_range(-10.0..10.0))
        .collect();
    for _ in 0..50 {
        pts.push(
            p0 + Point3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(1.0..8.0),
            ),
        );
    }
    let params = RansacParams {
        iterations: 100,
        eps_dist: 0.01 * 28.0,
        min_inlier_ratio: 0.1,
        seed: 5,
    };
    let plane = fit_base_plane(&pts, &[], &params);
    assert_eq!(plane.provenance, PlaneProvenance::MeshRansac);
    let angle = plane.normal.dot(&n_true).abs().min(1.0).acos().to_degrees();
    assert!(angle < 0.5, "angle {angle}");
}

#[test]
fn tilted_box_encloses_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = Point3::new(1.0, 0.0, 1.0).normalized().unwrap();
    let plane = BasePlane {
        normal: n,
        point: Point3::new(0.5, 0.5, 0.0),
        provenance: PlaneProvenance::MeshRansac,
    };
    let pts: Vec<Point3> = (0..300)
        .map(|_| {
            Point3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(0.0..1.0),
                rng.random_range(-1.0..5.0),
            )
        })
        .collect();
    let b = build_obb(&pts, &plane, 1.0, 1e-6).unwrap();
    assert!((b.n.dot(&n) - 1.0).abs() < 1e-12);
    for p in &pts {
        assert!(b.contains(p, 1e-9));
    }
    // With alpha < 1 the box is the same center shrunk.
    let s = build_obb(&pts, &plane, 0.8, 1e-6).unwrap();
    for k in 0..3 {
        assert!((s.extents()[k] - 0.8 * b.extents()[k]).abs() < 1e-9);
        assert!(((s.lo[k] + s.hi[k]) - (b.lo[k] + b.hi[k])).abs() < 1e-9);
    }
}

/// Greedy farthest-point selection written directly from its definition.
fn reference_greedy(pts: &[Point3], d_min: f64, target: usize) -> Vec<usize> {
    let c = pts.iter().fold(Point3::ORIGIN, |a, p| a + *p) / pts.len() as f64;
    let mut first = 0;
    for i in 0..pts.len() {
        if pts[i].distance(&c) < pts[first].distance(&c) {
            first = i;
        }
    }
    let mut sel = vec![first];
    while sel.len() < target {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..pts.len() {
            let d = sel
                .iter()
                .map(|&s| pts[i].distance(&pts[s]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, d)) if d >= d_min => sel.push(i),
            _ => break,
        }
    }
    sel
}

#[test]
fn sparsify_matches_reference_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..3.0),
                )
            })
            .collect();
        let d_min = rng.random_range(0.2..2.0);
        let sel = sparsify(&pts, d_min, 60);
        assert_eq!(sel, reference_greedy(&pts, d_min, 60));
        for (a, &i) in sel.iter().enumerate() {
            for &j in &sel[a + 1..] {
                assert!(pts[i].distance(&pts[j]) >= d_min);
            }
        }
    }
}

#[test]
fn two_opt_against_exhaustive_open_tours() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cost = TourCost::new(Point3::new(0.0, 0.0, 1.0));
    let perms: Vec<Vec<Vec<usize>>> = (0..=8).map(permutations).collect();
    let mut optimal = 0;
    let mut worst: f64 = 1.0;
    let total = 200;
    for _ in 0..total {
        let n = rng.random_range(1..=8);
        let start = Point3::new(
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..5.0),
        );
        let pts: Vec<Point3> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..5.0),
                )
            })
            .collect();
        let t = optimize_tour(&start, &pts, &cost, 1000);
        let best = perms[n]
            .iter()
            .map(|p| cost.path_cost(&start, &pts, p))
            .fold(f64::INFINITY, f64::min);
        let nn = cost.path_cost(&start, &pts, &nearest_neighbor(&start, &pts, &cost));
        assert!(t.cost <= nn + 1e-9);
        assert!(t.cost >= best - 1e-9);
        worst = worst.max(t.cost / best);
        if t.cost <= best + 1e-9 {
            optimal += 1;
        }
    }
    eprintln!("tour optimal in {optimal}/{total}, worst ratio {worst:.4}");
    assert!(
        optimal as f64 >= 0.95 * total as f64,
        "optimal in {optimal}/{total}"
    );
}

fn segments_cross(a: Point3, b: Point3, c: Point3, d: Point3) -> bool {
    let o = |p: Point3, q: Point3, r: Point3| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    o(a, b, c) * o(a, b, d) < 0.0 && o(c, d, a) * o(c, d, b) < 0.0
}

#[test]
fn convex_quad_tour_is_optimal_and_uncrossed() {
    let cost = TourCost::new(Point3::new(0.0, 0.0, 1.0));
    let pts = [
        Point3::new(4.0, 0.0, 0.0),
        Point3::new(0.0, 3.0, 0.0),
        Point3::new(4.0, 3.0, 0.0),
        Point3::new(0.0, 0.0, 0.0),
    ];
    let start = Point3::new(-1.0, -1.0, 0.0);
    let t = optimize_tour(&start, &pts, &cost, 1000);
    let best = permutations(4)
        .iter()
        .map(|p| cost.path_cost(&start, &pts, p))
        .fold(f64::INFINITY, f64::min);
    assert!((t.cost - best).abs() < 1e-12);
    let path: Vec<Point3> = std::iter::once(start)
        .chain(t.order.iter().map(|&i| pts[i]))
        .collect();
    for i in 0..path.len() - 1 {
        for j in i + 2..path.len() - 1 {
            assert!(!segments_cross(path[i], path[i + 1], path[j], path[j + 1]));
        }
    }
}

#[test]
fn altitude_penalty_keeps_layers_contiguous() {
    // Two layers 3 m apart; points within a layer are 2 m apart along a line,
    // so alternating layers costs 3 * 1.3 per hop more than staying.
    let cost = TourCost::new(Point3::new(0.0, 0.0, 1.0));
    let mut pts = Vec::new();
    for i in 0..4 {
        pts.push(Point3::new(2.0 * i as f64, 0.0, 0.0));
        pts.push(Point3::new(2.0 * i as f64, 0.5, 3.0));
    }
    let t = optimize_tour(&Point3::new(-2.0, 0.0, 0.0), &pts, &cost, 1000);
    let layers: Vec<bool> = t.order.iter().map(|&i| pts[i].z > 1.0).collect();
    let switches = layers.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(switches, 1, "{layers:?}");
    let interleaved: Vec<usize> = (0..8).collect();
    assert!(t.cost < cost.path_cost(&Point3::new(-2.0, 0.0, 0.0), &pts, &interleaved));
}

#[test]
fn plan_is_deterministic_and_in_box() {
    let mesh = grid_mesh(50);
    let recs = patchy_records(&mesh, 8);
    let cams: Vec<Point3> = (0..12)
        .map(|i| Point3::new(4.0 * i as f64, 25.0, 30.0))
        .collect();
    // The 1 m grid is coarse relative to the default radius of 0.64 m.
    let params = PlannerParams {
        eps_spatial: 0.03,
        ..PlannerParams::default()
    };
    let diag = 80.0;
    let a = plan(&mesh, &recs, &cams, &cams, cams[0], diag, &params);
    let b = plan(&mesh, &recs, &cams, &cams, cams[0], diag, &params);
    let ser = |p: &skyloop_core::planner::PlanResult| {
        let mut buf = Vec::new();
        p.write_trajectory_json(&mut buf).unwrap();
        (serde_json::to_string(p).unwrap(), buf)
    };
    assert_eq!(ser(&a), ser(&b));
    assert!(!a.clusters.is_empty());
    assert!(!a.selected.is_empty());
    let obb = a.obb.unwrap();
    let d_min = params.d_min * diag;
    for (i, s) in a.selected.iter().enumerate() {
        assert!(obb.contains(&s.position, 1e-9));
        for t in &a.selected[i + 1..] {
            assert!(s.position.distance(&t.position) >= d_min);
        }
    }
    assert!(a.trajectory_cost <= a.nearest_neighbor_cost + 1e-9);
    for c in &a.clusters {
        assert!(c.members.len() >= 5);
        assert!(c
            .members
            .iter()
            .all(|&f| recs[f as usize].score() <= a.tau_quality));
    }
}

#[test]
fn zero_deficit_weights_fall_back_to_uniform_sampling() {
    let mesh = grid_mesh(30);
    let members: Vec<u32> = (0..400).collect();
    let cluster = LowQualityCluster {
        id: 0,
        members: members.clone(),
        centroid: Point3::new(10.0, 5.0, 0.0),
        weights: vec![0.0; 400],
    };
    let plane = BasePlane {
        normal: Point3::new(0.0, 0.0, 1.0),
        point: Point3::ORIGIN,
        provenance: PlaneProvenance::MeshRansac,
    };
    let mut pts = mesh.vertices.clone();
    pts.push(Point3::new(15.0, 15.0, 20.0));
    let obb = build_obb(&pts, &plane, 0.8, 1e-6).unwrap();
    let params = ViewpointParams::default();
    let c = generate_viewpoints(std::slice::from_ref(&cluster), &mesh, &obb, &params);
    // 200 sampled faces, all normals +z, three scales each.
    assert_eq!(c.len(), 600);
    let direct = ray_candidates(
        &cluster.centroid,
        &Point3::new(0.0, 0.0, 1.0),
        &obb,
        &params.scales,
    );
    assert_eq!(&c[..3], &direct[..]);
}
