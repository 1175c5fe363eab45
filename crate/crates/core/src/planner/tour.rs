//! Open-tour sequencing under an altitude-penalized distance.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, Vec3};

/// Travel cost |a - b| + w * |h(b) - h(a)|, with heights measured along `up`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TourCost {
    pub up: Vec3,
    pub altitude_weight: f64,
}

impl TourCost {
    pub fn new(up: Vec3) -> Self {
        TourCost {
            up,
            altitude_weight: 0.3,
        }
    }

    pub fn cost(&self, a: &Point3, b: &Point3) -> f64 {
        let d = *b - *a;
        d.norm() + self.altitude_weight * d.dot(&self.up).abs()
    }

    /// Cost of visiting `order` after `start`.
    pub fn path_cost(&self, start: &Point3, pts: &[Point3], order: &[usize]) -> f64 {
        let mut prev = *start;
        let mut total = 0.0;
        for &i in order {
            total += self.cost(&prev, &pts[i]);
            prev = pts[i];
        }
        total
    }
}

/// Visiting order, its final cost, and the plain nearest-neighbor cost it
/// is guaranteed not to exceed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub cost: f64,
    pub nearest_neighbor_cost: f64,
}

/// Greedy nearest neighbor from `start`; ties go to the lower index.
pub fn nearest_neighbor(start: &Point3, pts: &[Point3], c: &TourCost) -> Vec<usize> {
    greedy_from(start, pts, c, Vec::with_capacity(pts.len()))
}

/// Greedy paths from `start`: plain nearest neighbor first, then one
/// path per forced first stop.
pub fn repetitive_nearest_neighbor(
    start: &Point3,
    pts: &[Point3],
    c: &TourCost,
) -> Vec<Vec<usize>> {
    let mut out = vec![nearest_neighbor(start, pts, c)];
    out.extend((0..pts.len()).map(|first| greedy_from(start, pts, c, vec![first])));
    out
}

fn greedy_from(start: &Point3, pts: &[Point3], c: &TourCost, mut order: Vec<usize>) -> Vec<usize> {
    let mut left: Vec<usize> = (0..pts.len()).filter(|i| !order.contains(i)).collect();
    let mut cur = order.last().map_or(*start, |&i| pts[i]);
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if c.cost(&cur, &pts[left[k]]) < c.cost(&cur, &pts[left[best]]) {
                best = k;
            }
        }
        let i = left.remove(best);
        order.push(i);
        cur = pts[i];
    }
    order
}

/// First-improvement 2-opt on an open path with a fixed start. Reversing
/// `order[i..=j]` changes only the two boundary legs because the cost is
/// symmetric.
pub fn two_opt(
    start: &Point3,
    pts: &[Point3],
    order: &mut [usize],
    c: &TourCost,
    max_passes: usize,
) {
    let n = order.len();
    let at = |order: &[usize], k: usize| if k == 0 { *start } else { pts[order[k - 1]] };
    for _ in 0..max_passes {
        let mut improved = false;
        // Path positions 0..=n, position 0 is the start.
        for i in 1..n {
            for j in i + 1..=n {
                let (a, b, cc) = (at(order, i - 1), at(order, i), at(order, j));
                let mut delta = c.cost(&a, &cc) - c.cost(&a, &b);
                if j < n {
                    let d = at(order, j + 1);
                    delta += c.cost(&b, &d) - c.cost(&cc, &d);
                }
                if delta < -1e-12 {
                    order[i - 1..j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Every repetitive-nearest-neighbor path is refined by 2-opt and the
/// cheapest result is kept (earliest on ties). The plain nearest-neighbor
/// path is among the starts, so the result never costs more than it.
pub fn optimize_tour(start: &Point3, pts: &[Point3], c: &TourCost, max_passes: usize) -> Tour {
    let starts = repetitive_nearest_neighbor(start, pts, c);
    let nn = c.path_cost(start, pts, &starts[0]);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mut order in starts {
        two_opt(start, pts, &mut order, c, max_passes);
        let cost = c.path_cost(start, pts, &order);
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((order, cost));
        }
    }
    let (order, cost) = best.expect("at least the nearest-neighbor start");
    Tour {
        order,
        cost,
        nearest_neighbor_cost: nn,
    }
}
