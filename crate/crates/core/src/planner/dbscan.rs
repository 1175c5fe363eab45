//! DBSCAN over 3D points with a uniform-grid neighborhood index.

use std::collections::HashMap;

use crate::geometry::Point3;

/// Cluster label per point; `None` is noise.
pub type Labels = Vec<Option<usize>>;

struct Grid {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl Grid {
    fn new(points: &[Point3], cell: f64) -> Grid {
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(Self::key_of(p, cell))
                .or_default()
                .push(i as u32);
        }
        Grid { cell, buckets }
    }

    fn key_of(p: &Point3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices within `eps` of `points[i]` (itself included), ascending.
    fn neighbors(&self, points: &[Point3], i: usize, eps: f64, out: &mut Vec<u32>) {
        out.clear();
        let p = points[i];
        let (kx, ky, kz) = Self::key_of(&p, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(
                            b.iter()
                                .copied()
                                .filter(|&j| points[j as usize].distance(&p) <= eps),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Points are visited in index order; a cluster grows breadth-first from
/// its first unvisited core point, and a border point joins the first
/// cluster that reaches it. `min_points` counts the point itself.
pub fn dbscan(points: &[Point3], eps: f64, min_points: usize) -> Labels {
    let n = points.len();
    let mut labels: Labels = vec![None; n];
    if n == 0 || !(eps > 0.0) {
        return labels;
    }
    let grid = Grid::new(points, eps);
    let mut visited = vec![false; n];
    let mut nb = Vec::new();
    let mut cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        grid.neighbors(points, i, eps, &mut nb);
        if nb.len() < min_points {
            continue;
        }
        labels[i] = Some(cluster);
        let mut queue: std::collections::VecDeque<u32> =
            nb.iter().copied().filter(|&j| j as usize != i).collect();
        while let Some(j) = queue.pop_front() {
            let j = j as usize;
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbors(points, j, eps, &mut nb);
            if nb.len() >= min_points {
                queue.extend(
                    nb.iter()
                        .copied()
                        .filter(|&k| !visited[k as usize] || labels[k as usize].is_none()),
                );
            }
        }
        cluster += 1;
    }
    labels
}
