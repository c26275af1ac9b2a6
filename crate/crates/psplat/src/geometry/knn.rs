//! Exact k-nearest-neighbor search over the primitive cloud, accelerated by
//! a uniform grid, with a deterministic (distance, index) tie-break.

use super::{Aabb, AdjacencyGraph, PrimitiveCloud};
use nalgebra::Point3;

struct UniformGrid {
    cell: f64,
    dims: [i64; 3],
    origin: Point3<f64>,
    // cell -> point indices, cells keyed densely
    buckets: Vec<Vec<u32>>,
}

impl UniformGrid {
    fn build(points: &[Point3<f64>]) -> Self {
        let bb = Aabb::of_points(points);
        let ext = bb.extent();
        let max_ext = ext.x.max(ext.y).max(ext.z).max(1e-9);
        // target a handful of points per cell
        let n = points.len() as f64;
        let cells_per_axis = (n / 4.0).cbrt().ceil().max(1.0);
        let cell = (max_ext / cells_per_axis).max(1e-9);
        let dims = [
            ((ext.x / cell).floor() as i64 + 1).max(1),
            ((ext.y / cell).floor() as i64 + 1).max(1),
            ((ext.z / cell).floor() as i64 + 1).max(1),
        ];
        let mut buckets = vec![Vec::new(); (dims[0] * dims[1] * dims[2]) as usize];
        let origin = Point3::from(bb.min);
        for (idx, p) in points.iter().enumerate() {
            let c = Self::cell_of(p, &origin, cell, &dims);
            buckets[Self::flat(c, &dims)].push(idx as u32);
        }
        Self {
            cell,
            dims,
            origin,
            buckets,
        }
    }

    fn cell_of(p: &Point3<f64>, origin: &Point3<f64>, cell: f64, dims: &[i64; 3]) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = (((p[a] - origin[a]) / cell).floor() as i64).clamp(0, dims[a] - 1);
        }
        c
    }

    fn flat(c: [i64; 3], dims: &[i64; 3]) -> usize {
        ((c[0] * dims[1] + c[1]) * dims[2] + c[2]) as usize
    }
}

/// Indices of the k nearest neighbors of every point (excluding itself),
/// each list sorted by (distance, index).
pub fn knn_indices(points: &[Point3<f64>], k: usize) -> Vec<Vec<u32>> {
    assert!(k >= 1, "k must be >= 1");
    assert!(points.len() > k, "need more points than k");
    let grid = UniformGrid::build(points);
    let dims = grid.dims;

    let mut out = Vec::with_capacity(points.len());
    for (qi, q) in points.iter().enumerate() {
        // (dist2, idx) candidates, expanded ring by ring until the k-th
        // candidate is provably closer than any unvisited cell
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 8);
        let qc = UniformGrid::cell_of(q, &grid.origin, grid.cell, &dims);
        let max_ring = dims.iter().max().copied().unwrap_or(1);
        for ring in 0..=max_ring {
            // once full, stop when the closest possible point in this ring
            // cannot beat the current k-th distance
            if best.len() >= k {
                let ring_min = (ring - 1).max(0) as f64 * grid.cell;
                if ring_min * ring_min > best[k - 1].0 {
                    break;
                }
            }
            visit_ring(&grid, qc, ring, |bucket| {
                for &pi in bucket {
                    if pi as usize == qi {
                        continue;
                    }
                    let d2 = (points[pi as usize] - q).norm_squared();
                    insert_candidate(&mut best, k, (d2, pi));
                }
            });
        }
        debug_assert!(best.len() >= k);
        best.truncate(k);
        out.push(best.into_iter().map(|(_, i)| i).collect());
    }
    out
}

fn insert_candidate(best: &mut Vec<(f64, u32)>, k: usize, cand: (f64, u32)) {
    let pos = best
        .binary_search_by(|probe| {
            probe
                .0
                .partial_cmp(&cand.0)
                .unwrap()
                .then(probe.1.cmp(&cand.1))
        })
        .unwrap_or_else(|e| e);
    if pos < k {
        best.insert(pos, cand);
        if best.len() > k {
            best.truncate(k);
        }
    }
}

fn visit_ring(grid: &UniformGrid, center: [i64; 3], ring: i64, mut f: impl FnMut(&[u32])) {
    let dims = grid.dims;
    for dx in -ring..=ring {
        for dy in -ring..=ring {
            for dz in -ring..=ring {
                if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                    continue;
                }
                let c = [center[0] + dx, center[1] + dy, center[2] + dz];
                if c.iter().zip(dims.iter()).any(|(v, d)| *v < 0 || v >= d) {
                    continue;
                }
                f(&grid.buckets[UniformGrid::flat(c, &dims)]);
            }
        }
    }
}

/// kNN adjacency over the cloud, symmetrized by union. Ties at equal
/// distance break toward the lower index, so the result is deterministic.
pub fn knn_graph(cloud: &PrimitiveCloud, k: usize) -> AdjacencyGraph {
    let lists = knn_indices(cloud.positions(), k);
    let pairs = lists
        .into_iter()
        .enumerate()
        .flat_map(|(i, js)| js.into_iter().map(move |j| (i as u32, j)));
    AdjacencyGraph::from_pairs(cloud.len(), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn brute_force_knn(points: &[Point3<f64>], k: usize) -> Vec<Vec<u32>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<(f64, u32)> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, q)| ((q - p).norm_squared(), j as u32))
                    .collect();
                d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                d.truncate(k);
                d.into_iter().map(|(_, j)| j).collect()
            })
            .collect()
    }

    #[test]
    fn two_points_single_edge() {
        let cloud =
            PrimitiveCloud::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)])
                .unwrap();
        let g = knn_graph(&cloud, 1);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn collinear_equidistant_symmetrizes() {
        let cloud = PrimitiveCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ])
        .unwrap();
        // point 1 is equidistant from 0 and 2; the tie breaks to index 0,
        // and symmetrization still links (1,2) through point 2's own list
        let g = knn_graph(&cloud, 1);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn duplicate_positions_stay_loop_free() {
        let p = Point3::new(0.5, 0.5, 0.5);
        let cloud = PrimitiveCloud::new(vec![p, p, p, Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let g = knn_graph(&cloud, 2);
        assert!(g.is_symmetric());
        for i in 0..g.len() {
            assert!(!g.neighbors(i).contains(&(i as u32)));
        }
        // duplicates tie-break by index: point 0 picks 1 then 2
        assert_eq!(g.neighbors(0)[..2], [1, 2]);
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let points: Vec<Point3<f64>> = (0..400)
            .map(|_| {
                Point3::new(
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() * 2.0,
                    rng.random::<f64>() * 0.5,
                )
            })
            .collect();
        for k in [1, 4, 9] {
            assert_eq!(knn_indices(&points, k), brute_force_knn(&points, k), "k={k}");
        }
    }

    #[test]
    fn order_independence_with_distinct_distances() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let points: Vec<Point3<f64>> = (0..120)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let cloud = PrimitiveCloud::new(points.clone()).unwrap();
        let g = knn_graph(&cloud, 3);

        // permute, rebuild, map edges back
        let mut perm: Vec<usize> = (0..points.len()).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let permuted: Vec<Point3<f64>> = perm.iter().map(|&i| points[i]).collect();
        let g2 = knn_graph(&PrimitiveCloud::new(permuted).unwrap(), 3);

        let mut back = vec![0u32; perm.len()];
        for (new_i, &old_i) in perm.iter().enumerate() {
            back[new_i] = old_i as u32;
        }
        let mut edges1: Vec<_> = g.edges().collect();
        let mut edges2: Vec<_> = g2
            .edges()
            .map(|(a, b)| {
                let (x, y) = (back[a as usize], back[b as usize]);
                (x.min(y), x.max(y))
            })
            .collect();
        edges1.sort_unstable();
        edges2.sort_unstable();
        assert_eq!(edges1, edges2);
    }
}
