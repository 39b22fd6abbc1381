//! Road-segment zones and their orthogonal RB sets.

use crate::channel::geometry::{Axis, Grid, Position};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Every road segment is a zone; zones are colored so that adjacent ones never share a
/// color, and each color owns a disjoint block of RBs.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    adjacency: Vec<Vec<usize>>,
    color: Vec<usize>,
    color_rbs: Vec<Vec<usize>>,
}

pub fn build_zone_map<T: Scalar>(grid: &Grid<T>, n_rbs: usize) -> Result<ZoneMap> {
    let n = grid.n_roads();
    let per = grid.segments_per_road();
    let n_zones = grid.n_segments();
    let mut adj = vec![Vec::new(); n_zones];
    let mut link = |a: usize, b: usize| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for axis in [Axis::Horizontal, Axis::Vertical] {
        for road in 0..n {
            for s in 0..per {
                let next = (s + 1) % per;
                link(
                    grid.segment_index(axis, road, s),
                    grid.segment_index(axis, road, next),
                );
            }
        }
    }
    // the four segments meeting at each intersection
    for vx in 0..n {
        for hy in 0..n {
            let around = [
                grid.segment_index(Axis::Horizontal, hy, vx),
                grid.segment_index(Axis::Horizontal, hy, vx + 1),
                grid.segment_index(Axis::Vertical, vx, hy),
                grid.segment_index(Axis::Vertical, vx, hy + 1),
            ];
            for i in 0..4 {
                for j in i + 1..4 {
                    link(around[i], around[j]);
                }
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }

    let mut color = greedy_coloring(&adj);
    let mut n_colors = color.iter().max().map_or(0, |c| c + 1);
    if n_colors > 4 {
        color = dsatur_coloring(&adj);
        n_colors = color.iter().max().map_or(0, |c| c + 1);
    }
    if n_rbs < n_colors {
        return Err(Error::invalid(
            "n_rbs",
            format!("{n_rbs} RBs cannot cover {n_colors} zone colors"),
        ));
    }
    let base = n_rbs / n_colors;
    let extra = n_rbs % n_colors;
    let mut color_rbs = Vec::with_capacity(n_colors);
    let mut next = 0;
    for c in 0..n_colors {
        let len = base + usize::from(c < extra);
        color_rbs.push((next..next + len).collect());
        next += len;
    }
    Ok(ZoneMap {
        adjacency: adj,
        color,
        color_rbs,
    })
}

fn greedy_coloring(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut color = vec![usize::MAX; adj.len()];
    for v in 0..adj.len() {
        color[v] = smallest_free(adj, &color, v);
    }
    color
}

fn dsatur_coloring(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut color = vec![usize::MAX; n];
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| color[v] == usize::MAX)
            .max_by_key(|&v| {
                let mut seen: Vec<usize> = adj[v]
                    .iter()
                    .map(|&u| color[u])
                    .filter(|&c| c != usize::MAX)
                    .collect();
                seen.sort_unstable();
                seen.dedup();
                (seen.len(), adj[v].len(), std::cmp::Reverse(v))
            })
            .expect("uncolored vertex remains");
        color[v] = smallest_free(adj, &color, v);
    }
    color
}

fn smallest_free(adj: &[Vec<usize>], color: &[usize], v: usize) -> usize {
    (0..)
        .find(|c| adj[v].iter().all(|&u| color[u] != *c))
        .expect("unbounded search")
}

impl ZoneMap {
    pub fn n_zones(&self) -> usize {
        self.color.len()
    }

    pub fn n_colors(&self) -> usize {
        self.color_rbs.len()
    }

    pub fn color(&self, zone: usize) -> usize {
        self.color[zone]
    }

    pub fn neighbors(&self, zone: usize) -> &[usize] {
        &self.adjacency[zone]
    }

    pub fn zone_rbs(&self, zone: usize) -> &[usize] {
        &self.color_rbs[self.color[zone]]
    }

    pub fn color_rbs(&self, color: usize) -> &[usize] {
        &self.color_rbs[color]
    }

    /// Zone of a pair, taken from its transmitter position.
    pub fn zone_of<T: Scalar>(&self, grid: &Grid<T>, tx: &Position<T>) -> usize {
        grid.segment_of(tx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::new(250.0, 3, 4.0, 2).unwrap()
    }

    #[test]
    fn twenty_four_zones_four_colors() {
        let z = build_zone_map(&grid(), 60).unwrap();
        assert_eq!(z.n_zones(), 24);
        assert_eq!(z.n_colors(), 4);
        for c in 0..4 {
            assert_eq!(z.color_rbs(c).len(), 15);
        }
    }

    #[test]
    fn adjacent_zones_are_orthogonal() {
        let z = build_zone_map(&grid(), 61).unwrap();
        for a in 0..z.n_zones() {
            for &b in z.neighbors(a) {
                assert!(z.zone_rbs(a).iter().all(|rb| !z.zone_rbs(b).contains(rb)));
            }
        }
        assert_eq!(z.color_rbs(0).len(), 16);
    }

    #[test]
    fn too_few_rbs() {
        assert!(matches!(
            build_zone_map(&grid(), 3),
            Err(Error::ConfigInvalid { .. })
        ));
    }
}
