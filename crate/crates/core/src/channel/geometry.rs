//! Manhattan-grid road layout on a square torus, lane positions and pair mobility.
//!
//! Roads of both orientations sit at `(i + 1/2) * side / n` for `i in 0..n`, so the
//! grid tiles seamlessly when vehicles wrap around the torus edge. Each road carries
//! `lanes_per_direction` lanes per travel direction with right-hand traffic.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    /// Road running along x (east-west traffic).
    Horizontal,
    /// Road running along y (north-south traffic).
    Vertical,
}

impl Axis {
    pub fn perpendicular(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heading {
    N,
    S,
    E,
    W,
}

impl Heading {
    pub fn axis(self) -> Axis {
        match self {
            Heading::E | Heading::W => Axis::Horizontal,
            Heading::N | Heading::S => Axis::Vertical,
        }
    }

    /// +1 when travelling toward increasing coordinate.
    fn forward(self) -> bool {
        matches!(self, Heading::E | Heading::N)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lane {
    pub axis: Axis,
    /// Index of the road among roads of the same axis.
    pub road: usize,
    pub heading: Heading,
    /// 0 is the lane closest to the road axis.
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
    pub lane: Lane,
}

impl<T: Scalar> Position<T> {
    pub fn heading(&self) -> Heading {
        self.lane.heading
    }

    /// Coordinate along the direction of the lane.
    pub fn along(&self) -> T {
        match self.lane.axis {
            Axis::Horizontal => self.x,
            Axis::Vertical => self.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    side: T,
    n_roads: usize,
    lane_width: T,
    lanes_per_direction: usize,
}

impl<T: Scalar> Grid<T> {
    pub fn new(side: T, n_roads: usize, lane_width: T, lanes_per_direction: usize) -> Result<Self> {
        if !(side > T::zero()) || !side.is_finite() {
            return Err(Error::invalid("grid_side_m", "must be positive"));
        }
        if n_roads == 0 {
            return Err(Error::invalid("grid_intersections", "must be at least 1"));
        }
        if !(lane_width > T::zero()) || lanes_per_direction == 0 {
            return Err(Error::invalid(
                "lane_width_m",
                "lane width and lane count must be positive",
            ));
        }
        let road_width = lane_width * T::from_count(2 * lanes_per_direction);
        if road_width >= side / T::from_count(n_roads) {
            return Err(Error::invalid(
                "lane_width_m",
                "roads overlap: spacing is narrower than the road width",
            ));
        }
        Ok(Self {
            side,
            n_roads,
            lane_width,
            lanes_per_direction,
        })
    }

    pub fn side(&self) -> T {
        self.side
    }

    /// Number of roads per axis (the grid has `n_roads^2` intersections).
    pub fn n_roads(&self) -> usize {
        self.n_roads
    }

    pub fn lanes_per_direction(&self) -> usize {
        self.lanes_per_direction
    }

    pub fn road_coord(&self, road: usize) -> T {
        (T::from_count(road) + T::lit(0.5)) * self.side / T::from_count(self.n_roads)
    }

    /// Intersection of vertical road `vx` and horizontal road `hy`.
    pub fn intersection(&self, vx: usize, hy: usize) -> (T, T) {
        (self.road_coord(vx), self.road_coord(hy))
    }

    pub fn lanes(&self) -> Vec<Lane> {
        let mut out = Vec::with_capacity(self.n_lanes());
        for axis in [Axis::Horizontal, Axis::Vertical] {
            let dirs = match axis {
                Axis::Horizontal => [Heading::E, Heading::W],
                Axis::Vertical => [Heading::N, Heading::S],
            };
            for road in 0..self.n_roads {
                for heading in dirs {
                    for slot in 0..self.lanes_per_direction {
                        out.push(Lane {
                            axis,
                            road,
                            heading,
                            slot,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn n_lanes(&self) -> usize {
        2 * self.n_roads * 2 * self.lanes_per_direction
    }

    pub fn lane_id(&self, lane: &Lane) -> usize {
        let axis = match lane.axis {
            Axis::Horizontal => 0,
            Axis::Vertical => 1,
        };
        let dir = usize::from(!lane.heading.forward());
        ((axis * self.n_roads + lane.road) * 2 + dir) * self.lanes_per_direction + lane.slot
    }

    /// Signed offset of the lane centre from the road axis.
    fn lane_offset(&self, lane: &Lane) -> T {
        let mag = (T::from_count(lane.slot) + T::lit(0.5)) * self.lane_width;
        match lane.heading {
            Heading::E | Heading::S => -mag,
            Heading::W | Heading::N => mag,
        }
    }

    /// Position on `lane` at along-lane coordinate `along` (wrapped onto the torus).
    pub fn place(&self, lane: Lane, along: T) -> Position<T> {
        let a = self.wrap(along);
        let cross = self.road_coord(lane.road) + self.lane_offset(&lane);
        match lane.axis {
            Axis::Horizontal => Position {
                x: a,
                y: cross,
                lane,
            },
            Axis::Vertical => Position {
                x: cross,
                y: a,
                lane,
            },
        }
    }

    /// Moves `dist` metres forward along the lane, continuing straight through intersections.
    pub fn advance(&self, pos: &Position<T>, dist: T) -> Position<T> {
        let step = if pos.lane.heading.forward() {
            dist
        } else {
            -dist
        };
        self.place(pos.lane, pos.along() + step)
    }

    pub fn wrap(&self, v: T) -> T {
        let r = v % self.side;
        let r = if r < T::zero() { r + self.side } else { r };
        // `-tiny % side + side` can round up to `side` itself
        if r >= self.side {
            T::zero()
        } else {
            r
        }
    }

    /// Minimum-image signed difference `a - b` on the torus.
    pub fn delta(&self, a: T, b: T) -> T {
        let half = self.side * T::lit(0.5);
        let mut d = (a - b) % self.side;
        if d > half {
            d = d - self.side;
        } else if d < -half {
            d = d + self.side;
        }
        d
    }

    /// Distance travelled from `behind` to reach `ahead` along their common lane.
    pub fn along_route_gap(&self, ahead: &Position<T>, behind: &Position<T>) -> T {
        let d = if ahead.lane.heading.forward() {
            ahead.along() - behind.along()
        } else {
            behind.along() - ahead.along()
        };
        self.wrap(d)
    }

    pub fn segments_per_road(&self) -> usize {
        self.n_roads + 1
    }

    /// Number of road segments, counting the two halves of a segment split by the torus edge separately.
    pub fn n_segments(&self) -> usize {
        2 * self.n_roads * self.segments_per_road()
    }

    /// Road-segment index containing `pos`.
    pub fn segment_of(&self, pos: &Position<T>) -> usize {
        let along = pos.along();
        let s = (0..self.n_roads)
            .take_while(|&i| self.road_coord(i) <= along)
            .count();
        self.segment_index(pos.lane.axis, pos.lane.road, s)
    }

    pub fn segment_index(&self, axis: Axis, road: usize, s: usize) -> usize {
        let base = match axis {
            Axis::Horizontal => 0,
            Axis::Vertical => self.n_roads * self.segments_per_road(),
        };
        base + road * self.segments_per_road() + s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VuePair<T> {
    pub id: usize,
    pub tx: Position<T>,
    pub rx: Position<T>,
    /// m/s
    pub speed: T,
    /// m
    pub gap: T,
}

impl<T: Scalar> VuePair<T> {
    /// Places the transmitter at `along` on `lane` with the receiver `gap` metres behind it.
    pub fn new(grid: &Grid<T>, id: usize, lane: Lane, along: T, speed: T, gap: T) -> Result<Self> {
        if speed < T::zero() {
            return Err(Error::invalid("speed_kmh", "must be non-negative"));
        }
        if !(gap > T::zero()) || gap >= grid.side() {
            return Err(Error::invalid(
                "pair_gap_m",
                "must be positive and shorter than the grid side",
            ));
        }
        let tx = grid.place(lane, along);
        let rx = grid.advance(&tx, -gap);
        Ok(Self {
            id,
            tx,
            rx,
            speed,
            gap,
        })
    }

    pub fn step(&mut self, grid: &Grid<T>, dt: T) {
        let d = self.speed * dt;
        self.tx = grid.advance(&self.tx, d);
        self.rx = grid.advance(&self.rx, d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::new(250.0, 3, 4.0, 2).unwrap()
    }

    #[test]
    fn roads_tile_the_torus() {
        let g = grid();
        assert!((g.road_coord(0) - 250.0 / 6.0).abs() < 1e-12);
        assert!((g.road_coord(1) - 125.0).abs() < 1e-12);
        assert_eq!(g.n_lanes(), 24);
        let ids: std::collections::HashSet<_> = g.lanes().iter().map(|l| g.lane_id(l)).collect();
        assert_eq!(ids.len(), 24);
        assert!(ids.iter().all(|&i| i < 24));
    }

    #[test]
    fn lanes_follow_right_hand_traffic() {
        let g = grid();
        let east = Lane {
            axis: Axis::Horizontal,
            road: 1,
            heading: Heading::E,
            slot: 0,
        };
        let p = g.place(east, 10.0);
        assert_eq!(p.y, 123.0);
        let north = Lane {
            axis: Axis::Vertical,
            road: 1,
            heading: Heading::N,
            slot: 1,
        };
        let q = g.place(north, 10.0);
        assert_eq!(q.x, 131.0);
        assert_eq!(q.y, 10.0);
    }

    #[test]
    fn delta_uses_minimum_image() {
        let g = grid();
        assert!((g.delta(5.0, 245.0) - 10.0).abs() < 1e-12);
        assert!((g.delta(245.0, 5.0) + 10.0).abs() < 1e-12);
        assert!((g.delta(100.0, 40.0) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn receiver_trails_and_wraps() {
        let g = grid();
        let west = Lane {
            axis: Axis::Horizontal,
            road: 0,
            heading: Heading::W,
            slot: 0,
        };
        let pair = VuePair::new(&g, 0, west, 230.0, 16.0, 50.0).unwrap();
        // heading west, so the receiver sits at larger x, wrapping past the edge
        assert!((pair.rx.x - 30.0).abs() < 1e-9);
        assert!((g.along_route_gap(&pair.tx, &pair.rx) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn segments_count_boundary_halves() {
        let g = grid();
        assert_eq!(g.n_segments(), 24);
        let east = Lane {
            axis: Axis::Horizontal,
            road: 2,
            heading: Heading::E,
            slot: 0,
        };
        assert_eq!(g.segment_of(&g.place(east, 10.0)), 2 * 4);
        assert_eq!(g.segment_of(&g.place(east, 130.0)), 2 * 4 + 2);
        assert_eq!(g.segment_of(&g.place(east, 249.0)), 2 * 4 + 3);
    }

    #[test]
    fn overlapping_roads_rejected() {
        assert!(Grid::new(30.0, 3, 4.0, 2).is_err());
    }
}
