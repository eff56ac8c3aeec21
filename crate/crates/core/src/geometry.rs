//! Axis-aligned boxes and the edges of the square unit cell.

use serde::{Deserialize, Serialize};

use crate::netcore::Point;

/// Tolerance for deciding that a point lies on a line or inside a box.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// Zero-centred square of side `length`.
    pub fn centered(length: f64) -> Self {
        let h = 0.5 * length;
        Rect::new(-h, h, -h, h)
    }

    pub fn center(&self) -> Point {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn half_width(&self) -> Point {
        [0.5 * (self.x1 - self.x0), 0.5 * (self.y1 - self.y0)]
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }

    /// Coordinate of the line carrying `edge`.
    pub fn edge_coord(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left => self.x0,
            Edge::Right => self.x1,
            Edge::Bottom => self.y0,
            Edge::Top => self.y1,
        }
    }

    pub fn edge_length(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left | Edge::Right => self.y1 - self.y0,
            Edge::Bottom | Edge::Top => self.x1 - self.x0,
        }
    }

    /// Whether this box's `edge` lies on the same-named edge of `outer`.
    pub fn shares_edge(&self, outer: &Rect, edge: Edge) -> bool {
        (self.edge_coord(edge) - outer.edge_coord(edge)).abs() <= GEOM_TOL
    }

    pub fn on_edge(&self, p: Point, edge: Edge) -> bool {
        let c = self.edge_coord(edge);
        match edge {
            Edge::Left | Edge::Right => {
                (p[0] - c).abs() <= GEOM_TOL && p[1] >= self.y0 - GEOM_TOL && p[1] <= self.y1 + GEOM_TOL
            }
            Edge::Bottom | Edge::Top => {
                (p[1] - c).abs() <= GEOM_TOL && p[0] >= self.x0 - GEOM_TOL && p[0] <= self.x1 + GEOM_TOL
            }
        }
    }

    /// `n` evenly spaced points along `edge`, endpoints included.
    pub fn edge_points(&self, edge: Edge, n: usize) -> Vec<Point> {
        let c = self.edge_coord(edge);
        let (a, b) = match edge {
            Edge::Left | Edge::Right => (self.y0, self.y1),
            Edge::Bottom | Edge::Top => (self.x0, self.x1),
        };
        (0..n)
            .map(|i| {
                let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
                let s = a + t * (b - a);
                match edge {
                    Edge::Left | Edge::Right => [c, s],
                    Edge::Bottom | Edge::Top => [s, c],
                }
            })
            .collect()
    }
}
