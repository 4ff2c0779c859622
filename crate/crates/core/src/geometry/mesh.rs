use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Point;

/// Regular `rows × cols` grid of quads. `rest` holds the undeformed vertex
/// positions, `vertices` the current (optimized) ones. Vertex `(r, c)` is
/// stored at index `r * (cols + 1) + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    rows: usize,
    cols: usize,
    origin: (f64, f64),
    cell: (f64, f64),
    rest: Vec<Point>,
    pub vertices: Vec<Point>,
}

/// A point written as a convex combination of its enclosing quad's corners,
/// ordered top-left, top-right, bottom-left, bottom-right.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearAnchor {
    pub quad: (usize, usize),
    pub vertex_ids: [usize; 4],
    pub weights: [f64; 4],
}

impl BilinearAnchor {
    pub fn interpolate(&self, vertices: &[Point]) -> Point {
        let mut x = 0.0;
        let mut y = 0.0;
        for k in 0..4 {
            let v = &vertices[self.vertex_ids[k]];
            x += self.weights[k] * v.x;
            y += self.weights[k] * v.y;
        }
        Point::new(x, y)
    }
}

impl Mesh {
    /// Grid spanning `[x0, x1] × [y0, y1]` with `vertices` at rest.
    pub fn new(rows: usize, cols: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("mesh needs at least one row and column".into()));
        }
        if !(x1 > x0 && y1 > y0) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("empty mesh extent [{x0}, {x1}] × [{y0}, {y1}]")));
        }
        let cell = ((x1 - x0) / cols as f64, (y1 - y0) / rows as f64);
        let mut rest = Vec::with_capacity((rows + 1) * (cols + 1));
        for r in 0..=rows {
            for c in 0..=cols {
                rest.push(Point::new(x0 + c as f64 * cell.0, y0 + r as f64 * cell.1));
            }
        }
        Ok(Self { rows, cols, origin: (x0, y0), cell, vertices: rest.clone(), rest })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn vertex_count(&self) -> usize {
        (self.rows + 1) * (self.cols + 1)
    }

    pub fn rest(&self) -> &[Point] {
        &self.rest
    }

    pub fn index(&self, r: usize, c: usize) -> usize {
        r * (self.cols + 1) + c
    }

    /// Row and column of a vertex index.
    pub fn grid_position(&self, index: usize) -> (usize, usize) {
        (index / (self.cols + 1), index % (self.cols + 1))
    }

    /// Corner vertex ids of quad `(r, c)`: top-left, top-right, bottom-left, bottom-right.
    pub fn quad_vertices(&self, r: usize, c: usize) -> [usize; 4] {
        [self.index(r, c), self.index(r, c + 1), self.index(r + 1, c), self.index(r + 1, c + 1)]
    }

    pub fn quads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
    }

    /// Rest-pose extent `(x0, y0, x1, y1)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (x0, y0) = self.origin;
        (x0, y0, x0 + self.cell.0 * self.cols as f64, y0 + self.cell.1 * self.rows as f64)
    }

    pub fn cell_size(&self) -> (f64, f64) {
        self.cell
    }

    /// Anchors `p` on the rest grid.
    pub fn anchor(&self, p: &Point) -> Result<BilinearAnchor> {
        let (x0, y0, x1, y1) = self.extent();
        let tol = 1e-9 * (1.0 + x1.abs().max(y1.abs()));
        if !(p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol && p.y <= y1 + tol) {
            return Err(Error::OutsideMesh { x: p.x, y: p.y });
        }
        let gx = ((p.x - x0) / self.cell.0).clamp(0.0, self.cols as f64);
        let gy = ((p.y - y0) / self.cell.1).clamp(0.0, self.rows as f64);
        let c = (gx.floor() as usize).min(self.cols - 1);
        let r = (gy.floor() as usize).min(self.rows - 1);
        // Fractions measured from the actual rest corner keep reconstruction exact.
        let tl = self.rest[self.index(r, c)];
        let fx = ((p.x - tl.x) / self.cell.0).clamp(0.0, 1.0);
        let fy = ((p.y - tl.y) / self.cell.1).clamp(0.0, 1.0);
        Ok(BilinearAnchor {
            quad: (r, c),
            vertex_ids: self.quad_vertices(r, c),
            weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        })
    }

    /// Position of an anchored point under the current vertices.
    pub fn warp(&self, anchor: &BilinearAnchor) -> Point {
        anchor.interpolate(&self.vertices)
    }

    /// Uniformly rescaled copy (rest grid and vertices), used between pyramid levels.
    pub fn scaled(&self, factor: f64) -> Mesh {
        let s = |p: &Point| Point::new(p.x * factor, p.y * factor);
        Mesh {
            rows: self.rows,
            cols: self.cols,
            origin: (self.origin.0 * factor, self.origin.1 * factor),
            cell: (self.cell.0 * factor, self.cell.1 * factor),
            rest: self.rest.iter().map(s).collect(),
            vertices: self.vertices.iter().map(s).collect(),
        }
    }

    /// Mean Euclidean distance between the current vertices and `other`.
    pub fn mean_displacement(&self, other: &[Point]) -> f64 {
        mean_distance(&self.vertices, other)
    }
}

pub fn mean_distance(a: &[Point], b: &[Point]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mesh() -> Mesh {
        Mesh::new(4, 5, -10.0, 3.0, 90.0, 83.0).unwrap()
    }

    #[test]
    fn layout() {
        let m = mesh();
        assert_eq!(m.vertex_count(), 30);
        assert_eq!(m.rest()[m.index(0, 0)], Point::new(-10.0, 3.0));
        assert_eq!(m.rest()[m.index(4, 5)], Point::new(90.0, 83.0));
        assert_eq!(m.grid_position(m.index(2, 3)), (2, 3));
        assert_eq!(m.vertices, m.rest());
    }

    #[test]
    fn vertex_anchor_is_one_hot() {
        let m = mesh();
        let p = m.rest()[m.index(2, 3)];
        let a = m.anchor(&p).unwrap();
        assert_eq!(a.vertex_ids[0], m.index(2, 3));
        assert_eq!(a.weights, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cell_centre_is_uniform() {
        let m = mesh();
        let a = m.anchor(&Point::new(-10.0 + 30.0, 3.0 + 10.0)).unwrap();
        assert_eq!(a.quad, (0, 1));
        for w in a.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn far_corner_and_outside() {
        let m = mesh();
        let a = m.anchor(&Point::new(90.0, 83.0)).unwrap();
        assert_eq!(a.quad, (3, 4));
        assert!((a.weights[3] - 1.0).abs() < 1e-15);
        assert!(matches!(m.anchor(&Point::new(90.5, 10.0)), Err(Error::OutsideMesh { .. })));
        assert!(matches!(m.anchor(&Point::new(0.0, 2.0)), Err(Error::OutsideMesh { .. })));
    }

    #[test]
    fn scaling_keeps_anchors() {
        let m = mesh();
        let p = Point::new(33.3, 47.1);
        let a = m.anchor(&p).unwrap();
        let half = m.scaled(0.5);
        let b = half.anchor(&Point::new(p.x * 0.5, p.y * 0.5)).unwrap();
        assert_eq!(a.vertex_ids, b.vertex_ids);
        for k in 0..4 {
            assert!((a.weights[k] - b.weights[k]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn anchor_reconstructs_point(x in -10.0f64..90.0, y in 3.0f64..83.0) {
            let m = mesh();
            let a = m.anchor(&Point::new(x, y)).unwrap();
            let q = a.interpolate(m.rest());
            prop_assert!((q.x - x).abs() < 1e-9 && (q.y - y).abs() < 1e-9);
            prop_assert!(a.weights.iter().all(|&w| w >= 0.0));
            prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
