use super::EnergySystem;
use crate::error::Result;
use crate::features::{HomogeneousLine, LineMatch, LineSegment, Point, PointMatch};
use crate::geometry::{BilinearAnchor, Mesh};

/// Key point spacing along lines, pixels at full resolution.
pub const KEY_POINT_SPACING: f64 = 10.0;
/// Minimum key points per line, endpoints included.
pub const MIN_KEY_POINTS: usize = 3;

/// A source point tied to the mesh, with the position it should reach.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredPoint {
    pub anchor: BilinearAnchor,
    pub target: Point,
}

/// Key points of a matched source segment and the target line they should lie on.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredLine {
    pub key_points: Vec<BilinearAnchor>,
    pub line: HomogeneousLine,
}

/// A source segment whose key points should stay on the chord between its
/// warped endpoints. `interior` pairs each inner key point with its rest
/// parameter along the segment.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredSegment {
    pub start: BilinearAnchor,
    pub end: BilinearAnchor,
    pub interior: Vec<(BilinearAnchor, f64)>,
}

/// Vertex `constrained` should sit at `base + u·(apex − base) + v·R₉₀(apex − base)`
/// as it does at rest, with `R₉₀(x, y) = (y, −x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleConstraint {
    pub constrained: usize,
    pub base: usize,
    pub apex: usize,
    pub u: f64,
    pub v: f64,
}

impl AnchoredPoint {
    /// Coordinates divided by `factor`, for a coarser pyramid level.
    pub fn scaled_down(&self, factor: f64) -> Self {
        Self { anchor: self.anchor, target: Point::new(self.target.x / factor, self.target.y / factor) }
    }
}

impl AnchoredLine {
    pub fn scaled_down(&self, factor: f64) -> Self {
        Self { key_points: self.key_points.clone(), line: self.line.scaled_down(factor) }
    }
}

pub fn anchor_points(mesh: &Mesh, matches: &[PointMatch]) -> Result<Vec<AnchoredPoint>> {
    matches.iter().map(|m| Ok(AnchoredPoint { anchor: mesh.anchor(&m.p)?, target: m.p_prime })).collect()
}

pub fn anchor_lines(mesh: &Mesh, lines: &[LineMatch]) -> Result<Vec<AnchoredLine>> {
    lines
        .iter()
        .map(|l| {
            let key_points = l
                .seg
                .key_points(KEY_POINT_SPACING, MIN_KEY_POINTS)
                .iter()
                .map(|(p, _)| mesh.anchor(p))
                .collect::<Result<_>>()?;
            Ok(AnchoredLine { key_points, line: l.line_prime })
        })
        .collect()
}

pub fn anchor_segments(mesh: &Mesh, segments: &[LineSegment]) -> Result<Vec<AnchoredSegment>> {
    segments
        .iter()
        .map(|s| {
            let keys = s.key_points(KEY_POINT_SPACING, MIN_KEY_POINTS);
            let interior = keys[1..keys.len() - 1]
                .iter()
                .map(|(p, u)| Ok((mesh.anchor(p)?, *u)))
                .collect::<Result<_>>()?;
            Ok(AnchoredSegment { start: mesh.anchor(&s.start)?, end: mesh.anchor(&s.end)?, interior })
        })
        .collect()
}

fn axis_terms(anchor: &BilinearAnchor, axis: usize, scale: f64, out: &mut Vec<(usize, f64)>) {
    for k in 0..4 {
        out.push((2 * anchor.vertex_ids[k] + axis, scale * anchor.weights[k]));
    }
}

/// Anchored points pulled onto their targets.
pub fn add_point_term(sys: &mut EnergySystem, points: &[AnchoredPoint], weight: f64) {
    let mut terms = Vec::with_capacity(4);
    for p in points {
        for (axis, target) in [(0, p.target.x), (1, p.target.y)] {
            terms.clear();
            axis_terms(&p.anchor, axis, 1.0, &mut terms);
            sys.add_residual(&terms, target, weight);
        }
    }
}

/// Key points pulled onto their target lines; the residual is the signed
/// point-to-line distance.
pub fn add_line_term(sys: &mut EnergySystem, lines: &[AnchoredLine], weight: f64) {
    let mut terms = Vec::with_capacity(8);
    for l in lines {
        let [a, b, c] = l.line.coeffs();
        for anchor in &l.key_points {
            terms.clear();
            axis_terms(anchor, 0, a, &mut terms);
            axis_terms(anchor, 1, b, &mut terms);
            sys.add_residual(&terms, -c, weight);
        }
    }
}

#[inline]
fn rot90(x: f64, y: f64) -> (f64, f64) {
    (y, -x)
}

/// Two triangle constraints per quad, `(v₁; v₃, v₂)` and `(v₄; v₃, v₂)` with
/// corners numbered top-left, top-right, bottom-left, bottom-right.
pub fn similarity_constraints(mesh: &Mesh) -> Vec<TriangleConstraint> {
    let rest = mesh.rest();
    let mut out = Vec::with_capacity(2 * mesh.rows() * mesh.cols());
    for (r, c) in mesh.quads() {
        let [v1, v2, v3, v4] = mesh.quad_vertices(r, c);
        for constrained in [v1, v4] {
            let (base, apex) = (v3, v2);
            let d = rest[apex] - rest[base];
            let e = rest[constrained] - rest[base];
            let len2 = d.norm_squared();
            assert!(len2 > 0.0, "degenerate rest quad ({r}, {c})");
            let (rx, ry) = rot90(d.x, d.y);
            out.push(TriangleConstraint {
                constrained,
                base,
                apex,
                u: (e.x * d.x + e.y * d.y) / len2,
                v: (e.x * rx + e.y * ry) / len2,
            });
        }
    }
    out
}

/// Each triangle kept similar to its rest shape.
pub fn add_similarity_term(sys: &mut EnergySystem, mesh: &Mesh, weight: f64) {
    for t in similarity_constraints(mesh) {
        let (c, b, a) = (2 * t.constrained, 2 * t.base, 2 * t.apex);
        // x: V₁x − V₂x − u(V₃x − V₂x) − v(V₃y − V₂y)
        sys.add_residual(
            &[(c, 1.0), (b, -1.0 + t.u), (a, -t.u), (a + 1, -t.v), (b + 1, t.v)],
            0.0,
            weight,
        );
        // y: V₁y − V₂y − u(V₃y − V₂y) + v(V₃x − V₂x)
        sys.add_residual(
            &[(c + 1, 1.0), (b + 1, -1.0 + t.u), (a + 1, -t.u), (a, t.v), (b, -t.v)],
            0.0,
            weight,
        );
    }
}

/// Inner key points kept on the chord between the warped endpoints.
pub fn add_collinearity_term(sys: &mut EnergySystem, segments: &[AnchoredSegment], weight: f64) {
    let mut terms = Vec::with_capacity(12);
    for s in segments {
        for (anchor, u) in &s.interior {
            for axis in 0..2 {
                terms.clear();
                axis_terms(anchor, axis, 1.0, &mut terms);
                axis_terms(&s.start, axis, -(1.0 - u), &mut terms);
                axis_terms(&s.end, axis, -u, &mut terms);
                sys.add_residual(&terms, 0.0, weight);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::pack;

    fn mesh() -> Mesh {
        Mesh::new(3, 4, 0.0, 0.0, 40.0, 30.0).unwrap()
    }

    #[test]
    fn point_at_vertex_shifted_by_one() {
        let m = mesh();
        let p = m.rest()[m.index(1, 2)];
        let pts = anchor_points(&m, &[PointMatch { p, p_prime: p + nalgebra::Vector2::new(1.0, 0.0), score: 1.0 }]).unwrap();
        let mut sys = EnergySystem::for_vertices(m.vertex_count());
        add_point_term(&mut sys, &pts, 2.5);
        assert!((sys.energy(&pack(m.rest())) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn horizontal_line_distance() {
        let m = mesh();
        let line = AnchoredLine {
            key_points: vec![m.anchor(&Point::new(5.0, 2.0)).unwrap()],
            line: HomogeneousLine::new(0.0, 1.0, 0.0).unwrap(),
        };
        let mut sys = EnergySystem::for_vertices(m.vertex_count());
        add_line_term(&mut sys, &[line], 3.0);
        assert!((sys.energy(&pack(m.rest())) - 3.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn rest_pose_has_zero_shape_energy() {
        let m = mesh();
        let mut sys = EnergySystem::for_vertices(m.vertex_count());
        add_similarity_term(&mut sys, &m, 1.0);
        let seg = LineSegment::new(Point::new(1.0, 2.0), Point::new(37.0, 25.0));
        add_collinearity_term(&mut sys, &anchor_segments(&m, &[seg]).unwrap(), 1.0);
        assert!(sys.energy(&pack(m.rest())).abs() < 1e-9);
        assert_eq!(similarity_constraints(&m).len(), 2 * 3 * 4);
    }

    #[test]
    fn displaced_vertex_breaks_similarity() {
        let m = mesh();
        let mut sys = EnergySystem::for_vertices(m.vertex_count());
        add_similarity_term(&mut sys, &m, 1.0);
        let mut v = m.rest().to_vec();
        v[m.index(1, 1)].x += 0.7;
        assert!(sys.energy_at(&v) > 0.1);
    }

    #[test]
    fn segment_key_points() {
        let m = mesh();
        let seg = LineSegment::new(Point::new(1.0, 1.0), Point::new(31.0, 1.0));
        let a = &anchor_segments(&m, &[seg]).unwrap()[0];
        assert_eq!(a.interior.len(), 2);
        assert!((a.interior[0].1 - 1.0 / 3.0).abs() < 1e-15);
        let short = LineSegment::new(Point::new(1.0, 1.0), Point::new(6.0, 1.0));
        assert_eq!(anchor_segments(&m, &[short]).unwrap()[0].interior.len(), 1);
    }
}
