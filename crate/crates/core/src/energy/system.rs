use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::features::Point;

/// Quadratic `E(x) = xᵀAx − 2bᵀx + c` over the stacked vertex coordinates
/// `x = [x₀, y₀, x₁, y₁, …]`, built from weighted linear residuals.
///
/// Only the lower triangle of the symmetric `A` is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySystem {
    lower: Vec<BTreeMap<usize, f64>>,
    rhs: Vec<f64>,
    constant: f64,
}

impl EnergySystem {
    pub fn new(dimension: usize) -> Self {
        Self { lower: vec![BTreeMap::new(); dimension], rhs: vec![0.0; dimension], constant: 0.0 }
    }

    /// System for a mesh with `vertices` vertices.
    pub fn for_vertices(vertices: usize) -> Self {
        Self::new(2 * vertices)
    }

    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// `A[i][j]` (either triangle).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.lower[r].get(&c).copied().unwrap_or(0.0)
    }

    /// Stored lower-triangle entries of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.lower[i].iter().map(|(&c, &v)| (c, v))
    }

    /// Adds `weight · (Σ coeff·x[index] − target)²`. Repeated indices are merged.
    pub fn add_residual(&mut self, terms: &[(usize, f64)], target: f64, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let mut merged: Vec<(usize, f64)> = terms.to_vec();
        merged.sort_by_key(|t| t.0);
        merged.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        for (a, &(i, ci)) in merged.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            self.rhs[i] += weight * ci * target;
            for &(j, cj) in &merged[..=a] {
                if cj != 0.0 {
                    *self.lower[i].entry(j).or_insert(0.0) += weight * ci * cj;
                }
            }
        }
        self.constant += weight * target * target;
    }

    /// Adds a dense block `zᵀHz − 2gᵀz + c` where `z = x[indices]`; `hessian`
    /// is row-major `n × n`, indices must be distinct.
    pub fn add_block(&mut self, indices: &[usize], hessian: &[f64], rhs: &[f64], constant: f64) {
        let n = indices.len();
        debug_assert_eq!(hessian.len(), n * n);
        for a in 0..n {
            let i = indices[a];
            self.rhs[i] += rhs[a];
            for bb in 0..n {
                let j = indices[bb];
                let v = hessian[a * n + bb];
                if j <= i && v != 0.0 {
                    *self.lower[i].entry(j).or_insert(0.0) += v;
                }
            }
        }
        self.constant += constant;
    }

    /// `y = A x`.
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dimension()];
        for (i, row) in self.lower.iter().enumerate() {
            for (&j, &v) in row {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let ax = self.multiply(x);
        let quad: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        quad - 2.0 * lin + self.constant
    }

    /// `∇E = 2(Ax − b)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.multiply(x).iter().zip(&self.rhs).map(|(a, b)| 2.0 * (a - b)).collect()
    }

    pub fn energy_at(&self, vertices: &[Point]) -> f64 {
        self.energy(&pack(vertices))
    }

    /// Sum of two systems over the same unknowns.
    pub fn merge(&mut self, other: &EnergySystem) {
        assert_eq!(self.dimension(), other.dimension());
        for (mine, theirs) in self.lower.iter_mut().zip(&other.lower) {
            for (&j, &v) in theirs {
                *mine.entry(j).or_insert(0.0) += v;
            }
        }
        for (a, b) in self.rhs.iter_mut().zip(&other.rhs) {
            *a += b;
        }
        self.constant += other.constant;
    }

    /// Text dump: a header line `dimension constant`, then `A i j value` for
    /// each stored lower-triangle entry and `b i value` for each nonzero rhs entry.
    pub fn to_triplets(&self) -> String {
        let mut out = format!("{} {:e}\n", self.dimension(), self.constant);
        for (i, row) in self.lower.iter().enumerate() {
            for (&j, &v) in row {
                let _ = writeln!(out, "A {i} {j} {v:e}");
            }
        }
        for (i, &v) in self.rhs.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(out, "b {i} {v:e}");
            }
        }
        out
    }
}

/// Interleaves vertex coordinates into the unknown vector.
pub fn pack(vertices: &[Point]) -> Vec<f64> {
    vertices.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub fn unpack(x: &[f64]) -> Vec<Point> {
    x.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_residual() {
        let mut s = EnergySystem::new(3);
        // 2·(x0 − 3x2 − 5)²
        s.add_residual(&[(0, 1.0), (2, -3.0)], 5.0, 2.0);
        let x = [1.5, 7.0, -0.5];
        let direct = 2.0 * (1.5 + 1.5 - 5.0f64).powi(2);
        assert!((s.energy(&x) - direct).abs() < 1e-12);
        assert_eq!(s.entry(0, 2), s.entry(2, 0));
        assert_eq!(s.entry(2, 2), 18.0);
    }

    #[test]
    fn repeated_indices_merge() {
        let mut a = EnergySystem::new(2);
        a.add_residual(&[(1, 1.0), (0, 2.0), (1, 0.5)], 1.0, 1.0);
        let mut b = EnergySystem::new(2);
        b.add_residual(&[(0, 2.0), (1, 1.5)], 1.0, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn merge_adds() {
        let mut a = EnergySystem::new(2);
        a.add_residual(&[(0, 1.0)], 1.0, 1.0);
        let mut b = EnergySystem::new(2);
        b.add_residual(&[(1, 1.0)], 2.0, 3.0);
        let x = [0.3, -0.4];
        let expect = a.energy(&x) + b.energy(&x);
        a.merge(&b);
        assert!((a.energy(&x) - expect).abs() < 1e-14);
    }

    #[test]
    fn triplet_dump() {
        let mut s = EnergySystem::new(2);
        s.add_residual(&[(0, 1.0), (1, 1.0)], 2.0, 1.0);
        let t = s.to_triplets();
        assert!(t.starts_with("2 4e0\n"));
        assert_eq!(t.lines().filter(|l| l.starts_with("A ")).count(), 3);
        assert_eq!(t.lines().filter(|l| l.starts_with("b ")).count(), 2);
    }
}
