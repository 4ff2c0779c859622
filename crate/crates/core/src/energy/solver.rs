use super::EnergySystem;
use crate::error::{Error, Result};

/// Pivots below this fraction of the original diagonal count as singular.
const PIVOT_TOLERANCE: f64 = 1e-10;
/// Required relative residual `‖Ax − b‖ / ‖b‖`.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

/// Envelope (skyline) Cholesky factor: row `i` stores `L[i][first[i]..=i]`.
struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.start[i]..self.start[i + 1]]
    }

    fn factor(sys: &EnergySystem) -> Result<Self> {
        let n = sys.dimension();
        let mut first = Vec::with_capacity(n);
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            let f = sys.row(i).next().map_or(i, |(c, _)| c.min(i));
            first.push(f);
            start.push(start[i] + i - f + 1);
        }
        let mut values = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in sys.row(i) {
                values[start[i] + j - first[i]] = v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let diag = sys.entry(i, i);
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = values[start[i] + j - fi];
                let (ri, rj) = (start[i] + lo - fi, start[j] + lo - fj);
                for k in 0..j - lo {
                    s -= values[ri + k] * values[rj + k];
                }
                if j < i {
                    s /= values[start[j + 1] - 1];
                } else if !(s > PIVOT_TOLERANCE * diag && s.is_finite()) {
                    return Err(Error::SingularSystem {
                        index: i,
                        vertex: i / 2,
                        axis: if i % 2 == 0 { 'x' } else { 'y' },
                        reason: if diag <= 0.0 {
                            "no term constrains this coordinate".into()
                        } else {
                            "coordinate is not pinned down by the data terms".into()
                        },
                    });
                } else {
                    s = s.sqrt();
                }
                values[start[i] + j - fi] = s;
            }
        }
        Ok(Self { first, start, values })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let row = self.row(i);
            let f = self.first[i];
            let mut s = x[i];
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                s -= l * x[f + k];
            }
            x[i] = s / row[row.len() - 1];
        }
        for i in (0..n).rev() {
            let row = self.row(i);
            let f = self.first[i];
            x[i] /= row[row.len() - 1];
            let xi = x[i];
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                x[f + k] -= l * xi;
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Minimizer of the quadratic, i.e. the solution of `Ax = b`, by envelope
/// Cholesky with iterative refinement. Deterministic.
pub fn solve(sys: &EnergySystem) -> Result<Vec<f64>> {
    let factor = Skyline::factor(sys)?;
    let b = sys.rhs();
    let b_norm = norm(b);
    let mut x = b.to_vec();
    factor.solve_in_place(&mut x);
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        let mut r: Vec<f64> = sys.multiply(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let r_norm = norm(&r);
        rel = if b_norm > 0.0 { r_norm / b_norm } else { r_norm };
        if rel <= 1e-13 {
            break;
        }
        factor.solve_in_place(&mut r);
        x.iter_mut().zip(&r).for_each(|(xi, d)| *xi += d);
    }
    let r: Vec<f64> = sys.multiply(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    rel = rel.min(if b_norm > 0.0 { norm(&r) / b_norm } else { norm(&r) });
    if !(rel <= SOLVE_TOLERANCE) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveInaccurate(rel));
    }
    Ok(x)
}
