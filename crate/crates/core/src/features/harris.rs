use super::{DetectorConfig, Point};
use crate::imaging::{blur_binomial, central_gradient, Mask, Plane};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    pub pos: Point,
    pub response: f64,
}

fn harris_response(lum: &Plane, k: f64) -> Plane {
    let (w, h) = (lum.width(), lum.height());
    let (gx, gy) = central_gradient(lum);
    let full = Mask::filled(w, h, true);
    let product = |a: &Plane, b: &Plane| {
        Plane::new(w, h, a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect())
    };
    // Two binomial passes approximate a Gaussian window with σ ≈ 1.4.
    let smooth = |p: Plane| blur_binomial(&blur_binomial(&p, &full), &full);
    let sxx = smooth(product(&gx, &gx));
    let syy = smooth(product(&gy, &gy));
    let sxy = smooth(product(&gx, &gy));
    let data = (0..w * h)
        .map(|i| {
            let (a, b, c) = (sxx.data()[i], syy.data()[i], sxy.data()[i]);
            a * b - c * c - k * (a + b) * (a + b)
        })
        .collect();
    Plane::new(w, h, data)
}

/// Parabolic peak offset from three samples, clamped to half a pixel.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Harris corners at least `margin` pixels from the border, strongest first.
pub fn detect_corners(lum: &Plane, cfg: &DetectorConfig, margin: usize) -> Vec<Corner> {
    let (w, h) = (lum.width(), lum.height());
    let margin = margin.max(1);
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let resp = harris_response(lum, cfg.harris_k);
    let max = resp.data().iter().cloned().fold(0.0f64, f64::max);
    let threshold = (cfg.corner_threshold * max).max(1e-12);
    let r = cfg.corner_spacing.max(1) as isize;

    let mut peaks = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let v = resp.get(x, y);
            if v <= threshold {
                continue;
            }
            // Strict maximum over earlier neighbours, non-strict over later ones,
            // so plateaus yield exactly one peak.
            let mut is_max = true;
            'nms: for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx < 0 || yy < 0 || xx as usize >= w || yy as usize >= h {
                        continue;
                    }
                    let n = resp.get(xx as usize, yy as usize);
                    let earlier = (dy, dx) < (0, 0);
                    if n > v || (earlier && n == v) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                peaks.push((x, y, v));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    peaks.truncate(cfg.max_corners);
    peaks
        .into_iter()
        .map(|(x, y, v)| {
            let ox = parabolic_offset(resp.get(x - 1, y), v, resp.get(x + 1, y));
            let oy = parabolic_offset(resp.get(x, y - 1), v, resp.get(x, y + 1));
            Corner { pos: Point::new(x as f64 + ox, y as f64 + oy), response: v }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_corners() {
        let p = Plane::new(40, 40, vec![0.4; 1600]);
        assert!(detect_corners(&p, &DetectorConfig::default(), 6).is_empty());
    }

    #[test]
    fn square_corners_are_found() {
        let data = (0..64 * 64)
            .map(|i| {
                let (x, y) = (i % 64, i / 64);
                if (20..44).contains(&x) && (20..44).contains(&y) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let p = Plane::new(64, 64, data);
        let corners = detect_corners(&p, &DetectorConfig::default(), 6);
        assert_eq!(corners.len(), 4, "{corners:?}");
        for c in &corners {
            let near = |v: f64| (v - 19.5).abs() < 1.5 || (v - 43.5).abs() < 1.5;
            assert!(near(c.pos.x) && near(c.pos.y), "{c:?}");
        }
    }
}
