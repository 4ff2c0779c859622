use super::{Plane, RasterImage};

/// Gradient magnitude `‖∇I‖` of the luminance of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientImage {
    pub magnitude: Plane,
}

/// Central differences in the interior, one-sided differences on the border.
/// A dimension of length 1 has zero derivative along it.
pub fn central_gradient(plane: &Plane) -> (Plane, Plane) {
    let (w, h) = (plane.width(), plane.height());
    let mut gx = Plane::zeros(w, h);
    let mut gy = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            gx.set(x, y, diff(w, x, |i| plane.get(i, y)));
            gy.set(x, y, diff(h, y, |j| plane.get(x, j)));
        }
    }
    (gx, gy)
}

#[inline]
fn diff(len: usize, i: usize, at: impl Fn(usize) -> f64) -> f64 {
    if len < 2 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == len - 1 {
        at(i) - at(i - 1)
    } else {
        0.5 * (at(i + 1) - at(i - 1))
    }
}

pub fn gradient_magnitude(img: &RasterImage) -> GradientImage {
    let (gx, gy) = central_gradient(&img.luminance_plane());
    let data = gx.data().iter().zip(gy.data()).map(|(a, b)| a.hypot(*b)).collect();
    GradientImage { magnitude: Plane::new(gx.width(), gx.height(), data) }
}
