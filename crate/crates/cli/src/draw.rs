//! Match visualisation: source left, target right.

use cpw_stitch::features::{CorrespondenceSet, LineSegment, Point};
use cpw_stitch::imaging::RasterImage;

const POINT: [f64; 3] = [1.0, 0.85, 0.0];
const LINK: [f64; 3] = [0.2, 0.9, 0.3];
const MATCHED: [f64; 3] = [0.1, 0.6, 1.0];
const UNMATCHED: [f64; 3] = [1.0, 0.2, 0.2];

struct Canvas {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn put(&mut self, x: f64, y: f64, color: [f64; 3]) {
        let (x, y) = (x.round(), y.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    fn line(&mut self, a: Point, b: Point, color: [f64; 3]) {
        let steps = (b - a).abs().max().ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            self.put(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), color);
        }
    }

    fn cross(&mut self, p: Point, color: [f64; 3]) {
        for d in -2..=2 {
            self.put(p.x + d as f64, p.y, color);
            self.put(p.x, p.y + d as f64, color);
        }
    }

    fn segment(&mut self, s: &LineSegment, dx: f64, color: [f64; 3]) {
        self.line(Point::new(s.start.x + dx, s.start.y), Point::new(s.end.x + dx, s.end.y), color);
    }
}

pub fn matches(src: &RasterImage, dst: &RasterImage, corr: &CorrespondenceSet) -> RasterImage {
    let width = src.width() + dst.width();
    let height = src.height().max(dst.height());
    let mut c = Canvas { width, height, data: vec![0.0; width * height * 3] };
    for (img, x0) in [(src, 0), (dst, src.width())] {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let px = img.pixel(x, y);
                let rgb = if px.len() >= 3 { [px[0], px[1], px[2]] } else { [px[0]; 3] };
                let i = (y * width + x0 + x) * 3;
                // Dim the background so the overlay stands out.
                for (d, v) in c.data[i..i + 3].iter_mut().zip(rgb) {
                    *d = 0.6 * v;
                }
            }
        }
    }
    let dx = src.width() as f64;
    for s in &corr.unmatched_lines {
        c.segment(s, 0.0, UNMATCHED);
    }
    for m in &corr.matched_lines {
        c.segment(&m.seg, 0.0, MATCHED);
        c.segment(&m.seg_prime, dx, MATCHED);
    }
    for m in &corr.points {
        let q = Point::new(m.p_prime.x + dx, m.p_prime.y);
        c.line(m.p, q, LINK);
        c.cross(m.p, POINT);
        c.cross(q, POINT);
    }
    RasterImage::new(width, height, 3, c.data).expect("canvas dimensions are consistent")
}
