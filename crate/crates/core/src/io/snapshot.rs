//! Orthographic, depth-shaded software rasterizer for frame snapshots.

use std::path::Path;

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::Vec3;

pub const BACKGROUND: Rgb<u8> = Rgb([24, 24, 28]);
const CLOTH_COLOR: [f64; 3] = [230.0, 140.0, 70.0];
const OBSTACLE_COLOR: [f64; 3] = [110.0, 160.0, 225.0];

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

/// Orthographic camera. The viewer looks along `-(right x up)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// World point at the image centre.
    pub center: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    /// World distance from the image centre to its left/right border.
    pub half_width: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Looking down `-z` with `+y` up.
    pub fn front(center: Vec3, half_width: f64, width: u32, height: u32) -> Self {
        Self {
            center,
            right: Vec3::x(),
            up: Vec3::y(),
            half_width,
            width,
            height,
        }
    }

    /// Front camera framing every given point with a 10% border.
    pub fn framing<'a>(points: impl IntoIterator<Item = &'a Vec3>, width: u32, height: u32) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if !lo.x.is_finite() {
            return Self::front(Vec3::zeros(), 1.0, width, height);
        }
        let aspect = height as f64 / width as f64;
        let half = (0.5 * (hi.x - lo.x)).max(0.5 * (hi.y - lo.y) / aspect).max(1e-6) * 1.1;
        Self::front((lo + hi) * 0.5, half, width, height)
    }

    fn half_height(&self) -> f64 {
        self.half_width * self.height as f64 / self.width as f64
    }

    /// Pixel coordinates (x right, y down) and depth toward the viewer.
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        let rel = p - self.center;
        let toward_viewer = self.right.cross(&self.up);
        let x = (rel.dot(&self.right) / self.half_width + 1.0) * 0.5 * self.width as f64;
        let y = (1.0 - rel.dot(&self.up) / self.half_height()) * 0.5 * self.height as f64;
        (x, y, rel.dot(&toward_viewer))
    }
}

struct Layer<'a> {
    positions: &'a [Vec3],
    triangles: &'a [[u32; 3]],
    color: [f64; 3],
}

/// Renders the cloth and obstacle; nearer surfaces are brighter.
pub fn render_snapshot(
    cloth_positions: &[Vec3],
    cloth_triangles: &[[u32; 3]],
    obstacle_vertices: &[Vec3],
    obstacle_triangles: &[[u32; 3]],
    camera: &Camera,
) -> RgbImage {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut image = RgbImage::from_pixel(camera.width, camera.height, BACKGROUND);
    let layers = [
        Layer {
            positions: obstacle_vertices,
            triangles: obstacle_triangles,
            color: OBSTACLE_COLOR,
        },
        Layer {
            positions: cloth_positions,
            triangles: cloth_triangles,
            color: CLOTH_COLOR,
        },
    ];

    let projected: Vec<Vec<(f64, f64, f64)>> =
        layers.iter().map(|l| l.positions.iter().map(|p| camera.project(p)).collect()).collect();
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (layer, proj) in layers.iter().zip(&projected) {
        for t in layer.triangles {
            for &v in t {
                dmin = dmin.min(proj[v as usize].2);
                dmax = dmax.max(proj[v as usize].2);
            }
        }
    }
    let span = (dmax - dmin).max(1e-12);

    let mut depth = vec![f64::NEG_INFINITY; w * h];
    for (layer, proj) in layers.iter().zip(&projected) {
        for t in layer.triangles {
            let [a, b, c] = t.map(|v| proj[v as usize]);
            let area = edge(a, b, c.0, c.1);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            let x0 = a.0.min(b.0).min(c.0).floor().max(0.0) as usize;
            let x1 = (a.0.max(b.0).max(c.0).ceil().max(0.0) as usize).min(w);
            let y0 = a.1.min(b.1).min(c.1).floor().max(0.0) as usize;
            let y1 = (a.1.max(b.1).max(c.1).ceil().max(0.0) as usize).min(h);
            for py in y0..y1 {
                for px in x0..x1 {
                    let (sx, sy) = (px as f64 + 0.5, py as f64 + 0.5);
                    let wa = edge(b, c, sx, sy) / area;
                    let wb = edge(c, a, sx, sy) / area;
                    let wc = edge(a, b, sx, sy) / area;
                    if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                        continue;
                    }
                    let z = wa * a.2 + wb * b.2 + wc * c.2;
                    let slot = &mut depth[py * w + px];
                    if z > *slot {
                        *slot = z;
                        let shade = 0.35 + 0.65 * ((z - dmin) / span).clamp(0.0, 1.0);
                        let rgb = layer.color.map(|ch| (ch * shade).round().clamp(0.0, 255.0) as u8);
                        image.put_pixel(px as u32, py as u32, Rgb(rgb));
                    }
                }
            }
        }
    }
    image
}

fn edge(a: (f64, f64, f64), b: (f64, f64, f64), x: f64, y: f64) -> f64 {
    (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0)
}

pub fn snapshot_png(
    cloth_positions: &[Vec3],
    cloth_triangles: &[[u32; 3]],
    obstacle_vertices: &[Vec3],
    obstacle_triangles: &[[u32; 3]],
    camera: &Camera,
    path: impl AsRef<Path>,
) -> Result<(), SnapshotError> {
    render_snapshot(cloth_positions, cloth_triangles, obstacle_vertices, obstacle_triangles, camera)
        .save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
