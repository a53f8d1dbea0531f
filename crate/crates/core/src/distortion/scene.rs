//! Procedural clean images: smooth shading, flat shapes, edges and texture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

enum Shape {
    Rect {
        y0: f32,
        x0: f32,
        y1: f32,
        x1: f32,
    },
    Ellipse {
        cy: f32,
        cx: f32,
        ry: f32,
        rx: f32,
    },
    Stripes {
        cy: f32,
        cx: f32,
        r: f32,
        freq: f32,
        angle: f32,
    },
}

struct Layer {
    shape: Shape,
    color: Vec<f32>,
    shade: (f32, f32),
}

fn inside(shape: &Shape, y: f32, x: f32) -> Option<f32> {
    match *shape {
        Shape::Rect { y0, x0, y1, x1 } => (y >= y0 && y < y1 && x >= x0 && x < x1).then_some(1.0),
        Shape::Ellipse { cy, cx, ry, rx } => {
            let d = ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2);
            (d <= 1.0).then_some(1.0)
        }
        Shape::Stripes { cy, cx, r, freq, angle } => {
            let (dy, dx) = (y - cy, x - cx);
            if dy * dy + dx * dx > r * r {
                return None;
            }
            let t = dx * angle.cos() + dy * angle.sin();
            Some(0.5 + 0.5 * (t * freq).sin())
        }
    }
}

/// A seeded synthetic scene with values in `[0, 1]`.
pub fn scene(channels: usize, height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f32, width as f32);
    let base: Vec<f32> = (0..channels).map(|_| rng.random_range(0.2..0.8)).collect();
    let grad_y: f32 = rng.random_range(-0.3..0.3);
    let grad_x: f32 = rng.random_range(-0.3..0.3);
    let area = (height * width) as f32 / (64.0 * 64.0);
    let count = ((rng.random_range(4.0..9.0) * area.sqrt()) as usize).max(3);
    let color = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        let grey: f32 = rng.random_range(0.0..1.0);
        (0..channels)
            .map(|_| (grey + rng.random_range(-0.25..0.25)).clamp(0.0, 1.0))
            .collect()
    };
    let layers: Vec<Layer> = (0..count)
        .map(|_| {
            let cy = rng.random_range(0.0..h);
            let cx = rng.random_range(0.0..w);
            let size = rng.random_range(0.08..0.35) * h.min(w);
            let shape = match rng.random_range(0..3) {
                0 => Shape::Rect {
                    y0: cy - size,
                    x0: cx - size * rng.random_range(0.4..1.6),
                    y1: cy + size * rng.random_range(0.4..1.6),
                    x1: cx + size,
                },
                1 => Shape::Ellipse {
                    cy,
                    cx,
                    ry: size,
                    rx: size * rng.random_range(0.5..1.5),
                },
                _ => Shape::Stripes {
                    cy,
                    cx,
                    r: size,
                    freq: rng.random_range(0.3..1.2),
                    angle: rng.random_range(0.0..std::f32::consts::PI),
                },
            };
            Layer {
                shape,
                color: color(&mut rng),
                shade: (rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004)),
            }
        })
        .collect();
    let mut img = Image::from_fn(channels, height, width, |c, y, x| {
        let (yf, xf) = (y as f32, x as f32);
        let mut v = base[c] + grad_y * (yf / h - 0.5) + grad_x * (xf / w - 0.5);
        for layer in &layers {
            if let Some(t) = inside(&layer.shape, yf, xf) {
                let shaded = layer.color[c] + layer.shade.0 * (yf - h / 2.0) + layer.shade.1 * (xf - w / 2.0);
                v = t * shaded + (1.0 - t) * v;
            }
        }
        v
    });
    img.clamp01();
    img
}
