//! Background panoramas and floor textures.
//!
//! The shipped `procedural:indoor` / `procedural:outdoor` panoramas are
//! small equirectangular images generated from gradients and value noise.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::geom::Vec3;
use crate::imageio;
use crate::rng::mix64;

use super::RenderError;

pub const PROCEDURAL_WIDTH: u32 = 512;
pub const PROCEDURAL_HEIGHT: u32 = 256;

/// Lattice value noise in [0, 1].
pub fn value_noise(x: f64, y: f64, salt: u64) -> f64 {
    let (xi, yi) = (x.floor(), y.floor());
    let (fx, fy) = (x - xi, y - yi);
    let corner = |dx: f64, dy: f64| {
        let h = mix64(((xi + dx) as i64 as u64).wrapping_mul(0x9E37_79B9) ^ mix64((yi + dy) as i64 as u64) ^ salt);
        (h >> 11) as f64 / (1u64 << 53) as f64
    };
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let top = corner(0.0, 0.0) * (1.0 - sx) + corner(1.0, 0.0) * sx;
    let bottom = corner(0.0, 1.0) * (1.0 - sx) + corner(1.0, 1.0) * sx;
    top * (1.0 - sy) + bottom * sy
}

fn fbm(x: f64, y: f64, salt: u64) -> f64 {
    let mut sum = 0.0;
    let mut amp = 0.5;
    let mut freq = 1.0;
    for octave in 0..4 {
        sum += amp * value_noise(x * freq, y * freq, salt ^ octave);
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / 0.9375
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// Equirectangular RGB image; `u` wraps longitude, `v` runs from the +Z pole down.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl Panorama {
    pub fn load(source: &str) -> Result<Panorama, RenderError> {
        match source.strip_prefix("procedural:") {
            Some(name) => Self::procedural(name),
            None => {
                let file = std::fs::File::open(source).map_err(|e| RenderError::Panorama(format!("{source}: {e}")))?;
                let (width, height, rgb) =
                    imageio::decode_rgb8(file).map_err(|e| RenderError::Panorama(format!("{source}: {e}")))?;
                let pixels = rgb
                    .chunks_exact(3)
                    .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
                    .collect();
                Ok(Panorama { width, height, pixels })
            }
        }
    }

    pub fn procedural(name: &str) -> Result<Panorama, RenderError> {
        let (w, h) = (PROCEDURAL_WIDTH, PROCEDURAL_HEIGHT);
        let f: fn(f64, f64) -> [f64; 3] = match name {
            "indoor" => indoor,
            "outdoor" => outdoor,
            other => return Err(RenderError::Panorama(format!("unknown procedural panorama `{other}`"))),
        };
        let mut pixels = Vec::with_capacity((w * h) as usize);
        for j in 0..h {
            for i in 0..w {
                let lon = (i as f64 + 0.5) / w as f64 * TAU - PI;
                let lat = FRAC_PI_2 - (j as f64 + 0.5) / h as f64 * PI;
                pixels.push(f(lon, lat));
            }
        }
        Ok(Panorama { width: w, height: h, pixels })
    }

    /// Nearest-texel lookup for a world direction, after undoing the
    /// background's rotation about +Z.
    pub fn sample(&self, dir: &Vec3, rotation: f64) -> [f64; 3] {
        let lon = (dir.y.atan2(dir.x) - rotation).rem_euclid(TAU);
        let lat = dir.z.clamp(-1.0, 1.0).asin();
        let u = lon / TAU;
        let v = (FRAC_PI_2 - lat) / PI;
        let i = ((u * self.width as f64) as u32).min(self.width - 1);
        let j = ((v * self.height as f64) as u32).min(self.height - 1);
        self.pixels[(j * self.width + i) as usize]
    }
}

fn indoor(lon: f64, lat: f64) -> [f64; 3] {
    let wall = lerp3([0.78, 0.72, 0.64], [0.9, 0.86, 0.8], (lat + 0.2) * 2.0);
    let grain = 0.9 + 0.1 * fbm(lon * 6.0, lat * 6.0, 17);
    let mut c = wall.map(|x| x * grain);
    // window bands
    let window = ((lon * 4.0 / TAU).fract() - 0.5).abs() < 0.12 && lat > 0.05 && lat < 0.45;
    if window {
        c = lerp3([0.75, 0.85, 0.97], [0.95, 0.97, 1.0], fbm(lon * 3.0, lat * 3.0, 3));
    }
    if lat < -0.05 {
        c = lerp3([0.45, 0.33, 0.22], [0.55, 0.42, 0.3], fbm(lon * 10.0, lat * 10.0, 9));
    }
    c
}

fn outdoor(lon: f64, lat: f64) -> [f64; 3] {
    if lat >= 0.0 {
        let sky = lerp3([0.85, 0.9, 0.97], [0.35, 0.55, 0.9], lat / FRAC_PI_2 * 1.5);
        let cloud = (fbm(lon * 3.0, lat * 8.0, 41) - 0.55).max(0.0) * 2.2;
        lerp3(sky, [1.0, 1.0, 1.0], cloud)
    } else {
        let hills = lerp3([0.35, 0.5, 0.25], [0.25, 0.4, 0.18], -lat * 2.0);
        hills.map(|x| x * (0.85 + 0.15 * fbm(lon * 12.0, lat * 12.0, 77)))
    }
}

/// Multiplicative floor texture factor at world `(x, y)`.
pub fn floor_factor(texture: &str, x: f64, y: f64) -> f64 {
    match texture {
        "planks" => {
            let plank = (y / 0.25).floor();
            let along = x + 1.7 * plank;
            let seam = (y / 0.25).rem_euclid(1.0) < 0.04 || (along / 1.2).rem_euclid(1.0) < 0.01;
            let tone = 0.85 + 0.15 * value_noise(plank * 3.1, 0.0, 5);
            if seam {
                tone * 0.6
            } else {
                tone * (0.92 + 0.08 * value_noise(along * 8.0, y * 40.0, 7))
            }
        }
        "grass" => 0.75 + 0.35 * fbm(x * 4.0, y * 4.0, 23),
        "checker" => {
            if ((x / 0.5).floor() as i64 + (y / 0.5).floor() as i64).rem_euclid(2) == 0 {
                1.0
            } else {
                0.7
            }
        }
        _ => 1.0,
    }
}
