//! Deterministic ray caster producing the guidance image, a metric depth map
//! and an object-ID mask.
//!
//! One primary ray per pixel center and one shadow ray toward the point light.
//! Rows are independent, so the output does not depend on how many workers
//! render them.

pub mod bvh;
pub mod camera;
pub mod environment;

use std::io::Write;

use thiserror::Error;

use crate::geom::{vec3, Vec3};
use crate::imageio::{self, DepthConvention, ImageIoError};
use crate::scene::{Background, Floor, Light, SceneGraph};
use bvh::Bvh;
pub use camera::{project, Camera, Projected, ViewBasis};
use environment::{floor_factor, Panorama};

pub const AMBIENT: f64 = 0.25;
pub const MIN_SIZE: u32 = 16;
const SURFACE_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("degenerate camera (zero view direction, bad field of view, or looking straight along the up axis)")]
    DegenerateCamera,
    #[error("image size {width}x{height} is below the {MIN_SIZE}x{MIN_SIZE} minimum")]
    TooSmall { width: u32, height: u32 },
    #[error("panorama: {0}")]
    Panorama(String),
}

/// The three render layers. Label `k >= 1` is the k-th placed object; 0 is
/// floor or background. Depth is the Euclidean ray-hit distance in meters,
/// `+∞` where the ray escapes to the background.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
    pub id_mask: Vec<u8>,
}

impl FrameSet {
    fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn rgb_at(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f32 {
        self.depth[self.index(x, y)]
    }

    pub fn label_at(&self, x: u32, y: u32) -> u8 {
        self.id_mask[self.index(x, y)]
    }

    pub fn write_rgb_png<W: Write>(&self, out: W) -> Result<(), ImageIoError> {
        imageio::encode_rgb(out, self.width, self.height, &self.rgb)
    }

    pub fn write_depth_png<W: Write>(&self, out: W) -> Result<(), ImageIoError> {
        imageio::encode_depth16(out, self.width, self.height, &self.depth, DepthConvention::Metric)
    }

    pub fn write_mask_png<W: Write>(&self, out: W) -> Result<(), ImageIoError> {
        imageio::encode_gray8(out, self.width, self.height, &self.id_mask)
    }

    pub fn depth_map(&self) -> imageio::DepthMap {
        imageio::DepthMap {
            width: self.width,
            height: self.height,
            values: self.depth.clone(),
            convention: Some(DepthConvention::Metric),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitTarget {
    /// Zero-based object index.
    Object(usize),
    Floor,
    Background,
}

#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub t: f64,
    pub target: HitTarget,
    pub point: Vec3,
    /// Geometric normal flipped to face the incoming ray.
    pub normal: Vec3,
}

struct ObjectGeometry {
    bvh: Bvh,
    normals: Vec<Vec3>,
    color: [f64; 3],
}

enum Sky {
    Constant([f64; 3]),
    Panorama { image: Panorama, rotation: f64 },
}

/// A scene prepared for ray casting at a fixed resolution.
pub struct Renderer {
    view: ViewBasis,
    objects: Vec<ObjectGeometry>,
    floor: Option<Floor>,
    sky: Sky,
    light: Light,
    shadows: bool,
}

impl Renderer {
    pub fn new(scene: &SceneGraph, width: u32, height: u32) -> Result<Renderer, RenderError> {
        if width < MIN_SIZE || height < MIN_SIZE {
            return Err(RenderError::TooSmall { width, height });
        }
        let view = ViewBasis::new(&scene.camera, width, height)?;
        let objects = scene
            .objects
            .iter()
            .map(|placed| {
                let world = placed.world_vertices();
                let tris: Vec<[Vec3; 3]> = placed
                    .asset
                    .mesh
                    .triangles
                    .iter()
                    .map(|t| [world[t[0] as usize], world[t[1] as usize], world[t[2] as usize]])
                    .collect();
                let normals = tris
                    .iter()
                    .map(|[a, b, c]| (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or(vec3(0.0, 0.0, 1.0)))
                    .collect();
                ObjectGeometry { bvh: Bvh::build(&tris), normals, color: placed.asset.base_color }
            })
            .collect();
        let sky = match &scene.background {
            Background::Constant { color } => Sky::Constant(*color),
            Background::Panorama { source, rotation, .. } => {
                Sky::Panorama { image: Panorama::load(source)?, rotation: *rotation }
            }
        };
        Ok(Renderer { view, objects, floor: scene.floor.clone(), sky, light: scene.light.clone(), shadows: true })
    }

    pub fn with_shadows(mut self, shadows: bool) -> Self {
        self.shadows = shadows;
        self
    }

    pub fn view(&self) -> &ViewBasis {
        &self.view
    }

    /// Nearest hit along a ray. Objects win ties against the floor, and
    /// lower object indices win ties against higher ones.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3) -> RayHit {
        let mut best_t = f64::INFINITY;
        let mut target = HitTarget::Background;
        let mut normal = -dir;
        for (k, obj) in self.objects.iter().enumerate() {
            if let Some((t, tri)) = obj.bvh.intersect(origin, dir, best_t) {
                if t < best_t {
                    best_t = t;
                    target = HitTarget::Object(k);
                    normal = obj.normals[tri];
                }
            }
        }
        if let Some(floor) = &self.floor {
            if dir.z != 0.0 {
                let t = (floor.z - origin.z) / dir.z;
                if t > SURFACE_EPS && t < best_t {
                    best_t = t;
                    target = HitTarget::Floor;
                    normal = vec3(0.0, 0.0, 1.0);
                }
            }
        }
        if normal.dot(dir) > 0.0 {
            normal = -normal;
        }
        let point = if best_t.is_finite() { origin + dir * best_t } else { *origin };
        RayHit { t: best_t, target, point, normal }
    }

    /// Primary ray through the center of pixel `(px, py)`.
    pub fn cast(&self, px: u32, py: u32) -> RayHit {
        self.trace(&self.view.origin, &self.view.pixel_ray(px, py))
    }

    fn direct_light(&self, hit: &RayHit) -> f64 {
        let to_light = self.light.position - hit.point;
        let dist = to_light.norm();
        let l = to_light / dist;
        let ndotl = hit.normal.dot(&l);
        if ndotl <= 0.0 {
            return 0.0;
        }
        if self.shadows {
            let origin = hit.point + hit.normal * SURFACE_EPS;
            if self.objects.iter().any(|o| o.bvh.occluded(&origin, &l, dist)) {
                return 0.0;
            }
        }
        ndotl * self.light.intensity
    }

    fn shade(&self, base: [f64; 3], hit: &RayHit) -> [u8; 3] {
        let k = (AMBIENT + (1.0 - AMBIENT) * self.direct_light(hit)).min(1.0);
        base.map(|c| to_u8(c * k))
    }

    fn sky_color(&self, dir: &Vec3) -> [f64; 3] {
        match &self.sky {
            Sky::Constant(c) => *c,
            Sky::Panorama { image, rotation } => {
                // The camera sits near the sphere center relative to its radius,
                // so the hit direction is taken as the ray direction.
                image.sample(dir, *rotation)
            }
        }
    }

    /// Color, depth and label for one pixel.
    pub fn pixel(&self, px: u32, py: u32) -> ([u8; 3], f32, u8) {
        let dir = self.view.pixel_ray(px, py);
        let hit = self.trace(&self.view.origin, &dir);
        match hit.target {
            HitTarget::Object(k) => (self.shade(self.objects[k].color, &hit), hit.t as f32, (k + 1) as u8),
            HitTarget::Floor => {
                let floor = self.floor.as_ref().expect("floor hit implies floor");
                let f = floor_factor(&floor.texture, hit.point.x, hit.point.y);
                (self.shade(floor.color.map(|c| c * f), &hit), hit.t as f32, 0)
            }
            HitTarget::Background => (self.sky_color(&dir).map(to_u8), f32::INFINITY, 0),
        }
    }

    fn render_row(&self, py: u32) -> Vec<([u8; 3], f32, u8)> {
        (0..self.view.width as u32).map(|px| self.pixel(px, py)).collect()
    }

    pub fn render(&self) -> FrameSet {
        let (w, h) = (self.view.width as u32, self.view.height as u32);
        #[cfg(feature = "parallel")]
        let rows: Vec<_> = {
            use rayon::prelude::*;
            (0..h).into_par_iter().map(|py| self.render_row(py)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<_> = (0..h).map(|py| self.render_row(py)).collect();

        let n = (w * h) as usize;
        let mut frame = FrameSet {
            width: w,
            height: h,
            rgb: Vec::with_capacity(n * 3),
            depth: Vec::with_capacity(n),
            id_mask: Vec::with_capacity(n),
        };
        for (rgb, d, id) in rows.into_iter().flatten() {
            frame.rgb.extend_from_slice(&rgb);
            frame.depth.push(d);
            frame.id_mask.push(id);
        }
        frame
    }
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders `scene` at `width × height`.
pub fn render(scene: &SceneGraph, width: u32, height: u32) -> Result<FrameSet, RenderError> {
    Ok(Renderer::new(scene, width, height)?.render())
}
