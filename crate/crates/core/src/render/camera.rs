//! Look-at pinhole camera with world-up +Z.
//!
//! forward = normalize(look_at - position), right = forward × up,
//! up' = right × forward. Screen x grows along `right`, screen y grows
//! downward, pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geom::{vec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub vfov_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projected {
    Screen { x: f64, y: f64 },
    Behind,
}

impl Projected {
    pub fn screen(self) -> Option<(f64, f64)> {
        match self {
            Projected::Screen { x, y } => Some((x, y)),
            Projected::Behind => None,
        }
    }
}

/// Validated camera frame for a given image size.
#[derive(Debug, Clone, Copy)]
pub struct ViewBasis {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    /// Focal length in pixels.
    pub focal: f64,
    pub width: f64,
    pub height: f64,
}

impl ViewBasis {
    pub fn new(camera: &Camera, width: u32, height: u32) -> Result<ViewBasis, RenderError> {
        let to_target = camera.look_at - camera.position;
        let fov_ok = camera.vfov_deg.is_finite() && camera.vfov_deg > 0.0 && camera.vfov_deg < 180.0;
        if !fov_ok || !to_target.iter().all(|c| c.is_finite()) || to_target.norm() < 1e-9 {
            return Err(RenderError::DegenerateCamera);
        }
        let forward = to_target.normalize();
        let right = forward.cross(&vec3(0.0, 0.0, 1.0));
        if right.norm() < 1e-9 {
            return Err(RenderError::DegenerateCamera);
        }
        let right = right.normalize();
        let up = right.cross(&forward);
        let half = (camera.vfov_deg.to_radians() * 0.5).tan();
        Ok(ViewBasis {
            origin: camera.position,
            forward,
            right,
            up,
            focal: height as f64 * 0.5 / half,
            width: width as f64,
            height: height as f64,
        })
    }

    pub fn project(&self, p: &Vec3) -> Projected {
        let rel = p - self.origin;
        let z = rel.dot(&self.forward);
        if z <= 0.0 {
            return Projected::Behind;
        }
        let x = rel.dot(&self.right);
        let y = rel.dot(&self.up);
        Projected::Screen { x: self.width * 0.5 + self.focal * x / z, y: self.height * 0.5 - self.focal * y / z }
    }

    /// Unit direction of the primary ray through screen point `(sx, sy)`.
    pub fn ray_dir(&self, sx: f64, sy: f64) -> Vec3 {
        let dx = (sx - self.width * 0.5) / self.focal;
        let dy = (self.height * 0.5 - sy) / self.focal;
        (self.forward + self.right * dx + self.up * dy).normalize()
    }

    pub fn pixel_ray(&self, px: u32, py: u32) -> Vec3 {
        self.ray_dir(px as f64 + 0.5, py as f64 + 0.5)
    }
}

/// Projects a world point into a `width × height` image.
pub fn project(point: &Vec3, camera: &Camera, width: u32, height: u32) -> Result<Projected, RenderError> {
    Ok(ViewBasis::new(camera, width, height)?.project(point))
}
