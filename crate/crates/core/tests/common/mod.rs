//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use relscene::layout::{solve, Layout, LayoutConfig};
use relscene::prompt::{RelationKind, SpatialSpec, Triple};
use relscene::render::Camera;
use relscene::scene::{synthesize, SceneGraph};
use relscene::AssetCatalog;

pub type V = [f64; 3];

pub fn sub(a: V, b: V) -> V {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: V, b: V) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: V, b: V) -> V {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn unit(a: V) -> V {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn v(p: &relscene::geom::Vec3) -> V {
    [p.x, p.y, p.z]
}

/// Pinhole camera rebuilt from the textbook look-at construction.
pub struct Pinhole {
    pub eye: V,
    pub f: V,
    pub r: V,
    pub u: V,
    pub focal_px: f64,
    pub w: f64,
    pub h: f64,
}

impl Pinhole {
    pub fn new(cam: &Camera, w: u32, h: u32) -> Pinhole {
        let eye = v(&cam.position);
        let f = unit(sub(v(&cam.look_at), eye));
        let r = unit(cross(f, [0.0, 0.0, 1.0]));
        let u = cross(r, f);
        let focal_px = h as f64 / 2.0 / (cam.vfov_deg.to_radians() / 2.0).tan();
        Pinhole { eye, f, r, u, focal_px, w: w as f64, h: h as f64 }
    }

    /// Screen coordinates, y downward; `None` behind the camera.
    pub fn project(&self, p: V) -> Option<(f64, f64)> {
        let d = sub(p, self.eye);
        let z = dot(d, self.f);
        (z > 0.0).then(|| {
            (self.w / 2.0 + self.focal_px * dot(d, self.r) / z, self.h / 2.0 - self.focal_px * dot(d, self.u) / z)
        })
    }

    pub fn ray(&self, px: u32, py: u32) -> V {
        let x = (px as f64 + 0.5 - self.w / 2.0) / self.focal_px;
        let y = (self.h / 2.0 - py as f64 - 0.5) / self.focal_px;
        unit([
            self.f[0] + x * self.r[0] + y * self.u[0],
            self.f[1] + x * self.r[1] + y * self.u[1],
            self.f[2] + x * self.r[2] + y * self.u[2],
        ])
    }
}

/// Two-sided Möller–Trumbore.
pub fn hit_triangle(o: V, d: V, a: V, b: V, c: V) -> Option<f64> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-12 {
        return None;
    }
    let s = sub(o, a);
    let uu = dot(s, p) / det;
    if !(0.0..=1.0).contains(&uu) {
        return None;
    }
    let q = cross(s, e1);
    let vv = dot(d, q) / det;
    if vv < 0.0 || uu + vv > 1.0 {
        return None;
    }
    let t = dot(e2, q) / det;
    (t > 1e-9).then_some(t)
}

/// Nearest object hit over every triangle of every object: `(object index, t)`.
pub fn brute_force_cast(scene: &SceneGraph, o: V, d: V) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, obj) in scene.objects.iter().enumerate() {
        let world: Vec<V> = obj.world_vertices().iter().map(v).collect();
        for t in &obj.asset.mesh.triangles {
            if let Some(dist) = hit_triangle(o, d, world[t[0] as usize], world[t[1] as usize], world[t[2] as usize]) {
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((k, dist));
                }
            }
        }
    }
    best
}

/// 8-connected components of nonzero pixels.
pub fn components(data: &[u8], w: usize, h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if data[start] == 0 || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        let j = ny as usize * w + nx as usize;
                        if data[j] != 0 && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

pub fn spec(a: &str, r: RelationKind, b: &str) -> SpatialSpec {
    SpatialSpec::from_triples(vec![Triple::new(a, r, b)]).unwrap()
}

/// Undiversified scene for a single relation.
pub fn scene_for(a: &str, r: RelationKind, b: &str, bg: &str, seed: u64) -> (Layout, SceneGraph) {
    let s = spec(a, r, b);
    let catalog = AssetCatalog::default_catalog();
    let layout = solve(&s, seed, &LayoutConfig::default());
    let scene = synthesize(&layout, &s, &catalog, bg, seed).unwrap();
    (layout, scene)
}

/// Mean pixel column and row of a mask label.
pub fn label_centroid(mask: &[u8], w: usize, label: u8) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, &l) in mask.iter().enumerate() {
        if l == label {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Upper critical value of χ² with `df` degrees of freedom at α = 0.01
/// (Wilson–Hilferty approximation).
pub fn chi2_crit_01(df: f64) -> f64 {
    let z = 2.326_347_874;
    df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3)
}
