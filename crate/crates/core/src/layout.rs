//! Coordinate generation and position diversification.
//!
//! World frame: X is depth (toward the camera), Y is horizontal (camera
//! right), Z is vertical. The camera sits at `x = 5 m` looking at the origin,
//! so "left" is −Y, "in front of" is +X and "above" is +Z.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{vec3, Vec3};
use crate::prompt::{Axis, Polarity, RelationKind, SpatialSpec};
use crate::render::camera::{Camera, ViewBasis};
use crate::rng::{derive_indexed, stage_rng};

/// Per-axis placement constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutRule {
    /// Which of X/Y/Z are zero for both objects.
    pub zeroed: [bool; 3],
    /// `x₁ = −x₂` for the depth family.
    pub mirror_x: bool,
    pub d_min: f64,
    pub d_max: f64,
}

impl LayoutRule {
    pub fn for_axis(axis: Axis) -> LayoutRule {
        match axis {
            Axis::Horizontal => LayoutRule { zeroed: [true, false, true], mirror_x: false, d_min: 1.0, d_max: 1.5 },
            Axis::Vertical => LayoutRule { zeroed: [true, true, false], mirror_x: false, d_min: 0.75, d_max: 1.0 },
            // Y is also zero here: objects are lined up along the camera axis.
            Axis::Depth => LayoutRule { zeroed: [false, true, true], mirror_x: true, d_min: 1.0, d_max: 1.5 },
            Axis::Near => LayoutRule { zeroed: [true, false, true], mirror_x: false, d_min: 0.75, d_max: 1.0 },
        }
    }

    pub fn contains(&self, d: f64) -> bool {
        (self.d_min..=self.d_max).contains(&d)
    }
}

/// Unit vector from the object toward the subject for `subject REL object`.
fn relation_direction(relation: RelationKind, near_flip: bool) -> Vec3 {
    match (relation.axis, relation.polarity) {
        (Axis::Horizontal, Polarity::Negative) => vec3(0.0, -1.0, 0.0),
        (Axis::Horizontal, _) => vec3(0.0, 1.0, 0.0),
        (Axis::Vertical, Polarity::Positive) => vec3(0.0, 0.0, 1.0),
        (Axis::Vertical, _) => vec3(0.0, 0.0, -1.0),
        (Axis::Depth, Polarity::Positive) => vec3(1.0, 0.0, 0.0),
        (Axis::Depth, _) => vec3(-1.0, 0.0, 0.0),
        (Axis::Near, _) => vec3(0.0, if near_flip { -1.0 } else { 1.0 }, 0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub vfov_deg: f64,
    pub camera_distance: f64,
    pub camera_height: f64,
    pub depth_camera_height: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig { vfov_deg: 50.0, camera_distance: 5.0, camera_height: 1.5, depth_camera_height: 2.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterConfig {
    /// Uniform camera position jitter per axis, meters.
    pub camera_position: f64,
    /// Uniform look-at jitter per axis, meters.
    pub look_at: f64,
    /// Uniform object yaw jitter, degrees.
    pub yaw_deg: f64,
    /// The subject's share of the first pair's distance is drawn from
    /// `[0.5 - split_spread, 0.5 + split_spread]`.
    pub split_spread: f64,
    pub max_attempts: u32,
}

impl Default for JitterConfig {
    fn default() -> Self {
        JitterConfig { camera_position: 0.25, look_at: 0.10, yaw_deg: 15.0, split_spread: 0.15, max_attempts: 16 }
    }
}

impl JitterConfig {
    pub fn none() -> Self {
        JitterConfig { camera_position: 0.0, look_at: 0.0, yaw_deg: 0.0, split_spread: 0.0, max_attempts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    pub class: String,
    /// Bounding-box center, meters.
    pub position: Vec3,
    /// Rotation about +Z, radians.
    pub yaw: f64,
}

/// One solved relation between consecutive objects `k` and `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlacement {
    pub relation: RelationKind,
    pub distance: f64,
    /// Unit vector from object `k + 1` toward object `k`.
    pub direction: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub objects: Vec<ObjectPlacement>,
    pub pairs: Vec<PairPlacement>,
    pub camera: Camera,
    pub light: Vec3,
    pub seed: u64,
    pub diversified: bool,
}

/// Anything that can turn a spec into a layout. [`RuleLayout`] is the only
/// shipped implementation.
pub trait LayoutProvider {
    fn solve(&self, spec: &SpatialSpec, seed: u64) -> Layout;
}

#[derive(Debug, Clone, Default)]
pub struct RuleLayout {
    pub config: LayoutConfig,
}

impl LayoutProvider for RuleLayout {
    fn solve(&self, spec: &SpatialSpec, seed: u64) -> Layout {
        solve(spec, seed, &self.config)
    }
}

/// Deterministic rule-based placement.
pub fn solve(spec: &SpatialSpec, seed: u64, config: &LayoutConfig) -> Layout {
    let mut rng = stage_rng(seed, "layout");
    let pairs: Vec<PairPlacement> = spec
        .triples
        .iter()
        .map(|t| {
            let rule = LayoutRule::for_axis(t.relation.axis);
            let distance = rng.random_range(rule.d_min..=rule.d_max);
            let near_flip = t.relation.axis == Axis::Near && rng.random_bool(0.5);
            PairPlacement { relation: t.relation, distance, direction: relation_direction(t.relation, near_flip) }
        })
        .collect();

    let first = &pairs[0];
    let mut positions = vec![first.direction * (first.distance * 0.5), -first.direction * (first.distance * 0.5)];
    for p in &pairs[1..] {
        let prev = *positions.last().expect("non-empty");
        positions.push(prev - p.direction * p.distance);
    }
    if positions.len() > 2 {
        let centroid = positions.iter().sum::<Vec3>() / positions.len() as f64;
        for p in &mut positions {
            *p -= centroid;
        }
        let extent = positions.iter().map(|p| p.amax()).fold(0.0, f64::max);
        if extent > 1.0 {
            for p in &mut positions {
                *p /= extent;
            }
        }
    }

    let objects: Vec<ObjectPlacement> = spec
        .objects()
        .into_iter()
        .zip(positions)
        .map(|(class, position)| ObjectPlacement { class: class.to_string(), position, yaw: 0.0 })
        .collect();

    let cam_z = if spec.has_depth() { config.depth_camera_height } else { config.camera_height };
    let camera = Camera {
        position: vec3(config.camera_distance, 0.0, cam_z),
        look_at: Vec3::zeros(),
        vfov_deg: config.vfov_deg,
    };

    // Unit-cube assets reach at most 0.5 m above their center.
    let top = objects.iter().map(|o| o.position.z + 0.5).fold(f64::NEG_INFINITY, f64::max);
    let light = vec3(rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0), top + rng.random_range(2.0..=3.0));

    Layout { objects, pairs, camera, light, seed, diversified: false }
}

fn jitter(rng: &mut ChaCha8Rng, magnitude: f64) -> f64 {
    if magnitude > 0.0 {
        rng.random_range(-magnitude..=magnitude)
    } else {
        0.0
    }
}

fn jitter3(rng: &mut ChaCha8Rng, magnitude: f64) -> Vec3 {
    vec3(jitter(rng, magnitude), jitter(rng, magnitude), jitter(rng, magnitude))
}

/// Whether every pairwise relation holds when viewed from the layout camera,
/// using object centers.
pub fn relations_hold(layout: &Layout) -> bool {
    let Ok(view) = ViewBasis::new(&layout.camera, 512, 512) else {
        return false;
    };
    let screen: Vec<Option<(f64, f64)>> = layout.objects.iter().map(|o| view.project(&o.position).screen()).collect();
    if screen.iter().any(Option::is_none) {
        return false;
    }
    layout.pairs.iter().enumerate().all(|(k, pair)| {
        let (a, b) = (screen[k].unwrap(), screen[k + 1].unwrap());
        let sign = if pair.relation.polarity == Polarity::Positive { 1.0 } else { -1.0 };
        match pair.relation.axis {
            Axis::Horizontal => sign * (a.0 - b.0) > 0.0,
            Axis::Vertical => sign * (b.1 - a.1) > 0.0,
            Axis::Depth => {
                let da = (layout.objects[k].position - view.origin).norm();
                let db = (layout.objects[k + 1].position - view.origin).norm();
                sign * (db - da) > 0.0
            }
            Axis::Near => true,
        }
    })
}

/// Seeded jitter of camera, look-at, object yaw and the first pair's split.
/// Falls back to the input layout if no attempt keeps every relation intact.
pub fn diversify(layout: &Layout, seed: u64, jitter_config: &JitterConfig) -> Layout {
    for attempt in 0..jitter_config.max_attempts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(seed, "diversify", attempt as u64));
        let mut out = layout.clone();
        let first = &layout.pairs[0];
        let spread = jitter_config.split_spread;
        let u = if spread > 0.0 { rng.random_range(0.5 - spread..=0.5 + spread) } else { 0.5 };
        let shift = first.direction * ((u - 0.5) * first.distance);
        let yaw_mag = jitter_config.yaw_deg * PI / 180.0;
        for o in &mut out.objects {
            o.position += shift;
            o.yaw += jitter(&mut rng, yaw_mag);
        }
        out.camera.position += jitter3(&mut rng, jitter_config.camera_position);
        out.camera.look_at += jitter3(&mut rng, jitter_config.look_at);
        out.diversified = true;
        if relations_hold(&out) {
            return out;
        }
    }
    layout.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Triple;

    fn spec(a: &str, r: RelationKind, b: &str) -> SpatialSpec {
        SpatialSpec::from_triples(vec![Triple::new(a, r, b)]).unwrap()
    }

    /// Replaces the sampled distance to check the symmetric split arithmetic.
    fn with_distance(spec: &SpatialSpec, d: f64) -> Layout {
        let mut l = solve(spec, 0, &LayoutConfig::default());
        let p = &mut l.pairs[0];
        p.distance = d;
        l.objects[0].position = p.direction * (d / 2.0);
        l.objects[1].position = -p.direction * (d / 2.0);
        l
    }

    #[test]
    fn left_example() {
        let l = with_distance(&spec("cat", RelationKind::LEFT, "dog"), 1.2);
        assert_eq!(l.objects[0].position, vec3(0.0, -0.6, 0.0));
        assert_eq!(l.objects[1].position, vec3(0.0, 0.6, 0.0));
        assert_eq!(l.camera.position, vec3(5.0, 0.0, 1.5));
    }

    #[test]
    fn above_and_front_examples() {
        let l = with_distance(&spec("book", RelationKind::ABOVE, "chair"), 0.8);
        assert_eq!(l.objects[0].position, vec3(0.0, 0.0, 0.4));
        assert_eq!(l.objects[1].position, vec3(0.0, 0.0, -0.4));
        let l = with_distance(&spec("cup", RelationKind::IN_FRONT, "bottle"), 1.4);
        assert!((l.objects[0].position - vec3(0.7, 0.0, 0.0)).norm() < 1e-15);
        assert!((l.objects[1].position - vec3(-0.7, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(l.camera.position, vec3(5.0, 0.0, 2.5));
    }

    #[test]
    fn sampled_distance_in_range_and_split_symmetric() {
        for seed in 0..200 {
            for r in RelationKind::ALL {
                let l = solve(&spec("cat", r, "dog"), seed, &LayoutConfig::default());
                let d = (l.objects[0].position - l.objects[1].position).norm();
                assert!(LayoutRule::for_axis(r.axis).contains(l.pairs[0].distance));
                assert!((d - l.pairs[0].distance).abs() < 1e-12);
                assert_eq!(l.objects[0].position, -l.objects[1].position);
            }
        }
    }

    #[test]
    fn chain_is_recentered() {
        let s = SpatialSpec::from_triples(vec![
            Triple::new("cat", RelationKind::LEFT, "dog"),
            Triple::new("dog", RelationKind::LEFT, "bird"),
        ])
        .unwrap();
        for seed in 0..100 {
            let l = solve(&s, seed, &LayoutConfig::default());
            assert_eq!(l.objects.len(), 3);
            let c: Vec3 = l.objects.iter().map(|o| o.position).sum::<Vec3>() / 3.0;
            assert!(c.norm() < 1e-12);
            assert!(l.objects.iter().all(|o| o.position.amax() <= 1.0 + 1e-12));
            assert!(relations_hold(&l));
        }
    }

    #[test]
    fn zero_jitter_is_identity() {
        let l = solve(&spec("cat", RelationKind::LEFT, "dog"), 4, &LayoutConfig::default());
        let mut d = diversify(&l, 99, &JitterConfig::none());
        d.diversified = false;
        assert_eq!(d, l);
    }

    #[test]
    fn diversify_deterministic_and_bounded() {
        let l = solve(&spec("cat", RelationKind::BEHIND, "dog"), 4, &LayoutConfig::default());
        let j = JitterConfig::default();
        let a = diversify(&l, 5, &j);
        assert_eq!(a, diversify(&l, 5, &j));
        assert!((a.camera.position - l.camera.position).amax() <= 0.25);
        assert!((a.camera.look_at - l.camera.look_at).amax() <= 0.10);
        for o in &a.objects {
            assert!(o.yaw.abs() <= 15f64.to_radians() + 1e-12);
        }
    }

    #[test]
    fn light_above_objects() {
        for seed in 0..100 {
            let l = solve(&spec("cat", RelationKind::ABOVE, "dog"), seed, &LayoutConfig::default());
            let top = l.objects.iter().map(|o| o.position.z + 0.5).fold(f64::MIN, f64::max);
            assert!(l.light.z >= top + 2.0);
        }
    }
}
