//! Scene assembly: camera, light, background, floor and the placed assets.
//!
//! Scenes serialize to the `scene.v1` JSON schema, the interchange format for
//! the renderer, the exporters and question generation.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{AssetCatalog, AssetError, AssetInstance};
use crate::geom::{rotate_z, vec3, Aabb, Vec3};
use crate::layout::Layout;
use crate::prompt::SpatialSpec;
use crate::render::camera::Camera;
use crate::rng::{derive_indexed, stage_rng};

pub const SCENE_FORMAT: &str = "scene.v1";
pub const PANORAMA_RADIUS: f64 = 50.0;
pub const LIGHT_INTENSITY: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("layout has {layout} objects but the spec names {spec}")]
    LayoutMismatch { layout: usize, spec: usize },
    #[error("unsupported scene format `{0}`")]
    UnsupportedFormat(String),
    #[error("malformed scene file: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedAsset {
    pub asset: AssetInstance,
    /// World position of the asset's bounding-box center.
    pub position: Vec3,
    pub yaw: f64,
}

impl PlacedAsset {
    /// Offset applied after rotation; assets are stored bottom-anchored.
    fn translation(&self) -> Vec3 {
        self.position - vec3(0.0, 0.0, self.asset.height() * 0.5)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        rotate_z(local, self.yaw) + self.translation()
    }

    pub fn world_vertices(&self) -> Vec<Vec3> {
        self.asset.mesh.vertices.iter().map(|v| self.to_world(v)).collect()
    }

    pub fn world_bbox(&self) -> Aabb {
        Aabb::from_points(&self.world_vertices())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub z: f64,
    pub color: [f64; 3],
    /// One of `plain`, `planks`, `grass`, `checker`.
    pub texture: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Constant {
        color: [f64; 3],
    },
    /// Equirectangular image on the inside of a sphere centered at the origin.
    Panorama {
        source: String,
        radius: f64,
        rotation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub position: Vec3,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SpatialSpec,
    pub object_bboxes: Vec<Aabb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub format: String,
    pub seed: u64,
    pub background_name: String,
    pub objects: Vec<PlacedAsset>,
    pub floor: Option<Floor>,
    pub background: Background,
    pub light: Light,
    pub camera: Camera,
    pub ground_truth: GroundTruth,
}

impl SceneGraph {
    /// A scene with no objects and no floor; useful for background-only renders.
    pub fn empty(camera: Camera, background: Background) -> SceneGraph {
        SceneGraph {
            format: SCENE_FORMAT.to_string(),
            seed: 0,
            background_name: String::new(),
            objects: Vec::new(),
            floor: None,
            background,
            light: Light { position: vec3(0.0, 0.0, 10.0), intensity: LIGHT_INTENSITY },
            camera,
            ground_truth: GroundTruth {
                spec: SpatialSpec { raw_text: String::new(), triples: Vec::new(), substitutions: Vec::new() },
                object_bboxes: Vec::new(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene is serializable")
    }

    pub fn from_json(text: &str) -> Result<SceneGraph, SceneError> {
        let scene: SceneGraph = serde_json::from_str(text)?;
        if scene.format != SCENE_FORMAT {
            return Err(SceneError::UnsupportedFormat(scene.format));
        }
        Ok(scene)
    }
}

/// Assembles the renderable scene for a solved layout.
pub fn synthesize(
    layout: &Layout,
    spec: &SpatialSpec,
    catalog: &AssetCatalog,
    background_name: &str,
    seed: u64,
) -> Result<SceneGraph, SceneError> {
    let bg = catalog
        .background(background_name)
        .ok_or_else(|| AssetError::UnknownBackground(background_name.to_string()))?;
    let classes = spec.objects();
    if classes.len() != layout.objects.len() {
        return Err(SceneError::LayoutMismatch { layout: layout.objects.len(), spec: classes.len() });
    }

    let mut objects = Vec::with_capacity(layout.objects.len());
    for (slot, placement) in layout.objects.iter().enumerate() {
        let asset = catalog.select_asset(&placement.class, derive_indexed(seed, "asset-slot", slot as u64))?;
        objects.push(PlacedAsset { asset, position: placement.position, yaw: placement.yaw });
    }

    let rotation = stage_rng(seed, "background").random_range(0.0..TAU);
    let background = match &bg.panorama {
        Some(source) => Background::Panorama { source: source.clone(), radius: PANORAMA_RADIUS, rotation },
        None => Background::Constant { color: bg.base_color },
    };

    let floor = objects.iter().map(|o| o.position.z - o.asset.height() * 0.5).reduce(f64::min).map(|z| Floor {
        z,
        color: bg.floor_color,
        texture: bg.floor_texture.clone(),
    });

    let object_bboxes = objects.iter().map(PlacedAsset::world_bbox).collect();
    Ok(SceneGraph {
        format: SCENE_FORMAT.to_string(),
        seed,
        background_name: bg.name.clone(),
        objects,
        floor,
        background,
        light: Light { position: layout.light, intensity: LIGHT_INTENSITY },
        camera: layout.camera,
        ground_truth: GroundTruth { spec: spec.clone(), object_bboxes },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{solve, LayoutConfig};
    use crate::prompt::{parse_prompt, RelationKind, Triple};

    fn scene(prompt: &str, bg: &str, seed: u64) -> SceneGraph {
        let cat = AssetCatalog::default_catalog();
        let spec = parse_prompt(prompt, &cat).unwrap();
        let layout = solve(&spec, seed, &LayoutConfig::default());
        synthesize(&layout, &spec, &cat, bg, seed).unwrap()
    }

    #[test]
    fn floor_touches_lowest_object() {
        let s = scene("a book above a chair", "white", 3);
        let lowest = s.ground_truth.object_bboxes.iter().map(|b| b.min.z).fold(f64::MAX, f64::min);
        let floor = s.floor.as_ref().unwrap();
        assert!((floor.z - lowest).abs() < 1e-9);
        for b in &s.ground_truth.object_bboxes {
            assert!(b.min.z >= floor.z - 1e-9);
        }
    }

    #[test]
    fn floor_arithmetic_example() {
        let cat = AssetCatalog::default_catalog();
        let spec = SpatialSpec::from_triples(vec![Triple::new("book", RelationKind::ABOVE, "chair")]).unwrap();
        let mut layout = solve(&spec, 0, &LayoutConfig::default());
        layout.objects[0].position = vec3(0.0, 0.0, 0.4);
        layout.objects[1].position = vec3(0.0, 0.0, -0.4);
        let mut s = synthesize(&layout, &spec, &cat, "White", 0).unwrap();
        // force unit-height assets: half-heights 0.5
        for o in &mut s.objects {
            let h = o.asset.height();
            for v in &mut o.asset.mesh.vertices {
                v.z /= h;
            }
        }
        let z = s.objects.iter().map(|o| o.position.z - o.asset.height() * 0.5).fold(f64::MAX, f64::min);
        assert!((z + 0.9).abs() < 1e-12);
    }

    #[test]
    fn white_background_is_constant() {
        let s = scene("a cat to the left of a dog", "White", 1);
        assert_eq!(s.background, Background::Constant { color: [1.0, 1.0, 1.0] });
        let f = s.floor.unwrap();
        assert_eq!(f.texture, "plain");
    }

    #[test]
    fn panorama_sphere_encloses_camera() {
        let s = scene("a cat to the left of a dog", "indoor", 1);
        match s.background {
            Background::Panorama { radius, rotation, .. } => {
                assert!(radius > s.camera.position.norm());
                assert!((0.0..TAU).contains(&rotation));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_background() {
        let cat = AssetCatalog::default_catalog();
        let spec = parse_prompt("a cat above a dog", &cat).unwrap();
        let layout = solve(&spec, 0, &LayoutConfig::default());
        assert!(matches!(
            synthesize(&layout, &spec, &cat, "Beach", 0),
            Err(SceneError::Asset(AssetError::UnknownBackground(_)))
        ));
    }

    #[test]
    fn serialization_round_trips_byte_identically() {
        let s = scene("a cup in front of a bottle", "outdoor", 11);
        let text = s.to_json();
        let back = SceneGraph::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), text);
        assert_eq!(scene("a cup in front of a bottle", "outdoor", 11).to_json(), text);
        assert_eq!(s.ground_truth.spec.triples[0].relation, RelationKind::IN_FRONT);
    }

    #[test]
    fn rejects_other_versions() {
        let s = scene("a cat near a dog", "white", 2);
        let text = s.to_json().replacen("scene.v1", "scene.v9", 1);
        assert!(matches!(SceneGraph::from_json(&text), Err(SceneError::UnsupportedFormat(_))));
    }
}
