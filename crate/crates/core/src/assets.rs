//! Asset library: object classes, mesh variants, out-of-vocabulary
//! substitutes and backgrounds.
//!
//! The shipped manifest lists 101 classes backed by procedural placeholder
//! geometry. User manifests can point classes at ASCII indexed-triangle mesh
//! files (`v x y z` / `f i j k`, 1-based indices, `.tri` or `.obj`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{vec3, Aabb, Vec3};
use crate::rng::{derive_seed, fnv1a64};

pub const DEFAULT_MANIFEST: &str = include_str!("../data/default_manifest.toml");

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema violation in `{field}`: {message}")]
    SchemaViolation { field: String, message: String },
    #[error("unknown mesh format: {0} (expected .tri or .obj)")]
    UnknownMeshFormat(PathBuf),
    #[error("{path}:{line}: {message}")]
    MeshParse { path: String, line: usize, message: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown background `{0}`")]
    UnknownBackground(String),
    #[error("class name is empty")]
    EmptyName,
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> AssetError {
    AssetError::SchemaViolation { field: field.into(), message: message.into() }
}

/// Indexed triangle mesh, coordinates in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn is_valid(&self) -> bool {
        !self.triangles.is_empty()
            && self.vertices.iter().all(|v| v.iter().all(|c| c.is_finite()))
            && self.triangles.iter().all(|t| t.iter().all(|&i| (i as usize) < self.vertices.len()))
    }

    /// Parses the ASCII indexed-triangle format. `source` is only used in errors.
    pub fn parse_ascii(text: &str, source: &str) -> Result<Mesh, AssetError> {
        let err = |line: usize, message: String| AssetError::MeshParse { path: source.to_string(), line, message };
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                None => continue,
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .map(|p| p.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| err(n + 1, format!("bad vertex: {e}")))?;
                    if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                        return Err(err(n + 1, "vertex needs 3 finite coordinates".into()));
                    }
                    vertices.push(vec3(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    // `f 1/1/1 2/2/2 3/3/3` OBJ style is accepted; only the position index is used.
                    let idx: Vec<u32> = parts
                        .map(|p| p.split('/').next().unwrap_or("").parse::<u32>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| err(n + 1, format!("bad face index: {e}")))?;
                    if idx.len() < 3 || idx.contains(&0) {
                        return Err(err(n + 1, "face needs at least 3 one-based indices".into()));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push((n + 1, [idx[0] - 1, idx[k] - 1, idx[k + 1] - 1]));
                    }
                }
                Some(_) => continue,
            }
        }
        for (line, f) in &faces {
            if f.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(err(*line, "face index out of range".into()));
            }
        }
        let mesh = Mesh { vertices, triangles: faces.into_iter().map(|(_, f)| f).collect() };
        if mesh.triangles.is_empty() {
            return Err(err(0, "mesh has no faces".into()));
        }
        Ok(mesh)
    }

    /// Uniformly rescales so the largest bbox extent is 1 m, centers x/y on
    /// the origin and puts the bbox bottom at z = 0. Returns the scale factor.
    pub fn normalize_to_unit_cube(&mut self) -> f64 {
        let b = self.bbox();
        let max_extent = b.extent().max();
        let scale = if max_extent > 0.0 { 1.0 / max_extent } else { 1.0 };
        let anchor = vec3(b.center().x, b.center().y, b.min.z);
        for v in &mut self.vertices {
            *v = (*v - anchor) * scale;
        }
        scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssetVariant {
    Placeholder,
    Mesh { source: String, mesh: Arc<Mesh> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub name: String,
    pub coco: bool,
    pub variants: Vec<AssetVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundRecord {
    pub name: String,
    /// `procedural:<name>` or a path to an equirectangular PNG. `None` means
    /// the constant `base_color`.
    pub panorama: Option<String>,
    pub floor_texture: String,
    pub base_color: [f64; 3],
    pub floor_color: [f64; 3],
}

/// A selected, rescaled asset ready for placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetInstance {
    pub class_name: String,
    pub variant: usize,
    pub mesh: Mesh,
    pub base_color: [f64; 3],
    pub scale_applied: f64,
}

impl AssetInstance {
    pub fn height(&self) -> f64 {
        self.mesh.bbox().extent().z
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    version: Option<u32>,
    #[serde(default)]
    classes: Vec<ClassEntry>,
    #[serde(default)]
    substitutes: BTreeMap<String, String>,
    #[serde(default)]
    backgrounds: Vec<BackgroundEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassEntry {
    class: String,
    #[serde(default)]
    coco: bool,
    #[serde(default)]
    meshes: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BackgroundEntry {
    name: String,
    #[serde(default)]
    panorama: Option<String>,
    #[serde(default)]
    floor_texture: Option<String>,
    #[serde(default)]
    base_color: Option<[f64; 3]>,
    #[serde(default)]
    floor_color: Option<[f64; 3]>,
}

const FLOOR_TEXTURES: [&str; 4] = ["plain", "planks", "grass", "checker"];

#[derive(Debug, Clone, PartialEq)]
pub struct AssetCatalog {
    classes: Vec<ClassRecord>,
    substitutes: BTreeMap<String, String>,
    backgrounds: Vec<BackgroundRecord>,
}

fn normalize_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn default_backgrounds() -> Vec<BackgroundRecord> {
    vec![
        BackgroundRecord {
            name: "Indoor".into(),
            panorama: Some("procedural:indoor".into()),
            floor_texture: "planks".into(),
            base_color: [0.8, 0.76, 0.7],
            floor_color: [0.55, 0.38, 0.22],
        },
        BackgroundRecord {
            name: "Outdoor".into(),
            panorama: Some("procedural:outdoor".into()),
            floor_texture: "grass".into(),
            base_color: [0.6, 0.75, 0.95],
            floor_color: [0.3, 0.55, 0.22],
        },
        BackgroundRecord {
            name: "White".into(),
            panorama: None,
            floor_texture: "plain".into(),
            base_color: [1.0, 1.0, 1.0],
            floor_color: [0.85, 0.85, 0.85],
        },
    ]
}

impl AssetCatalog {
    /// The shipped 101-class catalog.
    pub fn default_catalog() -> AssetCatalog {
        Self::from_manifest_str(DEFAULT_MANIFEST, Path::new(".")).expect("shipped manifest is valid")
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<AssetCatalog, AssetError> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(AssetError::MissingFile(path.to_path_buf()));
        }
        let text =
            std::fs::read_to_string(path).map_err(|source| AssetError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_manifest_str(&text, base)
    }

    /// Parses manifest text; relative mesh paths resolve against `base_dir`.
    pub fn from_manifest_str(text: &str, base_dir: &Path) -> Result<AssetCatalog, AssetError> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg.split('`').nth(1).map(str::to_string).unwrap_or_else(|| "manifest".to_string());
            schema(field, msg)
        })?;
        if let Some(v) = file.version {
            if v != 1 {
                return Err(schema("version", format!("unsupported manifest version {v}")));
            }
        }

        let mut classes: BTreeMap<String, ClassRecord> = BTreeMap::new();
        for (i, entry) in file.classes.into_iter().enumerate() {
            let name = normalize_name(&entry.class);
            if name.is_empty() {
                return Err(schema(format!("classes[{i}].class"), "empty class name"));
            }
            if classes.contains_key(&name) {
                return Err(schema(format!("classes[{i}].class"), format!("duplicate class `{name}`")));
            }
            let mut variants = Vec::new();
            for mesh_path in &entry.meshes {
                let p = base_dir.join(mesh_path);
                let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
                if !matches!(ext.as_deref(), Some("tri") | Some("obj")) {
                    return Err(AssetError::UnknownMeshFormat(p));
                }
                if !p.is_file() {
                    return Err(AssetError::MissingFile(p));
                }
                let text = std::fs::read_to_string(&p).map_err(|source| AssetError::Io { path: p.clone(), source })?;
                let mesh = Mesh::parse_ascii(&text, mesh_path)?;
                variants.push(AssetVariant::Mesh { source: mesh_path.clone(), mesh: Arc::new(mesh) });
            }
            if variants.is_empty() {
                variants.push(AssetVariant::Placeholder);
            }
            classes.insert(name.clone(), ClassRecord { name, coco: entry.coco, variants });
        }

        let mut substitutes = BTreeMap::new();
        for (noun, target) in file.substitutes {
            let noun_n = normalize_name(&noun);
            let target_n = normalize_name(&target);
            let field = format!("substitutes.{noun}");
            if noun_n.is_empty() {
                return Err(schema(field, "empty noun"));
            }
            if classes.contains_key(&noun_n) {
                return Err(schema(field, "noun is already a catalog class"));
            }
            if !classes.contains_key(&target_n) {
                return Err(schema(field, format!("target `{target}` is not a catalog class")));
            }
            substitutes.insert(noun_n, target_n);
        }

        let mut backgrounds = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, b) in file.backgrounds.into_iter().enumerate() {
            let key = b.name.to_lowercase();
            if b.name.trim().is_empty() || !seen.insert(key) {
                return Err(schema(format!("backgrounds[{i}].name"), "empty or duplicate name"));
            }
            let floor_texture = b.floor_texture.unwrap_or_else(|| "plain".into());
            if !FLOOR_TEXTURES.contains(&floor_texture.as_str()) {
                return Err(schema(
                    format!("backgrounds[{i}].floor_texture"),
                    format!("expected one of {FLOOR_TEXTURES:?}"),
                ));
            }
            let panorama = match b.panorama {
                Some(p) if p.starts_with("procedural:") => Some(p),
                Some(p) => Some(base_dir.join(p).to_string_lossy().into_owned()),
                None => None,
            };
            backgrounds.push(BackgroundRecord {
                name: b.name,
                panorama,
                floor_texture,
                base_color: b.base_color.unwrap_or([1.0, 1.0, 1.0]),
                floor_color: b.floor_color.unwrap_or([0.85, 0.85, 0.85]),
            });
        }
        if backgrounds.is_empty() {
            backgrounds = default_backgrounds();
        }
        backgrounds.sort_by(|a, b| a.name.cmp(&b.name));

        Ok(AssetCatalog { classes: classes.into_values().collect(), substitutes, backgrounds })
    }

    pub fn classes(&self) -> &[ClassRecord] {
        &self.classes
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.name.as_str())
    }

    pub fn class(&self, name: &str) -> Option<&ClassRecord> {
        self.classes.binary_search_by(|c| c.name.as_str().cmp(name)).ok().map(|i| &self.classes[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.class(name).is_some()
    }

    pub fn substitutes(&self) -> &BTreeMap<String, String> {
        &self.substitutes
    }

    pub fn backgrounds(&self) -> &[BackgroundRecord] {
        &self.backgrounds
    }

    /// Case-insensitive background lookup.
    pub fn background(&self, name: &str) -> Option<&BackgroundRecord> {
        self.backgrounds.iter().find(|b| b.name.eq_ignore_ascii_case(name))
    }

    /// Maps a noun to a catalog class: itself when in the catalog, its
    /// substitute when listed, `None` otherwise.
    pub fn resolve(&self, noun: &str) -> Option<&str> {
        let n = normalize_name(noun);
        if let Some(c) = self.class(&n) {
            return Some(c.name.as_str());
        }
        self.substitutes.get(&n).map(String::as_str)
    }

    /// Nouns that the substitute table pairs with `class`, in either direction.
    pub fn confusable_with(&self, class: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .substitutes
            .iter()
            .filter(|(_, target)| target.as_str() == class)
            .map(|(noun, _)| noun.as_str())
            .collect();
        if let Some(t) = self.substitutes.get(class) {
            out.push(t.as_str());
        }
        out
    }

    /// Every noun the parser accepts: catalog classes and substitute keys.
    pub fn known_nouns(&self) -> impl Iterator<Item = &str> {
        self.class_names().chain(self.substitutes.keys().map(String::as_str))
    }

    /// Draws a variant uniformly under `seed` and rescales it into the unit cube.
    pub fn select_asset(&self, class_name: &str, seed: u64) -> Result<AssetInstance, AssetError> {
        let record = self.class(class_name).ok_or_else(|| AssetError::UnknownClass(class_name.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("asset:{class_name}")));
        let variant = rng.random_range(0..record.variants.len());
        let color = class_color(&record.name);
        let mut mesh = match &record.variants[variant] {
            AssetVariant::Placeholder => placeholder_mesh(&record.name)?.0,
            AssetVariant::Mesh { mesh, .. } => (**mesh).clone(),
        };
        let scale_applied = mesh.normalize_to_unit_cube();
        Ok(AssetInstance { class_name: record.name.clone(), variant, mesh, base_color: color, scale_applied })
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h / 60.0).rem_euclid(6.0);
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Stable per-class color: the top three bytes of the name hash pick the hue.
pub fn class_color(name: &str) -> [f64; 3] {
    let h = fnv1a64(name.as_bytes());
    let hue = (h >> 40) as f64 / (1u64 << 24) as f64 * 360.0;
    hsv_to_rgb(hue, 0.6, 0.85)
}

/// Procedural stand-in geometry: a box whose front (+X) face is chamfered
/// into a raised label panel. Proportions come from the name hash.
pub fn placeholder_mesh(class_name: &str) -> Result<(Mesh, [f64; 3]), AssetError> {
    let name = class_name.trim();
    if name.is_empty() {
        return Err(AssetError::EmptyName);
    }
    let h = fnv1a64(name.as_bytes());
    let byte = |k: u32| ((h >> (8 * k)) & 0xff) as f64 / 255.0;
    let mut d = [0.55 + 0.45 * byte(0), 0.55 + 0.45 * byte(1), 0.55 + 0.45 * byte(2)];
    let m = d.iter().cloned().fold(0.0, f64::max);
    for x in &mut d {
        *x /= m;
    }
    let (dx, dy, dz) = (d[0], d[1], d[2]);
    let bevel = 0.12 * dy.min(dz);
    let (hx, hy) = (dx / 2.0, dy / 2.0);
    let xr = hx - bevel;

    let mut vertices = Vec::with_capacity(12);
    // 0..4 back, 4..8 ring, 8..12 front panel; order: (-y,0) (+y,0) (+y,top) (-y,top)
    for (x, inset) in [(-hx, 0.0), (xr, 0.0), (hx, bevel)] {
        vertices.push(vec3(x, -hy + inset, inset));
        vertices.push(vec3(x, hy - inset, inset));
        vertices.push(vec3(x, hy - inset, dz - inset));
        vertices.push(vec3(x, -hy + inset, dz - inset));
    }
    let mut triangles = Vec::with_capacity(20);
    let mut quad = |a: u32, b: u32, c: u32, d: u32| {
        triangles.push([a, b, c]);
        triangles.push([a, c, d]);
    };
    quad(0, 3, 2, 1);
    for k in 0..4u32 {
        let n = (k + 1) % 4;
        quad(k, n, 4 + n, 4 + k);
        quad(4 + k, 4 + n, 8 + n, 8 + k);
    }
    quad(8, 9, 10, 11);
    Ok((Mesh { vertices, triangles }, class_color(name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_counts() {
        let cat = AssetCatalog::default_catalog();
        assert_eq!(cat.classes().len(), 101);
        assert_eq!(cat.classes().iter().filter(|c| c.coco).count(), 80);
        assert!(cat.classes().windows(2).all(|w| w[0].name < w[1].name));
        assert_eq!(cat.backgrounds().len(), 3);
    }

    #[test]
    fn substitutes_cover_ood_table_and_target_catalog() {
        let cat = AssetCatalog::default_catalog();
        assert_eq!(cat.resolve("helicopter"), Some("airplane"));
        assert_eq!(cat.resolve("Toaster Oven"), Some("microwave"));
        assert_eq!(cat.resolve("rabbit"), Some("cat"));
        for target in cat.substitutes().values() {
            assert!(cat.contains(target));
        }
        // every coco class has an OOD partner
        for c in cat.classes().iter().filter(|c| c.coco) {
            assert!(!cat.confusable_with(&c.name).is_empty(), "{}", c.name);
        }
    }

    #[test]
    fn resolve_is_idempotent_on_catalog_classes() {
        let cat = AssetCatalog::default_catalog();
        for name in cat.class_names() {
            assert_eq!(cat.resolve(name), Some(name));
        }
        assert_eq!(cat.resolve("spaceship"), None);
    }

    #[test]
    fn single_class_manifest_gets_placeholder() {
        let cat = AssetCatalog::from_manifest_str("[[classes]]\nclass = \"cat\"\n", Path::new(".")).unwrap();
        assert_eq!(cat.classes().len(), 1);
        assert_eq!(cat.classes()[0].variants, vec![AssetVariant::Placeholder]);
        let inst = cat.select_asset("cat", 3).unwrap();
        assert_eq!(inst.mesh, placeholder_mesh("cat").unwrap().0);
        assert_eq!(cat.backgrounds().len(), 3);
    }

    #[test]
    fn manifest_order_does_not_matter() {
        let a = "[[classes]]\nclass = \"dog\"\n[[classes]]\nclass = \"cat\"\ncoco = true\n";
        let b = "[[classes]]\nclass = \"cat\"\ncoco = true\n[[classes]]\nclass = \"dog\"\n";
        assert_eq!(
            AssetCatalog::from_manifest_str(a, Path::new(".")).unwrap(),
            AssetCatalog::from_manifest_str(b, Path::new(".")).unwrap()
        );
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = AssetCatalog::from_manifest_str("[[classes]]\ncoco = true\n", Path::new(".")).unwrap_err();
        match e {
            AssetError::SchemaViolation { field, .. } => assert_eq!(field, "class"),
            other => panic!("{other:?}"),
        }
        let e = AssetCatalog::from_manifest_str(
            "[[classes]]\nclass = \"cat\"\n[substitutes]\nhelicopter = \"airplane\"\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(matches!(e, AssetError::SchemaViolation { ref field, .. } if field == "substitutes.helicopter"));
        let e =
            AssetCatalog::from_manifest_str("[[classes]]\nclass = \"cat\"\nmeshes = [\"cat.fbx\"]\n", Path::new("."))
                .unwrap_err();
        assert!(matches!(e, AssetError::UnknownMeshFormat(_)));
        let e = AssetCatalog::from_manifest_str(
            "[[classes]]\nclass = \"cat\"\nmeshes = [\"nowhere.tri\"]\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(matches!(e, AssetError::MissingFile(_)));
        assert!(matches!(AssetCatalog::load_manifest("/definitely/not/here.toml"), Err(AssetError::MissingFile(_))));
    }

    #[test]
    fn select_asset_deterministic_and_unknown() {
        let cat = AssetCatalog::default_catalog();
        assert_eq!(cat.select_asset("dog", 7).unwrap(), cat.select_asset("dog", 7).unwrap());
        assert!(matches!(cat.select_asset("unicorn", 1), Err(AssetError::UnknownClass(_))));
    }

    #[test]
    fn placeholder_properties() {
        assert!(matches!(placeholder_mesh("  "), Err(AssetError::EmptyName)));
        let (m, c) = placeholder_mesh("cat").unwrap();
        assert_eq!(c, placeholder_mesh("cat").unwrap().1);
        assert_eq!(m.triangles.len(), 20);
        assert!(m.is_valid());
        assert!(m.bbox().extent().max() <= 1.0 + 1e-12);
        assert_ne!(class_color("cat"), class_color("dog"));
    }

    #[test]
    fn placeholder_colors_distinct_over_catalog() {
        let cat = AssetCatalog::default_catalog();
        let mut seen = BTreeSet::new();
        for name in cat.class_names() {
            let c = class_color(name);
            assert!(seen.insert(c.map(f64::to_bits)), "color collision for {name}");
        }
    }

    #[test]
    fn ascii_mesh_parsing() {
        let m = Mesh::parse_ascii("# quad\nv 0 0 0\nv 2 0 0\nv 2 2 0\nv 0 2 1\nf 1 2 3 4\n", "q").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(Mesh::parse_ascii("v 0 0 0\nf 1 2 3\n", "bad").is_err());
        assert!(Mesh::parse_ascii("v 0 0 x\n", "bad").is_err());
        let mut m = m;
        let s = m.normalize_to_unit_cube();
        assert!((s - 0.5).abs() < 1e-12);
        let b = m.bbox();
        assert!((b.extent().max() - 1.0).abs() < 1e-12);
        assert_eq!(b.min.z, 0.0);
        assert!((b.center().x).abs() < 1e-12 && (b.center().y).abs() < 1e-12);
    }
}
