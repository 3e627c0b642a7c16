//! Guidance artifacts for downstream consumers: Canny edge maps, ground-truth
//! boxes and centroids from the ID mask, and scene exports.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Background, SceneGraph};

pub const DEFAULT_LOW_THRESHOLD: f32 = 50.0;
pub const DEFAULT_HIGH_THRESHOLD: f32 = 150.0;
pub const CANNY_SIGMA: f32 = 1.4;

#[derive(Debug, Error, PartialEq)]
pub enum GuidanceError {
    #[error("thresholds must satisfy 0 <= low < high <= 255 (got {low}, {high})")]
    BadThresholds { low: f32, high: f32 },
    #[error("unsupported export format `{0}` (expected scene.v1 or build-script)")]
    UnsupportedFormat(String),
    #[error("buffer length {got} does not match {width}x{height}")]
    BadBuffer { got: usize, width: u32, height: u32 },
}

/// Binary edge image: 255 on edges, 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

fn luminance(rgb: &[u8]) -> Vec<f32> {
    rgb.chunks_exact(3).map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32).collect()
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-radius..=radius).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable blur with edge replication.
fn blur(img: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] =
                k.iter().enumerate().map(|(i, kv)| kv * img[y * w + clamp(x as isize + i as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] =
                k.iter().enumerate().map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - r, h) * w + x]).sum();
        }
    }
    out
}

/// Canny edge detector on an RGB8 image.
///
/// Thresholds apply to the L2 Sobel magnitude of the blurred luminance, the
/// same scale as OpenCV's `Canny(..., L2gradient=true)`.
pub fn edge_map(rgb: &[u8], width: u32, height: u32, low: f32, high: f32) -> Result<EdgeMap, GuidanceError> {
    if !(0.0 <= low && low < high && high <= 255.0) {
        return Err(GuidanceError::BadThresholds { low, high });
    }
    let (w, h) = (width as usize, height as usize);
    if rgb.len() != w * h * 3 {
        return Err(GuidanceError::BadBuffer { got: rgb.len(), width, height });
    }
    let smooth = blur(&luminance(rgb), w, h, CANNY_SIGMA);
    let at = |x: isize, y: isize| smooth[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];

    let mut mag = vec![0.0f32; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            // 0: horizontal gradient, 1: 45°, 2: vertical, 3: 135° (image y down)
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[i] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }

    // Non-maximum suppression. The strict/non-strict pair keeps exactly one
    // pixel of a symmetric two-pixel ridge.
    let get = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = match dir[i] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            if m > get(x - dx, y - dy) && m >= get(x + dx, y + dy) {
                thin[i] = m;
            }
        }
    }

    // Hysteresis: weak pixels survive when 8-connected to a strong one.
    let mut out = vec![0u8; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            out[i] = 255;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0 && thin[j] >= low {
                    out[j] = 255;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap { width, height, data: out })
}

/// Ground-truth box for one mask label. Coordinates are inclusive pixel
/// indices; the centroid is the mean pixel index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBox {
    pub label: u8,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub cx: f64,
    pub cy: f64,
    pub pixels: u64,
}

/// Tight boxes and centroids per nonzero label, ordered by label.
pub fn bboxes_from_mask(mask: &[u8], width: u32, height: u32) -> Vec<LabelBox> {
    struct Acc {
        x0: u32,
        y0: u32,
        x1: u32,
        y1: u32,
        sx: f64,
        sy: f64,
        n: u64,
    }
    let mut acc: BTreeMap<u8, Acc> = BTreeMap::new();
    for y in 0..height {
        for x in 0..width {
            let label = mask[(y * width + x) as usize];
            if label == 0 {
                continue;
            }
            let a = acc.entry(label).or_insert(Acc { x0: x, y0: y, x1: x, y1: y, sx: 0.0, sy: 0.0, n: 0 });
            a.x0 = a.x0.min(x);
            a.y0 = a.y0.min(y);
            a.x1 = a.x1.max(x);
            a.y1 = a.y1.max(y);
            a.sx += x as f64;
            a.sy += y as f64;
            a.n += 1;
        }
    }
    acc.into_iter()
        .map(|(label, a)| LabelBox {
            label,
            x0: a.x0,
            y0: a.y0,
            x1: a.x1,
            y1: a.y1,
            cx: a.sx / a.n as f64,
            cy: a.sy / a.n as f64,
            pixels: a.n,
        })
        .collect()
}

fn default_confidence() -> f64 {
    1.0
}

/// One detection per line in detection files, shared by ground-truth export
/// and external detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLine {
    pub image_id: String,
    /// Id-mask label; 0 for external detections.
    #[serde(default)]
    pub label: u32,
    pub class: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub pixels: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

/// Ground-truth detection lines for a rendered scene.
pub fn detections_for_scene(
    image_id: &str,
    scene: &SceneGraph,
    mask: &[u8],
    width: u32,
    height: u32,
) -> Vec<DetectionLine> {
    bboxes_from_mask(mask, width, height)
        .into_iter()
        .filter_map(|b| {
            let obj = scene.objects.get(b.label as usize - 1)?;
            Some(DetectionLine {
                image_id: image_id.to_string(),
                label: b.label as u32,
                class: obj.asset.class_name.clone(),
                x0: b.x0 as f64,
                y0: b.y0 as f64,
                x1: b.x1 as f64,
                y1: b.y1 as f64,
                cx: b.cx,
                cy: b.cy,
                pixels: b.pixels,
                confidence: 1.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    SceneV1,
    BuildScript,
}

impl FromStr for ExportFormat {
    type Err = GuidanceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scene.v1" => Ok(ExportFormat::SceneV1),
            "build-script" => Ok(ExportFormat::BuildScript),
            other => Err(GuidanceError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn export_scene(scene: &SceneGraph, format: ExportFormat) -> String {
    match format {
        ExportFormat::SceneV1 => scene.to_json(),
        ExportFormat::BuildScript => build_script(scene),
    }
}

fn tuple3(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:?}")).collect();
    format!("({})", parts.join(", "))
}

/// Blender Python script that rebuilds the scene.
fn build_script(scene: &SceneGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Scene build script ({}, seed {})", scene.format, scene.seed);
    let _ = writeln!(s, "# prompt: {}", scene.ground_truth.spec.raw_text.replace('\n', " "));
    s.push_str("import math\nimport bpy\n\n");
    s.push_str("bpy.ops.wm.read_factory_settings(use_empty=True)\n");
    s.push_str("scene = bpy.context.scene\n\n");
    s.push_str(
        "def make_material(name, rgb):\n    mat = bpy.data.materials.new(name)\n    mat.diffuse_color = (rgb[0], rgb[1], rgb[2], 1.0)\n    return mat\n\n",
    );

    for (k, placed) in scene.objects.iter().enumerate() {
        let name = format!("{}_{}", placed.asset.class_name.replace(' ', "_"), k + 1);
        let t = placed.to_world(&crate::geom::Vec3::zeros());
        let _ = writeln!(s, "# --- object {}: {} ---", k + 1, placed.asset.class_name);
        let verts: Vec<String> = placed.asset.mesh.vertices.iter().map(|v| tuple3(v.iter().copied())).collect();
        let faces: Vec<String> =
            placed.asset.mesh.triangles.iter().map(|f| format!("({}, {}, {})", f[0], f[1], f[2])).collect();
        let _ = writeln!(s, "verts = [{}]", verts.join(", "));
        let _ = writeln!(s, "faces = [{}]", faces.join(", "));
        let _ = writeln!(s, "mesh = bpy.data.meshes.new(\"{name}\")");
        s.push_str("mesh.from_pydata(verts, [], faces)\n");
        let _ = writeln!(s, "obj = bpy.data.objects.new(\"{name}\", mesh)");
        s.push_str("scene.collection.objects.link(obj)\n");
        let _ = writeln!(s, "obj.location = {}", tuple3(t.iter().copied()));
        let _ = writeln!(s, "obj.rotation_euler = (0.0, 0.0, {:?})", placed.yaw);
        let _ = writeln!(
            s,
            "obj.data.materials.append(make_material(\"{name}_mat\", {}))\n",
            tuple3(placed.asset.base_color)
        );
    }

    let cam = &scene.camera;
    s.push_str("# --- camera ---\n");
    s.push_str("cam_data = bpy.data.cameras.new(\"camera\")\ncam_data.sensor_fit = 'VERTICAL'\n");
    let _ = writeln!(s, "cam_data.angle_y = math.radians({:?})", cam.vfov_deg);
    s.push_str("cam = bpy.data.objects.new(\"camera\", cam_data)\nscene.collection.objects.link(cam)\n");
    let _ = writeln!(s, "cam.location = {}", tuple3(cam.position.iter().copied()));
    s.push_str("target = bpy.data.objects.new(\"camera_target\", None)\nscene.collection.objects.link(target)\n");
    let _ = writeln!(s, "target.location = {}", tuple3(cam.look_at.iter().copied()));
    s.push_str("track = cam.constraints.new(type='TRACK_TO')\ntrack.target = target\ntrack.track_axis = 'TRACK_NEGATIVE_Z'\ntrack.up_axis = 'UP_Y'\nscene.camera = cam\n\n");

    s.push_str("# --- light ---\n");
    s.push_str("light_data = bpy.data.lights.new(\"light\", type='POINT')\n");
    let _ = writeln!(s, "light_data.energy = {:?}", scene.light.intensity * 1000.0);
    s.push_str("light = bpy.data.objects.new(\"light\", light_data)\nscene.collection.objects.link(light)\n");
    let _ = writeln!(s, "light.location = {}\n", tuple3(scene.light.position.iter().copied()));

    s.push_str("# --- background ---\n");
    s.push_str("world = bpy.data.worlds.new(\"world\")\nscene.world = world\nworld.use_nodes = True\n");
    match &scene.background {
        Background::Constant { color } => {
            let _ = writeln!(
                s,
                "world.node_tree.nodes[\"Background\"].inputs[0].default_value = ({:?}, {:?}, {:?}, 1.0)\n",
                color[0], color[1], color[2]
            );
        }
        Background::Panorama { source, radius, rotation } => {
            let _ = writeln!(s, "# panorama source: {source} (sphere radius {radius:?} m)");
            s.push_str("env = world.node_tree.nodes.new(\"ShaderNodeTexEnvironment\")\n");
            s.push_str("mapping = world.node_tree.nodes.new(\"ShaderNodeMapping\")\n");
            s.push_str("coords = world.node_tree.nodes.new(\"ShaderNodeTexCoord\")\n");
            let _ = writeln!(s, "mapping.inputs[\"Rotation\"].default_value = (0.0, 0.0, {rotation:?})");
            s.push_str("world.node_tree.links.new(coords.outputs[\"Generated\"], mapping.inputs[\"Vector\"])\n");
            s.push_str("world.node_tree.links.new(mapping.outputs[\"Vector\"], env.inputs[\"Vector\"])\n");
            s.push_str("world.node_tree.links.new(env.outputs[\"Color\"], world.node_tree.nodes[\"Background\"].inputs[0])\n\n");
        }
    }

    if let Some(floor) = &scene.floor {
        s.push_str("# --- floor ---\n");
        let _ = writeln!(s, "bpy.ops.mesh.primitive_plane_add(size=200.0, location=(0.0, 0.0, {:?}))", floor.z);
        let _ = writeln!(s, "bpy.context.object.name = \"floor_{}\"", floor.texture);
        let _ = writeln!(
            s,
            "bpy.context.object.data.materials.append(make_material(\"floor_mat\", {}))",
            tuple3(floor.color)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_thresholds() {
        let img = vec![0u8; 16 * 16 * 3];
        assert!(edge_map(&img, 16, 16, 100.0, 50.0).is_err());
        assert!(edge_map(&img, 16, 16, -1.0, 50.0).is_err());
        assert!(edge_map(&img, 16, 16, 10.0, 256.0).is_err());
        assert!(edge_map(&img, 16, 16, 10.0, 10.0).is_err());
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = vec![137u8; 40 * 30 * 3];
        let e = edge_map(&img, 40, 30, 50.0, 150.0).unwrap();
        assert!(e.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn mask_box_example() {
        let (w, h) = (64u32, 48u32);
        let mut mask = vec![0u8; (w * h) as usize];
        for y in 10..=19 {
            for x in 20..=29 {
                mask[(y * w + x) as usize] = 1;
            }
        }
        let b = bboxes_from_mask(&mask, w, h);
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].x0, b[0].y0, b[0].x1, b[0].y1), (20, 10, 29, 19));
        assert_eq!((b[0].cx, b[0].cy), (24.5, 14.5));
        assert_eq!(b[0].pixels, 100);
        assert!(bboxes_from_mask(&[0u8; 100], 10, 10).is_empty());
    }

    #[test]
    fn format_names() {
        assert_eq!("scene.v1".parse::<ExportFormat>(), Ok(ExportFormat::SceneV1));
        assert_eq!("build-script".parse::<ExportFormat>(), Ok(ExportFormat::BuildScript));
        assert_eq!("gltf".parse::<ExportFormat>(), Err(GuidanceError::UnsupportedFormat("gltf".into())));
    }
}
