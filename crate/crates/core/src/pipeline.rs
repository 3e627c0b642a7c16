//! End-to-end generation: prompt text to rendered layers and files on disk.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{AssetCatalog, AssetError};
use crate::guidance::{detections_for_scene, DetectionLine};
use crate::imageio::ImageIoError;
use crate::layout::{diversify, solve, JitterConfig, Layout, LayoutConfig};
use crate::prompt::{parse_prompt, PromptError, SpatialSpec};
use crate::render::{FrameSet, RenderError, Renderer};
use crate::rng::{derive_indexed, derive_seed};
use crate::scene::{synthesize, SceneError, SceneGraph};

pub const RGB_FILE: &str = "rgb.png";
pub const DEPTH_FILE: &str = "depth.png";
pub const MASK_FILE: &str = "mask.png";
pub const SCENE_FILE: &str = "scene.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub width: u32,
    pub height: u32,
    pub background: String,
    pub images_per_prompt: usize,
    pub diversify: bool,
    pub shadows: bool,
    pub layout: LayoutConfig,
    pub jitter: JitterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            width: 512,
            height: 512,
            background: "white".into(),
            images_per_prompt: 4,
            diversify: true,
            shadows: true,
            layout: LayoutConfig::default(),
            jitter: JitterConfig::default(),
        }
    }
}

/// Everything produced for one image.
#[derive(Debug, Clone)]
pub struct Generated {
    pub spec: SpatialSpec,
    pub layout: Layout,
    pub scene: SceneGraph,
    pub frames: FrameSet,
}

/// Builds the scene for an already parsed spec.
pub fn build_scene(
    spec: &SpatialSpec,
    seed: u64,
    config: &PipelineConfig,
    catalog: &AssetCatalog,
) -> Result<(Layout, SceneGraph), PipelineError> {
    let mut layout = solve(spec, seed, &config.layout);
    if config.diversify {
        layout = diversify(&layout, seed, &config.jitter);
    }
    let scene = synthesize(&layout, spec, catalog, &config.background, seed)?;
    Ok((layout, scene))
}

/// Parses, lays out, synthesizes and renders one image.
pub fn generate(
    prompt: &str,
    seed: u64,
    config: &PipelineConfig,
    catalog: &AssetCatalog,
) -> Result<Generated, PipelineError> {
    let spec = parse_prompt(prompt, catalog)?;
    let (layout, scene) = build_scene(&spec, seed, config, catalog)?;
    let frames = Renderer::new(&scene, config.width, config.height)?.with_shadows(config.shadows).render();
    Ok(Generated { spec, layout, scene, frames })
}

/// Seed for image `index` of a prompt, independent of prompt order and
/// worker scheduling.
pub fn image_seed(base: u64, prompt: &str, index: usize) -> u64 {
    derive_indexed(derive_seed(base, prompt.trim()), "image", index as u64)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

pub fn write_detections(path: &Path, lines: &[DetectionLine]) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    for l in lines {
        serde_json::to_writer(&mut w, l).expect("detections are serializable");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the render layers, the scene and its ground-truth detections into `dir`.
pub fn write_outputs(dir: &Path, image_id: &str, g: &Generated) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rgb = dir.join(RGB_FILE);
    g.frames.write_rgb_png(create(&rgb)?)?;
    let depth = dir.join(DEPTH_FILE);
    g.frames.write_depth_png(create(&depth)?)?;
    let mask = dir.join(MASK_FILE);
    g.frames.write_mask_png(create(&mask)?)?;
    let scene = dir.join(SCENE_FILE);
    fs::write(&scene, g.scene.to_json()).map_err(io_err(&scene))?;
    let det = dir.join(DETECTIONS_FILE);
    let lines = detections_for_scene(image_id, &g.scene, &g.frames.id_mask, g.frames.width, g.frames.height);
    write_detections(&det, &lines)?;
    Ok(vec![rgb, depth, mask, scene, det])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    Ok,
    Failed,
}

/// One manifest line per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub prompt_id: String,
    pub prompt: String,
    pub image_index: usize,
    pub seed: u64,
    /// Relative to the batch root.
    pub dir: String,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub items: usize,
    pub failed: usize,
    pub manifest: Vec<ManifestEntry>,
}

/// Renders `images_per_prompt` images for every prompt on a pool of
/// `workers` threads. Failures are recorded per item and do not stop the
/// batch. The manifest and outputs do not depend on `workers`.
pub fn run_batch(
    prompts: &[String],
    base_seed: u64,
    config: &PipelineConfig,
    catalog: &AssetCatalog,
    out_dir: &Path,
    workers: usize,
) -> Result<BatchSummary, PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let cfg_path = out_dir.join(CONFIG_FILE);
    let cfg_text =
        format!("# seed = {base_seed}\n{}", toml::to_string(config).map_err(|e| PipelineError::Pool(e.to_string()))?);
    fs::write(&cfg_path, cfg_text).map_err(io_err(&cfg_path))?;

    let mut jobs = Vec::new();
    for (p, prompt) in prompts.iter().enumerate() {
        for k in 0..config.images_per_prompt {
            let prompt_id = format!("p{p:05}");
            let image_id = format!("{prompt_id}-{k}");
            let dir = format!("{prompt_id}/{k}");
            jobs.push(ManifestEntry {
                seed: image_seed(base_seed, prompt, k),
                image_id,
                prompt_id,
                prompt: prompt.clone(),
                image_index: k,
                dir,
                status: ItemStatus::Ok,
                error: None,
            });
        }
    }

    let run = |mut entry: ManifestEntry| -> ManifestEntry {
        let result = generate(&entry.prompt, entry.seed, config, catalog)
            .and_then(|g| write_outputs(&out_dir.join(&entry.dir), &entry.image_id, &g));
        if let Err(e) = result {
            entry.status = ItemStatus::Failed;
            entry.error = Some(e.to_string());
        }
        entry
    };

    #[cfg(feature = "parallel")]
    let manifest: Vec<ManifestEntry> = {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        pool.install(|| jobs.into_par_iter().map(run).collect())
    };
    #[cfg(not(feature = "parallel"))]
    let manifest: Vec<ManifestEntry> = {
        let _ = workers;
        jobs.into_iter().map(run).collect()
    };

    let path = out_dir.join(MANIFEST_FILE);
    let mut w = create(&path)?;
    for e in &manifest {
        serde_json::to_writer(&mut w, e).expect("manifest is serializable");
        w.write_all(b"\n").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    let failed = manifest.iter().filter(|e| e.status == ItemStatus::Failed).count();
    Ok(BatchSummary { items: manifest.len(), failed, manifest })
}
