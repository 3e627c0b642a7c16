//! Browser bindings: render a prompt, show its edge map, explore layouts.

use relscene::guidance::{edge_map, DEFAULT_HIGH_THRESHOLD as DEFAULT_HIGH, DEFAULT_LOW_THRESHOLD as DEFAULT_LOW};
use relscene::layout::relations_hold;
use relscene::pipeline::{build_scene, generate, PipelineConfig};
use relscene::prompt::parse_prompt;
use relscene::{AssetCatalog, FrameSet};
use wasm_bindgen::prelude::*;

fn config(size: u32, background: &str) -> PipelineConfig {
    PipelineConfig { width: size, height: size, background: background.to_string(), ..Default::default() }
}

fn frames(prompt: &str, seed: u64, size: u32, background: &str) -> Result<FrameSet, JsError> {
    let catalog = AssetCatalog::default_catalog();
    Ok(generate(prompt, seed, &config(size, background), &catalog)?.frames)
}

fn gray_to_rgba(values: impl Iterator<Item = u8>) -> Vec<u8> {
    values.flat_map(|v| [v, v, v, 255]).collect()
}

/// Distinct display colors for mask labels.
fn label_color(label: u8) -> [u8; 3] {
    match label {
        0 => [0, 0, 0],
        1 => [230, 80, 60],
        2 => [60, 140, 230],
        3 => [90, 200, 90],
        n => [(n.wrapping_mul(67)), (n.wrapping_mul(131)), (n.wrapping_mul(29))],
    }
}

/// RGBA pixels of one render layer: `rgb`, `depth` or `mask`.
#[wasm_bindgen]
pub fn render_layer(prompt: &str, seed: u64, size: u32, background: &str, layer: &str) -> Result<Vec<u8>, JsError> {
    let f = frames(prompt, seed, size, background)?;
    Ok(match layer {
        "rgb" => f.rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect(),
        "depth" => {
            let finite = f.depth.iter().copied().filter(|d| d.is_finite());
            let (lo, hi) = finite.fold((f32::MAX, f32::MIN), |(lo, hi), d| (lo.min(d), hi.max(d)));
            let span = (hi - lo).max(1e-6);
            gray_to_rgba(f.depth.iter().map(
                |&d| {
                    if d.is_finite() {
                        (255.0 - (d - lo) / span * 215.0) as u8
                    } else {
                        0
                    }
                },
            ))
        }
        "mask" => f
            .id_mask
            .iter()
            .flat_map(|&l| {
                let [r, g, b] = label_color(l);
                [r, g, b, 255]
            })
            .collect(),
        other => return Err(JsError::new(&format!("unknown layer `{other}`"))),
    })
}

/// RGBA pixels of the Canny edge map of the rendered image.
#[wasm_bindgen]
pub fn render_edges(
    prompt: &str,
    seed: u64,
    size: u32,
    background: &str,
    low: Option<f32>,
    high: Option<f32>,
) -> Result<Vec<u8>, JsError> {
    let f = frames(prompt, seed, size, background)?;
    let e = edge_map(&f.rgb, f.width, f.height, low.unwrap_or(DEFAULT_LOW), high.unwrap_or(DEFAULT_HIGH))?;
    Ok(gray_to_rgba(e.data.into_iter()))
}

/// Parsed relations, solved object positions, camera and light for a
/// prompt and seed, as JSON.
#[wasm_bindgen]
pub fn explore_layout(prompt: &str, seed: u64, diversify: bool) -> Result<String, JsError> {
    let catalog = AssetCatalog::default_catalog();
    let spec = parse_prompt(prompt, &catalog)?;
    let cfg = PipelineConfig { diversify, ..Default::default() };
    let (layout, _) = build_scene(&spec, seed, &cfg, &catalog)?;
    let out = serde_json::json!({
        "triples": spec.triples,
        "substitutions": spec.substitutions,
        "layout": layout,
        "relations_hold": relations_hold(&layout),
    });
    Ok(serde_json::to_string_pretty(&out)?)
}
