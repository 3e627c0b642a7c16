//! VISOR-style spatial fidelity metrics.
//!
//! Each image is judged from its detections: both prompted objects must be
//! detected, and their centroids (or the depth sampled at the centroids) must
//! be ordered as the relation demands. Prompt groups of four images are then
//! reduced to OA, VISOR_uncond, VISOR_cond and VISOR_1..4.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidance::DetectionLine;
use crate::imageio::{DepthConvention, DepthMap};
use crate::prompt::{Axis, Polarity, Triple};

pub const IMAGES_PER_PROMPT: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum VisorError {
    #[error("relation `{0}` cannot be judged by this judge")]
    WrongAxis(String),
    #[error("centroid ({cx:.1}, {cy:.1}) lies outside the {width}x{height} depth map")]
    CentroidOutOfBounds { cx: f64, cy: f64, width: u32, height: u32 },
    #[error("prompt `{prompt_id}` has {got} judgments, expected {IMAGES_PER_PROMPT}")]
    IncompleteGroup { prompt_id: String, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub class: String,
    pub confidence: f64,
    /// `[x0, y0, x1, y1]` in pixels.
    pub bbox: [f64; 4],
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub prompt_id: Option<String>,
    pub objects: Vec<DetectedObject>,
    pub depth_map: Option<String>,
}

impl DetectionRecord {
    /// Highest-confidence detection of `class`; earlier entries win ties.
    pub fn best(&self, class: &str) -> Option<&DetectedObject> {
        self.objects.iter().filter(|o| o.class == class).fold(None, |best: Option<&DetectedObject>, o| match best {
            Some(b) if b.confidence >= o.confidence => Some(b),
            _ => Some(o),
        })
    }
}

/// Groups detection lines into per-image records, dropping detections below
/// `min_confidence`. Images appear in first-seen order.
pub fn group_detections(lines: &[DetectionLine], min_confidence: f64) -> Vec<DetectionRecord> {
    let mut order: Vec<String> = Vec::new();
    let mut by_image: BTreeMap<String, Vec<DetectedObject>> = BTreeMap::new();
    for l in lines {
        let entry = by_image.entry(l.image_id.clone()).or_insert_with(|| {
            order.push(l.image_id.clone());
            Vec::new()
        });
        if l.confidence >= min_confidence {
            entry.push(DetectedObject {
                class: l.class.clone(),
                confidence: l.confidence,
                bbox: [l.x0, l.y0, l.x1, l.y1],
                cx: l.cx,
                cy: l.cy,
            });
        }
    }
    order
        .into_iter()
        .map(|id| DetectionRecord {
            objects: by_image.remove(&id).unwrap_or_default(),
            image_id: id,
            prompt_id: None,
            depth_map: None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Judgment {
    pub both_present: bool,
    pub correct: bool,
}

/// The detections standing for subject and object, plus whether they share a
/// class. A same-class triple needs two detections of that class; either
/// ordering of the two satisfies it.
fn pair<'a>(record: &'a DetectionRecord, triple: &Triple) -> Option<(&'a DetectedObject, &'a DetectedObject, bool)> {
    if triple.subject != triple.object {
        return Some((record.best(&triple.subject)?, record.best(&triple.object)?, false));
    }
    let mut same: Vec<&DetectedObject> = record.objects.iter().filter(|o| o.class == triple.subject).collect();
    same.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    match same[..] {
        [a, b, ..] => Some((a, b, true)),
        _ => None,
    }
}

/// Centroid ordering for left/right/above/below. Image y grows downward.
pub fn judge_2d(record: &DetectionRecord, triple: &Triple) -> Result<Judgment, VisorError> {
    let r = triple.relation;
    if !matches!(r.axis, Axis::Horizontal | Axis::Vertical) {
        return Err(VisorError::WrongAxis(r.name().to_string()));
    }
    let Some((a, b, same)) = pair(record, triple) else {
        return Ok(Judgment::default());
    };
    let holds = |a: &DetectedObject, b: &DetectedObject| match (r.axis, r.polarity) {
        (Axis::Horizontal, Polarity::Negative) => a.cx < b.cx,
        (Axis::Horizontal, _) => a.cx > b.cx,
        (Axis::Vertical, Polarity::Positive) => a.cy < b.cy,
        _ => a.cy > b.cy,
    };
    Ok(Judgment { both_present: true, correct: holds(a, b) || (same && holds(b, a)) })
}

fn sample(depth: &DepthMap, o: &DetectedObject) -> Result<f32, VisorError> {
    let oob = || VisorError::CentroidOutOfBounds { cx: o.cx, cy: o.cy, width: depth.width, height: depth.height };
    if !(o.cx >= 0.0 && o.cy >= 0.0) {
        return Err(oob());
    }
    depth.get(o.cx.floor() as u32, o.cy.floor() as u32).ok_or_else(oob)
}

/// Depth ordering sampled at the two centroids.
pub fn judge_depth(
    record: &DetectionRecord,
    depth: &DepthMap,
    triple: &Triple,
    convention: DepthConvention,
) -> Result<Judgment, VisorError> {
    let r = triple.relation;
    if r.axis != Axis::Depth {
        return Err(VisorError::WrongAxis(r.name().to_string()));
    }
    let Some((a, b, same)) = pair(record, triple) else {
        return Ok(Judgment::default());
    };
    let (da, db) = (sample(depth, a)?, sample(depth, b)?);
    let a_closer = match convention {
        DepthConvention::Metric => da < db,
        DepthConvention::Disparity => da > db,
    };
    let b_closer = match convention {
        DepthConvention::Metric => db < da,
        DepthConvention::Disparity => db > da,
    };
    let correct = if same {
        a_closer || b_closer
    } else if r.polarity == Polarity::Positive {
        a_closer
    } else {
        b_closer
    };
    Ok(Judgment { both_present: true, correct })
}

/// Judges every relation of a prompt on one image. Near-family relations
/// carry no ordering, so they count as correct whenever both objects are
/// detected; depth relations need `depth`.
pub fn judge_image(
    record: &DetectionRecord,
    triples: &[Triple],
    depth: Option<&DepthMap>,
    convention: DepthConvention,
) -> Result<Judgment, VisorError> {
    let mut out = Judgment { both_present: true, correct: true };
    for t in triples {
        let j = match t.relation.axis {
            Axis::Horizontal | Axis::Vertical => judge_2d(record, t)?,
            Axis::Near => {
                let present = pair(record, t).is_some();
                Judgment { both_present: present, correct: present }
            }
            Axis::Depth => match depth {
                Some(d) => judge_depth(record, d, t, convention)?,
                None => return Err(VisorError::WrongAxis(format!("{} (no depth map)", t.relation.name()))),
            },
        };
        out.both_present &= j.both_present;
        out.correct &= j.correct;
    }
    Ok(out)
}

/// Four judgments for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptGroup {
    pub prompt_id: String,
    pub triples: Vec<Triple>,
    pub judgments: Vec<Judgment>,
}

impl PromptGroup {
    /// Split key: the relation name, or `chain` for multi-relation prompts.
    pub fn split(&self) -> &str {
        match self.triples.as_slice() {
            [t] => t.relation.name(),
            _ => "chain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub oa: f64,
    pub uncond: f64,
    pub cond: f64,
    pub visor_n: [f64; IMAGES_PER_PROMPT],
    pub prompts: usize,
}

fn metrics<'a>(groups: impl Iterator<Item = &'a PromptGroup>) -> MetricRow {
    let (mut present, mut correct, mut images, mut prompts) = (0usize, 0usize, 0usize, 0usize);
    let mut at_least = [0usize; IMAGES_PER_PROMPT];
    for g in groups {
        prompts += 1;
        images += g.judgments.len();
        present += g.judgments.iter().filter(|j| j.both_present).count();
        let c = g.judgments.iter().filter(|j| j.correct).count();
        correct += c;
        for (n, slot) in at_least.iter_mut().enumerate() {
            if c > n {
                *slot += 1;
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    MetricRow {
        oa: frac(present, images),
        uncond: frac(correct, images),
        cond: frac(correct, present),
        visor_n: at_least.map(|n| frac(n, prompts)),
        prompts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisorReport {
    pub overall: MetricRow,
    /// Keyed by relation name.
    pub per_relation: BTreeMap<String, MetricRow>,
    pub per_object: BTreeMap<String, f64>,
}

impl VisorReport {
    pub fn to_table(&self) -> String {
        let header = format!(
            "{:<14} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "Split", "OA", "uncond", "cond", "VISOR1", "VISOR2", "VISOR3", "VISOR4", "prompts"
        );
        let row = |name: &str, m: &MetricRow| {
            format!(
                "{:<14} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7}\n",
                name,
                m.oa * 100.0,
                m.uncond * 100.0,
                m.cond * 100.0,
                m.visor_n[0] * 100.0,
                m.visor_n[1] * 100.0,
                m.visor_n[2] * 100.0,
                m.visor_n[3] * 100.0,
                m.prompts
            )
        };
        let mut s = header;
        s.push_str(&row("all", &self.overall));
        for (name, m) in &self.per_relation {
            s.push_str(&row(name, m));
        }
        if !self.per_object.is_empty() {
            s.push_str("\nobject          success\n");
            for (class, rate) in &self.per_object {
                s.push_str(&format!("{class:<15} {rate:>7.3}\n"));
            }
        }
        s
    }
}

/// Reduces prompt groups to the report. Every group must hold exactly four
/// judgments.
pub fn aggregate(groups: &[PromptGroup]) -> Result<VisorReport, VisorError> {
    if let Some(g) = groups.iter().find(|g| g.judgments.len() != IMAGES_PER_PROMPT) {
        return Err(VisorError::IncompleteGroup { prompt_id: g.prompt_id.clone(), got: g.judgments.len() });
    }
    let mut relations: BTreeMap<String, Vec<&PromptGroup>> = BTreeMap::new();
    for g in groups {
        relations.entry(g.split().to_string()).or_default().push(g);
    }
    Ok(VisorReport {
        overall: metrics(groups.iter()),
        per_relation: relations.into_iter().map(|(k, v)| (k, metrics(v.into_iter()))).collect(),
        per_object: per_object_success(groups),
    })
}

/// Fraction of correct images among prompts mentioning each class.
pub fn per_object_success(groups: &[PromptGroup]) -> BTreeMap<String, f64> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for g in groups {
        let correct = g.judgments.iter().filter(|j| j.correct).count();
        let mut classes: Vec<&str> = g.triples.iter().flat_map(|t| [t.subject.as_str(), t.object.as_str()]).collect();
        classes.sort_unstable();
        classes.dedup();
        for c in classes {
            let e = tally.entry(c.to_string()).or_default();
            e.0 += correct;
            e.1 += g.judgments.len();
        }
    }
    tally.into_iter().filter(|(_, (_, n))| *n > 0).map(|(c, (k, n))| (c, k as f64 / n as f64)).collect()
}
