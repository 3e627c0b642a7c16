//! Yes/no spatial reasoning questions over rendered scenes.
//!
//! Every question carries a propositional formula over `Present(x)` and
//! `Rel(a, r, b)` atoms; its stored answer is the formula evaluated against
//! the scene's facts. Question wording lives in a versioned template file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::AssetCatalog;
use crate::prompt::{indefinite, Polarity, RelationKind, SpatialSpec, Triple};
use crate::rng::stage_rng;
use crate::scene::SceneGraph;

pub const TEMPLATES: &str = include_str!("../data/revqa_templates.toml");

#[derive(Debug, Error, PartialEq)]
pub enum RevqaError {
    #[error("scene facts contain no relations")]
    NoRelations,
    #[error("scene facts only contain symmetric relations; opposite questions are undefined")]
    NoOrientedRelation,
    #[error("malformed formula: {0}")]
    MalformedAst(String),
    #[error("template file: {0}")]
    Template(String),
    #[error("no replacement noun available: every candidate is present in the scene")]
    NoReplacement,
    #[error("responses missing for {} item(s): {}", .0.len(), .0.join(", "))]
    MissingItems(Vec<String>),
    #[error("malformed record on line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    SimpleSpatial,
    OppositeSpatial,
    And,
    Or,
    Not,
    DoubleNegative,
    RandomAnd,
    RandomOr,
    RandomSpatial,
    RandomCombinedAnd,
    RandomCombinedOr,
    AdversarialAnd,
    AdversarialOr,
    AdversarialSpatial,
    AdversarialCombinedAnd,
    AdversarialCombinedOr,
}

impl QType {
    /// Report order.
    pub const ALL: [QType; 16] = [
        QType::SimpleSpatial,
        QType::OppositeSpatial,
        QType::And,
        QType::Or,
        QType::Not,
        QType::DoubleNegative,
        QType::RandomAnd,
        QType::RandomOr,
        QType::RandomSpatial,
        QType::RandomCombinedAnd,
        QType::RandomCombinedOr,
        QType::AdversarialAnd,
        QType::AdversarialOr,
        QType::AdversarialSpatial,
        QType::AdversarialCombinedAnd,
        QType::AdversarialCombinedOr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            QType::SimpleSpatial => "Simple Spatial",
            QType::OppositeSpatial => "Opposite Spatial",
            QType::And => "AND",
            QType::Or => "OR",
            QType::Not => "NOT",
            QType::DoubleNegative => "Double Negative",
            QType::RandomAnd => "Random AND",
            QType::RandomOr => "Random OR",
            QType::RandomSpatial => "Random Spatial",
            QType::RandomCombinedAnd => "Random Combined AND",
            QType::RandomCombinedOr => "Random Combined OR",
            QType::AdversarialAnd => "Adversarial AND",
            QType::AdversarialOr => "Adversarial OR",
            QType::AdversarialSpatial => "Adversarial Spatial",
            QType::AdversarialCombinedAnd => "Adversarial Combined AND",
            QType::AdversarialCombinedOr => "Adversarial Combined OR",
        }
    }

    pub fn mode(self) -> PerturbationMode {
        use QType::*;
        match self {
            RandomAnd | RandomOr | RandomSpatial | RandomCombinedAnd | RandomCombinedOr => PerturbationMode::Random,
            AdversarialAnd | AdversarialOr | AdversarialSpatial | AdversarialCombinedAnd | AdversarialCombinedOr => {
                PerturbationMode::Adversarial
            }
            _ => PerturbationMode::None,
        }
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl From<bool> for Answer {
    fn from(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }
}

/// Propositional formula over scene atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Present(String),
    Rel(Triple),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

/// Ground truth a question is answered against. Relations are closed under
/// the converse: `(A, left, B)` implies `(B, right, A)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneFacts {
    pub present: BTreeSet<String>,
    pub relations: BTreeSet<Triple>,
}

impl SceneFacts {
    pub fn new(present: impl IntoIterator<Item = String>, relations: impl IntoIterator<Item = Triple>) -> SceneFacts {
        let mut present: BTreeSet<String> = present.into_iter().collect();
        let mut closed = BTreeSet::new();
        for t in relations {
            present.insert(t.subject.clone());
            present.insert(t.object.clone());
            closed.insert(t.converse());
            closed.insert(t);
        }
        SceneFacts { present, relations: closed }
    }

    pub fn from_spec(spec: &SpatialSpec) -> SceneFacts {
        Self::new(Vec::new(), spec.triples.iter().cloned())
    }

    pub fn from_scene(scene: &SceneGraph) -> SceneFacts {
        Self::new(
            scene.objects.iter().map(|o| o.asset.class_name.clone()),
            scene.ground_truth.spec.triples.iter().cloned(),
        )
    }
}

/// Evaluates a formula against scene facts.
pub fn evaluate(formula: &Formula, facts: &SceneFacts) -> Result<bool, RevqaError> {
    Ok(match formula {
        Formula::Present(x) => {
            if x.is_empty() {
                return Err(RevqaError::MalformedAst("empty noun in present()".into()));
            }
            facts.present.contains(x)
        }
        Formula::Rel(t) => {
            if t.subject.is_empty() || t.object.is_empty() {
                return Err(RevqaError::MalformedAst("empty noun in rel()".into()));
            }
            facts.relations.contains(t) || facts.relations.contains(&t.converse())
        }
        Formula::Not(f) => !evaluate(f, facts)?,
        Formula::And(a, b) => evaluate(a, facts)? && evaluate(b, facts)?,
        Formula::Or(a, b) => evaluate(a, facts)? || evaluate(b, facts)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationMode {
    None,
    Random,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub mode: PerturbationMode,
    pub original: Option<String>,
    pub replacement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub image: String,
    pub qtype: QType,
    pub question: String,
    pub answer: Answer,
    pub formula: Formula,
    pub perturbation: Perturbation,
    pub order_flipped: bool,
}

// ---- templates -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    A,
    B,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RelVar {
    Same,
    Opposite,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Present(Var),
    Rel(Var, RelVar, Var),
    Not(Box<Shape>),
    And(Box<Shape>, Box<Shape>),
    Or(Box<Shape>, Box<Shape>),
}

fn parse_shape(src: &str) -> Result<Shape, RevqaError> {
    let err = |m: &str| RevqaError::Template(format!("formula `{src}`: {m}"));
    let tokens: Vec<String> = {
        let mut out = Vec::new();
        let mut word = String::new();
        for c in src.chars() {
            if c.is_alphanumeric() || c == '_' {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                if !c.is_whitespace() {
                    out.push(c.to_string());
                }
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
        out
    };
    fn var(t: &str) -> Option<Var> {
        match t {
            "a" => Some(Var::A),
            "b" => Some(Var::B),
            "z" => Some(Var::Z),
            _ => None,
        }
    }
    fn parse(tokens: &[String], pos: &mut usize) -> Result<Shape, String> {
        let next = |pos: &mut usize| -> Result<String, String> {
            let t = tokens.get(*pos).cloned().ok_or("unexpected end")?;
            *pos += 1;
            Ok(t)
        };
        let expect = |pos: &mut usize, want: &str| -> Result<(), String> {
            match tokens.get(*pos) {
                Some(t) if t == want => {
                    *pos += 1;
                    Ok(())
                }
                other => Err(format!("expected `{want}`, found {other:?}")),
            }
        };
        let head = next(pos)?;
        expect(pos, "(")?;
        let shape = match head.as_str() {
            "present" => Shape::Present(var(&next(pos)?).ok_or("bad variable")?),
            "rel" => {
                let a = var(&next(pos)?).ok_or("bad variable")?;
                expect(pos, ",")?;
                let r = match next(pos)?.as_str() {
                    "r" => RelVar::Same,
                    "opp" => RelVar::Opposite,
                    other => return Err(format!("bad relation variable `{other}`")),
                };
                expect(pos, ",")?;
                let b = var(&next(pos)?).ok_or("bad variable")?;
                Shape::Rel(a, r, b)
            }
            "not" => Shape::Not(Box::new(parse(tokens, pos)?)),
            "and" | "or" => {
                let l = parse(tokens, pos)?;
                expect(pos, ",")?;
                let r = parse(tokens, pos)?;
                if head == "and" {
                    Shape::And(Box::new(l), Box::new(r))
                } else {
                    Shape::Or(Box::new(l), Box::new(r))
                }
            }
            other => return Err(format!("unknown operator `{other}`")),
        };
        expect(pos, ")")?;
        Ok(shape)
    }
    let mut pos = 0;
    let shape = parse(&tokens, &mut pos).map_err(|m| err(&m))?;
    if pos != tokens.len() {
        return Err(err("trailing tokens"));
    }
    Ok(shape)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    version: u32,
    template: Vec<TemplateEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateEntry {
    qtype: QType,
    question: Option<String>,
    formula: Option<String>,
    connective: Option<String>,
    #[serde(default)]
    clauses: Vec<ClauseEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClauseEntry {
    text: String,
    formula: String,
}

#[derive(Debug, Clone)]
enum Form {
    Single { question: String, shape: Shape },
    Combined { conjunction: bool, clauses: [(String, Shape); 2] },
}

/// Parsed template set, one form per question type.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub version: u32,
    forms: BTreeMap<QType, Form>,
}

impl TemplateSet {
    pub fn shipped() -> TemplateSet {
        Self::parse(TEMPLATES).expect("shipped templates are valid")
    }

    pub fn parse(text: &str) -> Result<TemplateSet, RevqaError> {
        let file: TemplateFile = toml::from_str(text).map_err(|e| RevqaError::Template(e.to_string()))?;
        let mut forms = BTreeMap::new();
        for t in file.template {
            let form = match (t.question, t.formula, t.connective) {
                (Some(question), Some(formula), None) if t.clauses.is_empty() => {
                    Form::Single { question, shape: parse_shape(&formula)? }
                }
                (None, None, Some(conn)) if t.clauses.len() == 2 => {
                    let conjunction = match conn.as_str() {
                        "and" => true,
                        "or" => false,
                        other => return Err(RevqaError::Template(format!("bad connective `{other}`"))),
                    };
                    let mut it = t.clauses.into_iter();
                    let mut clause = || -> Result<(String, Shape), RevqaError> {
                        let c = it.next().expect("two clauses");
                        Ok((c.text, parse_shape(&c.formula)?))
                    };
                    Form::Combined { conjunction, clauses: [clause()?, clause()?] }
                }
                _ => {
                    return Err(RevqaError::Template(format!(
                        "{:?}: need question+formula or connective+2 clauses",
                        t.qtype
                    )))
                }
            };
            if forms.insert(t.qtype, form).is_some() {
                return Err(RevqaError::Template(format!("duplicate template for {:?}", t.qtype)));
            }
        }
        if let Some(missing) = QType::ALL.iter().find(|q| !forms.contains_key(q)) {
            return Err(RevqaError::Template(format!("no template for {missing:?}")));
        }
        Ok(TemplateSet { version: file.version, forms })
    }
}

struct Bindings<'a> {
    a: &'a str,
    b: &'a str,
    z: &'a str,
    relation: RelationKind,
    opposite: RelationKind,
}

impl Bindings<'_> {
    fn noun(&self, v: Var) -> &str {
        match v {
            Var::A => self.a,
            Var::B => self.b,
            Var::Z => self.z,
        }
    }

    fn text(&self, template: &str) -> String {
        let mut s = template.to_string();
        for (name, value) in [("a", self.a), ("b", self.b), ("z", self.z)] {
            s = s.replace(&format!("{{{name}.indef}}"), &format!("{} {value}", indefinite(value)));
            s = s.replace(&format!("{{{name}}}"), value);
        }
        s.replace("{rel}", self.relation.phrase()).replace("{opp}", self.opposite.phrase())
    }

    fn formula(&self, shape: &Shape) -> Formula {
        match shape {
            Shape::Present(v) => Formula::Present(self.noun(*v).to_string()),
            Shape::Rel(a, r, b) => {
                let relation = match r {
                    RelVar::Same => self.relation,
                    RelVar::Opposite => self.opposite,
                };
                Formula::Rel(Triple::new(self.noun(*a), relation, self.noun(*b)))
            }
            Shape::Not(f) => Formula::Not(Box::new(self.formula(f))),
            Shape::And(l, r) => Formula::And(Box::new(self.formula(l)), Box::new(self.formula(r))),
            Shape::Or(l, r) => Formula::Or(Box::new(self.formula(l)), Box::new(self.formula(r))),
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates one item per question type for an image.
pub fn generate_questions(
    facts: &SceneFacts,
    catalog: &AssetCatalog,
    templates: &TemplateSet,
    image: &str,
    seed: u64,
) -> Result<Vec<QaItem>, RevqaError> {
    if facts.relations.is_empty() {
        return Err(RevqaError::NoRelations);
    }
    let oriented: Vec<&Triple> =
        facts.relations.iter().filter(|t| t.relation.polarity != Polarity::Symmetric).collect();
    if oriented.is_empty() {
        return Err(RevqaError::NoOrientedRelation);
    }
    let mut rng = stage_rng(seed, &format!("revqa:{image}"));

    let absent: Vec<&str> = catalog.class_names().filter(|c| !facts.present.contains(*c)).collect();
    let adversarial_for = |class: &str| -> Vec<&str> {
        catalog.confusable_with(class).into_iter().filter(|n| !facts.present.contains(*n)).collect()
    };

    let mut items = Vec::with_capacity(QType::ALL.len());
    for (idx, qtype) in QType::ALL.into_iter().enumerate() {
        let mode = qtype.mode();
        // Adversarial items prefer a relation whose object has a confusable partner.
        let triple: &Triple = if mode == PerturbationMode::Adversarial {
            let with_partner: Vec<&Triple> =
                oriented.iter().copied().filter(|t| !adversarial_for(&t.object).is_empty()).collect();
            with_partner.choose(&mut rng).or_else(|| oriented.choose(&mut rng)).copied().expect("non-empty")
        } else {
            oriented.choose(&mut rng).copied().expect("non-empty")
        };

        let (replacement, used_mode) = match mode {
            PerturbationMode::None => (None, PerturbationMode::None),
            PerturbationMode::Random => {
                (Some(*absent.choose(&mut rng).ok_or(RevqaError::NoReplacement)?), PerturbationMode::Random)
            }
            PerturbationMode::Adversarial => match adversarial_for(&triple.object).choose(&mut rng) {
                Some(z) => (Some(*z), PerturbationMode::Adversarial),
                // user catalogs may lack substitutes; fall back to a random absent class
                None => (Some(*absent.choose(&mut rng).ok_or(RevqaError::NoReplacement)?), PerturbationMode::Random),
            },
        };

        let bindings = Bindings {
            a: &triple.subject,
            b: &triple.object,
            z: replacement.unwrap_or(""),
            relation: triple.relation,
            opposite: triple.relation.opposite().expect("oriented relation"),
        };
        let (question, formula, order_flipped) = match &templates.forms[&qtype] {
            Form::Single { question, shape } => (bindings.text(question), bindings.formula(shape), false),
            Form::Combined { conjunction, clauses } => {
                let flipped = rng.random_bool(0.5);
                let (first, second) = if flipped { (&clauses[1], &clauses[0]) } else { (&clauses[0], &clauses[1]) };
                let word = if *conjunction { "and" } else { "or" };
                let text = format!("{} {word} {}?", capitalize(&bindings.text(&first.0)), bindings.text(&second.0));
                let (l, r) = (Box::new(bindings.formula(&first.1)), Box::new(bindings.formula(&second.1)));
                let f = if *conjunction { Formula::And(l, r) } else { Formula::Or(l, r) };
                (text, f, flipped)
            }
        };
        let answer = evaluate(&formula, facts)?.into();
        items.push(QaItem {
            id: format!("{image}-q{idx:02}"),
            image: image.to_string(),
            qtype,
            question,
            answer,
            formula,
            perturbation: Perturbation {
                mode: used_mode,
                original: replacement.map(|_| triple.object.clone()),
                replacement: replacement.map(str::to_string),
            },
            order_flipped,
        });
    }
    Ok(items)
}

// ---- scoring ---------------------------------------------------------------

/// Leading yes/no token, case-insensitive; `true`/`false` accepted.
pub fn normalize_response(text: &str) -> Option<Answer> {
    let first = text.split(|c: char| !c.is_alphanumeric()).find(|t| !t.is_empty())?.to_ascii_lowercase();
    match first.as_str() {
        "yes" | "true" => Some(Answer::Yes),
        "no" | "false" => Some(Answer::No),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub response_text: String,
}

/// Parses line-delimited response records.
pub fn parse_responses(text: &str) -> Result<BTreeMap<String, String>, RevqaError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ResponseRecord =
            serde_json::from_str(line).map_err(|e| RevqaError::Record { line: n + 1, message: e.to_string() })?;
        out.insert(r.id, r.response_text);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub qtype: QType,
    pub label: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<TypeScore>,
    /// Mean of the per-type accuracies over types with at least one item.
    pub average: f64,
    pub unparseable: Vec<String>,
}

impl ScoreReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<26} {:>8} {:>6}\n", "Question Type", "Accuracy", "N");
        s.push_str(&format!("{}\n", "-".repeat(42)));
        for r in &self.rows {
            s.push_str(&format!("{:<26} {:>8.3} {:>6}\n", r.label, r.accuracy, r.total));
        }
        s.push_str(&format!("{}\n", "-".repeat(42)));
        let n: usize = self.rows.iter().map(|r| r.total).sum();
        s.push_str(&format!("{:<26} {:>8.3} {:>6}\n", "Average", self.average, n));
        s
    }
}

/// Scores free-text responses; unparseable answers count as wrong.
pub fn score_responses(items: &[QaItem], responses: &BTreeMap<String, String>) -> Result<ScoreReport, RevqaError> {
    let missing: Vec<String> = items.iter().filter(|i| !responses.contains_key(&i.id)).map(|i| i.id.clone()).collect();
    if !missing.is_empty() {
        return Err(RevqaError::MissingItems(missing));
    }
    let mut tally: BTreeMap<QType, (usize, usize)> = BTreeMap::new();
    let mut unparseable = Vec::new();
    for item in items {
        let entry = tally.entry(item.qtype).or_default();
        entry.0 += 1;
        match normalize_response(&responses[&item.id]) {
            Some(a) if a == item.answer => entry.1 += 1,
            Some(_) => {}
            None => unparseable.push(item.id.clone()),
        }
    }
    let rows: Vec<TypeScore> = QType::ALL
        .iter()
        .map(|&q| {
            let (total, correct) = tally.get(&q).copied().unwrap_or((0, 0));
            TypeScore {
                qtype: q,
                label: q.label().to_string(),
                total,
                correct,
                accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            }
        })
        .collect();
    let scored: Vec<f64> = rows.iter().filter(|r| r.total > 0).map(|r| r.accuracy).collect();
    let average = if scored.is_empty() { 0.0 } else { scored.iter().sum::<f64>() / scored.len() as f64 };
    Ok(ScoreReport { rows, average, unparseable })
}
