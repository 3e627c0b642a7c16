//! Prompt frontend: `NP (REL NP){1,2}` template grammar over a fixed list of
//! eleven spatial phrases.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::AssetCatalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
    Near,
    Depth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationKind {
    pub axis: Axis,
    pub polarity: Polarity,
}

impl RelationKind {
    pub const LEFT: RelationKind = RelationKind { axis: Axis::Horizontal, polarity: Polarity::Negative };
    pub const RIGHT: RelationKind = RelationKind { axis: Axis::Horizontal, polarity: Polarity::Positive };
    pub const ABOVE: RelationKind = RelationKind { axis: Axis::Vertical, polarity: Polarity::Positive };
    pub const BELOW: RelationKind = RelationKind { axis: Axis::Vertical, polarity: Polarity::Negative };
    pub const NEAR: RelationKind = RelationKind { axis: Axis::Near, polarity: Polarity::Symmetric };
    pub const IN_FRONT: RelationKind = RelationKind { axis: Axis::Depth, polarity: Polarity::Positive };
    pub const BEHIND: RelationKind = RelationKind { axis: Axis::Depth, polarity: Polarity::Negative };

    pub const ALL: [RelationKind; 7] =
        [Self::LEFT, Self::RIGHT, Self::ABOVE, Self::BELOW, Self::NEAR, Self::IN_FRONT, Self::BEHIND];

    /// Same axis, flipped polarity. The near family has no opposite.
    pub fn opposite(self) -> Result<RelationKind, PromptError> {
        let polarity = match self.polarity {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            Polarity::Symmetric => return Err(PromptError::NoOppositeDefined(self)),
        };
        Ok(RelationKind { axis: self.axis, polarity })
    }

    /// The phrase used when rendering this relation back into English.
    pub fn phrase(self) -> &'static str {
        match (self.axis, self.polarity) {
            (Axis::Horizontal, Polarity::Negative) => "to the left of",
            (Axis::Horizontal, _) => "to the right of",
            (Axis::Vertical, Polarity::Positive) => "above",
            (Axis::Vertical, _) => "below",
            (Axis::Near, _) => "next to",
            (Axis::Depth, Polarity::Positive) => "in front of",
            (Axis::Depth, _) => "behind",
        }
    }

    pub fn name(self) -> &'static str {
        match (self.axis, self.polarity) {
            (Axis::Horizontal, Polarity::Negative) => "left",
            (Axis::Horizontal, _) => "right",
            (Axis::Vertical, Polarity::Positive) => "above",
            (Axis::Vertical, _) => "below",
            (Axis::Near, _) => "near",
            (Axis::Depth, Polarity::Positive) => "front",
            (Axis::Depth, _) => "behind",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The eleven surface phrases. A trailing `of` is optional when parsing.
pub const SPATIAL_PHRASES: [(&str, RelationKind); 11] = [
    ("to the left of", RelationKind::LEFT),
    ("to the right of", RelationKind::RIGHT),
    ("above", RelationKind::ABOVE),
    ("below", RelationKind::BELOW),
    ("on top of", RelationKind::ABOVE),
    ("at the bottom of", RelationKind::BELOW),
    ("near", RelationKind::NEAR),
    ("next to", RelationKind::NEAR),
    ("on the side of", RelationKind::NEAR),
    ("in front of", RelationKind::IN_FRONT),
    ("behind", RelationKind::BEHIND),
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: RelationKind,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, relation: RelationKind, object: impl Into<String>) -> Self {
        Triple { subject: subject.into(), relation, object: object.into() }
    }

    /// `(B, opposite(r), A)`, or `(B, near, A)` for symmetric relations.
    pub fn converse(&self) -> Triple {
        let relation = self.relation.opposite().unwrap_or(self.relation);
        Triple::new(self.object.clone(), relation, self.subject.clone())
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub original: String,
    pub substitute: String,
}

/// A parsed prompt: one or two chained relation triples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialSpec {
    pub raw_text: String,
    pub triples: Vec<Triple>,
    #[serde(default)]
    pub substitutions: Vec<Substitution>,
}

impl SpatialSpec {
    /// Builds a spec from triples, checking the chain invariant.
    pub fn from_triples(triples: Vec<Triple>) -> Result<SpatialSpec, PromptError> {
        if triples.is_empty() {
            return Err(PromptError::NoRelationFound);
        }
        if triples.len() > 2 {
            return Err(PromptError::TooManyRelations(triples.len()));
        }
        if triples.windows(2).any(|w| w[0].object != w[1].subject) {
            return Err(PromptError::BrokenChain);
        }
        let raw_text = render_chain(&triples);
        Ok(SpatialSpec { raw_text, triples, substitutions: Vec::new() })
    }

    /// Object classes in placement order: subject, object, then the chained object.
    pub fn objects(&self) -> Vec<&str> {
        let mut out = vec![self.triples[0].subject.as_str()];
        out.extend(self.triples.iter().map(|t| t.object.as_str()));
        out
    }

    pub fn has_depth(&self) -> bool {
        self.triples.iter().any(|t| t.relation.axis == Axis::Depth)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no spatial relation phrase found")]
    NoRelationFound,
    #[error("unresolvable noun `{0}`")]
    UnresolvableNoun(String),
    #[error("missing noun phrase around a relation")]
    MissingNoun,
    #[error("too many relations ({0}); at most 2 are supported")]
    TooManyRelations(usize),
    #[error("chained triples must share the middle object")]
    BrokenChain,
    #[error("relation `{0}` has no opposite")]
    NoOppositeDefined(RelationKind),
}

pub fn indefinite(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// `"a cat to the left of a dog"` with a/an chosen by the noun's first letter.
pub fn render_prompt(subject: &str, phrase: &str, object: &str) -> String {
    format!("{} {subject} {phrase} {} {object}", indefinite(subject), indefinite(object))
}

fn render_chain(triples: &[Triple]) -> String {
    let mut s = format!("{} {}", indefinite(&triples[0].subject), triples[0].subject);
    for t in triples {
        s.push_str(&format!(" {} {} {}", t.relation.phrase(), indefinite(&t.object), t.object));
    }
    s
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Longest relation phrase starting at `tokens[i]`: (kind, tokens consumed).
fn match_relation(tokens: &[String], i: usize) -> Option<(RelationKind, usize)> {
    let mut best: Option<(RelationKind, usize)> = None;
    for (phrase, kind) in SPATIAL_PHRASES {
        let words: Vec<&str> = phrase.split(' ').collect();
        let core = if words.len() > 1 && words.last() == Some(&"of") { &words[..words.len() - 1] } else { &words[..] };
        if tokens.len() < i + core.len() || !core.iter().zip(&tokens[i..]).all(|(w, t)| w == t) {
            continue;
        }
        let mut len = core.len();
        if core.len() < words.len() && tokens.get(i + len).map(String::as_str) == Some("of") {
            len += 1;
        }
        if best.is_none_or(|(_, l)| len > l) {
            best = Some((kind, len));
        }
    }
    best
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Parses `text` against the catalog's nouns and substitute table.
pub fn parse_prompt(text: &str, catalog: &AssetCatalog) -> Result<SpatialSpec, PromptError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(PromptError::EmptyPrompt);
    }

    let mut relations = Vec::new();
    let mut segments: Vec<&[String]> = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if let Some((kind, len)) = match_relation(&tokens, i) {
            segments.push(&tokens[start..i]);
            relations.push(kind);
            i += len;
            start = i;
        } else {
            i += 1;
        }
    }
    segments.push(&tokens[start..]);

    if relations.is_empty() {
        return Err(PromptError::NoRelationFound);
    }
    if relations.len() > 2 {
        return Err(PromptError::TooManyRelations(relations.len()));
    }

    let mut classes = Vec::with_capacity(segments.len());
    let mut substitutions = Vec::new();
    for seg in segments {
        let words: Vec<&str> = seg.iter().map(String::as_str).skip_while(|w| ARTICLES.contains(w)).collect();
        if words.is_empty() {
            return Err(PromptError::MissingNoun);
        }
        let noun = words.join(" ");
        let class = catalog.resolve(&noun).ok_or_else(|| PromptError::UnresolvableNoun(noun.clone()))?;
        if class != noun {
            substitutions.push(Substitution { original: noun, substitute: class.to_string() });
        }
        classes.push(class.to_string());
    }

    let triples = relations
        .iter()
        .enumerate()
        .map(|(k, &r)| Triple::new(classes[k].clone(), r, classes[k + 1].clone()))
        .collect();
    Ok(SpatialSpec { raw_text: text.to_string(), triples, substitutions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> AssetCatalog {
        AssetCatalog::default_catalog()
    }

    #[test]
    fn eleven_phrases_seven_kinds() {
        assert_eq!(SPATIAL_PHRASES.len(), 11);
        let kinds: std::collections::BTreeSet<_> = SPATIAL_PHRASES.iter().map(|p| p.1).collect();
        assert_eq!(kinds.len(), 7);
    }

    #[test]
    fn opposite_examples() {
        assert_eq!(RelationKind::LEFT.opposite(), Ok(RelationKind::RIGHT));
        assert_eq!(RelationKind::IN_FRONT.opposite(), Ok(RelationKind::BEHIND));
        assert_eq!(RelationKind::NEAR.opposite(), Err(PromptError::NoOppositeDefined(RelationKind::NEAR)));
        for r in RelationKind::ALL {
            if let Ok(o) = r.opposite() {
                assert_eq!(o.opposite(), Ok(r));
                assert_eq!(o.axis, r.axis);
            }
        }
    }

    #[test]
    fn airplane_above_bicycle() {
        let s = parse_prompt("an airplane above a bicycle", &cat()).unwrap();
        assert_eq!(s.triples, vec![Triple::new("airplane", RelationKind::ABOVE, "bicycle")]);
        assert!(s.substitutions.is_empty());
    }

    #[test]
    fn ood_noun_is_substituted() {
        let s = parse_prompt("a helicopter above a bicycle", &cat()).unwrap();
        assert_eq!(s.triples, vec![Triple::new("airplane", RelationKind::ABOVE, "bicycle")]);
        assert_eq!(
            s.substitutions,
            vec![Substitution { original: "helicopter".into(), substitute: "airplane".into() }]
        );
    }

    #[test]
    fn chain_of_two() {
        let s = parse_prompt("a cat to the left of a dog to the right of a bird", &cat()).unwrap();
        assert_eq!(
            s.triples,
            vec![Triple::new("cat", RelationKind::LEFT, "dog"), Triple::new("dog", RelationKind::RIGHT, "bird"),]
        );
        assert_eq!(s.objects(), vec!["cat", "dog", "bird"]);
    }

    #[test]
    fn multiword_and_case() {
        let s = parse_prompt("A Teddy Bear is on top of the Dining Table.", &cat());
        // "is" is not part of the grammar
        assert!(matches!(s, Err(PromptError::UnresolvableNoun(ref n)) if n == "teddy bear is"));
        let s = parse_prompt("A Teddy Bear on top of the Dining Table.", &cat()).unwrap();
        assert_eq!(s.triples, vec![Triple::new("teddy bear", RelationKind::ABOVE, "dining table")]);
        let s = parse_prompt("a toaster oven behind a hot dog", &cat()).unwrap();
        assert_eq!(s.triples, vec![Triple::new("microwave", RelationKind::BEHIND, "hot dog")]);
    }

    #[test]
    fn optional_of_and_side_phrase() {
        let s = parse_prompt("a cup on the side of a bottle", &cat()).unwrap();
        assert_eq!(s.triples[0].relation, RelationKind::NEAR);
        let s = parse_prompt("a cup to the left a bottle", &cat()).unwrap();
        assert_eq!(s.triples[0].relation, RelationKind::LEFT);
    }

    #[test]
    fn errors() {
        let c = cat();
        assert_eq!(parse_prompt("   ", &c), Err(PromptError::EmptyPrompt));
        assert_eq!(parse_prompt("a cat and a dog", &c), Err(PromptError::NoRelationFound));
        assert_eq!(parse_prompt("a spaceship above a dog", &c), Err(PromptError::UnresolvableNoun("spaceship".into())));
        assert_eq!(
            parse_prompt("a cat above a dog above a cow above a pig", &c),
            Err(PromptError::TooManyRelations(3))
        );
        assert_eq!(parse_prompt("above a dog", &c), Err(PromptError::MissingNoun));
    }

    #[test]
    fn same_class_allowed() {
        let s = parse_prompt("a dog next to a dog", &cat()).unwrap();
        assert_eq!(s.triples, vec![Triple::new("dog", RelationKind::NEAR, "dog")]);
    }

    #[test]
    fn from_triples_checks_chain() {
        let bad = vec![Triple::new("cat", RelationKind::LEFT, "dog"), Triple::new("cow", RelationKind::LEFT, "bird")];
        assert_eq!(SpatialSpec::from_triples(bad), Err(PromptError::BrokenChain));
        let ok = SpatialSpec::from_triples(vec![Triple::new("apple", RelationKind::IN_FRONT, "orange")]).unwrap();
        assert_eq!(ok.raw_text, "an apple in front of an orange");
    }
}
