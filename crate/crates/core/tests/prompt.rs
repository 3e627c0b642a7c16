use proptest::prelude::*;
use relscene::prompt::{parse_prompt, PromptError, RelationKind, Triple};
use relscene::AssetCatalog;

/// Surface phrase and the relation it denotes.
const PHRASES: [(&str, RelationKind); 11] = [
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

fn article(noun: &str) -> &'static str {
    if noun.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn sentence(a: &str, phrase: &str, b: &str) -> String {
    format!("{} {a} {phrase} {} {b}", article(a), article(b))
}

#[test]
fn phrase_table_matches_library() {
    assert_eq!(relscene::prompt::SPATIAL_PHRASES.len(), PHRASES.len());
    for entry in PHRASES {
        assert!(relscene::prompt::SPATIAL_PHRASES.contains(&entry), "{}", entry.0);
    }
}

#[test]
fn helicopter_is_substituted() {
    let c = AssetCatalog::default_catalog();
    let s = parse_prompt("a helicopter above a bicycle", &c).unwrap();
    assert_eq!(s.triples, vec![Triple::new("airplane", RelationKind::ABOVE, "bicycle")]);
    assert_eq!(s.substitutions.len(), 1);
    assert_eq!(s.substitutions[0].original, "helicopter");
    assert_eq!(s.substitutions[0].substitute, "airplane");
}

#[test]
fn chain_grammar() {
    let c = AssetCatalog::default_catalog();
    let s = parse_prompt("a cat to the left of a dog to the right of a bird", &c).unwrap();
    assert_eq!(
        s.triples,
        vec![Triple::new("cat", RelationKind::LEFT, "dog"), Triple::new("dog", RelationKind::RIGHT, "bird")]
    );
    assert_eq!(parse_prompt("a cat near a dog near a bird near a cow", &c), Err(PromptError::TooManyRelations(3)));
}

#[test]
fn opposites() {
    assert_eq!(RelationKind::LEFT.opposite().unwrap(), RelationKind::RIGHT);
    assert_eq!(RelationKind::IN_FRONT.opposite().unwrap(), RelationKind::BEHIND);
    assert!(RelationKind::NEAR.opposite().is_err());
    for r in RelationKind::ALL {
        if let Ok(o) = r.opposite() {
            assert_eq!(o.opposite().unwrap(), r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip(a in 0usize..101, b in 0usize..101, p in 0usize..11) {
        prop_assume!(a != b);
        let c = AssetCatalog::default_catalog();
        let (na, nb) = (&c.classes()[a].name, &c.classes()[b].name);
        let (phrase, kind) = PHRASES[p];
        let parsed = parse_prompt(&sentence(na, phrase, nb), &c).unwrap();
        prop_assert_eq!(parsed.triples, vec![Triple::new(na.as_str(), kind, nb.as_str())]);
        prop_assert!(parsed.substitutions.is_empty());
    }

    #[test]
    fn parsing_is_pure(a in 0usize..101, b in 0usize..101, p in 0usize..11) {
        let c = AssetCatalog::default_catalog();
        let text = sentence(&c.classes()[a].name, PHRASES[p].0, &c.classes()[b].name);
        prop_assert_eq!(parse_prompt(&text, &c).unwrap(), parse_prompt(&text, &c).unwrap());
    }
}

#[test]
fn round_trip_exhaustive() {
    let c = AssetCatalog::default_catalog();
    let names: Vec<&str> = c.class_names().collect();
    assert_eq!(names.len(), 101);
    let mut n = 0;
    for a in &names {
        for b in names.iter().filter(|b| *b != a) {
            for (phrase, kind) in PHRASES {
                let parsed = parse_prompt(&sentence(a, phrase, b), &c).unwrap();
                assert_eq!(parsed.triples, vec![Triple::new(*a, kind, *b)], "{a} {phrase} {b}");
                n += 1;
            }
        }
    }
    assert_eq!(n, 11 * 101 * 100);
}
