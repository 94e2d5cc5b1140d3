use std::fs;
use std::path::Path;

use absa_core::mend::mend;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn corpus() -> Vec<(String, String, Option<Value>)> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/mend_corpus");
    let mut entries: Vec<_> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    entries
        .into_iter()
        .map(|dir| {
            let raw = fs::read_to_string(dir.join("raw.txt")).unwrap();
            let expected = fs::read_to_string(dir.join("expected.json")).unwrap();
            let expected = match expected.trim() {
                "INVALID" => None,
                s => Some(serde_json::from_str(s).unwrap()),
            };
            (dir.file_name().unwrap().to_string_lossy().into_owned(), raw, expected)
        })
        .collect()
}

#[test]
fn corpus_matches_recorded_values() {
    let cases = corpus();
    assert!(cases.len() >= 30);
    let mut mismatches = Vec::new();
    for (name, raw, expected) in &cases {
        let out = mend(raw);
        if &out.value != expected {
            mismatches.push(format!("{name}: got {:?}, want {:?}", out.value, expected));
        }
        if serde_json::from_str::<Value>(raw).is_ok() {
            assert!(!out.repaired, "{name}");
            assert!(out.applied_fixes.is_empty(), "{name}");
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn mended_values_are_fixed_points() {
    for (name, raw, _) in corpus() {
        if let Some(v) = mend(&raw).value {
            let again = mend(&v.to_string());
            assert_eq!(again.value, Some(v), "{name}");
            assert!(!again.repaired, "{name}");
        }
    }
}

const SEEDS: &[&str] = &[
    r#"{"quadruples": [{"target": "TV", "aspect_category": "reliability", "sentiment": "positive", "opinion_expression": "never breaks down"}]}"#,
    r#"{"a": [1, 2.5, -3e2, true, false, null], "b": {"c": "d\"e", "f": []}}"#,
    r#"[{"x": "y"}, "z", 0]"#,
];

const NOISE: &[char] = &['{', '}', '[', ']', '"', '\'', ',', ':', '\\', ' ', '\n', 'a', '1', '`', '“', '”', 'é'];

fn mutate(rng: &mut ChaCha8Rng, s: &str) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    for _ in 0..rng.random_range(1..=4) {
        let at = rng.random_range(0..=chars.len());
        match rng.random_range(0..4) {
            0 if at < chars.len() => {
                chars.remove(at);
            }
            1 => chars.insert(at, NOISE[rng.random_range(0..NOISE.len())]),
            2 => chars.truncate(at),
            _ if at < chars.len() => chars[at] = NOISE[rng.random_range(0..NOISE.len())],
            _ => {}
        }
    }
    chars.into_iter().collect()
}

#[test]
fn random_mutations_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..10_000 {
        let input = mutate(&mut rng, SEEDS[i % SEEDS.len()]);
        let out = mend(&input);
        if out.value.is_some() && serde_json::from_str::<Value>(&input).is_ok() {
            assert!(!out.repaired);
        }
    }
}
