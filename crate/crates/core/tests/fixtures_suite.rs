use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use absa_core::dataset::{compute_stats, load_dataset, write_dataset, LoadOptions};
use absa_core::mend::mend;
use absa_core::prompt::{render_prompt, serialize_answer, PromptTemplate};
use absa_core::validate::{tally_failures, validate, ValidationConfig};
use absa_core::{DomainTaxonomy, Locus, SentimentLabel, TaskArity};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[test]
fn ladder_fixtures_agree_with_manifest() {
    let manifest = read_json("ladder.json");
    let text = manifest["text"].as_str().unwrap();
    let config = ValidationConfig {
        allowed_sentiments: SentimentLabel::ALL.into_iter().collect(),
        allowed_categories: manifest["categories"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_str().unwrap().to_string())
            .collect(),
        arity: TaskArity::Quad,
        sentiment_case_insensitive: true,
        category_case_insensitive: false,
    };
    let mut results = Vec::new();
    for case in manifest["cases"].as_array().unwrap() {
        let id = case["id"].as_str().unwrap();
        let result = validate(&mend(case["raw"].as_str().unwrap()), id, text, &config);
        let got: Vec<Value> = result
            .failures
            .iter()
            .map(|f| {
                let locus = match f.locus {
                    Locus::Response => Value::from("response"),
                    Locus::QuadIndex(i) => Value::from(i),
                };
                serde_json::json!({"mode": f.mode, "locus": locus})
            })
            .collect();
        assert_eq!(Value::Array(got), case["expected"], "{id}");
        assert_eq!(result.pred_count as u64, case["pred_count"].as_u64().unwrap(), "{id}");
        results.push(result);
    }
    let tally = serde_json::to_value(tally_failures(&results)).unwrap();
    assert_eq!(tally, manifest["tally"]);
}

#[test]
fn stats_fixture_matches_manifest() {
    let split = load_dataset(&fixture("stats50.jsonl"), LoadOptions::new(TaskArity::Quad)).unwrap();
    let stats = compute_stats(&split);
    let manifest = read_json("stats50_manifest.json");
    assert_eq!(stats.samples as u64, manifest["samples"].as_u64().unwrap());
    assert_eq!(stats.total_quads as u64, manifest["total_quads"].as_u64().unwrap());
    let langs: BTreeMap<String, usize> = serde_json::from_value(manifest["per_language_counts"].clone()).unwrap();
    assert_eq!(stats.per_language_counts, langs);
    assert_eq!(stats.implicit_targets as u64, manifest["implicit_targets"].as_u64().unwrap());
    assert_eq!(stats.explicit_targets as u64, manifest["explicit_targets"].as_u64().unwrap());
    assert_eq!(format!("{:.2}", stats.avg_quads_per_sample), manifest["avg_quads_per_sample"]);
    let hist = serde_json::to_value(stats.quad_histogram).unwrap();
    assert_eq!(hist, manifest["quad_histogram"]);
}

#[test]
fn dataset_round_trips_through_disk() {
    let opts = LoadOptions::new(TaskArity::Quad);
    let split = load_dataset(&fixture("stats50.jsonl"), opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("test.jsonl");
    write_dataset(&split, &out, TaskArity::Quad).unwrap();
    let back = load_dataset(&out, opts).unwrap();
    assert_eq!(back.samples, split.samples);
    write_dataset(&back, &out, TaskArity::Quad).unwrap();
    let again = std::fs::read_to_string(&out).unwrap();
    let mut first = Vec::new();
    for s in &split.samples {
        first.push(absa_core::dataset::sample_to_json(s, TaskArity::Quad));
    }
    assert_eq!(again.lines().collect::<Vec<_>>(), first);
}

#[test]
fn triple_export_drops_expressions() {
    let split = load_dataset(&fixture("stats50.jsonl"), LoadOptions::new(TaskArity::Quad)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("triples.jsonl");
    write_dataset(&split, &out, TaskArity::Triple).unwrap();
    let content = std::fs::read_to_string(&out).unwrap();
    assert!(!content.contains("opinion_expression"));
    let back = load_dataset(&out, LoadOptions::new(TaskArity::Triple)).unwrap();
    assert_eq!(back.samples.len(), 50);
}

#[test]
fn prompt_matches_golden_file() {
    let taxonomy = DomainTaxonomy::load(&fixture("ps_taxonomy.json")).unwrap();
    assert_eq!(taxonomy.categories.len(), 14);
    let doc = std::fs::read_to_string(fixture("ps_prompt_document.txt")).unwrap();
    let golden = std::fs::read_to_string(fixture("ps_prompt_golden.txt")).unwrap();
    let rendered = render_prompt(&taxonomy, &PromptTemplate::english_default(), &doc).unwrap();
    assert_eq!(rendered, golden);
    assert!(rendered.contains(
        "- price (description: use this label if the customer is expressing an opinion about the price of a product or service)"
    ));
    let answer = serialize_answer(&taxonomy.one_shot.quads, &taxonomy.one_shot.text, TaskArity::Quad);
    assert_eq!(
        answer,
        r#"{"aspect_based_sentiment_analysis": [{"target": "TV", "aspect_category": "reliability", "sentiment": "positive", "opinion_expression": "My new TV never breaks down"}, {"target": "app store", "aspect_category": "price", "sentiment": "negative", "opinion_expression": "the app store is too expensive"}]}"#
    );
}

#[test]
fn shipped_templates_load_and_render() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates");
    let set = absa_core::prompt::TemplateSet::load_dir(&dir).unwrap();
    let en = set.get("en").unwrap();
    assert_eq!(en.body(), PromptTemplate::english_default().body());
    let fr = set.get("fr").unwrap();
    let taxonomy = DomainTaxonomy::load(&fixture("ps_taxonomy.json")).unwrap();
    let rendered = render_prompt(&taxonomy, fr, "Le prix est trop élevé.").unwrap();
    assert!(rendered.contains("CATÉGORIES D'ASPECT AUTORISÉES"));
    assert!(rendered.contains("- price (description:"));
    assert!(rendered.contains("Le prix est trop élevé."));
    assert!(!rendered.contains("{allowed_sentiments}"));
    assert!(set.get("de").is_err());
}
