//! Prompt rendering and instruction-set assembly.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetSplit;
use crate::model::{canonical_quad_order, DomainTaxonomy, Quad, TaskArity};

/// Wrapper key of every answer object.
pub const ANSWER_KEY: &str = "aspect_based_sentiment_analysis";

/// English template shipped with the crate.
pub const DEFAULT_ENGLISH_TEMPLATE: &str = include_str!("../templates/en.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {language:?} is missing placeholder {{{name}}}")]
    MissingPlaceholder { language: String, name: &'static str },
    #[error("template {language:?} repeats placeholder {{{name}}}")]
    DuplicatePlaceholder { language: String, name: &'static str },
    #[error("template {language:?}: {detail}")]
    SectionOrder { language: String, detail: String },
    #[error("no template for language {0:?}")]
    MissingTemplate(String),
    #[error("no taxonomy for domain {0:?}")]
    UnknownDomain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Document,
    Sentiments,
    Categories,
    OneShotDocument,
    OneShotAnswer,
}

impl Slot {
    const ALL: [Slot; 5] = [
        Slot::Document,
        Slot::Sentiments,
        Slot::Categories,
        Slot::OneShotDocument,
        Slot::OneShotAnswer,
    ];

    fn name(self) -> &'static str {
        match self {
            Slot::Document => "example_text",
            Slot::Sentiments => "allowed_sentiments",
            Slot::Categories => "allowed_aspect_categories",
            Slot::OneShotDocument => "one_shot_document",
            Slot::OneShotAnswer => "one_shot_answer",
        }
    }

    fn token(self) -> String {
        format!("{{{}}}", self.name())
    }
}

const SECTION_HEADERS: [&str; 5] = [
    "DOCUMENT",
    "ALLOWED SENTIMENTS",
    "ALLOWED ASPECT CATEGORIES",
    "FORMATTING EXAMPLE",
    "RESPONSE",
];

/// A prompt body with the five `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    language: String,
    body: String,
}

impl PromptTemplate {
    /// Checks that every slot occurs exactly once and that slots appear in
    /// section order. English templates must also carry the section headers,
    /// each on its own line, in order.
    pub fn new(language: impl Into<String>, body: impl Into<String>) -> Result<Self, PromptError> {
        let language = language.into();
        let body = body.into();
        let mut last = 0;
        for slot in Slot::ALL {
            let token = slot.token();
            let count = body.matches(token.as_str()).count();
            match count {
                0 => {
                    return Err(PromptError::MissingPlaceholder {
                        language,
                        name: slot.name(),
                    })
                }
                1 => {}
                _ => {
                    return Err(PromptError::DuplicatePlaceholder {
                        language,
                        name: slot.name(),
                    })
                }
            }
            let at = body.find(token.as_str()).unwrap_or(0);
            if at < last {
                return Err(PromptError::SectionOrder {
                    language,
                    detail: format!("placeholder {token} is out of order"),
                });
            }
            last = at;
        }
        if language == "en" {
            let mut from = 0;
            let lines: Vec<&str> = body.lines().map(str::trim_end).collect();
            for header in SECTION_HEADERS {
                match lines[from..].iter().position(|l| *l == header) {
                    Some(pos) => from += pos + 1,
                    None => {
                        return Err(PromptError::SectionOrder {
                            language,
                            detail: format!("header {header:?} missing or out of order"),
                        })
                    }
                }
            }
        }
        Ok(PromptTemplate { language, body })
    }

    pub fn english_default() -> Self {
        Self::new("en", DEFAULT_ENGLISH_TEMPLATE.strip_suffix('\n').unwrap_or(DEFAULT_ENGLISH_TEMPLATE))
            .expect("shipped template is valid")
    }

    /// Reads a template file; a single trailing newline is dropped.
    pub fn load(language: &str, path: &Path) -> Result<Self, PromptError> {
        let raw = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let body = raw.strip_suffix('\n').unwrap_or(&raw);
        Self::new(language, body)
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn body(&self) -> &str {
        &self.body
    }
}

/// Templates keyed by language code.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateSet {
    pub fn with_default_english() -> Self {
        let mut set = TemplateSet::default();
        set.insert(PromptTemplate::english_default());
        set
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.language.clone(), template);
    }

    pub fn get(&self, language: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(language)
            .ok_or_else(|| PromptError::MissingTemplate(language.to_string()))
    }

    /// Loads every `<lang>.txt` in `dir`. The shipped English template is
    /// used when the directory has no `en.txt`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = TemplateSet::with_default_english();
        let entries = std::fs::read_dir(dir).map_err(|source| PromptError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            if let Some(lang) = path.file_stem().and_then(|s| s.to_str()) {
                set.insert(PromptTemplate::load(lang, &path)?);
            }
        }
        Ok(set)
    }
}

/// Chooses the prompt language for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLanguagePolicy {
    #[default]
    EnglishOnly,
    FrenchOnly,
    /// French prompts for French samples, English for everything else.
    Mixed,
}

impl PromptLanguagePolicy {
    pub fn select(self, sample_language: &str) -> &'static str {
        match self {
            PromptLanguagePolicy::EnglishOnly => "en",
            PromptLanguagePolicy::FrenchOnly => "fr",
            PromptLanguagePolicy::Mixed if sample_language == "fr" => "fr",
            PromptLanguagePolicy::Mixed => "en",
        }
    }

    pub fn languages(self) -> &'static [&'static str] {
        match self {
            PromptLanguagePolicy::EnglishOnly => &["en"],
            PromptLanguagePolicy::FrenchOnly => &["fr"],
            PromptLanguagePolicy::Mixed => &["en", "fr"],
        }
    }
}

/// Answer object for `quads`, single line, keys in schema order, quads in
/// canonical order. Separators are `", "` and `": "` as in the formatting
/// example shown to the model; non-ASCII text is written as-is.
pub fn serialize_answer(quads: &[Quad], text: &str, arity: TaskArity) -> String {
    let ordered = canonical_quad_order(quads, text);
    let mut out = String::with_capacity(64 + 96 * ordered.len());
    out.push('{');
    out.push_str(&json_str(ANSWER_KEY));
    out.push_str(": [");
    for (i, q) in ordered.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('{');
        let mut fields = vec![
            ("target", q.target.as_str()),
            ("aspect_category", q.aspect_category.as_str()),
            ("sentiment", q.sentiment.as_str()),
        ];
        if arity.has_opinion_expression() {
            fields.push(("opinion_expression", q.opinion_expression.as_str()));
        }
        for (j, (key, value)) in fields.into_iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&json_str(key));
            out.push_str(": ");
            out.push_str(&json_str(value));
        }
        out.push('}');
    }
    out.push_str("]}");
    out
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// Fills `template` with the taxonomy's variables and the document `text`.
pub fn render_prompt(
    taxonomy: &DomainTaxonomy,
    template: &PromptTemplate,
    text: &str,
) -> Result<String, PromptError> {
    let sentiments = taxonomy
        .sentiments
        .iter()
        .map(|s| format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n");
    let categories = taxonomy
        .categories
        .iter()
        .map(|c| format!("- {} (description: {})", c.label, c.description))
        .collect::<Vec<_>>()
        .join("\n");
    let answer = serialize_answer(&taxonomy.one_shot.quads, &taxonomy.one_shot.text, taxonomy.task_arity);

    let body = template.body();
    let mut out = String::with_capacity(body.len() + text.len() + categories.len() + answer.len());
    let mut rest = body;
    // Single left-to-right pass so inserted text is never re-scanned.
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = Slot::ALL.into_iter().find(|slot| tail.starts_with(&slot.token()));
        match hit {
            Some(slot) => {
                out.push_str(match slot {
                    Slot::Document => text,
                    Slot::Sentiments => &sentiments,
                    Slot::Categories => &categories,
                    Slot::OneShotDocument => &taxonomy.one_shot.text,
                    Slot::OneShotAnswer => &answer,
                });
                rest = &tail[slot.token().len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SftPair {
    pub system: String,
    pub user: String,
    pub assistant: String,
    pub sample_id: String,
    pub domain: String,
    pub language: String,
}

/// Renders one pair per sample with its domain's taxonomy, concatenates the
/// domains in input order, then shuffles once with `seed`.
pub fn build_instruction_set(
    splits: &[(DomainTaxonomy, DatasetSplit)],
    templates: &TemplateSet,
    policy: PromptLanguagePolicy,
    seed: u64,
) -> Result<Vec<SftPair>, PromptError> {
    let taxonomies: HashMap<&str, &DomainTaxonomy> = splits
        .iter()
        .map(|(t, _)| (t.domain_id.as_str(), t))
        .collect();
    let mut pairs = Vec::new();
    for (_, split) in splits {
        for sample in &split.samples {
            let taxonomy = taxonomies
                .get(sample.domain.as_str())
                .ok_or_else(|| PromptError::UnknownDomain(sample.domain.clone()))?;
            let template = templates.get(policy.select(&sample.language))?;
            pairs.push(SftPair {
                system: taxonomy.system_prompt.clone(),
                user: render_prompt(taxonomy, template, &sample.text)?,
                assistant: serialize_answer(&sample.gold, &sample.text, taxonomy.task_arity),
                sample_id: sample.id.clone(),
                domain: sample.domain.clone(),
                language: sample.language.clone(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

#[derive(Debug, Serialize, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SftLine {
    messages: Vec<ChatMessage>,
    sample_id: String,
    domain: String,
    language: String,
}

pub fn sft_to_json(pair: &SftPair) -> String {
    let line = SftLine {
        messages: vec![
            ChatMessage { role: "system".into(), content: pair.system.clone() },
            ChatMessage { role: "user".into(), content: pair.user.clone() },
            ChatMessage { role: "assistant".into(), content: pair.assistant.clone() },
        ],
        sample_id: pair.sample_id.clone(),
        domain: pair.domain.clone(),
        language: pair.language.clone(),
    };
    serde_json::to_string(&line).expect("pair serializes")
}

/// Writes chat-messages JSONL, one pair per line.
pub fn export_sft(pairs: &[SftPair], path: &Path) -> Result<(), PromptError> {
    let io_err = |source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for pair in pairs {
        writeln!(out, "{}", sft_to_json(pair)).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads an export back. A missing assistant message yields an empty answer,
/// which lets plain prompt files share the format.
pub fn read_sft(path: &Path) -> Result<Vec<SftPair>, PromptError> {
    let file = File::open(path).map_err(|source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SftLine = serde_json::from_str(&line).map_err(|e| PromptError::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let content = |role: &str| {
            parsed
                .messages
                .iter()
                .find(|m| m.role == role)
                .map(|m| m.content.clone())
                .unwrap_or_default()
        };
        pairs.push(SftPair {
            system: content("system"),
            user: content("user"),
            assistant: content("assistant"),
            sample_id: parsed.sample_id.clone(),
            domain: parsed.domain.clone(),
            language: parsed.language.clone(),
        });
    }
    Ok(pairs)
}
