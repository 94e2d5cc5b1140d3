//! Pipeline commands behind the `absa` binary.
//!
//! Each `cmd_*` function is usable on its own; the binary only parses flags,
//! loads a [`RunConfig`] and maps [`CliError`] to an exit code.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use absa_core::align::repair_result;
use absa_core::dataset::{compute_stats, load_dataset, DatasetError, DatasetSplit, LoadOptions};
use absa_core::mend::mend;
use absa_core::model::TaxonomyError;
use absa_core::prompt::{build_instruction_set, export_sft, read_sft, PromptError, PromptLanguagePolicy, TemplateSet};
use absa_core::score::{evaluate, format_cell, MatchMode, ScoreOptions};
use absa_core::validate::{validate, FailureTally, ValidationConfig, ValidationResult};
use absa_core::{AlignConfig, DomainTaxonomy, EvalReport, PredictedQuad, Sample, TaskArity};
use absa_gateway::store::{completed_ids, latest_by_id, read_predictions, PredictionWriter};
use absa_gateway::{emit_json_schema, run_batch, EndpointConfig, GatewayError, PromptItem, RawPrediction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<TaxonomyError> for CliError {
    fn from(e: TaxonomyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io { .. } | PromptError::MalformedLine { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub taxonomies: Vec<PathBuf>,
    pub datasets: Vec<PathBuf>,
    /// Directory of `<lang>.txt` templates; the built-in English one is used when absent.
    pub template_dir: Option<PathBuf>,
    pub prompt_language_policy: PromptLanguagePolicy,
    pub seed: u64,
    pub align: AlignConfig,
    pub endpoint: Option<EndpointConfig>,
    pub arity: TaskArity,
    pub repair_spans: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            taxonomies: Vec::new(),
            datasets: Vec::new(),
            template_dir: None,
            prompt_language_policy: PromptLanguagePolicy::EnglishOnly,
            seed: 0,
            align: AlignConfig::default(),
            endpoint: None,
            arity: TaskArity::Quad,
            repair_spans: true,
        }
    }
}

impl RunConfig {
    /// Reads a JSON config. Relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.taxonomies.iter_mut().for_each(resolve);
        config.datasets.iter_mut().for_each(resolve);
        if let Some(dir) = config.template_dir.as_mut() {
            resolve(dir);
        }
        Ok(config)
    }

    /// Taxonomies keyed by domain id, with the configured arity applied.
    pub fn load_taxonomies(&self) -> Result<BTreeMap<String, DomainTaxonomy>, CliError> {
        let mut out = BTreeMap::new();
        for path in &self.taxonomies {
            let mut taxonomy = DomainTaxonomy::load(path)?;
            taxonomy.task_arity = self.arity;
            if out.insert(taxonomy.domain_id.clone(), taxonomy).is_some() {
                return Err(CliError::Config(format!("{}: duplicate domain", path.display())));
            }
        }
        Ok(out)
    }

    /// Templates, checked to cover every language the policy can pick.
    pub fn load_templates(&self) -> Result<TemplateSet, CliError> {
        let set = match &self.template_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::with_default_english(),
        };
        for lang in self.prompt_language_policy.languages() {
            set.get(lang)?;
        }
        Ok(set)
    }

    pub fn load_dataset(&self, path: &Path) -> Result<DatasetSplit, CliError> {
        Ok(load_dataset(path, LoadOptions::new(self.arity))?)
    }
}

fn display_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// One stats block per dataset file.
pub fn cmd_stats(config: &RunConfig, datasets: &[PathBuf]) -> Result<String, CliError> {
    let mut out = String::new();
    for path in datasets {
        let split = config.load_dataset(path)?;
        let title = format!("{} ({})", display_name(path), split.name.as_str());
        out.push_str(&compute_stats(&split).render(&title));
    }
    Ok(out)
}

/// Splits `split` by sample domain, in order of first appearance.
fn group_by_domain(
    split: &DatasetSplit,
    taxonomies: &BTreeMap<String, DomainTaxonomy>,
) -> Result<Vec<(DomainTaxonomy, DatasetSplit)>, CliError> {
    let mut groups: Vec<(DomainTaxonomy, DatasetSplit)> = Vec::new();
    for sample in &split.samples {
        let taxonomy = taxonomies
            .get(&sample.domain)
            .ok_or_else(|| CliError::from(PromptError::UnknownDomain(sample.domain.clone())))?;
        match groups.iter_mut().find(|(t, _)| t.domain_id == sample.domain) {
            Some((_, g)) => g.samples.push(sample.clone()),
            None => groups.push((
                taxonomy.clone(),
                DatasetSplit { name: split.name, samples: vec![sample.clone()] },
            )),
        }
    }
    Ok(groups)
}

pub const MULTI_DOMAIN_FILE: &str = "multi_domain.sft.jsonl";

/// Writes one SFT file per dataset and, with two or more datasets, a
/// shuffled multi-domain file. Returns the written paths.
pub fn cmd_build(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let taxonomies = config.load_taxonomies()?;
    let templates = config.load_templates()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let mut written = Vec::new();
    let mut all = Vec::new();
    for path in &config.datasets {
        let split = config.load_dataset(path)?;
        let groups = group_by_domain(&split, &taxonomies)?;
        let pairs = build_instruction_set(&groups, &templates, config.prompt_language_policy, config.seed)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let out = out_dir.join(format!("{stem}.sft.jsonl"));
        export_sft(&pairs, &out)?;
        written.push(out);
        all.extend(groups);
    }
    if config.datasets.len() >= 2 {
        let pairs = build_instruction_set(&all, &templates, config.prompt_language_policy, config.seed)?;
        let out = out_dir.join(MULTI_DOMAIN_FILE);
        export_sft(&pairs, &out)?;
        written.push(out);
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InferSummary {
    pub total: usize,
    pub skipped: usize,
    pub issued: usize,
    pub errors: usize,
}

/// Sends every prompt in `prompts` that has no successful record in
/// `predictions` yet, appending results as they arrive.
pub fn cmd_infer(config: &RunConfig, prompts: &Path, predictions: &Path) -> Result<InferSummary, CliError> {
    let endpoint = config
        .endpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("no endpoint configured".into()))?;
    let taxonomies = config.load_taxonomies()?;
    let pairs = read_sft(prompts)?;
    let done = completed_ids(&read_predictions(predictions)?);

    let mut summary = InferSummary { total: pairs.len(), ..Default::default() };
    // Grouped by domain so that each request carries its own domain's schema.
    let mut by_domain: BTreeMap<&str, Vec<PromptItem>> = BTreeMap::new();
    for pair in &pairs {
        if done.contains(&pair.sample_id) {
            summary.skipped += 1;
            continue;
        }
        by_domain.entry(pair.domain.as_str()).or_default().push(PromptItem {
            sample_id: pair.sample_id.clone(),
            system: pair.system.clone(),
            user: pair.user.clone(),
        });
    }
    let schemas = by_domain
        .keys()
        .map(|d| match taxonomies.get(*d) {
            Some(t) => Ok((*d, emit_json_schema(t))),
            None if endpoint.structured_output => Err(CliError::from(PromptError::UnknownDomain(d.to_string()))),
            None => Ok((*d, serde_json::Value::Null)),
        })
        .collect::<Result<HashMap<_, _>, _>>()?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Config(format!("runtime: {e}")))?;
    let mut writer = PredictionWriter::append(predictions)?;
    let mut write_error = None;
    for (domain, items) in &by_domain {
        let schema = schemas.get(domain).filter(|s| !s.is_null());
        let results = runtime.block_on(run_batch(items, endpoint, schema, |p| {
            if let Err(e) = writer.write(p) {
                write_error.get_or_insert(e);
            }
        }))?;
        let errors = results.iter().filter(|p| p.error.is_some()).count();
        eprintln!("{domain}: {} requests, {errors} errors", results.len());
        summary.issued += results.len();
        summary.errors += errors;
    }
    if let Some(e) = write_error {
        return Err(e.into());
    }
    Ok(summary)
}

/// Everything `cmd_evaluate` reports.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    /// Failure counts before span repair.
    pub failures: FailureTally,
    pub failures_by_domain: BTreeMap<String, FailureTally>,
    pub strict: EvalReport,
    pub relaxed: EvalReport,
    pub repairs: usize,
    pub unrepaired: usize,
    pub warnings: Vec<String>,
}

/// mend → validate → tally → optional repair → score under both modes.
///
/// Samples without a prediction, and predictions without a sample, are
/// excluded and reported in `warnings`.
pub fn evaluate_predictions(
    samples: &[Sample],
    taxonomies: &BTreeMap<String, DomainTaxonomy>,
    predictions: &[RawPrediction],
    align: Option<&AlignConfig>,
) -> Result<Evaluation, CliError> {
    let latest: HashMap<&str, &RawPrediction> =
        latest_by_id(predictions).into_iter().map(|p| (p.sample_id.as_str(), p)).collect();
    let configs: HashMap<&str, ValidationConfig> =
        taxonomies.iter().map(|(d, t)| (d.as_str(), ValidationConfig::from_taxonomy(t))).collect();
    let known: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();

    let mut warnings = Vec::new();
    let mut failures = FailureTally::default();
    let mut failures_by_domain: BTreeMap<String, FailureTally> = BTreeMap::new();
    let mut scored: Vec<(&Sample, Vec<PredictedQuad>)> = Vec::new();
    let (mut repairs, mut unrepaired) = (0, 0);
    for sample in samples {
        let config = configs
            .get(sample.domain.as_str())
            .ok_or_else(|| CliError::from(PromptError::UnknownDomain(sample.domain.clone())))?;
        let Some(prediction) = latest.get(sample.id.as_str()) else {
            warnings.push(format!("{}: no prediction", sample.id));
            continue;
        };
        let result = validate(&mend(&prediction.raw_output), &sample.id, &sample.text, config);
        failures.add(&result);
        failures_by_domain.entry(sample.domain.clone()).or_default().add(&result);
        let result: ValidationResult = match align {
            Some(cfg) => repair_result(&result, &sample.text, cfg),
            None => result,
        };
        repairs += result.repairs.len();
        unrepaired += result
            .failures
            .iter()
            .filter(|f| f.detail.ends_with(absa_core::align::UNREPAIRED_MARKER))
            .count();
        scored.push((sample, result.quads));
    }
    for p in latest_by_id(predictions) {
        if !known.contains(p.sample_id.as_str()) {
            warnings.push(format!("{}: prediction has no matching sample", p.sample_id));
        }
    }
    let options = ScoreOptions::default();
    let corpus = || scored.iter().map(|(s, q)| (*s, q.as_slice()));
    Ok(Evaluation {
        failures,
        failures_by_domain,
        strict: evaluate(corpus(), MatchMode::Strict, &options),
        relaxed: evaluate(corpus(), MatchMode::Relaxed, &options),
        repairs,
        unrepaired,
        warnings,
    })
}

/// Failure table, per-domain score cells and per-language table.
pub fn render_evaluation(eval: &Evaluation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== failure modes (before repair) ==");
    let _ = writeln!(out, "{:<12}{}", "domain", FailureTally::header());
    for (domain, tally) in &eval.failures_by_domain {
        let _ = writeln!(out, "{domain:<12}{}", tally.row());
    }
    let _ = writeln!(out, "{:<12}{}", "all", eval.failures.row());
    let _ = writeln!(out, "span repairs: {} applied, {} left unrepaired", eval.repairs, eval.unrepaired);

    let _ = writeln!(out, "\n== F1 strict/relaxed ==");
    let domains: Vec<&String> = eval.strict.by_domain.keys().collect();
    let mut header = format!("{:<12}", "");
    for d in &domains {
        let _ = write!(header, "{d:>16}");
    }
    let _ = write!(header, "{:>16}", "all");
    let _ = writeln!(out, "{}", header.trim_end());
    let mut row = format!("{:<12}", "F1");
    for d in &domains {
        let cell = format_cell(eval.strict.by_domain[*d].f1, eval.relaxed.by_domain[*d].f1);
        let _ = write!(row, "{cell:>16}");
    }
    let _ = write!(row, "{:>16}", format_cell(eval.strict.f1, eval.relaxed.f1));
    let _ = writeln!(out, "{row}");

    let _ = writeln!(out, "\n== by language ==");
    let _ = writeln!(out, "{:<12}{:>16}{:>8}{:>8}{:>8}", "language", "strict/relaxed", "tp", "pred", "gold");
    for (lang, strict) in &eval.strict.by_language {
        let relaxed = &eval.relaxed.by_language[lang];
        let _ = writeln!(
            out,
            "{lang:<12}{:>16}{:>8}{:>8}{:>8}",
            format_cell(strict.f1, relaxed.f1),
            strict.tp,
            strict.pred,
            strict.gold
        );
    }
    if !eval.warnings.is_empty() {
        let _ = writeln!(out, "\n{} warnings:", eval.warnings.len());
        for w in &eval.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

pub const REPORT_FILE: &str = "evaluation.json";

/// Scores `predictions` against `datasets` (or the configured datasets),
/// writes `evaluation.json` to `out_dir` and returns the rendered report.
pub fn cmd_evaluate(
    config: &RunConfig,
    predictions: &Path,
    datasets: &[PathBuf],
    out_dir: &Path,
) -> Result<(String, Evaluation), CliError> {
    let taxonomies = config.load_taxonomies()?;
    let datasets = if datasets.is_empty() { &config.datasets[..] } else { datasets };
    let mut samples = Vec::new();
    for path in datasets {
        samples.extend(config.load_dataset(path)?.samples);
    }
    let records = read_predictions(predictions)?;
    let align = config.repair_spans.then_some(&config.align);
    let eval = evaluate_predictions(&samples, &taxonomies, &records, align)?;

    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let report = out_dir.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&eval).expect("report serializes");
    std::fs::write(&report, text + "\n").map_err(|e| io_error(&report, e))?;
    Ok((render_evaluation(&eval), eval))
}
