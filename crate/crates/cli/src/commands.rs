//! Subcommand implementations. Every command writes its full artifacts
//! atomically, prints one machine-readable summary line on stdout, and
//! embeds the effective config in report artifacts for exact reruns.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use sqlrobust_core::attack::{
    adversarial_augment, generate_worstcase_set, AttackConfig, AttackResult, BaselinePredictor,
    HttpPredictor, Predictor, PredictorHandle, SpanRankPolicy, SubprocessPredictor,
};
use sqlrobust_core::dataset::{diff_stats, load_examples, substitution_report, Example};
use sqlrobust_core::eval::{accuracy, exact_match, ComponentScores, EvalReport, PerExampleEntry};
use sqlrobust_core::link::{link, mas_select};
use sqlrobust_core::perturb::{generate_syn_dataset, PerturbedExample};
use sqlrobust_core::providers::{
    ContextualProvider, EmbeddingProvider, EmbeddingTable, LexiconProvider, ProposerEndpoint,
    SynonymLexicon, SynonymProvider,
};
use sqlrobust_core::schema::{AnnotationsByDb, CellValueFile, SchemaSet};
use sqlrobust_core::sql::parse_sql;

use crate::config::EffectiveConfig;
use crate::output::{atomic_write, atomic_write_jsonl, summary};

/// Load schemas plus optional annotation and cell-value sidecars.
pub fn load_schema_set(
    schemas: &Path,
    annotations: Option<&Path>,
    cell_values: Option<&Path>,
) -> anyhow::Result<SchemaSet> {
    let mut set = SchemaSet::load(schemas)?;
    if let Some(path) = annotations {
        let file = AnnotationsByDb::load(path)?;
        set = set.with_annotations(&file)?;
    }
    if let Some(path) = cell_values {
        let file = CellValueFile::load(path)?;
        let mut updated = Vec::new();
        for schema in set.iter() {
            // The sidecar names items as table.column; entries that do not
            // belong to this database are simply absent from it.
            let own: CellValueFile = CellValueFile(
                file.0
                    .iter()
                    .filter(|(key, _)| {
                        key.split('.')
                            .next()
                            .map(|t| schema.table_by_name(t).is_some())
                            .unwrap_or(false)
                    })
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            );
            updated.push(
                schema.with_cell_values(&own, sqlrobust_core::schema::DEFAULT_CELL_VALUE_CAP)?,
            );
        }
        set = SchemaSet::new(updated);
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Provider assembly
// ---------------------------------------------------------------------------

pub struct ProviderSources {
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub proposer_url: Option<String>,
    pub proposer_stub: Option<PathBuf>,
}

pub struct ProviderSet {
    lexicon: Option<LexiconProvider>,
    embedding: Option<EmbeddingProvider>,
    contextual: Option<ContextualProvider>,
}

impl ProviderSet {
    pub fn build(
        sources: &ProviderSources,
        schemas: &SchemaSet,
        pool: &[Example],
        config: &EffectiveConfig,
    ) -> anyhow::Result<Self> {
        let lexicon = sources
            .lexicon
            .as_deref()
            .map(SynonymLexicon::load)
            .transpose()?
            .map(LexiconProvider::new);
        let embedding = sources
            .embeddings
            .as_deref()
            .map(EmbeddingTable::load)
            .transpose()?
            .map(|table| {
                EmbeddingProvider::new(table, config.embedding_k, config.embedding_min_similarity)
            });
        let endpoint = match (&sources.proposer_url, &sources.proposer_stub) {
            (Some(url), _) => Some(ProposerEndpoint::Http {
                url: url.clone(),
                timeout: Duration::from_millis(config.timeout_ms),
            }),
            (None, Some(stub_path)) => {
                let data = std::fs::read_to_string(stub_path)
                    .with_context(|| format!("reading proposer stub {}", stub_path.display()))?;
                let table: BTreeMap<String, Vec<String>> = serde_json::from_str(&data)
                    .with_context(|| format!("parsing proposer stub {}", stub_path.display()))?;
                Some(ProposerEndpoint::Stub(table))
            }
            (None, None) => None,
        };
        let contextual = endpoint.map(|endpoint| {
            ContextualProvider::new(
                endpoint,
                pool.iter()
                    .map(|e| (e.db_id.clone(), e.question.clone()))
                    .collect(),
                schemas.clone(),
                config.context_sentences,
                config.proposer_top_k,
            )
        });
        Ok(ProviderSet {
            lexicon,
            embedding,
            contextual,
        })
    }

    /// Providers in the configured priority order, skipping absent ones.
    pub fn ordered(&self, order: &str) -> Vec<&dyn SynonymProvider> {
        let mut out: Vec<&dyn SynonymProvider> = Vec::new();
        for name in order.split(',').map(|s| s.trim()) {
            match name {
                "lexicon" => {
                    if let Some(p) = &self.lexicon {
                        out.push(p);
                    }
                }
                "contextual" => {
                    if let Some(p) = &self.contextual {
                        out.push(p);
                    }
                }
                "embedding" => {
                    if let Some(p) = &self.embedding {
                        out.push(p);
                    }
                }
                _ => {}
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn evaluate(
    schemas: &Path,
    gold: &Path,
    predictions: &Path,
    out: &Path,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schemas = load_schema_set(schemas, None, None)?;
    let dataset = load_examples(gold)?;

    // Predictions: JSONL of {"index"|"id": n, "sql": text}.
    let file = std::fs::File::open(predictions)
        .with_context(|| format!("opening predictions {}", predictions.display()))?;
    let mut by_index: BTreeMap<usize, String> = BTreeMap::new();
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading predictions line {}", line_no + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .with_context(|| format!("parsing predictions line {}", line_no + 1))?;
        let index = value
            .get("index")
            .or_else(|| value.get("id"))
            .and_then(|v| v.as_u64())
            .with_context(|| format!("predictions line {} has no index or id", line_no + 1))?;
        let sql = value
            .get("sql")
            .and_then(|v| v.as_str())
            .with_context(|| format!("predictions line {} has no sql", line_no + 1))?;
        by_index.insert(index as usize, sql.to_string());
    }

    let mut scores = ComponentScores::default();
    let mut per_example = Vec::with_capacity(dataset.len());
    let mut results = Vec::with_capacity(dataset.len());
    for (index, example) in dataset.iter().enumerate() {
        let mut entry = PerExampleEntry {
            index,
            exact_match: false,
            error: None,
        };
        let schema = match schemas.get(&example.db_id) {
            Some(s) => s,
            None => {
                entry.error = Some(format!("no schema for database {:?}", example.db_id));
                results.push(false);
                per_example.push(entry);
                continue;
            }
        };
        let gold_query = match parse_sql(&example.query, schema) {
            Ok(q) => q,
            Err(e) => {
                entry.error = Some(format!("gold query does not parse: {e}"));
                results.push(false);
                per_example.push(entry);
                continue;
            }
        };
        match by_index.get(&index) {
            None => {
                entry.error = Some("missing prediction".to_string());
                scores.add_unparseable_pred(&gold_query);
                results.push(false);
            }
            Some(sql) => match parse_sql(sql, schema) {
                Ok(pred) => {
                    let hit = exact_match(&pred, &gold_query);
                    scores.add_pair(&pred, &gold_query);
                    entry.exact_match = hit;
                    results.push(hit);
                }
                Err(e) => {
                    entry.error = Some(format!("prediction does not parse: {e}"));
                    scores.add_unparseable_pred(&gold_query);
                    results.push(false);
                }
            },
        }
        per_example.push(entry);
    }

    if dataset.is_empty() {
        bail!("gold dataset is empty; accuracy is undefined");
    }
    let eval_results: Vec<sqlrobust_core::eval::EvalResult> = results
        .iter()
        .map(|&hit| sqlrobust_core::eval::EvalResult {
            exact_match: hit,
            components: ComponentScores::default(),
        })
        .collect();
    let acc = accuracy(&eval_results)?;
    let report = EvalReport::new(acc, &scores, per_example);

    let mut artifact = serde_json::to_value(&report)?;
    artifact["config"] = serde_json::to_value(config)?;
    atomic_write(out, &serde_json::to_string_pretty(&artifact)?)?;
    summary(json!({
        "command": "evaluate",
        "accuracy": acc,
        "n": report.n,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

// ---------------------------------------------------------------------------
// perturb
// ---------------------------------------------------------------------------

/// Output row: the dataset layout plus provenance fields.
#[derive(Serialize)]
struct PerturbedRow<'a> {
    db_id: &'a str,
    question: &'a str,
    query: &'a str,
    original_question: &'a str,
    edits: &'a [sqlrobust_core::perturb::Edit],
}

fn perturbed_rows(examples: &[PerturbedExample]) -> Vec<PerturbedRow<'_>> {
    examples
        .iter()
        .map(|e| PerturbedRow {
            db_id: &e.db_id,
            question: &e.perturbed_question,
            query: &e.gold_query,
            original_question: &e.original_question,
            edits: &e.plan.edits,
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn perturb(
    schemas: &Path,
    dataset: &Path,
    annotations: Option<&Path>,
    cell_values: Option<&Path>,
    sources: &ProviderSources,
    out: &Path,
    report_path: Option<&Path>,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, annotations, cell_values)?;
    let examples = load_examples(dataset)?;
    let providers = ProviderSet::build(sources, &schema_set, &examples, config)?;
    let ordered = providers.ordered(&config.providers);

    let outcome = generate_syn_dataset(
        &examples,
        &schema_set,
        &ordered,
        config.budget,
        config.seed,
        config.jobs,
    );

    let rows = perturbed_rows(&outcome.examples);
    atomic_write(out, &serde_json::to_string_pretty(&rows)?)?;

    let modified = outcome
        .examples
        .iter()
        .filter(|e| e.perturbed_question != e.original_question)
        .count();
    let total_edits: usize = outcome.examples.iter().map(|e| e.plan.edits.len()).sum();

    if let Some(report_path) = report_path {
        let perturbed_examples: Vec<Example> = outcome
            .examples
            .iter()
            .map(|e| Example {
                db_id: e.db_id.clone(),
                question: e.perturbed_question.clone(),
                query: e.gold_query.clone(),
            })
            .collect();
        let sub_report = substitution_report(&examples, &perturbed_examples, &schema_set)?;
        let stats = diff_stats(&examples, &perturbed_examples, &schema_set)?;
        let artifact = json!({
            "config": config,
            "stats": stats,
            "substitutions": sub_report,
            "errors": outcome.errors,
        });
        atomic_write(report_path, &serde_json::to_string_pretty(&artifact)?)?;
    }

    summary(json!({
        "command": "perturb",
        "n": outcome.examples.len(),
        "modified": modified,
        "edits": total_edits,
        "seed": config.seed,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

pub enum PredictorSpec {
    Command(String),
    Url(String),
    Baseline { mas: bool },
}

pub fn build_predictor(
    spec: &PredictorSpec,
    schemas: &SchemaSet,
    timeout: Duration,
    max_in_flight: usize,
) -> anyhow::Result<PredictorHandle> {
    let transport: Box<dyn Predictor> = match spec {
        PredictorSpec::Command(command) => {
            let mut parts = command.split_whitespace();
            let program = parts
                .next()
                .context("predictor command must not be empty")?;
            let args: Vec<String> = parts.map(|s| s.to_string()).collect();
            Box::new(SubprocessPredictor::spawn(program, &args)?)
        }
        PredictorSpec::Url(url) => Box::new(HttpPredictor {
            url: url.clone(),
            timeout,
        }),
        PredictorSpec::Baseline { mas } => Box::new(BaselinePredictor {
            schemas: schemas.clone(),
            mas: *mas,
        }),
    };
    Ok(PredictorHandle::new(transport, max_in_flight))
}

#[derive(Serialize)]
struct AttackRow<'a> {
    db_id: &'a str,
    question: &'a str,
    query: &'a str,
    original_question: &'a str,
    edits: &'a [sqlrobust_core::perturb::Edit],
}

#[allow(clippy::too_many_arguments)]
pub fn attack(
    schemas: &Path,
    dataset: &Path,
    annotations: Option<&Path>,
    sources: &ProviderSources,
    spec: &PredictorSpec,
    out: &Path,
    report_path: Option<&Path>,
    augment_out: Option<&Path>,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, None, None)?;
    // MAS-defended predictors see the annotated schemas; the attack itself
    // links against the base schemas, like any black-box attacker would.
    let predictor_schemas = match annotations {
        Some(path) => load_schema_set(schemas, Some(path), None)?,
        None => schema_set.clone(),
    };
    let examples = load_examples(dataset)?;
    let providers = ProviderSet::build(sources, &schema_set, &examples, config)?;
    let ordered = providers.ordered(&config.providers);

    let policy = match config.policy.as_str() {
        "deletion_impact" => SpanRankPolicy::DeletionImpact,
        "link_score" => SpanRankPolicy::LinkScore,
        other => {
            bail!("unknown span ranking policy {other:?} (expected deletion_impact or link_score)")
        }
    };
    let attack_config = AttackConfig {
        max_edits: config.max_edits,
        candidates_per_span: config.candidates_per_span,
        policy,
        seed: config.seed,
    };
    let handle = build_predictor(
        spec,
        &predictor_schemas,
        Duration::from_millis(config.timeout_ms),
        config.jobs,
    )?;

    let (worstcase, results, report) = generate_worstcase_set(
        &handle,
        &examples,
        &schema_set,
        &ordered,
        &attack_config,
        config.jobs,
    );

    // Every example failing with a transport error means the predictor was
    // never reachable.
    if !examples.is_empty() && report.errors.len() == examples.len() {
        bail!(sqlrobust_core::Error::Transport(format!(
            "predictor unreachable: {}",
            report.errors[0].message
        )));
    }

    let rows: Vec<AttackRow> = worstcase
        .iter()
        .zip(&results)
        .zip(&examples)
        .map(|((row, result), original)| AttackRow {
            db_id: &row.db_id,
            question: &row.question,
            query: &row.query,
            original_question: &original.question,
            edits: &result.plan.edits,
        })
        .collect();
    atomic_write(out, &serde_json::to_string_pretty(&rows)?)?;

    if let Some(report_path) = report_path {
        let mut artifact = serde_json::to_value(&report)?;
        artifact["config"] = serde_json::to_value(config)?;
        atomic_write(report_path, &serde_json::to_string_pretty(&artifact)?)?;
    }

    if let Some(augment_path) = augment_out {
        let attack_results: Vec<AttackResult> = results;
        let augmented = adversarial_augment(&examples, &attack_results);
        let artifact = serde_json::to_string_pretty(&augmented)?;
        atomic_write(augment_path, &artifact)?;
        summary(json!({
            "command": "attack",
            "n": report.n,
            "attackable": report.attackable,
            "success_rate": report.success_rate,
            "augmented_rows": augmented.len(),
            "adversarial_ratio": if examples.is_empty() { 0.0 } else {
                (augmented.len() - examples.len()) as f64 / examples.len() as f64
            },
            "seed": config.seed,
            "out": out.display().to_string(),
        }));
        return Ok(0);
    }

    summary(json!({
        "command": "attack",
        "n": report.n,
        "attackable": report.attackable,
        "success_rate": report.success_rate,
        "mean_queries": report.mean_queries,
        "seed": config.seed,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

// ---------------------------------------------------------------------------
// mas / link
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MasRow {
    index: usize,
    db_id: String,
    selected: BTreeMap<String, String>,
    collisions: Vec<sqlrobust_core::link::MasCollision>,
}

pub fn mas(
    schemas: &Path,
    dataset: &Path,
    annotations: Option<&Path>,
    out: &Path,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, annotations, None)?;
    let examples = load_examples(dataset)?;
    let mut collisions = 0usize;
    {
        let collisions = &mut collisions;
        let rows = examples.iter().enumerate().map(|(index, example)| {
            let schema = schema_set
                .get(&example.db_id)
                .with_context(|| format!("no schema for database {:?}", example.db_id))?;
            let resolved = mas_select(&example.question, schema);
            let mut selected = BTreeMap::new();
            for table in &schema.tables {
                selected.insert(
                    table.name.clone(),
                    resolved.selected_table(table.id).to_string(),
                );
            }
            for column in &schema.columns {
                if let Some(table_id) = column.table_id {
                    selected.insert(
                        format!("{}.{}", schema.table(table_id).name, column.name),
                        resolved.selected_column(column.id).to_string(),
                    );
                }
            }
            *collisions += resolved.collisions.len();
            Ok(MasRow {
                index,
                db_id: example.db_id.clone(),
                selected,
                collisions: resolved.collisions,
            })
        });
        atomic_write_jsonl(out, rows)?;
    }
    summary(json!({
        "command": "mas",
        "n": examples.len(),
        "collisions": collisions,
        "seed": config.seed,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

#[derive(Serialize)]
struct LinkRow {
    index: usize,
    db_id: String,
    #[serde(flatten)]
    linked: sqlrobust_core::link::LinkedQuestion,
}

pub fn link_cmd(
    schemas: &Path,
    dataset: &Path,
    cell_values: Option<&Path>,
    out: &Path,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, None, cell_values)?;
    let examples = load_examples(dataset)?;
    let mut tags = 0usize;
    {
        let tags = &mut tags;
        let rows = examples.iter().enumerate().map(|(index, example)| {
            let schema = schema_set
                .get(&example.db_id)
                .with_context(|| format!("no schema for database {:?}", example.db_id))?;
            let linked = link(&example.question, schema);
            *tags += linked.tags.len();
            Ok(LinkRow {
                index,
                db_id: example.db_id.clone(),
                linked,
            })
        });
        atomic_write_jsonl(out, rows)?;
    }
    summary(json!({
        "command": "link",
        "n": examples.len(),
        "tags": tags,
        "seed": config.seed,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

// ---------------------------------------------------------------------------
// stats / report
// ---------------------------------------------------------------------------

pub fn stats(
    schemas: &Path,
    original: &Path,
    modified: &Path,
    cell_values: Option<&Path>,
    out: &Path,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, None, cell_values)?;
    let original_examples = load_examples(original)?;
    let modified_examples = load_examples(modified)?;
    let stats = diff_stats(&original_examples, &modified_examples, &schema_set)?;
    let artifact = json!({
        "config": config,
        "stats": stats,
    });
    atomic_write(out, &serde_json::to_string_pretty(&artifact)?)?;
    summary(json!({
        "command": "stats",
        "n": original_examples.len(),
        "modified": stats.modified_count,
        "mean_changes_per_question": stats.mean_changes_per_question,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

pub fn report(
    schemas: &Path,
    original: &Path,
    modified: &Path,
    out: &Path,
    text: Option<&Path>,
    config: &EffectiveConfig,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, None, None)?;
    let original_examples = load_examples(original)?;
    let modified_examples = load_examples(modified)?;
    let sub_report = substitution_report(&original_examples, &modified_examples, &schema_set)?;
    let artifact = json!({
        "config": config,
        "domains": sub_report.domains,
    });
    atomic_write(out, &serde_json::to_string_pretty(&artifact)?)?;
    if let Some(text_path) = text {
        atomic_write(text_path, &sub_report.to_text())?;
    }
    let pairs: usize = sub_report.domains.values().map(|v| v.len()).sum();
    summary(json!({
        "command": "report",
        "domains": sub_report.domains.len(),
        "pairs": pairs,
        "out": out.display().to_string(),
    }));
    Ok(0)
}

// ---------------------------------------------------------------------------
// baseline (line-protocol server on stdio)
// ---------------------------------------------------------------------------

pub fn baseline_serve(
    schemas: &Path,
    annotations: Option<&Path>,
    mas: bool,
) -> anyhow::Result<i32> {
    let schema_set = load_schema_set(schemas, annotations, None)?;
    let predictor = BaselinePredictor {
        schemas: schema_set,
        mas,
    };
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line.context("reading request line")?;
        if line.trim().is_empty() {
            continue;
        }
        let request: serde_json::Value =
            serde_json::from_str(&line).context("parsing request line")?;
        let id = request.get("id").cloned().unwrap_or(json!(null));
        let db_id = request.get("db_id").and_then(|v| v.as_str()).unwrap_or("");
        let question = request
            .get("question")
            .and_then(|v| v.as_str())
            .unwrap_or("");
        // Unknown databases answer with empty SQL: an automatic non-match
        // on the caller's side, never a dead server.
        let sql = predictor
            .predict_raw(db_id, question)
            .unwrap_or_else(|_| String::new());
        println!("{}", json!({"id": id, "sql": sql}));
    }
    Ok(0)
}
