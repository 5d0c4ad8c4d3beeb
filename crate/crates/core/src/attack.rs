//! Drive an external predictor with candidate substitutions to construct
//! worst-case datasets and adversarial-training augmentation files.
//!
//! The predictor is anything reachable over the line protocol (subprocess
//! stdio or HTTP POST /predict), or an in-process closure. A built-in
//! lexical baseline predictor embodies the schema-linking heuristic that
//! synonym substitution breaks, so the failure mode is demonstrable without
//! a neural model.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::eval::exact_match;
use crate::link::{link, LinkKind, LinkTarget};
use crate::perturb::{apply_plan, find_substitutable_spans, Edit, SubstitutionPlan};
use crate::providers::{SubstitutionRequest, SynonymProvider};
use crate::schema::{ColumnId, DatabaseSchema, SchemaSet, TableId};
use crate::sql::{
    canonicalize, parse_sql, serialize, ColumnRef, CondRhs, Condition, ConditionTree, Literal,
    SelectClause, SqlQuery,
};
use crate::text::{detokenize, normalize_token};
use crate::util::parallel_map_indexed;

// ---------------------------------------------------------------------------
// Predictor transports
// ---------------------------------------------------------------------------

/// Anything that turns (db_id, question) into SQL text.
pub trait Predictor: Send + Sync {
    fn predict_raw(&self, db_id: &str, question: &str) -> Result<String>;
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    id: u64,
    db_id: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct PredictResponse {
    id: u64,
    sql: String,
}

static PREDICT_IDS: AtomicU64 = AtomicU64::new(1);

/// Line-protocol predictor over a child process: one JSON object per line on
/// stdin/stdout. Responses are matched to requests by id, so servers may
/// answer out of order.
pub struct SubprocessPredictor {
    io: Mutex<SubprocessIo>,
}

struct SubprocessIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    pending: HashMap<u64, String>,
}

impl SubprocessPredictor {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transport(format!("spawn {program:?}: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| Error::Transport("child stdin unavailable".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Transport("child stdout unavailable".into()))?;
        Ok(SubprocessPredictor {
            io: Mutex::new(SubprocessIo {
                child,
                stdin,
                stdout: BufReader::new(stdout),
                pending: HashMap::new(),
            }),
        })
    }
}

impl Predictor for SubprocessPredictor {
    fn predict_raw(&self, db_id: &str, question: &str) -> Result<String> {
        let id = PREDICT_IDS.fetch_add(1, Ordering::Relaxed);
        let request = PredictRequest {
            id,
            db_id,
            question,
        };
        let line = serde_json::to_string(&request).expect("request serializes");
        let mut io = self.io.lock().expect("predictor lock");
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.write_all(b"\n"))
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::Transport(format!("write to predictor: {e}")))?;
        loop {
            if let Some(sql) = io.pending.remove(&id) {
                return Ok(sql);
            }
            let mut line = String::new();
            let n = io
                .stdout
                .read_line(&mut line)
                .map_err(|e| Error::Transport(format!("read from predictor: {e}")))?;
            if n == 0 {
                return Err(Error::Transport("predictor closed its stdout".into()));
            }
            if line.trim().is_empty() {
                continue;
            }
            let response: PredictResponse = serde_json::from_str(line.trim())
                .map_err(|e| Error::Protocol(format!("malformed predictor response: {e}")))?;
            if response.id == id {
                return Ok(response.sql);
            }
            io.pending.insert(response.id, response.sql);
        }
    }
}

impl Drop for SubprocessPredictor {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// HTTP predictor: POST /predict with the same request and response bodies
/// as the line protocol.
pub struct HttpPredictor {
    pub url: String,
    pub timeout: Duration,
}

impl Predictor for HttpPredictor {
    fn predict_raw(&self, db_id: &str, question: &str) -> Result<String> {
        let id = PREDICT_IDS.fetch_add(1, Ordering::Relaxed);
        let request = PredictRequest {
            id,
            db_id,
            question,
        };
        let body = serde_json::to_string(&request).expect("request serializes");
        let response_text = crate::net::http_post_json(&self.url, "predict", &body, self.timeout)?;
        let response: PredictResponse = serde_json::from_str(&response_text)
            .map_err(|e| Error::Protocol(format!("malformed predictor response: {e}")))?;
        if response.id != id {
            return Err(Error::Protocol(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        Ok(response.sql)
    }
}

/// In-process predictor from a closure; used for stubs and the built-in
/// baseline.
pub struct ClosurePredictor<F>(pub F);

impl<F> Predictor for ClosurePredictor<F>
where
    F: Fn(&str, &str) -> Result<String> + Send + Sync,
{
    fn predict_raw(&self, db_id: &str, question: &str) -> Result<String> {
        (self.0)(db_id, question)
    }
}

/// A predictor plus its service limits.
pub struct PredictorHandle {
    transport: Box<dyn Predictor>,
    pub max_in_flight: usize,
}

impl PredictorHandle {
    pub fn new(transport: Box<dyn Predictor>, max_in_flight: usize) -> Self {
        PredictorHandle {
            transport,
            max_in_flight: max_in_flight.max(1),
        }
    }

    /// Predict and parse against the schema. `Ok(None)` is an unparseable
    /// prediction: an automatic non-match, never a crash. `Err` is a
    /// transport or protocol failure.
    pub fn predict(
        &self,
        db_id: &str,
        question: &str,
        schema: &DatabaseSchema,
    ) -> Result<Option<SqlQuery>> {
        let raw = self.transport.predict_raw(db_id, question)?;
        Ok(parse_sql(&raw, schema).ok().map(|q| canonicalize(&q)))
    }
}

// ---------------------------------------------------------------------------
// Built-in lexical baseline predictor
// ---------------------------------------------------------------------------

/// Deterministic heuristic that leans entirely on lexical schema linking:
/// SELECT the linked columns (count(*) under a counting cue) FROM the
/// best-linked table, WHERE clauses from cell-value links, and the
/// star-count query over the first table when linking finds nothing.
pub fn baseline_lexical_predictor(question: &str, schema: &DatabaseSchema) -> SqlQuery {
    let linked = link(question, schema);
    let star = schema.star_column_id();
    let count_star = |table: TableId| SqlQuery {
        select: SelectClause {
            distinct: false,
            items: vec![ColumnRef {
                column: star,
                agg: Some(crate::sql::AggFunc::Count),
                distinct: false,
                arithmetic: None,
            }],
        },
        from: crate::sql::FromClause {
            tables: vec![table],
            join_conditions: vec![],
        },
        where_clause: None,
        group_by: vec![],
        having: None,
        order_by: None,
        limit: None,
        set_op: None,
    };

    if linked.tags.is_empty() {
        return count_star(TableId(0));
    }

    let mut scores: HashMap<TableId, usize> = HashMap::new();
    for tag in &linked.tags {
        match &tag.target {
            LinkTarget::Table { table_id } => {
                *scores.entry(TableId(*table_id)).or_insert(0) += 2;
            }
            LinkTarget::Column { column_id } | LinkTarget::CellValue { column_id, .. } => {
                if let Some(table) = schema.column(ColumnId(*column_id)).table_id {
                    *scores.entry(table).or_insert(0) += 1;
                }
            }
        }
    }
    let best_table = scores
        .iter()
        .map(|(t, s)| (*s, std::cmp::Reverse(t.0), *t))
        .max()
        .map(|(_, _, t)| t)
        .unwrap_or(TableId(0));

    let normalized: Vec<String> = linked.tokens.iter().map(|t| normalize_token(t)).collect();
    let counting_cue = normalized
        .windows(2)
        .any(|w| w[0] == "how" && w[1] == "many")
        || normalized.iter().any(|t| t == "count");

    let mut columns: Vec<ColumnId> = Vec::new();
    let mut conditions: Vec<Condition> = Vec::new();
    for tag in &linked.tags {
        match &tag.target {
            LinkTarget::Column { column_id } => {
                let column = ColumnId(*column_id);
                if schema.column(column).table_id == Some(best_table)
                    && matches!(tag.kind, LinkKind::ExactColumn | LinkKind::PartialColumn)
                    && !columns.contains(&column)
                {
                    columns.push(column);
                }
            }
            LinkTarget::CellValue { column_id, value } => {
                let column = ColumnId(*column_id);
                if schema.column(column).table_id == Some(best_table) {
                    conditions.push(Condition {
                        left: ColumnRef::plain(column),
                        op: crate::sql::CmpOp::Eq,
                        right: CondRhs::Literal(Literal::Str(value.clone())),
                        negated: false,
                    });
                }
            }
            LinkTarget::Table { .. } => {}
        }
    }

    let items = if counting_cue {
        vec![ColumnRef {
            column: star,
            agg: Some(crate::sql::AggFunc::Count),
            distinct: false,
            arithmetic: None,
        }]
    } else if columns.is_empty() {
        vec![ColumnRef::plain(star)]
    } else {
        columns.into_iter().map(ColumnRef::plain).collect()
    };

    let where_clause = if conditions.is_empty() {
        None
    } else {
        let connectors = vec![crate::sql::Connector::And; conditions.len() - 1];
        Some(ConditionTree {
            conditions,
            connectors,
        })
    };

    SqlQuery {
        select: SelectClause {
            distinct: false,
            items,
        },
        from: crate::sql::FromClause {
            tables: vec![best_table],
            join_conditions: vec![],
        },
        where_clause,
        group_by: vec![],
        having: None,
        order_by: None,
        limit: None,
        set_op: None,
    }
}

/// The baseline as a line-protocol-compatible predictor, optionally with
/// multi-annotation selection applied to the schema before linking.
pub struct BaselinePredictor {
    pub schemas: SchemaSet,
    pub mas: bool,
}

impl Predictor for BaselinePredictor {
    fn predict_raw(&self, db_id: &str, question: &str) -> Result<String> {
        let schema = self
            .schemas
            .get(db_id)
            .ok_or_else(|| Error::Transport(format!("no schema for database {db_id:?}")))?;
        let query = if self.mas {
            let resolved = crate::link::mas_select(question, schema);
            // Column and table ids are stable across resolution, so the
            // query serializes against the base schema.
            baseline_lexical_predictor(question, &resolved.to_schema())
        } else {
            baseline_lexical_predictor(question, schema)
        };
        Ok(serialize(&query, schema))
    }
}

// ---------------------------------------------------------------------------
// Attack loop
// ---------------------------------------------------------------------------

/// How spans are ordered before candidates are tried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanRankPolicy {
    /// Query the predictor once per span with the span masked out; spans
    /// whose deletion flips exact match rank first. Model-agnostic
    /// importance ranking at one predict call per span.
    DeletionImpact,
    /// Rank by link strength: exact over partial, longer spans, earlier
    /// spans. Costs no predictor queries.
    LinkScore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub max_edits: usize,
    pub candidates_per_span: usize,
    pub policy: SpanRankPolicy,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_edits: 3,
            candidates_per_span: 5,
            policy: SpanRankPolicy::DeletionImpact,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    /// The predictor was already wrong on the original question.
    PreFailed,
    Success,
    Failed,
}

/// One tried variant and its verdict, for the audit log.
#[derive(Debug, Clone, Serialize)]
pub struct TriedVariant {
    pub question: String,
    pub exact_match: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackResult {
    pub status: AttackStatus,
    /// The successful perturbed question, or the original on failure.
    pub final_question: String,
    pub plan: SubstitutionPlan,
    /// Predict calls made by the attack loop (ranking, trials, and the
    /// success re-verification); the pre-screening call is not counted.
    pub queries_used: usize,
    /// Success re-verified by one fresh predict call. False flags a
    /// nondeterministic predictor; reported, never hidden.
    pub verified: bool,
    pub tried: Vec<TriedVariant>,
}

impl AttackResult {
    pub fn success(&self) -> bool {
        self.status == AttackStatus::Success
    }

    fn not_attacked(status: AttackStatus, question: &str) -> AttackResult {
        AttackResult {
            status,
            final_question: question.to_string(),
            plan: SubstitutionPlan::default(),
            queries_used: 0,
            verified: true,
            tried: Vec::new(),
        }
    }
}

/// Greedy per-example attack. Spans are ranked by the configured policy;
/// for each span up to k candidates are tried in provider order; the first
/// candidate that flips exact match ends the attack. When no candidate for
/// a span flips, the first one is kept as an accumulated edit until
/// `max_edits` is reached.
pub fn attack_example(
    handle: &PredictorHandle,
    example: &Example,
    schema: &DatabaseSchema,
    providers: &[&dyn SynonymProvider],
    config: &AttackConfig,
) -> Result<AttackResult> {
    let gold = parse_sql(&example.query, schema).map_err(|e| {
        Error::InvalidInput(format!(
            "gold query for {:?} does not parse: {e}",
            example.db_id
        ))
    })?;

    let initial = handle.predict(&example.db_id, &example.question, schema)?;
    let initially_correct = initial.map(|q| exact_match(&q, &gold)).unwrap_or(false);
    if !initially_correct {
        return Ok(AttackResult::not_attacked(
            AttackStatus::PreFailed,
            &example.question,
        ));
    }

    let linked = link(&example.question, schema);
    let spans = find_substitutable_spans(&linked);
    let mut queries_used = 0usize;
    let mut tried = Vec::new();

    let ranked: Vec<(usize, usize)> = match config.policy {
        SpanRankPolicy::LinkScore => {
            let mut keyed = spans.clone();
            // Exact over partial, longer spans, earlier spans.
            keyed.sort_by_key(|&span| {
                let exactness = linked
                    .tags
                    .iter()
                    .find(|t| t.span == span)
                    .map(|t| match t.kind {
                        LinkKind::ExactTable | LinkKind::ExactColumn | LinkKind::CellValue => 0u8,
                        LinkKind::PartialTable | LinkKind::PartialColumn => 1,
                    })
                    .unwrap_or(1);
                (exactness, usize::MAX - (span.1 - span.0), span.0)
            });
            keyed
        }
        SpanRankPolicy::DeletionImpact => {
            let mut flips = Vec::new();
            let mut keeps = Vec::new();
            for &span in &spans {
                let mut tokens = linked.tokens.clone();
                tokens.drain(span.0..span.1);
                let masked = detokenize(&tokens);
                match handle.predict(&example.db_id, &masked, schema) {
                    Ok(prediction) => {
                        queries_used += 1;
                        let still_matches =
                            prediction.map(|q| exact_match(&q, &gold)).unwrap_or(false);
                        if still_matches {
                            keeps.push(span);
                        } else {
                            flips.push(span);
                        }
                    }
                    Err(_) => keeps.push(span), // unreachable mask query: deprioritize
                }
            }
            flips.into_iter().chain(keeps).collect()
        }
    };

    let mut committed: Vec<Edit> = Vec::new();
    for span in ranked {
        if committed.len() >= config.max_edits {
            break;
        }
        let phrase = linked.span_normalized(span);
        if phrase.is_empty() {
            continue;
        }
        let request = SubstitutionRequest {
            phrase: &phrase,
            db_id: &example.db_id,
            question: &example.question,
            span,
        };
        let mut candidates: Vec<(String, &'static str)> = Vec::new();
        for provider in providers {
            if candidates.len() >= config.candidates_per_span {
                break;
            }
            match provider.candidates(&request) {
                Ok(list) => {
                    for candidate in list {
                        if candidates.len() >= config.candidates_per_span {
                            break;
                        }
                        candidates.push((candidate, provider.name()));
                    }
                }
                Err(_) => continue, // provider errors skip that provider
            }
        }

        let target = linked
            .tags
            .iter()
            .find(|t| t.span == span)
            .map(|t| t.target.clone())
            .expect("span came from a tag");
        let mut wedge: Option<Edit> = None;
        for (candidate, provider_name) in candidates {
            let edit = Edit {
                span,
                original: linked.span_text(span),
                replacement: candidate,
                target: target.clone(),
                provider: provider_name.to_string(),
                truncated: false,
            };
            let mut trial_plan = SubstitutionPlan {
                edits: committed.iter().cloned().chain([edit.clone()]).collect(),
            };
            trial_plan.edits.sort_by_key(|e| e.span);
            let Ok(trial) = apply_plan(example, &trial_plan) else {
                continue;
            };
            let prediction = match handle.predict(&example.db_id, &trial.perturbed_question, schema)
            {
                Ok(p) => p,
                Err(_) => continue, // transport errors skip that candidate
            };
            queries_used += 1;
            let matches = prediction.map(|q| exact_match(&q, &gold)).unwrap_or(false);
            tried.push(TriedVariant {
                question: trial.perturbed_question.clone(),
                exact_match: matches,
            });
            if !matches {
                // Fresh re-verification guards against nondeterminism.
                let reverify = handle.predict(&example.db_id, &trial.perturbed_question, schema)?;
                queries_used += 1;
                let verified = !reverify.map(|q| exact_match(&q, &gold)).unwrap_or(false);
                return Ok(AttackResult {
                    status: AttackStatus::Success,
                    final_question: trial.perturbed_question,
                    plan: trial_plan,
                    queries_used,
                    verified,
                    tried,
                });
            }
            if wedge.is_none() {
                wedge = Some(edit);
            }
        }
        if let Some(edit) = wedge {
            committed.push(edit);
        }
    }

    Ok(AttackResult {
        status: AttackStatus::Failed,
        final_question: example.question.clone(),
        plan: SubstitutionPlan::default(),
        queries_used,
        verified: true,
        tried,
    })
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    /// Successes over attackable examples; 0.0 when nothing was attackable.
    pub success_rate: f64,
    pub n: usize,
    pub attackable: usize,
    pub successes: usize,
    pub pre_failed: usize,
    /// Successes whose re-verification disagreed: nondeterministic
    /// predictor behavior, surfaced for audit.
    pub unverified_successes: usize,
    /// Mean attack-loop queries over attackable examples.
    pub mean_queries: f64,
    pub errors: Vec<CampaignError>,
    pub per_example: Vec<PerExampleAttack>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignError {
    pub id: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerExampleAttack {
    pub id: usize,
    pub success: bool,
    pub queries_used: usize,
    pub edits: Vec<Edit>,
}

/// Attack a whole dataset: per example, the successful perturbed question or
/// the original when the attack fails. The campaign completes on partial
/// failure; per-example errors aggregate into the report.
pub fn generate_worstcase_set(
    handle: &PredictorHandle,
    dataset: &[Example],
    schemas: &SchemaSet,
    providers: &[&dyn SynonymProvider],
    config: &AttackConfig,
    jobs: usize,
) -> (Vec<Example>, Vec<AttackResult>, CampaignReport) {
    let jobs = jobs.min(handle.max_in_flight).max(1);
    let outcomes = parallel_map_indexed(dataset.len(), jobs, |index| {
        let example = &dataset[index];
        match schemas.get(&example.db_id) {
            Some(schema) => attack_example(handle, example, schema, providers, config)
                .map_err(|e| e.to_string()),
            None => Err(format!("no schema for database {:?}", example.db_id)),
        }
    });

    let mut outputs = Vec::with_capacity(dataset.len());
    let mut results = Vec::with_capacity(dataset.len());
    let mut errors = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let example = &dataset[index];
        let result = match outcome {
            Ok(result) => result,
            Err(message) => {
                errors.push(CampaignError { id: index, message });
                AttackResult::not_attacked(AttackStatus::Failed, &example.question)
            }
        };
        outputs.push(Example {
            db_id: example.db_id.clone(),
            question: result.final_question.clone(),
            query: example.query.clone(),
        });
        results.push(result);
    }

    let attackable = results
        .iter()
        .filter(|r| r.status != AttackStatus::PreFailed)
        .count();
    let successes = results.iter().filter(|r| r.success()).count();
    let pre_failed = results.len() - attackable;
    let unverified_successes = results
        .iter()
        .filter(|r| r.success() && !r.verified)
        .count();
    let total_queries: usize = results
        .iter()
        .filter(|r| r.status != AttackStatus::PreFailed)
        .map(|r| r.queries_used)
        .sum();
    let report = CampaignReport {
        success_rate: if attackable == 0 {
            0.0
        } else {
            successes as f64 / attackable as f64
        },
        n: dataset.len(),
        attackable,
        successes,
        pre_failed,
        unverified_successes,
        mean_queries: if attackable == 0 {
            0.0
        } else {
            total_queries as f64 / attackable as f64
        },
        errors,
        per_example: results
            .iter()
            .enumerate()
            .map(|(id, r)| PerExampleAttack {
                id,
                success: r.success(),
                queries_used: r.queries_used,
                edits: r.plan.edits.clone(),
            })
            .collect(),
    };
    (outputs, results, report)
}

/// Merge the original training set with successful adversarial examples,
/// dropping rows whose (db_id, question) already appears.
pub fn adversarial_augment(original: &[Example], results: &[AttackResult]) -> Vec<Example> {
    let mut seen: std::collections::BTreeSet<(String, String)> = original
        .iter()
        .map(|e| (e.db_id.clone(), e.question.clone()))
        .collect();
    let mut out = original.to_vec();
    for (example, result) in original.iter().zip(results) {
        if !result.success() {
            continue;
        }
        let key = (example.db_id.clone(), result.final_question.clone());
        if seen.insert(key) {
            out.push(Example {
                db_id: example.db_id.clone(),
                question: result.final_question.clone(),
                query: example.query.clone(),
            });
        }
    }
    out
}
