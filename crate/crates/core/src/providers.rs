//! Substitution candidates from three sources: curated per-domain lexicons,
//! embedding nearest neighbors, and an external contextual proposer fed with
//! domain information.
//!
//! No provider ever emits a reserved word or the unmodified input phrase,
//! and outputs are deterministic given fixed inputs, tables, and stubs.
//! Lexicons and embedding tables are immutable after load and shareable.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::is_reserved_word;
use crate::schema::DatabaseSchema;
use crate::text::{normalize_phrase, normalize_phrase_str};

/// What a provider is asked about: one tagged span of one question.
#[derive(Debug, Clone)]
pub struct SubstitutionRequest<'a> {
    /// Normalized span text.
    pub phrase: &'a str,
    pub db_id: &'a str,
    /// The full question the span lives in.
    pub question: &'a str,
    /// Token span within the question.
    pub span: (usize, usize),
}

pub trait SynonymProvider: Send + Sync {
    /// Provenance label recorded in substitution plans.
    fn name(&self) -> &'static str;

    /// Ordered candidate list; empty when the provider has nothing.
    fn candidates(&self, request: &SubstitutionRequest) -> Result<Vec<String>>;
}

/// Drop reserved words and the original phrase, dedup preserving order.
fn filter_candidates(raw: impl IntoIterator<Item = String>, original: &str) -> Vec<String> {
    let original = normalize_phrase_str(original);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for candidate in raw {
        let normalized = normalize_phrase_str(&candidate);
        if normalized.is_empty() || normalized == original || is_reserved_word(&normalized) {
            continue;
        }
        if seen.insert(normalized) {
            out.push(candidate);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Curated lexicon
// ---------------------------------------------------------------------------

/// Phrase-to-replacements lexicon with global entries and per-database
/// entries that shadow them.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    global: BTreeMap<String, Vec<String>>,
    domains: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct LexiconFile {
    #[serde(default)]
    global: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    domains: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl SynonymLexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LexiconFile =
            serde_json::from_str(&data).map_err(|e| Error::file_parse(path, e.to_string()))?;
        Self::from_maps(file.global, file.domains)
    }

    pub fn from_maps(
        global: BTreeMap<String, Vec<String>>,
        domains: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    ) -> Result<Self> {
        let normalize_entries =
            |entries: BTreeMap<String, Vec<String>>| -> Result<BTreeMap<String, Vec<String>>> {
                let mut out = BTreeMap::new();
                for (key, values) in entries {
                    let key_norm = normalize_phrase_str(&key);
                    if key_norm.is_empty() {
                        return Err(Error::validation(format!(
                            "lexicon key {key:?} is empty after normalization"
                        )));
                    }
                    if is_reserved_word(&key_norm) {
                        return Err(Error::validation(format!(
                            "lexicon key {key:?} is a reserved word"
                        )));
                    }
                    for value in &values {
                        if normalize_phrase_str(value) == key_norm {
                            return Err(Error::validation(format!(
                                "lexicon entry {key:?} maps the phrase to itself"
                            )));
                        }
                    }
                    out.insert(key_norm, values);
                }
                Ok(out)
            };
        Ok(SynonymLexicon {
            global: normalize_entries(global)?,
            domains: domains
                .into_iter()
                .map(|(db, entries)| Ok((db, normalize_entries(entries)?)))
                .collect::<Result<_>>()?,
        })
    }

    /// Per-db entries shadow global entries in full; the lists never merge.
    /// Reserved phrases always come back empty.
    pub fn lookup(&self, phrase: &str, db_id: &str) -> Vec<String> {
        let key = normalize_phrase_str(phrase);
        if is_reserved_word(&key) {
            return Vec::new();
        }
        if let Some(domain) = self.domains.get(db_id) {
            if let Some(values) = domain.get(&key) {
                return values.clone();
            }
        }
        self.global.get(&key).cloned().unwrap_or_default()
    }

    /// Keys defined for a database, shadowing applied.
    pub fn keys_for(&self, db_id: &str) -> Vec<String> {
        let mut keys: Vec<String> = self.global.keys().cloned().collect();
        if let Some(domain) = self.domains.get(db_id) {
            keys.extend(domain.keys().cloned());
        }
        keys.sort();
        keys.dedup();
        keys
    }

    /// Authoring aid: replacement phrases containing a word outside the
    /// supplied common-word list. Advisory only; lookups never filter.
    pub fn uncommon_replacements<'a>(
        &'a self,
        common_words: &std::collections::HashSet<String>,
    ) -> Vec<(&'a str, &'a str)> {
        let mut flagged = Vec::new();
        let entries = self.global.iter().chain(self.domains.values().flatten());
        for (key, replacements) in entries {
            for replacement in replacements {
                let uncommon = normalize_phrase(replacement)
                    .iter()
                    .any(|w| !common_words.contains(w));
                if uncommon {
                    flagged.push((key.as_str(), replacement.as_str()));
                }
            }
        }
        flagged.sort();
        flagged.dedup();
        flagged
    }
}

pub struct LexiconProvider {
    lexicon: SynonymLexicon,
}

impl LexiconProvider {
    pub fn new(lexicon: SynonymLexicon) -> Self {
        LexiconProvider { lexicon }
    }
}

impl SynonymProvider for LexiconProvider {
    fn name(&self) -> &'static str {
        "lexicon"
    }

    fn candidates(&self, request: &SubstitutionRequest) -> Result<Vec<String>> {
        Ok(filter_candidates(
            self.lexicon.lookup(request.phrase, request.db_id),
            request.phrase,
        ))
    }
}

// ---------------------------------------------------------------------------
// Embedding nearest neighbors
// ---------------------------------------------------------------------------

/// Dense word vectors with cosine similarity. Loaded from the whitespace
/// text format ("word v1 ... vd" per line); lookups are case-normalized.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f32>>,
    norms: Vec<f64>,
    index: BTreeMap<String, usize>,
}

impl EmbeddingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&data).map_err(|e| match e {
            Error::Validation(msg) => Error::file_parse(path, msg),
            other => other,
        })
    }

    pub fn parse(data: &str) -> Result<Self> {
        let mut table = EmbeddingTable {
            dim: 0,
            words: Vec::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
            index: BTreeMap::new(),
        };
        for (line_no, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts
                .next()
                .ok_or_else(|| Error::validation(format!("line {}: empty", line_no + 1)))?
                .to_lowercase();
            let vector: Vec<f32> = parts
                .map(|p| {
                    p.parse::<f32>().map_err(|_| {
                        Error::validation(format!("line {}: bad float {p:?}", line_no + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if vector.is_empty() {
                return Err(Error::validation(format!(
                    "line {}: word {word:?} has no vector",
                    line_no + 1
                )));
            }
            if table.dim == 0 {
                table.dim = vector.len();
            } else if vector.len() != table.dim {
                return Err(Error::validation(format!(
                    "line {}: dimension {} does not match table dimension {}",
                    line_no + 1,
                    vector.len(),
                    table.dim
                )));
            }
            if table.index.contains_key(&word) {
                continue; // first occurrence wins
            }
            let norm = vector
                .iter()
                .map(|v| (*v as f64) * (*v as f64))
                .sum::<f64>()
                .sqrt();
            table.index.insert(word.clone(), table.words.len());
            table.words.push(word);
            table.vectors.push(vector);
            table.norms.push(norm);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    fn cosine(&self, a: usize, b: usize) -> f64 {
        let denom = self.norms[a] * self.norms[b];
        if denom == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.vectors[a]
            .iter()
            .zip(&self.vectors[b])
            .map(|(x, y)| (*x as f64) * (*y as f64))
            .sum();
        dot / denom
    }

    /// Up to k in-vocabulary neighbors by descending cosine similarity,
    /// excluding the word itself and reserved words. Ties break
    /// lexicographically. Out-of-vocabulary words yield an empty list.
    pub fn neighbors(&self, word: &str, k: usize, min_similarity: f64) -> Vec<(String, f64)> {
        let word = word.to_lowercase();
        let Some(&target) = self.index.get(&word) else {
            return Vec::new();
        };
        let mut scored: Vec<(String, f64)> = (0..self.words.len())
            .filter(|&i| i != target && !is_reserved_word(&self.words[i]))
            .map(|i| (self.words[i].clone(), self.cosine(target, i)))
            .filter(|(_, sim)| *sim >= min_similarity)
            .collect();
        scored.sort_by(|(wa, sa), (wb, sb)| sb.total_cmp(sa).then_with(|| wa.cmp(wb)));
        scored.truncate(k);
        scored
    }
}

/// Single-word substitution from embedding neighbors. Multi-word phrases
/// are the lexicon's business; this provider skips them.
pub struct EmbeddingProvider {
    table: EmbeddingTable,
    k: usize,
    min_similarity: f64,
    misses: AtomicUsize,
}

impl EmbeddingProvider {
    pub fn new(table: EmbeddingTable, k: usize, min_similarity: f64) -> Self {
        EmbeddingProvider {
            table,
            k,
            min_similarity,
            misses: AtomicUsize::new(0),
        }
    }

    /// Out-of-vocabulary lookups observed so far; reported, not errored.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl SynonymProvider for EmbeddingProvider {
    fn name(&self) -> &'static str {
        "embedding"
    }

    fn candidates(&self, request: &SubstitutionRequest) -> Result<Vec<String>> {
        let tokens = normalize_phrase(request.phrase);
        if tokens.len() != 1 {
            return Ok(Vec::new());
        }
        let word = &tokens[0];
        if !self.table.contains(word) {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return Ok(Vec::new());
        }
        let raw = self
            .table
            .neighbors(word, self.k, self.min_similarity)
            .into_iter()
            .map(|(w, _)| w);
        Ok(filter_candidates(raw, request.phrase))
    }
}

// ---------------------------------------------------------------------------
// Domain context for the contextual proposer
// ---------------------------------------------------------------------------

/// Sentences from the same database used as domain information; every
/// sentence contains the target phrase or at least one other schema-item
/// phrase of the domain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DomainContext {
    pub sentences: Vec<String>,
}

/// Pick up to n questions from the target database, prioritized by
/// containing the target phrase, then by how many distinct other schema
/// phrases they mention, then shorter first. The question being perturbed
/// is never included.
pub fn build_domain_context<'a>(
    target_phrase: &str,
    db_id: &str,
    schema: &DatabaseSchema,
    pool: impl IntoIterator<Item = (&'a str, &'a str)>,
    n: usize,
    exclude_question: &str,
) -> DomainContext {
    if n == 0 {
        return DomainContext::default();
    }
    let target = normalize_phrase_str(target_phrase);

    let mut schema_phrases: Vec<String> = Vec::new();
    for table in &schema.tables {
        schema_phrases.extend(table.annotations.phrases().map(normalize_phrase_str));
    }
    for column in &schema.columns {
        if !column.is_star() {
            schema_phrases.extend(column.annotations.phrases().map(normalize_phrase_str));
        }
    }
    schema_phrases.sort();
    schema_phrases.dedup();

    // (has target, other-phrase count, length, original order, question)
    let mut ranked: Vec<(bool, usize, usize, usize, String)> = Vec::new();
    for (order, (pool_db, question)) in pool.into_iter().enumerate() {
        if pool_db != db_id || question == exclude_question {
            continue;
        }
        let normalized = format!(" {} ", normalize_phrase_str(question));
        let has_target = !target.is_empty() && normalized.contains(&format!(" {target} "));
        let other_phrases = schema_phrases
            .iter()
            .filter(|p| **p != target && normalized.contains(&format!(" {} ", p)))
            .count();
        if !has_target && other_phrases == 0 {
            continue;
        }
        ranked.push((
            has_target,
            other_phrases,
            question.len(),
            order,
            question.to_string(),
        ));
    }
    ranked.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| b.1.cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
            .then_with(|| a.3.cmp(&b.3))
    });
    DomainContext {
        sentences: ranked
            .into_iter()
            .take(n)
            .map(|(_, _, _, _, q)| q)
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Contextual proposer (external service or offline stub)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct ProposerRequest<'a> {
    id: u64,
    context: &'a [String],
    question: &'a str,
    mask_span: [usize; 2],
    top_k: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct ProposerResponse {
    id: u64,
    candidates: Vec<ProposerCandidate>,
}

#[derive(Debug, Clone, Deserialize)]
struct ProposerCandidate {
    phrase: String,
    #[serde(default)]
    #[allow(dead_code)]
    score: f64,
}

/// Where contextual candidates come from: a JSON-over-HTTP service or an
/// offline stub table keyed by normalized phrase.
#[derive(Debug, Clone)]
pub enum ProposerEndpoint {
    Http { url: String, timeout: Duration },
    Stub(BTreeMap<String, Vec<String>>),
}

static REQUEST_IDS: AtomicU64 = AtomicU64::new(1);

/// Query the proposer for one masked span, context sentences prepended to
/// the request exactly as the wire contract specifies. Responses are matched
/// to requests by id, never by arrival order. Transport and protocol errors
/// abort this one candidate request, not the campaign.
pub fn contextual_candidates(
    question: &str,
    span: (usize, usize),
    phrase: &str,
    context: &DomainContext,
    endpoint: &ProposerEndpoint,
    top_k: usize,
) -> Result<Vec<String>> {
    let raw: Vec<String> = match endpoint {
        ProposerEndpoint::Stub(table) => table
            .get(&normalize_phrase_str(phrase))
            .cloned()
            .unwrap_or_default(),
        ProposerEndpoint::Http { url, timeout } => {
            let id = REQUEST_IDS.fetch_add(1, Ordering::Relaxed);
            let request = ProposerRequest {
                id,
                context: &context.sentences,
                question,
                mask_span: [span.0, span.1],
                top_k,
            };
            let body = serde_json::to_string(&request).expect("request serializes");
            let response_text = crate::net::http_post_json(url, "", &body, *timeout)?;
            let response: ProposerResponse = serde_json::from_str(&response_text)
                .map_err(|e| Error::Protocol(format!("malformed proposer response: {e}")))?;
            if response.id != id {
                return Err(Error::Protocol(format!(
                    "response id {} does not match request id {id}",
                    response.id
                )));
            }
            response.candidates.into_iter().map(|c| c.phrase).collect()
        }
    };
    Ok(filter_candidates(
        raw.into_iter().take(top_k.max(1)),
        phrase,
    ))
}

/// Contextual provider: builds domain context from an example pool, then
/// asks the endpoint.
pub struct ContextualProvider {
    endpoint: ProposerEndpoint,
    /// (db_id, question) pool the domain context is drawn from.
    pool: Vec<(String, String)>,
    schemas: crate::schema::SchemaSet,
    /// Context sentences per request.
    pub context_sentences: usize,
    pub top_k: usize,
}

/// Context sentence count used when a config does not say otherwise.
pub const DEFAULT_CONTEXT_SENTENCES: usize = 3;

impl ContextualProvider {
    pub fn new(
        endpoint: ProposerEndpoint,
        pool: Vec<(String, String)>,
        schemas: crate::schema::SchemaSet,
        context_sentences: usize,
        top_k: usize,
    ) -> Self {
        ContextualProvider {
            endpoint,
            pool,
            schemas,
            context_sentences,
            top_k,
        }
    }
}

impl SynonymProvider for ContextualProvider {
    fn name(&self) -> &'static str {
        "contextual"
    }

    fn candidates(&self, request: &SubstitutionRequest) -> Result<Vec<String>> {
        let Some(schema) = self.schemas.get(request.db_id) else {
            return Ok(Vec::new());
        };
        let context = build_domain_context(
            request.phrase,
            request.db_id,
            schema,
            self.pool.iter().map(|(d, q)| (d.as_str(), q.as_str())),
            self.context_sentences,
            request.question,
        );
        contextual_candidates(
            request.question,
            request.span,
            request.phrase,
            &context,
            &self.endpoint,
            self.top_k,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schemas;

    fn lexicon() -> SynonymLexicon {
        let mut global = BTreeMap::new();
        global.insert("location".to_string(), vec!["place".to_string()]);
        global.insert("phone".to_string(), vec!["telephone".to_string()]);
        let mut aviation = BTreeMap::new();
        aviation.insert("flight number".to_string(), vec!["flight code".to_string()]);
        let mut hire = BTreeMap::new();
        hire.insert("location".to_string(), vec!["city".to_string()]);
        let mut domains = BTreeMap::new();
        domains.insert("flights".to_string(), aviation);
        domains.insert("employee_hire_evaluation".to_string(), hire);
        SynonymLexicon::from_maps(global, domains).unwrap()
    }

    #[test]
    fn domain_entries_shadow_global() {
        let lex = lexicon();
        assert_eq!(lex.lookup("flight number", "flights"), vec!["flight code"]);
        assert_eq!(
            lex.lookup("location", "employee_hire_evaluation"),
            vec!["city"]
        );
        // No merge with the global list once shadowed.
        assert_eq!(lex.lookup("location", "other_db"), vec!["place"]);
    }

    #[test]
    fn reserved_words_never_resolve() {
        let lex = lexicon();
        assert!(lex.lookup("name", "flights").is_empty());
        assert!(lex.lookup("id", "anything").is_empty());
    }

    #[test]
    fn uncommon_replacements_flags_rare_words() {
        let lex = lexicon();
        let common: std::collections::HashSet<String> = ["place", "city", "flight", "code"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let flagged = lex.uncommon_replacements(&common);
        // "telephone" is outside the list; the others are covered.
        assert_eq!(flagged, vec![("phone", "telephone")]);
    }

    #[test]
    fn lexicon_validation_rejects_bad_entries() {
        let mut global = BTreeMap::new();
        global.insert("name".to_string(), vec!["title".to_string()]);
        assert!(SynonymLexicon::from_maps(global, BTreeMap::new()).is_err());

        let mut self_map = BTreeMap::new();
        self_map.insert("phone".to_string(), vec!["Phone".to_string()]);
        assert!(SynonymLexicon::from_maps(self_map, BTreeMap::new()).is_err());
    }

    #[test]
    fn embedding_neighbors_hand_computed() {
        // Three 2-d vectors: phone=(1,0), telephones=(0.9,0.1), banana=(0,1).
        // cos(phone, telephones) = 0.9/sqrt(0.82) ~= 0.99388
        // cos(phone, banana) = 0
        let table = EmbeddingTable::parse("phone 1 0\ntelephones 0.9 0.1\nbanana 0 1\n").unwrap();
        let neighbors = table.neighbors("phone", 1, 0.0);
        assert_eq!(neighbors.len(), 1);
        assert_eq!(neighbors[0].0, "telephones");
        let expected = 0.9 / (0.82f64).sqrt();
        assert!((neighbors[0].1 - expected).abs() < 1e-6);
    }

    #[test]
    fn neighbors_never_contain_the_word_itself() {
        let table = EmbeddingTable::parse("a 1 0\nb 1 0\nc 0 1\n").unwrap();
        for word in ["a", "b", "c"] {
            assert!(table
                .neighbors(word, 10, 0.0)
                .iter()
                .all(|(w, _)| w != word));
        }
    }

    #[test]
    fn neighbors_tie_break_lexicographically() {
        let table = EmbeddingTable::parse("x 1 0\nzed 1 0\napple 1 0\n").unwrap();
        let neighbors = table.neighbors("x", 2, 0.0);
        assert_eq!(neighbors[0].0, "apple");
        assert_eq!(neighbors[1].0, "zed");
    }

    #[test]
    fn out_of_vocabulary_is_empty_and_counted() {
        let table = EmbeddingTable::parse("a 1 0\n").unwrap();
        let provider = EmbeddingProvider::new(table, 5, 0.0);
        let request = SubstitutionRequest {
            phrase: "missing",
            db_id: "db",
            question: "missing word",
            span: (0, 1),
        };
        assert!(provider.candidates(&request).unwrap().is_empty());
        assert_eq!(provider.misses(), 1);
    }

    #[test]
    fn embedding_table_rejects_dimension_mismatch() {
        assert!(EmbeddingTable::parse("a 1 0\nb 1 0 3\n").is_err());
    }

    #[test]
    fn min_similarity_filters() {
        let table = EmbeddingTable::parse("phone 1 0\ntelephones 0.9 0.1\nbanana 0 1\n").unwrap();
        let neighbors = table.neighbors("phone", 10, 0.5);
        assert_eq!(neighbors.len(), 1);
        assert_eq!(neighbors[0].0, "telephones");
    }

    fn department_schema() -> DatabaseSchema {
        parse_schemas(
            r#"[
              {
                "db_id": "department_management",
                "table_names_original": ["department", "head"],
                "table_names": ["department", "head"],
                "column_names_original": [[-1, "*"], [0, "budget"], [1, "head"]],
                "column_names": [[-1, "*"], [0, "budget"], [1, "head"]],
                "column_types": ["text", "number", "text"],
                "primary_keys": [],
                "foreign_keys": []
              }
            ]"#,
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn domain_context_prioritizes_target_mentions() {
        let schema = department_schema();
        let pool = [
            ("department_management", "List all budgets"),
            (
                "department_management",
                "Give me the info of heads whose name is Mike in each department",
            ),
            ("other_db", "Show the head of something"),
        ];
        let context = build_domain_context(
            "head",
            "department_management",
            &schema,
            pool.iter().map(|(d, q)| (*d, *q)),
            3,
            "Who is the head?",
        );
        assert_eq!(
            context.sentences[0],
            "Give me the info of heads whose name is Mike in each department"
        );
        // Wrong-db questions never appear.
        assert!(!context.sentences.iter().any(|s| s.contains("something")));
    }

    #[test]
    fn domain_context_n_zero_and_self_exclusion() {
        let schema = department_schema();
        let pool = [("department_management", "What is the budget?")];
        let empty = build_domain_context(
            "budget",
            "department_management",
            &schema,
            pool.iter().map(|(d, q)| (*d, *q)),
            0,
            "other",
        );
        assert!(empty.sentences.is_empty());

        let only_self = build_domain_context(
            "budget",
            "department_management",
            &schema,
            pool.iter().map(|(d, q)| (*d, *q)),
            3,
            "What is the budget?",
        );
        assert!(only_self.sentences.is_empty());
    }

    #[test]
    fn stub_candidates_are_filtered() {
        let mut stub = BTreeMap::new();
        stub.insert(
            "head".to_string(),
            vec![
                "chief".to_string(),
                "head".to_string(),
                "name".to_string(),
                "leader".to_string(),
            ],
        );
        let endpoint = ProposerEndpoint::Stub(stub);
        let out = contextual_candidates(
            "Who is the head of the department?",
            (3, 4),
            "head",
            &DomainContext::default(),
            &endpoint,
            10,
        )
        .unwrap();
        assert_eq!(out, vec!["chief", "leader"]);
    }

    #[test]
    fn stub_returning_only_the_original_yields_empty() {
        let mut stub = BTreeMap::new();
        stub.insert("head".to_string(), vec!["head".to_string()]);
        let out = contextual_candidates(
            "the head",
            (1, 2),
            "head",
            &DomainContext::default(),
            &ProposerEndpoint::Stub(stub),
            10,
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn http_proposer_round_trip_and_id_check() {
        let url = crate::net::test_server::spawn(|body| {
            let request: serde_json::Value = serde_json::from_str(&body).unwrap();
            assert!(request["context"].is_array());
            assert_eq!(request["mask_span"][0], 3);
            serde_json::json!({
                "id": request["id"],
                "candidates": [
                    {"phrase": "chief", "score": 0.9},
                    {"phrase": "boss", "score": 0.7}
                ]
            })
            .to_string()
        });
        let out = contextual_candidates(
            "Who is the head of it?",
            (3, 4),
            "head",
            &DomainContext {
                sentences: vec!["Heads run departments".to_string()],
            },
            &ProposerEndpoint::Http {
                url,
                timeout: Duration::from_secs(5),
            },
            5,
        )
        .unwrap();
        assert_eq!(out, vec!["chief", "boss"]);
    }

    #[test]
    fn http_proposer_id_mismatch_is_protocol_error() {
        let url = crate::net::test_server::spawn(|_| {
            serde_json::json!({"id": 999_999_999u64, "candidates": []}).to_string()
        });
        let err = contextual_candidates(
            "the head",
            (1, 2),
            "head",
            &DomainContext::default(),
            &ProposerEndpoint::Http {
                url,
                timeout: Duration::from_secs(5),
            },
            5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn unreachable_proposer_is_transport_error() {
        let err = contextual_candidates(
            "the head",
            (1, 2),
            "head",
            &DomainContext::default(),
            &ProposerEndpoint::Http {
                url: "http://127.0.0.1:1".to_string(),
                timeout: Duration::from_millis(100),
            },
            5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
    }
}
