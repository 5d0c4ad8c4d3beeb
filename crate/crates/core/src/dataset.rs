//! Spider-format dataset ingestion, paired-dataset difference statistics,
//! and per-domain substitution reports.
//!
//! Differences are recovered by token-level longest-common-subsequence
//! alignment, so edits can be audited in third-party data without access to
//! the generator's plan. Per-pair alignment is independent; stats merging
//! is associative addition.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{link, LinkKind};
use crate::schema::SchemaSet;
use crate::text::{normalize_phrase, tokenize};

/// One dataset row: a question and its gold SQL text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub db_id: String,
    pub question: String,
    pub query: String,
}

/// Load a JSON array of {db_id, question, query}; unknown fields are
/// ignored so real Spider files load as-is. Malformed rows are reported
/// with their index.
pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_examples(&data).map_err(|e| match e {
        Error::FileParse { message, .. } => Error::file_parse(path, message),
        other => other,
    })
}

pub fn parse_examples(data: &str) -> Result<Vec<Example>> {
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(data).map_err(|e| Error::file_parse("<memory>", e.to_string()))?;
    let mut examples = Vec::with_capacity(rows.len());
    for (index, row) in rows.into_iter().enumerate() {
        let example: Example = serde_json::from_value(row)
            .map_err(|e| Error::file_parse("<memory>", format!("row {index}: {e}")))?;
        examples.push(example);
    }
    Ok(examples)
}

pub fn write_examples(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let data = serde_json::to_string_pretty(examples).expect("examples serialize");
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Token alignment
// ---------------------------------------------------------------------------

/// One contiguous difference between an original and a modified question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EditSpan {
    /// Token span in the original, end exclusive; empty for insertions.
    pub original_span: (usize, usize),
    pub original: String,
    pub replacement: String,
}

/// Classification of one edit against the original question's linking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EditClass {
    SchemaWord,
    CellValue,
    Unclassified,
}

/// Longest common subsequence over case-normalized tokens; returns matched
/// index pairs in order.
fn lcs_pairs(a: &[String], b: &[String]) -> Vec<(usize, usize)> {
    let n = a.len();
    let m = b.len();
    let mut table = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if table[i + 1][j] >= table[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

/// Align one question pair and return its contiguous edit spans.
pub fn align_edits(original: &str, modified: &str) -> Vec<EditSpan> {
    let orig_tokens = tokenize(original);
    let mod_tokens = tokenize(modified);
    let orig_lower: Vec<String> = orig_tokens.iter().map(|t| t.to_lowercase()).collect();
    let mod_lower: Vec<String> = mod_tokens.iter().map(|t| t.to_lowercase()).collect();

    let pairs = lcs_pairs(&orig_lower, &mod_lower);
    let mut edits = Vec::new();
    let mut prev = (0usize, 0usize);
    let mut boundaries: Vec<(usize, usize)> = pairs.clone();
    boundaries.push((orig_tokens.len(), mod_tokens.len()));
    for (oi, mi) in boundaries {
        if oi > prev.0 || mi > prev.1 {
            edits.push(EditSpan {
                original_span: (prev.0, oi),
                original: orig_tokens[prev.0..oi].join(" "),
                replacement: mod_tokens[prev.1..mi].join(" "),
            });
        }
        prev = (oi + 1, mi + 1);
    }
    edits
}

// ---------------------------------------------------------------------------
// Diff statistics
// ---------------------------------------------------------------------------

/// Corpus-level difference statistics between two aligned datasets.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiffStats {
    pub corpus_size: usize,
    /// Questions that differ at all.
    pub modified_count: usize,
    /// Edit spans classified as schema-item words.
    pub schema_word_mods: usize,
    /// Edit spans classified as cell-value words.
    pub cell_value_mods: usize,
    /// Edit spans matching neither; surfaced, never dropped.
    pub unclassified_mods: usize,
    /// Distinct single-token replacement strings.
    pub distinct_replacement_words: usize,
    /// Distinct multi-token replacement strings.
    pub distinct_replacement_phrases: usize,
    /// Distinct original words or phrases that were replaced.
    pub distinct_modified_phrases: usize,
    /// Edit spans per question, averaged over the whole corpus.
    pub mean_changes_per_question: f64,
    /// Mean distinct modified original phrases per domain.
    pub per_domain_mean_modified_phrases: f64,
}

/// Align two corpora pairwise and compute difference statistics. Inputs
/// must be equal length and aligned by index with matching db_ids.
pub fn diff_stats(
    original: &[Example],
    modified: &[Example],
    schemas: &SchemaSet,
) -> Result<DiffStats> {
    let pairs = aligned_pairs(original, modified)?;

    let mut stats = DiffStats {
        corpus_size: original.len(),
        ..DiffStats::default()
    };
    let mut total_edits = 0usize;
    let mut replacements: BTreeSet<String> = BTreeSet::new();
    let mut originals_replaced: BTreeSet<String> = BTreeSet::new();
    let mut per_domain: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();

    for (orig, modif) in &pairs {
        let edits = align_edits(&orig.question, &modif.question);
        if edits.is_empty() {
            continue;
        }
        stats.modified_count += 1;
        total_edits += edits.len();
        let classes = classify_edits(orig, &edits, schemas);
        for (edit, class) in edits.iter().zip(classes) {
            match class {
                EditClass::SchemaWord => stats.schema_word_mods += 1,
                EditClass::CellValue => stats.cell_value_mods += 1,
                EditClass::Unclassified => stats.unclassified_mods += 1,
            }
            let replacement_norm = normalize_phrase(&edit.replacement).join(" ");
            if !replacement_norm.is_empty() {
                replacements.insert(replacement_norm);
            }
            let original_norm = normalize_phrase(&edit.original).join(" ");
            if !original_norm.is_empty() {
                originals_replaced.insert(original_norm.clone());
                per_domain
                    .entry(orig.db_id.as_str())
                    .or_default()
                    .insert(original_norm);
            }
        }
    }

    stats.distinct_replacement_words = replacements
        .iter()
        .filter(|r| r.split(' ').count() == 1)
        .count();
    stats.distinct_replacement_phrases = replacements
        .iter()
        .filter(|r| r.split(' ').count() > 1)
        .count();
    stats.distinct_modified_phrases = originals_replaced.len();
    stats.mean_changes_per_question = if original.is_empty() {
        0.0
    } else {
        total_edits as f64 / original.len() as f64
    };
    stats.per_domain_mean_modified_phrases = if per_domain.is_empty() {
        0.0
    } else {
        per_domain.values().map(|s| s.len()).sum::<usize>() as f64 / per_domain.len() as f64
    };
    Ok(stats)
}

fn aligned_pairs<'a>(
    original: &'a [Example],
    modified: &'a [Example],
) -> Result<Vec<(&'a Example, &'a Example)>> {
    if original.len() != modified.len() {
        return Err(Error::InvalidInput(format!(
            "corpora have different sizes: {} vs {}",
            original.len(),
            modified.len()
        )));
    }
    for (index, (orig, modif)) in original.iter().zip(modified).enumerate() {
        if orig.db_id != modif.db_id {
            return Err(Error::InvalidInput(format!(
                "row {index}: db_id mismatch {:?} vs {:?}",
                orig.db_id, modif.db_id
            )));
        }
    }
    Ok(original.iter().zip(modified).collect())
}

/// Classify each edit by what the original span was linked to: schema word,
/// cell value, or unclassified. Every edit is counted exactly once.
fn classify_edits(original: &Example, edits: &[EditSpan], schemas: &SchemaSet) -> Vec<EditClass> {
    let Some(schema) = schemas.get(&original.db_id) else {
        return vec![EditClass::Unclassified; edits.len()];
    };
    let linked = link(&original.question, schema);
    edits
        .iter()
        .map(|edit| {
            let (start, end) = edit.original_span;
            let mut best: Option<(usize, EditClass)> = None;
            for tag in &linked.tags {
                let overlap_start = tag.span.0.max(start);
                let overlap_end = tag.span.1.min(end);
                if overlap_start >= overlap_end {
                    continue;
                }
                let overlap = overlap_end - overlap_start;
                let class = if tag.kind == LinkKind::CellValue {
                    EditClass::CellValue
                } else {
                    EditClass::SchemaWord
                };
                let better = match best {
                    None => true,
                    Some((best_overlap, best_class)) => {
                        overlap > best_overlap || (overlap == best_overlap && class < best_class)
                    }
                };
                if better {
                    best = Some((overlap, class));
                }
            }
            best.map(|(_, class)| class)
                .unwrap_or(EditClass::Unclassified)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Substitution report
// ---------------------------------------------------------------------------

/// Per-domain deduplicated substitution pairs with occurrence counts; no
/// question text included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubstitutionReport {
    pub domains: BTreeMap<String, Vec<ReportEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportEntry {
    pub original: String,
    pub replacement: String,
    pub count: usize,
}

impl SubstitutionReport {
    /// All distinct (original, replacement) pairs across domains.
    pub fn distinct_pairs(&self) -> BTreeSet<(String, String)> {
        self.domains
            .values()
            .flatten()
            .map(|e| (e.original.clone(), e.replacement.clone()))
            .collect()
    }

    /// Human-readable text table, one domain per section.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (db_id, entries) in &self.domains {
            out.push_str(&format!("domain: {db_id}\n"));
            let width = entries
                .iter()
                .map(|e| e.original.len())
                .max()
                .unwrap_or(0)
                .max("original".len());
            out.push_str(&format!(
                "  {:width$}  ->  replacement (count)\n",
                "original"
            ));
            for entry in entries {
                out.push_str(&format!(
                    "  {:width$}  ->  {} ({})\n",
                    entry.original, entry.replacement, entry.count
                ));
            }
        }
        out
    }
}

/// Extract all synonym substitutions as a per-domain report, without the
/// questions. Pairs appear once each with occurrence counts attached.
pub fn substitution_report(
    original: &[Example],
    modified: &[Example],
    _schemas: &SchemaSet,
) -> Result<SubstitutionReport> {
    let pairs = aligned_pairs(original, modified)?;
    let mut counts: BTreeMap<String, BTreeMap<(String, String), usize>> = BTreeMap::new();
    for (orig, modif) in pairs {
        for edit in align_edits(&orig.question, &modif.question) {
            let original_norm = normalize_phrase(&edit.original).join(" ");
            let replacement_norm = normalize_phrase(&edit.replacement).join(" ");
            if original_norm.is_empty() && replacement_norm.is_empty() {
                continue;
            }
            *counts
                .entry(orig.db_id.clone())
                .or_default()
                .entry((original_norm, replacement_norm))
                .or_insert(0) += 1;
        }
    }
    Ok(SubstitutionReport {
        domains: counts
            .into_iter()
            .map(|(db_id, pairs)| {
                (
                    db_id,
                    pairs
                        .into_iter()
                        .map(|((original, replacement), count)| ReportEntry {
                            original,
                            replacement,
                            count,
                        })
                        .collect(),
                )
            })
            .collect(),
    })
}

/// Shared (original -> replacement) pairs between two reports, and the
/// shared count as a fraction of the second report's distinct pairs.
pub fn split_overlap(train: &SubstitutionReport, dev: &SubstitutionReport) -> (usize, f64) {
    let train_pairs = train.distinct_pairs();
    let dev_pairs = dev.distinct_pairs();
    let shared = dev_pairs.intersection(&train_pairs).count();
    let fraction = if dev_pairs.is_empty() {
        0.0
    } else {
        shared as f64 / dev_pairs.len() as f64
    };
    (shared, fraction)
}
