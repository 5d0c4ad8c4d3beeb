//! Lexical schema linking and multi-annotation selection (MAS).
//!
//! Linking matches question n-grams (length 5 down to 1) against every
//! annotation of every schema item and against stored cell-value samples.
//! It is exact lexical matching: synonymy is not linking. MAS then selects,
//! per schema item, whichever annotation appears in the question, falling
//! back to the default annotation.
//!
//! Everything here is pure; repeated calls agree.

use serde::Serialize;

use crate::schema::{ColumnId, DatabaseSchema, TableId};
use crate::text::{normalize_phrase, normalize_token, tokenize};

/// Longest n-gram considered; annotation phrases in Spider-style schemas
/// stay under this.
pub const MAX_NGRAM: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum LinkTarget {
    Table { table_id: usize },
    Column { column_id: usize },
    CellValue { column_id: usize, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    ExactTable,
    PartialTable,
    ExactColumn,
    PartialColumn,
    CellValue,
}

impl LinkKind {
    fn is_exact(&self) -> bool {
        !matches!(self, LinkKind::PartialTable | LinkKind::PartialColumn)
    }

    /// Table before column before cell value, for overlap resolution.
    fn target_rank(&self) -> u8 {
        match self {
            LinkKind::ExactTable | LinkKind::PartialTable => 0,
            LinkKind::ExactColumn | LinkKind::PartialColumn => 1,
            LinkKind::CellValue => 2,
        }
    }
}

/// A span of question tokens bound to a schema item or cell value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkTag {
    /// Token span, end exclusive.
    pub span: (usize, usize),
    #[serde(flatten)]
    pub target: LinkTarget,
    pub kind: LinkKind,
    pub matched_annotation: String,
}

/// Question tokens plus resolved, non-overlapping link tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkedQuestion {
    pub tokens: Vec<String>,
    pub tags: Vec<LinkTag>,
}

impl LinkedQuestion {
    /// Surface text of a tag's span.
    pub fn span_text(&self, span: (usize, usize)) -> String {
        self.tokens[span.0..span.1].join(" ")
    }

    /// Normalized text of a tag's span.
    pub fn span_normalized(&self, span: (usize, usize)) -> String {
        self.tokens[span.0..span.1]
            .iter()
            .map(|t| normalize_token(t))
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// All occurrences of `phrase` as a contiguous token window inside the
/// normalized question. Windows containing punctuation-only tokens never
/// match.
fn find_occurrences(normalized: &[String], phrase: &[String]) -> Vec<(usize, usize)> {
    if phrase.is_empty() || phrase.len() > normalized.len() {
        return Vec::new();
    }
    let mut spans = Vec::new();
    for start in 0..=(normalized.len() - phrase.len()) {
        let window = &normalized[start..start + phrase.len()];
        if window.iter().any(|t| t.is_empty()) {
            continue;
        }
        if window == phrase {
            spans.push((start, start + phrase.len()));
        }
    }
    spans
}

/// True when `shorter` occurs as a contiguous strict infix of `longer`.
fn strict_infix(shorter: &[String], longer: &[String]) -> bool {
    shorter.len() < longer.len()
        && longer
            .windows(shorter.len())
            .any(|window| window == shorter)
}

/// Link a question against a schema: n-grams of length 5 down to 1 are
/// matched against every annotation of every item and against cell-value
/// samples. Overlaps resolve by longer span, exact over partial, earlier
/// span, table before column, in that order.
pub fn link(question: &str, schema: &DatabaseSchema) -> LinkedQuestion {
    let tokens = tokenize(question);
    let normalized: Vec<String> = tokens.iter().map(|t| normalize_token(t)).collect();

    // (tag, item ordinal, annotation ordinal) for deterministic tie-breaks
    let mut candidates: Vec<(LinkTag, usize, usize)> = Vec::new();

    let max_n = MAX_NGRAM.min(tokens.len());
    for n in (1..=max_n).rev() {
        for start in 0..=(tokens.len() - n) {
            let window = &normalized[start..start + n];
            if window.iter().any(|t| t.is_empty()) {
                continue;
            }
            let span = (start, start + n);
            for table in &schema.tables {
                for (ai, phrase) in table.annotations.phrases().enumerate() {
                    let phrase_tokens = normalize_phrase(phrase);
                    if window == phrase_tokens.as_slice() {
                        candidates.push((
                            LinkTag {
                                span,
                                target: LinkTarget::Table {
                                    table_id: table.id.0,
                                },
                                kind: LinkKind::ExactTable,
                                matched_annotation: phrase.to_string(),
                            },
                            table.id.0,
                            ai,
                        ));
                    } else if strict_infix(window, &phrase_tokens) {
                        candidates.push((
                            LinkTag {
                                span,
                                target: LinkTarget::Table {
                                    table_id: table.id.0,
                                },
                                kind: LinkKind::PartialTable,
                                matched_annotation: phrase.to_string(),
                            },
                            table.id.0,
                            ai,
                        ));
                    }
                }
            }
            for column in &schema.columns {
                if column.is_star() {
                    continue;
                }
                for (ai, phrase) in column.annotations.phrases().enumerate() {
                    let phrase_tokens = normalize_phrase(phrase);
                    if window == phrase_tokens.as_slice() {
                        candidates.push((
                            LinkTag {
                                span,
                                target: LinkTarget::Column {
                                    column_id: column.id.0,
                                },
                                kind: LinkKind::ExactColumn,
                                matched_annotation: phrase.to_string(),
                            },
                            column.id.0,
                            ai,
                        ));
                    } else if strict_infix(window, &phrase_tokens) {
                        candidates.push((
                            LinkTag {
                                span,
                                target: LinkTarget::Column {
                                    column_id: column.id.0,
                                },
                                kind: LinkKind::PartialColumn,
                                matched_annotation: phrase.to_string(),
                            },
                            column.id.0,
                            ai,
                        ));
                    }
                }
                for (vi, value) in column.cell_values.iter().enumerate() {
                    let value_tokens = normalize_phrase(value);
                    if window == value_tokens.as_slice() {
                        candidates.push((
                            LinkTag {
                                span,
                                target: LinkTarget::CellValue {
                                    column_id: column.id.0,
                                    value: value.clone(),
                                },
                                kind: LinkKind::CellValue,
                                matched_annotation: value.clone(),
                            },
                            column.id.0,
                            vi,
                        ));
                    }
                }
            }
        }
    }

    // Longer span, exact over partial, earlier span, table before column.
    candidates.sort_by(|(a, a_item, a_ann), (b, b_item, b_ann)| {
        let a_len = a.span.1 - a.span.0;
        let b_len = b.span.1 - b.span.0;
        b_len
            .cmp(&a_len)
            .then_with(|| a.kind.is_exact().cmp(&b.kind.is_exact()).reverse())
            .then_with(|| a.span.0.cmp(&b.span.0))
            .then_with(|| a.kind.target_rank().cmp(&b.kind.target_rank()))
            .then_with(|| a_item.cmp(b_item))
            .then_with(|| a_ann.cmp(b_ann))
    });

    let mut occupied = vec![false; tokens.len()];
    let mut tags = Vec::new();
    for (tag, _, _) in candidates {
        if (tag.span.0..tag.span.1).any(|i| occupied[i]) {
            continue;
        }
        for slot in occupied.iter_mut().take(tag.span.1).skip(tag.span.0) {
            *slot = true;
        }
        tags.push(tag);
    }
    tags.sort_by_key(|t| t.span);

    LinkedQuestion { tokens, tags }
}

/// Two different schema items claimed overlapping spans under MAS; surfaced
/// for audit rather than resolved by guesswork.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MasCollision {
    pub span: (usize, usize),
    pub items: Vec<String>,
}

/// A schema with one selected annotation per item.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSchema {
    pub base: DatabaseSchema,
    /// Selected phrase per table, indexed by table id.
    pub table_choices: Vec<String>,
    /// Selected phrase per column, indexed by column id; "*" for the star.
    pub column_choices: Vec<String>,
    pub collisions: Vec<MasCollision>,
}

impl ResolvedSchema {
    pub fn selected_table(&self, id: TableId) -> &str {
        &self.table_choices[id.0]
    }

    pub fn selected_column(&self, id: ColumnId) -> &str {
        &self.column_choices[id.0]
    }

    /// Derived schema whose annotation sets are singletons holding the
    /// selected phrase. This is the schema a downstream predictor consumes:
    /// same shape, resolved surface forms.
    pub fn to_schema(&self) -> DatabaseSchema {
        let mut schema = self.base.clone();
        for table in &mut schema.tables {
            table.annotations =
                crate::schema::AnnotationSet::singleton(&self.table_choices[table.id.0]);
        }
        for column in &mut schema.columns {
            if !column.is_star() {
                column.annotations =
                    crate::schema::AnnotationSet::singleton(&self.column_choices[column.id.0]);
            }
        }
        schema
    }
}

/// Select, per schema item, the annotation with the longest occurrence in
/// the question; the default when none occurs. Ties break by annotation
/// list order, default first. Selection is independent across items.
pub fn mas_select(question: &str, schema: &DatabaseSchema) -> ResolvedSchema {
    let tokens = tokenize(question);
    let normalized: Vec<String> = tokens.iter().map(|t| normalize_token(t)).collect();

    // (item path, first occurrence span) for occurrence-driven selections.
    let mut claims: Vec<(String, (usize, usize))> = Vec::new();

    let mut select_item = |phrases: Vec<&str>, item_path: String| -> String {
        let mut best: Option<(usize, usize, &str, (usize, usize))> = None;
        for (index, phrase) in phrases.iter().enumerate() {
            let phrase_tokens = normalize_phrase(phrase);
            let occurrences = find_occurrences(&normalized, &phrase_tokens);
            if let Some(&span) = occurrences.first() {
                let len = phrase_tokens.len();
                let better = match &best {
                    None => true,
                    Some((best_len, best_index, _, _)) => {
                        len > *best_len || (len == *best_len && index < *best_index)
                    }
                };
                if better {
                    best = Some((len, index, phrase, span));
                }
            }
        }
        match best {
            Some((_, _, phrase, span)) => {
                claims.push((item_path, span));
                phrase.to_string()
            }
            None => phrases[0].to_string(),
        }
    };

    let table_choices: Vec<String> = schema
        .tables
        .iter()
        .map(|t| select_item(t.annotations.phrases().collect(), t.name.clone()))
        .collect();
    let column_choices: Vec<String> = schema
        .columns
        .iter()
        .map(|c| {
            if c.is_star() {
                "*".to_string()
            } else {
                let table = c
                    .table_id
                    .map(|t| schema.table(t).name.clone())
                    .unwrap_or_default();
                select_item(
                    c.annotations.phrases().collect(),
                    format!("{}.{}", table, c.name),
                )
            }
        })
        .collect();

    let mut collisions: Vec<MasCollision> = Vec::new();
    for (i, (item_a, span_a)) in claims.iter().enumerate() {
        let mut items = vec![item_a.clone()];
        for (item_b, span_b) in claims.iter().skip(i + 1) {
            if span_a.0 < span_b.1 && span_b.0 < span_a.1 {
                items.push(item_b.clone());
            }
        }
        if items.len() > 1 && !collisions.iter().any(|c| c.items.contains(item_a)) {
            collisions.push(MasCollision {
                span: *span_a,
                items,
            });
        }
    }

    ResolvedSchema {
        base: schema.clone(),
        table_choices,
        column_choices,
        collisions,
    }
}

/// Serialize a resolved schema as model input: the tables.json entry shape
/// with each item's surface name replaced by its selected annotation. With
/// all defaults selected this is byte-identical to the unresolved
/// serialization.
pub fn resolve_for_model(resolved: &ResolvedSchema) -> String {
    let entry = resolved.base.to_tables_entry_with(
        |t| resolved.table_choices[t.id.0].clone(),
        |c| resolved.column_choices[c.id.0].clone(),
    );
    serde_json::to_string(&entry).expect("schema entry serializes")
}
