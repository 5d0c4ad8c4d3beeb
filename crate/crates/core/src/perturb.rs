//! Synonym-substituted questions with the gold SQL guaranteed unchanged.
//!
//! Edits operate on token spans that carry schema-item or cell-value link
//! tags; reserved words are never touched, and the gold SQL text is copied
//! verbatim into every output. Per-example generation derives its seed from
//! the campaign seed and the example index, so parallel and serial runs
//! agree byte for byte.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::is_reserved_word;
use crate::link::{link, LinkTarget, LinkedQuestion};
use crate::providers::{SubstitutionRequest, SynonymProvider};
use crate::schema::SchemaSet;
use crate::text::{capitalize_first, detokenize, normalize_token, starts_uppercase, tokenize};
use crate::util::{derive_seed, parallel_map_indexed};

/// Replacement phrases longer than this are truncated and the truncation is
/// recorded for audit.
pub const MAX_REPLACEMENT_TOKENS: usize = 5;

/// One planned span substitution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edit {
    /// Token span in the original question, end exclusive.
    pub span: (usize, usize),
    pub original: String,
    pub replacement: String,
    /// What the span was linked to.
    #[serde(flatten)]
    pub target: LinkTarget,
    /// Which provider supplied the replacement.
    pub provider: String,
    /// Set when the replacement was cut down to the token cap.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

/// An auditable, ordered, non-overlapping list of edits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubstitutionPlan {
    pub edits: Vec<Edit>,
}

impl SubstitutionPlan {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// Spans must be in bounds, sorted, and non-overlapping, and no edit may
    /// touch a reserved-word token.
    pub fn validate(&self, tokens: &[String]) -> Result<()> {
        let mut last_end = 0usize;
        for edit in &self.edits {
            let (start, end) = edit.span;
            if start >= end || end > tokens.len() {
                return Err(Error::validation(format!(
                    "edit span {start}..{end} is out of bounds for {} tokens",
                    tokens.len()
                )));
            }
            if start < last_end {
                return Err(Error::validation(format!(
                    "edit span {start}..{end} overlaps an earlier edit"
                )));
            }
            last_end = end;
            for token in &tokens[start..end] {
                if is_reserved_word(&normalize_token(token)) {
                    return Err(Error::validation(format!(
                        "edit span {start}..{end} touches reserved word {token:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A question after substitution; the gold SQL is the original's, verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PerturbedExample {
    pub db_id: String,
    pub original_question: String,
    pub perturbed_question: String,
    /// Gold SQL text, byte-identical to the input example's.
    pub gold_query: String,
    pub plan: SubstitutionPlan,
}

/// Spans eligible for substitution: tagged with a schema item or cell value
/// and free of reserved-word tokens, sorted by position.
pub fn find_substitutable_spans(linked: &LinkedQuestion) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = linked
        .tags
        .iter()
        .filter(|tag| {
            linked.tokens[tag.span.0..tag.span.1]
                .iter()
                .all(|t| !is_reserved_word(&normalize_token(t)))
        })
        .map(|tag| tag.span)
        .collect();
    spans.sort();
    spans.dedup();
    spans
}

/// Plan at most `budget` edits. Spans are visited in seeded-uniform order;
/// for each the first provider (in configured order) with a candidate
/// supplies the replacement, taking its first candidate. Deterministic for
/// a fixed seed. Provider errors skip that provider, never the plan.
pub fn plan_substitutions(
    linked: &LinkedQuestion,
    example: &Example,
    providers: &[&dyn SynonymProvider],
    budget: usize,
    seed: u64,
) -> SubstitutionPlan {
    let mut plan = SubstitutionPlan::default();
    if budget == 0 {
        return plan;
    }
    let spans = find_substitutable_spans(linked);
    if spans.is_empty() {
        return plan;
    }

    let mut order: Vec<usize> = (0..spans.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates with the seeded generator.
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    for &span_index in &order {
        if plan.edits.len() >= budget {
            break;
        }
        let span = spans[span_index];
        let phrase = linked.span_normalized(span);
        if phrase.is_empty() {
            continue;
        }
        let request = SubstitutionRequest {
            phrase: &phrase,
            db_id: &example.db_id,
            // The raw question, so a contextual provider's domain pool can
            // exclude the question being perturbed by string equality.
            question: &example.question,
            span,
        };
        for provider in providers {
            let candidates = match provider.candidates(&request) {
                Ok(candidates) => candidates,
                Err(_) => continue, // one provider failing never kills the plan
            };
            if let Some(replacement) = candidates.first() {
                let tokens = tokenize(replacement);
                let truncated = tokens.len() > MAX_REPLACEMENT_TOKENS;
                let replacement = if truncated {
                    tokens[..MAX_REPLACEMENT_TOKENS].join(" ")
                } else {
                    replacement.clone()
                };
                let target = linked
                    .tags
                    .iter()
                    .find(|t| t.span == span)
                    .map(|t| t.target.clone())
                    .expect("span came from a tag");
                plan.edits.push(Edit {
                    span,
                    original: linked.span_text(span),
                    replacement,
                    target,
                    provider: provider.name().to_string(),
                    truncated,
                });
                break;
            }
        }
    }

    plan.edits.sort_by_key(|e| e.span);
    plan
}

/// Apply a plan to an example. Replacements run right to left so earlier
/// offsets stay valid; when a span opened the sentence, the replacement
/// keeps the capitalization. The gold SQL is copied untouched.
pub fn apply_plan(example: &Example, plan: &SubstitutionPlan) -> Result<PerturbedExample> {
    let tokens = tokenize(&example.question);
    plan.validate(&tokens)?;

    if plan.is_empty() {
        return Ok(PerturbedExample {
            db_id: example.db_id.clone(),
            original_question: example.question.clone(),
            perturbed_question: example.question.clone(),
            gold_query: example.query.clone(),
            plan: plan.clone(),
        });
    }

    let mut tokens = tokens;
    for edit in plan.edits.iter().rev() {
        let (start, end) = edit.span;
        let mut replacement_tokens = tokenize(&edit.replacement);
        if start == 0 && starts_uppercase(&tokens[0]) {
            if let Some(first) = replacement_tokens.first_mut() {
                *first = capitalize_first(first);
            }
        }
        tokens.splice(start..end, replacement_tokens);
    }

    Ok(PerturbedExample {
        db_id: example.db_id.clone(),
        original_question: example.question.clone(),
        perturbed_question: detokenize(&tokens),
        gold_query: example.query.clone(),
        plan: plan.clone(),
    })
}

/// Outcome of a dataset-scale run: one output per input, plus per-example
/// errors for inputs that could not be processed (those pass through
/// unchanged).
#[derive(Debug, Clone, Serialize)]
pub struct GenerationOutcome {
    pub examples: Vec<PerturbedExample>,
    pub errors: Vec<GenerationError>,
    pub seed: u64,
    pub budget: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationError {
    pub index: usize,
    pub message: String,
}

/// Perturb a whole dataset. Output size equals input size; questions whose
/// database is missing or whose spans have no candidates pass through
/// unchanged. Deterministic for fixed (dataset, providers, budget, seed).
pub fn generate_syn_dataset(
    dataset: &[Example],
    schemas: &SchemaSet,
    providers: &[&dyn SynonymProvider],
    budget: usize,
    seed: u64,
    jobs: usize,
) -> GenerationOutcome {
    let results = parallel_map_indexed(dataset.len(), jobs, |index| {
        let example = &dataset[index];
        let unchanged = |message: Option<String>| {
            (
                PerturbedExample {
                    db_id: example.db_id.clone(),
                    original_question: example.question.clone(),
                    perturbed_question: example.question.clone(),
                    gold_query: example.query.clone(),
                    plan: SubstitutionPlan::default(),
                },
                message,
            )
        };
        let Some(schema) = schemas.get(&example.db_id) else {
            return unchanged(Some(format!("no schema for database {:?}", example.db_id)));
        };
        let linked = link(&example.question, schema);
        let plan = plan_substitutions(
            &linked,
            example,
            providers,
            budget,
            derive_seed(seed, index),
        );
        match apply_plan(example, &plan) {
            Ok(perturbed) => (perturbed, None),
            Err(e) => unchanged(Some(e.to_string())),
        }
    });

    let mut examples = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (index, (perturbed, error)) in results.into_iter().enumerate() {
        if let Some(message) = error {
            errors.push(GenerationError { index, message });
        }
        examples.push(perturbed);
    }
    GenerationOutcome {
        examples,
        errors,
        seed,
        budget,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{LexiconProvider, SynonymLexicon};
    use crate::schema::{parse_schemas, DatabaseSchema};
    use std::collections::BTreeMap;

    fn retail_schema() -> DatabaseSchema {
        parse_schemas(
            r#"[
              {
                "db_id": "retail",
                "table_names_original": ["customers"],
                "table_names": ["customers"],
                "column_names_original": [[-1, "*"], [0, "name"], [0, "phone"]],
                "column_names": [[-1, "*"], [0, "name"], [0, "phone"]],
                "column_types": ["text", "text", "text"],
                "primary_keys": [],
                "foreign_keys": []
              }
            ]"#,
        )
        .unwrap()
        .remove(0)
    }

    fn academics_schema() -> DatabaseSchema {
        parse_schemas(
            r#"[
              {
                "db_id": "academics",
                "table_names_original": ["classes"],
                "table_names": ["classes"],
                "column_names_original": [[-1, "*"], [0, "courses"], [0, "days"]],
                "column_names": [[-1, "*"], [0, "courses"], [0, "days"]],
                "column_types": ["text", "text", "text"],
                "primary_keys": [],
                "foreign_keys": []
              }
            ]"#,
        )
        .unwrap()
        .remove(0)
    }

    fn lexicon_provider(entries: &[(&str, &str)]) -> LexiconProvider {
        let mut global = BTreeMap::new();
        for (key, value) in entries {
            global.insert(key.to_string(), vec![value.to_string()]);
        }
        LexiconProvider::new(SynonymLexicon::from_maps(global, BTreeMap::new()).unwrap())
    }

    fn example(db_id: &str, question: &str, query: &str) -> Example {
        Example {
            db_id: db_id.into(),
            question: question.into(),
            query: query.into(),
        }
    }

    #[test]
    fn finds_linked_spans_excluding_reserved() {
        let schema = academics_schema();
        let linked = link("Which courses are taught on days MTW?", &schema);
        let spans = find_substitutable_spans(&linked);
        let texts: Vec<_> = spans.iter().map(|&s| linked.span_text(s)).collect();
        assert_eq!(texts, vec!["courses", "days"]);
    }

    #[test]
    fn reserved_word_spans_are_excluded() {
        let mut schema = retail_schema();
        schema.columns[2].cell_values = vec!["dog".into()];
        let linked = link("What is the name of the dog?", &schema);
        let spans = find_substitutable_spans(&linked);
        let texts: Vec<_> = spans.iter().map(|&s| linked.span_text(s)).collect();
        // "name" links but stays off-limits; "dog" is a cell-value span.
        assert_eq!(texts, vec!["dog"]);
    }

    #[test]
    fn question_without_tags_has_no_spans() {
        let schema = retail_schema();
        let linked = link("Nothing relevant here at all", &schema);
        assert!(find_substitutable_spans(&linked).is_empty());
    }

    #[test]
    fn plans_single_lexicon_substitution() {
        let schema = academics_schema();
        let ex = example(
            "academics",
            "Which courses are taught on days MTW?",
            "SELECT 1",
        );
        let linked = link(&ex.question, &schema);
        let provider = lexicon_provider(&[("courses", "curriculum")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let plan = plan_substitutions(&linked, &ex, &providers, 2, 7);
        assert_eq!(plan.edits.len(), 1);
        assert_eq!(plan.edits[0].original, "courses");
        assert_eq!(plan.edits[0].replacement, "curriculum");
        assert_eq!(plan.edits[0].provider, "lexicon");
    }

    #[test]
    fn budget_zero_plans_nothing() {
        let schema = academics_schema();
        let ex = example(
            "academics",
            "Which courses are taught on days MTW?",
            "SELECT 1",
        );
        let linked = link(&ex.question, &schema);
        let provider = lexicon_provider(&[("courses", "curriculum")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let plan = plan_substitutions(&linked, &ex, &providers, 0, 7);
        assert!(plan.is_empty());
    }

    #[test]
    fn equal_seeds_give_equal_plans() {
        let schema = academics_schema();
        let ex = example(
            "academics",
            "Which courses are taught on days MTW?",
            "SELECT 1",
        );
        let linked = link(&ex.question, &schema);
        let provider = lexicon_provider(&[("courses", "curriculum"), ("days", "dates")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let a = plan_substitutions(&linked, &ex, &providers, 1, 42);
        let b = plan_substitutions(&linked, &ex, &providers, 1, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn apply_replaces_spans_and_keeps_gold() {
        let schema = retail_schema();
        let ex = example(
            "retail",
            "Show the name and phone for customers",
            "SELECT name, phone FROM customers",
        );
        let linked = link(&ex.question, &schema);
        let provider = lexicon_provider(&[("phone", "telephone"), ("customers", "clients")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let plan = plan_substitutions(&linked, &ex, &providers, 5, 3);
        let out = apply_plan(&ex, &plan).unwrap();
        assert_eq!(
            out.perturbed_question,
            "Show the name and telephone for clients"
        );
        assert_eq!(out.gold_query, ex.query);
        assert_eq!(out.plan.edits.len(), 2);
    }

    #[test]
    fn empty_plan_is_identity() {
        let ex = example(
            "retail",
            "Show the name and phone for customers",
            "SELECT 1",
        );
        let out = apply_plan(&ex, &SubstitutionPlan::default()).unwrap();
        assert_eq!(out.perturbed_question, ex.question);
        assert_eq!(out.gold_query, ex.query);
    }

    #[test]
    fn overlapping_edits_are_rejected() {
        let ex = example("retail", "Show the phone for customers", "SELECT 1");
        let edit = |span: (usize, usize)| Edit {
            span,
            original: "x".into(),
            replacement: "y".into(),
            target: LinkTarget::Column { column_id: 2 },
            provider: "lexicon".into(),
            truncated: false,
        };
        let plan = SubstitutionPlan {
            edits: vec![edit((1, 3)), edit((2, 4))],
        };
        assert!(apply_plan(&ex, &plan).is_err());
        let oob = SubstitutionPlan {
            edits: vec![edit((4, 9))],
        };
        assert!(apply_plan(&ex, &oob).is_err());
    }

    #[test]
    fn sentence_initial_replacement_keeps_capitalization() {
        let schema = retail_schema();
        let ex = example("retail", "Customers with a phone", "SELECT 1");
        let linked = link(&ex.question, &schema);
        let provider = lexicon_provider(&[("customers", "clients")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let plan = plan_substitutions(&linked, &ex, &providers, 1, 0);
        let out = apply_plan(&ex, &plan).unwrap();
        assert!(out.perturbed_question.starts_with("Clients"));
    }

    #[test]
    fn long_replacements_are_truncated_and_flagged() {
        let schema = academics_schema();
        let ex = example("academics", "Which courses are offered", "SELECT 1");
        let linked = link(&ex.question, &schema);
        let provider = lexicon_provider(&[("courses", "one two three four five six seven")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let plan = plan_substitutions(&linked, &ex, &providers, 1, 0);
        assert!(plan.edits[0].truncated);
        assert_eq!(plan.edits[0].replacement, "one two three four five");
    }

    #[test]
    fn generation_covers_every_example() {
        let schema_set = SchemaSet::new(vec![retail_schema(), academics_schema()]);
        let provider = lexicon_provider(&[
            ("customers", "clients"),
            ("phone", "telephone"),
            ("courses", "curriculum"),
            ("days", "dates"),
        ]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let dataset: Vec<Example> = (0..10)
            .map(|i| {
                if i % 2 == 0 {
                    example(
                        "retail",
                        "Show the phone for customers",
                        "SELECT phone FROM customers",
                    )
                } else {
                    example(
                        "academics",
                        "Which courses are taught on days MTW?",
                        "SELECT courses FROM classes",
                    )
                }
            })
            .collect();
        let outcome = generate_syn_dataset(&dataset, &schema_set, &providers, 1, 11, 1);
        assert_eq!(outcome.examples.len(), 10);
        assert!(outcome.errors.is_empty());
        for (input, out) in dataset.iter().zip(&outcome.examples) {
            assert_eq!(out.plan.edits.len(), 1);
            assert_ne!(out.perturbed_question, out.original_question);
            assert_eq!(out.gold_query, input.query);
        }
    }

    #[test]
    fn empty_providers_leave_everything_unchanged() {
        let schema_set = SchemaSet::new(vec![retail_schema()]);
        let dataset = vec![example("retail", "Show the phone for customers", "SELECT 1"); 3];
        let outcome = generate_syn_dataset(&dataset, &schema_set, &[], 1, 11, 1);
        assert!(outcome
            .examples
            .iter()
            .all(|e| e.perturbed_question == e.original_question));
    }

    #[test]
    fn reserved_only_questions_pass_through() {
        let schema_set = SchemaSet::new(vec![retail_schema()]);
        let provider = lexicon_provider(&[("customers", "clients"), ("phone", "telephone")]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let mut dataset = vec![example("retail", "Show the phone for customers", "SELECT 1"); 7];
        // Questions whose only linked span is the reserved word "name".
        dataset.extend(vec![example("retail", "What is the name", "SELECT 1"); 3]);
        let outcome = generate_syn_dataset(&dataset, &schema_set, &providers, 1, 5, 1);
        let unchanged: Vec<usize> = outcome
            .examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.perturbed_question == e.original_question)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(unchanged, vec![7, 8, 9]);
    }

    #[test]
    fn missing_schema_records_error_and_passes_through() {
        let schema_set = SchemaSet::new(vec![retail_schema()]);
        let dataset = vec![example("nowhere", "Show the phone", "SELECT 1")];
        let outcome = generate_syn_dataset(&dataset, &schema_set, &[], 1, 5, 1);
        assert_eq!(outcome.errors.len(), 1);
        assert_eq!(outcome.examples[0].perturbed_question, "Show the phone");
    }

    #[test]
    fn parallel_and_serial_runs_agree() {
        let schema_set = SchemaSet::new(vec![retail_schema(), academics_schema()]);
        let provider = lexicon_provider(&[
            ("customers", "clients"),
            ("phone", "telephone"),
            ("courses", "curriculum"),
            ("days", "dates"),
        ]);
        let providers: Vec<&dyn SynonymProvider> = vec![&provider];
        let dataset: Vec<Example> = (0..24)
            .map(|i| {
                if i % 2 == 0 {
                    example("retail", "Show the phone for customers", "SELECT 1")
                } else {
                    example(
                        "academics",
                        "Which courses are taught on days MTW?",
                        "SELECT 1",
                    )
                }
            })
            .collect();
        let serial = generate_syn_dataset(&dataset, &schema_set, &providers, 1, 99, 1);
        let parallel = generate_syn_dataset(&dataset, &schema_set, &providers, 1, 99, 4);
        assert_eq!(serial.examples, parallel.examples);
    }
}
