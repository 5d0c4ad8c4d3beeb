//! Toolkit for measuring and improving the robustness of text-to-SQL systems
//! against synonym substitution.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`schema`] loads Spider-layout databases and carries multiple
//!   natural-language annotations per schema item.
//! - [`sql`] parses the Spider SQL subset into a canonical IR and serializes
//!   it back; the IR is the unit of all metric comparison.
//! - [`eval`] computes exact-match accuracy and per-component F1 over the ten
//!   standard SQL clause categories.
//! - [`link`] lexically links question spans to schema items and cell values
//!   and implements multi-annotation selection (MAS).
//! - [`providers`] supplies substitution candidates from curated lexicons,
//!   embedding nearest neighbors, and an external contextual proposer.
//! - [`perturb`] produces synonym-substituted questions whose gold SQL is
//!   guaranteed unchanged.
//! - [`attack`] drives an external predictor to build worst-case datasets and
//!   adversarial-training augmentation files.
//! - [`dataset`] ingests Spider-format datasets and computes paired-dataset
//!   difference statistics and substitution reports.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod link;
pub mod net;
pub mod perturb;
pub mod providers;
pub mod schema;
pub mod sql;
pub mod text;
pub mod util;

pub use error::Error;
pub use schema::DatabaseSchema;
pub use sql::SqlQuery;

/// Words that are never substituted: the most standard surface forms for
/// their meanings.
pub const RESERVED_WORDS: [&str; 4] = ["id", "age", "name", "year"];

/// True when the normalized word is one of the reserved words.
pub fn is_reserved_word(word: &str) -> bool {
    RESERVED_WORDS.contains(&word)
}
