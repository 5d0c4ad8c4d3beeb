//! Databases as tables, columns, keys, and cell values, with multiple
//! natural-language annotations per schema item.
//!
//! Schemas are immutable after load; mutation-style operations return new
//! values, so they are safe to share read-only across workers.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_phrase_str;

/// A default surface phrase plus an ordered list of synonym phrases.
///
/// List order is stable: it is the tie-break order for multi-annotation
/// selection, with the default ranked first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    default: String,
    synonyms: Vec<String>,
}

impl AnnotationSet {
    /// Build from a raw surface form; the default is its normalized phrase.
    pub fn from_surface(surface: &str) -> Result<Self> {
        let default = normalize_phrase_str(surface);
        if default.is_empty() {
            return Err(Error::validation(format!(
                "annotation derived from {surface:?} is empty after normalization"
            )));
        }
        Ok(AnnotationSet {
            default,
            synonyms: Vec::new(),
        })
    }

    pub fn default_phrase(&self) -> &str {
        &self.default
    }

    pub fn synonyms(&self) -> &[String] {
        &self.synonyms
    }

    /// All phrases in tie-break order: default first, then synonyms.
    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.default.as_str()).chain(self.synonyms.iter().map(|s| s.as_str()))
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.phrases().any(|p| p == normalized)
    }

    /// Add a synonym, normalizing first. Phrases already present are skipped
    /// so attaching the same file twice is idempotent.
    pub fn add_synonym(&mut self, phrase: &str) -> Result<()> {
        let normalized = normalize_phrase_str(phrase);
        if normalized.is_empty() {
            return Err(Error::validation(format!(
                "synonym {phrase:?} is empty after normalization"
            )));
        }
        if !self.contains(&normalized) {
            self.synonyms.push(normalized);
        }
        Ok(())
    }

    /// Replace the whole set with a single phrase. Used when resolving a
    /// schema down to one surface form per item.
    pub fn singleton(phrase: &str) -> Self {
        AnnotationSet {
            default: normalize_phrase_str(phrase),
            synonyms: Vec::new(),
        }
    }
}

/// Column type in the Spider layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Time,
    Boolean,
    Others,
}

impl ColumnType {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ColumnType::Text),
            "number" => Ok(ColumnType::Number),
            "time" => Ok(ColumnType::Time),
            "boolean" => Ok(ColumnType::Boolean),
            "others" | "other" => Ok(ColumnType::Others),
            other => Err(Error::validation(format!("unknown column type {other:?}"))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Number => "number",
            ColumnType::Time => "time",
            ColumnType::Boolean => "boolean",
            ColumnType::Others => "others",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub id: ColumnId,
    /// `None` for the star column.
    pub table_id: Option<TableId>,
    pub name: String,
    pub col_type: ColumnType,
    pub annotations: AnnotationSet,
    pub cell_values: Vec<String>,
}

impl Column {
    pub fn is_star(&self) -> bool {
        self.table_id.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub id: TableId,
    pub name: String,
    pub annotations: AnnotationSet,
    pub column_ids: Vec<ColumnId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<Table>,
    pub columns: Vec<Column>,
    pub primary_keys: Vec<ColumnId>,
    pub foreign_keys: Vec<(ColumnId, ColumnId)>,
}

impl DatabaseSchema {
    pub fn table(&self, id: TableId) -> &Table {
        &self.tables[id.0]
    }

    pub fn column(&self, id: ColumnId) -> &Column {
        &self.columns[id.0]
    }

    pub fn star_column_id(&self) -> ColumnId {
        self.columns
            .iter()
            .find(|c| c.is_star())
            .map(|c| c.id)
            .expect("validated schema has a star column")
    }

    /// Case-insensitive table lookup by identifier.
    pub fn table_by_name(&self, name: &str) -> Option<&Table> {
        let lower = name.to_lowercase();
        self.tables.iter().find(|t| t.name.to_lowercase() == lower)
    }

    /// Case-insensitive column lookup within one table.
    pub fn column_in_table(&self, table: TableId, name: &str) -> Option<&Column> {
        let lower = name.to_lowercase();
        self.table(table)
            .column_ids
            .iter()
            .map(|&id| self.column(id))
            .find(|c| c.name.to_lowercase() == lower)
    }

    /// Validate all structural invariants, naming the offending item.
    pub fn validate(&self) -> Result<()> {
        let stars: Vec<_> = self.columns.iter().filter(|c| c.is_star()).collect();
        if stars.len() != 1 {
            return Err(Error::validation(format!(
                "database {}: expected exactly one star column, found {}",
                self.db_id,
                stars.len()
            )));
        }
        let mut table_names = HashSet::new();
        for table in &self.tables {
            if !table_names.insert(table.name.to_lowercase()) {
                return Err(Error::validation(format!(
                    "database {}: duplicate table name {:?}",
                    self.db_id, table.name
                )));
            }
        }
        for table in &self.tables {
            let mut col_names = HashSet::new();
            for &cid in &table.column_ids {
                let col = self.columns.get(cid.0).ok_or_else(|| {
                    Error::validation(format!(
                        "database {}: table {:?} references missing column {}",
                        self.db_id, table.name, cid.0
                    ))
                })?;
                if !col_names.insert(col.name.to_lowercase()) {
                    return Err(Error::validation(format!(
                        "database {}: duplicate column name {:?} in table {:?}",
                        self.db_id, col.name, table.name
                    )));
                }
            }
        }
        for &pk in &self.primary_keys {
            match self.columns.get(pk.0) {
                Some(col) if !col.is_star() => {}
                _ => {
                    return Err(Error::validation(format!(
                        "database {}: primary key references invalid column {}",
                        self.db_id, pk.0
                    )))
                }
            }
        }
        for &(a, b) in &self.foreign_keys {
            let ca = self.columns.get(a.0).ok_or_else(|| {
                Error::validation(format!(
                    "database {}: foreign key ({}, {}) references missing column {}",
                    self.db_id, a.0, b.0, a.0
                ))
            })?;
            let cb = self.columns.get(b.0).ok_or_else(|| {
                Error::validation(format!(
                    "database {}: foreign key ({}, {}) references missing column {}",
                    self.db_id, a.0, b.0, b.0
                ))
            })?;
            match (ca.table_id, cb.table_id) {
                (Some(ta), Some(tb)) if ta != tb => {}
                _ => {
                    return Err(Error::validation(format!(
                        "database {}: foreign key ({}, {}) must link columns of distinct tables",
                        self.db_id, a.0, b.0
                    )))
                }
            }
        }
        Ok(())
    }

    /// Extend annotation sets from a parsed annotation map. Items absent from
    /// the map are untouched; the default phrase never changes.
    pub fn with_annotations(&self, annotations: &AnnotationFile) -> Result<DatabaseSchema> {
        let mut schema = self.clone();
        for (path, synonyms) in &annotations.0 {
            let mut seen = HashSet::new();
            for syn in synonyms {
                let normalized = normalize_phrase_str(syn);
                if !seen.insert(normalized) {
                    return Err(Error::validation(format!(
                        "annotation set for {path:?} lists {syn:?} more than once"
                    )));
                }
            }
            match parse_item_path(path) {
                (table_name, None) => {
                    let table_id =
                        schema
                            .table_by_name(table_name)
                            .map(|t| t.id)
                            .ok_or_else(|| {
                                Error::validation(format!(
                                "annotation file names unknown table {table_name:?} in database {}",
                                schema.db_id
                            ))
                            })?;
                    for syn in synonyms {
                        schema.tables[table_id.0].annotations.add_synonym(syn)?;
                    }
                }
                (table_name, Some(column_name)) => {
                    let table_id =
                        schema
                            .table_by_name(table_name)
                            .map(|t| t.id)
                            .ok_or_else(|| {
                                Error::validation(format!(
                                "annotation file names unknown table {table_name:?} in database {}",
                                schema.db_id
                            ))
                            })?;
                    let column_id = schema
                        .column_in_table(table_id, column_name)
                        .map(|c| c.id)
                        .ok_or_else(|| {
                            Error::validation(format!(
                                "annotation file names unknown column {path:?} in database {}",
                                schema.db_id
                            ))
                        })?;
                    for syn in synonyms {
                        schema.columns[column_id.0].annotations.add_synonym(syn)?;
                    }
                }
            }
        }
        Ok(schema)
    }

    /// Attach cell-value samples from a parsed sidecar, capped per column.
    pub fn with_cell_values(&self, sidecar: &CellValueFile, cap: usize) -> Result<DatabaseSchema> {
        let mut schema = self.clone();
        for (path, values) in &sidecar.0 {
            let (table_name, column_name) = match parse_item_path(path) {
                (t, Some(c)) => (t, c),
                (t, None) => {
                    return Err(Error::validation(format!(
                        "cell-value sidecar key {t:?} must be of the form table.column"
                    )))
                }
            };
            let table_id = schema
                .table_by_name(table_name)
                .map(|t| t.id)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "cell-value sidecar names unknown table {table_name:?}"
                    ))
                })?;
            let column_id = schema
                .column_in_table(table_id, column_name)
                .map(|c| c.id)
                .ok_or_else(|| {
                    Error::validation(format!("cell-value sidecar names unknown column {path:?}"))
                })?;
            let column = &mut schema.columns[column_id.0];
            for value in values.iter().take(cap) {
                column.cell_values.push(value.clone());
            }
            column.cell_values.truncate(cap);
        }
        Ok(schema)
    }

    /// Serialize back to one entry of the tables.json layout. The
    /// human-readable name fields carry the default annotations.
    pub fn to_tables_entry(&self) -> TablesJsonEntry {
        self.to_tables_entry_with(
            |t| t.annotations.default_phrase().to_string(),
            |c| c.annotations.default_phrase().to_string(),
        )
    }

    /// Serialize with custom surface names per item; used by MAS resolution.
    pub fn to_tables_entry_with(
        &self,
        table_surface: impl Fn(&Table) -> String,
        column_surface: impl Fn(&Column) -> String,
    ) -> TablesJsonEntry {
        TablesJsonEntry {
            db_id: self.db_id.clone(),
            table_names_original: self.tables.iter().map(|t| t.name.clone()).collect(),
            table_names: self.tables.iter().map(&table_surface).collect(),
            column_names_original: self
                .columns
                .iter()
                .map(|c| (c.table_id.map(|t| t.0 as i64).unwrap_or(-1), c.name.clone()))
                .collect(),
            column_names: self
                .columns
                .iter()
                .map(|c| {
                    (
                        c.table_id.map(|t| t.0 as i64).unwrap_or(-1),
                        if c.is_star() {
                            c.name.clone()
                        } else {
                            column_surface(c)
                        },
                    )
                })
                .collect(),
            column_types: self
                .columns
                .iter()
                .map(|c| c.col_type.as_str().to_string())
                .collect(),
            primary_keys: self.primary_keys.iter().map(|c| c.0).collect(),
            foreign_keys: self.foreign_keys.iter().map(|(a, b)| (a.0, b.0)).collect(),
        }
    }
}

/// Split "table" or "table.column" item paths.
fn parse_item_path(path: &str) -> (&str, Option<&str>) {
    match path.split_once('.') {
        Some((table, column)) => (table, Some(column)),
        None => (path, None),
    }
}

/// One entry of the Spider tables.json layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TablesJsonEntry {
    pub db_id: String,
    pub table_names_original: Vec<String>,
    pub table_names: Vec<String>,
    pub column_names_original: Vec<(i64, String)>,
    pub column_names: Vec<(i64, String)>,
    pub column_types: Vec<String>,
    #[serde(default)]
    pub primary_keys: Vec<usize>,
    #[serde(default)]
    pub foreign_keys: Vec<(usize, usize)>,
}

impl TablesJsonEntry {
    pub fn into_schema(self) -> Result<DatabaseSchema> {
        let db_id = self.db_id;
        if self.column_names_original.len() != self.column_names.len()
            || self.column_names.len() != self.column_types.len()
        {
            return Err(Error::validation(format!(
                "database {db_id}: column arrays have mismatched lengths"
            )));
        }
        if self.table_names_original.len() != self.table_names.len() {
            return Err(Error::validation(format!(
                "database {db_id}: table arrays have mismatched lengths"
            )));
        }
        let mut tables: Vec<Table> = self
            .table_names_original
            .iter()
            .zip(&self.table_names)
            .enumerate()
            .map(|(i, (original, readable))| {
                Ok(Table {
                    id: TableId(i),
                    name: original.clone(),
                    annotations: AnnotationSet::from_surface(readable)?,
                    column_ids: Vec::new(),
                })
            })
            .collect::<Result<_>>()?;
        let mut columns = Vec::new();
        for (i, (((t_orig, name), (_, readable)), col_type)) in self
            .column_names_original
            .iter()
            .zip(&self.column_names)
            .zip(&self.column_types)
            .enumerate()
        {
            let t_orig = *t_orig;
            let table_id = if t_orig < 0 {
                None
            } else {
                let idx = t_orig as usize;
                if idx >= tables.len() {
                    return Err(Error::validation(format!(
                        "database {db_id}: column {name:?} references missing table index {idx}"
                    )));
                }
                Some(TableId(idx))
            };
            let annotations = if table_id.is_none() {
                // The star column has no natural-language surface form.
                AnnotationSet {
                    default: "*".to_string(),
                    synonyms: Vec::new(),
                }
            } else {
                AnnotationSet::from_surface(readable)?
            };
            let column = Column {
                id: ColumnId(i),
                table_id,
                name: name.clone(),
                col_type: ColumnType::parse(col_type)?,
                annotations,
                cell_values: Vec::new(),
            };
            if let Some(tid) = table_id {
                tables[tid.0].column_ids.push(ColumnId(i));
            }
            columns.push(column);
        }
        let schema = DatabaseSchema {
            db_id,
            tables,
            columns,
            primary_keys: self.primary_keys.into_iter().map(ColumnId).collect(),
            foreign_keys: self
                .foreign_keys
                .into_iter()
                .map(|(a, b)| (ColumnId(a), ColumnId(b)))
                .collect(),
        };
        schema.validate()?;
        Ok(schema)
    }
}

/// Load every database from a tables.json file.
pub fn load_schemas(path: impl AsRef<Path>) -> Result<Vec<DatabaseSchema>> {
    let path = path.as_ref();
    let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schemas(&data).map_err(|e| match e {
        Error::FileParse { message, .. } => Error::file_parse(path, message),
        other => other,
    })
}

/// Parse a tables.json document from memory.
pub fn parse_schemas(data: &str) -> Result<Vec<DatabaseSchema>> {
    let entries: Vec<TablesJsonEntry> =
        serde_json::from_str(data).map_err(|e| Error::file_parse("<memory>", e.to_string()))?;
    entries
        .into_iter()
        .map(TablesJsonEntry::into_schema)
        .collect()
}

/// A set of schemas indexed by db_id.
#[derive(Debug, Clone, Default)]
pub struct SchemaSet {
    by_id: BTreeMap<String, DatabaseSchema>,
}

impl SchemaSet {
    pub fn new(schemas: Vec<DatabaseSchema>) -> Self {
        SchemaSet {
            by_id: schemas.into_iter().map(|s| (s.db_id.clone(), s)).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(load_schemas(path)?))
    }

    pub fn get(&self, db_id: &str) -> Option<&DatabaseSchema> {
        self.by_id.get(db_id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatabaseSchema> {
        self.by_id.values()
    }

    /// Apply an annotation file to every schema it names; schemas without
    /// entries are untouched. Keys are "db_id" scoped via nested maps.
    pub fn with_annotations(&self, annotations: &AnnotationsByDb) -> Result<SchemaSet> {
        let mut out = self.clone();
        for (db_id, file) in &annotations.0 {
            let schema = out.by_id.get(db_id).ok_or_else(|| {
                Error::validation(format!("annotation file names unknown database {db_id:?}"))
            })?;
            let updated = schema.with_annotations(file)?;
            out.by_id.insert(db_id.clone(), updated);
        }
        Ok(out)
    }
}

/// Annotation file body: item path -> synonym phrases.
///
/// Layout: `{"<table>": [syn, ...], "<table>.<column>": [syn, ...]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnnotationFile(pub BTreeMap<String, Vec<String>>);

impl AnnotationFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&data).map_err(|e| Error::file_parse(path, e.to_string()))
    }
}

/// Annotations for many databases: db_id -> annotation file body. A flat
/// file (no db scoping) applies to a single known database instead.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnnotationsByDb(pub BTreeMap<String, AnnotationFile>);

impl AnnotationsByDb {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&data).map_err(|e| Error::file_parse(path, e.to_string()))
    }
}

/// Cell-value sidecar body: `{"<table>.<column>": [value, ...]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CellValueFile(pub BTreeMap<String, Vec<String>>);

impl CellValueFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&data).map_err(|e| Error::file_parse(path, e.to_string()))
    }
}

/// Default cap on cell-value samples stored per column.
pub const DEFAULT_CELL_VALUE_CAP: usize = 1000;

/// Load a schema and attach an annotation file and cell-value sidecar when
/// given. Convenience wrapper used by the CLI.
pub fn attach_annotations(
    schema: &DatabaseSchema,
    annotations: impl AsRef<Path>,
) -> Result<DatabaseSchema> {
    let file = AnnotationFile::load(annotations)?;
    schema.with_annotations(&file)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pets_tables_json() -> &'static str {
        r#"[
          {
            "db_id": "pets",
            "table_names_original": ["dogs"],
            "table_names": ["dogs"],
            "column_names_original": [[-1, "*"], [0, "name"], [0, "type"]],
            "column_names": [[-1, "*"], [0, "name"], [0, "type"]],
            "column_types": ["text", "text", "text"],
            "primary_keys": [],
            "foreign_keys": []
          }
        ]"#
    }

    #[test]
    fn load_minimal_schema() {
        let schemas = parse_schemas(pets_tables_json()).unwrap();
        assert_eq!(schemas.len(), 1);
        let schema = &schemas[0];
        assert_eq!(schema.tables.len(), 1);
        assert_eq!(schema.columns.len(), 3);
        let star = schema.column(schema.star_column_id());
        assert!(star.table_id.is_none());
        assert_eq!(schema.table(TableId(0)).column_ids.len(), 2);
    }

    #[test]
    fn foreign_key_out_of_range_is_validation_error() {
        let bad = r#"[
          {
            "db_id": "pets",
            "table_names_original": ["dogs", "owners"],
            "table_names": ["dogs", "owners"],
            "column_names_original": [[-1, "*"], [0, "name"], [0, "owner_id"], [1, "oid"], [1, "city"]],
            "column_names": [[-1, "*"], [0, "name"], [0, "owner id"], [1, "oid"], [1, "city"]],
            "column_types": ["text", "text", "number", "number", "text"],
            "primary_keys": [3],
            "foreign_keys": [[2, 99]]
          }
        ]"#;
        let err = parse_schemas(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("foreign key"), "unexpected error: {msg}");
        assert!(msg.contains("99"), "error should name the pair: {msg}");
    }

    #[test]
    fn foreign_key_within_one_table_rejected() {
        let bad = r#"[
          {
            "db_id": "pets",
            "table_names_original": ["dogs"],
            "table_names": ["dogs"],
            "column_names_original": [[-1, "*"], [0, "name"], [0, "type"]],
            "column_names": [[-1, "*"], [0, "name"], [0, "type"]],
            "column_types": ["text", "text", "text"],
            "primary_keys": [],
            "foreign_keys": [[1, 2]]
          }
        ]"#;
        assert!(parse_schemas(bad).is_err());
    }

    #[test]
    fn default_annotations_split_underscores() {
        let json = r#"[
          {
            "db_id": "aviation",
            "table_names_original": ["flights"],
            "table_names": ["flights"],
            "column_names_original": [[-1, "*"], [0, "flight_number"]],
            "column_names": [[-1, "*"], [0, "flight_number"]],
            "column_types": ["text", "number"],
            "primary_keys": [],
            "foreign_keys": []
          }
        ]"#;
        let schemas = parse_schemas(json).unwrap();
        assert_eq!(
            schemas[0].column(ColumnId(1)).annotations.default_phrase(),
            "flight number"
        );
    }

    #[test]
    fn attach_annotations_extends_sets() {
        let json = r#"[
          {
            "db_id": "world",
            "table_names_original": ["country"],
            "table_names": ["country"],
            "column_names_original": [[-1, "*"], [0, "population"]],
            "column_names": [[-1, "*"], [0, "population"]],
            "column_types": ["text", "number"],
            "primary_keys": [],
            "foreign_keys": []
          }
        ]"#;
        let schema = parse_schemas(json).unwrap().remove(0);
        let mut file = AnnotationFile::default();
        file.0
            .insert("country".into(), vec!["nation".into(), "state".into()]);
        let updated = schema.with_annotations(&file).unwrap();
        let set = &updated.table(TableId(0)).annotations;
        assert_eq!(set.default_phrase(), "country");
        assert_eq!(set.synonyms(), ["nation", "state"]);

        // Identity on an empty file.
        let same = schema.with_annotations(&AnnotationFile::default()).unwrap();
        assert_eq!(same, schema);

        // Idempotent for an identical file.
        let twice = updated.with_annotations(&file).unwrap();
        assert_eq!(twice, updated);

        // Unknown item names are validation errors.
        let mut bad = AnnotationFile::default();
        bad.0.insert("countrees".into(), vec!["nation".into()]);
        assert!(schema.with_annotations(&bad).is_err());

        // In-file duplicates are validation errors.
        let mut dup = AnnotationFile::default();
        dup.0
            .insert("country".into(), vec!["nation".into(), "nation".into()]);
        assert!(schema.with_annotations(&dup).is_err());
    }

    #[test]
    fn attach_annotations_commutes_across_disjoint_paths() {
        let schemas = parse_schemas(pets_tables_json()).unwrap();
        let schema = &schemas[0];
        let mut a = AnnotationFile::default();
        a.0.insert("dogs".into(), vec!["puppies".into()]);
        let mut b = AnnotationFile::default();
        b.0.insert("dogs.type".into(), vec!["breed".into()]);
        let ab = schema
            .with_annotations(&a)
            .unwrap()
            .with_annotations(&b)
            .unwrap();
        let ba = schema
            .with_annotations(&b)
            .unwrap()
            .with_annotations(&a)
            .unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn reload_of_serialized_schema_is_equal() {
        let schemas = parse_schemas(pets_tables_json()).unwrap();
        let entry = schemas[0].to_tables_entry();
        let reloaded = serde_json::to_string(&vec![entry]).unwrap();
        let again = parse_schemas(&reloaded).unwrap();
        assert_eq!(again, schemas);
    }

    #[test]
    fn cell_value_sidecar_attaches_and_caps() {
        let schemas = parse_schemas(pets_tables_json()).unwrap();
        let mut sidecar = CellValueFile::default();
        sidecar.0.insert(
            "dogs.type".into(),
            vec!["dog".into(), "cat".into(), "bird".into()],
        );
        let schema = schemas[0].with_cell_values(&sidecar, 2).unwrap();
        assert_eq!(schema.column(ColumnId(2)).cell_values, ["dog", "cat"]);
        assert!(schemas[0]
            .with_cell_values(
                &CellValueFile(
                    [("dogs.nope".to_string(), vec!["x".to_string()])]
                        .into_iter()
                        .collect()
                ),
                10
            )
            .is_err());
    }
}
