//! Exact-match accuracy and per-component F1 over the ten standard SQL
//! clause categories.
//!
//! All functions are pure; corpus scoring sums per-pair counts, so pairs may
//! be partitioned across workers and the counts merged associatively.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schema::ColumnId;
use crate::sql::{AggFunc, ArithOp, CmpOp, ColumnRef, Direction, SetOpKind, SqlQuery};

/// The ten scored component categories, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Select,
    SelectNoAgg,
    Where,
    WhereNoOp,
    GroupByNoHaving,
    GroupBy,
    OrderBy,
    AndOr,
    Iue,
    Keywords,
}

impl Component {
    pub const ALL: [Component; 10] = [
        Component::Select,
        Component::SelectNoAgg,
        Component::Where,
        Component::WhereNoOp,
        Component::GroupByNoHaving,
        Component::GroupBy,
        Component::OrderBy,
        Component::AndOr,
        Component::Iue,
        Component::Keywords,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Select => "SELECT",
            Component::SelectNoAgg => "SELECT (no AGG)",
            Component::Where => "WHERE",
            Component::WhereNoOp => "WHERE (no OP)",
            Component::GroupByNoHaving => "GROUP BY (no HAVING)",
            Component::GroupBy => "GROUP BY",
            Component::OrderBy => "ORDER BY",
            Component::AndOr => "AND/OR",
            Component::Iue => "IUE",
            Component::Keywords => "KEYWORDS",
        }
    }
}

/// A column stripped down to its metric identity: base column plus the
/// arithmetic combination when present. Aggregators are carried separately
/// where a category needs them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnKey {
    pub column: ColumnId,
    pub arithmetic: Option<(ArithOp, ColumnId)>,
}

impl ColumnKey {
    fn of(col: &ColumnRef) -> Self {
        ColumnKey {
            column: col.column,
            arithmetic: col.arithmetic.as_ref().map(|(op, rhs)| (*op, rhs.column)),
        }
    }
}

/// One normalized unit inside a component multiset. Literal values never
/// appear here: exact match ignores them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    /// (aggregator, column, item-level DISTINCT)
    Select(Option<AggFunc>, ColumnKey, bool),
    Column(ColumnKey),
    /// (negated, operator, column) with the literal dropped
    WherePair(bool, CmpOp, ColumnKey),
    Order(Vec<(Option<AggFunc>, ColumnKey)>, Direction, bool),
    Connector(crate::sql::Connector),
    SetOp(SetOpKind),
    Keyword(&'static str),
}

/// A multiset with deterministic ordering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Multiset(pub BTreeMap<Unit, usize>);

impl Multiset {
    pub fn insert(&mut self, unit: Unit) {
        *self.0.entry(unit).or_insert(0) += 1;
    }

    pub fn insert_once(&mut self, unit: Unit) {
        self.0.entry(unit).or_insert(1);
    }

    pub fn merge(&mut self, other: &Multiset) {
        for (unit, count) in &other.0 {
            *self.0.entry(unit.clone()).or_insert(0) += count;
        }
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn intersection_size(&self, other: &Multiset) -> usize {
        self.0
            .iter()
            .map(|(unit, count)| other.0.get(unit).copied().unwrap_or(0).min(*count))
            .sum()
    }
}

/// The component multiset map of one query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComponentUnits(pub BTreeMap<Component, Multiset>);

impl ComponentUnits {
    pub fn get(&self, component: Component) -> Option<&Multiset> {
        self.0.get(&component)
    }

    fn entry(&mut self, component: Component) -> &mut Multiset {
        self.0.entry(component).or_default()
    }

    fn merge(&mut self, other: &ComponentUnits) {
        for (component, units) in &other.0 {
            self.entry(*component).merge(units);
        }
    }
}

/// Decompose a canonical query into the ten component multisets. Set-op
/// operands contribute recursively: their units merge into the parent's
/// multisets and the set-op kind lands in IUE.
pub fn extract_components(q: &SqlQuery) -> ComponentUnits {
    let mut units = ComponentUnits::default();
    extract_one(q, &mut units);
    if let Some((kind, operand)) = &q.set_op {
        units.entry(Component::Iue).insert(Unit::SetOp(*kind));
        let operand_units = extract_components(operand);
        units.merge(&operand_units);
    }
    units
}

fn extract_one(q: &SqlQuery, units: &mut ComponentUnits) {
    for item in &q.select.items {
        units.entry(Component::Select).insert(Unit::Select(
            item.agg,
            ColumnKey::of(item),
            item.distinct,
        ));
        units
            .entry(Component::SelectNoAgg)
            .insert(Unit::Column(ColumnKey::of(item)));
    }

    if let Some(tree) = &q.where_clause {
        for cond in &tree.conditions {
            units.entry(Component::Where).insert(Unit::WherePair(
                cond.negated,
                cond.op,
                ColumnKey::of(&cond.left),
            ));
            units
                .entry(Component::WhereNoOp)
                .insert(Unit::Column(ColumnKey::of(&cond.left)));
        }
    }

    for col in &q.group_by {
        units
            .entry(Component::GroupBy)
            .insert(Unit::Column(ColumnKey::of(col)));
        if q.having.is_none() {
            units
                .entry(Component::GroupByNoHaving)
                .insert(Unit::Column(ColumnKey::of(col)));
        }
    }

    if let Some(order) = &q.order_by {
        units.entry(Component::OrderBy).insert(Unit::Order(
            order
                .items
                .iter()
                .map(|c| (c.agg, ColumnKey::of(c)))
                .collect(),
            order.direction,
            q.limit.is_some(),
        ));
    }

    for tree in [&q.where_clause, &q.having].into_iter().flatten() {
        for connector in &tree.connectors {
            units
                .entry(Component::AndOr)
                .insert(Unit::Connector(*connector));
        }
    }

    for kw in keywords_of(q) {
        units
            .entry(Component::Keywords)
            .insert_once(Unit::Keyword(kw));
    }
}

/// Clause keywords present in one query, deduplicated.
fn keywords_of(q: &SqlQuery) -> Vec<&'static str> {
    let mut kws = vec!["select"];
    if q.where_clause.is_some() {
        kws.push("where");
    }
    if !q.group_by.is_empty() {
        kws.push("group by");
    }
    if q.having.is_some() {
        kws.push("having");
    }
    if let Some(order) = &q.order_by {
        kws.push("order by");
        kws.push(match order.direction {
            Direction::Asc => "asc",
            Direction::Desc => "desc",
        });
    }
    if q.limit.is_some() {
        kws.push("limit");
    }
    let distinct = q.select.distinct || q.select.items.iter().any(|i| i.distinct);
    if distinct {
        kws.push("distinct");
    }
    kws
}

/// Tables referenced by the FROM clause, set-op operands included. Exact
/// match compares these beyond the ten component multisets, mirroring the
/// official metric.
fn from_tables(q: &SqlQuery) -> Vec<crate::schema::TableId> {
    let mut tables = q.from.tables.clone();
    if let Some((_, operand)) = &q.set_op {
        tables.extend(from_tables(operand));
    }
    tables.sort();
    tables
}

/// Structural exact match: every component multiset equal and the from-table
/// multisets equal, condition literals ignored. Symmetric and reflexive.
pub fn exact_match(pred: &SqlQuery, gold: &SqlQuery) -> bool {
    let pred = crate::sql::canonicalize(pred);
    let gold = crate::sql::canonicalize(gold);
    if from_tables(&pred) != from_tables(&gold) {
        return false;
    }
    let pred_units = extract_components(&pred);
    let gold_units = extract_components(&gold);
    let empty = Multiset::default();
    for component in Component::ALL {
        let p = pred_units.get(component).unwrap_or(&empty);
        let g = gold_units.get(component).unwrap_or(&empty);
        if p != g {
            return false;
        }
    }
    true
}

/// Per-component counts: predicted units, gold units, and multiset overlap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ComponentCounts {
    pub pred_total: usize,
    pub gold_total: usize,
    pub matched: usize,
}

impl ComponentCounts {
    pub fn f1(&self) -> f64 {
        if self.pred_total + self.gold_total == 0 {
            // A component absent from both sides counts as agreement.
            1.0
        } else {
            2.0 * self.matched as f64 / (self.pred_total + self.gold_total) as f64
        }
    }
}

/// Corpus-level component scores using summed counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComponentScores {
    pub counts: BTreeMap<Component, ComponentCounts>,
}

impl ComponentScores {
    pub fn f1(&self, component: Component) -> f64 {
        self.counts
            .get(&component)
            .copied()
            .unwrap_or_default()
            .f1()
    }

    pub fn add_pair(&mut self, pred: &SqlQuery, gold: &SqlQuery) {
        let pred = crate::sql::canonicalize(pred);
        let gold = crate::sql::canonicalize(gold);
        let pred_units = extract_components(&pred);
        let gold_units = extract_components(&gold);
        self.add_units(&pred_units, &gold_units);
    }

    pub fn add_units(&mut self, pred_units: &ComponentUnits, gold_units: &ComponentUnits) {
        let empty = Multiset::default();
        for component in Component::ALL {
            let p = pred_units.get(component).unwrap_or(&empty);
            let g = gold_units.get(component).unwrap_or(&empty);
            let counts = self.counts.entry(component).or_default();
            counts.pred_total += p.total();
            counts.gold_total += g.total();
            counts.matched += p.intersection_size(g);
        }
    }

    /// Count a pair whose prediction failed to parse: gold units count, the
    /// prediction contributes nothing.
    pub fn add_unparseable_pred(&mut self, gold: &SqlQuery) {
        let gold = crate::sql::canonicalize(gold);
        let gold_units = extract_components(&gold);
        self.add_units(&ComponentUnits::default(), &gold_units);
    }

    /// Merge counts from another partition.
    pub fn merge(&mut self, other: &ComponentScores) {
        for (component, counts) in &other.counts {
            let slot = self.counts.entry(*component).or_default();
            slot.pred_total += counts.pred_total;
            slot.gold_total += counts.gold_total;
            slot.matched += counts.matched;
        }
    }
}

/// Corpus-level F1 per component over canonicalized pairs. An empty list
/// yields all-1.0 by the zero-denominator rule.
pub fn component_f1(pairs: &[(SqlQuery, SqlQuery)]) -> ComponentScores {
    let mut scores = ComponentScores::default();
    for (pred, gold) in pairs {
        scores.add_pair(pred, gold);
    }
    scores
}

/// One scored example.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub exact_match: bool,
    pub components: ComponentScores,
}

/// Evaluate a single pair.
pub fn evaluate_pair(pred: &SqlQuery, gold: &SqlQuery) -> EvalResult {
    let mut components = ComponentScores::default();
    components.add_pair(pred, gold);
    EvalResult {
        exact_match: exact_match(pred, gold),
        components,
    }
}

/// Fraction of exact matches. Empty input is an explicit error, never a
/// silent zero.
pub fn accuracy(results: &[EvalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "accuracy is undefined for an empty result list".into(),
        ));
    }
    let hits = results.iter().filter(|r| r.exact_match).count();
    Ok(hits as f64 / results.len() as f64)
}

/// JSON evaluation report; layout mirrors what the evaluate command writes.
/// Components serialize in the standard category order.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Records the KEYWORDS convention: DISTINCT participates in the set.
    pub keywords_include_distinct: bool,
    pub accuracy: f64,
    pub n: usize,
    pub components: serde_json::Map<String, serde_json::Value>,
    pub per_example: Vec<PerExampleEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentEntry {
    pub f1: f64,
    pub pred_total: usize,
    pub gold_total: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerExampleEntry {
    pub index: usize,
    pub exact_match: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalReport {
    pub fn new(accuracy: f64, scores: &ComponentScores, per_example: Vec<PerExampleEntry>) -> Self {
        let mut components = serde_json::Map::new();
        for c in Component::ALL {
            let counts = scores.counts.get(&c).copied().unwrap_or_default();
            let entry = ComponentEntry {
                f1: counts.f1(),
                pred_total: counts.pred_total,
                gold_total: counts.gold_total,
                matched: counts.matched,
            };
            components.insert(
                c.as_str().to_string(),
                serde_json::to_value(entry).expect("component entry serializes"),
            );
        }
        EvalReport {
            keywords_include_distinct: true,
            accuracy,
            n: per_example.len(),
            components,
            per_example,
        }
    }
}
