//! Shared test support: fixture loading, a seeded random query generator,
//! and an independent brute-force metric oracle.
//!
//! The oracle re-derives component multisets, exact match, and F1 from the
//! IR with its own string-based units and naive counting; it never calls
//! into the evaluation module it checks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sqlrobust_core::schema::{ColumnId, DatabaseSchema, SchemaSet, TableId};
use sqlrobust_core::sql::{
    AggFunc, ArithOp, CmpOp, ColumnRef, CondRhs, Condition, ConditionTree, Connector, Direction,
    FromClause, JoinCondition, Literal, OrderByClause, SelectClause, SetOpKind, SqlQuery,
};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_schemas() -> SchemaSet {
    SchemaSet::load(fixture_path("fixture_tables.json")).expect("fixture schemas load")
}

// ---------------------------------------------------------------------------
// Random query generation
// ---------------------------------------------------------------------------

/// Random queries are canonical by construction: join conditions ordered and
/// sorted, no NOT prefixes, lowercase string literals. That lets the oracle
/// work on the raw IR without borrowing the canonicalizer under test.
pub struct QueryGenerator<'a> {
    pub schema: &'a DatabaseSchema,
    pub max_tables: usize,
    pub max_conditions: usize,
    pub allow_set_op: bool,
    pub allow_subquery: bool,
}

impl<'a> QueryGenerator<'a> {
    pub fn small(schema: &'a DatabaseSchema) -> Self {
        QueryGenerator {
            schema,
            max_tables: 2,
            max_conditions: 3,
            allow_set_op: true,
            allow_subquery: true,
        }
    }

    fn non_star_columns(&self, tables: &[TableId]) -> Vec<ColumnId> {
        self.schema
            .columns
            .iter()
            .filter(|c| c.table_id.map(|t| tables.contains(&t)).unwrap_or(false))
            .map(|c| c.id)
            .collect()
    }

    fn pick<T: Copy>(&self, rng: &mut ChaCha8Rng, items: &[T]) -> T {
        items[rng.random_range(0..items.len())]
    }

    fn random_literal(&self, rng: &mut ChaCha8Rng) -> Literal {
        if rng.random_bool(0.5) {
            Literal::Number(format!("{}", rng.random_range(0..100)))
        } else {
            let words = ["dog", "cat", "paris", "berlin", "red", "blue"];
            Literal::Str(self.pick(rng, &words).to_string())
        }
    }

    fn random_select_item(&self, rng: &mut ChaCha8Rng, columns: &[ColumnId]) -> ColumnRef {
        let star = self.schema.star_column_id();
        match rng.random_range(0..10) {
            0 | 1 => ColumnRef {
                column: star,
                agg: Some(AggFunc::Count),
                distinct: false,
                arithmetic: None,
            },
            2 | 3 => {
                let aggs = [
                    AggFunc::Max,
                    AggFunc::Min,
                    AggFunc::Count,
                    AggFunc::Sum,
                    AggFunc::Avg,
                ];
                ColumnRef {
                    column: self.pick(rng, columns),
                    agg: Some(self.pick(rng, &aggs)),
                    distinct: rng.random_bool(0.15),
                    arithmetic: None,
                }
            }
            4 => {
                let left = self.pick(rng, columns);
                let right = self.pick(rng, columns);
                let ops = [ArithOp::Add, ArithOp::Sub];
                ColumnRef {
                    column: left,
                    agg: None,
                    distinct: false,
                    arithmetic: Some((self.pick(rng, &ops), Box::new(ColumnRef::plain(right)))),
                }
            }
            _ => ColumnRef::plain(self.pick(rng, columns)),
        }
    }

    fn random_condition(
        &self,
        rng: &mut ChaCha8Rng,
        columns: &[ColumnId],
        allow_subquery: bool,
    ) -> Condition {
        let left = ColumnRef::plain(self.pick(rng, columns));
        match rng.random_range(0..10) {
            0 => Condition {
                left,
                op: CmpOp::Between,
                right: CondRhs::Range(
                    Literal::Number(format!("{}", rng.random_range(0..10))),
                    Literal::Number(format!("{}", rng.random_range(10..100))),
                ),
                negated: false,
            },
            1 if allow_subquery => {
                let sub = self.random_subquery(rng);
                let ops = [CmpOp::In, CmpOp::NotIn, CmpOp::Gt, CmpOp::Eq];
                Condition {
                    left,
                    op: self.pick(rng, &ops),
                    right: CondRhs::Subquery(Box::new(sub)),
                    negated: false,
                }
            }
            2 => Condition {
                left,
                op: if rng.random_bool(0.5) {
                    CmpOp::Like
                } else {
                    CmpOp::NotLike
                },
                right: CondRhs::Literal(Literal::Str("%a%".into())),
                negated: false,
            },
            _ => {
                let ops = [
                    CmpOp::Eq,
                    CmpOp::Neq,
                    CmpOp::Gt,
                    CmpOp::Lt,
                    CmpOp::Ge,
                    CmpOp::Le,
                ];
                Condition {
                    left,
                    op: self.pick(rng, &ops),
                    right: CondRhs::Literal(self.random_literal(rng)),
                    negated: false,
                }
            }
        }
    }

    fn random_subquery(&self, rng: &mut ChaCha8Rng) -> SqlQuery {
        let table = TableId(rng.random_range(0..self.schema.tables.len()));
        let columns = self.non_star_columns(&[table]);
        let mut sub = SqlQuery {
            select: SelectClause {
                distinct: false,
                items: vec![ColumnRef::plain(self.pick(rng, &columns))],
            },
            from: FromClause {
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
        if rng.random_bool(0.4) {
            sub.where_clause = Some(ConditionTree::single(
                self.random_condition(rng, &columns, false),
            ));
        }
        sub
    }

    pub fn random_query(&self, rng: &mut ChaCha8Rng) -> SqlQuery {
        let table_count = rng.random_range(1..=self.max_tables.min(self.schema.tables.len()));
        let mut tables: Vec<TableId> = Vec::new();
        while tables.len() < table_count {
            let t = TableId(rng.random_range(0..self.schema.tables.len()));
            if !tables.contains(&t) {
                tables.push(t);
            }
        }
        tables.sort();

        let mut join_conditions = Vec::new();
        if tables.len() == 2 {
            let left_cols = self.non_star_columns(&tables[..1]);
            let right_cols = self.non_star_columns(&tables[1..]);
            let mut jc = JoinCondition {
                left: self.pick(rng, &left_cols),
                right: self.pick(rng, &right_cols),
            };
            if jc.right < jc.left {
                std::mem::swap(&mut jc.left, &mut jc.right);
            }
            join_conditions.push(jc);
        }

        let columns = self.non_star_columns(&tables);
        let item_count = rng.random_range(1..=3);
        let items: Vec<ColumnRef> = (0..item_count)
            .map(|_| self.random_select_item(rng, &columns))
            .collect();

        let condition_count = rng.random_range(0..=self.max_conditions);
        let where_clause = if condition_count == 0 {
            None
        } else {
            let conditions: Vec<Condition> = (0..condition_count)
                .map(|_| self.random_condition(rng, &columns, self.allow_subquery))
                .collect();
            let connectors: Vec<Connector> = (1..condition_count)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        Connector::And
                    } else {
                        Connector::Or
                    }
                })
                .collect();
            Some(ConditionTree {
                conditions,
                connectors,
            })
        };

        let (group_by, having) = if rng.random_bool(0.3) {
            let group = vec![ColumnRef::plain(self.pick(rng, &columns))];
            let having = if rng.random_bool(0.4) {
                Some(ConditionTree::single(Condition {
                    left: ColumnRef {
                        column: self.schema.star_column_id(),
                        agg: Some(AggFunc::Count),
                        distinct: false,
                        arithmetic: None,
                    },
                    op: CmpOp::Gt,
                    right: CondRhs::Literal(Literal::Number(format!("{}", rng.random_range(1..5)))),
                    negated: false,
                }))
            } else {
                None
            };
            (group, having)
        } else {
            (vec![], None)
        };

        let order_by = if rng.random_bool(0.35) {
            let item = if rng.random_bool(0.5) {
                ColumnRef {
                    column: self.schema.star_column_id(),
                    agg: Some(AggFunc::Count),
                    distinct: false,
                    arithmetic: None,
                }
            } else {
                ColumnRef::plain(self.pick(rng, &columns))
            };
            Some(OrderByClause {
                items: vec![item],
                direction: if rng.random_bool(0.5) {
                    Direction::Asc
                } else {
                    Direction::Desc
                },
            })
        } else {
            None
        };
        let limit = if order_by.is_some() && rng.random_bool(0.6) {
            Some(rng.random_range(1..10))
        } else {
            None
        };

        let set_op = if self.allow_set_op && rng.random_bool(0.12) {
            let kinds = [SetOpKind::Intersect, SetOpKind::Union, SetOpKind::Except];
            let operand = QueryGenerator {
                allow_set_op: false,
                allow_subquery: false,
                ..*self
            }
            .random_query(rng);
            Some((self.pick(rng, &kinds), Box::new(operand)))
        } else {
            None
        };

        SqlQuery {
            select: SelectClause {
                distinct: rng.random_bool(0.1),
                items,
            },
            from: FromClause {
                tables,
                join_conditions,
            },
            where_clause,
            group_by,
            having,
            order_by,
            limit,
            set_op,
        }
    }

    /// Mutate a query into a plausible "prediction": sometimes identical,
    /// sometimes structurally off, sometimes changed only in literals.
    pub fn mutate(&self, rng: &mut ChaCha8Rng, gold: &SqlQuery) -> SqlQuery {
        let mut pred = gold.clone();
        match rng.random_range(0..6) {
            0 => {
                // Swap a select column.
                let columns = self.non_star_columns(&pred.from.tables);
                if let Some(item) = pred.select.items.first_mut() {
                    item.column = self.pick(rng, &columns);
                    item.arithmetic = None;
                }
            }
            1 => {
                // Change a where operator.
                if let Some(tree) = &mut pred.where_clause {
                    if let Some(cond) = tree.conditions.first_mut() {
                        if matches!(cond.right, CondRhs::Literal(_)) {
                            cond.op = if cond.op == CmpOp::Eq {
                                CmpOp::Gt
                            } else {
                                CmpOp::Eq
                            };
                        }
                    }
                }
            }
            2 => {
                // Change only literals; exact match must not care.
                if let Some(tree) = &mut pred.where_clause {
                    for cond in &mut tree.conditions {
                        if let CondRhs::Literal(lit) = &mut cond.right {
                            *lit = Literal::Str("mutated".into());
                        }
                    }
                }
            }
            3 => {
                // Drop the last condition.
                if let Some(tree) = &mut pred.where_clause {
                    if tree.conditions.len() > 1 {
                        tree.conditions.pop();
                        tree.connectors.pop();
                    } else {
                        pred.where_clause = None;
                    }
                }
            }
            4 => {
                // Flip the order-by direction or drop the limit.
                if let Some(order) = &mut pred.order_by {
                    order.direction = match order.direction {
                        Direction::Asc => Direction::Desc,
                        Direction::Desc => Direction::Asc,
                    };
                } else {
                    pred.limit = None;
                }
            }
            _ => {}
        }
        pred
    }
}

// ---------------------------------------------------------------------------
// Independent brute-force oracle
// ---------------------------------------------------------------------------

pub mod oracle {
    use super::*;

    pub const COMPONENTS: [&str; 10] = [
        "SELECT",
        "SELECT (no AGG)",
        "WHERE",
        "WHERE (no OP)",
        "GROUP BY (no HAVING)",
        "GROUP BY",
        "ORDER BY",
        "AND/OR",
        "IUE",
        "KEYWORDS",
    ];

    fn agg_str(agg: &Option<AggFunc>) -> String {
        match agg {
            None => "none".into(),
            Some(a) => a.as_str().into(),
        }
    }

    fn col_str(col: &ColumnRef) -> String {
        match &col.arithmetic {
            None => format!("c{}", col.column.0),
            Some((op, rhs)) => format!("c{}{}c{}", col.column.0, op.as_str(), rhs.column.0),
        }
    }

    /// Component name -> multiset of unit strings.
    pub fn components(q: &SqlQuery) -> BTreeMap<&'static str, Vec<String>> {
        let mut out: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
        collect(q, &mut out);
        for units in out.values_mut() {
            units.sort();
        }
        out
    }

    fn collect(q: &SqlQuery, out: &mut BTreeMap<&'static str, Vec<String>>) {
        for item in &q.select.items {
            out.entry("SELECT").or_default().push(format!(
                "{}|{}|{}",
                agg_str(&item.agg),
                col_str(item),
                item.distinct
            ));
            out.entry("SELECT (no AGG)")
                .or_default()
                .push(col_str(item));
        }
        if let Some(tree) = &q.where_clause {
            for cond in &tree.conditions {
                out.entry("WHERE").or_default().push(format!(
                    "{}|{}|{}",
                    cond.negated,
                    cond.op.as_str(),
                    col_str(&cond.left)
                ));
                out.entry("WHERE (no OP)")
                    .or_default()
                    .push(col_str(&cond.left));
            }
        }
        for col in &q.group_by {
            out.entry("GROUP BY").or_default().push(col_str(col));
            if q.having.is_none() {
                out.entry("GROUP BY (no HAVING)")
                    .or_default()
                    .push(col_str(col));
            }
        }
        if let Some(order) = &q.order_by {
            let cols: Vec<String> = order
                .items
                .iter()
                .map(|c| format!("{}:{}", agg_str(&c.agg), col_str(c)))
                .collect();
            out.entry("ORDER BY").or_default().push(format!(
                "{}|{:?}|{}",
                cols.join(","),
                order.direction,
                q.limit.is_some()
            ));
        }
        for tree in [&q.where_clause, &q.having].into_iter().flatten() {
            for connector in &tree.connectors {
                out.entry("AND/OR")
                    .or_default()
                    .push(connector.as_str().to_string());
            }
        }
        let mut kws = vec!["select".to_string()];
        if q.where_clause.is_some() {
            kws.push("where".into());
        }
        if !q.group_by.is_empty() {
            kws.push("group by".into());
        }
        if q.having.is_some() {
            kws.push("having".into());
        }
        if let Some(order) = &q.order_by {
            kws.push("order by".into());
            kws.push(
                match order.direction {
                    Direction::Asc => "asc",
                    Direction::Desc => "desc",
                }
                .into(),
            );
        }
        if q.limit.is_some() {
            kws.push("limit".into());
        }
        if q.select.distinct || q.select.items.iter().any(|i| i.distinct) {
            kws.push("distinct".into());
        }
        out.entry("KEYWORDS").or_default().extend(kws);
        if let Some((kind, operand)) = &q.set_op {
            out.entry("IUE")
                .or_default()
                .push(kind.as_str().to_string());
            collect(operand, out);
        }
    }

    fn from_tables(q: &SqlQuery) -> Vec<usize> {
        let mut tables: Vec<usize> = q.from.tables.iter().map(|t| t.0).collect();
        if let Some((_, operand)) = &q.set_op {
            tables.extend(from_tables(operand));
        }
        tables.sort();
        tables
    }

    fn multiset_intersection(a: &[String], b: &[String]) -> usize {
        // Naive counting: for each distinct unit, min of the two counts.
        let mut matched = 0;
        let mut seen: Vec<&String> = Vec::new();
        for unit in a {
            if seen.contains(&unit) {
                continue;
            }
            seen.push(unit);
            let count_a = a.iter().filter(|u| *u == unit).count();
            let count_b = b.iter().filter(|u| *u == unit).count();
            matched += count_a.min(count_b);
        }
        matched
    }

    /// Exact match: all ten unit multisets equal and the from-table
    /// multisets equal.
    pub fn exact(pred: &SqlQuery, gold: &SqlQuery) -> bool {
        if from_tables(pred) != from_tables(gold) {
            return false;
        }
        let pu = components(pred);
        let gu = components(gold);
        let empty = Vec::new();
        COMPONENTS.iter().all(|name| {
            let p = pu.get(name).unwrap_or(&empty);
            let g = gu.get(name).unwrap_or(&empty);
            p == g
        })
    }

    /// Corpus F1 per component from summed counts; 1.0 when a component is
    /// absent from both sides of every pair.
    pub fn f1(pairs: &[(SqlQuery, SqlQuery)]) -> BTreeMap<&'static str, f64> {
        let mut totals: BTreeMap<&'static str, (usize, usize, usize)> = BTreeMap::new();
        for (pred, gold) in pairs {
            let pu = components(pred);
            let gu = components(gold);
            let empty = Vec::new();
            for name in COMPONENTS {
                let p = pu.get(name).unwrap_or(&empty);
                let g = gu.get(name).unwrap_or(&empty);
                let entry = totals.entry(name).or_insert((0, 0, 0));
                entry.0 += p.len();
                entry.1 += g.len();
                entry.2 += multiset_intersection(p, g);
            }
        }
        COMPONENTS
            .iter()
            .map(|&name| {
                let (p, g, m) = totals.get(name).copied().unwrap_or((0, 0, 0));
                let f1 = if p + g == 0 {
                    1.0
                } else {
                    2.0 * m as f64 / (p + g) as f64
                };
                (name, f1)
            })
            .collect()
    }
}
