//! Canonical IR for the Spider SQL subset.
//!
//! The grammar covers what the Spider datasets use: select / from with inner
//! joins / where / group by / having / order by / limit, one level of
//! INTERSECT / UNION / EXCEPT, and subqueries on the right-hand side of
//! conditions. Window functions, CTEs, and correlated subqueries are rejected
//! as unsupported rather than guessed at.
//!
//! Parsing is pure and stateless; queries are immutable values.

mod lexer;
mod parser;
mod render;

use crate::schema::{ColumnId, DatabaseSchema, TableId};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown table {name:?}")]
    UnknownTable { name: String },

    #[error("unknown column {name:?}")]
    UnknownColumn { name: String },

    #[error("ambiguous column {name:?}")]
    AmbiguousColumn { name: String },

    #[error("unsupported construct at offset {offset}: {construct}")]
    Unsupported { offset: usize, construct: String },

    #[error("invalid query: {message}")]
    Invalid { message: String },
}

pub type SqlResult<T> = std::result::Result<T, SqlError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AggFunc {
    Max,
    Min,
    Count,
    Sum,
    Avg,
}

impl AggFunc {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggFunc::Max => "max",
            AggFunc::Min => "min",
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// A column expression: base column, optional aggregator and DISTINCT, and
/// an optional arithmetic combination with a second column.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnRef {
    pub column: ColumnId,
    pub agg: Option<AggFunc>,
    pub distinct: bool,
    pub arithmetic: Option<(ArithOp, Box<ColumnRef>)>,
}

impl ColumnRef {
    pub fn plain(column: ColumnId) -> Self {
        ColumnRef {
            column,
            agg: None,
            distinct: false,
            arithmetic: None,
        }
    }

    pub fn aggregated(agg: AggFunc, column: ColumnId) -> Self {
        ColumnRef {
            column,
            agg: Some(agg),
            distinct: false,
            arithmetic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Neq,
    Gt,
    Lt,
    Ge,
    Le,
    Between,
    Like,
    NotLike,
    In,
    NotIn,
}

impl CmpOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Neq => "!=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
            CmpOp::Between => "BETWEEN",
            CmpOp::Like => "LIKE",
            CmpOp::NotLike => "NOT LIKE",
            CmpOp::In => "IN",
            CmpOp::NotIn => "NOT IN",
        }
    }

    /// Ops that admit a subquery on the right-hand side.
    pub fn admits_subquery(&self) -> bool {
        matches!(
            self,
            CmpOp::Eq
                | CmpOp::Neq
                | CmpOp::Gt
                | CmpOp::Lt
                | CmpOp::Ge
                | CmpOp::Le
                | CmpOp::In
                | CmpOp::NotIn
        )
    }
}

/// Literals are preserved verbatim in the IR; exact match ignores them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Number(String),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CondRhs {
    Literal(Literal),
    Range(Literal, Literal),
    Column(ColumnRef),
    Subquery(Box<SqlQuery>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub left: ColumnRef,
    pub op: CmpOp,
    pub right: CondRhs,
    pub negated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Connector {
    And,
    Or,
}

impl Connector {
    pub fn as_str(&self) -> &'static str {
        match self {
            Connector::And => "AND",
            Connector::Or => "OR",
        }
    }
}

/// Conditions joined pairwise by connectors; `connectors.len()` is always
/// `conditions.len() - 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionTree {
    pub conditions: Vec<Condition>,
    pub connectors: Vec<Connector>,
}

impl ConditionTree {
    pub fn single(condition: Condition) -> Self {
        ConditionTree {
            conditions: vec![condition],
            connectors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SelectClause {
    pub distinct: bool,
    pub items: Vec<ColumnRef>,
}

/// An equality between two columns of distinct tables, kept out of the WHERE
/// tree so the metric ignores join plumbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JoinCondition {
    pub left: ColumnId,
    pub right: ColumnId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FromClause {
    pub tables: Vec<TableId>,
    pub join_conditions: Vec<JoinCondition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Asc,
    Desc,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Asc => "ASC",
            Direction::Desc => "DESC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderByClause {
    pub items: Vec<ColumnRef>,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SetOpKind {
    Intersect,
    Union,
    Except,
}

impl SetOpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetOpKind::Intersect => "INTERSECT",
            SetOpKind::Union => "UNION",
            SetOpKind::Except => "EXCEPT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SqlQuery {
    pub select: SelectClause,
    pub from: FromClause,
    pub where_clause: Option<ConditionTree>,
    pub group_by: Vec<ColumnRef>,
    pub having: Option<ConditionTree>,
    pub order_by: Option<OrderByClause>,
    pub limit: Option<u64>,
    pub set_op: Option<(SetOpKind, Box<SqlQuery>)>,
}

/// Parse a Spider-subset SQL string and bind it against the schema.
pub fn parse_sql(text: &str, schema: &DatabaseSchema) -> SqlResult<SqlQuery> {
    parser::parse(text, schema)
}

/// Serialize to canonical SQL text. `parse_sql(serialize(q))` equals
/// `canonicalize(q)` for every bound query.
pub fn serialize(query: &SqlQuery, schema: &DatabaseSchema) -> String {
    render::render(&canonicalize(query), schema)
}

/// Canonical form: from-tables sorted and deduplicated, commutative join
/// conditions ordered by column id, negation folded into ops where one
/// exists, string literals single-quoted lowercase. Idempotent.
pub fn canonicalize(query: &SqlQuery) -> SqlQuery {
    let mut q = query.clone();
    canonicalize_in_place(&mut q);
    q
}

fn canonicalize_in_place(q: &mut SqlQuery) {
    q.from.tables.sort();
    q.from.tables.dedup();
    for jc in &mut q.from.join_conditions {
        if jc.right < jc.left {
            std::mem::swap(&mut jc.left, &mut jc.right);
        }
    }
    q.from.join_conditions.sort();
    q.from.join_conditions.dedup();
    if let Some(tree) = &mut q.where_clause {
        canonicalize_tree(tree);
    }
    if let Some(tree) = &mut q.having {
        canonicalize_tree(tree);
    }
    if let Some((_, operand)) = &mut q.set_op {
        canonicalize_in_place(operand);
    }
}

fn canonicalize_tree(tree: &mut ConditionTree) {
    for cond in &mut tree.conditions {
        if cond.negated {
            // Fold the NOT prefix into the operator where a combined form
            // exists, so NOT x LIKE y and x NOT LIKE y compare equal.
            let folded = match cond.op {
                CmpOp::Like => Some(CmpOp::NotLike),
                CmpOp::In => Some(CmpOp::NotIn),
                CmpOp::Eq => Some(CmpOp::Neq),
                CmpOp::Neq => Some(CmpOp::Eq),
                _ => None,
            };
            if let Some(op) = folded {
                cond.op = op;
                cond.negated = false;
            }
        }
        match &mut cond.right {
            CondRhs::Literal(lit) => canonicalize_literal(lit),
            CondRhs::Range(lo, hi) => {
                canonicalize_literal(lo);
                canonicalize_literal(hi);
            }
            CondRhs::Subquery(sub) => canonicalize_in_place(sub),
            CondRhs::Column(_) => {}
        }
    }
}

fn canonicalize_literal(lit: &mut Literal) {
    if let Literal::Str(s) = lit {
        *s = s.to_lowercase();
    }
}
