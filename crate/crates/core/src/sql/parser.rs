//! Recursive-descent parser for the Spider SQL subset, with schema binding.
//!
//! Parsing runs in two phases: a syntactic pass building a raw tree with
//! unresolved identifiers, then a binding pass that resolves table and
//! column names (aliases included) against the schema. Unresolvable
//! identifiers are reported, never guessed.

use super::lexer::{lex, Spanned, Tok};
use super::*;
use crate::schema::DatabaseSchema;

// ---------------------------------------------------------------------------
// Raw syntactic tree
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct RawColumn {
    qualifier: Option<String>,
    name: String, // "*" for the star column
}

#[derive(Debug, Clone)]
struct RawColumnExpr {
    agg: Option<AggFunc>,
    distinct: bool,
    column: RawColumn,
    arithmetic: Option<(ArithOp, Box<RawColumnExpr>)>,
    offset: usize,
}

#[derive(Debug, Clone)]
enum RawRhs {
    Literal(Literal),
    Range(Literal, Literal),
    Column(RawColumnExpr),
    Subquery(Box<RawQuery>),
}

#[derive(Debug, Clone)]
struct RawCondition {
    left: RawColumnExpr,
    op: CmpOp,
    right: RawRhs,
    negated: bool,
}

#[derive(Debug, Clone)]
struct RawTree {
    conditions: Vec<RawCondition>,
    connectors: Vec<Connector>,
}

#[derive(Debug, Clone)]
struct RawTableRef {
    name: String,
    alias: Option<String>,
    #[allow(dead_code)]
    offset: usize,
}

#[derive(Debug, Clone)]
struct RawFrom {
    tables: Vec<RawTableRef>,
    // Raw ON conditions; equality-between-columns is enforced at bind time.
    join_conditions: Vec<RawCondition>,
}

#[derive(Debug, Clone)]
struct RawQuery {
    distinct: bool,
    select: Vec<RawColumnExpr>,
    from: RawFrom,
    where_clause: Option<RawTree>,
    group_by: Vec<RawColumnExpr>,
    having: Option<RawTree>,
    order_by: Option<(Vec<RawColumnExpr>, Direction)>,
    limit: Option<u64>,
    set_op: Option<(SetOpKind, Box<RawQuery>)>,
}

// ---------------------------------------------------------------------------
// Token cursor
// ---------------------------------------------------------------------------

struct Cursor {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    /// Case-insensitive keyword check without consuming.
    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> SqlResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected {}", kw.to_uppercase())))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> SqlResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected {what}")))
        }
    }

    fn syntax(&self, message: impl Into<String>) -> SqlError {
        SqlError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn unsupported(&self, construct: impl Into<String>) -> SqlError {
        SqlError::Unsupported {
            offset: self.offset(),
            construct: construct.into(),
        }
    }
}

const CLAUSE_KEYWORDS: &[&str] = &[
    "from",
    "where",
    "group",
    "having",
    "order",
    "limit",
    "intersect",
    "union",
    "except",
    "join",
    "on",
    "and",
    "or",
    "asc",
    "desc",
    "left",
    "right",
    "inner",
    "outer",
    "cross",
    "full",
];

fn agg_from_name(name: &str) -> Option<AggFunc> {
    match name.to_ascii_lowercase().as_str() {
        "max" => Some(AggFunc::Max),
        "min" => Some(AggFunc::Min),
        "count" => Some(AggFunc::Count),
        "sum" => Some(AggFunc::Sum),
        "avg" => Some(AggFunc::Avg),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Syntactic pass
// ---------------------------------------------------------------------------

/// Subquery nesting cap; Spider stays within one or two levels.
const MAX_SUBQUERY_DEPTH: usize = 8;

fn parse_query(cur: &mut Cursor, set_op_allowed: bool, depth: usize) -> SqlResult<RawQuery> {
    if depth > MAX_SUBQUERY_DEPTH {
        return Err(cur.unsupported("subquery nesting deeper than the Spider subset"));
    }
    cur.expect_kw("select")?;
    let distinct = cur.eat_kw("distinct");
    let mut select = vec![parse_column_expr(cur)?];
    while cur.eat(&Tok::Comma) {
        select.push(parse_column_expr(cur)?);
    }

    cur.expect_kw("from")?;
    if cur.peek() == &Tok::LParen {
        return Err(cur.unsupported("subquery in FROM"));
    }
    let mut from = RawFrom {
        tables: vec![parse_table_ref(cur)?],
        join_conditions: Vec::new(),
    };
    loop {
        if cur.eat(&Tok::Comma) {
            from.tables.push(parse_table_ref(cur)?);
        } else if cur.at_kw("join") || cur.at_kw("inner") {
            cur.eat_kw("inner");
            cur.expect_kw("join")?;
            from.tables.push(parse_table_ref(cur)?);
            if cur.eat_kw("on") {
                from.join_conditions.push(parse_condition(cur, depth)?);
                while cur.at_kw("and") {
                    cur.bump();
                    from.join_conditions.push(parse_condition(cur, depth)?);
                }
            }
        } else if cur.at_kw("left")
            || cur.at_kw("right")
            || cur.at_kw("outer")
            || cur.at_kw("cross")
        {
            return Err(cur.unsupported("non-inner join"));
        } else {
            break;
        }
    }

    let where_clause = if cur.eat_kw("where") {
        Some(parse_condition_tree(cur, depth)?)
    } else {
        None
    };

    let mut group_by = Vec::new();
    if cur.eat_kw("group") {
        cur.expect_kw("by")?;
        group_by.push(parse_column_expr(cur)?);
        while cur.eat(&Tok::Comma) {
            group_by.push(parse_column_expr(cur)?);
        }
    }

    let having = if cur.eat_kw("having") {
        Some(parse_condition_tree(cur, depth)?)
    } else {
        None
    };

    let order_by = if cur.eat_kw("order") {
        cur.expect_kw("by")?;
        let mut items = vec![parse_column_expr(cur)?];
        let mut direction: Option<Direction> = None;
        loop {
            if cur.eat_kw("asc") {
                set_direction(cur, &mut direction, Direction::Asc)?;
            } else if cur.eat_kw("desc") {
                set_direction(cur, &mut direction, Direction::Desc)?;
            }
            if cur.eat(&Tok::Comma) {
                items.push(parse_column_expr(cur)?);
            } else {
                break;
            }
        }
        Some((items, direction.unwrap_or(Direction::Asc)))
    } else {
        None
    };

    let limit = if cur.eat_kw("limit") {
        match cur.bump() {
            Tok::Number(n) if !n.contains('.') => {
                Some(n.parse::<u64>().map_err(|_| SqlError::Syntax {
                    offset: cur.offset(),
                    message: format!("invalid LIMIT value {n:?}"),
                })?)
            }
            _ => {
                return Err(SqlError::Syntax {
                    offset: cur.offset(),
                    message: "expected integer after LIMIT".into(),
                })
            }
        }
    } else {
        None
    };

    let set_op = if cur.at_kw("intersect") || cur.at_kw("union") || cur.at_kw("except") {
        if !set_op_allowed {
            return Err(cur.unsupported("set operation chain longer than one"));
        }
        let kind = match cur.bump() {
            Tok::Ident(s) if s.eq_ignore_ascii_case("intersect") => SetOpKind::Intersect,
            Tok::Ident(s) if s.eq_ignore_ascii_case("union") => SetOpKind::Union,
            _ => SetOpKind::Except,
        };
        let operand = parse_query(cur, false, depth)?;
        Some((kind, Box::new(operand)))
    } else {
        None
    };

    Ok(RawQuery {
        distinct,
        select,
        from,
        where_clause,
        group_by,
        having,
        order_by,
        limit,
        set_op,
    })
}

fn set_direction(cur: &Cursor, slot: &mut Option<Direction>, dir: Direction) -> SqlResult<()> {
    match slot {
        None => {
            *slot = Some(dir);
            Ok(())
        }
        Some(existing) if *existing == dir => Ok(()),
        Some(_) => Err(cur.unsupported("mixed ORDER BY directions")),
    }
}

fn parse_table_ref(cur: &mut Cursor) -> SqlResult<RawTableRef> {
    let offset = cur.offset();
    let name = match cur.bump() {
        Tok::Ident(name) => name,
        _ => {
            return Err(SqlError::Syntax {
                offset,
                message: "expected table name".into(),
            })
        }
    };
    let alias = if cur.eat_kw("as") {
        match cur.bump() {
            Tok::Ident(a) => Some(a),
            _ => {
                return Err(SqlError::Syntax {
                    offset: cur.offset(),
                    message: "expected alias after AS".into(),
                })
            }
        }
    } else if let Tok::Ident(next) = cur.peek() {
        // Bare alias, e.g. "FROM dogs d"; clause keywords end the table ref.
        if CLAUSE_KEYWORDS.contains(&next.to_ascii_lowercase().as_str()) {
            None
        } else {
            match cur.bump() {
                Tok::Ident(a) => Some(a),
                _ => unreachable!(),
            }
        }
    } else {
        None
    };
    Ok(RawTableRef {
        name,
        alias,
        offset,
    })
}

fn parse_column_expr(cur: &mut Cursor) -> SqlResult<RawColumnExpr> {
    let offset = cur.offset();
    let mut base = parse_column_atom(cur)?;
    let arith = match cur.peek() {
        Tok::Plus => Some(ArithOp::Add),
        Tok::Minus => Some(ArithOp::Sub),
        Tok::Star => Some(ArithOp::Mul),
        Tok::Slash => Some(ArithOp::Div),
        _ => None,
    };
    if let Some(op) = arith {
        cur.bump();
        let rhs = parse_column_atom(cur)?;
        base.arithmetic = Some((op, Box::new(rhs)));
    }
    base.offset = offset;
    Ok(base)
}

fn parse_column_atom(cur: &mut Cursor) -> SqlResult<RawColumnExpr> {
    let offset = cur.offset();
    match cur.peek().clone() {
        Tok::Star => {
            cur.bump();
            Ok(RawColumnExpr {
                agg: None,
                distinct: false,
                column: RawColumn {
                    qualifier: None,
                    name: "*".into(),
                },
                arithmetic: None,
                offset,
            })
        }
        Tok::Ident(name) => {
            if let Some(agg) = agg_from_name(&name) {
                // Aggregate call only when followed by an opening paren;
                // otherwise it is a plain column named e.g. "count".
                if self_peek_second(cur) == Some(Tok::LParen) {
                    cur.bump();
                    cur.expect(&Tok::LParen, "'('")?;
                    let distinct = cur.eat_kw("distinct");
                    let mut inner = parse_column_expr(cur)?;
                    cur.expect(&Tok::RParen, "')'")?;
                    if inner.agg.is_some() {
                        return Err(SqlError::Unsupported {
                            offset,
                            construct: "nested aggregate".into(),
                        });
                    }
                    inner.agg = Some(agg);
                    inner.distinct = distinct;
                    inner.offset = offset;
                    return Ok(inner);
                }
            }
            cur.bump();
            if cur.eat(&Tok::Dot) {
                match cur.bump() {
                    Tok::Ident(col) => Ok(RawColumnExpr {
                        agg: None,
                        distinct: false,
                        column: RawColumn {
                            qualifier: Some(name),
                            name: col,
                        },
                        arithmetic: None,
                        offset,
                    }),
                    Tok::Star => Ok(RawColumnExpr {
                        agg: None,
                        distinct: false,
                        column: RawColumn {
                            qualifier: Some(name),
                            name: "*".into(),
                        },
                        arithmetic: None,
                        offset,
                    }),
                    _ => Err(SqlError::Syntax {
                        offset: cur.offset(),
                        message: "expected column name after '.'".into(),
                    }),
                }
            } else {
                Ok(RawColumnExpr {
                    agg: None,
                    distinct: false,
                    column: RawColumn {
                        qualifier: None,
                        name,
                    },
                    arithmetic: None,
                    offset,
                })
            }
        }
        _ => Err(cur.syntax("expected column expression")),
    }
}

fn self_peek_second(cur: &Cursor) -> Option<Tok> {
    cur.tokens.get(cur.pos + 1).map(|s| s.tok.clone())
}

fn parse_condition_tree(cur: &mut Cursor, depth: usize) -> SqlResult<RawTree> {
    let mut conditions = vec![parse_condition(cur, depth)?];
    let mut connectors = Vec::new();
    loop {
        if cur.eat_kw("and") {
            connectors.push(Connector::And);
        } else if cur.eat_kw("or") {
            connectors.push(Connector::Or);
        } else {
            break;
        }
        conditions.push(parse_condition(cur, depth)?);
    }
    Ok(RawTree {
        conditions,
        connectors,
    })
}

fn parse_condition(cur: &mut Cursor, depth: usize) -> SqlResult<RawCondition> {
    let negated = cur.eat_kw("not");
    let left = parse_column_expr(cur)?;

    if cur.eat_kw("between") {
        let lo = parse_literal(cur)?;
        cur.expect_kw("and")?;
        let hi = parse_literal(cur)?;
        return Ok(RawCondition {
            left,
            op: CmpOp::Between,
            right: RawRhs::Range(lo, hi),
            negated,
        });
    }

    let not_inner = cur.eat_kw("not");
    if cur.eat_kw("like") {
        let lit = parse_literal(cur)?;
        return Ok(RawCondition {
            left,
            op: if not_inner {
                CmpOp::NotLike
            } else {
                CmpOp::Like
            },
            right: RawRhs::Literal(lit),
            negated,
        });
    }
    if cur.eat_kw("in") {
        cur.expect(&Tok::LParen, "'(' after IN")?;
        if !cur.at_kw("select") {
            return Err(cur.unsupported("IN over a literal list"));
        }
        let sub = parse_query(cur, true, depth + 1)?;
        cur.expect(&Tok::RParen, "')'")?;
        return Ok(RawCondition {
            left,
            op: if not_inner { CmpOp::NotIn } else { CmpOp::In },
            right: RawRhs::Subquery(Box::new(sub)),
            negated,
        });
    }
    if not_inner {
        return Err(cur.syntax("expected LIKE or IN after NOT"));
    }

    let op = match cur.peek() {
        Tok::Eq => CmpOp::Eq,
        Tok::Neq => CmpOp::Neq,
        Tok::Gt => CmpOp::Gt,
        Tok::Lt => CmpOp::Lt,
        Tok::Ge => CmpOp::Ge,
        Tok::Le => CmpOp::Le,
        Tok::Ident(s) if s.eq_ignore_ascii_case("is") || s.eq_ignore_ascii_case("exists") => {
            return Err(cur.unsupported(format!("operator {}", s.to_uppercase())));
        }
        _ => return Err(cur.syntax("expected comparison operator")),
    };
    cur.bump();

    let right = match cur.peek().clone() {
        Tok::LParen => {
            cur.bump();
            if !cur.at_kw("select") {
                return Err(cur.syntax("expected subquery after '('"));
            }
            let sub = parse_query(cur, true, depth + 1)?;
            cur.expect(&Tok::RParen, "')'")?;
            RawRhs::Subquery(Box::new(sub))
        }
        Tok::Number(_) | Tok::Str(_) | Tok::Minus => RawRhs::Literal(parse_literal(cur)?),
        Tok::Ident(_) | Tok::Star => RawRhs::Column(parse_column_expr(cur)?),
        _ => return Err(cur.syntax("expected literal, column, or subquery")),
    };

    Ok(RawCondition {
        left,
        op,
        right,
        negated,
    })
}

fn parse_literal(cur: &mut Cursor) -> SqlResult<Literal> {
    match cur.bump() {
        Tok::Number(n) => Ok(Literal::Number(n)),
        Tok::Str(s) => Ok(Literal::Str(s)),
        Tok::Minus => match cur.bump() {
            Tok::Number(n) => Ok(Literal::Number(format!("-{n}"))),
            _ => Err(SqlError::Syntax {
                offset: cur.offset(),
                message: "expected number after '-'".into(),
            }),
        },
        Tok::Ident(s) => {
            // Bare-word literals appear in a few predictions; treat as string.
            Ok(Literal::Str(s))
        }
        _ => Err(SqlError::Syntax {
            offset: cur.offset(),
            message: "expected literal".into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Binding pass
// ---------------------------------------------------------------------------

struct Scope<'a> {
    schema: &'a DatabaseSchema,
    /// alias or table name (lowercase) -> table id
    names: Vec<(String, TableId)>,
    tables: Vec<TableId>,
}

impl<'a> Scope<'a> {
    fn build(schema: &'a DatabaseSchema, from: &RawFrom) -> SqlResult<Self> {
        let mut names = Vec::new();
        let mut tables = Vec::new();
        for table_ref in &from.tables {
            let table =
                schema
                    .table_by_name(&table_ref.name)
                    .ok_or_else(|| SqlError::UnknownTable {
                        name: table_ref.name.clone(),
                    })?;
            tables.push(table.id);
            names.push((table_ref.name.to_lowercase(), table.id));
            if let Some(alias) = &table_ref.alias {
                names.push((alias.to_lowercase(), table.id));
            }
        }
        Ok(Scope {
            schema,
            names,
            tables,
        })
    }

    fn resolve_table(&self, name: &str) -> SqlResult<TableId> {
        let lower = name.to_lowercase();
        self.names
            .iter()
            .find(|(n, _)| *n == lower)
            .map(|(_, id)| *id)
            .ok_or_else(|| SqlError::UnknownTable {
                name: name.to_string(),
            })
    }

    fn resolve_column(&self, raw: &RawColumn) -> SqlResult<ColumnId> {
        if raw.name == "*" {
            return Ok(self.schema.star_column_id());
        }
        match &raw.qualifier {
            Some(qualifier) => {
                let table = self.resolve_table(qualifier)?;
                self.schema
                    .column_in_table(table, &raw.name)
                    .map(|c| c.id)
                    .ok_or_else(|| SqlError::UnknownColumn {
                        name: format!("{}.{}", qualifier, raw.name),
                    })
            }
            None => {
                let mut found = Vec::new();
                for &table in &self.tables {
                    if let Some(col) = self.schema.column_in_table(table, &raw.name) {
                        found.push(col.id);
                    }
                }
                found.sort();
                found.dedup();
                match found.len() {
                    0 => Err(SqlError::UnknownColumn {
                        name: raw.name.clone(),
                    }),
                    1 => Ok(found[0]),
                    _ => Err(SqlError::AmbiguousColumn {
                        name: raw.name.clone(),
                    }),
                }
            }
        }
    }

    fn bind_column_expr(&self, raw: &RawColumnExpr) -> SqlResult<ColumnRef> {
        let column = self.resolve_column(&raw.column)?;
        let is_star = self.schema.column(column).is_star();
        if is_star && !matches!(raw.agg, None | Some(AggFunc::Count)) {
            return Err(SqlError::Invalid {
                message: format!(
                    "aggregator {} is not valid on the star column",
                    raw.agg.unwrap().as_str()
                ),
            });
        }
        let arithmetic = match &raw.arithmetic {
            Some((op, rhs)) => Some((*op, Box::new(self.bind_column_expr(rhs)?))),
            None => None,
        };
        Ok(ColumnRef {
            column,
            agg: raw.agg,
            distinct: raw.distinct,
            arithmetic,
        })
    }

    fn bind_tree(&self, raw: &RawTree, schema: &DatabaseSchema) -> SqlResult<ConditionTree> {
        let conditions = raw
            .conditions
            .iter()
            .map(|c| self.bind_condition(c, schema))
            .collect::<SqlResult<Vec<_>>>()?;
        Ok(ConditionTree {
            conditions,
            connectors: raw.connectors.clone(),
        })
    }

    fn bind_condition(&self, raw: &RawCondition, schema: &DatabaseSchema) -> SqlResult<Condition> {
        let left = self.bind_column_expr(&raw.left)?;
        let right = match &raw.right {
            RawRhs::Literal(lit) => CondRhs::Literal(lit.clone()),
            RawRhs::Range(lo, hi) => CondRhs::Range(lo.clone(), hi.clone()),
            RawRhs::Column(col) => CondRhs::Column(self.bind_column_expr(col)?),
            RawRhs::Subquery(sub) => {
                if !raw.op.admits_subquery() {
                    return Err(SqlError::Invalid {
                        message: format!("operator {} does not admit a subquery", raw.op.as_str()),
                    });
                }
                CondRhs::Subquery(Box::new(bind_query(sub, schema)?))
            }
        };
        Ok(Condition {
            left,
            op: raw.op,
            right,
            negated: raw.negated,
        })
    }
}

fn bind_query(raw: &RawQuery, schema: &DatabaseSchema) -> SqlResult<SqlQuery> {
    let scope = Scope::build(schema, &raw.from)?;

    let mut join_conditions = Vec::new();
    for cond in &raw.from.join_conditions {
        if cond.op != CmpOp::Eq || cond.negated {
            return Err(SqlError::Invalid {
                message: "join conditions must be column equalities".into(),
            });
        }
        let left = scope.bind_column_expr(&cond.left)?;
        let right = match &cond.right {
            RawRhs::Column(col) => scope.bind_column_expr(col)?,
            _ => {
                return Err(SqlError::Invalid {
                    message: "join conditions must compare two columns".into(),
                })
            }
        };
        if left.agg.is_some()
            || right.agg.is_some()
            || left.arithmetic.is_some()
            || right.arithmetic.is_some()
        {
            return Err(SqlError::Invalid {
                message: "join conditions must compare plain columns".into(),
            });
        }
        join_conditions.push(JoinCondition {
            left: left.column,
            right: right.column,
        });
    }

    let mut tables = scope.tables.clone();
    tables.sort();
    tables.dedup();

    Ok(SqlQuery {
        select: SelectClause {
            distinct: raw.distinct,
            items: raw
                .select
                .iter()
                .map(|e| scope.bind_column_expr(e))
                .collect::<SqlResult<Vec<_>>>()?,
        },
        from: FromClause {
            tables,
            join_conditions,
        },
        where_clause: raw
            .where_clause
            .as_ref()
            .map(|t| scope.bind_tree(t, schema))
            .transpose()?,
        group_by: raw
            .group_by
            .iter()
            .map(|e| scope.bind_column_expr(e))
            .collect::<SqlResult<Vec<_>>>()?,
        having: raw
            .having
            .as_ref()
            .map(|t| scope.bind_tree(t, schema))
            .transpose()?,
        order_by: raw
            .order_by
            .as_ref()
            .map(|(items, direction)| {
                Ok(OrderByClause {
                    items: items
                        .iter()
                        .map(|e| scope.bind_column_expr(e))
                        .collect::<SqlResult<Vec<_>>>()?,
                    direction: *direction,
                })
            })
            .transpose()?,
        limit: raw.limit,
        set_op: raw
            .set_op
            .as_ref()
            .map(|(kind, operand)| Ok((*kind, Box::new(bind_query(operand, schema)?))))
            .transpose()?,
    })
}

pub fn parse(text: &str, schema: &DatabaseSchema) -> SqlResult<SqlQuery> {
    let tokens = lex(text)?;
    let mut cur = Cursor { tokens, pos: 0 };
    let raw = parse_query(&mut cur, true, 0)?;
    cur.eat(&Tok::Semi);
    if cur.peek() != &Tok::Eof {
        return Err(cur.syntax("unexpected trailing input"));
    }
    bind_query(&raw, schema)
}
