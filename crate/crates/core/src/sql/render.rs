//! Canonical SQL text from a bound query. Clause keywords are uppercase,
//! identifiers lowercase, aggregators lowercase; columns are qualified only
//! when the FROM clause holds more than one table.

use super::*;
use crate::schema::{ColumnId, DatabaseSchema};

pub fn render(q: &SqlQuery, schema: &DatabaseSchema) -> String {
    let mut out = String::new();
    render_query(q, schema, &mut out);
    out
}

fn render_query(q: &SqlQuery, schema: &DatabaseSchema, out: &mut String) {
    let qualify = q.from.tables.len() > 1;
    out.push_str("SELECT ");
    if q.select.distinct {
        out.push_str("DISTINCT ");
    }
    for (i, item) in q.select.items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        render_column(item, schema, qualify, out);
    }

    out.push_str(" FROM ");
    render_from(&q.from, schema, out);

    if let Some(tree) = &q.where_clause {
        out.push_str(" WHERE ");
        render_tree(tree, schema, qualify, out);
    }
    if !q.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        for (i, item) in q.group_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            render_column(item, schema, qualify, out);
        }
    }
    if let Some(tree) = &q.having {
        out.push_str(" HAVING ");
        render_tree(tree, schema, qualify, out);
    }
    if let Some(order) = &q.order_by {
        out.push_str(" ORDER BY ");
        for (i, item) in order.items.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            render_column(item, schema, qualify, out);
        }
        out.push(' ');
        out.push_str(order.direction.as_str());
    }
    if let Some(limit) = q.limit {
        out.push_str(" LIMIT ");
        out.push_str(&limit.to_string());
    }
    if let Some((kind, operand)) = &q.set_op {
        out.push(' ');
        out.push_str(kind.as_str());
        out.push(' ');
        render_query(operand, schema, out);
    }
}

fn render_from(from: &FromClause, schema: &DatabaseSchema, out: &mut String) {
    let mut emitted: Vec<bool> = vec![false; from.join_conditions.len()];
    for (k, &table) in from.tables.iter().enumerate() {
        if k > 0 {
            out.push_str(" JOIN ");
        }
        out.push_str(&table_name(schema, table));
        if k == 0 {
            continue;
        }
        // Attach every not-yet-emitted join condition whose endpoints both
        // live in the tables joined so far and that touches the new table.
        let in_scope = &from.tables[..=k];
        let mut first = true;
        for (ci, jc) in from.join_conditions.iter().enumerate() {
            if emitted[ci] {
                continue;
            }
            let lt = schema.column(jc.left).table_id;
            let rt = schema.column(jc.right).table_id;
            let (lt, rt) = match (lt, rt) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            let touches_new = lt == table || rt == table;
            let both_in_scope = in_scope.contains(&lt) && in_scope.contains(&rt);
            if touches_new && both_in_scope {
                out.push_str(if first { " ON " } else { " AND " });
                first = false;
                out.push_str(&qualified_column(schema, jc.left));
                out.push_str(" = ");
                out.push_str(&qualified_column(schema, jc.right));
                emitted[ci] = true;
            }
        }
    }
}

fn table_name(schema: &DatabaseSchema, table: crate::schema::TableId) -> String {
    schema.table(table).name.to_lowercase()
}

fn qualified_column(schema: &DatabaseSchema, column: ColumnId) -> String {
    let col = schema.column(column);
    match col.table_id {
        Some(t) => format!("{}.{}", table_name(schema, t), col.name.to_lowercase()),
        None => "*".to_string(),
    }
}

fn column_name(schema: &DatabaseSchema, column: ColumnId, qualify: bool) -> String {
    let col = schema.column(column);
    if col.is_star() {
        return "*".to_string();
    }
    if qualify {
        qualified_column(schema, column)
    } else {
        col.name.to_lowercase()
    }
}

fn render_column(item: &ColumnRef, schema: &DatabaseSchema, qualify: bool, out: &mut String) {
    let base = |out: &mut String| {
        out.push_str(&column_name(schema, item.column, qualify));
        if let Some((op, rhs)) = &item.arithmetic {
            out.push(' ');
            out.push_str(op.as_str());
            out.push(' ');
            render_column(rhs, schema, qualify, out);
        }
    };
    match item.agg {
        Some(agg) => {
            out.push_str(agg.as_str());
            out.push('(');
            if item.distinct {
                out.push_str("DISTINCT ");
            }
            base(out);
            out.push(')');
        }
        None => base(out),
    }
}

fn render_tree(tree: &ConditionTree, schema: &DatabaseSchema, qualify: bool, out: &mut String) {
    for (i, cond) in tree.conditions.iter().enumerate() {
        if i > 0 {
            out.push(' ');
            out.push_str(tree.connectors[i - 1].as_str());
            out.push(' ');
        }
        render_condition(cond, schema, qualify, out);
    }
}

fn render_condition(cond: &Condition, schema: &DatabaseSchema, qualify: bool, out: &mut String) {
    if cond.negated {
        out.push_str("NOT ");
    }
    render_column(&cond.left, schema, qualify, out);
    match (&cond.op, &cond.right) {
        (CmpOp::Between, CondRhs::Range(lo, hi)) => {
            out.push_str(" BETWEEN ");
            render_literal(lo, out);
            out.push_str(" AND ");
            render_literal(hi, out);
        }
        (op, rhs) => {
            out.push(' ');
            out.push_str(op.as_str());
            out.push(' ');
            match rhs {
                CondRhs::Literal(lit) => render_literal(lit, out),
                CondRhs::Column(col) => render_column(col, schema, qualify, out),
                CondRhs::Subquery(sub) => {
                    out.push('(');
                    render_query(sub, schema, out);
                    out.push(')');
                }
                CondRhs::Range(lo, hi) => {
                    // Only BETWEEN carries a range.
                    render_literal(lo, out);
                    out.push_str(" AND ");
                    render_literal(hi, out);
                }
            }
        }
    }
}

fn render_literal(lit: &Literal, out: &mut String) {
    match lit {
        Literal::Number(n) => out.push_str(n),
        Literal::Str(s) => {
            out.push('\'');
            out.push_str(&s.replace('\'', "''"));
            out.push('\'');
        }
    }
}
