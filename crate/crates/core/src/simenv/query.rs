//! The simulated database's query language:
//!
//! ```text
//! SELECT <* | col, col, ...> FROM <table> [WHERE <col> <op> <literal> [AND ...]] [COUNT] [;]
//! ```
//!
//! Keywords are case-insensitive; literals are integers, decimals, quoted
//! strings or `true`/`false`. Every error message quotes the offending token.

use std::fmt;

use thiserror::Error;

use crate::table::{Cmp, Column, ColumnType, DataTable, TableError, Value};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct QueryError(pub String);

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(String),
    Str(String),
    Op(String),
    Star,
    Comma,
    LParen,
    RParen,
    Semi,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) | Tok::Num(w) | Tok::Op(w) => f.write_str(w),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Star => f.write_str("*"),
            Tok::Comma => f.write_str(","),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
            Tok::Semi => f.write_str(";"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Tok>, QueryError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '-' | '.')) {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c == '\'' || c == '"' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != c {
                i += 1;
            }
            if i == chars.len() {
                let text: String = chars[start..].iter().collect();
                return Err(QueryError(format!("unterminated string literal {text}")));
            }
            out.push(Tok::Str(chars[start + 1..i].iter().collect()));
            i += 1;
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if matches!(two.as_str(), "<=" | ">=" | "!=" | "<>" | "==") {
                out.push(Tok::Op(two));
                i += 2;
                continue;
            }
            out.push(match c {
                '=' | '<' | '>' => Tok::Op(c.to_string()),
                '*' => Tok::Star,
                ',' => Tok::Comma,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ';' => Tok::Semi,
                other => return Err(QueryError(format!("unexpected character '{other}'"))),
            });
            i += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    All,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub column: String,
    pub cmp: Cmp,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub projection: Projection,
    pub table: String,
    pub conditions: Vec<Condition>,
    pub count: bool,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_kw(t: Option<&Tok>, kw: &str) -> bool {
        matches!(t, Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn expected(&self, what: &str) -> QueryError {
        match self.toks.get(self.pos) {
            Some(t) => QueryError(format!("syntax error near '{t}': expected {what}")),
            None => QueryError(format!("syntax error at end of query: expected {what}")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if Self::is_kw(self.peek(), kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.expected(kw))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Word(w)) if !is_reserved(w) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.expected(what)),
        }
    }

    fn literal(&mut self) -> Result<Value, QueryError> {
        let value = match self.peek() {
            Some(Tok::Num(n)) => {
                if let Ok(i) = n.parse::<i64>() {
                    Value::Int(i)
                } else if let Ok(f) = n.parse::<f64>() {
                    Value::Float(f)
                } else {
                    return Err(QueryError(format!("invalid number '{n}'")));
                }
            }
            Some(Tok::Str(s)) => Value::Text(s.clone()),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("true") => Value::Bool(true),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("false") => Value::Bool(false),
            _ => return Err(self.expected("a literal value")),
        };
        self.pos += 1;
        Ok(value)
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        if self.toks.is_empty() {
            return Err(QueryError("syntax error: empty query, expected SELECT".into()));
        }
        self.keyword("SELECT")?;
        let projection = if self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            Projection::All
        } else {
            let mut cols = vec![self.ident("a column name or *")?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                cols.push(self.ident("a column name")?);
            }
            Projection::Columns(cols)
        };
        self.keyword("FROM")?;
        let table = self.ident("a table name")?;
        let mut conditions = Vec::new();
        if Self::is_kw(self.peek(), "WHERE") {
            self.pos += 1;
            loop {
                let column = self.ident("a column name")?;
                let cmp = match self.next() {
                    Some(Tok::Op(op)) => Cmp::parse(&op).expect("lexer only emits known operators"),
                    _ => {
                        self.pos -= 1;
                        return Err(self.expected("a comparison operator"));
                    }
                };
                let value = self.literal()?;
                conditions.push(Condition { column, cmp, value });
                if Self::is_kw(self.peek(), "AND") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        let count = if Self::is_kw(self.peek(), "COUNT") {
            self.pos += 1;
            true
        } else {
            false
        };
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
        if self.peek().is_some() {
            return Err(self.expected("end of query"));
        }
        Ok(Query { projection, table, conditions, count })
    }
}

fn is_reserved(w: &str) -> bool {
    ["select", "from", "where", "and", "count"].iter().any(|k| w.eq_ignore_ascii_case(k))
}

pub fn parse_query(src: &str) -> Result<Query, QueryError> {
    Parser { toks: lex(src)?, pos: 0 }.query()
}

impl Query {
    /// Runs against `table` (already resolved by name). Row order is the
    /// table's insertion order.
    pub fn execute(&self, table: &DataTable) -> Result<DataTable, QueryError> {
        let name = &self.table;
        let map = |e: TableError| match e {
            TableError::UnknownColumn(c) => QueryError(format!("unknown column '{c}' in table '{name}'")),
            other => QueryError(other.to_string()),
        };
        let mut current = table.clone();
        for cond in &self.conditions {
            current = current.filter(&cond.column, cond.cmp, &cond.value).map_err(map)?;
        }
        if let Projection::Columns(cols) = &self.projection {
            current = current.project(cols).map_err(map)?;
        }
        if self.count {
            return Ok(DataTable {
                columns: vec![Column::new("count", ColumnType::Int)],
                rows: vec![vec![Value::Int(current.rows.len() as i64)]],
            });
        }
        Ok(current)
    }
}
