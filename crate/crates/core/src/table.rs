//! Typed in-memory tables and the fixed set of transformations the table
//! Q/A tool may run over them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Ordering between comparable values; ints and floats compare
    /// numerically, other mixed kinds are incomparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            (Value::Null, Value::Null) => Some(Ordering::Equal),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int,
    Float,
    Text,
    Bool,
}

impl ColumnType {
    pub fn admits(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (_, Value::Null)
                | (ColumnType::Int, Value::Int(_))
                | (ColumnType::Float, Value::Int(_) | Value::Float(_))
                | (ColumnType::Text, Value::Text(_))
                | (ColumnType::Bool, Value::Bool(_))
        )
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Int => "int",
            ColumnType::Float => "float",
            ColumnType::Text => "text",
            ColumnType::Bool => "bool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: &str, ty: ColumnType) -> Self {
        Self { name: name.to_string(), ty }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("row {row} has {got} values, expected {expected}")]
    Arity { row: usize, got: usize, expected: usize },
    #[error("row {row}: value {value} does not fit column '{column}' ({ty})")]
    Type { row: usize, column: String, ty: ColumnType, value: String },
    #[error("cannot compare column '{column}' with {value}")]
    Incomparable { column: String, value: String },
    #[error("{func} needs a numeric column, '{column}' is {ty}")]
    NotNumeric { func: String, column: String, ty: ColumnType },
    #[error("{0} needs a column")]
    MissingColumn(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
}

/// Rows shown in rendered observations.
pub const RENDER_ROWS: usize = 10;

impl DataTable {
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Value>>) -> Result<Self, TableError> {
        let t = Self { columns, rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(TableError::Arity { row: r, got: row.len(), expected: self.columns.len() });
            }
            for (c, v) in self.columns.iter().zip(row) {
                if !c.ty.admits(v) {
                    return Err(TableError::Type { row: r, column: c.name.clone(), ty: c.ty, value: v.to_string() });
                }
            }
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn column_values(&self, name: &str) -> Result<Vec<&Value>, TableError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Rows kept where `column cmp value` holds.
    pub fn filter(&self, column: &str, cmp: Cmp, value: &Value) -> Result<DataTable, TableError> {
        let i = self.column_index(column)?;
        let incomparable = || TableError::Incomparable { column: column.to_string(), value: value.to_string() };
        if !matches!(value, Value::Null) && !self.columns[i].ty.admits(value) {
            let numeric = matches!(self.columns[i].ty, ColumnType::Int | ColumnType::Float);
            if !(numeric && value.as_f64().is_some()) {
                return Err(incomparable());
            }
        }
        let mut rows = Vec::new();
        for row in &self.rows {
            let keep = match row[i].compare(value) {
                Some(ord) => cmp.holds(ord),
                None if matches!(row[i], Value::Null) || matches!(value, Value::Null) => cmp == Cmp::Ne,
                None => return Err(incomparable()),
            };
            if keep {
                rows.push(row.clone());
            }
        }
        Ok(DataTable { columns: self.columns.clone(), rows })
    }

    pub fn project(&self, names: &[String]) -> Result<DataTable, TableError> {
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n)).collect::<Result<_, _>>()?;
        let columns = idx.iter().map(|&i| self.columns[i].clone()).collect();
        let rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
        DataTable::new(columns, rows)
    }

    /// Plain-text rendering with at most `max_rows` rows and an explicit
    /// marker when rows were left out.
    pub fn render(&self, max_rows: usize) -> String {
        let mut out = format!("{} rows x {} columns\n", self.rows.len(), self.columns.len());
        out.push_str(&self.column_names().join(" | "));
        out.push('\n');
        for row in self.rows.iter().take(max_rows) {
            let cells: Vec<String> = row.iter().map(Value::to_string).collect();
            out.push_str(&cells.join(" | "));
            out.push('\n');
        }
        if self.rows.len() > max_rows {
            out.push_str(&format!("... truncated: showing {max_rows} of {} rows\n", self.rows.len()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Cmp {
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            Cmp::Eq => ord == Ordering::Equal,
            Cmp::Ne => ord != Ordering::Equal,
            Cmp::Lt => ord == Ordering::Less,
            Cmp::Le => ord != Ordering::Greater,
            Cmp::Gt => ord == Ordering::Greater,
            Cmp::Ge => ord != Ordering::Less,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }

    pub fn parse(s: &str) -> Option<Cmp> {
        Some(match s {
            "=" | "==" => Cmp::Eq,
            "!=" | "<>" => Cmp::Ne,
            "<" => Cmp::Lt,
            "<=" => Cmp::Le,
            ">" => Cmp::Gt,
            ">=" => Cmp::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Mean,
}

/// The only transformations a table plan may contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum TableOp {
    Filter { column: String, cmp: Cmp, value: Value },
    Project { columns: Vec<String> },
    Aggregate {
        func: AggFunc,
        #[serde(default)]
        column: Option<String>,
        #[serde(default)]
        group_by: Option<String>,
    },
    Sort {
        column: String,
        #[serde(default)]
        descending: bool,
    },
    Head { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Filter,
    Project,
    Aggregate,
    Sort,
    Head,
}

impl TableOp {
    pub fn kind(&self) -> OpKind {
        match self {
            TableOp::Filter { .. } => OpKind::Filter,
            TableOp::Project { .. } => OpKind::Project,
            TableOp::Aggregate { .. } => OpKind::Aggregate,
            TableOp::Sort { .. } => OpKind::Sort,
            TableOp::Head { .. } => OpKind::Head,
        }
    }
}

fn aggregate(table: &DataTable, func: AggFunc, column: Option<&str>, rows: &[&Vec<Value>]) -> Result<Value, TableError> {
    let name = format!("{func:?}").to_lowercase();
    let Some(column) = column else {
        return match func {
            AggFunc::Count => Ok(Value::Int(rows.len() as i64)),
            _ => Err(TableError::MissingColumn(name)),
        };
    };
    let i = table.column_index(column)?;
    let values: Vec<&Value> = rows.iter().map(|r| &r[i]).filter(|v| !matches!(v, Value::Null)).collect();
    if func == AggFunc::Count {
        return Ok(Value::Int(values.len() as i64));
    }
    let ty = table.columns[i].ty;
    if matches!(func, AggFunc::Sum | AggFunc::Mean) && !matches!(ty, ColumnType::Int | ColumnType::Float) {
        return Err(TableError::NotNumeric { func: name, column: column.to_string(), ty });
    }
    Ok(match func {
        AggFunc::Count => unreachable!(),
        AggFunc::Sum if ty == ColumnType::Int => {
            Value::Int(values.iter().map(|v| if let Value::Int(x) = v { *x } else { 0 }).sum())
        }
        AggFunc::Sum => Value::Float(values.iter().filter_map(|v| v.as_f64()).sum()),
        AggFunc::Mean if values.is_empty() => Value::Null,
        AggFunc::Mean => Value::Float(values.iter().filter_map(|v| v.as_f64()).sum::<f64>() / values.len() as f64),
        AggFunc::Min | AggFunc::Max => {
            let mut best: Option<&Value> = None;
            for v in values {
                let replace = match best {
                    None => true,
                    Some(b) => {
                        let ord = v.compare(b).unwrap_or(Ordering::Equal);
                        (func == AggFunc::Min && ord == Ordering::Less) || (func == AggFunc::Max && ord == Ordering::Greater)
                    }
                };
                if replace {
                    best = Some(v);
                }
            }
            best.cloned().unwrap_or(Value::Null)
        }
    })
}

fn agg_type(table: &DataTable, func: AggFunc, column: Option<&str>) -> ColumnType {
    match (func, column.and_then(|c| table.column_index(c).ok())) {
        (AggFunc::Count, _) => ColumnType::Int,
        (AggFunc::Mean, _) => ColumnType::Float,
        (_, Some(i)) => table.columns[i].ty,
        (_, None) => ColumnType::Int,
    }
}

/// Applies one operation.
pub fn apply_op(table: &DataTable, op: &TableOp) -> Result<DataTable, TableError> {
    match op {
        TableOp::Filter { column, cmp, value } => table.filter(column, *cmp, value),
        TableOp::Project { columns } => table.project(columns),
        TableOp::Sort { column, descending } => {
            let i = table.column_index(column)?;
            let mut rows = table.rows.clone();
            rows.sort_by(|a, b| {
                let ord = a[i].compare(&b[i]).unwrap_or(Ordering::Equal);
                if *descending {
                    ord.reverse()
                } else {
                    ord
                }
            });
            Ok(DataTable { columns: table.columns.clone(), rows })
        }
        TableOp::Head { n } => Ok(DataTable {
            columns: table.columns.clone(),
            rows: table.rows.iter().take(*n).cloned().collect(),
        }),
        TableOp::Aggregate { func, column, group_by } => {
            let label = match column {
                Some(c) => format!("{}({c})", format!("{func:?}").to_lowercase()),
                None => format!("{func:?}").to_lowercase(),
            };
            let out_col = Column { name: label, ty: agg_type(table, *func, column.as_deref()) };
            match group_by {
                None => {
                    let all: Vec<&Vec<Value>> = table.rows.iter().collect();
                    let v = aggregate(table, *func, column.as_deref(), &all)?;
                    DataTable::new(vec![out_col], vec![vec![v]])
                }
                Some(g) => {
                    let gi = table.column_index(g)?;
                    // groups in order of first appearance
                    let mut order: Vec<String> = Vec::new();
                    let mut groups: BTreeMap<String, (Value, Vec<&Vec<Value>>)> = BTreeMap::new();
                    for row in &table.rows {
                        let key = format!("{:?}", row[gi]);
                        if !groups.contains_key(&key) {
                            order.push(key.clone());
                        }
                        groups.entry(key).or_insert_with(|| (row[gi].clone(), Vec::new())).1.push(row);
                    }
                    let mut rows = Vec::new();
                    for key in order {
                        let (gv, members) = &groups[&key];
                        rows.push(vec![gv.clone(), aggregate(table, *func, column.as_deref(), members)?]);
                    }
                    DataTable::new(vec![table.columns[gi].clone(), out_col], rows)
                }
            }
        }
    }
}

/// Runs `ops` in order, returning the result and the kinds actually
/// executed. Stops at the first failing operation.
pub fn run_plan(table: &DataTable, ops: &[TableOp]) -> Result<(DataTable, Vec<OpKind>), TableError> {
    let mut current = table.clone();
    let mut trace = Vec::new();
    for op in ops {
        current = apply_op(&current, op)?;
        trace.push(op.kind());
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters() -> DataTable {
        DataTable::new(
            vec![Column::new("cluster", ColumnType::Text), Column::new("tenant_count", ColumnType::Int)],
            vec![
                vec![Value::Text("cl-a".into()), Value::Int(0)],
                vec![Value::Text("cl-b".into()), Value::Int(3)],
                vec![Value::Text("cl-c".into()), Value::Int(5)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        let bad = DataTable::new(vec![Column::new("a", ColumnType::Int)], vec![vec![Value::Text("x".into())]]);
        assert!(matches!(bad, Err(TableError::Type { .. })));
        let dup = DataTable::new(vec![Column::new("a", ColumnType::Int), Column::new("a", ColumnType::Int)], vec![]);
        assert_eq!(dup.unwrap_err(), TableError::DuplicateColumn("a".into()));
    }

    #[test]
    fn plan_execution() {
        let plan = vec![
            TableOp::Filter { column: "tenant_count".into(), cmp: Cmp::Gt, value: Value::Int(0) },
            TableOp::Aggregate { func: AggFunc::Count, column: None, group_by: None },
        ];
        let (out, trace) = run_plan(&clusters(), &plan).unwrap();
        assert_eq!(out.rows, vec![vec![Value::Int(2)]]);
        assert_eq!(trace, [OpKind::Filter, OpKind::Aggregate]);

        let (sum, _) = run_plan(
            &clusters(),
            &[TableOp::Aggregate { func: AggFunc::Sum, column: Some("tenant_count".into()), group_by: None }],
        )
        .unwrap();
        assert_eq!(sum.rows[0][0], Value::Int(8));
        assert_eq!(sum.columns[0].name, "sum(tenant_count)");
    }

    #[test]
    fn missing_column_is_named() {
        let err = clusters()
            .filter("tenants", Cmp::Gt, &Value::Int(0))
            .unwrap_err();
        assert_eq!(err.to_string(), "unknown column 'tenants'");
        let err = clusters().filter("cluster", Cmp::Gt, &Value::Int(0)).unwrap_err();
        assert!(matches!(err, TableError::Incomparable { .. }));
    }

    #[test]
    fn sort_head_group() {
        let (t, _) = run_plan(
            &clusters(),
            &[TableOp::Sort { column: "tenant_count".into(), descending: true }, TableOp::Head { n: 1 }],
        )
        .unwrap();
        assert_eq!(t.rows, vec![vec![Value::Text("cl-c".into()), Value::Int(5)]]);
        let (g, _) = run_plan(
            &clusters(),
            &[TableOp::Aggregate { func: AggFunc::Count, column: None, group_by: Some("cluster".into()) }],
        )
        .unwrap();
        assert_eq!(g.rows.len(), 3);
    }

    #[test]
    fn render_truncates() {
        let rows = (0..12).map(|i| vec![Value::Int(i)]).collect();
        let t = DataTable::new(vec![Column::new("n", ColumnType::Int)], rows).unwrap();
        let text = t.render(RENDER_ROWS);
        assert!(text.starts_with("12 rows x 1 columns\nn\n0\n"));
        assert!(text.contains("truncated: showing 10 of 12 rows"));
        assert!(!text.contains("\n10\n"));
        assert!(!clusters().render(10).contains("truncated"));
    }

    #[test]
    fn plan_json_rejects_unknown_ops() {
        let ok: Vec<TableOp> =
            serde_json::from_str(r#"[{"op":"filter","column":"a","cmp":">=","value":1},{"op":"head","n":2}]"#).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(serde_json::from_str::<Vec<TableOp>>(r#"[{"op":"exec","code":"rm -rf"}]"#).is_err());
    }
}
