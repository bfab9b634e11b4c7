//! Row-level parsing of delimited and fixed-width sample files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Timestamp,
    X,
    Y,
    Z,
    Label,
    Ignore,
}

impl ColumnRole {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "timestamp" => ColumnRole::Timestamp,
            "x" => ColumnRole::X,
            "y" => ColumnRole::Y,
            "z" => ColumnRole::Z,
            "label" => ColumnRole::Label,
            "ignore" => ColumnRole::Ignore,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimalSeparator {
    Dot,
    Comma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldLayout {
    /// Fields split on `delimiter`; a whitespace delimiter splits on runs of
    /// whitespace and ignores leading/trailing blanks.
    Delimited { delimiter: char },
    /// Fields cut at fixed character widths, one width per column.
    FixedWidth { widths: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSyntax {
    pub fields: FieldLayout,
    pub header_rows: usize,
    pub decimal_separator: DecimalSeparator,
    pub column_roles: Vec<ColumnRole>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {reason}")]
pub struct TableError {
    pub line: usize,
    pub reason: String,
}

/// One data row. `line` is 1-based in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub line: usize,
    pub timestamp: Option<f64>,
    pub values: Sample,
    pub label: Option<String>,
}

pub(crate) fn split_fields(line: &str, layout: &FieldLayout) -> Vec<String> {
    match layout {
        FieldLayout::Delimited { delimiter } if delimiter.is_whitespace() => {
            line.split_whitespace().map(str::to_string).collect()
        }
        FieldLayout::Delimited { delimiter } => {
            line.split(*delimiter).map(|f| f.trim().to_string()).collect()
        }
        FieldLayout::FixedWidth { widths } => {
            let chars: Vec<char> = line.chars().collect();
            let mut out = Vec::with_capacity(widths.len());
            let mut pos = 0;
            for (i, w) in widths.iter().enumerate() {
                if pos >= chars.len() {
                    break;
                }
                // the last column may be ragged
                let end = if i + 1 == widths.len() { chars.len() } else { (pos + w).min(chars.len()) };
                out.push(chars[pos..end].iter().collect::<String>().trim().to_string());
                pos += w;
            }
            out
        }
    }
}

pub(crate) fn parse_number(field: &str, decimal: DecimalSeparator) -> Result<f64, String> {
    let text = match decimal {
        DecimalSeparator::Dot => field.trim().to_string(),
        DecimalSeparator::Comma => {
            if field.contains('.') {
                return Err(format!("unexpected '.' in comma-decimal field {field:?}"));
            }
            field.trim().replace(',', ".")
        }
    };
    let value: f64 = text
        .parse()
        .map_err(|_| format!("unparseable number {field:?}"))?;
    if !value.is_finite() {
        return Err(format!("non-finite value {field:?}"));
    }
    Ok(value)
}

/// Iterates the data lines of `text`: header rows skipped, blank lines
/// dropped, carriage returns stripped. Yields `(1-based line, content)`.
pub(crate) fn data_lines(text: &str, header_rows: usize) -> impl Iterator<Item = (usize, &str)> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.lines()
        .enumerate()
        .skip(header_rows)
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses every data row of a sample file.
pub fn parse_table(text: &str, syntax: &FileSyntax) -> Result<Vec<Row>, TableError> {
    let n_roles = syntax.column_roles.len();
    let mut rows = Vec::new();
    for (line, content) in data_lines(text, syntax.header_rows) {
        let fields = split_fields(content, &syntax.fields);
        if fields.len() != n_roles {
            return Err(TableError {
                line,
                reason: format!("expected {n_roles} fields, found {}", fields.len()),
            });
        }
        let mut values = [0.0; 3];
        let mut timestamp = None;
        let mut label = None;
        for (role, field) in syntax.column_roles.iter().zip(&fields) {
            let num = || parse_number(field, syntax.decimal_separator).map_err(|reason| TableError { line, reason });
            match role {
                ColumnRole::X => values[0] = num()?,
                ColumnRole::Y => values[1] = num()?,
                ColumnRole::Z => values[2] = num()?,
                ColumnRole::Timestamp => timestamp = Some(num()?),
                ColumnRole::Label => label = Some(field.clone()),
                ColumnRole::Ignore => {}
            }
        }
        rows.push(Row {
            line,
            timestamp,
            values,
            label,
        });
    }
    Ok(rows)
}
