//! Driver manifests: TOML documents that tell the platform how a foreign
//! dataset is laid out on disk and how its files read.
//!
//! ```toml
//! driver_id = "mobiact_like"
//! layout = "{activity}/{subject}_{trial}.csv"
//! includes_gravity = true
//! unit = "m_per_s2"
//! rate = "from_timestamp_column"
//! timestamp_scale = 0.001
//!
//! [file_syntax]
//! kind = "delimited"
//! delimiter = ","
//! header_rows = 1
//! decimal_separator = "dot"
//! column_roles = ["timestamp", "x", "y", "z", "label"]
//!
//! [label_source]
//! kind = "per_row_column"
//! ```

use std::str::FromStr;

use thiserror::Error;
use toml::{Table, Value};

use super::layout::LayoutPattern;
use super::table::{ColumnRole, DecimalSeparator, FieldLayout, FileSyntax};
use crate::aligner::AxisMap;
use crate::model::{line_of, DeclaredUnit, SensorKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifestError {
    #[error("manifest syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("manifest field {field:?}: {reason}")]
    Schema { field: String, reason: String },
}

fn schema(field: &str, reason: impl Into<String>) -> ManifestError {
    ManifestError::Schema {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSource {
    Fixed(f64),
    FromTimestampColumn,
}

/// Column layout of a sidecar label file. Indices are row indices into the
/// sample file, end exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SidecarSpec {
    /// Path relative to the sample file's directory; may use layout captures.
    pub path: LayoutPattern,
    pub fields: FieldLayout,
    pub header_rows: usize,
    pub start_column: usize,
    pub end_column: usize,
    pub label_column: usize,
    pub n_columns: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelSource {
    PathCapture(String),
    PerRowColumn,
    SidecarFile(SidecarSpec),
    /// Recordings are imported without labels.
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverManifest {
    pub driver_id: String,
    pub layout: LayoutPattern,
    pub file_syntax: FileSyntax,
    pub unit: DeclaredUnit,
    pub rate: RateSource,
    /// Seconds per timestamp-column unit.
    pub timestamp_scale: f64,
    pub includes_gravity: bool,
    pub sensor_kind: SensorKind,
    pub axis_map: AxisMap,
    pub label_source: LabelSource,
}

const TOP_KEYS: &[&str] = &[
    "driver_id",
    "layout",
    "includes_gravity",
    "unit",
    "rate",
    "timestamp_scale",
    "sensor_kind",
    "axis_map",
    "file_syntax",
    "label_source",
];
const SYNTAX_KEYS: &[&str] = &[
    "kind",
    "delimiter",
    "column_widths",
    "header_rows",
    "decimal_separator",
    "column_roles",
];
const SIDECAR_KEYS: &[&str] = &[
    "kind",
    "group",
    "path",
    "delimiter",
    "header_rows",
    "columns",
];

fn check_keys(table: &Table, allowed: &[&str], prefix: &str) -> Result<(), ManifestError> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(schema(&format!("{prefix}{key}"), "unknown key"));
        }
    }
    Ok(())
}

fn req<'a>(table: &'a Table, key: &str, field: &str) -> Result<&'a Value, ManifestError> {
    table.get(key).ok_or_else(|| schema(field, "missing"))
}

fn as_str<'a>(v: &'a Value, field: &str) -> Result<&'a str, ManifestError> {
    v.as_str().ok_or_else(|| schema(field, "expected a string"))
}

fn opt_str<'a>(table: &'a Table, key: &str, field: &str) -> Result<Option<&'a str>, ManifestError> {
    table.get(key).map(|v| as_str(v, field)).transpose()
}

fn opt_count(table: &Table, key: &str, field: &str) -> Result<Option<usize>, ManifestError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(_) => Err(schema(field, "expected a non-negative integer")),
    }
}

fn delimiter(table: &Table, field: &str) -> Result<char, ManifestError> {
    let text = opt_str(table, "delimiter", field)?.unwrap_or(",");
    let mut chars = text.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c != '\n' && c != '\r' => Ok(c),
        _ => Err(schema(field, "must be exactly one character")),
    }
}

fn parse_file_syntax(table: &Table) -> Result<FileSyntax, ManifestError> {
    check_keys(table, SYNTAX_KEYS, "file_syntax.")?;
    let roles_value = req(table, "column_roles", "file_syntax.column_roles")?;
    let roles_array = roles_value
        .as_array()
        .ok_or_else(|| schema("file_syntax.column_roles", "expected an array of strings"))?;
    let mut column_roles = Vec::with_capacity(roles_array.len());
    for v in roles_array {
        let s = as_str(v, "file_syntax.column_roles")?;
        column_roles.push(
            ColumnRole::parse(s)
                .ok_or_else(|| schema("file_syntax.column_roles", format!("unknown role {s:?}")))?,
        );
    }
    for (role, name) in [(ColumnRole::X, "x"), (ColumnRole::Y, "y"), (ColumnRole::Z, "z")] {
        match column_roles.iter().filter(|r| **r == role).count() {
            0 => return Err(schema("file_syntax.column_roles", format!("missing {name}"))),
            1 => {}
            _ => return Err(schema("file_syntax.column_roles", format!("duplicate {name}"))),
        }
    }
    for (role, name) in [(ColumnRole::Timestamp, "timestamp"), (ColumnRole::Label, "label")] {
        if column_roles.iter().filter(|r| **r == role).count() > 1 {
            return Err(schema("file_syntax.column_roles", format!("duplicate {name}")));
        }
    }

    let decimal_separator = match opt_str(table, "decimal_separator", "file_syntax.decimal_separator")? {
        None | Some("dot") => DecimalSeparator::Dot,
        Some("comma") => DecimalSeparator::Comma,
        Some(other) => {
            return Err(schema(
                "file_syntax.decimal_separator",
                format!("expected \"dot\" or \"comma\", got {other:?}"),
            ))
        }
    };

    let kind = as_str(req(table, "kind", "file_syntax.kind")?, "file_syntax.kind")?;
    let fields = match kind {
        "delimited" => {
            if table.contains_key("column_widths") {
                return Err(schema("file_syntax.column_widths", "only valid for fixed_width files"));
            }
            let delimiter = delimiter(table, "file_syntax.delimiter")?;
            if decimal_separator == DecimalSeparator::Comma && delimiter == ',' {
                return Err(schema(
                    "file_syntax.delimiter",
                    "',' cannot be both delimiter and decimal separator",
                ));
            }
            if delimiter == '.' || delimiter.is_ascii_digit() || delimiter == '-' {
                return Err(schema("file_syntax.delimiter", format!("{delimiter:?} would split numbers")));
            }
            FieldLayout::Delimited { delimiter }
        }
        "fixed_width" => {
            if table.contains_key("delimiter") {
                return Err(schema("file_syntax.delimiter", "not valid for fixed_width files"));
            }
            let widths = req(table, "column_widths", "file_syntax.column_widths")?
                .as_array()
                .ok_or_else(|| schema("file_syntax.column_widths", "expected an array of integers"))?
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    _ => Err(schema("file_syntax.column_widths", "widths must be positive integers")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if widths.len() != column_roles.len() {
                return Err(schema(
                    "file_syntax.column_widths",
                    format!("{} widths for {} column roles", widths.len(), column_roles.len()),
                ));
            }
            FieldLayout::FixedWidth { widths }
        }
        other => {
            return Err(schema(
                "file_syntax.kind",
                format!("expected \"delimited\" or \"fixed_width\", got {other:?}"),
            ))
        }
    };

    Ok(FileSyntax {
        fields,
        header_rows: opt_count(table, "header_rows", "file_syntax.header_rows")?.unwrap_or(0),
        decimal_separator,
        column_roles,
    })
}

fn parse_sidecar(table: &Table) -> Result<SidecarSpec, ManifestError> {
    let path_text = as_str(req(table, "path", "label_source.path")?, "label_source.path")?;
    let path = LayoutPattern::parse(path_text).map_err(|r| schema("label_source.path", r))?;
    if path.has_wildcards() {
        return Err(schema("label_source.path", "sidecar path cannot contain wildcards"));
    }
    let delimiter = delimiter(table, "label_source.delimiter")?;
    let columns = req(table, "columns", "label_source.columns")?
        .as_array()
        .ok_or_else(|| schema("label_source.columns", "expected an array of strings"))?;
    let mut names = Vec::new();
    for v in columns {
        names.push(as_str(v, "label_source.columns")?);
    }
    let find = |wanted: &str| -> Result<usize, ManifestError> {
        let hits: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| **n == wanted)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(schema("label_source.columns", format!("missing {wanted}"))),
            _ => Err(schema("label_source.columns", format!("duplicate {wanted}"))),
        }
    };
    for n in &names {
        if !matches!(*n, "start" | "end" | "label" | "ignore") {
            return Err(schema("label_source.columns", format!("unknown column {n:?}")));
        }
    }
    Ok(SidecarSpec {
        path,
        fields: FieldLayout::Delimited { delimiter },
        header_rows: opt_count(table, "header_rows", "label_source.header_rows")?.unwrap_or(0),
        start_column: find("start")?,
        end_column: find("end")?,
        label_column: find("label")?,
        n_columns: names.len(),
    })
}

fn parse_label_source(
    table: Option<&Table>,
    roles: &[ColumnRole],
    layout: &LayoutPattern,
) -> Result<LabelSource, ManifestError> {
    let has_label_column = roles.contains(&ColumnRole::Label);
    let Some(table) = table else {
        if has_label_column {
            return Ok(LabelSource::PerRowColumn);
        }
        if layout.capture_names().contains(&"activity") {
            return Ok(LabelSource::PathCapture("activity".into()));
        }
        return Ok(LabelSource::Unlabeled);
    };
    check_keys(table, SIDECAR_KEYS, "label_source.")?;
    let kind = as_str(req(table, "kind", "label_source.kind")?, "label_source.kind")?;
    let source = match kind {
        "path_capture" => {
            let group = opt_str(table, "group", "label_source.group")?.unwrap_or("activity");
            if !layout.capture_names().contains(&group) {
                return Err(schema(
                    "label_source.group",
                    format!("layout has no capture {{{group}}}"),
                ));
            }
            LabelSource::PathCapture(group.to_string())
        }
        "per_row_column" => {
            if !has_label_column {
                return Err(schema("file_syntax.column_roles", "per_row_column labels need a label column"));
            }
            LabelSource::PerRowColumn
        }
        "sidecar_file" => LabelSource::SidecarFile(parse_sidecar(table)?),
        "none" => LabelSource::Unlabeled,
        other => {
            return Err(schema(
                "label_source.kind",
                format!("expected path_capture, per_row_column, sidecar_file or none, got {other:?}"),
            ))
        }
    };
    if has_label_column && !matches!(source, LabelSource::PerRowColumn) {
        return Err(schema(
            "file_syntax.column_roles",
            "a label column requires label_source kind per_row_column",
        ));
    }
    Ok(source)
}

/// Parses and validates a manifest document.
pub fn parse_manifest(text: &str) -> Result<DriverManifest, ManifestError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ManifestError::Syntax {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    check_keys(&table, TOP_KEYS, "")?;

    let driver_id = as_str(req(&table, "driver_id", "driver_id")?, "driver_id")?.to_string();
    if driver_id.is_empty()
        || !driver_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        || driver_id.starts_with('.')
    {
        return Err(schema("driver_id", "must be non-empty [A-Za-z0-9_.-] not starting with '.'"));
    }

    let layout_text = as_str(req(&table, "layout", "layout")?, "layout")?;
    let layout = LayoutPattern::parse(layout_text).map_err(|r| schema("layout", r))?;

    let includes_gravity = req(&table, "includes_gravity", "includes_gravity")?
        .as_bool()
        .ok_or_else(|| schema("includes_gravity", "expected a boolean"))?;

    let unit = DeclaredUnit::from_str(as_str(req(&table, "unit", "unit")?, "unit")?)
        .map_err(|r| schema("unit", r))?;

    let rate_text = as_str(req(&table, "rate", "rate")?, "rate")?;
    let rate = if rate_text == "from_timestamp_column" {
        RateSource::FromTimestampColumn
    } else if let Some(hz) = rate_text.strip_prefix("fixed:") {
        let hz: f64 = hz
            .trim()
            .parse()
            .map_err(|_| schema("rate", format!("invalid rate {hz:?}")))?;
        if !(hz.is_finite() && hz > 0.0) {
            return Err(schema("rate", "rate must be positive"));
        }
        RateSource::Fixed(hz)
    } else {
        return Err(schema("rate", "expected \"fixed:<hz>\" or \"from_timestamp_column\""));
    };

    let timestamp_scale = match table.get("timestamp_scale") {
        None => 1.0,
        Some(Value::Float(f)) => *f,
        Some(Value::Integer(i)) => *i as f64,
        Some(_) => return Err(schema("timestamp_scale", "expected a number")),
    };
    if !(timestamp_scale.is_finite() && timestamp_scale > 0.0) {
        return Err(schema("timestamp_scale", "must be positive"));
    }

    let sensor_kind = match opt_str(&table, "sensor_kind", "sensor_kind")? {
        None => SensorKind::Accelerometer,
        Some(s) => s.parse().map_err(|r: String| schema("sensor_kind", r))?,
    };

    let axis_map = match opt_str(&table, "axis_map", "axis_map")? {
        None => AxisMap::identity(),
        Some(s) => s.parse().map_err(|r: String| schema("axis_map", r))?,
    };

    let syntax_table = req(&table, "file_syntax", "file_syntax")?
        .as_table()
        .ok_or_else(|| schema("file_syntax", "expected a table"))?;
    let file_syntax = parse_file_syntax(syntax_table)?;

    let has_timestamp = file_syntax.column_roles.contains(&ColumnRole::Timestamp);
    if rate == RateSource::FromTimestampColumn && !has_timestamp {
        return Err(schema("rate", "from_timestamp_column needs a timestamp column role"));
    }

    let label_table = match table.get("label_source") {
        None => None,
        Some(v) => Some(v.as_table().ok_or_else(|| schema("label_source", "expected a table"))?),
    };
    let label_source = parse_label_source(label_table, &file_syntax.column_roles, &layout)?;

    Ok(DriverManifest {
        driver_id,
        layout,
        file_syntax,
        unit,
        rate,
        timestamp_scale,
        includes_gravity,
        sensor_kind,
        axis_map,
        label_source,
    })
}
