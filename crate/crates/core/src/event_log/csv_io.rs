//! CSV event logs and context tables (RFC 4180, UTF-8).
//!
//! Empty cells mean "attribute absent"; an empty resource cell reads as no
//! resource.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{format_timestamp, AttrValue, Attributes, ContextTable, Event, EventLog, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    String,
    Int,
    Real,
    Bool,
    Time,
    /// Try bool, int, real, RFC 3339 time, then fall back to string.
    Auto,
}

/// Assigns CSV columns to event roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    #[serde(default)]
    pub resource: Option<String>,
    /// chrono format string; `None` reads RFC 3339.
    #[serde(default)]
    pub timestamp_format: Option<String>,
    /// Extra columns kept as event attributes.
    #[serde(default)]
    pub attributes: Vec<(String, AttrKind)>,
}

impl Default for CsvMapping {
    fn default() -> Self {
        CsvMapping {
            case: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            resource: Some("resource".into()),
            timestamp_format: None,
            attributes: Vec::new(),
        }
    }
}

impl CsvMapping {
    /// Default role columns; every other column becomes an auto-typed attribute.
    pub fn auto_from_headers(headers: &[String]) -> Self {
        let mut m = CsvMapping::default();
        let reserved = ["case_id", "activity", "timestamp", "resource"];
        if !headers.iter().any(|h| h == "resource") {
            m.resource = None;
        }
        m.attributes = headers
            .iter()
            .filter(|h| !reserved.contains(&h.as_str()))
            .map(|h| (h.clone(), AttrKind::Auto))
            .collect();
        m
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::config(format!("mapped column {name:?} not found in CSV header")))
}

pub fn parse_csv<R: Read>(source: R, mapping: &CsvMapping) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(source);
    let headers = reader.headers()?.clone();
    let case_ix = column_index(&headers, &mapping.case)?;
    let act_ix = column_index(&headers, &mapping.activity)?;
    let ts_ix = column_index(&headers, &mapping.timestamp)?;
    let res_ix = mapping
        .resource
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let attr_ix = mapping
        .attributes
        .iter()
        .map(|(c, k)| Ok((c.clone(), column_index(&headers, c)?, *k)))
        .collect::<Result<Vec<_>>>()?;

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| record.get(i).unwrap_or("");
        let case_id = cell(case_ix);
        if case_id.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty case id".into(),
            });
        }
        let activity = cell(act_ix);
        if activity.trim().is_empty() {
            return Err(Error::Row {
                row,
                message: "empty activity".into(),
            });
        }
        let raw_ts = cell(ts_ix);
        let timestamp =
            parse_timestamp(raw_ts, mapping.timestamp_format.as_deref()).ok_or_else(|| {
                Error::Row {
                    row,
                    message: format!("unparseable timestamp {raw_ts:?}"),
                }
            })?;
        let mut attributes = Attributes::new();
        for (name, ix, kind) in &attr_ix {
            let raw = cell(*ix);
            if raw.is_empty() {
                continue;
            }
            let value = parse_value(raw, *kind).ok_or_else(|| Error::Row {
                row,
                message: format!("column {name:?}: cannot read {raw:?} as {kind:?}"),
            })?;
            attributes.insert(name.clone(), value);
        }
        events.push(Event {
            case_id: case_id.to_string(),
            activity: activity.to_string(),
            timestamp,
            resource: res_ix.map(cell).filter(|r| !r.is_empty()).map(str::to_string),
            attributes,
        });
    }
    EventLog::from_events(events)
}

pub(crate) fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<Timestamp> {
    let raw = raw.trim();
    match format {
        None => DateTime::parse_from_rfc3339(raw)
            .ok()
            .map(|t| t.with_timezone(&Utc)),
        Some(f) => DateTime::parse_from_str(raw, f)
            .map(|t| t.with_timezone(&Utc))
            .ok()
            .or_else(|| NaiveDateTime::parse_from_str(raw, f).ok().map(|n| n.and_utc()))
            .or_else(|| {
                NaiveDate::parse_from_str(raw, f)
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
                    .map(|n| n.and_utc())
            }),
    }
}

pub(crate) fn parse_value(raw: &str, kind: AttrKind) -> Option<AttrValue> {
    match kind {
        AttrKind::String => Some(AttrValue::String(raw.to_string())),
        AttrKind::Int => raw.trim().parse().ok().map(AttrValue::Int),
        AttrKind::Real => raw.trim().parse().ok().map(AttrValue::Real),
        AttrKind::Bool => match raw.trim() {
            "true" => Some(AttrValue::Bool(true)),
            "false" => Some(AttrValue::Bool(false)),
            _ => None,
        },
        AttrKind::Time => parse_timestamp(raw, None).map(AttrValue::Time),
        AttrKind::Auto => [AttrKind::Bool, AttrKind::Int, AttrKind::Real, AttrKind::Time]
            .into_iter()
            .find_map(|k| parse_value(raw, k))
            .or_else(|| Some(AttrValue::String(raw.to_string()))),
    }
}

/// Writes the log as CSV and returns the mapping that reads it back.
///
/// Attribute columns are the union of all event attribute keys; a key whose
/// values have mixed kinds is typed as string.
pub fn write_csv<W: Write>(log: &EventLog, out: W) -> Result<CsvMapping> {
    let mut kinds: BTreeMap<String, Option<AttrKind>> = BTreeMap::new();
    for e in log.traces().iter().flat_map(|t| t.events()) {
        for (k, v) in &e.attributes {
            let slot = kinds.entry(k.clone()).or_insert(Some(v.kind()));
            if *slot != Some(v.kind()) {
                *slot = None;
            }
        }
    }
    let attributes: Vec<(String, AttrKind)> = kinds
        .into_iter()
        .map(|(k, kind)| (k, kind.unwrap_or(AttrKind::String)))
        .collect();

    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["case_id", "activity", "timestamp", "resource"];
    header.extend(attributes.iter().map(|(k, _)| k.as_str()));
    writer.write_record(&header)?;
    for e in log.traces().iter().flat_map(|t| t.events()) {
        let mut row = vec![
            e.case_id.clone(),
            e.activity.clone(),
            format_timestamp(&e.timestamp),
            e.resource.clone().unwrap_or_default(),
        ];
        row.extend(
            attributes
                .iter()
                .map(|(k, _)| e.attributes.get(k).map(ToString::to_string).unwrap_or_default()),
        );
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(CsvMapping {
        attributes,
        ..CsvMapping::default()
    })
}

/// Reads a context table: a `case_id` column plus auto-typed attribute columns.
pub fn read_context_table<R: Read>(source: R) -> Result<ContextTable> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let case_ix = column_index(&headers, "case_id")?;
    let mut table = ContextTable::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let case_id = record.get(case_ix).unwrap_or("");
        if case_id.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty case_id".into(),
            });
        }
        if let Some(prev) = seen.insert(case_id.to_string(), row) {
            return Err(Error::Row {
                row,
                message: format!("case {case_id:?} already defined on row {prev}"),
            });
        }
        let attrs = headers
            .iter()
            .zip(record.iter())
            .enumerate()
            .filter(|(i, (_, v))| *i != case_ix && !v.is_empty())
            .filter_map(|(_, (k, v))| Some((k.to_string(), parse_value(v, AttrKind::Auto)?)))
            .collect();
        table.insert(case_id, attrs)?;
    }
    Ok(table)
}
