//! IEEE XES reading and writing.
//!
//! Only the parts of XES that map onto the flat event model are kept:
//! `concept:name`, `time:timestamp` and `org:resource` become event fields,
//! every other attribute lands in the attribute map. Nested attributes are
//! flattened into dotted keys (`parent.child`). Trace-level attributes other
//! than the case name are copied onto each event of the trace; event values
//! win on collision.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{format_timestamp, AttrValue, Attributes, Event, EventLog, Timestamp, Trace};
use crate::error::{Error, Result};

/// What to do with an event lacking `concept:name` or `time:timestamp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedEventPolicy {
    #[default]
    Fail,
    Skip,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct XesOptions {
    pub malformed_events: MalformedEventPolicy,
}

enum Frame {
    Log,
    Trace(Attributes),
    Event(Attributes),
    /// Nested attribute; children get `key.` prefixed.
    Attr(String),
    /// `global`, `extension`, `classifier` and anything unknown.
    Ignored,
}

pub fn parse_xes<R: Read>(mut source: R, opts: XesOptions) -> Result<EventLog> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut reader = Reader::from_reader(bytes.as_slice());
    reader.config_mut().trim_text(true);

    let xml_err = |pos: u64, message: String| {
        let pos = (pos as usize).min(bytes.len());
        let (line, column) = line_col(&bytes, pos);
        Error::Xml {
            line,
            column,
            message,
        }
    };

    let mut stack: Vec<Frame> = Vec::new();
    let mut meta = Attributes::new();
    let mut traces: Vec<Trace> = Vec::new();
    let mut current_events: Vec<Attributes> = Vec::new();
    let mut saw_log = false;
    let mut buf = Vec::new();

    loop {
        let event = match reader.read_event_into(&mut buf) {
            Ok(ev) => ev,
            Err(e) => return Err(xml_err(reader.error_position(), e.to_string())),
        };
        match event {
            XmlEvent::Start(ref tag) | XmlEvent::Empty(ref tag) => {
                let is_empty = matches!(event, XmlEvent::Empty(_));
                let name = tag.local_name().as_ref().to_vec();
                let frame = match name.as_slice() {
                    b"log" => {
                        saw_log = true;
                        Frame::Log
                    }
                    b"trace" => Frame::Trace(Attributes::new()),
                    b"event" => Frame::Event(Attributes::new()),
                    b"global" | b"extension" | b"classifier" => Frame::Ignored,
                    b"string" | b"date" | b"int" | b"float" | b"boolean" | b"id" | b"list"
                    | b"container" => {
                        if in_ignored(&stack) {
                            Frame::Ignored
                        } else {
                            let (key, value) = read_attribute(tag, &name)
                                .map_err(|m| xml_err(reader.buffer_position(), m))?;
                            let full_key = prefixed_key(&stack, &key);
                            if let Some(value) = value {
                                insert_attr(&mut stack, &mut meta, full_key.clone(), value);
                            }
                            Frame::Attr(full_key)
                        }
                    }
                    // `values` wraps list members; keep the list's prefix.
                    b"values" => match stack.last() {
                        Some(Frame::Attr(k)) => Frame::Attr(k.clone()),
                        _ => Frame::Ignored,
                    },
                    _ => Frame::Ignored,
                };
                if is_empty {
                    close_frame(frame, &mut traces, &mut current_events, &mut stack, opts)?;
                } else {
                    stack.push(frame);
                }
            }
            XmlEvent::End(_) => {
                let frame = stack.pop().ok_or_else(|| {
                    xml_err(reader.buffer_position(), "unbalanced end tag".into())
                })?;
                close_frame(frame, &mut traces, &mut current_events, &mut stack, opts)?;
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    if !stack.is_empty() {
        return Err(xml_err(
            bytes.len() as u64,
            "unexpected end of document".into(),
        ));
    }
    if !saw_log {
        return Err(xml_err(0, "missing <log> root element".into()));
    }
    EventLog::with_meta(traces, meta)
}

fn in_ignored(stack: &[Frame]) -> bool {
    stack.iter().any(|f| matches!(f, Frame::Ignored))
}

fn prefixed_key(stack: &[Frame], key: &str) -> String {
    match stack.last() {
        Some(Frame::Attr(parent)) => format!("{parent}.{key}"),
        _ => key.to_string(),
    }
}

fn insert_attr(stack: &mut [Frame], meta: &mut Attributes, key: String, value: AttrValue) {
    for frame in stack.iter_mut().rev() {
        match frame {
            Frame::Event(attrs) | Frame::Trace(attrs) => {
                attrs.insert(key, value);
                return;
            }
            Frame::Log => {
                meta.insert(key, value);
                return;
            }
            Frame::Attr(_) => continue,
            Frame::Ignored => return,
        }
    }
}

fn close_frame(
    frame: Frame,
    traces: &mut Vec<Trace>,
    current_events: &mut Vec<Attributes>,
    stack: &mut [Frame],
    opts: XesOptions,
) -> Result<()> {
    match frame {
        Frame::Event(attrs) => {
            if matches!(stack.last(), Some(Frame::Trace(_))) {
                current_events.push(attrs);
            }
            // Events outside traces carry no case and are dropped.
        }
        Frame::Trace(attrs) => {
            let index = traces.len();
            let events = std::mem::take(current_events);
            if let Some(trace) = build_trace(index, attrs, events, opts)? {
                traces.push(trace);
            }
        }
        _ => {}
    }
    Ok(())
}

fn build_trace(
    index: usize,
    mut trace_attrs: Attributes,
    events: Vec<Attributes>,
    opts: XesOptions,
) -> Result<Option<Trace>> {
    let case_id = match trace_attrs.remove("concept:name") {
        Some(v) => v.to_string(),
        None => format!("trace-{index}"),
    };
    let mut out = Vec::with_capacity(events.len());
    for (event_index, mut attrs) in events.into_iter().enumerate() {
        let activity = match attrs.remove("concept:name") {
            Some(v) if !v.to_string().trim().is_empty() => v.to_string(),
            _ => match opts.malformed_events {
                MalformedEventPolicy::Fail => {
                    return Err(Error::MissingEventField {
                        trace: case_id,
                        event_index,
                        field: "concept:name",
                    })
                }
                MalformedEventPolicy::Skip => continue,
            },
        };
        let timestamp = match attrs.remove("time:timestamp") {
            Some(AttrValue::Time(t)) => t,
            other => {
                if let Some(v) = other {
                    attrs.insert("time:timestamp".into(), v);
                }
                match opts.malformed_events {
                    MalformedEventPolicy::Fail => {
                        return Err(Error::MissingEventField {
                            trace: case_id,
                            event_index,
                            field: "time:timestamp",
                        })
                    }
                    MalformedEventPolicy::Skip => continue,
                }
            }
        };
        let resource = attrs.remove("org:resource").map(|v| v.to_string());
        for (k, v) in &trace_attrs {
            attrs.entry(k.clone()).or_insert_with(|| v.clone());
        }
        out.push(Event {
            case_id: case_id.clone(),
            activity,
            timestamp,
            resource,
            attributes: attrs,
        });
    }
    if out.is_empty() {
        return Ok(None);
    }
    Trace::new(case_id, out).map(Some)
}

fn read_attribute(tag: &BytesStart<'_>, kind: &[u8]) -> Result<(String, Option<AttrValue>), String> {
    let mut key = None;
    let mut raw = None;
    for attr in tag.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let value = attr.unescape_value().map_err(|e| e.to_string())?.into_owned();
        match attr.key.as_ref() {
            b"key" => key = Some(value),
            b"value" => raw = Some(value),
            _ => {}
        }
    }
    let key = key.ok_or_else(|| "attribute element without `key`".to_string())?;
    let value = match (kind, raw) {
        (b"list" | b"container", _) | (_, None) => None,
        (b"string" | b"id", Some(v)) => Some(AttrValue::String(v)),
        (b"int", Some(v)) => Some(AttrValue::Int(
            v.trim()
                .parse()
                .map_err(|_| format!("bad int value {v:?} for {key:?}"))?,
        )),
        (b"float", Some(v)) => Some(AttrValue::Real(
            v.trim()
                .parse()
                .map_err(|_| format!("bad float value {v:?} for {key:?}"))?,
        )),
        (b"boolean", Some(v)) => Some(AttrValue::Bool(match v.trim() {
            "true" | "TRUE" | "True" => true,
            "false" | "FALSE" | "False" => false,
            _ => return Err(format!("bad boolean value {v:?} for {key:?}")),
        })),
        (b"date", Some(v)) => Some(AttrValue::Time(
            parse_xes_date(&v).ok_or_else(|| format!("bad date value {v:?} for {key:?}"))?,
        )),
        _ => None,
    };
    Ok((key, value))
}

pub(crate) fn parse_xes_date(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    // Some exporters omit the offset; read those as UTC.
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

fn line_col(bytes: &[u8], pos: usize) -> (usize, usize) {
    let before = &bytes[..pos];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = match before.iter().rposition(|&b| b == b'\n') {
        Some(nl) => pos - nl,
        None => pos + 1,
    };
    (line, column)
}

pub fn write_xes<W: Write>(log: &EventLog, mut out: W) -> Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(out, r#"<log xes.version="1.0" xes.features="nested-attributes">"#)?;
    writeln!(
        out,
        r#"  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>"#
    )?;
    writeln!(
        out,
        r#"  <extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>"#
    )?;
    writeln!(
        out,
        r#"  <extension name="Organizational" prefix="org" uri="http://www.xes-standard.org/org.xesext"/>"#
    )?;
    for (k, v) in log.meta() {
        write_attr(&mut out, 1, k, v)?;
    }
    for trace in log.traces() {
        writeln!(out, "  <trace>")?;
        write_attr(&mut out, 2, "concept:name", &AttrValue::from(trace.case_id()))?;
        for e in trace.events() {
            writeln!(out, "    <event>")?;
            write_attr(&mut out, 3, "concept:name", &AttrValue::from(e.activity.as_str()))?;
            write_attr(&mut out, 3, "time:timestamp", &AttrValue::Time(e.timestamp))?;
            if let Some(r) = &e.resource {
                write_attr(&mut out, 3, "org:resource", &AttrValue::from(r.as_str()))?;
            }
            for (k, v) in &e.attributes {
                write_attr(&mut out, 3, k, v)?;
            }
            writeln!(out, "    </event>")?;
        }
        writeln!(out, "  </trace>")?;
    }
    writeln!(out, "</log>")?;
    Ok(())
}

fn write_attr<W: Write>(out: &mut W, depth: usize, key: &str, value: &AttrValue) -> Result<()> {
    let tag = match value {
        AttrValue::String(_) => "string",
        AttrValue::Int(_) => "int",
        AttrValue::Real(_) => "float",
        AttrValue::Bool(_) => "boolean",
        AttrValue::Time(_) => "date",
    };
    let text = match value {
        AttrValue::Time(t) => format_timestamp(t),
        other => other.to_string(),
    };
    writeln!(
        out,
        r#"{:indent$}<{tag} key="{}" value="{}"/>"#,
        "",
        escape(key),
        escape(text.as_str()),
        indent = depth * 2
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0">
  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>
  <global scope="event"><string key="concept:name" value="__INVALID__"/></global>
  <string key="concept:name" value="demo"/>
  <trace>
    <string key="concept:name" value="c1"/>
    <string key="Diagnose" value="A"/>
    <event>
      <string key="concept:name" value="B"/>
      <date key="time:timestamp" value="2014-10-22T12:15:41.000+02:00"/>
      <string key="org:resource" value="nurse"/>
      <int key="count" value="3"/>
      <container key="lab">
        <float key="crp" value="21.5"/>
      </container>
    </event>
    <event>
      <string key="concept:name" value="A"/>
      <date key="time:timestamp" value="2014-10-22T11:15:41.000+02:00"/>
      <boolean key="infection" value="true"/>
      <string key="Diagnose" value="override"/>
    </event>
  </trace>
</log>"#;

    #[test]
    fn parses_minimal_log_and_resorts() {
        let log = parse_xes(MINIMAL.as_bytes(), XesOptions::default()).unwrap();
        assert_eq!(log.num_traces(), 1);
        assert_eq!(log.alphabet().iter().collect::<Vec<_>>(), ["A", "B"]);
        let t = &log.traces()[0];
        assert_eq!(t.case_id(), "c1");
        assert_eq!(t.activities().collect::<Vec<_>>(), ["A", "B"]);
        let b = &t.events()[1];
        assert_eq!(b.resource.as_deref(), Some("nurse"));
        assert_eq!(b.attributes["count"], AttrValue::Int(3));
        assert_eq!(b.attributes["lab.crp"], AttrValue::Real(21.5));
        assert_eq!(b.attributes["Diagnose"], AttrValue::from("A"));
        assert_eq!(t.events()[0].attributes["Diagnose"], AttrValue::from("override"));
        assert_eq!(t.events()[0].attributes["infection"], AttrValue::Bool(true));
        assert_eq!(log.meta()["concept:name"], AttrValue::from("demo"));
        assert_eq!(format_timestamp(&t.events()[0].timestamp), "2014-10-22T09:15:41Z");
    }

    #[test]
    fn malformed_xml_reports_position() {
        let doc = "<log>\n  <trace>\n    <event>\n  </trace>\n</log>";
        match parse_xes(doc.as_bytes(), XesOptions::default()) {
            Err(Error::Xml { line, .. }) => assert!(line >= 3, "line {line}"),
            other => panic!("expected xml error, got {other:?}"),
        }
    }

    #[test]
    fn missing_timestamp_fails_or_skips() {
        let doc = r#"<log><trace><string key="concept:name" value="c"/>
            <event><string key="concept:name" value="A"/><date key="time:timestamp" value="2020-01-01T00:00:00Z"/></event>
            <event><string key="concept:name" value="B"/></event>
        </trace></log>"#;
        match parse_xes(doc.as_bytes(), XesOptions::default()) {
            Err(Error::MissingEventField {
                event_index, field, ..
            }) => {
                assert_eq!(event_index, 1);
                assert_eq!(field, "time:timestamp");
            }
            other => panic!("unexpected {other:?}"),
        }
        let opts = XesOptions {
            malformed_events: MalformedEventPolicy::Skip,
        };
        let log = parse_xes(doc.as_bytes(), opts).unwrap();
        assert_eq!(log.num_events(), 1);
    }

    #[test]
    fn write_then_read_preserves_log() {
        let log = parse_xes(MINIMAL.as_bytes(), XesOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_xes(&log, &mut buf).unwrap();
        let again = parse_xes(buf.as_slice(), XesOptions::default()).unwrap();
        assert_eq!(again.traces(), log.traces());
    }

    #[test]
    fn line_col_math() {
        assert_eq!(line_col(b"ab\ncd", 0), (1, 1));
        assert_eq!(line_col(b"ab\ncd", 4), (2, 2));
    }
}
