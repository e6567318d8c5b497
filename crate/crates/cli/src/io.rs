//! Readers and writers for the on-disk formats.
//!
//! * events: JSON lines, `{"time": 3, "type": "B", "attrs": {"speed": 7}}`
//! * schema: JSON object, `{"B": {"speed": "int"}}`
//! * queries: query language text, one `QUERY <id>` block per query
//! * results: CSV `query,window_start,window_end,group,aggregate,value`
//! * decisions: JSON lines, one record per optimizer decision

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use trendshare_core::engine::DecisionRecord;
use trendshare_core::event::EventType;
use trendshare_core::{parse_query_file, AttrKind, Event, Query, ResultTable, Schema, Value};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    time: u64,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    attrs: BTreeMap<String, serde_json::Value>,
}

fn to_value(v: &serde_json::Value) -> Option<Value> {
    match v {
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Some(Value::Int(i)),
            None => n.as_f64().map(Value::Real),
        },
        serde_json::Value::String(s) => Some(Value::Text(s.clone())),
        _ => None,
    }
}

fn from_value(v: &Value) -> serde_json::Value {
    match v {
        Value::Int(i) => json!(i),
        Value::Real(r) => json!(r),
        Value::Text(s) => json!(s),
    }
}

pub fn parse_event_line(line: &str) -> Result<Event> {
    let raw: EventLine = serde_json::from_str(line)?;
    let mut event = Event::new(raw.time, raw.kind);
    for (name, v) in &raw.attrs {
        let value = to_value(v)
            .with_context(|| format!("attribute {name}: expected a number or string, got {v}"))?;
        event.attrs.insert(name.clone(), value);
    }
    Ok(event)
}

pub fn event_line(event: &Event) -> String {
    let line = EventLine {
        time: event.time,
        kind: event.kind.clone(),
        attrs: event
            .attrs
            .iter()
            .map(|(k, v)| (k.clone(), from_value(v)))
            .collect(),
    };
    serde_json::to_string(&line).expect("event serializes")
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open event file {}", path.display()))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_event_line(&line)
            .with_context(|| format!("{}:{}: bad event", path.display(), i + 1))?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut out = std::io::BufWriter::new(create(path)?);
    for e in events {
        writeln!(out, "{}", event_line(e))?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    let raw: BTreeMap<String, BTreeMap<String, String>> =
        serde_json::from_str(text).context("schema must map each type to {attribute: kind}")?;
    let mut types = Vec::with_capacity(raw.len());
    for (name, attrs) in raw {
        let mut kinds = BTreeMap::new();
        for (attr, kind) in attrs {
            let Some(k) = AttrKind::parse(&kind) else {
                bail!(
                    "type {name}, attribute {attr}: unknown kind {kind:?} (use int, real or text)"
                );
            };
            kinds.insert(attr, k);
        }
        types.push(EventType { name, attrs: kinds });
    }
    Ok(Schema::new(types)?)
}

pub fn schema_json(schema: &Schema) -> String {
    let map: BTreeMap<&str, BTreeMap<&str, &str>> = schema
        .types()
        .iter()
        .map(|t| {
            (
                t.name.as_str(),
                t.attrs
                    .iter()
                    .map(|(a, k)| (a.as_str(), k.name()))
                    .collect(),
            )
        })
        .collect();
    serde_json::to_string_pretty(&map).expect("schema serializes")
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read schema {}", path.display()))?;
    parse_schema(&text).with_context(|| format!("invalid schema {}", path.display()))
}

pub fn read_queries(path: &Path, schema: &Schema) -> Result<Vec<Query>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read query file {}", path.display()))?;
    parse_query_file(&text, schema)
        .with_context(|| format!("invalid query file {}", path.display()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Results as CSV. Rows whose aggregate is undefined (AVG, MIN or MAX over
/// no events) are left out.
pub fn results_csv(table: &ResultTable) -> String {
    let mut out = String::from("query,window_start,window_end,group,aggregate,value\n");
    for (key, value) in &table.rows {
        if !value.is_defined() {
            continue;
        }
        let label = table
            .labels
            .get(&key.query)
            .map(String::as_str)
            .unwrap_or("");
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&key.query),
            key.window_start,
            key.window_end,
            csv_field(&key.group),
            csv_field(label),
            csv_field(&value.to_string())
        ));
    }
    out
}

pub fn decision_line(d: &DecisionRecord) -> String {
    json!({
        "pane": d.pane,
        "burst_type": d.burst_type,
        "b": d.b,
        "n": d.n,
        "s_c": d.s_c,
        "s_p": d.s_p,
        "shared_cost": d.shared_cost.to_string(),
        "nonshared_cost": d.nonshared_cost.to_string(),
        "action": d.action.name(),
        "shared_set": d.shared_set,
    })
    .to_string()
}

pub fn write_decisions(path: &Path, decisions: &[DecisionRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(create(path)?);
    for d in decisions {
        writeln!(out, "{}", decision_line(d))?;
    }
    out.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    create(path)?
        .write_all(text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}
