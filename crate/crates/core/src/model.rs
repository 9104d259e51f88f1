//! Event and report types plus the newline-delimited record codec.
//!
//! A record is a single JSON object with the fields `entityId`, `entityType`,
//! `targetEntityId`, `targetEntityType`, `ip`, `timestamp`, `type` and
//! `properties`, in that order. Engagement reports keep their buckets under
//! `properties.report` as a list of buckets, each bucket a list of
//! single-key objects (`{"mousemove":1}`, `{"scroll":{...}}`).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub const ENGAGEMENT_REPORT: &str = "engagement_report";
pub const VISIBLE_IMPRESSION_REPORT: &str = "visible_impression_report";
pub const PAGE_LOAD: &str = "page_load";
pub const CLICK: &str = "click";

/// Upper bound on buckets in one engagement report (three 5s intervals).
pub const MAX_REPORT_BUCKETS: usize = 3;

/// Properties bag carried by every event.
pub type Properties = Map<String, Value>;

/// An action from an entity to a target entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    #[serde(rename = "entityId")]
    pub entity_id: String,
    #[serde(rename = "entityType")]
    pub entity_type: String,
    #[serde(rename = "targetEntityId")]
    pub target_entity_id: String,
    #[serde(rename = "targetEntityType")]
    pub target_entity_type: String,
    pub ip: String,
    pub timestamp: u64,
    #[serde(rename = "type")]
    pub event_type: String,
    pub properties: Properties,
}

/// Who is engaging with what, as seen by one collector instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionIdentity {
    pub entity_id: String,
    pub entity_type: String,
    pub target_entity_id: String,
    pub target_entity_type: String,
    pub ip: String,
}

impl SessionIdentity {
    pub fn new(
        entity_id: impl Into<String>,
        entity_type: impl Into<String>,
        target_entity_id: impl Into<String>,
        target_entity_type: impl Into<String>,
        ip: impl Into<String>,
    ) -> Self {
        Self {
            entity_id: entity_id.into(),
            entity_type: entity_type.into(),
            target_entity_id: target_entity_id.into(),
            target_entity_type: target_entity_type.into(),
            ip: ip.into(),
        }
    }

    /// Builds an event envelope for this identity.
    pub fn event(&self, event_type: &str, timestamp: u64, properties: Properties) -> Event {
        Event {
            entity_id: self.entity_id.clone(),
            entity_type: self.entity_type.clone(),
            target_entity_id: self.target_entity_id.clone(),
            target_entity_type: self.target_entity_type.clone(),
            ip: self.ip.clone(),
            timestamp,
            event_type: event_type.to_string(),
            properties,
        }
    }
}

impl Event {
    pub fn identity(&self) -> SessionIdentity {
        SessionIdentity::new(
            &self.entity_id,
            &self.entity_type,
            &self.target_entity_id,
            &self.target_entity_type,
            &self.ip,
        )
    }

    /// Checks the envelope invariants and, for report types, the report invariants.
    pub fn validate(&self) -> Result<(), CodecError> {
        let required = [
            ("entityId", &self.entity_id),
            ("entityType", &self.entity_type),
            ("targetEntityId", &self.target_entity_id),
            ("targetEntityType", &self.target_entity_type),
            ("type", &self.event_type),
        ];
        for (field, value) in required {
            if value.is_empty() {
                return Err(CodecError::invariant(field, "must be non-empty"));
            }
        }
        if self.timestamp == 0 {
            return Err(CodecError::invariant("timestamp", "must be positive"));
        }
        match self.event_type.as_str() {
            ENGAGEMENT_REPORT => EngagementReport::try_from(self).map(drop),
            VISIBLE_IMPRESSION_REPORT => VisibleImpressionReport::try_from(self).map(drop),
            _ => Ok(()),
        }
    }
}

/// The eight DOM events the collector listens to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomEvent {
    MouseMove,
    Scroll,
    BeforeUnload,
    Resize,
    Focus,
    DomContentLoaded,
    VisibilityChange,
    KeyDown,
}

impl DomEvent {
    pub const ALL: [DomEvent; 8] = [
        DomEvent::MouseMove,
        DomEvent::Scroll,
        DomEvent::BeforeUnload,
        DomEvent::Resize,
        DomEvent::Focus,
        DomEvent::DomContentLoaded,
        DomEvent::VisibilityChange,
        DomEvent::KeyDown,
    ];

    /// Wire name, as registered with `addEventListener`.
    pub fn name(self) -> &'static str {
        match self {
            DomEvent::MouseMove => "mousemove",
            DomEvent::Scroll => "scroll",
            DomEvent::BeforeUnload => "beforeunload",
            DomEvent::Resize => "resize",
            DomEvent::Focus => "focus",
            DomEvent::DomContentLoaded => "DOMContentLoaded",
            DomEvent::VisibilityChange => "visibilitychange",
            DomEvent::KeyDown => "keydown",
        }
    }
}

impl fmt::Display for DomEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown DOM event name {0:?}")]
pub struct UnknownEventName(pub String);

impl FromStr for DomEvent {
    type Err = UnknownEventName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomEvent::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| UnknownEventName(s.to_string()))
    }
}

/// Scroll state observed during one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScrollSample {
    pub document_height: u32,
    pub screen_height: u32,
    pub screen_width: u32,
    /// Maximum distance from the document top seen within the interval.
    pub scroll_top: u32,
}

impl ScrollSample {
    pub fn new(
        document_height: u32,
        screen_height: u32,
        screen_width: u32,
        scroll_top: u32,
    ) -> Self {
        Self {
            document_height,
            screen_height,
            screen_width,
            scroll_top,
        }
    }

    /// Folds a newer observation into this one: keeps the larger scroll
    /// offset and takes the newer dimensions.
    pub fn merge(&mut self, newer: ScrollSample) {
        self.scroll_top = self.scroll_top.max(newer.scroll_top);
        self.document_height = newer.document_height;
        self.screen_height = newer.screen_height;
        self.screen_width = newer.screen_width;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    /// Fixed marker value `1`.
    Marker,
    Scroll(ScrollSample),
}

/// One 5-second hash table of DOM event name to payload, insertion ordered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalBucket {
    entries: Vec<(DomEvent, Payload)>,
}

impl IntervalBucket {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets or updates the entry for `event`. Markers are idempotent, scroll
    /// entries keep the running maximum offset.
    pub fn set(&mut self, event: DomEvent, payload: Payload) {
        let payload = match (event, payload) {
            (DomEvent::Scroll, p @ Payload::Scroll(_)) => p,
            (DomEvent::Scroll, Payload::Marker) => return,
            (_, _) => Payload::Marker,
        };
        match self.entries.iter_mut().find(|(e, _)| *e == event) {
            Some((_, existing)) => {
                if let (Payload::Scroll(old), Payload::Scroll(new)) = (existing, payload) {
                    old.merge(new);
                }
            }
            None => self.entries.push((event, payload)),
        }
    }

    pub fn get(&self, event: DomEvent) -> Option<&Payload> {
        self.entries
            .iter()
            .find(|(e, _)| *e == event)
            .map(|(_, p)| p)
    }

    pub fn scroll(&self) -> Option<ScrollSample> {
        match self.get(DomEvent::Scroll) {
            Some(Payload::Scroll(s)) => Some(*s),
            _ => None,
        }
    }

    pub fn entries(&self) -> &[(DomEvent, Payload)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn to_value(&self) -> Value {
        let items = self
            .entries
            .iter()
            .map(|(event, payload)| {
                let value = match payload {
                    Payload::Marker => Value::from(1),
                    Payload::Scroll(s) => {
                        serde_json::to_value(s).expect("scroll sample serializes")
                    }
                };
                let mut obj = Map::new();
                obj.insert(event.name().to_string(), value);
                Value::Object(obj)
            })
            .collect();
        Value::Array(items)
    }

    fn from_value(value: &Value, field: &str) -> Result<Self, CodecError> {
        let items = value
            .as_array()
            .ok_or_else(|| CodecError::schema(field, "bucket must be a list"))?;
        if items.is_empty() {
            return Err(CodecError::invariant(field, "bucket must be non-empty"));
        }
        let mut bucket = IntervalBucket::new();
        for (idx, item) in items.iter().enumerate() {
            let item_field = format!("{field}[{idx}]");
            let obj = item.as_object().filter(|o| o.len() == 1).ok_or_else(|| {
                CodecError::schema(&item_field, "entry must be a single-key object")
            })?;
            let (name, payload) = obj.iter().next().expect("length checked");
            let event: DomEvent = name
                .parse()
                .map_err(|e: UnknownEventName| CodecError::schema(&item_field, e.to_string()))?;
            if bucket.get(event).is_some() {
                return Err(CodecError::invariant(
                    &item_field,
                    format!("duplicate entry for {name}"),
                ));
            }
            let payload = match event {
                DomEvent::Scroll => {
                    Payload::Scroll(scroll_from_value(payload, &format!("{item_field}.scroll"))?)
                }
                _ => {
                    if payload.as_u64() != Some(1) {
                        return Err(CodecError::schema(
                            format!("{item_field}.{name}"),
                            "marker value must be 1",
                        ));
                    }
                    Payload::Marker
                }
            };
            bucket.entries.push((event, payload));
        }
        Ok(bucket)
    }
}

fn scroll_from_value(value: &Value, field: &str) -> Result<ScrollSample, CodecError> {
    let obj = value
        .as_object()
        .ok_or_else(|| CodecError::schema(field, "scroll payload must be an object"))?;
    let get = |name: &str| -> Result<u32, CodecError> {
        obj.get(name)
            .and_then(Value::as_u64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| {
                CodecError::schema(format!("{field}.{name}"), "expected a non-negative integer")
            })
    };
    let sample = ScrollSample {
        document_height: get("document_height")?,
        screen_height: get("screen_height")?,
        screen_width: get("screen_width")?,
        scroll_top: get("scroll_top")?,
    };
    if sample.screen_height == 0 {
        return Err(CodecError::invariant(
            format!("{field}.screen_height"),
            "must be positive",
        ));
    }
    if sample.screen_width == 0 {
        return Err(CodecError::invariant(
            format!("{field}.screen_width"),
            "must be positive",
        ));
    }
    Ok(sample)
}

/// A batch of one to three interval buckets for one (entity, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EngagementReport {
    pub identity: SessionIdentity,
    pub timestamp: u64,
    pub buckets: Vec<IntervalBucket>,
}

impl EngagementReport {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn to_event(&self) -> Event {
        let mut props = Map::new();
        props.insert(
            "report".to_string(),
            Value::Array(self.buckets.iter().map(IntervalBucket::to_value).collect()),
        );
        self.identity
            .event(ENGAGEMENT_REPORT, self.timestamp, props)
    }
}

impl TryFrom<&Event> for EngagementReport {
    type Error = CodecError;

    fn try_from(event: &Event) -> Result<Self, Self::Error> {
        if event.event_type != ENGAGEMENT_REPORT {
            return Err(CodecError::schema(
                "type",
                format!("expected {ENGAGEMENT_REPORT}"),
            ));
        }
        let report = event
            .properties
            .get("report")
            .ok_or_else(|| CodecError::schema("properties.report", "missing"))?
            .as_array()
            .ok_or_else(|| CodecError::schema("properties.report", "must be a list"))?;
        if report.is_empty() || report.len() > MAX_REPORT_BUCKETS {
            return Err(CodecError::invariant(
                "properties.report",
                format!("length {} outside 1..={MAX_REPORT_BUCKETS}", report.len()),
            ));
        }
        let buckets = report
            .iter()
            .enumerate()
            .map(|(i, b)| IntervalBucket::from_value(b, &format!("properties.report[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EngagementReport {
            identity: event.identity(),
            timestamp: event.timestamp,
            buckets,
        })
    }
}

/// Items seen in the viewport of a listing page since the last flush.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleImpressionReport {
    pub identity: SessionIdentity,
    pub timestamp: u64,
    pub viewed_items: Vec<String>,
}

impl VisibleImpressionReport {
    pub fn to_event(&self) -> Event {
        let mut props = Map::new();
        props.insert(
            "viewedItems".to_string(),
            Value::Array(
                self.viewed_items
                    .iter()
                    .cloned()
                    .map(Value::String)
                    .collect(),
            ),
        );
        self.identity
            .event(VISIBLE_IMPRESSION_REPORT, self.timestamp, props)
    }
}

impl TryFrom<&Event> for VisibleImpressionReport {
    type Error = CodecError;

    fn try_from(event: &Event) -> Result<Self, Self::Error> {
        if event.event_type != VISIBLE_IMPRESSION_REPORT {
            return Err(CodecError::schema(
                "type",
                format!("expected {VISIBLE_IMPRESSION_REPORT}"),
            ));
        }
        let items = string_list(&event.properties, "viewedItems")?;
        if items.is_empty() {
            return Err(CodecError::invariant(
                "properties.viewedItems",
                "must be non-empty",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = items.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(CodecError::invariant(
                "properties.viewedItems",
                format!("duplicate identifier {dup:?}"),
            ));
        }
        Ok(VisibleImpressionReport {
            identity: event.identity(),
            timestamp: event.timestamp,
            viewed_items: items,
        })
    }
}

/// Reads `properties.<key>` as a list of identifiers. Integers are accepted
/// and normalised to strings.
pub fn string_list(props: &Properties, key: &str) -> Result<Vec<String>, CodecError> {
    let field = format!("properties.{key}");
    let list = props
        .get(key)
        .ok_or_else(|| CodecError::schema(&field, "missing"))?
        .as_array()
        .ok_or_else(|| CodecError::schema(&field, "must be a list"))?;
    list.iter()
        .enumerate()
        .map(|(i, v)| {
            identifier(v).ok_or_else(|| {
                CodecError::schema(format!("{field}[{i}]"), "expected an identifier")
            })
        })
        .collect()
}

fn identifier(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Some(n.to_string()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed record: {reason}")]
    MalformedRecord { reason: String },
    #[error("schema violation at {field}: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("invariant violation at {field}: {reason}")]
    InvariantViolation { field: String, reason: String },
}

impl CodecError {
    fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CodecError::SchemaViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CodecError::InvariantViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// The offending field, when the error names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            CodecError::MalformedRecord { .. } => None,
            CodecError::SchemaViolation { field, .. }
            | CodecError::InvariantViolation { field, .. } => Some(field),
        }
    }
}

/// Encodes one event as a single-line record (no trailing newline).
pub fn encode_event(event: &Event) -> Vec<u8> {
    serde_json::to_vec(event).expect("event serializes")
}

/// Decodes one record. The `ip` field is required.
pub fn decode_event(bytes: &[u8]) -> Result<Event, CodecError> {
    decode_with_ip(bytes, None)
}

/// Decodes one record, stamping `fallback_ip` when the record has no `ip`.
pub fn decode_event_with_fallback_ip(bytes: &[u8], fallback_ip: &str) -> Result<Event, CodecError> {
    decode_with_ip(bytes, Some(fallback_ip))
}

fn decode_with_ip(bytes: &[u8], fallback_ip: Option<&str>) -> Result<Event, CodecError> {
    let trimmed = trim_ascii(bytes);
    if trimmed.is_empty() {
        return Err(CodecError::MalformedRecord {
            reason: "empty input".to_string(),
        });
    }
    let value: Value =
        serde_json::from_slice(trimmed).map_err(|e| CodecError::MalformedRecord {
            reason: e.to_string(),
        })?;
    let obj = value
        .as_object()
        .ok_or_else(|| CodecError::schema("<record>", "expected an object"))?;

    let id_field = |name: &str| -> Result<String, CodecError> {
        obj.get(name)
            .ok_or_else(|| CodecError::schema(name, "missing"))
            .and_then(|v| {
                identifier(v)
                    .ok_or_else(|| CodecError::schema(name, "expected a string or integer"))
            })
    };
    let str_field = |name: &str| -> Result<String, CodecError> {
        obj.get(name)
            .ok_or_else(|| CodecError::schema(name, "missing"))?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CodecError::schema(name, "expected a string"))
    };

    let ip = match (obj.get("ip"), fallback_ip) {
        (Some(_), _) => str_field("ip")?,
        (None, Some(fallback)) => fallback.to_string(),
        (None, None) => return Err(CodecError::schema("ip", "missing")),
    };
    let timestamp = obj
        .get("timestamp")
        .ok_or_else(|| CodecError::schema("timestamp", "missing"))?
        .as_u64()
        .ok_or_else(|| CodecError::schema("timestamp", "expected epoch seconds"))?;
    let properties = obj
        .get("properties")
        .ok_or_else(|| CodecError::schema("properties", "missing"))?
        .as_object()
        .cloned()
        .ok_or_else(|| CodecError::schema("properties", "expected an object"))?;

    let event = Event {
        entity_id: id_field("entityId")?,
        entity_type: str_field("entityType")?,
        target_entity_id: id_field("targetEntityId")?,
        target_entity_type: str_field("targetEntityType")?,
        ip,
        timestamp,
        event_type: str_field("type")?,
        properties,
    };
    event.validate()?;
    Ok(event)
}

fn trim_ascii(bytes: &[u8]) -> &[u8] {
    let start = bytes
        .iter()
        .position(|b| !b.is_ascii_whitespace())
        .unwrap_or(bytes.len());
    let end = bytes
        .iter()
        .rposition(|b| !b.is_ascii_whitespace())
        .map_or(start, |e| e + 1);
    &bytes[start..end]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::SAMPLE_REPORT;
    use serde_json::json;

    #[test]
    fn sample_report_round_trips() {
        let event = decode_event(SAMPLE_REPORT.as_bytes()).unwrap();
        assert_eq!(event.entity_id, "1");
        assert_eq!(event.target_entity_id, "10");
        assert_eq!(event.timestamp, 1_459_535_879);
        let report = EngagementReport::try_from(&event).unwrap();
        assert_eq!(report.len(), 3);
        assert_eq!(report.buckets[0].scroll().unwrap().scroll_top, 300);
        assert_eq!(report.buckets[2].scroll().unwrap().scroll_top, 500);
        assert_eq!(report.buckets[2].len(), 4);

        let encoded = encode_event(&event);
        assert!(!encoded.contains(&b'\n'));
        assert_eq!(decode_event(&encoded).unwrap(), event);
        assert_eq!(report.to_event(), event);
    }

    #[test]
    fn wire_field_order_and_names() {
        let event = decode_event(SAMPLE_REPORT.as_bytes()).unwrap();
        let text = String::from_utf8(encode_event(&event)).unwrap();
        let keys = [
            "\"entityId\"",
            "\"entityType\"",
            "\"targetEntityId\"",
            "\"targetEntityType\"",
            "\"ip\"",
            "\"timestamp\"",
            "\"type\"",
            "\"properties\"",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert!(text.starts_with(r#"{"entityId":"1","entityType":"user""#));
    }

    #[test]
    fn empty_properties_encode_as_empty_map() {
        let id = SessionIdentity::new("u", "user", "i", "item", "10.0.0.1");
        let event = id.event(PAGE_LOAD, 1_459_535_879, Properties::new());
        let text = String::from_utf8(encode_event(&event)).unwrap();
        assert!(text.ends_with(r#""properties":{}}"#), "{text}");
        assert_eq!(decode_event(text.as_bytes()).unwrap(), event);
    }

    #[test]
    fn empty_input_is_malformed() {
        assert!(matches!(
            decode_event(b""),
            Err(CodecError::MalformedRecord { .. })
        ));
        assert!(matches!(
            decode_event(b"  \n"),
            Err(CodecError::MalformedRecord { .. })
        ));
        assert!(matches!(
            decode_event(b"not-a-report"),
            Err(CodecError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn four_bucket_report_is_rejected() {
        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value["properties"]["report"]
            .as_array_mut()
            .unwrap()
            .push(json!([{"focus": 1}]));
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, CodecError::InvariantViolation { .. }));
        assert_eq!(err.field(), Some("properties.report"));
    }

    #[test]
    fn zero_bucket_report_is_rejected() {
        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value["properties"]["report"] = json!([]);
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("properties.report"));
    }

    #[test]
    fn missing_and_mistyped_fields_are_named() {
        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value.as_object_mut().unwrap().remove("entityType");
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert!(
            matches!(err, CodecError::SchemaViolation { ref field, .. } if field == "entityType")
        );

        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value["timestamp"] = json!("yesterday");
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("timestamp"));

        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value["timestamp"] = json!(0);
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert!(
            matches!(err, CodecError::InvariantViolation { ref field, .. } if field == "timestamp")
        );

        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value["entityId"] = json!("");
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert!(
            matches!(err, CodecError::InvariantViolation { ref field, .. } if field == "entityId")
        );
    }

    #[test]
    fn unknown_dom_event_and_bad_marker_are_schema_errors() {
        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value["properties"]["report"][1] = json!([{"click": 1}]);
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("properties.report[1][0]"));

        value["properties"]["report"][1] = json!([{"focus": 2}]);
        let err = decode_event(value.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("properties.report[1][0].focus"));
    }

    #[test]
    fn ip_fallback_applies_only_when_absent() {
        let mut value: Value = serde_json::from_str(SAMPLE_REPORT).unwrap();
        value.as_object_mut().unwrap().remove("ip");
        let body = value.to_string();
        assert_eq!(
            decode_event(body.as_bytes()).unwrap_err().field(),
            Some("ip")
        );
        let event = decode_event_with_fallback_ip(body.as_bytes(), "192.0.2.7").unwrap();
        assert_eq!(event.ip, "192.0.2.7");
        let event = decode_event_with_fallback_ip(SAMPLE_REPORT.as_bytes(), "192.0.2.7").unwrap();
        assert_eq!(event.ip, "12.345.6.789");
    }

    #[test]
    fn visible_impression_report_requires_unique_items() {
        let id = SessionIdentity::new("u", "user", "listing-1", "listing", "10.0.0.1");
        let report = VisibleImpressionReport {
            identity: id.clone(),
            timestamp: 1_459_535_900,
            viewed_items: vec!["A".into(), "B".into()],
        };
        let event = report.to_event();
        assert_eq!(decode_event(&encode_event(&event)).unwrap(), event);

        let mut dup = event.clone();
        dup.properties
            .insert("viewedItems".into(), json!(["A", "A"]));
        assert!(matches!(
            dup.validate(),
            Err(CodecError::InvariantViolation { .. })
        ));
        dup.properties.insert("viewedItems".into(), json!([]));
        assert!(matches!(
            dup.validate(),
            Err(CodecError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn bucket_scroll_keeps_maximum_and_latest_heights() {
        let mut bucket = IntervalBucket::new();
        bucket.set(
            DomEvent::Scroll,
            Payload::Scroll(ScrollSample::new(5000, 100, 980, 300)),
        );
        bucket.set(
            DomEvent::Scroll,
            Payload::Scroll(ScrollSample::new(5200, 120, 980, 200)),
        );
        assert_eq!(bucket.len(), 1);
        assert_eq!(
            bucket.scroll(),
            Some(ScrollSample::new(5200, 120, 980, 300))
        );
    }

    #[test]
    fn dom_event_names_parse() {
        for e in DomEvent::ALL {
            assert_eq!(e.name().parse::<DomEvent>().unwrap(), e);
        }
        assert!("click".parse::<DomEvent>().is_err());
    }
}
