//! Parsing of the two high-level context record formats and their
//! normalization into registrations and state-change events.
//!
//! Triple-H-R lines carry six delimited columns:
//!
//! ```text
//! Person::Student | Donnie | location | Building003 | Location:::Timestamp=2023-01-02 15:02:23 | GPS, Camera
//! ```
//!
//! IntellElevator lines carry twelve comma-separated fields and are mapped
//! onto Triple-RDF records (subject, predicate, object, decisions and nested
//! condition triples) before normalization.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeId, ContextDomain, CoordinatorStore, ObjectIndex, StateIndex};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const DEFAULT_HR_DELIMITER: char = '|';
pub const DEFAULT_ELEVATOR_DELIMITER: char = ',';
pub const DEFAULT_CONDITION_DEPTH: usize = 3;

pub const PRED_TYPE: &str = "rdf:type";
pub const PRED_NAME: &str = "foaf:name";
pub const PRED_IDENTIFIER: &str = "schema:identifier";
pub const PRED_DATE: &str = "dc:date";
pub const PRED_LABEL: &str = "rdfs:label";
pub const PRED_POSITION: &str = "schema:position";
const RECORD_SUBJECT: &str = "record";
const PERSON_URI_PREFIX: &str = "urn:campus:person:";

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| Error::format(None, format!("bad timestamp {s:?}: {e}")))
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn at_line(err: Error, line: Option<usize>) -> Error {
    match err {
        Error::Format {
            line: None,
            message,
        } => Error::Format { line, message },
        other => other,
    }
}

/// Separates an optional `#delim=<char>` header and returns the remaining
/// non-blank, non-comment lines with their 1-based line numbers.
pub fn split_delimiter_header(text: &str, default: char) -> Result<(char, Vec<(usize, &str)>)> {
    let mut delim = default;
    let mut body = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#delim=") {
            if !body.is_empty() {
                return Err(Error::format(
                    Some(i + 1),
                    "delimiter header must precede records",
                ));
            }
            let mut chars = rest.chars();
            delim = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(Error::format(
                        Some(i + 1),
                        format!("bad delimiter header {line:?}"),
                    ))
                }
            };
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        body.push((i + 1, line));
    }
    Ok((delim, body))
}

// ---------------------------------------------------------------------------
// Triple-H-R

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleHr {
    pub category_path: String,
    pub object_name: String,
    pub attribute: String,
    pub state_value: String,
    /// Parallel condition parts, as split on `:::`.
    pub conditions: Vec<String>,
    pub complement: Option<String>,
    pub sources: Vec<String>,
    pub timestamp: NaiveDateTime,
}

impl TripleHr {
    /// Renders the record as one line; `parse_triple_hr_line` inverts it.
    pub fn to_line(&self, delim: char) -> String {
        let sep = if delim == '|' {
            " | ".to_string()
        } else {
            delim.to_string()
        };
        let src_sep = if delim == ',' { "; " } else { ", " };
        [
            self.category_path.as_str(),
            &self.object_name,
            &self.attribute,
            &self.state_value,
            &self.conditions.join(":::"),
            &self.sources.join(src_sep),
        ]
        .join(&sep)
    }
}

pub fn parse_triple_hr_line(line: &str, delim: char, line_no: Option<usize>) -> Result<TripleHr> {
    let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
    if fields.len() != 6 {
        return Err(Error::format(
            line_no,
            format!("expected 6 columns, found {}", fields.len()),
        ));
    }
    for (name, value) in [
        ("category", fields[0]),
        ("object", fields[1]),
        ("attribute", fields[2]),
        ("state", fields[3]),
    ] {
        if value.is_empty() {
            return Err(Error::format(line_no, format!("empty {name} column")));
        }
    }
    crate::model::split_category_path(fields[0]).map_err(|e| at_line(e, line_no))?;
    let conditions: Vec<String> = fields[4]
        .split(":::")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect();
    let mut timestamp = None;
    let mut complement = None;
    for part in &conditions {
        if let Some(ts) = part.strip_prefix("Timestamp=") {
            timestamp = Some(parse_timestamp(ts).map_err(|e| at_line(e, line_no))?);
        } else if let Some(c) = part.strip_prefix("Complement=") {
            complement = Some(c.trim().to_owned());
        }
    }
    let timestamp =
        timestamp.ok_or_else(|| Error::format(line_no, "missing Timestamp= condition"))?;
    let sources = fields[5]
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect();
    Ok(TripleHr {
        category_path: fields[0].to_owned(),
        object_name: fields[1].to_owned(),
        attribute: fields[2].to_owned(),
        state_value: fields[3].to_owned(),
        conditions,
        complement,
        sources,
        timestamp,
    })
}

/// Parses a whole Triple-H-R file (pipe-delimited unless a header says otherwise).
pub fn parse_triple_hr_file(text: &str) -> Result<Vec<TripleHr>> {
    let (delim, lines) = split_delimiter_header(text, DEFAULT_HR_DELIMITER)?;
    lines
        .into_iter()
        .map(|(n, l)| parse_triple_hr_line(l, delim, Some(n)))
        .collect()
}

// ---------------------------------------------------------------------------
// Triple-RDF and the IntellElevator record

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRdf {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub decisions: Vec<String>,
    pub conditions: Vec<TripleRdf>,
}

impl TripleRdf {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            decisions: Vec::new(),
            conditions: Vec::new(),
        }
    }

    /// Nesting depth of the condition tree; a triple without conditions has depth 0.
    pub fn condition_depth(&self) -> usize {
        self.conditions
            .iter()
            .map(|c| 1 + c.condition_depth())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self, max_depth: usize) -> Result<()> {
        fn walk(t: &TripleRdf) -> Result<()> {
            if t.subject.is_empty() || t.predicate.is_empty() || t.object.is_empty() {
                return Err(Error::format(
                    None,
                    "triple with empty subject, predicate or object",
                ));
            }
            t.conditions.iter().try_for_each(walk)
        }
        walk(self)?;
        let depth = self.condition_depth();
        if depth > max_depth {
            return Err(Error::format(
                None,
                format!("condition nesting depth {depth} exceeds bound {max_depth}"),
            ));
        }
        Ok(())
    }

    /// Object of the first direct condition matching `(subject, predicate)`.
    pub fn condition(&self, subject: &str, predicate: &str) -> Option<&str> {
        self.conditions
            .iter()
            .find(|c| c.subject == subject && c.predicate == predicate)
            .map(|c| c.object.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElevatorRecord {
    pub index: u64,
    pub person_id: String,
    pub person_name: String,
    pub person_type: String,
    pub date: String,
    pub decision: String,
    pub action: String,
    pub action_uri: String,
    pub action_type: String,
    pub location_uri: String,
    pub location_name: String,
    pub location_type: String,
}

impl ElevatorRecord {
    pub const FIELDS: usize = 12;

    pub fn to_line(&self, delim: char) -> String {
        let d = delim.to_string();
        [
            self.index.to_string().as_str(),
            &self.person_id,
            &self.person_name,
            &self.person_type,
            &self.date,
            &self.decision,
            &self.action,
            &self.action_uri,
            &self.action_type,
            &self.location_uri,
            &self.location_name,
            &self.location_type,
        ]
        .join(&d)
    }

    pub fn person_uri(&self) -> String {
        format!("{PERSON_URI_PREFIX}{}", self.person_id)
    }
}

pub fn parse_elevator_record(
    line: &str,
    delim: char,
    line_no: Option<usize>,
) -> Result<ElevatorRecord> {
    let f: Vec<&str> = line.split(delim).map(str::trim).collect();
    if f.len() != ElevatorRecord::FIELDS {
        return Err(Error::format(
            line_no,
            format!(
                "expected {} fields, found {}",
                ElevatorRecord::FIELDS,
                f.len()
            ),
        ));
    }
    let index = f[0]
        .parse()
        .map_err(|_| Error::format(line_no, format!("bad record index {:?}", f[0])))?;
    parse_timestamp(f[4]).map_err(|e| at_line(e, line_no))?;
    for (i, v) in f.iter().enumerate().skip(1) {
        if v.is_empty() {
            return Err(Error::format(line_no, format!("empty field {}", i + 1)));
        }
    }
    Ok(ElevatorRecord {
        index,
        person_id: f[1].to_owned(),
        person_name: f[2].to_owned(),
        person_type: f[3].to_owned(),
        date: f[4].to_owned(),
        decision: f[5].to_owned(),
        action: f[6].to_owned(),
        action_uri: f[7].to_owned(),
        action_type: f[8].to_owned(),
        location_uri: f[9].to_owned(),
        location_name: f[10].to_owned(),
        location_type: f[11].to_owned(),
    })
}

/// Parses a whole IntellElevator file (comma-delimited unless a header says otherwise).
pub fn parse_elevator_file(text: &str) -> Result<Vec<ElevatorRecord>> {
    let (delim, lines) = split_delimiter_header(text, DEFAULT_ELEVATOR_DELIMITER)?;
    lines
        .into_iter()
        .map(|(n, l)| parse_elevator_record(l, delim, Some(n)))
        .collect()
}

/// Maps an elevator record onto Triple-RDF: the person moves (`action_type`)
/// to the location; every remaining field travels as a condition triple.
pub fn elevator_to_triple_rdf(rec: &ElevatorRecord) -> TripleRdf {
    let person = rec.person_uri();
    let mut t = TripleRdf::new(
        person.clone(),
        rec.action_type.clone(),
        rec.location_uri.clone(),
    );
    t.decisions.push(rec.decision.clone());
    t.conditions = vec![
        TripleRdf::new(
            person.clone(),
            PRED_TYPE,
            format!("Person::{}", rec.person_type),
        ),
        TripleRdf::new(person.clone(), PRED_NAME, rec.person_name.clone()),
        TripleRdf::new(person.clone(), PRED_IDENTIFIER, rec.person_id.clone()),
        TripleRdf::new(person, PRED_DATE, rec.date.clone()),
        TripleRdf::new(rec.action_uri.clone(), PRED_LABEL, rec.action.clone()),
        TripleRdf::new(
            rec.location_uri.clone(),
            PRED_TYPE,
            format!("Location::{}", rec.location_type),
        ),
        TripleRdf::new(
            rec.location_uri.clone(),
            PRED_NAME,
            rec.location_name.clone(),
        ),
        TripleRdf::new(RECORD_SUBJECT, PRED_POSITION, rec.index.to_string()),
    ];
    t
}

/// Inverse of [`elevator_to_triple_rdf`].
pub fn triple_rdf_to_elevator(t: &TripleRdf) -> Result<ElevatorRecord> {
    let need = |s: &str, p: &str| {
        t.condition(s, p)
            .map(str::to_owned)
            .ok_or_else(|| Error::format(None, format!("missing condition ({s}, {p})")))
    };
    let person_id = need(&t.subject, PRED_IDENTIFIER)?;
    let action_cond = t
        .conditions
        .iter()
        .find(|c| c.predicate == PRED_LABEL)
        .ok_or_else(|| Error::format(None, "missing action label condition"))?;
    let strip = |v: String, prefix: &str| v.strip_prefix(prefix).map(str::to_owned).unwrap_or(v);
    Ok(ElevatorRecord {
        index: need(RECORD_SUBJECT, PRED_POSITION)?
            .parse()
            .map_err(|_| Error::format(None, "bad record position"))?,
        person_name: need(&t.subject, PRED_NAME)?,
        person_type: strip(need(&t.subject, PRED_TYPE)?, "Person::"),
        date: need(&t.subject, PRED_DATE)?,
        decision: t.decisions.first().cloned().unwrap_or_default(),
        action: action_cond.object.clone(),
        action_uri: action_cond.subject.clone(),
        action_type: t.predicate.clone(),
        location_uri: t.object.clone(),
        location_name: need(&t.object, PRED_NAME)?,
        location_type: strip(need(&t.object, PRED_TYPE)?, "Location::"),
        person_id,
    })
}

// ---------------------------------------------------------------------------
// Normalization

/// Normalized assertion that an object's attribute entered a new state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChangeEvent {
    pub object: ObjectIndex,
    pub attribute: AttributeId,
    pub new_state: StateIndex,
    pub timestamp: NaiveDateTime,
    pub conditions: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum Record {
    Hr(TripleHr),
    Rdf(TripleRdf),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: u64,
    pub events: u64,
    /// Assertions dropped because they repeated the current state.
    pub suppressed: u64,
    /// Cross-domain references recorded verbatim without resolution.
    pub unresolved_references: u64,
}

/// Turns parsed records into domain registrations and events.
#[derive(Debug, Clone)]
pub struct Normalizer {
    pub max_condition_depth: usize,
    stats: IngestStats,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            max_condition_depth: DEFAULT_CONDITION_DEPTH,
            stats: IngestStats::default(),
        }
    }
}

impl Normalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn normalize(
        &mut self,
        domain: &mut ContextDomain,
        coordinator: &mut CoordinatorStore,
        record: &Record,
    ) -> Result<Vec<StateChangeEvent>> {
        match record {
            Record::Hr(t) => Ok(self
                .normalize_hr(domain, coordinator, t)?
                .into_iter()
                .collect()),
            Record::Rdf(t) => Ok(self
                .normalize_rdf(domain, coordinator, t)?
                .into_iter()
                .collect()),
        }
    }

    fn assert(
        &mut self,
        domain: &mut ContextDomain,
        object: ObjectIndex,
        attribute: &str,
        value: &str,
        timestamp: NaiveDateTime,
        conditions: Vec<String>,
    ) -> Result<Option<StateChangeEvent>> {
        let attr = domain.ensure_attribute(object, attribute)?;
        let state = domain.register_state(object, attr, value)?;
        let self_loops = domain.count_self_loops();
        let changed = domain
            .attribute_mut(object, attr)
            .expect("attribute ensured above")
            .assert_state(state, self_loops);
        if !changed {
            self.stats.suppressed += 1;
            return Ok(None);
        }
        self.stats.events += 1;
        Ok(Some(StateChangeEvent {
            object,
            attribute: attr,
            new_state: state,
            timestamp,
            conditions,
        }))
    }

    pub fn normalize_hr(
        &mut self,
        domain: &mut ContextDomain,
        coordinator: &mut CoordinatorStore,
        t: &TripleHr,
    ) -> Result<Option<StateChangeEvent>> {
        self.stats.records += 1;
        let obj = domain.register_object(&t.category_path, &t.object_name)?;
        if coordinator.get(&t.object_name).is_none() {
            coordinator.upsert(&t.object_name, &t.object_name);
        }
        if let Some(c) = &t.complement {
            if c.contains(':') && domain.mapping().get(c).is_none() {
                self.stats.unresolved_references += 1;
                log::warn!("unresolved cross-domain reference {c:?} kept verbatim");
            }
        }
        self.assert(
            domain,
            obj,
            &t.attribute,
            &t.state_value,
            t.timestamp,
            t.conditions.clone(),
        )
    }

    pub fn normalize_rdf(
        &mut self,
        domain: &mut ContextDomain,
        coordinator: &mut CoordinatorStore,
        t: &TripleRdf,
    ) -> Result<Option<StateChangeEvent>> {
        self.stats.records += 1;
        t.validate(self.max_condition_depth)?;
        let date = t.condition(&t.subject, PRED_DATE).ok_or_else(|| {
            Error::format(
                None,
                format!("triple about {} has no date condition", t.subject),
            )
        })?;
        let timestamp = parse_timestamp(date)?;

        // The object is an entity in its own right when the conditions type it.
        if let Some(cat) = t.condition(&t.object, PRED_TYPE) {
            domain.register_object(cat, &t.object)?;
            if let Some(name) = t.condition(&t.object, PRED_NAME) {
                if coordinator.get(&t.object).map(|r| r.name.as_str()) != Some(name) {
                    coordinator.upsert(&t.object, name);
                }
            }
        }
        let category = t.condition(&t.subject, PRED_TYPE).unwrap_or("Thing");
        let subject = domain.register_object(category, &t.subject)?;
        if coordinator.get(&t.subject).is_none() {
            let name = t.condition(&t.subject, PRED_NAME).unwrap_or_default();
            coordinator.upsert(&t.subject, name);
            if let Some(id) = t.condition(&t.subject, PRED_IDENTIFIER) {
                coordinator.set_descriptor(&t.subject, "id", id);
            }
        }
        let conditions = t
            .decisions
            .iter()
            .map(|d| format!("decision={d}"))
            .collect();
        self.assert(
            domain,
            subject,
            &t.predicate,
            &t.object,
            timestamp,
            conditions,
        )
    }
}

/// Which of the two text formats a file uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Elevator,
    TripleHr,
}

/// Guesses the format from the first record line.
pub fn detect_format(text: &str) -> Option<InputFormat> {
    let (first, delim) = {
        let mut delim = None;
        let mut first = None;
        for line in text.lines() {
            if let Some(d) = line.strip_prefix("#delim=") {
                delim = d.chars().next();
            } else if !line.trim().is_empty() && !line.starts_with('#') {
                first = Some(line);
                break;
            }
        }
        (first?, delim)
    };
    let count = |d: char| first.split(d).count();
    match delim {
        Some(d) if count(d) == ElevatorRecord::FIELDS => Some(InputFormat::Elevator),
        Some(d) if count(d) == 6 => Some(InputFormat::TripleHr),
        Some(_) => None,
        None if count('|') == 6 => Some(InputFormat::TripleHr),
        None if count(',') == ElevatorRecord::FIELDS => Some(InputFormat::Elevator),
        None => None,
    }
}

/// Fixed-width discretization of a continuous reading into a state label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub origin: f64,
    pub width: f64,
}

impl Binning {
    pub fn new(origin: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && origin.is_finite()) {
            return Err(Error::Config(format!(
                "invalid binning origin={origin} width={width}"
            )));
        }
        Ok(Self { origin, width })
    }

    pub fn bin(&self, x: f64) -> i64 {
        ((x - self.origin) / self.width).floor() as i64
    }

    /// Half-open interval label such as `[60,70)`.
    pub fn label(&self, x: f64) -> String {
        let b = self.bin(x) as f64;
        let lo = self.origin + b * self.width;
        format!("[{},{})", lo, lo + self.width)
    }
}
