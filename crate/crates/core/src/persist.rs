//! Two-file model storage (meta file + CASM file), the separate mapping and
//! coordinator files, and the DEFLATE compression report.
//!
//! Every file is compact JSON followed by a `#crc32=<8 hex>` footer line
//! computed over the JSON bytes. The layout is documented in
//! `docs/file-format.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cssm::{Cssm, CssmStore, SituationConfig};
use crate::error::{Error, Result};
use crate::model::{
    AttributeId, AttributeKind, ContextAttribute, ContextAttributeState, ContextDomain,
    ContextObject, CoordinatorStore, HistoryEntry, ObjectIndex, ObjectUriMapping, StateIndex,
};
use crate::relation::{RelationTypeId, RelationshipMatrix};
use crate::tensor::TransitionTensor;

pub const FORMAT_VERSION: u32 = 1;
pub const META_EXTENSION: &str = ".csm-meta.json";
pub const CASM_EXTENSION: &str = ".casm.json";
pub const MAPPING_EXTENSION: &str = ".csm-map.json";
pub const COORDINATOR_EXTENSION: &str = ".coordinator.json";

const FOOTER: &str = "\n#crc32=";
/// Prefix used for object URIs when a model is loaded without its mapping.
pub const ANONYMOUS_PREFIX: &str = "anon:";

fn seal(body: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&body);
    let mut out = body;
    writeln!(out, "{FOOTER}{crc:08x}").expect("writing to a Vec cannot fail");
    out
}

/// Checks the footer and returns the JSON body.
fn unseal<'a>(bytes: &'a [u8], what: &str) -> Result<&'a [u8]> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| Error::Malformed(format!("{what} is not UTF-8")))?;
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let Some(pos) = trimmed.rfind(FOOTER) else {
        return Err(Error::Truncated(format!("{what} has no checksum footer")));
    };
    let hex = &trimmed[pos + FOOTER.len()..];
    if hex.len() != 8 {
        return Err(Error::Truncated(format!(
            "{what} checksum footer is cut short"
        )));
    }
    let stored = u32::from_str_radix(hex, 16)
        .map_err(|_| Error::Malformed(format!("{what} checksum is not hex")))?;
    let body = &bytes[..pos];
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(body)
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn decode<T: DeserializeOwned>(bytes: &[u8], format: &str) -> Result<T> {
    let body = unseal(bytes, format)?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::Malformed(format!("{format}: {e}")))?;
    if header.format != format {
        return Err(Error::Malformed(format!(
            "expected a {format} file, found {}",
            header.format
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: header.version,
        });
    }
    serde_json::from_slice(body).map_err(|e| Error::Malformed(format!("{format}: {e}")))
}

fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok(seal(
        serde_json::to_vec(value).map_err(|e| Error::Malformed(e.to_string()))?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum MetaState {
    /// A state naming a registered object, stored by index only.
    Object {
        obj: u32,
        link: bool,
    },
    Value(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaAttribute {
    id: u32,
    kind: AttributeKind,
    states: Vec<MetaState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    current: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    last: Option<(u32, u32)>,
    /// `(state, unix seconds, nanoseconds)`
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    history: Vec<(u32, i64, u32)>,
    events: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaObject {
    category: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
    attributes: Vec<MetaAttribute>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaFile {
    format: String,
    version: u32,
    domain: String,
    hierarchy_depth: usize,
    transition_steps: usize,
    count_self_loops: bool,
    categories: Vec<String>,
    attributes: Vec<String>,
    attribute_kinds: BTreeMap<String, AttributeKind>,
    relation_types: Vec<String>,
    /// `(from, to, type, closeness)`
    relations: Vec<(u32, u32, u32, u8)>,
    objects: Vec<MetaObject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorDump {
    object: u32,
    attribute: u32,
    /// Flattened `path..., count` groups in path order.
    paths: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SituationDump {
    owner: u32,
    situations: Vec<Vec<u32>>,
    history: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    current: Option<u32>,
    events: u64,
    paths: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SituationSection {
    config: SituationConfig,
    machines: Vec<SituationDump>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CasmFile {
    format: String,
    version: u32,
    transition_steps: usize,
    tensors: Vec<TensorDump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    situations: Option<SituationSection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MappingFile {
    format: String,
    version: u32,
    uris: ObjectUriMapping,
}

#[derive(Debug, Serialize, Deserialize)]
struct CoordinatorFile {
    format: String,
    version: u32,
    records: CoordinatorStore,
}

/// The bytes of a saved model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFiles {
    pub meta: Vec<u8>,
    pub casm: Vec<u8>,
}

impl ModelFiles {
    pub fn total_len(&self) -> usize {
        self.meta.len() + self.casm.len()
    }

    /// Writes `<stem>.csm-meta.json` and `<stem>.casm.json` into `dir`.
    pub fn write_to(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let meta = dir.join(format!("{stem}{META_EXTENSION}"));
        let casm = dir.join(format!("{stem}{CASM_EXTENSION}"));
        std::fs::write(&meta, &self.meta)?;
        std::fs::write(&casm, &self.casm)?;
        Ok((meta, casm))
    }

    pub fn read_from(dir: &Path, stem: &str) -> Result<Self> {
        Ok(Self {
            meta: std::fs::read(dir.join(format!("{stem}{META_EXTENSION}")))?,
            casm: std::fs::read(dir.join(format!("{stem}{CASM_EXTENSION}")))?,
        })
    }
}

fn flatten(tensor: &TransitionTensor) -> Vec<u64> {
    let mut out = Vec::with_capacity(tensor.distinct_paths() * (tensor.arity() + 1));
    for (path, count) in tensor.entries() {
        out.extend(path.iter().map(|s| u64::from(s.0)));
        out.push(count);
    }
    out
}

fn unflatten(flat: &[u64], steps: usize, dimension: usize, what: &str) -> Result<TransitionTensor> {
    let mut tensor = TransitionTensor::new(steps, dimension)?;
    let group = steps + 2;
    if !flat.len().is_multiple_of(group) {
        return Err(Error::Malformed(format!(
            "{what}: path dump length {} is not a multiple of {group}",
            flat.len()
        )));
    }
    let mut path = Vec::with_capacity(steps + 1);
    for g in flat.chunks_exact(group) {
        let (count, idx) = g.split_last().expect("group is non-empty");
        if *count == 0 {
            return Err(Error::Malformed(format!("{what}: zero count in dump")));
        }
        path.clear();
        for &i in idx {
            if i >= dimension as u64 {
                return Err(Error::Dangling(format!(
                    "{what}: state {i} beyond {dimension} states"
                )));
            }
            path.push(StateIndex(i as u32));
        }
        tensor.add(&path, *count)?;
    }
    Ok(tensor)
}

fn epoch(t: &NaiveDateTime) -> (i64, u32) {
    let utc = t.and_utc();
    (utc.timestamp(), utc.timestamp_subsec_nanos())
}

fn from_epoch(secs: i64, nanos: u32) -> Result<NaiveDateTime> {
    DateTime::from_timestamp(secs, nanos)
        .map(|d| d.naive_utc())
        .ok_or_else(|| Error::Malformed(format!("timestamp {secs}.{nanos} out of range")))
}

fn meta_of(domain: &ContextDomain) -> MetaFile {
    let mapping = domain.mapping();
    let objects = domain
        .objects()
        .iter()
        .map(|o| MetaObject {
            category: o.category(),
            labels: o.labels().to_vec(),
            attributes: o
                .attributes()
                .iter()
                .map(|a| MetaAttribute {
                    id: a.id().0,
                    kind: a.kind(),
                    states: a
                        .states()
                        .iter()
                        .map(|s| match mapping.get(&s.value) {
                            Some(obj) => MetaState::Object {
                                obj: obj.0,
                                link: s.referenced_object == Some(obj),
                            },
                            None => MetaState::Value(s.value.clone()),
                        })
                        .collect(),
                    current: a.current_state().map(|s| s.0),
                    last: a.last_transition().map(|(x, y)| (x.0, y.0)),
                    history: a
                        .history()
                        .map(|h| {
                            let (secs, nanos) = epoch(&h.timestamp);
                            (h.state.0, secs, nanos)
                        })
                        .collect(),
                    events: a.event_count(),
                })
                .collect(),
        })
        .collect();
    MetaFile {
        format: "csm-meta".into(),
        version: FORMAT_VERSION,
        domain: domain.domain_id().to_owned(),
        hierarchy_depth: domain.hierarchy_depth(),
        transition_steps: domain.transition_steps(),
        count_self_loops: domain.count_self_loops(),
        categories: domain.categories().iter().map(|c| c.name.clone()).collect(),
        attributes: domain.attribute_names().to_vec(),
        attribute_kinds: domain.attribute_kinds().clone(),
        relation_types: domain.relations().type_names().to_vec(),
        relations: domain
            .relations()
            .entries()
            .map(|(a, b, t, c)| (a.0, b.0, t.0, c))
            .collect(),
        objects,
    }
}

fn casm_of(domain: &ContextDomain, situations: Option<&CssmStore>) -> CasmFile {
    let tensors = domain
        .iter_attributes()
        .filter_map(|(o, a)| {
            let t = a.casm()?;
            (!t.is_empty()).then(|| TensorDump {
                object: o.0,
                attribute: a.id().0,
                paths: flatten(t),
            })
        })
        .collect();
    let situations = situations.map(|store| SituationSection {
        config: store.config().clone(),
        machines: store
            .machines()
            .map(|m| SituationDump {
                owner: m.owner().0,
                situations: m.registry().keys().map(<[u32]>::to_vec).collect(),
                history: m.history().map(|s| s.0).collect(),
                current: m.current().map(|s| s.0),
                events: m.event_count(),
                paths: flatten(m.tensor()),
            })
            .collect(),
    });
    CasmFile {
        format: "casm".into(),
        version: FORMAT_VERSION,
        transition_steps: domain.transition_steps(),
        tensors,
        situations,
    }
}

/// Saves indexes, dictionaries and tensors. No URI or identity is written.
pub fn save(domain: &ContextDomain) -> Result<ModelFiles> {
    Ok(ModelFiles {
        meta: encode(&meta_of(domain))?,
        casm: encode(&casm_of(domain, None))?,
    })
}

/// Like [`save`], also storing the situation machines in the CASM file.
pub fn save_with_situations(domain: &ContextDomain, situations: &CssmStore) -> Result<ModelFiles> {
    Ok(ModelFiles {
        meta: encode(&meta_of(domain))?,
        casm: encode(&casm_of(domain, Some(situations)))?,
    })
}

/// Rebuilds a model without identities; objects get `anon:<index>` URIs.
pub fn load(meta: &[u8], casm: &[u8]) -> Result<ContextDomain> {
    let m: MetaFile = decode(meta, "csm-meta")?;
    let anon: Vec<String> = (0..m.objects.len())
        .map(|i| format!("{ANONYMOUS_PREFIX}{i}"))
        .collect();
    build(m, decode(casm, "casm")?, ObjectUriMapping::try_from(anon)?)
}

/// Rebuilds the exact model, URIs included, from the model files plus the
/// separately shipped mapping.
pub fn load_with_mapping(
    meta: &[u8],
    casm: &[u8],
    mapping: &ObjectUriMapping,
) -> Result<ContextDomain> {
    let m: MetaFile = decode(meta, "csm-meta")?;
    if mapping.len() != m.objects.len() {
        return Err(Error::Dangling(format!(
            "mapping holds {} uris for {} objects",
            mapping.len(),
            m.objects.len()
        )));
    }
    build(m, decode(casm, "casm")?, mapping.clone())
}

/// Situation machines stored in a CASM file, if any.
pub fn load_situations(casm: &[u8]) -> Result<Option<CssmStore>> {
    let c: CasmFile = decode(casm, "casm")?;
    let steps = c.transition_steps;
    let Some(section) = c.situations else {
        return Ok(None);
    };
    let mut machines = Vec::with_capacity(section.machines.len());
    for d in section.machines {
        let owner = ObjectIndex(d.owner);
        let n = d.situations.len();
        let what = format!("situations of {owner}");
        let tensor = unflatten(&d.paths, steps, n, &what)?;
        let check = |s: u32| -> Result<StateIndex> {
            if (s as usize) < n {
                Ok(StateIndex(s))
            } else {
                Err(Error::Dangling(format!("{what}: situation {s} beyond {n}")))
            }
        };
        let history = d
            .history
            .iter()
            .map(|&s| check(s))
            .collect::<Result<Vec<_>>>()?;
        let current = d.current.map(check).transpose()?;
        let keys = d
            .situations
            .into_iter()
            .map(Vec::into_boxed_slice)
            .collect();
        machines.push(Cssm::restore(
            owner, tensor, keys, history, current, d.events,
        )?);
    }
    Ok(Some(CssmStore::restore(section.config, steps, machines)?))
}

fn build(m: MetaFile, c: CasmFile, mapping: ObjectUriMapping) -> Result<ContextDomain> {
    if c.transition_steps != m.transition_steps {
        return Err(Error::Malformed(format!(
            "casm file has R={} but meta file has R={}",
            c.transition_steps, m.transition_steps
        )));
    }
    let steps = m.transition_steps;
    let n_objects = m.objects.len();
    let n_attrs = m.attributes.len();
    let mut dumps: BTreeMap<(u32, u32), Vec<u64>> = BTreeMap::new();
    for t in c.tensors {
        if dumps.insert((t.object, t.attribute), t.paths).is_some() {
            return Err(Error::Malformed(format!(
                "duplicate tensor for {}/{}",
                t.object, t.attribute
            )));
        }
    }

    let mut objects = Vec::with_capacity(n_objects);
    for (i, mo) in m.objects.into_iter().enumerate() {
        let index = ObjectIndex(i as u32);
        if mo.category >= m.categories.len() {
            return Err(Error::Dangling(format!(
                "category {} of object {i}",
                mo.category
            )));
        }
        let mut attributes = Vec::with_capacity(mo.attributes.len());
        for ma in mo.attributes {
            if ma.id as usize >= n_attrs {
                return Err(Error::Dangling(format!(
                    "attribute {} of object {i}",
                    ma.id
                )));
            }
            let n = ma.states.len();
            let what = format!("object {i} attribute {}", ma.id);
            let check = |s: u32| -> Result<StateIndex> {
                if (s as usize) < n {
                    Ok(StateIndex(s))
                } else {
                    Err(Error::Dangling(format!(
                        "{what}: state {s} beyond {n} states"
                    )))
                }
            };
            let mut states = Vec::with_capacity(n);
            for (si, ms) in ma.states.into_iter().enumerate() {
                let (value, referenced_object) = match ms {
                    MetaState::Value(v) => (v, None),
                    MetaState::Object { obj, link } => {
                        let uri = mapping.resolve_uri(ObjectIndex(obj)).map_err(|_| {
                            Error::Dangling(format!("{what}: state names object {obj}"))
                        })?;
                        (uri.to_owned(), link.then_some(ObjectIndex(obj)))
                    }
                };
                states.push(ContextAttributeState {
                    index: StateIndex(si as u32),
                    value,
                    referenced_object,
                });
            }
            let current = ma.current.map(check).transpose()?;
            let last = ma
                .last
                .map(|(a, b)| Ok::<_, Error>((check(a)?, check(b)?)))
                .transpose()?;
            let history = ma
                .history
                .iter()
                .map(|&(s, secs, nanos)| {
                    Ok(HistoryEntry {
                        state: check(s)?,
                        timestamp: from_epoch(secs, nanos)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if history.len() > steps {
                return Err(Error::Malformed(format!("{what}: history longer than R")));
            }
            let dump = dumps.remove(&(i as u32, ma.id));
            let casm = match ma.kind {
                AttributeKind::Ordinal => Some(unflatten(
                    dump.as_deref().unwrap_or_default(),
                    steps,
                    n,
                    &what,
                )?),
                AttributeKind::Nominal if dump.is_some() => {
                    return Err(Error::Malformed(format!(
                        "{what}: nominal attribute has a tensor"
                    )))
                }
                AttributeKind::Nominal => None,
            };
            attributes.push(ContextAttribute::restore(
                AttributeId(ma.id),
                ma.kind,
                states,
                current,
                last,
                history,
                ma.events,
                casm,
            ));
        }
        objects.push(ContextObject::restore(
            index,
            mo.category,
            mo.labels,
            attributes,
        ));
    }
    if let Some((o, a)) = dumps.keys().next() {
        return Err(Error::Dangling(format!(
            "tensor for unknown attribute {o}/{a}"
        )));
    }

    let mut entries = Vec::with_capacity(m.relations.len());
    for (a, b, t, cl) in m.relations {
        if a as usize >= n_objects || b as usize >= n_objects {
            return Err(Error::Dangling(format!(
                "relation {a}->{b} names a missing object"
            )));
        }
        entries.push((ObjectIndex(a), ObjectIndex(b), RelationTypeId(t), cl));
    }
    let relations = RelationshipMatrix::restore(m.relation_types, entries)?;

    ContextDomain::restore(
        m.domain,
        m.hierarchy_depth,
        steps,
        m.count_self_loops,
        m.categories,
        objects,
        mapping,
        m.attributes,
        m.attribute_kinds,
        relations,
    )
}

pub fn save_mapping(mapping: &ObjectUriMapping) -> Result<Vec<u8>> {
    encode(&MappingFile {
        format: "csm-map".into(),
        version: FORMAT_VERSION,
        uris: mapping.clone(),
    })
}

pub fn load_mapping(bytes: &[u8]) -> Result<ObjectUriMapping> {
    Ok(decode::<MappingFile>(bytes, "csm-map")?.uris)
}

pub fn save_coordinator(store: &CoordinatorStore) -> Result<Vec<u8>> {
    encode(&CoordinatorFile {
        format: "coordinator".into(),
        version: FORMAT_VERSION,
        records: store.clone(),
    })
}

pub fn load_coordinator(bytes: &[u8]) -> Result<CoordinatorStore> {
    Ok(decode::<CoordinatorFile>(bytes, "coordinator")?.records)
}

/// Raw DEFLATE at level 6.
pub fn deflate_len(bytes: &[u8]) -> usize {
    let mut enc = DeflateEncoder::new(
        Vec::with_capacity(bytes.len() / 4 + 64),
        Compression::new(6),
    );
    enc.write_all(bytes).expect("in-memory deflate cannot fail");
    enc.finish().expect("in-memory deflate cannot fail").len()
}

/// Reference sizes (KB) from the published run.
pub mod reference {
    pub const INPUT_KB: u64 = 55_669;
    pub const META_KB: u64 = 5_951;
    pub const CASM_KB: u64 = 1_512;
    pub const DEFLATED_INPUT_KB: u64 = 1_186;
    pub const DEFLATED_META_KB: u64 = 346;
    pub const DEFLATED_CASM_KB: u64 = 239;
    pub const RAW_RATIO_PERCENT: f64 = 13.41;
    pub const DEFLATED_RATIO_PERCENT: f64 = 49.33;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub input_bytes: u64,
    pub meta_bytes: u64,
    pub casm_bytes: u64,
    /// (meta + casm) / input, in percent.
    pub raw_ratio_percent: f64,
    pub deflated_input_bytes: u64,
    pub deflated_meta_bytes: u64,
    pub deflated_casm_bytes: u64,
    /// deflate(meta) + deflate(casm) over deflate(input), in percent.
    pub deflated_ratio_percent: f64,
    /// Set when the input is empty; ratios are then reported as 0.
    pub degenerate: bool,
}

fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 * 100.0 / den as f64
    }
}

impl CompressionReport {
    pub fn compute(input: &[u8], files: &ModelFiles) -> Self {
        let input_bytes = input.len() as u64;
        let meta_bytes = files.meta.len() as u64;
        let casm_bytes = files.casm.len() as u64;
        let deflated_input_bytes = deflate_len(input) as u64;
        let deflated_meta_bytes = deflate_len(&files.meta) as u64;
        let deflated_casm_bytes = deflate_len(&files.casm) as u64;
        let degenerate = input.is_empty();
        let (raw, def) = if degenerate {
            (0.0, 0.0)
        } else {
            (
                percent(meta_bytes + casm_bytes, input_bytes),
                percent(
                    deflated_meta_bytes + deflated_casm_bytes,
                    deflated_input_bytes,
                ),
            )
        };
        Self {
            input_bytes,
            meta_bytes,
            casm_bytes,
            raw_ratio_percent: raw,
            deflated_input_bytes,
            deflated_meta_bytes,
            deflated_casm_bytes,
            deflated_ratio_percent: def,
            degenerate,
        }
    }

    pub const CSV_HEADER: &'static str = "run,input_bytes,meta_bytes,casm_bytes,raw_ratio_percent,deflated_input_bytes,deflated_meta_bytes,deflated_casm_bytes,deflated_ratio_percent,degenerate";

    /// Header plus this run and the reference run (sizes in bytes).
    pub fn to_csv(&self) -> String {
        use reference::*;
        let mut s = String::new();
        writeln!(s, "{}", Self::CSV_HEADER).unwrap();
        writeln!(
            s,
            "this,{},{},{},{:.2},{},{},{},{:.2},{}",
            self.input_bytes,
            self.meta_bytes,
            self.casm_bytes,
            self.raw_ratio_percent,
            self.deflated_input_bytes,
            self.deflated_meta_bytes,
            self.deflated_casm_bytes,
            self.deflated_ratio_percent,
            self.degenerate
        )
        .unwrap();
        writeln!(
            s,
            "reference,{},{},{},{RAW_RATIO_PERCENT:.2},{},{},{},{DEFLATED_RATIO_PERCENT:.2},false",
            INPUT_KB * 1024,
            META_KB * 1024,
            CASM_KB * 1024,
            DEFLATED_INPUT_KB * 1024,
            DEFLATED_META_KB * 1024,
            DEFLATED_CASM_KB * 1024,
        )
        .unwrap();
        s
    }

    pub fn to_table(&self) -> String {
        use reference::*;
        let kb = |b: u64| format!("{:.1}KB", b as f64 / 1024.0);
        let rows = [
            ("input", kb(self.input_bytes), format!("{INPUT_KB}KB")),
            ("meta file", kb(self.meta_bytes), format!("{META_KB}KB")),
            ("casm file", kb(self.casm_bytes), format!("{CASM_KB}KB")),
            (
                "raw ratio",
                format!("{:.2}%", self.raw_ratio_percent),
                format!("{RAW_RATIO_PERCENT:.2}%"),
            ),
            (
                "deflate(input)",
                kb(self.deflated_input_bytes),
                format!("{DEFLATED_INPUT_KB}KB"),
            ),
            (
                "deflate(meta)",
                kb(self.deflated_meta_bytes),
                format!("{DEFLATED_META_KB}KB"),
            ),
            (
                "deflate(casm)",
                kb(self.deflated_casm_bytes),
                format!("{DEFLATED_CASM_KB}KB"),
            ),
            (
                "deflated ratio",
                format!("{:.2}%", self.deflated_ratio_percent),
                format!("{DEFLATED_RATIO_PERCENT:.2}%"),
            ),
        ];
        let mut s = String::new();
        writeln!(s, "{:<16} {:>14} {:>14}", "", "this run", "reference").unwrap();
        for (k, a, b) in rows {
            writeln!(s, "{k:<16} {a:>14} {b:>14}").unwrap();
        }
        if self.degenerate {
            writeln!(s, "(empty input: ratios are not meaningful)").unwrap();
        }
        s
    }
}

/// Report for the record file at `input` and the model built from it.
pub fn compression_report(input: &Path, domain: &ContextDomain) -> Result<CompressionReport> {
    let bytes = std::fs::read(input).map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
    Ok(CompressionReport::compute(&bytes, &save(domain)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;

    fn small() -> ContextDomain {
        let mut d = ContextDomain::new("d", 2, 1).unwrap();
        let p = d.register_object("Person::Student", "urn:p:1").unwrap();
        let b = d.register_object("Building", "urn:b:1").unwrap();
        let loc = d.ensure_attribute(p, "location").unwrap();
        let ts = parse_timestamp("2023-01-02 08:00:00").unwrap();
        for v in ["urn:b:1", "Outside", "urn:b:1"] {
            let s = d.register_state(p, loc, v).unwrap();
            d.attribute_mut(p, loc).unwrap().assert_state(s, false);
            d.attribute_mut(p, loc)
                .unwrap()
                .record_transition(s, ts, 1)
                .unwrap();
        }
        d.relations_mut().register(p, b, "visits", 40).unwrap();
        d
    }

    #[test]
    fn empty_domain_round_trips() {
        let d = ContextDomain::new("e", 1, 1).unwrap();
        let f = save(&d).unwrap();
        assert_eq!(load(&f.meta, &f.casm).unwrap(), d);
    }

    #[test]
    fn round_trip_with_mapping_is_exact() {
        let d = small();
        let f = save(&d).unwrap();
        let back = load_with_mapping(&f.meta, &f.casm, d.mapping()).unwrap();
        assert_eq!(back, d);
        assert_eq!(save(&back).unwrap(), f);
    }

    #[test]
    fn anonymous_load_keeps_tensors() {
        let d = small();
        let f = save(&d).unwrap();
        let anon = load(&f.meta, &f.casm).unwrap();
        assert_eq!(anon.resolve_uri(ObjectIndex(1)).unwrap(), "anon:1");
        let a = d
            .attribute(ObjectIndex(0), AttributeId(0))
            .unwrap()
            .casm()
            .unwrap();
        let b = anon
            .attribute(ObjectIndex(0), AttributeId(0))
            .unwrap()
            .casm()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saved_bytes_hold_no_uri() {
        let f = save(&small()).unwrap();
        for bytes in [&f.meta, &f.casm] {
            let text = String::from_utf8_lossy(bytes);
            assert!(!text.contains("urn:"));
        }
    }

    #[test]
    fn tampering_is_detected() {
        let f = save(&small()).unwrap();
        let mut casm = f.casm.clone();
        let pos = casm.iter().position(|&b| b == b'1').unwrap();
        casm[pos] = b'2';
        assert!(matches!(load(&f.meta, &casm), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncation_is_detected() {
        let f = save(&small()).unwrap();
        let cut = &f.meta[..f.meta.len() / 2];
        assert!(matches!(load(cut, &f.casm), Err(Error::Truncated(_))));
    }

    #[test]
    fn version_mismatch_is_detected() {
        let f = save(&small()).unwrap();
        let body = unseal(&f.meta, "m").unwrap();
        let bumped = String::from_utf8(body.to_vec())
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        let resealed = seal(bumped.into_bytes());
        assert!(matches!(
            load(&resealed, &f.casm),
            Err(Error::VersionMismatch {
                expected: 1,
                found: 9
            })
        ));
    }

    #[test]
    fn dangling_state_is_detected() {
        let f = save(&small()).unwrap();
        let body = String::from_utf8(unseal(&f.meta, "m").unwrap().to_vec()).unwrap();
        let broken = body.replace("\"current\":0", "\"current\":7");
        assert_ne!(broken, body);
        assert!(matches!(
            load(&seal(broken.into_bytes()), &f.casm),
            Err(Error::Dangling(_))
        ));
    }

    #[test]
    fn mapping_and_coordinator_files_round_trip() {
        let d = small();
        assert_eq!(
            &load_mapping(&save_mapping(d.mapping()).unwrap()).unwrap(),
            d.mapping()
        );
        let mut c = CoordinatorStore::new();
        c.upsert("urn:p:1", "Donnie Ortiz");
        assert_eq!(load_coordinator(&save_coordinator(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn report_arithmetic() {
        let files = ModelFiles {
            meta: vec![b'a'; 10],
            casm: vec![b'b'; 15],
        };
        let r = CompressionReport::compute(&[b'x'; 100], &files);
        assert!((r.raw_ratio_percent - 25.0).abs() < 1e-9);
        let dr = 100.0 * (r.deflated_meta_bytes + r.deflated_casm_bytes) as f64
            / r.deflated_input_bytes as f64;
        assert!((dr - r.deflated_ratio_percent).abs() < 1e-9);
        assert!(r.to_csv().lines().count() == 3);
    }

    #[test]
    fn empty_input_is_degenerate() {
        let r = CompressionReport::compute(
            &[],
            &save(&ContextDomain::new("e", 1, 1).unwrap()).unwrap(),
        );
        assert!(r.degenerate);
        assert_eq!(r.raw_ratio_percent, 0.0);
        assert!(r.to_table().contains("empty input"));
    }
}
