//! Directed, typed closeness matrix between entities, plus automatic relation
//! identification from co-location and co-timing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::StateChangeEvent;
use crate::model::{dense_u32, AttributeId, ContextDomain, ObjectIndex};

pub const MAX_CLOSENESS: u8 = 100;

pub const CO_LOCATED: &str = "co-located";
pub const CO_TIMED: &str = "co-timed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationTypeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationEventKind {
    Registered,
    Identified,
    Updated,
    Disabled,
}

/// A change to one matrix entry; the payload sent on the relation topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEvent {
    pub kind: RelationEventKind,
    pub from: ObjectIndex,
    pub to: ObjectIndex,
    pub relation: RelationTypeId,
    pub old: u8,
    pub new: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Related {
    pub entity: ObjectIndex,
    pub relation: RelationTypeId,
    pub closeness: u8,
}

type Key = (ObjectIndex, ObjectIndex, RelationTypeId);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationshipMatrix {
    type_names: Vec<String>,
    type_lookup: HashMap<String, RelationTypeId>,
    outgoing: BTreeMap<Key, u8>,
    incoming: BTreeMap<Key, u8>,
}

fn check_closeness(c: i64) -> Result<u8> {
    if (0..=MAX_CLOSENESS as i64).contains(&c) {
        Ok(c as u8)
    } else {
        Err(Error::ClosenessRange(c))
    }
}

impl RelationshipMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn type_id(&self, name: &str) -> Option<RelationTypeId> {
        self.type_lookup.get(name).copied()
    }

    pub fn type_name(&self, id: RelationTypeId) -> Option<&str> {
        self.type_names.get(id.0 as usize).map(String::as_str)
    }

    pub fn intern_type(&mut self, name: &str) -> Result<RelationTypeId> {
        if name.is_empty() {
            return Err(Error::InvalidRelation(
                "relation type name must be non-empty".into(),
            ));
        }
        if let Some(&id) = self.type_lookup.get(name) {
            return Ok(id);
        }
        let id = RelationTypeId(dense_u32(self.type_names.len(), "relation types")?);
        self.type_names.push(name.to_owned());
        self.type_lookup.insert(name.to_owned(), id);
        Ok(id)
    }

    /// Number of active (non-zero) entries.
    pub fn len(&self) -> usize {
        self.outgoing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outgoing.is_empty()
    }

    pub fn closeness(&self, from: ObjectIndex, to: ObjectIndex, relation: RelationTypeId) -> u8 {
        self.outgoing
            .get(&(from, to, relation))
            .copied()
            .unwrap_or(0)
    }

    pub fn closeness_by_name(&self, from: ObjectIndex, to: ObjectIndex, relation: &str) -> u8 {
        self.type_id(relation)
            .map(|t| self.closeness(from, to, t))
            .unwrap_or(0)
    }

    fn write(
        &mut self,
        from: ObjectIndex,
        to: ObjectIndex,
        relation: RelationTypeId,
        value: u8,
    ) -> u8 {
        let old = if value == 0 {
            self.incoming.remove(&(to, from, relation));
            self.outgoing.remove(&(from, to, relation))
        } else {
            self.incoming.insert((to, from, relation), value);
            self.outgoing.insert((from, to, relation), value)
        };
        old.unwrap_or(0)
    }

    fn validate_pair(from: ObjectIndex, to: ObjectIndex) -> Result<()> {
        if from == to {
            return Err(Error::InvalidRelation(format!(
                "entity {from} cannot relate to itself"
            )));
        }
        Ok(())
    }

    /// Starts (or overwrites) a relation.
    pub fn register(
        &mut self,
        from: ObjectIndex,
        to: ObjectIndex,
        relation: &str,
        closeness: i64,
    ) -> Result<RelationEvent> {
        Self::validate_pair(from, to)?;
        let c = check_closeness(closeness)?;
        let t = self.intern_type(relation)?;
        let old = self.write(from, to, t, c);
        Ok(RelationEvent {
            kind: if c == 0 {
                RelationEventKind::Disabled
            } else if old == 0 {
                RelationEventKind::Registered
            } else {
                RelationEventKind::Updated
            },
            from,
            to,
            relation: t,
            old,
            new: c,
        })
    }

    /// Updates an entry's closeness; 0 disables the relation.
    pub fn set_closeness(
        &mut self,
        from: ObjectIndex,
        to: ObjectIndex,
        relation: &str,
        closeness: i64,
    ) -> Result<RelationEvent> {
        Self::validate_pair(from, to)?;
        let c = check_closeness(closeness)?;
        let t = self.intern_type(relation)?;
        let old = self.write(from, to, t, c);
        let kind = match (old, c) {
            (_, 0) => RelationEventKind::Disabled,
            (0, _) => RelationEventKind::Registered,
            _ => RelationEventKind::Updated,
        };
        Ok(RelationEvent {
            kind,
            from,
            to,
            relation: t,
            old,
            new: c,
        })
    }

    pub fn disable(
        &mut self,
        from: ObjectIndex,
        to: ObjectIndex,
        relation: &str,
    ) -> Result<RelationEvent> {
        self.set_closeness(from, to, relation, 0)
    }

    /// Adds `delta` to an entry (missing entries start from 0), capped at 100.
    pub fn strengthen(
        &mut self,
        from: ObjectIndex,
        to: ObjectIndex,
        relation: &str,
        delta: u8,
    ) -> Result<RelationEvent> {
        Self::validate_pair(from, to)?;
        let t = self.intern_type(relation)?;
        let old = self.closeness(from, to, t);
        let new = old.saturating_add(delta).min(MAX_CLOSENESS);
        self.write(from, to, t, new);
        Ok(RelationEvent {
            kind: if old == 0 {
                RelationEventKind::Identified
            } else {
                RelationEventKind::Updated
            },
            from,
            to,
            relation: t,
            old,
            new,
        })
    }

    /// Active relations leaving `entity` with closeness at least
    /// `min_closeness`, strongest first; ties go to the lower entity index.
    pub fn related_entities(&self, entity: ObjectIndex, min_closeness: u8) -> Vec<Related> {
        let lo = (entity, ObjectIndex(0), RelationTypeId(0));
        let mut out: Vec<Related> = self
            .outgoing
            .range(lo..)
            .take_while(|((a, _, _), _)| *a == entity)
            .filter(|(_, &c)| c > 0 && c >= min_closeness)
            .map(|(&(_, b, t), &c)| Related {
                entity: b,
                relation: t,
                closeness: c,
            })
            .collect();
        out.sort_by(|x, y| {
            y.closeness
                .cmp(&x.closeness)
                .then(x.entity.cmp(&y.entity))
                .then(x.relation.cmp(&y.relation))
        });
        out
    }

    /// Entities whose relations point at `entity` with closeness at least
    /// `min_closeness`, deduplicated and in index order.
    pub fn incoming_entities(&self, entity: ObjectIndex, min_closeness: u8) -> Vec<ObjectIndex> {
        let lo = (entity, ObjectIndex(0), RelationTypeId(0));
        let mut out: Vec<ObjectIndex> = self
            .incoming
            .range(lo..)
            .take_while(|((b, _, _), _)| *b == entity)
            .filter(|(_, &c)| c > 0 && c >= min_closeness)
            .map(|(&(_, a, _), _)| a)
            .collect();
        out.dedup();
        out
    }

    /// All active entries as `(from, to, type, closeness)` in key order.
    pub fn entries(
        &self,
    ) -> impl Iterator<Item = (ObjectIndex, ObjectIndex, RelationTypeId, u8)> + '_ {
        self.outgoing.iter().map(|(&(a, b, t), &c)| (a, b, t, c))
    }

    pub(crate) fn restore(
        type_names: Vec<String>,
        entries: Vec<(ObjectIndex, ObjectIndex, RelationTypeId, u8)>,
    ) -> Result<Self> {
        let mut m = RelationshipMatrix::new();
        for name in type_names {
            m.intern_type(&name)?;
        }
        for (a, b, t, c) in entries {
            if t.0 as usize >= m.type_names.len() {
                return Err(Error::Dangling(format!("relation type {}", t.0)));
            }
            Self::validate_pair(a, b)?;
            check_closeness(c as i64)?;
            m.write(a, b, t, c);
        }
        Ok(m)
    }
}

/// Tunables for relation identification and closeness updates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationParams {
    pub location_attribute: String,
    /// W: minimum shared time in one location state, seconds.
    pub colocation_min_overlap_secs: i64,
    /// Δt: maximum gap between two entities' state changes, seconds.
    pub cotiming_window_secs: i64,
    /// k: co-timed changes needed before a relation is identified.
    pub cotiming_min_count: usize,
    /// δ: closeness added per identification.
    pub strengthen_step: u8,
    /// Closeness added for hierarchy evidence.
    pub hierarchy_boost: u8,
    /// Starting closeness of a relation first discovered through hierarchy mining.
    pub hierarchy_base: u8,
    /// Categories whose objects start hierarchy chains when mining; empty
    /// means every object.
    pub hierarchy_origins: Vec<String>,
}

impl Default for RelationParams {
    fn default() -> Self {
        Self {
            location_attribute: "location".into(),
            colocation_min_overlap_secs: 300,
            cotiming_window_secs: 10,
            cotiming_min_count: 3,
            strengthen_step: 10,
            hierarchy_boost: 20,
            hierarchy_base: 50,
            hierarchy_origins: vec!["Person".into()],
        }
    }
}

/// Unordered entity pairs (lower index first) whose location intervals in the
/// same state overlap for at least `min_overlap` seconds. Intervals run from
/// one location event to the entity's next one, the last to the window end.
pub fn colocated_pairs(
    events: &[StateChangeEvent],
    location: AttributeId,
    min_overlap: i64,
) -> BTreeSet<(ObjectIndex, ObjectIndex)> {
    let Some(window_end) = events.iter().map(|e| e.timestamp).max() else {
        return BTreeSet::new();
    };
    let mut per_entity: BTreeMap<ObjectIndex, Vec<&StateChangeEvent>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.attribute == location) {
        per_entity.entry(e.object).or_default().push(e);
    }
    // state -> intervals (start, end, entity)
    let mut by_state: HashMap<u32, Vec<(i64, i64, ObjectIndex)>> = HashMap::new();
    for (entity, mut evs) in per_entity {
        evs.sort_by_key(|e| e.timestamp);
        for (i, e) in evs.iter().enumerate() {
            let end = evs.get(i + 1).map(|n| n.timestamp).unwrap_or(window_end);
            by_state.entry(e.new_state.0).or_default().push((
                e.timestamp.and_utc().timestamp(),
                end.and_utc().timestamp(),
                entity,
            ));
        }
    }
    let mut pairs = BTreeSet::new();
    for intervals in by_state.values_mut() {
        intervals.sort_unstable();
        for (i, &(_, e1, a)) in intervals.iter().enumerate() {
            for &(s2, e2, b) in &intervals[i + 1..] {
                // sorted by start: nothing later can overlap enough
                if s2 > e1 - min_overlap.max(0) {
                    break;
                }
                let overlap = e1.min(e2) - s2;
                if a != b && overlap > 0 && overlap >= min_overlap {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    pairs
}

/// Unordered entity pairs with at least `min_count` pairs of state changes
/// no more than `window` seconds apart.
pub fn cotimed_pairs(
    events: &[StateChangeEvent],
    window: i64,
    min_count: usize,
) -> BTreeSet<(ObjectIndex, ObjectIndex)> {
    let mut times: Vec<(i64, ObjectIndex)> = events
        .iter()
        .map(|e| (e.timestamp.and_utc().timestamp(), e.object))
        .collect();
    times.sort_unstable();
    let mut counts: HashMap<(ObjectIndex, ObjectIndex), usize> = HashMap::new();
    let mut lo = 0;
    for j in 0..times.len() {
        let (tj, bj) = times[j];
        while tj - times[lo].0 > window {
            lo += 1;
        }
        for &(_, ai) in &times[lo..j] {
            if ai != bj {
                *counts.entry((ai.min(bj), ai.max(bj))).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .map(|(k, _)| k)
        .collect()
}

/// Identifies co-location and co-timing relations inside an event window and
/// strengthens them (both directions) in the domain's matrix.
pub fn identify_relations(
    domain: &mut ContextDomain,
    events: &[StateChangeEvent],
    params: &RelationParams,
) -> Result<Vec<RelationEvent>> {
    let mut out = Vec::new();
    if events.is_empty() {
        return Ok(out);
    }
    if let Some(loc) = domain.attribute_id(&params.location_attribute) {
        for (a, b) in colocated_pairs(events, loc, params.colocation_min_overlap_secs) {
            let m = domain.relations_mut();
            out.push(m.strengthen(a, b, CO_LOCATED, params.strengthen_step)?);
            out.push(m.strengthen(b, a, CO_LOCATED, params.strengthen_step)?);
        }
    }
    for (a, b) in cotimed_pairs(
        events,
        params.cotiming_window_secs,
        params.cotiming_min_count,
    ) {
        let m = domain.relations_mut();
        out.push(m.strengthen(a, b, CO_TIMED, params.strengthen_step)?);
        out.push(m.strengthen(b, a, CO_TIMED, params.strengthen_step)?);
    }
    Ok(out)
}

/// One line of a relation seed file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSeed {
    pub from_uri: String,
    pub to_uri: String,
    pub relation: String,
    pub closeness: i64,
}

/// Parses `from_uri, to_uri, type, closeness` lines. Blank lines and lines
/// starting with `#` are skipped, except a leading `#delim=<char>` header.
pub fn parse_relation_seeds(text: &str) -> Result<Vec<RelationSeed>> {
    let (delim, body) = crate::ingest::split_delimiter_header(text, ',')?;
    let mut out = Vec::new();
    for (n, line) in body {
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::format(
                Some(n),
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let closeness = fields[3]
            .parse()
            .map_err(|_| Error::format(Some(n), format!("bad closeness {:?}", fields[3])))?;
        out.push(RelationSeed {
            from_uri: fields[0].to_owned(),
            to_uri: fields[1].to_owned(),
            relation: fields[2].to_owned(),
            closeness,
        });
    }
    Ok(out)
}

/// Registers seed relations; both endpoints must already be registered.
pub fn apply_seeds(
    domain: &mut ContextDomain,
    seeds: &[RelationSeed],
) -> Result<Vec<RelationEvent>> {
    seeds
        .iter()
        .map(|s| {
            let a = domain.resolve_index(&s.from_uri)?;
            let b = domain.resolve_index(&s.to_uri)?;
            domain
                .relations_mut()
                .register(a, b, &s.relation, s.closeness)
        })
        .collect()
}
