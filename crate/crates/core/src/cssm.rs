//! Context Situation State Machines.
//!
//! A situation combines an entity's focus attribute (current state and last
//! transition) with the tracked attributes of every entity it relates to
//! closely enough. Situations are canonicalized, indexed per owner, and fed
//! into a transition tensor exactly like attribute states.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::StateChangeEvent;
use crate::model::{dense_u32, AttributeId, ContextDomain, ObjectIndex, StateIndex};
use crate::tensor::{PathKey, TransitionTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SituationPart {
    pub object: ObjectIndex,
    pub attribute: AttributeId,
    pub state: StateIndex,
    pub last_transition: Option<(StateIndex, StateIndex)>,
}

impl SituationPart {
    fn encode_into(&self, out: &mut Vec<u32>) {
        match self.last_transition {
            Some((from, to)) => out.extend([
                5,
                self.object.0,
                self.attribute.0,
                self.state.0,
                from.0,
                to.0,
            ]),
            None => out.extend([3, self.object.0, self.attribute.0, self.state.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SituationState {
    pub focus: SituationPart,
    /// Sorted by object index, then attribute name.
    pub context: Vec<SituationPart>,
}

impl SituationState {
    /// Canonical length-prefixed encoding: part count, then every part as
    /// `[field count, object, attribute, state, (from, to)]`.
    pub fn encode(&self) -> Box<[u32]> {
        let mut out = Vec::with_capacity(1 + 6 * (1 + self.context.len()));
        out.push(dense_u32(1 + self.context.len(), "situation parts").unwrap_or(u32::MAX));
        self.focus.encode_into(&mut out);
        for p in &self.context {
            p.encode_into(&mut out);
        }
        out.into_boxed_slice()
    }

    pub fn decode(words: &[u32]) -> Result<Self> {
        let bad = || Error::Malformed(format!("bad situation encoding {words:?}"));
        let (&n, mut rest) = words.split_first().ok_or_else(bad)?;
        let mut parts = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let (&len, tail) = rest.split_first().ok_or_else(bad)?;
            let len = len as usize;
            if (len != 3 && len != 5) || tail.len() < len {
                return Err(bad());
            }
            let f = &tail[..len];
            parts.push(SituationPart {
                object: ObjectIndex(f[0]),
                attribute: AttributeId(f[1]),
                state: StateIndex(f[2]),
                last_transition: (len == 5).then(|| (StateIndex(f[3]), StateIndex(f[4]))),
            });
            rest = &tail[len..];
        }
        if !rest.is_empty() || parts.is_empty() {
            return Err(bad());
        }
        let focus = parts.remove(0);
        Ok(SituationState {
            focus,
            context: parts,
        })
    }
}

/// Which attributes and relations enter a situation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SituationConfig {
    pub focus_attribute: String,
    /// Attributes of related entities that take part in the situation.
    pub tracked_attributes: Vec<String>,
    /// Minimum closeness for a related entity to be included.
    pub closeness_threshold: u8,
}

impl SituationConfig {
    pub fn new(focus: &str) -> Self {
        Self {
            focus_attribute: focus.to_owned(),
            tracked_attributes: vec![focus.to_owned(), "Action".to_owned()],
            closeness_threshold: 50,
        }
    }
}

impl Default for SituationConfig {
    fn default() -> Self {
        Self::new("location")
    }
}

fn part_of(
    domain: &ContextDomain,
    object: ObjectIndex,
    attribute: AttributeId,
) -> Option<SituationPart> {
    let attr = domain.attribute(object, attribute)?;
    Some(SituationPart {
        object,
        attribute,
        state: attr.current_state()?,
        last_transition: attr.last_transition(),
    })
}

/// Extracts the current situation of `object` around `attribute`.
pub fn extract_situation(
    domain: &ContextDomain,
    object: ObjectIndex,
    attribute: &str,
    config: &SituationConfig,
) -> Result<SituationState> {
    let key = || format!("{object}/{attribute}");
    let attr_id = domain
        .attribute_id(attribute)
        .ok_or_else(|| Error::not_found("attribute", key()))?;
    if domain.attribute(object, attr_id).is_none() {
        return Err(Error::not_found("attribute", key()));
    }
    let focus =
        part_of(domain, object, attr_id).ok_or_else(|| Error::not_found("current state", key()))?;

    let mut tracked: Vec<(&str, AttributeId)> = config
        .tracked_attributes
        .iter()
        .filter_map(|n| domain.attribute_id(n).map(|id| (n.as_str(), id)))
        .collect();
    tracked.sort_unstable();
    tracked.dedup();

    let mut related: Vec<ObjectIndex> = domain
        .relations()
        .related_entities(object, config.closeness_threshold.max(1))
        .into_iter()
        .map(|r| r.entity)
        .collect();
    related.sort_unstable();
    related.dedup();

    let mut context = Vec::new();
    for other in related {
        for &(_, id) in &tracked {
            context.extend(part_of(domain, other, id));
        }
    }
    Ok(SituationState { focus, context })
}

/// Dense index over canonical situation encodings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SituationRegistry {
    index: HashMap<Box<[u32]>, StateIndex>,
    keys: Vec<Box<[u32]>>,
}

impl SituationRegistry {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, encoded: &[u32]) -> Option<StateIndex> {
        self.index.get(encoded).copied()
    }

    pub fn key(&self, index: StateIndex) -> Option<&[u32]> {
        self.keys.get(index.as_usize()).map(|k| &**k)
    }

    pub fn keys(&self) -> impl Iterator<Item = &[u32]> {
        self.keys.iter().map(|k| &**k)
    }

    /// Returns the index of `encoded`, adding it when unseen.
    pub fn intern(&mut self, encoded: Box<[u32]>) -> Result<(StateIndex, bool)> {
        if let Some(&i) = self.index.get(&encoded) {
            return Ok((i, false));
        }
        let i = StateIndex(dense_u32(self.keys.len(), "situations")?);
        self.index.insert(encoded.clone(), i);
        self.keys.push(encoded);
        Ok((i, true))
    }
}

/// One entity's situation state machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cssm {
    owner: ObjectIndex,
    tensor: TransitionTensor,
    registry: SituationRegistry,
    history: VecDeque<StateIndex>,
    current: Option<StateIndex>,
    events: u64,
}

impl Cssm {
    pub fn new(owner: ObjectIndex, steps: usize) -> Result<Self> {
        Ok(Self {
            owner,
            tensor: TransitionTensor::new(steps, 0)?,
            registry: SituationRegistry::default(),
            history: VecDeque::with_capacity(steps + 1),
            current: None,
            events: 0,
        })
    }

    pub fn owner(&self) -> ObjectIndex {
        self.owner
    }

    pub fn tensor(&self) -> &TransitionTensor {
        &self.tensor
    }

    pub fn registry(&self) -> &SituationRegistry {
        &self.registry
    }

    pub fn current(&self) -> Option<StateIndex> {
        self.current
    }

    /// Last (up to R) situation indexes.
    pub fn history(&self) -> impl ExactSizeIterator<Item = &StateIndex> {
        self.history.iter()
    }

    /// Number of situation changes recorded.
    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Records `situation` if it differs from the current one and returns
    /// the counted path, if any.
    pub fn record_situation(
        &mut self,
        situation: &SituationState,
    ) -> Result<Option<(Vec<StateIndex>, u64)>> {
        let (idx, new) = self.registry.intern(situation.encode())?;
        if new {
            self.tensor.grow_dimension(idx)?;
        }
        if self.current == Some(idx) {
            return Ok(None);
        }
        self.current = Some(idx);
        self.events += 1;
        let steps = self.tensor.steps();
        let mut counted = None;
        if self.history.len() == steps {
            let mut path: PathKey = self.history.iter().copied().collect();
            path.push(idx);
            let c = self.tensor.record(&path)?;
            counted = Some((path.into_vec(), c));
        }
        self.history.push_back(idx);
        while self.history.len() > steps {
            self.history.pop_front();
        }
        Ok(counted)
    }

    pub(crate) fn restore(
        owner: ObjectIndex,
        tensor: TransitionTensor,
        keys: Vec<Box<[u32]>>,
        history: Vec<StateIndex>,
        current: Option<StateIndex>,
        events: u64,
    ) -> Result<Self> {
        let mut registry = SituationRegistry::default();
        for k in keys {
            if !registry.intern(k)?.1 {
                return Err(Error::Malformed(format!(
                    "duplicate situation in registry of {owner}"
                )));
            }
        }
        Ok(Self {
            owner,
            tensor,
            registry,
            history: history.into(),
            current,
            events,
        })
    }
}

/// A situation path whose count changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountedSituation {
    pub owner: ObjectIndex,
    pub path: Vec<StateIndex>,
    pub count: u64,
}

/// All CSSMs of a domain, keyed by owner, plus the extraction config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CssmStore {
    config: SituationConfig,
    steps: usize,
    machines: BTreeMap<ObjectIndex, Cssm>,
}

impl CssmStore {
    pub fn new(config: SituationConfig, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("transition steps must be at least 1".into()));
        }
        Ok(Self {
            config,
            steps,
            machines: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SituationConfig {
        &self.config
    }

    pub fn machine(&self, owner: ObjectIndex) -> Option<&Cssm> {
        self.machines.get(&owner)
    }

    pub fn machines(&self) -> impl Iterator<Item = &Cssm> {
        self.machines.values()
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }

    /// Re-extracts and records the situation of `owner`.
    pub fn update_owner(
        &mut self,
        domain: &ContextDomain,
        owner: ObjectIndex,
    ) -> Result<Option<CountedSituation>> {
        let situation =
            match extract_situation(domain, owner, &self.config.focus_attribute, &self.config) {
                Ok(s) => s,
                // owners without a focus state yet have no situation
                Err(Error::NotFound { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
        let steps = self.steps;
        let machine = match self.machines.entry(owner) {
            std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
            std::collections::btree_map::Entry::Vacant(v) => v.insert(Cssm::new(owner, steps)?),
        };
        Ok(machine
            .record_situation(&situation)?
            .map(|(path, count)| CountedSituation { owner, path, count }))
    }

    /// Updates every situation a state change can alter: the changed entity's
    /// own (when the focus attribute changed) and those of entities that
    /// closely relate to it (when a tracked attribute changed).
    pub fn on_event(
        &mut self,
        domain: &ContextDomain,
        event: &StateChangeEvent,
    ) -> Result<Vec<CountedSituation>> {
        let mut out = Vec::new();
        let name = domain.attribute_name(event.attribute).unwrap_or_default();
        if name == self.config.focus_attribute {
            out.extend(self.update_owner(domain, event.object)?);
        }
        if self.config.tracked_attributes.iter().any(|t| t == name) {
            let watchers = domain
                .relations()
                .incoming_entities(event.object, self.config.closeness_threshold.max(1));
            for w in watchers {
                out.extend(self.update_owner(domain, w)?);
            }
        }
        Ok(out)
    }

    pub(crate) fn restore(
        config: SituationConfig,
        steps: usize,
        machines: Vec<Cssm>,
    ) -> Result<Self> {
        let mut store = CssmStore::new(config, steps)?;
        for m in machines {
            if store.machines.insert(m.owner, m).is_some() {
                return Err(Error::Malformed("duplicate situation machine owner".into()));
            }
        }
        Ok(store)
    }
}
