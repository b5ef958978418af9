//! Ontology-state data model: domains, categories, objects, attributes and
//! their states, plus the index/URI bijection that keeps identities out of
//! the modeled data.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationshipMatrix;
use crate::tensor::{PathKey, TransitionTensor};

macro_rules! index_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        #[repr(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn as_usize(self) -> usize {
                self.0 as usize
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                $name(v)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

index_newtype!(
    /// Domain-wide dense index of a context object.
    ObjectIndex
);
index_newtype!(
    /// Attribute-local dense index of a state (or situation, inside a CSSM).
    StateIndex
);
index_newtype!(
    /// Domain-wide dense index of an attribute name.
    AttributeId
);

pub(crate) fn dense_u32(len: usize, what: &str) -> Result<u32> {
    u32::try_from(len).map_err(|_| Error::Config(format!("too many {what}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    /// Unordered categorical values; no state machine is attached.
    Nominal,
    #[default]
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextAttributeState {
    pub index: StateIndex,
    pub value: String,
    /// Hierarchy back-reference: the object this state names.
    pub referenced_object: Option<ObjectIndex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryEntry {
    pub state: StateIndex,
    pub timestamp: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextAttribute {
    id: AttributeId,
    kind: AttributeKind,
    states: Vec<ContextAttributeState>,
    lookup: HashMap<String, StateIndex>,
    current: Option<StateIndex>,
    last_transition: Option<(StateIndex, StateIndex)>,
    history: VecDeque<HistoryEntry>,
    events: u64,
    casm: Option<TransitionTensor>,
}

impl ContextAttribute {
    pub(crate) fn new(id: AttributeId, kind: AttributeKind, steps: usize) -> Result<Self> {
        let casm = match kind {
            AttributeKind::Ordinal => Some(TransitionTensor::new(steps, 0)?),
            AttributeKind::Nominal => None,
        };
        Ok(Self {
            id,
            kind,
            states: Vec::new(),
            lookup: HashMap::new(),
            current: None,
            last_transition: None,
            history: VecDeque::with_capacity(steps + 1),
            events: 0,
            casm,
        })
    }

    pub fn id(&self) -> AttributeId {
        self.id
    }

    pub fn kind(&self) -> AttributeKind {
        self.kind
    }

    pub fn states(&self) -> &[ContextAttributeState] {
        &self.states
    }

    pub fn state(&self, index: StateIndex) -> Option<&ContextAttributeState> {
        self.states.get(index.as_usize())
    }

    pub fn state_index(&self, value: &str) -> Option<StateIndex> {
        self.lookup.get(value).copied()
    }

    pub fn current_state(&self) -> Option<StateIndex> {
        self.current
    }

    pub fn last_transition(&self) -> Option<(StateIndex, StateIndex)> {
        self.last_transition
    }

    /// The last (up to R) states fed into the attribute's state machine.
    pub fn history(&self) -> impl ExactSizeIterator<Item = &HistoryEntry> {
        self.history.iter()
    }

    /// Number of state-change events recorded into the state machine.
    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn casm(&self) -> Option<&TransitionTensor> {
        self.casm.as_ref()
    }

    /// Registers `value`, returning its index and whether it was new.
    /// Idempotent; new states get the next dense index.
    pub fn register_state(&mut self, value: &str) -> Result<(StateIndex, bool)> {
        if value.is_empty() {
            return Err(Error::format(None, "state value must be non-empty"));
        }
        if let Some(&idx) = self.lookup.get(value) {
            return Ok((idx, false));
        }
        let idx = StateIndex(dense_u32(self.states.len(), "states")?);
        self.states.push(ContextAttributeState {
            index: idx,
            value: value.to_owned(),
            referenced_object: None,
        });
        self.lookup.insert(value.to_owned(), idx);
        if let Some(t) = self.casm.as_mut() {
            t.grow_dimension(idx)?;
        }
        Ok((idx, true))
    }

    pub(crate) fn set_reference(&mut self, state: StateIndex, target: Option<ObjectIndex>) {
        if let Some(s) = self.states.get_mut(state.as_usize()) {
            s.referenced_object = target;
        }
    }

    /// Marks `state` as the current one. Returns `false` (and changes nothing)
    /// when it already is current and `allow_self_loop` is off.
    pub(crate) fn assert_state(&mut self, state: StateIndex, allow_self_loop: bool) -> bool {
        match self.current {
            Some(cur) if cur == state && !allow_self_loop => false,
            Some(cur) => {
                self.last_transition = Some((cur, state));
                self.current = Some(state);
                true
            }
            None => {
                self.current = Some(state);
                true
            }
        }
    }

    /// Appends `state` to the history ring and, once R prior states are
    /// available, counts the resulting path. Returns the counted path.
    pub(crate) fn record_transition(
        &mut self,
        state: StateIndex,
        timestamp: NaiveDateTime,
        steps: usize,
    ) -> Result<Option<(PathKey, u64)>> {
        self.events += 1;
        let mut counted = None;
        if let Some(tensor) = self.casm.as_mut() {
            if self.history.len() == steps {
                let mut path: PathKey = self.history.iter().map(|h| h.state).collect();
                path.push(state);
                let c = tensor.record(&path)?;
                counted = Some((path, c));
            }
        }
        self.current = Some(state);
        self.history.push_back(HistoryEntry { state, timestamp });
        while self.history.len() > steps {
            self.history.pop_front();
        }
        Ok(counted)
    }

    /// Folds state `absorb` into `keep` (manual granularity coarsening).
    /// Indexes above `absorb` shift down by one and the absorbed value is
    /// forgotten. Counts of paths that become identical are summed.
    pub fn merge_states(&mut self, keep: StateIndex, absorb: StateIndex) -> Result<()> {
        let n = self.states.len();
        for s in [keep, absorb] {
            if s.as_usize() >= n {
                return Err(Error::StateOutOfRange {
                    index: s.0,
                    dimension: n,
                });
            }
        }
        if keep == absorb {
            return Ok(());
        }
        let remap = |s: StateIndex| -> StateIndex {
            let s = if s == absorb { keep } else { s };
            if s > absorb {
                StateIndex(s.0 - 1)
            } else {
                s
            }
        };
        let absorbed = self.states.remove(absorb.as_usize());
        self.lookup.remove(&absorbed.value);
        for st in &mut self.states {
            st.index = remap(st.index);
        }
        for v in self.lookup.values_mut() {
            *v = remap(*v);
        }
        self.current = self.current.map(remap);
        self.last_transition = self.last_transition.map(|(a, b)| (remap(a), remap(b)));
        for h in &mut self.history {
            h.state = remap(h.state);
        }
        if let Some(t) = self.casm.as_mut() {
            *t = t.remap(n - 1, remap)?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn restore(
        id: AttributeId,
        kind: AttributeKind,
        states: Vec<ContextAttributeState>,
        current: Option<StateIndex>,
        last_transition: Option<(StateIndex, StateIndex)>,
        history: Vec<HistoryEntry>,
        events: u64,
        casm: Option<TransitionTensor>,
    ) -> Self {
        let lookup = states.iter().map(|s| (s.value.clone(), s.index)).collect();
        Self {
            id,
            kind,
            states,
            lookup,
            current,
            last_transition,
            history: history.into(),
            events,
            casm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextObject {
    index: ObjectIndex,
    category: usize,
    labels: Vec<String>,
    attributes: Vec<ContextAttribute>,
}

impl ContextObject {
    pub fn index(&self) -> ObjectIndex {
        self.index
    }

    /// Position of the object's category in [`ContextDomain::categories`].
    pub fn category(&self) -> usize {
        self.category
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn attributes(&self) -> &[ContextAttribute] {
        &self.attributes
    }

    pub fn attribute(&self, id: AttributeId) -> Option<&ContextAttribute> {
        self.attributes.iter().find(|a| a.id == id)
    }

    pub(crate) fn attribute_mut(&mut self, id: AttributeId) -> Option<&mut ContextAttribute> {
        self.attributes.iter_mut().find(|a| a.id == id)
    }

    pub(crate) fn restore(
        index: ObjectIndex,
        category: usize,
        labels: Vec<String>,
        attributes: Vec<ContextAttribute>,
    ) -> Self {
        Self {
            index,
            category,
            labels,
            attributes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextCategory {
    pub name: String,
    pub objects: Vec<ObjectIndex>,
}

/// Bijection between dense object indexes and entity URIs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ObjectUriMapping {
    forward: Vec<String>,
    reverse: HashMap<String, ObjectIndex>,
}

impl ObjectUriMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `uri`, assigning the next dense index if unseen.
    pub fn insert(&mut self, uri: &str) -> Result<(ObjectIndex, bool)> {
        if let Some(&idx) = self.reverse.get(uri) {
            return Ok((idx, false));
        }
        let idx = ObjectIndex(dense_u32(self.forward.len(), "objects")?);
        self.forward.push(uri.to_owned());
        self.reverse.insert(uri.to_owned(), idx);
        Ok((idx, true))
    }

    pub fn resolve_uri(&self, index: ObjectIndex) -> Result<&str> {
        self.forward
            .get(index.as_usize())
            .map(String::as_str)
            .ok_or_else(|| Error::not_found("object index", index))
    }

    pub fn resolve_index(&self, uri: &str) -> Result<ObjectIndex> {
        self.get(uri).ok_or_else(|| Error::not_found("uri", uri))
    }

    pub fn get(&self, uri: &str) -> Option<ObjectIndex> {
        self.reverse.get(uri).copied()
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Index that the next unseen URI will receive.
    pub fn next_index(&self) -> ObjectIndex {
        ObjectIndex(self.forward.len() as u32)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectIndex, &str)> {
        self.forward
            .iter()
            .enumerate()
            .map(|(i, u)| (ObjectIndex(i as u32), u.as_str()))
    }
}

impl TryFrom<Vec<String>> for ObjectUriMapping {
    type Error = Error;

    fn try_from(uris: Vec<String>) -> Result<Self> {
        let mut m = ObjectUriMapping::default();
        for uri in &uris {
            if !m.insert(uri)?.1 {
                return Err(Error::Malformed(format!("duplicate uri in mapping: {uri}")));
            }
        }
        Ok(m)
    }
}

impl From<ObjectUriMapping> for Vec<String> {
    fn from(m: ObjectUriMapping) -> Self {
        m.forward
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub descriptors: BTreeMap<String, String>,
}

/// URI → real-world identity records. Lives beside, never inside, the model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorStore {
    records: BTreeMap<String, IdentityRecord>,
}

impl CoordinatorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or refreshes the identity name of `uri`.
    pub fn upsert(&mut self, uri: &str, name: &str) -> &mut IdentityRecord {
        let rec = self.records.entry(uri.to_owned()).or_default();
        if rec.name != name {
            rec.name = name.to_owned();
        }
        rec
    }

    pub fn set_descriptor(&mut self, uri: &str, key: &str, value: &str) {
        self.records
            .entry(uri.to_owned())
            .or_default()
            .descriptors
            .insert(key.to_owned(), value.to_owned());
    }

    pub fn get(&self, uri: &str) -> Option<&IdentityRecord> {
        self.records.get(uri)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &IdentityRecord)> {
        self.records.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Every non-empty identity string held by the store (names and
    /// descriptor values).
    pub fn identity_strings(&self) -> impl Iterator<Item = &str> {
        self.records
            .values()
            .flat_map(|r| {
                std::iter::once(r.name.as_str()).chain(r.descriptors.values().map(String::as_str))
            })
            .filter(|s| !s.is_empty())
    }
}

/// Splits a `::` category path into `(category, labels)`.
pub fn split_category_path(path: &str) -> Result<(&str, Vec<&str>)> {
    if path.trim().is_empty() {
        return Err(Error::format(None, "category path must be non-empty"));
    }
    let mut parts = path.split("::").map(str::trim);
    let mut segs = Vec::new();
    for seg in parts.by_ref() {
        if seg.is_empty() {
            return Err(Error::format(
                None,
                format!("empty segment in category path {path:?}"),
            ));
        }
        segs.push(seg);
    }
    let first = segs.remove(0);
    Ok((first, segs))
}

/// Root container: categories, objects, the index registry and the H/R
/// hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextDomain {
    domain_id: String,
    hierarchy_depth: usize,
    transition_steps: usize,
    count_self_loops: bool,
    categories: Vec<ContextCategory>,
    category_lookup: HashMap<String, usize>,
    objects: Vec<ContextObject>,
    object_index: ObjectUriMapping,
    attribute_names: Vec<String>,
    attribute_lookup: HashMap<String, AttributeId>,
    attribute_kinds: BTreeMap<String, AttributeKind>,
    relations: RelationshipMatrix,
}

impl ContextDomain {
    pub fn new(
        domain_id: impl Into<String>,
        hierarchy_depth: usize,
        transition_steps: usize,
    ) -> Result<Self> {
        if hierarchy_depth == 0 {
            return Err(Error::Config("hierarchy depth H must be at least 1".into()));
        }
        if transition_steps == 0 {
            return Err(Error::Config(
                "transition steps R must be at least 1".into(),
            ));
        }
        Ok(Self {
            domain_id: domain_id.into(),
            hierarchy_depth,
            transition_steps,
            count_self_loops: false,
            categories: Vec::new(),
            category_lookup: HashMap::new(),
            objects: Vec::new(),
            object_index: ObjectUriMapping::new(),
            attribute_names: Vec::new(),
            attribute_lookup: HashMap::new(),
            attribute_kinds: BTreeMap::new(),
            relations: RelationshipMatrix::new(),
        })
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    /// H: how many hierarchy levels are chased from a state.
    pub fn hierarchy_depth(&self) -> usize {
        self.hierarchy_depth
    }

    /// R: how many transition steps each state machine records.
    pub fn transition_steps(&self) -> usize {
        self.transition_steps
    }

    pub fn count_self_loops(&self) -> bool {
        self.count_self_loops
    }

    /// When on, re-asserting the current state is recorded as a self-loop
    /// transition instead of being suppressed.
    pub fn set_count_self_loops(&mut self, on: bool) {
        self.count_self_loops = on;
    }

    /// Declares the kind attributes named `name` get when first registered.
    pub fn declare_attribute_kind(&mut self, name: &str, kind: AttributeKind) {
        self.attribute_kinds.insert(name.to_owned(), kind);
    }

    pub fn attribute_kinds(&self) -> &BTreeMap<String, AttributeKind> {
        &self.attribute_kinds
    }

    pub fn categories(&self) -> &[ContextCategory] {
        &self.categories
    }

    pub fn objects(&self) -> &[ContextObject] {
        &self.objects
    }

    pub fn object(&self, index: ObjectIndex) -> Option<&ContextObject> {
        self.objects.get(index.as_usize())
    }

    pub(crate) fn object_mut(&mut self, index: ObjectIndex) -> Option<&mut ContextObject> {
        self.objects.get_mut(index.as_usize())
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn mapping(&self) -> &ObjectUriMapping {
        &self.object_index
    }

    pub fn relations(&self) -> &RelationshipMatrix {
        &self.relations
    }

    pub fn relations_mut(&mut self) -> &mut RelationshipMatrix {
        &mut self.relations
    }

    pub fn relationship_types(&self) -> &[String] {
        self.relations.type_names()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute_id(&self, name: &str) -> Option<AttributeId> {
        self.attribute_lookup.get(name).copied()
    }

    pub fn attribute_name(&self, id: AttributeId) -> Option<&str> {
        self.attribute_names.get(id.as_usize()).map(String::as_str)
    }

    pub fn attribute(&self, object: ObjectIndex, id: AttributeId) -> Option<&ContextAttribute> {
        self.object(object)?.attribute(id)
    }

    pub fn attribute_by_name(&self, object: ObjectIndex, name: &str) -> Option<&ContextAttribute> {
        self.attribute(object, self.attribute_id(name)?)
    }

    pub(crate) fn attribute_mut(
        &mut self,
        object: ObjectIndex,
        id: AttributeId,
    ) -> Option<&mut ContextAttribute> {
        self.object_mut(object)?.attribute_mut(id)
    }

    /// Registers the object identified by `uri` under `category_path`
    /// (`Category::Label::...`). Idempotent on `uri`.
    pub fn register_object(&mut self, category_path: &str, uri: &str) -> Result<ObjectIndex> {
        if let Some(idx) = self.object_index.get(uri) {
            return Ok(idx);
        }
        if uri.is_empty() {
            return Err(Error::format(None, "object uri must be non-empty"));
        }
        let (category, labels) = split_category_path(category_path)?;
        let (idx, _) = self.object_index.insert(uri)?;
        let cat = match self.category_lookup.get(category) {
            Some(&c) => c,
            None => {
                let c = self.categories.len();
                self.categories.push(ContextCategory {
                    name: category.to_owned(),
                    objects: Vec::new(),
                });
                self.category_lookup.insert(category.to_owned(), c);
                c
            }
        };
        self.categories[cat].objects.push(idx);
        self.objects.push(ContextObject {
            index: idx,
            category: cat,
            labels: labels.into_iter().map(str::to_owned).collect(),
            attributes: Vec::new(),
        });
        Ok(idx)
    }

    pub fn resolve_uri(&self, index: ObjectIndex) -> Result<&str> {
        self.object_index.resolve_uri(index)
    }

    pub fn resolve_index(&self, uri: &str) -> Result<ObjectIndex> {
        self.object_index.resolve_index(uri)
    }

    /// Interns an attribute name domain-wide.
    pub fn intern_attribute(&mut self, name: &str) -> Result<AttributeId> {
        if name.is_empty() {
            return Err(Error::format(None, "attribute name must be non-empty"));
        }
        if let Some(&id) = self.attribute_lookup.get(name) {
            return Ok(id);
        }
        let id = AttributeId(dense_u32(self.attribute_names.len(), "attributes")?);
        self.attribute_names.push(name.to_owned());
        self.attribute_lookup.insert(name.to_owned(), id);
        Ok(id)
    }

    /// Ensures `object` carries the attribute `name`, creating it if needed.
    pub fn ensure_attribute(&mut self, object: ObjectIndex, name: &str) -> Result<AttributeId> {
        let id = self.intern_attribute(name)?;
        let kind = self.attribute_kinds.get(name).copied().unwrap_or_default();
        let steps = self.transition_steps;
        let obj = self
            .objects
            .get_mut(object.as_usize())
            .ok_or_else(|| Error::not_found("object index", object))?;
        if obj.attribute(id).is_none() {
            obj.attributes.push(ContextAttribute::new(id, kind, steps)?);
        }
        Ok(id)
    }

    /// Registers `value` as a state of the object's attribute. When the value
    /// is the URI of a registered object, the hierarchy back-reference is set.
    pub fn register_state(
        &mut self,
        object: ObjectIndex,
        attribute: AttributeId,
        value: &str,
    ) -> Result<StateIndex> {
        let target = self.object_index.get(value);
        let attr = self
            .attribute_mut(object, attribute)
            .ok_or_else(|| Error::not_found("attribute", attribute))?;
        let (idx, new) = attr.register_state(value)?;
        if new && target.is_some() {
            attr.set_reference(idx, target);
        }
        Ok(idx)
    }

    /// Sets or clears a state's hierarchy back-reference.
    pub fn set_state_reference(
        &mut self,
        object: ObjectIndex,
        attribute: AttributeId,
        state: StateIndex,
        target: Option<ObjectIndex>,
    ) -> Result<()> {
        if let Some(t) = target {
            if t.as_usize() >= self.objects.len() {
                return Err(Error::not_found("object index", t));
            }
        }
        let attr = self
            .attribute_mut(object, attribute)
            .ok_or_else(|| Error::not_found("attribute", attribute))?;
        if attr.state(state).is_none() {
            return Err(Error::not_found("state index", state));
        }
        attr.set_reference(state, target);
        Ok(())
    }

    /// Iterates `(object, attribute)` for every attribute in the domain.
    pub fn iter_attributes(&self) -> impl Iterator<Item = (ObjectIndex, &ContextAttribute)> {
        self.objects
            .iter()
            .flat_map(|o| o.attributes.iter().map(move |a| (o.index, a)))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn restore(
        domain_id: String,
        hierarchy_depth: usize,
        transition_steps: usize,
        count_self_loops: bool,
        category_names: Vec<String>,
        objects: Vec<ContextObject>,
        object_index: ObjectUriMapping,
        attribute_names: Vec<String>,
        attribute_kinds: BTreeMap<String, AttributeKind>,
        relations: RelationshipMatrix,
    ) -> Result<Self> {
        let mut domain = ContextDomain::new(domain_id, hierarchy_depth, transition_steps)?;
        domain.count_self_loops = count_self_loops;
        for name in category_names {
            domain
                .category_lookup
                .insert(name.clone(), domain.categories.len());
            domain.categories.push(ContextCategory {
                name,
                objects: Vec::new(),
            });
        }
        for obj in &objects {
            domain
                .categories
                .get_mut(obj.category)
                .ok_or_else(|| {
                    Error::Dangling(format!("category {} of object {}", obj.category, obj.index))
                })?
                .objects
                .push(obj.index);
        }
        for name in attribute_names {
            domain.intern_attribute(&name)?;
        }
        domain.objects = objects;
        domain.object_index = object_index;
        domain.attribute_kinds = attribute_kinds;
        domain.relations = relations;
        Ok(domain)
    }
}
