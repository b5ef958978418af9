//! Context Attribute State Machines: one transition tensor per ordinal
//! attribute, fed by state-change events.

use crate::error::{Error, Result};
use crate::ingest::StateChangeEvent;
use crate::model::{AttributeId, ContextAttributeState, ContextDomain, ObjectIndex, StateIndex};
use crate::tensor::TransitionTensor;

/// Read-only view of one attribute's state machine.
#[derive(Debug, Clone, Copy)]
pub struct Casm<'a> {
    pub object: ObjectIndex,
    pub attribute: AttributeId,
    pub tensor: &'a TransitionTensor,
    pub states: &'a [ContextAttributeState],
}

impl Casm<'_> {
    pub fn transition_count(&self, path: &[StateIndex]) -> Result<u64> {
        self.tensor.count(path)
    }
}

pub fn casm(
    domain: &ContextDomain,
    object: ObjectIndex,
    attribute: AttributeId,
) -> Option<Casm<'_>> {
    let attr = domain.attribute(object, attribute)?;
    Some(Casm {
        object,
        attribute,
        tensor: attr.casm()?,
        states: attr.states(),
    })
}

/// A path whose count changed, with the count after the change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountedPath {
    pub object: ObjectIndex,
    pub attribute: AttributeId,
    pub path: Vec<StateIndex>,
    pub count: u64,
}

/// Feeds one event into its attribute's history and state machine.
pub fn record_event(
    domain: &mut ContextDomain,
    event: &StateChangeEvent,
) -> Result<Option<CountedPath>> {
    let steps = domain.transition_steps();
    let attr = domain
        .attribute_mut(event.object, event.attribute)
        .ok_or_else(|| {
            Error::not_found("attribute", format!("{}/{}", event.object, event.attribute))
        })?;
    if attr.state(event.new_state).is_none() {
        return Err(Error::StateOutOfRange {
            index: event.new_state.0,
            dimension: attr.states().len(),
        });
    }
    Ok(attr
        .record_transition(event.new_state, event.timestamp, steps)?
        .map(|(path, count)| CountedPath {
            object: event.object,
            attribute: event.attribute,
            path: path.into_vec(),
            count,
        }))
}

/// Feeds a batch of events in order.
pub fn record_events(
    domain: &mut ContextDomain,
    events: &[StateChangeEvent],
) -> Result<Vec<CountedPath>> {
    let mut out = Vec::new();
    for e in events {
        out.extend(record_event(domain, e)?);
    }
    Ok(out)
}
