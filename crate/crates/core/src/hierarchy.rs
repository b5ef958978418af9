//! Hierarchy links (a state naming another object) and the relations mined
//! from them.
//!
//! A chain starts at an object, follows every state whose value names a
//! registered object, and stops at depth H. When an object reached this way
//! points back at the origin through any of its own states (an owner label or
//! a user list), the two are tied by a `hierarchy-affinity` relation.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeId, ContextDomain, ObjectIndex, StateIndex};
use crate::relation::{RelationEvent, RelationParams, MAX_CLOSENESS};

pub const HIERARCHY_AFFINITY: &str = "hierarchy-affinity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierarchyLink {
    pub from: ObjectIndex,
    pub attribute: AttributeId,
    pub state: StateIndex,
    pub to: ObjectIndex,
    /// Distance from the chain origin; direct links have depth 1.
    pub depth: usize,
}

/// Checks whether a state names a registered object and, if so, records the
/// back-reference. Exact URI match only.
pub fn identify_hierarchy(
    domain: &mut ContextDomain,
    object: ObjectIndex,
    attribute: AttributeId,
    state: StateIndex,
) -> Result<Option<HierarchyLink>> {
    let attr = domain
        .attribute(object, attribute)
        .ok_or_else(|| Error::not_found("attribute", format!("{object}/{attribute}")))?;
    let st = attr
        .state(state)
        .ok_or_else(|| Error::not_found("state index", state))?;
    let Some(target) = domain.mapping().get(&st.value) else {
        return Ok(None);
    };
    if target == object {
        return Ok(None);
    }
    if st.referenced_object != Some(target) {
        domain.set_state_reference(object, attribute, state, Some(target))?;
    }
    Ok(Some(HierarchyLink {
        from: object,
        attribute,
        state,
        to: target,
        depth: 1,
    }))
}

/// Runs identification over every state and returns the links that were not
/// recorded before. A second run on an unchanged domain returns nothing.
pub fn refresh_hierarchy(domain: &mut ContextDomain) -> Result<Vec<HierarchyLink>> {
    let mut candidates = Vec::new();
    for (obj, attr) in domain.iter_attributes() {
        for st in attr.states() {
            if st.referenced_object.is_none() && domain.mapping().get(&st.value).is_some() {
                candidates.push((obj, attr.id(), st.index));
            }
        }
    }
    let mut fresh = Vec::new();
    for (o, a, s) in candidates {
        fresh.extend(identify_hierarchy(domain, o, a, s)?);
    }
    Ok(fresh)
}

/// Direct links currently recorded for `object`.
pub fn direct_links(domain: &ContextDomain, object: ObjectIndex) -> Vec<HierarchyLink> {
    let Some(obj) = domain.object(object) else {
        return Vec::new();
    };
    obj.attributes()
        .iter()
        .flat_map(|a| {
            a.states().iter().filter_map(move |s| {
                s.referenced_object
                    .filter(|&t| t != object)
                    .map(|to| HierarchyLink {
                        from: object,
                        attribute: a.id(),
                        state: s.index,
                        to,
                        depth: 1,
                    })
            })
        })
        .collect()
}

/// Breadth-first links reachable from `origin`, at most H deep, visiting
/// each object once and never returning to the origin.
pub fn hierarchy_chain(domain: &ContextDomain, origin: ObjectIndex) -> Vec<HierarchyLink> {
    let max_depth = domain.hierarchy_depth();
    let mut seen = BTreeSet::from([origin]);
    let mut queue = VecDeque::from([(origin, 0usize)]);
    let mut out = Vec::new();
    while let Some((node, depth)) = queue.pop_front() {
        if depth == max_depth {
            continue;
        }
        for mut link in direct_links(domain, node) {
            if !seen.insert(link.to) {
                continue;
            }
            link.depth = depth + 1;
            queue.push_back((link.to, link.depth));
            out.push(link);
        }
    }
    out
}

/// Whether any state of `holder` references `target`.
fn references(domain: &ContextDomain, holder: ObjectIndex, target: ObjectIndex) -> bool {
    domain.object(holder).is_some_and(|o| {
        o.attributes().iter().any(|a| {
            a.states()
                .iter()
                .any(|s| s.referenced_object == Some(target))
        })
    })
}

/// Pairs `(origin, reached)` with a hierarchy chain one way and a direct
/// back-reference the other way. Only objects of the `origins` categories
/// start chains (all objects when empty); inside a reference cycle every
/// member would otherwise pair with every other.
pub fn bidirectional_pairs(
    domain: &ContextDomain,
    origins: &[String],
) -> Vec<(ObjectIndex, ObjectIndex)> {
    let mut out = Vec::new();
    let cats = domain.categories();
    for obj in domain.objects() {
        if !origins.is_empty() && !origins.iter().any(|c| *c == cats[obj.category()].name) {
            continue;
        }
        let origin = obj.index();
        for link in hierarchy_chain(domain, origin) {
            if references(domain, link.to, origin) {
                out.push((origin, link.to));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Mines bidirectional hierarchy relations into `hierarchy-affinity` entries
/// in both directions. The closeness is the strongest other relation between
/// the pair (or `hierarchy_base` when there is none) plus `hierarchy_boost`,
/// capped at 100; entries only ever rise. Returns the entries that changed.
pub fn mine_bidirectional_relations(
    domain: &mut ContextDomain,
    params: &RelationParams,
) -> Result<Vec<RelationEvent>> {
    let pairs = bidirectional_pairs(domain, &params.hierarchy_origins);
    let mut events = Vec::new();
    for (a, b) in pairs {
        for (from, to) in [(a, b), (b, a)] {
            let matrix = domain.relations();
            let affinity = matrix.type_id(HIERARCHY_AFFINITY);
            let base = matrix
                .related_entities(from, 1)
                .into_iter()
                .filter(|r| r.entity == to && Some(r.relation) != affinity)
                .map(|r| r.closeness)
                .max()
                .unwrap_or(params.hierarchy_base);
            let target = base
                .saturating_add(params.hierarchy_boost)
                .min(MAX_CLOSENESS);
            let current = affinity.map(|t| matrix.closeness(from, to, t)).unwrap_or(0);
            if target > current {
                events.push(domain.relations_mut().set_closeness(
                    from,
                    to,
                    HIERARCHY_AFFINITY,
                    target as i64,
                )?);
            }
        }
    }
    Ok(events)
}
