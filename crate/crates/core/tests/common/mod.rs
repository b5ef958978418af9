//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use csmhr_core::ingest::parse_timestamp;
use csmhr_core::{
    record_event, AttributeId, ContextDomain, ObjectIndex, StateChangeEvent, StateIndex,
};

/// Sliding-window path counts of `trace` for an R-step machine.
pub fn window_counts(trace: &[u32], steps: usize) -> BTreeMap<Vec<u32>, u64> {
    let mut out = BTreeMap::new();
    if trace.len() <= steps {
        return out;
    }
    for i in 0..trace.len() - steps {
        *out.entry(trace[i..=i + steps].to_vec()).or_insert(0) += 1;
    }
    out
}

/// `P(next | prefix)` by direct counting over the windows.
pub fn window_distribution(trace: &[u32], prefix: &[u32]) -> BTreeMap<u32, f64> {
    let r = prefix.len();
    let mut hits: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for w in trace.windows(r + 1) {
        if &w[..r] == prefix {
            *hits.entry(w[r]).or_insert(0) += 1;
            total += 1;
        }
    }
    hits.into_iter()
        .map(|(s, c)| (s, c as f64 / total as f64))
        .collect()
}

pub fn idx(v: &[u32]) -> Vec<StateIndex> {
    v.iter().copied().map(StateIndex).collect()
}

/// All paths of `len` over `0..m`, in lexicographic order.
pub fn all_paths(m: u32, len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..m).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

/// One object, one attribute with states `S0..S{m-1}`, fed `trace` directly.
pub fn feed_trace(
    trace: &[u32],
    states: u32,
    steps: usize,
) -> (ContextDomain, ObjectIndex, AttributeId) {
    let mut d = ContextDomain::new("trace", 1, steps).unwrap();
    let o = d.register_object("Thing", "urn:test:thing").unwrap();
    let a = d.ensure_attribute(o, "x").unwrap();
    for i in 0..states {
        d.register_state(o, a, &format!("S{i}")).unwrap();
    }
    let ts = parse_timestamp("2023-01-02 00:00:00").unwrap();
    for &s in trace {
        let ev = StateChangeEvent {
            object: o,
            attribute: a,
            new_state: StateIndex(s),
            timestamp: ts,
            conditions: vec![],
        };
        record_event(&mut d, &ev).unwrap();
    }
    (d, o, a)
}

/// Every protected string that occurs in `haystack`, by plain substring search.
pub fn leaked<'a>(haystack: &[u8], patterns: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let text = String::from_utf8_lossy(haystack);
    let mut out: BTreeSet<String> = BTreeSet::new();
    for p in patterns {
        if !p.is_empty() && text.contains(p) {
            out.insert(p.to_owned());
        }
    }
    out.into_iter().collect()
}

/// Protected strings of a built model: every URI and identity string.
pub fn protected(
    domain: &ContextDomain,
    coordinator: &csmhr_core::CoordinatorStore,
) -> Vec<String> {
    let mut v: Vec<String> = domain.mapping().iter().map(|(_, u)| u.to_owned()).collect();
    v.extend(coordinator.iter().map(|(u, _)| u.to_owned()));
    v.extend(coordinator.identity_strings().map(str::to_owned));
    v.sort();
    v.dedup();
    v
}

/// Compares two domains query by query: every state dictionary entry, every
/// tensor coordinate (exhaustively where the space is small, otherwise every
/// stored entry both ways) and every relation. Returns the number of queries.
pub fn compare_exhaustively(a: &ContextDomain, b: &ContextDomain) -> Result<u64, String> {
    let mut queries = 0u64;
    if a.object_count() != b.object_count() {
        return Err(format!(
            "object count {} vs {}",
            a.object_count(),
            b.object_count()
        ));
    }
    if a.attribute_names() != b.attribute_names() {
        return Err("attribute registry differs".into());
    }
    for (oa, ob) in a.objects().iter().zip(b.objects()) {
        if oa.labels() != ob.labels() || oa.category() != ob.category() {
            return Err(format!("object {} header differs", oa.index()));
        }
        if oa.attributes().len() != ob.attributes().len() {
            return Err(format!("object {} attribute count differs", oa.index()));
        }
        for aa in oa.attributes() {
            let ab = ob
                .attribute(aa.id())
                .ok_or_else(|| format!("object {} lost attribute {}", oa.index(), aa.id()))?;
            for s in aa.states() {
                queries += 1;
                if ab.state_index(&s.value) != Some(s.index)
                    || ab.state(s.index).map(|x| &x.value) != Some(&s.value)
                {
                    return Err(format!(
                        "state dictionary differs at {}/{}/{}",
                        oa.index(),
                        aa.id(),
                        s.index
                    ));
                }
                if ab.state(s.index).map(|x| x.referenced_object) != Some(s.referenced_object) {
                    return Err("hierarchy reference differs".into());
                }
            }
            if aa.states().len() != ab.states().len()
                || aa.current_state() != ab.current_state()
                || aa.last_transition() != ab.last_transition()
                || aa.event_count() != ab.event_count()
                || aa
                    .history()
                    .map(|h| (h.state, h.timestamp))
                    .collect::<Vec<_>>()
                    != ab
                        .history()
                        .map(|h| (h.state, h.timestamp))
                        .collect::<Vec<_>>()
            {
                return Err(format!(
                    "attribute {}/{} state differs",
                    oa.index(),
                    aa.id()
                ));
            }
            match (aa.casm(), ab.casm()) {
                (None, None) => {}
                (Some(ta), Some(tb)) => {
                    queries += compare_tensors(ta, tb)?;
                }
                _ => return Err("casm presence differs".into()),
            }
        }
    }
    let ea: Vec<_> = a.relations().entries().collect();
    let eb: Vec<_> = b.relations().entries().collect();
    queries += ea.len() as u64;
    if ea != eb || a.relations().type_names() != b.relations().type_names() {
        return Err("relationship matrix differs".into());
    }
    Ok(queries)
}

pub fn compare_tensors(
    ta: &csmhr_core::TransitionTensor,
    tb: &csmhr_core::TransitionTensor,
) -> Result<u64, String> {
    let mut queries = 0;
    if ta.dimension() != tb.dimension() || ta.mass() != tb.mass() || ta.arity() != tb.arity() {
        return Err("tensor shape or mass differs".into());
    }
    let space = (ta.dimension() as u64)
        .checked_pow(ta.arity() as u32)
        .unwrap_or(u64::MAX);
    if space <= 20_000 {
        for p in all_paths(ta.dimension() as u32, ta.arity()) {
            let p = idx(&p);
            queries += 1;
            if ta.count(&p).unwrap() != tb.count(&p).unwrap() {
                return Err(format!("count differs at {p:?}"));
            }
        }
    } else {
        for (t1, t2) in [(ta, tb), (tb, ta)] {
            for (p, c) in t1.iter() {
                queries += 1;
                if t2.count(p).unwrap() != c {
                    return Err(format!("count differs at {p:?}"));
                }
            }
        }
    }
    Ok(queries)
}

/// Simple Pearson chi-square statistic against a uniform expectation.
pub fn chi_square_uniform(observed: &[u64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let e = n as f64 / observed.len() as f64;
    observed.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
}
