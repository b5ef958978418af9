//! Streaming build pipeline: records → events → CASM → CSSM, with per-phase
//! wall-clock accounting, threshold triggers and optional broker output.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::broker::{
    topic, Broker, RuleTarget, ThresholdRegistry, ThresholdRule, TopicKind, TriggerNotice,
};
use crate::casm::record_event;
use crate::cssm::{CssmStore, SituationConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{mine_bidirectional_relations, refresh_hierarchy, HierarchyLink};
use crate::ingest::{
    detect_format, elevator_to_triple_rdf, parse_elevator_record, parse_triple_hr_line,
    split_delimiter_header, IngestStats, InputFormat, Normalizer, Record, StateChangeEvent,
    DEFAULT_ELEVATOR_DELIMITER, DEFAULT_HR_DELIMITER,
};
use crate::model::{ContextDomain, CoordinatorStore, ObjectIndex, StateIndex};
use crate::predict::predict;
use crate::relation::{identify_relations, RelationEvent, RelationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub domain_id: String,
    pub hierarchy_depth: usize,
    pub transition_steps: usize,
    pub count_self_loops: bool,
    /// Maintain situation machines alongside the attribute machines.
    pub situations: Option<SituationConfig>,
    pub relation: RelationParams,
    /// Run co-location/co-timing discovery over the event log in `finish`.
    pub identify_relations: bool,
    /// Refresh hierarchy links and mine bidirectional relations in `finish`.
    pub mine_hierarchy: bool,
}

impl EngineConfig {
    pub fn new(domain_id: &str) -> Self {
        Self {
            domain_id: domain_id.to_owned(),
            hierarchy_depth: 2,
            transition_steps: 1,
            count_self_loops: false,
            situations: Some(SituationConfig::default()),
            relation: RelationParams::default(),
            identify_relations: false,
            mine_hierarchy: true,
        }
    }
}

/// Accumulated wall-clock time per pipeline phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Parsing and normalizing records into events.
    pub conversion: Duration,
    pub casm: Duration,
    pub cssm: Duration,
    /// Relation discovery and hierarchy mining in `finish`.
    pub relations: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.conversion + self.casm + self.cssm + self.relations
    }

    pub const HEADER: &'static str = "phase,ms";

    /// `phase,ms` rows for conversion, CASM, CSSM, relations and total.
    pub fn to_csv(&self) -> String {
        let ms = |d: Duration| d.as_secs_f64() * 1000.0;
        let mut s = String::new();
        writeln!(s, "{}", Self::HEADER).unwrap();
        for (k, d) in [
            ("conversion", self.conversion),
            ("casm", self.casm),
            ("cssm", self.cssm),
            ("relations", self.relations),
            ("total", self.total()),
        ] {
            writeln!(s, "{k},{:.3}", ms(d)).unwrap();
        }
        s
    }
}

/// Summary of a build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub ingest: IngestStats,
    pub objects: usize,
    pub attributes: usize,
    pub casm_paths: usize,
    pub situation_machines: usize,
    pub situations: usize,
    pub relations: usize,
    pub triggers_fired: usize,
    pub timings: PhaseTimings,
}

pub struct Engine {
    config: EngineConfig,
    domain: ContextDomain,
    coordinator: CoordinatorStore,
    normalizer: Normalizer,
    situations: Option<CssmStore>,
    thresholds: ThresholdRegistry,
    fired: Vec<TriggerNotice>,
    broker: Option<Broker>,
    event_log: Vec<StateChangeEvent>,
    timings: PhaseTimings,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("domain", &self.domain.domain_id())
            .field("objects", &self.domain.object_count())
            .field("timings", &self.timings)
            .finish()
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        let mut domain = ContextDomain::new(
            &config.domain_id,
            config.hierarchy_depth,
            config.transition_steps,
        )?;
        domain.set_count_self_loops(config.count_self_loops);
        let situations = config
            .situations
            .clone()
            .map(|c| CssmStore::new(c, config.transition_steps))
            .transpose()?;
        Ok(Self {
            config,
            domain,
            coordinator: CoordinatorStore::new(),
            normalizer: Normalizer::new(),
            situations,
            thresholds: ThresholdRegistry::new(),
            fired: Vec::new(),
            broker: None,
            event_log: Vec::new(),
            timings: PhaseTimings::default(),
        })
    }

    /// Starts from an existing domain (for example one loaded from files).
    pub fn with_domain(config: EngineConfig, domain: ContextDomain) -> Result<Self> {
        let mut e = Self::new(config)?;
        e.config.transition_steps = domain.transition_steps();
        e.config.hierarchy_depth = domain.hierarchy_depth();
        if let Some(c) = e.config.situations.clone() {
            e.situations = Some(CssmStore::new(c, domain.transition_steps())?);
        }
        e.domain = domain;
        Ok(e)
    }

    pub fn attach_broker(&mut self, broker: Broker) {
        self.broker = Some(broker);
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn domain(&self) -> &ContextDomain {
        &self.domain
    }

    pub fn domain_mut(&mut self) -> &mut ContextDomain {
        &mut self.domain
    }

    pub fn coordinator(&self) -> &CoordinatorStore {
        &self.coordinator
    }

    pub fn situations(&self) -> Option<&CssmStore> {
        self.situations.as_ref()
    }

    pub fn timings(&self) -> PhaseTimings {
        self.timings
    }

    pub fn ingest_stats(&self) -> IngestStats {
        self.normalizer.stats()
    }

    pub fn fired(&self) -> &[TriggerNotice] {
        &self.fired
    }

    pub fn thresholds(&self) -> &ThresholdRegistry {
        &self.thresholds
    }

    /// Registers a rule after checking its path against the machine arity.
    pub fn register_threshold(&mut self, rule: ThresholdRule) -> Result<()> {
        self.thresholds
            .register_checked(rule, self.domain.transition_steps() + 1)
    }

    pub fn rearm_threshold(&mut self, id: &str) -> Result<()> {
        self.thresholds.rearm(id)
    }

    fn fire(&mut self, target: RuleTarget, path: &[StateIndex], count: u64) -> Result<()> {
        if self.thresholds.is_empty() {
            return Ok(());
        }
        let notices = self.thresholds.evaluate(target, path, count);
        for n in notices {
            if let Some(b) = &self.broker {
                let t = &self
                    .thresholds
                    .rule(&n.rule_id)
                    .expect("fired rule exists")
                    .action_topic;
                b.publish_json(t, &n)?;
            }
            self.fired.push(n);
        }
        Ok(())
    }

    /// Feeds one already-normalized event through CASM and CSSM.
    pub fn apply_event(&mut self, event: &StateChangeEvent) -> Result<()> {
        let t0 = Instant::now();
        let counted = record_event(&mut self.domain, event)?;
        self.timings.casm += t0.elapsed();
        if let Some(c) = &counted {
            let target = RuleTarget::Attribute {
                object: c.object,
                attribute: c.attribute,
            };
            self.fire(target, &c.path, c.count)?;
        }

        if let Some(store) = self.situations.as_mut() {
            let t1 = Instant::now();
            let changed = store.on_event(&self.domain, event)?;
            self.timings.cssm += t1.elapsed();
            for c in changed {
                self.fire(RuleTarget::Situation { object: c.owner }, &c.path, c.count)?;
            }
        }

        if let Some(b) = &self.broker {
            let id = self.domain.domain_id();
            b.publish_json(&topic(id, TopicKind::Update), &UpdateMessage::from(event))?;
            if let Some(c) = counted {
                b.publish_json(
                    &topic(id, TopicKind::Transition),
                    &TransitionMessage {
                        object: c.object,
                        attribute: c.attribute.0,
                        path: c.path,
                        count: c.count,
                    },
                )?;
            }
        }
        if self.config.identify_relations {
            self.event_log.push(event.clone());
        }
        Ok(())
    }

    /// Normalizes and applies one record.
    pub fn ingest_record(&mut self, record: &Record) -> Result<()> {
        let t0 = Instant::now();
        let events = self
            .normalizer
            .normalize(&mut self.domain, &mut self.coordinator, record)?;
        self.timings.conversion += t0.elapsed();
        for e in &events {
            self.apply_event(e)?;
        }
        Ok(())
    }

    /// Parses `text` line by line (format detected when `format` is None)
    /// and applies every record in order.
    pub fn ingest_text(&mut self, text: &str, format: Option<InputFormat>) -> Result<()> {
        let t0 = Instant::now();
        let Some(format) = format.or_else(|| detect_format(text)) else {
            self.timings.conversion += t0.elapsed();
            if text
                .lines()
                .any(|l| !l.trim().is_empty() && !l.starts_with('#'))
            {
                return Err(Error::format(None, "unrecognized input format"));
            }
            return Ok(());
        };
        let default = match format {
            InputFormat::Elevator => DEFAULT_ELEVATOR_DELIMITER,
            InputFormat::TripleHr => DEFAULT_HR_DELIMITER,
        };
        let (delim, lines) = split_delimiter_header(text, default)?;
        self.timings.conversion += t0.elapsed();
        for (n, line) in lines {
            let t = Instant::now();
            let record = match format {
                InputFormat::Elevator => Record::Rdf(elevator_to_triple_rdf(
                    &parse_elevator_record(line, delim, Some(n))?,
                )),
                InputFormat::TripleHr => Record::Hr(parse_triple_hr_line(line, delim, Some(n))?),
            };
            self.timings.conversion += t.elapsed();
            self.ingest_record(&record)?;
        }
        Ok(())
    }

    /// Post-pass: relation discovery over the event log and hierarchy
    /// mining. Returns the new hierarchy links and relation changes.
    pub fn finish(&mut self) -> Result<(Vec<HierarchyLink>, Vec<RelationEvent>)> {
        let t0 = Instant::now();
        let mut rel_events = Vec::new();
        if self.config.identify_relations {
            rel_events.extend(identify_relations(
                &mut self.domain,
                &self.event_log,
                &self.config.relation,
            )?);
        }
        let mut links = Vec::new();
        if self.config.mine_hierarchy {
            links = refresh_hierarchy(&mut self.domain)?;
            rel_events.extend(mine_bidirectional_relations(
                &mut self.domain,
                &self.config.relation,
            )?);
        }
        self.timings.relations += t0.elapsed();
        if let Some(b) = &self.broker {
            let id = self.domain.domain_id();
            for l in &links {
                b.publish_json(&topic(id, TopicKind::Hierarchy), l)?;
            }
            for r in &rel_events {
                b.publish_json(&topic(id, TopicKind::Relation), r)?;
            }
        }
        Ok((links, rel_events))
    }

    pub fn summary(&self) -> BuildSummary {
        let d = &self.domain;
        BuildSummary {
            ingest: self.normalizer.stats(),
            objects: d.object_count(),
            attributes: d.iter_attributes().count(),
            casm_paths: d
                .iter_attributes()
                .filter_map(|(_, a)| a.casm())
                .map(|t| t.distinct_paths())
                .sum(),
            situation_machines: self.situations.as_ref().map_or(0, CssmStore::len),
            situations: self
                .situations
                .as_ref()
                .map_or(0, |s| s.machines().map(|m| m.registry().len()).sum()),
            relations: d.relations().len(),
            triggers_fired: self.fired.len(),
            timings: self.timings,
        }
    }

    /// Predicts the next state of `object`'s `attribute` from its last R
    /// states. None when fewer than R states were seen or the evidence is
    /// below `threshold`.
    pub fn predict_next(
        &self,
        object: ObjectIndex,
        attribute: &str,
        threshold: f64,
    ) -> Result<Option<(String, f64)>> {
        let attr = self
            .domain
            .attribute_by_name(object, attribute)
            .ok_or_else(|| Error::not_found("attribute", format!("{object}/{attribute}")))?;
        let Some(tensor) = attr.casm() else {
            return Ok(None);
        };
        let prefix: Vec<StateIndex> = attr.history().map(|h| h.state).collect();
        if prefix.len() < tensor.steps() {
            return Ok(None);
        }
        Ok(predict(tensor, &prefix, threshold)?.map(|(s, p)| {
            let v = attr.state(s).map(|st| st.value.clone()).unwrap_or_default();
            (v, p)
        }))
    }
}

#[derive(Debug, Clone, Serialize)]
struct UpdateMessage {
    object: ObjectIndex,
    attribute: u32,
    state: StateIndex,
    timestamp: i64,
}

impl From<&StateChangeEvent> for UpdateMessage {
    fn from(e: &StateChangeEvent) -> Self {
        Self {
            object: e.object,
            attribute: e.attribute.0,
            state: e.new_state,
            timestamp: e.timestamp.and_utc().timestamp(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct TransitionMessage {
    object: ObjectIndex,
    attribute: u32,
    path: Vec<StateIndex>,
    count: u64,
}

/// One-shot build of `text` with `config`.
pub fn build(config: EngineConfig, text: &str, format: Option<InputFormat>) -> Result<Engine> {
    let mut e = Engine::new(config)?;
    e.ingest_text(text, format)?;
    e.finish()?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{elevator_text, ElevatorConfig};

    #[test]
    fn empty_input_is_empty_model() {
        let e = build(EngineConfig::new("e"), "", None).unwrap();
        let s = e.summary();
        assert_eq!(s.objects, 0);
        assert_eq!(s.ingest.records, 0);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(build(EngineConfig::new("e"), "not a record\n", None).is_err());
    }

    #[test]
    fn elevator_build_counts_every_move() {
        let cfg = ElevatorConfig {
            record_count: 2000,
            ..ElevatorConfig::default()
        };
        let e = build(
            EngineConfig::new("elevator"),
            &elevator_text(&cfg).unwrap(),
            None,
        )
        .unwrap();
        let s = e.summary();
        // 50 people + 5 locations
        assert_eq!(s.objects, 55);
        assert_eq!(s.ingest.events, 2000);
        let mass: u64 = e
            .domain()
            .iter_attributes()
            .filter_map(|(_, a)| a.casm())
            .map(|t| t.mass())
            .sum();
        assert_eq!(mass, 2000 - 50);
        assert!(s.situation_machines > 0);
    }

    #[test]
    fn timings_csv_is_parseable() {
        let e = build(EngineConfig::new("e"), "", None).unwrap();
        let csv = e.timings().to_csv();
        let rows: Vec<_> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0));
    }
}
