//! In-process publish/subscribe broker, threshold triggers and the
//! privacy-separated model/mapping channels.
//!
//! Delivery happens on the publishing thread while the topic lock is held,
//! which gives per-topic FIFO order and exactly-once delivery to every
//! subscriber registered at publish time. Callbacks must be short and must
//! not publish to the topic they are subscribed to.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeId, ContextDomain, CoordinatorStore, ObjectIndex, ObjectUriMapping, StateIndex,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicKind {
    Update,
    Hierarchy,
    Relation,
    Transition,
    Trigger,
    Mapping,
    /// Serialized model artifacts (indexes and tensors only).
    Model,
}

impl TopicKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopicKind::Update => "update",
            TopicKind::Hierarchy => "hierarchy",
            TopicKind::Relation => "relation",
            TopicKind::Transition => "transition",
            TopicKind::Trigger => "trigger",
            TopicKind::Mapping => "mapping",
            TopicKind::Model => "model",
        }
    }
}

/// `ctx/<domain>/<kind>`
pub fn topic(domain: &str, kind: TopicKind) -> String {
    format!("ctx/{domain}/{}", kind.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: Arc<str>,
    /// Position in the topic's log, starting at 0.
    pub seq: u64,
    pub payload: Arc<[u8]>,
}

impl Message {
    pub fn payload_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.payload).ok()
    }
}

type Callback = Arc<dyn Fn(&Message) + Send + Sync>;

#[derive(Default)]
struct Channel {
    name: Option<Arc<str>>,
    next_seq: u64,
    closed: bool,
    subscribers: Vec<(u64, Callback)>,
}

#[derive(Default)]
struct Inner {
    channels: RwLock<HashMap<String, Arc<Mutex<Channel>>>>,
    next_subscription: AtomicU64,
}

/// Cheaply clonable handle; clones share the same topics.
#[derive(Clone, Default)]
pub struct Broker {
    inner: Arc<Inner>,
}

impl fmt::Debug for Broker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.inner.channels.read().map(|c| c.len()).unwrap_or(0);
        f.debug_struct("Broker").field("topics", &n).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subscription {
    pub topic: String,
    id: u64,
}

fn poisoned() -> Error {
    Error::ChannelClosed("broker lock poisoned".into())
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    fn channel(&self, topic: &str) -> Result<Arc<Mutex<Channel>>> {
        if let Some(c) = self
            .inner
            .channels
            .read()
            .map_err(|_| poisoned())?
            .get(topic)
        {
            return Ok(Arc::clone(c));
        }
        let mut map = self.inner.channels.write().map_err(|_| poisoned())?;
        Ok(Arc::clone(map.entry(topic.to_owned()).or_insert_with(
            || {
                Arc::new(Mutex::new(Channel {
                    name: Some(Arc::from(topic)),
                    ..Channel::default()
                }))
            },
        )))
    }

    /// Delivers `payload` to every current subscriber of `topic` and returns
    /// the message's sequence number.
    pub fn publish(&self, topic: &str, payload: impl Into<Arc<[u8]>>) -> Result<u64> {
        let chan = self.channel(topic)?;
        let mut ch = chan.lock().map_err(|_| poisoned())?;
        if ch.closed {
            return Err(Error::ChannelClosed(topic.to_owned()));
        }
        let msg = Message {
            topic: ch.name.clone().unwrap_or_else(|| Arc::from(topic)),
            seq: ch.next_seq,
            payload: payload.into(),
        };
        ch.next_seq += 1;
        for (_, cb) in &ch.subscribers {
            cb(&msg);
        }
        Ok(msg.seq)
    }

    pub fn publish_json<T: Serialize>(&self, topic: &str, value: &T) -> Result<u64> {
        let bytes = serde_json::to_vec(value).map_err(|e| Error::Malformed(e.to_string()))?;
        self.publish(topic, bytes)
    }

    /// Registers a callback for messages published from now on. No replay.
    pub fn subscribe(
        &self,
        topic: &str,
        callback: impl Fn(&Message) + Send + Sync + 'static,
    ) -> Result<Subscription> {
        let chan = self.channel(topic)?;
        let mut ch = chan.lock().map_err(|_| poisoned())?;
        if ch.closed {
            return Err(Error::ChannelClosed(topic.to_owned()));
        }
        let id = self.inner.next_subscription.fetch_add(1, Ordering::Relaxed);
        ch.subscribers.push((id, Arc::new(callback)));
        Ok(Subscription {
            topic: topic.to_owned(),
            id,
        })
    }

    /// Subscribes through a queue, for consumers that do their work
    /// elsewhere.
    pub fn subscribe_queue(&self, topic: &str) -> Result<(Subscription, mpsc::Receiver<Message>)> {
        let (tx, rx) = mpsc::channel();
        let sub = self.subscribe(topic, move |m| {
            // receiver gone: nothing to deliver to
            let _ = tx.send(m.clone());
        })?;
        Ok((sub, rx))
    }

    /// Returns false when the subscription was already gone.
    pub fn unsubscribe(&self, sub: &Subscription) -> Result<bool> {
        let chan = self.channel(&sub.topic)?;
        let mut ch = chan.lock().map_err(|_| poisoned())?;
        let before = ch.subscribers.len();
        ch.subscribers.retain(|(id, _)| *id != sub.id);
        Ok(ch.subscribers.len() != before)
    }

    /// Closes `topic`: later publishes fail and subscribers are dropped.
    pub fn close(&self, topic: &str) -> Result<()> {
        let chan = self.channel(topic)?;
        let mut ch = chan.lock().map_err(|_| poisoned())?;
        ch.closed = true;
        ch.subscribers.clear();
        Ok(())
    }

    /// Number of messages published on `topic` so far.
    pub fn published(&self, topic: &str) -> u64 {
        self.inner
            .channels
            .read()
            .ok()
            .and_then(|m| m.get(topic).and_then(|c| c.lock().ok().map(|c| c.next_seq)))
            .unwrap_or(0)
    }
}

/// Which state machine a threshold watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "machine", rename_all = "lowercase")]
pub enum RuleTarget {
    Attribute {
        object: ObjectIndex,
        attribute: AttributeId,
    },
    Situation {
        object: ObjectIndex,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub rule_id: String,
    pub target: RuleTarget,
    pub path: Vec<StateIndex>,
    pub threshold: u64,
    pub action_topic: String,
    pub fired: bool,
}

impl ThresholdRule {
    pub fn new(
        rule_id: &str,
        target: RuleTarget,
        path: Vec<StateIndex>,
        threshold: u64,
        action_topic: &str,
    ) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::Config(format!(
                "rule {rule_id}: threshold must be at least 1"
            )));
        }
        if path.len() < 2 {
            return Err(Error::Arity {
                expected: 2,
                actual: path.len(),
            });
        }
        Ok(Self {
            rule_id: rule_id.to_owned(),
            target,
            path,
            threshold,
            action_topic: action_topic.to_owned(),
            fired: false,
        })
    }
}

/// Payload published when a rule fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerNotice {
    pub rule_id: String,
    pub target: RuleTarget,
    pub path: Vec<StateIndex>,
    pub count: u64,
}

/// Threshold rules indexed by watched coordinate. Rules fire once and stay
/// quiet until re-armed.
#[derive(Debug, Clone, Default)]
pub struct ThresholdRegistry {
    rules: BTreeMap<String, ThresholdRule>,
    watch: HashMap<(RuleTarget, Vec<StateIndex>), Vec<String>>,
}

impl ThresholdRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, id: &str) -> Option<&ThresholdRule> {
        self.rules.get(id)
    }

    pub fn register(&mut self, rule: ThresholdRule) -> Result<()> {
        if self.rules.contains_key(&rule.rule_id) {
            return Err(Error::Conflict(format!(
                "threshold rule {} already registered",
                rule.rule_id
            )));
        }
        self.watch
            .entry((rule.target, rule.path.clone()))
            .or_default()
            .push(rule.rule_id.clone());
        self.rules.insert(rule.rule_id.clone(), rule);
        Ok(())
    }

    /// Like `register`, also checking the path against the machine's arity.
    pub fn register_checked(&mut self, rule: ThresholdRule, arity: usize) -> Result<()> {
        if rule.path.len() != arity {
            return Err(Error::Arity {
                expected: arity,
                actual: rule.path.len(),
            });
        }
        self.register(rule)
    }

    pub fn rearm(&mut self, id: &str) -> Result<()> {
        let rule = self
            .rules
            .get_mut(id)
            .ok_or_else(|| Error::not_found("threshold rule", id))?;
        rule.fired = false;
        Ok(())
    }

    /// Called after the count at `(target, path)` changed to `count`; returns
    /// the rules that fired now.
    pub fn evaluate(
        &mut self,
        target: RuleTarget,
        path: &[StateIndex],
        count: u64,
    ) -> Vec<TriggerNotice> {
        if self.watch.is_empty() {
            return Vec::new();
        }
        let Some(ids) = self.watch.get(&(target, path.to_vec())) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for id in ids {
            let rule = self.rules.get_mut(id).expect("watch index mirrors rules");
            if !rule.fired && count >= rule.threshold {
                rule.fired = true;
                out.push(TriggerNotice {
                    rule_id: id.clone(),
                    target,
                    path: path.to_vec(),
                    count,
                });
            }
        }
        out
    }

    /// Evaluates and publishes one notice per fired rule on its action topic.
    pub fn evaluate_and_publish(
        &mut self,
        broker: &Broker,
        target: RuleTarget,
        path: &[StateIndex],
        count: u64,
    ) -> Result<Vec<String>> {
        let fired = self.evaluate(target, path, count);
        let mut ids = Vec::with_capacity(fired.len());
        for notice in fired {
            let topic = &self.rules[&notice.rule_id].action_topic;
            broker.publish_json(topic, &notice)?;
            ids.push(notice.rule_id);
        }
        Ok(ids)
    }
}

/// Scans byte streams for URIs and identity strings.
#[derive(Debug, Clone)]
pub struct PrivacyGuard {
    patterns: Vec<String>,
    matcher: Option<AhoCorasick>,
}

impl PrivacyGuard {
    pub fn new<'a>(patterns: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut patterns: Vec<String> = patterns
            .into_iter()
            .filter(|p| !p.is_empty())
            .map(str::to_owned)
            .collect();
        patterns.sort_unstable();
        patterns.dedup();
        let matcher = if patterns.is_empty() {
            None
        } else {
            Some(AhoCorasick::new(&patterns).map_err(|e| Error::Config(e.to_string()))?)
        };
        Ok(Self { patterns, matcher })
    }

    /// Guard over every registered URI and every coordinator identity string.
    pub fn for_domain(domain: &ContextDomain, coordinator: &CoordinatorStore) -> Result<Self> {
        Self::new(
            domain
                .mapping()
                .iter()
                .map(|(_, u)| u)
                .chain(coordinator.iter().map(|(u, _)| u))
                .chain(coordinator.identity_strings()),
        )
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// First protected string found in `bytes`.
    pub fn find(&self, bytes: &[u8]) -> Option<&str> {
        let m = self.matcher.as_ref()?.find(bytes)?;
        Some(&self.patterns[m.pattern().as_usize()])
    }
}

/// Channel for model artifacts; refuses anything that leaks an identity.
#[derive(Debug, Clone)]
pub struct ModelChannel {
    broker: Broker,
    topic: String,
    guard: PrivacyGuard,
}

impl ModelChannel {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn guard(&self) -> &PrivacyGuard {
        &self.guard
    }

    pub fn publish(&self, payload: impl Into<Arc<[u8]>>) -> Result<u64> {
        let payload = payload.into();
        if let Some(hit) = self.guard.find(&payload) {
            return Err(Error::PolicyViolation(format!(
                "model payload contains protected string of length {}",
                hit.len()
            )));
        }
        self.broker.publish(&self.topic, payload)
    }

    /// Mapping data never travels here.
    pub fn publish_mapping(&self, _mapping: &ObjectUriMapping) -> Result<u64> {
        Err(Error::PolicyViolation(
            "object/URI mapping must be sent on the mapping channel".into(),
        ))
    }
}

/// Channel for the object/URI mapping only.
#[derive(Debug, Clone)]
pub struct MappingChannel {
    broker: Broker,
    topic: String,
}

impl MappingChannel {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn publish_mapping(&self, mapping: &ObjectUriMapping) -> Result<u64> {
        self.broker.publish_json(&self.topic, mapping)
    }
}

pub fn open_privacy_channels(
    broker: &Broker,
    domain: &ContextDomain,
    coordinator: &CoordinatorStore,
) -> Result<(ModelChannel, MappingChannel)> {
    let id = domain.domain_id();
    Ok((
        ModelChannel {
            broker: broker.clone(),
            topic: topic(id, TopicKind::Model),
            guard: PrivacyGuard::for_domain(domain, coordinator)?,
        },
        MappingChannel {
            broker: broker.clone(),
            topic: topic(id, TopicKind::Mapping),
        },
    ))
}
