//! Hierarchical ontology-state context modeling.
//!
//! High-level context records (Triple-H-R lines or elevator/RDF records) are
//! normalized into indexed objects, attributes and states. Every ordinal
//! attribute keeps an R-step transition-frequency tensor; situations built
//! from an entity and its close relations get their own tensors. URIs and
//! identities stay in a separate mapping and coordinator store.

pub mod broker;
pub mod casm;
pub mod cssm;
pub mod engine;
pub mod error;
pub mod hierarchy;
pub mod ingest;
pub mod model;
pub mod persist;
pub mod predict;
pub mod relation;
pub mod tensor;
pub mod workload;

pub use broker::{
    open_privacy_channels, Broker, Message, PrivacyGuard, RuleTarget, ThresholdRegistry,
    ThresholdRule, TopicKind,
};
pub use casm::{casm, record_event, record_events, Casm, CountedPath};
pub use cssm::{
    extract_situation, Cssm, CssmStore, SituationConfig, SituationPart, SituationRegistry,
    SituationState,
};
pub use engine::{build, BuildSummary, Engine, EngineConfig, PhaseTimings};
pub use error::{Error, Result};
pub use hierarchy::{
    hierarchy_chain, identify_hierarchy, mine_bidirectional_relations, refresh_hierarchy,
    HierarchyLink, HIERARCHY_AFFINITY,
};
pub use ingest::{
    ElevatorRecord, InputFormat, Normalizer, Record, StateChangeEvent, TripleHr, TripleRdf,
};
pub use model::{
    AttributeId, AttributeKind, ContextAttribute, ContextAttributeState, ContextDomain,
    ContextObject, CoordinatorStore, ObjectIndex, ObjectUriMapping, StateIndex,
};
pub use persist::{load, load_with_mapping, save, CompressionReport, ModelFiles};
pub use predict::{next_state_distribution, predict, Predictor, Reasoner};
pub use relation::{RelationParams, RelationshipMatrix};
pub use tensor::TransitionTensor;
pub use workload::{ElevatorConfig, RestaurantConfig};
