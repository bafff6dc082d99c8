//! Insider-attack-resilient access control for software-defined networks.
//!
//! The crate wires four stages together:
//!
//! * [`netsim`] models the organization network: topology, device attachment,
//!   shortest-path routing with recorded trajectories and network-level rules.
//! * [`context`] turns flow events into network context attributes (NCAs) and
//!   keeps them in an append-only repository; [`ips`] adds data-plane reports
//!   by comparing expected and actual packet trajectories.
//! * [`policy`] and [`fbac`] hold the rule language and the function-based
//!   access-control tensor.
//! * [`engine`] makes risk-aware access decisions and enforces them at both
//!   host level (per-segment function sets) and network level.
//!
//! [`harness`] drives generated insider scenarios end to end and compares the
//! outcome against context-blind baseline models.

pub mod context;
pub mod engine;
pub mod fbac;
pub mod fixtures;
pub mod harness;
pub mod ips;
pub mod netsim;
pub mod policy;
pub mod types;

#[cfg(test)]
mod testutil;

pub use context::{ContextAnalyzer, ContextRepository, DetectorConfig, FlowEvent, Nca, NcaDetail, NcaKind, Subject};
pub use engine::{
    AccessDecision, AccessModel, AccessRequest, ContextSnapshot, EngineConfig, EngineError, Gargoyle, Outcome, Session,
    SessionStatus,
};
pub use fbac::{AccessControlTensor, Catalog, DataObject, Function, FunctionSet, SegmentSelector};
pub use ips::DataPlaneReport;
pub use netsim::{NetworkRule, NetworkState, Topology, Trajectory};
pub use policy::{Condition, DenyReason, PolicyDocument, PolicyRule};
pub use types::{DeviceId, Label, Medium, Millis, ObjectId, Role, RuleId, SegmentId, UserId, ZoneId};
