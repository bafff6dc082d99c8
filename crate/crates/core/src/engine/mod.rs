//! Risk-managed decision point and dual enforcement.
//!
//! [`decide`] is a pure function of a request, a [`ContextSnapshot`], the
//! policy document and the tensor. [`Gargoyle`] drives the whole pipeline:
//! it routes and verifies flows, extracts context, answers requests, keeps
//! sessions under continuous evaluation and applies host- and network-level
//! enforcement.

mod decide;
mod pipeline;
mod session;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::DetectorConfig;
use crate::fbac::{FbacError, FunctionSet};
use crate::netsim::{NetsimError, NetworkRule};
use crate::policy::{AtomClass, DenyReason, RuleKind};
use crate::types::{Millis, ObjectId, Role, RuleId, SegmentId, UserId};

pub use decide::decide;
pub use pipeline::{FlowObservation, Gargoyle, RouteCheck, TraceEvent, TraceRecord};
pub use session::{enforce, open_session, reevaluate, Session, SessionStatus, Transition};
pub use snapshot::{snapshot_context, ContextSnapshot, ProximityEntry, SnapshotEnv};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error(transparent)]
    Fbac(#[from] FbacError),
    #[error("address {0} is not attached")]
    NotAttached(IpAddr),
    #[error("user `{0}` is not registered")]
    UnknownUser(UserId),
    #[error("role `{0}` is not declared in the policy vocabulary")]
    UnknownRole(Role),
    #[error("cannot open a session for denied request `{0}`")]
    SessionOnDeny(String),
    #[error("resource provider {0} is not attached")]
    ProviderNotAttached(IpAddr),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Address of the server hosting the catalog.
    pub provider_ip: IpAddr,
    #[serde(default = "default_tolerance")]
    pub tolerance_ms: Millis,
    #[serde(default)]
    pub detectors: DetectorConfig,
}

fn default_tolerance() -> Millis {
    crate::ips::DEFAULT_TOLERANCE_MS
}

impl EngineConfig {
    pub fn new(provider_ip: IpAddr) -> Self {
        EngineConfig { provider_ip, tolerance_ms: default_tolerance(), detectors: DetectorConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub request_id: String,
    pub user_id: UserId,
    pub device_ip: IpAddr,
    pub role: Role,
    pub object_id: ObjectId,
    pub time: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    Deny { reason: DenyReason },
    Grant { segments: BTreeMap<SegmentId, FunctionSet> },
}

impl Outcome {
    pub fn is_grant(&self) -> bool {
        matches!(self, Outcome::Grant { .. })
    }

    pub fn reason(&self) -> Option<DenyReason> {
        match self {
            Outcome::Deny { reason } => Some(*reason),
            Outcome::Grant { .. } => None,
        }
    }

    /// True for a grant where some segment lacks some function.
    pub fn is_limited(&self) -> bool {
        match self {
            Outcome::Grant { segments } => segments.values().any(|f| !f.is_universe()),
            Outcome::Deny { .. } => false,
        }
    }
}

/// A network rule together with the policy rule that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleAction {
    pub rule: RuleId,
    #[serde(flatten)]
    pub action: NetworkRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub request_id: String,
    pub outcome: Outcome,
    pub network_actions: Vec<RuleAction>,
    /// Users to add to the blacklist.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub blacklist: BTreeSet<UserId>,
    pub triggering_rules: Vec<RuleId>,
}

/// Which access-control model makes the decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessModel {
    Gargoyle,
    /// Binary grant by role.
    Rbac,
    /// Role-determined function sets, blind to context.
    FbacStatic,
    /// Binary pre/ongoing conditions on role and location.
    UconLike,
}

impl AccessModel {
    pub const ALL: [AccessModel; 4] =
        [AccessModel::Gargoyle, AccessModel::Rbac, AccessModel::FbacStatic, AccessModel::UconLike];

    pub fn uses_rule(self, kind: RuleKind) -> bool {
        match self {
            AccessModel::Gargoyle => true,
            AccessModel::Rbac => kind == RuleKind::Org,
            AccessModel::FbacStatic => matches!(kind, RuleKind::Org | RuleKind::FbacContext),
            AccessModel::UconLike => matches!(kind, RuleKind::Org | RuleKind::Generic),
        }
    }

    pub fn sees(self, class: AtomClass) -> bool {
        match self {
            AccessModel::Gargoyle => true,
            AccessModel::Rbac | AccessModel::FbacStatic => {
                matches!(class, AtomClass::Constant | AtomClass::Role | AtomClass::Label)
            }
            AccessModel::UconLike => {
                matches!(class, AtomClass::Constant | AtomClass::Role | AtomClass::Label | AtomClass::Zone)
            }
        }
    }

    /// Binary models grant everything or nothing.
    pub fn is_binary(self) -> bool {
        matches!(self, AccessModel::Rbac | AccessModel::UconLike)
    }

    /// Only the full model acts on the network and keeps a blacklist.
    pub fn acts_on_network(self) -> bool {
        self == AccessModel::Gargoyle
    }
}

impl fmt::Display for AccessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AccessModel::Gargoyle => "gargoyle",
            AccessModel::Rbac => "rbac",
            AccessModel::FbacStatic => "fbac_static",
            AccessModel::UconLike => "ucon_like",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests;
