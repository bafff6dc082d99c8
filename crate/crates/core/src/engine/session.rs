use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccessDecision, AccessRequest, EngineError, Outcome};
use crate::fbac::{AccessControlTensor, FbacError, FunctionSet, SegmentSelector};
use crate::netsim::NetworkState;
use crate::types::SegmentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Downgraded,
    Revoked,
    /// Ended by its user.
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Unchanged,
    Downgraded,
    Revoked,
}

/// An ongoing usage session kept under continuous evaluation.
#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: u64,
    pub request: AccessRequest,
    pub decision: AccessDecision,
    pub status: SessionStatus,
    tensor: AccessControlTensor,
}

impl Session {
    /// Functions currently released to the session, per segment.
    pub fn view(&self) -> BTreeMap<SegmentId, FunctionSet> {
        self.tensor
            .render_view(&self.request.user_id, &self.request.object_id)
            .expect("session object exists in its catalog")
    }

    pub fn is_live(&self) -> bool {
        matches!(self.status, SessionStatus::Active | SessionStatus::Downgraded)
    }
}

/// Host-level enforcement: narrows `base` so the rendered view of the
/// requested object equals the decision (empty everywhere for a deny).
pub fn host_view(
    base: &AccessControlTensor,
    request: &AccessRequest,
    outcome: &Outcome,
) -> Result<AccessControlTensor, FbacError> {
    let (user, object) = (&request.user_id, &request.object_id);
    match outcome {
        Outcome::Deny { .. } => base.restrict(user, object, &SegmentSelector::All, FunctionSet::universe()),
        Outcome::Grant { segments } => {
            let mut tensor = base.clone();
            for (segment, granted) in segments {
                let current = tensor.allowed(user, object, segment);
                tensor = tensor.restrict(
                    user,
                    object,
                    &SegmentSelector::Segment(segment.clone()),
                    current.difference(*granted),
                )?;
            }
            Ok(tensor)
        }
    }
}

/// Applies a decision at both layers: the returned tensor carries the
/// host-level view, and every network action is installed in `net`.
pub fn enforce(
    decision: &AccessDecision,
    request: &AccessRequest,
    base: &AccessControlTensor,
    net: &mut NetworkState,
) -> Result<AccessControlTensor, EngineError> {
    for action in &decision.network_actions {
        net.apply_network_rule(action.action.clone())?;
    }
    Ok(host_view(base, request, &decision.outcome)?)
}

pub fn open_session(
    session_id: u64,
    decision: &AccessDecision,
    request: &AccessRequest,
    base: &AccessControlTensor,
) -> Result<Session, EngineError> {
    if !decision.outcome.is_grant() {
        return Err(EngineError::SessionOnDeny(request.request_id.clone()));
    }
    Ok(Session {
        session_id,
        request: request.clone(),
        decision: decision.clone(),
        status: SessionStatus::Active,
        tensor: host_view(base, request, &decision.outcome)?,
    })
}

/// Folds a fresh decision into a session. A deny revokes it; a grant with
/// fewer functions on some segment downgrades it to the per-segment
/// intersection; anything else leaves it alone.
pub fn reevaluate(session: &mut Session, fresh: &AccessDecision) -> Result<Transition, FbacError> {
    if !session.is_live() {
        return Ok(Transition::Unchanged);
    }
    let current = session.view();
    let (status, outcome) = match &fresh.outcome {
        Outcome::Deny { .. } => (SessionStatus::Revoked, fresh.outcome.clone()),
        Outcome::Grant { segments } => {
            let narrowed: BTreeMap<SegmentId, FunctionSet> =
                current.iter().map(|(s, f)| (s.clone(), segments.get(s).map_or(*f, |g| f.intersection(*g)))).collect();
            if narrowed == current {
                return Ok(Transition::Unchanged);
            }
            (SessionStatus::Downgraded, Outcome::Grant { segments: narrowed })
        }
    };
    session.tensor = host_view(&session.tensor, &session.request, &outcome)?;
    session.status = status;
    session.decision = AccessDecision { outcome, ..fresh.clone() };
    Ok(match status {
        SessionStatus::Revoked => Transition::Revoked,
        _ => Transition::Downgraded,
    })
}
