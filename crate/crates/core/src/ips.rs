//! Data-plane verification by trajectory comparison.
//!
//! The verifier knows the path a flow should take on a healthy network and
//! compares it with the recorded [`Trajectory`]. Divergences point at a
//! forwarding device and name what it did wrong.

use serde::{Deserialize, Serialize};

use crate::netsim::{FaultAction, FlowDescriptor, Hop, NetsimError, NetworkState, Trajectory, NOMINAL_HOP_MS};
use crate::types::{DeviceId, FlowId, Millis};

/// Default tolerance on top of the nominal per-hop latency.
pub const DEFAULT_TOLERANCE_MS: Millis = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub flow_id: FlowId,
    pub expected: Vec<DeviceId>,
    pub actual: Vec<Hop>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPlaneReport {
    pub fd_id: DeviceId,
    pub action: FaultAction,
    pub evidence: Evidence,
    pub time: Millis,
}

/// The path `flow` takes when no device misbehaves.
pub fn expected_trajectory(state: &NetworkState, flow: &FlowDescriptor) -> Result<Vec<DeviceId>, NetsimError> {
    state.planned_path(flow)
}

/// Compares `actual` against `expected` and reports every misbehaving device.
pub fn verify(expected: &[DeviceId], actual: &Trajectory, tolerance: Millis) -> Vec<DataPlaneReport> {
    let mut reports = Vec::new();
    let report = |fd: &DeviceId, action, time| DataPlaneReport {
        fd_id: fd.clone(),
        action,
        evidence: Evidence {
            flow_id: actual.flow_id.clone(),
            expected: expected.to_vec(),
            actual: actual.hops.clone(),
        },
        time,
    };

    let hops = &actual.hops;
    let divergence = hops.iter().zip(expected).position(|(h, e)| &h.fd_id != e);
    match divergence {
        Some(i) => {
            let (culprit, time) = match i.checked_sub(1) {
                Some(prev) => (&hops[prev].fd_id, hops[i].time),
                None => (&expected[0], hops[0].time),
            };
            reports.push(report(culprit, FaultAction::Misroute, time));
        }
        None if hops.len() > expected.len() => {
            if let Some(last) = expected.last() {
                reports.push(report(last, FaultAction::Misroute, hops[expected.len()].time));
            }
        }
        None if !actual.delivered => {
            if let Some(last) = hops.last() {
                reports.push(report(&last.fd_id, FaultAction::Drop, last.time));
            }
        }
        None => {}
    }

    let mut prev = actual.start;
    for hop in hops {
        if hop.time.saturating_sub(prev) > NOMINAL_HOP_MS + tolerance {
            reports.push(report(&hop.fd_id, FaultAction::Delay, hop.time));
        }
        prev = hop.time;
    }
    reports
}
