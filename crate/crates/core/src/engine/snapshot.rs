use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AccessRequest, EngineError};
use crate::context::{ContextRepository, Nca};
use crate::fbac::Catalog;
use crate::ips::DataPlaneReport;
use crate::netsim::NetworkState;
use crate::policy::PolicyDocument;
use crate::types::{DeviceId, Label, Medium, Millis, Role, UserId, ZoneId};

/// Another user sharing the requester's zone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProximityEntry {
    pub subject: UserId,
    pub role: Option<Role>,
    pub recent: Vec<Nca>,
}

/// Everything one decision may look at, assembled at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub time: Millis,
    pub requester: UserId,
    pub role: Role,
    pub role_index: Option<u32>,
    pub zone: ZoneId,
    pub medium: Medium,
    pub fd_id: DeviceId,
    pub object_labels: BTreeSet<Label>,
    pub recent: Vec<Nca>,
    pub historical: Vec<Nca>,
    pub proximity: Vec<ProximityEntry>,
    pub supervisor_present: bool,
    /// Route from the requester to the provider ignoring reroutes.
    pub path: Vec<DeviceId>,
    pub path_reports: Vec<DataPlaneReport>,
    /// Shortest path avoiding every reported device, if one exists.
    pub safe_path: Option<Vec<DeviceId>>,
    pub blacklisted: bool,
}

impl ContextSnapshot {
    /// Devices named by the reports on the path.
    pub fn flagged_on_path(&self) -> BTreeSet<DeviceId> {
        self.path_reports.iter().map(|r| r.fd_id.clone()).collect()
    }
}

/// Run state a snapshot draws on besides the repository and the network.
pub struct SnapshotEnv<'a> {
    pub policies: &'a PolicyDocument,
    pub catalog: &'a Catalog,
    pub roles: &'a BTreeMap<UserId, Role>,
    pub blacklist: &'a BTreeSet<UserId>,
    pub provider: Option<&'a DeviceId>,
    pub recent_window_ms: Millis,
}

pub fn snapshot_context(
    repo: &ContextRepository,
    net: &NetworkState,
    request: &AccessRequest,
    env: &SnapshotEnv<'_>,
) -> Result<ContextSnapshot, EngineError> {
    let entry = net.locations().get(&request.device_ip).ok_or(EngineError::NotAttached(request.device_ip))?;
    let object = env.catalog.get(&request.object_id)?;
    let now = request.time;
    let window = env.recent_window_ms;

    let mut proximity: BTreeMap<&UserId, ProximityEntry> = BTreeMap::new();
    for (_, other) in net.locations().in_zone(&entry.zone) {
        if other.user_id == request.user_id || proximity.contains_key(&other.user_id) {
            continue;
        }
        proximity.insert(
            &other.user_id,
            ProximityEntry {
                subject: other.user_id.clone(),
                role: env.roles.get(&other.user_id).cloned(),
                recent: repo.recent(&other.user_id, now, window).into_iter().cloned().collect(),
            },
        );
    }
    let supervisor_present = proximity.values().any(|p| p.role.as_ref().is_some_and(|r| env.policies.is_supervisor(r)));

    let path = match env.provider {
        Some(dst) => net.natural_path(&entry.fd_id, dst).unwrap_or_else(|| vec![entry.fd_id.clone()]),
        None => vec![entry.fd_id.clone()],
    };
    let on_path: BTreeSet<&DeviceId> = path.iter().collect();
    let mut seen = BTreeSet::new();
    let path_reports: Vec<DataPlaneReport> = repo
        .reports_between(0, now)
        .filter(|r| on_path.contains(&r.fd_id) && seen.insert((r.fd_id.clone(), r.action)))
        .cloned()
        .collect();
    let safe_path = match env.provider {
        Some(dst) if !path_reports.is_empty() => {
            let flagged = path_reports.iter().map(|r| r.fd_id.clone()).collect();
            net.path_avoiding(&entry.fd_id, dst, &flagged)
        }
        Some(_) => Some(path.clone()),
        None => None,
    };

    Ok(ContextSnapshot {
        time: now,
        requester: request.user_id.clone(),
        role: request.role.clone(),
        role_index: env.policies.role_index(&request.role),
        zone: entry.zone.clone(),
        medium: entry.medium,
        fd_id: entry.fd_id.clone(),
        object_labels: object.labels(),
        recent: repo.recent(&request.user_id, now, window).into_iter().cloned().collect(),
        historical: repo.historical(&request.user_id, now, window).into_iter().cloned().collect(),
        proximity: proximity.into_values().collect(),
        supervisor_present,
        path,
        path_reports,
        safe_path,
        blacklisted: env.blacklist.contains(&request.user_id),
    })
}
