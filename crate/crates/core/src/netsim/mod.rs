//! Deterministic model of the organization network.
//!
//! [`NetworkState`] is driven by a single-threaded event loop: device
//! attachments feed the geo-location table through packet-in events, flows are
//! routed along tie-broken shortest paths, and compromised devices distort the
//! recorded [`Trajectory`]. Network rules (quarantine, block, zone restriction,
//! reroute) are honored by every later routing call.

mod topology;

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{DeviceId, FlowId, Medium, Millis, UserId, ZoneId};

pub use topology::{
    load_topology, CompromisedBehavior, CompromisedDoc, DeviceDoc, DeviceKind, FaultAction, ForwardingDevice, Topology,
    TopologyDoc,
};

/// Simulated latency of one hop on a healthy device.
pub const NOMINAL_HOP_MS: Millis = 1;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("topology schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("topology has no devices")]
    EmptyTopology,
    #[error("duplicate device id `{0}`")]
    DuplicateDevice(DeviceId),
    #[error("device `{0}` must have at least one port")]
    NoPorts(DeviceId),
    #[error("link from `{0}` to itself")]
    SelfLoop(DeviceId),
    #[error("topology graph is disconnected")]
    Disconnected,
    #[error("zone entry references unknown device `{0}`")]
    UnknownZoneDevice(DeviceId),
    #[error("wireless access point `{0}` is not assigned to a zone")]
    UnzonedAccessPoint(DeviceId),
    #[error("magnitude must be given exactly for delay behavior (got {0:?})")]
    InvalidBehavior(FaultAction),
    #[error("unknown forwarding device `{0}`")]
    UnknownDevice(DeviceId),
    #[error("port {port} out of range for `{fd}` ({ports} ports)")]
    PortOutOfRange { fd: DeviceId, port: u32, ports: u32 },
    #[error("cannot attach a {attachment} device to {device} forwarding device `{fd}`")]
    MediumMismatch { fd: DeviceId, attachment: Medium, device: Medium },
    #[error("forwarding device `{0}` serves no zone")]
    UnzonedDevice(DeviceId),
    #[error("address {0} is not attached")]
    NotAttached(IpAddr),
    #[error("no route from {src} to {dst}")]
    Unreachable { src: IpAddr, dst: IpAddr },
    #[error("network rule targets unknown {0}")]
    UnknownTarget(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub device_ip: IpAddr,
    pub user_id: UserId,
    pub fd_id: DeviceId,
    pub port_id: u32,
    pub medium: Medium,
}

/// Controller notification for the first packet seen from a host on a port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketInEvent {
    pub time: Millis,
    pub device_ip: IpAddr,
    pub user_id: UserId,
    pub fd_id: DeviceId,
    pub port_id: u32,
    pub medium: Medium,
    pub zone: ZoneId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_id: Option<FlowId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub user_id: UserId,
    pub fd_id: DeviceId,
    pub port_id: u32,
    pub medium: Medium,
    pub zone: ZoneId,
    pub last_seen: Millis,
}

/// Dynamic geo-location lookup table: device address to its latest attachment point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocationTable {
    entries: BTreeMap<IpAddr, LocationEntry>,
}

impl LocationTable {
    pub fn get(&self, ip: &IpAddr) -> Option<&LocationEntry> {
        self.entries.get(ip)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IpAddr, &LocationEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every address currently located in `zone`.
    pub fn in_zone<'a>(&'a self, zone: &'a ZoneId) -> impl Iterator<Item = (&'a IpAddr, &'a LocationEntry)> {
        self.entries.iter().filter(move |(_, e)| &e.zone == zone)
    }
}

/// Zone of the most recent attachment for `ip`.
pub fn resolve_location(table: &LocationTable, ip: IpAddr) -> Result<ZoneId, NetsimError> {
    table.get(&ip).map(|e| e.zone.clone()).ok_or(NetsimError::NotAttached(ip))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowDescriptor {
    pub flow_id: FlowId,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub start: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub fd_id: DeviceId,
    pub time: Millis,
}

/// Recorded path of one flow. Hop times are ingress times at each device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub flow_id: FlowId,
    pub start: Millis,
    pub hops: Vec<Hop>,
    pub delivered: bool,
}

impl Trajectory {
    pub fn devices(&self) -> Vec<DeviceId> {
        self.hops.iter().map(|h| h.fd_id.clone()).collect()
    }

    /// Number of links traversed.
    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NetworkRule {
    Quarantine { user: UserId },
    Block { device: DeviceId },
    RestrictToZone { user: UserId, zone: ZoneId },
    RerouteAvoiding { devices: BTreeSet<DeviceId> },
}

/// The currently active network-level rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RuleSet {
    pub quarantined: BTreeSet<UserId>,
    pub blocked: BTreeSet<DeviceId>,
    pub zone_restrictions: BTreeMap<UserId, ZoneId>,
    pub avoid: BTreeSet<DeviceId>,
}

#[derive(Debug, Clone)]
pub struct NetworkState {
    topology: Topology,
    faults: BTreeMap<DeviceId, CompromisedBehavior>,
    locations: LocationTable,
    active: BTreeMap<(IpAddr, Medium), Attachment>,
    rules: RuleSet,
    known_users: BTreeSet<UserId>,
    seen_flows: BTreeSet<FlowId>,
    packet_ins: Vec<PacketInEvent>,
}

impl NetworkState {
    pub fn new(topology: Topology) -> Self {
        let faults = topology.devices().filter_map(|d| d.compromised_behavior.map(|b| (d.id.clone(), b))).collect();
        NetworkState {
            topology,
            faults,
            locations: LocationTable::default(),
            active: BTreeMap::new(),
            rules: RuleSet::default(),
            known_users: BTreeSet::new(),
            seen_flows: BTreeSet::new(),
            packet_ins: Vec::new(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn locations(&self) -> &LocationTable {
        &self.locations
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn packet_ins(&self) -> &[PacketInEvent] {
        &self.packet_ins
    }

    /// Active attachment of `ip` over `medium`, if any.
    pub fn attachment(&self, ip: IpAddr, medium: Medium) -> Option<&Attachment> {
        self.active.get(&(ip, medium))
    }

    pub fn is_known_user(&self, user: &UserId) -> bool {
        self.known_users.contains(user)
    }

    pub fn attach_device(&mut self, time: Millis, attachment: Attachment) -> Result<PacketInEvent, NetsimError> {
        let fd = self
            .topology
            .device(&attachment.fd_id)
            .ok_or_else(|| NetsimError::UnknownDevice(attachment.fd_id.clone()))?;
        if attachment.port_id >= fd.ports {
            return Err(NetsimError::PortOutOfRange { fd: fd.id.clone(), port: attachment.port_id, ports: fd.ports });
        }
        if attachment.medium != fd.medium {
            return Err(NetsimError::MediumMismatch {
                fd: fd.id.clone(),
                attachment: attachment.medium,
                device: fd.medium,
            });
        }
        let zone = self
            .topology
            .zone_of(&attachment.fd_id)
            .cloned()
            .ok_or_else(|| NetsimError::UnzonedDevice(attachment.fd_id.clone()))?;

        self.locations.entries.insert(
            attachment.device_ip,
            LocationEntry {
                user_id: attachment.user_id.clone(),
                fd_id: attachment.fd_id.clone(),
                port_id: attachment.port_id,
                medium: attachment.medium,
                zone: zone.clone(),
                last_seen: time,
            },
        );
        self.known_users.insert(attachment.user_id.clone());
        let event = PacketInEvent {
            time,
            device_ip: attachment.device_ip,
            user_id: attachment.user_id.clone(),
            fd_id: attachment.fd_id.clone(),
            port_id: attachment.port_id,
            medium: attachment.medium,
            zone,
            flow_id: None,
        };
        self.active.insert((attachment.device_ip, attachment.medium), attachment);
        self.packet_ins.push(event.clone());
        Ok(event)
    }

    /// Switches a device into (or out of, with `None`) compromised behavior.
    pub fn set_fault(&mut self, fd: &DeviceId, behavior: Option<CompromisedBehavior>) -> Result<(), NetsimError> {
        if self.topology.device(fd).is_none() {
            return Err(NetsimError::UnknownDevice(fd.clone()));
        }
        match behavior {
            Some(b) => self.faults.insert(fd.clone(), b),
            None => self.faults.remove(fd),
        };
        Ok(())
    }

    pub fn fault(&self, fd: &DeviceId) -> Option<CompromisedBehavior> {
        self.faults.get(fd).copied()
    }

    pub fn apply_network_rule(&mut self, rule: NetworkRule) -> Result<(), NetsimError> {
        let known_device = |d: &DeviceId| self.topology.device(d).is_some();
        match rule {
            NetworkRule::Quarantine { user } => {
                self.require_user(&user)?;
                self.rules.quarantined.insert(user);
            }
            NetworkRule::Block { device } => {
                if !known_device(&device) {
                    return Err(NetsimError::UnknownTarget(format!("device `{device}`")));
                }
                self.rules.blocked.insert(device);
            }
            NetworkRule::RestrictToZone { user, zone } => {
                self.require_user(&user)?;
                if !self.topology.has_zone(&zone) {
                    return Err(NetsimError::UnknownTarget(format!("zone `{zone}`")));
                }
                self.rules.zone_restrictions.insert(user, zone);
            }
            NetworkRule::RerouteAvoiding { devices } => {
                if let Some(d) = devices.iter().find(|d| !known_device(d)) {
                    return Err(NetsimError::UnknownTarget(format!("device `{d}`")));
                }
                self.rules.avoid.extend(devices);
            }
        }
        Ok(())
    }

    fn require_user(&self, user: &UserId) -> Result<(), NetsimError> {
        if self.known_users.contains(user) {
            Ok(())
        } else {
            Err(NetsimError::UnknownTarget(format!("user `{user}`")))
        }
    }

    fn entry(&self, ip: IpAddr) -> Result<&LocationEntry, NetsimError> {
        self.locations.get(&ip).ok_or(NetsimError::NotAttached(ip))
    }

    fn user_may_send(&self, entry: &LocationEntry) -> bool {
        if self.rules.quarantined.contains(&entry.user_id) {
            return false;
        }
        match self.rules.zone_restrictions.get(&entry.user_id) {
            Some(zone) => zone == &entry.zone,
            None => true,
        }
    }

    /// Shortest path between two devices with blocked devices removed; ignores
    /// faults, per-user rules and reroute preferences.
    pub fn natural_path(&self, src: &DeviceId, dst: &DeviceId) -> Option<Vec<DeviceId>> {
        self.topology.shortest_path(src, dst, |d| !self.rules.blocked.contains(d))
    }

    /// Like [`natural_path`](Self::natural_path) but also avoiding `avoid`.
    pub fn path_avoiding(&self, src: &DeviceId, dst: &DeviceId, avoid: &BTreeSet<DeviceId>) -> Option<Vec<DeviceId>> {
        self.topology.shortest_path(src, dst, |d| !self.rules.blocked.contains(d) && !avoid.contains(d))
    }

    /// The path `route_flow` would use for `flow` if no device misbehaved.
    pub fn planned_path(&self, flow: &FlowDescriptor) -> Result<Vec<DeviceId>, NetsimError> {
        let unreachable = || NetsimError::Unreachable { src: flow.src_ip, dst: flow.dst_ip };
        let src = self.entry(flow.src_ip)?;
        let dst = self.entry(flow.dst_ip)?;
        if !self.user_may_send(src) || !self.user_may_send(dst) {
            return Err(unreachable());
        }
        let preferred = if self.rules.avoid.is_empty() {
            None
        } else {
            self.path_avoiding(&src.fd_id, &dst.fd_id, &self.rules.avoid)
        };
        preferred.or_else(|| self.natural_path(&src.fd_id, &dst.fd_id)).ok_or_else(unreachable)
    }

    /// Routes one flow and records where its packets actually went.
    pub fn route_flow(&mut self, flow: &FlowDescriptor) -> Result<Trajectory, NetsimError> {
        let path = self.planned_path(flow)?;
        if self.seen_flows.insert(flow.flow_id.clone()) {
            let src = self.entry(flow.src_ip)?;
            self.packet_ins.push(PacketInEvent {
                time: flow.start,
                device_ip: flow.src_ip,
                user_id: src.user_id.clone(),
                fd_id: src.fd_id.clone(),
                port_id: src.port_id,
                medium: src.medium,
                zone: src.zone.clone(),
                flow_id: Some(flow.flow_id.clone()),
            });
        }
        Ok(self.walk(flow, &path))
    }

    fn walk(&self, flow: &FlowDescriptor, path: &[DeviceId]) -> Trajectory {
        let mut hops = Vec::with_capacity(path.len());
        let mut time = flow.start;
        let on_path: BTreeSet<&DeviceId> = path.iter().collect();
        for fd in path {
            time += NOMINAL_HOP_MS;
            let fault = self.faults.get(fd);
            if let Some(CompromisedBehavior { action: FaultAction::Delay, magnitude_ms }) = fault {
                time += magnitude_ms.unwrap_or(0);
            }
            hops.push(Hop { fd_id: fd.clone(), time });
            match fault.map(|b| b.action) {
                Some(FaultAction::Drop) => {
                    return Trajectory { flow_id: flow.flow_id.clone(), start: flow.start, hops, delivered: false };
                }
                Some(FaultAction::Misroute) => {
                    // Lowest-id neighbor off the expected path; none means the packet is lost.
                    let detour =
                        self.topology.neighbors(fd).find(|n| !on_path.contains(n) && !self.rules.blocked.contains(*n));
                    if let Some(n) = detour {
                        hops.push(Hop { fd_id: n.clone(), time: time + NOMINAL_HOP_MS });
                    }
                    return Trajectory { flow_id: flow.flow_id.clone(), start: flow.start, hops, delivered: false };
                }
                _ => {}
            }
        }
        Trajectory { flow_id: flow.flow_id.clone(), start: flow.start, hops, delivered: true }
    }
}
