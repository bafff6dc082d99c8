use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::NetsimError;
use crate::types::{DeviceId, Medium, Millis, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Core,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultAction {
    Drop,
    Delay,
    Misroute,
}

/// How a compromised forwarding device mishandles traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompromisedBehavior {
    pub action: FaultAction,
    /// Added latency in milliseconds; present exactly when `action` is `Delay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_ms: Option<Millis>,
}

impl CompromisedBehavior {
    pub fn new(action: FaultAction, magnitude_ms: Option<Millis>) -> Result<Self, NetsimError> {
        if (action == FaultAction::Delay) != magnitude_ms.is_some() {
            return Err(NetsimError::InvalidBehavior(action));
        }
        Ok(CompromisedBehavior { action, magnitude_ms })
    }

    pub fn delay(magnitude_ms: Millis) -> Self {
        CompromisedBehavior { action: FaultAction::Delay, magnitude_ms: Some(magnitude_ms) }
    }

    pub fn drop() -> Self {
        CompromisedBehavior { action: FaultAction::Drop, magnitude_ms: None }
    }

    pub fn misroute() -> Self {
        CompromisedBehavior { action: FaultAction::Misroute, magnitude_ms: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardingDevice {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub medium: Medium,
    pub ports: u32,
    pub compromised_behavior: Option<CompromisedBehavior>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDoc {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub medium: Medium,
    pub ports: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompromisedDoc {
    pub id: DeviceId,
    pub action: FaultAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_ms: Option<Millis>,
}

/// On-disk topology document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub devices: Vec<DeviceDoc>,
    #[serde(default)]
    pub links: Vec<(DeviceId, DeviceId)>,
    #[serde(default)]
    pub zones: BTreeMap<DeviceId, ZoneId>,
    #[serde(default)]
    pub compromised: Vec<CompromisedDoc>,
}

/// A validated, connected network graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    devices: BTreeMap<DeviceId, ForwardingDevice>,
    adjacency: BTreeMap<DeviceId, BTreeSet<DeviceId>>,
    links: BTreeSet<(DeviceId, DeviceId)>,
    zones: BTreeMap<DeviceId, ZoneId>,
}

/// Parses and validates a JSON topology document.
pub fn load_topology(doc: &str) -> Result<Topology, NetsimError> {
    let doc: TopologyDoc = serde_json::from_str(doc)?;
    Topology::from_doc(doc)
}

impl Topology {
    pub fn from_doc(doc: TopologyDoc) -> Result<Self, NetsimError> {
        if doc.devices.is_empty() {
            return Err(NetsimError::EmptyTopology);
        }
        let mut devices = BTreeMap::new();
        for d in doc.devices {
            if d.ports == 0 {
                return Err(NetsimError::NoPorts(d.id));
            }
            let device = ForwardingDevice {
                id: d.id.clone(),
                kind: d.kind,
                medium: d.medium,
                ports: d.ports,
                compromised_behavior: None,
            };
            if devices.insert(d.id.clone(), device).is_some() {
                return Err(NetsimError::DuplicateDevice(d.id));
            }
        }

        let mut adjacency: BTreeMap<DeviceId, BTreeSet<DeviceId>> =
            devices.keys().map(|id| (id.clone(), BTreeSet::new())).collect();
        let mut links = BTreeSet::new();
        for (a, b) in doc.links {
            for end in [&a, &b] {
                if !devices.contains_key(end) {
                    return Err(NetsimError::UnknownDevice(end.clone()));
                }
            }
            if a == b {
                return Err(NetsimError::SelfLoop(a));
            }
            adjacency.get_mut(&a).expect("checked").insert(b.clone());
            adjacency.get_mut(&b).expect("checked").insert(a.clone());
            links.insert(if a < b { (a, b) } else { (b, a) });
        }

        for fd in doc.zones.keys() {
            if !devices.contains_key(fd) {
                return Err(NetsimError::UnknownZoneDevice(fd.clone()));
            }
        }
        if let Some(ap) = devices.values().find(|d| d.medium == Medium::Wireless && !doc.zones.contains_key(&d.id)) {
            return Err(NetsimError::UnzonedAccessPoint(ap.id.clone()));
        }

        for c in doc.compromised {
            let behavior = CompromisedBehavior::new(c.action, c.magnitude_ms)?;
            devices.get_mut(&c.id).ok_or_else(|| NetsimError::UnknownDevice(c.id.clone()))?.compromised_behavior =
                Some(behavior);
        }

        let topology = Topology { devices, adjacency, links, zones: doc.zones };
        if !topology.is_connected() {
            return Err(NetsimError::Disconnected);
        }
        Ok(topology)
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            devices: self
                .devices
                .values()
                .map(|d| DeviceDoc { id: d.id.clone(), kind: d.kind, medium: d.medium, ports: d.ports })
                .collect(),
            links: self.links.iter().cloned().collect(),
            zones: self.zones.clone(),
            compromised: self
                .devices
                .values()
                .filter_map(|d| {
                    d.compromised_behavior.map(|b| CompromisedDoc {
                        id: d.id.clone(),
                        action: b.action,
                        magnitude_ms: b.magnitude_ms,
                    })
                })
                .collect(),
        }
    }

    fn is_connected(&self) -> bool {
        let Some(start) = self.devices.keys().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(id) = queue.pop_front() {
            for n in &self.adjacency[id] {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == self.devices.len()
    }

    pub fn device(&self, id: &DeviceId) -> Option<&ForwardingDevice> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &ForwardingDevice> {
        self.devices.values()
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn count_kind(&self, kind: DeviceKind) -> usize {
        self.devices.values().filter(|d| d.kind == kind).count()
    }

    /// Undirected links, each normalized so that the smaller id comes first.
    pub fn links(&self) -> &BTreeSet<(DeviceId, DeviceId)> {
        &self.links
    }

    pub fn neighbors(&self, id: &DeviceId) -> impl Iterator<Item = &DeviceId> {
        self.adjacency.get(id).into_iter().flatten()
    }

    pub fn zone_of(&self, id: &DeviceId) -> Option<&ZoneId> {
        self.zones.get(id)
    }

    pub fn zones(&self) -> &BTreeMap<DeviceId, ZoneId> {
        &self.zones
    }

    pub fn has_zone(&self, zone: &ZoneId) -> bool {
        self.zones.values().any(|z| z == zone)
    }

    /// Shortest path from `src` to `dst` over devices accepted by `usable`.
    ///
    /// Among equally short paths the lexicographically smallest device-id
    /// sequence wins: distances are computed backwards from `dst`, then the walk
    /// from `src` always steps to the smallest neighbor that is one hop closer.
    pub fn shortest_path(
        &self,
        src: &DeviceId,
        dst: &DeviceId,
        usable: impl Fn(&DeviceId) -> bool,
    ) -> Option<Vec<DeviceId>> {
        if !self.devices.contains_key(src) || !self.devices.contains_key(dst) || !usable(src) || !usable(dst) {
            return None;
        }
        let mut dist: BTreeMap<&DeviceId, usize> = BTreeMap::from([(dst, 0)]);
        let mut queue = VecDeque::from([dst]);
        while let Some(id) = queue.pop_front() {
            if id == src {
                break;
            }
            let d = dist[id];
            for n in &self.adjacency[id] {
                if usable(n) && !dist.contains_key(n) {
                    dist.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        let mut remaining = *dist.get(src)?;
        let mut path = vec![src.clone()];
        let mut cur = src;
        while remaining > 0 {
            let next = self.adjacency[cur]
                .iter()
                .find(|n| dist.get(n) == Some(&(remaining - 1)))
                .expect("a neighbor one hop closer exists");
            path.push(next.clone());
            cur = next;
            remaining -= 1;
        }
        Some(path)
    }
}
