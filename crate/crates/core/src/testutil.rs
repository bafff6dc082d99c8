//! Builders shared by unit tests.

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr};

use crate::context::{Activity, Nca, NcaDetail, Subject};
use crate::engine::{AccessRequest, ContextSnapshot, ProximityEntry};
use crate::ips::{DataPlaneReport, Evidence};
use crate::netsim::FaultAction;
use crate::types::{DeviceId, Label, Medium, Millis, Role};

pub const NOW: Millis = 100_000;

pub fn ip(last: u8) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(10, 0, 0, last))
}

/// A benign requester `u1` (role R5) on a wired port in RoomA.
pub fn snapshot(labels: &[&str]) -> ContextSnapshot {
    ContextSnapshot {
        time: NOW,
        requester: "u1".into(),
        role: "R5".into(),
        role_index: Some(5),
        zone: "RoomA".into(),
        medium: Medium::Wired,
        fd_id: "R1".into(),
        object_labels: labels.iter().map(|l| Label::from(*l)).collect(),
        recent: Vec::new(),
        historical: Vec::new(),
        proximity: Vec::new(),
        supervisor_present: false,
        path: vec!["R1".into(), "C1".into(), "P4".into()],
        path_reports: Vec::new(),
        safe_path: Some(vec!["R1".into(), "C1".into(), "P4".into()]),
        blacklisted: false,
    }
}

pub fn request(object: &str) -> AccessRequest {
    AccessRequest {
        request_id: format!("q-{object}"),
        user_id: "u1".into(),
        device_ip: ip(1),
        role: Role::from("R5"),
        object_id: object.into(),
        time: NOW,
    }
}

pub fn nca(user: &str, time: Millis, detail: NcaDetail) -> Nca {
    Nca { subject: Subject { user: user.into(), ip: ip(9) }, time, source: "test".into(), detail }
}

pub fn capability(tool: &str) -> NcaDetail {
    NcaDetail::DeviceCapability { tool: tool.into() }
}

pub fn port_scan() -> NcaDetail {
    NcaDetail::SuspiciousActivity { activity: Activity::PortScan { distinct_ports: 25 } }
}

pub fn rate() -> NcaDetail {
    NcaDetail::RateAnomaly { rate_pps: 5000, packets: 5000, window_ms: 1000 }
}

pub fn neighbour(user: &str, role: &str, recent: Vec<NcaDetail>) -> ProximityEntry {
    ProximityEntry {
        subject: user.into(),
        role: Some(role.into()),
        recent: recent.into_iter().map(|d| nca(user, NOW - 1000, d)).collect(),
    }
}

pub fn report(fd: &str) -> DataPlaneReport {
    DataPlaneReport {
        fd_id: DeviceId::from(fd),
        action: FaultAction::Delay,
        evidence: Evidence { flow_id: "f".into(), expected: Vec::new(), actual: Vec::new() },
        time: NOW - 500,
    }
}

pub fn labels(items: &[&str]) -> BTreeSet<Label> {
    items.iter().map(|l| Label::from(*l)).collect()
}
