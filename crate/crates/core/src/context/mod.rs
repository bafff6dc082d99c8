//! Network context extraction.
//!
//! Flow events are inspected by the detectors in [`ContextAnalyzer`], which
//! emit typed network context attributes ([`Nca`]). Everything emitted lands
//! in the append-only [`ContextRepository`] together with data-plane reports.

mod detectors;
mod repository;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::net::{IpAddr, Ipv4Addr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{DeviceId, FlowId, Medium, Millis, UserId, ZoneId};

pub use detectors::{
    analyze_flow_stats, detect_port_scan, detect_restricted_access, record_interaction, ContextAnalyzer,
};
pub use repository::ContextRepository;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("line {line}: {source}")]
    Schema { line: usize, source: serde_json::Error },
    #[error("line {line}: {reason}")]
    InvalidEvent { line: usize, reason: String },
    #[error("invalid blocklist entry on line {line}: `{entry}`")]
    InvalidBlocklistEntry { line: usize, entry: String },
}

/// One observed flow (or flow update) as seen by the controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEvent {
    pub time: Millis,
    pub flow_id: FlowId,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub dst_port: u16,
    pub user_id: UserId,
    pub bytes: u64,
    pub packets: u64,
    #[serde(default)]
    pub annotations: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_domain: Option<String>,
}

impl FlowEvent {
    pub fn validate(&self) -> Result<(), String> {
        if self.packets == 0 {
            return Err(format!("flow `{}` has zero packets", self.flow_id));
        }
        if self.bytes < self.packets {
            return Err(format!("flow `{}` has fewer bytes than packets", self.flow_id));
        }
        Ok(())
    }
}

/// Parses a JSON Lines flow log. Blank lines are skipped.
pub fn load_flow_events(text: &str) -> Result<Vec<FlowEvent>, ContextError> {
    let mut events = Vec::new();
    let mut last: HashMap<FlowId, Millis> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let event: FlowEvent = serde_json::from_str(raw).map_err(|source| ContextError::Schema { line, source })?;
        event.validate().map_err(|reason| ContextError::InvalidEvent { line, reason })?;
        if let Some(&prev) = last.get(&event.flow_id) {
            if event.time < prev {
                return Err(ContextError::InvalidEvent {
                    line,
                    reason: format!("flow `{}` goes back in time ({} < {prev})", event.flow_id, event.time),
                });
            }
        }
        last.insert(event.flow_id.clone(), event.time);
        events.push(event);
    }
    Ok(events)
}

/// Restricted destinations, matched exactly on domain name or address.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocklist {
    pub domains: BTreeSet<String>,
    pub ips: BTreeSet<IpAddr>,
}

impl Blocklist {
    /// One entry per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ContextError> {
        let mut list = Blocklist::default();
        for (i, raw) in text.lines().enumerate() {
            let entry = raw.split('#').next().unwrap_or("").trim();
            if entry.is_empty() {
                continue;
            }
            if entry.contains(char::is_whitespace) {
                return Err(ContextError::InvalidBlocklistEntry { line: i + 1, entry: entry.to_owned() });
            }
            list.insert(entry);
        }
        Ok(list)
    }

    pub fn insert(&mut self, entry: &str) {
        match entry.parse::<IpAddr>() {
            Ok(ip) => {
                self.ips.insert(ip);
            }
            Err(_) => {
                self.domains.insert(entry.to_ascii_lowercase());
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty() && self.ips.is_empty()
    }

    /// The matching entry for a destination, if any.
    pub fn matches(&self, domain: Option<&str>, ip: IpAddr) -> Option<String> {
        if let Some(d) = domain.map(str::to_ascii_lowercase) {
            if self.domains.contains(&d) {
                return Some(d);
            }
        }
        self.ips.contains(&ip).then(|| ip.to_string())
    }
}

impl<'a> FromIterator<&'a str> for Blocklist {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut list = Blocklist::default();
        for entry in iter {
            list.insert(entry);
        }
        list
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Distinct destination ports that make a port scan.
    pub scan_ports: usize,
    pub scan_window_ms: Millis,
    /// Packets per second that make a rate anomaly.
    pub rate_pps: u64,
    pub rate_window_ms: Millis,
    pub recent_window_ms: Millis,
    pub internal_net: Ipv4Addr,
    pub internal_prefix_len: u8,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            scan_ports: 20,
            scan_window_ms: 10_000,
            rate_pps: 1_000,
            rate_window_ms: 1_000,
            recent_window_ms: 60_000,
            internal_net: Ipv4Addr::new(10, 0, 0, 0),
            internal_prefix_len: 8,
        }
    }
}

impl DetectorConfig {
    pub fn is_internal(&self, ip: IpAddr) -> bool {
        let IpAddr::V4(v4) = ip else { return false };
        let len = u32::from(self.internal_prefix_len.min(32));
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        u32::from(v4) & mask == u32::from(self.internal_net) & mask
    }
}

/// Who an NCA is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subject {
    pub user: UserId,
    pub ip: IpAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NcaKind {
    DeviceCapability,
    SecurityLevel,
    Interaction,
    ConnectionStatus,
    SuspiciousActivity,
    Location,
    RateAnomaly,
}

impl NcaKind {
    pub const ALL: [NcaKind; 7] = [
        NcaKind::DeviceCapability,
        NcaKind::SecurityLevel,
        NcaKind::Interaction,
        NcaKind::ConnectionStatus,
        NcaKind::SuspiciousActivity,
        NcaKind::Location,
        NcaKind::RateAnomaly,
    ];
}

impl fmt::Display for NcaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NcaKind::DeviceCapability => "device_capability",
            NcaKind::SecurityLevel => "security_level",
            NcaKind::Interaction => "interaction",
            NcaKind::ConnectionStatus => "connection_status",
            NcaKind::SuspiciousActivity => "suspicious_activity",
            NcaKind::Location => "location",
            NcaKind::RateAnomaly => "rate_anomaly",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecurityLevel {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Activity {
    PortScan { distinct_ports: usize },
    RestrictedAccess { target: String },
    Malware { signature: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NcaDetail {
    DeviceCapability { tool: String },
    SecurityLevel { level: SecurityLevel },
    Interaction { peer: IpAddr },
    ConnectionStatus { medium: Medium, fd_id: DeviceId },
    SuspiciousActivity { activity: Activity },
    Location { zone: ZoneId, fd_id: DeviceId, port_id: u32 },
    RateAnomaly { rate_pps: u64, packets: u64, window_ms: Millis },
}

impl NcaDetail {
    pub fn kind(&self) -> NcaKind {
        match self {
            NcaDetail::DeviceCapability { .. } => NcaKind::DeviceCapability,
            NcaDetail::SecurityLevel { .. } => NcaKind::SecurityLevel,
            NcaDetail::Interaction { .. } => NcaKind::Interaction,
            NcaDetail::ConnectionStatus { .. } => NcaKind::ConnectionStatus,
            NcaDetail::SuspiciousActivity { .. } => NcaKind::SuspiciousActivity,
            NcaDetail::Location { .. } => NcaKind::Location,
            NcaDetail::RateAnomaly { .. } => NcaKind::RateAnomaly,
        }
    }

    /// Short label that policy conditions match against.
    pub fn label(&self) -> String {
        match self {
            NcaDetail::DeviceCapability { tool } => tool.clone(),
            NcaDetail::SecurityLevel { level } => {
                serde_json::to_value(level).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
            }
            NcaDetail::Interaction { peer } => peer.to_string(),
            NcaDetail::ConnectionStatus { medium, .. } => medium.to_string(),
            NcaDetail::SuspiciousActivity { activity } => match activity {
                Activity::PortScan { .. } => "port-scan".into(),
                Activity::RestrictedAccess { .. } => "restricted-access".into(),
                Activity::Malware { .. } => "malware".into(),
            },
            NcaDetail::Location { zone, .. } => zone.to_string(),
            NcaDetail::RateAnomaly { .. } => "dos".into(),
        }
    }
}

/// A network context attribute: one typed, timestamped fact about a subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nca {
    pub subject: Subject,
    pub time: Millis,
    pub source: String,
    #[serde(flatten)]
    pub detail: NcaDetail,
}

impl Nca {
    pub fn kind(&self) -> NcaKind {
        self.detail.kind()
    }

    pub fn label(&self) -> String {
        self.detail.label()
    }
}
