use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::net::IpAddr;

use super::{
    Activity, Blocklist, ContextRepository, DetectorConfig, FlowEvent, Nca, NcaDetail, NcaKind, SecurityLevel, Subject,
};
use crate::netsim::PacketInEvent;
use crate::types::{FlowId, Millis, UserId};

const CAPABILITY_TAGS: [&str; 2] = ["os-fingerprint:", "tool:"];
const MALWARE_TAG: &str = "malware-sig:";

fn subject_of(event: &FlowEvent) -> Subject {
    Subject { user: event.user_id.clone(), ip: event.src_ip }
}

fn nca(event: &FlowEvent, source: &str, detail: NcaDetail) -> Nca {
    Nca { subject: subject_of(event), time: event.time, source: source.to_owned(), detail }
}

fn in_window(time: Millis, now: Millis, window: Millis) -> bool {
    time <= now && time + window > now
}

/// Port-scan check over one source's events: fires when the distinct
/// destination ports seen in `(now - W, now]` reach the threshold.
pub fn detect_port_scan(events: &[FlowEvent], now: Millis, config: &DetectorConfig) -> Option<Nca> {
    let window: Vec<&FlowEvent> = events.iter().filter(|e| in_window(e.time, now, config.scan_window_ms)).collect();
    let ports: BTreeSet<u16> = window.iter().map(|e| e.dst_port).collect();
    if ports.len() < config.scan_ports.max(1) {
        return None;
    }
    let last = window.iter().max_by_key(|e| e.time)?;
    let mut out = nca(
        last,
        "port-scan",
        NcaDetail::SuspiciousActivity { activity: Activity::PortScan { distinct_ports: ports.len() } },
    );
    out.time = now;
    Some(out)
}

/// Flow-statistics check over one user's events in `(now - W, now]`.
pub fn analyze_flow_stats(events: &[FlowEvent], now: Millis, config: &DetectorConfig) -> Option<Nca> {
    let window: Vec<&FlowEvent> = events.iter().filter(|e| in_window(e.time, now, config.rate_window_ms)).collect();
    let last = window.iter().max_by_key(|e| e.time)?;
    let packets: u64 = window.iter().map(|e| e.packets).sum();
    let rate_pps = rate(packets, config.rate_window_ms);
    if rate_pps < config.rate_pps {
        return None;
    }
    let mut out =
        nca(last, "flow-stats", NcaDetail::RateAnomaly { rate_pps, packets, window_ms: config.rate_window_ms });
    out.time = now;
    Some(out)
}

fn rate(packets: u64, window_ms: Millis) -> u64 {
    packets.saturating_mul(1000) / window_ms.max(1)
}

pub fn detect_restricted_access(event: &FlowEvent, blocklist: &Blocklist) -> Option<Nca> {
    let target = blocklist.matches(event.dst_domain.as_deref(), event.dst_ip)?;
    Some(nca(
        event,
        "restricted-access",
        NcaDetail::SuspiciousActivity { activity: Activity::RestrictedAccess { target } },
    ))
}

/// Interaction between two organization-managed addresses.
pub fn record_interaction(event: &FlowEvent, config: &DetectorConfig) -> Option<Nca> {
    (config.is_internal(event.src_ip) && config.is_internal(event.dst_ip) && event.src_ip != event.dst_ip)
        .then(|| nca(event, "interaction", NcaDetail::Interaction { peer: event.dst_ip }))
}

/// Streaming detector state: the traffic context analyzer plus flow-stats analyzer.
#[derive(Debug, Clone)]
pub struct ContextAnalyzer {
    config: DetectorConfig,
    blocklist: Blocklist,
    scans: BTreeMap<IpAddr, VecDeque<FlowEvent>>,
    scan_last: BTreeMap<IpAddr, Millis>,
    rates: BTreeMap<UserId, VecDeque<FlowEvent>>,
    rate_last: BTreeMap<UserId, Millis>,
    seen: HashSet<(FlowId, String)>,
    levels: BTreeMap<UserId, SecurityLevel>,
}

impl ContextAnalyzer {
    pub fn new(config: DetectorConfig, blocklist: Blocklist) -> Self {
        ContextAnalyzer {
            config,
            blocklist,
            scans: BTreeMap::new(),
            scan_last: BTreeMap::new(),
            rates: BTreeMap::new(),
            rate_last: BTreeMap::new(),
            seen: HashSet::new(),
            levels: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn blocklist(&self) -> &Blocklist {
        &self.blocklist
    }

    fn first_time(&mut self, flow: &FlowId, key: &str) -> bool {
        self.seen.insert((flow.clone(), key.to_owned()))
    }

    /// Runs every detector on `event`, appends the findings to `repo` and
    /// returns them.
    pub fn ingest(&mut self, repo: &mut ContextRepository, event: &FlowEvent) -> Vec<Nca> {
        let mut out = Vec::new();

        for tag in &event.annotations {
            if let Some(tool) = CAPABILITY_TAGS.iter().find_map(|p| tag.strip_prefix(p)) {
                if self.first_time(&event.flow_id, tag) {
                    out.push(nca(event, "signature", NcaDetail::DeviceCapability { tool: tool.to_owned() }));
                }
            } else if let Some(sig) = tag.strip_prefix(MALWARE_TAG) {
                if self.first_time(&event.flow_id, tag) {
                    out.push(nca(
                        event,
                        "signature",
                        NcaDetail::SuspiciousActivity { activity: Activity::Malware { signature: sig.to_owned() } },
                    ));
                }
            }
        }

        if let Some(found) = detect_restricted_access(event, &self.blocklist) {
            if self.first_time(&event.flow_id, "restricted-access") {
                out.push(found);
            }
        }
        if let Some(found) = record_interaction(event, &self.config) {
            if self.first_time(&event.flow_id, "interaction") {
                out.push(found);
            }
        }

        out.extend(self.scan_step(event));
        out.extend(self.rate_step(event));

        for n in &out {
            repo.append(n.clone());
        }
        if let Some(level) = self.level_step(repo, event) {
            repo.append(level.clone());
            out.push(level);
        }
        out
    }

    fn scan_step(&mut self, event: &FlowEvent) -> Option<Nca> {
        let window = self.config.scan_window_ms;
        let buf = self.scans.entry(event.src_ip).or_default();
        buf.push_back(event.clone());
        while buf.front().is_some_and(|e| !in_window(e.time, event.time, window) && e.time <= event.time) {
            buf.pop_front();
        }
        if self.scan_last.get(&event.src_ip).is_some_and(|&t| event.time < t + window) {
            return None;
        }
        let found = detect_port_scan(buf.make_contiguous(), event.time, &self.config)?;
        self.scan_last.insert(event.src_ip, event.time);
        Some(found)
    }

    fn rate_step(&mut self, event: &FlowEvent) -> Option<Nca> {
        let window = self.config.rate_window_ms;
        let buf = self.rates.entry(event.user_id.clone()).or_default();
        buf.push_back(event.clone());
        while buf.front().is_some_and(|e| !in_window(e.time, event.time, window) && e.time <= event.time) {
            buf.pop_front();
        }
        if self.rate_last.get(&event.user_id).is_some_and(|&t| event.time < t + window) {
            return None;
        }
        let found = analyze_flow_stats(buf.make_contiguous(), event.time, &self.config)?;
        self.rate_last.insert(event.user_id.clone(), event.time);
        Some(found)
    }

    fn level_step(&mut self, repo: &ContextRepository, event: &FlowEvent) -> Option<Nca> {
        let level = derive_security_level(repo, &event.user_id, event.time, self.config.recent_window_ms);
        let previous = self.levels.insert(event.user_id.clone(), level).unwrap_or(SecurityLevel::High);
        (previous != level).then(|| nca(event, "security-level", NcaDetail::SecurityLevel { level }))
    }

    /// Location and connection-status NCAs for an attachment packet-in.
    pub fn observe_attachment(&mut self, repo: &mut ContextRepository, event: &PacketInEvent) -> Vec<Nca> {
        let subject = Subject { user: event.user_id.clone(), ip: event.device_ip };
        let out = vec![
            Nca {
                subject: subject.clone(),
                time: event.time,
                source: "packet-in".into(),
                detail: NcaDetail::Location {
                    zone: event.zone.clone(),
                    fd_id: event.fd_id.clone(),
                    port_id: event.port_id,
                },
            },
            Nca {
                subject,
                time: event.time,
                source: "packet-in".into(),
                detail: NcaDetail::ConnectionStatus { medium: event.medium, fd_id: event.fd_id.clone() },
            },
        ];
        for n in &out {
            repo.append(n.clone());
        }
        out
    }
}

/// Low with recent suspicious activity or rate anomalies, medium with recent
/// hacking capabilities, high otherwise.
pub(crate) fn derive_security_level(
    repo: &ContextRepository,
    user: &UserId,
    now: Millis,
    window: Millis,
) -> SecurityLevel {
    let recent = repo.query(
        user,
        now.saturating_sub(window),
        now,
        &[NcaKind::SuspiciousActivity, NcaKind::RateAnomaly, NcaKind::DeviceCapability],
    );
    if recent.iter().any(|n| matches!(n.kind(), NcaKind::SuspiciousActivity | NcaKind::RateAnomaly)) {
        SecurityLevel::Low
    } else if !recent.is_empty() {
        SecurityLevel::Medium
    } else {
        SecurityLevel::High
    }
}
