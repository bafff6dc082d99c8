use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::session::{enforce, open_session, reevaluate, Session, SessionStatus, Transition};
use super::snapshot::{snapshot_context, ContextSnapshot, SnapshotEnv};
use super::{decide, AccessDecision, AccessModel, AccessRequest, EngineConfig, EngineError, Outcome, RuleAction};
use crate::context::{Blocklist, ContextAnalyzer, ContextRepository, FlowEvent, Nca, NcaKind};
use crate::fbac::{AccessControlTensor, Catalog};
use crate::ips::{self, DataPlaneReport};
use crate::netsim::{
    Attachment, CompromisedBehavior, FaultAction, FlowDescriptor, NetsimError, NetworkState, Topology, Trajectory,
};
use crate::policy::PolicyDocument;
use crate::types::{DeviceId, FlowId, Millis, ObjectId, Role, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Decision {
        request_id: String,
        user: UserId,
        object: ObjectId,
        model: AccessModel,
        outcome: Outcome,
        triggering_rules: Vec<crate::types::RuleId>,
        network_actions: Vec<RuleAction>,
        #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
        blacklist: BTreeSet<UserId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<u64>,
    },
    Reevaluation {
        session: u64,
        request_id: String,
        user: UserId,
        status: SessionStatus,
        outcome: Outcome,
        triggering_rules: Vec<crate::types::RuleId>,
        network_actions: Vec<RuleAction>,
        #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
        blacklist: BTreeSet<UserId>,
    },
    DataPlaneReport {
        fd_id: DeviceId,
        action: FaultAction,
        flow_id: FlowId,
    },
    SessionClosed {
        session: u64,
        request_id: String,
    },
    RouteCheck {
        src_ip: IpAddr,
        dst_ip: IpAddr,
        delivered: bool,
        path: Vec<DeviceId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub time: Millis,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowObservation {
    pub trajectory: Option<Trajectory>,
    pub reports: Vec<DataPlaneReport>,
    pub ncas: Vec<Nca>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCheck {
    pub delivered: bool,
    pub path: Vec<DeviceId>,
    pub error: Option<String>,
}

/// The whole pipeline for one simulated network.
#[derive(Debug, Clone)]
pub struct Gargoyle {
    config: EngineConfig,
    model: AccessModel,
    policies: Arc<PolicyDocument>,
    base: AccessControlTensor,
    net: NetworkState,
    repo: ContextRepository,
    analyzer: ContextAnalyzer,
    roles: BTreeMap<UserId, Role>,
    blacklist: BTreeSet<UserId>,
    sessions: Vec<Session>,
    traced_faults: BTreeSet<(DeviceId, FaultAction)>,
    trace: Vec<TraceRecord>,
}

impl Gargoyle {
    pub fn new(
        topology: Topology,
        policies: Arc<PolicyDocument>,
        catalog: Arc<Catalog>,
        config: EngineConfig,
        model: AccessModel,
    ) -> Self {
        let blocklist: Blocklist = policies.vocab.blocklist.iter().map(String::as_str).collect();
        let analyzer = ContextAnalyzer::new(config.detectors.clone(), blocklist);
        Gargoyle {
            config,
            model,
            policies,
            base: AccessControlTensor::new(catalog),
            net: NetworkState::new(topology),
            repo: ContextRepository::new(),
            analyzer,
            roles: BTreeMap::new(),
            blacklist: BTreeSet::new(),
            sessions: Vec::new(),
            traced_faults: BTreeSet::new(),
            trace: Vec::new(),
        }
    }

    pub fn model(&self) -> AccessModel {
        self.model
    }

    pub fn network(&self) -> &NetworkState {
        &self.net
    }

    pub fn repository(&self) -> &ContextRepository {
        &self.repo
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn blacklist(&self) -> &BTreeSet<UserId> {
        &self.blacklist
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n").collect()
    }

    pub fn register_user(&mut self, user: UserId, role: Role) -> Result<(), EngineError> {
        if !self.policies.has_role(&role) {
            return Err(EngineError::UnknownRole(role));
        }
        self.roles.insert(user, role);
        Ok(())
    }

    pub fn attach(&mut self, time: Millis, attachment: Attachment) -> Result<Vec<Nca>, EngineError> {
        let event = self.net.attach_device(time, attachment)?;
        let ncas = self.analyzer.observe_attachment(&mut self.repo, &event);
        self.reevaluate_touched(time, &ncas, &[])?;
        Ok(ncas)
    }

    pub fn set_fault(&mut self, fd: &DeviceId, behavior: Option<CompromisedBehavior>) -> Result<(), EngineError> {
        Ok(self.net.set_fault(fd, behavior)?)
    }

    /// Routes and verifies `flow`, records its reports and NCAs, and
    /// re-evaluates the sessions they touch.
    fn route_and_verify(
        &mut self,
        flow: &FlowDescriptor,
    ) -> Result<(Option<Trajectory>, Vec<DataPlaneReport>), EngineError> {
        let expected = match ips::expected_trajectory(&self.net, flow) {
            Ok(path) => path,
            Err(NetsimError::Unreachable { .. } | NetsimError::NotAttached(_)) => return Ok((None, Vec::new())),
            Err(e) => return Err(e.into()),
        };
        let trajectory = self.net.route_flow(flow)?;
        // Flows are simulated atomically, so the controller knows the verdict
        // at the flow's start; hop times stay in the evidence.
        let reports: Vec<DataPlaneReport> = ips::verify(&expected, &trajectory, self.config.tolerance_ms)
            .into_iter()
            .map(|r| DataPlaneReport { time: flow.start, ..r })
            .collect();
        for report in &reports {
            self.repo.append_report(report.clone());
            if self.traced_faults.insert((report.fd_id.clone(), report.action)) {
                self.record(
                    report.time,
                    TraceEvent::DataPlaneReport {
                        fd_id: report.fd_id.clone(),
                        action: report.action,
                        flow_id: report.evidence.flow_id.clone(),
                    },
                );
            }
        }
        Ok((Some(trajectory), reports))
    }

    pub fn observe_flow(&mut self, event: &FlowEvent) -> Result<FlowObservation, EngineError> {
        let flow = FlowDescriptor {
            flow_id: event.flow_id.clone(),
            src_ip: event.src_ip,
            dst_ip: event.dst_ip,
            start: event.time,
        };
        let (trajectory, reports) = self.route_and_verify(&flow)?;
        let ncas = self.analyzer.ingest(&mut self.repo, event);
        self.reevaluate_touched(event.time, &ncas, &reports)?;
        Ok(FlowObservation { trajectory, reports, ncas })
    }

    pub fn snapshot(&self, request: &AccessRequest) -> Result<ContextSnapshot, EngineError> {
        let provider = self.net.locations().get(&self.config.provider_ip).map(|e| &e.fd_id);
        let env = SnapshotEnv {
            policies: &self.policies,
            catalog: self.base.catalog(),
            roles: &self.roles,
            blacklist: &self.blacklist,
            provider,
            recent_window_ms: self.policies.defaults.recent_window_ms,
        };
        snapshot_context(&self.repo, &self.net, request, &env)
    }

    /// Decision for `request` under the current context, without enforcing it.
    pub fn evaluate(&self, request: &AccessRequest) -> Result<AccessDecision, EngineError> {
        let snap = self.snapshot(request)?;
        Ok(decide(request, &snap, &self.policies, &self.base, self.model)?)
    }

    /// Full request handling: route and verify the request flow, decide,
    /// enforce at both layers and open a session on grant.
    pub fn request(&mut self, request: &AccessRequest) -> Result<AccessDecision, EngineError> {
        if !self.roles.contains_key(&request.user_id) {
            return Err(EngineError::UnknownUser(request.user_id.clone()));
        }
        if self.net.locations().get(&self.config.provider_ip).is_none() {
            return Err(EngineError::ProviderNotAttached(self.config.provider_ip));
        }
        let flow = FlowDescriptor {
            flow_id: FlowId::from(format!("req:{}", request.request_id)),
            src_ip: request.device_ip,
            dst_ip: self.config.provider_ip,
            start: request.time,
        };
        let (_, reports) = self.route_and_verify(&flow)?;
        self.reevaluate_touched(request.time, &[], &reports)?;

        let decision = self.evaluate(request)?;
        enforce(&decision, request, &self.base, &mut self.net)?;
        self.blacklist.extend(decision.blacklist.iter().cloned());
        let session = if decision.outcome.is_grant() {
            let id = self.sessions.len() as u64 + 1;
            self.sessions.push(open_session(id, &decision, request, &self.base)?);
            Some(id)
        } else {
            None
        };
        self.record(
            request.time,
            TraceEvent::Decision {
                request_id: request.request_id.clone(),
                user: request.user_id.clone(),
                object: request.object_id.clone(),
                model: self.model,
                outcome: decision.outcome.clone(),
                triggering_rules: decision.triggering_rules.clone(),
                network_actions: decision.network_actions.clone(),
                blacklist: decision.blacklist.clone(),
                session,
            },
        );
        Ok(decision)
    }

    /// Ends the live session opened by `request_id`. Returns false when there
    /// is none.
    pub fn close_session(&mut self, time: Millis, request_id: &str) -> bool {
        let Some(session) = self.sessions.iter_mut().find(|s| s.request.request_id == request_id && s.is_live()) else {
            return false;
        };
        session.status = SessionStatus::Closed;
        let event = TraceEvent::SessionClosed { session: session.session_id, request_id: request_id.to_owned() };
        self.record(time, event);
        true
    }

    /// Whether `src` can currently reach `dst`; recorded in the trace.
    pub fn route_check(&mut self, time: Millis, src_ip: IpAddr, dst_ip: IpAddr) -> RouteCheck {
        let flow = FlowDescriptor {
            flow_id: FlowId::from(format!("check:{}", self.trace.len())),
            src_ip,
            dst_ip,
            start: time,
        };
        let check = match self.net.planned_path(&flow) {
            Ok(path) => RouteCheck { delivered: true, path, error: None },
            Err(e) => RouteCheck { delivered: false, path: Vec::new(), error: Some(e.to_string()) },
        };
        self.record(
            time,
            TraceEvent::RouteCheck {
                src_ip,
                dst_ip,
                delivered: check.delivered,
                path: check.path.clone(),
                error: check.error.clone(),
            },
        );
        check
    }

    fn record(&mut self, time: Millis, event: TraceEvent) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceRecord { seq, time, event });
    }

    fn touches(&self, session: &Session, ncas: &[Nca], reports: &[DataPlaneReport]) -> bool {
        let user = &session.request.user_id;
        match self.model {
            AccessModel::Rbac | AccessModel::FbacStatic => false,
            AccessModel::UconLike => ncas.iter().any(|n| &n.subject.user == user && n.kind() == NcaKind::Location),
            AccessModel::Gargoyle => {
                let Some(home) = self.net.locations().get(&session.request.device_ip) else {
                    return false;
                };
                let nca_hit = ncas.iter().any(|n| {
                    &n.subject.user == user
                        || self.net.locations().get(&n.subject.ip).is_some_and(|e| e.zone == home.zone)
                });
                if nca_hit {
                    return true;
                }
                let provider = self.net.locations().get(&self.config.provider_ip).map(|e| &e.fd_id);
                let path = provider.and_then(|dst| self.net.natural_path(&home.fd_id, dst)).unwrap_or_default();
                reports.iter().any(|r| path.contains(&r.fd_id))
            }
        }
    }

    fn reevaluate_touched(
        &mut self,
        time: Millis,
        ncas: &[Nca],
        reports: &[DataPlaneReport],
    ) -> Result<(), EngineError> {
        if ncas.is_empty() && reports.is_empty() {
            return Ok(());
        }
        for idx in 0..self.sessions.len() {
            if !self.sessions[idx].is_live() || !self.touches(&self.sessions[idx], ncas, reports) {
                continue;
            }
            let request = AccessRequest { time, ..self.sessions[idx].request.clone() };
            let fresh = match self.evaluate(&request) {
                Ok(d) => d,
                Err(EngineError::NotAttached(_)) => continue,
                Err(e) => return Err(e),
            };
            let transition = reevaluate(&mut self.sessions[idx], &fresh)?;
            if transition == Transition::Unchanged {
                continue;
            }
            for action in &fresh.network_actions {
                self.net.apply_network_rule(action.action.clone())?;
            }
            self.blacklist.extend(fresh.blacklist.iter().cloned());
            let session = &self.sessions[idx];
            let event = TraceEvent::Reevaluation {
                session: session.session_id,
                request_id: session.request.request_id.clone(),
                user: session.request.user_id.clone(),
                status: session.status,
                outcome: session.decision.outcome.clone(),
                triggering_rules: fresh.triggering_rules.clone(),
                network_actions: fresh.network_actions.clone(),
                blacklist: fresh.blacklist.clone(),
            };
            self.record(time, event);
        }
        Ok(())
    }
}
