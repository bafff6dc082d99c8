use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::report::{classify, Row};
use super::scenario::{Category, Expectation, ScenarioSpec, Step};
use super::HarnessError;
use crate::context::DetectorConfig;
use crate::engine::{
    AccessModel, AccessRequest, EngineConfig, EngineError, Gargoyle, Outcome, SessionStatus, TraceEvent,
};
use crate::fbac::Catalog;
use crate::netsim::{Attachment, Topology};
use crate::policy::PolicyDocument;
use crate::types::{Medium, Millis, ObjectId, UserId};

/// Inputs shared by every scenario of a run.
#[derive(Debug, Clone)]
pub struct HarnessContext {
    pub maps: BTreeMap<u8, Topology>,
    pub policies: Arc<PolicyDocument>,
    pub catalog: Arc<Catalog>,
    pub detectors: DetectorConfig,
    pub tolerance_ms: Millis,
}

impl HarnessContext {
    pub fn new(maps: BTreeMap<u8, Topology>, policies: PolicyDocument, catalog: Catalog) -> Self {
        HarnessContext {
            maps,
            policies: Arc::new(policies),
            catalog: Arc::new(catalog),
            detectors: DetectorConfig::default(),
            tolerance_ms: crate::ips::DEFAULT_TOLERANCE_MS,
        }
    }

    /// Shipped maps, catalog and policy pack.
    pub fn reference() -> Self {
        use crate::fixtures;
        Self::new(fixtures::maps(), fixtures::reference_policies(), fixtures::catalog())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub user: UserId,
    pub object: ObjectId,
    pub time: Millis,
    pub initial: Outcome,
    /// Outcome after continuous evaluation, i.e. the session's last decision.
    #[serde(rename = "final")]
    pub final_outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_status: Option<SessionStatus>,
    pub row: Row,
    /// Sequence number of the trace record holding `final_outcome`.
    pub trace_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario_id: u32,
    pub category: Category,
    pub model: AccessModel,
    pub expected: Expectation,
    pub requests: Vec<RequestRecord>,
    /// Whether the scripted attack failed; absent without an attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected: Option<bool>,
}

/// A finished run with the engine still available for inspection.
pub struct ScenarioRun {
    pub outcome: ScenarioOutcome,
    pub engine: Gargoyle,
}

fn abort(spec: &ScenarioSpec, time: Millis) -> impl FnOnce(EngineError) -> HarnessError + '_ {
    move |source| HarnessError::Aborted { id: spec.id, time, source }
}

pub fn run_model(spec: &ScenarioSpec, ctx: &HarnessContext, model: AccessModel) -> Result<ScenarioRun, HarnessError> {
    spec.validate()?;
    let topology = ctx
        .maps
        .get(&spec.map)
        .cloned()
        .ok_or_else(|| HarnessError::Config(format!("map {} is not loaded", spec.map)))?;
    let mut config = EngineConfig::new(spec.provider.ip);
    config.detectors = ctx.detectors.clone();
    config.tolerance_ms = ctx.tolerance_ms;
    let mut engine = Gargoyle::new(topology, ctx.policies.clone(), ctx.catalog.clone(), config, model);

    for user in &spec.users {
        engine.register_user(user.user.clone(), user.role.clone()).map_err(abort(spec, 0))?;
    }
    let provider = Attachment {
        device_ip: spec.provider.ip,
        user_id: UserId::from("provider"),
        fd_id: spec.provider.fd_id.clone(),
        port_id: spec.provider.port_id,
        medium: Medium::Wired,
    };
    engine.attach(0, provider).map_err(abort(spec, 0))?;

    let ip_of = |user: &UserId| -> IpAddr { spec.user(user).expect("validated").ip };
    let mut initial = Vec::new();
    for step in &spec.steps {
        let time = step.time();
        match step {
            Step::Attach { user, fd_id, port_id, medium, .. } => {
                let attachment = Attachment {
                    device_ip: ip_of(user),
                    user_id: user.clone(),
                    fd_id: fd_id.clone(),
                    port_id: *port_id,
                    medium: *medium,
                };
                engine.attach(time, attachment).map_err(abort(spec, time))?;
            }
            Step::Flow { event, .. } => {
                engine.observe_flow(event).map_err(abort(spec, time))?;
            }
            Step::Fault { fd_id, behavior, .. } => {
                engine.set_fault(fd_id, *behavior).map_err(abort(spec, time))?;
            }
            Step::Request { request_id, user, object, .. } => {
                let request = AccessRequest {
                    request_id: request_id.clone(),
                    user_id: user.clone(),
                    device_ip: ip_of(user),
                    role: spec.user(user).expect("validated").role.clone(),
                    object_id: object.clone(),
                    time,
                };
                let decision = engine.request(&request).map_err(abort(spec, time))?;
                let seq = engine.trace().len() as u64 - 1;
                initial.push((request, decision.outcome, seq));
            }
            Step::Close { request_id, .. } => {
                engine.close_session(time, request_id);
            }
            Step::RouteCheck { user, .. } => {
                engine.route_check(time, ip_of(user), spec.provider.ip);
            }
        }
    }

    let mut latest: BTreeMap<&str, (u64, &Outcome)> = BTreeMap::new();
    for record in engine.trace() {
        if let TraceEvent::Reevaluation { request_id, outcome, .. } = &record.event {
            latest.insert(request_id, (record.seq, outcome));
        }
    }
    let requests: Vec<RequestRecord> = initial
        .into_iter()
        .map(|(request, outcome, seq)| {
            let (trace_seq, final_outcome) =
                latest.get(request.request_id.as_str()).map_or((seq, outcome.clone()), |(s, o)| (*s, (*o).clone()));
            let session_status =
                engine.sessions().iter().find(|s| s.request.request_id == request.request_id).map(|s| s.status);
            RequestRecord {
                row: classify(&final_outcome),
                request_id: request.request_id,
                user: request.user_id,
                object: request.object_id,
                time: request.time,
                initial: outcome,
                final_outcome,
                session_status,
                trace_seq,
            }
        })
        .collect();

    let protected = spec.attack.as_ref().map(|goal| {
        let Some(record) = requests.iter().find(|r| r.request_id == goal.request_id) else {
            return false;
        };
        match &record.initial {
            Outcome::Deny { .. } => true,
            Outcome::Grant { segments } => {
                let object = ctx.catalog.get(&record.object).expect("requested object exists");
                let mut goal_segments = object.segments.iter().filter(|s| s.labels.contains(&goal.label)).peekable();
                goal_segments.peek().is_some()
                    && goal_segments.all(|s| segments.get(&s.id).is_none_or(|f| !f.contains(goal.function)))
            }
        }
    });

    Ok(ScenarioRun {
        outcome: ScenarioOutcome {
            scenario_id: spec.id,
            category: spec.category,
            model,
            expected: spec.expected,
            requests,
            protected,
        },
        engine,
    })
}

/// Runs `spec` through the full pipeline.
pub fn run_scenario(spec: &ScenarioSpec, ctx: &HarnessContext) -> Result<ScenarioOutcome, HarnessError> {
    run_model(spec, ctx, AccessModel::Gargoyle).map(|r| r.outcome)
}

/// Runs `spec` with one of the context-limited baseline models.
pub fn run_baseline(
    model: AccessModel,
    spec: &ScenarioSpec,
    ctx: &HarnessContext,
) -> Result<ScenarioOutcome, HarnessError> {
    run_model(spec, ctx, model).map(|r| r.outcome)
}
