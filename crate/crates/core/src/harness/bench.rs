use std::net::IpAddr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::runner::HarnessContext;
use super::HarnessError;
use crate::context::{FlowEvent, NcaKind};
use crate::engine::{AccessModel, AccessRequest, EngineConfig, Gargoyle};
use crate::fbac::{Function, FunctionSet, SegmentSelector};
use crate::netsim::{Attachment, DeviceKind};
use crate::policy::{Condition, Effect, NcaWindow, PolicyDocument, PolicyRule, RuleKind, Target};
use crate::types::{DeviceId, FlowId, Label, Medium, ObjectId, Role, RuleId, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Total rule counts to sweep; the reference pack is padded up to each.
    pub policy_counts: Vec<usize>,
    pub user_counts: Vec<usize>,
    pub decisions: usize,
    pub map: u8,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            policy_counts: (1..=9).map(|k| k * 100).collect(),
            user_counts: vec![30, 60, 90],
            decisions: 200,
            map: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub policies: usize,
    pub users: usize,
    pub decisions: usize,
    pub mean_us: f64,
    pub p95_us: f64,
}

fn random_atom(rng: &mut ChaCha8Rng, doc: &PolicyDocument) -> Condition {
    let roles: Vec<Role> = doc.vocab.roles.iter().map(|r| r.name.clone()).collect();
    let zones: Vec<_> = doc.vocab.zones.iter().cloned().collect();
    let labels: Vec<Label> = doc.vocab.labels.iter().cloned().collect();
    match rng.random_range(0..7) {
        0 => Condition::RoleIn { roles: roles.choose_multiple(rng, 3).cloned().collect() },
        1 => Condition::ZoneIn { zones: zones.choose_multiple(rng, 2).cloned().collect() },
        2 => Condition::Medium { medium: if rng.random_bool(0.5) { Medium::Wired } else { Medium::Wireless } },
        3 => Condition::LabelIn { labels: labels.choose_multiple(rng, 1).cloned().collect() },
        4 => Condition::Nca {
            window: if rng.random_bool(0.5) { NcaWindow::Recent } else { NcaWindow::Historical },
            kind: *NcaKind::ALL.choose(rng).expect("non-empty"),
            labels: None,
        },
        5 => Condition::ProximityNca { kind: *NcaKind::ALL.choose(rng).expect("non-empty"), labels: None },
        _ => Condition::SupervisorPresent,
    }
}

/// The reference pack padded with random contextual restrictions up to
/// `total` rules.
pub fn synthetic_policies(base: &PolicyDocument, total: usize, seed: u64) -> PolicyDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut doc = base.clone();
    let labels: Vec<Label> = doc.vocab.labels.iter().cloned().collect();
    let lowest = doc.rules.iter().map(|r| r.priority).min().unwrap_or(0);
    for i in 0..total.saturating_sub(base.rules.len()) {
        let atoms = rng.random_range(1..=3);
        let args: Vec<Condition> = (0..atoms)
            .map(|_| {
                let a = random_atom(&mut rng, base);
                if rng.random_bool(0.3) {
                    Condition::not(a)
                } else {
                    a
                }
            })
            .collect();
        let condition = if rng.random_bool(0.5) { Condition::and(args) } else { Condition::or(args) };
        let functions: FunctionSet = Function::ALL.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        let target = if rng.random_bool(0.5) {
            Target::Any
        } else {
            Target::Labels(labels.choose_multiple(&mut rng, 1).cloned().collect())
        };
        let segments = if rng.random_bool(0.5) {
            SegmentSelector::All
        } else {
            SegmentSelector::Label(labels.choose(&mut rng).expect("labels exist").clone())
        };
        doc.rules.push(PolicyRule {
            id: RuleId::from(format!("SYN-{i}")),
            kind: RuleKind::FbacContext,
            priority: lowest - 1 - i as i64,
            target,
            condition,
            effect: Effect::Restrict { functions, segments },
        });
    }
    doc
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[idx]
}

/// An engine with `users` attached users, about a fifth of whom have run a
/// port scan, and a seeded stream of requests against it.
pub struct BenchWorld {
    pub engine: Gargoyle,
    users: Vec<(UserId, Role, IpAddr)>,
    objects: Vec<ObjectId>,
    rng: ChaCha8Rng,
    issued: u64,
}

impl BenchWorld {
    pub fn build(
        ctx: &HarnessContext,
        map: u8,
        policies: Arc<PolicyDocument>,
        users: usize,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let topology =
            ctx.maps.get(&map).cloned().ok_or_else(|| HarnessError::Config(format!("map {map} is not loaded")))?;
        let edges: Vec<DeviceId> = topology
            .devices()
            .filter(|d| d.kind == DeviceKind::Edge && d.id.as_str() != "P4")
            .map(|d| d.id.clone())
            .collect();
        let objects: Vec<ObjectId> = ctx.catalog.objects().map(|o| o.id.clone()).collect();
        let provider: IpAddr = IpAddr::from([10, 0, 100, 1]);
        let abort = |source| HarnessError::Aborted { id: 0, time: 0, source };

        let policy_count = policies.rules.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (policy_count as u64) << 16 ^ users as u64);
        let mut engine = Gargoyle::new(
            topology.clone(),
            policies,
            ctx.catalog.clone(),
            EngineConfig::new(provider),
            AccessModel::Gargoyle,
        );
        let p4 = Attachment {
            device_ip: provider,
            user_id: UserId::from("provider"),
            fd_id: DeviceId::from("P4"),
            port_id: 0,
            medium: Medium::Wired,
        };
        engine.attach(0, p4).map_err(abort)?;
        let mut attached = Vec::with_capacity(users);
        for k in 0..users {
            let user = UserId::from(format!("U{k}"));
            let role = Role::from(format!("R{}", rng.random_range(2..=9)));
            engine.register_user(user.clone(), role.clone()).map_err(abort)?;
            let fd = edges.choose(&mut rng).expect("edges exist").clone();
            let medium = topology.device(&fd).expect("device exists").medium;
            let ip = IpAddr::from([10, 0, (k / 200 + 1) as u8, (k % 200 + 1) as u8]);
            engine
                .attach(
                    1_000,
                    Attachment { device_ip: ip, user_id: user.clone(), fd_id: fd, port_id: k as u32 % 24, medium },
                )
                .map_err(abort)?;
            if rng.random_bool(0.2) {
                let mut event = FlowEvent {
                    time: 2_000 + k as u64,
                    flow_id: FlowId::from(format!("b{k}")),
                    src_ip: ip,
                    dst_ip: provider,
                    dst_port: 443,
                    user_id: user.clone(),
                    bytes: 4_000,
                    packets: 10,
                    annotations: Default::default(),
                    dst_domain: None,
                };
                event.annotations.insert("tool:nmap".into());
                engine.observe_flow(&event).map_err(abort)?;
            }
            attached.push((user, role, ip));
        }
        if attached.is_empty() {
            return Err(HarnessError::Config("bench needs at least one user".into()));
        }
        Ok(BenchWorld { engine, users: attached, objects, rng, issued: 0 })
    }

    /// The next request: a random attached user asks for a random object.
    pub fn next_request(&mut self) -> AccessRequest {
        let (user, role, ip) = self.users.choose(&mut self.rng).expect("users exist").clone();
        let i = self.issued;
        self.issued += 1;
        AccessRequest {
            request_id: format!("b{i}"),
            user_id: user,
            device_ip: ip,
            role,
            object_id: self.objects.choose(&mut self.rng).expect("objects exist").clone(),
            time: 10_000 + i,
        }
    }
}

/// Mean and 95th-percentile decision latency for every (policy count, user
/// count) cell. Each decision covers context snapshot plus rule evaluation.
pub fn bench_policy_scaling(ctx: &HarnessContext, config: &BenchConfig) -> Result<Vec<LatencyRow>, HarnessError> {
    let mut rows = Vec::new();
    for &policies in &config.policy_counts {
        let doc = Arc::new(synthetic_policies(&ctx.policies, policies, config.seed));
        for &users in &config.user_counts {
            let mut world = BenchWorld::build(ctx, config.map, doc.clone(), users, config.seed)?;
            let mut samples = Vec::with_capacity(config.decisions);
            for _ in 0..config.decisions {
                let request = world.next_request();
                let start = Instant::now();
                let decision = world.engine.evaluate(&request).map_err(|source| HarnessError::Aborted {
                    id: 0,
                    time: 0,
                    source,
                })?;
                samples.push(start.elapsed().as_secs_f64() * 1e6);
                std::hint::black_box(decision);
            }
            let mean = if samples.is_empty() { 0.0 } else { samples.iter().sum::<f64>() / samples.len() as f64 };
            samples.sort_by(f64::total_cmp);
            rows.push(LatencyRow {
                policies,
                users,
                decisions: samples.len(),
                mean_us: mean,
                p95_us: percentile(&samples, 0.95),
            });
        }
    }
    Ok(rows)
}
