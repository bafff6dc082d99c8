use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scenario::{
    AttackGoal, Category, Expectation, Injection, ProviderSpec, ScenarioSpec, Step, UserSpec, MAP_COUNT,
};
use super::HarnessError;
use crate::context::FlowEvent;
use crate::fbac::Function;
use crate::netsim::{CompromisedBehavior, DeviceKind, Topology};
use crate::types::{DeviceId, FlowId, Label, Medium, Millis, ObjectId, Role, UserId, ZoneId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub scenarios: usize,
    pub maps: Vec<u8>,
    /// Relative weight of categories 1 to 4.
    pub category_weights: [u32; 4],
    pub users_mean: f64,
    pub users_sd: f64,
    pub users_min: usize,
    pub users_max: usize,
    pub provider_fd: DeviceId,
    /// Zones a requester may start in.
    pub requester_zones: Vec<ZoneId>,
    pub horizon: Millis,
    /// Ordinary requests by the requester besides the warm-up and the attack.
    pub requester_requests: usize,
    /// Ordinary requests by users sharing the requester's zone.
    pub bystander_requests: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            scenarios: 1000,
            maps: (1..=MAP_COUNT).collect(),
            category_weights: [20, 30, 10, 40],
            users_mean: 35.0,
            users_sd: 15.0,
            users_min: 4,
            users_max: 90,
            provider_fd: DeviceId::from("P4"),
            requester_zones: ["RoomA", "RoomB", "CommonRoom"].map(ZoneId::from).to_vec(),
            horizon: 120_000,
            requester_requests: 2,
            bystander_requests: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self, maps: &BTreeMap<u8, Topology>) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.maps.is_empty() {
            return err("no maps configured".into());
        }
        if let Some(m) = self.maps.iter().find(|m| !maps.contains_key(m)) {
            return err(format!("map {m} is not available"));
        }
        if self.category_weights.iter().all(|w| *w == 0) {
            return err("category weights are all zero".into());
        }
        if self.users_min < 3 || self.users_min > self.users_max {
            return err(format!("user bounds {}..{} are invalid", self.users_min, self.users_max));
        }
        if !(self.users_sd >= 0.0 && self.users_mean.is_finite()) {
            return err("user distribution is invalid".into());
        }
        if self.horizon < HORIZON_MIN {
            return err(format!("horizon must be at least {HORIZON_MIN} ms"));
        }
        for id in &self.maps {
            let topology = &maps[id];
            if topology.device(&self.provider_fd).is_none() {
                return err(format!("map {id} has no provider device `{}`", self.provider_fd));
            }
            if requester_devices(topology, &self.requester_zones).is_empty() {
                return err(format!("map {id} has no device in a requester zone"));
            }
        }
        Ok(())
    }
}

/// Splits `n` by `weights` with the largest-remainder method; ties go to the
/// earlier category.
pub fn quotas(n: usize, weights: [u32; 4]) -> [usize; 4] {
    let total: u64 = weights.iter().map(|w| u64::from(*w)).sum();
    if total == 0 {
        return [0; 4];
    }
    let mut out = [0usize; 4];
    let mut rest: Vec<(u64, usize)> = Vec::with_capacity(4);
    for (i, w) in weights.iter().enumerate() {
        let share = n as u64 * u64::from(*w);
        out[i] = (share / total) as usize;
        rest.push((share % total, i));
    }
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = n - out.iter().sum::<usize>();
    for (_, i) in rest.into_iter().take(missing) {
        out[i] += 1;
    }
    out
}

const HORIZON_MIN: Millis = 120_000;
const T_ATTACH: Millis = 1_000;
const T_WARMUP: Millis = 3_000;
const T_HISTORIC: Millis = 5_000;
const T_BACKGROUND: (Millis, Millis) = (2_000, 90_000);
const T_FAULT: Millis = 90_000;
const T_THREAT_MOVE: Millis = 95_000;
const T_INJECT: Millis = 100_000;
const T_WRONG_ZONE: Millis = 105_000;
const T_ATTACK: Millis = 110_000;
const USAGE_MS: (Millis, Millis) = (5_000, 20_000);
/// Window for ordinary work requests.
const T_WORK: (Millis, Millis) = (2_000, 115_000);

const MISMATCH_ROLES: [&str; 4] = ["R1", "R10", "R11", "R12"];
const SUPERVISOR_ROLE: &str = "SUP";
const OBJECTS: [&str; 6] = ["F1", "F2", "F3", "F4", "F5", "F6"];
const ATTACK_OBJECTS: [&str; 3] = ["F1", "F3", "F5"];
const ATTACK_FUNCTIONS: [Function; 3] = [Function::Email, Function::Print, Function::Copy];
const TOOLS: [&str; 4] = ["os-fingerprint:kali", "tool:nmap", "tool:metasploit", "tool:vuln-scanner"];
const MALWARE: [&str; 3] = ["malware-sig:emotet", "malware-sig:mirai", "malware-sig:trickbot"];
const SERVICE_PORTS: [u16; 6] = [22, 53, 80, 443, 445, 8080];
const EXTERNAL: [[u8; 4]; 3] = [[93, 184, 216, 34], [151, 101, 1, 69], [140, 82, 112, 3]];

fn requester_devices<'a>(topology: &'a Topology, zones: &[ZoneId]) -> Vec<&'a DeviceId> {
    topology.zones().iter().filter(|(_, z)| zones.contains(z)).map(|(d, _)| d).collect()
}

fn user_ip(k: usize) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(10, 0, (k / 200 + 1) as u8, (k % 200 + 1) as u8))
}

const PROVIDER_IP: IpAddr = IpAddr::V4(Ipv4Addr::new(10, 0, 100, 1));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Threat {
    PortScan,
    Malware,
    Capability,
    Restricted,
    Rate,
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    topology: &'a Topology,
    users: Vec<UserSpec>,
    steps: Vec<Step>,
    ports: BTreeMap<DeviceId, u32>,
    located: BTreeMap<usize, DeviceId>,
    flows: usize,
}

impl Builder<'_> {
    fn port(&mut self, fd: &DeviceId) -> u32 {
        let ports = self.topology.device(fd).map_or(1, |d| d.ports);
        let next = self.ports.entry(fd.clone()).or_insert(0);
        let port = *next % ports;
        *next += 1;
        port
    }

    fn attach(&mut self, time: Millis, user: usize, fd: &DeviceId) {
        let medium = self.topology.device(fd).expect("device exists").medium;
        let port_id = self.port(fd);
        self.located.insert(user, fd.clone());
        self.steps.push(Step::Attach { time, user: self.users[user].user.clone(), fd_id: fd.clone(), port_id, medium });
    }

    fn flow(&mut self, time: Millis, user: usize, dst_ip: IpAddr, dst_port: u16, packets: u64) -> FlowEvent {
        self.flows += 1;
        let bytes = packets * self.rng.random_range(60..1200);
        FlowEvent {
            time,
            flow_id: FlowId::from(format!("f{}", self.flows)),
            src_ip: self.users[user].ip,
            dst_ip,
            dst_port,
            user_id: self.users[user].user.clone(),
            bytes,
            packets,
            annotations: Default::default(),
            dst_domain: None,
        }
    }

    fn push_flow(&mut self, event: FlowEvent, injection: Option<Injection>) {
        self.steps.push(Step::Flow { event, injection });
    }

    /// A request whose session is used for a while and then closed.
    fn request(&mut self, time: Millis, user: usize, id: String, object: &str) {
        let used = self.rng.random_range(USAGE_MS.0..USAGE_MS.1);
        self.steps.push(Step::Close { time: (time + used).min(HORIZON_MIN), request_id: id.clone() });
        self.open_request(time, user, id, object);
    }

    fn open_request(&mut self, time: Millis, user: usize, id: String, object: &str) {
        self.steps.push(Step::Request {
            time,
            request_id: id,
            user: self.users[user].user.clone(),
            object: ObjectId::from(object),
        });
    }

    fn benign_flows(&mut self, user: usize) {
        let count = self.rng.random_range(1..=3);
        for _ in 0..count {
            let time = self.rng.random_range(T_BACKGROUND.0..T_BACKGROUND.1);
            let dst = match self.rng.random_range(0..3) {
                0 => PROVIDER_IP,
                1 => {
                    let other = self.rng.random_range(0..self.users.len());
                    self.users[other].ip
                }
                _ => IpAddr::from(*EXTERNAL.choose(self.rng).expect("non-empty")),
            };
            if dst == self.users[user].ip {
                continue;
            }
            let port = *SERVICE_PORTS.choose(self.rng).expect("non-empty");
            let packets = self.rng.random_range(5..200);
            let event = self.flow(time, user, dst, port, packets);
            self.push_flow(event, None);
        }
    }

    fn threat(&mut self, time: Millis, user: usize, threat: Threat, injection: Injection) {
        let target = self.users[(user + 1) % self.users.len()].ip;
        match threat {
            Threat::PortScan => {
                let base = self.rng.random_range(1000..30000);
                for i in 0..25u16 {
                    let event = self.flow(time + Millis::from(i) * 100, user, target, base + i, 1);
                    self.push_flow(event, Some(injection));
                }
            }
            Threat::Malware | Threat::Capability => {
                let tag = if threat == Threat::Malware { MALWARE.choose(self.rng) } else { TOOLS.choose(self.rng) };
                let mut event = self.flow(time, user, target, 445, 12);
                event.annotations.insert(tag.expect("non-empty").to_string());
                self.push_flow(event, Some(injection));
            }
            Threat::Restricted => {
                let mut event = self.flow(time, user, IpAddr::from([203, 0, 113, 66]), 443, 40);
                event.dst_domain = Some("exfil.example".into());
                self.push_flow(event, Some(injection));
            }
            Threat::Rate => {
                let event = self.flow(time, user, target, 80, 5_000);
                self.push_flow(event, Some(injection));
            }
        }
    }
}

fn sample_users(rng: &mut ChaCha8Rng, config: &GeneratorConfig) -> usize {
    let normal = Normal::new(config.users_mean, config.users_sd.max(f64::MIN_POSITIVE)).expect("valid normal");
    let x = normal.sample(rng).round();
    (x.max(config.users_min as f64) as usize).clamp(config.users_min, config.users_max)
}

fn one_scenario(
    id: u32,
    category: Category,
    map: u8,
    topology: &Topology,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> ScenarioSpec {
    let n = sample_users(rng, config);
    let users: Vec<UserSpec> = (0..n)
        .map(|k| {
            let role = if k == 0 {
                if rng.random_bool(0.05) {
                    Role::from(*MISMATCH_ROLES.choose(rng).expect("non-empty"))
                } else {
                    Role::from(format!("R{}", rng.random_range(2..=9)))
                }
            } else if rng.random_bool(0.08) {
                Role::from(SUPERVISOR_ROLE)
            } else {
                Role::from(format!("R{}", rng.random_range(1..=12)))
            };
            UserSpec { user: UserId::from(format!("U{k}")), role, ip: user_ip(k) }
        })
        .collect();

    let mut b =
        Builder { rng, topology, users, steps: Vec::new(), ports: BTreeMap::new(), located: BTreeMap::new(), flows: 0 };
    b.ports.insert(config.provider_fd.clone(), 1);

    let home_devices = requester_devices(topology, &config.requester_zones);
    let home = (*home_devices.choose(b.rng).expect("validated")).clone();
    let edges: Vec<DeviceId> =
        topology.devices().filter(|d| d.kind == DeviceKind::Edge).map(|d| d.id.clone()).collect();
    b.attach(T_ATTACH, 0, &home);
    for k in 1..n {
        let fd = edges.choose(b.rng).expect("edge devices exist").clone();
        b.attach(T_ATTACH, k, &fd);
    }

    let (own, near, path) = match category {
        Category::OwnDevice => (true, false, false),
        Category::Proximity => (false, true, false),
        Category::CompromisedPath => (false, false, true),
        Category::Combined => match b.rng.random_range(0..4) {
            0 => (true, true, false),
            1 => (true, false, true),
            2 => (false, true, true),
            _ => (true, true, true),
        },
    };

    let object = *OBJECTS.choose(b.rng).expect("non-empty");
    b.request(T_WARMUP, 0, format!("s{id}-r0"), object);
    if own && b.rng.random_bool(0.5) {
        let threat = if b.rng.random_bool(0.5) { Threat::PortScan } else { Threat::Malware };
        b.threat(T_HISTORIC, 0, threat, Injection::Historic);
    }
    for k in 0..n {
        b.benign_flows(k);
    }
    for i in 1..=config.requester_requests {
        let time = b.rng.random_range(T_WORK.0..T_WORK.1);
        let object = *OBJECTS.choose(b.rng).expect("non-empty");
        b.request(time, 0, format!("s{id}-r{i}"), object);
    }

    if path {
        let provider = &config.provider_fd;
        let route = topology.shortest_path(&home, provider, |_| true).expect("maps are connected");
        let candidates: Vec<&DeviceId> = route.iter().filter(|d| *d != provider).collect();
        let fd = (*candidates.choose(b.rng).expect("path has a non-provider device")).clone();
        let behavior = match b.rng.random_range(0..3) {
            0 => CompromisedBehavior::delay(b.rng.random_range(20..200)),
            1 => CompromisedBehavior::drop(),
            _ => CompromisedBehavior::misroute(),
        };
        b.steps.push(Step::Fault { time: T_FAULT, fd_id: fd, behavior: Some(behavior) });
    }
    let threats = [Threat::PortScan, Threat::Malware, Threat::Capability, Threat::Restricted, Threat::Rate];
    if near {
        let attacker = b.rng.random_range(1..n);
        b.attach(T_THREAT_MOVE, attacker, &home);
        let threat = *threats.choose(b.rng).expect("non-empty");
        b.threat(T_INJECT, attacker, threat, Injection::Proximity);
    }
    if own {
        let threat = *threats.choose(b.rng).expect("non-empty");
        b.threat(T_INJECT, 0, threat, Injection::Own);
    }
    if b.rng.random_bool(0.12) {
        let medium: Medium = topology.device(&home).expect("home exists").medium;
        let away: Vec<DeviceId> = topology
            .devices()
            .filter(|d| d.kind == DeviceKind::Edge && d.medium == medium && d.id != config.provider_fd)
            .filter(|d| topology.zone_of(&d.id).is_some_and(|z| !config.requester_zones.contains(z)))
            .map(|d| d.id.clone())
            .collect();
        if let Some(fd) = away.choose(b.rng).cloned() {
            b.attach(T_WRONG_ZONE, 0, &fd);
        }
    }

    let home_zone = topology.zone_of(&home).cloned();
    let nearby: Vec<usize> =
        (1..n).filter(|k| b.located.get(k).and_then(|fd| topology.zone_of(fd)).cloned() == home_zone).collect();
    for i in 0..config.bystander_requests {
        let Some(&user) = nearby.choose(b.rng) else { break };
        let time = b.rng.random_range(T_WORK.0..T_WORK.1);
        let object = *OBJECTS.choose(b.rng).expect("non-empty");
        b.request(time, user, format!("s{id}-b{i}"), object);
    }

    let object = *ATTACK_OBJECTS.choose(b.rng).expect("non-empty");
    let function = *ATTACK_FUNCTIONS.choose(b.rng).expect("non-empty");
    let attack_id = format!("s{id}-attack");
    b.open_request(T_ATTACK, 0, attack_id.clone(), object);

    let Builder { users, mut steps, .. } = b;
    steps.sort_by_key(Step::time);
    ScenarioSpec {
        id,
        category,
        map,
        provider: ProviderSpec { ip: PROVIDER_IP, fd_id: config.provider_fd.clone(), port_id: 0 },
        requester: users[0].user.clone(),
        users,
        steps,
        attack: Some(AttackGoal { request_id: attack_id, function, label: Label::from("top-secret") }),
        horizon: config.horizon,
        expected: Expectation::Protected,
    }
}

/// Generates `config.scenarios` scenarios with exact category quotas.
/// Scenario `i` uses map `config.maps[i % len]`.
pub fn generate_scenarios(
    config: &GeneratorConfig,
    maps: &BTreeMap<u8, Topology>,
    seed: u64,
) -> Result<Vec<ScenarioSpec>, HarnessError> {
    config.validate(maps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = quotas(config.scenarios, config.category_weights);
    let mut categories: Vec<Category> =
        Category::ALL.iter().zip(counts).flat_map(|(c, k)| std::iter::repeat_n(*c, k)).collect();
    categories.shuffle(&mut rng);
    Ok(categories
        .into_iter()
        .enumerate()
        .map(|(i, category)| {
            let map = config.maps[i % config.maps.len()];
            one_scenario(i as u32, category, map, &maps[&map], config, &mut rng)
        })
        .collect())
}
