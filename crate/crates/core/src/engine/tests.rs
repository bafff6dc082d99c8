use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::context::{ContextRepository, Nca, NcaDetail};
use crate::fbac::{AccessControlTensor, Catalog, Function, FunctionSet, SegmentSelector};
use crate::fixtures;
use crate::netsim::{Attachment, FlowDescriptor, NetsimError, NetworkRule, NetworkState};
use crate::policy::{Condition, Effect, PolicyDocument, PolicyRule, RuleKind, Target};
use crate::testutil::{self, capability, ip, nca, neighbour, port_scan, report, request, snapshot, NOW};
use crate::types::{DeviceId, Label, Medium, SegmentId, UserId};

fn tensor() -> AccessControlTensor {
    AccessControlTensor::new(Arc::new(fixtures::catalog()))
}

fn fs(functions: &[Function]) -> FunctionSet {
    functions.iter().copied().collect()
}

fn all_but(functions: &[Function]) -> FunctionSet {
    FunctionSet::universe().difference(fs(functions))
}

fn segments(pairs: &[(&str, FunctionSet)]) -> BTreeMap<SegmentId, FunctionSet> {
    pairs.iter().map(|(s, f)| (SegmentId::from(*s), *f)).collect()
}

fn run(snap: &ContextSnapshot, object: &str, model: AccessModel) -> AccessDecision {
    decide(&request(object), snap, &fixtures::reference_policies(), &tensor(), model).unwrap()
}

const FOUR: [Function; 4] = [Function::Copy, Function::Paste, Function::Email, Function::Print];

#[test]
fn unsupervised_top_secret_loses_email_and_print() {
    let d = run(&snapshot(&["top-secret", "internal"]), "F3", AccessModel::Gargoyle);
    let expected = segments(&[("s1", all_but(&[Function::Email, Function::Print])), ("s2", FunctionSet::universe())]);
    assert_eq!(d.outcome, Outcome::Grant { segments: expected });
    assert_eq!(d.triggering_rules, vec!["CTX-TOPSECRET".into()]);
    assert!(d.outcome.is_limited());
}

#[test]
fn supervised_clean_context_is_full_grant() {
    let mut snap = snapshot(&["top-secret", "internal"]);
    snap.supervisor_present = true;
    let d = run(&snap, "F3", AccessModel::Gargoyle);
    assert!(d.outcome.is_grant() && !d.outcome.is_limited());
    assert!(d.triggering_rules.is_empty());

    snap.role = "R8".into();
    snap.role_index = Some(8);
    let d = run(&snap, "F3", AccessModel::Gargoyle);
    assert_eq!(d.triggering_rules, vec!["ROLE-CONTRACTOR".into()]);
    assert!(d.outcome.is_limited());
}

#[test]
fn role_mismatch_denied_by_every_model() {
    let mut snap = snapshot(&["internal"]);
    snap.role_index = Some(11);
    for model in AccessModel::ALL {
        assert_eq!(run(&snap, "F6", model).outcome.reason(), Some(DenyReason::RoleMismatch), "{model}");
    }
}

#[test]
fn blacklist_only_binds_the_full_model() {
    let mut snap = snapshot(&["internal"]);
    snap.supervisor_present = true;
    snap.blacklisted = true;
    let d = run(&snap, "F6", AccessModel::Gargoyle);
    assert_eq!(d.outcome.reason(), Some(DenyReason::Blacklisted));
    assert!(d.triggering_rules.is_empty());
    assert!(run(&snap, "F6", AccessModel::FbacStatic).outcome.is_grant());
}

#[test]
fn reroute_when_a_safe_path_exists() {
    let mut snap = snapshot(&["internal"]);
    snap.supervisor_present = true;
    snap.path_reports.push(report("C1"));
    snap.safe_path = Some(vec!["R1".into(), "C2".into(), "P4".into()]);
    let d = run(&snap, "F6", AccessModel::Gargoyle);
    assert_eq!(d.outcome, Outcome::Grant { segments: segments(&[("s1", all_but(&FOUR))]) });
    let avoid = BTreeSet::from([DeviceId::from("C1")]);
    assert_eq!(
        d.network_actions,
        vec![RuleAction { rule: "GP2".into(), action: NetworkRule::RerouteAvoiding { devices: avoid } }]
    );

    snap.safe_path = None;
    let d = run(&snap, "F6", AccessModel::Gargoyle);
    assert_eq!(d.outcome.reason(), Some(DenyReason::CompromisedPath));
    assert_eq!(d.network_actions[0].action, NetworkRule::Quarantine { user: "u1".into() });
    // Baselines cannot see the data plane.
    assert!(!run(&snap, "F6", AccessModel::UconLike).outcome.is_limited());
    assert!(run(&snap, "F6", AccessModel::FbacStatic).outcome.is_grant());
}

#[test]
fn nearby_attacker_blacklists_both_and_confines_them() {
    let mut snap = snapshot(&["war-related", "top-secret", "sensitive", "internal"]);
    snap.proximity.push(neighbour("u2", "R5", vec![capability("kali")]));
    let d = run(&snap, "F1", AccessModel::Gargoyle);
    assert_eq!(d.outcome.reason(), Some(DenyReason::CurrentSuspicious));
    let both = BTreeSet::from([UserId::from("u1"), UserId::from("u2")]);
    assert_eq!(d.blacklist, both);
    let confined: BTreeSet<UserId> = d
        .network_actions
        .iter()
        .map(|a| match &a.action {
            NetworkRule::RestrictToZone { user, zone } => {
                assert_eq!(zone.as_str(), "RoomC");
                user.clone()
            }
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    assert_eq!(confined, both);

    for model in [AccessModel::Rbac, AccessModel::UconLike] {
        let d = run(&snap, "F1", model);
        assert!(d.outcome.is_grant() && !d.outcome.is_limited(), "{model}");
        assert!(d.network_actions.is_empty() && d.blacklist.is_empty());
    }
}

#[test]
fn own_port_scan_denies_top_secret_only() {
    let mut snap = snapshot(&["top-secret", "internal"]);
    snap.recent.push(nca("u1", NOW - 100, port_scan()));
    assert_eq!(run(&snap, "F3", AccessModel::Gargoyle).outcome.reason(), Some(DenyReason::CurrentSuspicious));
    let mut snap = snapshot(&["internal"]);
    snap.recent.push(nca("u1", NOW - 100, port_scan()));
    let d = run(&snap, "F6", AccessModel::Gargoyle);
    assert_eq!(d.outcome, Outcome::Grant { segments: segments(&[("s1", all_but(&FOUR))]) });
}

// Reference interpreter: applicable rules in priority order, denies win,
// restrictions subtract per selected segment.
fn naive(doc: &PolicyDocument, object: &str, snap: &ContextSnapshot, catalog: &Catalog) -> Outcome {
    let obj = catalog.get(&object.into()).unwrap();
    let mut rules: Vec<&PolicyRule> = doc.rules.iter().collect();
    rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
    let mut view: BTreeMap<SegmentId, FunctionSet> =
        obj.segments.iter().map(|s| (s.id.clone(), FunctionSet::universe())).collect();
    let mut reasons = Vec::new();
    for rule in rules {
        if !rule.target.matches(&obj.id, &obj.labels()) || !crate::policy::evaluate_condition(&rule.condition, snap) {
            continue;
        }
        match &rule.effect {
            Effect::Deny { reason } => reasons.push(reason.unwrap()),
            Effect::Restrict { functions, segments } => {
                for s in obj.segments.iter().filter(|s| segments.matches(s)) {
                    let f = view.get_mut(&s.id).unwrap();
                    *f = f.difference(*functions);
                }
            }
            _ => unreachable!(),
        }
    }
    match reasons.into_iter().max_by_key(|r| match r {
        DenyReason::RoleMismatch => 0,
        DenyReason::HistoricSuspicious => 1,
        DenyReason::CurrentSuspicious => 2,
        DenyReason::CompromisedPath => 3,
        DenyReason::Blacklisted => 4,
    }) {
        Some(reason) => Outcome::Deny { reason },
        None => Outcome::Grant { segments: view },
    }
}

fn small_condition(i: u8) -> Condition {
    match i % 6 {
        0 => Condition::True,
        1 => Condition::Medium { medium: Medium::Wireless },
        2 => Condition::SupervisorPresent,
        3 => Condition::not(Condition::SupervisorPresent),
        4 => Condition::and([Condition::Medium { medium: Medium::Wireless }, Condition::SupervisorPresent]),
        _ => Condition::False,
    }
}

fn small_rule(i: usize, (cond, target, effect, bits, reason): (u8, u8, u8, u8, u8)) -> PolicyRule {
    let reasons = [
        DenyReason::RoleMismatch,
        DenyReason::HistoricSuspicious,
        DenyReason::CurrentSuspicious,
        DenyReason::CompromisedPath,
    ];
    PolicyRule {
        id: format!("N{i}").into(),
        kind: RuleKind::FbacContext,
        priority: 10 * (i as i64 + 1),
        target: match target % 3 {
            0 => Target::Any,
            1 => Target::Labels(BTreeSet::from([Label::from("top-secret")])),
            _ => Target::Objects(BTreeSet::from(["F1".into()])),
        },
        condition: small_condition(cond),
        effect: match effect % 4 {
            0 => Effect::Deny { reason: Some(reasons[reason as usize % 4]) },
            1 => Effect::Restrict {
                functions: FunctionSet::from_bits(bits & 0x3f).unwrap(),
                segments: SegmentSelector::All,
            },
            2 => Effect::Restrict {
                functions: FunctionSet::from_bits(bits & 0x3f).unwrap(),
                segments: SegmentSelector::Label("top-secret".into()),
            },
            _ => Effect::Restrict {
                functions: FunctionSet::from_bits(bits & 0x3f).unwrap(),
                segments: SegmentSelector::Segment("s1".into()),
            },
        },
    }
}

type RuleSeed = (u8, u8, u8, u8, u8);

fn rule_seed() -> impl Strategy<Value = RuleSeed> {
    (any::<u8>(), any::<u8>(), any::<u8>(), any::<u8>(), any::<u8>())
}

fn small_pack(seeds: &[RuleSeed]) -> PolicyDocument {
    let mut doc = fixtures::reference_policies();
    doc.rules = seeds.iter().enumerate().map(|(i, s)| small_rule(i, *s)).collect();
    doc
}

fn owned_nca(detail: NcaDetail, time: u64, user: &str, ip_last: u8) -> Nca {
    Nca { subject: crate::context::Subject { user: user.into(), ip: ip(ip_last) }, time, source: "t".into(), detail }
}

fn edge_devices(net: &NetworkState) -> Vec<DeviceId> {
    net.topology().zones().keys().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, rng_seed: proptest::test_runner::RngSeed::Fixed(47), ..ProptestConfig::default() })]

    #[test]
    fn decide_matches_reference_interpreter(
        seeds in prop::collection::vec(rule_seed(), 3),
        wireless in any::<bool>(),
        supervised in any::<bool>(),
        object in prop::sample::select(vec!["F1", "F3", "F5", "F6"]),
    ) {
        let doc = small_pack(&seeds);
        let catalog = fixtures::catalog();
        let obj = catalog.get(&object.into()).unwrap();
        let mut snap = snapshot(&[]);
        snap.object_labels = obj.labels();
        snap.medium = if wireless { Medium::Wireless } else { Medium::Wired };
        snap.supervisor_present = supervised;
        let got = decide(&request(object), &snap, &doc, &tensor(), AccessModel::Gargoyle).unwrap();
        prop_assert_eq!(&got.outcome, &naive(&doc, object, &snap, &catalog));

        // Binary models never hand out a partial view.
        for model in [AccessModel::Rbac, AccessModel::UconLike] {
            let d = decide(&request(object), &snap, &doc, &tensor(), model).unwrap();
            prop_assert!(!d.outcome.is_limited());
        }
        // Context-blind models decide the same on any context.
        let mut other = snap.clone();
        other.medium = Medium::Wired;
        other.supervisor_present = !supervised;
        other.recent.push(nca("u1", NOW, port_scan()));
        for model in [AccessModel::Rbac, AccessModel::FbacStatic] {
            let a = decide(&request(object), &snap, &doc, &tensor(), model).unwrap();
            let b = decide(&request(object), &other, &doc, &tensor(), model).unwrap();
            prop_assert_eq!(a.outcome, b.outcome);
        }
    }

    /// Sessions only lose functions, and a revoked session stays revoked.
    #[test]
    fn session_views_shrink_monotonically(
        steps in prop::collection::vec(prop::option::weighted(0.85, prop::collection::vec(0u8..64, 2)), 1..12),
    ) {
        let base = tensor();
        let req = request("F2");
        let grant = AccessDecision {
            request_id: req.request_id.clone(),
            outcome: Outcome::Grant { segments: base.render_view(&req.user_id, &req.object_id).unwrap() },
            network_actions: Vec::new(),
            blacklist: BTreeSet::new(),
            triggering_rules: Vec::new(),
        };
        let mut session = open_session(1, &grant, &req, &base).unwrap();
        let mut prev = session.view();
        for step in steps {
            let was = session.status;
            let outcome = match step {
                Some(bits) => Outcome::Grant {
                    segments: segments(&[
                        ("s1", FunctionSet::from_bits(bits[0]).unwrap()),
                        ("s2", FunctionSet::from_bits(bits[1]).unwrap()),
                    ]),
                },
                None => Outcome::Deny { reason: DenyReason::CurrentSuspicious },
            };
            let fresh = AccessDecision { outcome, ..grant.clone() };
            let t = reevaluate(&mut session, &fresh).unwrap();
            let now = session.view();
            for (s, f) in &now {
                prop_assert!(f.is_subset(prev[s]));
            }
            match t {
                Transition::Unchanged => prop_assert_eq!(&now, &prev),
                Transition::Downgraded => prop_assert_eq!(session.status, SessionStatus::Downgraded),
                Transition::Revoked => prop_assert!(now.values().all(|f| f.is_empty())),
            }
            if was == SessionStatus::Revoked {
                prop_assert_eq!(t, Transition::Unchanged);
                prop_assert_eq!(session.status, SessionStatus::Revoked);
            }
            if t != Transition::Unchanged {
                prop_assert_ne!(session.status, SessionStatus::Active);
            }
            prev = now;
        }
    }

    /// The snapshot agrees with direct scans of the repository and the
    /// location table.
    #[test]
    fn snapshot_matches_direct_queries(
        placements in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 2..8),
        ncas in prop::collection::vec((0usize..8, 0u64..200_000, 0u8..3), 0..30),
        reports in prop::collection::vec((any::<prop::sample::Index>(), 0u64..200_000), 0..4),
        now in 0u64..200_000,
        window in 1u64..90_000,
    ) {
        let mut net = NetworkState::new(fixtures::map(1));
        let edges = edge_devices(&net);
        net.attach_device(0, Attachment { device_ip: ip(200), user_id: "provider".into(), fd_id: "P4".into(), port_id: 15, medium: Medium::Wired }).unwrap();
        let mut roles = BTreeMap::new();
        for (k, (slot, sup)) in placements.iter().enumerate() {
            let fd = slot.get(&edges).clone();
            let medium = net.topology().device(&fd).unwrap().medium;
            let user = UserId::from(format!("u{}", k + 1));
            net.attach_device(0, Attachment { device_ip: ip(k as u8 + 1), user_id: user.clone(), fd_id: fd, port_id: k as u32, medium }).unwrap();
            roles.insert(user, if *sup { "SUP".into() } else { "R5".into() });
        }
        roles.insert("u1".into(), "R5".into());
        let mut repo = ContextRepository::new();
        for (who, time, kind) in &ncas {
            let who = who % placements.len();
            let detail = [port_scan(), capability("kali"), testutil::rate()][*kind as usize].clone();
            repo.append(owned_nca(detail, *time, &format!("u{}", who + 1), who as u8 + 1));
        }
        for (slot, time) in &reports {
            let fd = slot.get(&net.topology().devices().map(|d| d.id.clone()).collect::<Vec<_>>()).clone();
            let mut r = report(fd.as_str());
            r.time = *time;
            repo.append_report(r);
        }
        let mut policies = fixtures::reference_policies();
        policies.defaults.recent_window_ms = window;
        let catalog = fixtures::catalog();
        let blacklist = BTreeSet::new();
        let provider = DeviceId::from("P4");
        let env = SnapshotEnv { policies: &policies, catalog: &catalog, roles: &roles, blacklist: &blacklist, provider: Some(&provider), recent_window_ms: window };
        let req = AccessRequest { time: now, ..request("F1") };
        let snap = snapshot_context(&repo, &net, &req, &env).unwrap();

        let mine = |n: &&Nca| n.subject.user.as_str() == "u1";
        let lo = now.saturating_sub(window);
        let mut recent: Vec<Nca> = repo.log().iter().filter(mine).filter(|n| n.time >= lo && n.time <= now).cloned().collect();
        recent.sort_by_key(|n| n.time);
        prop_assert_eq!(&snap.recent, &recent);
        let mut historical: Vec<Nca> = repo.log().iter().filter(mine).filter(|n| n.time + window < now).cloned().collect();
        historical.sort_by_key(|n| n.time);
        prop_assert_eq!(&snap.historical, &historical);

        let home = net.locations().get(&ip(1)).unwrap().clone();
        let near: BTreeSet<UserId> = net
            .locations()
            .iter()
            .filter(|(_, e)| e.zone == home.zone && e.user_id.as_str() != "u1")
            .map(|(_, e)| e.user_id.clone())
            .collect();
        let got: BTreeSet<UserId> = snap.proximity.iter().map(|p| p.subject.clone()).collect();
        prop_assert_eq!(&got, &near);
        let sup = near.iter().any(|u| roles.get(u).is_some_and(|r| r.as_str() == "SUP"));
        prop_assert_eq!(snap.supervisor_present, sup);

        let path = net.natural_path(&home.fd_id, &provider).unwrap();
        prop_assert_eq!(&snap.path, &path);
        let flagged: BTreeSet<DeviceId> = repo.reports().iter().filter(|r| r.time <= now && path.contains(&r.fd_id)).map(|r| r.fd_id.clone()).collect();
        prop_assert_eq!(snap.flagged_on_path(), flagged.clone());
        if let Some(safe) = &snap.safe_path {
            prop_assert!(safe.iter().all(|d| !flagged.contains(d)));
        }
    }
}

#[test]
fn session_on_deny_is_an_error() {
    let req = request("F2");
    let deny = AccessDecision {
        request_id: req.request_id.clone(),
        outcome: Outcome::Deny { reason: DenyReason::RoleMismatch },
        network_actions: Vec::new(),
        blacklist: BTreeSet::new(),
        triggering_rules: Vec::new(),
    };
    assert!(matches!(open_session(1, &deny, &req, &tensor()), Err(EngineError::SessionOnDeny(_))));
}

fn provider_ip() -> IpAddr {
    "10.0.100.1".parse().unwrap()
}

fn engine(model: AccessModel) -> Gargoyle {
    let mut g = Gargoyle::new(
        fixtures::map(1),
        Arc::new(fixtures::reference_policies()),
        Arc::new(fixtures::catalog()),
        EngineConfig::new(provider_ip()),
        model,
    );
    g.register_user("provider".into(), "R1".into()).unwrap();
    g.register_user("u1".into(), "R5".into()).unwrap();
    g.attach(
        0,
        Attachment {
            device_ip: provider_ip(),
            user_id: "provider".into(),
            fd_id: "P4".into(),
            port_id: 0,
            medium: Medium::Wired,
        },
    )
    .unwrap();
    g.attach(
        10,
        Attachment { device_ip: ip(1), user_id: "u1".into(), fd_id: "P2".into(), port_id: 0, medium: Medium::Wired },
    )
    .unwrap();
    g
}

fn scan_flows(start: u64) -> Vec<crate::context::FlowEvent> {
    (0..25)
        .map(|i| crate::context::FlowEvent {
            time: start + i,
            flow_id: format!("scan-{i}").into(),
            src_ip: ip(1),
            dst_ip: provider_ip(),
            dst_port: 1000 + i as u16,
            user_id: "u1".into(),
            bytes: 64,
            packets: 1,
            annotations: BTreeSet::new(),
            dst_domain: None,
        })
        .collect()
}

#[test]
fn closed_sessions_are_not_reevaluated() {
    let mut g = engine(AccessModel::Gargoyle);
    let req = AccessRequest { time: 1000, ..request("F3") };
    assert!(g.request(&req).unwrap().outcome.is_grant());
    assert!(g.close_session(2000, &req.request_id));
    assert!(!g.close_session(2001, &req.request_id));
    assert_eq!(g.sessions()[0].status, SessionStatus::Closed);
    for flow in scan_flows(3000) {
        g.observe_flow(&flow).unwrap();
    }
    assert!(g.trace().iter().all(|r| !matches!(r.event, TraceEvent::Reevaluation { .. })));
    assert!(matches!(g.trace()[1].event, TraceEvent::SessionClosed { session: 1, .. }));
}

#[test]
fn live_session_is_revoked_by_own_scan() {
    let mut g = engine(AccessModel::Gargoyle);
    let req = AccessRequest { time: 1000, ..request("F3") };
    g.request(&req).unwrap();
    for flow in scan_flows(3000) {
        g.observe_flow(&flow).unwrap();
    }
    assert_eq!(g.sessions()[0].status, SessionStatus::Revoked);
    assert!(g.sessions()[0].view().values().all(|f| f.is_empty()));
    // Static models keep the session whatever happens.
    let mut s = engine(AccessModel::FbacStatic);
    s.request(&req).unwrap();
    for flow in scan_flows(3000) {
        s.observe_flow(&flow).unwrap();
    }
    assert_eq!(s.sessions()[0].status, SessionStatus::Active);
}

#[test]
fn quarantine_makes_requester_unreachable() {
    let mut net = NetworkState::new(fixtures::map(1));
    net.attach_device(
        0,
        Attachment {
            device_ip: provider_ip(),
            user_id: "provider".into(),
            fd_id: "P4".into(),
            port_id: 0,
            medium: Medium::Wired,
        },
    )
    .unwrap();
    net.attach_device(
        0,
        Attachment { device_ip: ip(1), user_id: "u1".into(), fd_id: "P2".into(), port_id: 0, medium: Medium::Wired },
    )
    .unwrap();
    let flow = FlowDescriptor { flow_id: "f".into(), src_ip: ip(1), dst_ip: provider_ip(), start: 5 };
    assert!(net.planned_path(&flow).is_ok());
    let req = request("F6");
    let decision = AccessDecision {
        request_id: req.request_id.clone(),
        outcome: Outcome::Deny { reason: DenyReason::CompromisedPath },
        network_actions: vec![RuleAction { rule: "GP2".into(), action: NetworkRule::Quarantine { user: "u1".into() } }],
        blacklist: BTreeSet::new(),
        triggering_rules: vec!["GP2".into()],
    };
    let host = enforce(&decision, &req, &tensor(), &mut net).unwrap();
    assert!(host.render_view(&req.user_id, &req.object_id).unwrap().values().all(|f| f.is_empty()));
    assert!(matches!(net.planned_path(&flow), Err(NetsimError::Unreachable { .. })));
}

#[test]
fn request_errors() {
    let mut g = engine(AccessModel::Gargoyle);
    let stranger = AccessRequest { user_id: "ghost".into(), ..request("F1") };
    assert!(matches!(g.request(&stranger), Err(EngineError::UnknownUser(_))));
    assert!(matches!(g.register_user("x".into(), "R42".into()), Err(EngineError::UnknownRole(_))));
    let off = AccessRequest { device_ip: ip(77), ..request("F1") };
    assert!(matches!(g.request(&off), Err(EngineError::NotAttached(_))));
}

#[test]
fn replay_is_deterministic_and_trace_round_trips() {
    let ctx = crate::harness::HarnessContext::reference();
    for spec in [fixtures::scenario_i(), fixtures::scenario_ii_wired(), fixtures::scenario_ii_wireless()] {
        let a = crate::harness::run_model(&spec, &ctx, AccessModel::Gargoyle).unwrap().engine;
        let b = crate::harness::run_model(&spec, &ctx, AccessModel::Gargoyle).unwrap().engine;
        assert_eq!(a.trace(), b.trace());
        for (i, line) in a.trace_jsonl().lines().enumerate() {
            let back: TraceRecord = serde_json::from_str(line).unwrap();
            assert_eq!(back, a.trace()[i]);
            assert_eq!(back.seq, i as u64);
        }
        assert!(a.trace().windows(2).all(|w| w[0].time <= w[1].time));
    }
}

#[derive(Debug, Clone)]
struct Ctx {
    role_index: u32,
    zone: &'static str,
    wireless: bool,
    supervised: bool,
    recent: Vec<u8>,
    historical: Vec<u8>,
    near: Vec<u8>,
    reported: bool,
    safe: bool,
    blacklisted: bool,
    object: &'static str,
}

fn threat(k: u8) -> NcaDetail {
    match k % 5 {
        0 => port_scan(),
        1 => capability("kali"),
        2 => testutil::rate(),
        3 => NcaDetail::SuspiciousActivity { activity: crate::context::Activity::Malware { signature: "x".into() } },
        _ => NcaDetail::SuspiciousActivity {
            activity: crate::context::Activity::RestrictedAccess { target: "exfil.example".into() },
        },
    }
}

fn ctx_strategy() -> impl Strategy<Value = Ctx> {
    (
        (1u32..13, prop::sample::select(vec!["RoomA", "CommonRoom", "RoomC", "Lab"]), any::<bool>(), any::<bool>()),
        (prop::collection::vec(0u8..5, 0..2), prop::collection::vec(0u8..5, 0..2), prop::collection::vec(0u8..5, 0..2)),
        (prop::bool::weighted(0.2), any::<bool>(), prop::bool::weighted(0.1)),
        prop::sample::select(vec!["F1", "F2", "F3", "F4", "F5", "F6"]),
    )
        .prop_map(
            |(
                (role_index, zone, wireless, supervised),
                (recent, historical, near),
                (reported, safe, blacklisted),
                object,
            )| Ctx {
                role_index,
                zone,
                wireless,
                supervised,
                recent,
                historical,
                near,
                reported,
                safe,
                blacklisted,
                object,
            },
        )
}

fn build(c: &Ctx) -> ContextSnapshot {
    let catalog = fixtures::catalog();
    let mut snap = snapshot(&[]);
    snap.object_labels = catalog.get(&c.object.into()).unwrap().labels();
    snap.role = format!("R{}", c.role_index).into();
    snap.role_index = Some(c.role_index);
    snap.zone = c.zone.into();
    snap.medium = if c.wireless { Medium::Wireless } else { Medium::Wired };
    snap.supervisor_present = c.supervised;
    snap.recent = c.recent.iter().map(|k| nca("u1", NOW - 50, threat(*k))).collect();
    snap.historical = c.historical.iter().map(|k| nca("u1", 100, threat(*k))).collect();
    if !c.near.is_empty() {
        snap.proximity.push(neighbour("u2", "R5", c.near.iter().map(|k| threat(*k)).collect()));
    }
    if c.reported {
        snap.path_reports.push(report("C1"));
        snap.safe_path = c.safe.then(|| vec!["R1".into(), "C2".into(), "P4".into()]);
    }
    snap.blacklisted = c.blacklisted;
    snap
}

fn within(narrow: &Outcome, wide: &Outcome) -> bool {
    match (narrow, wide) {
        (Outcome::Deny { .. }, _) => true,
        (Outcome::Grant { .. }, Outcome::Deny { .. }) => false,
        (Outcome::Grant { segments: a }, Outcome::Grant { segments: b }) => a.iter().all(|(s, f)| f.is_subset(b[s])),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, rng_seed: proptest::test_runner::RngSeed::Fixed(53), ..ProptestConfig::default() })]

    #[test]
    fn reference_pack_decision_invariants(c in ctx_strategy(), extra in 0u8..5, model in prop::sample::select(AccessModel::ALL.to_vec())) {
        let doc = fixtures::reference_policies();
        let snap = build(&c);
        let req = request(c.object);
        let d = decide(&req, &snap, &doc, &tensor(), model).unwrap();
        prop_assert_eq!(&d, &decide(&req, &snap, &doc, &tensor(), model).unwrap());

        match &d.outcome {
            Outcome::Grant { segments } => {
                let object = fixtures::catalog().get(&c.object.into()).unwrap().clone();
                let ids: Vec<&SegmentId> = object.segments.iter().map(|s| &s.id).collect();
                prop_assert_eq!(segments.keys().collect::<Vec<_>>(), ids);
            }
            Outcome::Deny { .. } => {}
        }
        for action in &d.network_actions {
            prop_assert!(d.triggering_rules.contains(&action.rule));
        }
        if model == AccessModel::Gargoyle {
            let denying = crate::policy::applicable_rules(&doc, &req, &snap)
                .iter()
                .any(|r| matches!(r.effect, Effect::Deny { .. } | Effect::Blacklist { .. }));
            if denying || snap.blacklisted {
                prop_assert!(!d.outcome.is_grant());
            }
        }

        // More suspicious context never widens what is granted.
        for (recent, detail) in [(true, threat(extra)), (false, threat(extra)), (true, port_scan()), (false, malware_detail())] {
            let mut worse = snap.clone();
            if recent {
                worse.recent.push(nca("u1", NOW - 5, detail));
            } else {
                worse.historical.push(nca("u1", 50, detail));
            }
            let d2 = decide(&req, &worse, &doc, &tensor(), model).unwrap();
            prop_assert!(within(&d2.outcome, &d.outcome), "{:?} widened to {:?}", d.outcome, d2.outcome);
        }
    }

    /// Network enforcement does not depend on the host layer.
    #[test]
    fn network_effect_independent_of_host_layer(c in ctx_strategy()) {
        let doc = fixtures::reference_policies();
        let snap = build(&c);
        let req = AccessRequest { device_ip: ip(1), ..request(c.object) };
        let d = decide(&req, &snap, &doc, &tensor(), AccessModel::Gargoyle).unwrap();
        let mut a = NetworkState::new(fixtures::map(1));
        for (who, last, fd) in [("provider", 200, "P4"), ("u1", 1, "P2"), ("u2", 2, "P2")] {
            a.attach_device(0, Attachment { device_ip: ip(last), user_id: who.into(), fd_id: fd.into(), port_id: last as u32 % 16, medium: Medium::Wired }).unwrap();
        }
        let mut b = a.clone();
        enforce(&d, &req, &tensor(), &mut a).unwrap();
        for action in &d.network_actions {
            b.apply_network_rule(action.action.clone()).unwrap();
        }
        prop_assert_eq!(a.rules(), b.rules());
        for src in [1, 2] {
            let flow = FlowDescriptor { flow_id: "f".into(), src_ip: ip(src), dst_ip: ip(200), start: 1 };
            prop_assert_eq!(a.planned_path(&flow).ok(), b.planned_path(&flow).ok());
        }
    }
}

fn malware_detail() -> NcaDetail {
    threat(3)
}
