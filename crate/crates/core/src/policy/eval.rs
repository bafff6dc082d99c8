use std::collections::BTreeSet;

use super::{Condition, DenyReason, NcaWindow, PolicyDocument, PolicyRule, RuleKind};
use crate::context::{Nca, NcaKind};
use crate::engine::{AccessRequest, ContextSnapshot};
use crate::types::UserId;

/// What part of the context an atom reads. Baseline models only see some
/// classes; the rest are masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomClass {
    Constant,
    Role,
    Zone,
    Medium,
    Label,
    Nca,
    Proximity,
    DataPlane,
    Supervisor,
}

impl AtomClass {
    pub fn of(cond: &Condition) -> Option<AtomClass> {
        Some(match cond {
            Condition::True | Condition::False => AtomClass::Constant,
            Condition::RoleIn { .. } | Condition::RoleIndex { .. } => AtomClass::Role,
            Condition::ZoneIn { .. } => AtomClass::Zone,
            Condition::Medium { .. } => AtomClass::Medium,
            Condition::LabelIn { .. } => AtomClass::Label,
            Condition::Nca { .. } => AtomClass::Nca,
            Condition::ProximityNca { .. } => AtomClass::Proximity,
            Condition::PathCompromised => AtomClass::DataPlane,
            Condition::SupervisorPresent => AtomClass::Supervisor,
            Condition::And { .. } | Condition::Or { .. } | Condition::Not { .. } => return None,
        })
    }
}

fn nca_matches(nca: &Nca, kind: NcaKind, labels: &Option<BTreeSet<String>>) -> bool {
    nca.kind() == kind && labels.as_ref().is_none_or(|l| l.contains(&nca.label()))
}

fn window_ncas<'a>(snap: &'a ContextSnapshot, window: NcaWindow) -> Box<dyn Iterator<Item = &'a Nca> + 'a> {
    match window {
        NcaWindow::Recent => Box::new(snap.recent.iter()),
        NcaWindow::Historical => Box::new(snap.historical.iter()),
        NcaWindow::Any => Box::new(snap.recent.iter().chain(snap.historical.iter())),
    }
}

fn atom(cond: &Condition, snap: &ContextSnapshot) -> bool {
    match cond {
        Condition::True => true,
        Condition::False => false,
        Condition::RoleIn { roles } => roles.contains(&snap.role),
        Condition::RoleIndex { min, max } => snap.role_index.is_some_and(|i| i >= *min && i <= *max),
        Condition::ZoneIn { zones } => zones.contains(&snap.zone),
        Condition::Medium { medium } => snap.medium == *medium,
        Condition::LabelIn { labels } => !labels.is_disjoint(&snap.object_labels),
        Condition::Nca { window, kind, labels } => window_ncas(snap, *window).any(|n| nca_matches(n, *kind, labels)),
        Condition::ProximityNca { kind, labels } => {
            snap.proximity.iter().any(|p| p.recent.iter().any(|n| nca_matches(n, *kind, labels)))
        }
        Condition::PathCompromised => !snap.path_reports.is_empty(),
        Condition::SupervisorPresent => snap.supervisor_present,
        Condition::And { .. } | Condition::Or { .. } | Condition::Not { .. } => unreachable!("not an atom"),
    }
}

fn eval(cond: &Condition, snap: &ContextSnapshot, visible: &dyn Fn(AtomClass) -> bool, positive: bool) -> bool {
    match cond {
        Condition::And { args } => args.iter().all(|a| eval(a, snap, visible, positive)),
        Condition::Or { args } => args.iter().any(|a| eval(a, snap, visible, positive)),
        Condition::Not { arg } => !eval(arg, snap, visible, !positive),
        leaf => {
            let class = AtomClass::of(leaf).expect("leaf");
            if visible(class) {
                atom(leaf, snap)
            } else {
                // A hidden atom takes whichever value cannot help the rule fire.
                !positive
            }
        }
    }
}

/// Truth value of `cond` on `snap`.
pub fn evaluate_condition(cond: &Condition, snap: &ContextSnapshot) -> bool {
    eval(cond, snap, &|_| true, true)
}

/// Evaluation for a model that only sees the atom classes accepted by
/// `visible`. Hidden atoms are resolved against the rule firing, so a masked
/// rule fires only when the visible context alone forces it.
pub fn evaluate_masked(cond: &Condition, snap: &ContextSnapshot, visible: &dyn Fn(AtomClass) -> bool) -> bool {
    eval(cond, snap, visible, true)
}

fn rank(reason: DenyReason) -> u8 {
    match reason {
        DenyReason::RoleMismatch => 0,
        DenyReason::HistoricSuspicious => 1,
        DenyReason::CurrentSuspicious => 2,
        DenyReason::CompromisedPath => 3,
        DenyReason::Blacklisted => 4,
    }
}

/// Most severe of two reasons.
pub(crate) fn worst(a: DenyReason, b: DenyReason) -> DenyReason {
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Reason category for a deny produced by `cond`, derived from the atoms that
/// made it true: a compromised path beats recent context, which beats
/// historical context; with no context atom it is a role/zone gate failure.
pub fn deny_reason(cond: &Condition, snap: &ContextSnapshot, visible: &dyn Fn(AtomClass) -> bool) -> DenyReason {
    fn walk(
        cond: &Condition,
        snap: &ContextSnapshot,
        visible: &dyn Fn(AtomClass) -> bool,
        positive: bool,
        best: &mut DenyReason,
    ) {
        match cond {
            Condition::And { args } | Condition::Or { args } => {
                args.iter().for_each(|a| walk(a, snap, visible, positive, best))
            }
            Condition::Not { arg } => walk(arg, snap, visible, !positive, best),
            leaf => {
                if !positive || !AtomClass::of(leaf).is_some_and(visible) || !atom(leaf, snap) {
                    return;
                }
                let reason = match leaf {
                    Condition::PathCompromised => DenyReason::CompromisedPath,
                    Condition::ProximityNca { .. } | Condition::Nca { window: NcaWindow::Recent, .. } => {
                        DenyReason::CurrentSuspicious
                    }
                    Condition::Nca { window: NcaWindow::Historical, .. } => DenyReason::HistoricSuspicious,
                    Condition::Nca { window: NcaWindow::Any, kind, labels } => {
                        if snap.recent.iter().any(|n| nca_matches(n, *kind, labels)) {
                            DenyReason::CurrentSuspicious
                        } else {
                            DenyReason::HistoricSuspicious
                        }
                    }
                    _ => return,
                };
                *best = worst(*best, reason);
            }
        }
    }
    let mut best = DenyReason::RoleMismatch;
    walk(cond, snap, visible, true, &mut best);
    best
}

/// Nearby users whose recent NCAs satisfy a proximity atom of `cond`.
pub fn trigger_subjects(cond: &Condition, snap: &ContextSnapshot) -> BTreeSet<UserId> {
    let mut out = BTreeSet::new();
    cond.visit(&mut |c| {
        if let Condition::ProximityNca { kind, labels } = c {
            for p in &snap.proximity {
                if p.recent.iter().any(|n| nca_matches(n, *kind, labels)) {
                    out.insert(p.subject.clone());
                }
            }
        }
    });
    out
}

/// Rules whose target matches the request and whose condition holds, by
/// descending priority.
pub fn applicable_rules<'a>(
    doc: &'a PolicyDocument,
    request: &AccessRequest,
    snap: &ContextSnapshot,
) -> Vec<&'a PolicyRule> {
    applicable_rules_masked(doc, request, snap, &|_| true, &|_| true)
}

/// [`applicable_rules`] restricted to some rule kinds and atom classes.
pub fn applicable_rules_masked<'a>(
    doc: &'a PolicyDocument,
    request: &AccessRequest,
    snap: &ContextSnapshot,
    kinds: &dyn Fn(RuleKind) -> bool,
    visible: &dyn Fn(AtomClass) -> bool,
) -> Vec<&'a PolicyRule> {
    doc.rules_by_priority()
        .into_iter()
        .filter(|r| kinds(r.kind))
        .filter(|r| r.target.matches(&request.object_id, &snap.object_labels))
        .filter(|r| evaluate_masked(&r.condition, snap, visible))
        .collect()
}
