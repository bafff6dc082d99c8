use std::collections::BTreeSet;

use super::{AccessDecision, AccessModel, AccessRequest, ContextSnapshot, Outcome, RuleAction};
use crate::fbac::{AccessControlTensor, FbacError};
use crate::netsim::NetworkRule;
use crate::policy::{
    applicable_rules_masked, deny_reason, trigger_subjects, worst, DenyReason, Effect, NetworkAction, PolicyDocument,
    PolicyRule, Scope,
};
use crate::types::UserId;

fn scoped_users(rule: &PolicyRule, scope: Scope, snap: &ContextSnapshot) -> BTreeSet<UserId> {
    let mut users = BTreeSet::from([snap.requester.clone()]);
    if scope == Scope::RequesterAndTrigger {
        users.extend(trigger_subjects(&rule.condition, snap));
    }
    users
}

/// Decides one request.
///
/// Blacklisted requesters are denied outright. Otherwise every applicable
/// rule is applied by priority: denies and blacklists set the outcome (most
/// severe reason wins), network effects become [`NetworkRule`]s, and
/// restrictions are subtracted per segment from the tensor's view. Any deny
/// overrides all restrictions.
pub fn decide(
    request: &AccessRequest,
    snap: &ContextSnapshot,
    policies: &PolicyDocument,
    tensor: &AccessControlTensor,
    model: AccessModel,
) -> Result<AccessDecision, FbacError> {
    let object = tensor.catalog().get(&request.object_id)?;
    let mut decision = AccessDecision {
        request_id: request.request_id.clone(),
        outcome: Outcome::Deny { reason: DenyReason::Blacklisted },
        network_actions: Vec::new(),
        blacklist: BTreeSet::new(),
        triggering_rules: Vec::new(),
    };
    if model.acts_on_network() && snap.blacklisted {
        return Ok(decision);
    }

    let visible = |class| model.sees(class);
    let rules = applicable_rules_masked(policies, request, snap, &|k| model.uses_rule(k), &visible);
    let mut denied: Option<DenyReason> = None;
    let mut deny = |reason: DenyReason| denied = Some(denied.map_or(reason, |d| worst(d, reason)));
    let mut segments = tensor.render_view(&request.user_id, &request.object_id)?;

    for rule in rules {
        let derived = || deny_reason(&rule.condition, snap, &visible);
        match &rule.effect {
            Effect::Deny { reason } => deny(reason.unwrap_or_else(derived)),
            Effect::Blacklist { scope } => {
                deny(derived());
                if model.acts_on_network() {
                    decision.blacklist.extend(scoped_users(rule, *scope, snap));
                }
            }
            Effect::Network { action, scope } => {
                if !model.acts_on_network() {
                    continue;
                }
                let users = scoped_users(rule, *scope, snap);
                let mut push = |action| decision.network_actions.push(RuleAction { rule: rule.id.clone(), action });
                match action {
                    NetworkAction::Quarantine => {
                        users.into_iter().for_each(|user| push(NetworkRule::Quarantine { user }));
                    }
                    NetworkAction::BlockDevice => {
                        snap.flagged_on_path().into_iter().for_each(|device| push(NetworkRule::Block { device }));
                    }
                    NetworkAction::RestrictToZone { zone } => users
                        .into_iter()
                        .for_each(|user| push(NetworkRule::RestrictToZone { user, zone: zone.clone() })),
                    NetworkAction::RerouteAvoiding { quarantine_on_failure } => {
                        if snap.safe_path.is_some() {
                            push(NetworkRule::RerouteAvoiding { devices: snap.flagged_on_path() });
                        } else {
                            deny(DenyReason::CompromisedPath);
                            if *quarantine_on_failure {
                                push(NetworkRule::Quarantine { user: snap.requester.clone() });
                            }
                        }
                    }
                }
            }
            Effect::Restrict { functions, segments: selector } => {
                if model.is_binary() {
                    continue;
                }
                for segment in object.segments.iter().filter(|s| selector.matches(s)) {
                    if let Some(allowed) = segments.get_mut(&segment.id) {
                        *allowed = allowed.difference(*functions);
                    }
                }
            }
        }
        decision.triggering_rules.push(rule.id.clone());
    }

    decision.outcome = match denied {
        Some(reason) => Outcome::Deny { reason },
        None => Outcome::Grant { segments },
    };
    Ok(decision)
}
