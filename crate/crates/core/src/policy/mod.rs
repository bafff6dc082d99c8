//! Policy documents: organization, generic and contextual FBAC rules.
//!
//! A [`PolicyDocument`] is plain JSON. Conditions form a boolean tree over
//! context predicates; each rule carries exactly one effect. Documents are
//! validated against their own vocabulary when parsed and are immutable
//! afterwards.

mod eval;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::NcaKind;
use crate::fbac::{FunctionSet, SegmentSelector};
use crate::types::{Label, Medium, Millis, ObjectId, Role, RuleId, ZoneId};

pub(crate) use eval::worst;
pub use eval::{
    applicable_rules, applicable_rules_masked, deny_reason, evaluate_condition, evaluate_masked, trigger_subjects,
    AtomClass,
};

/// Conditions nested deeper than this are rejected.
pub const MAX_CONDITION_DEPTH: usize = 32;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("rule `{rule}` references undeclared {what} `{name}`")]
    UnknownVocabularyReference { rule: RuleId, what: &'static str, name: String },
    #[error("rules `{first}` and `{second}` share priority {priority}")]
    DuplicatePriority { priority: i64, first: RuleId, second: RuleId },
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(RuleId),
    #[error("role `{0}` declared twice")]
    DuplicateRole(Role),
    #[error("rule `{0}` has a condition nested deeper than {MAX_CONDITION_DEPTH}")]
    ConditionTooDeep(RuleId),
    #[error("rule `{rule}`: {reason}")]
    InvalidRule { rule: RuleId, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NcaWindow {
    Recent,
    Historical,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    True,
    False,
    And {
        args: Vec<Condition>,
    },
    Or {
        args: Vec<Condition>,
    },
    Not {
        arg: Box<Condition>,
    },
    RoleIn {
        roles: BTreeSet<Role>,
    },
    /// Inclusive range over the declared role index.
    RoleIndex {
        min: u32,
        max: u32,
    },
    ZoneIn {
        zones: BTreeSet<ZoneId>,
    },
    Medium {
        medium: Medium,
    },
    /// Requester has an NCA of `kind` (optionally with one of `labels`).
    Nca {
        window: NcaWindow,
        kind: NcaKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<BTreeSet<String>>,
    },
    /// Some other user in the requester's zone has a recent matching NCA.
    ProximityNca {
        kind: NcaKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<BTreeSet<String>>,
    },
    PathCompromised,
    SupervisorPresent,
    LabelIn {
        labels: BTreeSet<Label>,
    },
}

impl Condition {
    pub fn and(args: impl IntoIterator<Item = Condition>) -> Self {
        Condition::And { args: args.into_iter().collect() }
    }

    pub fn or(args: impl IntoIterator<Item = Condition>) -> Self {
        Condition::Or { args: args.into_iter().collect() }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(arg: Condition) -> Self {
        Condition::Not { arg: Box::new(arg) }
    }

    pub fn depth(&self) -> usize {
        match self {
            Condition::And { args } | Condition::Or { args } => {
                1 + args.iter().map(Condition::depth).max().unwrap_or(0)
            }
            Condition::Not { arg } => 1 + arg.depth(),
            _ => 1,
        }
    }

    /// Calls `f` on every node, parents first.
    pub fn visit(&self, f: &mut impl FnMut(&Condition)) {
        f(self);
        match self {
            Condition::And { args } | Condition::Or { args } => args.iter().for_each(|a| a.visit(f)),
            Condition::Not { arg } => arg.visit(f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Org,
    Generic,
    FbacContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Any,
    Objects(BTreeSet<ObjectId>),
    Labels(BTreeSet<Label>),
}

impl Target {
    pub fn matches(&self, object: &ObjectId, labels: &BTreeSet<Label>) -> bool {
        match self {
            Target::Any => true,
            Target::Objects(ids) => ids.contains(object),
            Target::Labels(wanted) => !wanted.is_disjoint(labels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    RoleMismatch,
    HistoricSuspicious,
    CurrentSuspicious,
    CompromisedPath,
    Blacklisted,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DenyReason::RoleMismatch => "role-mismatch",
            DenyReason::HistoricSuspicious => "historic-suspicious",
            DenyReason::CurrentSuspicious => "current-suspicious",
            DenyReason::CompromisedPath => "compromised-path",
            DenyReason::Blacklisted => "blacklisted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    Requester,
    /// The requester plus every nearby user whose NCAs satisfied the rule.
    RequesterAndTrigger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkAction {
    Quarantine,
    /// Blocks every device reported on the requester's path.
    BlockDevice,
    RestrictToZone {
        zone: ZoneId,
    },
    /// Route around reported devices; with no safe path the request is
    /// denied and, if set, the requester quarantined.
    RerouteAvoiding {
        #[serde(default)]
        quarantine_on_failure: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    Deny {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<DenyReason>,
    },
    Restrict {
        functions: FunctionSet,
        segments: SegmentSelector,
    },
    Network {
        action: NetworkAction,
        #[serde(default)]
        scope: Scope,
    },
    Blacklist {
        #[serde(default)]
        scope: Scope,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub id: RuleId,
    pub kind: RuleKind,
    pub priority: i64,
    pub target: Target,
    pub condition: Condition,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleDecl {
    pub name: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub roles: Vec<RoleDecl>,
    #[serde(default)]
    pub supervisor_roles: BTreeSet<Role>,
    #[serde(default)]
    pub zones: BTreeSet<ZoneId>,
    #[serde(default)]
    pub labels: BTreeSet<Label>,
    #[serde(default)]
    pub blocklist: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub recent_window_ms: Millis,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults { recent_window_ms: 60_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub vocab: Vocabulary,
    #[serde(default)]
    pub defaults: Defaults,
    pub rules: Vec<PolicyRule>,
}

impl PolicyDocument {
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let doc: PolicyDocument = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy document serializes")
    }

    pub fn role_index(&self, role: &Role) -> Option<u32> {
        self.vocab.roles.iter().find(|r| &r.name == role).and_then(|r| r.index)
    }

    pub fn has_role(&self, role: &Role) -> bool {
        self.vocab.roles.iter().any(|r| &r.name == role)
    }

    pub fn is_supervisor(&self, role: &Role) -> bool {
        self.vocab.supervisor_roles.contains(role)
    }

    /// Rules sorted by descending priority.
    pub fn rules_by_priority(&self) -> Vec<&PolicyRule> {
        let mut rules: Vec<&PolicyRule> = self.rules.iter().collect();
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        rules
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let mut roles = BTreeSet::new();
        for decl in &self.vocab.roles {
            if !roles.insert(&decl.name) {
                return Err(PolicyError::DuplicateRole(decl.name.clone()));
            }
        }
        let mut ids = BTreeSet::new();
        let mut priorities: BTreeMap<i64, &RuleId> = BTreeMap::new();
        for rule in &self.rules {
            if !ids.insert(&rule.id) {
                return Err(PolicyError::DuplicateRuleId(rule.id.clone()));
            }
            if let Some(first) = priorities.insert(rule.priority, &rule.id) {
                return Err(PolicyError::DuplicatePriority {
                    priority: rule.priority,
                    first: first.clone(),
                    second: rule.id.clone(),
                });
            }
            self.validate_rule(rule, &roles)?;
        }
        for role in &self.vocab.supervisor_roles {
            if !roles.contains(role) {
                return Err(PolicyError::UnknownVocabularyReference {
                    rule: RuleId::from("vocab"),
                    what: "role",
                    name: role.to_string(),
                });
            }
        }
        Ok(())
    }

    fn validate_rule(&self, rule: &PolicyRule, roles: &BTreeSet<&Role>) -> Result<(), PolicyError> {
        let unknown =
            |what, name: String| PolicyError::UnknownVocabularyReference { rule: rule.id.clone(), what, name };
        if rule.condition.depth() > MAX_CONDITION_DEPTH {
            return Err(PolicyError::ConditionTooDeep(rule.id.clone()));
        }
        let mut error = None;
        rule.condition.visit(&mut |c| {
            if error.is_some() {
                return;
            }
            error = match c {
                Condition::RoleIn { roles: wanted } => {
                    wanted.iter().find(|r| !roles.contains(r)).map(|r| unknown("role", r.to_string()))
                }
                Condition::ZoneIn { zones } => {
                    zones.iter().find(|z| !self.vocab.zones.contains(*z)).map(|z| unknown("zone", z.to_string()))
                }
                Condition::LabelIn { labels } => {
                    labels.iter().find(|l| !self.vocab.labels.contains(*l)).map(|l| unknown("label", l.to_string()))
                }
                Condition::RoleIndex { min, max } if min > max => Some(PolicyError::InvalidRule {
                    rule: rule.id.clone(),
                    reason: format!("empty role index range {min}..{max}"),
                }),
                _ => None,
            };
        });
        if let Some(e) = error {
            return Err(e);
        }
        if let Target::Labels(labels) = &rule.target {
            if let Some(l) = labels.iter().find(|l| !self.vocab.labels.contains(*l)) {
                return Err(unknown("label", l.to_string()));
            }
        }
        match &rule.effect {
            Effect::Restrict { segments: SegmentSelector::Label(l), .. } if !self.vocab.labels.contains(l) => {
                Err(unknown("label", l.to_string()))
            }
            Effect::Network { action: NetworkAction::RestrictToZone { zone }, .. }
                if !self.vocab.zones.contains(zone) =>
            {
                Err(unknown("zone", zone.to_string()))
            }
            _ => Ok(()),
        }
    }
}

/// Parses and validates a policy pack.
pub fn parse_policies(text: &str) -> Result<PolicyDocument, PolicyError> {
    PolicyDocument::parse(text)
}
