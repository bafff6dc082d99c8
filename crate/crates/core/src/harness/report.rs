use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bench::LatencyRow;
use super::runner::ScenarioOutcome;
use super::scenario::Category;
use crate::engine::{AccessModel, Outcome};
use crate::policy::DenyReason;

/// Classification of one request's final decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Row {
    BlockedCurrentSuspicious,
    BlockedHistoricSuspicious,
    BlockedCompromisedPath,
    GrantedLimited,
    GrantedFull,
    BlockedRoleMismatch,
    BlockedBlacklisted,
}

impl Row {
    /// The four rows of the access-authorization table.
    pub const TABLE: [Row; 4] = [
        Row::BlockedCurrentSuspicious,
        Row::BlockedHistoricSuspicious,
        Row::BlockedCompromisedPath,
        Row::GrantedLimited,
    ];
}

pub fn classify(outcome: &Outcome) -> Row {
    match outcome {
        Outcome::Deny { reason } => match reason {
            DenyReason::CurrentSuspicious => Row::BlockedCurrentSuspicious,
            DenyReason::HistoricSuspicious => Row::BlockedHistoricSuspicious,
            DenyReason::CompromisedPath => Row::BlockedCompromisedPath,
            DenyReason::RoleMismatch => Row::BlockedRoleMismatch,
            DenyReason::Blacklisted => Row::BlockedBlacklisted,
        },
        g if g.is_limited() => Row::GrantedLimited,
        _ => Row::GrantedFull,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub blocked_current_suspicious: usize,
    pub blocked_historic_suspicious: usize,
    pub blocked_compromised_path: usize,
    pub granted_limited: usize,
    pub granted_full: usize,
    pub blocked_role_mismatch: usize,
    pub blocked_blacklisted: usize,
    pub total: usize,
}

impl TableCounts {
    pub fn add(&mut self, row: Row) {
        *self.slot(row) += 1;
        self.total += 1;
    }

    fn slot(&mut self, row: Row) -> &mut usize {
        match row {
            Row::BlockedCurrentSuspicious => &mut self.blocked_current_suspicious,
            Row::BlockedHistoricSuspicious => &mut self.blocked_historic_suspicious,
            Row::BlockedCompromisedPath => &mut self.blocked_compromised_path,
            Row::GrantedLimited => &mut self.granted_limited,
            Row::GrantedFull => &mut self.granted_full,
            Row::BlockedRoleMismatch => &mut self.blocked_role_mismatch,
            Row::BlockedBlacklisted => &mut self.blocked_blacklisted,
        }
    }

    pub fn get(&self, row: Row) -> usize {
        match row {
            Row::BlockedCurrentSuspicious => self.blocked_current_suspicious,
            Row::BlockedHistoricSuspicious => self.blocked_historic_suspicious,
            Row::BlockedCompromisedPath => self.blocked_compromised_path,
            Row::GrantedLimited => self.granted_limited,
            Row::GrantedFull => self.granted_full,
            Row::BlockedRoleMismatch => self.blocked_role_mismatch,
            Row::BlockedBlacklisted => self.blocked_blacklisted,
        }
    }

    pub fn granted_limited_share(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.granted_limited as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: AccessModel,
    pub scenarios: usize,
    pub attacks: usize,
    pub protected: usize,
    pub protected_by_category: BTreeMap<Category, usize>,
    pub table: TableCounts,
}

impl ModelSummary {
    fn of(model: AccessModel, outcomes: &[ScenarioOutcome]) -> Self {
        let mut summary = ModelSummary {
            model,
            scenarios: outcomes.len(),
            attacks: 0,
            protected: 0,
            protected_by_category: Category::ALL.iter().map(|c| (*c, 0)).collect(),
            table: TableCounts::default(),
        };
        for o in outcomes {
            o.requests.iter().for_each(|r| summary.table.add(r.row));
            if let Some(p) = o.protected {
                summary.attacks += 1;
                if p {
                    summary.protected += 1;
                    *summary.protected_by_category.entry(o.category).or_default() += 1;
                }
            }
        }
        summary
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: AccessModel,
    pub scenarios: usize,
    pub categories: BTreeMap<Category, usize>,
    pub table: TableCounts,
    pub granted_limited_share: f64,
    /// Protection counts for the primary model followed by each baseline.
    pub models: Vec<ModelSummary>,
    pub outcomes: Vec<ScenarioOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latency: Vec<LatencyRow>,
}

impl RunReport {
    pub fn summary(&self, model: AccessModel) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == model)
    }
}

/// Builds the report for `outcomes` (one model) plus any baseline outcomes
/// over the same scenarios. Input order does not matter.
pub fn aggregate(mut outcomes: Vec<ScenarioOutcome>, baselines: Vec<ScenarioOutcome>) -> RunReport {
    outcomes.sort_by_key(|o| o.scenario_id);
    let model = outcomes.first().map_or(AccessModel::Gargoyle, |o| o.model);
    let primary = ModelSummary::of(model, &outcomes);

    let mut by_model: BTreeMap<String, (AccessModel, Vec<ScenarioOutcome>)> = BTreeMap::new();
    for o in baselines {
        by_model.entry(o.model.to_string()).or_insert_with(|| (o.model, Vec::new())).1.push(o);
    }
    let mut models = vec![primary.clone()];
    for m in AccessModel::ALL {
        if let Some((_, list)) = by_model.get(&m.to_string()) {
            if m != model {
                models.push(ModelSummary::of(m, list));
            }
        }
    }

    let mut categories: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    outcomes.iter().for_each(|o| *categories.entry(o.category).or_default() += 1);
    RunReport {
        model,
        scenarios: outcomes.len(),
        categories,
        granted_limited_share: primary.table.granted_limited_share(),
        table: primary.table,
        models,
        outcomes,
        latency: Vec::new(),
    }
}

/// Scenario ids where `other` protects and `primary` does not.
pub fn dominance_gaps(primary: &[ScenarioOutcome], other: &[ScenarioOutcome]) -> Vec<u32> {
    let protected: BTreeMap<u32, bool> =
        primary.iter().map(|o| (o.scenario_id, o.protected.unwrap_or(false))).collect();
    let mut gaps: Vec<u32> = other
        .iter()
        .filter(|o| o.protected == Some(true) && !protected.get(&o.scenario_id).copied().unwrap_or(false))
        .map(|o| o.scenario_id)
        .collect();
    gaps.sort_unstable();
    gaps
}
