use std::collections::HashMap;

use super::{Nca, NcaKind};
use crate::ips::DataPlaneReport;
use crate::types::{Millis, UserId};

/// Append-only store of NCAs and data-plane reports.
///
/// NCAs are kept in arrival order; a per-user index sorted by time serves
/// window queries.
#[derive(Debug, Clone, Default)]
pub struct ContextRepository {
    log: Vec<Nca>,
    by_user: HashMap<UserId, Vec<usize>>,
    reports: Vec<DataPlaneReport>,
}

impl ContextRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, nca: Nca) {
        let idx = self.log.len();
        let index = self.by_user.entry(nca.subject.user.clone()).or_default();
        // Stable for equal times so ties keep arrival order.
        let at = index.partition_point(|&i| self.log[i].time <= nca.time);
        index.insert(at, idx);
        self.log.push(nca);
    }

    pub fn append_report(&mut self, report: DataPlaneReport) {
        self.reports.push(report);
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    /// All NCAs in arrival order.
    pub fn log(&self) -> &[Nca] {
        &self.log
    }

    pub fn reports(&self) -> &[DataPlaneReport] {
        &self.reports
    }

    /// NCAs about `user` stamped within `[t0, t1]` whose kind is in `kinds`,
    /// in time order.
    pub fn query(&self, user: &UserId, t0: Millis, t1: Millis, kinds: &[NcaKind]) -> Vec<&Nca> {
        let Some(index) = self.by_user.get(user) else {
            return Vec::new();
        };
        if t0 > t1 {
            return Vec::new();
        }
        let lo = index.partition_point(|&i| self.log[i].time < t0);
        let hi = index.partition_point(|&i| self.log[i].time <= t1);
        index[lo..hi].iter().map(|&i| &self.log[i]).filter(|n| kinds.contains(&n.kind())).collect()
    }

    /// NCAs in `[now - window, now]`.
    pub fn recent(&self, user: &UserId, now: Millis, window: Millis) -> Vec<&Nca> {
        self.query(user, now.saturating_sub(window), now, &NcaKind::ALL)
    }

    /// NCAs strictly older than the recent window.
    pub fn historical(&self, user: &UserId, now: Millis, window: Millis) -> Vec<&Nca> {
        match now.checked_sub(window + 1) {
            Some(end) => self.query(user, 0, end, &NcaKind::ALL),
            None => Vec::new(),
        }
    }

    /// Reports stamped within `[t0, t1]`.
    pub fn reports_between(&self, t0: Millis, t1: Millis) -> impl Iterator<Item = &DataPlaneReport> {
        self.reports.iter().filter(move |r| r.time >= t0 && r.time <= t1)
    }
}
