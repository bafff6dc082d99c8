//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use gargoyle_core::harness::{synthetic_policies, BenchWorld, HarnessContext};
use gargoyle_core::policy::PolicyDocument;

pub const SEED: u64 = 7;

/// The reference pack padded to `total` rules.
pub fn policies(ctx: &HarnessContext, total: usize) -> Arc<PolicyDocument> {
    Arc::new(synthetic_policies(&ctx.policies, total, SEED))
}

/// A populated engine on map 1.
pub fn world(ctx: &HarnessContext, total_policies: usize, users: usize) -> BenchWorld {
    BenchWorld::build(ctx, 1, policies(ctx, total_policies), users, SEED).expect("reference maps load")
}
