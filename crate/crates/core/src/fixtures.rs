//! Reference inputs shipped with the crate: seven organization maps, the
//! document catalog, the reference policy pack and the two sample scenarios.

use std::collections::BTreeMap;

use crate::fbac::Catalog;
use crate::harness::ScenarioSpec;
use crate::netsim::{load_topology, Topology};
use crate::policy::PolicyDocument;

pub const MAPS: [&str; 7] = [
    include_str!("../fixtures/maps/map1.json"),
    include_str!("../fixtures/maps/map2.json"),
    include_str!("../fixtures/maps/map3.json"),
    include_str!("../fixtures/maps/map4.json"),
    include_str!("../fixtures/maps/map5.json"),
    include_str!("../fixtures/maps/map6.json"),
    include_str!("../fixtures/maps/map7.json"),
];

pub const CATALOG: &str = include_str!("../fixtures/catalog.json");
pub const REFERENCE_POLICIES: &str = include_str!("../fixtures/policies/reference.json");

pub const SCENARIO_I: &str = include_str!("../fixtures/scenarios/scenario-i.json");
pub const SCENARIO_II_WIRED: &str = include_str!("../fixtures/scenarios/scenario-ii-wired.json");
pub const SCENARIO_II_WIRELESS: &str = include_str!("../fixtures/scenarios/scenario-ii-wireless.json");

pub fn map(id: u8) -> Topology {
    let doc = MAPS[usize::from(id) - 1];
    load_topology(doc).expect("shipped map is valid")
}

pub fn maps() -> BTreeMap<u8, Topology> {
    (1..=MAPS.len() as u8).map(|id| (id, map(id))).collect()
}

pub fn catalog() -> Catalog {
    Catalog::from_json(CATALOG).expect("shipped catalog is valid")
}

pub fn reference_policies() -> PolicyDocument {
    PolicyDocument::parse(REFERENCE_POLICIES).expect("shipped policy pack is valid")
}

fn scenario(text: &str) -> ScenarioSpec {
    serde_json::from_str(text).expect("shipped scenario is valid")
}

pub fn scenario_i() -> ScenarioSpec {
    scenario(SCENARIO_I)
}

pub fn scenario_ii_wired() -> ScenarioSpec {
    scenario(SCENARIO_II_WIRED)
}

pub fn scenario_ii_wireless() -> ScenarioSpec {
    scenario(SCENARIO_II_WIRELESS)
}
