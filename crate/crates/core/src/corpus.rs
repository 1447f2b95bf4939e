//! Bundled scenarios.

use crate::grid::{load_scenario, Scenario};

/// Name and document text of every bundled scenario.
pub const ALL: &[(&str, &str)] = &[
    ("two_bus", include_str!("../data/two_bus.toml")),
    (
        "two_bus_congested",
        include_str!("../data/two_bus_congested.toml"),
    ),
    ("three_bus", include_str!("../data/three_bus.toml")),
    (
        "three_bus_limited",
        include_str!("../data/three_bus_limited.toml"),
    ),
    (
        "four_bus_two_area",
        include_str!("../data/four_bus_two_area.toml"),
    ),
    (
        "four_bus_two_area_limited",
        include_str!("../data/four_bus_two_area_limited.toml"),
    ),
    ("ieee39", include_str!("../data/ieee39.toml")),
    (
        "ieee39_unconstrained",
        include_str!("../data/ieee39_unconstrained.toml"),
    ),
    ("infeasible", include_str!("../data/infeasible.toml")),
    ("conflict", include_str!("../data/conflict.toml")),
];

/// Scenarios whose equilibrium problem has an optimum.
pub const FEASIBLE: &[&str] = &[
    "two_bus",
    "two_bus_congested",
    "three_bus",
    "three_bus_limited",
    "four_bus_two_area",
    "four_bus_two_area_limited",
    "ieee39",
    "ieee39_unconstrained",
];

/// Parses a bundled scenario by name.
///
/// # Panics
/// On an unknown name. Bundled documents are checked by the test suite.
pub fn get(name: &str) -> Scenario {
    let text = ALL
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no bundled scenario named {name}"))
        .1;
    load_scenario(text).expect("bundled scenario parses")
}

/// Every bundled scenario, parsed.
pub fn all() -> Vec<(&'static str, Scenario)> {
    ALL.iter().map(|(n, _)| (*n, get(n))).collect()
}
