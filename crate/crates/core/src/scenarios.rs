//! Scenarios shipped with the crate.

use crate::network::scenario::{Scenario, ScenarioError};

const BUNDLED: &[(&str, &str)] = &[
    ("paper_fig4", include_str!("../scenarios/paper_fig4.toml")),
    ("paper_fig6", include_str!("../scenarios/paper_fig6.toml")),
    ("paper_fig7", include_str!("../scenarios/paper_fig7.toml")),
    ("leaf_attack", include_str!("../scenarios/leaf_attack.toml")),
    ("triangle_eavesdrop", include_str!("../scenarios/triangle_eavesdrop.toml")),
    ("tamper_demo", include_str!("../scenarios/tamper_demo.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

/// Source text of a bundled scenario.
pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Parses a bundled scenario; `None` for unknown names.
pub fn load(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    source(name).map(Scenario::from_toml_str)
}
