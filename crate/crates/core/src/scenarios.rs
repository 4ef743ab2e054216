//! Built-in scenarios, shipped as TOML documents.

use crate::config::{parse_config_with, ConfigError, Overrides, ProblemConfig};

pub const SCENARIOS: [(&str, &str); 9] = [
    ("vacuum_atom", include_str!("../scenarios/vacuum_atom.toml")),
    ("dipole", include_str!("../scenarios/dipole.toml")),
    ("anti_dipole", include_str!("../scenarios/anti_dipole.toml")),
    ("positive_pair", include_str!("../scenarios/positive_pair.toml")),
    ("negative_pair", include_str!("../scenarios/negative_pair.toml")),
    ("bump_atom", include_str!("../scenarios/bump_atom.toml")),
    ("pwl_front", include_str!("../scenarios/pwl_front.toml")),
    ("zero_static", include_str!("../scenarios/zero_static.toml")),
    ("riemann_bump", include_str!("../scenarios/riemann_bump.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str, overrides: &Overrides) -> Result<ProblemConfig, ConfigError> {
    let text = source(name).ok_or_else(|| ConfigError {
        code: "E000",
        message: format!("unknown scenario {name:?}; known: {}", names().collect::<Vec<_>>().join(", ")),
        position: None,
    })?;
    parse_config_with(text, overrides)
}
