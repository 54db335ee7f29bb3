//! Scenarios shipped with the binary.

use crate::config::{parse, ScenarioConfig};
use crate::error::CliError;

/// `(name, TOML source)` for every shipped scenario, in listing order.
pub const SOURCES: [(&str, &str); 7] = [
    ("ex-torus-coherent", include_str!("../scenarios/ex-torus-coherent.toml")),
    ("ex-torus-recurrent", include_str!("../scenarios/ex-torus-recurrent.toml")),
    ("ex-curve-exponential", include_str!("../scenarios/ex-curve-exponential.toml")),
    ("ex-restricted-eigenfunction", include_str!("../scenarios/ex-restricted-eigenfunction.toml")),
    ("ex-constant-weight", include_str!("../scenarios/ex-constant-weight.toml")),
    ("syn-k2-plane", include_str!("../scenarios/syn-k2-plane.toml")),
    ("syn-k2-conormal", include_str!("../scenarios/syn-k2-conormal.toml")),
];

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn find(name: &str) -> Result<ScenarioConfig, CliError> {
    parse(source(name).ok_or_else(|| CliError::UnknownScenario(name.into()))?)
}

pub fn all() -> Result<Vec<ScenarioConfig>, CliError> {
    SOURCES.iter().map(|(_, s)| parse(s)).collect()
}

/// Shipped scenarios, optionally restricted to those carrying `tag`.
pub fn list_scenarios(tag: Option<&str>) -> Result<Vec<ScenarioConfig>, CliError> {
    Ok(all()?
        .into_iter()
        .filter(|c| tag.is_none_or(|t| c.has_tag(t)))
        .collect())
}
