//! Built-in example configurations, shipped as the JSON files in `fixtures/`.

use crate::config::{ConfigError, RunConfig};

const BUILTIN: &[(&str, &str)] = &[
    ("symplecticR2", include_str!("../fixtures/symplecticR2.json")),
    ("symplecticR4", include_str!("../fixtures/symplecticR4.json")),
    ("so3star", include_str!("../fixtures/so3star.json")),
    ("sl2star", include_str!("../fixtures/sl2star.json")),
    ("heisenberg", include_str!("../fixtures/heisenberg.json")),
    ("productR4xR3", include_str!("../fixtures/productR4xR3.json")),
    ("nonpoisson_x2", include_str!("../fixtures/nonpoisson_x2.json")),
    ("rank2R4", include_str!("../fixtures/rank2R4.json")),
];

/// Names of the examples whose bivector satisfies the Jacobi identity.
pub const POISSON_EXAMPLES: &[&str] =
    &["symplecticR2", "symplecticR4", "so3star", "sl2star", "heisenberg", "productR4xR3", "rank2R4"];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Looks up `name`, with or without a `.json` suffix.
pub fn builtin(name: &str) -> Result<RunConfig, ConfigError> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let (n, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == stem)
        .ok_or_else(|| ConfigError::UnknownExample(name.to_string()))?;
    RunConfig::from_json(text, &format!("builtin:{n}"))
}

pub fn builtin_examples() -> Vec<(String, RunConfig)> {
    BUILTIN
        .iter()
        .map(|(n, _)| (n.to_string(), builtin(n).expect("shipped fixtures are valid")))
        .collect()
}
