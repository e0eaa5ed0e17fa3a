//! Built-in experiment configurations.

use crate::error::{Error, Result};

use super::HarnessConfig;

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub json: &'static str,
}

/// COLDQ rows only; the comparison algorithms listed beside them are not implemented.
pub const PRESETS: &[Preset] = &[
    Preset {
        name: "table3",
        summary: "time-varying least squares with random affine constraints, T=1000",
        json: include_str!("../../presets/table3.json"),
    },
    Preset {
        name: "table4",
        summary: "quadratic program with fixed affine constraints, T=1000",
        json: include_str!("../../presets/table4.json"),
    },
    Preset {
        name: "table5",
        summary: "linear program with fixed affine constraints, T=1000",
        json: include_str!("../../presets/table5.json"),
    },
    Preset {
        name: "table6",
        summary: "geo-distributed job scheduling, 5-minute slots over 10 days (T=2880)",
        json: include_str!("../../presets/table6.json"),
    },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let known: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        Error::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
    })
}

pub fn load(name: &str) -> Result<HarnessConfig> {
    HarnessConfig::from_json(find(name)?.json)
}
