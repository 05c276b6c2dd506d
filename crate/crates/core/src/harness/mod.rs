//! Config-driven experiment driver and the built-in recipes.

mod config;
pub mod quantity;
mod run;

pub use config::{
    parse_config, BoundCase, BoundsProtocol, DecayProtocol, ExperimentConfig, GridConfig, GroundProtocol,
    InitialState, KickCoolProtocol, MeasureProtocol, OutputConfig, Profile, PropagatorSection, ProtocolKind,
    ScatterProtocol, SurveyConfig, SweepProtocol, UnitsConfig, AUTO_DT_FRACTION,
};
pub use run::{decay_outcome, execute, exit_code, run, seal_well, DecayOutcome, RunManifest, RunOutput, ARTIFACT_VERSION};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

const RECIPES: &[Recipe] = &[
    Recipe {
        name: "taejon-barrier",
        description: "tunneling scan through a time-averaged flat-top scanned barrier (Rb-87, SI quantities)",
        text: include_str!("../../recipes/taejon-barrier.toml"),
    },
    Recipe {
        name: "kick-cool",
        description: "free expansion of a 6 uK cloud followed by an optimal delta kick",
        text: include_str!("../../recipes/kick-cool.toml"),
    },
    Recipe {
        name: "aux-trap-decay",
        description: "metastable well between two beams, fitted decay rate against WKB",
        text: include_str!("../../recipes/aux-trap-decay.toml"),
    },
    Recipe {
        name: "bright-collapse",
        description: "one bright imaging pulse at the critical duration during traversal, with bound audit",
        text: include_str!("../../recipes/bright-collapse.toml"),
    },
    Recipe {
        name: "dark-spot",
        description: "dark-spot interrogation of the barrier and energies of null-conditioned states",
        text: include_str!("../../recipes/dark-spot.toml"),
    },
    Recipe {
        name: "oabp",
        description: "observation-assisted barrier penetration: measured vs unitary transmission, with null control",
        text: include_str!("../../recipes/oabp.toml"),
    },
    Recipe {
        name: "velocity-select",
        description: "moving well sweeping a thermal trap population into an auxiliary region",
        text: include_str!("../../recipes/velocity-select.toml"),
    },
];

pub fn recipes() -> &'static [Recipe] {
    RECIPES
}

pub fn recipe(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}

/// Parse a built-in recipe, optionally overriding its seed.
pub fn recipe_config(name: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let r = recipe(name).ok_or_else(|| {
        let names: Vec<&str> = RECIPES.iter().map(|r| r.name).collect();
        Error::Config(format!("unknown recipe {name:?} (known: {})", names.join(", ")))
    })?;
    let mut cfg = parse_config(r.text)?;
    if let Some(s) = seed {
        cfg.seed = Some(s);
    }
    Ok(cfg)
}
