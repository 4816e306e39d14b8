//! Built-in parameter sets.

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "backward-pitfall",
        summary: "classical investor, salary premium 2% -> 7% at year 10",
        toml: include_str!("presets/backward-pitfall.toml"),
    },
    Preset {
        name: "numerical-example",
        summary: "power forward preference, sigmaY2 = 5%, theta2 = 0.2, beta = 0.25",
        toml: include_str!("presets/numerical-example.toml"),
    },
    Preset {
        name: "forward-revisit",
        summary: "numerical example plus the year-10 premium jump",
        toml: include_str!("presets/forward-revisit.toml"),
    },
    Preset {
        name: "martingale",
        summary: "numerical example with martingale checkpoints 2, 5, 10, 15, 20",
        toml: include_str!("presets/martingale.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// Preset used when an experiment is run without `--preset` or `--config`.
pub fn default_for(experiment: &str) -> &'static str {
    match experiment {
        "backward-pitfall" => "backward-pitfall",
        "forward-revisit" => "forward-revisit",
        "martingale" => "martingale",
        _ => "numerical-example",
    }
}
