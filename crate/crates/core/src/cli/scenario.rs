//! Scenario files: TOML with fixed sections, unknown keys rejected.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::CliError;
use crate::channel::{
    CellScenario, NakagamiPowerFading, PathlossParams, RayleighPowerFading, SharedFading,
    NUM_INTERFERERS,
};
use crate::numerics;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub cell: CellSection,
    pub pathloss: PathlossSection,
    pub interferers: InterferersSection,
    pub noise: NoiseSection,
    pub fading: FadingSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub mc: McSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub radius_m: f64,
    pub num_users: usize,
    /// Defaults to the pathloss reference distance.
    pub min_distance_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathlossSection {
    pub exponent: f64,
    pub constant_db: f64,
    pub reference_m: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferersSection {
    pub count: usize,
    #[serde(default, rename = "override")]
    pub overrides: Vec<InterfererOverride>,
}

/// Replaces some pathloss parameters of interferer `index` (1-based).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererOverride {
    pub index: usize,
    pub exponent: Option<f64>,
    pub constant_db: Option<f64>,
    pub reference_m: Option<f64>,
    pub power_w: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub power_w: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FadingKind {
    Rayleigh,
    Nakagami,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSection {
    pub model: FadingKind,
    #[serde(default = "one")]
    pub mean_power: f64,
    /// Nakagami shape.
    pub m: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub rate_min: f64,
    pub rate_max: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            rate_min: 0.0,
            rate_max: 30.0,
            points: 3001,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub seed: u64,
    pub drops: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            seed: 1,
            drops: 1_000_000,
        }
    }
}

/// A validated scenario ready for the library.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cell: CellScenario,
    pub fading: SharedFading,
    pub rate_grid: Vec<f64>,
    pub seed: u64,
    pub drops: usize,
}

fn section(name: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("[{name}] {e}"))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => CliError::Input(format!(
                    "scenario parse error near {}: {msg}",
                    section_at(text, span.start)
                )),
                None => CliError::Input(format!("scenario parse error: {msg}")),
            }
        })
    }

    pub fn validate(&self) -> Result<Scenario, CliError> {
        let p = &self.pathloss;
        let serving = PathlossParams::new(p.exponent, p.constant_db, p.reference_m, p.power_w)
            .map_err(|e| section("pathloss", e))?;

        if self.interferers.count != NUM_INTERFERERS {
            return Err(section(
                "interferers",
                format!(
                    "count must be {NUM_INTERFERERS} (one hexagonal tier), got {}",
                    self.interferers.count
                ),
            ));
        }
        let mut overrides = [None; NUM_INTERFERERS];
        for o in &self.interferers.overrides {
            if !(1..=NUM_INTERFERERS).contains(&o.index) {
                return Err(section(
                    "interferers",
                    format!(
                        "override index must be 1..={NUM_INTERFERERS}, got {}",
                        o.index
                    ),
                ));
            }
            if overrides[o.index - 1].is_some() {
                return Err(section(
                    "interferers",
                    format!("duplicate override for {}", o.index),
                ));
            }
            let params = PathlossParams::new(
                o.exponent.unwrap_or(p.exponent),
                o.constant_db.unwrap_or(p.constant_db),
                o.reference_m.unwrap_or(p.reference_m),
                o.power_w.unwrap_or(p.power_w),
            )
            .map_err(|e| section("interferers", e))?;
            overrides[o.index - 1] = Some(params);
        }

        let min_distance = self.cell.min_distance_m.unwrap_or(p.reference_m);
        let cell = CellScenario::new(
            self.cell.radius_m,
            self.cell.num_users,
            serving,
            &overrides,
            self.noise.power_w,
            min_distance,
        )
        .map_err(|e| section("cell", e))?;
        if !(self.noise.power_w > 0.0) {
            return Err(section("noise", "power_w must be positive"));
        }

        let f = &self.fading;
        let fading: SharedFading = match f.model {
            FadingKind::Rayleigh => {
                if f.m.is_some() {
                    return Err(section("fading", "m applies only to model = \"nakagami\""));
                }
                Arc::new(RayleighPowerFading::new(f.mean_power).map_err(|e| section("fading", e))?)
            }
            FadingKind::Nakagami => {
                let m = f.m.ok_or_else(|| section("fading", "nakagami needs m"))?;
                Arc::new(
                    NakagamiPowerFading::new(m, f.mean_power).map_err(|e| section("fading", e))?,
                )
            }
        };

        let g = &self.grid;
        if !(g.rate_min >= 0.0
            && g.rate_max > g.rate_min
            && g.rate_max.is_finite()
            && g.points >= 3)
        {
            return Err(section(
                "grid",
                "need 0 <= rate_min < rate_max and at least 3 points",
            ));
        }
        if self.mc.drops == 0 {
            return Err(section("mc", "drops must be at least 1"));
        }
        Ok(Scenario {
            cell,
            fading,
            rate_grid: numerics::linspace(g.rate_min, g.rate_max, g.points),
            seed: self.mc.seed,
            drops: self.mc.drops,
        })
    }
}

/// Name of the `[section]` enclosing byte offset `pos`.
fn section_at(text: &str, pos: usize) -> String {
    let mut current = "top level".to_string();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if offset > pos {
            break;
        }
        let t = line.trim();
        if t.starts_with('[') && t.ends_with(']') {
            current = t.to_string();
        }
        offset += line.len();
    }
    current
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    ScenarioFile::parse(&text)?.validate()
}
