//! Experiment configuration files (TOML) and their validation.

use std::path::{Path, PathBuf};

use fracsync::cavity::CavityModel;
use fracsync::lindblad::Convention;
use fracsync::model::{ChainSpec, DissipatorSpec};
use fracsync::spectrum::SpectrumOptions;
use fracsync::sync::SyncOptions;
use fracsync::trajectory::CircuitSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    GroundStates,
    Evolve,
    Spectrum,
    HeisenbergSync,
    DisorderSweep,
    Trajectory,
    Cavity,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::GroundStates => "ground-states",
            Recipe::Evolve => "evolve",
            Recipe::Spectrum => "spectrum",
            Recipe::HeisenbergSync => "heisenberg-sync",
            Recipe::DisorderSweep => "disorder-sweep",
            Recipe::Trajectory => "trajectory",
            Recipe::Cavity => "cavity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// `(|G₀₀⟩ + |G₁,₋₁⟩)/√2`
    DfsSuperposition,
    /// Gaussian random pure state on the full chain, drawn from `seed`
    RandomPure,
    /// `P/4` with `P` the manifold projector
    GroundInfiniteTemperature,
    /// equal-weight pure superposition of the four manifold states
    GroundUniformSuperposition,
    /// `amplitudes` in the manifold basis (0,0),(1,−1),(1,0),(1,1)
    CustomAmplitudes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub delta_m: i32,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub options: Option<SpectrumOptions>,
}

fn default_k() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// seeds `seed, seed+1, ..`
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub recipe: Option<Recipe>,
    pub chain: Option<ChainSpec>,
    pub dissipators: Option<DissipatorSpec>,
    pub initial_state: Option<InitialState>,
    pub amplitudes: Option<Vec<[f64; 2]>>,
    pub t_max: Option<f64>,
    pub dt_record: Option<f64>,
    pub h: Option<f64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub convention: Option<Convention>,
    /// minimum-eigenvalue check cadence in recorded points
    #[serde(default)]
    pub positivity_every: Option<usize>,
    pub sync: Option<SyncOptions>,
    pub spectrum: Option<SpectrumSection>,
    pub sweep: Option<SweepSection>,
    pub circuit: Option<CircuitSpec>,
    pub cavity: Option<CavityModel>,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&value).expect("json");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn recipe(&self) -> Recipe {
        self.recipe.expect("recipe set before validation")
    }

    pub fn chain(&self) -> &ChainSpec {
        self.chain.as_ref().expect("validated")
    }

    pub fn dissipators(&self) -> &DissipatorSpec {
        self.dissipators.as_ref().expect("validated")
    }

    pub fn convention(&self) -> Convention {
        self.convention.unwrap_or(Convention::Factor2)
    }

    /// Sweeps default to offset removal so that field-induced static
    /// polarization does not mask damped oscillations.
    pub fn sync_options(&self) -> SyncOptions {
        self.sync.clone().unwrap_or_else(|| SyncOptions { remove_offset: self.recipe == Some(Recipe::DisorderSweep), ..Default::default() })
    }

    pub fn initial_state(&self) -> InitialState {
        self.initial_state.unwrap_or(match self.recipe {
            Some(Recipe::HeisenbergSync) => InitialState::GroundInfiniteTemperature,
            _ => InitialState::DfsSuperposition,
        })
    }

    /// Uniform recording grid `0, dt_record, .., t_max`.
    pub fn grid(&self) -> Vec<f64> {
        let (t_max, dt) = (self.t_max.unwrap(), self.dt_record.unwrap());
        let n = (t_max / dt + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    pub fn step(&self) -> f64 {
        self.h.unwrap_or(0.1)
    }

    /// Checks that every field the recipe needs is present and sane.
    pub fn validate(&self) -> Result<(), CliError> {
        let recipe = self.recipe.ok_or_else(|| schema("missing field `recipe`"))?;
        let need_chain = !matches!(recipe, Recipe::Trajectory | Recipe::Cavity);
        if need_chain {
            let chain = self.chain.as_ref().ok_or_else(|| schema("missing table `chain`"))?;
            chain.validate().map_err(|e| schema(e.to_string()))?;
        }
        let dynamics = matches!(recipe, Recipe::Evolve | Recipe::HeisenbergSync | Recipe::DisorderSweep | Recipe::Spectrum);
        if dynamics {
            let d = self.dissipators.as_ref().ok_or_else(|| schema("missing table `dissipators`"))?;
            d.validate().map_err(|e| schema(e.to_string()))?;
        }
        let timed = matches!(recipe, Recipe::Evolve | Recipe::HeisenbergSync | Recipe::DisorderSweep | Recipe::Cavity);
        if timed {
            for (name, v) in [("t_max", self.t_max), ("dt_record", self.dt_record)] {
                match v {
                    None => return Err(schema(format!("missing field `{name}`"))),
                    Some(x) if !(x > 0.0 && x.is_finite()) => return Err(schema(format!("`{name}` must be positive"))),
                    _ => {}
                }
            }
            if self.dt_record > self.t_max {
                return Err(schema("`dt_record` exceeds `t_max`"));
            }
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(schema("`h` must be positive"));
            }
        }
        if self.initial_state() == InitialState::CustomAmplitudes {
            match &self.amplitudes {
                Some(a) if a.len() == 4 && a.iter().flatten().any(|x| *x != 0.0) => {}
                _ => return Err(schema("custom-amplitudes needs four non-zero `amplitudes` pairs")),
            }
        }
        match recipe {
            Recipe::Spectrum => {
                let s = self.spectrum.as_ref().ok_or_else(|| schema("missing table `spectrum`"))?;
                if s.k == 0 {
                    return Err(schema("`spectrum.k` must be at least 1"));
                }
                if !self.chain().conserves_magnetization() {
                    return Err(schema("spectrum blocks need Bx = 0"));
                }
                let n = self.chain().n as i32;
                if s.delta_m.abs() > 2 * n {
                    return Err(schema(format!("delta_m = {} outside [-{}, {}]", s.delta_m, 2 * n, 2 * n)));
                }
            }
            Recipe::DisorderSweep => {
                let s = self.sweep.as_ref().ok_or_else(|| schema("missing table `sweep`"))?;
                if s.n_seeds == 0 {
                    return Err(schema("`sweep.n_seeds` must be at least 1"));
                }
            }
            Recipe::HeisenbergSync => {
                let d = self.dissipators();
                if self.chain().b != 0.0 || self.chain().bx != 0.0 || d.kappa != 0.0 {
                    return Err(schema("heisenberg-sync needs B = 0, Bx = 0 and kappa = 0"));
                }
            }
            Recipe::Trajectory => {
                let c = self.circuit.as_ref().ok_or_else(|| schema("missing table `circuit`"))?;
                c.validate().map_err(|e| schema(e.to_string()))?;
                if c.n_qutrits != 2 {
                    return Err(schema("the trajectory recipe runs the two-qutrit register"));
                }
            }
            Recipe::Cavity => {
                let c = self.cavity.as_ref().ok_or_else(|| schema("missing table `cavity`"))?;
                c.validate().map_err(|e| schema(e.to_string()))?;
                if c.n_qutrits != 2 {
                    return Err(schema("the cavity recipe runs the two-qutrit register"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EVOLVE: &str = r#"
recipe = "evolve"
t_max = 10.0
dt_record = 1.0
[chain]
N = 4
B = 0.2
[dissipators]
gamma = 0.2
kappa = 0.2
"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::parse(EVOLVE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.grid().len(), 11);
        assert_eq!(c.initial_state(), InitialState::DfsSuperposition);
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::parse(EVOLVE).unwrap();
        let b = ExperimentConfig::parse(&EVOLVE.replace("t_max = 10.0", "t_max   =   10.0  # comment")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse(&EVOLVE.replace("10.0", "11.0")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn schema_errors() {
        let neg = ExperimentConfig::parse(&EVOLVE.replace("gamma = 0.2", "gamma = -0.2")).unwrap();
        assert!(matches!(neg.validate(), Err(CliError::Config(_))));
        let missing = ExperimentConfig::parse(&EVOLVE.replace("t_max = 10.0", "")).unwrap();
        assert!(missing.validate().is_err());
        assert!(ExperimentConfig::parse(&format!("{EVOLVE}\nbogus = 1")).is_err());
        let spec = ExperimentConfig::parse(&EVOLVE.replace("\"evolve\"", "\"spectrum\"")).unwrap();
        assert!(spec.validate().is_err());
    }
}
