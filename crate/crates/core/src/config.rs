//! Experiment configuration: one TOML file with a section per stage.
//!
//! ```toml
//! [noise]      # d_max, gamma_max, k, rep_m, rep_n, rep_rc, k_normal, k_shear, n_noise_per_structure
//! [model]      # r_cut, n_max, l_max, nu_max, n_embedding, hidden
//! [train]      # beta, learning_rate, final_learning_rate, batch_size, epochs, seed, ...
//! [generate]   # composition, formula_units, pbc, min_distance, molar_volume_range, optimizer, f_tol, ...
//! [match]      # tol_v, tol_f, [match.fingerprint] r_max, bins, smearing
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::MatchSettings;
use crate::error::{Error, Result};
use crate::generate::GenSpec;
use crate::noise::NoiseSpec;
use crate::potential::CaceHyper;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub noise: NoiseSpec,
    pub model: CaceHyper,
    pub train: TrainConfig,
    pub generate: GenSpec,
    #[serde(rename = "match")]
    pub matching: MatchSettings,
}

impl RunConfig {
    /// Named starting points: `diamond`, `molecules`, `materials`.
    pub fn preset(name: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        match name {
            "diamond" => {
                c.model = CaceHyper::diamond();
                c.noise.d_max = 0.8;
                c.noise.gamma_max = 0.1;
                c.train.beta = 10.0;
                c.train.learning_rate = 1e-2;
                c.train.final_learning_rate = 1e-4;
                c.train.epochs = 200;
                c.generate.composition = "C".parse()?;
                c.generate.formula_units = [2, 12];
                c.generate.molar_volume_range = Some([3.8, 5.6]);
            }
            "molecules" => {
                c.model = CaceHyper::molecules();
                c.noise.d_max = 1.6;
                c.noise.n_noise_per_structure = 48;
                c.train.learning_rate = 2e-3;
                c.train.final_learning_rate = 1e-4;
                c.train.epochs = 200;
                c.train.validation_fraction = 0.0;
                c.generate.pbc = false;
                c.generate.relax_cell = false;
            }
            "materials" => c.model = CaceHyper::materials(),
            other => return Err(Error::Config(format!("unknown preset `{other}`"))),
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.generate.validate()?;
        self.matching.validate()
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
