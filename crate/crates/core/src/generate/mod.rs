//! Random structure search on a learned pseudo potential-energy surface.

pub mod optimizer;
pub mod random;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optimizer::{ExtendedSystem, Fire, Optimizer, OptimizerRegistry, RelaxSettings, Relaxed, SteepestDescent};
pub use random::{fit_molar_volumes, random_structure};

use crate::elements::Composition;
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::seeding;
use crate::structure::Structure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    /// Formula unit, e.g. `C` or `Li2S`.
    pub composition: Composition,
    /// Inclusive range of formula units per structure, drawn per sample.
    pub formula_units: [usize; 2],
    pub pbc: bool,
    /// Minimum interatomic distance in the initial structure (Å).
    pub min_distance: f64,
    /// Molar volume range (Å³/atom); when absent the fitted per-element
    /// volumes are used with `volume_jitter`.
    pub molar_volume_range: Option<[f64; 2]>,
    /// Relative jitter of the volume estimated from per-element volumes.
    pub volume_jitter: f64,
    /// Largest strain component used to shape a random cell.
    pub max_cell_strain: f64,
    /// Registered optimiser name.
    pub optimizer: String,
    pub f_tol: f64,
    pub max_steps: usize,
    pub relax_cell: bool,
    pub max_step: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        let relax = RelaxSettings::default();
        GenSpec {
            composition: Composition(vec![(6, 1)]),
            formula_units: [1, 1],
            pbc: true,
            min_distance: 0.7,
            molar_volume_range: None,
            volume_jitter: 0.2,
            max_cell_strain: 0.3,
            optimizer: "fire".into(),
            f_tol: relax.f_tol,
            max_steps: relax.max_steps,
            relax_cell: relax.relax_cell,
            max_step: relax.max_step,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generate: {m}")));
        if self.composition.0.is_empty() || self.composition.0.iter().any(|e| e.1 == 0) {
            return bad("composition counts must be >= 1");
        }
        let [lo, hi] = self.formula_units;
        if lo == 0 || hi < lo {
            return bad("formula_units must be [lo, hi] with 1 <= lo <= hi");
        }
        if !(self.min_distance > 0.0) {
            return bad("min_distance must be > 0");
        }
        if let Some([vlo, vhi]) = self.molar_volume_range {
            if !(vlo > 0.0) || vhi < vlo {
                return bad("molar_volume_range must be [lo, hi] with 0 < lo <= hi");
            }
        }
        if !(0.0..1.0).contains(&self.volume_jitter) {
            return bad("volume_jitter must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.max_cell_strain) {
            return bad("max_cell_strain must be in [0, 1)");
        }
        self.relax_settings().validate()
    }

    pub fn relax_settings(&self) -> RelaxSettings {
        RelaxSettings {
            f_tol: self.f_tol,
            max_steps: self.max_steps,
            relax_cell: self.relax_cell,
            max_step: self.max_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    pub structure: Structure,
    pub pseudo_energy: f64,
    pub pseudo_energy_per_atom: f64,
    pub initial_pseudo_energy: f64,
    pub converged: bool,
    pub steps: usize,
    pub max_force_final: f64,
    /// Seed of this sample's random stream; reproduces it alone.
    pub seed: u64,
    /// Position of the sample in the batch before sorting.
    pub index: usize,
}

impl RelaxationResult {
    fn from_relaxed(r: Relaxed, seed: u64, index: usize) -> Self {
        let n = r.structure.len() as f64;
        RelaxationResult {
            pseudo_energy_per_atom: r.energy / n,
            pseudo_energy: r.energy,
            initial_pseudo_energy: r.initial_energy,
            converged: r.converged,
            steps: r.steps,
            max_force_final: r.max_force,
            structure: r.structure,
            seed,
            index,
        }
    }
}

/// Outcome of a batch: results sorted by energy per atom, plus samples that failed.
#[derive(Debug, Clone, Default)]
pub struct Generation {
    pub results: Vec<RelaxationResult>,
    pub failures: Vec<(usize, u64, String)>,
}

/// Relaxes one random structure drawn from the stream `seed`.
pub fn generate_one(
    potential: &dyn Potential,
    optimizer: &dyn Optimizer,
    spec: &GenSpec,
    volumes: Option<&[(u8, f64)]>,
    seed: u64,
    index: usize,
) -> Result<RelaxationResult> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let s = random_structure(spec, volumes, &mut rng)?;
    let r = optimizer.relax(potential, &s, &spec.relax_settings())?;
    Ok(RelaxationResult::from_relaxed(r, seed, index))
}

/// `n_samples` independent random-structure relaxations. Sample `i` uses the
/// stream derived from `(seed, i)`, so the batch is identical however it is
/// scheduled across threads.
pub fn generate(
    potential: &dyn Potential,
    spec: &GenSpec,
    volumes: Option<&[(u8, f64)]>,
    n_samples: usize,
    seed: u64,
    registry: &OptimizerRegistry,
) -> Result<Generation> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be >= 1".into()));
    }
    let optimizer = registry.create(&spec.optimizer)?;
    let outcomes: Vec<(usize, u64, Result<RelaxationResult>)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let s = seeding::derive(seed, &[i as u64]);
            (i, s, generate_one(potential, optimizer.as_ref(), spec, volumes, s, i))
        })
        .collect();
    let mut out = Generation::default();
    for (i, s, r) in outcomes {
        match r {
            Ok(r) => out.results.push(r),
            Err(e) => {
                log::warn!("sample {i} failed: {e}");
                out.failures.push((i, s, e.to_string()));
            }
        }
    }
    out.results
        .sort_by(|a, b| a.pseudo_energy_per_atom.total_cmp(&b.pseudo_energy_per_atom).then(a.index.cmp(&b.index)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{CaceHyper, CaceModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> CaceModel {
        let h = CaceHyper { r_cut: 3.5, n_max: 3, l_max: 2, hidden: vec![8], ..CaceHyper::diamond() };
        CaceModel::new(h, &[6], &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    fn spec() -> GenSpec {
        GenSpec {
            composition: "C".parse().unwrap(),
            formula_units: [2, 4],
            molar_volume_range: Some([4.0, 6.0]),
            max_steps: 150,
            ..GenSpec::default()
        }
    }

    #[test]
    fn batch_is_sorted_and_deterministic() {
        let m = model();
        let reg = OptimizerRegistry::with_defaults();
        let a = generate(&m, &spec(), None, 6, 7, &reg).unwrap();
        let b = generate(&m, &spec(), None, 6, 7, &reg).unwrap();
        assert_eq!(a.results, b.results);
        assert_eq!(a.results.len() + a.failures.len(), 6);
        for w in a.results.windows(2) {
            assert!(w[0].pseudo_energy_per_atom <= w[1].pseudo_energy_per_atom);
        }
        for r in &a.results {
            assert!(!r.converged || r.max_force_final < spec().f_tol);
            assert!((2..=4).contains(&r.structure.len()));
        }
    }

    #[test]
    fn parallel_equals_serial_per_seed() {
        let m = model();
        let reg = OptimizerRegistry::with_defaults();
        let batch = generate(&m, &spec(), None, 4, 11, &reg).unwrap();
        let fire = Fire::default();
        for r in &batch.results {
            let alone = generate_one(&m, &fire, &spec(), None, r.seed, r.index).unwrap();
            assert_eq!(&alone, r);
        }
    }

    #[test]
    fn failed_samples_do_not_abort() {
        let m = model();
        let reg = OptimizerRegistry::with_defaults();
        let mut sp = spec();
        sp.molar_volume_range = Some([0.05, 0.05]);
        let g = generate(&m, &sp, None, 3, 1, &reg).unwrap();
        assert!(g.results.is_empty());
        assert_eq!(g.failures.len(), 3);
    }

    #[test]
    fn unknown_optimizer_is_a_config_error() {
        let m = model();
        let mut sp = spec();
        sp.optimizer = "annealing".into();
        assert!(generate(&m, &sp, None, 1, 0, &OptimizerRegistry::with_defaults()).is_err());
    }
}
