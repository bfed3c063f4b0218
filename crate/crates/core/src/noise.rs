//! Corruption of equilibrium structures and the restoring pseudo-response
//! targets (forces and stress) used as training labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::build_neighbor_list;
use crate::structure::{minimum_image_displacement, wrap_positions, Mat3, Structure, Vec3};

/// Noise amplitudes and pseudo-response hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Maximum displacement magnitude (Å).
    pub d_max: f64,
    /// Maximum magnitude of each strain component.
    pub gamma_max: f64,
    /// Harmonic force constant.
    pub k: f64,
    pub rep_m: f64,
    pub rep_n: u32,
    /// Repulsion cutoff (Å).
    pub rep_rc: f64,
    pub k_normal: f64,
    pub k_shear: f64,
    pub n_noise_per_structure: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            d_max: 0.8,
            gamma_max: 0.1,
            k: 1.0,
            rep_m: 2.0,
            rep_n: 2,
            rep_rc: 0.7,
            k_normal: 1.0,
            k_shear: 0.5,
            n_noise_per_structure: 32,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("noise: {m}")));
        if !(self.d_max > 0.0) {
            return bad("d_max must be > 0");
        }
        if !(self.gamma_max >= 0.0) {
            return bad("gamma_max must be >= 0");
        }
        if !(self.k > 0.0) {
            return bad("k must be > 0");
        }
        if !(self.rep_rc > 0.0) {
            return bad("rep_rc must be > 0");
        }
        if !(self.rep_m >= 0.0) {
            return bad("rep_m must be >= 0");
        }
        if self.rep_n < 2 {
            return bad("rep_n must be >= 2");
        }
        if !(self.k_normal >= 0.0 && self.k_shear >= 0.0) {
            return bad("moduli must be >= 0");
        }
        if self.n_noise_per_structure == 0 {
            return bad("n_noise_per_structure must be >= 1");
        }
        Ok(())
    }

    pub fn repulsion(&self) -> Repulsion {
        Repulsion { m: self.rep_m, n: self.rep_n, rc: self.rep_rc }
    }
}

/// Short-range pair repulsion `m (1 - r²/rc²)^n` inside `rc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repulsion {
    pub m: f64,
    pub n: u32,
    pub rc: f64,
}

impl Repulsion {
    pub fn energy(&self, r: f64) -> f64 {
        repulsive_energy(r, self.m, self.n, self.rc)
    }

    /// dg/dr
    pub fn derivative(&self, r: f64) -> f64 {
        if r >= self.rc {
            return 0.0;
        }
        let q = 1.0 - r * r / (self.rc * self.rc);
        -self.m * self.n as f64 * q.powi(self.n as i32 - 1) * 2.0 * r / (self.rc * self.rc)
    }
}

pub fn repulsive_energy(r: f64, m: f64, n: u32, rc: f64) -> f64 {
    if r >= rc {
        0.0
    } else {
        m * (1.0 - r * r / (rc * rc)).powi(n as i32)
    }
}

/// A noised structure and its supervision signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub noised: Structure,
    pub target_forces: Vec<Vec3>,
    /// Zero for molecules.
    pub target_stress: Mat3,
    /// Minimum-image displacements from the strained equilibrium positions,
    /// taken relative to their centroid. A rigid translation carries no
    /// restoring force, and no translation-invariant model can produce a net force.
    pub displacements: Vec<Vec3>,
    pub strain: Mat3,
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(rho * phi.cos(), rho * phi.sin(), z)
}

/// Uniform random direction times a magnitude uniform on `[0, d_max]`.
pub fn sample_displacements<R: Rng + ?Sized>(s: &Structure, d_max: f64, rng: &mut R) -> Vec<Vec3> {
    (0..s.len())
        .map(|_| {
            let dir = random_unit(rng);
            let mag = rng.random::<f64>() * d_max;
            dir * mag
        })
        .collect()
}

/// Symmetric strain with each of the six independent components uniform on
/// `[-gamma_max, gamma_max]`.
pub fn sample_strain<R: Rng + ?Sized>(gamma_max: f64, rng: &mut R) -> Mat3 {
    let mut g = Mat3::zeros();
    if gamma_max <= 0.0 {
        return g;
    }
    for a in 0..3 {
        for b in a..3 {
            let v = rng.random_range(-gamma_max..=gamma_max);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Strains the cell (carrying atoms affinely), then displaces and wraps.
pub fn apply_noise(s: &Structure, disp: &[Vec3], strain: &Mat3) -> Result<Structure> {
    if disp.len() != s.len() {
        return Err(Error::InvalidInput(format!("{} displacements for {} atoms", disp.len(), s.len())));
    }
    if disp.iter().any(|d| !d.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidInput("non-finite displacement".into()));
    }
    if !s.pbc() {
        if strain.iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidInput("cell strain applied to a non-periodic structure".into()));
        }
        let positions = s.positions.iter().zip(disp).map(|(x, d)| x + d).collect();
        return Structure::molecule(s.species.clone(), positions);
    }
    let mut out = s.deformed(strain);
    for (x, d) in out.positions.iter_mut().zip(disp) {
        *x += d;
    }
    out.validate()?;
    wrap_positions(&out)
}

pub fn harmonic_force_targets(disp: &[Vec3], k: f64) -> Vec<Vec3> {
    disp.iter().map(|d| -k * d).collect()
}

/// Pairwise repulsive forces `-Σ_j dg(r_ji)/dr_i`, over all periodic images.
pub fn repulsive_force_targets(noised: &Structure, rep: &Repulsion) -> Result<Vec<Vec3>> {
    check_coincident(noised)?;
    let mut forces = vec![Vec3::zeros(); noised.len()];
    if rep.m == 0.0 {
        return Ok(forces);
    }
    let nl = build_neighbor_list(noised, rep.rc)?;
    for (i, nb) in nl.edges() {
        // the pair energy is shared between the two directed edges
        forces[i] += rep.derivative(nb.distance) * nb.unit;
    }
    Ok(forces)
}

fn check_coincident(s: &Structure) -> Result<()> {
    for a in 0..s.len() {
        for b in (a + 1)..s.len() {
            if s.displacement(a, b)?.norm_squared() == 0.0 {
                return Err(Error::CoincidentAtoms(a, b));
            }
        }
    }
    Ok(())
}

/// Restoring stress `-C γ`: normal modulus on the diagonal, shear modulus off it.
pub fn stress_target(strain: &Mat3, k_normal: f64, k_shear: f64) -> Result<Mat3> {
    let scale = strain.amax().max(1.0);
    if (strain - strain.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidInput("strain must be symmetric".into()));
    }
    Ok(Mat3::from_fn(|a, b| if a == b { -k_normal * strain[(a, b)] } else { -k_shear * strain[(a, b)] }))
}

/// Draws one noised copy of `s` with its pseudo-force and pseudo-stress targets.
///
/// A global noise level `u ∈ (0, 1]` scales both the displacement and strain
/// amplitudes so each sample sits at its own point of the noise schedule.
pub fn make_training_sample<R: Rng + ?Sized>(s: &Structure, spec: &NoiseSpec, rng: &mut R) -> Result<TrainingSample> {
    s.validate()?;
    let u = 1.0 - rng.random::<f64>();
    let disp = sample_displacements(s, spec.d_max * u, rng);
    let strain = if s.pbc() { sample_strain(spec.gamma_max * u, rng) } else { Mat3::zeros() };
    training_sample_from_noise(s, spec, &disp, &strain)
}

/// Deterministic part of [`make_training_sample`] for a given noise draw.
pub fn training_sample_from_noise(
    s: &Structure,
    spec: &NoiseSpec,
    disp: &[Vec3],
    strain: &Mat3,
) -> Result<TrainingSample> {
    let noised = apply_noise(s, disp, strain)?;
    let displacements = match &noised.cell {
        Some(cell) => {
            let reference = s.deformed(strain);
            noised
                .positions
                .iter()
                .zip(&reference.positions)
                .map(|(x, x0)| minimum_image_displacement(cell, x0, x))
                .collect::<Result<Vec<_>>>()?
        }
        None => disp.to_vec(),
    };
    let centroid = displacements.iter().sum::<Vec3>() / displacements.len() as f64;
    let displacements: Vec<Vec3> = displacements.iter().map(|d| d - centroid).collect();
    let mut target_forces = harmonic_force_targets(&displacements, spec.k);
    let rep = repulsive_force_targets(&noised, &spec.repulsion())?;
    for (f, r) in target_forces.iter_mut().zip(&rep) {
        *f += r;
    }
    let target_stress = stress_target(strain, spec.k_normal, spec.k_shear)?;
    Ok(TrainingSample { noised, target_forces, target_stress, displacements, strain: *strain })
}
