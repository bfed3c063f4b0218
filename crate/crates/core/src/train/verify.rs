//! Finite-difference checks of forces, virial stress and the loss gradient.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::loss::{rm_loss, sample_loss_gradient};
use crate::elements::Composition;
use crate::error::Result;
use crate::generate::{random_structure, GenSpec};
use crate::noise::TrainingSample;
use crate::potential::{CaceModel, Potential};
use crate::structure::{make_supercell, rotation_matrix, Mat3, Structure, Vec3};

pub const FORCE_TOL: f64 = 1e-5;
pub const STRESS_TOL: f64 = 1e-4;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const ENERGY_INVARIANCE_TOL: f64 = 1e-9;
pub const FORCE_EQUIVARIANCE_TOL: f64 = 1e-8;
pub const EXTENSIVITY_TOL: f64 = 1e-8;

/// Maximum errors, each relative to the largest finite-difference magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub force_rel_err: f64,
    /// Zero for molecules, where there is no stress.
    pub stress_rel_err: f64,
    pub gradient_rel_err: f64,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.force_rel_err < FORCE_TOL && self.stress_rel_err < STRESS_TOL && self.gradient_rel_err < GRADIENT_TOL
    }
}

fn rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = analytic.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

pub fn verify_derivatives(model: &CaceModel, sample: &TrainingSample, beta: f64) -> Result<DerivativeReport> {
    let s = &sample.noised;
    let r = model.compute(s)?;

    let h = 1e-4;
    let mut fa = Vec::with_capacity(3 * s.len());
    let mut ff = Vec::with_capacity(3 * s.len());
    for i in 0..s.len() {
        for k in 0..3 {
            let mut p = s.clone();
            p.positions[i][k] += h;
            let ep = model.total_energy(&p)?;
            p.positions[i][k] -= 2.0 * h;
            let em = model.total_energy(&p)?;
            ff.push(-(ep - em) / (2.0 * h));
            fa.push(r.forces[i][k]);
        }
    }
    let force_rel_err = rel_err(&fa, &ff);

    let stress_rel_err = match (r.virial, s.volume()) {
        (Some(w), Some(v)) => {
            let eps = 1e-5;
            let mut sa = Vec::with_capacity(9);
            let mut sf = Vec::with_capacity(9);
            for a in 0..3 {
                for b in 0..3 {
                    let mut g = Mat3::zeros();
                    g[(a, b)] = eps;
                    let ep = model.total_energy(&s.deformed(&g))?;
                    let em = model.total_energy(&s.deformed(&(-g)))?;
                    sf.push((ep - em) / (2.0 * eps) / v);
                    sa.push(w[(a, b)] / v);
                }
            }
            rel_err(&sa, &sf)
        }
        _ => 0.0,
    };

    let (_, grad) = sample_loss_gradient(model, sample, beta)?;
    let mut m = model.clone();
    let p0 = model.params();
    let hp = 1e-5;
    let mut gf = vec![0.0; p0.len()];
    for k in 0..p0.len() {
        let mut p = p0.clone();
        p[k] += hp;
        m.set_params(&p);
        let lp = rm_loss(&m, sample, beta)?;
        p[k] -= 2.0 * hp;
        m.set_params(&p);
        let lm = rm_loss(&m, sample, beta)?;
        gf[k] = (lp - lm) / (2.0 * hp);
    }
    let gradient_rel_err = rel_err(&grad, &gf);

    Ok(DerivativeReport { force_rel_err, stress_rel_err, gradient_rel_err })
}

/// Largest deviations over a set of random rigid motions and relabelings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// `|E' − E| / |E|`.
    pub energy_rel_err: f64,
    /// `max |F' − R F| / max |F|`.
    pub force_rel_err: f64,
    /// `|E(2×2×2) − 8 E| / |8 E|`; zero for molecules.
    pub extensivity_rel_err: f64,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.energy_rel_err < ENERGY_INVARIANCE_TOL
            && self.force_rel_err < FORCE_EQUIVARIANCE_TOL
            && self.extensivity_rel_err < EXTENSIVITY_TOL
    }
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let rho = (1.0 - z * z).sqrt();
    let axis = Vec3::new(rho * phi.cos(), rho * phi.sin(), z);
    rotation_matrix(&axis, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Applies `n_transforms` random rotation + translation + permutation
/// combinations to `s` and compares energies and forces.
pub fn verify_invariances<R: Rng + ?Sized>(
    model: &dyn Potential,
    s: &Structure,
    n_transforms: usize,
    rng: &mut R,
) -> Result<InvarianceReport> {
    let r0 = model.compute(s)?;
    let e_scale = r0.energy.abs().max(f64::MIN_POSITIVE);
    let f_scale = r0.max_force_component().max(f64::MIN_POSITIVE);
    let mut energy_rel_err = 0.0f64;
    let mut force_rel_err = 0.0f64;
    for _ in 0..n_transforms {
        let rot = random_rotation(rng);
        let shift = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let mut perm: Vec<usize> = (0..s.len()).collect();
        perm.shuffle(rng);
        let t = s.rotated(&rot).translated(&shift).permuted(&perm);
        let r = model.compute(&t)?;
        energy_rel_err = energy_rel_err.max((r.energy - r0.energy).abs() / e_scale);
        for (k, &p) in perm.iter().enumerate() {
            let d = (r.forces[k] - rot * r0.forces[p]).amax();
            force_rel_err = force_rel_err.max(d / f_scale);
        }
    }
    let extensivity_rel_err = if s.pbc() {
        let e8 = model.compute(&make_supercell(s, 2, 2, 2)?)?.energy;
        (e8 - 8.0 * r0.energy).abs() / (8.0 * e_scale)
    } else {
        0.0
    };
    Ok(InvarianceReport { energy_rel_err, force_rel_err, extensivity_rel_err })
}

/// A random 2 to 8 atom structure over `elements`, periodic or not, with
/// interatomic distances of at least 0.9 Å.
pub fn random_check_structure<R: Rng + ?Sized>(elements: &[u8], pbc: bool, rng: &mut R) -> Result<Structure> {
    let n = rng.random_range(2..=8usize);
    let mut counts: Vec<(u8, usize)> = Vec::new();
    for _ in 0..n {
        let z = elements[rng.random_range(0..elements.len())];
        match counts.iter_mut().find(|c| c.0 == z) {
            Some(c) => c.1 += 1,
            None => counts.push((z, 1)),
        }
    }
    counts.sort_unstable();
    let spec = GenSpec {
        composition: Composition(counts),
        formula_units: [1, 1],
        pbc,
        min_distance: 0.9,
        molar_volume_range: Some([8.0, 14.0]),
        ..GenSpec::default()
    };
    random_structure(&spec, None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{make_training_sample, NoiseSpec};
    use crate::potential::CaceHyper;
    use crate::structure::cubic_diamond;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper() -> CaceHyper {
        CaceHyper { r_cut: 3.0, n_max: 3, l_max: 2, nu_max: 3, n_embedding: 1, hidden: vec![4] }
    }

    #[test]
    fn fresh_model_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = CaceModel::new(hyper(), &[6], &mut rng).unwrap();
        let spec = NoiseSpec { d_max: 0.3, gamma_max: 0.05, ..NoiseSpec::default() };
        let sample = make_training_sample(&cubic_diamond(6, 3.567), &spec, &mut rng).unwrap();
        let rep = verify_derivatives(&model, &sample, 1.0).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.force_rel_err.is_finite() && rep.stress_rel_err.is_finite() && rep.gradient_rel_err.is_finite());
    }

    #[test]
    fn zero_weight_model_has_zero_forces() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut model = CaceModel::new(hyper(), &[6], &mut rng).unwrap();
        let n_emb = model.embeddings.len();
        let mut p = model.params();
        p[n_emb..].iter_mut().for_each(|x| *x = 0.0);
        model.set_params(&p);
        let spec = NoiseSpec { d_max: 0.3, gamma_max: 0.05, ..NoiseSpec::default() };
        let sample = make_training_sample(&cubic_diamond(6, 3.567), &spec, &mut rng).unwrap();
        assert!(model.compute(&sample.noised).unwrap().forces.iter().all(|f| f.norm() == 0.0));
        let rep = verify_derivatives(&model, &sample, 1.0).unwrap();
        assert_eq!(rep.force_rel_err, 0.0);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn invariances_hold_for_random_structures() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = CaceModel::new(CaceHyper { n_embedding: 2, ..hyper() }, &[1, 6], &mut rng).unwrap();
        for pbc in [true, false] {
            let s = random_check_structure(&[1, 6], pbc, &mut rng).unwrap();
            assert!((2..=8).contains(&s.len()));
            assert_eq!(s.pbc(), pbc);
            let rep = verify_invariances(&model, &s, 5, &mut rng).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn invariance_check_detects_a_broken_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let s = random_check_structure(&[6], false, &mut rng).unwrap();
        let tethered = crate::potential::QuadraticWell::new(1.0, vec![Vec3::zeros(); s.len()]);
        let rep = verify_invariances(&tethered, &s, 3, &mut rng).unwrap();
        assert!(!rep.passed(), "{rep:?}");
        assert!(rep.energy_rel_err > 1e-3);
    }
}
