//! Response-matching loss and its exact parameter gradient.
//!
//! `L = Σ_i |F_i − F̃_i|² + β |S − σ̃|²` with model forces `F = −∂E/∂r` and
//! model restoring stress `S = −(1/V) ∂E/∂γ`, so that a model with
//! `E ≈ ½ V γ:C:γ` matches `σ̃ = −Cγ`. The stress term is absent for molecules.
//!
//! The gradient needs `∂F/∂θ`. With `v = F − F̃` and `w = S − σ̃`,
//! `∂L/∂θ = −2 D(∂E/∂θ)` where `D` is the directional derivative moving atom
//! `i` along `v_i` and straining the cell along `(β/V) w`. The kernel is run
//! once on dual numbers carrying that direction on every edge vector.

use crate::error::Result;
use crate::noise::TrainingSample;
use crate::potential::cace::{forces_from_edges, virial_from_edges, CaceModel, Graph};
use crate::potential::scalar::Dual;
use crate::structure::{Mat3, Vec3};

/// Per-sample loss with the residuals that make it up.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEval {
    pub loss: f64,
    pub forces: Vec<Vec3>,
    /// Model restoring stress; `None` for molecules.
    pub stress: Option<Mat3>,
    pub force_sq_err: f64,
    pub stress_sq_err: f64,
}

fn evaluate_graph(model: &CaceModel, sample: &TrainingSample, beta: f64) -> Result<(Graph<f64>, SampleEval)> {
    let s = &sample.noised;
    let nl = model.neighbor_list(s)?;
    let g = model.graph(s, &nl)?;
    let out = model.kernel(&g, false);
    let forces: Vec<Vec3> =
        forces_from_edges(s.len(), &g.edges, &out.edge_grad).into_iter().map(|f| Vec3::new(f[0], f[1], f[2])).collect();
    let force_sq_err: f64 = forces.iter().zip(&sample.target_forces).map(|(f, t)| (f - t).norm_squared()).sum();
    let (stress, stress_sq_err) = match s.volume() {
        Some(v) => {
            let w = virial_from_edges(&g.vectors, &out.edge_grad);
            let st = Mat3::from_fn(|a, b| -w[a][b] / v);
            (Some(st), (st - sample.target_stress).norm_squared())
        }
        None => (None, 0.0),
    };
    let eval = SampleEval { loss: force_sq_err + beta * stress_sq_err, forces, stress, force_sq_err, stress_sq_err };
    Ok((g, eval))
}

pub fn evaluate_sample(model: &CaceModel, sample: &TrainingSample, beta: f64) -> Result<SampleEval> {
    Ok(evaluate_graph(model, sample, beta)?.1)
}

pub fn rm_loss(model: &CaceModel, sample: &TrainingSample, beta: f64) -> Result<f64> {
    Ok(evaluate_sample(model, sample, beta)?.loss)
}

/// Loss and `∂L/∂θ` for one sample, in [`CaceModel::params`] order.
pub fn sample_loss_gradient(model: &CaceModel, sample: &TrainingSample, beta: f64) -> Result<(SampleEval, Vec<f64>)> {
    let (g, eval) = evaluate_graph(model, sample, beta)?;
    let v: Vec<Vec3> = eval.forces.iter().zip(&sample.target_forces).map(|(f, t)| f - t).collect();
    let w = match (eval.stress, sample.noised.volume()) {
        (Some(st), Some(vol)) => (st - sample.target_stress) * (beta / vol),
        _ => Mat3::zeros(),
    };
    let vectors = g
        .edges
        .iter()
        .zip(&g.vectors)
        .map(|(&(i, j), d)| {
            let dv = Vec3::new(d[0], d[1], d[2]);
            let t = v[j] - v[i] + w * dv;
            std::array::from_fn(|k| Dual::new(d[k], t[k]))
        })
        .collect();
    let gd = Graph { species: g.species, edges: g.edges, vectors };
    let out = model.kernel(&gd, true);
    let grad = out.param_grad.iter().map(|x| -2.0 * x.d).collect();
    Ok((eval, grad))
}

/// Summed loss and gradient over a batch, accumulated in batch order.
pub fn loss_param_gradient(model: &CaceModel, batch: &[TrainingSample], beta: f64) -> Result<(f64, Vec<f64>)> {
    use rayon::prelude::*;
    let parts = batch.par_iter().map(|s| sample_loss_gradient(model, s, beta)).collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for (e, g) in parts {
        loss += e.loss;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{make_training_sample, NoiseSpec};
    use crate::potential::{CaceHyper, Potential};
    use crate::structure::{cubic_diamond, Structure};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(elements: &[u8], seed: u64) -> CaceModel {
        let h = CaceHyper { r_cut: 3.0, n_max: 2, l_max: 2, nu_max: 3, n_embedding: 2, hidden: vec![4] };
        CaceModel::new(h, elements, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn fd_check(model: &mut CaceModel, sample: &TrainingSample, beta: f64) {
        let (_, g) = sample_loss_gradient(model, sample, beta).unwrap();
        let p0 = model.params();
        let h = 1e-5;
        let mut fd = vec![0.0; p0.len()];
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            model.set_params(&p);
            let lp = rm_loss(model, sample, beta).unwrap();
            p[k] -= 2.0 * h;
            model.set_params(&p);
            let lm = rm_loss(model, sample, beta).unwrap();
            fd[k] = (lp - lm) / (2.0 * h);
        }
        model.set_params(&p0);
        let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale < 1e-4, "relative gradient error {}", err / scale);
    }

    #[test]
    fn zero_model_single_atom_loss_is_target_norm() {
        let mut model = tiny_model(&[6], 1);
        let zeros = vec![0.0; model.n_params()];
        model.set_params(&zeros);
        let s = Structure::molecule(vec![6], vec![Vec3::zeros()]).unwrap();
        let sample = TrainingSample {
            noised: s,
            target_forces: vec![Vec3::new(1.0, 0.0, 0.0)],
            target_stress: Mat3::zeros(),
            displacements: vec![Vec3::zeros()],
            strain: Mat3::zeros(),
        };
        assert_eq!(rm_loss(&model, &sample, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn matching_targets_give_zero_loss() {
        let model = tiny_model(&[1, 6], 2);
        let s = Structure::molecule(
            vec![6, 1, 1],
            vec![Vec3::zeros(), Vec3::new(1.1, 0.0, 0.0), Vec3::new(-0.3, 1.0, 0.2)],
        )
        .unwrap();
        let r = model.compute(&s).unwrap();
        let sample = TrainingSample {
            noised: s,
            target_forces: r.forces,
            target_stress: Mat3::zeros(),
            displacements: vec![Vec3::zeros(); 3],
            strain: Mat3::zeros(),
        };
        assert!(rm_loss(&model, &sample, 0.0).unwrap() < 1e-28);
    }

    #[test]
    fn loss_matches_independent_arithmetic() {
        let model = tiny_model(&[6], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = NoiseSpec { d_max: 0.3, gamma_max: 0.05, ..NoiseSpec::default() };
        let sample = make_training_sample(&cubic_diamond(6, 3.567), &spec, &mut rng).unwrap();
        let r = model.compute(&sample.noised).unwrap();
        let v = sample.noised.volume().unwrap();
        let s_model = -r.virial.unwrap() / v;
        let mut expect = 0.0;
        for (f, t) in r.forces.iter().zip(&sample.target_forces) {
            for k in 0..3 {
                expect += (f[k] - t[k]).powi(2);
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                expect += 0.7 * (s_model[(a, b)] - sample.target_stress[(a, b)]).powi(2);
            }
        }
        assert_abs_diff_eq!(rm_loss(&model, &sample, 0.7).unwrap(), expect, epsilon = 1e-12 * expect);
    }

    #[test]
    fn gradient_matches_finite_differences_two_atoms() {
        let mut model = tiny_model(&[1, 6], 4);
        let s = Structure::molecule(vec![6, 1], vec![Vec3::zeros(), Vec3::new(0.7, 0.5, -0.6)]).unwrap();
        let sample = TrainingSample {
            noised: s,
            target_forces: vec![Vec3::new(0.3, -0.2, 0.1), Vec3::new(-0.3, 0.2, -0.1)],
            target_stress: Mat3::zeros(),
            displacements: vec![Vec3::zeros(); 2],
            strain: Mat3::zeros(),
        };
        fd_check(&mut model, &sample, 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences_periodic_with_stress() {
        let mut model = tiny_model(&[6], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = NoiseSpec { d_max: 0.4, gamma_max: 0.08, ..NoiseSpec::default() };
        let sample = make_training_sample(&cubic_diamond(6, 3.567), &spec, &mut rng).unwrap();
        fd_check(&mut model, &sample, 2.0);
    }

    #[test]
    fn batch_gradient_is_sum_and_duplicates_double() {
        let model = tiny_model(&[6], 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = NoiseSpec { d_max: 0.4, gamma_max: 0.05, ..NoiseSpec::default() };
        let s = cubic_diamond(6, 3.567);
        let a = make_training_sample(&s, &spec, &mut rng).unwrap();
        let b = make_training_sample(&s, &spec, &mut rng).unwrap();
        let (_, ga) = sample_loss_gradient(&model, &a, 1.0).unwrap();
        let (_, gb) = sample_loss_gradient(&model, &b, 1.0).unwrap();
        let (_, gab) = loss_param_gradient(&model, &[a.clone(), b], 1.0).unwrap();
        for k in 0..ga.len() {
            assert_abs_diff_eq!(gab[k], ga[k] + gb[k], epsilon = 1e-10 * (1.0 + gab[k].abs()));
        }
        let (_, gaa) = loss_param_gradient(&model, &[a.clone(), a], 1.0).unwrap();
        for k in 0..ga.len() {
            assert_abs_diff_eq!(gaa[k], 2.0 * ga[k], epsilon = 1e-12 * (1.0 + ga[k].abs()));
        }
    }
}
