//! Fitting the potential to pseudo forces and stresses on freshly noised samples.

pub mod adam;
pub mod loss;
pub mod verify;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use loss::{evaluate_sample, loss_param_gradient, rm_loss, sample_loss_gradient, SampleEval};
pub use verify::{random_check_structure, verify_derivatives, verify_invariances, DerivativeReport, InvarianceReport};

use crate::error::{Error, Result};
use crate::noise::{make_training_sample, NoiseSpec, TrainingSample};
use crate::potential::{CaceHyper, CaceModel};
use crate::seeding;
use crate::structure::Structure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the stress term.
    pub beta: f64,
    pub learning_rate: f64,
    /// Learning rate reached by the last epoch (cosine decay); equal to
    /// `learning_rate` for a constant schedule.
    pub final_learning_rate: f64,
    /// Noised samples per optimiser step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of structures held out. With a single structure, fresh noise
    /// draws of it are used for validation instead.
    pub validation_fraction: f64,
    /// Rescale the batch gradient to at most this norm.
    pub gradient_clip: Option<f64>,
    /// Epochs between checkpoint callbacks; 0 disables them.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 1.0,
            learning_rate: 1e-3,
            final_learning_rate: 1e-3,
            batch_size: 4,
            epochs: 500,
            seed: 0,
            validation_fraction: 0.1,
            gradient_clip: None,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.beta >= 0.0) {
            return bad("beta must be >= 0");
        }
        if !(self.learning_rate > 0.0) || !(self.final_learning_rate > 0.0) {
            return bad("learning rates must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0) {
                return bad("gradient_clip must be > 0");
            }
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        let c = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        self.final_learning_rate + (self.learning_rate - self.final_learning_rate) * c
    }
}

/// Aggregate errors over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean per-sample loss.
    pub loss: f64,
    /// `sqrt(mean_i |F_i − F̃_i|²)` over atoms.
    pub force_rmse: f64,
    /// `sqrt(mean |S_ab − σ̃_ab|²)` over periodic samples and components.
    pub stress_rmse: f64,
    /// Mean `|F̃_i|`, for scale.
    pub mean_target_force: f64,
}

impl Metrics {
    fn from_evals(samples: &[TrainingSample], evals: &[SampleEval]) -> Metrics {
        let n = evals.len().max(1) as f64;
        let atoms: usize = samples.iter().map(|s| s.noised.len()).sum();
        let periodic = samples.iter().filter(|s| s.noised.pbc()).count();
        let fsq: f64 = evals.iter().map(|e| e.force_sq_err).sum();
        let ssq: f64 = evals.iter().map(|e| e.stress_sq_err).sum();
        let tf: f64 = samples.iter().flat_map(|s| s.target_forces.iter().map(|f| f.norm())).sum();
        Metrics {
            loss: evals.iter().map(|e| e.loss).sum::<f64>() / n,
            force_rmse: (fsq / atoms.max(1) as f64).sqrt(),
            stress_rmse: if periodic > 0 { (ssq / (9 * periodic) as f64).sqrt() } else { 0.0 },
            mean_target_force: tf / atoms.max(1) as f64,
        }
    }
}

pub fn evaluate_metrics(model: &CaceModel, samples: &[TrainingSample], beta: f64) -> Result<Metrics> {
    let evals = samples.par_iter().map(|s| evaluate_sample(model, s, beta)).collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_evals(samples, &evals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train: Metrics,
    pub validation: Metrics,
    /// Lowest validation loss so far.
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// CSV with columns `epoch,train_loss,val_loss,force_rmse,stress_rmse`
    /// (the two RMSE columns are on the validation set).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,force_rmse,stress_rmse")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{:.8e},{:.8e},{:.8e},{:.8e}",
                r.epoch, r.train.loss, r.validation.loss, r.validation.force_rmse, r.validation.stress_rmse
            )?;
        }
        Ok(())
    }
}

/// Sorted set of elements present in `structures`.
pub fn element_table(structures: &[Structure]) -> Vec<u8> {
    let mut z: Vec<u8> = structures.iter().flat_map(|s| s.species.iter().copied()).collect();
    z.sort_unstable();
    z.dedup();
    z
}

fn draw_samples(
    structures: &[(usize, &Structure)],
    spec: &NoiseSpec,
    seed: u64,
    tag: u64,
    count: usize,
) -> Result<Vec<TrainingSample>> {
    let jobs: Vec<(usize, &Structure, usize)> =
        structures.iter().flat_map(|&(i, s)| (0..count).map(move |k| (i, s, k))).collect();
    jobs.par_iter()
        .map(|&(i, s, k)| {
            let mut rng = seeding::stream(seed, &[tag, i as u64, k as u64]);
            make_training_sample(s, spec, &mut rng)
        })
        .collect()
}

const TAG_INIT: u64 = 1;
const TAG_NORMALIZATION: u64 = 2;
const TAG_VALIDATION: u64 = 3;
const TAG_SPLIT: u64 = 4;
const TAG_EPOCH: u64 = 1000;

/// Builds a fresh model for the elements of `dataset` and trains it.
pub fn train(
    dataset: &[Structure],
    spec: &NoiseSpec,
    hyper: &CaceHyper,
    cfg: &TrainConfig,
) -> Result<(CaceModel, TrainReport)> {
    let model = init_model(dataset, hyper, cfg.seed)?;
    fit(model, dataset, spec, cfg, None)
}

/// Untrained model covering the elements of `dataset`, as `train` builds it.
pub fn init_model(dataset: &[Structure], hyper: &CaceHyper, seed: u64) -> Result<CaceModel> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let mut rng = seeding::stream(seed, &[TAG_INIT]);
    CaceModel::new(hyper.clone(), &element_table(dataset), &mut rng)
}

pub type CheckpointHook<'a> = &'a mut dyn FnMut(usize, &CaceModel) -> Result<()>;

/// Trains `model` and returns it with the parameters of the best validation epoch.
pub fn fit(
    mut model: CaceModel,
    dataset: &[Structure],
    spec: &NoiseSpec,
    cfg: &TrainConfig,
    mut hook: Option<CheckpointHook>,
) -> Result<(CaceModel, TrainReport)> {
    spec.validate()?;
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let start = Instant::now();
    let indexed: Vec<(usize, &Structure)> = dataset.iter().enumerate().collect();
    let (train_set, val_set) = if dataset.len() == 1 {
        (indexed.clone(), indexed.clone())
    } else {
        let mut order = indexed.clone();
        order.shuffle(&mut seeding::stream(cfg.seed, &[TAG_SPLIT]));
        let n_val = (cfg.validation_fraction * dataset.len() as f64).round() as usize;
        let n_val = n_val.min(dataset.len() - 1);
        if n_val == 0 {
            (indexed.clone(), indexed.clone())
        } else {
            let val = order[..n_val].to_vec();
            let train = order[n_val..].to_vec();
            (train, val)
        }
    };
    let n_noise = spec.n_noise_per_structure;

    let norm_samples = draw_samples(&train_set, spec, cfg.seed, TAG_NORMALIZATION, n_noise)?;
    let norm_structures: Vec<Structure> = norm_samples.into_iter().map(|s| s.noised).collect();
    model.fit_feature_normalization(&norm_structures)?;

    let val_samples = draw_samples(&val_set, spec, cfg.seed, TAG_VALIDATION, n_noise)?;
    let mut params = model.params();
    let mut opt = Adam::new(params.len(), cfg.learning_rate);
    let mut best_params = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut samples = draw_samples(&train_set, spec, cfg.seed, TAG_EPOCH + epoch as u64, n_noise)?;
        samples.shuffle(&mut seeding::stream(cfg.seed, &[TAG_EPOCH + epoch as u64, u64::MAX]));
        opt.lr = cfg.lr_at(epoch);
        let mut evals = Vec::with_capacity(samples.len());
        for batch in samples.chunks(cfg.batch_size) {
            model.set_params(&params);
            let parts =
                batch.par_iter().map(|s| sample_loss_gradient(&model, s, cfg.beta)).collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; params.len()];
            for (e, g) in parts {
                if !e.loss.is_finite() {
                    return Err(Error::TrainDiverged { epoch, reason: format!("non-finite training loss {}", e.loss) });
                }
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
                evals.push(e);
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainDiverged { epoch, reason: "non-finite gradient".into() });
            }
            if let Some(clip) = cfg.gradient_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            opt.step(&mut params, &grad);
        }
        model.set_params(&params);
        let train_metrics = Metrics::from_evals(&samples, &evals);
        let val_metrics = evaluate_metrics(&model, &val_samples, cfg.beta)?;
        if !val_metrics.loss.is_finite() {
            return Err(Error::TrainDiverged {
                epoch,
                reason: format!("non-finite validation loss {}", val_metrics.loss),
            });
        }
        if val_metrics.loss < best_loss {
            best_loss = val_metrics.loss;
            best_params.clone_from(&params);
            best_epoch = epoch;
        }
        log::debug!(
            "epoch {epoch}: train {:.4e} val {:.4e} force rmse {:.4e} stress rmse {:.4e}",
            train_metrics.loss,
            val_metrics.loss,
            val_metrics.force_rmse,
            val_metrics.stress_rmse
        );
        records.push(EpochRecord {
            epoch,
            learning_rate: opt.lr,
            train: train_metrics,
            validation: val_metrics,
            best_validation_loss: best_loss,
        });
        if let Some(h) = hook.as_mut() {
            if cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0 {
                h(epoch, &model)?;
            }
        }
    }
    model.set_params(&best_params);
    Ok((model, TrainReport { epochs: records, best_epoch, wall_seconds: start.elapsed().as_secs_f64() }))
}
