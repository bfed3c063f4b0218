//! Local optimisers over an extended coordinate vector: atomic positions and,
//! for periodic cells, a deformation gradient.
//!
//! With cell relaxation the coordinates are `[x_ref (3N), c·F (9)]`, where the
//! current cell is `cell0·Fᵀ`, positions are `x = F x_ref`, and `c = N`. The
//! conjugate forces are `Fᵀ f_i` and `−W F⁻ᵀ / c` with `W = ∂E/∂γ`.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::structure::{Mat3, Structure, Vec3};

/// Convergence and step controls shared by all optimisers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxSettings {
    /// Converged when every force component (atoms and cell) is below this.
    pub f_tol: f64,
    pub max_steps: usize,
    pub relax_cell: bool,
    /// Largest allowed step length of the whole coordinate vector.
    pub max_step: f64,
}

impl Default for RelaxSettings {
    fn default() -> Self {
        RelaxSettings { f_tol: 1e-3, max_steps: 2000, relax_cell: true, max_step: 0.2 }
    }
}

impl RelaxSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_tol > 0.0) {
            return Err(Error::Config("relax: f_tol must be > 0".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("relax: max_step must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed {
    pub structure: Structure,
    pub energy: f64,
    pub initial_energy: f64,
    pub converged: bool,
    pub steps: usize,
    pub max_force: f64,
    /// Energy after every evaluation, starting with the initial state.
    pub energies: Vec<f64>,
}

/// Maps between a structure and the flat coordinate vector.
pub struct ExtendedSystem<'a> {
    potential: &'a dyn Potential,
    species: Vec<u8>,
    cell0: Option<Mat3>,
    relax_cell: bool,
    cell_factor: f64,
}

pub struct Evaluation {
    pub energy: f64,
    pub forces: Vec<f64>,
    pub max_force: f64,
}

impl<'a> ExtendedSystem<'a> {
    pub fn new(potential: &'a dyn Potential, s: &Structure, relax_cell: bool) -> (Self, Vec<f64>) {
        let relax_cell = relax_cell && s.pbc();
        let mut x: Vec<f64> = s.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        let cell_factor = s.len() as f64;
        if relax_cell {
            x.extend([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0].map(|v: f64| v * cell_factor));
        }
        (ExtendedSystem { potential, species: s.species.clone(), cell0: s.cell, relax_cell, cell_factor }, x)
    }

    fn n(&self) -> usize {
        self.species.len()
    }

    fn deformation(&self, x: &[f64]) -> Mat3 {
        if self.relax_cell {
            let n3 = 3 * self.n();
            Mat3::from_row_slice(&x[n3..n3 + 9]) / self.cell_factor
        } else {
            Mat3::identity()
        }
    }

    pub fn structure(&self, x: &[f64]) -> Structure {
        let f = self.deformation(x);
        let positions = (0..self.n()).map(|i| f * Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect();
        Structure { species: self.species.clone(), positions, cell: self.cell0.map(|c| c * f.transpose()) }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let s = self.structure(x);
        s.validate()?;
        let r = self.potential.compute(&s)?;
        let f = self.deformation(x);
        let mut forces = Vec::with_capacity(x.len());
        let mut max_force: f64 = 0.0;
        for fi in &r.forces {
            max_force = max_force.max(fi.amax());
            let g = f.transpose() * fi;
            forces.extend([g.x, g.y, g.z]);
        }
        if self.relax_cell {
            let w = r
                .virial
                .ok_or_else(|| Error::Unsupported(format!("potential '{}' gave no virial", self.potential.name())))?;
            let inv = f.try_inverse().ok_or_else(|| Error::InvalidCell("singular deformation".into()))?;
            let gc = -(w * inv.transpose()) / self.cell_factor;
            for a in 0..3 {
                for b in 0..3 {
                    max_force = max_force.max(gc[(a, b)].abs());
                    forces.push(gc[(a, b)]);
                }
            }
        }
        Ok(Evaluation { energy: r.energy, forces, max_force })
    }
}

pub trait Optimizer: Send + Sync {
    fn name(&self) -> &str;
    fn relax(&self, potential: &dyn Potential, s: &Structure, settings: &RelaxSettings) -> Result<Relaxed>;
}

/// FIRE parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fire {
    pub dt_start: f64,
    pub dt_max: f64,
    pub n_min: usize,
    pub f_inc: f64,
    pub f_dec: f64,
    pub alpha_start: f64,
    pub f_alpha: f64,
}

impl Default for Fire {
    fn default() -> Self {
        Fire { dt_start: 0.01, dt_max: 0.1, n_min: 5, f_inc: 1.1, f_dec: 0.5, alpha_start: 0.1, f_alpha: 0.99 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diverged(step: usize, reason: &str, trajectory: Vec<(f64, Vec<f64>)>) -> Error {
    Error::RelaxDiverged { step, reason: reason.into(), trajectory }
}

const TRAJECTORY_TAIL: usize = 20;

fn push_tail(tail: &mut Vec<(f64, Vec<f64>)>, e: f64, x: &[f64]) {
    if tail.len() == TRAJECTORY_TAIL {
        tail.remove(0);
    }
    tail.push((e, x.to_vec()));
}

fn check_finite(ev: &Evaluation, step: usize, tail: &[(f64, Vec<f64>)]) -> Result<()> {
    if !ev.energy.is_finite() || ev.forces.iter().any(|f| !f.is_finite()) {
        return Err(diverged(step, "non-finite energy or forces", tail.to_vec()));
    }
    Ok(())
}

fn cap_step(dx: &mut [f64], max_step: f64) {
    let n = norm(dx);
    if n > max_step {
        dx.iter_mut().for_each(|d| *d *= max_step / n);
    }
}

impl Optimizer for Fire {
    fn name(&self) -> &str {
        "fire"
    }

    fn relax(&self, potential: &dyn Potential, s: &Structure, settings: &RelaxSettings) -> Result<Relaxed> {
        settings.validate()?;
        let (sys, mut x) = ExtendedSystem::new(potential, s, settings.relax_cell);
        let mut v = vec![0.0; x.len()];
        let mut dt = self.dt_start;
        let mut alpha = self.alpha_start;
        let mut n_pos = 0usize;
        let mut tail = Vec::new();
        let mut ev = sys.evaluate(&x)?;
        check_finite(&ev, 0, &tail)?;
        let initial_energy = ev.energy;
        let mut energies = vec![ev.energy];
        let mut steps = 0;
        while ev.max_force >= settings.f_tol && steps < settings.max_steps {
            let f = &ev.forces;
            let p: f64 = f.iter().zip(&v).map(|(a, b)| a * b).sum();
            if p > 0.0 {
                let (vn, fn_) = (norm(&v), norm(f));
                if fn_ > 0.0 {
                    for k in 0..v.len() {
                        v[k] = (1.0 - alpha) * v[k] + alpha * vn * f[k] / fn_;
                    }
                }
                if n_pos > self.n_min {
                    dt = (dt * self.f_inc).min(self.dt_max);
                    alpha *= self.f_alpha;
                }
                n_pos += 1;
            } else {
                v.iter_mut().for_each(|x| *x = 0.0);
                dt *= self.f_dec;
                alpha = self.alpha_start;
                n_pos = 0;
            }
            for k in 0..v.len() {
                v[k] += dt * f[k];
            }
            let mut dx: Vec<f64> = v.iter().map(|vk| dt * vk).collect();
            cap_step(&mut dx, settings.max_step);
            push_tail(&mut tail, ev.energy, &x);
            for k in 0..x.len() {
                x[k] += dx[k];
            }
            steps += 1;
            ev = sys.evaluate(&x).map_err(|e| match e {
                Error::InvalidCell(r) | Error::InvalidStructure(r) => diverged(steps, &r, tail.clone()),
                other => other,
            })?;
            check_finite(&ev, steps, &tail)?;
            energies.push(ev.energy);
        }
        Ok(Relaxed {
            structure: sys.structure(&x),
            energy: ev.energy,
            initial_energy,
            converged: ev.max_force < settings.f_tol,
            steps,
            max_force: ev.max_force,
            energies,
        })
    }
}

/// Gradient descent with a backtracking step: grows on success, halves on an
/// energy increase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteepestDescent {
    pub step: f64,
}

impl Default for SteepestDescent {
    fn default() -> Self {
        SteepestDescent { step: 0.05 }
    }
}

impl Optimizer for SteepestDescent {
    fn name(&self) -> &str {
        "steepest-descent"
    }

    fn relax(&self, potential: &dyn Potential, s: &Structure, settings: &RelaxSettings) -> Result<Relaxed> {
        settings.validate()?;
        let (sys, mut x) = ExtendedSystem::new(potential, s, settings.relax_cell);
        let mut tail = Vec::new();
        let mut ev = sys.evaluate(&x)?;
        check_finite(&ev, 0, &tail)?;
        let initial_energy = ev.energy;
        let mut energies = vec![ev.energy];
        let mut h = self.step;
        let mut steps = 0;
        while ev.max_force >= settings.f_tol && steps < settings.max_steps {
            let mut dx: Vec<f64> = ev.forces.iter().map(|f| h * f).collect();
            cap_step(&mut dx, settings.max_step);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            steps += 1;
            let accepted = match sys.evaluate(&trial) {
                Ok(t) if t.energy.is_finite() && t.energy <= ev.energy => {
                    push_tail(&mut tail, ev.energy, &x);
                    x = trial;
                    ev = t;
                    true
                }
                Ok(_) | Err(Error::InvalidCell(_)) | Err(Error::InvalidStructure(_)) => false,
                Err(e) => return Err(e),
            };
            if accepted {
                h *= 1.2;
                energies.push(ev.energy);
            } else {
                h *= 0.5;
                if h < 1e-14 {
                    break;
                }
            }
        }
        Ok(Relaxed {
            structure: sys.structure(&x),
            energy: ev.energy,
            initial_energy,
            converged: ev.max_force < settings.f_tol,
            steps,
            max_force: ev.max_force,
            energies,
        })
    }
}

type Factory = Box<dyn Fn() -> Box<dyn Optimizer> + Send + Sync>;

/// Optimisers selectable by name.
pub struct OptimizerRegistry {
    entries: IndexMap<String, Factory>,
}

impl OptimizerRegistry {
    pub fn empty() -> Self {
        OptimizerRegistry { entries: IndexMap::new() }
    }

    /// `fire` and `steepest-descent` with default parameters.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("fire", || Box::new(Fire::default()));
        r.register("steepest-descent", || Box::new(SteepestDescent::default()));
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Box<dyn Optimizer> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn Optimizer>> {
        self.entries.get(name).map(|f| f()).ok_or_else(|| {
            Error::Config(format!(
                "unknown optimizer '{name}' (available: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}
