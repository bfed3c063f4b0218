//! Potentials: the learned CACE model and a quadratic bowl used to test optimisers.

pub mod basis;
pub mod cace;
pub mod checkpoint;
pub mod mlp;
pub mod quadratic;
pub mod scalar;

pub use cace::{CaceHyper, CaceModel};
pub use quadratic::QuadraticWell;

use crate::error::Result;
use crate::structure::{Mat3, Structure, Vec3};

/// Energy, forces `−∂E/∂r`, and for periodic input the virial `∂E/∂γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub energy: f64,
    pub forces: Vec<Vec3>,
    pub virial: Option<Mat3>,
}

impl Response {
    /// `σ = (1/V) ∂E/∂γ`.
    pub fn stress(&self, s: &Structure) -> Option<Mat3> {
        Some(self.virial? / s.volume()?)
    }

    pub fn max_force_component(&self) -> f64 {
        self.forces.iter().map(|f| f.amax()).fold(0.0, f64::max)
    }
}

pub trait Potential: Send + Sync {
    fn name(&self) -> &str;
    fn compute(&self, s: &Structure) -> Result<Response>;
}

/// Virial stress `(1/V) ∂E/∂γ`; errors on molecules.
pub fn virial_stress(p: &dyn Potential, s: &Structure) -> Result<Mat3> {
    if !s.pbc() {
        return Err(crate::Error::Unsupported("stress of a non-periodic structure".into()));
    }
    let r = p.compute(s)?;
    Ok(r.stress(s).expect("periodic response carries a virial"))
}
