//! `E = ½ k Σ |r_i − r0_i|²`, independent of the cell.

use super::{Potential, Response};
use crate::error::{Error, Result};
use crate::structure::{Mat3, Structure, Vec3};

#[derive(Debug, Clone)]
pub struct QuadraticWell {
    pub k: f64,
    pub minimum: Vec<Vec3>,
}

impl QuadraticWell {
    pub fn new(k: f64, minimum: Vec<Vec3>) -> Self {
        QuadraticWell { k, minimum }
    }
}

impl Potential for QuadraticWell {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn compute(&self, s: &Structure) -> Result<Response> {
        if s.len() != self.minimum.len() {
            return Err(Error::InvalidInput(format!(
                "quadratic well has {} sites, structure has {} atoms",
                self.minimum.len(),
                s.len()
            )));
        }
        let mut energy = 0.0;
        let forces = s
            .positions
            .iter()
            .zip(&self.minimum)
            .map(|(r, r0)| {
                let d = r - r0;
                energy += 0.5 * self.k * d.norm_squared();
                -self.k * d
            })
            .collect();
        Ok(Response { energy, forces, virial: s.pbc().then(Mat3::zeros) })
    }
}
