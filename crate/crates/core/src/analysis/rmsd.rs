//! Root-mean-square deviation after optimal rigid superposition.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::structure::{Structure, Vec3};

/// Kabsch RMSD between two conformations with the same atom order. With
/// `heavy_only`, hydrogens are excluded from both the fit and the deviation.
pub fn kabsch_rmsd(a: &Structure, b: &Structure, heavy_only: bool) -> Result<f64> {
    if a.species != b.species {
        return Err(Error::InvalidInput("RMSD needs identical species in the same order".into()));
    }
    let keep: Vec<usize> = (0..a.len()).filter(|&i| !heavy_only || a.species[i] != 1).collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput("no atoms left for RMSD".into()));
    }
    let n = keep.len() as f64;
    let ca = keep.iter().map(|&i| a.positions[i]).sum::<Vec3>() / n;
    let cb = keep.iter().map(|&i| b.positions[i]).sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for &i in &keep {
        h += (a.positions[i] - ca) * (b.positions[i] - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rot = v_t.transpose() * fix * u.transpose();
    let sq: f64 = keep.iter().map(|&i| (rot * (a.positions[i] - ca) - (b.positions[i] - cb)).norm_squared()).sum();
    Ok((sq / n).sqrt())
}
