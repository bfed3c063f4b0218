//! Atomic structures, periodic cells and minimum-image geometry.
//!
//! Cells are stored as 3×3 matrices whose *rows* are the lattice vectors, so a
//! fractional coordinate row-vector `f` maps to Cartesian `x = f·H`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Species, Cartesian positions (Å) and an optional periodic cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub species: Vec<u8>,
    pub positions: Vec<Vec3>,
    /// Lattice vectors as rows. `None` for molecules.
    pub cell: Option<Mat3>,
}

impl Structure {
    pub fn new(species: Vec<u8>, positions: Vec<Vec3>, cell: Option<Mat3>) -> Result<Self> {
        let s = Structure { species, positions, cell };
        s.validate()?;
        Ok(s)
    }

    pub fn molecule(species: Vec<u8>, positions: Vec<Vec3>) -> Result<Self> {
        Self::new(species, positions, None)
    }

    pub fn periodic(species: Vec<u8>, positions: Vec<Vec3>, cell: Mat3) -> Result<Self> {
        Self::new(species, positions, Some(cell))
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidStructure("structure has no atoms".into()));
        }
        if self.species.len() != self.positions.len() {
            return Err(Error::InvalidStructure(format!(
                "{} species for {} positions",
                self.species.len(),
                self.positions.len()
            )));
        }
        if let Some(z) = self.species.iter().find(|z| !(1..=118).contains(*z)) {
            return Err(Error::InvalidStructure(format!("invalid atomic number {z}")));
        }
        if self.positions.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidStructure("non-finite position".into()));
        }
        if let Some(cell) = &self.cell {
            check_cell(cell)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn pbc(&self) -> bool {
        self.cell.is_some()
    }

    pub fn volume(&self) -> Option<f64> {
        self.cell.map(|c| c.determinant())
    }

    /// Cell volume per atom (Å³/atom) for periodic structures.
    pub fn molar_volume(&self) -> Option<f64> {
        self.volume().map(|v| v / self.len() as f64)
    }

    /// Element → count, sorted by atomic number.
    pub fn composition(&self) -> Vec<(u8, usize)> {
        let mut out: Vec<(u8, usize)> = Vec::new();
        for &z in &self.species {
            match out.iter_mut().find(|e| e.0 == z) {
                Some(e) => e.1 += 1,
                None => out.push((z, 1)),
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }

    pub fn fractional(&self) -> Result<Vec<Vec3>> {
        let cell = self.cell.ok_or_else(|| Error::Unsupported("fractional coordinates need a cell".into()))?;
        let inv_t = cell_inverse(&cell)?.transpose();
        Ok(self.positions.iter().map(|x| inv_t * x).collect())
    }

    /// Minimum-image vector from atom `a` to atom `b`.
    pub fn displacement(&self, a: usize, b: usize) -> Result<Vec3> {
        match &self.cell {
            Some(cell) => minimum_image_displacement(cell, &self.positions[a], &self.positions[b]),
            None => Ok(self.positions[b] - self.positions[a]),
        }
    }

    /// Applies the homogeneous deformation `x → (I + strain)·x` to positions and cell rows.
    pub fn deformed(&self, strain: &Mat3) -> Structure {
        let m = Mat3::identity() + strain;
        Structure {
            species: self.species.clone(),
            positions: self.positions.iter().map(|x| m * x).collect(),
            cell: self.cell.map(|c| c * m.transpose()),
        }
    }

    pub fn rotated(&self, rot: &Mat3) -> Structure {
        Structure {
            species: self.species.clone(),
            positions: self.positions.iter().map(|x| rot * x).collect(),
            cell: self.cell.map(|c| c * rot.transpose()),
        }
    }

    pub fn translated(&self, t: &Vec3) -> Structure {
        Structure {
            species: self.species.clone(),
            positions: self.positions.iter().map(|x| x + t).collect(),
            cell: self.cell,
        }
    }

    /// Reorders atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Structure {
        Structure {
            species: perm.iter().map(|&i| self.species[i]).collect(),
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            cell: self.cell,
        }
    }

    /// Isotropically rescales the structure so its volume per atom equals `molar_volume`.
    pub fn scaled_to_molar_volume(&self, molar_volume: f64) -> Result<Structure> {
        let current = self.molar_volume().ok_or_else(|| Error::Unsupported("volume scaling needs a cell".into()))?;
        let f = (molar_volume / current).cbrt();
        Ok(self.deformed(&(Mat3::identity() * (f - 1.0))))
    }
}

pub fn check_cell(cell: &Mat3) -> Result<()> {
    if !cell.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidCell("non-finite cell entry".into()));
    }
    let det = cell.determinant();
    let scale = cell.row(0).norm() * cell.row(1).norm() * cell.row(2).norm();
    if det <= 0.0 || det <= 1e-12 * scale {
        return Err(Error::InvalidCell(format!("cell determinant {det:.3e} must be positive and non-degenerate")));
    }
    Ok(())
}

pub fn cell_inverse(cell: &Mat3) -> Result<Mat3> {
    check_cell(cell)?;
    cell.try_inverse().ok_or_else(|| Error::InvalidCell("singular cell".into()))
}

/// Distances between opposite faces of the cell, one per lattice direction.
pub fn perpendicular_widths(cell: &Mat3) -> [f64; 3] {
    let a: Vec3 = cell.row(0).transpose();
    let b: Vec3 = cell.row(1).transpose();
    let c: Vec3 = cell.row(2).transpose();
    let v = cell.determinant().abs();
    [v / b.cross(&c).norm(), v / c.cross(&a).norm(), v / a.cross(&b).norm()]
}

/// Shortest periodic image of `r_b - r_a`.
///
/// The fractional difference is first reduced to `[-0.5, 0.5]`, then every image
/// that could be shorter than the reduced vector is checked, which stays exact for
/// strongly skewed cells.
pub fn minimum_image_displacement(cell: &Mat3, r_a: &Vec3, r_b: &Vec3) -> Result<Vec3> {
    let inv_t = cell_inverse(cell)?.transpose();
    Ok(min_image_with_inverse(cell, &inv_t, &perpendicular_widths(cell), &(r_b - r_a)))
}

pub(crate) fn min_image_with_inverse(cell: &Mat3, inv_t: &Mat3, widths: &[f64; 3], d: &Vec3) -> Vec3 {
    let f = inv_t * d;
    let f0 = f.map(|x| x - x.round());
    let d0 = cell.transpose() * f0;
    let len0 = d0.norm();
    let range: Vec<i32> = (0..3).map(|k| (len0 / widths[k] + 0.5).ceil() as i32).collect();
    let mut best = d0;
    let mut best_len2 = d0.norm_squared();
    for s0 in -range[0]..=range[0] {
        for s1 in -range[1]..=range[1] {
            for s2 in -range[2]..=range[2] {
                if s0 == 0 && s1 == 0 && s2 == 0 {
                    continue;
                }
                let fs = f0 + Vec3::new(s0 as f64, s1 as f64, s2 as f64);
                let cand = cell.transpose() * fs;
                let l2 = cand.norm_squared();
                if l2 < best_len2 - 1e-14 {
                    best = cand;
                    best_len2 = l2;
                }
            }
        }
    }
    best
}

/// Replicates a periodic structure `n1 × n2 × n3` times, replica-major.
pub fn make_supercell(s: &Structure, n1: usize, n2: usize, n3: usize) -> Result<Structure> {
    let cell = s.cell.ok_or_else(|| Error::Unsupported("supercell of a non-periodic structure".into()))?;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::InvalidInput("supercell multiples must be >= 1".into()));
    }
    let (a, b, c): (Vec3, Vec3, Vec3) = (cell.row(0).transpose(), cell.row(1).transpose(), cell.row(2).transpose());
    let mut species = Vec::with_capacity(s.len() * n1 * n2 * n3);
    let mut positions = Vec::with_capacity(species.capacity());
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let shift = a * i as f64 + b * j as f64 + c * k as f64;
                species.extend_from_slice(&s.species);
                positions.extend(s.positions.iter().map(|x| x + shift));
            }
        }
    }
    let mut new_cell = cell;
    new_cell.row_mut(0).scale_mut(n1 as f64);
    new_cell.row_mut(1).scale_mut(n2 as f64);
    new_cell.row_mut(2).scale_mut(n3 as f64);
    Structure::periodic(species, positions, new_cell)
}

/// Maps every atom into the home cell (fractional coordinates in `[0, 1)`).
pub fn wrap_positions(s: &Structure) -> Result<Structure> {
    let cell = s.cell.ok_or_else(|| Error::Unsupported("wrapping a non-periodic structure".into()))?;
    let frac = s.fractional()?;
    let positions = frac
        .iter()
        .zip(&s.positions)
        .map(|(f, x)| {
            if f.iter().all(|v| (0.0..1.0).contains(v)) {
                return *x;
            }
            let w = f.map(|x| {
                let y = x - x.floor();
                // x - floor(x) can round up to exactly 1.0 for tiny negative x
                if y >= 1.0 {
                    0.0
                } else {
                    y
                }
            });
            cell.transpose() * w
        })
        .collect();
    Ok(Structure { species: s.species.clone(), positions, cell: s.cell })
}

/// Rotation matrix from a unit axis and an angle (radians).
pub fn rotation_matrix(axis: &Vec3, angle: f64) -> Mat3 {
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).matrix()
}

/// Conventional 8-atom cubic diamond cell with lattice constant `a`.
pub fn cubic_diamond(z: u8, a: f64) -> Structure {
    let basis = [
        [0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
        [0.25, 0.25, 0.25],
        [0.25, 0.75, 0.75],
        [0.75, 0.25, 0.75],
        [0.75, 0.75, 0.25],
    ];
    let positions = basis.iter().map(|f| Vec3::new(f[0], f[1], f[2]) * a).collect();
    Structure::periodic(vec![z; 8], positions, Mat3::identity() * a).expect("valid diamond cell")
}

/// Hexagonal diamond (lonsdaleite), 4 atoms, ideal geometry with bond length `bond`.
pub fn hexagonal_diamond(z: u8, bond: f64) -> Structure {
    let a = bond * (8.0f64 / 3.0).sqrt();
    let c = a * (8.0f64 / 3.0).sqrt();
    let cell = Mat3::new(a, 0.0, 0.0, -0.5 * a, 0.5 * 3f64.sqrt() * a, 0.0, 0.0, 0.0, c);
    // Wurtzite-type positions with ideal u = 3/8.
    let frac = [
        [1.0 / 3.0, 2.0 / 3.0, 0.0],
        [2.0 / 3.0, 1.0 / 3.0, 0.5],
        [1.0 / 3.0, 2.0 / 3.0, 3.0 / 8.0],
        [2.0 / 3.0, 1.0 / 3.0, 7.0 / 8.0],
    ];
    let positions = frac.iter().map(|f| cell.transpose() * Vec3::new(f[0], f[1], f[2])).collect();
    Structure::periodic(vec![z; 4], positions, cell).expect("valid lonsdaleite cell")
}

/// AB-stacked graphite, 4 atoms.
pub fn graphite(z: u8, bond: f64, interlayer: f64) -> Structure {
    let a = bond * 3f64.sqrt();
    let c = 2.0 * interlayer;
    let cell = Mat3::new(a, 0.0, 0.0, -0.5 * a, 0.5 * 3f64.sqrt() * a, 0.0, 0.0, 0.0, c);
    let frac = [[0.0, 0.0, 0.25], [0.0, 0.0, 0.75], [1.0 / 3.0, 2.0 / 3.0, 0.25], [2.0 / 3.0, 1.0 / 3.0, 0.75]];
    let positions = frac.iter().map(|f| cell.transpose() * Vec3::new(f[0], f[1], f[2])).collect();
    Structure::periodic(vec![z; 4], positions, cell).expect("valid graphite cell")
}
