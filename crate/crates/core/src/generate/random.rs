//! Random initial structures and per-element molar volumes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::GenSpec;
use crate::elements::symbol;
use crate::error::{Error, Result};
use crate::structure::{cell_inverse, min_image_with_inverse, perpendicular_widths, Mat3, Structure, Vec3};

/// Least-squares `V ≈ Σ_z n_z v_z` over periodic structures, without intercept.
/// Returns `(z, v_z)` sorted by atomic number.
pub fn fit_molar_volumes(training: &[Structure]) -> Result<Vec<(u8, f64)>> {
    let mut elements: Vec<u8> = training.iter().flat_map(|s| s.species.iter().copied()).collect();
    elements.sort_unstable();
    elements.dedup();
    if training.is_empty() {
        return Err(Error::InvalidInput("no structures to fit molar volumes".into()));
    }
    let (m, k) = (training.len(), elements.len());
    let mut a = DMatrix::zeros(m, k);
    let mut b = DVector::zeros(m);
    for (r, s) in training.iter().enumerate() {
        b[r] = s.volume().ok_or_else(|| Error::InvalidInput(format!("structure {r} is not periodic")))?;
        for (z, n) in s.composition() {
            let c = elements.binary_search(&z).expect("element collected above");
            a[(r, c)] = n as f64;
        }
    }
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let emax = eig.eigenvalues.amax();
    let tol = 1e-12 * emax.max(1.0);
    let null: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    if !null.is_empty() {
        // elements carrying weight in the null space cannot be separated
        let unresolved: Vec<&str> = elements
            .iter()
            .enumerate()
            .filter(|&(c, _)| null.iter().any(|&i| eig.eigenvectors[(c, i)].abs() > 1e-8))
            .map(|(_, &z)| symbol(z).unwrap_or("?"))
            .collect();
        return Err(Error::RankDeficient(format!(
            "cannot separate the molar volumes of {} using {m} structures",
            unresolved.join(", ")
        )));
    }
    let x = a.svd(true, true).solve(&b, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(elements.into_iter().zip(x.iter().copied()).collect())
}

const PLACEMENT_ATTEMPTS: usize = 2000;
const CELL_ATTEMPTS: usize = 50;
const DEFAULT_VOLUME_PER_ATOM: f64 = 10.0;

fn target_volume<R: Rng + ?Sized>(
    spec: &GenSpec,
    species: &[u8],
    volumes: Option<&[(u8, f64)]>,
    rng: &mut R,
) -> Result<f64> {
    let n = species.len() as f64;
    if let Some([lo, hi]) = spec.molar_volume_range {
        let v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        return Ok(n * v);
    }
    let base =
        match volumes {
            Some(table) => species
                .iter()
                .map(|z| {
                    table.iter().find(|e| e.0 == *z).map(|e| e.1).ok_or_else(|| {
                        Error::InvalidInput(format!("no molar volume for {}", symbol(*z).unwrap_or("?")))
                    })
                })
                .sum::<Result<f64>>()?,
            None => n * DEFAULT_VOLUME_PER_ATOM,
        };
    let j = spec.volume_jitter;
    Ok(base * if j > 0.0 { rng.random_range(1.0 - j..=1.0 + j) } else { 1.0 })
}

fn random_cell<R: Rng + ?Sized>(volume: f64, max_strain: f64, rng: &mut R) -> Option<Mat3> {
    let min_width = 0.5 * volume.cbrt();
    for _ in 0..CELL_ATTEMPTS {
        let mut g = Mat3::identity();
        for a in 0..3 {
            for b in a..3 {
                let e = if max_strain > 0.0 { rng.random_range(-max_strain..=max_strain) } else { 0.0 };
                g[(a, b)] += e;
                if a != b {
                    g[(b, a)] += e;
                }
            }
        }
        let det = g.determinant();
        if det <= 0.0 {
            continue;
        }
        let cell = g * (volume / det).cbrt();
        if perpendicular_widths(&cell).iter().all(|&w| w >= min_width) {
            return Some(cell);
        }
    }
    None
}

/// A random cell of the target volume (or a box for molecules) filled by
/// rejection sampling so that all pair distances are at least `min_distance`.
pub fn random_structure<R: Rng + ?Sized>(
    spec: &GenSpec,
    volumes: Option<&[(u8, f64)]>,
    rng: &mut R,
) -> Result<Structure> {
    spec.validate()?;
    let [ulo, uhi] = spec.formula_units;
    let units = if uhi > ulo { rng.random_range(ulo..=uhi) } else { ulo };
    let species = spec.composition.species(units);
    let n = species.len();
    let dmin2 = spec.min_distance * spec.min_distance;
    let mut last_volume = 0.0;
    for _ in 0..CELL_ATTEMPTS {
        let volume = target_volume(spec, &species, volumes, rng)?;
        last_volume = volume;
        let cell = if spec.pbc {
            match random_cell(volume, spec.max_cell_strain, rng) {
                Some(c) => Some(c),
                None => continue,
            }
        } else {
            None
        };
        let positions = match cell {
            Some(c) => {
                if perpendicular_widths(&c).iter().any(|&w| w < spec.min_distance) {
                    continue;
                }
                let inv_t = cell_inverse(&c)?.transpose();
                let widths = perpendicular_widths(&c);
                place(
                    n,
                    PLACEMENT_ATTEMPTS,
                    rng,
                    |rng| {
                        let f = Vec3::new(rng.random(), rng.random(), rng.random());
                        c.transpose() * f
                    },
                    |a, b| min_image_with_inverse(&c, &inv_t, &widths, &(b - a)).norm_squared() >= dmin2,
                )
            }
            None => {
                let l = volume.cbrt();
                place(
                    n,
                    PLACEMENT_ATTEMPTS,
                    rng,
                    |rng| Vec3::new(rng.random_range(0.0..l), rng.random_range(0.0..l), rng.random_range(0.0..l)),
                    |a, b| (b - a).norm_squared() >= dmin2,
                )
            }
        };
        if let Some(positions) = positions {
            let mut s = Structure::new(species.clone(), positions, cell)?;
            if !spec.pbc {
                let c = s.positions.iter().sum::<Vec3>() / n as f64;
                s = s.translated(&-c);
            }
            return Ok(s);
        }
    }
    Err(Error::PackingInfeasible {
        attempts: CELL_ATTEMPTS,
        hint: format!(
            "could not place {n} atoms {:.2} Å apart in {:.1} Å³; increase the volume or lower min_distance",
            spec.min_distance, last_volume
        ),
    })
}

fn place<R: Rng + ?Sized>(
    n: usize,
    attempts: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> Vec3,
    ok: impl Fn(&Vec3, &Vec3) -> bool,
) -> Option<Vec<Vec3>> {
    let mut placed: Vec<Vec3> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut done = false;
        for _ in 0..attempts {
            let p = draw(rng);
            if placed.iter().all(|q| ok(q, &p)) {
                placed.push(p);
                done = true;
                break;
            }
        }
        if !done {
            return None;
        }
    }
    Some(placed)
}
