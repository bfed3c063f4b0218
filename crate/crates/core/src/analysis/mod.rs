//! Convex hulls, fingerprint matching, embedding PCA, RMSD and CSV tables.

pub mod fingerprint;
pub mod hull;
pub mod pca;
pub mod rmsd;

use std::io::Write;

use serde::Serialize;

pub use fingerprint::{
    fingerprint_distance, match_structures, structure_fingerprint, Fingerprint, FingerprintSettings, MatchOutcome,
    MatchSettings,
};
pub use hull::{excess_energy, lower_convex_hull, Hull, HullPoint};
pub use pca::{embedding_pca, Pca};
pub use rmsd::kabsch_rmsd;

use crate::elements::{format_composition, symbol};
use crate::error::Result;
use crate::generate::RelaxationResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyVolumeRow {
    /// Å³ per atom; `None` for molecules.
    pub molar_volume: Option<f64>,
    pub energy_per_atom: f64,
    pub n_atoms: usize,
    pub label: String,
}

pub fn energy_volume_table(results: &[RelaxationResult]) -> Vec<EnergyVolumeRow> {
    results
        .iter()
        .map(|r| EnergyVolumeRow {
            molar_volume: r.structure.molar_volume(),
            energy_per_atom: r.pseudo_energy_per_atom,
            n_atoms: r.structure.len(),
            label: format!("{}#{}", format_composition(&r.structure.composition()), r.index),
        })
        .collect()
}

/// Columns `molar_volume,energy_per_atom,n_atoms,label`; empty volume for molecules.
pub fn write_energy_volume_csv<W: Write>(mut w: W, rows: &[EnergyVolumeRow]) -> Result<()> {
    writeln!(w, "molar_volume,energy_per_atom,n_atoms,label")?;
    for r in rows {
        let v = r.molar_volume.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(w, "{v},{:.8},{},{}", r.energy_per_atom, r.n_atoms, r.label)?;
    }
    Ok(())
}

/// Columns `x,e_ex,on_hull,structure_ref`.
pub fn write_hull_csv<W: Write>(mut w: W, points: &[HullPoint], hull: &Hull) -> Result<()> {
    writeln!(w, "x,e_ex,on_hull,structure_ref")?;
    for (p, on) in points.iter().zip(&hull.on_hull) {
        writeln!(w, "{:.6},{:.8},{},{}", p.x, p.e_ex, on, p.structure_ref)?;
    }
    Ok(())
}

/// Columns `element,pc1,pc2`.
pub fn write_pca_csv<W: Write>(mut w: W, elements: &[u8], pca: &Pca) -> Result<()> {
    writeln!(w, "element,pc1,pc2")?;
    for (z, c) in elements.iter().zip(&pca.coords) {
        writeln!(w, "{},{:.8},{:.8}", symbol(*z).unwrap_or("?"), c[0], c[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{cubic_diamond, Structure, Vec3};

    fn result(s: Structure, e: f64, index: usize) -> RelaxationResult {
        RelaxationResult {
            pseudo_energy_per_atom: e / s.len() as f64,
            pseudo_energy: e,
            initial_pseudo_energy: e,
            converged: true,
            steps: 0,
            max_force_final: 0.0,
            structure: s,
            seed: 0,
            index,
        }
    }

    #[test]
    fn energy_volume_rows() {
        assert!(energy_volume_table(&[]).is_empty());
        let s = cubic_diamond(6, 35.2f64.cbrt());
        let mol = Structure::molecule(vec![6, 1], vec![Vec3::zeros(), Vec3::new(1.1, 0.0, 0.0)]).unwrap();
        let rows = energy_volume_table(&[result(s, -8.0, 0), result(mol, -1.0, 1)]);
        assert!((rows[0].molar_volume.unwrap() - 4.4).abs() < 1e-12);
        assert_eq!(rows[0].energy_per_atom, -1.0);
        assert_eq!(rows[0].n_atoms, 8);
        assert_eq!(rows[1].molar_volume, None);
        let mut buf = Vec::new();
        write_energy_volume_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "molar_volume,energy_per_atom,n_atoms,label");
        assert!(text.lines().nth(2).unwrap().starts_with(",-0.5"));
    }

    #[test]
    fn hull_and_pca_csv_headers() {
        let pts = vec![
            HullPoint { x: 0.0, e_ex: 0.0, structure_ref: "S".into() },
            HullPoint { x: 1.0, e_ex: 0.0, structure_ref: "Li".into() },
        ];
        let h = lower_convex_hull(&pts).unwrap();
        let mut buf = Vec::new();
        write_hull_csv(&mut buf, &pts, &h).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("x,e_ex,on_hull,structure_ref\n0.000000,0.00000000,true,S\n"));
        let pca = embedding_pca(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let mut buf = Vec::new();
        write_pca_csv(&mut buf, &[1, 6, 8], &pca).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("element,pc1,pc2\nH,"));
        assert_eq!(text.lines().count(), 4);
    }
}
