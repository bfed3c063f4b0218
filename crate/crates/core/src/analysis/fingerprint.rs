//! Smeared partial radial distribution fingerprints and a simple structure matcher.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::build_neighbor_list;
use crate::structure::Structure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FingerprintSettings {
    pub r_max: f64,
    pub bins: usize,
    pub smearing: f64,
}

impl Default for FingerprintSettings {
    fn default() -> Self {
        FingerprintSettings { r_max: 6.0, bins: 120, smearing: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    /// Species pairs `(a, b)` with `a <= b`, sorted.
    pub pairs: Vec<(u8, u8)>,
    /// One histogram of `bins` values per pair, per atom of the structure.
    pub histograms: Vec<Vec<f64>>,
    /// `(z, fraction)` sorted by `z`.
    pub composition: Vec<(u8, f64)>,
    pub volume_per_atom: Option<f64>,
}

impl Fingerprint {
    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.histograms.iter().flatten().copied()
    }
}

/// Gaussian-smeared pair-distance histograms on bins of width `r_max / bins`.
pub fn structure_fingerprint(s: &Structure, settings: &FingerprintSettings) -> Result<Fingerprint> {
    let FingerprintSettings { r_max, bins, smearing } = *settings;
    let mut elements: Vec<u8> = s.species.clone();
    elements.sort_unstable();
    elements.dedup();
    let mut pairs = Vec::new();
    for (i, &a) in elements.iter().enumerate() {
        for &b in &elements[i..] {
            pairs.push((a, b));
        }
    }
    let mut histograms = vec![vec![0.0; bins]; pairs.len()];
    let width = r_max / bins as f64;
    let reach = 8.0 * smearing;
    let nl = build_neighbor_list(s, r_max + reach)?;
    let norm = width / (smearing * (2.0 * std::f64::consts::PI).sqrt()) / s.len() as f64;
    for (i, nb) in nl.edges() {
        let (a, b) = (s.species[i], s.species[nb.j]);
        let key = (a.min(b), a.max(b));
        let h = &mut histograms[pairs.binary_search(&key).expect("pair listed")];
        let r = nb.distance;
        let lo = (((r - reach) / width).floor().max(0.0)) as usize;
        let hi = (((r + reach) / width).ceil() as usize).min(bins);
        for (k, v) in h.iter_mut().enumerate().take(hi).skip(lo) {
            let c = (k as f64 + 0.5) * width;
            let t = (c - r) / smearing;
            *v += norm * (-0.5 * t * t).exp();
        }
    }
    let n = s.len() as f64;
    let composition = s.composition().into_iter().map(|(z, c)| (z, c as f64 / n)).collect();
    Ok(Fingerprint { pairs, histograms, composition, volume_per_atom: s.molar_volume() })
}

/// Relative L2 distance `|a − b| / mean(|a|, |b|)`; histograms of pairs missing
/// from one side count as zero.
pub fn fingerprint_distance(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let mut keys: Vec<(u8, u8)> = a.pairs.iter().chain(&b.pairs).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let get = |f: &Fingerprint, k: &(u8, u8)| f.pairs.binary_search(k).ok().map(|i| f.histograms[i].clone());
    let mut d2 = 0.0;
    for k in &keys {
        match (get(a, k), get(b, k)) {
            (Some(x), Some(y)) => d2 += x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>(),
            (Some(x), None) | (None, Some(x)) => d2 += x.iter().map(|p| p * p).sum::<f64>(),
            (None, None) => {}
        }
    }
    let na = a.flat().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.flat().map(|x| x * x).sum::<f64>().sqrt();
    let mean = 0.5 * (na + nb);
    if mean == 0.0 {
        0.0
    } else {
        d2.sqrt() / mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchSettings {
    pub fingerprint: FingerprintSettings,
    /// Largest allowed relative difference of volume per atom.
    pub tol_v: f64,
    /// Largest allowed fingerprint distance.
    pub tol_f: f64,
}

impl MatchSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("match: {m}")));
        let f = &self.fingerprint;
        if !(f.r_max > 0.0) || f.bins == 0 || !(f.smearing > 0.0) {
            return bad("fingerprint needs r_max > 0, bins >= 1 and smearing > 0");
        }
        if !(self.tol_v >= 0.0) || !(self.tol_f > 0.0) {
            return bad("tol_v must be >= 0 and tol_f > 0");
        }
        Ok(())
    }
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings { fingerprint: FingerprintSettings::default(), tol_v: 0.1, tol_f: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchOutcome {
    pub matched: bool,
    /// Fingerprint distance after scaling both structures to a common volume
    /// per atom; infinite when the composition gate fails.
    pub distance: f64,
    pub composition_ok: bool,
    pub volume_ok: bool,
}

fn same_fractions(a: &[(u8, usize)], b: &[(u8, usize)]) -> bool {
    let (na, nb) = (a.iter().map(|e| e.1).sum::<usize>(), b.iter().map(|e| e.1).sum::<usize>());
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && x.1 * nb == y.1 * na)
}

/// Composition gate, volume gate, then fingerprints compared after both
/// structures are scaled to the geometric mean of their volumes per atom.
pub fn match_structures(a: &Structure, b: &Structure, settings: &MatchSettings) -> Result<MatchOutcome> {
    if !same_fractions(&a.composition(), &b.composition()) || a.pbc() != b.pbc() {
        return Ok(MatchOutcome { matched: false, distance: f64::INFINITY, composition_ok: false, volume_ok: false });
    }
    let (fa, fb, volume_ok) = match (a.molar_volume(), b.molar_volume()) {
        (Some(va), Some(vb)) => {
            let ratio = va.max(vb) / va.min(vb);
            let common = (va * vb).sqrt();
            (
                structure_fingerprint(&a.scaled_to_molar_volume(common)?, &settings.fingerprint)?,
                structure_fingerprint(&b.scaled_to_molar_volume(common)?, &settings.fingerprint)?,
                ratio - 1.0 <= settings.tol_v,
            )
        }
        _ => (structure_fingerprint(a, &settings.fingerprint)?, structure_fingerprint(b, &settings.fingerprint)?, true),
    };
    let distance = fingerprint_distance(&fa, &fb);
    Ok(MatchOutcome { matched: volume_ok && distance < settings.tol_f, distance, composition_ok: true, volume_ok })
}
