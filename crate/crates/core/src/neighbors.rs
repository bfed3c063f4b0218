//! Cutoff neighbor lists over periodic images.

use crate::error::Result;
use crate::structure::{cell_inverse, perpendicular_widths, Mat3, Structure, Vec3};

/// Brute force below this many atoms, cell-linked lists above.
const CELL_LIST_THRESHOLD: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub j: usize,
    /// Lattice translation applied to atom `j`.
    pub shift: [i32; 3],
    /// `r_j + shift·H - r_i`
    pub vector: Vec3,
    pub distance: f64,
    pub unit: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub r_cut: f64,
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl NeighborList {
    pub fn of(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// All directed edges `(i, neighbor)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, &Neighbor)> {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| list.iter().map(move |n| (i, n)))
    }
}

fn make_neighbor(j: usize, shift: [i32; 3], vector: Vec3) -> Neighbor {
    let distance = vector.norm();
    Neighbor { j, shift, vector, distance, unit: vector / distance }
}

fn lattice_shift(cell: &Mat3, s: [i32; 3]) -> Vec3 {
    cell.transpose() * Vec3::new(s[0] as f64, s[1] as f64, s[2] as f64)
}

/// All pairs and periodic images closer than `r_cut`, sorted per atom by `j`
/// and then by shift.
pub fn build_neighbor_list(s: &Structure, r_cut: f64) -> Result<NeighborList> {
    assert!(r_cut > 0.0, "cutoff must be positive");
    let mut neighbors = if s.len() > CELL_LIST_THRESHOLD {
        match cell_list(s, r_cut)? {
            Some(n) => n,
            None => brute_force(s, r_cut)?,
        }
    } else {
        brute_force(s, r_cut)?
    };
    for list in &mut neighbors {
        list.sort_by(|a, b| a.j.cmp(&b.j).then(a.shift.cmp(&b.shift)));
    }
    Ok(NeighborList { r_cut, neighbors })
}

fn brute_force(s: &Structure, r_cut: f64) -> Result<Vec<Vec<Neighbor>>> {
    let n = s.len();
    let mut out = vec![Vec::new(); n];
    let r2 = r_cut * r_cut;
    match &s.cell {
        None => {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d = s.positions[j] - s.positions[i];
                    let l2 = d.norm_squared();
                    if l2 < r2 && l2 > 0.0 {
                        out[i].push(make_neighbor(j, [0; 3], d));
                    }
                }
            }
        }
        Some(cell) => {
            let inv_t = cell_inverse(cell)?.transpose();
            let widths = perpendicular_widths(cell);
            let range: Vec<i32> = widths.iter().map(|w| (r_cut / w + 0.5).ceil() as i32).collect();
            let frac: Vec<Vec3> = s.positions.iter().map(|x| inv_t * x).collect();
            for i in 0..n {
                for j in 0..n {
                    let df = frac[j] - frac[i];
                    let base = df.map(f64::round);
                    for a in -range[0]..=range[0] {
                        for b in -range[1]..=range[1] {
                            for c in -range[2]..=range[2] {
                                let shift = [a - base[0] as i32, b - base[1] as i32, c - base[2] as i32];
                                if i == j && shift == [0, 0, 0] {
                                    continue;
                                }
                                let d = s.positions[j] + lattice_shift(cell, shift) - s.positions[i];
                                let l2 = d.norm_squared();
                                if l2 < r2 && l2 > 0.0 {
                                    out[i].push(make_neighbor(j, shift, d));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Linked-cell search. Returns `None` when the binning would be too coarse to
/// help (fewer than three bins along some axis of a periodic cell).
fn cell_list(s: &Structure, r_cut: f64) -> Result<Option<Vec<Vec<Neighbor>>>> {
    let n = s.len();
    let r2 = r_cut * r_cut;
    let cell = match &s.cell {
        Some(cell) => *cell,
        None => {
            let mut lo = s.positions[0];
            let mut hi = s.positions[0];
            for p in &s.positions {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let ext = (hi - lo).map(|x| x.max(r_cut) + 1e-9);
            let nb = ext.map(|x| ((x / r_cut).floor() as usize).max(1));
            let inv = Mat3::from_diagonal(&ext.map(|x| 1.0 / x));
            return Ok(Some(open_cell_list(s, r_cut, lo, inv, [nb[0], nb[1], nb[2]])));
        }
    };
    let widths = perpendicular_widths(&cell);
    let nb: Vec<usize> = widths.iter().map(|w| (w / r_cut).floor() as usize).collect();
    if nb.iter().any(|&b| b < 3) {
        return Ok(None);
    }
    let nbins = [nb[0], nb[1], nb[2]];
    let inv_t = cell_inverse(&cell)?.transpose();
    // Atoms are binned by their reduced fractional coordinate; `offsets` keeps
    // the integer part so shifts refer to the stored positions.
    let mut offsets = Vec::with_capacity(n);
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); nbins[0] * nbins[1] * nbins[2]];
    let mut atom_bin = Vec::with_capacity(n);
    for (idx, x) in s.positions.iter().enumerate() {
        let f = inv_t * x;
        let o = f.map(f64::floor);
        let w = f - o;
        let b: [usize; 3] = std::array::from_fn(|k| ((w[k] * nbins[k] as f64) as usize).min(nbins[k] - 1));
        bins[(b[0] * nbins[1] + b[1]) * nbins[2] + b[2]].push(idx);
        atom_bin.push(b);
        offsets.push([o[0] as i32, o[1] as i32, o[2] as i32]);
    }
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        let bi = atom_bin[i];
        for da in -1i32..=1 {
            for db in -1i32..=1 {
                for dc in -1i32..=1 {
                    let d = [da, db, dc];
                    let mut nbb = [0usize; 3];
                    let mut t = [0i32; 3];
                    for k in 0..3 {
                        let raw = bi[k] as i32 + d[k];
                        let m = nbins[k] as i32;
                        nbb[k] = raw.rem_euclid(m) as usize;
                        t[k] = raw.div_euclid(m);
                    }
                    for &j in &bins[(nbb[0] * nbins[1] + nbb[1]) * nbins[2] + nbb[2]] {
                        let shift: [i32; 3] = std::array::from_fn(|k| t[k] - offsets[j][k] + offsets[i][k]);
                        if i == j && shift == [0, 0, 0] {
                            continue;
                        }
                        let v = s.positions[j] + lattice_shift(&cell, shift) - s.positions[i];
                        let l2 = v.norm_squared();
                        if l2 < r2 && l2 > 0.0 {
                            out[i].push(make_neighbor(j, shift, v));
                        }
                    }
                }
            }
        }
    }
    Ok(Some(out))
}

fn open_cell_list(s: &Structure, r_cut: f64, origin: Vec3, inv_t: Mat3, nbins: [usize; 3]) -> Vec<Vec<Neighbor>> {
    let n = s.len();
    let r2 = r_cut * r_cut;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); nbins[0] * nbins[1] * nbins[2]];
    let mut atom_bin = Vec::with_capacity(n);
    for (idx, x) in s.positions.iter().enumerate() {
        let w = inv_t * (x - origin);
        let b: [usize; 3] = std::array::from_fn(|k| ((w[k] * nbins[k] as f64) as usize).min(nbins[k] - 1));
        bins[(b[0] * nbins[1] + b[1]) * nbins[2] + b[2]].push(idx);
        atom_bin.push(b);
    }
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        let bi = atom_bin[i];
        for da in -1i32..=1 {
            for db in -1i32..=1 {
                for dc in -1i32..=1 {
                    let raw = [bi[0] as i32 + da, bi[1] as i32 + db, bi[2] as i32 + dc];
                    if (0..3).any(|k| raw[k] < 0 || raw[k] >= nbins[k] as i32) {
                        continue;
                    }
                    let key = (raw[0] as usize * nbins[1] + raw[1] as usize) * nbins[2] + raw[2] as usize;
                    for &j in &bins[key] {
                        if i == j {
                            continue;
                        }
                        let v = s.positions[j] - s.positions[i];
                        let l2 = v.norm_squared();
                        if l2 < r2 && l2 > 0.0 {
                            out[i].push(make_neighbor(j, [0; 3], v));
                        }
                    }
                }
            }
        }
    }
    out
}
