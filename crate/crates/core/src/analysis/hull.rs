//! Pseudo excess energies and the lower convex hull in `(x, e_ex)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `e − x·e_A − (1 − x)·e_B`, all per atom.
pub fn excess_energy(e_per_atom: f64, x: f64, e_a: f64, e_b: f64) -> f64 {
    e_per_atom - x * e_a - (1.0 - x) * e_b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullPoint {
    /// Fraction of endmember A, in `[0, 1]`.
    pub x: f64,
    pub e_ex: f64,
    pub structure_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    /// Per input point: no combination of other points lies strictly below it.
    pub on_hull: Vec<bool>,
    /// Indices of the hull's corner points, by increasing `x`.
    pub vertices: Vec<usize>,
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower envelope by the monotone chain. Points on hull edges, including
/// collinear ones and exact duplicates, count as on the hull.
pub fn lower_convex_hull(points: &[HullPoint]) -> Result<Hull> {
    for (i, p) in points.iter().enumerate() {
        if !(0.0..=1.0).contains(&p.x) || !p.e_ex.is_finite() {
            return Err(Error::InvalidInput(format!("hull point {i} has x = {}, e_ex = {}", p.x, p.e_ex)));
        }
    }
    if !points.iter().any(|p| p.x == 0.0) || !points.iter().any(|p| p.x == 1.0) {
        return Err(Error::InvalidInput("hull needs both endmembers (x = 0 and x = 1)".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].x.total_cmp(&points[b].x).then(points[a].e_ex.total_cmp(&points[b].e_ex)).then(a.cmp(&b))
    });
    let pt = |i: usize| (points[i].x, points[i].e_ex);
    let mut chain: Vec<usize> = Vec::new();
    for &i in &order {
        if let Some(&last) = chain.last() {
            if points[last].x == points[i].x {
                continue;
            }
        }
        while chain.len() >= 2 && cross(pt(chain[chain.len() - 2]), pt(chain[chain.len() - 1]), pt(i)) <= 0.0 {
            chain.pop();
        }
        chain.push(i);
    }
    let scale = 1.0 + points.iter().fold(0.0f64, |m, p| m.max(p.e_ex.abs()));
    let tol = 1e-12 * scale;
    let on_hull = points
        .iter()
        .map(|p| {
            let k = chain.partition_point(|&v| points[v].x < p.x);
            let h = if points[chain[k]].x == p.x {
                points[chain[k]].e_ex
            } else {
                let (a, b) = (pt(chain[k - 1]), pt(chain[k]));
                a.1 + (b.1 - a.1) * (p.x - a.0) / (b.0 - a.0)
            };
            p.e_ex <= h + tol
        })
        .collect();
    Ok(Hull { on_hull, vertices: chain })
}
