//! Radial, angular and edge-channel bases of the cluster expansion.

use std::f64::consts::PI;

use super::scalar::Real;

/// Sine radial functions `sin(nπr/rc)/r` times the cosine cutoff
/// `½(cos(πr/rc) + 1)`, for `n = 1..=n_max`. Zero beyond `rc`.
pub fn radial_basis(r: f64, n_max: usize, r_cut: f64) -> Vec<f64> {
    assert!(r > 0.0, "radial basis needs r > 0");
    let mut vals = vec![0.0; n_max];
    let mut ders = vec![0.0; n_max];
    radial_with_derivative(r, r_cut, &mut vals, &mut ders);
    vals
}

/// Fills `vals[n-1] = R_n(r)` and `ders[n-1] = dR_n/dr`.
pub(crate) fn radial_with_derivative<T: Real>(r: T, r_cut: f64, vals: &mut [T], ders: &mut [T]) {
    if r.re() >= r_cut {
        vals.iter_mut().for_each(|v| *v = T::zero());
        ders.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let w = PI / r_cut;
    let fc = ((r * w).cos() + T::cst(1.0)) * 0.5;
    let dfc = (r * w).sin() * (-0.5 * w);
    let inv_r = T::cst(1.0) / r;
    for (k, (v, d)) in vals.iter_mut().zip(ders.iter_mut()).enumerate() {
        let kw = w * (k + 1) as f64;
        let s = (r * kw).sin();
        let c = (r * kw).cos();
        let g = s * inv_r;
        let dg = (c * kw - g) * inv_r;
        *v = g * fc;
        *d = dg * fc + g * dfc;
    }
}

/// Cartesian monomial multi-indices `(lx, ly, lz)` with `lx + ly + lz <= l_max`,
/// ordered by degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomials {
    pub l_max: usize,
    pub list: Vec<[usize; 3]>,
    pub degree: Vec<usize>,
    /// Multinomial coefficient `l! / (lx! ly! lz!)`.
    pub coeff: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Monomials {
    pub fn new(l_max: usize) -> Self {
        let mut list = Vec::new();
        for l in 0..=l_max {
            for lx in (0..=l).rev() {
                for ly in (0..=(l - lx)).rev() {
                    list.push([lx, ly, l - lx - ly]);
                }
            }
        }
        let degree = list.iter().map(|m| m.iter().sum()).collect();
        let coeff = list
            .iter()
            .map(|m| factorial(m[0] + m[1] + m[2]) / (factorial(m[0]) * factorial(m[1]) * factorial(m[2])))
            .collect();
        Monomials { l_max, list, degree, coeff }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn index_of(&self, m: [usize; 3]) -> Option<usize> {
        self.list.iter().position(|x| *x == m)
    }

    /// Values `u_x^lx u_y^ly u_z^lz` and their gradients with respect to `u`.
    pub(crate) fn eval<T: Real>(&self, u: &[T; 3], vals: &mut [T], grads: &mut [[T; 3]]) {
        let mut pw = vec![[T::cst(1.0); 3]; self.l_max + 1];
        for p in 1..=self.l_max {
            for k in 0..3 {
                pw[p][k] = pw[p - 1][k] * u[k];
            }
        }
        for (idx, m) in self.list.iter().enumerate() {
            vals[idx] = pw[m[0]][0] * pw[m[1]][1] * pw[m[2]][2];
            for k in 0..3 {
                grads[idx][k] = if m[k] == 0 {
                    T::zero()
                } else {
                    let mut g = pw[m[k] - 1][k] * m[k] as f64;
                    for o in 0..3 {
                        if o != k {
                            g *= pw[m[o]][o];
                        }
                    }
                    g
                };
            }
        }
    }
}

/// `L_l(u) = u_x^lx · u_y^ly · u_z^lz`.
pub fn angular_basis(u: &[f64; 3], l: [usize; 3]) -> f64 {
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    debug_assert!((norm - 1.0).abs() < 1e-8, "angular basis needs a unit vector");
    u[0].powi(l[0] as i32) * u[1].powi(l[1] as i32) * u[2].powi(l[2] as i32)
}

/// Edge channel weights `θ_i ⊗ θ_j`, flattened row-major.
pub fn edge_channel_weight(theta_i: &[f64], theta_j: &[f64]) -> Vec<f64> {
    assert_eq!(theta_i.len(), theta_j.len(), "embedding lengths differ");
    theta_i.iter().flat_map(|a| theta_j.iter().map(move |b| a * b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn radial_examples() {
        assert!(radial_basis(4.5, 6, 4.5).iter().all(|&v| v == 0.0));
        assert!(radial_basis(4.95, 6, 4.5).iter().all(|&v| v == 0.0));
        let r = radial_basis(2.25, 1, 4.5);
        assert_abs_diff_eq!(r[0], 0.5 / 2.25, epsilon = 1e-14);
    }

    #[test]
    fn radial_derivative_and_smooth_cutoff() {
        let rc = 4.5;
        let mut v = vec![0.0; 5];
        let mut d = vec![0.0; 5];
        let mut vp = vec![0.0; 5];
        let mut vm = vec![0.0; 5];
        for &r in &[0.3, 1.1, 2.7, 4.4] {
            radial_with_derivative(r, rc, &mut v, &mut d);
            radial_with_derivative(r + 1e-6, rc, &mut vp, &mut d.clone());
            radial_with_derivative(r - 1e-6, rc, &mut vm, &mut d.clone());
            let mut dd = vec![0.0; 5];
            radial_with_derivative(r, rc, &mut v, &mut dd);
            for k in 0..5 {
                assert_abs_diff_eq!(dd[k], (vp[k] - vm[k]) / 2e-6, epsilon = 1e-7);
            }
        }
        // value and slope vanish at the cutoff
        radial_with_derivative(rc - 1e-7, rc, &mut v, &mut d);
        assert!(v.iter().all(|x| x.abs() < 1e-12));
        assert!(d.iter().all(|x| x.abs() < 1e-5));
    }

    #[test]
    fn angular_examples() {
        assert_eq!(angular_basis(&[0.6, 0.8, 0.0], [0, 0, 0]), 1.0);
        assert_eq!(angular_basis(&[0.0, 0.0, 1.0], [0, 0, 2]), 1.0);
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(angular_basis(&[s, s, 0.0], [1, 1, 0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn monomial_table() {
        let m = Monomials::new(3);
        assert_eq!(m.len(), 20);
        assert_eq!(m.list[0], [0, 0, 0]);
        assert_eq!(m.coeff[m.index_of([1, 1, 1]).unwrap()], 6.0);
        assert_eq!(m.coeff[m.index_of([2, 0, 1]).unwrap()], 3.0);
        // Σ_l C(l) L_l(u) L_l(v) = (u·v)^l
        let u = [0.48, -0.6, 0.64];
        let v = [0.0, 0.6, 0.8];
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        for l in 0..=3 {
            let s: f64 = (0..m.len())
                .filter(|&i| m.degree[i] == l)
                .map(|i| m.coeff[i] * angular_basis(&u, m.list[i]) * angular_basis(&v, m.list[i]))
                .sum();
            assert_abs_diff_eq!(s, dot.powi(l as i32), epsilon = 1e-14);
        }
    }

    #[test]
    fn channel_weights() {
        assert_eq!(edge_channel_weight(&[1.0], &[1.0]), vec![1.0]);
        assert_eq!(edge_channel_weight(&[1.0, 0.0], &[0.0, 1.0]), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(edge_channel_weight(&[2.0, 1.0], &[3.0, 4.0]), vec![6.0, 8.0, 3.0, 4.0]);
    }
}
