//! Cartesian atomic cluster expansion potential without message passing.
//!
//! Per atom `i`: edge features `T_c(θ_i, θ_j) R_n(r_ji) L_l(r̂_ji)` are summed over
//! neighbours into `A_i`, contracted into rotation-invariant `B_i`, and mapped
//! to an atomic energy by an MLP. The reverse pass is written by hand and is
//! generic over [`Real`], so the same code yields forces, the virial, parameter
//! gradients, and (with dual numbers) directional derivatives of all of them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::{radial_with_derivative, Monomials};
use super::mlp::Mlp;
use super::scalar::Real;
use super::{Potential, Response};
use crate::error::{Error, Result};
use crate::neighbors::{build_neighbor_list, NeighborList};
use crate::structure::{Mat3, Structure, Vec3};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaceHyper {
    pub r_cut: f64,
    pub n_max: usize,
    pub l_max: usize,
    /// Maximum body order, 2 or 3.
    pub nu_max: usize,
    pub n_embedding: usize,
    /// Hidden layer widths of the readout network.
    pub hidden: Vec<usize>,
}

impl Default for CaceHyper {
    fn default() -> Self {
        Self::diamond()
    }
}

impl CaceHyper {
    pub fn diamond() -> Self {
        CaceHyper { r_cut: 4.5, n_max: 5, l_max: 3, nu_max: 3, n_embedding: 1, hidden: vec![32] }
    }

    pub fn molecules() -> Self {
        CaceHyper { r_cut: 4.5, n_max: 4, l_max: 3, nu_max: 3, n_embedding: 3, hidden: vec![32] }
    }

    pub fn materials() -> Self {
        CaceHyper { r_cut: 4.0, n_max: 6, l_max: 2, nu_max: 2, n_embedding: 4, hidden: vec![32] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("model: {m}")));
        if !(self.r_cut > 0.0) {
            return bad("r_cut must be > 0");
        }
        if self.n_max == 0 {
            return bad("n_max must be >= 1");
        }
        if self.n_embedding == 0 {
            return bad("n_embedding must be >= 1");
        }
        if self.nu_max != 2 && self.nu_max != 3 {
            return bad("nu_max must be 2 or 3");
        }
        if self.l_max > 6 {
            return bad("l_max above 6 is not supported");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be >= 1");
        }
        Ok(())
    }
}

/// One three-body contraction `Σ C(a) C(b) A[a+b] A'[a] A'[b]` over `|a| = l1`, `|b| = l2`.
#[derive(Debug, Clone, PartialEq)]
struct TripleContraction {
    /// `(index of a, index of b, index of a+b, C(a)·C(b))`
    terms: Vec<(usize, usize, usize, f64)>,
}

/// Index arithmetic for the `A` and `B` blocks of one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    pub monomials: Monomials,
    pub n_channels: usize,
    pub n_max: usize,
    triples: Vec<TripleContraction>,
    nu_max: usize,
}

impl FeatureLayout {
    pub fn new(h: &CaceHyper) -> Self {
        let monomials = Monomials::new(h.l_max);
        let mut triples = Vec::new();
        if h.nu_max >= 3 {
            for l1 in 1..=h.l_max {
                for l2 in l1..=h.l_max {
                    if l1 + l2 > h.l_max {
                        continue;
                    }
                    let mut terms = Vec::new();
                    for (ia, a) in monomials.list.iter().enumerate() {
                        if monomials.degree[ia] != l1 {
                            continue;
                        }
                        for (ib, b) in monomials.list.iter().enumerate() {
                            if monomials.degree[ib] != l2 {
                                continue;
                            }
                            let ab = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                            let iab = monomials.index_of(ab).expect("degree within l_max");
                            terms.push((ia, ib, iab, monomials.coeff[ia] * monomials.coeff[ib]));
                        }
                    }
                    triples.push(TripleContraction { terms });
                }
            }
        }
        FeatureLayout {
            monomials,
            n_channels: h.n_embedding * h.n_embedding,
            n_max: h.n_max,
            triples,
            nu_max: h.nu_max,
        }
    }

    /// Length of the per-atom `A` block.
    pub fn a_len(&self) -> usize {
        self.n_channels * self.n_max * self.monomials.len()
    }

    pub fn a_index(&self, c: usize, n: usize, m: usize) -> usize {
        (c * self.n_max + n) * self.monomials.len() + m
    }

    pub fn b2_len(&self) -> usize {
        self.n_channels * self.n_max * (self.monomials.l_max + 1)
    }

    pub fn b2_index(&self, c: usize, n: usize, l: usize) -> usize {
        (c * self.n_max + n) * (self.monomials.l_max + 1) + l
    }

    pub fn b3_len(&self) -> usize {
        if self.nu_max < 3 {
            0
        } else {
            self.n_channels * self.n_max * self.n_max * self.triples.len()
        }
    }

    fn b3_index(&self, c: usize, n: usize, n2: usize, p: usize) -> usize {
        self.b2_len() + ((c * self.n_max + n) * self.n_max + n2) * self.triples.len() + p
    }

    pub fn n_features(&self) -> usize {
        self.b2_len() + self.b3_len()
    }

    /// Invariant features from one atom's `A` block.
    pub(crate) fn contract<T: Real>(&self, a: &[T], out: &mut [T]) {
        let nm = self.monomials.len();
        out.iter_mut().for_each(|x| *x = T::zero());
        for c in 0..self.n_channels {
            for n in 0..self.n_max {
                for m in 0..nm {
                    let v = a[self.a_index(c, n, m)];
                    let idx = self.b2_index(c, n, self.monomials.degree[m]);
                    out[idx] += v * v * self.monomials.coeff[m];
                }
            }
            if self.nu_max >= 3 {
                for n in 0..self.n_max {
                    for n2 in 0..self.n_max {
                        for (p, tc) in self.triples.iter().enumerate() {
                            let mut s = T::zero();
                            for &(ia, ib, iab, coef) in &tc.terms {
                                s += a[self.a_index(c, n, iab)]
                                    * a[self.a_index(c, n2, ia)]
                                    * a[self.a_index(c, n2, ib)]
                                    * coef;
                            }
                            out[self.b3_index(c, n, n2, p)] = s;
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`FeatureLayout::contract`]: accumulates into `a_bar`.
    fn contract_backward<T: Real>(&self, a: &[T], b_bar: &[T], a_bar: &mut [T]) {
        let nm = self.monomials.len();
        for c in 0..self.n_channels {
            for n in 0..self.n_max {
                for m in 0..nm {
                    let i = self.a_index(c, n, m);
                    let g = b_bar[self.b2_index(c, n, self.monomials.degree[m])];
                    a_bar[i] += g * a[i] * (2.0 * self.monomials.coeff[m]);
                }
            }
            if self.nu_max >= 3 {
                for n in 0..self.n_max {
                    for n2 in 0..self.n_max {
                        for (p, tc) in self.triples.iter().enumerate() {
                            let g = b_bar[self.b3_index(c, n, n2, p)];
                            for &(ia, ib, iab, coef) in &tc.terms {
                                let (x, y, z) =
                                    (self.a_index(c, n, iab), self.a_index(c, n2, ia), self.a_index(c, n2, ib));
                                let gc = g * coef;
                                a_bar[x] += gc * a[y] * a[z];
                                a_bar[y] += gc * a[x] * a[z];
                                a_bar[z] += gc * a[x] * a[y];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Atoms (as element-table indices) and directed edges with their vectors.
#[derive(Debug, Clone)]
pub(crate) struct Graph<T> {
    pub species: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub vectors: Vec<[T; 3]>,
}

pub(crate) struct KernelOut<T> {
    pub energy: T,
    /// `∂E/∂d_e` for each edge vector.
    pub edge_grad: Vec<[T; 3]>,
    /// `∂E/∂params` in [`CaceModel::params`] order; empty unless requested.
    pub param_grad: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaceModel {
    pub hyper: CaceHyper,
    /// Atomic numbers, one embedding row each.
    pub elements: Vec<u8>,
    /// Row-major `elements.len() × n_embedding`.
    pub embeddings: Vec<f64>,
    pub mlp: Mlp,
    /// Fixed standardisation of the invariant features before the MLP.
    pub feature_shift: Vec<f64>,
    pub feature_scale: Vec<f64>,
    layout: FeatureLayout,
}

impl CaceModel {
    pub fn new<R: Rng + ?Sized>(hyper: CaceHyper, elements: &[u8], rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let mut elements = elements.to_vec();
        elements.sort_unstable();
        elements.dedup();
        if elements.is_empty() {
            return Err(Error::Config("model needs at least one element".into()));
        }
        let layout = FeatureLayout::new(&hyper);
        let nf = layout.n_features();
        let embeddings = (0..elements.len() * hyper.n_embedding)
            .map(|_| {
                let mag = rng.random_range(0.5..1.5);
                if hyper.n_embedding > 1 && rng.random::<bool>() {
                    -mag
                } else {
                    mag
                }
            })
            .collect();
        let mlp = Mlp::new_random(nf, &hyper.hidden, rng);
        Ok(CaceModel {
            hyper,
            elements,
            embeddings,
            mlp,
            feature_shift: vec![0.0; nf],
            feature_scale: vec![1.0; nf],
            layout,
        })
    }

    /// Rebuilds a model from stored parts, checking shapes.
    pub fn from_parts(
        hyper: CaceHyper,
        elements: Vec<u8>,
        embeddings: Vec<f64>,
        mlp: Mlp,
        feature_shift: Vec<f64>,
        feature_scale: Vec<f64>,
    ) -> Result<Self> {
        hyper.validate()?;
        mlp.validate()?;
        let layout = FeatureLayout::new(&hyper);
        let nf = layout.n_features();
        if embeddings.len() != elements.len() * hyper.n_embedding {
            return Err(Error::Config("embedding table has the wrong size".into()));
        }
        if mlp.n_in() != nf {
            return Err(Error::Config(format!("readout expects {} features but the basis produces {nf}", mlp.n_in())));
        }
        if feature_shift.len() != nf || feature_scale.len() != nf {
            return Err(Error::Config("feature normalisation has the wrong size".into()));
        }
        Ok(CaceModel { hyper, elements, embeddings, mlp, feature_shift, feature_scale, layout })
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn embedding(&self, element_index: usize) -> &[f64] {
        let k = self.hyper.n_embedding;
        &self.embeddings[element_index * k..(element_index + 1) * k]
    }

    pub fn n_params(&self) -> usize {
        self.embeddings.len() + self.mlp.n_params()
    }

    /// Trainable parameters: embeddings, then MLP weights and biases layer by layer.
    pub fn params(&self) -> Vec<f64> {
        self.embeddings.iter().chain(self.mlp.params()).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let ne = self.embeddings.len();
        self.embeddings.copy_from_slice(&p[..ne]);
        for (dst, src) in self.mlp.params_mut().zip(&p[ne..]) {
            *dst = *src;
        }
    }

    fn element_index(&self, z: u8) -> Result<usize> {
        self.elements.binary_search(&z).map_err(|_| {
            Error::Config(format!(
                "element {} is not in the model's element table",
                crate::elements::symbol(z).unwrap_or("?")
            ))
        })
    }

    pub fn neighbor_list(&self, s: &Structure) -> Result<NeighborList> {
        build_neighbor_list(s, self.hyper.r_cut)
    }

    pub(crate) fn graph(&self, s: &Structure, nl: &NeighborList) -> Result<Graph<f64>> {
        let species = s.species.iter().map(|&z| self.element_index(z)).collect::<Result<Vec<_>>>()?;
        let mut edges = Vec::with_capacity(nl.n_edges());
        let mut vectors = Vec::with_capacity(nl.n_edges());
        for (i, nb) in nl.edges() {
            edges.push((i, nb.j));
            vectors.push([nb.vector.x, nb.vector.y, nb.vector.z]);
        }
        Ok(Graph { species, edges, vectors })
    }

    /// Raw `A` blocks per atom, before contraction.
    pub(crate) fn a_blocks<T: Real>(&self, g: &Graph<T>) -> Vec<T> {
        let lay = &self.layout;
        let (na, nm, nmax, ne) = (lay.a_len(), lay.monomials.len(), lay.n_max, self.hyper.n_embedding);
        let mut a = vec![T::zero(); g.species.len() * na];
        let mut rv = vec![T::zero(); nmax];
        let mut rd = vec![T::zero(); nmax];
        let mut lv = vec![T::zero(); nm];
        let mut lg = vec![[T::zero(); 3]; nm];
        for (e, &(i, j)) in g.edges.iter().enumerate() {
            let d = g.vectors[e];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r.re() >= self.hyper.r_cut {
                continue;
            }
            let u = [d[0] / r, d[1] / r, d[2] / r];
            radial_with_derivative(r, self.hyper.r_cut, &mut rv, &mut rd);
            lay.monomials.eval(&u, &mut lv, &mut lg);
            let (ti, tj) = (self.embedding(g.species[i]), self.embedding(g.species[j]));
            let block = &mut a[i * na..(i + 1) * na];
            for ca in 0..ne {
                for cb in 0..ne {
                    let t = ti[ca] * tj[cb];
                    let c = ca * ne + cb;
                    for n in 0..nmax {
                        let w = rv[n] * t;
                        let base = lay.a_index(c, n, 0);
                        for m in 0..nm {
                            block[base + m] += w * lv[m];
                        }
                    }
                }
            }
        }
        a
    }

    pub(crate) fn kernel<T: Real>(&self, g: &Graph<T>, want_params: bool) -> KernelOut<T> {
        let lay = &self.layout;
        let (na, nm, nmax, ne) = (lay.a_len(), lay.monomials.len(), lay.n_max, self.hyper.n_embedding);
        let nf = lay.n_features();
        let n_atoms = g.species.len();
        let n_emb_params = self.embeddings.len();
        let mut param_grad = if want_params { vec![T::zero(); self.n_params()] } else { Vec::new() };

        let a = self.a_blocks(g);
        let mut a_bar = vec![T::zero(); n_atoms * na];
        let mut energy = T::zero();
        let mut b = vec![T::zero(); nf];
        for i in 0..n_atoms {
            let ai = &a[i * na..(i + 1) * na];
            lay.contract(ai, &mut b);
            let x: Vec<T> = b
                .iter()
                .zip(self.feature_shift.iter().zip(&self.feature_scale))
                .map(|(v, (s, k))| (*v - T::cst(*s)) * *k)
                .collect();
            let (ei, tape) = self.mlp.forward_tape(&x);
            energy += ei;
            let pg = if want_params { Some(&mut param_grad[n_emb_params..]) } else { None };
            let x_bar = self.mlp.backward(&tape, T::cst(1.0), pg);
            let b_bar: Vec<T> = x_bar.iter().zip(&self.feature_scale).map(|(g, k)| *g * *k).collect();
            lay.contract_backward(ai, &b_bar, &mut a_bar[i * na..(i + 1) * na]);
        }

        let mut edge_grad = vec![[T::zero(); 3]; g.edges.len()];
        let mut rv = vec![T::zero(); nmax];
        let mut rd = vec![T::zero(); nmax];
        let mut lv = vec![T::zero(); nm];
        let mut lg = vec![[T::zero(); 3]; nm];
        let mut r_bar = vec![T::zero(); nmax];
        let mut l_bar = vec![T::zero(); nm];
        let mut t_bar = vec![T::zero(); ne * ne];
        for (e, &(i, j)) in g.edges.iter().enumerate() {
            let d = g.vectors[e];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r.re() >= self.hyper.r_cut {
                continue;
            }
            let inv_r = T::cst(1.0) / r;
            let u = [d[0] * inv_r, d[1] * inv_r, d[2] * inv_r];
            radial_with_derivative(r, self.hyper.r_cut, &mut rv, &mut rd);
            lay.monomials.eval(&u, &mut lv, &mut lg);
            let (si, sj) = (g.species[i], g.species[j]);
            let (ti, tj) = (self.embedding(si), self.embedding(sj));
            let abar = &a_bar[i * na..(i + 1) * na];
            r_bar.iter_mut().for_each(|x| *x = T::zero());
            l_bar.iter_mut().for_each(|x| *x = T::zero());
            for ca in 0..ne {
                for cb in 0..ne {
                    let t = ti[ca] * tj[cb];
                    let c = ca * ne + cb;
                    let mut tb = T::zero();
                    for n in 0..nmax {
                        let base = lay.a_index(c, n, 0);
                        let w = rv[n] * t;
                        let mut s = T::zero();
                        for m in 0..nm {
                            let g = abar[base + m];
                            s += g * lv[m];
                            l_bar[m] += g * w;
                        }
                        r_bar[n] += s * t;
                        tb += s * rv[n];
                    }
                    t_bar[c] = tb;
                }
            }
            // radial part acts along u; angular part through (I - u uᵀ)/r
            let mut gr = T::zero();
            for n in 0..nmax {
                gr += r_bar[n] * rd[n];
            }
            let mut gu = [T::zero(); 3];
            for m in 0..nm {
                for k in 0..3 {
                    gu[k] += l_bar[m] * lg[m][k];
                }
            }
            let gu_dot = gu[0] * u[0] + gu[1] * u[1] + gu[2] * u[2];
            for k in 0..3 {
                edge_grad[e][k] = gr * u[k] + (gu[k] - gu_dot * u[k]) * inv_r;
            }
            if want_params {
                for ca in 0..ne {
                    for cb in 0..ne {
                        let tb = t_bar[ca * ne + cb];
                        param_grad[si * ne + ca] += tb * tj[cb];
                        param_grad[sj * ne + cb] += tb * ti[ca];
                    }
                }
            }
        }
        KernelOut { energy, edge_grad, param_grad }
    }

    fn eval_graph(&self, s: &Structure) -> Result<(Graph<f64>, KernelOut<f64>)> {
        let nl = self.neighbor_list(s)?;
        let g = self.graph(s, &nl)?;
        let out = self.kernel(&g, false);
        Ok((g, out))
    }

    pub fn total_energy(&self, s: &Structure) -> Result<f64> {
        Ok(self.atomic_energies(s)?.iter().sum())
    }

    pub fn atomic_energies(&self, s: &Structure) -> Result<Vec<f64>> {
        let nl = self.neighbor_list(s)?;
        let g = self.graph(s, &nl)?;
        let a = self.a_blocks(&g);
        let na = self.layout.a_len();
        let nf = self.layout.n_features();
        let mut b = vec![0.0; nf];
        (0..s.len())
            .map(|i| {
                self.layout.contract(&a[i * na..(i + 1) * na], &mut b);
                let x: Vec<f64> = b
                    .iter()
                    .zip(self.feature_shift.iter().zip(&self.feature_scale))
                    .map(|(v, (sh, k))| (v - sh) * k)
                    .collect();
                self.mlp.forward(&x)
            })
            .collect()
    }

    /// Per-atom `A` blocks, indexed by [`FeatureLayout::a_index`].
    pub fn a_features(&self, s: &Structure) -> Result<Vec<Vec<f64>>> {
        let nl = self.neighbor_list(s)?;
        let g = self.graph(s, &nl)?;
        let a = self.a_blocks(&g);
        Ok(a.chunks(self.layout.a_len()).map(<[f64]>::to_vec).collect())
    }

    /// Per-atom invariant features before standardisation.
    pub fn b_features(&self, s: &Structure) -> Result<Vec<Vec<f64>>> {
        Ok(self.a_features(s)?.iter().map(|a| b_features(&self.layout, a)).collect())
    }

    /// Sets the feature standardisation to the per-feature mean and standard
    /// deviation over all atoms of `structures`. The deviation is floored at 5%
    /// of the feature's RMS so near-constant features are not blown up.
    pub fn fit_feature_normalization(&mut self, structures: &[Structure]) -> Result<()> {
        let nf = self.layout.n_features();
        let mut sum = vec![0.0; nf];
        let mut sum2 = vec![0.0; nf];
        let mut count = 0usize;
        for s in structures {
            for b in self.b_features(s)? {
                for k in 0..nf {
                    sum[k] += b[k];
                    sum2[k] += b[k] * b[k];
                }
                count += 1;
            }
        }
        if count == 0 {
            return Ok(());
        }
        for k in 0..nf {
            let mean = sum[k] / count as f64;
            let var = (sum2[k] / count as f64 - mean * mean).max(0.0);
            let rms = (var + mean * mean).sqrt();
            self.feature_shift[k] = mean;
            self.feature_scale[k] = if rms > 0.0 { 1.0 / var.sqrt().max(0.05 * rms) } else { 1.0 };
        }
        Ok(())
    }

    /// Energy and its gradient with respect to all trainable parameters.
    pub fn energy_param_gradient(&self, s: &Structure) -> Result<(f64, Vec<f64>)> {
        let nl = self.neighbor_list(s)?;
        let g = self.graph(s, &nl)?;
        let out = self.kernel(&g, true);
        Ok((out.energy, out.param_grad))
    }
}

/// Contracts one atom's `A` block into invariant `B` features.
pub fn b_features(layout: &FeatureLayout, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; layout.n_features()];
    layout.contract(a, &mut out);
    out
}

pub(crate) fn forces_from_edges<T: Real>(
    n_atoms: usize,
    edges: &[(usize, usize)],
    edge_grad: &[[T; 3]],
) -> Vec<[T; 3]> {
    let mut f = vec![[T::zero(); 3]; n_atoms];
    for (&(i, j), g) in edges.iter().zip(edge_grad) {
        for k in 0..3 {
            f[i][k] += g[k];
            f[j][k] -= g[k];
        }
    }
    f
}

/// `Σ_e (∂E/∂d_e) ⊗ d_e`, i.e. `∂E/∂γ` for the deformation `d → (I + γ) d`.
pub(crate) fn virial_from_edges<T: Real>(vectors: &[[T; 3]], edge_grad: &[[T; 3]]) -> [[T; 3]; 3] {
    let mut w = [[T::zero(); 3]; 3];
    for (d, g) in vectors.iter().zip(edge_grad) {
        for a in 0..3 {
            for b in 0..3 {
                w[a][b] += g[a] * d[b];
            }
        }
    }
    w
}

impl Potential for CaceModel {
    fn name(&self) -> &str {
        "cace"
    }

    fn compute(&self, s: &Structure) -> Result<Response> {
        let (g, out) = self.eval_graph(s)?;
        let forces = forces_from_edges(s.len(), &g.edges, &out.edge_grad)
            .into_iter()
            .map(|f| Vec3::new(f[0], f[1], f[2]))
            .collect();
        let virial = s.pbc().then(|| {
            let w = virial_from_edges(&g.vectors, &out.edge_grad);
            Mat3::from_fn(|a, b| w[a][b])
        });
        Ok(Response { energy: out.energy, forces, virial })
    }
}
