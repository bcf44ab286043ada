//! CS spaces: a signal space, an atom set and a sharp norm that together
//! satisfy the decomposability property with bound `L`.
//!
//! Four models are provided: weighted sparsity (plain ℓ₁ with unit
//! weights), block sparsity, gradient sparsity on a directed graph and
//! low-rank matrices. Signals are `DVector<f64>`; matrices are flattened
//! row-major. Gradient-sparsity signals live in `ℝ^V` and are reduced to
//! `ker(∇)^⊥` by subtracting per-component means before any ℓ₂ quantity is
//! evaluated.

mod graph;

pub use graph::{gradient_operator_norm_bound, GraphGradientParams};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{flatten_row_major, unflatten_row_major, Svd};
use crate::rng::{gaussian, Stream};

pub(crate) use graph::piecewise_mean;

/// Relative tolerance used to decide the numerical rank of matrices.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSparsityParams {
    weights: Vec<f64>,
}

impl WeightedSparsityParams {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("weights must be nonempty"));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::input(format!("weight {i} = {w} is not strictly positive")));
        }
        Ok(WeightedSparsityParams { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `S_W(x) = Σ_{i ∈ supp(x)} w_i²` over the exact support.
    pub fn weighted_sparsity(&self, x: &DVector<f64>) -> f64 {
        x.iter().zip(&self.weights).filter(|(v, _)| **v != 0.0).map(|(_, w)| w * w).sum()
    }
}

/// Partition of `0..N` into disjoint blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    blocks: Vec<Vec<usize>>,
}

impl BlockStructure {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(|b| b.len()).sum();
        let mut seen = vec![false; n];
        for (j, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::input(format!("block {j} is empty")));
            }
            for &i in b {
                if i >= n || seen[i] {
                    return Err(Error::input(format!(
                        "blocks must partition 0..{n}; index {i} is repeated or out of range"
                    )));
                }
                seen[i] = true;
            }
        }
        if n == 0 {
            return Err(Error::input("block structure is empty"));
        }
        Ok(BlockStructure { blocks })
    }

    /// Consecutive blocks of equal size.
    pub fn uniform(n: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || n % block_size != 0 {
            return Err(Error::input(format!("block size {block_size} does not divide {n}")));
        }
        Self::new((0..n / block_size).map(|b| (b * block_size..(b + 1) * block_size).collect()).collect())
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// `B(x)[j] = ‖x_j‖₂`.
    pub fn block_norms(&self, x: &DVector<f64>) -> Vec<f64> {
        self.blocks.iter().map(|b| b.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()).collect()
    }

    fn block_count(&self, x: &DVector<f64>) -> usize {
        self.blocks.iter().filter(|b| b.iter().any(|&i| x[i] != 0.0)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowRankParams {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    WeightedSparsity(WeightedSparsityParams),
    BlockSparsity(BlockStructure),
    GradientSparsity(GraphGradientParams),
    LowRank(LowRankParams),
}

impl Model {
    pub fn id(&self) -> &'static str {
        match self {
            Model::WeightedSparsity(_) => "weighted_sparsity",
            Model::BlockSparsity(_) => "block_sparsity",
            Model::GradientSparsity(_) => "gradient_sparsity",
            Model::LowRank(_) => "low_rank",
        }
    }
}

/// A CS space with sparsity level `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsSpace {
    model: Model,
    k: usize,
}

/// `z = z1 + z2` realizing the decomposability property for a given atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub z1: DVector<f64>,
    pub z2: DVector<f64>,
}

/// Numerical evidence that a decomposition satisfies its invariants.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionCertificate {
    /// `‖z1 + z2 − z‖ / max(‖z‖, 1)`.
    pub reconstruction: f64,
    /// `|⟨z1, z2⟩| / max(‖z1‖‖z2‖, 1)`.
    pub orthogonality: f64,
    /// `|‖a+z1‖♯ − ‖a‖♯ − ‖z1‖♯| / max(‖a‖♯ + ‖z1‖♯, 1)`.
    pub additivity: f64,
    /// Auxiliary-set measure of `z2` and the bound it must respect.
    pub aux_measure: f64,
    pub aux_bound: f64,
    pub z2_sharp: f64,
    pub z2_norm: f64,
    pub z_norm: f64,
    pub bound_l: f64,
}

impl DecompositionCertificate {
    pub const RECONSTRUCTION_TOL: f64 = 1e-10;
    pub const EQUALITY_TOL: f64 = 1e-8;

    pub fn membership_ok(&self) -> bool {
        self.aux_measure <= self.aux_bound + 1e-9
            && self.z2_sharp <= self.bound_l * self.z2_norm * (1.0 + Self::EQUALITY_TOL) + 1e-12
    }

    pub fn bound_ok(&self) -> bool {
        self.z2_sharp <= self.bound_l * self.z_norm * (1.0 + Self::EQUALITY_TOL) + 1e-12
    }

    pub fn all_ok(&self) -> bool {
        self.reconstruction <= Self::RECONSTRUCTION_TOL
            && self.orthogonality <= Self::EQUALITY_TOL
            && self.additivity <= Self::EQUALITY_TOL
            && self.membership_ok()
            && self.bound_ok()
    }
}

impl CsSpace {
    pub fn new(model: Model, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::input("sparsity level K must be positive"));
        }
        Ok(CsSpace { model, k })
    }

    /// Plain ℓ₁ / `K`-sparse vectors (weighted sparsity with unit weights).
    pub fn l1(n: usize, k: usize) -> Result<Self> {
        Self::weighted(vec![1.0; n], k)
    }

    pub fn weighted(weights: Vec<f64>, k: usize) -> Result<Self> {
        Self::new(Model::WeightedSparsity(WeightedSparsityParams::new(weights)?), k)
    }

    pub fn block(blocks: BlockStructure, k: usize) -> Result<Self> {
        Self::new(Model::BlockSparsity(blocks), k)
    }

    pub fn gradient(graph: GraphGradientParams, k: usize) -> Result<Self> {
        Self::new(Model::GradientSparsity(graph), k)
    }

    pub fn low_rank(rows: usize, cols: usize, k: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input("matrix dimensions must be positive"));
        }
        Self::new(Model::LowRank(LowRankParams { rows, cols }), k)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn sparsity_level(&self) -> usize {
        self.k
    }

    /// Length of the stored signal vector.
    pub fn ambient_dim(&self) -> usize {
        match &self.model {
            Model::WeightedSparsity(p) => p.weights.len(),
            Model::BlockSparsity(b) => b.dim(),
            Model::GradientSparsity(g) => g.vertices(),
            Model::LowRank(p) => p.rows * p.cols,
        }
    }

    /// Bound `L`: √K (weighted, block), 2Δ√K (gradient), √(2K) (low rank).
    pub fn bound_l(&self) -> f64 {
        let k = self.k as f64;
        match &self.model {
            Model::WeightedSparsity(_) | Model::BlockSparsity(_) => k.sqrt(),
            Model::GradientSparsity(g) => 2.0 * g.max_total_degree() as f64 * k.sqrt(),
            Model::LowRank(_) => (2.0 * k).sqrt(),
        }
    }

    pub fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.ambient_dim(), x.len())
    }

    pub fn sharp_norm(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.sharp(x))
    }

    pub(crate) fn sharp(&self, x: &DVector<f64>) -> f64 {
        match &self.model {
            Model::WeightedSparsity(p) => x.iter().zip(&p.weights).map(|(v, w)| w * v.abs()).sum(),
            Model::BlockSparsity(b) => b.block_norms(x).iter().sum(),
            Model::GradientSparsity(g) => g.gradient(x).lp_norm(1),
            Model::LowRank(p) => crate::linalg::nuclear_norm(&unflatten_row_major(x, p.rows, p.cols)),
        }
    }

    /// Orthogonal projection onto the Hilbert space ℋ (identity except for
    /// gradient sparsity, where per-component means are removed).
    pub fn project_ambient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.model {
            Model::GradientSparsity(g) => g.project_off_kernel(x),
            _ => x.clone(),
        }
    }

    /// Inner product of ℋ.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match &self.model {
            Model::GradientSparsity(g) => g.project_off_kernel(x).dot(y),
            _ => x.dot(y),
        }
    }

    pub fn norm2(&self, x: &DVector<f64>) -> f64 {
        match &self.model {
            Model::GradientSparsity(g) => g.project_off_kernel(x).norm(),
            _ => x.norm(),
        }
    }

    /// Sparsity measure defining the atom set: `S_W`, block count, `‖∇a‖₀`,
    /// or rank.
    pub fn atom_measure(&self, a: &DVector<f64>) -> f64 {
        match &self.model {
            Model::WeightedSparsity(p) => p.weighted_sparsity(a),
            Model::BlockSparsity(b) => b.block_count(a) as f64,
            Model::GradientSparsity(g) => gradient_support(g, a).iter().filter(|&&s| s).count() as f64,
            Model::LowRank(p) => Svd::new(&unflatten_row_major(a, p.rows, p.cols)).rank(RANK_TOL) as f64,
        }
    }

    pub fn is_atom(&self, a: &DVector<f64>) -> bool {
        self.atom_measure(a) <= self.k as f64 + 1e-12
    }

    /// Measure of the auxiliary set `B` and its bound: `S_W ≤ K`, block
    /// count `≤ K`, `‖∇z‖₀ ≤ 2KΔ`, rank `≤ 2K`.
    pub fn aux_measure(&self, z: &DVector<f64>) -> (f64, f64) {
        let k = self.k as f64;
        match &self.model {
            Model::WeightedSparsity(_) | Model::BlockSparsity(_) => (self.atom_measure(z), k),
            Model::GradientSparsity(g) => (self.atom_measure(z), 2.0 * k * g.max_total_degree() as f64),
            Model::LowRank(_) => (self.atom_measure(z), 2.0 * k),
        }
    }

    /// Decompose `z` relative to the atom `a` so that `‖a + z1‖♯ = ‖a‖♯ +
    /// ‖z1‖♯`, `⟨z1, z2⟩ = 0` and `z2` lies in the auxiliary set.
    pub fn decompose(&self, a: &DVector<f64>, z: &DVector<f64>) -> Result<Decomposition> {
        self.check_dim(a)?;
        self.check_dim(z)?;
        if !self.is_atom(a) {
            let what = match &self.model {
                Model::WeightedSparsity(_) => "weighted sparsity S_W(a)",
                Model::BlockSparsity(_) => "block sparsity of a",
                Model::GradientSparsity(_) => "gradient sparsity ‖∇a‖₀",
                Model::LowRank(_) => "rank(a)",
            };
            return Err(Error::precondition(format!(
                "a is not an atom: {what} = {} exceeds K = {}",
                self.atom_measure(a),
                self.k
            )));
        }
        let (z1, z2) = match &self.model {
            Model::WeightedSparsity(_) => {
                let z2 = DVector::from_fn(z.len(), |i, _| if a[i] != 0.0 { z[i] } else { 0.0 });
                (z - &z2, z2)
            }
            Model::BlockSparsity(b) => {
                let mut z2 = DVector::zeros(z.len());
                for blk in b.blocks() {
                    if blk.iter().any(|&i| a[i] != 0.0) {
                        for &i in blk {
                            z2[i] = z[i];
                        }
                    }
                }
                (z - &z2, z2)
            }
            Model::GradientSparsity(g) => {
                // z1 averages z over the weak components of H = (V, supp ∇a);
                // z2 then has zero mean on each of them, hence lies in ℋ.
                let (labels, sizes) = g.subgraph_components(&gradient_support(g, a));
                let z1 = piecewise_mean(z, &labels, sizes.len());
                let z2 = z - &z1;
                (z1, z2)
            }
            Model::LowRank(p) => {
                let am = unflatten_row_major(a, p.rows, p.cols);
                let zm = unflatten_row_major(z, p.rows, p.cols);
                let svd = Svd::new(&am);
                let r = svd.rank(RANK_TOL);
                let ur = svd.u.columns(0, r).into_owned();
                let vr = svd.v.columns(0, r).into_owned();
                let pu = DMatrix::identity(p.rows, p.rows) - &ur * ur.transpose();
                let pv = DMatrix::identity(p.cols, p.cols) - &vr * vr.transpose();
                // U [0 0; 0 Y22] Vᵀ with Y = UᵀZV, written with complementary projectors
                let z1m = &pu * &zm * &pv;
                let z1 = flatten_row_major(&z1m);
                let z2 = z - &z1;
                (z1, z2)
            }
        };
        Ok(Decomposition { z1, z2 })
    }

    /// Evaluate all decomposition invariants for `(a, z) ↦ (z1, z2)`.
    pub fn certify(&self, a: &DVector<f64>, z: &DVector<f64>, d: &Decomposition) -> DecompositionCertificate {
        let recon = (&d.z1 + &d.z2 - z).norm() / z.norm().max(1.0);
        let orth = self.inner(&d.z1, &d.z2).abs() / (self.norm2(&d.z1) * self.norm2(&d.z2)).max(1.0);
        let sa = self.sharp(a);
        let sz1 = self.sharp(&d.z1);
        let saz = self.sharp(&(a + &d.z1));
        let additivity = (saz - sa - sz1).abs() / (sa + sz1).max(1.0);
        let (aux_measure, aux_bound) = self.aux_measure(&d.z2);
        DecompositionCertificate {
            reconstruction: recon,
            orthogonality: orth,
            additivity,
            aux_measure,
            aux_bound,
            z2_sharp: self.sharp(&d.z2),
            z2_norm: self.norm2(&d.z2),
            z_norm: self.norm2(z),
            bound_l: self.bound_l(),
        }
    }

    /// Some atom intended to make `‖x − a‖♯` small.
    ///
    /// Weighted: greedy by `|w_i x_i|` while `S_W ≤ K`, ties broken by
    /// ascending index. Block: top-K blocks by norm. Low rank: truncated
    /// SVD. Gradient: repeatedly merge the edge with the smallest nonzero
    /// gradient magnitude until `∇a` is K-sparse.
    pub fn best_atom_approx(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let k = self.k;
        Ok(match &self.model {
            Model::WeightedSparsity(p) => {
                let w = &p.weights;
                let mut order: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
                order.sort_by(|&i, &j| {
                    (w[j] * x[j].abs()).partial_cmp(&(w[i] * x[i].abs())).unwrap_or(std::cmp::Ordering::Equal)
                });
                let mut budget = 0.0;
                let mut a = DVector::zeros(x.len());
                for i in order {
                    if budget + w[i] * w[i] <= k as f64 + 1e-12 {
                        budget += w[i] * w[i];
                        a[i] = x[i];
                    }
                }
                a
            }
            Model::BlockSparsity(b) => {
                let norms = b.block_norms(x);
                let mut order: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] > 0.0).collect();
                order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
                let mut a = DVector::zeros(x.len());
                for &j in order.iter().take(k) {
                    for &i in &b.blocks()[j] {
                        a[i] = x[i];
                    }
                }
                a
            }
            Model::GradientSparsity(g) => greedy_gradient_atom(g, x, k),
            Model::LowRank(p) => {
                let svd = Svd::new(&unflatten_row_major(x, p.rows, p.cols));
                let s = DVector::from_fn(svd.singular_values.len(), |i, _| {
                    if i < k {
                        svd.singular_values[i]
                    } else {
                        0.0
                    }
                });
                flatten_row_major(&svd.recompose(&s))
            }
        })
    }

    /// One subgradient of the sharp norm at `x`.
    pub fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.model {
            Model::WeightedSparsity(p) => DVector::from_fn(x.len(), |i, _| {
                if x[i] == 0.0 {
                    0.0
                } else {
                    p.weights[i] * x[i].signum()
                }
            }),
            Model::BlockSparsity(b) => {
                let mut out = DVector::zeros(x.len());
                for (blk, n) in b.blocks().iter().zip(b.block_norms(x)) {
                    if n > 0.0 {
                        for &i in blk {
                            out[i] = x[i] / n;
                        }
                    }
                }
                out
            }
            Model::GradientSparsity(g) => {
                let d = g.gradient(x);
                g.divergence_adjoint(&d.map(|v| if v == 0.0 { 0.0 } else { v.signum() }))
            }
            Model::LowRank(p) => {
                let svd = Svd::new(&unflatten_row_major(x, p.rows, p.cols));
                let r = svd.rank(RANK_TOL);
                let s = DVector::from_fn(svd.singular_values.len(), |i, _| if i < r { 1.0 } else { 0.0 });
                flatten_row_major(&svd.recompose(&s))
            }
        }
    }

    /// Draw a random atom (possibly zero) for coverage experiments.
    pub fn random_atom(&self, rng: &mut Stream) -> DVector<f64> {
        let n = self.ambient_dim();
        let k = self.k;
        match &self.model {
            Model::WeightedSparsity(p) => {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(rng);
                let target = rng.random_range(0..=k.min(n));
                let mut a = DVector::zeros(n);
                let mut budget = 0.0;
                let mut taken = 0;
                for i in idx {
                    if taken == target {
                        break;
                    }
                    let w2 = p.weights[i] * p.weights[i];
                    if budget + w2 <= k as f64 {
                        budget += w2;
                        a[i] = gaussian(rng);
                        taken += 1;
                    }
                }
                a
            }
            Model::BlockSparsity(b) => {
                let mut idx: Vec<usize> = (0..b.blocks().len()).collect();
                idx.shuffle(rng);
                let take = rng.random_range(0..=k.min(idx.len()));
                let mut a = DVector::zeros(n);
                for &j in idx.iter().take(take) {
                    for &i in &b.blocks()[j] {
                        a[i] = gaussian(rng);
                    }
                }
                a
            }
            Model::GradientSparsity(g) => {
                let m = g.edges().len();
                let mut idx: Vec<usize> = (0..m).collect();
                idx.shuffle(rng);
                let cut = rng.random_range(0..=k.min(m));
                let mut keep = vec![true; m];
                for &e in idx.iter().take(cut) {
                    keep[e] = false;
                }
                let (labels, sizes) = g.subgraph_components(&keep);
                let values: Vec<f64> = (0..sizes.len()).map(|_| gaussian(rng)).collect();
                let a = DVector::from_fn(n, |v, _| values[labels[v]]);
                g.project_off_kernel(&a)
            }
            Model::LowRank(p) => {
                let r = rng.random_range(0..=k.min(p.rows.min(p.cols)));
                let mut am = DMatrix::zeros(p.rows, p.cols);
                for _ in 0..r {
                    let u = DVector::from_fn(p.rows, |_, _| gaussian(rng));
                    let v = DVector::from_fn(p.cols, |_, _| gaussian(rng));
                    am += u * v.transpose();
                }
                flatten_row_major(&am)
            }
        }
    }

    /// Standard Gaussian vector of ℋ.
    pub fn random_gaussian(&self, rng: &mut Stream) -> DVector<f64> {
        let g = DVector::from_fn(self.ambient_dim(), |_, _| gaussian(rng));
        self.project_ambient(&g)
    }
}

/// Edges on which `∇a` is nonzero, relative to the signal's scale.
fn gradient_support(g: &GraphGradientParams, a: &DVector<f64>) -> Vec<bool> {
    let tol = 1e-12 * a.amax();
    g.gradient(a).iter().map(|d| d.abs() > tol).collect()
}

fn greedy_gradient_atom(g: &GraphGradientParams, x: &DVector<f64>, k: usize) -> DVector<f64> {
    let xh = g.project_off_kernel(x);
    let mut merged = vec![false; g.edges().len()];
    loop {
        let (labels, sizes) = g.subgraph_components(&merged);
        let a = piecewise_mean(&xh, &labels, sizes.len());
        let grad = g.gradient(&a);
        let tol = 1e-12 * a.amax();
        let active: Vec<usize> = (0..grad.len()).filter(|&e| grad[e].abs() > tol).collect();
        if active.len() <= k {
            return a;
        }
        let next = active
            .iter()
            .cloned()
            .min_by(|&i, &j| grad[i].abs().partial_cmp(&grad[j].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("active set is nonempty");
        merged[next] = true;
    }
}
