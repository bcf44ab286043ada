//! Directed graphs and their gradient operator `(∇x)[(i,j)] = x(j) − x(i)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed graph together with the quantities the gradient-sparsity
/// model needs: the maximum total degree and the weak components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGradientParams {
    vertices: usize,
    edges: Vec<(usize, usize)>,
    max_total_degree: usize,
    /// Weak-component label of every vertex, labels numbered by first vertex.
    component_of: Vec<usize>,
    component_sizes: Vec<usize>,
}

impl GraphGradientParams {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if vertices == 0 {
            return Err(Error::input("graph needs at least one vertex"));
        }
        let mut degree = vec![0usize; vertices];
        for &(i, j) in &edges {
            if i >= vertices || j >= vertices {
                return Err(Error::input(format!(
                    "edge ({i}, {j}) references a vertex outside 0..{vertices}"
                )));
            }
            if i == j {
                return Err(Error::input(format!("self-loop at vertex {i}")));
            }
            degree[i] += 1;
            degree[j] += 1;
        }
        let max_total_degree = degree.iter().cloned().max().unwrap_or(0);
        let (component_of, component_sizes) = components(vertices, edges.iter().cloned());
        Ok(GraphGradientParams { vertices, edges, max_total_degree, component_of, component_sizes })
    }

    /// Directed path `0 → 1 → … → n−1`.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect())
    }

    /// Four-neighbour grid graph with edges pointing right and down.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Δ: maximum over vertices of in-degree plus out-degree.
    pub fn max_total_degree(&self) -> usize {
        self.max_total_degree
    }

    pub fn component_of(&self) -> &[usize] {
        &self.component_of
    }

    pub fn num_components(&self) -> usize {
        self.component_sizes.len()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.edges.len(), self.edges.iter().map(|&(i, j)| x[j] - x[i]))
    }

    /// Adjoint `∇ᵀp`.
    pub fn divergence_adjoint(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.vertices);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            out[j] += p[e];
            out[i] -= p[e];
        }
        out
    }

    /// Dense `∇ᵀ∇ = D − A` (graph Laplacian of the underlying multigraph).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.vertices, self.vertices);
        for &(i, j) in &self.edges {
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
        }
        l
    }

    /// Subtract the mean on every weak component, i.e. project onto ker(∇)^⊥.
    pub fn project_off_kernel(&self, x: &DVector<f64>) -> DVector<f64> {
        average_over(x, &self.component_of, self.component_sizes.len()).map_or_else(
            || x.clone(),
            |means| DVector::from_fn(self.vertices, |v, _| x[v] - means[self.component_of[v]]),
        )
    }

    /// Weak components of the subgraph `(V, edges[mask])`.
    pub fn subgraph_components(&self, keep: &[bool]) -> (Vec<usize>, Vec<usize>) {
        components(
            self.vertices,
            self.edges.iter().zip(keep).filter(|(_, &k)| k).map(|(&e, _)| e),
        )
    }
}

/// Per-label means of `x`. `None` only for an empty labelling.
pub(crate) fn average_over(x: &DVector<f64>, labels: &[usize], count: usize) -> Option<Vec<f64>> {
    if count == 0 {
        return None;
    }
    let mut sums = vec![0.0; count];
    let mut sizes = vec![0usize; count];
    for (v, &c) in labels.iter().enumerate() {
        sums[c] += x[v];
        sizes[c] += 1;
    }
    Some(sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect())
}

/// Replace every entry by the mean over its label class.
pub(crate) fn piecewise_mean(x: &DVector<f64>, labels: &[usize], count: usize) -> DVector<f64> {
    match average_over(x, labels, count) {
        Some(means) => DVector::from_fn(x.len(), |v, _| means[labels[v]]),
        None => x.clone(),
    }
}

fn components(
    vertices: usize,
    edges: impl Iterator<Item = (usize, usize)>,
) -> (Vec<usize>, Vec<usize>) {
    let mut parent: Vec<usize> = (0..vertices).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for (i, j) in edges {
        let ri = find(&mut parent, i);
        let rj = find(&mut parent, j);
        if ri != rj {
            let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
            parent[hi] = lo;
        }
    }
    let mut label_of_root = vec![usize::MAX; vertices];
    let mut labels = vec![0usize; vertices];
    let mut sizes = Vec::new();
    for v in 0..vertices {
        let r = find(&mut parent, v);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = sizes.len();
            sizes.push(0);
        }
        labels[v] = label_of_root[r];
        sizes[labels[v]] += 1;
    }
    (labels, sizes)
}

/// Upper bound `√(2Δ)` on `‖∇‖₂` from Gershgorin's circle theorem applied
/// to `D − A`.
pub fn gradient_operator_norm_bound(params: &GraphGradientParams) -> f64 {
    (2.0 * params.max_total_degree() as f64).sqrt()
}
