use serde::{Deserialize, Serialize};

/// A finite-sum objective f = (1/n) sum_l f_l whose gradient is homogeneous:
/// grad f_l(c x) = c^(degree-1) grad f_l(x) for c > 0. Multiplicatively
/// scale-invariant objectives have degree p with f(c x) = c^p f(x);
/// additively invariant ones (f(c x) = f(x) + const) use degree 0.
///
/// Implementations choose their own per-sample scaling as long as
/// `grad_full` equals the mean of `grad_sample` over all samples. Scaling
/// preserves homogeneity, so the solver never needs to know.
pub trait ScaleInvariantProblem {
    fn dimension(&self) -> usize;

    fn num_samples(&self) -> usize;

    /// Homogeneity degree p. A real parameter, not an integer.
    fn degree(&self) -> f64;

    fn value(&self, x: &[f64]) -> f64;

    fn grad_full(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_samples();
        let mut buf = vec![0.0; self.dimension()];
        out.fill(0.0);
        for l in 0..n {
            self.grad_sample(l, x, &mut buf);
            for (o, &b) in out.iter_mut().zip(&buf) {
                *o += b / n as f64;
            }
        }
    }

    fn grad_sample(&self, sample: usize, x: &[f64], out: &mut [f64]);

    /// Mean of `grad_sample` over a batch; repeats keep their multiplicity.
    fn grad_batch(&self, batch: &[usize], x: &[f64], out: &mut [f64]) {
        let mut buf = vec![0.0; self.dimension()];
        out.fill(0.0);
        let s = batch.len() as f64;
        for &l in batch {
            self.grad_sample(l, x, &mut buf);
            for (o, &b) in out.iter_mut().zip(&buf) {
                *o += b / s;
            }
        }
    }
}

/// f(x) = (1/2) x^T diag(eigs) x written as an n = d sample sum,
/// f_l(x) = (d/2) eigs_l x_l^2. The gradient map is the diagonal matrix
/// itself, so the full-batch solver reduces to classical power iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagonalQuadratic {
    eigs: Vec<f64>,
}

impl DiagonalQuadratic {
    pub fn new(eigs: Vec<f64>) -> Self {
        assert!(!eigs.is_empty());
        DiagonalQuadratic { eigs }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }
}

impl ScaleInvariantProblem for DiagonalQuadratic {
    fn dimension(&self) -> usize {
        self.eigs.len()
    }

    fn num_samples(&self) -> usize {
        self.eigs.len()
    }

    fn degree(&self) -> f64 {
        2.0
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self
            .eigs
            .iter()
            .zip(x)
            .map(|(&e, &xi)| e * xi * xi)
            .sum::<f64>()
    }

    fn grad_full(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &e), &xi) in out.iter_mut().zip(&self.eigs).zip(x) {
            *o = e * xi;
        }
    }

    fn grad_sample(&self, sample: usize, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[sample] = self.eigs.len() as f64 * self.eigs[sample] * x[sample];
    }
}

/// Leading-eigenvector objective of a sample second-moment matrix:
/// f(x) = (1/2n) sum_l (a_l^T x)^2 over data rows a_l.
#[derive(Debug, Clone)]
pub struct PcaProblem {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl PcaProblem {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty());
        let dim = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == dim));
        PcaProblem { rows, dim }
    }

    /// The matrix (1/n) sum a_l a_l^T whose top eigenvector the solver seeks.
    pub fn second_moment(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len() as f64;
        let mut m = vec![vec![0.0; self.dim]; self.dim];
        for row in &self.rows {
            for (i, &ri) in row.iter().enumerate() {
                for (j, &rj) in row.iter().enumerate() {
                    m[i][j] += ri * rj / n;
                }
            }
        }
        m
    }
}

impl ScaleInvariantProblem for PcaProblem {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.rows.len()
    }

    fn degree(&self) -> f64 {
        2.0
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.rows.len() as f64;
        0.5 / n
            * self
                .rows
                .iter()
                .map(|r| {
                    let d = dot(r, x);
                    d * d
                })
                .sum::<f64>()
    }

    fn grad_sample(&self, sample: usize, x: &[f64], out: &mut [f64]) {
        let a = &self.rows[sample];
        let d = dot(a, x);
        for (o, &ai) in out.iter_mut().zip(a) {
            *o = d * ai;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
