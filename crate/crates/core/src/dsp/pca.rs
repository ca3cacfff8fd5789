use nalgebra::{DMatrix, SymmetricEigen};

use crate::nn::Real;
use crate::{Error, Result};

/// Orthogonal projection onto the leading principal directions of a data set.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    /// `[D]`
    pub mean: Vec<f64>,
    /// `[k × D]`, orthonormal rows ordered by descending variance.
    pub components: Vec<f64>,
    /// `[k]`, non-increasing.
    pub explained_variance: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl PcaModel {
    /// Fits on the rows of `data` (`[N × dim]`). Requires `N > k`.
    ///
    /// Components come from the eigendecomposition of the sample covariance;
    /// each is signed so that its largest-magnitude coefficient is positive.
    pub fn fit(data: &[f64], dim: usize, k: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::invalid("PCA data is not a whole number of rows"));
        }
        let n = data.len() / dim;
        if n <= k {
            return Err(Error::invalid(format!("PCA needs more than {k} rows, got {n}")));
        }
        if k == 0 || k > dim {
            return Err(Error::invalid(format!("PCA output dimension {k} must be in 1..={dim}")));
        }
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<f64> = data
            .chunks_exact(dim)
            .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m))
            .collect();
        let mut cov = vec![0.0; dim * dim];
        f64::gemm(true, false, dim, dim, n, 1.0 / (n - 1) as f64, &centered, &centered, 0.0, &mut cov);

        let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &cov));
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut components = Vec::with_capacity(k * dim);
        let mut explained_variance = Vec::with_capacity(k);
        for &j in order.iter().take(k) {
            let col = eig.eigenvectors.column(j);
            let pivot = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            components.extend(col.iter().map(|v| v * sign));
            explained_variance.push(eig.eigenvalues[j].max(0.0));
        }
        Ok(Self {
            mean,
            components,
            explained_variance,
            input_dim: dim,
            output_dim: k,
        })
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// `y = components · (x − mean)`
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape("pca_transform", &[x.len()], &[self.input_dim]));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok((0..self.output_dim)
            .map(|i| self.component(i).iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `x̂ = componentsᵀ · y + mean`
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim {
            return Err(Error::shape("pca_inverse", &[y.len()], &[self.output_dim]));
        }
        let mut x = self.mean.clone();
        for (i, &yi) in y.iter().enumerate() {
            for (xv, &c) in x.iter_mut().zip(self.component(i)) {
                *xv += yi * c;
            }
        }
        Ok(x)
    }

    /// Row-wise [`transform`](Self::transform) of an `[N × D]` matrix.
    pub fn transform_rows(&self, data: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim;
        if data.len() % d != 0 {
            return Err(Error::shape("pca_transform", &[data.len()], &[d]));
        }
        let n = data.len() / d;
        let centered: Vec<f64> = data
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(&self.mean).map(|(v, m)| v - m))
            .collect();
        let mut out = vec![0.0; n * self.output_dim];
        f64::gemm(false, true, n, self.output_dim, d, 1.0, &centered, &self.components, 0.0, &mut out);
        Ok(out)
    }
}
