//! Learned linear analysis/synthesis pair: mean removal followed by projection
//! onto the top principal directions of the training rows.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::PrecodingTensor;

/// Tokens of the latent, one per stacked precoder row.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    num_tokens: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Latent {
    pub fn from_vec(num_tokens: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_tokens * dim {
            return Err(Error::input(format!(
                "latent has {} entries, expected {num_tokens}x{dim}",
                data.len()
            )));
        }
        Ok(Self { num_tokens, dim, data })
    }

    pub fn zeros(num_tokens: usize, dim: usize) -> Self {
        Self {
            num_tokens,
            dim,
            data: vec![0.0; num_tokens * dim],
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.num_tokens)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Analysis matrix with orthonormal rows plus the training mean.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    num_tx: usize,
    latent_dim: usize,
    /// `d x 2Nt`, row-major.
    analysis: Vec<f64>,
    mean: Vec<f64>,
}

impl TransformPair {
    pub fn from_parts(num_tx: usize, latent_dim: usize, analysis: Vec<f64>, mean: Vec<f64>) -> Result<Self> {
        let width = 2 * num_tx;
        if latent_dim == 0 || latent_dim > width {
            return Err(Error::config("latent_dim", format!("must be in 1..={width}")));
        }
        if analysis.len() != latent_dim * width || mean.len() != width {
            return Err(Error::input("transform parts have inconsistent sizes"));
        }
        Ok(Self {
            num_tx,
            latent_dim,
            analysis,
            mean,
        })
    }

    pub fn num_tx(&self) -> usize {
        self.num_tx
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn width(&self) -> usize {
        2 * self.num_tx
    }

    pub fn analysis_row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.analysis[r * w..(r + 1) * w]
    }

    pub fn analysis(&self) -> &[f64] {
        &self.analysis
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `z_i = A (row_i - m)`.
    pub fn analyze(&self, v: &PrecodingTensor) -> Result<Latent> {
        if v.cols() != self.width() {
            return Err(Error::input(format!(
                "tensor width {} does not match transform width {}",
                v.cols(),
                self.width()
            )));
        }
        let d = self.latent_dim;
        let mut z = Latent::zeros(v.rows(), d);
        let mut centered = vec![0.0; self.width()];
        for (i, row) in v.rows_iter().enumerate() {
            for ((c, x), m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = x - m;
            }
            for (r, out) in z.token_mut(i).iter_mut().enumerate() {
                *out = dot(self.analysis_row(r), &centered);
            }
        }
        Ok(z)
    }

    /// `row_i = A^T z_i + m`. The caller supplies the RB/user split of the rows.
    pub fn synthesize(&self, z: &Latent, num_rbs: usize, num_users: usize) -> Result<PrecodingTensor> {
        if z.dim() != self.latent_dim {
            return Err(Error::input(format!(
                "latent dim {} does not match transform dim {}",
                z.dim(),
                self.latent_dim
            )));
        }
        if z.num_tokens() != num_rbs * num_users {
            return Err(Error::input("token count does not equal G*K"));
        }
        let mut out = PrecodingTensor::zeros(num_rbs, num_users, self.num_tx);
        for i in 0..z.num_tokens() {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.mean);
            for (r, &coef) in z.token(i).iter().enumerate() {
                for (o, a) in row.iter_mut().zip(self.analysis_row(r)) {
                    *o += coef * a;
                }
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the mean and top-`latent_dim` principal directions over all rows of all
/// training tensors.
///
/// Directions are ordered by decreasing variance (ties broken by eigenvector
/// index) and signed so that their first nonzero coordinate is positive.
pub fn fit_transform(training: &[PrecodingTensor], latent_dim: usize) -> Result<TransformPair> {
    let first = training
        .first()
        .ok_or_else(|| Error::config("training", "training set is empty"))?;
    let width = first.cols();
    if latent_dim == 0 || latent_dim > width {
        return Err(Error::config(
            "latent_dim",
            format!("must be in 1..={width}, got {latent_dim}"),
        ));
    }
    if training.iter().any(|t| t.cols() != width) {
        return Err(Error::input("training tensors have different widths"));
    }
    let n_rows: usize = training.iter().map(|t| t.rows()).sum();
    if n_rows == 0 {
        return Err(Error::config("training", "training set has no rows"));
    }

    let mut mean = vec![0.0; width];
    for row in training.iter().flat_map(|t| t.rows_iter()) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_rows as f64);

    let mut cov = DMatrix::<f64>::zeros(width, width);
    let mut centered = vec![0.0; width];
    for row in training.iter().flat_map(|t| t.rows_iter()) {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for i in 0..width {
            let ci = centered[i];
            for j in i..width {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..width {
        for j in i..width {
            let v = cov[(i, j)] / n_rows as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut analysis = Vec::with_capacity(latent_dim * width);
    for &col in order.iter().take(latent_dim) {
        let mut dir: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let norm = dot(&dir, &dir).sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        if let Some(first) = dir.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                dir.iter_mut().for_each(|x| *x = -*x);
            }
        }
        analysis.extend(dir);
    }
    TransformPair::from_parts(first.num_tx(), latent_dim, analysis, mean)
}
