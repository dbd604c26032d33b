//! Probing through a decoder `phi: Z -> X`: the energy `H = G o phi` lives on the latent space.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, ProbeError, Result};
use crate::probing::{pushforward, ProbeFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum LatentLayer {
    /// `z -> M z + c`, with `M` stored row by row.
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    Tanh,
}

/// A smooth decoder built from affine layers and elementwise `tanh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMap {
    input_dim: usize,
    layers: Vec<LatentLayer>,
}

impl LatentMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            layers: Vec::new(),
        }
    }

    pub fn affine(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let input_dim = matrix.first().map_or(0, Vec::len);
        Self::identity(input_dim).then_affine(matrix, offset)
    }

    pub fn then_affine(mut self, matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        check_dim(matrix.len(), offset.len())?;
        if matrix.is_empty() {
            return Err(ProbeError::Spec("affine layer needs at least one output".into()));
        }
        let d = self.output_dim();
        for row in &matrix {
            check_dim(d, row.len())?;
        }
        self.layers.push(LatentLayer::Affine { matrix, offset });
        Ok(self)
    }

    pub fn then_tanh(mut self) -> Self {
        self.layers.push(LatentLayer::Tanh);
        self
    }

    pub fn layers(&self) -> &[LatentLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().fold(self.input_dim, |d, l| match l {
            LatentLayer::Affine { offset, .. } => offset.len(),
            LatentLayer::Tanh => d,
        })
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.layers.iter().fold(z.to_vec(), |v, l| forward(l, &v))
    }

    /// Jacobian of `phi` at `z`, one row per output coordinate.
    pub fn jacobian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let k = z.len();
        let mut v = z.to_vec();
        let mut jac: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for layer in &self.layers {
            jac = match layer {
                LatentLayer::Affine { matrix, .. } => matrix
                    .iter()
                    .map(|row| {
                        (0..k)
                            .map(|c| row.iter().zip(&jac).map(|(m, jr)| m * jr[c]).sum())
                            .collect()
                    })
                    .collect(),
                LatentLayer::Tanh => jac
                    .into_iter()
                    .zip(&v)
                    .map(|(row, vi)| {
                        let s = 1.0 - vi.tanh().powi(2);
                        row.into_iter().map(|r| r * s).collect()
                    })
                    .collect(),
            };
            v = forward(layer, &v);
        }
        jac
    }

    /// `J(z)^T g`, the chain rule for a gradient `g` taken at `phi(z)`.
    pub fn pullback(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut v = z.to_vec();
        for layer in &self.layers {
            acts.push(v.clone());
            v = forward(layer, &v);
        }
        let mut g = g.to_vec();
        for (layer, input) in self.layers.iter().zip(&acts).rev() {
            g = match layer {
                LatentLayer::Affine { matrix, .. } => {
                    let mut out = vec![0.0; input.len()];
                    for (row, gi) in matrix.iter().zip(&g) {
                        crate::math::axpy(&mut out, *gi, row);
                    }
                    out
                }
                LatentLayer::Tanh => g
                    .iter()
                    .zip(input)
                    .map(|(gi, xi)| gi * (1.0 - xi.tanh().powi(2)))
                    .collect(),
            };
        }
        g
    }
}

fn forward(layer: &LatentLayer, v: &[f64]) -> Vec<f64> {
    match layer {
        LatentLayer::Affine { matrix, offset } => matrix
            .iter()
            .zip(offset)
            .map(|(row, c)| crate::math::dot(row, v) + c)
            .collect(),
        LatentLayer::Tanh => v.iter().map(|x| x.tanh()).collect(),
    }
}

/// `H(z) = G(phi(z))`, with gradient `J^T grad G`.
pub fn pushforward_probe(g: &ProbeFunction, phi: &LatentMap) -> Result<ProbeFunction> {
    check_dim(g.dim(), phi.output_dim())?;
    Ok(pushforward(Arc::new(g.clone()), phi.clone()))
}
