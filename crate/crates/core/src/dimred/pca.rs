use nalgebra::{DMatrix, SVD};

use super::{DimredError, Result};
use crate::features::FeatureMatrix;

/// Principal axes fitted by SVD of the centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `p × d`, orthonormal rows, strongest direction first.
    pub components: DMatrix<f64>,
    /// `σᵢ² / (s − 1)`, nonincreasing.
    pub explained_variance: Vec<f64>,
    pub n_samples: usize,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    fn check_width(&self, found: usize) -> Result<()> {
        if found != self.input_width() {
            return Err(DimredError::DimMismatch {
                expected: self.input_width(),
                found,
            });
        }
        Ok(())
    }

    fn centered(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        c
    }

    /// `(x − mean) · componentsᵀ`.
    pub fn transform_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(x.ncols())?;
        Ok(self.centered(x) * self.components.transpose())
    }

    /// Maps projected coordinates back to the input space.
    pub fn inverse_transform(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.n_components() {
            return Err(DimredError::DimMismatch {
                expected: self.n_components(),
                found: y.ncols(),
            });
        }
        let mut x = y * &self.components;
        for mut row in x.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(x)
    }

    /// Mean squared reconstruction error over all entries of `x`.
    pub fn reconstruction_mse(&self, x: &DMatrix<f64>) -> Result<f64> {
        let back = self.inverse_transform(&self.transform_matrix(x)?)?;
        Ok((back - x).norm_squared() / x.len() as f64)
    }
}

pub fn pca_fit(x: &FeatureMatrix, p: usize) -> Result<PcaModel> {
    pca_fit_matrix(&x.to_dmatrix(), p)
}

/// Top-`p` principal components of the rows of `x`. Each component's
/// largest-magnitude entry is made positive.
pub fn pca_fit_matrix(x: &DMatrix<f64>, p: usize) -> Result<PcaModel> {
    let (s, d) = x.shape();
    let max_p = d.min(s.saturating_sub(1));
    if p == 0 || p > max_p {
        return Err(DimredError::PTooLarge { p, max: max_p });
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / s as f64).collect();
    let mut centered = x.clone();
    for (j, m) in mean.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let svd = SVD::new(centered, false, true);
    let v_t = svd.v_t.ok_or_else(|| DimredError::Numerical("SVD did not return V".into()))?;
    let sigma = svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut components = DMatrix::zeros(p, d);
    let mut explained_variance = Vec::with_capacity(p);
    for (r, &idx) in order.iter().take(p).enumerate() {
        let mut row = v_t.row(idx).clone_owned();
        let pivot = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, v)| *v)
            .unwrap_or(0.0);
        if pivot < 0.0 {
            row.neg_mut();
        }
        components.row_mut(r).copy_from(&row);
        explained_variance.push(sigma[idx] * sigma[idx] / (s - 1) as f64);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        n_samples: s,
    })
}

/// Projects `x` onto the fitted components; labels are carried through.
pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let y = model.transform_matrix(&x.to_dmatrix())?;
    Ok(x.with_dmatrix(&y, "pc")?)
}
