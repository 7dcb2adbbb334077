//! Latent-space interpretation: traversal along the generator direction,
//! 2-D principal-component projection, and a disentanglement score.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::tensor::{dot, pearson, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalResult {
    pub grid: Vec<f64>,
    /// One de-standardized feature row per grid value.
    pub decoded: Tensor,
    pub feature_names: Vec<String>,
}

impl TraversalResult {
    pub fn write_csv(&self, target_name: &str, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{target_name},{}", self.feature_names.join(","))?;
        for (i, c) in self.grid.iter().enumerate() {
            let row: Vec<String> = self.decoded.row(i).iter().map(f64::to_string).collect();
            writeln!(out, "{c},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Decodes `z = u·c̃` for each raw target value in `grid`.
pub fn traverse(ck: &Checkpoint, grid: &[f64]) -> Result<TraversalResult> {
    if grid.is_empty() {
        return Err(Error::Config("traversal grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("traversal grid must be finite and strictly increasing".into()));
    }
    let s = &ck.standardization;
    let m = ck.model.latent_dim();
    let mut z = Vec::with_capacity(grid.len() * m);
    for &c in grid {
        z.extend(ck.model.generator.mean(s.standardize_target(c)));
    }
    let decoded = ck.model.decode(&Tensor::matrix(grid.len(), m, z)?)?;
    Ok(TraversalResult {
        grid: grid.to_vec(),
        decoded: s.destandardize_features(&decoded)?,
        feature_names: ck.feature_names.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// `n × 2` scores on the first two principal components.
    pub coords: Tensor,
    pub targets: Vec<f64>,
    /// `2 × M` unit loadings.
    pub components: Tensor,
    pub explained_variance_ratio: [f64; 2],
}

impl ProjectionResult {
    pub fn write_csv(&self, target_name: &str, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "pc1,pc2,{target_name}")?;
        for (i, t) in self.targets.iter().enumerate() {
            writeln!(out, "{},{},{}", self.coords.get(i, 0), self.coords.get(i, 1), t)?;
        }
        Ok(())
    }
}

/// Sample covariance (1/n) of the rows of `x`, plus the column means.
pub fn covariance(x: &Tensor) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..m).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..n {
        let r = x.row(i);
        for a in 0..m {
            let da = r[a] - mean[a];
            for b in a..m {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            cov[(a, b)] /= n as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (cov, mean)
}

/// Projects mean-centered latent means onto their top two principal axes.
///
/// Each axis is signed so that its largest-magnitude loading is positive.
pub fn project_2d(latent_means: &Tensor, targets: &[f64]) -> Result<ProjectionResult> {
    let (n, m) = (latent_means.rows(), latent_means.cols());
    if n < 3 || m < 2 {
        return Err(Error::Data(format!("projection needs n >= 3 and M >= 2, got n={n} M={m}")));
    }
    if targets.len() != n {
        return Err(Error::dim("projection targets", n, targets.len()));
    }
    let (cov, mean) = covariance(latent_means);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Data("latent means have zero variance (rank 0)".into()));
    }

    let mut components = Tensor::zeros(&[2, m]);
    let mut ratio = [0.0; 2];
    for (slot, &idx) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.row_mut(slot).copy_from_slice(&v);
        ratio[slot] = (eig.eigenvalues[idx].max(0.0) / total).clamp(0.0, 1.0);
    }

    let mut coords = Tensor::zeros(&[n, 2]);
    for i in 0..n {
        let centered: Vec<f64> = latent_means.row(i).iter().zip(&mean).map(|(a, b)| a - b).collect();
        for c in 0..2 {
            coords.set(i, c, dot(&centered, components.row(c)));
        }
    }
    Ok(ProjectionResult {
        coords,
        targets: targets.to_vec(),
        components,
        explained_variance_ratio: ratio,
    })
}

/// Pearson correlation between latent projections `z·u` and the targets.
pub fn disentanglement_score(latent_means: &Tensor, u: &[f64], targets: &[f64]) -> Result<f64> {
    if latent_means.cols() != u.len() {
        return Err(Error::dim("disentanglement direction", latent_means.cols(), u.len()));
    }
    if targets.len() != latent_means.rows() {
        return Err(Error::dim("disentanglement targets", latent_means.rows(), targets.len()));
    }
    let proj: Vec<f64> = (0..latent_means.rows()).map(|i| dot(latent_means.row(i), u)).collect();
    pearson(&proj, targets).ok_or_else(|| Error::Data("disentanglement score needs non-constant inputs".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, standard_normals, Stream};

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(18.0, 86.0, 3), vec![18.0, 52.0, 86.0]);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn two_dimensional_projection_preserves_distances() {
        let mut rng = derive(1, Stream::Init, &[]);
        let x = Tensor::matrix(25, 2, standard_normals(&mut rng, 50)).unwrap();
        let p = project_2d(&x, &[0.0; 25]).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                let d0 = ((x.get(i, 0) - x.get(j, 0)).powi(2) + (x.get(i, 1) - x.get(j, 1)).powi(2)).sqrt();
                let d1 = ((p.coords.get(i, 0) - p.coords.get(j, 0)).powi(2)
                    + (p.coords.get(i, 1) - p.coords.get(j, 1)).powi(2))
                .sqrt();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
        let [a, b] = p.explained_variance_ratio;
        assert!(a >= b && (a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn points_on_a_line_have_no_second_component() {
        let x = Tensor::from_rows(&(0..10).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect::<Vec<_>>())
            .unwrap();
        let p = project_2d(&x, &[0.0; 10]).unwrap();
        assert!(p.explained_variance_ratio[1].abs() < 1e-9);
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        // sign convention: dominant loading positive
        let c = p.components.row(0);
        let lead = c.iter().copied().fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
        assert!(lead > 0.0);
    }

    #[test]
    fn constant_latents_are_rejected() {
        let x = Tensor::matrix(4, 2, vec![1.0; 8]).unwrap();
        assert!(project_2d(&x, &[0.0; 4]).is_err());
    }

    #[test]
    fn disentanglement_examples() {
        let u = [0.6, 0.8];
        let c: Vec<f64> = (0..20).map(|i| i as f64 / 3.0 - 2.0).collect();
        let z = Tensor::from_rows(&c.iter().map(|&v| vec![u[0] * v, u[1] * v]).collect::<Vec<_>>()).unwrap();
        assert!((disentanglement_score(&z, &u, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!((disentanglement_score(&z, &[-0.6, -0.8], &c).unwrap() + 1.0).abs() < 1e-12);

        let mut rng = derive(7, Stream::Init, &[]);
        let noise = Tensor::matrix(1000, 2, standard_normals(&mut rng, 2000)).unwrap();
        let c = standard_normals(&mut rng, 1000);
        assert!(disentanglement_score(&noise, &u, &c).unwrap().abs() < 0.1);
        assert!(disentanglement_score(&noise, &u, &[1.0; 1000]).is_err());
    }
}
