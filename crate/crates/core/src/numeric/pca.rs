//! Principal component projection for descriptor compression.
//!
//! The basis comes from the thin SVD of the mean-centered data matrix, so
//! wide inputs (more dimensions than samples, common for IFK/VLAD) never
//! materialize a d×d covariance.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::store::{ArchiveMeta, ModelArchive, ModelKind, TrainingFingerprint};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `target_dim × input_dim`, rows orthonormal, ordered by descending eigenvalue.
    pub basis: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    /// Divide projected coordinates by `sqrt(eigenvalue)`. Off for all standard runs.
    pub whiten: bool,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn target_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Projects `v` onto the principal basis.
    pub fn apply(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: v.len(),
            });
        }
        let centered = &v - &self.mean;
        let mut out = self.basis.dot(&centered);
        if self.whiten {
            for (x, &ev) in out.iter_mut().zip(&self.eigenvalues) {
                if ev > 0.0 {
                    *x /= ev.sqrt();
                }
            }
        }
        Ok(out)
    }

    pub fn apply_slice(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(ArrayView1::from(v))?.to_vec())
    }

    /// Row-wise [`apply`](Self::apply).
    pub fn apply_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.target_dim()));
        for (row, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            dst.assign(&self.apply(row)?);
        }
        Ok(out)
    }

    /// Maps projected coordinates back into the input space (`mean + basisᵀ·y`).
    /// Ignores whitening.
    pub fn reconstruct(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        if y.len() != self.target_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target_dim(),
                got: y.len(),
            });
        }
        Ok(&self.mean + &self.basis.t().dot(&y))
    }

    pub fn to_archive(&self, fingerprint: TrainingFingerprint) -> ModelArchive {
        let mut payload = Vec::with_capacity(self.mean.len() * (1 + self.target_dim()) + self.target_dim());
        payload.extend(self.mean.iter());
        payload.extend(self.basis.iter());
        payload.extend(self.eigenvalues.iter());
        ModelArchive {
            kind: ModelKind::Pca,
            meta: ArchiveMeta {
                descriptor_dim: self.input_dim(),
                size: self.target_dim(),
                fingerprint,
                whiten: self.whiten,
            },
            payload,
        }
    }

    pub fn from_archive(a: &ModelArchive) -> Result<Self> {
        a.expect_kind(ModelKind::Pca)?;
        let (d, m) = (a.meta.descriptor_dim, a.meta.size);
        let p = &a.payload;
        Ok(PcaModel {
            mean: Array1::from(p[..d].to_vec()),
            basis: Array2::from_shape_vec((m, d), p[d..d + m * d].to_vec())
                .map_err(|e| Error::Format(e.to_string()))?,
            eigenvalues: Array1::from(p[d + m * d..].to_vec()),
            whiten: a.meta.whiten,
        })
    }
}

/// Fits a PCA model on the rows of `x` keeping `target_dim` components.
pub fn fit_pca(x: ArrayView2<f64>, target_dim: usize, whiten: bool) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 samples, got {n}")));
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let max_dim = (n - 1).min(d);
    if target_dim == 0 || target_dim > max_dim {
        return Err(Error::InvalidArgument(format!(
            "PCA target dimension {target_dim} must be in 1..={max_dim} for {n} samples of dimension {d}"
        )));
    }

    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = DMatrix::from_fn(n, d, |i, j| x[[i, j]] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Internal("SVD did not return right singular vectors".into()))?;
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let s_max = order.first().map(|&i| s[i]).unwrap_or(0.0);
    let tol = s_max * (n.max(d) as f64) * f64::EPSILON;
    let rank = if s_max > 0.0 {
        s.iter().filter(|&&v| v > tol).count()
    } else {
        0
    };
    if rank < target_dim {
        return Err(Error::RankDeficient {
            requested: target_dim,
            rank,
        });
    }

    let mut basis = Array2::zeros((target_dim, d));
    let mut eigenvalues = Array1::zeros(target_dim);
    for (row, &src) in order.iter().take(target_dim).enumerate() {
        let mut dir: Vec<f64> = (0..d).map(|j| v_t[(src, j)]).collect();
        // sign convention: largest-magnitude component positive (first one on ties)
        let pivot = dir
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > dir[best].abs() { j } else { best });
        if dir[pivot] < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
        basis.row_mut(row).assign(&ArrayView1::from(&dir));
        eigenvalues[row] = (s[src] * s[src] / (n as f64 - 1.0)).max(0.0);
    }

    Ok(PcaModel {
        mean,
        basis,
        eigenvalues,
        whiten,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn line_y_equals_2x() {
        // covariance of points on y = 2x is c·[[1,2],[2,4]]: eigenvalues 5c and 0,
        // leading eigenvector [1,2]/√5
        let x = array![[-2.0, -4.0], [-1.0, -2.0], [0.0, 0.0], [1.0, 2.0], [2.0, 4.0]];
        let m = fit_pca(x.view(), 1, false).unwrap();
        let s5 = 5f64.sqrt();
        assert!((m.basis[[0, 0]] - 1.0 / s5).abs() < 1e-12);
        assert!((m.basis[[0, 1]] - 2.0 / s5).abs() < 1e-12);
        // variance along the line: Σ(x²+y²)/(n-1) = 5·10/4
        assert!((m.eigenvalues[0] - 12.5).abs() < 1e-9);

        let y = m.apply(array![1.0, 2.0].view()).unwrap();
        assert!((y[0] - s5).abs() < 1e-12);

        // second component exists but carries no variance
        assert!(matches!(fit_pca(x.view(), 2, false), Err(Error::InvalidArgument(_)) | Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn identical_rows_are_rank_deficient() {
        let x = Array2::from_elem((5, 3), 0.7);
        assert!(matches!(
            fit_pca(x.view(), 1, false),
            Err(Error::RankDeficient { requested: 1, rank: 0 })
        ));
    }

    #[test]
    fn target_dim_too_large() {
        let x = random(4, 10, 1);
        assert!(matches!(fit_pca(x.view(), 4, false), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn full_rank_inverse_reconstructs() {
        let x = random(20, 5, 2);
        let m = fit_pca(x.view(), 5, false).unwrap();
        for row in x.rows() {
            let back = m.reconstruct(m.apply(row).unwrap().view()).unwrap();
            for (a, b) in back.iter().zip(row) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn basis_orthonormal_and_sorted() {
        let x = random(30, 12, 3);
        let m = fit_pca(x.view(), 8, false).unwrap();
        let g = m.basis.dot(&m.basis.t());
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-6);
            }
        }
        assert!(m.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));
        for row in m.basis.rows() {
            let pivot = row.iter().fold(0.0f64, |b, v| if v.abs() > b.abs() { *v } else { b });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn wide_data() {
        let x = random(6, 40, 4);
        let m = fit_pca(x.view(), 5, false).unwrap();
        assert_eq!(m.basis.dim(), (5, 40));
    }

    #[test]
    fn mean_maps_to_zero_and_batch_matches_rows() {
        let x = random(15, 6, 5);
        let m = fit_pca(x.view(), 3, false).unwrap();
        let z = m.apply(m.mean.view()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let batch = m.apply_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(batch.row(i), m.apply(row).unwrap());
        }
    }

    #[test]
    fn reconstruction_error_non_increasing_in_dim() {
        let x = random(25, 8, 6);
        let v = x.row(3);
        let mut prev = f64::INFINITY;
        for dim in 1..=8 {
            let m = fit_pca(x.view(), dim, false).unwrap();
            let back = m.reconstruct(m.apply(v).unwrap().view()).unwrap();
            let err = (&back - &v).mapv(|e| e * e).sum().sqrt();
            assert!(err <= prev + 1e-9);
            prev = err;
        }
        let norm = v.mapv(|e| e * e).sum().sqrt();
        assert!(prev <= 1e-6 * norm);
    }

    #[test]
    fn deterministic_and_archive_round_trip() {
        let x = random(20, 7, 7);
        let a = fit_pca(x.view(), 4, false).unwrap();
        let b = fit_pca(x.view(), 4, false).unwrap();
        assert_eq!(a, b);
        let arch = a.to_archive(TrainingFingerprint::default());
        let back = PcaModel::from_archive(&ModelArchive::from_bytes(&arch.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn whitening_gives_unit_variance() {
        let x = random(50, 4, 8);
        let m = fit_pca(x.view(), 2, true).unwrap();
        let y = m.apply_batch(x.view()).unwrap();
        let var = y.var_axis(Axis(0), 1.0);
        assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn dimension_mismatch() {
        let x = random(10, 3, 9);
        let m = fit_pca(x.view(), 2, false).unwrap();
        assert!(matches!(m.apply(array![1.0, 2.0].view()), Err(Error::DimensionMismatch { .. })));
    }
}
