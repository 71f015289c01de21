//! Diagonal-covariance Gaussian mixtures trained with EM.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::kmeans::{kmeans_fit, KMeansParams};
use crate::error::{Error, Result};
use crate::store::{ArchiveMeta, ModelArchive, ModelKind, TrainingFingerprint};

/// Lower bound on every per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Array1<f64>,
    /// `k × dim`
    pub means: Array2<f64>,
    /// `k × dim`, every entry ≥ [`VARIANCE_FLOOR`]
    pub variances: Array2<f64>,
}

/// Per-component constants for evaluating log densities.
struct Prepared {
    log_weights: Vec<f64>,
    log_norm: Vec<f64>,
    inv_var: Array2<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn prepare(&self) -> Prepared {
        let log_norm = self
            .variances
            .rows()
            .into_iter()
            .map(|v| -0.5 * v.iter().map(|s| (2.0 * PI * s).ln()).sum::<f64>())
            .collect();
        Prepared {
            log_weights: self.weights.iter().map(|w| w.ln()).collect(),
            log_norm,
            inv_var: self.variances.mapv(|v| 1.0 / v),
        }
    }

    /// Fills `out[j]` with log(w_j · N(x; μ_j, σ²_j)) and returns the log-sum-exp.
    fn log_joint(&self, p: &Prepared, x: ArrayView1<f64>, out: &mut [f64]) -> f64 {
        for j in 0..self.k() {
            let mu = self.means.row(j);
            let iv = p.inv_var.row(j);
            let mut q = 0.0;
            for ((xi, m), s) in x.iter().zip(mu.iter()).zip(iv.iter()) {
                let d = xi - m;
                q += d * d * s;
            }
            out[j] = p.log_weights[j] + p.log_norm[j] - 0.5 * q;
        }
        log_sum_exp(out)
    }

    /// Posterior responsibilities and per-row log-likelihoods.
    fn e_step(&self, x: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
        let p = self.prepare();
        let k = self.k();
        let rows: Vec<(Vec<f64>, f64)> = (0..x.nrows())
            .into_par_iter()
            .map_init(
                || vec![0.0; k],
                |buf, i| {
                    let lse = self.log_joint(&p, x.row(i), buf);
                    (buf.iter().map(|v| (v - lse).exp()).collect(), lse)
                },
            )
            .collect();
        let mut gamma = Array2::zeros((x.nrows(), k));
        let mut ll = Vec::with_capacity(x.nrows());
        for (i, (g, l)) in rows.into_iter().enumerate() {
            gamma.row_mut(i).assign(&Array1::from(g));
            ll.push(l);
        }
        (gamma, ll)
    }

    pub fn mean_log_likelihood(&self, x: ArrayView2<f64>) -> Result<f64> {
        self.check_dim(x.ncols())?;
        let (_, ll) = self.e_step(x);
        Ok(ll.iter().sum::<f64>() / x.nrows() as f64)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    pub fn to_archive(&self, fingerprint: TrainingFingerprint) -> ModelArchive {
        let mut payload = Vec::with_capacity(self.k() * (1 + 2 * self.dim()));
        payload.extend(self.weights.iter());
        payload.extend(self.means.iter());
        payload.extend(self.variances.iter());
        ModelArchive {
            kind: ModelKind::Gmm,
            meta: ArchiveMeta {
                descriptor_dim: self.dim(),
                size: self.k(),
                fingerprint,
                whiten: false,
            },
            payload,
        }
    }

    pub fn from_archive(a: &ModelArchive) -> Result<Self> {
        a.expect_kind(ModelKind::Gmm)?;
        let (k, d) = (a.meta.size, a.meta.descriptor_dim);
        let p = &a.payload;
        let shape = |s: &[f64]| {
            Array2::from_shape_vec((k, d), s.to_vec()).map_err(|e| Error::Format(e.to_string()))
        };
        Ok(GmmModel {
            weights: Array1::from(p[..k].to_vec()),
            means: shape(&p[k..k + k * d])?,
            variances: shape(&p[k + k * d..])?,
        })
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy)]
pub struct GmmParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl GmmParams {
    pub fn new(k: usize, seed: u64) -> Self {
        GmmParams {
            k,
            seed,
            max_iters: 100,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood of the training data under each successive model;
    /// the last entry belongs to the returned model.
    pub log_likelihood_history: Vec<f64>,
}

impl GmmFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_history.last().expect("at least one E-step")
    }

    pub fn iterations(&self) -> usize {
        self.log_likelihood_history.len()
    }
}

fn init_from_kmeans(x: ArrayView2<f64>, params: &GmmParams) -> Result<GmmModel> {
    let (n, d) = x.dim();
    let k = params.k;
    let km = kmeans_fit(
        x,
        &KMeansParams {
            k,
            seed: params.seed,
            max_iters: params.max_iters,
            tol: 1e-6,
        },
    )?;
    let means = km.codebook.centroids;
    let mut counts = vec![0usize; k];
    let mut sq = Array2::<f64>::zeros((k, d));
    for (i, &j) in km.assignments.iter().enumerate() {
        counts[j] += 1;
        let mut acc = sq.row_mut(j);
        for ((a, xi), m) in acc.iter_mut().zip(x.row(i)).zip(means.row(j)) {
            *a += (xi - m) * (xi - m);
        }
    }
    let global_var = x.var_axis(Axis(0), 0.0);
    let mut variances = Array2::zeros((k, d));
    let mut weights = Array1::zeros(k);
    for j in 0..k {
        if counts[j] == 0 {
            // possible only if k-means stopped right after re-seeding
            weights[j] = 1.0 / n as f64;
            variances.row_mut(j).assign(&global_var.mapv(|v| v.max(VARIANCE_FLOOR)));
        } else {
            weights[j] = counts[j] as f64 / n as f64;
            let c = counts[j] as f64;
            variances
                .row_mut(j)
                .assign(&sq.row(j).mapv(|v| (v / c).max(VARIANCE_FLOOR)));
        }
    }
    let total = weights.sum();
    weights.mapv_inplace(|w| w / total);
    Ok(GmmModel {
        weights,
        means,
        variances,
    })
}

fn m_step(x: ArrayView2<f64>, gamma: &Array2<f64>, prev: &GmmModel) -> GmmModel {
    let (n, d) = x.dim();
    let k = prev.k();
    let mut next = prev.clone();
    for j in 0..k {
        let g = gamma.column(j);
        let nj: f64 = g.sum();
        next.weights[j] = nj / n as f64;
        if nj <= f64::MIN_POSITIVE {
            continue;
        }
        let mut mean = Array1::<f64>::zeros(d);
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 {
                mean.scaled_add(gi, &x.row(i));
            }
        }
        mean /= nj;
        let mut var = Array1::<f64>::zeros(d);
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 {
                for ((v, xi), m) in var.iter_mut().zip(x.row(i)).zip(mean.iter()) {
                    *v += gi * (xi - m) * (xi - m);
                }
            }
        }
        var.mapv_inplace(|v| (v / nj).max(VARIANCE_FLOOR));
        next.means.row_mut(j).assign(&mean);
        next.variances.row_mut(j).assign(&var);
    }
    next
}

/// Fits a k-component diagonal GMM to the rows of `x`, initialized from k-means.
pub fn gmm_fit(x: ArrayView2<f64>, params: &GmmParams) -> Result<GmmFit> {
    let n = x.nrows();
    let k = params.k;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < 2 * k {
        return Err(Error::InsufficientData(format!(
            "GMM with k={k} needs at least {} points, got {n}",
            2 * k
        )));
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let first = x.row(0);
    if x.rows().into_iter().all(|r| r == first) {
        return Err(Error::ZeroVariance);
    }

    let mut model = init_from_kmeans(x, params)?;
    let mut history: Vec<f64> = Vec::new();
    let max_iters = params.max_iters.max(1);
    loop {
        let (gamma, ll) = model.e_step(x);
        let mean_ll = ll.iter().sum::<f64>() / n as f64;
        let converged = history.last().is_some_and(|&prev| mean_ll - prev < params.tol);
        history.push(mean_ll);
        if converged || history.len() >= max_iters {
            return Ok(GmmFit {
                model,
                log_likelihood_history: history,
            });
        }
        model = m_step(x, &gamma, &model);
    }
}

/// Responsibilities γ(i, j); each row sums to one.
pub fn gmm_posteriors(g: &GmmModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    g.check_dim(x.ncols())?;
    Ok(g.e_step(x).0)
}
