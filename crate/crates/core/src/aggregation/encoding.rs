//! Codebook and GMM encoders over the W·H local descriptors of a feature map.

use super::local::FeatureMap;
use crate::clustering::{gmm_posteriors, Codebook, GmmModel};
use crate::error::{Error, Result};
use crate::numeric::norm::{l2_normalize_in_place, signed_sqrt_in_place};

fn check_dim(expected: usize, fm: &FeatureMap) -> Result<()> {
    if fm.channels() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: fm.channels(),
        });
    }
    Ok(())
}

/// Histogram of nearest-centroid assignments; entries sum to W·H.
pub fn encode_bow(fm: &FeatureMap, cb: &Codebook) -> Result<Vec<f64>> {
    check_dim(cb.dim(), fm)?;
    let mut hist = vec![0.0; cb.k()];
    for x in fm.descriptors().rows() {
        hist[cb.nearest(x).0] += 1.0;
    }
    Ok(hist)
}

/// Residuals to the nearest centroid, accumulated per centroid and laid out
/// block by block (`L·k` values). No intra-normalization.
pub fn encode_vlad(fm: &FeatureMap, cb: &Codebook) -> Result<Vec<f64>> {
    check_dim(cb.dim(), fm)?;
    let l = cb.dim();
    let mut out = vec![0.0; l * cb.k()];
    for x in fm.descriptors().rows() {
        let (j, _) = cb.nearest(x);
        let c = cb.centroids.row(j);
        for ((acc, xi), ci) in out[j * l..(j + 1) * l].iter_mut().zip(x).zip(c) {
            *acc += xi - ci;
        }
    }
    Ok(out)
}

/// Improved Fisher vector: mean and variance gradients (`2·L·k` values,
/// all mean blocks first), followed by signed square root and L2 normalization.
pub fn encode_ifk(fm: &FeatureMap, g: &GmmModel) -> Result<Vec<f64>> {
    check_dim(g.dim(), fm)?;
    let (l, k) = (g.dim(), g.k());
    let x = fm.descriptors();
    let n = x.nrows() as f64;
    let gamma = gmm_posteriors(g, x)?;
    let sigma = g.variances.mapv(f64::sqrt);

    let mut out = vec![0.0; 2 * l * k];
    let (mean_part, var_part) = out.split_at_mut(l * k);
    for j in 0..k {
        let w = g.weights[j];
        if w <= 0.0 {
            continue;
        }
        let mu = g.means.row(j);
        let sd = sigma.row(j);
        let gm = &mut mean_part[j * l..(j + 1) * l];
        let gs = &mut var_part[j * l..(j + 1) * l];
        for (i, xi) in x.rows().into_iter().enumerate() {
            let gij = gamma[[i, j]];
            if gij == 0.0 {
                continue;
            }
            for d in 0..l {
                let z = (xi[d] - mu[d]) / sd[d];
                gm[d] += gij * z;
                gs[d] += gij * (z * z - 1.0);
            }
        }
        let cm = 1.0 / (n * w.sqrt());
        let cs = 1.0 / (n * (2.0 * w).sqrt());
        gm.iter_mut().for_each(|v| *v *= cm);
        gs.iter_mut().for_each(|v| *v *= cs);
    }
    signed_sqrt_in_place(&mut out);
    l2_normalize_in_place(&mut out);
    Ok(out)
}
