//! Per-channel pooling of feature maps into L-dimensional vectors.

use super::local::FeatureMap;

pub fn pool_max(fm: &FeatureMap) -> Vec<f64> {
    fm.maps
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn pool_mean(fm: &FeatureMap) -> Vec<f64> {
    let n = fm.spatial_len() as f64;
    fm.maps
        .rows()
        .into_iter()
        .map(|r| r.iter().sum::<f64>() / n)
        .collect()
}

/// `[max ‖ mean]`, length 2L.
pub fn pool_hybrid(fm: &FeatureMap) -> Vec<f64> {
    let mut out = pool_max(fm);
    out.extend(pool_mean(fm));
    out
}

/// Center-prior Gaussian weights over an `height × width` grid, row-major.
///
/// σ is a third of the distance from the grid center to the nearest border.
/// Grids with a side of at most 2 cells get uniform weights.
pub fn spoc_weights(height: usize, width: usize) -> Vec<f64> {
    if height <= 2 || width <= 2 {
        return vec![1.0; height * width];
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let sigma = cx.min(cy) / 3.0;
    let denom = 2.0 * sigma * sigma;
    let mut w = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            w.push((-(dx * dx + dy * dy) / denom).exp());
        }
    }
    w
}

/// Gaussian-weighted sum pooling.
pub fn pool_spoc(fm: &FeatureMap) -> Vec<f64> {
    let w = spoc_weights(fm.height, fm.width);
    fm.maps
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&w).map(|(v, a)| v * a).sum())
        .collect()
}

/// Cross-dimensional weighted sum pooling.
///
/// Spatial weights are the square root of the L2-normalized channel-summed
/// activation map; channel weights are `log(Σ Q / Q_l)` where `Q_l` is the
/// fraction of positive cells in channel `l` (zero for an all-inactive channel).
/// Negative activations are clamped to zero.
pub fn pool_crow(fm: &FeatureMap) -> Vec<f64> {
    let l = fm.channels();
    let n = fm.spatial_len();
    let clamped = fm.maps.mapv(|v| v.max(0.0));
    if fm.maps.iter().any(|&v| v < 0.0) {
        log::warn!("CroW pooling: negative activations clamped to zero");
    }

    let mut spatial = vec![0.0; n];
    for row in clamped.rows() {
        for (s, v) in spatial.iter_mut().zip(row) {
            *s += v;
        }
    }
    let norm = spatial.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; l];
    }
    let alpha: Vec<f64> = spatial.iter().map(|s| (s / norm).sqrt()).collect();

    let density: Vec<f64> = clamped
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&v| v > 0.0).count() as f64 / n as f64)
        .collect();
    let total: f64 = density.iter().sum();

    clamped
        .rows()
        .into_iter()
        .zip(&density)
        .map(|(r, &q)| {
            if q > 0.0 {
                let beta = (total / q).ln();
                beta * r.iter().zip(&alpha).map(|(v, a)| v * a).sum::<f64>()
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::PreL2;
    use crate::store::FeatureTensor;

    fn fm(shape: (usize, usize, usize), data: Vec<f32>) -> FeatureMap {
        let t = FeatureTensor::new("i", "l", "s", shape, data).unwrap();
        FeatureMap::prepare(&t, PreL2::Off).unwrap()
    }

    #[test]
    fn max_mean_hybrid_on_grid() {
        let m = fm((1, 2, 2), vec![1.0, 2.0, 3.0, 0.0]);
        assert_eq!(pool_max(&m), vec![3.0]);
        assert_eq!(pool_mean(&m), vec![1.5]);
        assert_eq!(pool_hybrid(&m), vec![3.0, 1.5]);

        // L=2 toy: channel 0 = [[1,2],[3,0]], channel 1 = [[-1,5],[0,0]]
        let m = fm((2, 2, 2), vec![1.0, 2.0, 3.0, 0.0, -1.0, 5.0, 0.0, 0.0]);
        assert_eq!(pool_hybrid(&m), vec![3.0, 5.0, 1.5, 1.0]);
    }

    #[test]
    fn constant_tensor() {
        let m = fm((3, 4, 5), vec![2.5; 60]);
        assert_eq!(pool_max(&m), vec![2.5; 3]);
        assert_eq!(pool_mean(&m), vec![2.5; 3]);
    }

    #[test]
    fn single_cell_is_identity() {
        let v = vec![0.3f32, -1.0, 4.0];
        let m = fm((3, 1, 1), v.clone());
        let want: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        assert_eq!(pool_max(&m), want);
        assert_eq!(pool_mean(&m), want);
        assert_eq!(pool_spoc(&m), want);
        let h = pool_hybrid(&m);
        assert_eq!(h[..3], h[3..]);
    }

    #[test]
    fn spoc_three_by_three() {
        let m = fm((1, 3, 3), vec![1.0; 9]);
        let want = 1.0 + 4.0 * (-4.5f64).exp() + 4.0 * (-9.0f64).exp();
        assert!((pool_spoc(&m)[0] - want).abs() < 1e-9);
        assert!((want - 1.044930).abs() < 1e-6);
    }

    #[test]
    fn spoc_weights_flip_symmetric() {
        for (h, w) in [(3, 3), (4, 7), (6, 5), (9, 9)] {
            let a = spoc_weights(h, w);
            for y in 0..h {
                for x in 0..w {
                    let v = a[y * w + x];
                    assert!((v - a[y * w + (w - 1 - x)]).abs() < 1e-15);
                    assert!((v - a[(h - 1 - y) * w + x]).abs() < 1e-15);
                }
            }
        }
        assert_eq!(spoc_weights(2, 5), vec![1.0; 10]);
    }

    #[test]
    fn crow_all_ones_two_channels() {
        let m = fm((2, 2, 2), vec![1.0; 8]);
        // S = 2 everywhere, ‖S‖ = 4, α = √(1/2) per cell, Q = 1, β = ln 2
        let sum_alpha = 4.0 * 0.5f64.sqrt();
        let want = 2f64.ln() * sum_alpha;
        let got = pool_crow(&m);
        assert!((got[0] - want).abs() < 1e-12 && (got[1] - want).abs() < 1e-12);
    }

    #[test]
    fn crow_zero_and_inactive_channels() {
        assert_eq!(pool_crow(&fm((3, 2, 2), vec![0.0; 12])), vec![0.0; 3]);
        let m = fm((2, 2, 2), vec![1.0, 0.0, 2.0, 1.0, -3.0, 0.0, -1.0, 0.0]);
        let out = pool_crow(&m);
        assert_eq!(out[1], 0.0);
        // a single active channel has β = ln(1) = 0 as well
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn mean_below_max_for_non_negative() {
        let m = fm((2, 3, 3), (0..18).map(|i| (i * 7 % 5) as f32).collect());
        for (a, b) in pool_mean(&m).iter().zip(pool_max(&m)) {
            assert!(*a <= b);
        }
    }
}
