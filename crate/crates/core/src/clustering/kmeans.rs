//! Lloyd's k-means with seeded k-means++ initialization.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{ArchiveMeta, ModelArchive, ModelKind, TrainingFingerprint};

/// k cluster centroids (visual words), one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Array2<f64>,
}

impl Codebook {
    pub fn new(centroids: Array2<f64>) -> Result<Self> {
        if centroids.nrows() == 0 || centroids.ncols() == 0 {
            return Err(Error::InvalidArgument("empty codebook".into()));
        }
        if let Some(index) = centroids.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Codebook { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Index and squared distance of the nearest centroid; ties go to the lowest index.
    #[inline]
    pub fn nearest(&self, x: ArrayView1<f64>) -> (usize, f64) {
        nearest(self.centroids.view(), x)
    }

    pub fn to_archive(&self, fingerprint: TrainingFingerprint) -> ModelArchive {
        ModelArchive {
            kind: ModelKind::Codebook,
            meta: ArchiveMeta {
                descriptor_dim: self.dim(),
                size: self.k(),
                fingerprint,
                whiten: false,
            },
            payload: self.centroids.iter().copied().collect(),
        }
    }

    pub fn from_archive(a: &ModelArchive) -> Result<Self> {
        a.expect_kind(ModelKind::Codebook)?;
        let centroids = Array2::from_shape_vec((a.meta.size, a.meta.descriptor_dim), a.payload.clone())
            .map_err(|e| Error::Format(e.to_string()))?;
        Codebook::new(centroids)
    }
}

#[inline]
pub(crate) fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn nearest(centroids: ArrayView2<f64>, x: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(centroids: ArrayView2<f64>, x: ArrayView2<f64>) -> Vec<(usize, f64)> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| nearest(centroids, x.row(i)))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Assignments of the training points under the returned codebook.
    pub assignments: Vec<usize>,
    /// Total within-cluster squared distance after each assignment step.
    pub objective_history: Vec<f64>,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one iteration")
    }

    pub fn iterations(&self) -> usize {
        self.objective_history.len()
    }
}

fn validate(x: ArrayView2<f64>) -> Result<()> {
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

fn kmeans_plus_plus(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(x.row(i), x.row(first))).collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "k-means needs {k} distinct points, found only {c}"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("total > 0 implies a positive entry");
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(i), x.row(pick)));
        }
    }
    Ok(centroids)
}

/// Trains a codebook on the rows of `x`.
///
/// Runs are bit-reproducible for a fixed `(x, k, seed)`: assignment is the
/// only parallel step and centroid sums are accumulated in row order.
pub fn kmeans_fit(x: ArrayView2<f64>, params: &KMeansParams) -> Result<KMeansFit> {
    let (n, d) = x.dim();
    let k = params.k;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("k-means needs at least k={k} points, got {n}")));
    }
    validate(x)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng)?;
    let mut history: Vec<f64> = Vec::new();
    let max_iters = params.max_iters.max(1);

    loop {
        let assigned = assign_all(centroids.view(), x);
        let objective: f64 = assigned.iter().map(|a| a.1).sum();
        let converged = match history.last() {
            Some(&prev) => prev <= 0.0 || (prev - objective) / prev < params.tol,
            None => objective == 0.0,
        };
        history.push(objective);
        if converged || history.len() >= max_iters {
            return Ok(KMeansFit {
                codebook: Codebook { centroids },
                assignments: assigned.into_iter().map(|a| a.0).collect(),
                objective_history: history,
            });
        }

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &(j, _)) in assigned.iter().enumerate() {
            let mut s = sums.row_mut(j);
            s += &x.row(i);
            counts[j] += 1;
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mut c = centroids.row_mut(j);
                c.assign(&sums.row(j));
                c.mapv_inplace(|v| v / count as f64);
            }
        }
        if !empty.is_empty() {
            // farthest points from their assigned centroids, ties to lowest index
            let mut by_dist: Vec<usize> = (0..n).collect();
            by_dist.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
            for (&j, &i) in empty.iter().zip(&by_dist) {
                log::debug!("k-means: re-seeding empty cluster {j} with point {i}");
                centroids.row_mut(j).assign(&x.row(i));
            }
        }
    }
}

/// Nearest-centroid index for every row of `x`.
pub fn kmeans_assign(cb: &Codebook, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    if x.ncols() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            got: x.ncols(),
        });
    }
    Ok(assign_all(cb.centroids.view(), x).into_iter().map(|a| a.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-5.0..5.0))
    }

    #[test]
    fn separated_duplicates() {
        let mut rows = vec![[1.0, 2.0]; 10];
        rows.extend(vec![[-3.0, 7.5]; 10]);
        let x = Array2::from(rows);
        let fit = kmeans_fit(x.view(), &KMeansParams::new(2, 11)).unwrap();
        let mut cs: Vec<Vec<f64>> = fit.codebook.centroids.rows().into_iter().map(|r| r.to_vec()).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![-3.0, 7.5], vec![1.0, 2.0]]);
        assert_eq!(fit.objective(), 0.0);
    }

    #[test]
    fn each_point_its_own_centroid() {
        let x = random(6, 3, 1);
        let fit = kmeans_fit(x.view(), &KMeansParams::new(6, 3)).unwrap();
        assert_eq!(fit.objective(), 0.0);
        let mut a = fit.assignments.clone();
        a.sort();
        assert_eq!(a, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn errors() {
        let x = random(3, 2, 0);
        assert!(matches!(kmeans_fit(x.view(), &KMeansParams::new(0, 0)), Err(Error::InvalidArgument(_))));
        assert!(matches!(kmeans_fit(x.view(), &KMeansParams::new(4, 0)), Err(Error::InsufficientData(_))));
        let same = Array2::from_elem((5, 2), 1.0);
        assert!(matches!(kmeans_fit(same.view(), &KMeansParams::new(2, 0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn assign_ties_and_identity() {
        let cb = Codebook::new(array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [-1.0, 0.0]]).unwrap();
        let got = kmeans_assign(&cb, cb.centroids.view()).unwrap();
        assert_eq!(got, vec![0, 1, 2, 3]);
        // equidistant from centroids 1 and 3
        let tie = Codebook::new(array![[9.0, 9.0], [1.0, 0.0], [8.0, 8.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(kmeans_assign(&tie, array![[0.0, 0.0]].view()).unwrap(), vec![1]);
        assert!(matches!(
            kmeans_assign(&cb, array![[0.0, 0.0, 0.0]].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn objective_monotone_and_deterministic() {
        let x = random(300, 4, 9);
        let a = kmeans_fit(x.view(), &KMeansParams::new(7, 5)).unwrap();
        let b = kmeans_fit(x.view(), &KMeansParams::new(7, 5)).unwrap();
        assert_eq!(a.codebook, b.codebook);
        assert!(a.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn same_result_on_one_thread() {
        let x = random(500, 5, 4);
        let p = KMeansParams::new(6, 2);
        let many = kmeans_fit(x.view(), &p).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let one = pool.install(|| kmeans_fit(x.view(), &p).unwrap());
        assert_eq!(many.codebook, one.codebook);
    }

    #[test]
    fn archive_round_trip() {
        let cb = Codebook::new(random(4, 3, 8)).unwrap();
        let arch = cb.to_archive(TrainingFingerprint::default());
        let back = ModelArchive::from_bytes(&arch.to_bytes().unwrap()).unwrap();
        assert_eq!(Codebook::from_archive(&back).unwrap(), cb);
        assert!(crate::clustering::GmmModel::from_archive(&back).is_err());
    }
}
