use std::collections::{BTreeMap, HashSet};

use cnnret::aggregation::{GlobalDescriptor, Method, Provenance};
use cnnret::clustering::{kmeans_fit, KMeansParams};
use cnnret::evaluation::{average_precision, evaluate_run, nmrr};
use cnnret::numeric::DistanceMetric;
use cnnret::retrieval::{build_index, rank_all, RankedItem, RankedList};
use cnnret::store::{DatasetManifest, ManifestEntry};
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Smallest within-cluster sum of squares over every assignment of the rows to
/// at most `k` non-empty clusters.
fn optimal_partition_cost(x: ArrayView2<f64>, k: usize) -> f64 {
    let (n, d) = x.dim();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for c in 0..d {
                sums[l][c] += x[[i, c]];
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let cost: f64 = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| (0..d).map(|c| (x[[i, c]] - sums[l][c] / counts[l] as f64).powi(2)).sum::<f64>())
                .sum();
            best = best.min(cost);
        }
        // next labelling in base k
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
fn two_blobs_reach_the_partition_optimum() {
    let x = Array2::from_shape_vec(
        (8, 2),
        vec![0.0, 0.0, 0.4, 0.1, -0.2, 0.3, 0.1, -0.3, 9.0, 9.0, 9.5, 8.7, 8.8, 9.4, 9.1, 9.2],
    )
    .unwrap();
    let opt = optimal_partition_cost(x.view(), 2);
    for seed in 0..10 {
        let fit = kmeans_fit(x.view(), &KMeansParams::new(2, seed)).unwrap();
        assert!((fit.objective() - opt).abs() < 1e-9, "seed {seed}: {} vs {opt}", fit.objective());
        assert_ne!(fit.assignments[0], fit.assignments[4]);
    }
}

#[test]
fn three_groups_reach_the_partition_optimum() {
    let x = Array2::from_shape_vec(
        (9, 1),
        vec![0.0, 0.5, 1.0, 10.0, 10.2, 10.4, 30.0, 31.0, 32.0],
    )
    .unwrap();
    let opt = optimal_partition_cost(x.view(), 3);
    assert!((opt - (0.5 + 0.08 + 2.0)).abs() < 1e-12);
    let fit = kmeans_fit(x.view(), &KMeansParams::new(3, 11)).unwrap();
    assert!((fit.objective() - opt).abs() < 1e-9);
}

fn points(max_n: usize) -> impl Strategy<Value = Array2<f64>> {
    (3..=max_n, 1usize..=3).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-5.0f64..5.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kmeans_never_beats_the_partition_optimum(x in points(9), k in 1usize..=3, seed in 0u64..1000) {
        prop_assume!(x.nrows() >= k);
        let opt = optimal_partition_cost(x.view(), k);
        let fit = kmeans_fit(x.view(), &KMeansParams::new(k, seed)).unwrap();
        prop_assert!(fit.objective() >= opt - 1e-9 * (1.0 + opt));
        if k == 1 {
            prop_assert!((fit.objective() - opt).abs() <= 1e-9 * (1.0 + opt));
        }
    }
}

fn provenance() -> Provenance {
    Provenance {
        method: Method::Mean,
        layer_id: "l".into(),
        scale_tags: vec!["full".into()],
        raw_dim: 1,
        final_dim: 1,
    }
}

fn entry(id: &str, class: &str) -> ManifestEntry {
    ManifestEntry {
        image_id: id.into(),
        class_label: class.into(),
        tensors: BTreeMap::new(),
    }
}

/// Three classes of nine images on a line. Seen from `a0` at the origin, class
/// `a` occupies the odd distances 1..15 and `b` the even ones; `c` sits far out.
fn interleaved() -> (DatasetManifest, Vec<GlobalDescriptor>) {
    let mut placed: Vec<(String, &str, f64)> = vec![("a0".into(), "a", 0.0)];
    for i in 1..9 {
        placed.push((format!("a{i}"), "a", (2 * i - 1) as f64));
    }
    for i in 0..9 {
        placed.push((format!("b{i}"), "b", (2 * i + 2).min(17) as f64));
    }
    for i in 0..9 {
        placed.push((format!("c{i}"), "c", (30 + i) as f64));
    }
    let manifest = DatasetManifest::from_entries(
        "line",
        placed.iter().map(|(id, c, _)| entry(id, c)).collect(),
        None,
    )
    .unwrap();
    let descs = placed
        .into_iter()
        .map(|(id, _, x)| GlobalDescriptor {
            image_id: id,
            vector: vec![x],
            provenance: provenance(),
        })
        .collect();
    (manifest, descs)
}

#[test]
fn hand_computed_scores_for_one_query() {
    let (manifest, descs) = interleaved();
    let index = build_index(&manifest, descs, DistanceMetric::Manhattan, "fp").unwrap();
    let a0 = index.get("a0").unwrap();
    let lists = rank_all(&index, &[a0]).unwrap();
    let gt = manifest.ground_truth("a0");
    assert_eq!(gt.len(), 8);

    let ap = [1.0, 2.0 / 3.0, 3.0 / 5.0, 4.0 / 7.0, 5.0 / 9.0, 6.0 / 11.0, 7.0 / 13.0, 8.0 / 15.0]
        .iter()
        .sum::<f64>()
        / 8.0;
    assert!((average_precision(&lists[0], &gt).unwrap() - ap).abs() < 1e-12);
    // K = min(32, 16) = 16; AVR = 8; MRR = 8 - 0.5 - 4; denominator 20 - 4.5
    assert!((nmrr(&lists[0], &gt, 8).unwrap() - 7.0 / 31.0).abs() < 1e-12);
}

#[test]
fn report_means_match_per_query_scores() {
    let (manifest, descs) = interleaved();
    let index = build_index(&manifest, descs.clone(), DistanceMetric::Manhattan, "fp").unwrap();
    let queries: Vec<&GlobalDescriptor> = descs.iter().collect();
    let lists = rank_all(&index, &queries).unwrap();
    let report = evaluate_run(&index, &manifest, &lists).unwrap();
    assert_eq!(report.per_query.len(), 27);
    assert!(report.per_query.iter().all(|q| q.ng == 8));
    let mean = |f: fn(&cnnret::evaluation::QueryScore) -> f64| report.per_query.iter().map(f).sum::<f64>() / 27.0;
    assert!((report.map - mean(|q| q.ave_pr)).abs() < 1e-12);
    assert!((report.anmrr - mean(|q| q.nmrr)).abs() < 1e-12);
    assert_eq!(report.per_class.len(), 3);
    for (class, score) in &report.per_class {
        assert_eq!(score.queries, 9, "{class}");
    }
    // class c is a contiguous run at the far end and is retrieved perfectly
    assert!((report.per_class["c"].map - 1.0).abs() < 1e-12);
    assert!(report.per_class["c"].anmrr.abs() < 1e-12);
}

#[test]
fn nmrr_with_items_outside_the_window() {
    let relevant: Vec<String> = (0..8).map(|i| format!("r{i}")).collect();
    let ranks = [1usize, 2, 3, 4, 5, 6, 17, 26];
    let mut ids: Vec<String> = (0..26).map(|i| format!("x{i}")).collect();
    for (r, id) in ranks.iter().zip(&relevant) {
        ids[r - 1] = id.clone();
    }
    let list = ranked(&ids);
    let gt: HashSet<&str> = relevant.iter().map(String::as_str).collect();
    // both late items count as 1.25 * 16 = 20; AVR = 61 / 8
    assert!((nmrr(&list, &gt, 8).unwrap() - (61.0 / 8.0 - 4.5) / 15.5).abs() < 1e-12);
}

fn ranked(ids: &[String]) -> RankedList {
    RankedList {
        query_id: "q".into(),
        metric: DistanceMetric::Euclidean,
        items: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedItem {
                image_id: id.clone(),
                distance: i as f64,
            })
            .collect(),
    }
}

fn relevance_pattern() -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(any::<bool>(), 2..40).prop_filter("needs both kinds", |v| v.contains(&true) && v.contains(&false))
}

fn scores(pattern: &[bool], gtm_extra: usize) -> (f64, f64) {
    let ids: Vec<String> = (0..pattern.len()).map(|i| format!("i{i:02}")).collect();
    let gt: HashSet<&str> = ids.iter().zip(pattern).filter(|(_, &r)| r).map(|(id, _)| id.as_str()).collect();
    let list = ranked(&ids);
    let gtm = gt.len() + gtm_extra;
    (average_precision(&list, &gt).unwrap(), nmrr(&list, &gt, gtm).unwrap())
}

proptest! {
    #[test]
    fn moving_a_relevant_item_up_never_hurts(pattern in relevance_pattern(), pick in any::<prop::sample::Index>(), gtm_extra in 0usize..5) {
        let swaps: Vec<usize> = (1..pattern.len()).filter(|&i| pattern[i] && !pattern[i - 1]).collect();
        prop_assume!(!swaps.is_empty());
        let i = swaps[pick.index(swaps.len())];
        let mut better = pattern.clone();
        better.swap(i - 1, i);
        let (ap0, nm0) = scores(&pattern, gtm_extra);
        let (ap1, nm1) = scores(&better, gtm_extra);
        prop_assert!(ap1 > ap0);
        prop_assert!(nm1 <= nm0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap0) && (0.0..=1.0).contains(&nm0));
    }
}

#[test]
fn random_rankings_score_near_the_class_prior() {
    // 4 classes x 60 images: each query has 59 relevant items among 239
    let n_classes = 4;
    let per_class = 60;
    let ids: Vec<(String, usize)> = (0..n_classes)
        .flat_map(|c| (0..per_class).map(move |i| (format!("c{c}_{i:02}"), c)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut total_ap = 0.0;
    for (q, (qid, qc)) in ids.iter().enumerate() {
        let mut others: Vec<&(String, usize)> = ids.iter().enumerate().filter(|(j, _)| *j != q).map(|(_, x)| x).collect();
        others.shuffle(&mut rng);
        let list = RankedList {
            query_id: qid.clone(),
            metric: DistanceMetric::Euclidean,
            items: others
                .iter()
                .enumerate()
                .map(|(r, (id, _))| RankedItem {
                    image_id: id.clone(),
                    distance: r as f64,
                })
                .collect(),
        };
        let gt: HashSet<&str> = others.iter().filter(|(_, c)| c == qc).map(|(id, _)| id.as_str()).collect();
        total_ap += average_precision(&list, &gt).unwrap();
    }
    let map = total_ap / ids.len() as f64;
    let prior = (per_class - 1) as f64 / (ids.len() - 1) as f64;
    assert!((map - prior).abs() < 0.03, "mAP {map} vs prior {prior}");
}
