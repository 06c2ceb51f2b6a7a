mod common;

use aidtopics::clustering::{build_mst, core_distances, hdbscan, kmeans_baseline, Selection};
use aidtopics::validity::adjusted_rand_index;
use aidtopics::{ClusterParams, EmbeddingMatrix, OUTLIER};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn two_clean_blobs() {
    let (x, truth) = axis_blobs(&[200, 200], 6, 15.0, 1);
    let model = hdbscan(&x, &ClusterParams::with_min_cluster_size(50)).unwrap();
    assert_eq!(model.n_clusters, 2);
    assert!(model.outlier_count() as f64 <= 0.01 * 400.0);
    let clustered: Vec<usize> = (0..400).filter(|&i| model.labels[i] != OUTLIER).collect();
    let a: Vec<i32> = clustered.iter().map(|&i| model.labels[i]).collect();
    let b: Vec<i32> = clustered.iter().map(|&i| truth[i] as i32).collect();
    assert_eq!(adjusted_rand_index(&a, &b), 1.0);
}

#[test]
fn planted_noise_is_mostly_flagged() {
    let (blobs, _) = axis_blobs(&[300, 300, 300], 8, 12.0, 2);
    let (x, noise) = add_uniform_noise(&blobs, 90, -6.0, 18.0, 22);
    let model = hdbscan(&x, &ClusterParams::with_min_cluster_size(50)).unwrap();
    let flagged = noise
        .iter()
        .filter(|&&i| model.labels[i] == OUTLIER)
        .count();
    assert!(
        flagged as f64 >= 0.8 * noise.len() as f64,
        "{flagged} of {}",
        noise.len()
    );
}

#[test]
fn two_small_blobs_split_under_root() {
    let (x, _) = axis_blobs(&[30, 30], 2, 30.0, 3);
    let params = ClusterParams::with_min_cluster_size(10);
    let model = hdbscan(&x, &params).unwrap();
    assert_eq!(model.condensed_tree.root_children().len(), 2);
    assert_eq!(model.n_clusters, 2);
}

#[test]
fn leaf_selection_never_merges_blobs() {
    let (x, truth) = axis_blobs(&[100, 100, 100], 4, 14.0, 4);
    let params = ClusterParams {
        selection: Selection::Leaf,
        ..ClusterParams::with_min_cluster_size(40)
    };
    let model = hdbscan(&x, &params).unwrap();
    assert!(model.n_clusters >= 3);
    for c in 0..model.n_clusters as i32 {
        let mut blobs: Vec<usize> = (0..300)
            .filter(|&i| model.labels[i] == c)
            .map(|i| truth[i])
            .collect();
        blobs.dedup();
        assert_eq!(blobs.len(), 1, "cluster {c} spans several blobs");
    }
}

#[test]
fn kmeans_recovers_far_blobs() {
    let (x, truth) = axis_blobs(&[50, 50], 3, 40.0, 5);
    let km = kmeans_baseline(&x, 2, 0, 100, 1e-9).unwrap();
    assert_eq!(adjusted_rand_index(&km.labels, &as_i32(&truth)), 1.0);
    assert!(km.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn kmeans_with_k_equal_n_has_zero_inertia() {
    let x = EmbeddingMatrix::from_rows(&[[0.0f32, 1.0], [2.0, 2.0], [5.0, -1.0]]).unwrap();
    let km = kmeans_baseline(&x, 3, 1, 10, 0.0).unwrap();
    assert_eq!(km.inertia(), 0.0);
}

fn points(rows: &[Vec<f32>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows).unwrap()
}

fn small_cloud() -> impl Strategy<Value = Vec<Vec<f32>>> {
    (1usize..4)
        .prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-10.0f32..10.0, d), 12..60))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mst_weight_is_permutation_invariant(rows in small_cloud(), seed in any::<u64>(), ms in 1usize..5) {
        let x = points(&rows);
        let weight = |x: &EmbeddingMatrix| {
            let core = core_distances(x, ms).unwrap();
            build_mst(x, &core).iter().map(|e| e.weight).sum::<f64>()
        };
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        let mut r = rng(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let shuffled: Vec<Vec<f32>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let (a, b) = (weight(&x), weight(&points(&shuffled)));
        prop_assert!(rel_close(a, b, 1e-9), "{} vs {}", a, b);
    }

    #[test]
    fn mst_spans_every_point(rows in small_cloud()) {
        let x = points(&rows);
        let core = core_distances(&x, 2).unwrap();
        let mst = build_mst(&x, &core);
        prop_assert_eq!(mst.len(), rows.len() - 1);
        let mut seen = vec![false; rows.len()];
        for e in &mst {
            seen[e.a] = true;
            seen[e.b] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn clusters_respect_min_cluster_size(rows in small_cloud(), mcs in 2usize..12, leaf in any::<bool>()) {
        let x = points(&rows);
        let params = ClusterParams {
            min_cluster_size: mcs,
            min_samples: Some(mcs.min(rows.len() - 1)),
            selection: if leaf { Selection::Leaf } else { Selection::ExcessOfMass },
        };
        let model = hdbscan(&x, &params).unwrap();
        prop_assert!(model.cluster_sizes().iter().all(|&s| s >= mcs));
        prop_assert!(model.labels.iter().all(|&l| l == OUTLIER || (l >= 0 && (l as usize) < model.n_clusters)));
        prop_assert!(model.membership_strength.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }
}
