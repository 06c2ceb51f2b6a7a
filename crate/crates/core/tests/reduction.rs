mod common;

use std::collections::BTreeSet;

use aidtopics::reduction::{
    knn_graph, neighbor_preservation, pca_fit, pca_reduce, umap_reduce, KnnMode, ReductionMethod,
};
use aidtopics::{EmbeddingMatrix, Metric, ReductionParams};
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

fn random_matrix(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut r = rng(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|j| r.random_range(-1.0..1.0f32) * (1.0 + j as f32))
                .collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

fn covariance(x: &EmbeddingMatrix) -> DMatrix<f64> {
    let p = rows_f64(x);
    let (n, d) = (p.len(), p[0].len());
    let mean: Vec<f64> = (0..d)
        .map(|j| p.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| p[i][j] - mean[j]);
    centered.transpose() * &centered / (n as f64 - 1.0)
}

#[test]
fn eigenvalues_match_full_decomposition() {
    let x = random_matrix(300, 10, 1);
    let model = pca_fit(&x, 4).unwrap();
    let mut oracle: Vec<f64> = SymmetricEigen::new(covariance(&x))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    oracle.sort_by(|a, b| b.total_cmp(a));
    for (got, want) in model.eigenvalues.iter().zip(&oracle) {
        assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
    }
}

#[test]
fn axes_match_oracle_up_to_sign() {
    let x = random_matrix(200, 6, 2);
    let model = pca_fit(&x, 3).unwrap();
    let eig = SymmetricEigen::new(covariance(&x));
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (c, &col) in model.components.iter().zip(&order) {
        let dot: f64 = c
            .iter()
            .zip(eig.eigenvectors.column(col).iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!((dot.abs() - 1.0).abs() < 1e-6, "axis alignment {dot}");
        let largest = c
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(largest > 0.0);
    }
}

#[test]
fn rank_two_plane_keeps_pairwise_distances() {
    let mut r = rng(3);
    let u: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..80)
        .map(|_| {
            let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            u.iter().zip(&v).map(|(x, y)| a * x + b * y + 0.5).collect()
        })
        .collect();
    let x = EmbeddingMatrix::from_f64_rows(&rows).unwrap();
    let model = pca_fit(&x, 2).unwrap();
    let z = model.project_f64(&x);
    let p = rows_f64(&x);
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            worst = worst.max((dist(&p[i], &p[j]) - dist(&z[i], &z[j])).abs());
        }
    }
    assert!(worst <= 1e-6, "pairwise distance error {worst}");
}

#[test]
fn full_rank_rotation_preserves_distances() {
    let x = random_matrix(100, 12, 4);
    let z = pca_fit(&x, 12).unwrap().project_f64(&x);
    let p = rows_f64(&x);
    for i in (0..100).step_by(7) {
        for j in (0..100).step_by(11) {
            assert!((dist(&p[i], &p[j]) - dist(&z[i], &z[j])).abs() <= 1e-6);
        }
    }
}

#[test]
fn pca_reduce_shape() {
    let x = random_matrix(50, 8, 5);
    let y = pca_reduce(&x, 3).unwrap();
    assert_eq!((y.n(), y.d()), (50, 3));
}

#[test]
fn exact_knn_matches_brute_force() {
    let x = random_matrix(400, 5, 6);
    let g = knn_graph(&x, 7, Metric::Euclidean, KnnMode::Exact, 0).unwrap();
    let oracle = brute_knn(&x, 7);
    for (i, row) in oracle.iter().enumerate() {
        let got: BTreeSet<usize> = g.neighbors(i).iter().map(|&j| j as usize).collect();
        let want: BTreeSet<usize> = row.iter().copied().collect();
        assert_eq!(got, want, "row {i}");
    }
}

#[test]
fn approximate_recall_per_row() {
    let x = random_matrix(2000, 16, 7);
    let g = knn_graph(&x, 10, Metric::Euclidean, KnnMode::Approximate, 11).unwrap();
    let oracle = brute_knn(&x, 10);
    let recalls: Vec<f64> = (0..2000)
        .map(|i| {
            let want: BTreeSet<usize> = oracle[i].iter().copied().collect();
            g.neighbors(i)
                .iter()
                .filter(|&&j| want.contains(&(j as usize)))
                .count() as f64
                / 10.0
        })
        .collect();
    let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
    assert!(mean >= 0.9, "mean recall {mean}");
    let again = knn_graph(&x, 10, Metric::Euclidean, KnnMode::Approximate, 11).unwrap();
    assert_eq!(g, again);
}

fn small_umap_params(seed: u64) -> ReductionParams {
    ReductionParams {
        method: ReductionMethod::Umap,
        target_dims: 4,
        n_epochs: 100,
        input_metric: Metric::Euclidean,
        seed,
        ..ReductionParams::default()
    }
}

#[test]
fn serial_umap_is_bitwise_reproducible() {
    let (x, _) = axis_blobs(&[60, 60], 10, 8.0, 8);
    let a = umap_reduce(&x, &small_umap_params(5)).unwrap().embedding;
    let b = umap_reduce(&x, &small_umap_params(5)).unwrap().embedding;
    assert_eq!(a.to_emb1_bytes(), b.to_emb1_bytes());
    assert!(a.values().iter().all(|v| v.is_finite()));
}

#[test]
fn parallel_umap_is_finite_and_separates_blobs() {
    let (x, labels) = axis_blobs(&[80, 80, 80], 16, 12.0, 9);
    let params = ReductionParams {
        serial: false,
        ..small_umap_params(1)
    };
    let y = umap_reduce(&x, &params).unwrap().embedding;
    assert!(y.values().iter().all(|v| v.is_finite()));
    let (purity, _) = blob_purity(&y, &labels, 10);
    assert!(purity >= 0.8, "{purity}");
}

#[test]
fn neighbor_retention_is_reported() {
    let x = random_matrix(120, 6, 10);
    let y = pca_reduce(&x, 6).unwrap();
    let kept = neighbor_preservation(&x, &y, 10, Metric::Euclidean).unwrap();
    assert!(kept > 0.99, "{kept}");
}
