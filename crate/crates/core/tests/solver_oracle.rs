mod common;

use cfsim::fstt::{predict, DirectionMode, FsttConfig, ThicknessMode};
use cfsim::photo::{apply_noise, render, sample_spec, PoseClass, VisibilityModel};
use cfsim::population::compute_stats;
use cfsim::solver::{score, solve, SfoProblem, SimilarityMetric, SolverOptions, DEFAULT_FOCAL_BOUNDS};
use common::*;

fn all_visible() -> VisibilityModel {
    VisibilityModel::Geometric { half_angle_deg: 180.0 }
}

fn instance(pred: &[(cfsim::LandmarkId, cfsim::Point3)], photo: &cfsim::photo::SyntheticPhoto) -> Instance {
    let o = &photo.observed;
    Instance::new(pred, &o.observations, o.image_width, o.image_height, DEFAULT_FOCAL_BOUNDS).unwrap()
}

#[test]
fn five_landmark_noiseless_cost_matches_grid_oracle() {
    let pop = micro_population(4, 11);
    for i in 0..4 {
        for (p, pose) in PoseClass::ALL.into_iter().enumerate() {
            let spec = sample_spec(pose, 0.0, (10 * i + p) as u64);
            let photo = render(&skin_cloud(&pop, i), &spec, &all_visible(), "x", 0).unwrap();
            let pred = predict(&pop.subjects[i], &pop.landmarks, FsttConfig::REAL, None, pop.registry).unwrap();
            let s = solve(&SfoProblem::new(&pred.points, &photo.observed).unwrap(), &SolverOptions::default()).unwrap();
            let (_, oracle) = brute_force(&instance(&pred.points, &photo));
            assert!((s.cost - oracle).abs() < 1e-8, "subject {i} {pose}: solver {} oracle {oracle}", s.cost);
        }
    }
}

#[test]
fn cross_subject_costs_reach_the_oracle_minimum() {
    let pop = micro_population(5, 12);
    let stats = compute_stats(&pop, &pop.landmarks).unwrap();
    let cfg = FsttConfig::new(ThicknessMode::Mean, DirectionMode::Mean);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let spec = sample_spec(PoseClass::ALL[i % 2], 5.0, 100 + i as u64);
        let photo = render(&skin_cloud(&pop, i), &spec, &all_visible(), "x", 0).unwrap();
        let photo = apply_noise(&photo, 5.0, 100 + i as u64);
        for j in 0..5 {
            let pred = predict(&pop.subjects[j], &pop.landmarks, cfg, Some(&stats), pop.registry).unwrap();
            let s = solve(&SfoProblem::new(&pred.points, &photo.observed).unwrap(), &SolverOptions::default()).unwrap();
            let (_, oracle) = brute_force(&instance(&pred.points, &photo));
            let gap = (s.cost - oracle) / oracle.max(1.0);
            worst = worst.max(gap);
            assert!(gap < 1e-8, "photo {i} skull {j}: solver {} oracle {oracle}", s.cost);
        }
    }
    println!("largest relative excess over the oracle: {worst:e}");
}

#[test]
fn noisy_own_photo_is_bounded_by_the_noise() {
    let pop = aligned(cfsim::LandmarkSet::SetA, 50, 13);
    let bound = 5.0 * 2f64.sqrt();
    for f in 0..100 {
        let (photo, pred) = own_fixture(&pop, f % 50, PoseClass::ALL[f % 2], 500 + f as u64);
        let noisy = apply_noise(&photo, 5.0, 900 + f as u64);
        let s = solve(&SfoProblem::new(&pred, &noisy.observed).unwrap(), &SolverOptions::default()).unwrap();
        assert!(s.similarity <= bound, "fixture {f}: {}", s.similarity);
    }
}

#[test]
fn score_equals_recomputation_from_residuals() {
    let pop = aligned(cfsim::LandmarkSet::SetB, 10, 14);
    for f in 0..50 {
        let (photo, _) = own_fixture(&pop, f % 10, PoseClass::ALL[f % 2], 700 + f as u64);
        let other = predict(&pop.subjects[(f + 3) % 10], &pop.landmarks, FsttConfig::REAL, None, pop.registry).unwrap();
        let s = solve(&SfoProblem::new(&other.points, &photo.observed).unwrap(), &SolverOptions::default()).unwrap();
        let sq: Vec<f64> = s.residuals.iter().map(|(_, r)| r[0] * r[0] + r[1] * r[1]).collect();
        let rmse = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        let mae = sq.iter().map(|v| v.sqrt()).sum::<f64>() / sq.len() as f64;
        assert!((score(&s, SimilarityMetric::Rmse) - rmse).abs() <= 1e-12 * rmse.max(1.0));
        assert!((score(&s, SimilarityMetric::Mae) - mae).abs() <= 1e-12 * mae.max(1.0));
        assert_eq!(s.similarity, score(&s, SimilarityMetric::Rmse));
    }
}
