use std::collections::HashSet;

use duet_core::ifweights::{
    default_shift_epsilon, load_influence_csv, normalize_weights, ridge_influences, sample_domain,
    sample_domain_with, write_influence_csv, NormalizedWeights, RidgeProblem,
};
use duet_core::seed::rng_from_seed;
use duet_core::stats::pearson;
use duet_core::validation::{leave_one_out_deltas, synthetic_ridge_problem};
use duet_core::{DataPoint, DomainDataset, Error};
use proptest::prelude::*;

fn domain(infl: &[f64]) -> DomainDataset {
    DomainDataset::new(
        "d",
        infl.iter()
            .enumerate()
            .map(|(i, &v)| DataPoint::new(format!("p{i}"), v))
            .collect(),
    )
    .unwrap()
}

fn fixed_weights(probs: &[f64]) -> NormalizedWeights {
    NormalizedWeights {
        domain: "d".into(),
        point_ids: (0..probs.len()).map(|i| format!("p{i}")).collect(),
        probs: probs.to_vec(),
        shift_epsilon: 1.0,
    }
}

#[test]
fn normalization_follows_shift_formula() {
    let w = normalize_weights(&domain(&[-1.0, 1.0]), 1.0).unwrap();
    assert!((w.probs[0] - 0.25).abs() < 1e-15);
    assert!((w.probs[1] - 0.75).abs() < 1e-15);

    let flat = normalize_weights(&domain(&[0.4; 5]), 1e-3).unwrap();
    assert!(flat.probs.iter().all(|&p| (p - 0.2).abs() < 1e-15));

    let d = domain(&[0.0, 1.0, 3.0]);
    let eps = default_shift_epsilon(&d);
    assert!((eps - 4e-6).abs() < 1e-18);
    assert!(matches!(
        normalize_weights(&d, 0.0),
        Err(Error::DomainError(_))
    ));
    assert!(matches!(
        normalize_weights(&d, f64::NAN),
        Err(Error::DomainError(_))
    ));
}

#[test]
fn single_draw_marginal_matches_weights() {
    let w = fixed_weights(&[1.0 / 3.0, 2.0 / 3.0]);
    let mut rng = rng_from_seed(42);
    let draws = 1_000_000;
    let mut first = 0usize;
    for _ in 0..draws {
        if sample_domain_with(&w, 1, false, &mut rng).unwrap()[0] == "p0" {
            first += 1;
        }
    }
    let freq = first as f64 / draws as f64;
    assert!((freq - 1.0 / 3.0).abs() < 0.002, "freq {freq}");
}

#[test]
fn with_replacement_marginals_track_weights() {
    let d = domain(&[-1.0, 0.5, 2.0]);
    let w = normalize_weights(&d, default_shift_epsilon(&d)).unwrap();
    let draws = sample_domain(&w, 1_000_000, true, 7).unwrap();
    for (id, p) in w.point_ids.iter().zip(&w.probs) {
        let freq = draws.iter().filter(|x| *x == id).count() as f64 / draws.len() as f64;
        assert!((freq - p).abs() < 0.002, "{id}: {freq} vs {p}");
    }
}

#[test]
fn full_count_without_replacement_is_a_permutation() {
    let d = domain(&[0.3, -0.2, 0.9, 0.1, 0.0, -1.0, 0.5]);
    let w = normalize_weights(&d, default_shift_epsilon(&d)).unwrap();
    let mut got = sample_domain(&w, 7, false, 3).unwrap();
    got.sort();
    let mut want = w.point_ids.clone();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn zero_count_and_overdraw() {
    let w = fixed_weights(&[0.5, 0.5]);
    assert!(sample_domain(&w, 0, false, 1).unwrap().is_empty());
    assert!(sample_domain(&w, 0, true, 1).unwrap().is_empty());
    assert_eq!(sample_domain(&w, 5, true, 1).unwrap().len(), 5);
    assert!(matches!(
        sample_domain(&w, 3, false, 1),
        Err(Error::CountExceedsDomain {
            requested: 3,
            available: 2,
            ..
        })
    ));
}

#[test]
fn sampling_is_seed_deterministic() {
    let d = domain(&(0..100).map(|i| (i as f64).sin()).collect::<Vec<_>>());
    let w = normalize_weights(&d, default_shift_epsilon(&d)).unwrap();
    assert_eq!(
        sample_domain(&w, 30, false, 9).unwrap(),
        sample_domain(&w, 30, false, 9).unwrap()
    );
    assert_ne!(
        sample_domain(&w, 30, false, 9).unwrap(),
        sample_domain(&w, 30, false, 10).unwrap()
    );
}

#[test]
fn remove_harmful_drops_lowest_fifth() {
    let d = domain(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
    let w = NormalizedWeights::remove_harmful(&d);
    assert_eq!(w.len(), 8);
    assert!(!w.point_ids.contains(&"p0".to_string()));
    assert!(!w.point_ids.contains(&"p1".to_string()));
    assert!(w.probs.iter().all(|&p| (p - 0.125).abs() < 1e-15));
    // fewer than five points: nothing is dropped
    assert_eq!(
        NormalizedWeights::remove_harmful(&domain(&[1.0, 2.0, 3.0, 4.0])).len(),
        4
    );
}

#[test]
fn csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = domain(&[0.25, -1.5e-7, 3.0]);
    let path = dir.path().join("d.csv");
    write_influence_csv(&path, &d).unwrap();
    let back = load_influence_csv(&path, "d").unwrap();
    assert_eq!(back, d);

    let missing = dir.path().join("absent.csv");
    let err = load_influence_csv(&missing, "x").unwrap_err();
    assert!(err.to_string().contains("absent.csv"));

    let bad_header = dir.path().join("h.csv");
    std::fs::write(&bad_header, "id,score\na,1\n").unwrap();
    assert!(matches!(
        load_influence_csv(&bad_header, "h"),
        Err(Error::InvalidManifest(_))
    ));

    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "point_id,influence\na,1\na,2\n").unwrap();
    assert!(matches!(
        load_influence_csv(&dup, "dup"),
        Err(Error::DuplicatePointId { .. })
    ));

    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "point_id,influence\na,NaN\n").unwrap();
    assert!(matches!(
        load_influence_csv(&nan, "nan"),
        Err(Error::NonFiniteInfluence { .. })
    ));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "point_id,influence\n").unwrap();
    assert!(matches!(
        load_influence_csv(&empty, "empty"),
        Err(Error::EmptyDomain(_))
    ));

    let payload = dir.path().join("p.csv");
    std::fs::write(
        &payload,
        "point_id,influence,payload_ref\na,1,shard/0\nb,2,\n",
    )
    .unwrap();
    let p = load_influence_csv(&payload, "p").unwrap();
    assert_eq!(p.points()[0].payload_ref.as_deref(), Some("shard/0"));
    assert_eq!(p.points()[1].payload_ref, None);
}

#[test]
fn removing_the_most_harmful_point_lowers_test_loss() {
    let mut agree_harmful = 0;
    let mut agree_helpful = 0;
    for seed in 0..100u64 {
        let problem = synthetic_ridge_problem(100, 5, 5000 + seed).unwrap();
        let infl = ridge_influences(&problem).unwrap();
        let full = problem.test_loss(&problem.fit(None).unwrap());
        let argmin = (0..infl.len())
            .min_by(|&a, &b| infl[a].total_cmp(&infl[b]))
            .unwrap();
        let argmax = (0..infl.len())
            .max_by(|&a, &b| infl[a].total_cmp(&infl[b]))
            .unwrap();
        if problem.test_loss(&problem.fit(Some(argmin)).unwrap()) < full {
            agree_harmful += 1;
        }
        if problem.test_loss(&problem.fit(Some(argmax)).unwrap()) > full {
            agree_helpful += 1;
        }
    }
    assert!(agree_harmful >= 95, "{agree_harmful}/100");
    assert!(agree_helpful >= 95, "{agree_helpful}/100");
}

#[test]
fn influence_tracks_leave_one_out() {
    let problem = synthetic_ridge_problem(200, 5, 0).unwrap();
    let r = pearson(
        &ridge_influences(&problem).unwrap(),
        &leave_one_out_deltas(&problem).unwrap(),
    );
    assert!(r >= 0.9, "r = {r}");
}

#[test]
fn one_dimensional_ridge_closed_form() {
    // θ = Σxy / (Σx² + λ); influence of point i is g_test · H⁻¹ · (x_i θ − y_i)·(−1)
    let xs = [1.0, 2.0, -1.0];
    let ys = [1.0, 1.5, 0.0];
    let lambda = 0.5;
    let problem = RidgeProblem::new(
        xs.iter().map(|&x| vec![x]).collect(),
        ys.to_vec(),
        lambda,
        vec![vec![1.5]],
        vec![1.0],
    )
    .unwrap();
    let h: f64 = xs.iter().map(|x| x * x).sum::<f64>() + lambda;
    let theta = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / h;
    assert!((problem.fit(None).unwrap()[0] - theta).abs() < 1e-14);
    let g_test = (1.5 * theta - 1.0) * 1.5;
    let infl = ridge_influences(&problem).unwrap();
    for i in 0..3 {
        let g_i = (xs[i] * theta - ys[i]) * xs[i];
        assert!((infl[i] - g_test * g_i / h).abs() < 1e-14);
    }
}

#[test]
fn ridge_rejects_bad_shapes() {
    assert!(matches!(
        RidgeProblem::new(vec![vec![1.0]], vec![], 1.0, vec![], vec![]),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(
        RidgeProblem::new(vec![vec![1.0]], vec![1.0], 0.0, vec![], vec![]),
        Err(Error::DomainError(_))
    ));
}

proptest! {
    #[test]
    fn weights_form_a_monotone_distribution(infl in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let d = domain(&infl);
        let w = normalize_weights(&d, default_shift_epsilon(&d)).unwrap();
        prop_assert!((w.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.probs.iter().all(|&p| p > 0.0));
        for i in 0..infl.len() {
            for j in 0..infl.len() {
                if infl[i] < infl[j] {
                    prop_assert!(w.probs[i] <= w.probs[j]);
                }
            }
        }
    }

    #[test]
    fn without_replacement_never_repeats(n in 1usize..60, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let d = domain(&(0..n).map(|i| ((i * 7919) % 13) as f64).collect::<Vec<_>>());
        let w = normalize_weights(&d, default_shift_epsilon(&d)).unwrap();
        let count = (frac * n as f64).floor() as usize;
        let ids = sample_domain(&w, count, false, seed).unwrap();
        prop_assert_eq!(ids.len(), count);
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), count);
    }
}
