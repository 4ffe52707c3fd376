mod common;

use common::{dd_average_regret_bound as dd_bound, dd_bound_constant, Dd};
use duet_core::regret::{average_regret_bound, bound_constant, compute_trace};
use duet_core::types::{MixingRatio, Observation};
use duet_core::Error;
use proptest::prelude::*;

fn rel(a: f64, b: Dd) -> f64 {
    let b = b.to_f64();
    ((a - b) / b).abs()
}

#[test]
fn constant_reference_values() {
    assert!((bound_constant(1.0, 1).unwrap() - 1.581_976_706_869_326_5).abs() < 1e-15);
    assert!((average_regret_bound(1.0, 1, 0.0625).unwrap() - 24.7215).abs() < 1e-3);
}

#[test]
fn constant_matches_extended_precision() {
    for c in [0.05, 0.3, 0.5, 0.75, 1.0] {
        for k in [1, 2, 3, 4, 8, 16] {
            let got = bound_constant(c, k).unwrap();
            assert!(rel(got, dd_bound_constant(c, k)) < 1e-12, "c={c} k={k}");
        }
    }
}

#[test]
fn bound_matches_extended_precision() {
    for c in [0.3, 0.6, 1.0] {
        for k in [1, 4, 10] {
            for delta in [0.01, 0.1, 0.5, 1.0] {
                let got = average_regret_bound(c, k, delta).unwrap();
                assert!(
                    rel(got, dd_bound(c, k, delta)) < 1e-12,
                    "c={c} k={k} δ={delta}"
                );
            }
        }
    }
}

#[test]
fn constant_decreases_with_k() {
    for c in [0.2, 0.7, 1.0] {
        let vals: Vec<f64> = (1..10).map(|k| bound_constant(c, k).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "c={c}: {vals:?}");
    }
}

#[test]
fn invalid_arguments() {
    assert!(matches!(bound_constant(0.0, 1), Err(Error::DomainError(_))));
    assert!(matches!(bound_constant(1.0, 0), Err(Error::DomainError(_))));
    assert!(matches!(bound_constant(1.5, 1), Err(Error::DomainError(_))));
    assert!(matches!(
        average_regret_bound(1.0, 1, 0.0),
        Err(Error::DomainError(_))
    ));
    assert!(matches!(
        average_regret_bound(1.0, 1, 1.5),
        Err(Error::DomainError(_))
    ));
}

fn history(losses: &[f64]) -> Vec<Observation> {
    losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| Observation {
            iteration: i as u64,
            ratio: MixingRatio::uniform(2),
            loss,
            manifest_digest: format!("d{i}"),
        })
        .collect()
}

#[test]
fn trace_examples() {
    let t = compute_trace(&history(&[0.5, 0.3, 0.1]), Some(0.1)).unwrap();
    let want = [0.4, 0.2, 0.0];
    for (a, b) in t.per_step.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!((t.cumulative[2] - 0.6).abs() < 1e-15);
    assert!((t.final_average().unwrap() - 0.2).abs() < 1e-15);
    assert!(matches!(
        compute_trace(&history(&[0.5]), None),
        Err(Error::UnknownOptimum)
    ));
    let empty = compute_trace(&[], Some(0.0)).unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.final_average(), None);
}

#[test]
fn trace_csv_columns() {
    let h = history(&[0.5, 0.3]);
    let t = compute_trace(&h, Some(0.1)).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&h, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,loss,per_step,cumulative,average"));
    assert_eq!(text.lines().count(), 3);
}

proptest! {
    #[test]
    fn cumulative_is_nondecreasing(losses in prop::collection::vec(-5.0f64..5.0, 1..50), f_star in -5.0f64..5.0) {
        let t = compute_trace(&history(&losses), Some(f_star)).unwrap();
        prop_assert!(t.per_step.iter().all(|&r| r >= 0.0));
        prop_assert!(t.cumulative.windows(2).all(|w| w[1] >= w[0]));
        for (i, (c, a)) in t.cumulative.iter().zip(&t.average).enumerate() {
            prop_assert!((c / (i + 1) as f64 - a).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn bound_is_finite_and_positive(c in 0.01f64..=1.0, k in 1usize..50, delta in 0.001f64..1.0) {
        let b = average_regret_bound(c, k, delta).unwrap();
        prop_assert!(b.is_finite() && b > 0.0);
    }
}
