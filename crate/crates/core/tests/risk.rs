mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use riskplan::frenet::{EgoTrajectory, VehicleParams};
use riskplan::kernel::KernelConfig;
use riskplan::reduced_set::ReducedSet;
use riskplan::risk::{
    collision_f, evaluate_risk, finite_sample_bound, r_cvar, r_mmd, r_saa, residuals,
    scenario_penalty, total_risk, CvarConfig, ObstacleRisk, ObstacleSampleSet, RiskTag,
};

fn params(a1: f64, a2: f64) -> VehicleParams {
    VehicleParams {
        ellipse_a1: a1,
        ellipse_a2: a2,
        ..Default::default()
    }
}

fn ego(s: Vec<f64>, d: Vec<f64>) -> EgoTrajectory {
    EgoTrajectory::from_positions(s, d, 0.1).unwrap()
}

/// Literal ellipse residual, maximized over waypoints.
fn brute_residual(es: &[f64], ed: &[f64], row: &[f64], a1: f64, a2: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..es.len() {
        let f = 1.0 - ((es[k] - row[2 * k]) / a1).powi(2) - ((ed[k] - row[2 * k + 1]) / a2).powi(2);
        worst = worst.max(f);
    }
    worst.max(0.0)
}

fn residual_list() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 1..40)
}

proptest! {
    #[test]
    fn residuals_match_brute_force(seed in 0u64..10_000, a1 in 0.5f64..5.0, a2 in 0.5f64..3.0) {
        let mut r = rng(seed);
        let h = r.random_range(2..12);
        let es: Vec<f64> = (0..h).map(|k| k as f64 * 0.5).collect();
        let ed: Vec<f64> = (0..h).map(|_| r.random_range(-1.0..1.0)).collect();
        let rows = random_rows(&mut r, 7, 2 * h, 4.0);
        let set = ObstacleSampleSet::new(rows.clone(), h, 0.1).unwrap();
        let got = residuals(&ego(es.clone(), ed.clone()), &set, &params(a1, a2)).unwrap();
        for (g, row) in got.iter().zip(&rows) {
            prop_assert!((g - brute_residual(&es, &ed, row, a1, a2)).abs() < 1e-12);
        }
    }

    #[test]
    fn saa_is_positive_fraction(res in residual_list()) {
        let want = res.iter().filter(|v| **v > 0.0).count() as f64 / res.len() as f64;
        prop_assert_eq!(r_saa(&res).unwrap(), want);
    }

    #[test]
    fn cvar_is_top_tail_mean(res in residual_list(), pct in 1usize..100) {
        // α = pct/100, so the tail size ⌈(1−α)N⌉ is an exact integer ceiling.
        let cfg = CvarConfig::new(pct as f64 / 100.0).unwrap();
        let n = res.len();
        let m = ((100 - pct) * n).div_ceil(100).max(1);
        let got = r_cvar(&res, cfg).unwrap();
        prop_assert!((got - top_m_mean(&res, m)).abs() < 1e-12, "m = {m}");
        let mean = res.iter().sum::<f64>() / n as f64;
        let max = res.iter().cloned().fold(0.0, f64::max);
        prop_assert!(got >= mean - 1e-12 && got <= max + 1e-12);
    }

    #[test]
    fn mmd_risk_matches_explicit_zero_set(res in residual_list(), sigma in 0.05f64..3.0, seed in 0u64..1000) {
        let w = random_simplex(&mut rng(seed), res.len());
        let rows: Vec<Vec<f64>> = res.iter().map(|v| vec![*v]).collect();
        let want = brute_mmd(&rows, &w, &[vec![0.0]], &[1.0], sigma).max(0.0);
        let got = r_mmd(&res, &w, KernelConfig::new(sigma).unwrap()).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn scenario_penalty_is_sum_of_squares(res in residual_list()) {
        let want: f64 = res.iter().map(|v| v * v).sum();
        prop_assert!((scenario_penalty(&res).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn saa_is_monotone_under_replacement(res in residual_list(), idx in 0usize..40, v in 0.01f64..1.0) {
        let i = idx % res.len();
        prop_assume!(res[i] == 0.0);
        let mut more = res.clone();
        more[i] = v;
        prop_assert!(r_saa(&more).unwrap() >= r_saa(&res).unwrap());
    }

    // Dyadic values keep every subtraction exact, so the shift must not
    // change a single bit.
    #[test]
    fn translation_leaves_residuals_unchanged(seed in 0u64..10_000, ds in -64i32..64, dd in -64i32..64) {
        let mut r = rng(seed);
        let h = 6;
        let dy = |r: &mut rand_chacha::ChaCha8Rng| r.random_range(-64i32..64) as f64 / 8.0;
        let es: Vec<f64> = (0..h).map(|_| dy(&mut r)).collect();
        let ed: Vec<f64> = (0..h).map(|_| dy(&mut r)).collect();
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..2 * h).map(|_| dy(&mut r)).collect()).collect();
        let set = ObstacleSampleSet::new(rows, h, 0.1).unwrap();
        let (ds, dd) = (ds as f64 / 8.0, dd as f64 / 8.0);
        let p = params(2.0, 1.0);
        let base = residuals(&ego(es.clone(), ed.clone()), &set, &p).unwrap();
        let moved_ego = ego(es, ed).translated(ds, dd);
        let moved = residuals(&moved_ego, &set.translated(ds, dd), &p).unwrap();
        prop_assert_eq!(base, moved);
    }
}

#[test]
fn coincident_unit_ellipse_has_unit_residual() {
    let e = ego(vec![1.0, 2.0, 3.0], vec![0.5; 3]);
    let tau = [5.0, 0.0, 2.0, 0.5, 9.0, 0.0];
    let r = collision_f(&e, &tau, &params(1.0, 1.0)).unwrap();
    assert_eq!(r.worst_f, 1.0);
    assert_eq!(r.residual, 1.0);
    assert_eq!(r.argmax_k, 1);
}

#[test]
fn cvar_examples() {
    assert_eq!(
        r_cvar(&[0.0, 0.0, 0.0, 2.0], CvarConfig::new(0.75).unwrap()).unwrap(),
        2.0
    );
    assert_eq!(r_cvar(&[0.3; 7], CvarConfig::default()).unwrap(), 0.3);
    let res = [0.1, 0.4, 0.0, 0.9, 0.2];
    let tiny = CvarConfig::new(1e-9).unwrap();
    assert!((r_cvar(&res, tiny).unwrap() - 0.32).abs() < 1e-12);
    // Ten samples at the default level keep exactly one.
    let ten: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
    assert!((r_cvar(&ten, CvarConfig::default()).unwrap() - 0.9).abs() < 1e-12);
    assert!(r_cvar(&[], CvarConfig::default()).is_err());
}

fn line_obstacle(s0: f64, d: f64, h: usize, n: usize) -> ObstacleSampleSet {
    let rows = (0..n)
        .map(|i| (0..h).flat_map(|_| [s0 + 0.1 * i as f64, d]).collect())
        .collect();
    ObstacleSampleSet::new(rows, h, 0.1).unwrap()
}

#[test]
fn risks_add_over_obstacles() {
    let h = 10;
    let e = ego((0..h).map(|k| k as f64 * 0.4).collect(), vec![0.0; h]);
    let p = VehicleParams::default();
    let near = line_obstacle(2.0, 0.5, h, 4);
    let far = line_obstacle(500.0, 40.0, h, 4);
    let kernel = KernelConfig::new(1.0).unwrap();
    let w = vec![0.1, 0.2, 0.3, 0.4];
    let rs_near = ReducedSet::from_parts(&near, vec![0, 1, 2, 3], w.clone(), 1.0).unwrap();
    let rs_far = ReducedSet::from_parts(&far, vec![0, 1, 2, 3], w.clone(), 1.0).unwrap();

    let single = total_risk(&e, &[rs_near.clone()], &p, Some(kernel)).unwrap();
    let direct = r_mmd(&residuals(&e, &near, &p).unwrap(), &w, kernel).unwrap();
    assert!(single > 0.0);
    assert_eq!(single, direct);
    assert_eq!(
        total_risk(&e, &[rs_near.clone(), rs_far], &p, Some(kernel)).unwrap(),
        single
    );
    let triple = total_risk(
        &e,
        &[rs_near.clone(), rs_near.clone(), rs_near],
        &p,
        Some(kernel),
    )
    .unwrap();
    assert!((triple - 3.0 * single).abs() < 1e-12);
    assert!(total_risk(&e, &[], &p, None).is_err());

    for tag in RiskTag::ALL {
        let ob = ObstacleRisk::new(near.clone(), w.clone(), kernel).unwrap();
        let one = evaluate_risk(tag, &e, &[ob.clone()], &p, CvarConfig::default()).unwrap();
        let two = evaluate_risk(tag, &e, &[ob.clone(), ob], &p, CvarConfig::default()).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12, "{tag}");
    }
}

#[test]
fn all_risks_vanish_without_contact() {
    let h = 8;
    let e = ego((0..h).map(|k| k as f64).collect(), vec![0.0; h]);
    let ob = ObstacleRisk::uniform(
        line_obstacle(100.0, 0.0, h, 5),
        KernelConfig::new(0.5).unwrap(),
    );
    for tag in RiskTag::ALL {
        let r = evaluate_risk(
            tag,
            &e,
            &[ob.clone()],
            &VehicleParams::default(),
            CvarConfig::default(),
        )
        .unwrap();
        assert_eq!(r, 0.0, "{tag}");
    }
}

#[test]
fn deviation_bound_formula() {
    let b = finite_sample_bound(100, 1.0, 0.2).unwrap();
    assert!((b.deviation_bound - 0.8).abs() < 1e-12);
    assert!((b.confidence - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    let far = finite_sample_bound(1 << 40, 1.0, 0.2).unwrap();
    assert!((far.deviation_bound - 0.4).abs() < 1e-5);
    assert!((far.confidence - 1.0).abs() < 1e-12);
    assert!(finite_sample_bound(10, 0.0, 0.1).is_err());
}

#[test]
fn risk_tags_parse_and_print() {
    for tag in RiskTag::ALL {
        assert_eq!(tag.as_str().parse::<RiskTag>().unwrap(), tag);
        assert_eq!(serde_json::to_string(&tag).unwrap(), format!("\"{tag}\""));
    }
    assert!("var".parse::<RiskTag>().is_err());
}
