use std::f64::consts::{FRAC_2_PI, PI};

use gk_core::gap::{gram_point_value, heuristic_best_cut};
use gk_core::rng;
use gk_core::*;

#[test]
fn heuristic_matches_oracle_in_the_plane() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let n = 6 + (seed as usize % 15);
        let (inst, v) = gen_gap_instance(2, n, 500 + seed).unwrap();
        let exact = brute_force_max(&inst, 24).unwrap();
        let found = heuristic_best_cut(&v, &inst, 256, seed).unwrap();
        assert!(found.value <= exact.value * (1.0 + 1e-12));
        if (found.value - exact.value).abs() <= 1e-12 * exact.value {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn projection_matches_monte_carlo_at_p16() {
    let p = 16;
    let samples = 1_000_000;
    let mut g = rng::seeded(16);
    let (mut sum, mut sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let v = rng::unit_vector(&mut g, p);
        sum += v[0].abs();
        sq += v[0] * v[0];
    }
    let mean = sum / samples as f64;
    let var = (sq / samples as f64 - mean * mean) * samples as f64 / (samples - 1) as f64;
    let se = (var / samples as f64).sqrt();
    let exact = expected_abs_projection(p).unwrap();
    assert!((mean - exact).abs() <= 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn projection_leading_order() {
    let lead = (2.0 / PI).sqrt();
    for p in 4..=4096usize {
        let e = expected_abs_projection(p).unwrap();
        let corr = p as f64 * ((p as f64).sqrt() * e - lead);
        assert!((-2.0..=2.0).contains(&corr), "p {p}: {corr}");
    }
}

#[test]
fn identity_ties_projection_to_gamma() {
    for p in (1..=10_000usize).step_by(37) {
        let e = expected_abs_projection(p).unwrap();
        assert!((PI * p as f64 * gamma(p).unwrap() * e * e - 2.0).abs() <= 1e-10);
    }
}

#[test]
fn gram_point_is_a_lower_bound_on_the_record() {
    for seed in 0..10u64 {
        let (inst, v) = gen_gap_instance(3, 27, seed).unwrap();
        let s = &v * v.transpose();
        for i in 0..27 {
            assert!((s[(i, i)] - 1.0).abs() < 1e-14);
        }
        let gram = gram_point_value(&inst, &v);
        assert!(gram > 0.0);
        let rec = empirical_gap(3, None, seed, &SolverConfig::default(), 256).unwrap();
        assert!(rec.sdp_value >= gram);
        assert_eq!(rec.method, GapMethod::Heuristic);
    }
}

#[test]
fn small_plane_instances_sit_between_the_bounds() {
    let seeds: Vec<u64> = (0..50).collect();
    let recs = gap_sweep(&[2], Some(8), &seeds, &SolverConfig::default(), 64).unwrap();
    for r in &recs {
        assert_eq!(r.method, GapMethod::Oracle);
        assert!(r.ratio > 0.0 && r.ratio <= 1.0 + 1e-9);
    }
    let mean = recs.iter().map(|r| r.ratio).sum::<f64>() / recs.len() as f64;
    assert!(mean > FRAC_2_PI && mean < 1.0, "{mean}");
}
