//! Closed-form and high-precision checks of the branching numerics and the
//! tail-bound checker.

use std::f64::consts::LN_2;

use covertime_lab::branching::{
    binomial_tail_below, certify_supercritical, certify_supercritical_with, gaussian_tail, BinomialTailQuery,
    OffspringLaw,
};
use covertime_lab::rng::WalkRng;
use covertime_lab::stats::{bound_check, TailPoint};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// `P[Bin(m, 1/2) < t]` with exact integer binomials.
fn rational_tail_below(m: u64, t: u64) -> f64 {
    let mut coeff = BigUint::one();
    let mut acc = BigUint::zero();
    for i in 0..t.min(m + 1) {
        acc += &coeff;
        coeff = coeff * (m - i) / (i + 1);
    }
    if acc.is_zero() {
        return 0.0;
    }
    let denom = BigUint::one() << (m as usize);
    // 64-bit quotient of acc / denom, then undo the shift in two halves
    let extra = 64 + denom.bits() - acc.bits();
    let q = ((acc << extra as usize) / denom).to_f64().unwrap();
    let half = (extra / 2) as i32;
    q * 2f64.powi(-half) * 2f64.powi(half - extra as i32)
}

#[test]
fn binomial_tail_matches_exact_rationals() {
    for (m, t) in [(1000u64, 450u64), (1000, 500), (1000, 1), (999, 420), (200, 60), (64, 32)] {
        let got = binomial_tail_below(&BinomialTailQuery::new(m, t as f64).unwrap()).unwrap();
        let want = rational_tail_below(m, t);
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1e-300),
            "m={m} t={t}: {got:e} vs {want:e}"
        );
    }
}

#[test]
fn fractional_thresholds_round_up_to_the_next_integer() {
    let q = BinomialTailQuery::new(1000, 449.5).unwrap();
    let want = rational_tail_below(1000, 450);
    assert!((binomial_tail_below(&q).unwrap() - want).abs() <= 1e-12 * want);
}

/// Upper normal tail by composite Simpson integration of the density.
fn simpson_tail(x: f64) -> f64 {
    let (a, b, n) = (x, x + 40.0, 400_000usize);
    let h = (b - a) / n as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn gaussian_tail_matches_numeric_integration() {
    assert!((gaussian_tail(1.959963985) - 0.025).abs() <= 1e-9);
    for x in [0.0, 0.5, 1.0, 1.959963985, 3.0, 5.0] {
        let want = simpson_tail(x);
        assert!((gaussian_tail(x) - want).abs() <= 1e-12, "x={x}: {} vs {want}", gaussian_tail(x));
    }
}

#[test]
fn clt_gap_at_level_one_hundred() {
    let (r, ell) = (0.6 * LN_2, 8);
    let exact = binomial_tail_below(&BinomialTailQuery::for_level(100, r, ell).unwrap()).unwrap();
    assert!((exact - gaussian_tail((2.0 * r * ell as f64).sqrt())).abs() <= 0.01);
}

#[test]
fn certificate_is_stable_under_the_exact_tail() {
    let r = 0.6 * LN_2;
    let gaussian = certify_supercritical(2, r, 64).unwrap().unwrap();
    let exact = certify_supercritical_with(2, r, 64, |ell| {
        binomial_tail_below(&BinomialTailQuery::for_level(50, r, ell)?)
    })
    .unwrap()
    .unwrap();
    assert_eq!(gaussian.ell, exact.ell);
    assert!(exact.mean_offspring > 1.0);
}

#[test]
fn certificate_exists_below_ln_b() {
    let cert = certify_supercritical(2, 0.5 * LN_2, 64).unwrap().unwrap();
    assert!(cert.mean_offspring > 1.0);
    for b in [3u32, 5, 10] {
        let r = 0.9 * (b as f64).ln();
        assert!(certify_supercritical(b, r, 200).unwrap().is_some(), "b={b}");
    }
}

#[test]
fn extinction_fixed_points() {
    // q = 1/4 + 3/4 q^2 has roots 1/3 and 1
    let law = OffspringLaw::parse("0:0.25,2:0.75").unwrap();
    assert!((law.extinction_probability() - 1.0 / 3.0).abs() < 1e-12);
    // q = 1/2 + 1/2 q^3: roots 1 and (sqrt 5 - 1)/2
    let law = OffspringLaw::parse("0:0.5,3:0.5").unwrap();
    assert!((law.extinction_probability() - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    let law = OffspringLaw::parse("0:0.5,2:0.5").unwrap();
    assert!(law.extinction_probability() > 0.999);
}

#[test]
fn bound_check_is_calibrated_on_exact_bernoulli_data() {
    // frequencies drawn exactly at the bound never fail the 3-sigma rule
    for seed in [1u64, 2, 3, 4, 5, 6, 7, 8] {
        let mut rng = WalkRng::new(seed);
        let replicas = 10_000u64;
        let points: Vec<TailPoint> = [0.01, 0.05, 0.2, 0.5]
            .into_iter()
            .map(|p| {
                let hits = (0..replicas).filter(|_| rng.next_f64() < p).count();
                TailPoint { x: p, frequency: hits as f64 / replicas as f64, replicas }
            })
            .collect();
        for out in bound_check(&points, |p| p) {
            assert!(out.pass, "seed {seed}: {out:?}");
        }
    }
}
