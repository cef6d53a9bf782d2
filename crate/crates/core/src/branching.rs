//! Embedded branching process: binomial and Gaussian tails, the
//! supercriticality certificate, and Galton-Watson survival.

use rand_distr::{Binomial, Distribution};

use crate::error::{LabError, Result};
use crate::excursions::SpecialClassification;
use crate::rng::WalkRng;

/// Largest trial count summed exactly by [`binomial_tail_below`].
pub const MAX_EXACT_TRIALS: u64 = 10_000_000;
/// Generation size beyond which [`simulate_gw_survival`] gives up.
pub const MAX_POPULATION: u64 = 1 << 62;

/// Offspring distribution of a Galton-Watson process.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    support: Vec<(u64, f64)>,
}

impl OffspringLaw {
    pub fn new(support: Vec<(u64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(LabError::usage("offspring law needs a nonempty support"));
        }
        if support.iter().any(|&(_, p)| !(p.is_finite() && p >= 0.0)) {
            return Err(LabError::usage("offspring probabilities must be finite and nonnegative"));
        }
        let total: f64 = support.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::usage(format!("offspring probabilities sum to {total}, not 1")));
        }
        let mut counts: Vec<u64> = support.iter().map(|&(c, _)| c).collect();
        counts.sort_unstable();
        counts.dedup();
        if counts.len() != support.len() {
            return Err(LabError::usage("offspring counts must be distinct"));
        }
        Ok(OffspringLaw { support })
    }

    /// Parses `count:prob,count:prob,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let support = text
            .split(',')
            .map(|item| {
                let (c, p) = item
                    .split_once(':')
                    .ok_or_else(|| LabError::usage(format!("law entry `{item}` is not count:prob")))?;
                let c = c.trim().parse::<u64>().map_err(|e| LabError::usage(format!("law count `{c}`: {e}")))?;
                let p = p.trim().parse::<f64>().map_err(|e| LabError::usage(format!("law probability `{p}`: {e}")))?;
                Ok((c, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(support)
    }

    pub fn support(&self) -> &[(u64, f64)] {
        &self.support
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(c, p)| c as f64 * p).sum()
    }

    /// Probability generating function `f(s) = sum p_c s^c`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.support.iter().map(|&(c, p)| p * s.powi(c as i32)).sum()
    }

    /// Smallest fixed point of the generating function on `[0, 1]`, reached
    /// by iterating `q <- f(q)` from 0.
    pub fn extinction_probability(&self) -> f64 {
        let mut q = 0.0;
        for _ in 0..1_000_000 {
            let next = self.pgf(q);
            if (next - q).abs() < 1e-15 {
                return next;
            }
            q = next;
        }
        q
    }
}

/// `P[X < threshold]` for `X ~ Bin(trials, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialTailQuery {
    pub trials: u64,
    pub threshold: f64,
}

impl BinomialTailQuery {
    pub fn new(trials: u64, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0 && threshold <= trials as f64) {
            return Err(LabError::usage(format!(
                "threshold {threshold} outside [0, {trials}]"
            )));
        }
        Ok(BinomialTailQuery { trials, threshold })
    }

    /// Trials `round(r ell (j^2 + (j+1)^2))`, threshold `r ell j^2`.
    pub fn for_level(j: u32, r: f64, ell: u32) -> Result<Self> {
        let j = j as f64;
        let scale = r * ell as f64;
        let trials = (scale * (j * j + (j + 1.0) * (j + 1.0))).round();
        if !(trials.is_finite() && trials >= 0.0) {
            return Err(LabError::usage("binomial trial count is not a finite nonnegative number"));
        }
        Self::new(trials as u64, scale * j * j)
    }
}

/// Exact `P[X < threshold]` for `X ~ Bin(m, 1/2)`.
///
/// Terms are generated by the ratio recurrence outward from the mode, scaled
/// so the mode term is 1, and summed with Neumaier compensation; dividing the
/// partial sum by the total avoids under- and overflow for large `m`.
pub fn binomial_tail_below(q: &BinomialTailQuery) -> Result<f64> {
    let m = q.trials;
    if m > MAX_EXACT_TRIALS {
        return Err(LabError::capacity(format!(
            "exact binomial tail is limited to {MAX_EXACT_TRIALS} trials, got {m}"
        )));
    }
    // X < t  <=>  X <= ceil(t) - 1
    let last = q.threshold.ceil() as i64 - 1;
    if last < 0 {
        return Ok(0.0);
    }
    if last as u64 >= m {
        return Ok(1.0);
    }
    let last = last as u64;
    let mode = m / 2;
    let mut below = Neumaier::default();
    let mut total = Neumaier::default();
    let mut add = |x: u64, term: f64| {
        total.add(term);
        if x <= last {
            below.add(term);
        }
    };
    add(mode, 1.0);
    // downward: t(x-1) = t(x) * x / (m - x + 1)
    let mut term = 1.0;
    let mut x = mode;
    while x > 0 {
        term *= x as f64 / (m - x + 1) as f64;
        x -= 1;
        if term < f64::MIN_POSITIVE {
            break;
        }
        add(x, term);
    }
    // upward: t(x+1) = t(x) * (m - x) / (x + 1)
    let mut term = 1.0;
    let mut x = mode;
    while x < m {
        term *= (m - x) as f64 / (x + 1) as f64;
        x += 1;
        if term < f64::MIN_POSITIVE {
            break;
        }
        add(x, term);
    }
    Ok((below.sum() / total.sum()).clamp(0.0, 1.0))
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Upper tail `P[Z > x]` of the standard normal, `erfc(x / sqrt 2) / 2`.
///
/// `erfc` comes from `libm` (the FreeBSD/Sun rational approximations, under
/// one ulp), so the relative error stays far below `1e-10` on `[0, 8]`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Smallest level spacing for which special vertices dominate a
/// supercritical branching process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupercriticalCertificate {
    pub ell: u32,
    /// Per-link survival probability used for the certificate.
    pub tail: f64,
    /// `b^ell * tail`, above 1.
    pub mean_offspring: f64,
}

/// Scans `ell = 1..=ell_max` for the first `ell` with
/// `P[Z > sqrt(2 r ell)] > b^-ell`.
pub fn certify_supercritical(b: u32, r: f64, ell_max: u32) -> Result<Option<SupercriticalCertificate>> {
    certify_supercritical_with(b, r, ell_max, |ell| Ok(gaussian_tail((2.0 * r * ell as f64).sqrt())))
}

/// [`certify_supercritical`] with the Gaussian limit replaced by an
/// arbitrary per-`ell` tail probability.
pub fn certify_supercritical_with(
    b: u32,
    r: f64,
    ell_max: u32,
    mut tail: impl FnMut(u32) -> Result<f64>,
) -> Result<Option<SupercriticalCertificate>> {
    if b < 2 {
        return Err(LabError::usage(format!("branching factor must be >= 2, got {b}")));
    }
    let log_b = (b as f64).ln();
    if !(r > 0.0 && r < log_b) {
        return Err(LabError::usage(format!("need 0 < r < ln b = {log_b}, got {r}")));
    }
    for ell in 1..=ell_max {
        let p = tail(ell)?;
        let ln_threshold = -(ell as f64) * log_b;
        if p > 0.0 && p.ln() > ln_threshold {
            return Ok(Some(SupercriticalCertificate {
                ell,
                tail: p,
                mean_offspring: (p.ln() - ln_threshold).exp(),
            }));
        }
    }
    Ok(None)
}

/// Survival tally of a Galton-Watson simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwSurvival {
    pub survived: u64,
    pub replicas: u64,
    pub generations: u32,
}

impl GwSurvival {
    pub fn frequency(&self) -> f64 {
        self.survived as f64 / self.replicas as f64
    }

    pub fn std_error(&self) -> f64 {
        let p = self.frequency();
        (p * (1.0 - p) / self.replicas as f64).sqrt()
    }
}

/// Whether one Galton-Watson process started from a single individual is
/// alive at `generations`. Generation sizes are sampled as multinomial
/// splits of the current population, so cost does not grow with its size.
pub fn gw_survives(law: &OffspringLaw, generations: u32, seed: u64) -> Result<bool> {
    let mut rng = WalkRng::new(seed);
    let mut population: u64 = 1;
    for _ in 0..generations {
        let mut left = population;
        let mut p_left = 1.0;
        let mut next: u64 = 0;
        for (i, &(count, p)) in law.support().iter().enumerate() {
            if left == 0 {
                break;
            }
            let parents = if i + 1 == law.support().len() || p >= p_left {
                left
            } else {
                Binomial::new(left, (p / p_left).clamp(0.0, 1.0))
                    .expect("probability clamped to [0, 1]")
                    .sample(&mut RngAdapter(&mut rng))
            };
            left -= parents;
            p_left -= p;
            next = parents
                .checked_mul(count)
                .and_then(|c| next.checked_add(c))
                .filter(|&c| c <= MAX_POPULATION)
                .ok_or_else(|| LabError::capacity(format!("population exceeds {MAX_POPULATION}")))?;
        }
        population = next;
        if population == 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fraction of `replicas` independent processes alive at `generations`.
pub fn simulate_gw_survival(
    law: &OffspringLaw,
    generations: u32,
    replicas: u64,
    master_seed: u64,
) -> Result<GwSurvival> {
    if generations == 0 {
        return Err(LabError::usage("generations must be >= 1"));
    }
    if replicas == 0 {
        return Err(LabError::usage("replicas must be >= 1"));
    }
    let mut survived = 0;
    for i in 0..replicas {
        if gw_survives(law, generations, crate::rng::replica_seed(master_seed, i))? {
            survived += 1;
        }
    }
    Ok(GwSurvival { survived, replicas, generations })
}

/// Bridges [`WalkRng`] to `rand` distributions.
struct RngAdapter<'a>(&'a mut WalkRng);

impl rand::RngCore for RngAdapter<'_> {
    fn next_u32(&mut self) -> u32 {
        (self.0.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.0.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Special vertices linked across jumps of `2 ell` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentLink {
    /// Upper level of the link (closer to the root).
    pub parent_level: u32,
    pub child_level: u32,
    pub special_parents: usize,
    /// Special vertices on `child_level` whose ancestor on `parent_level` is special.
    pub linked_children: usize,
}

impl DescentLink {
    /// Empirical mean offspring of the embedded process; `None` without parents.
    pub fn mean_offspring(&self) -> Option<f64> {
        (self.special_parents > 0).then(|| self.linked_children as f64 / self.special_parents as f64)
    }
}

/// Counts special-vertex descent between levels `2 ell` apart, the
/// branching structure the lower-bound argument dominates. Diagnostic only.
pub fn special_descent(cls: &SpecialClassification, b: u32) -> Vec<DescentLink> {
    let mut links = Vec::new();
    for child in &cls.levels {
        // classified levels are ell apart, so j + 2 is 2 ell closer to the root
        let Some(parent) = cls.levels.iter().find(|l| l.j == child.j + 2) else {
            continue;
        };
        let up = child.level - parent.level;
        let linked = child
            .special
            .iter()
            .filter(|&&w| {
                let mut a = w;
                for _ in 0..up {
                    a = (a - 1) / b as usize;
                }
                parent.special.binary_search(&a).is_ok()
            })
            .count();
        links.push(DescentLink {
            parent_level: parent.level,
            child_level: child.level,
            special_parents: parent.special.len(),
            linked_children: linked,
        });
    }
    links
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_tail_examples() {
        let q = BinomialTailQuery::new(10, 5.0).unwrap();
        assert!((binomial_tail_below(&q).unwrap() - 0.376953125).abs() < 1e-15);
        let q = BinomialTailQuery::new(4, 0.0).unwrap();
        assert_eq!(binomial_tail_below(&q).unwrap(), 0.0);
        let q = BinomialTailQuery::new(4, 4.0).unwrap();
        assert!((binomial_tail_below(&q).unwrap() - 15.0 / 16.0).abs() < 1e-15);
        let q = BinomialTailQuery::new(4, 3.5).unwrap();
        assert!((binomial_tail_below(&q).unwrap() - 15.0 / 16.0).abs() < 1e-15);
        assert!(BinomialTailQuery::new(4, 5.0).is_err());
        assert!(binomial_tail_below(&BinomialTailQuery { trials: MAX_EXACT_TRIALS + 1, threshold: 1.0 }).is_err());
    }

    #[test]
    fn binomial_tail_small_cases_by_enumeration() {
        for m in 0u64..=20 {
            let pmf: Vec<f64> = (0..=m)
                .map(|x| {
                    let c: f64 = (0..x).map(|i| (m - i) as f64 / (i + 1) as f64).product();
                    c / 2f64.powi(m as i32)
                })
                .collect();
            for t2 in 0..=2 * m {
                let t = t2 as f64 / 2.0;
                let expected: f64 = (0..=m).filter(|&x| (x as f64) < t).map(|x| pmf[x as usize]).sum();
                let got = binomial_tail_below(&BinomialTailQuery::new(m, t).unwrap()).unwrap();
                assert!((got - expected).abs() < 1e-13, "m={m} t={t}");
            }
        }
    }

    #[test]
    fn level_query_rounds_trials() {
        let q = BinomialTailQuery::for_level(3, 0.5, 2).unwrap();
        assert_eq!(q.trials, 25);
        assert_eq!(q.threshold, 9.0);
    }

    #[test]
    fn gaussian_tail_values() {
        assert_eq!(gaussian_tail(0.0), 0.5);
        assert!((gaussian_tail(1.959963984540054) - 0.025).abs() < 1e-12);
        for i in 0..=60 {
            let x = i as f64 / 10.0;
            assert!((gaussian_tail(x) + gaussian_tail(-x) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn certificate_preconditions_and_existence() {
        let ln2 = 2f64.ln();
        assert!(certify_supercritical(2, ln2, 64).is_err());
        assert!(certify_supercritical(2, 0.9, 64).is_err());
        let cert = certify_supercritical(2, 0.5 * ln2, 64).unwrap().unwrap();
        assert_eq!(cert.ell, 5);
        assert!(cert.mean_offspring > 1.0);
        assert_eq!(certify_supercritical(2, 0.6 * ln2, 3).unwrap(), None);
    }

    #[test]
    fn offspring_law_validation_and_fixed_point() {
        assert!(OffspringLaw::new(vec![(0, 0.5), (2, 0.4)]).is_err());
        assert!(OffspringLaw::new(vec![(0, -0.5), (2, 1.5)]).is_err());
        assert!(OffspringLaw::new(vec![]).is_err());
        assert!(OffspringLaw::parse("0:0.25;2:0.75").is_err());
        let law = OffspringLaw::parse("0:0.25, 2:0.75").unwrap();
        assert_eq!(law.mean(), 1.5);
        assert!((law.extinction_probability() - 1.0 / 3.0).abs() < 1e-12);
        let critical = OffspringLaw::parse("0:0.5,2:0.5").unwrap();
        assert!(critical.extinction_probability() > 0.999);
    }

    #[test]
    fn deterministic_law_always_survives() {
        let law = OffspringLaw::new(vec![(2, 1.0)]).unwrap();
        for g in [1, 10, 40] {
            assert_eq!(simulate_gw_survival(&law, g, 50, 1).unwrap().frequency(), 1.0);
        }
        let explosive = OffspringLaw::new(vec![(1 << 20, 1.0)]).unwrap();
        assert!(matches!(simulate_gw_survival(&explosive, 4, 1, 1), Err(LabError::Capacity(_))));
        assert!(simulate_gw_survival(&law, 0, 1, 1).is_err());
    }

    #[test]
    fn critical_law_dies_out() {
        let law = OffspringLaw::parse("0:0.5,2:0.5").unwrap();
        let early = simulate_gw_survival(&law, 5, 20_000, 3).unwrap().frequency();
        let late = simulate_gw_survival(&law, 200, 20_000, 3).unwrap().frequency();
        // P[alive at g] ~ 2/g for the critical binary law
        assert!(late < early);
        assert!(late < 0.03, "{late}");
    }
}
