//! Replica summaries, trend diagnostics and tail-bound checks.

use serde::Serialize;

use crate::error::{LabError, Result};

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.96;

/// Correctly rounded sum of `xs` (Shewchuk's exact partials), so the result
/// does not depend on the order of the inputs.
pub fn exact_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // half-way correction
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub n_replicas: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
}

impl EstimatorSummary {
    pub fn ci_width(&self) -> f64 {
        self.ci95.1 - self.ci95.0
    }

    /// CI width divided by `|mean|`.
    pub fn relative_ci_width(&self) -> f64 {
        self.ci_width() / self.mean.abs()
    }

    /// `(mean - reference) / std_error`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.std_error
    }
}

pub fn summarize(samples: &[f64]) -> Result<EstimatorSummary> {
    if samples.len() < 2 {
        return Err(LabError::usage(format!(
            "summaries need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(LabError::usage("samples must be finite"));
    }
    let n = samples.len() as f64;
    let mean = exact_sum(samples.iter().copied()) / n;
    let variance = exact_sum(samples.iter().map(|&x| (x - mean) * (x - mean))) / (n - 1.0);
    let std_error = (variance / n).sqrt();
    Ok(EstimatorSummary {
        n_replicas: samples.len(),
        mean,
        variance,
        std_error,
        ci95: (mean - Z95 * std_error, mean + Z95 * std_error),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendPoint {
    pub size: f64,
    pub summary: EstimatorSummary,
}

/// Normalised statistic summarised at increasing sizes, with its limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSeries {
    pub points: Vec<TrendPoint>,
    pub target: f64,
}

impl TrendSeries {
    pub fn new(points: Vec<TrendPoint>, target: f64) -> Result<Self> {
        if points.windows(2).any(|w| w[0].size.partial_cmp(&w[1].size) != Some(std::cmp::Ordering::Less)) {
            return Err(LabError::usage("trend sizes must be strictly increasing"));
        }
        Ok(TrendSeries { points, target })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Improving,
    Flat,
    Diverging,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Improving => "improving",
            Verdict::Flat => "flat",
            Verdict::Diverging => "diverging",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub verdict: Verdict,
    /// `|mean - target|` per point.
    pub distances: Vec<f64>,
    /// CI width over `|mean|` per point.
    pub relative_ci_widths: Vec<f64>,
}

/// Improving: the largest size is no farther from the target than the
/// smallest and its relative CI width is no larger. Diverging: strictly
/// farther. Flat: anything else.
pub fn trend_check(series: &TrendSeries) -> Result<TrendReport> {
    if series.points.len() < 3 {
        return Err(LabError::usage(format!(
            "trend checks need at least 3 points, got {}",
            series.points.len()
        )));
    }
    let distances: Vec<f64> = series.points.iter().map(|p| (p.summary.mean - series.target).abs()).collect();
    let widths: Vec<f64> = series.points.iter().map(|p| p.summary.relative_ci_width()).collect();
    let (first, last) = (distances[0], distances[distances.len() - 1]);
    let narrowed = widths[widths.len() - 1] <= widths[0];
    let verdict = if last <= first && narrowed {
        Verdict::Improving
    } else if last > first {
        Verdict::Diverging
    } else {
        Verdict::Flat
    };
    Ok(TrendReport { verdict, distances, relative_ci_widths: widths })
}

/// Empirical tail frequency at parameter `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub x: f64,
    pub frequency: f64,
    pub replicas: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundOutcome {
    pub x: f64,
    pub frequency: f64,
    pub bound: f64,
    /// `bound - frequency`.
    pub margin: f64,
    pub pass: bool,
}

/// Passes a point when `frequency <= bound(x) + 3 sqrt(f (1 - f) / N)`.
pub fn bound_check(points: &[TailPoint], bound: impl Fn(f64) -> f64) -> Vec<BoundOutcome> {
    points
        .iter()
        .map(|p| {
            let b = bound(p.x);
            let se = (p.frequency * (1.0 - p.frequency) / p.replicas as f64).sqrt();
            BoundOutcome {
                x: p.x,
                frequency: p.frequency,
                bound: b,
                margin: b - p.frequency,
                pass: p.frequency <= b + 3.0 * se,
            }
        })
        .collect()
}
