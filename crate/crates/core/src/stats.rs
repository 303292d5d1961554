//! Scalar estimators.
//!
//! Conventions shared by every estimator here and relied on by the fact
//! analyzers:
//!
//! - all moments are population moments (divide by `n`, never `n - 1`);
//! - every reduction goes through the compensated sums in [`crate::numeric`];
//! - quantiles use the linear-interpolation convention (type 7): for a sorted
//!   sample of size `n`, level `q` sits at fractional rank `h = (n - 1) q`;
//! - correlation-style estimators report the pair count they actually used.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{sum, sum_by};
use crate::scalar::Scalar;

/// Estimator failure modes. These are data conditions, not bugs: callers
/// (the fact analyzers) turn them into gaps or indeterminate verdicts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance input")]
    ZeroVariance,
    #[error("zero mean input")]
    ZeroMean,
    #[error("quantile level {0} outside [0, 1]")]
    QuantileRange(f64),
    #[error("OHLC bucket violates high/low ordering or positivity")]
    BadOhlc,
    #[error("fewer than 2 positive points in fit range")]
    FitRange,
}

pub type Result<T> = std::result::Result<T, StatsError>;

// ===== Moments =====

/// Arithmetic mean.
pub fn mean<F: Scalar>(xs: &[F]) -> Result<F> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(sum(xs) / F::from_count(xs.len()))
}

/// Population variance (second central moment).
pub fn population_variance<F: Scalar>(xs: &[F]) -> Result<F> {
    let m = mean(xs)?;
    Ok(sum_by(xs, |x| (x - m) * (x - m)) / F::from_count(xs.len()))
}

/// Population standard deviation.
pub fn population_stddev<F: Scalar>(xs: &[F]) -> Result<F> {
    population_variance(xs).map(F::sqrt)
}

/// Population skewness `m3 / m2^(3/2)`.
///
/// Needs at least 4 observations and nonzero variance.
pub fn skewness<F: Scalar>(xs: &[F]) -> Result<F> {
    let (m2, m3, _) = central_moments(xs)?;
    if m2 <= F::zero() {
        return Err(StatsError::ZeroVariance);
    }
    Ok(m3 / m2.powf(F::from_f64_lossy(1.5)))
}

/// Population excess kurtosis `m4 / m2^2 - 3`.
///
/// Needs at least 4 observations and nonzero variance.
pub fn excess_kurtosis<F: Scalar>(xs: &[F]) -> Result<F> {
    let (m2, _, m4) = central_moments(xs)?;
    if m2 <= F::zero() {
        return Err(StatsError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - F::from_f64_lossy(3.0))
}

fn central_moments<F: Scalar>(xs: &[F]) -> Result<(F, F, F)> {
    if xs.len() < 4 {
        return Err(StatsError::TooFew {
            needed: 4,
            got: xs.len(),
        });
    }
    let m = mean(xs)?;
    let n = F::from_count(xs.len());
    let m2 = sum_by(xs, |x| (x - m) * (x - m)) / n;
    let m3 = sum_by(xs, |x| {
        let d = x - m;
        d * d * d
    }) / n;
    let m4 = sum_by(xs, |x| {
        let d = x - m;
        let d2 = d * d;
        d2 * d2
    }) / n;
    Ok((m2, m3, m4))
}

// ===== Correlation =====

/// Pearson correlation of two equal-length samples (two-pass, centered).
pub fn pearson<F: Scalar>(xs: &[F], ys: &[F]) -> Result<F> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (sxx, syy, sxy) = centered_comoments(xs, ys, mx, my);
    finish_corr(sxx, syy, sxy)
}

/// Pooled Pearson correlation over pre-aligned slice pairs.
///
/// Each `(xs, ys)` entry contributes the pairs `(xs[i], ys[i])`; means are
/// taken over the pooled set, so this is one correlation over all pairs, not
/// an average of per-segment correlations. Used for lag statistics where
/// pairs must never span a day boundary: the caller passes one shifted slice
/// pair per day.
pub fn pooled_corr<F: Scalar>(pairs: &[(&[F], &[F])]) -> Result<(F, u64)> {
    let mut n = 0usize;
    let mut sx = F::zero();
    let mut sy = F::zero();
    for &(xs, ys) in pairs {
        if xs.len() != ys.len() {
            return Err(StatsError::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        n += xs.len();
        sx += sum(xs);
        sy += sum(ys);
    }
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let nf = F::from_count(n);
    let (mx, my) = (sx / nf, sy / nf);
    let mut sxx = F::zero();
    let mut syy = F::zero();
    let mut sxy = F::zero();
    for &(xs, ys) in pairs {
        let (a, b, c) = centered_comoments(xs, ys, mx, my);
        sxx += a;
        syy += b;
        sxy += c;
    }
    finish_corr(sxx, syy, sxy).map(|r| (r, n as u64))
}

/// Pooled autocorrelation at `lag` over day segments; pairs never cross a
/// segment boundary. Returns the correlation and the pair count
/// `sum(max(0, len - lag))`.
pub fn acf<F: Scalar>(segments: &[&[F]], lag: usize) -> Result<(F, u64)> {
    if lag == 0 {
        // Correlation of a series with itself; defined whenever variance is.
        let pairs: Vec<(&[F], &[F])> = segments.iter().map(|s| (*s, *s)).collect();
        return pooled_corr(&pairs);
    }
    let pairs: Vec<(&[F], &[F])> = segments
        .iter()
        .filter(|s| s.len() > lag)
        .map(|s| (&s[..s.len() - lag], &s[lag..]))
        .collect();
    pooled_corr(&pairs)
}

fn finish_corr<F: Scalar>(sxx: F, syy: F, sxy: F) -> Result<F> {
    if sxx <= F::zero() || syy <= F::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-F::one()).min(F::one()))
}

/// Fused pairwise reduction of `sum (x-mx)^2`, `sum (y-my)^2`,
/// `sum (x-mx)(y-my)` in one memory pass.
fn centered_comoments<F: Scalar>(xs: &[F], ys: &[F], mx: F, my: F) -> (F, F, F) {
    const BLOCK: usize = 128;
    debug_assert_eq!(xs.len(), ys.len());
    if xs.len() <= BLOCK {
        let mut sxx = F::zero();
        let mut syy = F::zero();
        let mut sxy = F::zero();
        for (&x, &y) in xs.iter().zip(ys) {
            let dx = x - mx;
            let dy = y - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        (sxx, syy, sxy)
    } else {
        let mid = xs.len() / 2;
        let (a1, b1, c1) = centered_comoments(&xs[..mid], &ys[..mid], mx, my);
        let (a2, b2, c2) = centered_comoments(&xs[mid..], &ys[mid..], mx, my);
        (a1 + a2, b1 + b2, c1 + c2)
    }
}

// ===== Quantiles =====

/// Linear-interpolation quantile (type 7) at level `q` in `[0, 1]`.
///
/// Selection-based: `O(n)` expected, no full sort. The input order is
/// irrelevant; NaNs are not supported.
pub fn quantile<F: Scalar>(xs: &[F], q: f64) -> Result<F> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::QuantileRange(q));
    }
    let n = xs.len();
    let h = (n - 1) as f64 * q;
    let k = h.floor() as usize;
    let frac = h - k as f64;
    let mut buf = xs.to_vec();
    let (_, kth, above) =
        buf.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let kv = *kth;
    if frac == 0.0 || k + 1 >= n {
        return Ok(kv);
    }
    let next = above
        .iter()
        .copied()
        .fold(F::infinity(), |acc, x| if x < acc { x } else { acc });
    Ok(kv + F::from_f64_lossy(frac) * (next - kv))
}

// ===== Dispersion of counts =====

/// Fano factor of per-window event counts: population variance over mean.
///
/// Needs at least 2 windows and a nonzero mean count. Equals 1 for Poisson
/// counts; above 1 signals burstiness.
pub fn fano<F: Scalar>(counts: &[u64]) -> Result<F> {
    if counts.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: counts.len(),
        });
    }
    let xs: Vec<F> = counts
        .iter()
        .map(|&c| F::from_f64_lossy(c as f64))
        .collect();
    let m = mean(&xs)?;
    if m <= F::zero() {
        return Err(StatsError::ZeroMean);
    }
    Ok(population_variance(&xs)? / m)
}

// ===== Range volatility =====

/// Rogers-Satchell volatility of one OHLC bucket:
/// `sqrt(ln(H/O) ln(H/C) + ln(L/O) ln(L/C))`.
///
/// Requires `0 < L <= min(O, C)` and `H >= max(O, C)`, which makes both
/// products nonnegative. Drift-free: a bucket whose price moves
/// monotonically from open to close (`O = L`, `C = H`) scores exactly 0.
pub fn rogers_satchell<F: Scalar>(o: F, h: F, l: F, c: F) -> Result<F> {
    if l <= F::zero() {
        return Err(StatsError::BadOhlc);
    }
    rogers_satchell_log(o.ln(), h.ln(), l.ln(), c.ln())
}

/// Rogers-Satchell volatility from log prices:
/// `sqrt((h-o)(h-c) + (l-o)(l-c))` with `o,h,l,c` already in log space.
pub fn rogers_satchell_log<F: Scalar>(o: F, h: F, l: F, c: F) -> Result<F> {
    if h < o || h < c || l > o || l > c {
        return Err(StatsError::BadOhlc);
    }
    Ok(((h - o) * (h - c) + (l - o) * (l - c)).sqrt())
}

// ===== Power-law fit =====

/// Ordinary least squares line through `(ln x, ln y)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<F> {
    /// Decay exponent, the negated log-log slope: `y ~ x^(-beta)`.
    pub beta: F,
    /// Intercept of the fitted line in log-log space (`ln y` at `ln x = 0`).
    pub intercept: F,
    /// First grid value actually used.
    pub fit_lo: i64,
    /// Last grid value actually used (may be below the requested ceiling if
    /// the positive prefix ended early).
    pub fit_hi: i64,
    /// Squared correlation of the fitted line.
    pub r_squared: F,
    /// Number of points fitted.
    pub n_points: usize,
}

/// Fits `ln y = intercept - beta ln x` over the grid points inside
/// `[lo, hi]`.
///
/// Only the largest prefix of strictly positive, present values is used; the
/// first gap or nonpositive value truncates the range (power laws live in
/// log space, so later points are unusable anyway). At least 2 points must
/// survive.
pub fn loglog_fit<F: Scalar>(
    grid: &[i64],
    values: &[Option<F>],
    lo: i64,
    hi: i64,
) -> Result<PowerLawFit<F>> {
    if grid.len() != values.len() {
        return Err(StatsError::LengthMismatch {
            left: grid.len(),
            right: values.len(),
        });
    }
    let mut lx: Vec<F> = Vec::new();
    let mut ly: Vec<F> = Vec::new();
    let mut used: Vec<i64> = Vec::new();
    for (&g, v) in grid.iter().zip(values) {
        if g < lo {
            continue;
        }
        if g > hi {
            break;
        }
        match v {
            Some(y) if *y > F::zero() && g > 0 => {
                lx.push(F::from_f64_lossy(g as f64).ln());
                ly.push(y.ln());
                used.push(g);
            }
            _ => break,
        }
    }
    if lx.len() < 2 {
        return Err(StatsError::FitRange);
    }
    let mx = mean(&lx)?;
    let my = mean(&ly)?;
    let (sxx, syy, sxy) = centered_comoments(&lx, &ly, mx, my);
    if sxx <= F::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let slope = sxy / sxx;
    let r_squared = if syy <= F::zero() {
        // A perfectly flat positive curve: the fit is exact with slope 0.
        F::one()
    } else {
        let r = sxy / (sxx * syy).sqrt();
        (r * r).min(F::one())
    };
    Ok(PowerLawFit {
        beta: -slope,
        intercept: my - slope * mx,
        fit_lo: used[0],
        fit_hi: *used.last().expect("nonempty"),
        r_squared,
        n_points: lx.len(),
    })
}
