//! Synthetic tape generators and Monte-Carlo null bands.
//!
//! Two generators share a fixed draw discipline so outputs are reproducible
//! bit for bit from `(spec, seed)`: for each day, first all trade
//! timestamps are drawn (uniform over the session) and sorted, then the
//! trade-level log returns are drawn in order. The log price accumulates
//! across the whole run; days only relabel timestamps.
//!
//! - white noise: iid normal trade returns. Bucketed on any clock this
//!   stays white, which makes it the null for every band.
//! - clustering: a GARCH(1,1) conditional-variance recursion
//!   `h_t = omega + alpha * r_{t-1}^2 + beta * h_{t-1}` with normal
//!   innovations, started from the stationary variance. Persistence
//!   `alpha + beta` near one produces slowly decaying magnitude
//!   autocorrelation and heavy tails.
//!
//! Null bands are pointwise min/max envelopes of a statistic over
//! replicates; replicate `r` reseeds the generator with `seed + r`, so any
//! replicate can be regenerated in isolation. min/max is associative and
//! commutative, which keeps the envelope identical however the replicate
//! work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tape::{SessionCalendar, SymbolTape, Trade};
use crate::Real;

/// Which return process drives the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    /// iid normal trade-level log returns.
    WhiteNoise,
    /// GARCH(1,1) trade-level log returns. When `omega` is `None` it is
    /// derived as `variance * (1 - alpha - beta)` so the stationary
    /// variance matches the requested `noise_variance`.
    Clustering {
        alpha: f64,
        beta: f64,
        omega: Option<f64>,
    },
}

/// Full recipe for one synthetic symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub kind: GenKind,
    pub symbol: String,
    pub days: usize,
    pub trades_per_day: usize,
    /// Variance of the trade-level log return (stationary variance for the
    /// clustering process).
    pub noise_variance: f64,
    pub start_price: f64,
    /// Constant share size stamped on every print.
    pub size: u32,
    pub seed: u64,
}

impl GenSpec {
    pub fn white_noise(symbol: &str, days: usize, trades_per_day: usize, seed: u64) -> Self {
        GenSpec {
            kind: GenKind::WhiteNoise,
            symbol: symbol.to_string(),
            days,
            trades_per_day,
            noise_variance: 1e-4,
            start_price: 100.0,
            size: 100,
            seed,
        }
    }

    pub fn clustering(symbol: &str, days: usize, trades_per_day: usize, seed: u64) -> Self {
        GenSpec {
            kind: GenKind::Clustering {
                alpha: 0.09,
                beta: 0.90,
                omega: None,
            },
            ..GenSpec::white_noise(symbol, days, trades_per_day, seed)
        }
    }

    /// The generator recipe for replicate `r` of a band run: same
    /// parameters, seed offset by `r`.
    pub fn replicate(&self, r: u32) -> GenSpec {
        GenSpec {
            seed: self.seed.wrapping_add(r as u64),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("bad generator parameter: {0}")]
    BadParam(String),
    #[error("calendar has {got} days, spec needs {needed}")]
    CalendarTooShort { needed: usize, got: usize },
}

enum Process {
    White { sigma: f64 },
    Garch { alpha: f64, beta: f64, omega: f64, h: f64, prev_r2: f64 },
}

impl Process {
    fn next(&mut self, z: f64) -> f64 {
        match self {
            Process::White { sigma } => *sigma * z,
            Process::Garch {
                alpha,
                beta,
                omega,
                h,
                prev_r2,
            } => {
                *h = *omega + *alpha * *prev_r2 + *beta * *h;
                let r = h.sqrt() * z;
                *prev_r2 = r * r;
                r
            }
        }
    }
}

fn make_process(spec: &GenSpec) -> Result<Process, SynthError> {
    if spec.start_price <= 0.0 || !spec.start_price.is_finite() {
        return Err(SynthError::BadParam(format!(
            "start_price {} must be positive",
            spec.start_price
        )));
    }
    if !(spec.noise_variance >= 0.0) || !spec.noise_variance.is_finite() {
        return Err(SynthError::BadParam(format!(
            "noise_variance {} must be finite and non-negative",
            spec.noise_variance
        )));
    }
    match spec.kind {
        GenKind::WhiteNoise => Ok(Process::White {
            sigma: spec.noise_variance.sqrt(),
        }),
        GenKind::Clustering { alpha, beta, omega } => {
            if alpha < 0.0 || beta < 0.0 || alpha + beta >= 1.0 {
                return Err(SynthError::BadParam(format!(
                    "clustering needs alpha, beta >= 0 and alpha + beta < 1, got {alpha}, {beta}"
                )));
            }
            let omega = omega.unwrap_or(spec.noise_variance * (1.0 - alpha - beta));
            if !(omega > 0.0) {
                return Err(SynthError::BadParam(format!(
                    "clustering omega {omega} must be positive"
                )));
            }
            let h0 = omega / (1.0 - alpha - beta);
            // Start at the stationary point so the first trade is already
            // typical: h_1 = omega + alpha * h0 + beta * h0 = h0.
            Ok(Process::Garch {
                alpha,
                beta,
                omega,
                h: h0,
                prev_r2: h0,
            })
        }
    }
}

/// Generates one symbol's tape over the first `spec.days` calendar days.
pub fn generate(spec: &GenSpec, cal: &SessionCalendar) -> Result<SymbolTape, SynthError> {
    if cal.n_days() < spec.days {
        return Err(SynthError::CalendarTooShort {
            needed: spec.days,
            got: cal.n_days(),
        });
    }
    let mut process = make_process(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trades = Vec::with_capacity(spec.days * spec.trades_per_day);
    let mut ts_buf: Vec<i64> = Vec::with_capacity(spec.trades_per_day);
    let mut log_price = spec.start_price.ln();
    for &day in &cal.days()[..spec.days] {
        let open = day * crate::NS_PER_DAY + cal.open_ns;
        let close = day * crate::NS_PER_DAY + cal.close_ns;
        ts_buf.clear();
        for _ in 0..spec.trades_per_day {
            ts_buf.push(rng.gen_range(open..close));
        }
        ts_buf.sort_unstable();
        for &ts in &ts_buf {
            let z: f64 = rng.sample(StandardNormal);
            log_price += process.next(z);
            trades.push(Trade::new(ts, log_price.exp(), spec.size));
        }
    }
    Ok(SymbolTape {
        symbol: spec.symbol.clone(),
        trades,
    })
}

/// One statistic curve a band evaluator hands back per replicate: an id,
/// the grid it is sampled on, and the (possibly undefined) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatCurve<F = Real> {
    pub stat_id: String,
    pub grid: Vec<i64>,
    pub values: Vec<Option<F>>,
}

/// A pointwise min/max envelope of one statistic under the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBand<F = Real> {
    pub stat_id: String,
    pub grid: Vec<i64>,
    pub lo: Vec<Option<F>>,
    pub hi: Vec<Option<F>>,
    /// How many replicates produced a defined value at each grid point.
    pub n_defined: Vec<u32>,
    pub replicates: u32,
    pub seed: u64,
}

impl<F: Scalar> NoiseBand<F> {
    /// Band bounds at the grid point for `x`, when both are defined.
    pub fn at(&self, x: i64) -> Option<(F, F)> {
        let i = self.grid.iter().position(|&g| g == x)?;
        Some((self.lo[i]?, self.hi[i]?))
    }
}

/// Runs `eval` on `replicates` regenerations of the null spec and folds the
/// resulting curves into min/max envelopes. Every replicate must produce
/// the same set of `stat_id`s on the same grids.
pub fn noise_bands<F, E>(
    null: &GenSpec,
    cal: &SessionCalendar,
    replicates: u32,
    eval: E,
) -> Result<Vec<NoiseBand<F>>, SynthError>
where
    F: Scalar,
    E: Fn(&SymbolTape) -> Vec<StatCurve<F>> + Sync,
{
    if replicates == 0 {
        return Err(SynthError::BadParam("replicates must be positive".into()));
    }
    let per_replicate: Vec<Vec<StatCurve<F>>> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<_, SynthError> {
            let tape = generate(&null.replicate(r), cal)?;
            Ok(eval(&tape))
        })
        .collect::<Result<_, _>>()?;

    let first = &per_replicate[0];
    let mut bands: Vec<NoiseBand<F>> = first
        .iter()
        .map(|c| NoiseBand {
            stat_id: c.stat_id.clone(),
            grid: c.grid.clone(),
            lo: vec![None; c.grid.len()],
            hi: vec![None; c.grid.len()],
            n_defined: vec![0; c.grid.len()],
            replicates,
            seed: null.seed,
        })
        .collect();
    for curves in &per_replicate {
        if curves.len() != bands.len() {
            return Err(SynthError::BadParam(
                "band evaluator returned a different curve set across replicates".into(),
            ));
        }
        for (band, curve) in bands.iter_mut().zip(curves) {
            if curve.stat_id != band.stat_id || curve.grid != band.grid {
                return Err(SynthError::BadParam(format!(
                    "band evaluator changed curve {} across replicates",
                    band.stat_id
                )));
            }
            for (i, v) in curve.values.iter().enumerate() {
                let Some(v) = *v else { continue };
                band.n_defined[i] += 1;
                band.lo[i] = Some(match band.lo[i] {
                    Some(lo) => lo.min(v),
                    None => v,
                });
                band.hi[i] = Some(match band.hi[i] {
                    Some(hi) => hi.max(v),
                    None => v,
                });
            }
        }
    }
    Ok(bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use crate::tape::SessionCalendar;

    fn make_test_cal(days: usize) -> SessionCalendar {
        SessionCalendar::weekdays(19_100, days)
    }

    #[test]
    fn generation_is_deterministic() {
        let cal = make_test_cal(3);
        let spec = GenSpec::white_noise("WN", 3, 500, 42);
        let a = generate(&spec, &cal).unwrap();
        let b = generate(&spec, &cal).unwrap();
        assert_eq!(a.trades.len(), 1500);
        assert!(a
            .trades
            .iter()
            .zip(&b.trades)
            .all(|(x, y)| x.ts_ns == y.ts_ns
                && x.price.to_bits() == y.price.to_bits()
                && x.size == y.size));
        let c = generate(&GenSpec { seed: 43, ..spec }, &cal).unwrap();
        assert!(a
            .trades
            .iter()
            .zip(&c.trades)
            .any(|(x, y)| x.price.to_bits() != y.price.to_bits()));
    }

    #[test]
    fn timestamps_sorted_and_in_session() {
        let cal = make_test_cal(2);
        let tape = generate(&GenSpec::white_noise("WN", 2, 1000, 7), &cal).unwrap();
        assert!(tape
            .trades
            .windows(2)
            .all(|w| w[0].ts_ns <= w[1].ts_ns));
        assert!(tape
            .trades
            .iter()
            .all(|t| cal.in_session(t.ts_ns) && t.price > 0.0 && t.size == 100));
    }

    #[test]
    fn white_noise_matches_requested_variance() {
        let cal = make_test_cal(5);
        let tape = generate(&GenSpec::white_noise("WN", 5, 20_000, 11), &cal).unwrap();
        let rets: Vec<f64> = tape
            .trades
            .windows(2)
            .map(|w| w[1].price.ln() - w[0].price.ln())
            .collect();
        let var = stats::population_variance(&rets).unwrap();
        assert!(
            (var - 1e-4).abs() < 5e-6,
            "trade return variance {var:e} should be near 1e-4"
        );
        let k = stats::excess_kurtosis(&rets).unwrap();
        assert!(k.abs() < 0.2, "white noise excess kurtosis {k}");
    }

    #[test]
    fn clustering_is_leptokurtic_with_persistent_magnitudes() {
        let cal = make_test_cal(10);
        let tape = generate(&GenSpec::clustering("CL", 10, 20_000, 5), &cal).unwrap();
        let rets: Vec<f64> = tape
            .trades
            .windows(2)
            .map(|w| w[1].price.ln() - w[0].price.ln())
            .collect();
        let var = stats::population_variance(&rets).unwrap();
        assert!(
            (var - 1e-4).abs() < 4e-5,
            "stationary variance {var:e} should be near 1e-4"
        );
        let k = stats::excess_kurtosis(&rets).unwrap();
        assert!(k > 3.0, "clustering excess kurtosis {k} should be large");
        let abs: Vec<f64> = rets.iter().map(|r| r.abs()).collect();
        let (c1, _) = stats::acf(&[&abs], 1).unwrap();
        let (c100, _) = stats::acf(&[&abs], 100).unwrap();
        assert!(c1 > 0.05, "lag-1 magnitude autocorrelation {c1}");
        assert!(c100 > 0.02, "lag-100 magnitude autocorrelation {c100}");
        assert!(c1 > c100);
    }

    #[test]
    fn clustering_rejects_nonstationary_parameters() {
        let cal = make_test_cal(1);
        let mut spec = GenSpec::clustering("CL", 1, 10, 1);
        spec.kind = GenKind::Clustering {
            alpha: 0.3,
            beta: 0.7,
            omega: None,
        };
        assert!(matches!(
            generate(&spec, &cal),
            Err(SynthError::BadParam(_))
        ));
    }

    #[test]
    fn bands_envelope_the_replicates() {
        let cal = make_test_cal(2);
        let null = GenSpec::white_noise("NULL", 2, 400, 9);
        let eval = |tape: &SymbolTape| {
            let rets: Vec<f64> = tape
                .trades
                .windows(2)
                .map(|w| w[1].price.ln() - w[0].price.ln())
                .collect();
            let grid = vec![1i64, 2, 3];
            let values = grid
                .iter()
                .map(|&lag| stats::acf(&[&rets], lag as usize).ok().map(|(c, _)| c))
                .collect();
            vec![StatCurve {
                stat_id: "acf".into(),
                grid,
                values,
            }]
        };
        let bands = noise_bands(&null, &cal, 16, eval).unwrap();
        assert_eq!(bands.len(), 1);
        let band = &bands[0];
        assert_eq!(band.n_defined, vec![16, 16, 16]);
        for i in 0..band.grid.len() {
            let (lo, hi) = (band.lo[i].unwrap(), band.hi[i].unwrap());
            assert!(lo < hi);
            assert!(lo < 0.0 && hi > 0.0, "white noise band straddles zero");
        }
        // Each replicate's own curve sits inside the envelope.
        let tape = generate(&null.replicate(7), &cal).unwrap();
        for curve in eval(&tape) {
            for (i, v) in curve.values.iter().enumerate() {
                let v = v.unwrap();
                assert!(band.lo[i].unwrap() <= v && v <= band.hi[i].unwrap());
            }
        }
    }

    #[test]
    fn bands_are_identical_across_thread_pools() {
        let cal = make_test_cal(1);
        let null = GenSpec::white_noise("NULL", 1, 300, 3);
        let eval = |tape: &SymbolTape| {
            let rets: Vec<f64> = tape
                .trades
                .windows(2)
                .map(|w| w[1].price.ln() - w[0].price.ln())
                .collect();
            vec![StatCurve {
                stat_id: "m".into(),
                grid: vec![0],
                values: vec![stats::mean(&rets).ok()],
            }]
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| noise_bands(&null, &cal, 8, eval).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one, four);
    }
}
