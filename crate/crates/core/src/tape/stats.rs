//! Descriptive tape statistics: per-day trade counts and intraday
//! interarrival moments, the two tables a tape health check needs.

use serde::{Deserialize, Serialize};

use super::{SessionCalendar, SymbolTape, Tape};
use crate::stats::{mean, population_stddev, quantile};

/// Moments of the within-day gaps between consecutive trades, in
/// nanoseconds. Gaps never span a day boundary. `min_ns` is frequently 0 on
/// real tapes: distinct prints share a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterarrivalStats {
    pub n_gaps: u64,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub stddev_ns: f64,
    pub min_ns: i64,
    pub max_ns: i64,
}

/// Per-symbol descriptive statistics over a trading calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolStats {
    pub symbol: String,
    /// Trades on calendar days (trades outside the calendar are ignored).
    pub total_trades: u64,
    /// Calendar days with at least one trade.
    pub active_days: usize,
    pub mean_trades_per_day: f64,
    pub min_trades_per_day: u64,
    pub max_trades_per_day: u64,
    /// `None` when the symbol has fewer than two trades on some day total.
    pub interarrival: Option<InterarrivalStats>,
}

/// Computes [`SymbolStats`] for every symbol, in symbol order. Per-day
/// counts run over all calendar days, so a symbol missing a day shows
/// `min_trades_per_day = 0`.
pub fn tape_stats(tape: &Tape, cal: &SessionCalendar) -> Vec<SymbolStats> {
    tape.symbols.iter().map(|s| symbol_stats(s, cal)).collect()
}

fn symbol_stats(sym: &SymbolTape, cal: &SessionCalendar) -> SymbolStats {
    let mut per_day = vec![0u64; cal.n_days()];
    let mut gaps: Vec<f64> = Vec::new();
    let mut min_ns = i64::MAX;
    let mut max_ns = i64::MIN;
    let mut prev: Option<(usize, i64)> = None;
    for t in &sym.trades {
        let Some(day) = cal.day_index(t.epoch_day()) else {
            prev = None;
            continue;
        };
        per_day[day] += 1;
        if let Some((pd, pts)) = prev {
            if pd == day {
                let gap = t.ts_ns - pts;
                gaps.push(gap as f64);
                min_ns = min_ns.min(gap);
                max_ns = max_ns.max(gap);
            }
        }
        prev = Some((day, t.ts_ns));
    }
    let total: u64 = per_day.iter().sum();
    let interarrival = if gaps.is_empty() {
        None
    } else {
        Some(InterarrivalStats {
            n_gaps: gaps.len() as u64,
            mean_ns: mean(&gaps).expect("nonempty"),
            median_ns: quantile(&gaps, 0.5).expect("nonempty"),
            stddev_ns: population_stddev(&gaps).expect("nonempty"),
            min_ns,
            max_ns,
        })
    };
    SymbolStats {
        symbol: sym.symbol.clone(),
        total_trades: total,
        active_days: per_day.iter().filter(|&&c| c > 0).count(),
        mean_trades_per_day: if per_day.is_empty() {
            0.0
        } else {
            total as f64 / per_day.len() as f64
        },
        min_trades_per_day: per_day.iter().copied().min().unwrap_or(0),
        max_trades_per_day: per_day.iter().copied().max().unwrap_or(0),
        interarrival,
    }
}
