//! Trade tapes: the raw input layer.
//!
//! A tape is a set of per-symbol trade lists ordered by timestamp. Two
//! determinism contracts hold everywhere in this module:
//!
//! - timestamps are integer nanoseconds (`i64`) in exchange-local time;
//!   floating-point time never appears;
//! - sorting is stable, so trades sharing a timestamp keep their input
//!   order.
//!
//! Calendar arithmetic is deliberately plain: a timestamp's day is
//! `ts / ns_per_day` and its time of day is the remainder. Tapes are
//! expected to be recorded in (or converted to) the exchange's local clock
//! before they get here; the session window (default 09:30-16:00) is an
//! offset into that local day.

mod io;
mod stats;

pub use io::{read_csv, read_csv_path, write_csv, read_binary, write_binary, ParseReport};
pub use stats::{tape_stats, InterarrivalStats, SymbolStats};

use thiserror::Error;

use crate::NS_PER_DAY;

/// Condition byte for a trade that carries no condition flag.
pub const COND_NONE: u8 = 0;
/// Condition byte marking an auction (opening/closing cross) print.
pub const COND_AUCTION: u8 = b'A';

/// One trade print. The symbol lives on the enclosing [`SymbolTape`];
/// records are kept lean because tapes run to tens of millions of rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    /// Nanoseconds since the Unix epoch, exchange-local clock.
    pub ts_ns: i64,
    /// Trade price. Must be finite and positive.
    pub price: f64,
    /// Shares traded.
    pub size: u32,
    /// Raw condition byte; [`COND_NONE`] when absent.
    pub cond: u8,
}

impl Trade {
    pub fn new(ts_ns: i64, price: f64, size: u32) -> Self {
        Trade {
            ts_ns,
            price,
            size,
            cond: COND_NONE,
        }
    }

    pub fn is_auction(&self) -> bool {
        self.cond == COND_AUCTION
    }

    /// Calendar day of this trade (days since the epoch).
    pub fn epoch_day(&self) -> i64 {
        self.ts_ns.div_euclid(NS_PER_DAY)
    }

    /// Nanoseconds past local midnight.
    pub fn time_of_day(&self) -> i64 {
        self.ts_ns.rem_euclid(NS_PER_DAY)
    }
}

/// All trades of one symbol, ordered by `ts_ns` (ties keep input order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolTape {
    pub symbol: String,
    pub trades: Vec<Trade>,
}

impl SymbolTape {
    pub fn new(symbol: impl Into<String>) -> Self {
        SymbolTape {
            symbol: symbol.into(),
            trades: Vec::new(),
        }
    }

    /// Counts adjacent timestamp inversions, then stable-sorts if any exist.
    /// Returns the inversion count so parsers can report it.
    pub fn ensure_sorted(&mut self) -> u64 {
        let inversions = self
            .trades
            .windows(2)
            .filter(|w| w[1].ts_ns < w[0].ts_ns)
            .count() as u64;
        if inversions > 0 {
            self.trades.sort_by_key(|t| t.ts_ns);
        }
        inversions
    }
}

/// A multi-symbol tape; symbols are kept sorted by name so every downstream
/// iteration order is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tape {
    pub symbols: Vec<SymbolTape>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn from_symbols(mut symbols: Vec<SymbolTape>) -> Self {
        symbols.sort_by(|a, b| a.symbol.cmp(&b.symbol));
        Tape { symbols }
    }

    pub fn get(&self, symbol: &str) -> Option<&SymbolTape> {
        self.symbols
            .binary_search_by(|s| s.symbol.as_str().cmp(symbol))
            .ok()
            .map(|i| &self.symbols[i])
    }

    /// Symbol tape for `symbol`, created empty (in sorted position) if new.
    pub fn entry(&mut self, symbol: &str) -> &mut SymbolTape {
        match self
            .symbols
            .binary_search_by(|s| s.symbol.as_str().cmp(symbol))
        {
            Ok(i) => &mut self.symbols[i],
            Err(i) => {
                self.symbols.insert(i, SymbolTape::new(symbol));
                &mut self.symbols[i]
            }
        }
    }

    pub fn total_trades(&self) -> u64 {
        self.symbols.iter().map(|s| s.trades.len() as u64).sum()
    }

    pub fn symbol_names(&self) -> Vec<&str> {
        self.symbols.iter().map(|s| s.symbol.as_str()).collect()
    }
}

/// Trading-session calendar: which days trade and the in-day session window.
///
/// The window is half-open `[open, close)`: a print stamped exactly at the
/// close does not belong to the session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionCalendar {
    /// Session open as nanoseconds past local midnight.
    pub open_ns: i64,
    /// Session close as nanoseconds past local midnight (exclusive).
    pub close_ns: i64,
    /// Trading days as days since the epoch, strictly ascending.
    days: Vec<i64>,
}

/// Default session open: 09:30 local.
pub const DEFAULT_OPEN_NS: i64 = (9 * 3600 + 30 * 60) * crate::NS_PER_SEC;
/// Default session close: 16:00 local.
pub const DEFAULT_CLOSE_NS: i64 = 16 * 3600 * crate::NS_PER_SEC;

impl SessionCalendar {
    pub fn new(open_ns: i64, close_ns: i64, mut days: Vec<i64>) -> Result<Self, TapeError> {
        if !(0..NS_PER_DAY).contains(&open_ns) || close_ns <= open_ns || close_ns > NS_PER_DAY {
            return Err(TapeError::BadSession { open_ns, close_ns });
        }
        days.sort_unstable();
        days.dedup();
        Ok(SessionCalendar {
            open_ns,
            close_ns,
            days,
        })
    }

    /// `n` consecutive weekdays starting at `start_day` (an epoch day), with
    /// the default 09:30-16:00 window.
    pub fn weekdays(start_day: i64, n: usize) -> Self {
        let mut days = Vec::with_capacity(n);
        let mut d = start_day;
        while days.len() < n {
            // The epoch (day 0) was a Thursday, so with 0 = Sunday the
            // weekday index is (d + 4) mod 7.
            let dow = (d + 4).rem_euclid(7);
            if dow != 6 && dow != 0 {
                days.push(d);
            }
            d += 1;
        }
        SessionCalendar {
            open_ns: DEFAULT_OPEN_NS,
            close_ns: DEFAULT_CLOSE_NS,
            days,
        }
    }

    /// Calendar covering every day observed in the tape, default window.
    pub fn from_tape(tape: &Tape) -> Self {
        let mut days: Vec<i64> = tape
            .symbols
            .iter()
            .flat_map(|s| s.trades.iter().map(Trade::epoch_day))
            .collect();
        days.sort_unstable();
        days.dedup();
        SessionCalendar {
            open_ns: DEFAULT_OPEN_NS,
            close_ns: DEFAULT_CLOSE_NS,
            days,
        }
    }

    pub fn days(&self) -> &[i64] {
        &self.days
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// Index of `epoch_day` within the trading calendar.
    pub fn day_index(&self, epoch_day: i64) -> Option<usize> {
        self.days.binary_search(&epoch_day).ok()
    }

    /// Session duration in nanoseconds.
    pub fn session_len_ns(&self) -> i64 {
        self.close_ns - self.open_ns
    }

    /// Whether a timestamp falls inside the session window of a trading day.
    pub fn in_session(&self, ts_ns: i64) -> bool {
        let tod = ts_ns.rem_euclid(NS_PER_DAY);
        tod >= self.open_ns
            && tod < self.close_ns
            && self.day_index(ts_ns.div_euclid(NS_PER_DAY)).is_some()
    }
}

/// Drops every trade outside the session window or flagged as an auction
/// print. Idempotent; relative order of survivors is unchanged.
pub fn filter_session(mut tape: Tape, cal: &SessionCalendar) -> Tape {
    for sym in &mut tape.symbols {
        sym.trades
            .retain(|t| !t.is_auction() && cal.in_session(t.ts_ns));
    }
    tape
}

/// Tape-layer failures.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad tape format: {0}")]
    Format(String),
    #[error("invalid session window: open {open_ns} close {close_ns}")]
    BadSession { open_ns: i64, close_ns: i64 },
}
