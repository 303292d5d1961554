//! Tape serialization: CSV (primary interchange) and a length-prefixed
//! binary variant. Both round-trip losslessly: prices are written with
//! shortest-round-trip formatting, timestamps and sizes as integers.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{SymbolTape, Tape, TapeError, Trade, COND_NONE};

const CSV_HEADER: &str = "symbol,ts_ns,price,size";
const CSV_HEADER_COND: &str = "symbol,ts_ns,price,size,cond";
const BIN_MAGIC: &[u8; 4] = b"TFB1";
/// Cap on per-row error examples kept in a [`ParseReport`].
const MAX_ROW_ERRORS: usize = 8;

/// What a tape read saw: row counts, malformed rows (skipped, with the first
/// few reasons), and how many adjacent timestamp inversions had to be
/// repaired by the stable sort.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: u64,
    pub malformed: u64,
    pub row_errors: Vec<(u64, String)>,
    pub out_of_order: u64,
}

impl ParseReport {
    fn note_bad_row(&mut self, line: u64, reason: impl Into<String>) {
        self.malformed += 1;
        if self.row_errors.len() < MAX_ROW_ERRORS {
            self.row_errors.push((line, reason.into()));
        }
    }
}

/// Reads a CSV tape. The header must match the documented schema (with or
/// without the trailing `cond` column); a bad header is a format error,
/// while bad data rows are counted, reported, and skipped.
pub fn read_csv<R: BufRead>(mut reader: R) -> Result<(Tape, ParseReport), TapeError> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(TapeError::Format("empty input, expected header".into()));
    }
    let header = line.trim_end_matches(['\r', '\n']);
    let has_cond = match header {
        CSV_HEADER => false,
        CSV_HEADER_COND => true,
        other => {
            return Err(TapeError::Format(format!(
                "unrecognized header {other:?}, expected {CSV_HEADER:?} or {CSV_HEADER_COND:?}"
            )))
        }
    };

    let mut tape = Tape::new();
    let mut report = ParseReport::default();
    let mut line_no = 1u64;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let row = line.trim_end_matches(['\r', '\n']);
        if row.is_empty() {
            continue;
        }
        report.rows += 1;
        match parse_row(row, has_cond) {
            Ok((symbol, trade)) => tape.entry(symbol).trades.push(trade),
            Err(reason) => report.note_bad_row(line_no, reason),
        }
    }
    for sym in &mut tape.symbols {
        report.out_of_order += sym.ensure_sorted();
    }
    Ok((tape, report))
}

/// [`read_csv`] over a file path with a sizable buffer.
pub fn read_csv_path(path: impl AsRef<Path>) -> Result<(Tape, ParseReport), TapeError> {
    let file = std::fs::File::open(path)?;
    read_csv(BufReader::with_capacity(1 << 20, file))
}

fn parse_row<'a>(row: &'a str, has_cond: bool) -> Result<(&'a str, Trade), String> {
    let mut fields = row.split(',');
    let symbol = fields.next().filter(|s| !s.is_empty()).ok_or("missing symbol")?;
    let ts_ns: i64 = fields
        .next()
        .ok_or("missing ts_ns")?
        .parse()
        .map_err(|_| "bad ts_ns")?;
    let price: f64 = fields
        .next()
        .ok_or("missing price")?
        .parse()
        .map_err(|_| "bad price")?;
    if !price.is_finite() || price <= 0.0 {
        return Err("price must be finite and positive".into());
    }
    let size: u32 = fields
        .next()
        .ok_or("missing size")?
        .parse()
        .map_err(|_| "bad size")?;
    let cond = if has_cond {
        let f = fields.next().ok_or("missing cond")?;
        match f.as_bytes() {
            [] => COND_NONE,
            [b] if b.is_ascii_graphic() => *b,
            _ => return Err(format!("bad cond {f:?}")),
        }
    } else {
        COND_NONE
    };
    if fields.next().is_some() {
        return Err("too many fields".into());
    }
    Ok((
        symbol,
        Trade {
            ts_ns,
            price,
            size,
            cond,
        },
    ))
}

/// Writes a CSV tape. The `cond` column appears only when some trade
/// carries a condition, so condition-free tapes stay in the 4-column schema.
pub fn write_csv<W: Write>(tape: &Tape, writer: W) -> Result<(), TapeError> {
    let mut w = std::io::BufWriter::with_capacity(1 << 20, writer);
    let has_cond = tape
        .symbols
        .iter()
        .any(|s| s.trades.iter().any(|t| t.cond != COND_NONE));
    writeln!(w, "{}", if has_cond { CSV_HEADER_COND } else { CSV_HEADER })?;
    for sym in &tape.symbols {
        for t in &sym.trades {
            if has_cond {
                if t.cond == COND_NONE {
                    writeln!(w, "{},{},{},{},", sym.symbol, t.ts_ns, t.price, t.size)?;
                } else {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        sym.symbol, t.ts_ns, t.price, t.size, t.cond as char
                    )?;
                }
            } else {
                writeln!(w, "{},{},{},{}", sym.symbol, t.ts_ns, t.price, t.size)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the binary variant: magic, symbol count, then per symbol a
/// length-prefixed name, a trade count, and fixed 21-byte records.
pub fn write_binary<W: Write>(tape: &Tape, writer: W) -> Result<(), TapeError> {
    let mut w = std::io::BufWriter::with_capacity(1 << 20, writer);
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(tape.symbols.len() as u32).to_le_bytes())?;
    for sym in &tape.symbols {
        let name = sym.symbol.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(TapeError::Format(format!(
                "symbol name too long: {} bytes",
                name.len()
            )));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(sym.trades.len() as u64).to_le_bytes())?;
        for t in &sym.trades {
            w.write_all(&t.ts_ns.to_le_bytes())?;
            w.write_all(&t.price.to_bits().to_le_bytes())?;
            w.write_all(&t.size.to_le_bytes())?;
            w.write_all(&[t.cond])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the binary variant. Truncated or over-long input is a format
/// error; like the CSV reader, per-symbol lists are stable-sorted and
/// inversions are reported.
pub fn read_binary<R: Read>(reader: R) -> Result<(Tape, ParseReport), TapeError> {
    let mut r = BufReader::with_capacity(1 << 20, reader);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| TapeError::Format("missing magic".into()))?;
    if &magic != BIN_MAGIC {
        return Err(TapeError::Format(format!("bad magic {magic:?}")));
    }
    let n_symbols = read_u32(&mut r)?;
    let mut symbols = Vec::with_capacity(n_symbols.min(1024) as usize);
    let mut report = ParseReport::default();
    for _ in 0..n_symbols {
        let name_len = read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| TapeError::Format("truncated symbol name".into()))?;
        let symbol = String::from_utf8(name)
            .map_err(|_| TapeError::Format("symbol name is not utf-8".into()))?;
        let count = read_u64(&mut r)?;
        let mut sym = SymbolTape::new(symbol);
        sym.trades.reserve(count.min(1 << 28) as usize);
        let mut rec = [0u8; 21];
        for _ in 0..count {
            r.read_exact(&mut rec)
                .map_err(|_| TapeError::Format("truncated trade record".into()))?;
            let trade = Trade {
                ts_ns: i64::from_le_bytes(rec[0..8].try_into().unwrap()),
                price: f64::from_bits(u64::from_le_bytes(rec[8..16].try_into().unwrap())),
                size: u32::from_le_bytes(rec[16..20].try_into().unwrap()),
                cond: rec[20],
            };
            sym.trades.push(trade);
            report.rows += 1;
        }
        symbols.push(sym);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(TapeError::Format("trailing bytes after last record".into()));
    }
    let mut tape = Tape::from_symbols(symbols);
    for sym in &mut tape.symbols {
        report.out_of_order += sym.ensure_sorted();
    }
    Ok((tape, report))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, TapeError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)
        .map_err(|_| TapeError::Format("truncated length field".into()))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TapeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| TapeError::Format("truncated count field".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, TapeError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| TapeError::Format("truncated count field".into()))?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::super::COND_AUCTION;
    use super::*;

    fn make_test_tape() -> Tape {
        let mut tape = Tape::new();
        {
            let a = tape.entry("AAA");
            a.trades.push(Trade::new(1_000, 100.125, 10));
            a.trades.push(Trade {
                ts_ns: 2_000,
                price: 0.1 + 0.2, // deliberately non-representable sum
                size: 0,
                cond: COND_AUCTION,
            });
        }
        {
            let b = tape.entry("BB");
            b.trades.push(Trade::new(-5, 3.5e-5, 4_000_000_000 - 1));
        }
        tape
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let tape = make_test_tape();
        let mut buf = Vec::new();
        write_csv(&tape, &mut buf).unwrap();
        let (back, report) = read_csv(&buf[..]).unwrap();
        assert_eq!(back, tape);
        assert_eq!(report.malformed, 0);
        assert_eq!(report.rows, 3);
    }

    #[test]
    fn binary_round_trip_is_lossless() {
        let tape = make_test_tape();
        let mut buf = Vec::new();
        write_binary(&tape, &mut buf).unwrap();
        let (back, report) = read_binary(&buf[..]).unwrap();
        assert_eq!(back, tape);
        assert_eq!(report.rows, 3);
    }

    #[test]
    fn header_must_match_schema() {
        let bad = "sym,ts,px,qty\nA,1,2.0,3\n";
        assert!(matches!(
            read_csv(bad.as_bytes()),
            Err(TapeError::Format(_))
        ));
        assert!(matches!(read_csv(&b""[..]), Err(TapeError::Format(_))));
    }

    #[test]
    fn malformed_rows_are_counted_and_skipped() {
        let input = "symbol,ts_ns,price,size\n\
                     A,1000,100.0,10\n\
                     A,notanint,100.0,10\n\
                     A,1001,-4.0,10\n\
                     A,1002,nan,10\n\
                     A,1003,100.0,-3\n\
                     A,1004,100.0,10,X\n\
                     A,1005,100.0,12\n";
        let (tape, report) = read_csv(input.as_bytes()).unwrap();
        assert_eq!(report.rows, 7);
        assert_eq!(report.malformed, 5);
        assert_eq!(report.row_errors.len(), 5);
        assert_eq!(tape.get("A").unwrap().trades.len(), 2);
    }

    #[test]
    fn out_of_order_rows_are_sorted_with_a_warning() {
        let input = "symbol,ts_ns,price,size\n\
                     A,2000,101.0,10\n\
                     A,1000,100.0,10\n";
        let (tape, report) = read_csv(input.as_bytes()).unwrap();
        assert_eq!(report.out_of_order, 1);
        let ts: Vec<i64> = tape.get("A").unwrap().trades.iter().map(|t| t.ts_ns).collect();
        assert_eq!(ts, vec![1000, 2000]);
    }

    #[test]
    fn cond_column_round_trips_and_allows_empty() {
        let input = "symbol,ts_ns,price,size,cond\n\
                     A,1000,100.0,10,\n\
                     A,1001,101.0,10,A\n";
        let (tape, report) = read_csv(input.as_bytes()).unwrap();
        assert_eq!(report.malformed, 0);
        let trades = &tape.get("A").unwrap().trades;
        assert_eq!(trades[0].cond, COND_NONE);
        assert_eq!(trades[1].cond, COND_AUCTION);
        let mut buf = Vec::new();
        write_csv(&tape, &mut buf).unwrap();
        let (back, _) = read_csv(&buf[..]).unwrap();
        assert_eq!(back, tape);
    }

    #[test]
    fn binary_rejects_truncation_and_trailing_bytes() {
        let tape = make_test_tape();
        let mut buf = Vec::new();
        write_binary(&tape, &mut buf).unwrap();
        let truncated = &buf[..buf.len() - 1];
        assert!(matches!(read_binary(truncated), Err(TapeError::Format(_))));
        let mut extended = buf.clone();
        extended.push(0);
        assert!(matches!(
            read_binary(&extended[..]),
            Err(TapeError::Format(_))
        ));
    }
}
