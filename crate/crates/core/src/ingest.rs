//! Reading trade tapes into validated datasets and the weekly round/unrounded
//! volume panel.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{Amount, Price};
use crate::trade::{is_round, PairRegistry, Trade};

pub const CSV_HEADER: [&str; 5] = ["exchange", "pair", "timestamp_ms", "price", "amount"];

const DAY_MS: i64 = 86_400_000;
/// 1970-01-05, the first Monday after the epoch, in days.
const EPOCH_MONDAY_DAYS: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess from a file extension; defaults to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext)
                if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("ndjson") =>
            {
                Format::Jsonl
            }
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(Error::Config(format!("unknown trade format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
    /// Drop exact duplicate rows.
    pub dedupe: bool,
    /// Inclusive `[start, end]` bounds in ms; rows outside are rejected.
    pub window: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub accepted: u64,
    pub rejected: Vec<Rejection>,
    pub duplicates_removed: u64,
}

impl ParseReport {
    /// CSV `line,reason`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["line", "reason"])?;
        for r in &self.rejected {
            w.write_record([r.line.to_string(), r.reason.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trades grouped by `(exchange, pair)`, each group sorted by timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TradeDataset {
    groups: BTreeMap<(String, String), Vec<Trade>>,
    window: Option<(i64, i64)>,
}

impl TradeDataset {
    /// Groups and sorts `trades`; the window spans their timestamps.
    pub fn from_trades<I: IntoIterator<Item = Trade>>(trades: I) -> Self {
        let mut groups: BTreeMap<(String, String), Vec<Trade>> = BTreeMap::new();
        for t in trades {
            groups
                .entry((t.exchange.clone(), t.pair.clone()))
                .or_default()
                .push(t);
        }
        let mut ds = TradeDataset {
            groups,
            window: None,
        };
        ds.normalize();
        ds
    }

    fn normalize(&mut self) {
        self.groups.retain(|_, v| !v.is_empty());
        for v in self.groups.values_mut() {
            v.sort_by_key(|t| t.timestamp_ms);
        }
        self.window = self
            .groups
            .values()
            .flat_map(|v| [v.first(), v.last()])
            .flatten()
            .map(|t| t.timestamp_ms)
            .fold(None, |acc, ts| match acc {
                None => Some((ts, ts)),
                Some((lo, hi)) => Some((lo.min(ts), hi.max(ts))),
            });
    }

    pub fn groups(&self) -> impl Iterator<Item = (&(String, String), &[Trade])> {
        self.groups.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn group(&self, exchange: &str, pair: &str) -> Option<&[Trade]> {
        self.groups
            .get(&(exchange.to_string(), pair.to_string()))
            .map(Vec::as_slice)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Earliest and latest timestamp, if any trades are present.
    pub fn window(&self) -> Option<(i64, i64)> {
        self.window
    }

    pub fn exchanges(&self) -> Vec<String> {
        let mut v: Vec<String> = self.groups.keys().map(|(e, _)| e.clone()).collect();
        v.dedup();
        v
    }

    pub fn trades(&self) -> impl Iterator<Item = &Trade> {
        self.groups.values().flatten()
    }

    /// Total traded amount of a group in sub-units.
    pub fn group_volume(&self, exchange: &str, pair: &str) -> u128 {
        self.group(exchange, pair)
            .map(|g| g.iter().map(|t| u128::from(t.amount.sub_units())).sum())
            .unwrap_or(0)
    }

    /// The dataset restricted to unrounded trades; groups left empty are dropped.
    pub fn unrounded_subset(&self, registry: &PairRegistry) -> Result<TradeDataset> {
        let mut groups = BTreeMap::new();
        for ((ex, pair), trades) in &self.groups {
            let spec = registry.get(pair)?;
            let kept: Vec<Trade> = trades
                .iter()
                .filter(|t| !is_round(t.amount, spec))
                .cloned()
                .collect();
            groups.insert((ex.clone(), pair.clone()), kept);
        }
        let mut ds = TradeDataset {
            groups,
            window: None,
        };
        ds.normalize();
        Ok(ds)
    }

    /// Writes every trade as CSV with the standard header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for t in self.trades() {
            w.write_record([
                t.exchange.as_str(),
                t.pair.as_str(),
                &t.timestamp_ms.to_string(),
                &t.price.to_string(),
                &t.amount.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a whole tape into a dataset.
pub fn parse_trades<R: Read>(
    source: R,
    format: Format,
    opts: &ParseOptions,
) -> Result<(TradeDataset, ParseReport)> {
    let mut trades = Vec::new();
    let report = stream_trades(source, format, opts, |t| {
        trades.push(t);
        Ok(())
    })?;
    let mut ds = TradeDataset::from_trades(trades);
    if let Some(w) = opts.window {
        if !ds.is_empty() {
            ds.window = Some(w);
        }
    }
    Ok((ds, report))
}

/// Parse a tape row by row, handing each accepted trade to `sink`.
pub fn stream_trades<R, F>(
    source: R,
    format: Format,
    opts: &ParseOptions,
    mut sink: F,
) -> Result<ParseReport>
where
    R: Read,
    F: FnMut(Trade) -> Result<()>,
{
    let mut report = ParseReport::default();
    let mut seen: HashSet<Trade> = HashSet::new();
    let mut accept = |line: u64,
                      row: std::result::Result<Trade, String>,
                      report: &mut ParseReport|
     -> Result<()> {
        let checked = row.and_then(|t| match opts.window {
            Some((lo, hi)) if t.timestamp_ms < lo || t.timestamp_ms > hi => {
                Err("outside sample window".to_string())
            }
            _ => Ok(t),
        });
        match checked {
            Ok(t) => {
                if opts.dedupe && !seen.insert(t.clone()) {
                    report.duplicates_removed += 1;
                    return Ok(());
                }
                report.accepted += 1;
                sink(t)
            }
            Err(reason) => {
                if opts.strict {
                    return Err(Error::Parse(format!("line {line}: {reason}")));
                }
                report.rejected.push(Rejection { line, reason });
                Ok(())
            }
        }
    };

    match format {
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .flexible(true)
                .has_headers(true)
                .from_reader(source);
            let header = match rdr.headers() {
                Ok(h) => h.clone(),
                // empty input
                Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
                Err(e) => return Err(Error::Parse(format!("header: {e}"))),
            };
            if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
                return Ok(report);
            }
            let cols = header_columns(&header)?;
            let mut record = csv::StringRecord::new();
            loop {
                let line_hint = rdr.position().line() + 1;
                match rdr.read_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {
                        let line = record.position().map(|p| p.line()).unwrap_or(line_hint);
                        let row = csv_row(&record, &cols);
                        accept(line, row, &mut report)?;
                    }
                    Err(e) => {
                        let line = e.position().map(|p| p.line()).unwrap_or(line_hint);
                        if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                            return Err(e.into());
                        }
                        accept(line, Err(format!("malformed row: {e}")), &mut report)?;
                    }
                }
            }
        }
        Format::Jsonl => {
            let reader = BufReader::new(source);
            for (i, line) in reader.split(b'\n').enumerate() {
                let line_no = i as u64 + 1;
                let bytes = line?;
                let text = match std::str::from_utf8(&bytes) {
                    Ok(s) => s.trim(),
                    Err(_) => {
                        accept(line_no, Err("invalid utf-8".to_string()), &mut report)?;
                        continue;
                    }
                };
                if text.is_empty() {
                    continue;
                }
                accept(line_no, json_row(text), &mut report)?;
            }
        }
    }
    Ok(report)
}

/// Parse a tape from a file, choosing the format from its extension when `format` is `None`.
pub fn read_trades_file(
    path: &Path,
    format: Option<Format>,
    opts: &ParseOptions,
) -> Result<(TradeDataset, ParseReport)> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_trades(
        file,
        format.unwrap_or_else(|| Format::from_path(path)),
        opts,
    )
}

fn header_columns(header: &csv::StringRecord) -> Result<[usize; 5]> {
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("header is missing column `{name}`")))?;
    }
    Ok(cols)
}

fn csv_row(record: &csv::StringRecord, cols: &[usize; 5]) -> std::result::Result<Trade, String> {
    let field = |i: usize| {
        record
            .get(cols[i])
            .map(str::trim)
            .ok_or_else(|| "missing field".to_string())
    };
    build_trade(field(0)?, field(1)?, field(2)?, field(3)?, field(4)?)
}

#[derive(Deserialize)]
struct JsonRow {
    exchange: String,
    pair: String,
    timestamp_ms: serde_json::Value,
    price: serde_json::Value,
    amount: serde_json::Value,
}

fn json_text(v: &serde_json::Value) -> std::result::Result<String, String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("expected number or string, got {other}")),
    }
}

fn json_row(text: &str) -> std::result::Result<Trade, String> {
    let row: JsonRow = serde_json::from_str(text).map_err(|e| format!("malformed row: {e}"))?;
    build_trade(
        &row.exchange,
        &row.pair,
        &json_text(&row.timestamp_ms)?,
        &json_text(&row.price)?,
        &json_text(&row.amount)?,
    )
}

fn build_trade(
    exchange: &str,
    pair: &str,
    ts: &str,
    price: &str,
    amount: &str,
) -> std::result::Result<Trade, String> {
    if exchange.is_empty() {
        return Err("empty exchange".into());
    }
    if pair.is_empty() {
        return Err("empty pair".into());
    }
    let timestamp_ms: i64 = ts
        .parse()
        .map_err(|_| format!("invalid timestamp `{ts}`"))?;
    let price: Price = price.parse().map_err(|e| format!("price: {e}"))?;
    let amount: Amount = amount.parse().map_err(|e| {
        if matches!(e, crate::fixed::DecimalError::PrecisionOverflow) {
            "precision overflow".to_string()
        } else {
            format!("amount: {e}")
        }
    })?;
    if price.is_zero() {
        return Err("non-positive price".into());
    }
    if amount.is_zero() {
        return Err("non-positive amount".into());
    }
    Ok(Trade {
        exchange: exchange.to_string(),
        pair: pair.to_string(),
        timestamp_ms,
        price,
        amount,
    })
}

/// UTC week containing `timestamp_ms`; weeks start Monday 00:00 and week 0
/// begins on 1970-01-05.
pub fn week_index(timestamp_ms: i64) -> i64 {
    (timestamp_ms.div_euclid(DAY_MS) - EPOCH_MONDAY_DAYS).div_euclid(7)
}

/// Start of week `week` in ms since the epoch.
pub fn week_start_ms(week: i64) -> i64 {
    (week * 7 + EPOCH_MONDAY_DAYS) * DAY_MS
}

/// Round and unrounded volume of one group in one week.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeeklyVolumeSplit {
    pub exchange: String,
    pub pair: String,
    pub week_index: i64,
    /// Round volume, sub-units.
    pub v_round: u128,
    /// Unrounded volume, sub-units.
    pub v_unrounded: u128,
    pub n_round: u64,
    pub n_unrounded: u64,
    /// Quote-currency value of all trades in the week.
    pub notional: f64,
}

impl WeeklyVolumeSplit {
    pub fn v_round_units(&self) -> f64 {
        self.v_round as f64 / crate::fixed::UNIT as f64
    }

    pub fn v_unrounded_units(&self) -> f64 {
        self.v_unrounded as f64 / crate::fixed::UNIT as f64
    }

    pub fn total(&self) -> u128 {
        self.v_round + self.v_unrounded
    }

    /// Average quote value of one native unit this week.
    pub fn unit_value(&self) -> f64 {
        let total = self.total() as f64 / crate::fixed::UNIT as f64;
        if total > 0.0 {
            self.notional / total
        } else {
            0.0
        }
    }

    /// Add one trade; `round` as decided by [`is_round`].
    pub fn add(&mut self, amount: Amount, price: Price, round: bool) {
        let a = u128::from(amount.sub_units());
        if round {
            self.v_round += a;
            self.n_round += 1;
        } else {
            self.v_unrounded += a;
            self.n_unrounded += 1;
        }
        self.notional += amount.to_f64() * price.to_f64();
    }
}

/// One row per `(exchange, pair, week)` with trades, in key order.
pub fn weekly_split(
    dataset: &TradeDataset,
    registry: &PairRegistry,
) -> Result<Vec<WeeklyVolumeSplit>> {
    let mut out = Vec::new();
    for ((ex, pair), trades) in dataset.groups() {
        let spec = registry.get(pair)?;
        let mut weeks: BTreeMap<i64, WeeklyVolumeSplit> = BTreeMap::new();
        for t in trades {
            let w = week_index(t.timestamp_ms);
            weeks
                .entry(w)
                .or_insert_with(|| WeeklyVolumeSplit {
                    exchange: ex.clone(),
                    pair: pair.clone(),
                    week_index: w,
                    ..Default::default()
                })
                .add(t.amount, t.price, is_round(t.amount, spec));
        }
        out.extend(weeks.into_values());
    }
    Ok(out)
}

/// CSV `exchange,pair,week_index,v_round,v_unrounded,n_round,n_unrounded,notional`.
pub fn write_panel_csv<W: Write>(panel: &[WeeklyVolumeSplit], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in panel {
        w.serialize(PanelRecord::from(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(input: R) -> Result<Vec<WeeklyVolumeSplit>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<PanelRecord>() {
        let rec = rec.map_err(|e| Error::Parse(format!("panel: {e}")))?;
        out.push(rec.try_into()?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PanelRecord {
    exchange: String,
    pair: String,
    week_index: i64,
    v_round: String,
    v_unrounded: String,
    n_round: u64,
    n_unrounded: u64,
    notional: f64,
}

fn sub_units_string(v: u128) -> String {
    let unit = u128::from(crate::fixed::UNIT);
    let (whole, frac) = (v / unit, v % unit);
    if frac == 0 {
        whole.to_string()
    } else {
        format!("{whole}.{frac:08}")
            .trim_end_matches('0')
            .to_string()
    }
}

fn parse_sub_units(s: &str) -> Result<u128> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 8 {
        return Err(Error::Parse(format!(
            "panel volume `{s}`: precision overflow"
        )));
    }
    let w: u128 = whole
        .parse()
        .map_err(|_| Error::Parse(format!("panel volume `{s}`")))?;
    let f: u128 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<8}")
            .parse()
            .map_err(|_| Error::Parse(format!("panel volume `{s}`")))?
    };
    Ok(w * u128::from(crate::fixed::UNIT) + f)
}

impl From<&WeeklyVolumeSplit> for PanelRecord {
    fn from(r: &WeeklyVolumeSplit) -> Self {
        PanelRecord {
            exchange: r.exchange.clone(),
            pair: r.pair.clone(),
            week_index: r.week_index,
            v_round: sub_units_string(r.v_round),
            v_unrounded: sub_units_string(r.v_unrounded),
            n_round: r.n_round,
            n_unrounded: r.n_unrounded,
            notional: r.notional,
        }
    }
}

impl TryFrom<PanelRecord> for WeeklyVolumeSplit {
    type Error = Error;

    fn try_from(r: PanelRecord) -> Result<Self> {
        Ok(WeeklyVolumeSplit {
            v_round: parse_sub_units(&r.v_round)?,
            v_unrounded: parse_sub_units(&r.v_unrounded)?,
            exchange: r.exchange,
            pair: r.pair,
            week_index: r.week_index,
            n_round: r.n_round,
            n_unrounded: r.n_unrounded,
            notional: r.notional,
        })
    }
}
