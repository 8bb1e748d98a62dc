//! Price and market-cap ingestion, calendar alignment, and the immutable
//! [`ReturnPanel`] consumed by every downstream stage.
//!
//! Two input layouts are accepted:
//!
//! - `prices-long`: header `date,symbol,close,market_cap`, one observation per row.
//! - `prices-wide`: header `date,<sym1>,<sym2>,...` holding closes, plus a
//!   sibling file with the same header holding market caps. Empty cells mark
//!   missing observations.
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`); decimals use a dot. The delimiter is
//! detected from the header line (comma, semicolon or tab).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_to_string};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Canonical file names for a panel written by [`ReturnPanel::write_canonical`].
pub const RETURNS_FILE: &str = "returns.csv";
pub const CAPS_FILE: &str = "caps.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AssetRecord {
    pub symbol: String,
    pub date: NaiveDate,
    pub close: f64,
    pub market_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputFormat {
    PricesLong,
    /// Closes in the main file, market caps in `caps`.
    PricesWide { caps: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPolicy {
    /// Any missing observation inside an asset's span removes the asset.
    DropAsset,
    /// Holes of up to `max_gap` consecutive days are filled with the previous
    /// observation. Longer holes drop the asset, or fail when `strict`.
    ForwardFill { max_gap: usize, strict: bool },
}

impl Default for GapPolicy {
    fn default() -> Self {
        GapPolicy::ForwardFill {
            max_gap: 3,
            strict: false,
        }
    }
}

impl fmt::Display for GapPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapPolicy::DropAsset => write!(f, "drop-asset"),
            GapPolicy::ForwardFill {
                max_gap,
                strict: false,
            } => write!(f, "forward-fill:{max_gap}"),
            GapPolicy::ForwardFill {
                max_gap,
                strict: true,
            } => write!(f, "strict-fill:{max_gap}"),
        }
    }
}

impl FromStr for GapPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "drop-asset" {
            return Ok(GapPolicy::DropAsset);
        }
        let (kind, gap) = s.split_once(':').unwrap_or((s, "3"));
        let max_gap = gap
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad max gap in gap policy `{s}`")))?;
        match kind {
            "forward-fill" => Ok(GapPolicy::ForwardFill {
                max_gap,
                strict: false,
            }),
            "strict-fill" => Ok(GapPolicy::ForwardFill {
                max_gap,
                strict: true,
            }),
            _ => Err(Error::Config(format!(
                "unknown gap policy `{s}` (expected drop-asset, forward-fill[:N] or strict-fill[:N])"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReturnKind {
    #[default]
    Log,
    Simple,
}

impl ReturnKind {
    #[inline]
    pub fn compute(self, prev: f64, cur: f64) -> f64 {
        match self {
            ReturnKind::Log => (cur / prev).ln(),
            ReturnKind::Simple => cur / prev - 1.0,
        }
    }
}

/// Selection and cleaning rules for [`build_panel`].
#[derive(Debug, Clone, Default)]
pub struct PanelOptions {
    /// Assets to keep, in output order. `None` keeps every symbol in order of
    /// first appearance.
    pub symbols: Option<Vec<String>>,
    /// Inclusive date interval.
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub gap_policy: GapPolicy,
    pub return_kind: ReturnKind,
}

/// An asset removed during panel construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedAsset {
    pub symbol: String,
    pub longest_gap: usize,
}

/// Aligned date × asset matrix of returns and market caps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    returns: Array2<f64>,
    caps: Array2<f64>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        returns: Array2<f64>,
        caps: Array2<f64>,
    ) -> Result<Self> {
        let (t, n) = returns.dim();
        if t != dates.len() || n != symbols.len() || caps.dim() != (t, n) {
            return Err(Error::Dimension(format!(
                "panel with {} dates and {} symbols got returns {:?} and caps {:?}",
                dates.len(),
                symbols.len(),
                returns.dim(),
                caps.dim()
            )));
        }
        if n == 0 || t == 0 {
            return Err(Error::Input("panel needs at least one asset and one date".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "panel dates not strictly increasing at {}",
                w[1]
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = symbols.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::Input(format!("duplicate symbol {dup} in panel")));
        }
        if let Some(((ti, i), _)) = returns.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite return for {} on {}",
                symbols[i], dates[ti]
            )));
        }
        if let Some(((ti, i), _)) = caps
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Input(format!(
                "nonpositive market cap for {} on {}",
                symbols[i], dates[ti]
            )));
        }
        Ok(Self {
            dates,
            symbols,
            returns,
            caps,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// T × N returns.
    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    /// T × N market caps.
    pub fn caps(&self) -> &Array2<f64> {
        &self.caps
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.symbols.len()
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// The `window` rows ending at row `end` (inclusive).
    pub fn window(&self, end: usize, window: usize) -> ArrayView2<'_, f64> {
        self.returns.slice(s![end + 1 - window..=end, ..])
    }

    /// Contents of `returns.csv` and `caps.csv`, keyed by file name.
    pub fn to_canonical(&self) -> Vec<(&'static str, String)> {
        vec![
            (RETURNS_FILE, self.matrix_csv(&self.returns)),
            (CAPS_FILE, self.matrix_csv(&self.caps)),
        ]
    }

    pub fn write_canonical(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.to_canonical() {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_canonical(dir: &Path) -> Result<Self> {
        let (dates, symbols, returns) = read_matrix_csv(&dir.join(RETURNS_FILE))?;
        let (cap_dates, cap_symbols, caps) = read_matrix_csv(&dir.join(CAPS_FILE))?;
        if cap_dates != dates || cap_symbols != symbols {
            return Err(Error::Input(format!(
                "{} and {} in {} disagree on dates or symbols",
                RETURNS_FILE,
                CAPS_FILE,
                dir.display()
            )));
        }
        Self::new(dates, symbols, returns, caps)
    }

    fn matrix_csv(&self, m: &Array2<f64>) -> String {
        let mut out = String::with_capacity(m.len() * 24 + 64);
        out.push_str("date");
        for s in &self.symbols {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for (d, row) in self.dates.iter().zip(m.rows()) {
            out.push_str(&d.format(DATE_FORMAT).to_string());
            for v in row {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else if header.contains(';') {
        b';'
    } else {
        b','
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(text))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field: "<row>".into(),
        message: e.to_string(),
    }
}

pub(crate) fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|_| format!("`{}` is not an ISO-8601 date", s.trim()))
}

fn positive(v: f64, what: &str) -> std::result::Result<f64, String> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("nonpositive {what} {v}"))
    }
}

/// Reads every observation from `path`. Row order is preserved.
pub fn load_records(path: &Path, format: &InputFormat) -> Result<Vec<AssetRecord>> {
    let records = match format {
        InputFormat::PricesLong => load_long(path)?,
        InputFormat::PricesWide { caps } => load_wide(path, caps)?,
    };
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert((r.symbol.as_str(), r.date)) {
            return Err(Error::DuplicateRecord {
                symbol: r.symbol.clone(),
                date: r.date.to_string(),
            });
        }
    }
    Ok(records)
}

fn load_long(path: &Path) -> Result<Vec<AssetRecord>> {
    let text = read_to_string(path)?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["date", "symbol", "close", "market_cap"];
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: name.into(),
            message: format!("missing column (header must contain {})", expected.join(",")),
        })
    };
    let (cd, cs, cc, cm) = (col("date")?, col("symbol")?, col("close")?, col("market_cap")?);

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = line_of(&rec);
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.into(),
            message,
        };
        let symbol = rec[cs].to_string();
        if symbol.is_empty() {
            return Err(err("symbol", "empty symbol".into()));
        }
        let date = parse_date(&rec[cd]).map_err(|m| err("date", m))?;
        let close = parse_f64(&rec[cc])
            .and_then(|v| positive(v, "price"))
            .map_err(|m| err("close", m))?;
        let market_cap = parse_f64(&rec[cm])
            .and_then(|v| positive(v, "market cap"))
            .map_err(|m| err("market_cap", m))?;
        out.push(AssetRecord {
            symbol,
            date,
            close,
            market_cap,
        });
    }
    Ok(out)
}

type WideRows = (Vec<String>, Vec<(u64, NaiveDate, Vec<Option<f64>>)>);

fn read_wide(path: &Path, what: &str) -> Result<WideRows> {
    let text = read_to_string(path)?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("date") || headers.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            field: "date".into(),
            message: "header must be `date,<sym1>,<sym2>,...`".into(),
        });
    }
    let symbols: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = line_of(&rec);
        let date = parse_date(&rec[0]).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: "date".into(),
            message,
        })?;
        let mut vals = Vec::with_capacity(symbols.len());
        for (k, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                vals.push(None);
                continue;
            }
            let v = parse_f64(cell)
                .and_then(|v| positive(v, what))
                .map_err(|message| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    field: symbols[k].clone(),
                    message,
                })?;
            vals.push(Some(v));
        }
        rows.push((line, date, vals));
    }
    Ok((symbols, rows))
}

fn load_wide(closes: &Path, caps: &Path) -> Result<Vec<AssetRecord>> {
    let (symbols, close_rows) = read_wide(closes, "price")?;
    let (cap_symbols, cap_rows) = read_wide(caps, "market cap")?;
    if cap_symbols != symbols {
        return Err(Error::Input(format!(
            "{} and {} list different symbols",
            closes.display(),
            caps.display()
        )));
    }
    let cap_by_date: HashMap<NaiveDate, &Vec<Option<f64>>> =
        cap_rows.iter().map(|(_, d, v)| (*d, v)).collect();

    let mut out = Vec::new();
    for (line, date, vals) in &close_rows {
        for (k, close) in vals.iter().enumerate() {
            let Some(close) = close else { continue };
            let cap = cap_by_date
                .get(date)
                .and_then(|row| row[k])
                .ok_or_else(|| Error::Parse {
                    path: caps.to_path_buf(),
                    line: *line,
                    field: symbols[k].clone(),
                    message: format!("no market cap for {} on {date}", symbols[k]),
                })?;
            out.push(AssetRecord {
                symbol: symbols[k].clone(),
                date: *date,
                close: *close,
                market_cap: cap,
            });
        }
    }
    Ok(out)
}

/// Builds the aligned return panel. Assets removed by the gap policy are
/// logged at warn level; see [`assemble_panel`] to receive them.
pub fn build_panel(records: &[AssetRecord], options: &PanelOptions) -> Result<ReturnPanel> {
    let (panel, dropped) = assemble_panel(records, options)?;
    for d in &dropped {
        log::warn!(
            "dropping {}: gap of {} days exceeds policy {}",
            d.symbol,
            d.longest_gap,
            options.gap_policy
        );
    }
    Ok(panel)
}

/// Closes and caps of one asset by date.
type Series = BTreeMap<NaiveDate, (f64, f64)>;

pub fn assemble_panel(
    records: &[AssetRecord],
    options: &PanelOptions,
) -> Result<(ReturnPanel, Vec<DroppedAsset>)> {
    let in_range = |d: NaiveDate| {
        options
            .date_range
            .is_none_or(|(lo, hi)| d >= lo && d <= hi)
    };

    let mut order: Vec<String> = Vec::new();
    let mut series: HashMap<&str, Series> = HashMap::new();
    for r in records.iter().filter(|r| in_range(r.date)) {
        let entry = series.entry(r.symbol.as_str()).or_insert_with(|| {
            order.push(r.symbol.clone());
            BTreeMap::new()
        });
        if entry.insert(r.date, (r.close, r.market_cap)).is_some() {
            return Err(Error::DuplicateRecord {
                symbol: r.symbol.clone(),
                date: r.date.to_string(),
            });
        }
    }

    let wanted: Vec<String> = match &options.symbols {
        Some(list) => list.clone(),
        None => order,
    };
    if wanted.is_empty() {
        return Err(Error::Input("no assets selected".into()));
    }
    for s in &wanted {
        let count = series.get(s.as_str()).map_or(0, BTreeMap::len);
        if count < 2 {
            return Err(Error::Input(format!(
                "asset {s} has {count} observation(s) in range; at least 2 required"
            )));
        }
    }

    // Holes are measured against the union of every selected asset's days.
    let reference: Vec<NaiveDate> = wanted
        .iter()
        .flat_map(|s| series[s.as_str()].keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut dropped = Vec::new();
    let mut kept: Vec<(String, Series)> = Vec::new();
    for s in &wanted {
        let obs = &series[s.as_str()];
        let first = *obs.keys().next().expect("at least two observations");
        let last = *obs.keys().next_back().expect("at least two observations");
        let lo = reference.partition_point(|d| *d < first);
        let hi = reference.partition_point(|d| *d <= last);

        let mut filled = BTreeMap::new();
        let mut prev = obs[&first];
        let mut run = 0usize;
        let mut longest = 0usize;
        for d in &reference[lo..hi] {
            match obs.get(d) {
                Some(v) => {
                    prev = *v;
                    run = 0;
                }
                None => {
                    run += 1;
                    longest = longest.max(run);
                }
            }
            filled.insert(*d, prev);
        }

        let allowed = match options.gap_policy {
            GapPolicy::DropAsset => 0,
            GapPolicy::ForwardFill { max_gap, .. } => max_gap,
        };
        if longest > allowed {
            if let GapPolicy::ForwardFill { strict: true, .. } = options.gap_policy {
                return Err(Error::Input(format!(
                    "asset {s} has a gap of {longest} days, exceeding max gap {allowed}"
                )));
            }
            dropped.push(DroppedAsset {
                symbol: s.clone(),
                longest_gap: longest,
            });
            continue;
        }
        kept.push((s.clone(), filled));
    }

    if kept.is_empty() {
        return Err(Error::EmptyCalendar("every asset was dropped by the gap policy".into()));
    }

    let calendar: Vec<NaiveDate> = reference
        .iter()
        .copied()
        .filter(|d| kept.iter().all(|(_, m)| m.contains_key(d)))
        .collect();
    if calendar.is_empty() {
        return Err(Error::EmptyCalendar(format!(
            "assets {} share no common dates",
            kept.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    if calendar.len() < 2 {
        return Err(Error::EmptyCalendar(
            "common calendar has a single date; no returns can be formed".into(),
        ));
    }

    let t = calendar.len() - 1;
    let n = kept.len();
    let mut returns = Array2::<f64>::zeros((t, n));
    let mut caps = Array2::<f64>::zeros((t, n));
    for (i, (_, m)) in kept.iter().enumerate() {
        for k in 1..calendar.len() {
            let (p0, _) = m[&calendar[k - 1]];
            let (p1, c1) = m[&calendar[k]];
            returns[[k - 1, i]] = options.return_kind.compute(p0, p1);
            caps[[k - 1, i]] = c1;
        }
    }

    let panel = ReturnPanel::new(
        calendar[1..].to_vec(),
        kept.into_iter().map(|(s, _)| s).collect(),
        returns,
        caps,
    )?;
    Ok((panel, dropped))
}

/// Reads a `date,<sym>...` matrix file as written by [`ReturnPanel::write_canonical`].
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<String>, Array2<f64>)> {
    let (symbols, rows) = read_wide_any(path)?;
    let t = rows.len();
    let n = symbols.len();
    let mut m = Array2::zeros((t, n));
    let mut dates = Vec::with_capacity(t);
    for (r, (date, vals)) in rows.into_iter().enumerate() {
        dates.push(date);
        for (c, v) in vals.into_iter().enumerate() {
            m[[r, c]] = v;
        }
    }
    Ok((dates, symbols, m))
}

type MatrixRows = (Vec<String>, Vec<(NaiveDate, Vec<f64>)>);

fn read_wide_any(path: &Path) -> Result<MatrixRows> {
    let text = read_to_string(path)?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let symbols: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = line_of(&rec);
        let perr = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.into(),
            message,
        };
        let date = parse_date(&rec[0]).map_err(|m| perr("date", m))?;
        let vals = rec
            .iter()
            .skip(1)
            .zip(&symbols)
            .map(|(c, s)| parse_f64(c).map_err(|m| perr(s, m)))
            .collect::<Result<Vec<_>>>()?;
        rows.push((date, vals));
    }
    Ok((symbols, rows))
}
