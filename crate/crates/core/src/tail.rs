//! Historical-simulation VaR, expected shortfall, and the rolling pairwise
//! conditional expected shortfall (CoES) matrix.
//!
//! For a window of `W` returns and tail probability `alpha`, VaR is the
//! `k`-th smallest return with `k = ceil(alpha * W)`. The tail set of an
//! asset is every day on which its return is at or below its VaR, so it
//! always holds at least `k` days. `CoES[i][j]` is the mean return of asset
//! `i` over the tail set of asset `j`; the diagonal is each asset's own ES.

use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_to_string};
use crate::market_data::{parse_date, ReturnPanel, DATE_FORMAT};

/// Tail probability and rolling window length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailConfig {
    alpha: f64,
    window: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            window: 250,
        }
    }
}

impl TailConfig {
    pub fn new(alpha: f64, window: usize) -> Result<Self> {
        validate_alpha(alpha)?;
        if window < 2 {
            return Err(Error::Config(format!("window must be at least 2, got {window}")));
        }
        if (alpha * window as f64).floor() < 1.0 {
            return Err(Error::Config(format!(
                "alpha {alpha} with window {window} leaves an empty tail (alpha * window < 1)"
            )));
        }
        Ok(Self { alpha, window })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Rank of the VaR order statistic, `ceil(alpha * window)`.
    pub fn tail_rank(&self) -> usize {
        tail_rank(self.alpha, self.window)
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Config(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    Ok(())
}

/// `ceil(alpha * w)`, ignoring representation error in the product
/// (0.07 * 100 is 7.000000000000001 in binary).
pub fn tail_rank(alpha: f64, w: usize) -> usize {
    let x = alpha * w as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.ceil() };
    (k as usize).clamp(1, w)
}

/// The `ceil(alpha * W)`-th smallest return. Ties are ordered by position, so
/// the result is deterministic.
pub fn historical_var(window: &[f64], alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    if window.len() < 2 {
        return Err(Error::Input(format!(
            "VaR needs at least 2 returns, got {}",
            window.len()
        )));
    }
    Ok(order_statistic(window, tail_rank(alpha, window.len())))
}

fn order_statistic(values: &[f64], k: usize) -> f64 {
    let mut keyed: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
    keyed.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed[k - 1].0
}

/// Positions `s` with `window_j[s] <= var_j`.
pub fn tail_set(window_i: &[f64], window_j: &[f64], var_j: f64) -> Vec<usize> {
    debug_assert_eq!(window_i.len(), window_j.len());
    window_j
        .iter()
        .enumerate()
        .filter(|(_, r)| **r <= var_j)
        .map(|(s, _)| s)
        .collect()
}

#[inline]
fn mean_over(values: &[f64], idx: &[usize]) -> f64 {
    let sum: f64 = idx.iter().map(|&s| values[s]).sum();
    sum / idx.len() as f64
}

/// Mean of `window_i` over the tail days of `window_j`.
pub fn coes_pair(window_i: &[f64], window_j: &[f64], alpha: f64) -> Result<f64> {
    if window_i.len() != window_j.len() {
        return Err(Error::Dimension(format!(
            "paired windows have lengths {} and {}",
            window_i.len(),
            window_j.len()
        )));
    }
    let var_j = historical_var(window_j, alpha)?;
    Ok(mean_over(window_i, &tail_set(window_i, window_j, var_j)))
}

/// Mean of the returns at or below VaR; identical to `coes_pair(w, w, alpha)`.
pub fn expected_shortfall(window: &[f64], alpha: f64) -> Result<f64> {
    coes_pair(window, window, alpha)
}

/// CoES matrix at one evaluation date. Row `i` is asset `i`'s risk-structure
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoesMatrix {
    pub date: NaiveDate,
    /// `values[[i, j]]`: mean return of `i` given `j` is in its tail.
    pub values: Array2<f64>,
    /// VaR of each conditioning asset.
    pub var: Array1<f64>,
}

impl CoesMatrix {
    pub fn n_assets(&self) -> usize {
        self.var.len()
    }

    /// Diagonal, i.e. each asset's expected shortfall.
    pub fn expected_shortfall(&self) -> Array1<f64> {
        self.values.diag().to_owned()
    }
}

/// CoES matrix for one `W × N` window of returns.
pub fn coes_matrix(date: NaiveDate, window: ArrayView2<'_, f64>, alpha: f64) -> Result<CoesMatrix> {
    let (w, n) = window.dim();
    validate_alpha(alpha)?;
    if w < 2 {
        return Err(Error::Input(format!("window of {w} returns is too short")));
    }
    let columns: Vec<Vec<f64>> = window.columns().into_iter().map(|c| c.to_vec()).collect();
    let k = tail_rank(alpha, w);

    let mut values = Array2::zeros((n, n));
    let mut var = Array1::zeros(n);
    for j in 0..n {
        let var_j = order_statistic(&columns[j], k);
        let idx = tail_set(&columns[j], &columns[j], var_j);
        var[j] = var_j;
        for i in 0..n {
            values[[i, j]] = mean_over(&columns[i], &idx);
        }
    }
    Ok(CoesMatrix { date, values, var })
}

/// One CoES matrix per date from the `W`-th panel row onward, each computed
/// on the trailing `W` returns. Dates are evaluated in parallel; output is in
/// date order.
pub fn rolling_coes(panel: &ReturnPanel, config: &TailConfig) -> Result<Vec<CoesMatrix>> {
    let w = config.window();
    let t = panel.n_dates();
    if t < w {
        return Err(Error::InsufficientHistory {
            required: w,
            available: t,
        });
    }
    (w - 1..t)
        .into_par_iter()
        .map(|end| coes_matrix(panel.dates()[end], panel.window(end, w), config.alpha()))
        .collect()
}

/// Long-format export: `date,i,j,coes,var_j` for every ordered pair.
pub fn coes_to_csv(symbols: &[String], matrices: &[CoesMatrix]) -> String {
    let n = symbols.len();
    let mut out = String::with_capacity(matrices.len() * n * n * 64 + 32);
    out.push_str("date,i,j,coes,var_j\n");
    for m in matrices {
        let date = m.date.format(DATE_FORMAT).to_string();
        for i in 0..n {
            for j in 0..n {
                out.push_str(&date);
                out.push(',');
                out.push_str(&symbols[i]);
                out.push(',');
                out.push_str(&symbols[j]);
                out.push(',');
                out.push_str(&fmt_f64(m.values[[i, j]]));
                out.push(',');
                out.push_str(&fmt_f64(m.var[j]));
                out.push('\n');
            }
        }
    }
    out
}

/// Reads the long-format export back. Symbols are ordered by first
/// appearance in the `i` column.
pub fn coes_from_csv(path: &Path) -> Result<(Vec<String>, Vec<CoesMatrix>)> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "date,i,j,coes,var_j" => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                field: "header".into(),
                message: "expected `date,i,j,coes,var_j`".into(),
            })
        }
    }

    let mut rows: Vec<(NaiveDate, String, String, f64, f64)> = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: ln as u64 + 1,
            field: field.into(),
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(perr("<row>", format!("expected 5 fields, found {}", f.len())));
        }
        rows.push((
            parse_date(f[0]).map_err(|m| perr("date", m))?,
            f[1].to_string(),
            f[2].to_string(),
            parse_f64(f[3]).map_err(|m| perr("coes", m))?,
            parse_f64(f[4]).map_err(|m| perr("var_j", m))?,
        ));
    }

    let mut symbols: Vec<String> = Vec::new();
    for (_, i, _, _, _) in &rows {
        if !symbols.contains(i) {
            symbols.push(i.clone());
        }
    }
    let n = symbols.len();
    if n == 0 || !rows.len().is_multiple_of(n * n) {
        return Err(Error::Input(format!(
            "{}: {} rows is not a whole number of {n}x{n} matrices",
            path.display(),
            rows.len()
        )));
    }
    let pos = |s: &str| symbols.iter().position(|x| x == s);

    let mut out = Vec::with_capacity(rows.len() / (n * n));
    for chunk in rows.chunks(n * n) {
        let date = chunk[0].0;
        let mut values = Array2::zeros((n, n));
        let mut var = Array1::zeros(n);
        for (d, i, j, c, v) in chunk {
            let (Some(i), Some(j)) = (pos(i), pos(j)) else {
                return Err(Error::Input(format!("unknown symbol in CoES row for {d}")));
            };
            if *d != date {
                return Err(Error::Input(format!(
                    "CoES block for {date} is incomplete (found row for {d})"
                )));
            }
            values[[i, j]] = *c;
            var[j] = *v;
        }
        if out.last().is_some_and(|m: &CoesMatrix| m.date >= date) {
            return Err(Error::Input(format!("CoES dates not increasing at {date}")));
        }
        out.push(CoesMatrix { date, values, var });
    }
    Ok((symbols, out))
}
