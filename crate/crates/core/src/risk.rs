//! Market-cap weighted systemic risk score `S = C' A C`, its per-asset
//! decomposition, and the negative-similarity ratio.
//!
//! The contribution of asset `i` is `C_i (A C)_i`, so contributions sum to
//! the score. The raw Euler gradient form `C_i dS/dC_i = 2 C_i (A C)_i` is
//! available through [`RiskOptions::euler_raw`] and sums to `2 S`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_long};
use crate::market_data::{parse_date, ReturnPanel, DATE_FORMAT};
use crate::network::{CorrelationSet, SignedAdjacency};

fn check_dims(a: &SignedAdjacency, caps: ArrayView1<'_, f64>) -> Result<()> {
    if a.n_assets() != caps.len() {
        return Err(Error::Dimension(format!(
            "adjacency is {n}x{n} but {} market caps were given",
            caps.len(),
            n = a.n_assets()
        )));
    }
    if let Some(c) = caps.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::Input(format!("market cap {c} is not positive")));
    }
    Ok(())
}

/// `(A C)_i` over the off-diagonal entries.
fn weighted_degree(a: &SignedAdjacency, caps: ArrayView1<'_, f64>) -> Array1<f64> {
    let m = a.matrix();
    let n = caps.len();
    Array1::from_shape_fn(n, |i| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| f64::from(m[[i, j]]) * caps[j])
            .sum()
    })
}

/// `sum_{i != j} C_i a_ij C_j`.
pub fn systemic_score(a: &SignedAdjacency, caps: ArrayView1<'_, f64>) -> Result<f64> {
    check_dims(a, caps)?;
    let m = a.matrix();
    let n = caps.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && m[[i, j]] != 0 {
                s += caps[i] * f64::from(m[[i, j]]) * caps[j];
            }
        }
    }
    Ok(s)
}

/// `S_i = C_i (A C)_i`.
pub fn decompose_score(a: &SignedAdjacency, caps: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_dims(a, caps)?;
    Ok(weighted_degree(a, caps) * caps)
}

/// Share of strictly negative similarities.
pub fn negative_ratio(cs: &CorrelationSet) -> f64 {
    cs.negative_count() as f64 / cs.len() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RiskOptions {
    /// Divide caps by their cross-sectional sum at each date.
    pub normalize_caps: bool,
    /// Report `2 C_i (A C)_i` instead of `C_i (A C)_i`.
    pub euler_raw: bool,
}

/// Per-date score, contributions and negative ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSeries {
    pub dates: Vec<NaiveDate>,
    pub symbols: Vec<String>,
    pub score: Vec<f64>,
    /// `dates.len() x N`.
    pub contributions: Array2<f64>,
    pub negative_ratio: Vec<f64>,
}

pub fn risk_series(
    adjacencies: &[SignedAdjacency],
    panel: &ReturnPanel,
    correlation_sets: &[CorrelationSet],
    options: RiskOptions,
) -> Result<RiskSeries> {
    if adjacencies.len() != correlation_sets.len() {
        let k = adjacencies.len().min(correlation_sets.len());
        let first = adjacencies
            .get(k)
            .map(|a| a.date)
            .or_else(|| correlation_sets.get(k).map(|c| c.date))
            .expect("lengths differ");
        return Err(Error::DateMisalignment(format!(
            "{first} (adjacency and correlation lists differ in length)"
        )));
    }
    let n = panel.n_assets();
    let t = adjacencies.len();
    let mut score = Vec::with_capacity(t);
    let mut ratio = Vec::with_capacity(t);
    let mut contributions = Array2::zeros((t, n));
    for (k, (a, cs)) in adjacencies.iter().zip(correlation_sets).enumerate() {
        if a.date != cs.date {
            return Err(Error::DateMisalignment(format!(
                "{} (adjacency) vs {} (correlations)",
                a.date, cs.date
            )));
        }
        let row = panel.date_index(a.date).ok_or_else(|| {
            Error::DateMisalignment(format!("{} has no market caps in the panel", a.date))
        })?;
        let mut caps = panel.caps().row(row).to_owned();
        if options.normalize_caps {
            let total = caps.sum();
            caps /= total;
        }
        let mut contrib = decompose_score(a, caps.view())?;
        if options.euler_raw {
            contrib *= 2.0;
        }
        score.push(systemic_score(a, caps.view())?);
        ratio.push(negative_ratio(cs));
        contributions.row_mut(k).assign(&contrib);
    }
    Ok(RiskSeries {
        dates: adjacencies.iter().map(|a| a.date).collect(),
        symbols: panel.symbols().to_vec(),
        score,
        contributions,
        negative_ratio: ratio,
    })
}

/// Calendar-year means of daily contributions: one row per year.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualTable {
    pub symbols: Vec<String>,
    pub years: Vec<i32>,
    /// `years.len() x N`.
    pub mean_contribution: Array2<f64>,
}

impl AnnualTable {
    /// Mean over years of each asset's annual mean.
    pub fn overall_mean(&self) -> Array1<f64> {
        self.mean_contribution
            .mean_axis(ndarray::Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.symbols.len()))
    }
}

impl RiskSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn annual_table(&self) -> AnnualTable {
        let n = self.symbols.len();
        let mut acc: BTreeMap<i32, (Array1<f64>, usize)> = BTreeMap::new();
        for (d, row) in self.dates.iter().zip(self.contributions.rows()) {
            let e = acc
                .entry(d.year())
                .or_insert_with(|| (Array1::zeros(n), 0));
            e.0 += &row;
            e.1 += 1;
        }
        let years: Vec<i32> = acc.keys().copied().collect();
        let mut mean = Array2::zeros((years.len(), n));
        for (k, (sum, cnt)) in acc.into_values().enumerate() {
            mean.row_mut(k).assign(&(sum / cnt as f64));
        }
        AnnualTable {
            symbols: self.symbols.clone(),
            years,
            mean_contribution: mean,
        }
    }

    pub fn scores_csv(&self) -> String {
        let mut out = String::from("date,score,negative_ratio\n");
        for ((d, s), r) in self.dates.iter().zip(&self.score).zip(&self.negative_ratio) {
            out.push_str(&format!(
                "{},{},{}\n",
                d.format(DATE_FORMAT),
                fmt_f64(*s),
                fmt_f64(*r)
            ));
        }
        out
    }

    pub fn contributions_csv(&self) -> String {
        let mut out = String::from("date,symbol,contribution\n");
        for (d, row) in self.dates.iter().zip(self.contributions.rows()) {
            let d = d.format(DATE_FORMAT).to_string();
            for (s, c) in self.symbols.iter().zip(row) {
                out.push_str(&format!("{d},{s},{}\n", fmt_f64(*c)));
            }
        }
        out
    }
}

impl AnnualTable {
    /// Symbol rows by year columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("symbol");
        for y in &self.years {
            out.push_str(&format!(",{y}"));
        }
        out.push('\n');
        for (i, s) in self.symbols.iter().enumerate() {
            out.push_str(s);
            for k in 0..self.years.len() {
                out.push(',');
                out.push_str(&fmt_f64(self.mean_contribution[[k, i]]));
            }
            out.push('\n');
        }
        out
    }
}

/// Rows of a scores file written by [`RiskSeries::scores_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub dates: Vec<NaiveDate>,
    pub score: Vec<f64>,
    pub negative_ratio: Vec<f64>,
}

fn parse_error(path: &Path, line: u64, field: &str, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.into(),
        message,
    }
}

pub fn read_scores_csv(path: &Path) -> Result<ScoreTable> {
    let mut t = ScoreTable {
        dates: Vec::new(),
        score: Vec::new(),
        negative_ratio: Vec::new(),
    };
    for (line, f) in read_long(path, "date,score,negative_ratio")? {
        if f.len() != 3 {
            return Err(parse_error(path, line, "<row>", "expected 3 fields".into()));
        }
        t.dates.push(parse_date(&f[0]).map_err(|m| parse_error(path, line, "date", m))?);
        t.score.push(parse_f64(&f[1]).map_err(|m| parse_error(path, line, "score", m))?);
        t.negative_ratio
            .push(parse_f64(&f[2]).map_err(|m| parse_error(path, line, "negative_ratio", m))?);
    }
    Ok(t)
}

/// One date's contributions from a file written by
/// [`RiskSeries::contributions_csv`], ordered like `symbols`.
pub fn read_contributions_on(path: &Path, symbols: &[String], date: NaiveDate) -> Result<Option<Vec<f64>>> {
    let idx: HashMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out: Option<Vec<Option<f64>>> = None;
    for (line, f) in read_long(path, "date,symbol,contribution")? {
        if f.len() != 3 {
            return Err(parse_error(path, line, "<row>", "expected 3 fields".into()));
        }
        if parse_date(&f[0]).map_err(|m| parse_error(path, line, "date", m))? != date {
            continue;
        }
        let i = *idx
            .get(f[1].as_str())
            .ok_or_else(|| parse_error(path, line, "symbol", format!("unknown symbol {}", f[1])))?;
        let v = parse_f64(&f[2]).map_err(|m| parse_error(path, line, "contribution", m))?;
        out.get_or_insert_with(|| vec![None; symbols.len()])[i] = Some(v);
    }
    match out {
        None => Ok(None),
        Some(row) => row
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::Input(format!(
                        "{}: no contribution for {} on {date}",
                        path.display(),
                        symbols[i]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    fn full(n: usize) -> SignedAdjacency {
        SignedAdjacency::from_matrix(
            day(),
            Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0 } else { 1 }),
        )
        .unwrap()
    }

    #[test]
    fn score_examples() {
        let c = array![1.0, 1.0, 1.0];
        assert_eq!(systemic_score(&full(3), c.view()).unwrap(), 6.0);
        assert_eq!(decompose_score(&full(3), c.view()).unwrap(), array![2.0, 2.0, 2.0]);

        let zero = SignedAdjacency::zeros(day(), 3);
        let c = array![5.0, 7.0, 11.0];
        assert_eq!(systemic_score(&zero, c.view()).unwrap(), 0.0);
        assert_eq!(decompose_score(&zero, c.view()).unwrap(), Array1::zeros(3));

        let neg = SignedAdjacency::from_matrix(day(), array![[0, -1], [-1, 0]]).unwrap();
        assert_eq!(systemic_score(&neg, array![2.0, 3.0].view()).unwrap(), -12.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            systemic_score(&full(3), array![1.0, 2.0].view()),
            Err(Error::Dimension(_))
        ));
        assert!(decompose_score(&full(2), array![1.0, -2.0].view()).is_err());
    }

    #[test]
    fn ratio_examples() {
        let cs = CorrelationSet::new(day(), 3, vec![-0.1, -0.2, -0.3]).unwrap();
        assert_eq!(negative_ratio(&cs), 1.0);
        let cs = CorrelationSet::new(day(), 3, vec![0.1, 0.0, 0.3]).unwrap();
        assert_eq!(negative_ratio(&cs), 0.0);
        let rho: Vec<f64> = (0..300).map(|k| if k < 45 { -0.5 } else { 0.5 }).collect();
        let cs = CorrelationSet::new(day(), 25, rho).unwrap();
        assert_eq!(negative_ratio(&cs), 0.15);
    }

    fn tiny_panel(dates: Vec<NaiveDate>, caps: Array2<f64>) -> ReturnPanel {
        let (t, n) = caps.dim();
        ReturnPanel::new(
            dates,
            (0..n).map(|i| format!("S{i}")).collect(),
            Array2::zeros((t, n)),
            caps,
        )
        .unwrap()
    }

    #[test]
    fn single_date_series() {
        let panel = tiny_panel(vec![day()], Array2::from_elem((1, 3), 1.0));
        let cs = CorrelationSet::new(day(), 3, vec![0.5, 0.5, -0.5]).unwrap();
        let s = risk_series(&[full(3)], &panel, &[cs], RiskOptions::default()).unwrap();
        assert_eq!(s.score, vec![6.0]);
        assert_eq!(s.contributions.row(0), array![2.0, 2.0, 2.0]);
        assert!((s.negative_ratio[0] - 1.0 / 3.0).abs() < 1e-15);

        let raw = risk_series(
            &[full(3)],
            &panel,
            &[CorrelationSet::new(day(), 3, vec![0.5; 3]).unwrap()],
            RiskOptions {
                euler_raw: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(raw.contributions.row(0).sum(), 12.0);

        let norm = risk_series(
            &[full(3)],
            &panel,
            &[CorrelationSet::new(day(), 3, vec![0.5; 3]).unwrap()],
            RiskOptions {
                normalize_caps: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((norm.score[0] - 6.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn misaligned_dates_are_named() {
        let d2 = day().succ_opt().unwrap();
        let panel = tiny_panel(vec![day(), d2], Array2::from_elem((2, 3), 1.0));
        let cs = CorrelationSet::new(day(), 3, vec![0.5; 3]).unwrap();
        let mut adj = full(3);
        adj.date = d2;
        let err = risk_series(&[adj], &panel, &[cs], RiskOptions::default()).unwrap_err();
        assert!(err.to_string().contains("2020-01-02"), "{err}");
    }

    #[test]
    fn annual_means() {
        let dates = vec![
            NaiveDate::from_ymd_opt(2019, 12, 30).unwrap(),
            NaiveDate::from_ymd_opt(2019, 12, 31).unwrap(),
            NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        ];
        let s = RiskSeries {
            dates,
            symbols: vec!["A".into(), "B".into()],
            score: vec![0.0; 3],
            contributions: array![[1.0, -2.0], [3.0, -4.0], [10.0, 0.0]],
            negative_ratio: vec![0.0; 3],
        };
        let t = s.annual_table();
        assert_eq!(t.years, vec![2019, 2020]);
        assert_eq!(t.mean_contribution, array![[2.0, -3.0], [10.0, 0.0]]);
        assert!(t.to_csv().starts_with("symbol,2019,2020\nA,"));
    }

    #[test]
    fn csv_readers_round_trip() {
        let d1 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let d2 = d1.succ_opt().unwrap();
        let s = RiskSeries {
            dates: vec![d1, d2],
            symbols: vec!["A".into(), "B".into()],
            score: vec![1.0 / 3.0, 2e11],
            contributions: array![[0.1, -0.2], [1e11, 1e11]],
            negative_ratio: vec![0.0, 0.25],
        };
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("scores.csv");
        let cp = dir.path().join("contributions.csv");
        std::fs::write(&sp, s.scores_csv()).unwrap();
        std::fs::write(&cp, s.contributions_csv()).unwrap();
        let t = read_scores_csv(&sp).unwrap();
        assert_eq!((t.dates, t.score, t.negative_ratio), (s.dates.clone(), s.score.clone(), s.negative_ratio.clone()));
        assert_eq!(read_contributions_on(&cp, &s.symbols, d1).unwrap(), Some(vec![0.1, -0.2]));
        assert_eq!(read_contributions_on(&cp, &s.symbols, d2.succ_opt().unwrap()).unwrap(), None);
    }

    fn random_instance(n: usize, seed: u64) -> (SignedAdjacency, Array1<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::<i8>::zeros((n, n));
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(-1i8..=1);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        let caps = Array1::from_shape_fn(n, |_| 10f64.powf(rng.random_range(6.0..12.0)));
        (SignedAdjacency::from_matrix(day(), a).unwrap(), caps)
    }

    proptest! {
        #[test]
        fn contributions_add_up(n in 2usize..30, seed in any::<u64>()) {
            let (a, c) = random_instance(n, seed);
            let s = systemic_score(&a, c.view()).unwrap();
            let parts = decompose_score(&a, c.view()).unwrap();
            prop_assert!((parts.sum() - s).abs() / s.abs().max(1.0) <= 1e-9);
        }

        #[test]
        fn permutation_equivariance(n in 2usize..15, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (a, c) = random_instance(n, seed);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 1));
            let pa = Array2::from_shape_fn((n, n), |(i, j)| a.get(perm[i], perm[j]));
            let pa = SignedAdjacency::from_matrix(day(), pa).unwrap();
            let pc = Array1::from_shape_fn(n, |i| c[perm[i]]);
            let base = decompose_score(&a, c.view()).unwrap();
            let moved = decompose_score(&pa, pc.view()).unwrap();
            for i in 0..n {
                prop_assert!((moved[i] - base[perm[i]]).abs() <= 1e-9 * base[perm[i]].abs().max(1.0));
            }
        }
    }
}
