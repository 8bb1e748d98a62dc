//! Similarity network: cosine similarity between CoES risk-structure vectors,
//! breakpoint classification of the similarities, and the signed adjacency
//! matrix.
//!
//! Pairwise similarities are split by sign. Each signed group is sorted
//! ascending and mapped through `Phi(sqrt(N) * rho)`; the gaps between
//! neighbouring transformed values are then cut into two segments by an
//! exhaustive least-squares search restricted to the proportions
//! `[theta_bar, 1 - theta_bar]`. A cut after `s` gaps separates the group's
//! elements into ranks `0..s` and `s..`:
//!
//! - positive group: elements above the cut become `+1` edges,
//! - negative group: elements below the cut become `-1` edges,
//!
//! and everything else, including exact zeros, is `0`.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_long};
use crate::market_data::{parse_date, DATE_FORMAT};
use crate::tail::CoesMatrix;

/// Default trimming proportion for the breakpoint search.
pub const DEFAULT_THETA_BAR: f64 = 0.1;

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(nx > 0.0 && ny > 0.0) || !nx.is_finite() || !ny.is_finite() {
        return Err(Error::DegenerateRiskStructure { asset: None });
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// Similarities of every unordered asset pair at one date, ordered
/// `(0,1), (0,2), ..., (1,2), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub date: NaiveDate,
    n_assets: usize,
    rho: Vec<f64>,
}

impl CorrelationSet {
    pub fn new(date: NaiveDate, n_assets: usize, rho: Vec<f64>) -> Result<Self> {
        if n_assets < 2 {
            return Err(Error::Input(format!(
                "a network needs at least 2 assets, got {n_assets}"
            )));
        }
        let n = n_assets * (n_assets - 1) / 2;
        if rho.len() != n {
            return Err(Error::Dimension(format!(
                "{n_assets} assets need {n} similarities, got {}",
                rho.len()
            )));
        }
        if let Some(r) = rho.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
            return Err(Error::Input(format!("similarity {r} outside [-1, 1]")));
        }
        Ok(Self {
            date,
            n_assets,
            rho,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    /// Unordered pair `(i, j)`, `i < j`, at linear index `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        pair_of(self.n_assets, k)
    }

    pub fn index_of(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.n_assets;
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho[self.index_of(i, j)]
    }

    pub fn negative_count(&self) -> usize {
        self.rho.iter().filter(|r| **r < 0.0).count()
    }
}

fn pair_of(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i - 1;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    panic!("pair index out of range for {n} assets");
}

/// Cosine similarity between every pair of CoES rows.
pub fn correlation_set(coes: &CoesMatrix) -> Result<CorrelationSet> {
    let n = coes.n_assets();
    let rows: Vec<Vec<f64>> = coes.values.rows().into_iter().map(|r| r.to_vec()).collect();
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateRiskStructure {
            asset: Some(format!("#{i}")),
        });
    }
    let mut rho = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            rho.push(cosine_similarity(&rows[i], &rows[j])?);
        }
    }
    CorrelationSet::new(coes.date, n, rho)
}

/// As [`correlation_set`], naming a degenerate asset by symbol.
pub fn correlation_set_labeled(coes: &CoesMatrix, symbols: &[String]) -> Result<CorrelationSet> {
    correlation_set(coes).map_err(|e| match e {
        Error::DegenerateRiskStructure { asset: Some(a) } => {
            let name = a
                .trim_start_matches('#')
                .parse::<usize>()
                .ok()
                .and_then(|i| symbols.get(i))
                .cloned()
                .unwrap_or(a);
            Error::DegenerateRiskStructure {
                asset: Some(format!("{name} on {}", coes.date)),
            }
        }
        other => other,
    })
}

/// A signed group: `(similarity, pair index)` sorted ascending.
pub type Group = Vec<(f64, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    pub positive: Group,
    pub negative: Group,
    /// Pair indices with similarity exactly zero.
    pub zero: Vec<usize>,
}

pub fn split_groups(cs: &CorrelationSet) -> Groups {
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    let mut zero = Vec::new();
    for (k, &r) in cs.values().iter().enumerate() {
        if r > 0.0 {
            positive.push((r, k));
        } else if r < 0.0 {
            negative.push((r, k));
        } else {
            zero.push(k);
        }
    }
    let by_value = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    positive.sort_by(by_value);
    negative.sort_by(by_value);
    Groups {
        positive,
        negative,
        zero,
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi(sqrt(N) * rho)` elementwise; preserves ascending order.
pub fn phi_transform(group: &[f64], n_assets: usize) -> Vec<f64> {
    let scale = (n_assets as f64).sqrt();
    group.iter().map(|r| std_normal_cdf(scale * r)).collect()
}

/// Differences between neighbours; `None` for fewer than two values.
pub fn adjacent_gaps(phi: &[f64]) -> Option<Vec<f64>> {
    if phi.len() < 2 {
        return None;
    }
    Some(phi.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Best two-segment cut of a gap sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    /// Number of gaps in the first segment.
    pub index: usize,
    /// `index / gaps.len()`.
    pub theta: f64,
    /// Within-segment sum of squared deviations at the optimum.
    pub sse: f64,
}

fn floor_tol(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

fn ceil_tol(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Admissible cut positions `[ceil(theta_bar * m), floor((1 - theta_bar) * m)]`
/// for `m` gaps, restricted so both segments are non-empty.
pub fn admissible_splits(m: usize, theta_bar: f64) -> std::ops::RangeInclusive<usize> {
    let lo = ceil_tol(theta_bar * m as f64).max(1);
    let hi = floor_tol((1.0 - theta_bar) * m as f64).min(m.saturating_sub(1));
    lo..=hi
}

fn segment_sse(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Exhaustive least-squares search for the cut minimising the summed
/// within-segment squared deviations. Ties go to the smallest cut. `None`
/// when no admissible cut exists.
pub fn breakpoint_theta(gaps: &[f64], theta_bar: f64) -> Option<Split> {
    let m = gaps.len();
    if m < 2 || !(theta_bar > 0.0 && theta_bar < 0.5) {
        return None;
    }
    let mut best: Option<Split> = None;
    for s in admissible_splits(m, theta_bar) {
        let sse = segment_sse(&gaps[..s]) + segment_sse(&gaps[s..]);
        if best.is_none_or(|b| sse < b.sse) {
            best = Some(Split {
                index: s,
                theta: s as f64 / m as f64,
                sse,
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedAdjacency {
    pub date: NaiveDate,
    a: Array2<i8>,
}

impl SignedAdjacency {
    pub fn zeros(date: NaiveDate, n: usize) -> Self {
        Self {
            date,
            a: Array2::zeros((n, n)),
        }
    }

    /// Validates symmetry, zero diagonal and entries in {-1, 0, 1}.
    pub fn from_matrix(date: NaiveDate, a: Array2<i8>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::Dimension(format!("adjacency is {r}x{c}")));
        }
        for i in 0..r {
            if a[[i, i]] != 0 {
                return Err(Error::Input(format!("nonzero diagonal at {i}")));
            }
            for j in 0..r {
                if !(-1..=1).contains(&a[[i, j]]) || a[[i, j]] != a[[j, i]] {
                    return Err(Error::Input(format!(
                        "adjacency entry ({i}, {j}) is not a symmetric sign"
                    )));
                }
            }
        }
        Ok(Self { date, a })
    }

    fn set(&mut self, i: usize, j: usize, v: i8) {
        self.a[[i, j]] = v;
        self.a[[j, i]] = v;
    }

    pub fn n_assets(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &Array2<i8> {
        &self.a
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.a[[i, j]]
    }

    pub fn count(&self, sign: i8) -> usize {
        let n = self.n_assets();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.a[[i, j]] == sign)
            .count()
    }

    /// `(i, j, sign)` for every nonzero entry with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        let n = self.n_assets();
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = self.a[[i, j]];
                (v != 0).then_some((i, j, v))
            })
    }
}

/// Diagnostics of one date's classification.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointResult {
    pub theta_bar: f64,
    pub theta_plus: Option<f64>,
    pub theta_minus: Option<f64>,
    pub threshold_plus: Option<f64>,
    pub threshold_minus: Option<f64>,
    pub n1: usize,
    pub n2: usize,
    pub n_zero: usize,
    pub plus_edges: usize,
    pub minus_edges: usize,
}

impl BreakpointResult {
    pub fn n(&self) -> usize {
        self.n1 + self.n2 + self.n_zero
    }
}

/// Cut of a sorted signed group: `(split, number of gaps)`. Groups of fewer
/// than three members have no cut.
fn group_split(group: &Group, n_assets: usize, theta_bar: f64) -> Option<Split> {
    if group.len() < 3 {
        return None;
    }
    let values: Vec<f64> = group.iter().map(|g| g.0).collect();
    let gaps = adjacent_gaps(&phi_transform(&values, n_assets))?;
    breakpoint_theta(&gaps, theta_bar)
}

/// Breakpoint-classified signed adjacency for one date.
pub fn build_adjacency(cs: &CorrelationSet, theta_bar: f64) -> (SignedAdjacency, BreakpointResult) {
    let n = cs.n_assets();
    let groups = split_groups(cs);
    let mut adj = SignedAdjacency::zeros(cs.date, n);

    let plus = group_split(&groups.positive, n, theta_bar);
    let threshold_plus = plus.map(|s| groups.positive[s.index - 1].0);
    if let Some(thr) = threshold_plus {
        for &(r, k) in &groups.positive {
            if r > thr {
                let (i, j) = cs.pair(k);
                adj.set(i, j, 1);
            }
        }
    }

    let minus = group_split(&groups.negative, n, theta_bar);
    let threshold_minus = minus.map(|s| groups.negative[s.index].0);
    if let Some(thr) = threshold_minus {
        for &(r, k) in &groups.negative {
            if r < thr {
                let (i, j) = cs.pair(k);
                adj.set(i, j, -1);
            }
        }
    }

    let result = BreakpointResult {
        theta_bar,
        theta_plus: plus.map(|s| s.theta),
        theta_minus: minus.map(|s| s.theta),
        threshold_plus,
        threshold_minus,
        n1: groups.positive.len(),
        n2: groups.negative.len(),
        n_zero: groups.zero.len(),
        plus_edges: adj.count(1),
        minus_edges: adj.count(-1),
    };
    (adj, result)
}

/// Debugging fallback: `+1` above `plus`, `-1` below `minus`.
pub fn build_adjacency_fixed(
    cs: &CorrelationSet,
    plus: f64,
    minus: f64,
) -> (SignedAdjacency, BreakpointResult) {
    let n = cs.n_assets();
    let mut adj = SignedAdjacency::zeros(cs.date, n);
    for (k, &r) in cs.values().iter().enumerate() {
        let (i, j) = cs.pair(k);
        if r > plus {
            adj.set(i, j, 1);
        } else if r < minus {
            adj.set(i, j, -1);
        }
    }
    let groups = split_groups(cs);
    let result = BreakpointResult {
        theta_bar: f64::NAN,
        theta_plus: None,
        theta_minus: None,
        threshold_plus: Some(plus),
        threshold_minus: Some(minus),
        n1: groups.positive.len(),
        n2: groups.negative.len(),
        n_zero: groups.zero.len(),
        plus_edges: adj.count(1),
        minus_edges: adj.count(-1),
    };
    (adj, result)
}

/// How similarities are turned into signed edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classifier {
    Breakpoint { theta_bar: f64 },
    Fixed { plus: f64, minus: f64 },
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier::Breakpoint {
            theta_bar: DEFAULT_THETA_BAR,
        }
    }
}

impl Classifier {
    pub fn classify(&self, cs: &CorrelationSet) -> (SignedAdjacency, BreakpointResult) {
        match *self {
            Classifier::Breakpoint { theta_bar } => build_adjacency(cs, theta_bar),
            Classifier::Fixed { plus, minus } => build_adjacency_fixed(cs, plus, minus),
        }
    }
}

// ---- exports ----

fn date_str(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// `date,i,j,a` for nonzero entries with `i < j`.
pub fn adjacency_to_csv(symbols: &[String], adjs: &[SignedAdjacency]) -> String {
    let mut out = String::from("date,i,j,a\n");
    for a in adjs {
        let d = date_str(a.date);
        for (i, j, v) in a.edges() {
            out.push_str(&format!("{d},{},{},{v}\n", symbols[i], symbols[j]));
        }
    }
    out
}

/// Dense `N x N` matrix with a `symbol` header column.
pub fn adjacency_dense_csv(symbols: &[String], adj: &SignedAdjacency) -> String {
    let mut out = String::from("symbol");
    for s in symbols {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    for (i, s) in symbols.iter().enumerate() {
        out.push_str(s);
        for j in 0..symbols.len() {
            out.push_str(&format!(",{}", adj.get(i, j)));
        }
        out.push('\n');
    }
    out
}

/// `date,i,j,rho` for every pair.
pub fn similarity_to_csv(symbols: &[String], sets: &[CorrelationSet]) -> String {
    let mut out = String::from("date,i,j,rho\n");
    for cs in sets {
        let d = date_str(cs.date);
        for (k, r) in cs.values().iter().enumerate() {
            let (i, j) = cs.pair(k);
            out.push_str(&format!("{d},{},{},{}\n", symbols[i], symbols[j], fmt_f64(*r)));
        }
    }
    out
}

pub const BREAKPOINT_HEADER: &str = "date,theta_bar,theta_plus,theta_minus,threshold_plus,threshold_minus,n1,n2,n_zero,n,plus_edges,minus_edges";

pub fn breakpoints_to_csv(rows: &[(NaiveDate, BreakpointResult)]) -> String {
    let mut out = String::from(BREAKPOINT_HEADER);
    out.push('\n');
    for (d, b) in rows {
        let theta_bar = if b.theta_bar.is_nan() {
            String::new()
        } else {
            fmt_f64(b.theta_bar)
        };
        out.push_str(&format!(
            "{},{theta_bar},{},{},{},{},{},{},{},{},{},{}\n",
            date_str(*d),
            opt(b.theta_plus),
            opt(b.theta_minus),
            opt(b.threshold_plus),
            opt(b.threshold_minus),
            b.n1,
            b.n2,
            b.n_zero,
            b.n(),
            b.plus_edges,
            b.minus_edges
        ));
    }
    out
}

fn symbol_index(symbols: &[String]) -> HashMap<&str, usize> {
    symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

/// Reads `date,i,j,a` back into dense matrices for the listed dates.
pub fn adjacency_from_csv(
    path: &Path,
    symbols: &[String],
    dates: &[NaiveDate],
) -> Result<Vec<SignedAdjacency>> {
    let idx = symbol_index(symbols);
    let mut by_date: HashMap<NaiveDate, SignedAdjacency> = dates
        .iter()
        .map(|d| (*d, SignedAdjacency::zeros(*d, symbols.len())))
        .collect();
    for (line, f) in read_long(path, "date,i,j,a")? {
        let perr = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.into(),
            message,
        };
        if f.len() != 4 {
            return Err(perr("<row>", "expected 4 fields".into()));
        }
        let d = parse_date(&f[0]).map_err(|m| perr("date", m))?;
        let i = *idx.get(f[1].as_str()).ok_or_else(|| perr("i", format!("unknown symbol {}", f[1])))?;
        let j = *idx.get(f[2].as_str()).ok_or_else(|| perr("j", format!("unknown symbol {}", f[2])))?;
        let v: i8 = f[3]
            .trim()
            .parse()
            .ok()
            .filter(|v: &i8| *v == 1 || *v == -1)
            .ok_or_else(|| perr("a", format!("`{}` is not +1 or -1", f[3])))?;
        if i == j {
            return Err(perr("j", "self-loop".into()));
        }
        let adj = by_date
            .get_mut(&d)
            .ok_or_else(|| perr("date", format!("{d} is not a network date")))?;
        adj.set(i, j, v);
    }
    Ok(dates.iter().map(|d| by_date.remove(d).expect("seeded")).collect())
}

/// Reads `date,i,j,rho` back. Dates come out in file order.
pub fn similarity_from_csv(path: &Path, symbols: &[String]) -> Result<Vec<CorrelationSet>> {
    let n = symbols.len();
    let idx = symbol_index(symbols);
    let mut order: Vec<NaiveDate> = Vec::new();
    let mut by_date: HashMap<NaiveDate, Vec<Option<f64>>> = HashMap::new();
    let template = CorrelationSet::new(NaiveDate::MIN, n, vec![0.0; n * (n.max(1) - 1) / 2])?;
    for (line, f) in read_long(path, "date,i,j,rho")? {
        let perr = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.into(),
            message,
        };
        if f.len() != 4 {
            return Err(perr("<row>", "expected 4 fields".into()));
        }
        let d = parse_date(&f[0]).map_err(|m| perr("date", m))?;
        let i = *idx.get(f[1].as_str()).ok_or_else(|| perr("i", format!("unknown symbol {}", f[1])))?;
        let j = *idx.get(f[2].as_str()).ok_or_else(|| perr("j", format!("unknown symbol {}", f[2])))?;
        let r = parse_f64(&f[3]).map_err(|m| perr("rho", m))?;
        if i == j {
            return Err(perr("j", "self-pair".into()));
        }
        let slot = by_date.entry(d).or_insert_with(|| {
            order.push(d);
            vec![None; template.len()]
        });
        slot[template.index_of(i, j)] = Some(r);
    }
    order
        .into_iter()
        .map(|d| {
            let vals = by_date.remove(&d).expect("seeded");
            let rho = vals
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Input(format!("similarities for {d} are incomplete")))?;
            CorrelationSet::new(d, n, rho)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    /// Independent exhaustive minimiser: every cut 1..m, admissibility judged
    /// on the proportion itself, fresh segment sums per cut.
    fn oracle(gaps: &[f64], theta_bar: f64) -> Option<(usize, f64)> {
        let m = gaps.len();
        let mut best: Option<(usize, f64)> = None;
        for s in 1..m {
            let share = s as f64 / m as f64;
            if share < theta_bar - 1e-9 / m as f64 || share > 1.0 - theta_bar + 1e-9 / m as f64 {
                continue;
            }
            let mut total = 0.0;
            for seg in [&gaps[..s], &gaps[s..]] {
                let mut sum = 0.0;
                for g in seg.iter() {
                    sum += g;
                }
                let mu = sum / seg.len() as f64;
                let mut acc = 0.0;
                for g in seg.iter() {
                    acc += (g - mu) * (g - mu);
                }
                total += acc;
            }
            match best {
                Some((_, b)) if total >= b => {}
                _ => best = Some((s, total)),
            }
        }
        best
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::DegenerateRiskStructure { .. })
        ));
    }

    #[test]
    fn pair_indexing_is_a_bijection() {
        let cs = CorrelationSet::new(day(), 7, vec![0.0; 21]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for k in 0..21 {
            let (i, j) = cs.pair(k);
            assert!(i < j && j < 7);
            assert_eq!(cs.index_of(i, j), k);
            assert_eq!(cs.index_of(j, i), k);
            assert!(seen.insert((i, j)));
        }
    }

    fn coes(rows: Vec<Vec<f64>>) -> CoesMatrix {
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        CoesMatrix {
            date: day(),
            values: Array2::from_shape_vec((n, n), flat).unwrap(),
            var: Array1::zeros(n),
        }
    }

    #[test]
    fn correlation_set_counts_and_identical_rows() {
        let m = coes(vec![
            vec![-1.0, -0.5, 0.2],
            vec![-1.0, -0.5, 0.2],
            vec![0.3, 0.1, -2.0],
        ]);
        let cs = correlation_set(&m).unwrap();
        assert_eq!(cs.len(), 3);
        assert!((cs.get(0, 1) - 1.0).abs() < 1e-15);

        let big = coes((0..25).map(|i| (0..25).map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0).collect()).collect());
        assert_eq!(correlation_set(&big).unwrap().len(), 300);
    }

    #[test]
    fn zero_row_is_named() {
        let m = coes(vec![vec![1.0, 2.0], vec![0.0, 0.0]]);
        let err = correlation_set_labeled(&m, &["BTC".into(), "DEAD".into()]).unwrap_err();
        assert!(err.to_string().contains("DEAD"), "{err}");
    }

    #[test]
    fn split_groups_by_sign() {
        let cs = CorrelationSet::new(day(), 3, vec![0.5, -0.2, 0.9]).unwrap();
        let g = split_groups(&cs);
        assert_eq!(g.positive, vec![(0.5, 0), (0.9, 2)]);
        assert_eq!(g.negative, vec![(-0.2, 1)]);
        assert!(g.zero.is_empty());

        let cs = CorrelationSet::new(day(), 3, vec![0.5, 0.0, 0.9]).unwrap();
        let g = split_groups(&cs);
        assert!(g.negative.is_empty());
        assert_eq!(g.zero, vec![1]);
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_transform(&[0.0], 9), vec![0.5]);
        // reference (mpmath): Phi(5) = 0.99999971334842812, Phi(-5) = 2.8665157187919391e-7
        let hi = phi_transform(&[1.0], 25)[0];
        let lo = phi_transform(&[-1.0], 25)[0];
        assert!((hi - 0.999_999_713_348_428_1).abs() < 1e-15);
        assert!((lo / 2.866_515_718_791_939e-7 - 1.0).abs() < 1e-12, "{lo:e}");
        let xs = [-0.9, -0.1, 0.0, 0.3, 0.31, 0.99];
        let ph = phi_transform(&xs, 25);
        assert!(ph.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn gap_examples() {
        let g = adjacent_gaps(&[0.1, 0.4, 0.9]).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
        assert_eq!(adjacent_gaps(&[0.7; 4]).unwrap(), vec![0.0; 3]);
        assert_eq!(adjacent_gaps(&[0.2]), None);
    }

    #[test]
    fn breakpoint_examples() {
        let s = breakpoint_theta(&[1.0, 1.0, 1.0, 10.0, 10.0, 10.0], 0.1).unwrap();
        assert_eq!((s.index, s.theta, s.sse), (3, 0.5, 0.0));
        assert_eq!(oracle(&[1.0, 1.0, 1.0, 10.0, 10.0, 10.0], 0.1), Some((3, 0.0)));

        let s = breakpoint_theta(&[2.0; 4], 0.1).unwrap();
        assert_eq!(s.index, 1);

        let g = [5.0, 1.0, 1.0, 1.0, 1.0, 5.0];
        let s = breakpoint_theta(&g, 0.1).unwrap();
        assert_eq!(Some((s.index, s.sse)), oracle(&g, 0.1));
    }

    #[test]
    fn breakpoint_range_can_be_empty() {
        assert_eq!(breakpoint_theta(&[1.0], 0.1), None);
        assert_eq!(admissible_splits(10, 0.1), 1..=9);
        assert_eq!(admissible_splits(10, 0.2), 2..=8);
        assert_eq!(admissible_splits(300, 0.1), 30..=270);
    }

    /// Five assets: seven strong pairs near 0.95 and a trio near 0.1.
    fn cluster_set() -> CorrelationSet {
        // pairs: (0,1)(0,2)(0,3)(0,4)(1,2)(1,3)(1,4)(2,3)(2,4)(3,4)
        let rho = vec![0.95, 0.951, 0.952, 0.10, 0.953, 0.954, 0.12, 0.955, 0.956, 0.15];
        CorrelationSet::new(day(), 5, rho).unwrap()
    }

    #[test]
    fn tight_cluster_becomes_positive_edges() {
        let cs = cluster_set();
        let (adj, bp) = build_adjacency(&cs, 0.1);

        let values: Vec<f64> = split_groups(&cs).positive.iter().map(|g| g.0).collect();
        let gaps = adjacent_gaps(&phi_transform(&values, 5)).unwrap();
        let (s, _) = oracle(&gaps, 0.1).unwrap();
        assert_eq!(s, 3);

        for k in 0..cs.len() {
            let (i, j) = cs.pair(k);
            let expect = if cs.values()[k] > 0.5 { 1 } else { 0 };
            assert_eq!(adj.get(i, j), expect, "pair ({i},{j})");
        }
        assert_eq!(bp.n1, 10);
        assert_eq!(bp.threshold_plus, Some(0.15));
        assert_eq!(bp.plus_edges, 7);
        assert_eq!(bp.theta_minus, None);
    }

    #[test]
    fn two_assets_have_no_edges() {
        let cs = CorrelationSet::new(day(), 2, vec![0.99]).unwrap();
        let (adj, bp) = build_adjacency(&cs, 0.1);
        assert_eq!(adj.count(1) + adj.count(-1), 0);
        assert_eq!((bp.theta_plus, bp.threshold_plus), (None, None));
    }

    #[test]
    fn negative_edges_sit_below_the_cut() {
        // four assets, every pair negative with a clear low cluster
        let rho = vec![-0.90, -0.91, -0.10, -0.92, -0.12, -0.11];
        let cs = CorrelationSet::new(day(), 4, rho).unwrap();
        let (adj, bp) = build_adjacency(&cs, 0.1);
        assert_eq!(bp.n2, 6);
        let thr = bp.threshold_minus.unwrap();
        for k in 0..cs.len() {
            let (i, j) = cs.pair(k);
            let expect = if cs.values()[k] < thr { -1 } else { 0 };
            assert_eq!(adj.get(i, j), expect);
        }
        assert!(adj.count(-1) >= 1);
        assert_eq!(adj.count(1), 0);
    }

    #[test]
    fn fixed_threshold_fallback() {
        let cs = CorrelationSet::new(day(), 3, vec![0.5, -0.6, 0.1]).unwrap();
        let (adj, bp) = build_adjacency_fixed(&cs, 0.3, -0.3);
        assert_eq!(adj.get(0, 1), 1);
        assert_eq!(adj.get(0, 2), -1);
        assert_eq!(adj.get(1, 2), 0);
        assert_eq!((bp.plus_edges, bp.minus_edges), (1, 1));
    }

    #[test]
    fn csv_round_trips() {
        let cs = cluster_set();
        let (adj, _) = build_adjacency(&cs, 0.1);
        let syms: Vec<String> = (0..5).map(|i| format!("S{i}")).collect();
        let dir = tempfile::tempdir().unwrap();

        let p = dir.path().join("adj.csv");
        std::fs::write(&p, adjacency_to_csv(&syms, std::slice::from_ref(&adj))).unwrap();
        let back = adjacency_from_csv(&p, &syms, &[day()]).unwrap();
        assert_eq!(back, vec![adj]);

        let p = dir.path().join("sim.csv");
        std::fs::write(&p, similarity_to_csv(&syms, std::slice::from_ref(&cs))).unwrap();
        assert_eq!(similarity_from_csv(&p, &syms).unwrap(), vec![cs]);
    }

    proptest! {
        #[test]
        fn breakpoint_matches_oracle(gaps in prop::collection::vec(0.0f64..1.0, 2..50), theta_bar in 0.01f64..0.49) {
            let got = breakpoint_theta(&gaps, theta_bar).map(|s| (s.index, s.sse));
            prop_assert_eq!(got, oracle(&gaps, theta_bar));
        }

        #[test]
        fn cosine_scale_invariance(
            xy in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..30),
            c in 1e-3f64..1e3,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
            prop_assume!(x.iter().any(|v| v.abs() > 1e-6) && y.iter().any(|v| v.abs() > 1e-6));
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            let a = cosine_similarity(&x, &y).unwrap();
            let b = cosine_similarity(&scaled, &y).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn adjacency_is_well_formed(n in 2usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rho: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let cs = CorrelationSet::new(day(), n, rho).unwrap();
            let (adj, bp) = build_adjacency(&cs, 0.1);
            prop_assert!(SignedAdjacency::from_matrix(day(), adj.matrix().clone()).is_ok());
            prop_assert_eq!(bp.n(), cs.len());
            prop_assert_eq!(bp.n2, cs.negative_count());
        }
    }
}
