//! Driver regression: OLS of a risk series on exogenous covariates with
//! Newey–West (Bartlett kernel) standard errors.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::market_data::read_matrix_csv;
use crate::risk::RiskSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// `dates.len() x names.len()`.
    pub values: Array2<f64>,
}

impl CovariateTable {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (dates.len(), names.len()) {
            return Err(Error::Dimension(format!(
                "covariate table with {} dates and {} names got values {:?}",
                dates.len(),
                names.len(),
                values.dim()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "covariate dates not strictly increasing at {}",
                w[1]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("covariate table contains non-finite values".into()));
        }
        Ok(Self {
            dates,
            names,
            values,
        })
    }

    /// `date,<name1>,<name2>,...`
    pub fn read_csv(path: &Path) -> Result<Self> {
        let (dates, names, values) = read_matrix_csv(path)?;
        Self::new(dates, names, values)
    }

    /// Replaces the named columns by `ln(1 + x)`. Intended for cumulative
    /// case counts.
    pub fn log1p_columns(&mut self, columns: &[String]) -> Result<()> {
        for c in columns {
            let k = self
                .names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::Config(format!("no covariate named {c}")))?;
            for v in self.values.column_mut(k) {
                if *v < 0.0 {
                    return Err(Error::Input(format!("negative count {v} in {c}")));
                }
                *v = v.ln_1p();
            }
        }
        Ok(())
    }

    /// Columns whose name mentions case counts.
    pub fn case_columns(&self) -> Vec<String> {
        self.names
            .iter()
            .filter(|n| n.to_ascii_lowercase().contains("cases"))
            .cloned()
            .collect()
    }
}

/// Regression inputs after joining and lagging.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub dates: Vec<NaiveDate>,
    /// Column names; the first is `intercept`.
    pub names: Vec<String>,
    pub y: Array1<f64>,
    pub x: Array2<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Response {
    #[default]
    Score,
    NegativeRatio,
}

/// Joins `series` to `table` on date. A covariate with lag `L` contributes
/// its value `L` table rows before the matched date.
pub fn align_covariates(
    series: &RiskSeries,
    response: Response,
    table: &CovariateTable,
    lags: &HashMap<String, usize>,
) -> Result<Design> {
    let y = match response {
        Response::Score => &series.score,
        Response::NegativeRatio => &series.negative_ratio,
    };
    align_series(&series.dates, y, table, lags)
}

pub fn align_series(
    dates: &[NaiveDate],
    y: &[f64],
    table: &CovariateTable,
    lags: &HashMap<String, usize>,
) -> Result<Design> {
    if let Some(unknown) = lags.keys().find(|k| !table.names.contains(k)) {
        return Err(Error::Config(format!("lag given for unknown covariate {unknown}")));
    }
    let lag: Vec<usize> = table
        .names
        .iter()
        .map(|n| lags.get(n).copied().unwrap_or(0))
        .collect();
    let max_lag = lag.iter().copied().max().unwrap_or(0);

    let mut rows = Vec::new();
    for (d, v) in dates.iter().zip(y) {
        if let Ok(r) = table.dates.binary_search(d) {
            if r >= max_lag {
                rows.push((*d, *v, r));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Input(
            "risk series and covariates have no overlapping dates after lagging".into(),
        ));
    }

    let k = table.names.len() + 1;
    let mut x = Array2::zeros((rows.len(), k));
    for (t, (_, _, r)) in rows.iter().enumerate() {
        x[[t, 0]] = 1.0;
        for (c, l) in lag.iter().enumerate() {
            x[[t, c + 1]] = table.values[[r - l, c]];
        }
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(table.names.iter().map(|n| match lags.get(n) {
        Some(l) if *l > 0 => format!("{n}_lag{l}"),
        _ => n.clone(),
    }));
    Ok(Design {
        dates: rows.iter().map(|r| r.0).collect(),
        names,
        y: rows.iter().map(|r| r.1).collect(),
        x,
    })
}

/// `floor(4 (T / 100)^(2/9))`.
pub fn default_bandwidth(n_obs: usize) -> usize {
    (4.0 * (n_obs as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub bandwidth: usize,
    pub residuals: Vec<f64>,
}

impl Design {
    pub fn fit(&self, bandwidth: Option<usize>) -> Result<Regression> {
        let l = bandwidth.unwrap_or_else(|| default_bandwidth(self.y.len()));
        ols_hac(self.y.view(), self.x.view(), &self.names, l)
    }
}

fn to_dmatrix(x: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = x.dim();
    DMatrix::from_fn(r, c, |i, j| x[[i, j]])
}

/// Least squares via Householder QR, with Newey–West covariance
/// `B S B`, `B = (X'X)^-1`,
/// `S = sum_t u_t^2 x_t x_t' + sum_{l=1..L} (1 - l/(L+1)) sum_t u_t u_{t-l} (x_t x_{t-l}' + x_{t-l} x_t')`.
/// No small-sample scaling is applied, so `L = 0` gives White (HC0) errors.
pub fn ols_hac(
    y: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    names: &[String],
    bandwidth: usize,
) -> Result<Regression> {
    let (t, k) = x.dim();
    if y.len() != t {
        return Err(Error::Dimension(format!("{} responses for {t} design rows", y.len())));
    }
    if names.len() != k {
        return Err(Error::Dimension(format!("{} names for {k} columns", names.len())));
    }
    if t <= k {
        return Err(Error::Input(format!(
            "{t} observations cannot identify {k} coefficients"
        )));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("regression inputs contain non-finite values".into()));
    }

    let xm = to_dmatrix(x);
    let yv = DVector::from_iterator(t, y.iter().copied());
    let qr = xm.clone().qr();
    let r = qr.r();

    let collinear: Vec<String> = (0..k)
        .filter(|&j| {
            let norm = xm.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm
        })
        .map(|j| names[j].clone())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient {
            columns: names.to_vec(),
        })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient {
            columns: names.to_vec(),
        })?;
    let bread = &r_inv * r_inv.transpose();

    let resid = &yv - &xm * &beta;

    let mut meat = DMatrix::<f64>::zeros(k, k);
    for s in 0..t {
        let xs = xm.row(s).transpose();
        meat += (resid[s] * resid[s]) * &xs * xs.transpose();
    }
    let lmax = bandwidth.min(t - 1);
    for l in 1..=lmax {
        let w = 1.0 - l as f64 / (lmax as f64 + 1.0);
        let mut gamma = DMatrix::<f64>::zeros(k, k);
        for s in l..t {
            let a = xm.row(s).transpose();
            let b = xm.row(s - l).transpose();
            gamma += (resid[s] * resid[s - l]) * &a * b.transpose();
        }
        meat += w * (&gamma + gamma.transpose());
    }
    let cov = &bread * meat * &bread;

    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let tstat: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    let dist = StudentsT::new(0.0, 1.0, (t - k) as f64).expect("positive degrees of freedom");
    let p: Vec<f64> = tstat
        .iter()
        .map(|z| {
            if z.is_finite() {
                2.0 * (1.0 - dist.cdf(z.abs()))
            } else {
                0.0
            }
        })
        .collect();

    let mean_y = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };

    Ok(Regression {
        names: names.to_vec(),
        coef,
        se,
        t: tstat,
        p,
        r_squared,
        n_obs: t,
        bandwidth: lmax,
        residuals: resid.iter().copied().collect(),
    })
}

impl Regression {
    /// `name,coef,se,t,p`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,coef,se,t,p\n");
        for j in 0..self.names.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.names[j],
                fmt_f64(self.coef[j]),
                fmt_f64(self.se[j]),
                fmt_f64(self.t[j]),
                fmt_f64(self.p[j])
            ));
        }
        out
    }

    pub fn report(&self) -> String {
        let mut out = format!(
            "OLS with Newey-West standard errors (Bartlett, L = {})\nobservations: {}\nR-squared: {:.6}\n\n",
            self.bandwidth, self.n_obs, self.r_squared
        );
        let w = self.names.iter().map(String::len).max().unwrap_or(4).max(4);
        out.push_str(&format!(
            "{:<w$}  {:>14}  {:>14}  {:>9}  {:>8}\n",
            "name", "coef", "se", "t", "p"
        ));
        for j in 0..self.names.len() {
            out.push_str(&format!(
                "{:<w$}  {:>14.6e}  {:>14.6e}  {:>9.3}  {:>8.4}\n",
                self.names[j], self.coef[j], self.se[j], self.t[j], self.p[j]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("x{j}")).collect()
    }

    fn days(n: usize) -> Vec<NaiveDate> {
        (0..n)
            .map(|k| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(k as u64))
            .collect()
    }

    #[test]
    fn exact_fit() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let x = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { 1.0 } else { xs[i] });
        let y: Array1<f64> = xs.iter().map(|v| 2.0 * v).collect();
        let fit = ols_hac(y.view(), x.view(), &names(2), 2).unwrap();
        assert!(fit.coef[0].abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = array![1.0, 4.0, 2.0, 7.0];
        let x = Array2::ones((4, 1));
        let fit = ols_hac(y.view(), x.view(), &names(1), 0).unwrap();
        assert!((fit.coef[0] - 3.5).abs() < 1e-14);
    }

    #[test]
    fn collinear_column_is_named() {
        let x = Array2::from_shape_fn((6, 3), |(i, j)| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64 + 1.0,
        });
        let y = Array1::from_shape_fn(6, |i| i as f64);
        let cols = vec!["intercept".to_string(), "oil".into(), "oil_scaled".into()];
        match ols_hac(y.view(), x.view(), &cols, 1) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["oil_scaled"]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    fn noisy(t: usize, seed: u64) -> (Array1<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((t, 3), |(_, j)| if j == 0 { 1.0 } else { rng.sample(n) * (j as f64 * 3.0) });
        let y = Array1::from_shape_fn(t, |i| 0.3 + x[[i, 1]] - 0.2 * x[[i, 2]] + rng.sample(n) * (1.0 + x[[i, 1]].abs()));
        (y, x)
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let (y, x) = noisy(300, 4);
        let fit = ols_hac(y.view(), x.view(), &names(3), 4).unwrap();
        for j in 0..3 {
            let col = x.column(j);
            let dot: f64 = col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            let scale = col.dot(&col).sqrt() * fit.residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-8 * scale, "column {j}: {dot}");
        }
    }

    #[test]
    fn zero_bandwidth_is_white() {
        let (y, x) = noisy(200, 11);
        let fit = ols_hac(y.view(), x.view(), &names(3), 0).unwrap();

        // reference: normal equations with an explicit inverse
        let xm = to_dmatrix(x.view());
        let yv = DVector::from_iterator(200, y.iter().copied());
        let xtx_inv = (xm.transpose() * &xm).try_inverse().unwrap();
        let beta = &xtx_inv * xm.transpose() * &yv;
        let u = &yv - &xm * &beta;
        let mut meat = DMatrix::zeros(3, 3);
        for s in 0..200 {
            let r = xm.row(s).transpose();
            meat += u[s] * u[s] * &r * r.transpose();
        }
        let v = &xtx_inv * meat * &xtx_inv;
        for j in 0..3 {
            assert!((fit.coef[j] - beta[j]).abs() <= 1e-8 * beta[j].abs().max(1.0));
            let white = v[(j, j)].sqrt();
            assert!((fit.se[j] - white).abs() <= 1e-10 * white, "{} vs {white}", fit.se[j]);
        }
    }

    #[test]
    fn affine_rescaling_of_a_covariate() {
        let (y, x) = noisy(150, 5);
        let base = ols_hac(y.view(), x.view(), &names(3), 3).unwrap();
        let mut x2 = x.clone();
        x2.column_mut(1).mapv_inplace(|v| 1000.0 * v + 7.0);
        let moved = ols_hac(y.view(), x2.view(), &names(3), 3).unwrap();
        assert!((moved.coef[1] * 1000.0 - base.coef[1]).abs() <= 1e-10 * base.coef[1].abs());
        for (a, b) in base.residuals.iter().zip(&moved.residuals) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(default_bandwidth(100), 4);
        assert_eq!(default_bandwidth(500), 5);
        assert_eq!(default_bandwidth(1211), 6);
    }

    fn table() -> CovariateTable {
        CovariateTable::new(
            days(20),
            vec!["oil".into(), "cases".into()],
            Array2::from_shape_fn((20, 2), |(i, j)| (i * 10 + j) as f64),
        )
        .unwrap()
    }

    #[test]
    fn alignment_rows_and_lags() {
        let y: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let d = align_series(&days(20), &y, &table(), &HashMap::new()).unwrap();
        assert_eq!(d.y.len(), 20);
        assert_eq!(d.names, vec!["intercept", "oil", "cases"]);

        let lags = HashMap::from([("oil".to_string(), 7)]);
        let d = align_series(&days(20), &y, &table(), &lags).unwrap();
        assert_eq!(d.y.len(), 13);
        assert_eq!(d.names[1], "oil_lag7");
        // first kept row is day 7; oil lagged 7 rows is row 0
        assert_eq!(d.x[[0, 1]], 0.0);
        assert_eq!(d.x[[0, 2]], 71.0);
    }

    #[test]
    fn disjoint_calendars_fail() {
        let later: Vec<NaiveDate> = days(60)[40..].to_vec();
        let y = vec![0.0; 20];
        assert!(align_series(&later, &y, &table(), &HashMap::new()).is_err());
    }

    #[test]
    fn case_columns_and_log_transform() {
        let mut t = table();
        assert_eq!(t.case_columns(), vec!["cases"]);
        t.log1p_columns(&t.case_columns()).unwrap();
        assert!((t.values[[1, 1]] - 11f64.ln_1p()).abs() < 1e-15);
    }
}
