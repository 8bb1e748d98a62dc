//! Synthetic one-factor markets with planted dependence.
//!
//! Returns follow `r[t][i] = beta[i] * f[t] + e[t][i]` with independent
//! common factor `f` and idiosyncratic noise `e`. Caps are constant within a
//! regime. Generation is single-threaded and fully determined by the seed.

use std::str::FromStr;

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::error::{Error, Result};
use crate::market_data::{AssetRecord, ReturnPanel};

/// Shape of the unit-variance innovations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Innovation {
    Gaussian,
    /// Student-t with `df > 2`, rescaled to unit variance.
    StudentT { df: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub symbols: Vec<String>,
    pub betas: Vec<f64>,
    pub idio_vol: Vec<f64>,
    pub factor_vol: f64,
    pub caps: Vec<f64>,
    pub seed: u64,
    /// Number of return days.
    pub horizon: usize,
    pub innovation: Innovation,
    /// Day before the first return; prices start at 100 here.
    pub base_date: NaiveDate,
}

fn default_symbols(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i:02}")).collect()
}

impl FactorSpec {
    /// Unit betas, 2% idiosyncratic and 3% factor volatility, equal caps.
    pub fn new(n_assets: usize, horizon: usize, seed: u64) -> Self {
        Self {
            symbols: default_symbols(n_assets),
            betas: vec![1.0; n_assets],
            idio_vol: vec![0.02; n_assets],
            factor_vol: 0.03,
            caps: vec![1e9; n_assets],
            seed,
            horizon,
            innovation: Innovation::Gaussian,
            base_date: NaiveDate::from_ymd_opt(2018, 7, 1).expect("valid date"),
        }
    }

    pub fn n_assets(&self) -> usize {
        self.betas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.betas.len();
        if n == 0 {
            return Err(Error::Config("factor spec has no assets".into()));
        }
        if self.idio_vol.len() != n || self.caps.len() != n || self.symbols.len() != n {
            return Err(Error::Config(format!(
                "factor spec lengths disagree: {} betas, {} vols, {} caps, {} symbols",
                n,
                self.idio_vol.len(),
                self.caps.len(),
                self.symbols.len()
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Config(format!("horizon {} < 2", self.horizon)));
        }
        if self.factor_vol.is_nan()
            || self.factor_vol <= 0.0
            || self.idio_vol.iter().any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::Config("volatilities must be positive".into()));
        }
        if self.caps.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config("caps must be positive".into()));
        }
        if let Innovation::StudentT { df } = self.innovation {
            if df.is_nan() || df <= 2.0 {
                return Err(Error::Config(format!("Student-t df {df} must exceed 2")));
            }
        }
        Ok(())
    }

    /// Population correlation `beta_i beta_j sf^2 / (s_i s_j)`.
    pub fn population_correlation(&self) -> Array2<f64> {
        let n = self.n_assets();
        let f2 = self.factor_vol * self.factor_vol;
        let sd: Vec<f64> = (0..n)
            .map(|i| (self.betas[i] * self.betas[i] * f2 + self.idio_vol[i].powi(2)).sqrt())
            .collect();
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                1.0
            } else {
                self.betas[i] * self.betas[j] * f2 / (sd[i] * sd[j])
            }
        })
    }

    fn dates(&self) -> Vec<NaiveDate> {
        (1..=self.horizon as u64)
            .map(|k| self.base_date + Days::new(k))
            .collect()
    }

    fn draw_returns(&self) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.n_assets();
        let mut draw: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match self.innovation {
            Innovation::Gaussian => {
                let d = Normal::new(0.0, 1.0).expect("unit normal");
                Box::new(move |r| d.sample(r))
            }
            Innovation::StudentT { df } => {
                let d = StudentT::new(df).expect("validated df");
                let scale = ((df - 2.0) / df).sqrt();
                Box::new(move |r| d.sample(r) * scale)
            }
        };
        let mut out = Array2::zeros((self.horizon, n));
        for t in 0..self.horizon {
            let f = self.factor_vol * draw(&mut rng);
            for i in 0..n {
                out[[t, i]] = self.betas[i] * f + self.idio_vol[i] * draw(&mut rng);
            }
        }
        out
    }
}

pub fn generate_panel(spec: &FactorSpec) -> Result<ReturnPanel> {
    spec.validate()?;
    let caps = Array2::from_shape_fn((spec.horizon, spec.n_assets()), |(_, i)| spec.caps[i]);
    ReturnPanel::new(spec.dates(), spec.symbols.clone(), spec.draw_returns(), caps)
}

/// Rows before `switch` come from `pre`, the rest from `post`. Both specs
/// must share assets, horizon and base date.
pub fn regime_panel(pre: &FactorSpec, post: &FactorSpec, switch: usize) -> Result<ReturnPanel> {
    pre.validate()?;
    post.validate()?;
    if pre.symbols != post.symbols || pre.horizon != post.horizon || pre.base_date != post.base_date
    {
        return Err(Error::Config(
            "regime specs must share symbols, horizon and base date".into(),
        ));
    }
    if switch > post.horizon {
        return Err(Error::Config(format!(
            "switch day {switch} beyond horizon {}",
            post.horizon
        )));
    }
    let a = pre.draw_returns();
    let b = post.draw_returns();
    let n = post.n_assets();
    let returns = Array2::from_shape_fn((post.horizon, n), |(t, i)| {
        if t < switch {
            a[[t, i]]
        } else {
            b[[t, i]]
        }
    });
    let caps = Array2::from_shape_fn((post.horizon, n), |(t, i)| {
        if t < switch {
            pre.caps[i]
        } else {
            post.caps[i]
        }
    });
    ReturnPanel::new(post.dates(), post.symbols.clone(), returns, caps)
}

/// Price observations whose log returns reproduce `panel`: closes start at
/// 100 the day before the first return.
pub fn price_records(panel: &ReturnPanel) -> Vec<AssetRecord> {
    let base = panel.dates()[0]
        .checked_sub_days(Days::new(1))
        .expect("date after the minimum");
    let mut out = Vec::with_capacity((panel.n_dates() + 1) * panel.n_assets());
    let mut log_price = vec![100f64.ln(); panel.n_assets()];
    for (i, s) in panel.symbols().iter().enumerate() {
        out.push(AssetRecord {
            symbol: s.clone(),
            date: base,
            close: 100.0,
            market_cap: panel.caps()[[0, i]],
        });
    }
    for (t, d) in panel.dates().iter().enumerate() {
        for (i, s) in panel.symbols().iter().enumerate() {
            log_price[i] += panel.returns()[[t, i]];
            out.push(AssetRecord {
                symbol: s.clone(),
                date: *d,
                close: log_price[i].exp(),
                market_cap: panel.caps()[[t, i]],
            });
        }
    }
    out
}

/// `date,symbol,close,market_cap` text for [`price_records`].
pub fn records_to_long_csv(records: &[AssetRecord]) -> String {
    let mut out = String::from("date,symbol,close,market_cap\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.date,
            r.symbol,
            crate::io::fmt_f64(r.close),
            crate::io::fmt_f64(r.market_cap)
        ));
    }
    out
}

/// Named scenarios used by the examples, the CLI and the acceptance suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 25 assets over four years; the last one loads negatively on the factor.
    TetherLike,
    /// 25 assets with zero betas.
    Independent,
    /// Tether-like market in which the smallest third of the positive-beta
    /// assets load only weakly on the factor; factor volatility doubles
    /// halfway through.
    Regime,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tether-like" => Ok(Preset::TetherLike),
            "independent" => Ok(Preset::Independent),
            "regime" => Ok(Preset::Regime),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected tether-like, independent or regime)"
            ))),
        }
    }
}

pub const PAPER_SCALE_ASSETS: usize = 25;
pub const PAPER_SCALE_DAYS: usize = 1460;

/// Factor loading of the weakly linked assets in [`Preset::Regime`].
pub const WEAK_BETA: f64 = 0.1;

/// `n` assets of which the last `n_negative` have beta `-1`. Positive betas
/// spread over [0.8, 1.2]; caps decay geometrically from 1e11 with the
/// negative-beta assets mid-sized.
pub fn negative_beta_market(n: usize, n_negative: usize, horizon: usize, seed: u64) -> FactorSpec {
    let n_pos = n - n_negative;
    let mut spec = FactorSpec::new(n, horizon, seed);
    for i in 0..n {
        if i < n_pos {
            let frac = if n_pos > 1 { i as f64 / (n_pos - 1) as f64 } else { 0.0 };
            spec.betas[i] = 1.2 - 0.4 * frac;
            spec.caps[i] = 1e11 * 0.8f64.powi(i as i32);
        } else {
            spec.betas[i] = -1.0;
            spec.idio_vol[i] = 0.01;
            spec.caps[i] = 5e9;
            spec.symbols[i] = if n_negative == 1 {
                "STBL".into()
            } else {
                format!("STB{}", i - n_pos + 1)
            };
        }
    }
    spec
}

/// Single-regime spec for a preset at paper scale. `Regime` returns its
/// pre-switch spec.
pub fn preset_spec(preset: Preset, seed: u64) -> FactorSpec {
    sized_preset_spec(preset, PAPER_SCALE_ASSETS, PAPER_SCALE_DAYS, seed)
}

pub fn sized_preset_spec(preset: Preset, n_assets: usize, horizon: usize, seed: u64) -> FactorSpec {
    match preset {
        Preset::TetherLike => negative_beta_market(n_assets, 1, horizon, seed),
        Preset::Regime => {
            let mut s = negative_beta_market(n_assets, 1, horizon, seed);
            let n_pos = n_assets - 1;
            for b in &mut s.betas[n_pos - n_pos / 3..n_pos] {
                *b = WEAK_BETA;
            }
            s
        }
        Preset::Independent => {
            let mut s = FactorSpec::new(n_assets, horizon, seed);
            s.betas = vec![0.0; n_assets];
            s
        }
    }
}

pub fn preset_panel(preset: Preset, seed: u64) -> Result<ReturnPanel> {
    sized_preset_panel(preset, PAPER_SCALE_ASSETS, PAPER_SCALE_DAYS, seed)
}

pub fn sized_preset_panel(
    preset: Preset,
    n_assets: usize,
    horizon: usize,
    seed: u64,
) -> Result<ReturnPanel> {
    if n_assets < 2 || horizon < 2 {
        return Err(Error::Config(format!(
            "simulation needs at least 2 assets and 2 days (got {n_assets} x {horizon})"
        )));
    }
    let spec = sized_preset_spec(preset, n_assets, horizon, seed);
    match preset {
        Preset::Regime => {
            let mut post = spec.clone();
            post.factor_vol *= 2.0;
            regime_panel(&spec, &post, spec.horizon / 2)
        }
        _ => generate_panel(&spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{build_panel, PanelOptions};

    fn sample_corr(panel: &ReturnPanel, i: usize, j: usize) -> f64 {
        let r = panel.returns();
        let (a, b) = (r.column(i), r.column(j));
        let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn zero_betas_are_nearly_uncorrelated() {
        let mut spec = FactorSpec::new(6, 2000, 3);
        spec.betas = vec![0.0; 6];
        let p = generate_panel(&spec).unwrap();
        let mut total = 0.0;
        let mut k = 0;
        for i in 0..6 {
            for j in i + 1..6 {
                total += sample_corr(&p, i, j).abs();
                k += 1;
            }
        }
        assert!(total / (k as f64) < 0.1);
    }

    #[test]
    fn negative_beta_asset_is_anticorrelated() {
        let mut spec = FactorSpec::new(6, 2000, 5);
        spec.betas[5] = -1.0;
        let p = generate_panel(&spec).unwrap();
        for i in 0..5 {
            assert!(sample_corr(&p, i, 5) < 0.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = negative_beta_market(8, 2, 300, 42);
        assert_eq!(generate_panel(&spec).unwrap(), generate_panel(&spec).unwrap());
        let other = FactorSpec { seed: 43, ..spec.clone() };
        assert_ne!(generate_panel(&spec).unwrap(), generate_panel(&other).unwrap());
    }

    #[test]
    fn long_run_matches_population_correlation() {
        let mut spec = negative_beta_market(5, 1, 50_000, 9);
        spec.betas = vec![1.0, 0.5, 1.5, 0.0, -1.0];
        let p = generate_panel(&spec).unwrap();
        let pop = spec.population_correlation();
        for i in 0..5 {
            for j in i + 1..5 {
                let s = sample_corr(&p, i, j);
                assert!((s - pop[[i, j]]).abs() < 0.02, "({i},{j}) {s} vs {}", pop[[i, j]]);
            }
        }
    }

    #[test]
    fn student_t_variance_is_unit_scaled() {
        let mut spec = FactorSpec::new(1, 100_000, 1);
        spec.betas = vec![0.0];
        spec.idio_vol = vec![0.02];
        spec.innovation = Innovation::StudentT { df: 5.0 };
        let p = generate_panel(&spec).unwrap();
        let var = p.returns().column(0).mapv(|x| x * x).mean().unwrap();
        assert!((var.sqrt() - 0.02).abs() < 0.001);
        spec.innovation = Innovation::StudentT { df: 2.0 };
        assert!(generate_panel(&spec).is_err());
    }

    #[test]
    fn switch_at_zero_is_post_regime() {
        let pre = FactorSpec::new(4, 50, 1);
        let mut post = FactorSpec::new(4, 50, 2);
        post.factor_vol = 0.06;
        assert_eq!(regime_panel(&pre, &post, 0).unwrap(), generate_panel(&post).unwrap());
        let mixed = regime_panel(&pre, &post, 20).unwrap();
        let a = generate_panel(&pre).unwrap();
        assert_eq!(mixed.returns().row(19), a.returns().row(19));
    }

    #[test]
    fn incompatible_regimes_fail() {
        let pre = FactorSpec::new(4, 50, 1);
        let post = FactorSpec::new(5, 50, 1);
        assert!(regime_panel(&pre, &post, 10).is_err());
    }

    #[test]
    fn price_records_rebuild_the_panel() {
        let spec = negative_beta_market(4, 1, 30, 8);
        let p = generate_panel(&spec).unwrap();
        let rebuilt = build_panel(&price_records(&p), &PanelOptions::default()).unwrap();
        assert_eq!(rebuilt.dates(), p.dates());
        assert_eq!(rebuilt.symbols(), p.symbols());
        for (a, b) in rebuilt.returns().iter().zip(p.returns()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn presets() {
        let s = preset_spec(Preset::TetherLike, 1);
        assert_eq!(s.n_assets(), 25);
        assert_eq!(s.horizon, 1460);
        assert_eq!(s.symbols[24], "STBL");
        assert_eq!(s.betas.iter().filter(|b| **b < 0.0).count(), 1);
        assert!("bogus".parse::<Preset>().is_err());
        assert_eq!(preset_panel(Preset::Regime, 1).unwrap().n_dates(), 1460);
    }
}
