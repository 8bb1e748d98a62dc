//! Plain-text `key = value` pipeline configuration.
//!
//! Values are layered: built-in defaults, then a config file, then
//! `TAILNET_<KEY>` environment variables, then command-line flags. Every
//! layer goes through [`PipelineConfig::set`], so all sources accept the
//! same keys and spellings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::drivers::Response;
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::market_data::{parse_date, GapPolicy, InputFormat, PanelOptions, ReturnKind};
use crate::network::{Classifier, DEFAULT_THETA_BAR};
use crate::risk::RiskOptions;
use crate::synth::{Preset, PAPER_SCALE_ASSETS, PAPER_SCALE_DAYS};
use crate::tail::TailConfig;

pub const ENV_PREFIX: &str = "TAILNET_";

/// Every recognised key, in manifest order.
pub const KEYS: &[&str] = &[
    "input",
    "input_format",
    "caps_input",
    "symbols",
    "start_date",
    "end_date",
    "gap_policy",
    "simple_returns",
    "preset",
    "seed",
    "sim_assets",
    "sim_days",
    "alpha",
    "window",
    "theta_bar",
    "fixed_plus",
    "fixed_minus",
    "normalize_caps",
    "euler_raw",
    "out_dir",
    "export_adjacency",
    "export_graphml",
    "export_contributions",
    "export_annual",
    "graphml_date",
    "covariates",
    "lags",
    "raw_cases",
    "response",
    "bandwidth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatTag {
    PricesLong,
    PricesWide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub input_format: FormatTag,
    /// Market caps for `prices-wide` input.
    pub caps_input: Option<PathBuf>,
    pub symbols: Option<Vec<String>>,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub gap_policy: GapPolicy,
    pub simple_returns: bool,
    pub preset: Preset,
    pub seed: u64,
    pub sim_assets: usize,
    pub sim_days: usize,
    pub alpha: f64,
    pub window: usize,
    pub theta_bar: f64,
    pub fixed_plus: Option<f64>,
    pub fixed_minus: Option<f64>,
    pub normalize_caps: bool,
    pub euler_raw: bool,
    pub out_dir: PathBuf,
    /// Dense per-date adjacency matrices next to the long file.
    pub export_adjacency: bool,
    pub export_graphml: bool,
    pub export_contributions: bool,
    pub export_annual: bool,
    pub graphml_date: Option<NaiveDate>,
    pub covariates: Option<PathBuf>,
    pub lags: BTreeMap<String, usize>,
    pub raw_cases: bool,
    pub response: Response,
    pub bandwidth: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            input_format: FormatTag::PricesLong,
            caps_input: None,
            symbols: None,
            start_date: None,
            end_date: None,
            gap_policy: GapPolicy::default(),
            simple_returns: false,
            preset: Preset::TetherLike,
            seed: 1,
            sim_assets: PAPER_SCALE_ASSETS,
            sim_days: PAPER_SCALE_DAYS,
            alpha: 0.05,
            window: 250,
            theta_bar: DEFAULT_THETA_BAR,
            fixed_plus: None,
            fixed_minus: None,
            normalize_caps: false,
            euler_raw: false,
            out_dir: PathBuf::from("tailnet-out"),
            export_adjacency: false,
            export_graphml: false,
            export_contributions: true,
            export_annual: true,
            graphml_date: None,
            covariates: None,
            lags: BTreeMap::new(),
            raw_cases: false,
            response: Response::Score,
            bandwidth: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: `{v}` is not a boolean"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a valid number")))
}

fn bare(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        e => e.to_string(),
    }
}

fn opt<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v.trim().is_empty() {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let date = |v: &str| parse_date(v).map_err(|m| Error::Config(format!("{key}: {m}")));
        match key {
            "input" => self.input = opt(v, |s| Ok(PathBuf::from(s)))?,
            "input_format" => {
                self.input_format = match v {
                    "prices-long" => FormatTag::PricesLong,
                    "prices-wide" => FormatTag::PricesWide,
                    _ => {
                        return Err(Error::Config(format!(
                            "input_format: `{v}` (expected prices-long or prices-wide)"
                        )))
                    }
                }
            }
            "caps_input" => self.caps_input = opt(v, |s| Ok(PathBuf::from(s)))?,
            "symbols" => {
                self.symbols = opt(v, |s| {
                    Ok(s.split(',')
                        .map(|x| x.trim().to_string())
                        .filter(|x| !x.is_empty())
                        .collect())
                })?
            }
            "start_date" => self.start_date = opt(v, date)?,
            "end_date" => self.end_date = opt(v, date)?,
            "gap_policy" => self.gap_policy = v.parse()?,
            "simple_returns" => self.simple_returns = parse_bool(key, v)?,
            "preset" => self.preset = v.parse()?,
            "seed" => self.seed = parse_num(key, v)?,
            "sim_assets" => self.sim_assets = parse_num(key, v)?,
            "sim_days" => self.sim_days = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "theta_bar" => {
                let t: f64 = parse_num(key, v)?;
                if !(t > 0.0 && t < 0.5) {
                    return Err(Error::Config(format!("theta_bar {t} outside (0, 0.5)")));
                }
                self.theta_bar = t;
            }
            "fixed_plus" => self.fixed_plus = opt(v, |s| parse_num(key, s))?,
            "fixed_minus" => self.fixed_minus = opt(v, |s| parse_num(key, s))?,
            "normalize_caps" => self.normalize_caps = parse_bool(key, v)?,
            "euler_raw" => self.euler_raw = parse_bool(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "export_adjacency" => self.export_adjacency = parse_bool(key, v)?,
            "export_graphml" => self.export_graphml = parse_bool(key, v)?,
            "export_contributions" => self.export_contributions = parse_bool(key, v)?,
            "export_annual" => self.export_annual = parse_bool(key, v)?,
            "graphml_date" => self.graphml_date = opt(v, date)?,
            "covariates" => self.covariates = opt(v, |s| Ok(PathBuf::from(s)))?,
            "lags" => {
                let mut lags = BTreeMap::new();
                for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (name, lag) = item
                        .split_once(':')
                        .or_else(|| item.split_once('='))
                        .ok_or_else(|| Error::Config(format!("lags: `{item}` is not name:lag")))?;
                    lags.insert(name.trim().to_string(), parse_num(key, lag)?);
                }
                self.lags = lags;
            }
            "raw_cases" => self.raw_cases = parse_bool(key, v)?,
            "response" => {
                self.response = match v {
                    "score" => Response::Score,
                    "negative_ratio" | "negative-ratio" => Response::NegativeRatio,
                    _ => {
                        return Err(Error::Config(format!(
                            "response: `{v}` (expected score or negative_ratio)"
                        )))
                    }
                }
            }
            "bandwidth" => self.bandwidth = opt(v, |s| parse_num(key, s))?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical text of a key's current value.
    pub fn get(&self, key: &str) -> String {
        fn o<T: ToString>(x: &Option<T>) -> String {
            x.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "input" => path(&self.input),
            "input_format" => match self.input_format {
                FormatTag::PricesLong => "prices-long".into(),
                FormatTag::PricesWide => "prices-wide".into(),
            },
            "caps_input" => path(&self.caps_input),
            "symbols" => self.symbols.as_ref().map(|s| s.join(",")).unwrap_or_default(),
            "start_date" => o(&self.start_date),
            "end_date" => o(&self.end_date),
            "gap_policy" => self.gap_policy.to_string(),
            "simple_returns" => self.simple_returns.to_string(),
            "preset" => match self.preset {
                Preset::TetherLike => "tether-like".into(),
                Preset::Independent => "independent".into(),
                Preset::Regime => "regime".into(),
            },
            "seed" => self.seed.to_string(),
            "sim_assets" => self.sim_assets.to_string(),
            "sim_days" => self.sim_days.to_string(),
            "alpha" => self.alpha.to_string(),
            "window" => self.window.to_string(),
            "theta_bar" => self.theta_bar.to_string(),
            "fixed_plus" => o(&self.fixed_plus),
            "fixed_minus" => o(&self.fixed_minus),
            "normalize_caps" => self.normalize_caps.to_string(),
            "euler_raw" => self.euler_raw.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "export_adjacency" => self.export_adjacency.to_string(),
            "export_graphml" => self.export_graphml.to_string(),
            "export_contributions" => self.export_contributions.to_string(),
            "export_annual" => self.export_annual.to_string(),
            "graphml_date" => o(&self.graphml_date),
            "covariates" => path(&self.covariates),
            "lags" => self
                .lags
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(","),
            "raw_cases" => self.raw_cases.to_string(),
            "response" => match self.response {
                Response::Score => "score".into(),
                Response::NegativeRatio => "negative_ratio".into(),
            },
            "bandwidth" => o(&self.bandwidth),
            _ => String::new(),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected `key = value`", n + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{origin}:{}: {}", n + 1, bare(e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = read_to_string(path)?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `TAILNET_<KEY>` variables. Unknown `TAILNET_` names are
    /// reported as configuration errors.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (k, v) in vars {
            let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
            self.set(&key, &v)
                .map_err(|e| Error::Config(format!("environment {k}: {}", bare(e))))?;
        }
        Ok(())
    }

    pub fn tail_config(&self) -> Result<TailConfig> {
        TailConfig::new(self.alpha, self.window)
    }

    pub fn classifier(&self) -> Result<Classifier> {
        match (self.fixed_plus, self.fixed_minus) {
            (None, None) => Ok(Classifier::Breakpoint {
                theta_bar: self.theta_bar,
            }),
            (Some(plus), Some(minus)) if minus <= plus => Ok(Classifier::Fixed { plus, minus }),
            (Some(_), Some(_)) => Err(Error::Config("fixed_minus must not exceed fixed_plus".into())),
            _ => Err(Error::Config(
                "fixed thresholds need both fixed_plus and fixed_minus".into(),
            )),
        }
    }

    pub fn panel_options(&self) -> PanelOptions {
        let date_range = match (self.start_date, self.end_date) {
            (None, None) => None,
            (s, e) => Some((s.unwrap_or(NaiveDate::MIN), e.unwrap_or(NaiveDate::MAX))),
        };
        PanelOptions {
            symbols: self.symbols.clone(),
            date_range,
            gap_policy: self.gap_policy,
            return_kind: if self.simple_returns {
                ReturnKind::Simple
            } else {
                ReturnKind::Log
            },
        }
    }

    pub fn input_format(&self) -> Result<InputFormat> {
        match self.input_format {
            FormatTag::PricesLong => Ok(InputFormat::PricesLong),
            FormatTag::PricesWide => self
                .caps_input
                .clone()
                .map(|caps| InputFormat::PricesWide { caps })
                .ok_or_else(|| Error::Config("prices-wide input needs caps_input".into())),
        }
    }

    pub fn risk_options(&self) -> RiskOptions {
        RiskOptions {
            normalize_caps: self.normalize_caps,
            euler_raw: self.euler_raw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = PipelineConfig::default();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.window, 250);
        assert_eq!(c.theta_bar, 0.1);
        assert_eq!(
            c.gap_policy,
            GapPolicy::ForwardFill {
                max_gap: 3,
                strict: false
            }
        );
    }

    #[test]
    fn file_then_env_then_flags() {
        let mut c = PipelineConfig::default();
        c.apply_text("alpha = 0.1\nwindow=100 # shorter\n\n# comment\ntheta_bar = 0.2", "cfg")
            .unwrap();
        assert_eq!((c.alpha, c.window, c.theta_bar), (0.1, 100, 0.2));
        c.apply_env([
            ("TAILNET_WINDOW".to_string(), "120".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ])
        .unwrap();
        assert_eq!(c.window, 120);
        c.set("window", "150").unwrap();
        assert_eq!(c.window, 150);
    }

    #[test]
    fn every_key_round_trips_through_get() {
        let mut c = PipelineConfig::default();
        c.set("lags", "oil:7,cases:14").unwrap();
        c.set("symbols", "BTC, ETH").unwrap();
        c.set("fixed_plus", "0.5").unwrap();
        c.set("start_date", "2019-01-01").unwrap();
        let mut d = PipelineConfig::default();
        for k in KEYS {
            d.set(k, &c.get(k)).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut c = PipelineConfig::default();
        for (k, v) in [
            ("alpha", "x"),
            ("theta_bar", "0.7"),
            ("nope", "1"),
            ("response", "vol"),
            ("lags", "oil"),
        ] {
            let e = c.set(k, v).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{k}");
        }
        assert!(c.apply_text("alpha 0.1", "cfg").is_err());
        assert!(c
            .apply_env([("TAILNET_BOGUS".to_string(), "1".to_string())])
            .is_err());
    }

    #[test]
    fn classifier_selection() {
        let mut c = PipelineConfig::default();
        assert_eq!(c.classifier().unwrap(), Classifier::Breakpoint { theta_bar: 0.1 });
        c.set("fixed_plus", "0.5").unwrap();
        assert!(c.classifier().is_err());
        c.set("fixed_minus", "-0.5").unwrap();
        assert_eq!(
            c.classifier().unwrap(),
            Classifier::Fixed {
                plus: 0.5,
                minus: -0.5
            }
        );
    }
}
