//! On-disk stages. Each stage reads its upstream artifacts, checks them
//! against their manifests and writes its own directory atomically.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use log::{info, warn};

use super::config::PipelineConfig;
use super::manifest::{Manifest, MANIFEST_FILE};
use super::{build_networks, Networks};
use crate::drivers::{align_series, CovariateTable, Response};
use crate::error::{Error, Result};
use crate::graphml::to_graphml;
use crate::io::{sha256_bytes, sha256_file, StagedWrites};
use crate::market_data::{build_panel, load_records, ReturnPanel, DATE_FORMAT};
use crate::network::{
    adjacency_dense_csv, adjacency_from_csv, adjacency_to_csv, breakpoints_to_csv,
    similarity_from_csv, similarity_to_csv,
};
use crate::risk::{read_contributions_on, read_scores_csv, risk_series};
use crate::synth::sized_preset_panel;
use crate::tail::{coes_from_csv, coes_to_csv, rolling_coes, CoesMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ingest,
    Simulate,
    Coes,
    Network,
    Score,
    Drivers,
    ExportGraphml,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Simulate,
        Stage::Coes,
        Stage::Network,
        Stage::Score,
        Stage::Drivers,
        Stage::ExportGraphml,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Simulate => "simulate",
            Stage::Coes => "coes",
            Stage::Network => "network",
            Stage::Score => "score",
            Stage::Drivers => "drivers",
            Stage::ExportGraphml => "export-graphml",
        }
    }

    /// Artifact directory under the output root.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Ingest | Stage::Simulate => "panel",
            Stage::Coes => "coes",
            Stage::Network => "network",
            Stage::Score => "risk",
            Stage::Drivers => "drivers",
            Stage::ExportGraphml => "graphml",
        }
    }

    fn upstream(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest | Stage::Simulate => &[],
            Stage::Coes => &["panel"],
            Stage::Network => &["coes"],
            Stage::Score => &["panel", "network"],
            Stage::Drivers => &["risk"],
            Stage::ExportGraphml => &["panel", "network"],
        }
    }

    fn config_keys(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[
                "input",
                "input_format",
                "caps_input",
                "symbols",
                "start_date",
                "end_date",
                "gap_policy",
                "simple_returns",
            ],
            Stage::Simulate => &["preset", "seed", "sim_assets", "sim_days"],
            Stage::Coes => &["alpha", "window"],
            Stage::Network => &["theta_bar", "fixed_plus", "fixed_minus", "export_adjacency"],
            Stage::Score => &["normalize_caps", "euler_raw", "export_contributions", "export_annual"],
            Stage::Drivers => &["covariates", "lags", "raw_cases", "response", "bandwidth"],
            Stage::ExportGraphml => &["graphml_date"],
        }
    }

    /// Stage that produces the given artifact directory, for hints.
    fn producer(dir: &str) -> &'static str {
        match dir {
            "panel" => "ingest` or `tailnet simulate",
            "coes" => "coes",
            "network" => "network",
            "risk" => "score",
            "drivers" => "drivers",
            _ => "export-graphml",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown stage `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// Run even when upstream artifacts are stale or mixed.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    /// Files written, manifest last.
    pub outputs: Vec<PathBuf>,
}

/// Results kept in memory between stages of one run.
#[derive(Default)]
struct Cache {
    panel: Option<ReturnPanel>,
    coes: Option<(Vec<String>, Vec<CoesMatrix>)>,
    networks: Option<Networks>,
}

fn manifest_path(root: &Path, dir: &str) -> PathBuf {
    root.join(dir).join(MANIFEST_FILE)
}

fn rel(path: &str) -> String {
    path.replace('\\', "/")
}

fn read_manifest(root: &Path, dir: &str) -> Result<Manifest> {
    let path = manifest_path(root, dir);
    if !path.exists() {
        return Err(Error::Input(format!(
            "{} not found: run `tailnet {}` first",
            path.display(),
            Stage::producer(dir)
        )));
    }
    Manifest::read(&path)
}

/// Verifies a manifest and, transitively, every manifest its inputs came from.
fn verify_chain(root: &Path, dir: &str, seen: &mut HashSet<String>) -> Result<()> {
    if !seen.insert(dir.to_string()) {
        return Ok(());
    }
    let m = read_manifest(root, dir)?;
    let path = manifest_path(root, dir);
    m.verify_files(root, &path).map_err(|e| match e {
        Error::StaleArtifact { path, reason } => Error::StaleArtifact {
            path,
            reason: format!(
                "{reason}; rerun `tailnet {}` or pass --force",
                Stage::producer(dir)
            ),
        },
        e => e,
    })?;
    let parents: HashSet<String> = m
        .inputs
        .iter()
        .filter_map(|(r, _)| r.split('/').next().map(str::to_string))
        .collect();
    let mut parents: Vec<String> = parents.into_iter().collect();
    parents.sort();
    for p in parents {
        verify_chain(root, &p, seen)?;
    }
    Ok(())
}

/// Loads and checks the upstream manifests of `stage` and merges their
/// configuration. Conflicting values between upstreams are refused.
fn upstream_manifests(root: &Path, stage: Stage, opts: StageOptions) -> Result<Vec<Manifest>> {
    let mut out = Vec::new();
    for dir in stage.upstream() {
        if opts.force {
            let m = read_manifest(root, dir);
            match m {
                Ok(m) => out.push(m),
                Err(Error::StaleArtifact { .. }) | Err(Error::Parse { .. }) => {
                    warn!("ignoring unreadable manifest for {dir} (--force)");
                    out.push(Manifest::new(dir));
                }
                Err(e) => return Err(e),
            }
            continue;
        }
        verify_chain(root, dir, &mut HashSet::new())?;
        out.push(read_manifest(root, dir)?);
    }
    if !opts.force {
        for (a, ma) in out.iter().enumerate() {
            for mb in &out[a + 1..] {
                for (k, v) in &ma.config {
                    if let Some(w) = mb.config_value(k) {
                        if w != v {
                            return Err(Error::StaleArtifact {
                                path: manifest_path(root, stage.upstream()[a]),
                                reason: format!(
                                    "upstream artifacts were built with different `{k}` ({v} vs {w}); rerun the earlier stages or pass --force"
                                ),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Output accumulator for one stage.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, rel_path: String, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel(&rel_path), bytes.into()));
    }
}

fn finish(
    root: &Path,
    stage: Stage,
    config: &PipelineConfig,
    upstream: &[Manifest],
    sources: &[&Path],
    outputs: Outputs,
    opts: StageOptions,
) -> Result<StageReport> {
    let mut m = Manifest::new(stage.name());
    for up in upstream {
        for (k, v) in &up.config {
            m.set_config(k, v.clone());
        }
        for (r, d) in &up.outputs {
            let digest = if opts.force {
                sha256_file(&root.join(r))?
            } else {
                d.clone()
            };
            m.inputs.push((r.clone(), digest));
        }
    }
    for k in stage.config_keys() {
        m.set_config(k, config.get(k));
    }
    for s in sources {
        m.sources.push((s.display().to_string(), sha256_file(s)?));
    }

    let mut staged = StagedWrites::new();
    for (r, bytes) in &outputs.files {
        staged.write(&root.join(r), bytes)?;
        m.outputs.push((r.clone(), sha256_bytes(bytes)));
    }
    let mpath = manifest_path(root, stage.dir());
    let previous = Manifest::read(&mpath).ok();
    staged.write(&mpath, m.to_text().as_bytes())?;
    let written = staged.commit()?;

    if let Some(prev) = previous {
        let current: HashSet<&str> = m.outputs.iter().map(|(r, _)| r.as_str()).collect();
        for (r, _) in &prev.outputs {
            if !current.contains(r.as_str()) {
                let _ = std::fs::remove_file(root.join(r));
            }
        }
    }
    info!("{stage}: wrote {} files under {}", written.len(), root.join(stage.dir()).display());
    Ok(StageReport {
        stage,
        outputs: written,
    })
}

fn load_panel(root: &Path, cache: &mut Cache) -> Result<ReturnPanel> {
    if let Some(p) = &cache.panel {
        return Ok(p.clone());
    }
    let p = ReturnPanel::read_canonical(&root.join("panel"))?;
    cache.panel = Some(p.clone());
    Ok(p)
}

fn panel_outputs(panel: &ReturnPanel) -> Outputs {
    let mut out = Outputs::new();
    for (name, body) in panel.to_canonical() {
        out.add(format!("panel/{name}"), body);
    }
    out
}

fn ingest(cfg: &PipelineConfig, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("ingest needs an input file (`input`)".into()))?;
    let format = cfg.input_format()?;
    let records = load_records(input, &format)?;
    let panel = build_panel(&records, &cfg.panel_options())?;
    let mut sources = vec![input];
    if let Some(c) = &cfg.caps_input {
        sources.push(c);
    }
    let report = finish(&cfg.out_dir, Stage::Ingest, cfg, &[], &sources, panel_outputs(&panel), opts)?;
    *cache = Cache {
        panel: Some(panel),
        ..Cache::default()
    };
    Ok(report)
}

fn simulate(cfg: &PipelineConfig, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    let panel = sized_preset_panel(cfg.preset, cfg.sim_assets, cfg.sim_days, cfg.seed)?;
    let report = finish(&cfg.out_dir, Stage::Simulate, cfg, &[], &[], panel_outputs(&panel), opts)?;
    *cache = Cache {
        panel: Some(panel),
        ..Cache::default()
    };
    Ok(report)
}

fn coes(cfg: &PipelineConfig, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    let root = &cfg.out_dir;
    let tail = cfg.tail_config()?;
    let upstream = upstream_manifests(root, Stage::Coes, opts)?;
    let panel = load_panel(root, cache)?;
    let matrices = rolling_coes(&panel, &tail)?;
    let mut out = Outputs::new();
    out.add("coes/coes.csv".into(), coes_to_csv(panel.symbols(), &matrices));
    let report = finish(root, Stage::Coes, cfg, &upstream, &[], out, opts)?;
    cache.coes = Some((panel.symbols().to_vec(), matrices));
    cache.networks = None;
    Ok(report)
}

fn network(cfg: &PipelineConfig, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    let root = &cfg.out_dir;
    let classifier = cfg.classifier()?;
    let upstream = upstream_manifests(root, Stage::Network, opts)?;
    let (symbols, matrices) = match cache.coes.take() {
        Some(c) => c,
        None => coes_from_csv(&root.join("coes/coes.csv"))?,
    };
    let nets = build_networks(&matrices, &symbols, &classifier)?;
    cache.coes = Some((symbols.clone(), matrices));

    let mut out = Outputs::new();
    out.add("network/similarity.csv".into(), similarity_to_csv(&symbols, &nets.similarities));
    out.add("network/adjacency.csv".into(), adjacency_to_csv(&symbols, &nets.adjacencies));
    let rows: Vec<_> = nets
        .adjacencies
        .iter()
        .zip(&nets.breakpoints)
        .map(|(a, b)| (a.date, b.clone()))
        .collect();
    out.add("network/breakpoints.csv".into(), breakpoints_to_csv(&rows));
    if cfg.export_adjacency {
        for a in &nets.adjacencies {
            out.add(
                format!("network/dense/adjacency_{}.csv", a.date.format(DATE_FORMAT)),
                adjacency_dense_csv(&symbols, a),
            );
        }
    }
    let report = finish(root, Stage::Network, cfg, &upstream, &[], out, opts)?;
    cache.networks = Some(nets);
    Ok(report)
}

fn load_networks(root: &Path, symbols: &[String], cache: &mut Cache) -> Result<Networks> {
    if let Some(n) = &cache.networks {
        return Ok(n.clone());
    }
    let similarities = similarity_from_csv(&root.join("network/similarity.csv"), symbols)?;
    let dates: Vec<NaiveDate> = similarities.iter().map(|c| c.date).collect();
    let adjacencies = adjacency_from_csv(&root.join("network/adjacency.csv"), symbols, &dates)?;
    Ok(Networks {
        similarities,
        adjacencies,
        breakpoints: Vec::new(),
    })
}

fn score(cfg: &PipelineConfig, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    let root = &cfg.out_dir;
    let upstream = upstream_manifests(root, Stage::Score, opts)?;
    let panel = load_panel(root, cache)?;
    let nets = load_networks(root, panel.symbols(), cache)?;
    let series = risk_series(&nets.adjacencies, &panel, &nets.similarities, cfg.risk_options())?;
    let mut out = Outputs::new();
    out.add("risk/scores.csv".into(), series.scores_csv());
    if cfg.export_contributions {
        out.add("risk/contributions.csv".into(), series.contributions_csv());
    }
    if cfg.export_annual {
        out.add("risk/annual.csv".into(), series.annual_table().to_csv());
    }
    finish(root, Stage::Score, cfg, &upstream, &[], out, opts)
}

fn drivers(cfg: &PipelineConfig, opts: StageOptions) -> Result<StageReport> {
    let root = &cfg.out_dir;
    let cov_path = cfg
        .covariates
        .as_deref()
        .ok_or_else(|| Error::Config("drivers needs a covariate file (`covariates`)".into()))?;
    let upstream = upstream_manifests(root, Stage::Drivers, opts)?;
    let scores = read_scores_csv(&root.join("risk/scores.csv"))?;
    let mut table = CovariateTable::read_csv(cov_path)?;
    if !cfg.raw_cases {
        let cases = table.case_columns();
        table.log1p_columns(&cases)?;
    }
    let y = match cfg.response {
        Response::Score => &scores.score,
        Response::NegativeRatio => &scores.negative_ratio,
    };
    let lags: HashMap<String, usize> = cfg.lags.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let design = align_series(&scores.dates, y, &table, &lags)?;
    let reg = design.fit(cfg.bandwidth)?;
    let mut out = Outputs::new();
    out.add("drivers/regression.csv".into(), reg.to_csv());
    out.add("drivers/report.txt".into(), reg.report());
    finish(root, Stage::Drivers, cfg, &upstream, &[cov_path], out, opts)
}

/// Compresses a sorted date list into `a..b` runs of consecutive days.
fn date_runs(dates: &[NaiveDate]) -> String {
    let mut runs: Vec<String> = Vec::new();
    let mut k = 0;
    while k < dates.len() {
        let start = dates[k];
        let mut end = start;
        while k + 1 < dates.len() && end.succ_opt() == Some(dates[k + 1]) {
            k += 1;
            end = dates[k];
        }
        runs.push(if start == end {
            start.to_string()
        } else {
            format!("{start}..{end}")
        });
        k += 1;
    }
    if runs.is_empty() {
        "none".into()
    } else {
        runs.join(", ")
    }
}

fn export_graphml(cfg: &PipelineConfig, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    let root = &cfg.out_dir;
    let mut upstream = upstream_manifests(root, Stage::ExportGraphml, opts)?;
    let panel = load_panel(root, cache)?;
    let nets = load_networks(root, panel.symbols(), cache)?;
    let dates: Vec<NaiveDate> = nets.adjacencies.iter().map(|a| a.date).collect();
    let date = match cfg.graphml_date {
        Some(d) => d,
        None => *dates
            .last()
            .ok_or_else(|| Error::Input("the network stage produced no dates".into()))?,
    };
    let k = dates.binary_search(&date).map_err(|_| {
        Error::Input(format!(
            "no network for {date}; available dates: {}",
            date_runs(&dates)
        ))
    })?;
    let adj = &nets.adjacencies[k];
    let row = panel
        .date_index(date)
        .ok_or_else(|| Error::DateMisalignment(format!("{date} has no market caps in the panel")))?;
    let caps: Vec<f64> = panel.caps().row(row).to_vec();

    // Contributions are optional: use them when a fresh risk stage exported them.
    let mut contributions = None;
    if manifest_path(root, "risk").exists() {
        let fresh = opts.force || verify_chain(root, "risk", &mut HashSet::new()).is_ok();
        let risk = read_manifest(root, "risk")?;
        let has = risk.outputs.iter().any(|(r, _)| r == "risk/contributions.csv");
        if fresh && has {
            contributions =
                read_contributions_on(&root.join("risk/contributions.csv"), panel.symbols(), date)?;
            upstream.push(risk);
        } else if !fresh {
            warn!("risk artifacts are stale; exporting GraphML without contributions");
        }
    }

    let xml = to_graphml(panel.symbols(), &caps, contributions.as_deref(), adj)?;
    let mut out = Outputs::new();
    out.add(format!("graphml/network_{}.graphml", date.format(DATE_FORMAT)), xml);
    let mut cfg = cfg.clone();
    cfg.graphml_date = Some(date);
    finish(root, Stage::ExportGraphml, &cfg, &upstream, &[], out, opts)
}

fn dispatch(cfg: &PipelineConfig, stage: Stage, opts: StageOptions, cache: &mut Cache) -> Result<StageReport> {
    info!("{stage}: starting");
    let result = match stage {
        Stage::Ingest => ingest(cfg, opts, cache),
        Stage::Simulate => simulate(cfg, opts, cache),
        Stage::Coes => coes(cfg, opts, cache),
        Stage::Network => network(cfg, opts, cache),
        Stage::Score => score(cfg, opts, cache),
        Stage::Drivers => drivers(cfg, opts),
        Stage::ExportGraphml => export_graphml(cfg, opts, cache),
    };
    result.map_err(|e| Error::Stage {
        stage: stage.name(),
        source: Box::new(e),
    })
}

/// Runs one stage against the artifacts already in `config.out_dir`.
pub fn run_stage(config: &PipelineConfig, stage: Stage, opts: StageOptions) -> Result<StageReport> {
    dispatch(config, stage, opts, &mut Cache::default())
}

/// Runs every stage in order, or only `only`. The panel comes from
/// `input` when set and from the simulator otherwise; drivers run when a
/// covariate file is configured and GraphML export when enabled.
pub fn run_pipeline(
    config: &PipelineConfig,
    only: Option<Stage>,
    opts: StageOptions,
) -> Result<Vec<StageReport>> {
    if let Some(stage) = only {
        return Ok(vec![run_stage(config, stage, opts)?]);
    }
    let mut stages = vec![if config.input.is_some() {
        Stage::Ingest
    } else {
        Stage::Simulate
    }];
    stages.extend([Stage::Coes, Stage::Network, Stage::Score]);
    if config.covariates.is_some() {
        stages.push(Stage::Drivers);
    }
    if config.export_graphml {
        stages.push(Stage::ExportGraphml);
    }
    let mut cache = Cache::default();
    stages
        .into_iter()
        .map(|s| dispatch(config, s, opts, &mut cache))
        .collect()
}
