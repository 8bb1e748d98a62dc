// Run every stage through on-disk artifacts, then rerun one stage with a
// different setting and look at the manifests.

use std::error::Error;

use tailnet::pipeline::{run_pipeline, run_stage, Manifest, PipelineConfig, Stage, StageOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = PipelineConfig::default();
    cfg.apply_text(
        "# small simulated market\n\
         sim_assets = 8\n\
         sim_days = 400\n\
         export_graphml = true\n",
        "inline",
    )?;
    cfg.out_dir = dir.path().to_path_buf();

    for report in run_pipeline(&cfg, None, StageOptions::default())? {
        println!("{:>15}: {} files", report.stage, report.outputs.len());
    }
    let scores = std::fs::read_to_string(dir.path().join("risk/scores.csv"))?;
    println!("{} dated scores", scores.lines().count() - 1);
    assert_eq!(scores.lines().count() - 1, 400 - 250 + 1);

    cfg.set("theta_bar", "0.2")?;
    run_stage(&cfg, Stage::Network, StageOptions::default())?;
    let m = Manifest::read(&dir.path().join("network/manifest.txt"))?;
    println!("network manifest records theta_bar = {:?}", m.config_value("theta_bar"));

    // New CoES under an old network: the score stage refuses to mix them.
    cfg.set("window", "200")?;
    run_stage(&cfg, Stage::Coes, StageOptions::default())?;
    let err = run_stage(&cfg, Stage::Score, StageOptions::default()).unwrap_err();
    println!("refused (exit code {}): {err}", err.exit_code());
    assert_eq!(err.exit_code(), 2);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
