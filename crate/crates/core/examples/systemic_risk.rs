// Systemic-risk score and per-asset contributions on a market with one
// stablecoin-like asset, summarised by calendar year.

use std::error::Error;

use tailnet::network::Classifier;
use tailnet::pipeline::analyze;
use tailnet::risk::RiskOptions;
use tailnet::synth::{generate_panel, negative_beta_market};
use tailnet::tail::TailConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let panel = generate_panel(&negative_beta_market(10, 1, 900, 3))?;
    let a = analyze(
        &panel,
        &TailConfig::default(),
        &Classifier::default(),
        RiskOptions::default(),
    )?;
    let risk = &a.risk;
    println!("{} daily scores from {} to {}", risk.len(), risk.dates[0], risk.dates[risk.len() - 1]);

    let last = risk.len() - 1;
    let parts = risk.contributions.row(last);
    println!("score on {}: {:.3e} (sum of contributions {:.3e})", risk.dates[last], risk.score[last], parts.sum());
    assert!((parts.sum() - risk.score[last]).abs() <= 1e-9 * risk.score[last].abs());

    let table = risk.annual_table();
    let overall = table.overall_mean();
    println!("mean annual contribution:");
    for (s, v) in table.symbols.iter().zip(overall.iter()) {
        println!("  {s:>5} {v:+.3e}");
    }
    assert!(overall[overall.len() - 1] < 0.0);

    let mean_ratio = risk.negative_ratio.iter().sum::<f64>() / risk.len() as f64;
    println!("mean share of negatively linked pairs: {mean_ratio:.3}");
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
