// Write one date's signed network, with caps and contributions, as GraphML.

use std::error::Error;

use tailnet::graphml::to_graphml;
use tailnet::network::Classifier;
use tailnet::pipeline::analyze;
use tailnet::risk::RiskOptions;
use tailnet::synth::{generate_panel, negative_beta_market};
use tailnet::tail::TailConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let panel = generate_panel(&negative_beta_market(6, 1, 300, 9))?;
    let a = analyze(
        &panel,
        &TailConfig::default(),
        &Classifier::default(),
        RiskOptions::default(),
    )?;
    let k = a.risk.len() - 1;
    let adj = &a.networks.adjacencies[k];
    let row = panel.date_index(adj.date).expect("network date is a panel date");
    let caps = panel.caps().row(row).to_vec();
    let contributions = a.risk.contributions.row(k).to_vec();

    let xml = to_graphml(panel.symbols(), &caps, Some(&contributions), adj)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join(format!("network_{}.graphml", adj.date));
    std::fs::write(&path, &xml)?;
    println!("{} ({} bytes, {} edges)", path.display(), xml.len(), adj.edges().count());
    println!("{}", xml.lines().take(12).collect::<Vec<_>>().join("\n"));
    assert_eq!(xml.matches("<node ").count(), 6);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
