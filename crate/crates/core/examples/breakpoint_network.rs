// From a CoES matrix to a signed adjacency matrix: cosine similarities,
// the normal-CDF transform and the least-squares breakpoint.

use std::error::Error;

use tailnet::network::{
    adjacent_gaps, breakpoint_theta, correlation_set_labeled, phi_transform, split_groups,
    Classifier,
};
use tailnet::synth::{generate_panel, negative_beta_market};
use tailnet::tail::coes_matrix;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let panel = generate_panel(&negative_beta_market(8, 2, 250, 11))?;
    let m = coes_matrix(panel.dates()[249], panel.window(249, 250), 0.05)?;
    let cs = correlation_set_labeled(&m, panel.symbols())?;

    let groups = split_groups(&cs);
    println!(
        "{} pairs: {} positive, {} negative",
        cs.len(),
        groups.positive.len(),
        groups.negative.len()
    );
    let values: Vec<f64> = groups.positive.iter().map(|(rho, _)| *rho).collect();
    let phi = phi_transform(&values, cs.n_assets());
    if let Some(split) = adjacent_gaps(&phi).and_then(|g| breakpoint_theta(&g, 0.1)) {
        println!("positive split: {} of {} gaps (theta {:.3})", split.index, phi.len() - 1, split.theta);
    }

    let (adj, bp) = Classifier::default().classify(&cs);
    println!(
        "thresholds {:?} / {:?}: {} resonance and {} diversification edges",
        bp.threshold_plus, bp.threshold_minus, bp.plus_edges, bp.minus_edges
    );
    for (i, j, v) in adj.edges() {
        println!("  {:>4} -- {:<4} {v:+}", panel.symbols()[i], panel.symbols()[j]);
    }
    assert_eq!(adj.count(1), bp.plus_edges);

    let fixed = Classifier::Fixed {
        plus: 0.5,
        minus: -0.5,
    };
    let (adj, _) = fixed.classify(&cs);
    println!("fixed +-0.5 thresholds: {} edges", adj.edges().count());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
