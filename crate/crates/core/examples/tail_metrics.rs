// Historical VaR, expected shortfall and the CoES matrix on one window of
// a synthetic market.

use std::error::Error;

use tailnet::synth::{generate_panel, negative_beta_market};
use tailnet::tail::{coes_matrix, expected_shortfall, historical_var, rolling_coes, TailConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let panel = generate_panel(&negative_beta_market(4, 1, 300, 7))?;
    let alpha = 0.05;
    let w = 250;

    let window = panel.window(w - 1, w);
    let x: Vec<f64> = window.column(0).to_vec();
    println!(
        "{}: VaR {:.4}  ES {:.4}",
        panel.symbols()[0],
        historical_var(&x, alpha)?,
        expected_shortfall(&x, alpha)?
    );

    let m = coes_matrix(panel.dates()[w - 1], window, alpha)?;
    println!("CoES on {} (row i, conditioning column j):", m.date);
    print!("{:>6}", "");
    for s in panel.symbols() {
        print!("{s:>9}");
    }
    println!();
    for (i, s) in panel.symbols().iter().enumerate() {
        print!("{s:>6}");
        for j in 0..m.n_assets() {
            print!("{:>9.4}", m.values[[i, j]]);
        }
        println!();
    }
    // The diagonal is each asset's own expected shortfall.
    assert_eq!(m.values[[0, 0]], expected_shortfall(&x, alpha)?);
    // Market assets lose when the market is in its tail, the stablecoin gains.
    assert!(m.values[[0, 1]] < 0.0 && m.values[[3, 0]] > 0.0);

    let all = rolling_coes(&panel, &TailConfig::new(alpha, w)?)?;
    println!("{} rolling windows", all.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
