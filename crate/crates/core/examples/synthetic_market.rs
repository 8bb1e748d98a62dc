// One-factor synthetic markets: presets, analytic correlations and a
// regime switch.

use std::error::Error;

use tailnet::synth::{
    generate_panel, preset_panel, price_records, records_to_long_csv, regime_panel, FactorSpec,
    Innovation, Preset,
};

fn sample_corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut spec = FactorSpec::new(3, 5000, 42);
    spec.betas = vec![1.0, 0.5, -1.0];
    spec.innovation = Innovation::StudentT { df: 5.0 };
    let panel = generate_panel(&spec)?;
    let rho = spec.population_correlation();
    let r = panel.returns();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let s = sample_corr(&r.column(i).to_vec(), &r.column(j).to_vec());
        println!("corr({i},{j}): population {:+.3}, sample {s:+.3}", rho[[i, j]]);
    }

    let csv = records_to_long_csv(&price_records(&panel));
    println!("price file starts:\n{}", csv.lines().take(4).collect::<Vec<_>>().join("\n"));

    let mut post = spec.clone();
    post.factor_vol *= 2.0;
    let switched = regime_panel(&spec, &post, 2500)?;
    println!("regime panel: {} days", switched.n_dates());

    for preset in [Preset::TetherLike, Preset::Independent, Preset::Regime] {
        let p = preset_panel(preset, 1)?;
        println!("{preset:?}: {} assets x {} days", p.n_assets(), p.n_dates());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
