// Load a long price file with a missing day, forward-fill it and inspect
// the resulting return panel.

use std::error::Error;

use tailnet::market_data::{build_panel, load_records, GapPolicy, InputFormat, PanelOptions};

const PRICES: &str = "\
date,symbol,close,market_cap
2021-01-01,BTC,29000,5.4e11
2021-01-02,BTC,32000,5.9e11
2021-01-03,BTC,33000,6.1e11
2021-01-04,BTC,32000,5.9e11
2021-01-01,ETH,730,8.3e10
2021-01-02,ETH,775,8.8e10
2021-01-04,ETH,1040,1.2e11
2021-01-01,USDT,1.0,2.1e10
2021-01-02,USDT,1.001,2.1e10
2021-01-03,USDT,0.999,2.1e10
2021-01-04,USDT,1.0,2.1e10
";

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("prices.csv");
    std::fs::write(&path, PRICES)?;

    let records = load_records(&path, &InputFormat::PricesLong)?;
    println!("{} price records", records.len());

    let options = PanelOptions {
        gap_policy: GapPolicy::ForwardFill {
            max_gap: 1,
            strict: false,
        },
        ..PanelOptions::default()
    };
    let panel = build_panel(&records, &options)?;
    println!(
        "{} assets x {} return days ({} .. {})",
        panel.n_assets(),
        panel.n_dates(),
        panel.dates()[0],
        panel.dates()[panel.n_dates() - 1]
    );
    for (i, s) in panel.symbols().iter().enumerate() {
        let r = panel.returns().column(i);
        println!("{s:>5}: {:?}", r.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>());
    }
    assert_eq!(panel.n_dates(), 3);

    // A stricter policy drops ETH instead of filling its hole.
    let strict = PanelOptions {
        gap_policy: GapPolicy::DropAsset,
        ..PanelOptions::default()
    };
    let panel = build_panel(&records, &strict)?;
    println!("drop-asset keeps {:?}", panel.symbols());
    assert_eq!(panel.n_assets(), 2);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
