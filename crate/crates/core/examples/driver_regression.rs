// Regress a daily series on lagged covariates with Newey-West standard
// errors.

use std::collections::HashMap;
use std::error::Error;

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tailnet::drivers::{align_series, CovariateTable};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let t = 400;
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let dates: Vec<NaiveDate> = (0..t as u64).map(|k| start + Days::new(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0)?;

    // Cumulative case counts and a daily oil return.
    let mut cases = 0.0;
    let mut values = Array2::zeros((t, 2));
    for k in 0..t {
        cases += (k as f64 / 10.0).exp().min(5e4);
        values[[k, 0]] = cases;
        values[[k, 1]] = 0.02 * noise.sample(&mut rng);
    }
    let mut table = CovariateTable::new(dates.clone(), vec!["cases".into(), "oil".into()], values)?;
    let case_cols = table.case_columns();
    table.log1p_columns(&case_cols)?;

    // The series reacts to oil with a one-day delay.
    let y: Vec<f64> = (0..t)
        .map(|k| {
            let oil_prev = if k > 0 { table.values[[k - 1, 1]] } else { 0.0 };
            2.0 + 0.1 * table.values[[k, 0]] - 30.0 * oil_prev + 0.5 * noise.sample(&mut rng)
        })
        .collect();

    let lags = HashMap::from([("oil".to_string(), 1)]);
    let design = align_series(&dates, &y, &table, &lags)?;
    let fit = design.fit(None)?;
    print!("{}", fit.report());
    assert_eq!(fit.n_obs, t - 1);
    assert!((fit.coef[2] + 30.0).abs() < 3.0 * fit.se[2] + 5.0);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
