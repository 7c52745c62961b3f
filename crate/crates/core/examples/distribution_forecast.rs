//! Fit the LSTM on per-snapshot object distributions and forecast the next.

use tkgr_forge::data::Split;
use tkgr_forge::synth::{popularity_shift, PopularityShiftConfig};
use tkgr_forge::ttt::{fit_predictor, CountMode, DistributionSeries, LstmConfig};

fn main() -> tkgr_forge::Result<()> {
    let cfg = PopularityShiftConfig::default();
    let ds = popularity_shift(&cfg, 0)?;
    let series = DistributionSeries::from_dataset(&ds, &[Split::Train, Split::Valid], CountMode::ObjectOnly)?;
    let lstm = LstmConfig {
        window: 5,
        hidden: 16,
        epochs: 100,
        ..Default::default()
    };
    let fitted = fit_predictor(&series, &lstm, 0)?;
    println!("{} snapshots, final cross-entropy {:.4}", series.len(), fitted.final_loss);

    let window: Vec<&[f64]> = series.distributions[series.len() - lstm.window..]
        .iter()
        .map(Vec::as_slice)
        .collect();
    let next = fitted.predictor.predict(&window)?;
    let next_time = *series.times.last().unwrap() + 1;
    for g in 0..cfg.groups {
        let mass: f64 = cfg.group_members(g).map(|e| next[e as usize]).sum();
        println!("group {g}: forecast mass {mass:.3}");
    }
    println!("true popular group at t = {next_time}: {}", cfg.group_at(next_time));
    Ok(())
}
