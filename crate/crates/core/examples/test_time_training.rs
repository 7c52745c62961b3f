//! Train on a graph whose object popularity rotates, forecast the next entity
//! distribution with the LSTM, and adapt the model snapshot by snapshot.

use tkgr_forge::eval::Protocol;
use tkgr_forge::experiments::ShiftSetup;
use tkgr_forge::pipeline;
use tkgr_forge::synth::popularity_shift;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = ShiftSetup::default();
    let ds = popularity_shift(&setup.data, 1)?;
    let trained = pipeline::train(&ds, &setup.train, 1).map_err(|f| f.error)?;
    let fitted = pipeline::fit_distribution(&ds, &setup.fit, 1)?;
    println!("predictor cross-entropy {:.4}", fitted.final_loss);

    let out = pipeline::adapt_and_evaluate(
        &ds,
        trained.target,
        &fitted.predictor,
        &setup.fit,
        &setup.ttt,
        Protocol::TimeAwareFiltered,
    )?;
    for step in 0..=setup.ttt.steps {
        if let Some(l) = out.adaptation.mean_loss_at(step) {
            println!("step {step:>2}  mean L_cmp {l:.4}");
        }
    }
    println!("before {}", out.before);
    println!("after  {}", out.after);
    Ok(())
}
