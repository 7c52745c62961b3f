//! Two-stage adversarial training against a uniform-negative baseline on the
//! planted-cluster graph, where hard negatives live in the object's cluster.
//!
//! ```text
//! cargo run --release --example adversarial_training -- 3
//! ```

use tkgr_forge::experiments::{hard_negative_trial, HardNegativeSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let setup = HardNegativeSetup::default();
    let trial = hard_negative_trial(&setup, seed).map_err(|f| f.error)?;
    println!(
        "discriminator energy: generator negatives {:.3}, uniform negatives {:.3}",
        trial.generator_negative_energy, trial.uniform_negative_energy
    );
    println!("tkgan  {}", trial.tkgan);
    println!("rns    {}", trial.rns);
    Ok(())
}
