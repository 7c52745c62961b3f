//! Train a small model and rank the test split under both protocols.

use tkgr_forge::eval::{evaluate, FilterIndex, Protocol};
use tkgr_forge::pipeline::{train, Strategy, TrainSettings};
use tkgr_forge::synth::{cluster_tkg, ClusterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = cluster_tkg(&ClusterConfig::default(), 2)?;
    let mut settings = TrainSettings {
        dim: 32,
        epochs: 30,
        strategy: Strategy::Tans,
        ..Default::default()
    };
    settings.adversarial.batch_size = 256;
    settings.adversarial.lr_discriminator = 0.01;
    let trained = train(&ds, &settings, 2).map_err(|f| f.error)?;

    let filter = FilterIndex::from_dataset(&ds);
    for protocol in [Protocol::Raw, Protocol::TimeAwareFiltered] {
        println!("{}", evaluate(&trained.target, ds.test(), protocol, &filter)?);
    }
    Ok(())
}
