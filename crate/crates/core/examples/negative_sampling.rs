//! Uniform, time-aware and bern-weighted corruptions, and the candidate set
//! the adversarial generator scores.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tkgr_forge::sampling::{NegativeSampler, SamplerConfig};
use tkgr_forge::synth::{cluster_tkg, ClusterConfig};

fn main() -> tkgr_forge::Result<()> {
    let ds = cluster_tkg(&ClusterConfig::default(), 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let g = ds.train()[0];
    println!("positive {g}");

    let plain = NegativeSampler::new(&ds, SamplerConfig::default());
    let (neg, slot) = plain.sample_random(&g, &mut rng)?;
    println!("random      {neg} ({slot})");
    let (neg, slot) = plain.sample_time_aware(&g, &mut rng)?;
    println!("time-aware  {neg} ({slot}); {} entities active in the window", plain.window_entities(g.time).len());

    let bern = NegativeSampler::new(
        &ds,
        SamplerConfig {
            bern: true,
            ..Default::default()
        },
    );
    if let Some(e) = bern.cardinality().entry(g.predicate) {
        println!(
            "relation {}: tails/head {:.2}, heads/tail {:.2}, P(replace head) {:.3}",
            g.predicate, e.tails_per_head, e.heads_per_tail, e.p_replace_head
        );
    }

    let set = bern.build_candidates(&g, 8, &mut rng)?;
    for (c, s) in set.candidates.iter().zip(&set.slots) {
        println!("candidate   {c} ({s})");
    }
    Ok(())
}
