//! Load a dataset directory, print its statistics and write the binary cache.
//!
//! ```text
//! cargo run --example ingest_and_stats -- path/to/ICEWS14 24h
//! ```
//! Without arguments the bundled four-fact fixture is used.

use std::path::PathBuf;

use tkgr_forge::data::{load_dataset, Interval, Split, TkgDataset};

fn main() -> tkgr_forge::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny"));
    let interval: Interval = args.next().as_deref().unwrap_or("24h").parse()?;

    let ds = load_dataset(&dir, &interval)?;
    println!("{}", ds.stats());

    let all = [Split::Train, Split::Valid, Split::Test];
    for t in ds.active_times(&all).into_iter().take(3) {
        let raw = ds.times().raw(t).unwrap_or_default();
        println!("snapshot {t} (raw {raw}): {} facts", ds.snapshot(t, &all)?.len());
    }

    let cache = std::env::temp_dir().join("tkgr-forge-example.tkgd");
    ds.write_cache(&cache)?;
    let back = TkgDataset::read_cache(&cache)?;
    assert_eq!(back, ds);
    println!("cache round trip ok: {}", cache.display());
    Ok(())
}
