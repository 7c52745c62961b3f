//! Build a run configuration from `key = value` text and print the full
//! effective configuration.

use std::path::Path;

use tkgr_forge::config::RunConfig;

const TEXT: &str = "\
# adversarial run on a local copy of ICEWS14
dataset = ICEWS14
interval = 24h
model = trilinear-time
strategy = tkgan
candidates = 32
ttt_steps = 10
";

fn main() -> tkgr_forge::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_str(TEXT, Path::new("<inline>"))?;
    cfg.set("seed", "7")?;
    print!("{}", cfg.render());
    if let Err(e) = cfg.set("candidats", "8") {
        println!("# rejected: {e}");
    }
    Ok(())
}
