//! KS and Mann-Whitney U tests between consecutive snapshot windows of a
//! stream whose relation mix switches halfway.

use tkgr_forge::data::Split;
use tkgr_forge::shift::{analyze_shift, ShiftFeature};
use tkgr_forge::synth::relation_rotation;

fn main() -> tkgr_forge::Result<()> {
    let ds = relation_rotation(50, 8, 60, 30, 40, 7)?;
    let report = analyze_shift(&ds, &"10".parse()?, ShiftFeature::Relation, &[Split::Train])?;
    report.write_csv(std::io::stdout().lock())?;
    if let Some(i) = report.max_shift_pair() {
        let p = &report.pairs[i];
        println!("largest shift between windows {} and {}", p.window_a, p.window_b);
    }
    Ok(())
}
