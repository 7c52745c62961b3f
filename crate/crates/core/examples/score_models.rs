//! The three score models: energies, gradients and checkpoints.

use tkgr_forge::data::Quadruple;
use tkgr_forge::models::{ModelDims, ModelKind, ParameterStore, ScoreModel};

fn main() -> tkgr_forge::Result<()> {
    let dims = ModelDims {
        num_entities: 5,
        num_relations: 2,
        num_timestamps: 4,
        dim: 8,
    };
    let q = Quadruple::new(0, 1, 3, 2);
    for kind in ModelKind::ALL {
        let model = ScoreModel::init(kind, dims, 42)?;
        let grad = model.energy_gradient(&q)?;
        println!(
            "{:<15} E{q} = {:+.4}  (gradient touches {} rows, norm {:.4})",
            kind.name(),
            model.energy(&q)?,
            grad.len(),
            grad.norm()
        );
        let best = model
            .object_plausibilities(q.subject, q.predicate, q.time)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(e, _)| e)
            .unwrap();
        println!("{:<15} most plausible object for (0, 1, ?, 2): {best}", "");

        let bytes = model.store().to_checkpoint_bytes()?;
        let back = ScoreModel::new(ParameterStore::from_checkpoint_bytes(&bytes)?);
        assert_eq!(back.energy(&q)?, model.energy(&q)?);
    }
    Ok(())
}
