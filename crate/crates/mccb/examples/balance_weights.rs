//! Learn the per-coordinate cost weights from the demonstrations.

use mccb::balance::balance;
use mccb::gmm::EmConfig;
use mccb::{DemonstrationSet, MultiCoordModel, Trajectory};
use nalgebra::DMatrix;

fn main() -> mccb::Result<()> {
    // same shape, large per-demo translations: position is the least
    // reliable coordinate here
    let demos = DemonstrationSet::new(
        (0..5)
            .map(|j| {
                let off = j as f64 - 2.0;
                Trajectory::new(
                    DMatrix::from_fn(50, 2, |t, d| {
                        let phase = t as f64 / 49.0 * std::f64::consts::PI;
                        if d == 0 {
                            phase.cos() + off
                        } else {
                            phase.sin() + 0.5 * off
                        }
                    }),
                    1.0,
                )
                .unwrap()
            })
            .collect(),
        None,
    )?;

    let model = MultiCoordModel::train(&demos, 4, 0, &EmConfig::default())?;
    let result = balance(&model, &demos, 0.1)?;

    println!("beta (cost shares):   {:?}", result.beta);
    println!("alpha (preferences):  {:?}", result.alpha);
    println!(
        "weights alpha/beta:   cartesian {:.3}, tangent {:.3}, laplacian {:.3}",
        result.weights.cartesian, result.weights.tangent, result.weights.laplacian
    );
    println!("training SSE:         {:.6}", result.training_sse);
    println!("candidates evaluated: {}", result.grid_log.len());
    Ok(())
}
