//! Generate a constrained reproduction that passes through a via point
//! the demonstrations never visited.

use mccb::gmm::EmConfig;
use mccb::{ConstraintSet, DemonstrationSet, MultiCoordModel, Trajectory, WeightTriple};
use mccb::reproduce::solve_reproduction;
use nalgebra::DMatrix;

fn main() -> mccb::Result<()> {
    let demos = DemonstrationSet::new(
        (0..4)
            .map(|j| {
                let off = j as f64 * 0.05;
                Trajectory::new(
                    DMatrix::from_fn(80, 2, |t, d| {
                        let u = t as f64 / 79.0;
                        if d == 0 {
                            u + off
                        } else {
                            (std::f64::consts::PI * u).sin() + off
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

    // pin both endpoints and force a detour at t = 40
    let constraints = ConstraintSet::new(80)
        .with_point(0, &[0.0, 0.0])
        .with_point(40, &[0.5, 1.6])
        .with_point(79, &[1.0, 0.0]);
    let weights = WeightTriple::new(0.2, 0.4, 0.4)?;
    let result = solve_reproduction(&model, &weights, &constraints)?;

    println!(
        "via point hit: ({:.6}, {:.6})",
        result.trajectory.samples()[(40, 0)],
        result.trajectory.samples()[(40, 1)]
    );
    println!(
        "costs: cartesian {:.2}, tangent {:.2}, laplacian {:.2}",
        result.costs.cartesian, result.costs.tangent, result.costs.laplacian
    );
    println!(
        "constraint residual {:.2e}, stationarity residual {:.2e}",
        result.constraint_residual, result.kkt_residual
    );
    Ok(())
}
