//! Five-way comparison: each single-coordinate baseline, the uniform
//! blend, and the balanced weights, scored against the demonstrations.

use mccb::balance::balance;
use mccb::gmm::EmConfig;
use mccb::{metrics, ConstraintSet, DemonstrationSet, MultiCoordModel, Reproducer, Trajectory, WeightTriple};
use nalgebra::DMatrix;

fn main() -> mccb::Result<()> {
    let demos = DemonstrationSet::new(
        (0..5)
            .map(|j| {
                let off = j as f64 * 0.4 - 0.8;
                Trajectory::new(
                    DMatrix::from_fn(60, 2, |t, d| {
                        let phase = t as f64 / 59.0 * std::f64::consts::PI;
                        if d == 0 {
                            phase.cos() + off
                        } else {
                            phase.sin()
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
    let balanced = balance(&model, &demos, 0.1)?;
    let rep = Reproducer::new(&model)?;

    let methods = [
        ("cartesian", WeightTriple::new(1.0, 0.0, 0.0)?),
        ("tangent", WeightTriple::new(0.0, 1.0, 0.0)?),
        ("laplacian", WeightTriple::new(0.0, 0.0, 1.0)?),
        ("uniform", WeightTriple::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)?),
        ("balanced", balanced.weights),
    ];

    println!("{:<10} {:>12} {:>12} {:>12}", "method", "sse", "dtwd", "frechet");
    for (name, weights) in methods {
        let (mut sse, mut dtwd, mut frechet) = (0.0, 0.0, 0.0);
        for demo in demos.demos() {
            match rep.solve(&weights, &ConstraintSet::endpoints(demo)) {
                Ok(sol) => {
                    let r = metrics::report(&sol.trajectory, demo)?;
                    sse += r.sse;
                    dtwd += r.dtwd;
                    frechet += r.frechet;
                }
                Err(_) => {
                    println!("{name:<10} {:>12}", "infeasible");
                    continue;
                }
            }
        }
        println!("{name:<10} {sse:>12.4} {dtwd:>12.4} {frechet:>12.4}");
    }
    Ok(())
}
