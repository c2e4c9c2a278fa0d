//! Align demonstrations of different lengths onto a common horizon.

use mccb::{DemonstrationSet, Trajectory};
use nalgebra::DMatrix;

fn wavy(horizon: usize, speed: f64, offset: f64) -> Trajectory {
    Trajectory::new(
        DMatrix::from_fn(horizon, 2, |t, d| {
            let u = (t as f64 / (horizon - 1) as f64 * speed).min(1.0);
            let phase = std::f64::consts::PI * u;
            if d == 0 {
                phase.cos() + offset
            } else {
                phase.sin()
            }
        }),
        1.0,
    )
    .unwrap()
}

fn main() -> mccb::Result<()> {
    // same gesture demonstrated at different speeds and lengths
    let demos = DemonstrationSet::new(
        vec![wavy(80, 1.0, 0.0), wavy(120, 1.3, 0.05), wavy(60, 0.9, -0.05)],
        Some(vec!["slow".into(), "fast".into(), "short".into()]),
    )?;

    let medoid = demos.medoid_index();
    println!("medoid demonstration: {}", demos.labels()[medoid]);

    let aligned = demos.align_to_medoid(Some(100))?;
    for (label, demo) in aligned.labels().iter().zip(aligned.demos()) {
        println!(
            "{label}: {} samples, start ({:.3}, {:.3}), end ({:.3}, {:.3})",
            demo.horizon(),
            demo.samples()[(0, 0)],
            demo.samples()[(0, 1)],
            demo.samples()[(99, 0)],
            demo.samples()[(99, 1)],
        );
    }
    Ok(())
}
