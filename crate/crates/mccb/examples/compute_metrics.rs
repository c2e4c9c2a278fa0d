//! Similarity metrics between two trajectories.

use mccb::{metrics, Trajectory};
use nalgebra::DMatrix;

fn main() -> mccb::Result<()> {
    let reference = Trajectory::new(
        DMatrix::from_fn(100, 2, |t, d| {
            let u = t as f64 / 99.0;
            if d == 0 {
                u
            } else {
                (2.0 * std::f64::consts::PI * u).sin() * 0.5
            }
        }),
        1.0,
    )?;
    // same curve, slightly time-warped and offset
    let candidate = Trajectory::new(
        DMatrix::from_fn(100, 2, |t, d| {
            let u = (t as f64 / 99.0).powf(1.2);
            if d == 0 {
                u + 0.02
            } else {
                (2.0 * std::f64::consts::PI * u).sin() * 0.5 - 0.01
            }
        }),
        1.0,
    )?;

    let report = metrics::report(&candidate, &reference)?;
    println!("sse      {:.6}", report.sse);
    println!("dtwd     {:.6}", report.dtwd);
    println!("frechet  {:.6}", report.frechet);
    if let Some(sea) = report.sea {
        println!("sea      {sea:.6}");
    }
    Ok(())
}
