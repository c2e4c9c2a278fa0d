//! Fit the three coordinate mixtures and persist them as JSON.

use mccb::gmm::EmConfig;
use mccb::{Coordinate, DemonstrationSet, MultiCoordModel, Trajectory};
use nalgebra::DMatrix;

fn main() -> mccb::Result<()> {
    let demos = DemonstrationSet::new(
        (0..5)
            .map(|j| {
                let off = j as f64 * 0.1;
                Trajectory::new(
                    DMatrix::from_fn(60, 2, |t, d| {
                        let u = t as f64 / 59.0;
                        let phase = std::f64::consts::PI * u;
                        if d == 0 {
                            phase.cos() + off
                        } else {
                            phase.sin() - off
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
    for coord in Coordinate::ALL {
        let m = model.mixture(coord);
        println!(
            "{:<9} K={} log-likelihood {:.2} after {} iterations",
            coord.name(),
            m.k(),
            m.log_likelihood(),
            m.iterations()
        );
    }

    let json = serde_json::to_string_pretty(&model.to_schema()).expect("serialize");
    let path = std::env::temp_dir().join("mccb_model.json");
    std::fs::write(&path, &json).expect("write model");
    println!("wrote {} ({} bytes)", path.display(), json.len());

    let restored = MultiCoordModel::from_schema(&serde_json::from_str(&json).expect("parse"))?;
    assert_eq!(restored.horizon(), model.horizon());
    println!("reload ok: horizon {}, dims {}", restored.horizon(), restored.dims());
    Ok(())
}
