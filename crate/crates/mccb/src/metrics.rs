//! Trajectory similarity metrics: SSE, path-normalized DTW distance,
//! discrete Frechet distance, and swept error area (2-D only).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{dtw, Trajectory};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricReport {
    pub sse: f64,
    pub dtwd: f64,
    pub frechet: f64,
    /// Present iff the trajectories are 2-D.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sea: Option<f64>,
}

/// Sum of squared per-step errors over a shared horizon.
pub fn sse(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.horizon() != b.horizon() || a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "sse needs equal shapes, got {}x{} vs {}x{}",
            a.horizon(),
            a.dims(),
            b.horizon(),
            b.dims()
        )));
    }
    Ok(sse_matrices(a.samples(), b.samples()))
}

pub(crate) fn sse_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).map(|v| v * v).sum()
}

/// DTW distance: minimal summed Euclidean cost over symmetric-step
/// warping paths, normalized by the path length.
pub fn dtwd(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch("dtwd needs equal dimensions".into()));
    }
    let res = dtw(a.samples(), b.samples());
    Ok(res.cost / res.path.len() as f64)
}

/// Discrete Frechet distance: the minimum over monotone couplings of
/// the maximal point-pair distance.
pub fn frechet(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch("frechet needs equal dimensions".into()));
    }
    let (sa, sb) = (a.samples(), b.samples());
    let (ta, tb) = (sa.nrows(), sb.nrows());
    let local = |i: usize, j: usize| (sa.row(i) - sb.row(j)).norm();
    let mut dp = DMatrix::zeros(ta, tb);
    dp[(0, 0)] = local(0, 0);
    for i in 1..ta {
        dp[(i, 0)] = dp[(i - 1, 0)].max(local(i, 0));
    }
    for j in 1..tb {
        dp[(0, j)] = dp[(0, j - 1)].max(local(0, j));
    }
    for i in 1..ta {
        for j in 1..tb {
            let reach = dp[(i - 1, j)].min(dp[(i, j - 1)]).min(dp[(i - 1, j - 1)]);
            dp[(i, j)] = reach.max(local(i, j));
        }
    }
    Ok(dp[(ta - 1, tb - 1)])
}

fn triangle_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])).abs()
}

/// Swept error area between corresponding segments of two 2-D
/// trajectories: each quadrilateral (a(t), a(t+1), b(t+1), b(t)) is
/// split on the diagonal (a(t), b(t+1)) and the absolute triangle
/// areas are summed.
pub fn sea(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dims() != 2 || b.dims() != 2 {
        return Err(Error::DimensionMismatch("sea is defined for 2-D trajectories only".into()));
    }
    if a.horizon() != b.horizon() {
        return Err(Error::DimensionMismatch("sea needs equal horizons".into()));
    }
    let pt = |m: &DMatrix<f64>, t: usize| [m[(t, 0)], m[(t, 1)]];
    let (sa, sb) = (a.samples(), b.samples());
    let mut total = 0.0;
    for t in 0..a.horizon() - 1 {
        let (a0, a1) = (pt(sa, t), pt(sa, t + 1));
        let (b0, b1) = (pt(sb, t), pt(sb, t + 1));
        total += triangle_area(a0, a1, b1) + triangle_area(a0, b1, b0);
    }
    Ok(total)
}

/// All applicable metrics for a reproduction/demonstration pair.
pub fn report(a: &Trajectory, b: &Trajectory) -> Result<MetricReport> {
    Ok(MetricReport {
        sse: sse(a, b)?,
        dtwd: dtwd(a, b)?,
        frechet: frechet(a, b)?,
        sea: if a.dims() == 2 { Some(sea(a, b)?) } else { None },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn traj(rows: &[Vec<f64>]) -> Trajectory {
        Trajectory::from_rows(rows, 1.0).unwrap()
    }

    fn traj1(vals: &[f64]) -> Trajectory {
        Trajectory::new(DMatrix::from_column_slice(vals.len(), 1, vals), 1.0).unwrap()
    }

    #[test]
    fn sse_cases() {
        let a = traj1(&[0.0, 0.0, 0.0]);
        let b = traj1(&[1.0, 1.0, 0.0]);
        assert_eq!(sse(&a, &a).unwrap(), 0.0);
        assert_eq!(sse(&a, &b).unwrap(), 2.0);
        let p = traj(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]);
        let q = traj(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(sse(&p, &q).unwrap(), 25.0);
    }

    #[test]
    fn dtwd_time_warp_invariance() {
        let a = traj1(&[0.0, 1.0, 2.0, 3.0]);
        let doubled = traj1(&[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(dtwd(&a, &a).unwrap(), 0.0);
        assert_eq!(dtwd(&a, &doubled).unwrap(), 0.0);
    }

    #[test]
    fn frechet_cases() {
        let a = traj(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
        let b = traj(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]]);
        assert_eq!(frechet(&a, &a).unwrap(), 0.0);
        assert_eq!(frechet(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn sea_unit_square() {
        let a = traj(&[vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]]);
        let b = traj(&[vec![0.0, 1.0], vec![0.5, 1.0], vec![1.0, 1.0]]);
        assert_eq!(sea(&a, &a).unwrap(), 0.0);
        assert!((sea(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sea_crossing_segments_matches_shoelace() {
        let a = traj(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        let b = traj(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, -1.0]]);
        // first quad: a0=(0,0) a1=(1,1) b1=(1,0) b0=(0,1)
        let t1 = triangle_area([0.0, 0.0], [1.0, 1.0], [1.0, 0.0]);
        let t2 = triangle_area([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        // second quad: a1=(1,1) a2=(2,2) b2=(2,-1) b1=(1,0)
        let t3 = triangle_area([1.0, 1.0], [2.0, 2.0], [2.0, -1.0]);
        let t4 = triangle_area([1.0, 1.0], [2.0, -1.0], [1.0, 0.0]);
        assert!((sea(&a, &b).unwrap() - (t1 + t2 + t3 + t4)).abs() < 1e-15);
    }

    #[test]
    fn sea_rigid_transform_invariance() {
        let a = traj(&[vec![0.0, 0.0], vec![1.0, 0.2], vec![2.0, -0.3], vec![3.0, 0.5]]);
        let b = traj(&[vec![0.1, 0.4], vec![1.2, 0.9], vec![1.9, 0.1], vec![3.3, 1.0]]);
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let rot = |t: &Trajectory| {
            let m = t.samples();
            let rows: Vec<Vec<f64>> = (0..m.nrows())
                .map(|i| {
                    vec![
                        c * m[(i, 0)] - s * m[(i, 1)] + 7.0,
                        s * m[(i, 0)] + c * m[(i, 1)] - 2.0,
                    ]
                })
                .collect();
            traj(&rows)
        };
        let before = sea(&a, &b).unwrap();
        let after = sea(&rot(&a), &rot(&b)).unwrap();
        assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn metrics_symmetric_and_nonnegative() {
        let a = traj(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![2.0, 0.1]]);
        let b = traj(&[vec![0.2, -0.1], vec![0.9, 0.7], vec![2.2, 0.0]]);
        // sea is excluded: its quad split is on the (a(t), b(t+1))
        // diagonal, so swapping the arguments changes the split
        let fns: [fn(&Trajectory, &Trajectory) -> Result<f64>; 3] = [sse, dtwd, frechet];
        for f in fns {
            let ab = f(&a, &b).unwrap();
            let ba = f(&b, &a).unwrap();
            assert!(ab >= 0.0);
            assert!((ab - ba).abs() <= 1e-15);
        }
        assert!(sea(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn frechet_bounded_by_max_pointwise_distance() {
        let a = traj(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]);
        let b = traj(&[vec![0.0, 0.5], vec![1.0, 1.5], vec![2.0, 0.2], vec![3.0, 0.9]]);
        let max_pt = (0..4)
            .map(|t| (a.samples().row(t) - b.samples().row(t)).norm())
            .fold(0.0f64, f64::max);
        assert!(frechet(&a, &b).unwrap() <= max_pt + 1e-15);
    }

    #[test]
    fn report_sea_presence_tracks_dimension() {
        let a2 = traj(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert!(report(&a2, &a2).unwrap().sea.is_some());
        let a3 = traj(&[vec![0.0; 3], vec![1.0; 3], vec![2.0; 3]]);
        assert!(report(&a3, &a3).unwrap().sea.is_none());
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = traj1(&[0.0, 1.0, 2.0]);
        let b = traj1(&[0.0, 1.0, 2.0, 3.0]);
        assert!(sse(&a, &b).is_err());
        let c = traj(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert!(dtwd(&a, &c).is_err());
        assert!(frechet(&a, &c).is_err());
        assert!(sea(&a, &a).is_err());
    }
}
