//! Demonstration ingestion, validation, DTW time alignment, and resampling.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};

/// A uniformly indexed sequence of n-dimensional samples.
///
/// Rows are time steps, columns are spatial dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: DMatrix<f64>,
    dt: f64,
}

impl Trajectory {
    /// Validates and wraps a sample matrix. Requires at least 3 rows,
    /// at least 1 column, and finite entries.
    pub fn new(samples: DMatrix<f64>, dt: f64) -> Result<Self> {
        if samples.nrows() < 3 {
            return Err(Error::InvalidTrajectory(format!(
                "need at least 3 time steps, got {}",
                samples.nrows()
            )));
        }
        if samples.ncols() < 1 {
            return Err(Error::InvalidTrajectory("need at least 1 dimension".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite sample".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTrajectory(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { samples, dt })
    }

    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidTrajectory("empty trajectory".into()));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidTrajectory("ragged rows".into()));
        }
        let mat = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Self::new(mat, dt)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps.
    pub fn horizon(&self) -> usize {
        self.samples.nrows()
    }

    /// Number of spatial dimensions.
    pub fn dims(&self) -> usize {
        self.samples.ncols()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.samples.row(t).iter().copied().collect()
    }

    /// Largest pairwise sample distance; used as a scale for relative
    /// error thresholds.
    pub fn diameter(&self) -> f64 {
        let t = self.horizon();
        let mut d = 0.0f64;
        for i in 0..t {
            for j in (i + 1)..t {
                d = d.max((self.samples.row(i) - self.samples.row(j)).norm());
            }
        }
        d
    }

    /// Linear resampling to `target_t` uniformly spaced indices.
    /// First and last samples are preserved exactly.
    pub fn resample(&self, target_t: usize) -> Result<Self> {
        if target_t < 3 {
            return Err(Error::InvalidArgument(format!(
                "target horizon must be >= 3, got {target_t}"
            )));
        }
        let t = self.horizon();
        let n = self.dims();
        let mut out = DMatrix::zeros(target_t, n);
        for k in 0..target_t {
            let pos = (k as f64) * ((t - 1) as f64) / ((target_t - 1) as f64);
            let i0 = (pos.floor() as usize).min(t - 2);
            let frac = pos - i0 as f64;
            for j in 0..n {
                out[(k, j)] = if frac == 0.0 {
                    self.samples[(i0, j)]
                } else {
                    (1.0 - frac) * self.samples[(i0, j)] + frac * self.samples[(i0 + 1, j)]
                };
            }
        }
        // endpoints exact
        for j in 0..n {
            out[(0, j)] = self.samples[(0, j)];
            out[(target_t - 1, j)] = self.samples[(t - 1, j)];
        }
        Trajectory::new(out, self.dt * (t as f64 - 1.0) / (target_t as f64 - 1.0))
    }
}

/// A collection of demonstrations sharing the same spatial dimension.
/// Horizons may differ before alignment.
#[derive(Debug, Clone)]
pub struct DemonstrationSet {
    demos: Vec<Trajectory>,
    labels: Vec<String>,
}

impl DemonstrationSet {
    pub fn new(demos: Vec<Trajectory>, labels: Option<Vec<String>>) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::InvalidDemonstrationSet("need at least one demonstration".into()));
        }
        let n = demos[0].dims();
        if let Some(bad) = demos.iter().position(|d| d.dims() != n) {
            return Err(Error::InvalidDemonstrationSet(format!(
                "demonstration {bad} has {} dims, expected {n}",
                demos[bad].dims()
            )));
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != demos.len() {
                    return Err(Error::InvalidDemonstrationSet(
                        "label count does not match demonstration count".into(),
                    ));
                }
                l
            }
            None => (0..demos.len()).map(|i| format!("demo{i}")).collect(),
        };
        Ok(Self { demos, labels })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn demos(&self) -> &[Trajectory] {
        &self.demos
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> usize {
        self.demos[0].dims()
    }

    /// Common horizon if every member has the same length.
    pub fn aligned_horizon(&self) -> Option<usize> {
        let t = self.demos[0].horizon();
        self.demos.iter().all(|d| d.horizon() == t).then_some(t)
    }

    pub fn require_aligned(&self) -> Result<usize> {
        self.aligned_horizon().ok_or_else(|| {
            Error::InvalidDemonstrationSet("demonstrations have differing horizons; align first".into())
        })
    }

    /// Index of the demonstration with minimal summed DTW distance to all
    /// others; ties broken by lowest index.
    pub fn medoid_index(&self) -> usize {
        let n = self.demos.len();
        if n == 1 {
            return 0;
        }
        let mut dist = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dtw(self.demos[i].samples(), self.demos[j].samples()).cost;
                dist[i][j] = d;
                dist[j][i] = d;
            }
        }
        let mut best = 0usize;
        let mut best_sum = f64::INFINITY;
        for (i, row) in dist.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s < best_sum {
                best_sum = s;
                best = i;
            }
        }
        best
    }

    /// Warps every demonstration onto the reference's time axis via the
    /// optimal DTW path, then resamples to exactly `target_t` indices.
    pub fn dtw_align(&self, reference_index: usize, target_t: usize) -> Result<DemonstrationSet> {
        if reference_index >= self.demos.len() {
            return Err(Error::InvalidArgument(format!(
                "reference index {reference_index} out of range (N = {})",
                self.demos.len()
            )));
        }
        if target_t < 3 {
            return Err(Error::InvalidArgument(format!(
                "target horizon must be >= 3, got {target_t}"
            )));
        }
        let reference = &self.demos[reference_index];
        let mut aligned = Vec::with_capacity(self.demos.len());
        for (i, demo) in self.demos.iter().enumerate() {
            let warped = if i == reference_index {
                reference.clone()
            } else {
                warp_onto(reference, demo)?
            };
            aligned.push(warped.resample(target_t)?);
        }
        DemonstrationSet::new(aligned, Some(self.labels.clone()))
    }

    /// Convenience: align against the medoid at its own horizon.
    pub fn align_to_medoid(&self, target_t: Option<usize>) -> Result<DemonstrationSet> {
        let m = self.medoid_index();
        let t = target_t.unwrap_or_else(|| self.demos[m].horizon());
        self.dtw_align(m, t)
    }
}

/// Demonstration file formats accepted by [`load_demonstrations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoFormat {
    /// Directory of headerless CSV files, one file per demonstration,
    /// one `v1,v2,...,vn` row per time step.
    CsvDir,
    /// Single file, one JSON object per line:
    /// `{"id": string, "samples": [[...],[...]]}`.
    Jsonl,
}

pub fn load_demonstrations(path: &Path, format: DemoFormat) -> Result<DemonstrationSet> {
    match format {
        DemoFormat::CsvDir => load_csv_dir(path),
        DemoFormat::Jsonl => load_jsonl(path),
    }
}

fn load_csv_dir(dir: &Path) -> Result<DemonstrationSet> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidDemonstrationSet(format!(
            "no .csv files in {}",
            dir.display()
        )));
    }
    let mut demos = Vec::new();
    let mut labels = Vec::new();
    for file in files {
        demos.push(parse_csv_file(&file)?);
        labels.push(
            file.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    DemonstrationSet::new(demos, Some(labels))
}

fn parse_csv_file(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("malformed value `{}`", tok.trim()),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "empty file".into(),
        });
    }
    Trajectory::from_rows(&rows, 1.0)
}

#[derive(Deserialize)]
struct JsonlDemo {
    id: String,
    samples: Vec<Vec<f64>>,
}

fn load_jsonl(path: &Path) -> Result<DemonstrationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut demos = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlDemo = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        demos.push(Trajectory::from_rows(&rec.samples, 1.0)?);
        labels.push(rec.id);
    }
    if demos.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "empty file".into(),
        });
    }
    DemonstrationSet::new(demos, Some(labels))
}

/// Optimal DTW alignment between two sample matrices.
pub(crate) struct DtwResult {
    /// Summed Euclidean local cost along the optimal path.
    pub cost: f64,
    /// Monotone index pairs from (0,0) to (Ta-1, Tb-1).
    pub path: Vec<(usize, usize)>,
}

/// Dynamic time warping with the symmetric step pattern
/// {(1,0),(0,1),(1,1)} and Euclidean local cost. Ties prefer the
/// diagonal predecessor so that identical inputs yield the diagonal path.
pub(crate) fn dtw(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DtwResult {
    let (ta, tb) = (a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols(), "dtw: dimension mismatch");
    let local = |i: usize, j: usize| (a.row(i) - b.row(j)).norm();
    let mut acc = DMatrix::from_element(ta, tb, f64::INFINITY);
    acc[(0, 0)] = local(0, 0);
    for i in 1..ta {
        acc[(i, 0)] = acc[(i - 1, 0)] + local(i, 0);
    }
    for j in 1..tb {
        acc[(0, j)] = acc[(0, j - 1)] + local(0, j);
    }
    for i in 1..ta {
        for j in 1..tb {
            let best = acc[(i - 1, j - 1)].min(acc[(i - 1, j)]).min(acc[(i, j - 1)]);
            acc[(i, j)] = best + local(i, j);
        }
    }
    // backtrack, diagonal first on ties
    let mut path = vec![(ta - 1, tb - 1)];
    let (mut i, mut j) = (ta - 1, tb - 1);
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = acc[(i - 1, j - 1)];
            let up = acc[(i - 1, j)];
            let left = acc[(i, j - 1)];
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        path.push((i, j));
    }
    path.reverse();
    DtwResult {
        cost: acc[(ta - 1, tb - 1)],
        path,
    }
}

/// Warp `demo` onto `reference`'s time axis: sample t of the result is
/// the mean of the demo samples matched to reference index t on the
/// optimal path.
fn warp_onto(reference: &Trajectory, demo: &Trajectory) -> Result<Trajectory> {
    let res = dtw(reference.samples(), demo.samples());
    let t_ref = reference.horizon();
    let n = demo.dims();
    let mut out = DMatrix::zeros(t_ref, n);
    let mut counts = vec![0usize; t_ref];
    for &(i, j) in &res.path {
        for d in 0..n {
            out[(i, d)] += demo.samples()[(j, d)];
        }
        counts[i] += 1;
    }
    for i in 0..t_ref {
        debug_assert!(counts[i] > 0, "dtw path must cover every reference index");
        for d in 0..n {
            out[(i, d)] /= counts[i] as f64;
        }
    }
    Trajectory::new(out, reference.dt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn traj(rows: &[f64]) -> Trajectory {
        Trajectory::new(DMatrix::from_column_slice(rows.len(), 1, rows), 1.0).unwrap()
    }

    #[test]
    fn rejects_short_and_nonfinite() {
        assert!(Trajectory::new(dmatrix![0.0; 1.0], 1.0).is_err());
        assert!(Trajectory::new(dmatrix![0.0; f64::NAN; 1.0], 1.0).is_err());
        assert!(Trajectory::new(dmatrix![0.0; 1.0; 2.0], 0.0).is_err());
        assert!(Trajectory::new(dmatrix![0.0; 1.0; 2.0], 1.0).is_ok());
    }

    #[test]
    fn resample_preserves_endpoints() {
        let t = traj(&[0.0, 1.0, 4.0, 9.0, 16.0]);
        let r = t.resample(11).unwrap();
        assert_eq!(r.horizon(), 11);
        assert_eq!(r.samples()[(0, 0)], 0.0);
        assert_eq!(r.samples()[(10, 0)], 16.0);
    }

    #[test]
    fn resample_same_length_is_identity() {
        let t = traj(&[0.0, 0.3, 1.7, 2.0]);
        let r = t.resample(4).unwrap();
        assert_eq!(r.samples(), t.samples());
    }

    #[test]
    fn identical_demos_align_to_identical_outputs() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin()).collect();
        let set = DemonstrationSet::new(vec![traj(&a), traj(&a)], None).unwrap();
        let aligned = set.dtw_align(0, 50).unwrap();
        assert_eq!(aligned.demos()[0].samples(), aligned.demos()[1].samples());
        assert_eq!(aligned.demos()[0].horizon(), 50);
    }

    #[test]
    fn double_speed_demo_aligns_to_reference() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.06).sin()).collect();
        let b: Vec<f64> = a.iter().step_by(2).copied().collect();
        let set = DemonstrationSet::new(vec![traj(&a), traj(&b)], None).unwrap();
        let aligned = set.dtw_align(0, 100).unwrap();
        let spacing = 0.06f64.sin(); // one sample of motion
        let max_err = (aligned.demos()[1].samples() - aligned.demos()[0].samples())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err <= spacing, "max_err {max_err} > {spacing}");
    }

    #[test]
    fn align_is_idempotent() {
        let a: Vec<f64> = (0..80).map(|i| (i as f64 * 0.08).sin()).collect();
        let b: Vec<f64> = (0..120).map(|i| (i as f64 * 0.0533).sin()).collect();
        let set = DemonstrationSet::new(vec![traj(&a), traj(&b)], None).unwrap();
        let once = set.dtw_align(0, 80).unwrap();
        let twice = once.dtw_align(0, 80).unwrap();
        for (x, y) in once.demos().iter().zip(twice.demos()) {
            let diff = (x.samples() - y.samples()).abs().max();
            assert!(diff <= 1e-12, "idempotency violated: {diff}");
        }
    }

    #[test]
    fn alignment_does_not_increase_dtw_distance() {
        let a: Vec<f64> = (0..60).map(|i| (i as f64 * 0.1).sin()).collect();
        let b: Vec<f64> = (0..90).map(|i| (i as f64 * 0.07).sin() + 0.05).collect();
        let set = DemonstrationSet::new(vec![traj(&a), traj(&b)], None).unwrap();
        let before = dtw(set.demos()[0].samples(), set.demos()[1].samples()).cost;
        let aligned = set.dtw_align(0, 60).unwrap();
        let after = dtw(aligned.demos()[0].samples(), aligned.demos()[1].samples()).cost;
        assert!(after <= before + 1e-12, "after {after} > before {before}");
    }

    #[test]
    fn single_demo_align_resamples_only() {
        let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let set = DemonstrationSet::new(vec![traj(&a)], None).unwrap();
        let aligned = set.dtw_align(0, 20).unwrap();
        assert_eq!(aligned.len(), 1);
        assert_eq!(aligned.demos()[0].horizon(), 20);
        assert_eq!(aligned.demos()[0].samples()[(0, 0)], 0.0);
        assert_eq!(aligned.demos()[0].samples()[(19, 0)], 39.0);
    }

    #[test]
    fn medoid_prefers_central_demo() {
        let base: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).sin()).collect();
        let lo: Vec<f64> = base.iter().map(|v| v - 1.0).collect();
        let hi: Vec<f64> = base.iter().map(|v| v + 1.0).collect();
        let set = DemonstrationSet::new(vec![traj(&lo), traj(&base), traj(&hi)], None).unwrap();
        assert_eq!(set.medoid_index(), 1);
    }

    #[test]
    fn csv_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.csv"), "0.0,1.0\n1.0,2.0\n2.0,3.0\n").unwrap();
        std::fs::write(dir.path().join("a.csv"), "0.5,1.5\n1.5,2.5\n2.5,3.5\n3.5,4.5\n").unwrap();
        let set = load_demonstrations(dir.path(), DemoFormat::CsvDir).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(set.demos()[0].horizon(), 4);
        assert_eq!(set.dims(), 2);
    }

    #[test]
    fn csv_nan_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "0.0\nNaN\n2.0\n").unwrap();
        let err = load_demonstrations(dir.path(), DemoFormat::CsvDir).unwrap_err();
        assert!(err.to_string().contains("non-finite sample"), "{err}");
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"d0\",\"samples\":[[0,0],[1,1],[2,2]]}\n{\"id\":\"d1\",\"samples\":[[0,1],[1,2],[2,3]]}\n",
        )
        .unwrap();
        let set = load_demonstrations(&path, DemoFormat::Jsonl).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.labels()[1], "d1");
    }
}
