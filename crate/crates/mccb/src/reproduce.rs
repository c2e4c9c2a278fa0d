//! Blended quadratic cost assembly and the equality-constrained solve
//! that produces a reproduction.
//!
//! Vectorization is time-major: the n-vector at each time step is
//! contiguous, so the inverse conditional covariances enter as per-time
//! n x n blocks and the differential operators lift as
//! (operator x identity-on-dims).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::banded::BandedSym;
use crate::diffops::DiffOperator;
use crate::error::{Error, Result};
use crate::multicoord::{Coordinate, ConditionalProfile, MultiCoordModel};
use crate::trajectory::Trajectory;

/// Relative tolerance on the constraint residual of a finished solve.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// One linear equality constraint row over the time axis.
#[derive(Debug, Clone)]
pub enum Selector {
    /// One-hot row picking a time index (initial, target, via point).
    Index(usize),
    /// General T-dimensional row.
    Row(DVector<f64>),
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub selector: Selector,
    /// n-vector the selected combination must equal.
    pub target: DVector<f64>,
}

/// P_x X = X*: a set of linear equality constraints on the reproduction.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    horizon: usize,
    constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            constraints: Vec::new(),
        }
    }

    /// Pins the sample at time index `t` to `target`.
    pub fn with_point(mut self, t: usize, target: &[f64]) -> Self {
        self.constraints.push(Constraint {
            selector: Selector::Index(t),
            target: DVector::from_column_slice(target),
        });
        self
    }

    /// Adds a general selector row.
    pub fn with_row(mut self, row: DVector<f64>, target: &[f64]) -> Self {
        self.constraints.push(Constraint {
            selector: Selector::Row(row),
            target: DVector::from_column_slice(target),
        });
        self
    }

    /// First and last samples of a trajectory as endpoint constraints.
    pub fn endpoints(traj: &Trajectory) -> Self {
        let t = traj.horizon();
        Self::new(t)
            .with_point(0, &traj.row(0))
            .with_point(t - 1, &traj.row(t - 1))
    }

    /// Shifts every target by the same offset.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let off = DVector::from_column_slice(offset);
        Self {
            horizon: self.horizon,
            constraints: self
                .constraints
                .iter()
                .map(|c| Constraint {
                    selector: c.selector.clone(),
                    target: &c.target + &off,
                })
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    fn validate(&self, dims: usize) -> Result<()> {
        let m = self.constraints.len();
        if m == 0 {
            return Err(Error::InfeasibleConstraints("need at least one constraint".into()));
        }
        if m >= self.horizon {
            return Err(Error::InfeasibleConstraints(format!(
                "{m} constraint rows over horizon {}",
                self.horizon
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.constraints {
            if c.target.len() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "constraint target has {} dims, expected {dims}",
                    c.target.len()
                )));
            }
            if c.target.iter().any(|v| !v.is_finite()) {
                return Err(Error::InfeasibleConstraints("non-finite constraint target".into()));
            }
            match &c.selector {
                Selector::Index(t) => {
                    if *t >= self.horizon {
                        return Err(Error::InfeasibleConstraints(format!(
                            "constraint time index {t} out of horizon {}",
                            self.horizon
                        )));
                    }
                    if !seen.insert(*t) {
                        return Err(Error::InfeasibleConstraints(format!(
                            "duplicate constraint at time index {t}"
                        )));
                    }
                }
                Selector::Row(row) => {
                    if row.len() != self.horizon {
                        return Err(Error::DimensionMismatch(format!(
                            "selector row has length {}, expected {}",
                            row.len(),
                            self.horizon
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn all_one_hot(&self) -> bool {
        self.constraints
            .iter()
            .all(|c| matches!(c.selector, Selector::Index(_)))
    }

    /// Dense m x T selector matrix.
    fn dense_selector(&self) -> DMatrix<f64> {
        let m = self.constraints.len();
        let mut p = DMatrix::zeros(m, self.horizon);
        for (r, c) in self.constraints.iter().enumerate() {
            match &c.selector {
                Selector::Index(t) => p[(r, *t)] = 1.0,
                Selector::Row(row) => {
                    for (j, v) in row.iter().enumerate() {
                        p[(r, j)] = *v;
                    }
                }
            }
        }
        p
    }
}

/// Non-negative per-coordinate weights; at least one must be positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightTriple {
    pub cartesian: f64,
    pub tangent: f64,
    pub laplacian: f64,
}

impl WeightTriple {
    pub fn new(cartesian: f64, tangent: f64, laplacian: f64) -> Result<Self> {
        let w = Self {
            cartesian,
            tangent,
            laplacian,
        };
        if w.iter().any(|v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        if w.iter().all(|v| v == 0.0) {
            return Err(Error::InvalidArgument("at least one weight must be positive".into()));
        }
        Ok(w)
    }

    pub fn get(&self, coordinate: Coordinate) -> f64 {
        match coordinate {
            Coordinate::Cartesian => self.cartesian,
            Coordinate::Tangent => self.tangent,
            Coordinate::Laplacian => self.laplacian,
        }
    }

    fn iter(&self) -> impl Iterator<Item = f64> {
        [self.cartesian, self.tangent, self.laplacian].into_iter()
    }
}

/// Per-coordinate cost values evaluated at a reproduction.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CostBreakdown {
    pub cartesian: f64,
    pub tangent: f64,
    pub laplacian: f64,
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub trajectory: Trajectory,
    pub costs: CostBreakdown,
    /// Max-norm of the stationarity residual, relative to system scale.
    pub kkt_residual: f64,
    /// Max-norm of P_x X - X*.
    pub constraint_residual: f64,
}

/// Quadratic form of op X against a conditional profile:
/// (vec(op X) - vec(means))^T blockdiag(cov)^{-1} (vec(op X) - vec(means)).
pub fn coordinate_cost(x: &DMatrix<f64>, prof: &ConditionalProfile, op: &DiffOperator) -> Result<f64> {
    let y = op.apply_matrix(x)?;
    if y.nrows() != prof.means.nrows() || y.ncols() != prof.means.ncols() {
        return Err(Error::DimensionMismatch("profile and trajectory shapes differ".into()));
    }
    let mut cost = 0.0;
    for t in 0..y.nrows() {
        let r = (y.row(t) - prof.means.row(t)).transpose();
        let chol = Cholesky::new(prof.block_cov[t].clone()).ok_or(Error::SingularBlock(t))?;
        let z = chol.l().solve_lower_triangular(&r).unwrap();
        cost += z.norm_squared();
    }
    Ok(cost)
}

/// Symmetric block-banded matrix over the time axis with block
/// bandwidth 2 (the widest any lifted operator produces).
#[derive(Debug, Clone)]
struct BlockBanded {
    horizon: usize,
    dims: usize,
    diag: Vec<DMatrix<f64>>,
    sub1: Vec<DMatrix<f64>>,
    sub2: Vec<DMatrix<f64>>,
}

impl BlockBanded {
    fn zeros(horizon: usize, dims: usize) -> Self {
        let z = || DMatrix::zeros(dims, dims);
        Self {
            horizon,
            dims,
            diag: (0..horizon).map(|_| z()).collect(),
            sub1: (0..horizon.saturating_sub(1)).map(|_| z()).collect(),
            sub2: (0..horizon.saturating_sub(2)).map(|_| z()).collect(),
        }
    }

    /// Lower block (row_block >= col_block); zero outside the band.
    fn lower_block(&self, row_block: usize, col_block: usize) -> Option<&DMatrix<f64>> {
        match row_block - col_block {
            0 => Some(&self.diag[col_block]),
            1 => Some(&self.sub1[col_block]),
            2 => Some(&self.sub2[col_block]),
            _ => None,
        }
    }

    fn add_scaled(&mut self, other: &BlockBanded, w: f64) {
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += b * w;
        }
        for (a, b) in self.sub1.iter_mut().zip(&other.sub1) {
            *a += b * w;
        }
        for (a, b) in self.sub2.iter_mut().zip(&other.sub2) {
            *a += b * w;
        }
    }

    /// y = A x with x, y of length horizon * dims.
    fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dims;
        let mut y = DVector::zeros(self.horizon * n);
        let block_of = |v: &DVector<f64>, t: usize| v.rows(t * n, n).into_owned();
        for t in 0..self.horizon {
            let mut acc = &self.diag[t] * block_of(x, t);
            if t >= 1 {
                acc += &self.sub1[t - 1] * block_of(x, t - 1);
            }
            if t >= 2 {
                acc += &self.sub2[t - 2] * block_of(x, t - 2);
            }
            if t + 1 < self.horizon {
                acc += self.sub1[t].transpose() * block_of(x, t + 1);
            }
            if t + 2 < self.horizon {
                acc += self.sub2[t].transpose() * block_of(x, t + 2);
            }
            for d in 0..n {
                y[t * n + d] += acc[d];
            }
        }
        y
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dims;
        let mut m = DMatrix::zeros(self.horizon * n, self.horizon * n);
        for tb in 0..self.horizon {
            for offset in 0..=2usize {
                if tb + offset >= self.horizon {
                    continue;
                }
                let block = self.lower_block(tb + offset, tb).unwrap();
                for a in 0..n {
                    for b in 0..n {
                        m[((tb + offset) * n + a, tb * n + b)] = block[(a, b)];
                        m[(tb * n + b, (tb + offset) * n + a)] = block[(a, b)];
                    }
                }
            }
        }
        m
    }
}

/// One coordinate's contribution to the blended quadratic:
/// H_i = A_i^T W_i A_i and g_i = A_i^T W_i vec(means_i), with
/// W_i the block-diagonal inverse conditional covariance.
#[derive(Debug, Clone)]
struct QuadPart {
    h: BlockBanded,
    g: DVector<f64>,
}

fn assemble_part(prof: &ConditionalProfile, op: &DiffOperator) -> Result<QuadPart> {
    let horizon = prof.means.nrows();
    let n = prof.means.ncols();
    let mut h = BlockBanded::zeros(horizon, n);
    let mut g = DVector::zeros(horizon * n);
    let eye = DMatrix::identity(n, n);
    for t in 0..horizon {
        // inverse covariance block via Cholesky solve
        let chol = Cholesky::new(prof.block_cov[t].clone()).ok_or(Error::SingularBlock(t))?;
        let w = chol.solve(&eye);
        let wm = &w * prof.means.row(t).transpose();
        let entries = op.row_entries(t);
        for &(c1, a1) in &entries {
            for d in 0..n {
                g[c1 * n + d] += a1 * wm[d];
            }
            for &(c2, a2) in &entries {
                if c1 < c2 {
                    continue;
                }
                let scaled = &w * (a1 * a2);
                match c1 - c2 {
                    0 => h.diag[c2] += &scaled,
                    1 => h.sub1[c2] += &scaled,
                    2 => h.sub2[c2] += &scaled,
                    _ => unreachable!("operator bandwidth exceeds 2"),
                }
            }
        }
    }
    Ok(QuadPart { h, g })
}

/// Precomputed per-coordinate quadratic parts for one trained model;
/// solves many weight/constraint instances without re-assembly.
#[derive(Debug, Clone)]
pub struct Reproducer {
    horizon: usize,
    dims: usize,
    parts: Vec<QuadPart>,
    profiles: Vec<ConditionalProfile>,
    operators: Vec<DiffOperator>,
}

impl Reproducer {
    pub fn new(model: &MultiCoordModel) -> Result<Self> {
        let profiles: Vec<ConditionalProfile> = Coordinate::ALL
            .iter()
            .map(|&c| model.profile(c))
            .collect::<Result<_>>()?;
        Self::from_profiles(profiles)
    }

    /// Builds a solver from explicit per-coordinate profiles, in the
    /// order (cartesian, tangent, laplacian).
    pub fn from_profiles(profiles: Vec<ConditionalProfile>) -> Result<Self> {
        if profiles.len() != 3 {
            return Err(Error::InvalidArgument("expected three coordinate profiles".into()));
        }
        let horizon = profiles[0].means.nrows();
        let dims = profiles[0].means.ncols();
        for p in &profiles {
            if p.means.nrows() != horizon || p.means.ncols() != dims || p.block_cov.len() != horizon {
                return Err(Error::DimensionMismatch("profile shapes disagree".into()));
            }
        }
        let operators: Vec<DiffOperator> = profiles
            .iter()
            .map(|p| DiffOperator::build(p.coordinate.operator_kind(), horizon))
            .collect::<Result<_>>()?;
        let parts: Vec<QuadPart> = profiles
            .iter()
            .zip(&operators)
            .map(|(p, op)| assemble_part(p, op))
            .collect::<Result<_>>()?;
        Ok(Self {
            horizon,
            dims,
            parts,
            profiles,
            operators,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn profile(&self, coordinate: Coordinate) -> &ConditionalProfile {
        &self.profiles[coord_index(coordinate)]
    }

    fn blended(&self, weights: &WeightTriple) -> (BlockBanded, DVector<f64>) {
        let mut h = BlockBanded::zeros(self.horizon, self.dims);
        let mut g = DVector::zeros(self.horizon * self.dims);
        for (i, coord) in Coordinate::ALL.iter().enumerate() {
            let w = weights.get(*coord);
            if w != 0.0 {
                h.add_scaled(&self.parts[i].h, w);
                g += &self.parts[i].g * w;
            }
        }
        (h, g)
    }

    /// Minimizes the blended quadratic subject to the equality
    /// constraints. One-hot constraint sets go through a banded
    /// reduced solve; general selector rows fall back to a dense KKT
    /// factorization.
    pub fn solve(&self, weights: &WeightTriple, constraints: &ConstraintSet) -> Result<Reproduction> {
        if constraints.horizon() != self.horizon {
            return Err(Error::DimensionMismatch(format!(
                "constraint horizon {} vs model horizon {}",
                constraints.horizon(),
                self.horizon
            )));
        }
        constraints.validate(self.dims)?;
        let (h, g) = self.blended(weights);
        let x = if constraints.all_one_hot() {
            self.solve_reduced_banded(&h, &g, constraints)?
        } else {
            self.solve_dense_kkt(&h, &g, constraints)?
        };
        self.package(&h, &g, x, constraints)
    }

    /// Dense KKT route regardless of constraint structure; retained for
    /// cross-checks against the banded path.
    pub fn solve_dense(&self, weights: &WeightTriple, constraints: &ConstraintSet) -> Result<Reproduction> {
        if constraints.horizon() != self.horizon {
            return Err(Error::DimensionMismatch("constraint horizon mismatch".into()));
        }
        constraints.validate(self.dims)?;
        let (h, g) = self.blended(weights);
        let x = self.solve_dense_kkt(&h, &g, constraints)?;
        self.package(&h, &g, x, constraints)
    }

    fn solve_reduced_banded(
        &self,
        h: &BlockBanded,
        g: &DVector<f64>,
        constraints: &ConstraintSet,
    ) -> Result<DVector<f64>> {
        let n = self.dims;
        let horizon = self.horizon;
        let mut fixed: Vec<Option<DVector<f64>>> = vec![None; horizon];
        for c in constraints.constraints() {
            if let Selector::Index(t) = c.selector {
                fixed[t] = Some(c.target.clone());
            }
        }
        let free: Vec<usize> = (0..horizon).filter(|t| fixed[*t].is_none()).collect();
        let nf = free.len();
        let pos_of: std::collections::HashMap<usize, usize> =
            free.iter().enumerate().map(|(p, &t)| (t, p)).collect();

        let bw = (3 * n).saturating_sub(1);
        let mut reduced = BandedSym::zeros(nf * n, bw);
        let mut rhs: Vec<f64> = free
            .iter()
            .flat_map(|&t| (0..n).map(move |d| g[t * n + d]))
            .collect();

        for (p, &t) in free.iter().enumerate() {
            // neighbors within block bandwidth 2
            for dt in 0..=2usize {
                let s = match t.checked_sub(dt) {
                    Some(s) => s,
                    None => continue,
                };
                let block = h.lower_block(t, s).unwrap();
                match (&fixed[s], pos_of.get(&s)) {
                    (Some(xs), _) => {
                        let contrib = block * xs;
                        for d in 0..n {
                            rhs[p * n + d] -= contrib[d];
                        }
                    }
                    (None, Some(&q)) => {
                        // q <= p since s <= t
                        for a in 0..n {
                            for b in 0..n {
                                let (i, j) = (p * n + a, q * n + b);
                                if i >= j {
                                    reduced.add(i, j, block[(a, b)]);
                                }
                            }
                        }
                    }
                    _ => unreachable!(),
                }
            }
            // upper neighbors only matter for fixed columns and for the
            // strictly-upper scalar entries of the diagonal block row,
            // both handled here
            for dt in 1..=2usize {
                let s = t + dt;
                if s >= horizon {
                    continue;
                }
                if let Some(xs) = &fixed[s] {
                    let block = h.lower_block(s, t).unwrap(); // H[t][s] = block^T
                    let contrib = block.transpose() * xs;
                    for d in 0..n {
                        rhs[p * n + d] -= contrib[d];
                    }
                }
            }
        }

        let chol = reduced.cholesky().ok_or(Error::UnderdeterminedReproduction)?;
        let sol = chol.solve(&rhs);

        let mut x = DVector::zeros(horizon * n);
        for (p, &t) in free.iter().enumerate() {
            for d in 0..n {
                x[t * n + d] = sol[p * n + d];
            }
        }
        for (t, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                for d in 0..n {
                    x[t * n + d] = v[d];
                }
            }
        }
        Ok(x)
    }

    fn solve_dense_kkt(
        &self,
        h: &BlockBanded,
        g: &DVector<f64>,
        constraints: &ConstraintSet,
    ) -> Result<DVector<f64>> {
        let n = self.dims;
        let nt = self.horizon * n;
        let p = constraints.dense_selector();
        let m = p.nrows();
        // selector rows must be linearly independent
        let rank = p.clone().svd(false, false).rank(1e-10 * p.amax().max(1.0));
        if rank < m {
            return Err(Error::InfeasibleConstraints(
                "constraint selector rows are linearly dependent".into(),
            ));
        }
        let mn = m * n;
        let dim = nt + mn;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (nt, nt)).copy_from(&h.to_dense());
        // P lifted per dimension: row (r, d) touches x[t*n + d]
        for r in 0..m {
            for t in 0..self.horizon {
                let v = p[(r, t)];
                if v != 0.0 {
                    for d in 0..n {
                        kkt[(nt + r * n + d, t * n + d)] = v;
                        kkt[(t * n + d, nt + r * n + d)] = v;
                    }
                }
            }
        }
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, nt).copy_from(g);
        for (r, c) in constraints.constraints().iter().enumerate() {
            for d in 0..n {
                rhs[nt + r * n + d] = c.target[d];
            }
        }
        let lu = kkt.full_piv_lu();
        // full-pivot LU solves numerically singular systems without
        // complaint; a vanishing trailing pivot means the saddle-point
        // system is rank deficient and the minimizer is not unique
        let pivots = lu.u().diagonal();
        let max_pivot = pivots.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min_pivot = pivots.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if !(min_pivot > 1e-12 * max_pivot.max(1.0)) {
            return Err(Error::UnderdeterminedReproduction);
        }
        let sol = lu.solve(&rhs).ok_or(Error::UnderdeterminedReproduction)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::UnderdeterminedReproduction);
        }
        Ok(sol.rows(0, nt).into_owned())
    }

    fn package(
        &self,
        h: &BlockBanded,
        g: &DVector<f64>,
        x: DVector<f64>,
        constraints: &ConstraintSet,
    ) -> Result<Reproduction> {
        let n = self.dims;
        let horizon = self.horizon;
        let samples = DMatrix::from_fn(horizon, n, |t, d| x[t * n + d]);

        // constraint residual
        let mut constraint_residual = 0.0f64;
        let mut target_scale = 1.0f64;
        for c in constraints.constraints() {
            let achieved: DVector<f64> = match &c.selector {
                Selector::Index(t) => samples.row(*t).transpose(),
                Selector::Row(row) => {
                    let mut acc = DVector::zeros(n);
                    for (t, v) in row.iter().enumerate() {
                        if *v != 0.0 {
                            acc += samples.row(t).transpose() * *v;
                        }
                    }
                    acc
                }
            };
            constraint_residual = constraint_residual.max((achieved - &c.target).amax());
            target_scale = target_scale.max(c.target.amax());
        }
        if constraint_residual > CONSTRAINT_TOL * target_scale {
            return Err(Error::InfeasibleConstraints(format!(
                "constraint residual {constraint_residual:.3e} exceeds tolerance"
            )));
        }

        // stationarity residual on unconstrained coordinates
        let grad = h.matvec(&x) - g;
        let mut pinned = vec![false; horizon];
        let one_hot = constraints.all_one_hot();
        for c in constraints.constraints() {
            if let Selector::Index(t) = c.selector {
                pinned[t] = true;
            }
        }
        let scale = g.amax().max(1.0);
        let kkt_residual = if one_hot {
            let mut r = 0.0f64;
            for t in 0..horizon {
                if !pinned[t] {
                    for d in 0..n {
                        r = r.max(grad[t * n + d].abs());
                    }
                }
            }
            r / scale
        } else {
            // project the gradient onto the null space of the lifted
            // selector and measure what remains
            let p = constraints.dense_selector();
            let m = p.nrows();
            let mut pf = DMatrix::zeros(m * n, horizon * n);
            for r in 0..m {
                for t in 0..horizon {
                    if p[(r, t)] != 0.0 {
                        for d in 0..n {
                            pf[(r * n + d, t * n + d)] = p[(r, t)];
                        }
                    }
                }
            }
            let pt = pf.transpose();
            let gram = &pf * &pt;
            let lam = gram
                .clone()
                .cholesky()
                .map(|c| c.solve(&(&pf * &grad)))
                .unwrap_or_else(|| DVector::zeros(m * n));
            (grad - pt * lam).amax() / scale
        };

        let costs = CostBreakdown {
            cartesian: coordinate_cost(&samples, &self.profiles[0], &self.operators[0])?,
            tangent: coordinate_cost(&samples, &self.profiles[1], &self.operators[1])?,
            laplacian: coordinate_cost(&samples, &self.profiles[2], &self.operators[2])?,
        };
        Ok(Reproduction {
            trajectory: Trajectory::new(samples, 1.0)?,
            costs,
            kkt_residual,
            constraint_residual,
        })
    }
}

fn coord_index(c: Coordinate) -> usize {
    match c {
        Coordinate::Cartesian => 0,
        Coordinate::Tangent => 1,
        Coordinate::Laplacian => 2,
    }
}

/// One-shot convenience over [`Reproducer`].
pub fn solve_reproduction(
    model: &MultiCoordModel,
    weights: &WeightTriple,
    constraints: &ConstraintSet,
) -> Result<Reproduction> {
    Reproducer::new(model)?.solve(weights, constraints)
}
