//! Candidate extremals over a user-supplied basis.
//!
//! Stage 1 enforces the initial conditions exactly and the Euler–Lagrange
//! residual at collocation points in least squares. Stage 2 pins whatever
//! freedom remains by driving weighted transversality values to zero.
//!
//! All linear algebra runs on normalized basis functions `φ_j/‖φ_j‖`, where the
//! norm is taken over the collocation points, so results do not depend on how
//! the basis is scaled.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{component_at, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::exprlang::parse_time_only;
use crate::variational::{
    admissibility_check, el_residual_with_mag, lagrangian_at, transversality_index, transversality_scans_on,
    Problem, TruncationScan,
};

/// Relative singular-value cut for null spaces.
pub const NULL_RTOL: f64 = 1e-10;
/// Looser cut for Jacobians obtained by finite differences.
const FD_NULL_RTOL: f64 = 1e-7;
const AFFINE_RTOL: f64 = 1e-10;
const AFFINE_PROBES: usize = 3;
const FEASIBLE_TOL: f64 = 1e-9;
const MIN_COLLOCATION: usize = 20;

/// `Σ c_j φ_j`.
#[derive(Clone, Debug)]
pub struct BasisAnsatz {
    basis: Vec<Trajectory>,
    coefficients: Vec<f64>,
}

impl BasisAnsatz {
    pub fn new(basis: Vec<Trajectory>, coefficients: Vec<f64>) -> Result<Self> {
        if basis.len() != coefficients.len() {
            return Err(Error::Argument(format!(
                "{} basis functions but {} coefficients",
                basis.len(),
                coefficients.len()
            )));
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &[Trajectory] {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::linear_combination(&self.basis, &self.coefficients)
            .expect("lengths checked at construction")
    }
}

/// Parses basis functions written in `t`.
pub fn parse_basis<S: AsRef<str>>(sources: &[S]) -> Result<Vec<Trajectory>> {
    sources
        .iter()
        .map(|s| Trajectory::from_expr(parse_time_only(s.as_ref())?))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Defaults to `max(3·basis size, 20)`.
    pub collocation_points: Option<usize>,
    /// Truncation points for pinning and for the reported scans; defaults to
    /// the problem horizon grid.
    pub t_grid: Option<Vec<f64>>,
    pub seed: u64,
    pub max_iter: usize,
    /// Random restarts of the pinning stage besides the zero start.
    pub restarts: usize,
    pub exec: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            collocation_points: None,
            t_grid: None,
            seed: 0,
            max_iter: 200,
            restarts: 4,
            exec: Execution::default(),
        }
    }
}

/// Solution set of the stage-1 system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyAnalysis {
    pub family_dim: usize,
    /// Orthonormal coefficient directions that leave the stage-1 residual unchanged.
    pub null_basis: Vec<Vec<f64>>,
    /// Minimal-norm stage-1 solution in normalized coordinates, mapped back.
    pub particular: Vec<f64>,
    pub linear: bool,
    pub gram_condition: f64,
    pub collocation_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub basis: Vec<String>,
    pub coefficients: Vec<f64>,
    pub family_dim: usize,
    pub linear: bool,
    pub collocation_points: usize,
    /// Largest `|E-L residual|` over the collocation points.
    pub el_residual_norm: f64,
    /// Largest `|L⟨x⟩|` over the same points.
    pub lagrangian_scale: f64,
    pub admissibility: Vec<f64>,
    pub gram_condition: f64,
    pub pinning_objective: f64,
    pub pinning_iterations: usize,
    pub transversality: Vec<TruncationScan>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub ansatz: BasisAnsatz,
    pub report: SolveReport,
}

/// Stage-1 data in normalized coordinates `c'_j = c_j·‖φ_j‖`.
struct Stage1<'a> {
    p: &'a Problem,
    normalized: Vec<Trajectory>,
    norms: Vec<f64>,
    colloc: Vec<usize>,
    exec: Execution,
    gram_condition: f64,
    linear: bool,
    /// Stage-1 solution (normalized coordinates).
    point: DVector<f64>,
    /// Orthonormal null directions (normalized coordinates), one per column.
    null: DMatrix<f64>,
    /// Initial-condition parametrization `c' = ic_point + ic_null·z`.
    ic_point: DVector<f64>,
    ic_null: DMatrix<f64>,
    /// Row scales for the E-L equations.
    row_scale: Vec<f64>,
}

struct Svd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v_t: DMatrix<f64>,
}

fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v_t: DMatrix::zeros(0, cols),
        };
    }
    let d = m.clone().svd(true, true);
    Svd {
        u: d.u.expect("requested"),
        s: d.singular_values.iter().copied().collect(),
        v_t: d.v_t.expect("requested"),
    }
}

impl Svd {
    fn cut(&self, rtol: f64, floor: f64) -> f64 {
        let smax = self.s.iter().copied().fold(0.0, f64::max);
        rtol * smax.max(floor)
    }

    fn rank(&self, tol: f64) -> usize {
        self.s.iter().filter(|s| **s > tol).count()
    }

    /// Minimal-norm least-squares solution of `m·x = b`.
    fn solve(&self, b: &DVector<f64>, tol: f64) -> DVector<f64> {
        let cols = self.v_t.ncols();
        let mut x = DVector::zeros(cols);
        for (k, s) in self.s.iter().enumerate() {
            if *s > tol {
                let coef = self.u.column(k).dot(b) / s;
                x += self.v_t.row(k).transpose() * coef;
            }
        }
        x
    }

    /// Orthonormal basis of the null space, as columns.
    fn null_space(&self, tol: f64) -> DMatrix<f64> {
        let cols = self.v_t.ncols();
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for k in 0..self.v_t.nrows() {
            if self.s[k] <= tol {
                kept.push(self.v_t.row(k).transpose());
            }
        }
        // thin SVD omits directions beyond the row count
        if self.v_t.nrows() < cols {
            let full = complete_basis(&self.v_t, cols);
            kept.extend(full);
        }
        if kept.is_empty() {
            return DMatrix::zeros(cols, 0);
        }
        DMatrix::from_columns(&kept)
    }
}

/// Orthonormal vectors completing the row space of `v_t` to `R^n`.
fn complete_basis(v_t: &DMatrix<f64>, n: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = (0..v_t.nrows()).map(|k| v_t.row(k).transpose()).collect();
    let start = basis.len();
    for e in 0..n {
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        if basis.len() == n {
            break;
        }
    }
    basis.split_off(start)
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

impl<'a> Stage1<'a> {
    fn build(p: &'a Problem, basis: &[Trajectory], opts: &SolveOptions) -> Result<Self> {
        let n = basis.len();
        let r = p.order();
        if n < r {
            return Err(Error::Basis(format!(
                "order {r} needs at least {r} basis functions, got {n}"
            )));
        }
        let m = opts.collocation_points.unwrap_or((3 * n).max(MIN_COLLOCATION));
        if m == 0 {
            return Err(Error::Argument("need at least one collocation point".into()));
        }
        let colloc: Vec<usize> = (0..m).collect();
        let scale = p.scale();
        let times: Vec<f64> = colloc.iter().map(|&k| scale.point(k)).collect::<Result<_>>()?;

        let mut values = DMatrix::zeros(m, n);
        for (j, phi) in basis.iter().enumerate() {
            for (i, t) in times.iter().enumerate() {
                values[(i, j)] = phi.eval(*t)?;
            }
        }
        let norms: Vec<f64> = (0..n).map(|j| values.column(j).norm()).collect();
        if let Some(j) = norms.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Basis(format!(
                "basis function {} vanishes on the collocation points",
                basis[j].label()
            )));
        }
        for (j, d) in norms.iter().enumerate() {
            values.column_mut(j).scale_mut(1.0 / d);
        }
        let gram = svd(&values);
        let smax = gram.s.iter().copied().fold(0.0, f64::max);
        let smin = gram.s.iter().copied().fold(f64::INFINITY, f64::min);
        let rank = gram.rank(gram.cut(NULL_RTOL, 0.0));
        let gram_condition = if gram.s.len() < n || smin == 0.0 {
            f64::INFINITY
        } else {
            (smax / smin).powi(2)
        };
        if rank < n {
            return Err(Error::Basis(format!(
                "basis functions are linearly dependent on the collocation grid (rank {rank} of {n})"
            )));
        }
        let normalized: Vec<Trajectory> = basis
            .iter()
            .zip(&norms)
            .map(|(b, d)| b.scaled(1.0 / d).with_label(b.label().to_string()))
            .collect();

        // Initial conditions, rows normalized.
        let mut c = DMatrix::zeros(r, n);
        let mut alpha = DVector::zeros(r);
        for i in 0..r {
            for j in 0..n {
                c[(i, j)] = component_at(scale, &normalized[j], 0, 0, i)?;
            }
            let norm = c.row(i).norm();
            let a = p.initial_conditions()[i];
            if norm > 0.0 {
                c.row_mut(i).scale_mut(1.0 / norm);
                alpha[i] = a / norm;
            } else {
                alpha[i] = a;
            }
        }
        let ic = svd(&c);
        let ic_tol = ic.cut(NULL_RTOL, 0.0);
        let ic_point = ic.solve(&alpha, ic_tol);
        let ic_null = ic.null_space(ic_tol);
        let mut stage = Self {
            p,
            normalized,
            norms,
            colloc,
            exec: opts.exec,
            gram_condition,
            linear: true,
            point: ic_point.clone(),
            null: DMatrix::zeros(n, 0),
            ic_point,
            ic_null,
            row_scale: vec![1.0; m],
        };
        stage.check_feasible(&stage.ic_point.clone())?;
        stage.linear = stage.probe_affine(opts.seed)?;
        if stage.linear {
            stage.solve_linear()?;
        } else {
            stage.solve_nonlinear(opts.max_iter)?;
        }
        Ok(stage)
    }

    fn n(&self) -> usize {
        self.normalized.len()
    }

    fn trajectory(&self, c: &[f64]) -> Result<Trajectory> {
        Trajectory::linear_combination(&self.normalized, c)
    }

    fn check_feasible(&self, c: &DVector<f64>) -> Result<()> {
        let x = self.trajectory(c.as_slice())?;
        let res = admissibility_check(self.p, &x);
        let alpha_scale = self
            .p
            .initial_conditions()
            .iter()
            .fold(0.0f64, |m, a| m.max(a.abs()));
        let worst = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst.is_nan() || worst > FEASIBLE_TOL * (1.0 + alpha_scale) {
            return Err(Error::Infeasible(format!(
                "the basis cannot meet the initial conditions (residuals {res:?})"
            )));
        }
        Ok(())
    }

    /// E-L residuals and rounding magnitudes at the collocation points.
    fn el_rows(&self, c: &[f64]) -> Result<Vec<(f64, f64)>> {
        let x = self.trajectory(c)?;
        self.exec
            .map(&self.colloc, |&k| el_residual_with_mag(self.p, &x, k))
            .into_iter()
            .collect()
    }

    fn probe_affine(&self, seed: u64) -> Result<bool> {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..AFFINE_PROBES {
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let plus: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + b).collect();
            let minus: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a - b).collect();
            let (rp, r0, rm) = (self.el_rows(&plus)?, self.el_rows(&c)?, self.el_rows(&minus)?);
            for ((p, z), m) in rp.iter().zip(&r0).zip(&rm) {
                let second = p.0 - 2.0 * z.0 + m.0;
                let mag = p.1.max(z.1).max(m.1);
                if second.abs() > AFFINE_RTOL * mag {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn solve_linear(&mut self) -> Result<()> {
        let n = self.n();
        let m = self.colloc.len();
        let base = self.el_rows(&vec![0.0; n])?;
        let cols: Vec<Vec<(f64, f64)>> = self
            .exec
            .map_range(0..n, |j| self.el_rows(&unit(n, j)))
            .into_iter()
            .collect::<Result<_>>()?;
        let mut scale = vec![0.0f64; m];
        for i in 0..m {
            scale[i] = cols.iter().fold(base[i].1, |s, col| s.max(col[i].1));
            if scale[i].is_nan() || scale[i] <= 0.0 {
                scale[i] = 1.0;
            }
        }
        let a = DMatrix::from_fn(m, n, |i, j| (cols[j][i].0 - base[i].0) / scale[i]);
        let b = DVector::from_fn(m, |i, _| base[i].0 / scale[i]);
        let reduced = &a * &self.ic_null;
        let rhs = -(b + &a * &self.ic_point);
        let d = svd(&reduced);
        let tol = d.cut(NULL_RTOL, 1.0);
        let z = d.solve(&rhs, tol);
        let inner_null = d.null_space(tol);
        self.point = &self.ic_point + &self.ic_null * z;
        self.null = &self.ic_null * inner_null;
        self.row_scale = scale;
        Ok(())
    }

    fn scaled_el(&self, c: &DVector<f64>) -> Result<Vec<f64>> {
        Ok(self
            .el_rows(c.as_slice())?
            .iter()
            .zip(&self.row_scale)
            .map(|(r, s)| r.0 / s)
            .collect())
    }

    fn solve_nonlinear(&mut self, max_iter: usize) -> Result<()> {
        let rows = self.el_rows(self.ic_point.as_slice())?;
        self.row_scale = rows.iter().map(|r| if r.1 > 0.0 { r.1 } else { 1.0 }).collect();
        let dim = self.ic_null.ncols();
        let from_z =
            |z: &[f64]| -> DVector<f64> { &self.ic_point + &self.ic_null * DVector::from_column_slice(z) };
        let g = |z: &[f64]| self.scaled_el(&from_z(z));
        let out = levenberg_marquardt(&g, &vec![0.0; dim], max_iter, self.exec)?;
        if !out.converged {
            return Err(self.convergence_error(&out, &from_z(&out.z)));
        }
        let jac = jacobian(&g, &out.z, self.exec)?;
        let d = svd(&jac);
        let tangent = d.null_space(d.cut(FD_NULL_RTOL, 1.0));
        self.point = from_z(&out.z);
        self.null = &self.ic_null * tangent;
        Ok(())
    }

    fn convergence_error(&self, out: &LmOutcome, c_normalized: &DVector<f64>) -> Error {
        Error::Convergence {
            iterations: out.iterations,
            objective: out.objective,
            best: self.denormalize(c_normalized),
        }
    }

    fn denormalize(&self, c: &DVector<f64>) -> Vec<f64> {
        c.iter().zip(&self.norms).map(|(v, d)| v / d).collect()
    }

    /// Re-solve the E-L equations near `c`, keeping the initial conditions.
    fn reproject(&self, c: &DVector<f64>, max_iter: usize) -> Result<DVector<f64>> {
        let z0 = self.ic_null.transpose() * (c - &self.ic_point);
        let from_z =
            |z: &[f64]| -> DVector<f64> { &self.ic_point + &self.ic_null * DVector::from_column_slice(z) };
        let g = |z: &[f64]| self.scaled_el(&from_z(z));
        let out = levenberg_marquardt(&g, z0.as_slice(), max_iter, self.exec)?;
        if !out.converged {
            return Err(self.convergence_error(&out, &from_z(&out.z)));
        }
        Ok(from_z(&out.z))
    }

    fn analysis(&self) -> FamilyAnalysis {
        let null_c = DMatrix::from_fn(self.n(), self.null.ncols(), |i, k| {
            self.null[(i, k)] / self.norms[i]
        });
        let null_basis = if null_c.ncols() == 0 {
            Vec::new()
        } else {
            let q = null_c.qr().q();
            (0..q.ncols())
                .map(|k| q.column(k).iter().copied().collect())
                .collect()
        };
        FamilyAnalysis {
            family_dim: self.null.ncols(),
            null_basis,
            particular: self.denormalize(&self.point),
            linear: self.linear,
            gram_condition: self.gram_condition,
            collocation_points: self.colloc.len(),
        }
    }

    /// Weighted transversality values `√w(T′)·v_k(T′)` for all `k` and pin points.
    fn pin_residuals(&self, c: &DVector<f64>, pins: &[(usize, f64)]) -> Result<Vec<f64>> {
        let x = self.trajectory(c.as_slice())?;
        let r = self.p.order();
        let jobs: Vec<(usize, usize, f64)> = (1..=r)
            .flat_map(|k| pins.iter().map(move |&(n, t)| (k, n, t)))
            .collect();
        self.exec
            .map(&jobs, |&(k, n, t)| -> Result<f64> {
                let w = 1.0 / (1.0 + t.abs().powi(2 * r as i32));
                Ok(w.sqrt() * transversality_index(self.p, &x, k, n)?)
            })
            .into_iter()
            .collect()
    }

    fn pin(&self, pins: &[(usize, f64)], y0: &[f64], max_iter: usize) -> Result<(DVector<f64>, LmOutcome)> {
        let from_y = |y: &[f64]| -> DVector<f64> { &self.point + &self.null * DVector::from_column_slice(y) };
        let f = |y: &[f64]| self.pin_residuals(&from_y(y), pins);
        let out = levenberg_marquardt(&f, y0, max_iter, self.exec)?;
        let mut c = from_y(&out.z);
        if !out.converged {
            return Err(self.convergence_error(&out, &c));
        }
        if !self.linear {
            c = self.reproject(&c, max_iter)?;
        }
        Ok((c, out))
    }
}

/// The truncation grid plus every scale index below its first point.
/// Including the indices next to the anchor keeps the pinning objective free
/// of spurious minima where a factor happens to vanish at one coarse grid point.
fn pin_points(p: &Problem, t_grid: &[f64]) -> Result<Vec<(usize, f64)>> {
    let mut indices = t_grid
        .iter()
        .map(|t| p.scale().index_of(*t))
        .collect::<Result<Vec<usize>>>()?;
    let first = *indices
        .iter()
        .min()
        .ok_or_else(|| Error::Argument("truncation grid is empty".into()))?;
    indices.extend(0..first);
    indices.sort_unstable();
    indices.dedup();
    indices
        .into_iter()
        .map(|n| Ok((n, p.scale().point(n)?)))
        .collect()
}

fn grid_for(p: &Problem, opts: &SolveOptions) -> Result<Vec<f64>> {
    match &opts.t_grid {
        Some(g) => Ok(g.clone()),
        None => p.t_grid(),
    }
}

/// Dimension and directions of the stage-1 solution set.
pub fn family_analysis(p: &Problem, basis: &[Trajectory], opts: &SolveOptions) -> Result<FamilyAnalysis> {
    Ok(Stage1::build(p, basis, opts)?.analysis())
}

/// Stage 2 from a single starting point, given as coordinates along
/// `FamilyAnalysis::null_basis` (same order, length `family_dim`).
/// Returns basis coefficients.
pub fn pin_family(p: &Problem, basis: &[Trajectory], start: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    let stage = Stage1::build(p, basis, opts)?;
    let family = stage.analysis();
    if start.len() != family.family_dim {
        return Err(Error::Argument(format!(
            "start has {} coordinates but the family has dimension {}",
            start.len(),
            family.family_dim
        )));
    }
    if family.family_dim == 0 {
        return Ok(family.particular);
    }
    // Translate coordinates along the reported (coefficient-space) directions
    // into the internal normalized parametrization.
    let mut shift = DVector::zeros(stage.n());
    for (k, s) in start.iter().enumerate() {
        for i in 0..stage.n() {
            shift[i] += s * family.null_basis[k][i] * stage.norms[i];
        }
    }
    let y0 = stage.null.transpose() * shift;
    let pins = pin_points(p, &grid_for(p, opts)?)?;
    let (c, _) = stage.pin(&pins, y0.as_slice(), opts.max_iter)?;
    Ok(stage.denormalize(&c))
}

/// Full two-stage solve.
pub fn solve_candidate(p: &Problem, basis: &[Trajectory], opts: &SolveOptions) -> Result<Solution> {
    let stage = Stage1::build(p, basis, opts)?;
    let grid = grid_for(p, opts)?;
    let n = stage.n();
    let dim = stage.null.ncols();

    let (c, objective, iterations) = if dim == 0 {
        (stage.point.clone(), 0.0, 0)
    } else {
        let pins = pin_points(p, &grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
        let spread = 1.0 + stage.point.amax();
        let mut starts = vec![vec![0.0; dim]];
        for _ in 0..opts.restarts {
            starts.push((0..dim).map(|_| spread * rng.gen_range(-1.0..1.0)).collect());
        }
        let mut best: Option<(DVector<f64>, LmOutcome)> = None;
        let mut last_err = None;
        for y0 in &starts {
            match stage.pin(&pins, y0, opts.max_iter) {
                Ok((c, out)) => {
                    if best.as_ref().is_none_or(|b| out.objective < b.1.objective) {
                        best = Some((c, out));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        match best {
            Some((c, out)) => (c, out.objective, out.iterations),
            None => return Err(last_err.expect("at least one start")),
        }
    };

    let coefficients = stage.denormalize(&c);
    let ansatz = BasisAnsatz::new(basis.to_vec(), coefficients.clone())?;
    let x = ansatz.trajectory();
    let rows: Vec<(f64, f64)> = stage
        .exec
        .map(&stage.colloc, |&k| el_residual_with_mag(p, &x, k))
        .into_iter()
        .collect::<Result<_>>()?;
    let el_residual_norm = rows.iter().fold(0.0f64, |m, r| m.max(r.0.abs()));
    let lagrangian_scale = stage
        .colloc
        .iter()
        .map(|&k| lagrangian_at(p, &x, k).map(f64::abs))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let transversality = transversality_scans_on(p, &x, &grid, opts.exec)?;
    debug_assert_eq!(coefficients.len(), n);
    let report = SolveReport {
        basis: basis.iter().map(|b| b.label().to_string()).collect(),
        coefficients,
        family_dim: dim,
        linear: stage.linear,
        collocation_points: stage.colloc.len(),
        el_residual_norm,
        lagrangian_scale,
        admissibility: admissibility_check(p, &x),
        gram_condition: stage.gram_condition,
        pinning_objective: objective,
        pinning_iterations: iterations,
        transversality,
        seed: opts.seed,
    };
    Ok(Solution { ansatz, report })
}

struct LmOutcome {
    z: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn half_norm2(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|x| x * x).sum::<f64>()
}

/// Central-difference Jacobian, columns evaluated independently.
fn jacobian<F>(f: &F, z: &[f64], exec: Execution) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let cols: Vec<Vec<f64>> = exec
        .map_range(0..z.len(), |j| -> Result<Vec<f64>> {
            let h = 1e-6 * (1.0 + z[j].abs());
            let mut w = z.to_vec();
            w[j] = z[j] + h;
            let up = f(&w)?;
            w[j] = z[j] - h;
            let down = f(&w)?;
            Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let rows = cols.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows, z.len(), |i, j| cols[j][i]))
}

/// Levenberg–Marquardt on `½‖f(z)‖²` with Marquardt column scaling.
/// A stalled damping loop counts as convergence to a local minimum.
fn levenberg_marquardt<F>(f: &F, z0: &[f64], max_iter: usize, exec: Execution) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let mut z = z0.to_vec();
    let mut r = f(&z)?;
    let mut obj = half_norm2(&r);
    let mut lambda: f64 = 1e-3;
    let d = z.len();
    if d == 0 {
        return Ok(LmOutcome {
            z,
            objective: obj,
            iterations: 0,
            converged: true,
        });
    }
    for it in 0..max_iter {
        if obj == 0.0 {
            return Ok(LmOutcome {
                z,
                objective: obj,
                iterations: it,
                converged: true,
            });
        }
        let j = jacobian(f, &z, exec)?;
        let m = j.nrows();
        let col_norms: Vec<f64> = (0..d).map(|k| j.column(k).norm()).collect();
        let max_norm = col_norms.iter().copied().fold(0.0, f64::max);
        if max_norm == 0.0 {
            return Ok(LmOutcome {
                z,
                objective: obj,
                iterations: it,
                converged: true,
            });
        }
        let rv = DVector::from_column_slice(&r);
        let mut accepted = false;
        while lambda <= 1e16 {
            let mut aug = DMatrix::zeros(m + d, d);
            aug.view_mut((0, 0), (m, d)).copy_from(&j);
            for k in 0..d {
                aug[(m + k, k)] = lambda.sqrt() * col_norms[k].max(1e-12 * max_norm);
            }
            let mut rhs = DVector::zeros(m + d);
            rhs.rows_mut(0, m).copy_from(&(-&rv));
            let sv = svd(&aug);
            let step = sv.solve(&rhs, sv.cut(1e-15, 0.0));
            let candidate: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial = f(&candidate).ok().map(|rn| {
                let o = half_norm2(&rn);
                (rn, o)
            });
            match trial {
                Some((rn, o)) if o < obj => {
                    let step_norm = step.norm();
                    let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let small_step = step_norm <= 1e-13 * (1.0 + z_norm);
                    let flat = obj - o <= 1e-15 * obj;
                    z = candidate;
                    r = rn;
                    obj = o;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if small_step || flat {
                        return Ok(LmOutcome {
                            z,
                            objective: obj,
                            iterations: it + 1,
                            converged: true,
                        });
                    }
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        if !accepted {
            return Ok(LmOutcome {
                z,
                objective: obj,
                iterations: it + 1,
                converged: true,
            });
        }
    }
    Ok(LmOutcome {
        z,
        objective: obj,
        iterations: max_iter,
        converged: false,
    })
}
