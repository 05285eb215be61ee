//! Necessary conditions for higher-order infinite-horizon problems.
//!
//! Slot `u_i` of a Lagrangian receives `x^{σ^{r−i}Δ^i}`, so `∂L/∂u_i` is the
//! partial written `∂_{i+2}L` in the usual notation.
//!
//! The side hypotheses under which these conditions are necessary cannot be
//! checked numerically; everything reported here is a candidate verdict.

mod lagrangian;
mod maximality;
mod problem;
mod scan;

use crate::calculus::{
    component_at, delta_index, delta_index_with_mag, mixed_eval_index, mixed_eval_with_mag, times_inv_a1_pow,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::exec::Execution;

pub use lagrangian::Lagrangian;
pub use maximality::{
    default_competitors, default_perturbations, weak_maximality_test, CompetitorOutcome, MaximalityReport,
    MaximalityVerdict, PERTURBATION_SIZES,
};
pub use problem::{Horizon, Problem};
pub use scan::{Direction, Sample, TruncationScan, Verdict, GROWTH_EXPONENT, STABLE_RTOL, TAIL, ZERO_RTOL};

/// Tolerance on `|x^{Δ^i}(a) − α_i|` for admissibility.
pub const ADMISSIBLE_TOL: f64 = 1e-9;

fn sign(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn check_a1(a1: f64) -> Result<()> {
    if !(a1 > 0.0 && a1.is_finite()) {
        return Err(Error::Argument(format!("a1 must be positive, got {a1}")));
    }
    Ok(())
}

/// `(−1)^i (1/a1)^{i(i−1)/2}`.
pub fn el_coefficient(i: usize, a1: f64) -> Result<f64> {
    check_a1(a1)?;
    Ok(times_inv_a1_pow(
        sign(i),
        a1,
        (i * i.saturating_sub(1) / 2) as f64,
    ))
}

fn psi_exponent(i: usize, r: usize, k: usize) -> f64 {
    // Σ_{j=1}^{i} (r − (k−1) + (j−1)) = i·(r−k) + i(i+1)/2
    (i * (r - k) + i * (i + 1) / 2) as f64
}

/// `Ψ_i^r(k) = Π_{j=1}^{i} (1/a1)^{r−(k−1)+(j−1)}`, defined for `1 ≤ i ≤ k−1 ≤ r−1`.
pub fn psi(i: usize, r: usize, k: usize, a1: f64) -> Result<f64> {
    check_a1(a1)?;
    if r == 0 || k == 0 || k > r {
        return Err(Error::Argument(format!("need 1 <= k <= r, got k={k}, r={r}")));
    }
    if i == 0 || i >= k {
        return Err(Error::Argument(format!("need 1 <= i <= k-1, got i={i}, k={k}")));
    }
    Ok(times_inv_a1_pow(1.0, a1, psi_exponent(i, r, k)))
}

/// `x^{Δ^i}(a) − α_i` for `i = 0..r−1`, reported even when huge.
pub fn admissibility_check(p: &Problem, x: &Trajectory) -> Vec<f64> {
    p.initial_conditions()
        .iter()
        .enumerate()
        .map(|(i, alpha)| match component_at(p.scale(), x, 0, 0, i) {
            Ok(v) => v - alpha,
            Err(_) => f64::NAN,
        })
        .collect()
}

pub fn is_admissible(p: &Problem, x: &Trajectory) -> bool {
    admissibility_check(p, x)
        .iter()
        .all(|r| r.abs() <= ADMISSIBLE_TOL)
}

/// `L⟨x⟩^r` at scale index `n`.
pub(crate) fn lagrangian_at(p: &Problem, x: &Trajectory, n: usize) -> Result<f64> {
    let slots = mixed_eval_index(p.scale(), x, n, p.order())?;
    p.lagrangian().value(slots[0], &slots[1..])
}

pub fn lagrangian_along(p: &Problem, x: &Trajectory, t: f64) -> Result<f64> {
    lagrangian_at(p, x, p.scale().index_of(t)?)
}

/// Slot vectors `⟨x⟩^r` at indices `n..n+count`.
fn slot_window(p: &Problem, x: &Trajectory, n: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    (n..n + count)
        .map(|m| mixed_eval_index(p.scale(), x, m, p.order()))
        .collect()
}

/// `(∂_{slot+2}L)^{Δ^order}⟨x⟩^r` at window offset 0, with slots precomputed.
fn partial_delta(p: &Problem, window: &[Vec<f64>], n: usize, slot: usize, order: usize) -> Result<f64> {
    let l = p.lagrangian();
    delta_index(p.scale(), n, order, |m| {
        let s = &window[m - n];
        l.partial(slot, s[0], &s[1..])
    })
}

pub(crate) fn el_residual_index(p: &Problem, x: &Trajectory, n: usize) -> Result<f64> {
    let r = p.order();
    let window = slot_window(p, x, n, r + 1)?;
    let mut acc = 0.0;
    for i in 0..=r {
        let d = partial_delta(p, &window, n, i, i)?;
        acc += times_inv_a1_pow(sign(i) * d, p.a1(), (i * i.saturating_sub(1) / 2) as f64);
    }
    Ok(acc)
}

/// E-L residual with a rounding magnitude: the same sum taken over absolute
/// values, where each partial is inflated by its sensitivity to rounding in
/// the slot values.
pub(crate) fn el_residual_with_mag(p: &Problem, x: &Trajectory, n: usize) -> Result<(f64, f64)> {
    let r = p.order();
    let scale = p.scale();
    let l = p.lagrangian();
    let mut window = Vec::with_capacity(r + 1);
    for m in n..=n + r {
        let t = scale.point(m)?;
        let slots = mixed_eval_with_mag(scale, x, m, r)?;
        let u: Vec<f64> = slots.iter().map(|s| s.0).collect();
        let mags: Vec<f64> = slots.iter().map(|s| s.1).collect();
        window.push((t, u, mags));
    }
    let mut acc = 0.0;
    let mut mag = 0.0;
    for i in 0..=r {
        let (d, dm) = delta_index_with_mag(scale, n, i, |m| {
            let (t, u, mags) = &window[m - n];
            let g = l.partial(i, *t, u)?;
            let mut gm = g.abs();
            for (k, um) in mags.iter().enumerate() {
                if *um != 0.0 {
                    gm += l.second_partial(i, k, *t, u)?.abs() * um;
                }
            }
            Ok((g, gm))
        })?;
        let exponent = (i * i.saturating_sub(1) / 2) as f64;
        acc += times_inv_a1_pow(sign(i) * d, p.a1(), exponent);
        mag += times_inv_a1_pow(dm, p.a1(), exponent);
    }
    Ok((acc, mag))
}

/// `Σ_{i=0}^{r} (−1)^i (1/a1)^{i(i−1)/2} (∂_{i+2}L)^{Δ^i}⟨x⟩^r(t)`.
///
/// Needs scale points up to `σ^{2r}(t)`.
pub fn el_residual(p: &Problem, x: &Trajectory, t: f64) -> Result<f64> {
    el_residual_index(p, x, p.scale().index_of(t)?)
}

/// E-L residual and its rounding magnitude; `|residual| ≲ 1e-15·magnitude`
/// means the residual is indistinguishable from zero.
pub fn el_residual_with_scale(p: &Problem, x: &Trajectory, t: f64) -> Result<(f64, f64)> {
    el_residual_with_mag(p, x, p.scale().index_of(t)?)
}

fn check_k(p: &Problem, k: usize) -> Result<()> {
    if k == 0 || k > p.order() {
        return Err(Error::Argument(format!(
            "transversality index k must lie in 1..={}, got {k}",
            p.order()
        )));
    }
    Ok(())
}

pub(crate) fn transversality_index(p: &Problem, x: &Trajectory, k: usize, n: usize) -> Result<f64> {
    check_k(p, k)?;
    let r = p.order();
    let base = r - k + 1;
    let window = slot_window(p, x, n, k)?;
    let mut bracket = partial_delta(p, &window, n, base, 0)?;
    for i in 1..k {
        let d = partial_delta(p, &window, n, base + i, i)?;
        bracket += times_inv_a1_pow(sign(i) * d, p.a1(), psi_exponent(i, r, k));
    }
    let factor = component_at(p.scale(), x, n, k - 1, r - k)?;
    Ok(bracket * factor)
}

/// The `k`-th transversality expression at `T′`:
/// `(∂_{r−k+3}L + Σ_{i=1}^{k−1} (−1)^i Ψ_i^r(k) (∂_{r−k+3+i}L)^{Δ^i})⟨x⟩^r(T′) · x^{σ^{k−1}Δ^{r−k}}(T′)`.
pub fn transversality_value(p: &Problem, x: &Trajectory, k: usize, tprime: f64) -> Result<f64> {
    transversality_index(p, x, k, p.scale().index_of(tprime)?)
}

fn grid_to_indices(p: &Problem, t_grid: &[f64]) -> Result<Vec<usize>> {
    if t_grid.is_empty() {
        return Err(Error::Argument("truncation grid is empty".into()));
    }
    let idx: Vec<usize> = t_grid
        .iter()
        .map(|t| p.scale().index_of(*t))
        .collect::<Result<_>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "truncation grid must be strictly increasing".into(),
        ));
    }
    Ok(idx)
}

/// Sampling window `[T_0, T_max]` in indices; `T_max` is the larger of the
/// horizon bound and the last truncation point.
fn window_bounds(p: &Problem, grid: &[usize]) -> (usize, usize) {
    let last = *grid.last().expect("nonempty grid");
    (grid[0], last.max(p.horizon().t_max_index))
}

/// Infima of the `k`-th transversality expression over `T′ ∈ [T, T_max]`.
pub fn transversality_scan(
    p: &Problem,
    x: &Trajectory,
    k: usize,
    t_grid: &[f64],
    exec: Execution,
) -> Result<TruncationScan> {
    check_k(p, k)?;
    let grid = grid_to_indices(p, t_grid)?;
    let (lo, hi) = window_bounds(p, &grid);
    let samples = exec
        .map_range(lo..hi + 1, |n| -> Result<Sample> {
            Ok(Sample {
                index: n,
                t: p.scale().point(n)?,
                value: transversality_index(p, x, k, n)?,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    TruncationScan::from_samples(&samples, &grid)
}

/// Scans for every `k = 1..r` over the problem's default truncation grid.
pub fn transversality_scans(p: &Problem, x: &Trajectory, exec: Execution) -> Result<Vec<TruncationScan>> {
    transversality_scans_on(p, x, &p.t_grid()?, exec)
}

pub fn transversality_scans_on(
    p: &Problem,
    x: &Trajectory,
    t_grid: &[f64],
    exec: Execution,
) -> Result<Vec<TruncationScan>> {
    (1..=p.order())
        .map(|k| transversality_scan(p, x, k, t_grid, exec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::TimeScale;

    fn example1() -> Problem {
        Problem::new(
            TimeScale::integer(0.0).unwrap(),
            vec![0.0, 1.0],
            Lagrangian::parse("-(u2)^2", 2).unwrap(),
        )
        .unwrap()
    }

    fn example2() -> Problem {
        Problem::new(
            TimeScale::q_scale(2.0, 1.0).unwrap(),
            vec![1.0, 2.0],
            Lagrangian::parse("-t*(1+u2^2)", 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn coefficients() {
        assert_eq!(el_coefficient(0, 3.0).unwrap(), 1.0);
        assert_eq!(el_coefficient(1, 3.0).unwrap(), -1.0);
        assert!((el_coefficient(2, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((el_coefficient(3, 2.0).unwrap() + 0.125).abs() < 1e-15);
        assert!(el_coefficient(2, 0.0).is_err());
        assert!(el_coefficient(2, -1.0).is_err());
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(1, 3, 2, 1.0).unwrap(), 1.0);
        assert_eq!(psi(1, 2, 2, 2.0).unwrap(), 0.5);
        assert_eq!(psi(2, 3, 3, 2.0).unwrap(), 0.125);
        assert!(psi(0, 3, 2, 2.0).is_err());
        assert!(psi(2, 3, 2, 2.0).is_err());
        assert!(psi(1, 3, 4, 2.0).is_err());
        assert!(psi(1, 3, 2, 0.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let p = example1();
        assert_eq!(
            admissibility_check(&p, &Trajectory::parse("t").unwrap()),
            vec![0.0, 0.0]
        );
        assert_eq!(
            admissibility_check(&p, &Trajectory::parse("t^2").unwrap()),
            vec![0.0, 0.0]
        );
        assert_eq!(
            admissibility_check(&p, &Trajectory::parse("t^2+1").unwrap()),
            vec![1.0, 0.0]
        );
        let q = example2();
        let r = admissibility_check(&q, &Trajectory::parse("2*t-1").unwrap());
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn el_residual_on_examples() {
        let p = example1();
        let x = Trajectory::parse("t").unwrap();
        for t in 0..=40 {
            assert_eq!(el_residual(&p, &x, t as f64).unwrap(), 0.0);
        }
        let quartic = Trajectory::parse("t^4").unwrap();
        for t in [0.0, 3.0, 17.0] {
            assert_eq!(el_residual(&p, &quartic, t).unwrap(), -48.0);
        }
        let q = example2();
        let x = Trajectory::parse("2*t-1").unwrap();
        for j in 0..=20 {
            let t = 2f64.powi(j);
            let (v, mag) = el_residual_with_scale(&q, &x, t).unwrap();
            assert!(v.abs() <= 1e-10, "t={t}: {v}");
            assert!(v.abs() <= 1e-13 * mag.max(1.0));
        }
    }

    #[test]
    fn transversality_examples() {
        let p = example1();
        let x = Trajectory::parse("t").unwrap();
        for k in 1..=2 {
            for t in [0.0, 5.0, 100.0] {
                assert_eq!(transversality_value(&p, &x, k, t).unwrap(), 0.0);
            }
        }
        // x = t²: k=1 value −4(2T′+1)
        let sq = Trajectory::parse("t^2").unwrap();
        assert_eq!(transversality_value(&p, &sq, 1, 3.0).unwrap(), -28.0);
        assert!(transversality_value(&p, &x, 0, 1.0).is_err());
        assert!(transversality_value(&p, &x, 3, 1.0).is_err());
    }

    #[test]
    fn order_one_transversality_is_the_momentum_times_x() {
        let p = Problem::new(
            TimeScale::integer(0.0).unwrap(),
            vec![0.0],
            Lagrangian::parse("t*u0 - u1^2", 1).unwrap(),
        )
        .unwrap();
        let x = Trajectory::parse("t^2").unwrap();
        // ∂₃L = −2 x^Δ = −2(2t+1); multiplied by x(T′)
        let v = transversality_value(&p, &x, 1, 3.0).unwrap();
        assert_eq!(v, -2.0 * 7.0 * 9.0);
    }

    #[test]
    fn scans_on_examples() {
        let p = example1();
        let x = Trajectory::parse("t").unwrap();
        for s in transversality_scans(&p, &x, Execution::Parallel).unwrap() {
            assert!(s.all_zero());
            assert_eq!(s.verdict, Verdict::ConvergesToZero);
        }
        let cubic = Trajectory::parse("t^3").unwrap();
        let scans = transversality_scans(&p, &cubic, Execution::Sequential).unwrap();
        assert!(scans
            .iter()
            .any(|s| matches!(s.verdict, Verdict::Diverges { .. })));

        let q = example2();
        let x = Trajectory::parse("2*t-1").unwrap();
        for s in transversality_scans(&q, &x, Execution::Parallel).unwrap() {
            assert_eq!(s.verdict, Verdict::ConvergesToZero);
        }
        assert!(transversality_scan(&q, &x, 1, &[], Execution::Parallel).is_err());
    }

    #[test]
    fn execution_modes_agree() {
        let p = example1();
        let x = Trajectory::parse("t^3-2*t^2+t").unwrap();
        let grid = p.t_grid().unwrap();
        for k in 1..=2 {
            let a = transversality_scan(&p, &x, k, &grid, Execution::Sequential).unwrap();
            let b = transversality_scan(&p, &x, k, &grid, Execution::Parallel).unwrap();
            assert_eq!(a, b);
        }
    }
}
