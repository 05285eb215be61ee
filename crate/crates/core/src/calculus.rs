//! Exact delta calculus on isolated time scales.
//!
//! At a right-scattered point the delta derivative is the forward quotient
//! `(f(σ(t)) − f(t)) / μ(t)`, so on isolated scales every derivative and
//! integral below is a finite computation with no truncation error.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exprlang::{Bindings, Expr};
use crate::timescale::TimeScale;

type TrajFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// A scalar function on a time scale.
///
/// Callers must supply functions that are well defined at every scale point
/// the computation reaches; smoothness classes cannot be checked numerically.
/// Closures must be safe to call concurrently from several threads.
#[derive(Clone)]
pub struct Trajectory {
    f: TrajFn,
    label: String,
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Trajectory({})", self.label)
    }
}

impl Trajectory {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(move |t| Ok(f(t))),
            label: label.into(),
        }
    }

    pub fn try_new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    /// Trajectory from an expression in the single variable `t`.
    pub fn from_expr(expr: Expr) -> Result<Self> {
        if expr.max_slot().is_some() {
            return Err(Error::Argument(format!(
                "trajectory expression may only use t: {expr}"
            )));
        }
        let label = expr.to_string();
        let expr = Arc::new(expr);
        Ok(Self::try_new(label, move |t| expr.eval(&Bindings::time(t))))
    }

    /// Parses a trajectory written in `t`, e.g. `"2*t-1"`.
    pub fn parse(source: &str) -> Result<Self> {
        Self::from_expr(crate::exprlang::parse_time_only(source)?)
    }

    /// `Σ c_j φ_j(t)`.
    pub fn linear_combination(basis: &[Trajectory], coefficients: &[f64]) -> Result<Self> {
        if basis.len() != coefficients.len() {
            return Err(Error::Argument(format!(
                "{} basis functions but {} coefficients",
                basis.len(),
                coefficients.len()
            )));
        }
        let label = basis
            .iter()
            .zip(coefficients)
            .map(|(b, c)| format!("{c}*({})", b.label))
            .collect::<Vec<_>>()
            .join(" + ");
        let basis: Vec<Trajectory> = basis.to_vec();
        let coefficients = coefficients.to_vec();
        Ok(Self::try_new(label, move |t| {
            let mut acc = 0.0;
            for (b, c) in basis.iter().zip(&coefficients) {
                if *c != 0.0 {
                    acc += c * b.eval(t)?;
                }
            }
            Ok(acc)
        }))
    }

    /// `self + eps·other`.
    pub fn perturbed(&self, other: &Trajectory, eps: f64) -> Self {
        let a = self.clone();
        let b = other.clone();
        let label = format!("{} + {eps}*({})", self.label, other.label);
        Self::try_new(label, move |t| Ok(a.eval(t)? + eps * b.eval(t)?))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let a = self.clone();
        let label = format!("{c}*({})", self.label);
        Self::try_new(label, move |t| Ok(c * a.eval(t)?))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        (self.f)(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// `Δ^order` of an index function at index `n`, together with a rounding
/// magnitude: the same nested quotient applied to absolute values with
/// absolute weights. Relative rounding error of the value is of order
/// `ε·magnitude`.
pub(crate) fn delta_index_with_mag<F>(ts: &TimeScale, n: usize, order: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(usize) -> Result<(f64, f64)>,
{
    let mut vals = Vec::with_capacity(order + 1);
    let mut mags = Vec::with_capacity(order + 1);
    for m in n..=n + order {
        let (v, g) = f(m)?;
        vals.push(v);
        mags.push(g);
    }
    for level in 1..=order {
        for j in 0..=order - level {
            let mu = ts.mu_at(n + j)?;
            vals[j] = (vals[j + 1] - vals[j]) / mu;
            mags[j] = (mags[j + 1] + mags[j]) / mu;
        }
    }
    Ok((vals[0], mags[0]))
}

pub(crate) fn delta_index<F>(ts: &TimeScale, n: usize, order: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64>,
{
    let mut vals = Vec::with_capacity(order + 1);
    for m in n..=n + order {
        vals.push(f(m)?);
    }
    for level in 1..=order {
        for j in 0..=order - level {
            vals[j] = (vals[j + 1] - vals[j]) / ts.mu_at(n + j)?;
        }
    }
    Ok(vals[0])
}

fn horizon_context(err: Error, what: &str) -> Error {
    match err {
        Error::Horizon(msg) => Error::Horizon(format!("{what}: {msg}")),
        other => other,
    }
}

/// `x^{σ^shift Δ^order}` at index `n`: shift `shift` times, then
/// delta-differentiate `order` times.
pub(crate) fn component_at(
    ts: &TimeScale,
    x: &Trajectory,
    n: usize,
    shift: usize,
    order: usize,
) -> Result<f64> {
    delta_index(ts, n, order, |m| x.eval(ts.point(m + shift)?))
        .map_err(|e| horizon_context(e, "not enough forward points"))
}

pub(crate) fn component_with_mag(
    ts: &TimeScale,
    x: &Trajectory,
    n: usize,
    shift: usize,
    order: usize,
) -> Result<(f64, f64)> {
    delta_index_with_mag(ts, n, order, |m| {
        let v = x.eval(ts.point(m + shift)?)?;
        Ok((v, v.abs()))
    })
}

/// `x^{Δ^order}(t)`; order 0 returns `x(t)`.
pub fn delta_derivative(ts: &TimeScale, x: &Trajectory, t: f64, order: usize) -> Result<f64> {
    let n = ts.index_of(t)?;
    component_at(ts, x, n, 0, order)
}

/// Delta integral `∫_from^to f(t) Δt = Σ f(t)·μ(t)` over scale points in
/// `[from, to)`. Reversed bounds flip the sign.
pub fn delta_integral(ts: &TimeScale, f: &Trajectory, from: f64, to: f64) -> Result<f64> {
    let i0 = ts.index_of(from)?;
    let i1 = ts.index_of(to)?;
    delta_integral_index(ts, i0, i1, |n| f.eval(ts.point(n)?))
}

pub(crate) fn delta_integral_index<F>(ts: &TimeScale, i0: usize, i1: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64>,
{
    if i1 < i0 {
        return Ok(-delta_integral_index(ts, i1, i0, f)?);
    }
    let mut acc = 0.0;
    for n in i0..i1 {
        acc += f(n)? * ts.mu_at(n)?;
    }
    Ok(acc)
}

/// `⟨x⟩^r(t) = (t, x^{σ^r}, x^{σ^{r−1}Δ}, …, x^{σΔ^{r−1}}, x^{Δ^r})`.
pub fn mixed_eval(ts: &TimeScale, x: &Trajectory, t: f64, r: usize) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::Argument("order r must be positive".into()));
    }
    let n = ts.index_of(t)?;
    mixed_eval_index(ts, x, n, r)
}

pub(crate) fn mixed_eval_index(ts: &TimeScale, x: &Trajectory, n: usize, r: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(r + 2);
    out.push(ts.point(n)?);
    for i in 0..=r {
        out.push(component_at(ts, x, n, r - i, i)?);
    }
    Ok(out)
}

/// `(value, magnitude)` pairs for each slot of `⟨x⟩^r` at index `n` (time excluded).
pub(crate) fn mixed_eval_with_mag(
    ts: &TimeScale,
    x: &Trajectory,
    n: usize,
    r: usize,
) -> Result<Vec<(f64, f64)>> {
    (0..=r).map(|i| component_with_mag(ts, x, n, r - i, i)).collect()
}

/// `f^{σΔ}(t) − a1·f^{Δσ}(t)`; zero on any scale with an affine forward jump.
pub fn commutation_residual(ts: &TimeScale, x: &Trajectory, t: f64) -> Result<f64> {
    let (a1, _) = ts
        .affine_params()
        .ok_or_else(|| Error::Precondition("commutation identity needs an affine forward jump".into()))?;
    let n = ts.index_of(t)?;
    let sigma_delta = component_at(ts, x, n, 1, 1)?;
    let delta_sigma = component_at(ts, x, n + 1, 0, 1)?;
    Ok(sigma_delta - a1 * delta_sigma)
}

/// `value · (1/a1)^exponent`, switching to log space when the power alone
/// would overflow or underflow.
pub(crate) fn times_inv_a1_pow(value: f64, a1: f64, exponent: f64) -> f64 {
    if exponent == 0.0 || a1 == 1.0 || value == 0.0 {
        return value;
    }
    let log_factor = -exponent * a1.ln();
    if log_factor.abs() <= 600.0 {
        if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
            value / a1.powi(exponent as i32)
        } else {
            value * log_factor.exp()
        }
    } else {
        value.signum() * (value.abs().ln() + log_factor).exp()
    }
}

/// The three parts of the higher-order integration-by-parts identity on `[from, to)`:
///
/// `∫ f·g^{σ^{r−i}Δ^i} = [boundary]_from^to + (−1)^i (1/a1)^{i(i−1)/2} ∫ f^{Δ^i}·g^{σ^r}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IbpTerms {
    pub lhs: f64,
    pub boundary: f64,
    pub remainder: f64,
}

impl IbpTerms {
    pub fn residual(&self) -> f64 {
        self.lhs - self.boundary - self.remainder
    }

    /// Largest term magnitude, for relative comparisons.
    pub fn scale(&self) -> f64 {
        self.lhs.abs().max(self.boundary.abs()).max(self.remainder.abs())
    }

    pub fn relative_residual(&self) -> f64 {
        self.residual().abs() / self.scale().max(1.0)
    }
}

pub fn ibp_terms(
    ts: &TimeScale,
    f: &Trajectory,
    g: &Trajectory,
    from: f64,
    to: f64,
    r: usize,
    i: usize,
) -> Result<IbpTerms> {
    if r == 0 || i == 0 || i > r {
        return Err(Error::Argument(format!("need 1 <= i <= r, got i={i}, r={r}")));
    }
    let (a1, _) = ts.affine_params().ok_or_else(|| {
        Error::Precondition("integration by parts of higher order needs an affine forward jump".into())
    })?;
    let i0 = ts.index_of(from)?;
    let i1 = ts.index_of(to)?;

    let lhs = delta_integral_index(ts, i0, i1, |n| {
        Ok(f.eval(ts.point(n)?)? * component_at(ts, g, n, r - i, i)?)
    })?;

    let bracket = |n: usize| -> Result<f64> {
        let mut acc = f.eval(ts.point(n)?)? * component_at(ts, g, n, r - i, i - 1)?;
        for k in 1..i {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            // Π_{j=1}^{k} (1/a1)^{i−j} = (1/a1)^{k·i − k(k+1)/2}
            let exponent = (k * i - k * (k + 1) / 2) as f64;
            let term = component_at(ts, f, n, 0, k)? * component_at(ts, g, n, r - i + k, i - 1 - k)?;
            acc += sign * times_inv_a1_pow(term, a1, exponent);
        }
        Ok(acc)
    };
    let boundary = bracket(i1)? - bracket(i0)?;

    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    let integral = delta_integral_index(ts, i0, i1, |n| {
        Ok(component_at(ts, f, n, 0, i)? * component_at(ts, g, n, r, 0)?)
    })?;
    let remainder = sign * times_inv_a1_pow(integral, a1, (i * (i - 1) / 2) as f64);

    Ok(IbpTerms {
        lhs,
        boundary,
        remainder,
    })
}

/// LHS minus RHS of the higher-order integration-by-parts identity.
pub fn ibp_residual(
    ts: &TimeScale,
    f: &Trajectory,
    g: &Trajectory,
    from: f64,
    to: f64,
    r: usize,
    i: usize,
) -> Result<f64> {
    Ok(ibp_terms(ts, f, g, from, to, r, i)?.residual())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z() -> TimeScale {
        TimeScale::integer(0.0).unwrap()
    }

    fn q2() -> TimeScale {
        TimeScale::q_scale(2.0, 1.0).unwrap()
    }

    fn pow(d: i32) -> Trajectory {
        Trajectory::new(format!("t^{d}"), move |t| t.powi(d))
    }

    #[test]
    fn first_and_second_derivatives() {
        assert_eq!(delta_derivative(&z(), &pow(2), 3.0, 1).unwrap(), 7.0);
        assert_eq!(delta_derivative(&q2(), &pow(2), 4.0, 1).unwrap(), 12.0);
        assert_eq!(delta_derivative(&z(), &pow(3), 0.0, 2).unwrap(), 6.0);
        assert_eq!(delta_derivative(&z(), &pow(3), 5.0, 0).unwrap(), 125.0);
    }

    #[test]
    fn integrals() {
        assert_eq!(delta_integral(&z(), &pow(1), 0.0, 4.0).unwrap(), 6.0);
        let one = Trajectory::new("1", |_| 1.0);
        assert_eq!(delta_integral(&q2(), &one, 1.0, 16.0).unwrap(), 15.0);
        assert_eq!(delta_integral(&q2(), &one, 4.0, 4.0).unwrap(), 0.0);
        assert_eq!(delta_integral(&z(), &pow(1), 4.0, 0.0).unwrap(), -6.0);
    }

    #[test]
    fn mixed_evaluation() {
        assert_eq!(mixed_eval(&z(), &pow(2), 3.0, 1).unwrap(), vec![3.0, 16.0, 7.0]);
        assert_eq!(
            mixed_eval(&z(), &pow(1), 0.0, 2).unwrap(),
            vec![0.0, 2.0, 1.0, 0.0]
        );
        // x = t on q=2 at t=1: σ²(1) = 4; (x∘σ)(t) = 2t has Δ 2; Δ²t = 0.
        assert_eq!(
            mixed_eval(&q2(), &pow(1), 1.0, 2).unwrap(),
            vec![1.0, 4.0, 2.0, 0.0]
        );
    }

    #[test]
    fn commutation_on_q_scale() {
        for t in [1.0, 2.0, 64.0] {
            assert_eq!(commutation_residual(&q2(), &pow(2), t).unwrap(), 0.0);
        }
        let seq = TimeScale::from_points(vec![0.0, 1.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(matches!(
            commutation_residual(&seq, &pow(2), 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn commutation_on_h_scale_tabulated() {
        let h = TimeScale::h_step(0.5, 0.0).unwrap();
        let x = Trajectory::new("exp", f64::exp);
        assert!(commutation_residual(&h, &x, 0.0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn first_order_parts_formula_over_integers() {
        let t = pow(1);
        let terms = ibp_terms(&z(), &t, &t, 0.0, 4.0, 1, 1).unwrap();
        // lhs Σ t = 6, boundary [t·t]_0^4 = 16, remainder −Σ (t+1) = −10
        assert_eq!(terms.lhs, 6.0);
        assert_eq!(terms.boundary, 16.0);
        assert_eq!(terms.remainder, -10.0);
        assert_eq!(terms.residual(), 0.0);
    }

    #[test]
    fn zero_factor_gives_zero_residual() {
        let zero = Trajectory::new("0", |_| 0.0);
        for i in 1..=3 {
            assert_eq!(ibp_residual(&q2(), &zero, &pow(3), 1.0, 64.0, 3, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn ibp_index_out_of_range() {
        let t = pow(1);
        assert!(matches!(
            ibp_residual(&z(), &t, &t, 0.0, 4.0, 2, 3),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            ibp_residual(&z(), &t, &t, 0.0, 4.0, 2, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn horizon_error_on_short_sequences() {
        let seq = TimeScale::from_points(vec![0.0, 1.0, 3.0]).unwrap();
        assert!(matches!(
            delta_derivative(&seq, &pow(2), 1.0, 2),
            Err(Error::Horizon(_))
        ));
    }

    #[test]
    fn log_space_powers() {
        assert_eq!(times_inv_a1_pow(3.0, 2.0, 2.0), 0.75);
        let v = times_inv_a1_pow(1e300, 10.0, 310.0);
        assert!((v - 1e-10).abs() < 1e-20);
    }
}
