//! Isolated time scales unbounded above.
//!
//! Every scale is stored as an index-to-value map `n ↦ t_n` starting at the
//! anchor `t_0 = a`. Jump operators and grid walks work on indices, so
//! geometric scales never accumulate drift from repeated floating `σ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a value is a point of a scale.
pub const ON_SCALE_RTOL: f64 = 1e-9;

type Generator = Arc<dyn Fn(usize) -> Option<f64> + Send + Sync>;

/// A strictly increasing sequence of reals given by an index generator.
///
/// The generator returns `None` past the last available point. Such a scale
/// does not satisfy the affine forward-jump condition in general and is only
/// accepted by first-order problems.
#[derive(Clone)]
pub struct PointSequence {
    generator: Generator,
    listed: Option<Arc<[f64]>>,
}

impl PointSequence {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(usize) -> Option<f64> + Send + Sync + 'static,
    {
        Self {
            generator: Arc::new(f),
            listed: None,
        }
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("point list is empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("point list contains non-finite values".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Argument(format!(
                "points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let listed: Arc<[f64]> = points.into();
        let data = listed.clone();
        Ok(Self {
            generator: Arc::new(move |n| data.get(n).copied()),
            listed: Some(listed),
        })
    }

    fn get(&self, n: usize) -> Option<f64> {
        (self.generator)(n)
    }
}

impl fmt::Debug for PointSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.listed {
            Some(p) => write!(f, "PointSequence({} listed points)", p.len()),
            None => write!(f, "PointSequence(<generator>)"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScaleKind {
    /// `a + ℕ₀`, forward jump `t + 1`.
    Integer,
    /// `a + hℕ₀`, forward jump `t + h`.
    HStep {
        h: f64,
    },
    /// `a·q^ℕ₀`, forward jump `q·t`.
    QScale {
        q: f64,
    },
    /// Forward jump `a1·t + a0`.
    Affine {
        a1: f64,
        a0: f64,
    },
    PointSequence(PointSequence),
}

/// An isolated time scale `[a, +∞[` with `sup = +∞`.
///
/// Values are immutable after construction and may be shared freely between
/// threads.
#[derive(Clone, Debug)]
pub struct TimeScale {
    kind: ScaleKind,
    anchor: f64,
}

/// JSON form of a scale, e.g. `{"kind":"q","q":2.0,"anchor":1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScaleSpec {
    Integer { anchor: f64 },
    H { h: f64, anchor: f64 },
    Q { q: f64, anchor: f64 },
    Affine { a1: f64, a0: f64, anchor: f64 },
    Points { points: Vec<f64> },
}

impl TimeScale {
    pub fn integer(anchor: f64) -> Result<Self> {
        if !anchor.is_finite() || anchor.fract() != 0.0 {
            return Err(Error::Argument(format!(
                "integer scale anchor must be an integer, got {anchor}"
            )));
        }
        Ok(Self {
            kind: ScaleKind::Integer,
            anchor,
        })
    }

    pub fn h_step(h: f64, anchor: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) || !anchor.is_finite() {
            return Err(Error::Argument(format!("step h must be positive, got {h}")));
        }
        Ok(Self {
            kind: ScaleKind::HStep { h },
            anchor,
        })
    }

    pub fn q_scale(q: f64, anchor: f64) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::Argument(format!("q must exceed 1, got {q}")));
        }
        if !(anchor.is_finite() && anchor > 0.0) {
            return Err(Error::Argument(format!(
                "q-scale anchor must be positive, got {anchor}"
            )));
        }
        Ok(Self {
            kind: ScaleKind::QScale { q },
            anchor,
        })
    }

    /// Scale generated by `σ(t) = a1·t + a0` from `anchor`.
    ///
    /// Requires `a1 ≥ 1` and `μ(anchor) > 0`; a contraction (`a1 < 1`) would
    /// converge to its fixed point and the scale would be bounded above.
    pub fn affine(a1: f64, a0: f64, anchor: f64) -> Result<Self> {
        if !(a1.is_finite() && a0.is_finite() && anchor.is_finite()) {
            return Err(Error::Argument("affine parameters must be finite".into()));
        }
        if a1 < 1.0 {
            return Err(Error::Argument(format!(
                "affine scale needs a1 >= 1 to be unbounded above, got {a1}"
            )));
        }
        if (a1 - 1.0) * anchor + a0 <= 0.0 {
            return Err(Error::Argument(format!(
                "affine scale has non-positive graininess at the anchor {anchor}"
            )));
        }
        Ok(Self {
            kind: ScaleKind::Affine { a1, a0 },
            anchor,
        })
    }

    pub fn from_sequence(seq: PointSequence) -> Result<Self> {
        let anchor = seq
            .get(0)
            .ok_or_else(|| Error::Argument("point sequence has no points".into()))?;
        Ok(Self {
            kind: ScaleKind::PointSequence(seq),
            anchor,
        })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        Self::from_sequence(PointSequence::from_points(points)?)
    }

    pub fn from_spec(spec: &ScaleSpec) -> Result<Self> {
        match spec {
            ScaleSpec::Integer { anchor } => Self::integer(*anchor),
            ScaleSpec::H { h, anchor } => Self::h_step(*h, *anchor),
            ScaleSpec::Q { q, anchor } => Self::q_scale(*q, *anchor),
            ScaleSpec::Affine { a1, a0, anchor } => Self::affine(*a1, *a0, *anchor),
            ScaleSpec::Points { points } => Self::from_points(points.clone()),
        }
    }

    /// The JSON form, when one exists (generator-backed sequences have none).
    pub fn to_spec(&self) -> Option<ScaleSpec> {
        let anchor = self.anchor;
        Some(match &self.kind {
            ScaleKind::Integer => ScaleSpec::Integer { anchor },
            ScaleKind::HStep { h } => ScaleSpec::H { h: *h, anchor },
            ScaleKind::QScale { q } => ScaleSpec::Q { q: *q, anchor },
            ScaleKind::Affine { a1, a0 } => ScaleSpec::Affine {
                a1: *a1,
                a0: *a0,
                anchor,
            },
            ScaleKind::PointSequence(seq) => ScaleSpec::Points {
                points: seq.listed.as_ref()?.to_vec(),
            },
        })
    }

    pub fn kind(&self) -> &ScaleKind {
        &self.kind
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// `(a1, a0)` with `σ(t) = a1·t + a0`, for the kinds that have one by construction.
    pub fn affine_params(&self) -> Option<(f64, f64)> {
        match &self.kind {
            ScaleKind::Integer => Some((1.0, 1.0)),
            ScaleKind::HStep { h } => Some((1.0, *h)),
            ScaleKind::QScale { q } => Some((*q, 0.0)),
            ScaleKind::Affine { a1, a0 } => Some((*a1, *a0)),
            ScaleKind::PointSequence(_) => None,
        }
    }

    /// The `n`-th point, `t_0` being the anchor.
    pub fn point(&self, n: usize) -> Result<f64> {
        let a = self.anchor;
        let value = match &self.kind {
            ScaleKind::Integer => a + n as f64,
            ScaleKind::HStep { h } => a + n as f64 * h,
            ScaleKind::QScale { q } => a * pow_index(*q, n),
            ScaleKind::Affine { a1, a0 } => {
                if *a1 == 1.0 {
                    a + n as f64 * a0
                } else {
                    let fixed = a0 / (1.0 - a1);
                    fixed + (a - fixed) * pow_index(*a1, n)
                }
            }
            ScaleKind::PointSequence(seq) => {
                let p = seq
                    .get(n)
                    .ok_or_else(|| Error::Horizon(format!("point sequence has no point with index {n}")))?;
                if n > 0 {
                    if let Some(prev) = seq.get(n - 1) {
                        if p <= prev {
                            return Err(Error::Domain(format!(
                                "point sequence is not strictly increasing at index {n}"
                            )));
                        }
                    }
                }
                p
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Horizon(format!("point with index {n} overflows")))
        }
    }

    /// Index of `t` on the scale, within [`ON_SCALE_RTOL`].
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("{t} is not a finite time")));
        }
        let tol = ON_SCALE_RTOL * t.abs().max(1.0);
        if t < self.anchor - tol {
            return Err(Error::Domain(format!(
                "{t} lies below the scale anchor {}",
                self.anchor
            )));
        }
        let a = self.anchor;
        let guess = match &self.kind {
            ScaleKind::Integer => Some((t - a).round()),
            ScaleKind::HStep { h } => Some(((t - a) / h).round()),
            ScaleKind::QScale { q } => Some(((t / a).ln() / q.ln()).round()),
            ScaleKind::Affine { a1, a0 } => {
                if *a1 == 1.0 {
                    Some(((t - a) / a0).round())
                } else {
                    let fixed = a0 / (1.0 - a1);
                    let ratio = (t - fixed) / (a - fixed);
                    (ratio > 0.0).then(|| (ratio.ln() / a1.ln()).round())
                }
            }
            ScaleKind::PointSequence(_) => return self.search_sequence(t, tol),
        };
        if let Some(g) = guess.filter(|g| g.is_finite() && *g >= 0.0) {
            let g = g as usize;
            for n in [g, g.saturating_sub(1), g + 1] {
                if let Ok(p) = self.point(n) {
                    if (p - t).abs() <= tol {
                        return Ok(n);
                    }
                }
            }
        }
        Err(Error::Domain(format!("{t} is not a point of the scale")))
    }

    fn search_sequence(&self, t: f64, tol: f64) -> Result<usize> {
        let at = |n: usize| self.point(n).ok();
        // Exponential search for an upper bracket, then bisection.
        let mut hi = 1usize;
        loop {
            match at(hi) {
                Some(p) if p < t - tol => {
                    if hi > (1usize << 48) {
                        return Err(Error::Domain(format!("{t} is beyond the searchable range")));
                    }
                    hi *= 2;
                }
                _ => break,
            }
        }
        let mut lo = 0usize;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            match at(mid) {
                Some(p) if p < t - tol => lo = mid + 1,
                _ => hi = mid,
            }
        }
        match at(lo) {
            Some(p) if (p - t).abs() <= tol => Ok(lo),
            _ => Err(Error::Domain(format!("{t} is not a point of the scale"))),
        }
    }

    /// Forward jump `σ(t)`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.sigma_k(t, 1)
    }

    /// Backward jump `ρ(t)`; `ρ(a) = a` at the minimum.
    pub fn rho(&self, t: f64) -> Result<f64> {
        match self.index_of(t)? {
            0 => Ok(self.anchor),
            n => self.point(n - 1),
        }
    }

    /// Graininess `μ(t) = σ(t) − t`.
    pub fn mu(&self, t: f64) -> Result<f64> {
        self.mu_at(self.index_of(t)?)
    }

    /// `σ^k(t)`, with `σ⁰` the identity.
    pub fn sigma_k(&self, t: f64, k: usize) -> Result<f64> {
        let n = self.index_of(t)?;
        if k == 0 {
            return Ok(t);
        }
        self.point(n + k)
    }

    pub fn mu_at(&self, n: usize) -> Result<f64> {
        match &self.kind {
            ScaleKind::Integer => Ok(1.0),
            ScaleKind::HStep { h } => Ok(*h),
            ScaleKind::Affine { a1, a0 } if *a1 == 1.0 => Ok(*a0),
            _ => Ok(self.point(n + 1)? - self.point(n)?),
        }
    }

    /// The first `count` scale points `≥ from`.
    pub fn grid(&self, from: f64, count: usize) -> Result<Vec<f64>> {
        let start = self.index_of(from)?;
        self.grid_indices(start, count)
    }

    pub fn grid_indices(&self, start: usize, count: usize) -> Result<Vec<f64>> {
        (start..start + count).map(|n| self.point(n)).collect()
    }
}

fn pow_index(base: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(k) => base.powi(k),
        Err(_) => base.powf(n as f64),
    }
}

/// Least-squares fit of `t_{i+1} ≈ a1·t_i + a0` over consecutive points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionHFit {
    pub a1: f64,
    pub a0: f64,
    pub max_residual: f64,
}

impl ConditionHFit {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

/// Fits the affine forward jump `σ(t) = a1·t + a0` to a run of consecutive
/// scale points. A zero residual means the scale satisfies condition (H) on
/// that run.
pub fn fit_condition_h(points: &[f64]) -> Result<ConditionHFit> {
    if points.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 points to fit the forward jump, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("points must be strictly increasing".into()));
    }
    let xs = &points[..points.len() - 1];
    let ys = &points[1..];
    let m = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::Argument("degenerate points: no spread".into()));
    }
    let a1 = sxy / sxx;
    let a0 = y_mean - a1 * x_mean;
    let max_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a1 * x - a0).abs())
        .fold(0.0, f64::max);
    Ok(ConditionHFit { a1, a0, max_residual })
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

    #[test]
    fn jumps_on_standard_scales() {
        assert_eq!(z().sigma(3.0).unwrap(), 4.0);
        assert_eq!(z().rho(3.0).unwrap(), 2.0);
        assert_eq!(z().mu(17.0).unwrap(), 1.0);
        assert_eq!(q2().sigma(4.0).unwrap(), 8.0);
        assert_eq!(q2().rho(8.0).unwrap(), 4.0);
        assert_eq!(q2().rho(1.0).unwrap(), 1.0);
        assert_eq!(q2().mu(4.0).unwrap(), 4.0);
        let h = TimeScale::h_step(0.5, 0.0).unwrap();
        assert_eq!(h.sigma(1.0).unwrap(), 1.5);
        assert_eq!(h.mu(3.5).unwrap(), 0.5);
    }

    #[test]
    fn iterated_jumps() {
        assert_eq!(z().sigma_k(7.0, 0).unwrap(), 7.0);
        assert_eq!(z().sigma_k(0.0, 3).unwrap(), 3.0);
        assert_eq!(q2().sigma_k(1.0, 4).unwrap(), 16.0);
    }

    #[test]
    fn grids() {
        assert_eq!(z().grid(0.0, 4).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(q2().grid(1.0, 4).unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        let h = TimeScale::h_step(0.5, 0.0).unwrap();
        assert_eq!(h.grid(0.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(z().grid(0.0, 0).unwrap().is_empty());
        assert!(matches!(z().grid(-1.0, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn off_scale_points_are_rejected() {
        assert!(matches!(z().sigma(2.5), Err(Error::Domain(_))));
        assert!(matches!(q2().sigma(3.0), Err(Error::Domain(_))));
        assert!(matches!(q2().mu(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn condition_h_fits() {
        let f = fit_condition_h(&[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        assert_eq!((f.a1, f.a0, f.max_residual), (2.0, 0.0, 0.0));
        let f = fit_condition_h(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((f.a1, f.a0, f.max_residual), (1.0, 1.0, 0.0));
        // pairs (0,1),(1,3),(3,4),(4,5): sxx = 10, sxy = 9, residuals
        // (-0.45, 0.65, -0.15, -0.05).
        let f = fit_condition_h(&[0.0, 1.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((f.a1 - 0.9).abs() < 1e-15);
        assert!((f.a0 - 1.45).abs() < 1e-14);
        assert!((f.max_residual - 0.65).abs() < 1e-14);
        assert!(!f.holds(1e-9));
    }

    #[test]
    fn condition_h_argument_errors() {
        assert!(matches!(fit_condition_h(&[0.0, 1.0]), Err(Error::Argument(_))));
        assert!(matches!(
            fit_condition_h(&[1.0, 1.0, 1.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn affine_scale_matches_its_jump() {
        let s = TimeScale::affine(2.0, 1.0, 0.0).unwrap();
        assert_eq!(s.grid(0.0, 5).unwrap(), vec![0.0, 1.0, 3.0, 7.0, 15.0]);
        assert_eq!(s.sigma(7.0).unwrap(), 15.0);
        assert!(TimeScale::affine(0.5, 1.0, 0.0).is_err());
        assert!(TimeScale::affine(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn point_lists_and_generators() {
        let s = TimeScale::from_points(vec![0.0, 1.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.sigma(1.0).unwrap(), 3.0);
        assert_eq!(s.rho(3.0).unwrap(), 1.0);
        assert_eq!(s.mu(1.0).unwrap(), 2.0);
        assert!(matches!(s.sigma(5.0), Err(Error::Horizon(_))));
        assert!(s.affine_params().is_none());
        assert!(TimeScale::from_points(vec![0.0, 2.0, 1.0]).is_err());

        let sq = TimeScale::from_sequence(PointSequence::from_fn(|n| Some((n * n) as f64))).unwrap();
        assert_eq!(sq.index_of(49.0).unwrap(), 7);
        assert_eq!(sq.sigma(49.0).unwrap(), 64.0);
        assert!(sq.index_of(50.0).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec: ScaleSpec = serde_json::from_str(r#"{"kind":"q","q":2.0,"anchor":1.0}"#).unwrap();
        let s = TimeScale::from_spec(&spec).unwrap();
        assert_eq!(s.to_spec().unwrap(), spec);
        assert!(serde_json::from_str::<ScaleSpec>(r#"{"kind":"q","q":2.0,"anchor":1.0,"x":1}"#).is_err());
    }
}
