use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timescale::{fit_condition_h, ScaleKind, TimeScale};

use super::Lagrangian;

/// Points inspected when checking the affine-jump condition on an explicit sequence.
const CONDITION_H_PROBE: usize = 64;
const CONDITION_H_TOL: f64 = 1e-9;

/// Truncation window, in scale-point indices counted from the anchor.
///
/// Truncation points are the indices `stride, 2·stride, …` not exceeding
/// `t_max_index`; every scale point up to `t_max_index` is sampled as `T′`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    #[serde(rename = "T_max_index")]
    pub t_max_index: usize,
    #[serde(rename = "T_grid_stride")]
    pub grid_stride: usize,
}

impl Horizon {
    pub fn new(t_max_index: usize, grid_stride: usize) -> Result<Self> {
        if grid_stride == 0 || grid_stride > t_max_index {
            return Err(Error::Argument(format!(
                "grid stride must lie in 1..={t_max_index}, got {grid_stride}"
            )));
        }
        Ok(Self {
            t_max_index,
            grid_stride,
        })
    }

    /// 200 points on additive scales, 40 on geometric ones.
    pub fn default_for(scale: &TimeScale) -> Self {
        let geometric = match scale.kind() {
            ScaleKind::QScale { .. } => true,
            ScaleKind::Affine { a1, .. } => *a1 != 1.0,
            ScaleKind::PointSequence(_) => false,
            ScaleKind::Integer | ScaleKind::HStep { .. } => false,
        };
        if geometric {
            Self {
                t_max_index: 40,
                grid_stride: 4,
            }
        } else {
            Self {
                t_max_index: 200,
                grid_stride: 20,
            }
        }
    }

    pub fn grid_indices(&self) -> Vec<usize> {
        (1..)
            .map(|j| j * self.grid_stride)
            .take_while(|&n| n <= self.t_max_index)
            .collect()
    }

    /// Truncation points `T` as times on `scale`.
    pub fn t_grid(&self, scale: &TimeScale) -> Result<Vec<f64>> {
        self.grid_indices().into_iter().map(|n| scale.point(n)).collect()
    }

    pub fn t_max(&self, scale: &TimeScale) -> Result<f64> {
        scale.point(self.t_max_index)
    }
}

/// An infinite-horizon problem of order `r`: maximise `∫_a^∞ L⟨x⟩^r Δt`
/// subject to `x^{Δ^i}(a) = α_i`, `i < r`.
#[derive(Clone, Debug)]
pub struct Problem {
    scale: TimeScale,
    order: usize,
    initial_conditions: Vec<f64>,
    lagrangian: Lagrangian,
    horizon: Horizon,
    a1: f64,
}

impl Problem {
    /// Validates order, initial data and, for `r ≥ 2`, the affine-jump condition.
    /// The start point is the scale anchor.
    pub fn new(scale: TimeScale, initial_conditions: Vec<f64>, lagrangian: Lagrangian) -> Result<Self> {
        let horizon = Horizon::default_for(&scale);
        Self::with_horizon(scale, initial_conditions, lagrangian, horizon)
    }

    pub fn with_horizon(
        scale: TimeScale,
        initial_conditions: Vec<f64>,
        lagrangian: Lagrangian,
        horizon: Horizon,
    ) -> Result<Self> {
        let order = lagrangian.order();
        if order == 0 {
            return Err(Error::Argument("order r must be positive".into()));
        }
        if initial_conditions.len() != order {
            return Err(Error::Argument(format!(
                "order {order} needs exactly {order} initial conditions, got {}",
                initial_conditions.len()
            )));
        }
        if let Some(bad) = initial_conditions.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("initial condition {bad} is not finite")));
        }
        if horizon.grid_stride == 0 || horizon.grid_stride > horizon.t_max_index {
            return Err(Error::Argument(format!(
                "grid stride must lie in 1..={}, got {}",
                horizon.t_max_index, horizon.grid_stride
            )));
        }
        let a1 = match scale.affine_params() {
            Some((a1, _)) => a1,
            None => {
                let pts: Vec<f64> = (0..CONDITION_H_PROBE)
                    .map_while(|n| scale.point(n).ok())
                    .collect();
                let fit = if pts.len() >= 3 {
                    Some(fit_condition_h(&pts)?)
                } else {
                    None
                };
                let magnitude = pts.iter().fold(1.0f64, |m, p| m.max(p.abs()));
                match fit {
                    Some(f) if f.holds(CONDITION_H_TOL * magnitude) => f.a1,
                    Some(f) if order >= 2 => {
                        return Err(Error::Precondition(format!(
                            "order {order} needs an affine forward jump; best fit leaves residual {:e}",
                            f.max_residual
                        )))
                    }
                    None if order >= 2 => {
                        return Err(Error::Precondition(format!(
                            "order {order} needs an affine forward jump; too few points to check"
                        )))
                    }
                    _ => 1.0,
                }
            }
        };
        Ok(Self {
            scale,
            order,
            initial_conditions,
            lagrangian,
            horizon,
            a1,
        })
    }

    pub fn scale(&self) -> &TimeScale {
        &self.scale
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn start(&self) -> f64 {
        self.scale.anchor()
    }

    pub fn initial_conditions(&self) -> &[f64] {
        &self.initial_conditions
    }

    pub fn lagrangian(&self) -> &Lagrangian {
        &self.lagrangian
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Slope of the forward jump; `1` for order-one problems on non-affine scales.
    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn set_horizon(&mut self, horizon: Horizon) -> Result<()> {
        self.horizon = Horizon::new(horizon.t_max_index, horizon.grid_stride)?;
        Ok(())
    }

    pub fn with_lagrangian(&self, lagrangian: Lagrangian) -> Result<Self> {
        Self::with_horizon(
            self.scale.clone(),
            self.initial_conditions.clone(),
            lagrangian,
            self.horizon,
        )
    }

    pub fn t_grid(&self) -> Result<Vec<f64>> {
        self.horizon.t_grid(&self.scale)
    }
}
