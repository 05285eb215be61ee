use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exprlang::{self, differentiate, Bindings, Expr, Var};

type LFn = Arc<dyn Fn(f64, &[f64]) -> Result<f64> + Send + Sync>;

/// `L(t, u0, …, ur)` together with its slot partials `∂_{i+2}L = ∂L/∂u_i`.
///
/// Partials come from symbolic differentiation when the Lagrangian is built
/// from an expression, from user closures when supplied, and otherwise from
/// symmetric differences with step `1e-6·(1+|u_i|)`.
#[derive(Clone)]
pub struct Lagrangian {
    order: usize,
    value: LFn,
    partials: Option<Vec<LFn>>,
    second: Option<Vec<Vec<LFn>>>,
    source: Option<String>,
}

impl fmt::Debug for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lagrangian")
            .field("order", &self.order)
            .field("source", &self.source)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

fn expr_fn(e: Expr) -> LFn {
    let e = Arc::new(e);
    Arc::new(move |t, u| e.eval(&Bindings::new(t, u)))
}

impl Lagrangian {
    /// Parses `source` over `t, u0 … u{order}` and differentiates it symbolically.
    pub fn parse(source: &str, order: usize) -> Result<Self> {
        let expr = exprlang::parse(source, order)?;
        let mut l = Self::from_expr(expr, order)?;
        l.source = Some(source.to_string());
        Ok(l)
    }

    pub fn from_expr(expr: Expr, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("order r must be positive".into()));
        }
        if let Some(k) = expr.max_slot() {
            if k > order {
                return Err(Error::Argument(format!(
                    "expression uses u{k} but the problem has slots u0..u{order}"
                )));
            }
        }
        let firsts: Vec<Expr> = (0..=order).map(|i| differentiate(&expr, Var::U(i))).collect();
        let second = firsts
            .iter()
            .map(|d| {
                (0..=order)
                    .map(|k| expr_fn(differentiate(d, Var::U(k))))
                    .collect()
            })
            .collect();
        let source = expr.to_string();
        Ok(Self {
            order,
            value: expr_fn(expr),
            partials: Some(firsts.into_iter().map(expr_fn).collect()),
            second: Some(second),
            source: Some(source),
        })
    }

    /// Closure-backed Lagrangian with finite-difference partials.
    pub fn from_fn<F>(order: usize, value: F) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        if order == 0 {
            return Err(Error::Argument("order r must be positive".into()));
        }
        Ok(Self {
            order,
            value: Arc::new(move |t, u| Ok(value(t, u))),
            partials: None,
            second: None,
            source: None,
        })
    }

    /// Supplies analytic partials `∂L/∂u_i`, one closure per slot.
    pub fn with_partials<F>(mut self, partials: Vec<F>) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        if partials.len() != self.order + 1 {
            return Err(Error::Argument(format!(
                "expected {} partials, got {}",
                self.order + 1,
                partials.len()
            )));
        }
        self.partials = Some(
            partials
                .into_iter()
                .map(|p| -> LFn { Arc::new(move |t, u: &[f64]| Ok(p(t, u))) })
                .collect(),
        );
        self.second = None;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    fn check_arity(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.order + 1 {
            return Err(Error::Argument(format!(
                "Lagrangian of order {} takes {} slot values, got {}",
                self.order,
                self.order + 1,
                u.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, t: f64, u: &[f64]) -> Result<f64> {
        self.check_arity(u)?;
        (self.value)(t, u)
    }

    /// `∂_{slot+2}L`, the derivative with respect to `u_slot`.
    pub fn partial(&self, slot: usize, t: f64, u: &[f64]) -> Result<f64> {
        self.check_arity(u)?;
        if slot > self.order {
            return Err(Error::Argument(format!(
                "slot {slot} exceeds order {}",
                self.order
            )));
        }
        match &self.partials {
            Some(p) => p[slot](t, u),
            None => self.fd_partial(slot, t, u),
        }
    }

    pub fn fd_partial(&self, slot: usize, t: f64, u: &[f64]) -> Result<f64> {
        let h = fd_step(u[slot]);
        let mut w = u.to_vec();
        w[slot] = u[slot] + h;
        let up = (self.value)(t, &w)?;
        w[slot] = u[slot] - h;
        let down = (self.value)(t, &w)?;
        Ok((up - down) / (2.0 * h))
    }

    /// `∂²L/∂u_slot∂u_k`, used only to size rounding errors.
    pub(crate) fn second_partial(&self, slot: usize, k: usize, t: f64, u: &[f64]) -> Result<f64> {
        if let Some(s) = &self.second {
            return s[slot][k](t, u);
        }
        let h = fd_step(u[k]);
        let mut w = u.to_vec();
        w[k] = u[k] + h;
        let up = self.partial(slot, t, &w)?;
        w[k] = u[k] - h;
        let down = self.partial(slot, t, &w)?;
        Ok((up - down) / (2.0 * h))
    }

    /// Largest relative gap between the partials in use and symmetric
    /// differences of the value at `(t, u)`.
    pub fn partials_consistency(&self, t: f64, u: &[f64]) -> Result<f64> {
        self.check_arity(u)?;
        let mut worst: f64 = 0.0;
        for slot in 0..=self.order {
            let a = self.partial(slot, t, u)?;
            let b = self.fd_partial(slot, t, u)?;
            worst = worst.max((a - b).abs() / (1.0 + a.abs().max(b.abs())));
        }
        Ok(worst)
    }

    /// `c·L`, keeping analytic partials.
    pub fn scaled(&self, c: f64) -> Self {
        let v = self.value.clone();
        let scale_fn = |f: LFn| -> LFn { Arc::new(move |t, u: &[f64]| Ok(c * f(t, u)?)) };
        Self {
            order: self.order,
            value: Arc::new(move |t, u| Ok(c * v(t, u)?)),
            partials: self
                .partials
                .as_ref()
                .map(|p| p.iter().cloned().map(scale_fn).collect()),
            second: self.second.as_ref().map(|s| {
                s.iter()
                    .map(|row| row.iter().cloned().map(scale_fn).collect())
                    .collect()
            }),
            source: self.source.as_ref().map(|s| format!("{c}*({s})")),
        }
    }
}
