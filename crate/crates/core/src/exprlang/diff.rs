use super::{Expr, Func, Var};

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Mul(bx(a), bx(b))
}

fn add(a: Expr, b: Expr) -> Expr {
    Expr::Add(bx(a), bx(b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(bx(a), bx(b))
}

fn div(a: Expr, b: Expr) -> Expr {
    Expr::Div(bx(a), bx(b))
}

fn pow(a: Expr, b: Expr) -> Expr {
    Expr::Pow(bx(a), bx(b))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, bx(a))
}

/// Symbolic derivative of `e` with respect to `var`, simplified.
///
/// `abs` differentiates to `sign`, with `sign(0) = 0`.
pub fn differentiate(e: &Expr, var: Var) -> Expr {
    simplify(&raw_derivative(e, var))
}

fn raw_derivative(e: &Expr, var: Var) -> Expr {
    let d = |x: &Expr| raw_derivative(x, var);
    match e {
        Expr::Num(_) => num(0.0),
        Expr::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => Expr::Neg(bx(d(a))),
        Expr::Add(a, b) => add(d(a), d(b)),
        Expr::Sub(a, b) => sub(d(a), d(b)),
        Expr::Mul(a, b) => add(mul(d(a), (**b).clone()), mul((**a).clone(), d(b))),
        Expr::Div(a, b) => div(
            sub(mul(d(a), (**b).clone()), mul((**a).clone(), d(b))),
            pow((**b).clone(), num(2.0)),
        ),
        Expr::Pow(a, b) => {
            let base_dep = a.depends_on(var);
            let exp_dep = b.depends_on(var);
            match (base_dep, exp_dep) {
                (false, false) => num(0.0),
                (true, false) => mul(
                    mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), num(1.0)))),
                    d(a),
                ),
                (false, true) => mul(mul(e.clone(), call(Func::Ln, (**a).clone())), d(b)),
                (true, true) => mul(
                    e.clone(),
                    add(
                        mul(d(b), call(Func::Ln, (**a).clone())),
                        div(mul((**b).clone(), d(a)), (**a).clone()),
                    ),
                ),
            }
        }
        Expr::Call(f, a) => {
            let inner = d(a);
            let outer = match f {
                Func::Ln => return div(inner, (**a).clone()),
                Func::Exp => e.clone(),
                Func::Sin => call(Func::Cos, (**a).clone()),
                Func::Cos => Expr::Neg(bx(call(Func::Sin, (**a).clone()))),
                Func::Abs => call(Func::Sign, (**a).clone()),
                Func::Sign => return num(0.0),
            };
            mul(outer, inner)
        }
    }
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    as_num(e) == Some(v)
}

/// Whether the leftmost factor of a product chain is a literal.
fn leads_with_num(e: &Expr) -> bool {
    match e {
        Expr::Num(_) => true,
        Expr::Mul(a, _) => leads_with_num(a),
        _ => false,
    }
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Num(v) => num(-v),
        Expr::Neg(a) => *a,
        Expr::Mul(a, b) if leads_with_num(&a) => Expr::Mul(bx(negate(*a)), b),
        other => Expr::Neg(bx(other)),
    }
}

fn folded(v: f64, fallback: Expr) -> Expr {
    if v.is_finite() {
        num(v)
    } else {
        fallback
    }
}

// Explicit float guards read better than float literal patterns here.
#[allow(clippy::redundant_guards)]
fn step(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => negate(step(a)),
        Expr::Add(a, b) => {
            let (a, b) = (step(a), step(b));
            match (as_num(&a), as_num(&b)) {
                (Some(x), Some(y)) => folded(x + y, add(a, b)),
                (Some(x), _) if x == 0.0 => b,
                (_, Some(y)) if y == 0.0 => a,
                _ => match b {
                    Expr::Neg(inner) => sub(a, *inner),
                    b => add(a, b),
                },
            }
        }
        Expr::Sub(a, b) => {
            let (a, b) = (step(a), step(b));
            match (as_num(&a), as_num(&b)) {
                (Some(x), Some(y)) => folded(x - y, sub(a, b)),
                (_, Some(y)) if y == 0.0 => a,
                (Some(x), _) if x == 0.0 => negate(b),
                _ => match b {
                    Expr::Neg(inner) => add(a, *inner),
                    b => sub(a, b),
                },
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (step(a), step(b));
            if is_num(&a, 0.0) || is_num(&b, 0.0) {
                return num(0.0);
            }
            if is_num(&a, 1.0) {
                return b;
            }
            if is_num(&b, 1.0) {
                return a;
            }
            if is_num(&a, -1.0) {
                return negate(b);
            }
            if is_num(&b, -1.0) {
                return negate(a);
            }
            match (a, b) {
                (Expr::Num(x), Expr::Num(y)) => folded(x * y, mul(num(x), num(y))),
                (Expr::Neg(x), y) => negate(mul(*x, y)),
                (x, Expr::Neg(y)) => negate(mul(x, *y)),
                // constants first, products left-associated
                (x, Expr::Num(y)) => mul(num(y), x),
                (x, Expr::Mul(y, z)) => mul(mul(x, *y), *z),
                (Expr::Mul(x, y), z) if !leads_with_num(&x) && leads_with_num(&z) => mul(mul(z, *x), *y),
                (x, y) => mul(x, y),
            }
        }
        Expr::Div(a, b) => {
            let (a, b) = (step(a), step(b));
            match (as_num(&a), as_num(&b)) {
                (Some(x), Some(y)) if y != 0.0 => folded(x / y, div(a, b)),
                (Some(x), _) if x == 0.0 => num(0.0),
                (_, Some(y)) if y == 1.0 => a,
                _ => match a {
                    Expr::Neg(inner) => negate(div(*inner, b)),
                    a => div(a, b),
                },
            }
        }
        Expr::Pow(a, b) => {
            let (a, b) = (step(a), step(b));
            match (as_num(&a), as_num(&b)) {
                (_, Some(y)) if y == 0.0 => num(1.0),
                (_, Some(y)) if y == 1.0 => a,
                (Some(x), Some(y)) if x > 0.0 || y.fract() == 0.0 => folded(x.powf(y), pow(a, b)),
                _ => pow(a, b),
            }
        }
        Expr::Call(f, a) => {
            let a = step(a);
            match (f, as_num(&a)) {
                (Func::Exp, Some(x)) if x == 0.0 => num(1.0),
                (Func::Sin, Some(x)) if x == 0.0 => num(0.0),
                (Func::Cos, Some(x)) if x == 0.0 => num(1.0),
                (Func::Ln, Some(x)) if x == 1.0 => num(0.0),
                _ => call(*f, a),
            }
        }
    }
}

/// Constant folding and identity elimination (`x+0`, `1*x`, `x^1`, …).
pub fn simplify(e: &Expr) -> Expr {
    let mut cur = e.clone();
    for _ in 0..16 {
        let next = step(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Bindings};
    use super::*;

    fn d(src: &str, var: Var) -> String {
        differentiate(&parse(src, 2).unwrap(), var).to_string()
    }

    #[test]
    fn example_partials_have_the_hand_computed_shape() {
        assert_eq!(d("-(u2)^2", Var::U(2)), "-2*u2");
        assert_eq!(d("-(u2)^2", Var::U(0)), "0");
        assert_eq!(d("-(u2)^2", Var::U(1)), "0");
        assert_eq!(d("-t*(1+u2^2)", Var::U(2)), "-2*t*u2");
        assert_eq!(d("-t*(1+u2^2)", Var::U(0)), "0");
    }

    #[test]
    fn simple_rules() {
        assert_eq!(d("t^3", Var::T), "3*t^2");
        assert_eq!(d("ln(t)", Var::T), "1/t");
        assert_eq!(d("exp(2*t)", Var::T), "2*exp(2*t)");
        assert_eq!(d("abs(u1)", Var::U(1)), "sign(u1)");
        assert_eq!(d("sign(t)", Var::T), "0");
    }

    #[test]
    fn simplify_folds_constants() {
        let e = parse("0*t + 1*(2+3)*u0 - 0", 0).unwrap();
        assert_eq!(simplify(&e).to_string(), "5*u0");
    }

    #[test]
    fn variable_exponent() {
        let e = parse("t^t", 0).unwrap();
        let de = differentiate(&e, Var::T);
        // d/dt t^t = t^t (ln t + 1)
        let v = de.eval(&Bindings::time(2.0)).unwrap();
        assert!((v - 4.0 * (2f64.ln() + 1.0)).abs() < 1e-12);
    }
}
