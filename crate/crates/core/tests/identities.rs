use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsvar_core::variational::el_residual;
use tsvar_core::{Lagrangian, Problem, TimeScale, Trajectory};

const L_SRC: &str = "-(u1 - t)^2 + 0.3*sin(u0)*t - 0.1*u0*u1";

fn truncated_sum(l: &Lagrangian, x: &[f64]) -> f64 {
    (0..x.len() - 1)
        .map(|t| l.value(t as f64, &[x[t + 1], x[t + 1] - x[t]]).unwrap())
        .sum()
}

/// On the integers with r = 1 the E-L residual at τ − 1 is `∂/∂x(τ)` of the
/// truncated sum `Σ_{t<N} L(t, x(t+1), x(t+1) − x(t))`.
#[test]
fn euler_lagrange_is_the_discrete_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let l = Lagrangian::parse(L_SRC, 1).unwrap();
    let p = Problem::new(TimeScale::integer(0.0).unwrap(), vec![0.0], l.clone()).unwrap();
    for n in 4..=10 {
        let coefs: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let c = coefs.clone();
        let x = Trajectory::new("x", move |t| c.iter().rev().fold(0.0, |a, k| a * t + k));
        let values: Vec<f64> = (0..=n).map(|t| x.eval(t as f64).unwrap()).collect();
        for tau in 1..n {
            let h = 1e-6 * (1.0 + values[tau].abs());
            let mut up = values.clone();
            up[tau] += h;
            let mut down = values.clone();
            down[tau] -= h;
            let fd = (truncated_sum(&l, &up) - truncated_sum(&l, &down)) / (2.0 * h);
            let el = el_residual(&p, &x, (tau - 1) as f64).unwrap();
            assert!(
                (fd - el).abs() <= 1e-6 * fd.abs().max(1.0),
                "N={n}, τ={tau}: {fd} vs {el}"
            );
        }
    }
}

#[test]
fn euler_lagrange_scales_with_the_lagrangian() {
    let ts = TimeScale::q_scale(2.0, 1.0).unwrap();
    let l = Lagrangian::parse("t*u2^2 - u0*u1 + cos(u1)", 2).unwrap();
    let x = Trajectory::parse("t^3 - 2*t + ln(t)").unwrap();
    for c in [-3.0, 0.5, 7.25] {
        let p = Problem::new(ts.clone(), vec![0.0, 0.0], l.clone()).unwrap();
        let q = Problem::new(ts.clone(), vec![0.0, 0.0], l.scaled(c)).unwrap();
        for n in 0..8 {
            let t = ts.point(n).unwrap();
            let base = el_residual(&p, &x, t).unwrap();
            let scaled = el_residual(&q, &x, t).unwrap();
            assert!((scaled - c * base).abs() <= 1e-12 * (c * base).abs().max(1.0));
        }
    }
}

#[test]
fn unit_slope_scales_use_the_plain_alternating_sum() {
    // With a1 = 1 every coefficient is ±1: E-L = ∂_{u0}L − Δ∂_{u1}L + Δ²∂_{u2}L.
    let ts = TimeScale::h_step(0.5, 0.0).unwrap();
    let l = Lagrangian::parse("u0^2 + t*u1^2 - u2^3", 2).unwrap();
    let p = Problem::new(ts.clone(), vec![0.0, 0.0], l).unwrap();
    let x = |t: f64| t * t - 0.5 * t + 1.0;
    let xt = Trajectory::new("x", x);
    let h = 0.5;
    let d = |f: &dyn Fn(f64) -> f64, t: f64| (f(t + h) - f(t)) / h;
    let slots = |t: f64| {
        let u0 = x(t + 2.0 * h);
        let u1 = d(&|s| x(s + h), t);
        let u2 = d(&|s| d(&x, s), t);
        (u0, u1, u2)
    };
    let p0 = |t: f64| 2.0 * slots(t).0;
    let p1 = |t: f64| 2.0 * t * slots(t).1;
    let p2 = |t: f64| -3.0 * slots(t).2.powi(2);
    for n in 0..6 {
        let t = n as f64 * h;
        let want = p0(t) - d(&p1, t) + d(&|s| d(&p2, s), t);
        let got = el_residual(&p, &xt, t).unwrap();
        assert!(
            (got - want).abs() <= 1e-10 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }
}
