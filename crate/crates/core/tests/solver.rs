use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsvar_core::solver::{family_analysis, parse_basis, pin_family, solve_candidate};
use tsvar_core::variational::{
    default_competitors, is_admissible, transversality_scans, weak_maximality_test,
};
use tsvar_core::{Error, Execution, Lagrangian, Problem, SolveOptions, TimeScale, Trajectory, Verdict};

fn example1_on(scale: TimeScale) -> Problem {
    Problem::new(scale, vec![0.0, 1.0], Lagrangian::parse("-(u2)^2", 2).unwrap()).unwrap()
}

fn example2() -> Problem {
    Problem::new(
        TimeScale::q_scale(2.0, 1.0).unwrap(),
        vec![1.0, 2.0],
        Lagrangian::parse("-t*(1+u2^2)", 2).unwrap(),
    )
    .unwrap()
}

fn close(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

#[test]
fn pinning_is_independent_of_start() {
    let cases = [
        (
            example1_on(TimeScale::integer(0.0).unwrap()),
            vec!["t^3", "t^2", "t", "1"],
            [0.0, 0.0, 1.0, 0.0],
        ),
        (
            example2(),
            vec!["t^2", "t", "t*ln(t)", "1"],
            [0.0, 2.0, 0.0, -1.0],
        ),
    ];
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (p, basis, expected) in cases {
        let basis = parse_basis(&basis).unwrap();
        let family = family_analysis(&p, &basis, &opts).unwrap();
        assert_eq!(family.family_dim, 2);
        assert!(family.linear);
        for _ in 0..8 {
            let start: Vec<f64> = (0..family.family_dim)
                .map(|_| rng.gen_range(-10.0..10.0))
                .collect();
            let c = pin_family(&p, &basis, &start, &opts).unwrap();
            assert!(close(&c, &expected, 1e-6), "start {start:?} gave {c:?}");
        }
    }
}

#[test]
fn example1_on_fine_grids() {
    for h in [0.5, 0.1] {
        let p = example1_on(TimeScale::h_step(h, 0.0).unwrap());
        let basis = parse_basis(&["t^3", "t^2", "t", "1"]).unwrap();
        let sol = solve_candidate(&p, &basis, &SolveOptions::default()).unwrap();
        assert!(
            close(&sol.report.coefficients, &[0.0, 0.0, 1.0, 0.0], 1e-8),
            "h={h}: {:?}",
            sol.report.coefficients
        );
    }
}

#[test]
fn execution_modes_agree() {
    let p = example2();
    let basis = parse_basis(&["t^2", "t", "t*ln(t)", "1"]).unwrap();
    let seq = SolveOptions {
        exec: Execution::Sequential,
        ..SolveOptions::default()
    };
    let par = SolveOptions {
        exec: Execution::Parallel,
        ..SolveOptions::default()
    };
    let a = solve_candidate(&p, &basis, &seq).unwrap().report;
    let b = solve_candidate(&p, &basis, &par).unwrap().report;
    assert_eq!(a.coefficients, b.coefficients);

    let x = Trajectory::parse("2*t-1").unwrap();
    let grid = p.t_grid().unwrap();
    let comps = default_competitors(&p, &x).unwrap();
    assert_eq!(
        weak_maximality_test(&p, &x, &comps, &grid, Execution::Sequential).unwrap(),
        weak_maximality_test(&p, &x, &comps, &grid, Execution::Parallel).unwrap()
    );
}

#[test]
fn solved_candidates_pass_checks() {
    let p = example2();
    let basis = parse_basis(&["t^2", "t", "t*ln(t)", "1"]).unwrap();
    let sol = solve_candidate(&p, &basis, &SolveOptions::default()).unwrap();
    assert!(is_admissible(&p, &sol.ansatz.trajectory()));
    assert!(sol.report.el_residual_norm <= 1e-10);
    // Scans reach T = 2^40, where a coefficient error ε on t^2 shows up as
    // roughly ε·T^2. Only the recognized closed form can be scanned cleanly.
    let rounded: Vec<f64> = sol
        .report
        .coefficients
        .iter()
        .map(|c| (c * 1e9).round() / 1e9)
        .collect();
    let x = Trajectory::linear_combination(&basis, &rounded).unwrap();
    for scan in transversality_scans(&p, &x, Execution::Parallel).unwrap() {
        assert_eq!(scan.verdict, Verdict::ConvergesToZero);
    }
}

#[test]
fn conflicting_initial_conditions_are_infeasible() {
    // η = t(t-1)(t-2) has η(0) = η^Δ(0) = 0 on the integers, so x^Δ(0) = 1 is unreachable.
    let p = example1_on(TimeScale::integer(0.0).unwrap());
    let basis = parse_basis(&["1", "t*(t-1)*(t-2)"]).unwrap();
    let err = solve_candidate(&p, &basis, &SolveOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)), "{err}");
}

#[test]
fn seeds_give_reproducible_reports() {
    let p = example1_on(TimeScale::integer(0.0).unwrap());
    let basis = parse_basis(&["t^3", "t^2", "t", "1"]).unwrap();
    let opts = SolveOptions {
        seed: 17,
        ..SolveOptions::default()
    };
    let a = solve_candidate(&p, &basis, &opts).unwrap().report;
    let b = solve_candidate(&p, &basis, &opts).unwrap().report;
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
