use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tsvar_core::solver::{parse_basis, solve_candidate, SolveReport};
use tsvar_core::variational::{
    admissibility_check, default_competitors, el_residual_with_scale, lagrangian_along, transversality_scan,
    weak_maximality_test, MaximalityReport, MaximalityVerdict, Verdict,
};
use tsvar_core::{ibp_terms, Error, Execution, Problem, Trajectory, TruncationScan};

use crate::config::{Loaded, ProblemConfig};
use crate::golden;
use crate::output::{to_json, write_atomic, write_report};
use crate::{CliError, Format, Outcome};

pub struct Context {
    pub out: PathBuf,
    pub k: Option<usize>,
    pub format: Format,
}

fn failure(e: Error) -> CliError {
    CliError::Failure(e.to_string())
}

#[derive(Debug, Serialize)]
pub struct KScan {
    pub k: usize,
    #[serde(flatten)]
    pub scan: TruncationScan,
}

#[derive(Debug, Serialize)]
pub struct ElSummary {
    /// Largest `|E-L residual|` over scale points `0..=T_max_index`.
    pub max_abs: f64,
    pub at: f64,
    pub lagrangian_scale: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub candidate: String,
    pub admissibility: Vec<f64>,
    pub admissible: bool,
    pub el_residual: ElSummary,
    pub transversality: Vec<KScan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_maximality: Option<MaximalityReport>,
    pub pass: bool,
}

pub fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::ConvergesToZero => "converges_to_zero",
        Verdict::ConvergesNonzero { .. } => "converges_nonzero",
        Verdict::Diverges { .. } => "diverges",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn scans_for(p: &Problem, x: &Trajectory, ks: &[usize]) -> Result<Vec<KScan>, CliError> {
    let grid = p.t_grid().map_err(failure)?;
    ks.iter()
        .map(|&k| {
            Ok(KScan {
                k,
                scan: transversality_scan(p, x, k, &grid, Execution::Parallel).map_err(failure)?,
            })
        })
        .collect()
}

pub fn verify_report(config: &ProblemConfig, p: &Problem) -> Result<VerifyReport, CliError> {
    let x = config.candidate()?;
    let tol = config.tolerances();
    let admissibility = admissibility_check(p, &x);
    let admissible = admissibility.iter().all(|r| r.abs() <= tol.admissibility);

    let window = p.horizon().t_max_index;
    let scale = p.scale();
    let rows: Vec<(f64, f64, f64)> = Execution::Parallel
        .map_range(0..window + 1, |n| -> Result<(f64, f64, f64), Error> {
            let t = scale.point(n)?;
            let (v, _) = el_residual_with_scale(p, &x, t)?;
            Ok((t, v, lagrangian_along(p, &x, t)?))
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(failure)?;
    let (mut max_abs, mut at, mut l_scale) = (0.0f64, rows[0].0, 0.0f64);
    for (t, v, l) in &rows {
        if v.abs() > max_abs {
            max_abs = v.abs();
            at = *t;
        }
        l_scale = l_scale.max(l.abs());
    }
    let bound = tol.el_residual * (1.0 + l_scale);
    let el_pass = max_abs <= bound;

    let ks: Vec<usize> = (1..=p.order()).collect();
    let transversality = scans_for(p, &x, &ks)?;
    let scans_pass = transversality.iter().all(|s| s.scan.verdict.is_zero());

    let weak_maximality = match &config.weak_maximality {
        None => None,
        Some(b) => {
            let mut competitors = if b.default_family {
                default_competitors(p, &x).map_err(failure)?
            } else {
                Vec::new()
            };
            competitors.extend(parse_basis(&b.competitors).map_err(|e| CliError::Config(e.to_string()))?);
            let grid = p.t_grid().map_err(failure)?;
            Some(weak_maximality_test(p, &x, &competitors, &grid, Execution::Parallel).map_err(failure)?)
        }
    };
    let battery_pass = weak_maximality
        .as_ref()
        .is_none_or(|r| r.verdict == MaximalityVerdict::NotRejected);

    Ok(VerifyReport {
        command: "verify",
        candidate: x.label().to_string(),
        admissibility,
        admissible,
        el_residual: ElSummary {
            max_abs,
            at,
            lagrangian_scale: l_scale,
            bound,
            pass: el_pass,
        },
        transversality,
        weak_maximality,
        pass: admissible && el_pass && scans_pass && battery_pass,
    })
}

fn print_or_summarize(ctx: &Context, json: &str, summary: impl FnOnce() -> String) {
    match ctx.format {
        Format::Json => print!("{json}"),
        Format::Csv => println!("{}", summary()),
    }
}

pub fn verify(loaded: &Loaded, ctx: &Context) -> Outcome {
    let report = verify_report(&loaded.config, &loaded.problem)?;
    let json = write_report(&ctx.out, &report)?;
    print_or_summarize(ctx, &json, || {
        let verdicts: Vec<String> = report
            .transversality
            .iter()
            .map(|s| format!("k={}: {}", s.k, verdict_name(&s.scan.verdict)))
            .collect();
        format!(
            "candidate {}: admissible={} max|E-L|={:e} {} -> {}",
            report.candidate,
            report.admissible,
            report.el_residual.max_abs,
            verdicts.join(", "),
            if report.pass { "PASS" } else { "FAIL" }
        )
    });
    Ok(report.pass)
}

#[derive(Debug, Serialize)]
struct SolveFailure {
    command: &'static str,
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    command: &'static str,
    trajectory: String,
    #[serde(flatten)]
    report: &'a SolveReport,
}

pub fn solve_report(config: &ProblemConfig, p: &Problem) -> Result<Result<SolveReport, Error>, CliError> {
    let solver = config
        .solver
        .as_ref()
        .filter(|s| !s.basis.is_empty())
        .ok_or_else(|| CliError::Usage("solve needs a nonempty solver.basis".into()))?;
    let basis = parse_basis(&solver.basis).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(solve_candidate(p, &basis, &config.solve_options()).map(|s| s.report))
}

fn describe(report: &SolveReport) -> String {
    report
        .basis
        .iter()
        .zip(&report.coefficients)
        .map(|(b, c)| format!("{c}*({b})"))
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn solve(loaded: &Loaded, ctx: &Context) -> Outcome {
    match solve_report(&loaded.config, &loaded.problem)? {
        Ok(report) => {
            let out = SolveOutput {
                command: "solve",
                trajectory: describe(&report),
                report: &report,
            };
            let json = write_report(&ctx.out, &out)?;
            print_or_summarize(ctx, &json, || {
                format!(
                    "x(t) = {}\nfamily_dim = {}, max|E-L| = {:e}, pinning objective = {:e}",
                    out.trajectory, report.family_dim, report.el_residual_norm, report.pinning_objective
                )
            });
            Ok(true)
        }
        Err(e) => {
            let best_coefficients = match &e {
                Error::Convergence { best, .. } => Some(best.clone()),
                _ => None,
            };
            let partial = SolveFailure {
                command: "solve",
                error: e.to_string(),
                best_coefficients,
            };
            write_report(&ctx.out, &partial)?;
            Err(CliError::Failure(format!("solve failed: {e}")))
        }
    }
}

#[derive(Debug, Serialize)]
struct ScanReport {
    command: &'static str,
    candidate: String,
    scans: Vec<KScan>,
}

pub fn scan(loaded: &Loaded, ctx: &Context) -> Outcome {
    let p = &loaded.problem;
    let x = loaded.config.candidate()?;
    let ks: Vec<usize> = match ctx.k {
        Some(k) if k == 0 || k > p.order() => {
            return Err(CliError::Usage(format!("--k must lie in 1..={}", p.order())))
        }
        Some(k) => vec![k],
        None => (1..=p.order()).collect(),
    };
    let scans = scans_for(p, &x, &ks)?;
    for s in &scans {
        write_atomic(&ctx.out, &format!("scan_k{}.csv", s.k), &s.scan.to_csv())?;
    }
    let report = ScanReport {
        command: "scan",
        candidate: x.label().to_string(),
        scans,
    };
    let json = write_report(&ctx.out, &report)?;
    match ctx.format {
        Format::Json => print!("{json}"),
        Format::Csv => {
            for s in &report.scans {
                print!("{}", s.scan.to_csv());
            }
        }
    }
    Ok(true)
}

pub const IBP_PAIRS: usize = 50;
pub const IBP_WINDOW: usize = 10;
pub const IBP_TOL: f64 = 1e-9;

#[derive(Debug, Serialize)]
struct IbpReport {
    command: &'static str,
    order: usize,
    pairs: usize,
    window_points: usize,
    max_relative_residual: f64,
    tolerance: f64,
    pass: bool,
}

fn random_polynomial(rng: &mut ChaCha8Rng, max_degree: usize) -> Trajectory {
    let degree = rng.gen_range(0..=max_degree);
    let coefs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let label = coefs
        .iter()
        .enumerate()
        .map(|(d, c)| format!("{c}*t^{d}"))
        .collect::<Vec<_>>()
        .join("+");
    Trajectory::new(label, move |t| coefs.iter().rev().fold(0.0, |acc, c| acc * t + c))
}

pub fn ibp_check(loaded: &Loaded, ctx: &Context) -> Outcome {
    let p = &loaded.problem;
    let scale = p.scale();
    let r = p.order();
    let mut rng = ChaCha8Rng::seed_from_u64(loaded.config.seed());
    let from = scale.point(0).map_err(failure)?;
    let to = scale.point(IBP_WINDOW).map_err(failure)?;
    let pairs: Vec<(Trajectory, Trajectory)> = (0..IBP_PAIRS)
        .map(|_| (random_polynomial(&mut rng, 4), random_polynomial(&mut rng, 4)))
        .collect();
    let worst = Execution::Parallel
        .map(&pairs, |(f, g)| -> Result<f64, Error> {
            let mut worst = 0.0f64;
            for i in 1..=r {
                worst = worst.max(ibp_terms(scale, f, g, from, to, r, i)?.relative_residual());
            }
            Ok(worst)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(failure)?
        .into_iter()
        .fold(0.0, f64::max);
    let report = IbpReport {
        command: "ibp-check",
        order: r,
        pairs: IBP_PAIRS,
        window_points: IBP_WINDOW,
        max_relative_residual: worst,
        tolerance: IBP_TOL,
        pass: worst <= IBP_TOL,
    };
    let json = write_report(&ctx.out, &report)?;
    print_or_summarize(ctx, &json, || {
        format!("max relative residual {worst:e} over {IBP_PAIRS} pairs, r = {r}")
    });
    Ok(report.pass)
}

pub fn examples(ctx: &Context) -> Outcome {
    let results = golden::run_all()?;
    let pass = results.iter().all(|r| r.diffs.is_empty());
    let report = golden::ExamplesReport {
        command: "examples",
        examples: results,
        pass,
    };
    let json = to_json(&report);
    write_atomic(&ctx.out, "report.json", &json)?;
    print_or_summarize(ctx, &json, || {
        report
            .examples
            .iter()
            .map(|e| {
                if e.diffs.is_empty() {
                    format!("{}: matches golden", e.name)
                } else {
                    format!("{}: {}", e.name, e.diffs.join("; "))
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    });
    Ok(pass)
}
