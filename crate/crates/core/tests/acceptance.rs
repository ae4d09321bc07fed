//! Acceptance suite: one PASS/FAIL line per criterion at the reference
//! configuration. `JUMPFLOW_ACCEPTANCE_PATHS` sets the number of fully
//! solved paths (default 20); convolution-only checks always use 200 and
//! 400 paths.

use std::process::ExitCode;
use std::time::Instant;

use jumpflow::io::config::{InitialDatum, SolverConfig};
use jumpflow::mild::{ball_radius, picard_solve_from};
use jumpflow::noise::{burkholder_check, convolution_path, JumpRecord};
use jumpflow::nonlinearity::trilinear;
use jumpflow::random::random_field;
use jumpflow::run::{run_single, simulate_path, Setup};
use jumpflow::verify::calibrate::{check_constants, sample_field, Constants};
use jumpflow::verify::report::AUDIT_REL_TOL;
use jumpflow::{FieldPath, SpectralField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CONSTANTS: &str = include_str!("data/constants_n64.json");
/// Criteria whose failure is documented and expected at the reference
/// configuration: Picard iterates leave the theoretical ball `B_M`.
const KNOWN_UNATTAINABLE: &[u32] = &[4];
const UNIQUENESS_PATHS: usize = 20;
const REFINEMENT_PATHS: usize = 3;
const MAX_PICARD_ITERATIONS: usize = 60;
const RATIO_LIMIT: f64 = 0.6;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        pass,
        detail,
    }
}

fn reference_constants() -> Constants {
    Constants::from_json(CONSTANTS).expect("checked-in constants parse")
}

fn path_count() -> usize {
    std::env::var("JUMPFLOW_ACCEPTANCE_PATHS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n >= REFINEMENT_PATHS)
        .unwrap_or(20)
}

fn trilinear_identities() -> Outcome {
    let grid = jumpflow::Grid::new(64).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7121 + i);
        let u = sample_field(grid, &mut rng);
        let v = sample_field(grid, &mut rng);
        let w = sample_field(grid, &mut rng);
        let (u4, v4, w4) = (u.l4_norm(), v.l4_norm(), w.l4_norm());
        let s_vv = u4 * v4 * v.grad_l2_norm();
        let s_vw = u4 * (v4 * w.grad_l2_norm() + w4 * v.grad_l2_norm());
        let a = trilinear(&u, &v, &v).unwrap().abs() / s_vv;
        let b = (trilinear(&u, &v, &w).unwrap() + trilinear(&u, &w, &v).unwrap()).abs() / s_vw;
        worst = worst.max(a).max(b);
    }
    outcome(
        1,
        "trilinear identities",
        worst <= 1e-10,
        format!("1000 triples, worst |b|/scale = {worst:.2e} (limit 1e-10)"),
    )
}

fn calibrated_inequalities(constants: &Constants) -> Outcome {
    let checks = check_constants(constants, constants.spec.seed + 1, 1000).unwrap();
    let pass = checks.iter().all(|c| c.violations == 0);
    let detail = checks
        .iter()
        .map(|c| format!("{} {}/{:.4}", c.name, c.violations, c.worst / c.bound))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        2,
        "calibrated inequalities",
        pass,
        format!("violations/worst fraction of bound on 1000 fresh inputs: {detail}"),
    )
}

fn stochastic_convolution(setup: &Setup) -> Outcome {
    let model = &setup.model;
    let time = setup.time;
    let seed = setup.config.seed;
    let b200 = burkholder_check(model, 200, time, seed).unwrap();
    let b400 = burkholder_check(model, 400, time, seed).unwrap();
    let finite = b400.samples.iter().all(|s| s.is_finite());
    let distance = b200.pooled_distance(&b400);

    // one jump of mark 1 at tau; symmetric marks have no compensator drift
    let tau = 0.3;
    let mut record = JumpRecord::empty(model.rate(), time.t1, 0);
    record.times = vec![tau];
    record.marks = vec![1.0];
    let z = convolution_path(model, &record, time).unwrap();
    let profile = model.profile(1.0);
    let grid = setup.grid;
    let scale = profile.max_abs_coeff();
    let mut single: f64 = 0.0;
    for m in 0..time.nodes() {
        let t = time.time(m);
        let (p1, p2) = profile.components();
        let (z1, z2) = z.node(m).components();
        for i in 0..grid.len() {
            let decay = if t >= tau {
                (-grid.k_squared(i) * (t - tau)).exp()
            } else {
                0.0
            };
            single = single
                .max((z1[i] - p1[i] * decay).norm() / scale)
                .max((z2[i] - p2[i] * decay).norm() / scale);
        }
    }
    outcome(
        3,
        "stochastic convolution",
        finite && single <= 1e-8 && distance <= 3.0,
        format!(
            "400 paths finite: {finite}; single jump rel. error {single:.1e} (limit 1e-8); \
             Burkholder ratio {:.4}+-{:.4} (200) vs {:.4}+-{:.4} (400), {distance:.2} pooled SE (limit 3)",
            b200.ratio, b200.ratio_std_err, b400.ratio, b400.ratio_std_err
        ),
    )
}

/// Per-path results of the fully solved paths.
#[derive(Default)]
struct Sweep {
    paths: usize,
    errors: Vec<String>,
    max_ratio: f64,
    max_iterations: usize,
    max_ball_fraction: f64,
    paths_outside_ball: usize,
    gaps: Vec<f64>,
    residuals: Vec<f64>,
    audit_failures: Vec<String>,
    worst_energy: f64,
    worst_gronwall: f64,
    worst_budget: f64,
    uniqueness: Vec<f64>,
}

fn solve_paths(setup: &Setup, paths: usize) -> Sweep {
    let mut s = Sweep {
        paths,
        worst_energy: f64::INFINITY,
        worst_gronwall: f64::INFINITY,
        worst_budget: f64::INFINITY,
        ..Default::default()
    };
    let m = ball_radius(setup.c_prime());
    let settings = setup.config.picard_settings(setup.c_prime());
    for i in 0..paths {
        let clock = Instant::now();
        let run = match simulate_path(setup, i) {
            Ok(run) => run,
            Err(e) => {
                s.errors.push(e.to_string());
                continue;
            }
        };
        let r = &run.report;
        s.max_ratio = s.max_ratio.max(r.max_contraction_ratio);
        s.max_iterations = s.max_iterations.max(r.max_picard_iterations);
        s.max_ball_fraction = s.max_ball_fraction.max(r.max_ball_fraction);
        if r.max_ball_fraction > 1.0 {
            s.paths_outside_ball += 1;
        }
        s.gaps.push(r.oracle_gap);
        s.residuals.push(r.mild_residual);
        s.worst_energy = s.worst_energy.min(r.energy.margin / r.energy.scale.max(f64::MIN_POSITIVE));
        s.worst_gronwall = s.worst_gronwall.min(r.gronwall.displayed_margin);
        s.worst_budget = s.worst_budget.min(r.gronwall.v_budget_margin);
        if !r.energy.holds(AUDIT_REL_TOL)
            || r.gronwall.displayed_margin < -AUDIT_REL_TOL
            || r.gronwall.v_budget_margin < -AUDIT_REL_TOL
        {
            s.audit_failures.push(format!("path {i}: {}", r.failures().join("; ")));
        }
        if i < UNIQUENESS_PATHS {
            // fixed point from Y^0 = 0 (the solver's own start) against one
            // from a random constant-in-time element of B_M of norm M/2
            let (y0, zhat) = run.solution.segment_paths(0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0x0411 + i as u64);
            let f = random_field(setup.grid, &mut rng, 1.0);
            let start = FieldPath::new(zhat.time_grid(), vec![f; zhat.time_grid().nodes()]).unwrap();
            let start = start.scaled(0.5 * m / start.l4l4_norm());
            match picard_solve_from(&zhat, start, &settings) {
                Ok(other) => s.uniqueness.push(y0.sub(&other.y).unwrap().l4l4_norm()),
                Err(e) => s.errors.push(format!("uniqueness probe on path {i}: {e}")),
            }
        }
        eprintln!(
            "  path {i}: {:.1}s, {} segment(s), ball fraction {:.2}, gap {:.2e}",
            clock.elapsed().as_secs_f64(),
            r.segment_steps.len(),
            r.max_ball_fraction,
            r.oracle_gap
        );
    }
    s
}

fn contraction(s: &Sweep) -> Outcome {
    let pass = s.errors.is_empty()
        && s.max_ratio <= RATIO_LIMIT
        && s.max_iterations <= MAX_PICARD_ITERATIONS
        && s.paths_outside_ball == 0;
    outcome(
        4,
        "Picard contraction",
        pass,
        format!(
            "{} paths, {} solver errors; max ratio {:.3} (limit {RATIO_LIMIT}); max iterations {} (limit {MAX_PICARD_ITERATIONS}); \
             iterate norms up to {:.2} M, {} paths outside B_M",
            s.paths,
            s.errors.len(),
            s.max_ratio,
            s.max_iterations,
            s.max_ball_fraction,
            s.paths_outside_ball
        ),
    )
}

/// Residual and oracle gap of the first paths at half the step.
fn refine(constants: &Constants) -> Vec<(f64, f64)> {
    let mut cfg = SolverConfig::default();
    cfg.dt *= 0.5;
    let setup = Setup::new(&cfg, constants.clone()).unwrap();
    (0..REFINEMENT_PATHS)
        .map(|i| {
            let r = simulate_path(&setup, i).unwrap().report;
            (r.mild_residual, r.oracle_gap)
        })
        .collect()
}

fn residual_order(s: &Sweep, fine: &[(f64, f64)]) -> Outcome {
    let ratios: Vec<f64> = fine
        .iter()
        .zip(&s.residuals)
        .map(|(f, c)| c / f.0)
        .collect();
    let pass = ratios.len() == REFINEMENT_PATHS && ratios.iter().all(|r| (1.6..=2.4).contains(r));
    outcome(
        5,
        "mild residual order",
        pass,
        format!(
            "residual at dt=1e-3: {}; halving ratios {} (limits 1.6..2.4)",
            s.residuals
                .iter()
                .take(REFINEMENT_PATHS)
                .map(|r| format!("{r:.3e}"))
                .collect::<Vec<_>>()
                .join(", "),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn oracle_gap(s: &Sweep, fine: &[(f64, f64)]) -> Outcome {
    let max_gap = s.gaps.iter().copied().fold(0.0, f64::max);
    let decreasing = fine.iter().zip(&s.gaps).all(|(f, c)| f.1 < *c);
    outcome(
        6,
        "cross-method oracle",
        s.errors.is_empty() && s.gaps.len() == s.paths && max_gap <= 0.05 && decreasing,
        format!(
            "max L4L4 gap {max_gap:.3e} over {} paths (limit 5e-2); at dt/2: {} (decreasing: {decreasing})",
            s.gaps.len(),
            fine.iter()
                .zip(&s.gaps)
                .map(|(f, c)| format!("{c:.2e}->{:.2e}", f.1))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn audits(s: &Sweep) -> Outcome {
    outcome(
        7,
        "energy and Gronwall audits",
        s.errors.is_empty() && s.audit_failures.is_empty(),
        format!(
            "{} failing paths; worst relative margins: energy {:.3e}, integrated bound {:.3e}, V budget {:.3e} (limit -1e-6){}",
            s.audit_failures.len(),
            s.worst_energy,
            s.worst_gronwall,
            s.worst_budget,
            if s.audit_failures.is_empty() {
                String::new()
            } else {
                format!("; {}", s.audit_failures.join(" | "))
            }
        ),
    )
}

fn exact_cases(constants: &Constants) -> Outcome {
    let mut cfg = SolverConfig {
        lambda: 0.0,
        u0: InitialDatum::TaylorGreen { amplitude: 1.0 },
        ..SolverConfig::default()
    };
    let setup = Setup::new(&cfg, constants.clone()).unwrap();
    let traj = simulate_path(&setup, 0).unwrap().trajectory();
    let u0 = traj.rows[0].u_l2;
    let tg = traj
        .rows
        .iter()
        .map(|r| {
            let exact = (-2.0 * r.t).exp() * u0;
            (r.u_l2 - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    cfg.u0 = InitialDatum::Zero;
    let setup = Setup::new(&cfg, constants.clone()).unwrap();
    let zero = simulate_path(&setup, 0)
        .unwrap()
        .solution
        .u
        .nodes()
        .iter()
        .map(SpectralField::max_abs_coeff)
        .fold(0.0, f64::max);
    outcome(
        8,
        "exact special cases",
        tg <= 1e-3 && zero == 0.0,
        format!("Taylor-Green decay rel. error {tg:.2e} (limit 1e-3); zero data max |u| = {zero:e}"),
    )
}

fn uniqueness(s: &Sweep, tol: f64) -> Outcome {
    let worst = s.uniqueness.iter().copied().fold(0.0, f64::max);
    outcome(
        9,
        "uniqueness probe",
        s.uniqueness.len() >= UNIQUENESS_PATHS.min(s.paths) && worst <= 4.0 * tol,
        format!(
            "{} paths, max ||Y_a - Y_b||_L4L4 = {worst:.2e} (limit 4 tol = {:.1e})",
            s.uniqueness.len(),
            4.0 * tol
        ),
    )
}

fn reproducibility(constants: &Constants) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let files = ["config.txt", "jumps.json", "trajectory.csv", "report.json", "snapshots/u_000050.jfld"];
    let out = dir.path().join("run");
    let run = || {
        let cfg = SolverConfig {
            horizon: 0.1,
            seed: 7,
            stride: 25,
            output: out.clone(),
            ..SolverConfig::default()
        };
        run_single(&cfg, constants.clone()).unwrap();
        let bytes = files.map(|f| std::fs::read(out.join(f)).unwrap());
        std::fs::remove_dir_all(&out).unwrap();
        bytes
    };
    let (a, b) = (run(), run());
    let differing: Vec<&str> = files
        .iter()
        .zip(a.iter().zip(&b))
        .filter(|(_, (x, y))| x != y)
        .map(|(f, _)| *f)
        .collect();
    outcome(
        10,
        "reproducibility",
        differing.is_empty(),
        format!("two runs of one config and seed, {} files compared; differing: {differing:?}", files.len()),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let constants = reference_constants();
    let config = SolverConfig::default();
    let setup = Setup::new(&config, constants.clone()).expect("reference setup");
    let paths = path_count();
    eprintln!("acceptance: {paths} solved paths at the reference configuration");
    let clock = Instant::now();
    let mut results = vec![
        trilinear_identities(),
        calibrated_inequalities(&constants),
        stochastic_convolution(&setup),
    ];
    let sweep = solve_paths(&setup, paths);
    let fine = refine(&constants);
    results.push(contraction(&sweep));
    results.push(residual_order(&sweep, &fine));
    results.push(oracle_gap(&sweep, &fine));
    results.push(audits(&sweep));
    results.push(exact_cases(&constants));
    results.push(uniqueness(&sweep, config.tol));
    results.push(reproducibility(&constants));
    results.sort_by_key(|r| r.id);

    let mut unexpected = 0;
    for r in &results {
        let known = KNOWN_UNATTAINABLE.contains(&r.id);
        let tag = match (r.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2} {tag}: {}: {}", r.id, r.name, r.detail);
        if !r.pass && !known {
            unexpected += 1;
        }
        if r.pass && known {
            println!("criterion {:>2} note: passed although listed as unattainable", r.id);
        }
    }
    if !sweep.errors.is_empty() {
        println!("solver errors: {}", sweep.errors.join(" | "));
    }
    println!(
        "acceptance: {} of {} criteria pass ({} unexpected failures) in {:.0}s",
        results.iter().filter(|r| r.pass).count(),
        results.len(),
        unexpected,
        clock.elapsed().as_secs_f64()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
