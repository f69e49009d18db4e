//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test --release --test acceptance`. Every criterion is run
//! and reported. A failing criterion makes the process exit with a failure
//! status only when `ACCEPTANCE_STRICT` is set, so that `cargo test` still
//! runs the remaining test targets.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ocpfem::fem::{assemble_stiffness, local_mass, local_stiffness, Coefficient, QuadPolicy};
use ocpfem::optctrl::SolverOptions;
use ocpfem::problems::{build, BuildOptions, PROBLEM_NAMES};
use ocpfem::quadrature::quad_rule;
use ocpfem::study::{eoc_in_h, run_study, ConvergenceTable, NormName, StudyConfig};
use ocpfem::weights::a2_estimate;
use ocpfem::{Mesh, Weight};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Outcome { pass: false, detail: format!("error: {e}") }
    }
}

fn study(problem: &str, levels: std::ops::RangeInclusive<usize>, norms: &[NormName], alpha: Option<f64>) -> Result<(ConvergenceTable, Duration), String> {
    let mut cfg = StudyConfig { problem: problem.into(), levels: levels.collect(), norms: norms.to_vec(), ..Default::default() };
    if let Some(a) = alpha {
        cfg.build.alpha = a;
    }
    let start = Instant::now();
    let table = run_study(&cfg).map_err(|e| e.to_string())?;
    Ok((table, start.elapsed()))
}

fn in_bracket(v: Option<f64>, lo: f64, hi: f64) -> bool {
    v.is_some_and(|v| (lo..=hi).contains(&v))
}

fn show(v: &[Option<f64>]) -> String {
    let parts: Vec<String> = v.iter().map(|e| e.map_or("none".into(), |e| format!("{e:.4}"))).collect();
    format!("[{}]", parts.join(", "))
}

fn last(v: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    v[v.len().saturating_sub(n)..].to_vec()
}

fn table_criterion(problem: &str, state_bracket: (f64, f64), control_bracket: (f64, f64), budget: Option<Duration>) -> Outcome {
    let norms = [NormName::ControlL2, NormName::StateLinf];
    let (table, elapsed) = match study(problem, 2..=8, &norms, None) {
        Ok(t) => t,
        Err(e) => return Outcome::error(e),
    };
    let control = last(&table.eoc_column(NormName::ControlL2).unwrap_or_default(), 3);
    let state = last(&table.eoc_column(NormName::StateLinf).unwrap_or_default(), 3);
    let control_ok = control.iter().all(|&e| in_bracket(e, control_bracket.0, control_bracket.1));
    let state_ok = state.iter().all(|&e| in_bracket(e, state_bracket.0, state_bracket.1));
    let time_ok = budget.is_none_or(|b| elapsed <= b);
    Outcome::new(
        control_ok && state_ok && time_ok,
        format!("control L2 EOC {} state Linf EOC {} in {:.1} s", show(&control), show(&state), elapsed.as_secs_f64()),
    )
}

fn criterion_1() -> Outcome {
    table_criterion("point-obs-2d-1", (-1.00, -0.85), (-0.56, -0.46), Some(Duration::from_secs(300)))
}

fn criterion_2() -> Outcome {
    table_criterion("point-obs-2d-4", (-1.05, -0.92), (-0.58, -0.44), None)
}

fn criterion_3() -> Outcome {
    // Level 6 is the first level with at least 80k state unknowns.
    let (table, elapsed) = match study("point-obs-3d", 1..=6, &[NormName::ControlL2], None) {
        Ok(t) => t,
        Err(e) => return Outcome::error(e),
    };
    let eocs = table.eoc_column(NormName::ControlL2).unwrap_or_default();
    let tail = last(&eocs, 1);
    let dofs = table.rows.last().map_or(0, |r| r.dofs);
    Outcome::new(
        in_bracket(tail[0], -0.35, -0.17) && elapsed <= Duration::from_secs(900),
        format!("control L2 EOC {} (all levels {}) up to {dofs} state DOFs in {:.1} s", show(&tail), show(&eocs), elapsed.as_secs_f64()),
    )
}

fn criterion_4() -> Outcome {
    let (table, elapsed) = match study("point-source-2d", 2..=8, &[NormName::ControlL2Vec], None) {
        Ok(t) => t,
        Err(e) => return Outcome::error(e),
    };
    let errors = table.column(NormName::ControlL2Vec).unwrap_or_default();
    let eocs = last(&table.eoc_column(NormName::ControlL2Vec).unwrap_or_default(), 3);
    let ok = eocs.iter().all(|&e| in_bracket(e, -0.97, -0.82));
    let errs: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    Outcome::new(ok, format!("control EOC {} errors [{}] in {:.1} s", show(&eocs), errs.join(", "), elapsed.as_secs_f64()))
}

fn criterion_5() -> Outcome {
    let (table, _) = match study("weighted-elliptic", 3..=7, &[NormName::ControlWeightedL2], Some(0.5)) {
        Ok(t) => t,
        Err(e) => return Outcome::error(e),
    };
    let errors = table.column(NormName::ControlWeightedL2).unwrap_or_default();
    let h: Vec<f64> = table.rows.iter().map(|r| r.h).collect();
    match eoc_in_h(&errors, &h) {
        Ok(rates) => {
            let ok = rates.iter().all(|r| (r - 1.0).abs() <= 0.2);
            let shown: Vec<Option<f64>> = rates.iter().copied().map(Some).collect();
            Outcome::new(ok, format!("weighted control EOC in h {}", show(&shown)))
        }
        Err(e) => Outcome::error(e),
    }
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for name in PROBLEM_NAMES {
        let run = || -> ocpfem::Result<f64> {
            let setup = build(name, &BuildOptions::default())?;
            let mesh = Arc::new(Mesh::unit(setup.dim, 3)?);
            let inst = setup.problem.instantiate(mesh, SolverOptions::default())?;
            let pdas = inst.pdas_solve()?;
            let oracle = inst.projected_gradient_oracle(0.7, 1e-12, 100_000)?;
            let diff: Vec<f64> = pdas.control.values().iter().zip(oracle.values()).map(|(a, b)| a - b).collect();
            Ok(inst.control_norm(&diff))
        };
        match run() {
            Ok(d) => {
                worst = worst.max(d);
                parts.push(format!("{name} {d:.1e}"));
            }
            Err(e) => return Outcome::error(format!("{name}: {e}")),
        }
    }
    Outcome::new(worst <= 1e-8, parts.join(", "))
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for name in PROBLEM_NAMES {
        let report = build(name, &BuildOptions::default()).and_then(|s| s.residual_audit(1000, 7));
        match report {
            Ok(r) => {
                worst = worst.max(r.max());
                parts.push(format!("{name} {:.1e} ({} pts)", r.max(), r.points));
            }
            Err(e) => return Outcome::error(format!("{name}: {e}")),
        }
    }
    Outcome::new(worst <= 1e-10, parts.join(", "))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `∫ x^a` over the reference simplex: `a! / (n + |a|)!`.
fn monomial_exact(powers: &[u32]) -> f64 {
    let total: u32 = powers.iter().sum();
    powers.iter().map(|&p| factorial(p)).product::<f64>() / factorial(powers.len() as u32 + total)
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for (dim, degree) in [(2usize, 19u32), (3, 14)] {
        let rule = match quad_rule::<f64>(dim, degree as usize) {
            Ok(r) => r,
            Err(e) => return Outcome::error(e),
        };
        let mut powers = vec![0u32; dim];
        loop {
            if powers.iter().sum::<u32>() <= degree {
                let approx = rule.integrate_reference(|x| powers.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product());
                let exact = monomial_exact(&powers);
                worst = worst.max((approx - exact).abs() / exact);
            }
            // odometer over exponent tuples
            let mut k = 0;
            while k < dim {
                powers[k] += 1;
                if powers[k] <= degree {
                    break;
                }
                powers[k] = 0;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
    }
    Outcome::new(worst <= 1e-12, format!("worst relative monomial error {worst:.2e}"))
}

/// Closed-form P1 stiffness of a path simplex `v_k = v_{k-1} + e_{σ(k)}`:
/// `λ_0 = 1 − x_{σ1}`, `λ_k = x_{σk} − x_{σ(k+1)}`, `λ_n = x_{σn}`.
fn path_simplex_stiffness(order: &[usize]) -> Vec<Vec<f64>> {
    let n = order.len();
    let mut grads = vec![vec![0.0; n]; n + 1];
    grads[0][order[0]] = -1.0;
    for k in 1..n {
        grads[k][order[k - 1]] = 1.0;
        grads[k][order[k]] = -1.0;
    }
    grads[n][order[n - 1]] = 1.0;
    let vol = 1.0 / factorial(n as u32);
    (0..=n).map(|i| (0..=n).map(|j| vol * (0..n).map(|d| grads[i][d] * grads[j][d]).sum::<f64>()).collect()).collect()
}

fn criterion_9() -> Outcome {
    let mut worst = 0.0f64;
    for dim in [2usize, 3] {
        let mesh = match Mesh::unit(dim, 0) {
            Ok(m) => m,
            Err(e) => return Outcome::error(e),
        };
        // recover the axis order of cell 0 from its vertices
        let cell = mesh.cell(0).to_vec();
        let mut order = Vec::new();
        for k in 1..=dim {
            let (a, b) = (mesh.vertex(cell[k - 1]), mesh.vertex(cell[k]));
            let step: Vec<usize> = (0..dim).filter(|&d| (b[d] - a[d] - 1.0).abs() < 1e-15).collect();
            if step.len() != 1 || mesh.vertex(cell[0]).iter().any(|&x| x != 0.0) {
                return Outcome::new(false, format!("cell 0 of the {dim}D mesh is not a path simplex from the origin"));
            }
            order.push(step[0]);
        }
        let expect = path_simplex_stiffness(&order);
        let k = match local_stiffness(&mesh, 0) {
            Ok(k) => k,
            Err(e) => return Outcome::error(e),
        };
        let m = local_mass(&mesh, 0);
        let vol = 1.0 / factorial(dim as u32);
        let denom = ((dim + 1) * (dim + 2)) as f64;
        for i in 0..=dim {
            for j in 0..=dim {
                worst = worst.max((k[i][j] - expect[i][j]).abs());
                let mass = vol * if i == j { 2.0 } else { 1.0 } / denom;
                worst = worst.max((m[i][j] - mass).abs());
            }
        }
    }
    let diag = Mesh::unit(2, 1)
        .and_then(|m| assemble_stiffness(&m, &Coefficient::Unit, &QuadPolicy::Fixed).map(|k| (m, k)))
        .map(|(m, k)| {
            let centre = (0..m.num_vertices()).find(|&v| !m.is_boundary(v)).expect("one interior vertex");
            k.get(centre, centre)
        });
    match diag {
        Ok(d) => Outcome::new(
            worst <= 1e-14 && (d - 4.0).abs() <= 1e-14,
            format!("local matrix deviation {worst:.1e}, level-1 interior diagonal {d}"),
        ),
        Err(e) => Outcome::error(e),
    }
}

fn criterion_10() -> Outcome {
    let centre = vec![0.5, 0.5];
    let unit = a2_estimate(&Weight::unit(2), 64, 1e-2, 3).map(|e| e.sampled_constant);
    let unit_ok = matches!(unit, Ok(v) if (v - 1.0).abs() <= 1e-10);
    let unit_txt = match &unit {
        Ok(v) => format!("unit {v:.12}"),
        Err(e) => format!("unit error: {e}"),
    };

    let stable = Weight::power(centre.clone(), 0.5).and_then(|w| {
        let a = a2_estimate(&w, 512, 1e-2, 5)?.sampled_constant;
        let b = a2_estimate(&w, 1024, 1e-2, 5)?.sampled_constant;
        Ok((a, b))
    });
    let stable_ok = matches!(stable, Ok((a, b)) if ((b - a) / a).abs() < 0.05);
    let stable_txt = match &stable {
        Ok((a, b)) => format!("α=0.5 {a:.4} → {b:.4}"),
        Err(e) => format!("α=0.5 error: {e}"),
    };

    let singular = Weight::power_unchecked(centre, -2.0);
    let growth = a2_estimate(&singular, 512, 1e-2, 5)
        .and_then(|a| Ok((a.sampled_constant, a2_estimate(&singular, 512, 1e-3, 5)?.sampled_constant)));
    let growth_ok = matches!(growth, Ok((a, b)) if b >= 2.0 * a);
    let growth_txt = match &growth {
        Ok((a, b)) => format!("α=-2 {a:.4} → {b:.4}"),
        Err(e) => format!("α=-2 error: {e}"),
    };

    Outcome::new(unit_ok && stable_ok && growth_ok, format!("{unit_txt}; {stable_txt}; {growth_txt}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("2D one observation point convergence", criterion_1),
        ("2D four observation points convergence", criterion_2),
        ("3D observation convergence", criterion_3),
        ("2D point source convergence", criterion_4),
        ("weighted problem first-order convergence", criterion_5),
        ("PDAS agrees with projected gradient", criterion_6),
        ("manufactured-solution residual audit", criterion_7),
        ("quadrature exactness sweep", criterion_8),
        ("assembly oracles", criterion_9),
        ("A2 diagnostic behaviour", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        if !outcome.pass {
            failures += 1;
        }
        println!("criterion {:>2} {} — {name}: {}", i + 1, if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 || std::env::var_os("ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
