use std::sync::Arc;

use ocpfem::optctrl::SolverOptions;
use ocpfem::problems::{build, BuildOptions, PROBLEM_NAMES};
use ocpfem::Mesh;

#[test]
fn pdas_solutions_satisfy_the_optimality_system() {
    for name in PROBLEM_NAMES {
        let setup = build(name, &BuildOptions::default()).unwrap();
        let mesh = Arc::new(Mesh::unit(setup.dim, 2).unwrap());
        let inst = setup.problem.instantiate(mesh, SolverOptions::default()).unwrap();
        let r = inst.pdas_solve().unwrap();
        let u = r.control.values();
        assert!(inst.vi_violation(u, &r.adjoint.coeffs) <= 1e-9, "{name}");
        let (rs, ra) = inst.system_residuals(u, &r.state.coeffs, &r.adjoint.coeffs).unwrap();
        assert!(rs <= 1e-9 && ra <= 1e-9, "{name}: {rs:e} {ra:e}");
        for (i, &v) in u.iter().enumerate() {
            assert!(v >= inst.lower()[i] - 1e-14 && v <= inst.upper()[i] + 1e-14, "{name}");
        }
        let oracle = inst.projected_gradient_oracle(0.7, 1e-12, 100_000).unwrap();
        let diff: Vec<f64> = u.iter().zip(oracle.values()).map(|(a, b)| a - b).collect();
        assert!(inst.control_norm(&diff) <= 10.0 * inst.options().tol, "{name}");
    }
}

#[test]
fn pdas_cost_does_not_exceed_cost_of_other_admissible_controls() {
    let setup = build("weighted-elliptic", &BuildOptions::default()).unwrap();
    let mesh = Arc::new(Mesh::unit(2, 3).unwrap());
    let inst = setup.problem.instantiate(mesh, SolverOptions::default()).unwrap();
    let r = inst.pdas_solve().unwrap();
    let best = inst.reduced_cost(r.control.values(), &r.state.coeffs).unwrap();
    for shift in [-0.05, 0.02, 0.1] {
        let u: Vec<f64> = r
            .control
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v + shift).clamp(inst.lower()[i], inst.upper()[i]))
            .collect();
        let y = inst.state_coeffs(&u, None).unwrap();
        assert!(inst.reduced_cost(&u, &y).unwrap() >= best - 1e-12);
    }
}

#[test]
fn solution_does_not_depend_on_initial_active_sets() {
    let setup = build("point-obs-2d-4", &BuildOptions::default()).unwrap();
    let mesh = Arc::new(Mesh::unit(2, 3).unwrap());
    let inst = setup.problem.instantiate(mesh, SolverOptions::default()).unwrap();
    let a = inst.pdas_solve().unwrap();
    let all: Vec<usize> = (0..inst.num_controls()).collect();
    let b = inst.pdas_solve_from(&all, &[]).unwrap();
    let diff: Vec<f64> = a.control.values().iter().zip(b.control.values()).map(|(x, y)| x - y).collect();
    assert!(inst.control_norm(&diff) <= 1e-9);
}
