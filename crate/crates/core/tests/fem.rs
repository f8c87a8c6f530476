mod common;

use common::{dense_solve, dot, gauss_stiffness, symmetric_eigenvalues, Lcg};
use topocnn::fem::*;
use topocnn::problems::{evaluate_compliance_design, solve_cantilever, ComplianceConfig};
use topocnn::Error;

fn to_rows(k: &Matrix8) -> Vec<Vec<f64>> {
    k.iter().map(|r| r.to_vec()).collect()
}

#[test]
fn stiffness_matches_gauss_integration() {
    for nu in [0.0, 0.1, 0.25, 0.3, 0.45, 0.49] {
        let m = Material { nu, ..Material::default() };
        let ke = element_stiffness(&m).unwrap();
        let oracle = gauss_stiffness(1.0, nu);
        for i in 0..8 {
            for j in 0..8 {
                assert!((ke[i][j] - oracle[i][j]).abs() < 1e-12, "nu={nu} ({i},{j})");
            }
        }
    }
}

#[test]
fn stiffness_matches_published_88_line_values() {
    let nu = 0.3;
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    let idx = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let ke = element_stiffness(&Material::default()).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let published = k[idx[i][j]] / (1.0 - nu * nu);
            assert!((ke[i][j] - published).abs() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn stiffness_symmetry_rigid_modes_and_psd() {
    for nu in [0.0, 0.2, 0.3, 0.4] {
        let ke = element_stiffness(&Material { nu, ..Material::default() }).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(ke[i][j], ke[j][i]);
            }
        }
        let tx = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ty = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        // rotation about the origin: u = (-y, x) at (0,0), (1,0), (1,1), (0,1)
        let rot = [0.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 0.0];
        for mode in [tx, ty, rot] {
            for row in &ke {
                assert!(dot(row, &mode).abs() < 1e-14);
            }
        }
        let ev = symmetric_eigenvalues(&to_rows(&ke));
        assert!(ev.iter().all(|&v| v >= -1e-10), "{ev:?}");
        assert_eq!(ev.iter().filter(|v| v.abs() < 1e-10).count(), 3, "{ev:?}");
    }
}

#[test]
fn single_element_matches_dense_elimination() {
    let g = Grid::new(1, 1).unwrap();
    let m = Material::default();
    let ke = element_stiffness(&m).unwrap();
    let rho = DensityField::uniform(g, 1.0).unwrap();
    let k = assemble(&rho, 3.0, &m, &ke).unwrap();
    let left: Vec<usize> = [g.node(0, 0), g.node(0, 1)].iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
    let mut f = vec![0.0; g.n_dofs()];
    f[2 * g.node(1, 0)] = 1.0;
    f[2 * g.node(1, 1)] = 1.0;

    // oracle: element-local stiffness from Gauss integration, free DOFs BR, TR
    let oracle_k = gauss_stiffness(1.0, 0.3);
    let free_local = [2, 3, 4, 5];
    let a: Vec<Vec<f64>> = free_local.iter().map(|&i| free_local.iter().map(|&j| oracle_k[i][j]).collect()).collect();
    let u_local = dense_solve(&a, &[1.0, 0.0, 1.0, 0.0]);
    let edofs = g.element_dofs(0, 0);

    for method in [SolveMethod::Direct, SolveMethod::Pcg { tol: 1e-12 }] {
        let u = SpdSolver::new(k.clone(), &left, method).unwrap().solve(&f).unwrap();
        for (li, &gi) in free_local.iter().zip(&[edofs[2], edofs[3], edofs[4], edofs[5]]) {
            let _ = li;
            let expected = u_local[free_local.iter().position(|x| x == li).unwrap()];
            assert!((u[gi] - expected).abs() < 1e-9, "{method:?} dof {gi}: {} vs {expected}", u[gi]);
        }
        for &d in &left {
            assert_eq!(u[d], 0.0);
        }
        let (c, _) = compliance(&u, &rho, 3.0, &m, &ke).unwrap();
        assert!((c - dot(&f, &u)).abs() <= 1e-8 * c);
    }
}

#[test]
fn zero_load_gives_zero_displacement() {
    let g = Grid::new(3, 2).unwrap();
    let m = Material::default();
    let ke = element_stiffness(&m).unwrap();
    let k = assemble(&DensityField::uniform(g, 0.7).unwrap(), 3.0, &m, &ke).unwrap();
    let sys = LinearSystem {
        matrix: k,
        rhs: vec![0.0; g.n_dofs()],
        fixed: (0..6).map(|d| (d, 0.0)).collect(),
    };
    let u = solve_spd(&sys, DEFAULT_TOL).unwrap();
    assert!(u.iter().all(|&v| v == 0.0));
    let (c, ce) = compliance(&u, &DensityField::uniform(g, 0.7).unwrap(), 3.0, &m, &ke).unwrap();
    assert_eq!(c, 0.0);
    assert!(ce.iter().all(|&v| v == 0.0));
}

fn random_system(rng: &mut Lcg, rho_min: f64) -> (Grid, DensityField, CsrMatrix, Vec<usize>, Vec<f64>) {
    let g = Grid::new(1 + rng.below(8), 1 + rng.below(8)).unwrap();
    let rho = DensityField::new(g, (0..g.n_elements()).map(|_| rng.range(rho_min, 1.0)).collect()).unwrap();
    let m = Material::default();
    let k = assemble(&rho, 3.0, &m, &element_stiffness(&m).unwrap()).unwrap();
    let fixed: Vec<usize> = (0..=g.nely()).flat_map(|r| [2 * g.node(0, r), 2 * g.node(0, r) + 1]).collect();
    let mut f: Vec<f64> = (0..g.n_dofs()).map(|_| rng.range(-1.0, 1.0)).collect();
    for &d in &fixed {
        f[d] = 0.0;
    }
    (g, rho, k, fixed, f)
}

/// Checks the residual and energy contracts; returns false when the system
/// sits at the floating-point floor set by the SIMP stiffness contrast, in
/// which case the contracts are checked against that floor instead.
fn check_solution(case: usize, k: &CsrMatrix, f: &[f64], fixed: &[usize], u: &[f64], rho: &DensityField, sys: &LinearSystem) -> bool {
    for &d in fixed {
        assert_eq!(u[d], 0.0);
    }
    let k_norm = (0..k.n()).map(|i| k.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let u_norm = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let b_norm = dot(f, f).sqrt();
    let floor = 1e3 * f64::EPSILON * k_norm * u_norm / b_norm;
    let res = relative_residual(sys, u);
    let ok = res <= 1e-8;
    assert!(ok || res <= floor, "case {case}: residual {res}, floor {floor}");

    let m = Material::default();
    let ke = element_stiffness(&m).unwrap();
    let fu = dot(f, u);
    let uku = dot(u, &k.mul_vec(u));
    let tol = if ok { 1e-8 } else { 1e-8f64.max(floor) };
    assert!((fu - uku).abs() <= tol * fu.abs(), "case {case}: {fu} vs {uku}");
    let (c, _) = compliance(u, rho, 3.0, &m, &ke).unwrap();
    assert!(c >= 0.0 && (c - fu).abs() <= tol * fu.abs());
    ok
}

#[test]
fn randomized_direct_solves_meet_residual_and_energy_contracts() {
    let mut rng = Lcg(7);
    let mut within_tol = 0;
    for case in 0..1000 {
        let (_, rho, k, fixed, f) = random_system(&mut rng, 0.0);
        assert_eq!(k.asymmetry(), 0.0);
        let sys = LinearSystem {
            matrix: k.clone(),
            rhs: f.clone(),
            fixed: fixed.iter().map(|&d| (d, 0.0)).collect(),
        };
        let u = solve_system(&sys, SolveMethod::Direct).unwrap();
        within_tol += check_solution(case, &k, &f, &fixed, &u, &rho, &sys) as usize;
    }
    assert!(within_tol >= 990, "{within_tol} of 1000 within tolerance");
}

#[test]
fn randomized_pcg_solves_meet_residual_contract() {
    let mut rng = Lcg(11);
    for case in 0..1000 {
        let (_, rho, k, fixed, f) = random_system(&mut rng, 0.05);
        let sys = LinearSystem {
            matrix: k.clone(),
            rhs: f.clone(),
            fixed: fixed.iter().map(|&d| (d, 0.0)).collect(),
        };
        let u = solve_spd(&sys, DEFAULT_TOL).unwrap();
        assert!(check_solution(case, &k, &f, &fixed, &u, &rho, &sys), "case {case}");
    }
}

#[test]
fn displacement_is_linear_in_load() {
    let mut rng = Lcg(99);
    for _ in 0..20 {
        let (_, _, k, fixed, f) = random_system(&mut rng, 0.0);
        let solver = SpdSolver::new(k, &fixed, SolveMethod::Direct).unwrap();
        let u = solver.solve(&f).unwrap();
        let alpha = 3.7;
        let scaled: Vec<f64> = f.iter().map(|v| v * alpha).collect();
        let ua = solver.solve(&scaled).unwrap();
        let norm = dot(&u, &u).sqrt();
        let diff: f64 = u.iter().zip(&ua).map(|(a, b)| (alpha * a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff <= 1e-10 * alpha * norm);
    }
}

#[test]
fn prescribed_values_are_honored() {
    let g = Grid::new(4, 2).unwrap();
    let m = Material::default();
    let k = assemble(&DensityField::uniform(g, 1.0).unwrap(), 3.0, &m, &element_stiffness(&m).unwrap()).unwrap();
    let mut fixed: Vec<(usize, f64)> = (0..=2).flat_map(|r| [(2 * g.node(0, r), 0.0), (2 * g.node(0, r) + 1, 0.0)]).collect();
    fixed.push((2 * g.node(4, 1), 0.01));
    let sys = LinearSystem {
        matrix: k,
        rhs: vec![0.0; g.n_dofs()],
        fixed: fixed.clone(),
    };
    for method in [SolveMethod::Direct, SolveMethod::Pcg { tol: 1e-10 }] {
        let u = solve_system(&sys, method).unwrap();
        for &(d, v) in &fixed {
            assert_eq!(u[d], v);
        }
        assert!(relative_residual(&sys, &u) <= 1e-8);
    }
}

#[test]
fn simp_assembly_scaling() {
    let g = Grid::new(2, 2).unwrap();
    let m = Material::default();
    let ke = element_stiffness(&m).unwrap();
    let full = assemble(&DensityField::uniform(g, 1.0).unwrap(), 3.0, &m, &ke).unwrap();
    let half = assemble(&DensityField::uniform(g, 0.5).unwrap(), 3.0, &m, &ke).unwrap();
    let void = assemble(&DensityField::uniform(g, 0.0).unwrap(), 3.0, &m, &ke).unwrap();
    let factor = m.emin + 0.125 * (m.e0 - m.emin);
    for i in 0..g.n_dofs() {
        for j in 0..g.n_dofs() {
            let v = full.get(i, j);
            assert!((half.get(i, j) - factor * v).abs() <= 1e-15 * v.abs().max(1.0));
            assert!((void.get(i, j) - m.emin * v).abs() <= 1e-24_f64.max(1e-15 * m.emin * v.abs()));
        }
    }
    let wrong = DensityField::uniform(Grid::new(3, 2).unwrap(), 0.5).unwrap();
    let mesh = StructuralMesh::new(g);
    assert!(matches!(mesh.assemble(wrong.values(), 3.0, &m, &ke), Err(Error::Shape { .. })));
}

#[test]
fn uniform_half_density_compliance_ratio() {
    let cfg = ComplianceConfig {
        nelx: 12,
        nely: 6,
        vf_target: 0.5,
        ..ComplianceConfig::default()
    };
    let g = cfg.grid().unwrap();
    let c1 = evaluate_compliance_design(&DensityField::uniform(g, 1.0).unwrap(), &cfg).unwrap();
    let c05 = evaluate_compliance_design(&DensityField::uniform(g, 0.5).unwrap(), &cfg).unwrap();
    let m = cfg.material;
    let expected = 1.0 / (m.emin + 0.125 * (m.e0 - m.emin));
    assert!((c05 / c1 - expected).abs() <= 1e-6 * expected);
}

#[test]
fn full_density_is_stiffest() {
    let cfg = ComplianceConfig {
        nelx: 10,
        nely: 5,
        vf_target: 0.5,
        ..ComplianceConfig::default()
    };
    let g = cfg.grid().unwrap();
    let c1 = evaluate_compliance_design(&DensityField::uniform(g, 1.0).unwrap(), &cfg).unwrap();
    let mut rng = Lcg(3);
    for _ in 0..20 {
        let rho = DensityField::new(g, (0..g.n_elements()).map(|_| rng.next()).collect()).unwrap();
        assert!(c1 <= evaluate_compliance_design(&rho, &cfg).unwrap());
    }
}

#[test]
fn high_volume_fraction_is_bracketed_by_uniform_designs() {
    let cfg = ComplianceConfig {
        nelx: 10,
        nely: 10,
        vf_target: 0.95,
        ..ComplianceConfig::default()
    };
    let g = cfg.grid().unwrap();
    let sol = solve_cantilever(&cfg).unwrap();
    let uniform = evaluate_compliance_design(&DensityField::uniform(g, 0.95).unwrap(), &cfg).unwrap();
    let solid = evaluate_compliance_design(&DensityField::uniform(g, 1.0).unwrap(), &cfg).unwrap();
    assert!(solid <= sol.objective && sol.objective <= uniform, "{solid} <= {} <= {uniform}", sol.objective);
    assert!((sol.density.mean() - 0.95).abs() <= 1e-3);
}

#[test]
fn cantilever_history_is_monotone_after_warmup() {
    let cfg = ComplianceConfig {
        nelx: 60,
        nely: 20,
        vf_target: 0.5,
        ..ComplianceConfig::default()
    };
    let sol = solve_cantilever(&cfg).unwrap();
    let obj: Vec<f64> = sol.history.iter().map(|h| h.objective).collect();
    for i in 5..obj.len().saturating_sub(1) {
        assert!(obj[i + 1] <= obj[i] * 1.02, "iteration {i}: {} -> {}", obj[i], obj[i + 1]);
    }
    for h in &sol.history {
        assert!((h.volume - 0.5).abs() <= 1e-4);
    }
    assert!(sol.density.values().iter().all(|v| (0.0..=1.0).contains(v)));

    // no 2×2 checkerboard
    let g = cfg.grid().unwrap();
    for ey in 0..g.nely() - 1 {
        for ex in 0..g.nelx() - 1 {
            let (a, b, c, d) = (
                sol.density.get(ex, ey),
                sol.density.get(ex + 1, ey),
                sol.density.get(ex, ey + 1),
                sol.density.get(ex + 1, ey + 1),
            );
            let checker = |s: f64, t: f64| s > 0.9 && t < 0.1;
            assert!(!(checker(a, b) && checker(d, c)) && !(checker(b, a) && checker(c, d)));
        }
    }

    let again = solve_cantilever(&cfg).unwrap();
    assert_eq!(again.density, sol.density);
    assert_eq!(again.objective.to_bits(), sol.objective.to_bits());
}

