mod common;

use common::{symmetric_eigenvalues, Lcg};
use topocnn::fem::{DensityField, Grid, Material, SolveMethod};
use topocnn::problems::{
    bulk_objective, evaluate_micro_design, homogenize, periodic_dof_map, solve_micro, MicroConfig,
};

const C11: f64 = 1.0 / (1.0 - 0.09);
const C12: f64 = 0.3 / (1.0 - 0.09);
const C33: f64 = 1.0 / 2.6;
const K_SOLID: f64 = 1.0 / 1.4;

fn random_field(grid: Grid, rng: &mut Lcg, lo: f64, hi: f64) -> DensityField {
    DensityField::new(grid, (0..grid.n_elements()).map(|_| rng.range(lo, hi)).collect()).unwrap()
}

fn shifted(rho: &DensityField, dx: usize, dy: usize) -> DensityField {
    let g = rho.grid();
    let mut v = vec![0.0; g.n_elements()];
    for (ex, ey) in g.element_coords() {
        v[g.element_index((ex + dx) % g.nelx(), (ey + dy) % g.nely())] = rho.get(ex, ey);
    }
    DensityField::new(g, v).unwrap()
}

fn cfg(n: usize) -> MicroConfig {
    MicroConfig {
        nelx: n,
        nely: n,
        ..MicroConfig::default()
    }
}

#[test]
fn periodic_map_counts_and_idempotence() {
    for (nx, ny) in [(2, 2), (3, 5), (6, 4)] {
        let g = Grid::new(nx, ny).unwrap();
        let cell = periodic_dof_map(g).unwrap();
        assert_eq!(cell.n_independent(), 2 * nx * ny);
        for d in 0..g.n_dofs() {
            let m = cell.master_dof(d);
            assert_eq!(cell.master_dof(m), m);
            assert_eq!(cell.reduced_dof(d), cell.reduced_dof(m));
            assert_eq!(m % 2, d % 2);
        }
        // opposite edges share reduced dofs
        for row in 0..=ny {
            let (l, r) = (g.node(0, row), g.node(nx, row));
            assert_eq!(cell.reduced_dof(2 * l), cell.reduced_dof(2 * r));
        }
        for col in 0..=nx {
            let (t, b) = (g.node(col, 0), g.node(col, ny));
            assert_eq!(cell.reduced_dof(2 * t + 1), cell.reduced_dof(2 * b + 1));
        }
        // interior nodes keep their own dof
        if nx > 1 && ny > 1 {
            let n = g.node(1, 1);
            assert_eq!(cell.master_dof(2 * n), 2 * n);
        }
    }
    assert!(periodic_dof_map(Grid::new(1, 3).unwrap()).is_err());
}

#[test]
fn solid_cell_recovers_base_tensor() {
    let g = Grid::new(5, 4).unwrap();
    let cell = periodic_dof_map(g).unwrap();
    let h = homogenize(&DensityField::uniform(g, 1.0).unwrap(), 3.0, &Material::default(), &cell).unwrap();
    let expected = [[C11, C12, 0.0], [C12, C11, 0.0], [0.0, 0.0, C33]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((h.c_h[i][j] - expected[i][j]).abs() < 1e-6, "C{i}{j} = {}", h.c_h[i][j]);
        }
    }
    assert!((h.bulk_modulus() - K_SOLID).abs() < 1e-6);
    assert!((0.714286 - h.bulk_modulus()).abs() < 1e-6);
}

#[test]
fn uniform_gray_cell_scales_by_simp_factor() {
    let g = Grid::new(4, 4).unwrap();
    let cell = periodic_dof_map(g).unwrap();
    let m = Material::default();
    for rho in [0.1, 0.45, 0.8] {
        let h = homogenize(&DensityField::uniform(g, rho).unwrap(), 3.0, &m, &cell).unwrap();
        let f = m.emin + rho * rho * rho * (m.e0 - m.emin);
        assert!((h.c_h[0][0] - f * C11).abs() < 1e-9);
        assert!((h.c_h[0][1] - f * C12).abs() < 1e-9);
        assert!((h.c_h[2][2] - f * C33).abs() < 1e-9);
    }
}

#[test]
fn tensor_is_symmetric_psd_and_below_voigt_bound() {
    let mut rng = Lcg(31);
    let g = Grid::new(6, 6).unwrap();
    let cell = periodic_dof_map(g).unwrap();
    let m = Material::default();
    for _ in 0..100 {
        let rho = random_field(g, &mut rng, 0.0, 1.0);
        let h = homogenize(&rho, 3.0, &m, &cell).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.c_h[i][j] - h.c_h[j][i]).abs() < 1e-8);
            }
        }
        let rows: Vec<Vec<f64>> = h.c_h.iter().map(|r| r.to_vec()).collect();
        assert!(symmetric_eigenvalues(&rows).iter().all(|&l| l >= -1e-9));
        let mean_e = rho.values().iter().map(|&r| m.simp(r, 3.0)).sum::<f64>() / g.n_elements() as f64;
        assert!(h.bulk_modulus() <= mean_e * K_SOLID / m.e0 + 1e-9);
    }
}

#[test]
fn bulk_sensitivities_match_finite_differences() {
    let mut rng = Lcg(8);
    let g = Grid::new(4, 4).unwrap();
    let cell = periodic_dof_map(g).unwrap();
    let m = Material::default();
    let rho = random_field(g, &mut rng, 0.2, 1.0);
    let h = homogenize(&rho, 3.0, &m, &cell).unwrap();
    let (_, dc) = bulk_objective(&h, rho.values(), 3.0, &m).unwrap();
    assert!(dc.iter().all(|&v| v <= 1e-12));
    let obj = |v: Vec<f64>| {
        let r = DensityField::new(g, v).unwrap();
        let h = homogenize(&r, 3.0, &m, &cell).unwrap();
        bulk_objective(&h, r.values(), 3.0, &m).unwrap().0
    };
    let step = 1e-6;
    for _ in 0..10 {
        let e = rng.below(g.n_elements());
        let mut up = rho.values().to_vec();
        let mut dn = up.clone();
        up[e] = (up[e] + step).min(1.0);
        dn[e] -= step;
        let fd = (obj(up.clone()) - obj(dn.clone())) / (up[e] - dn[e]);
        assert!((fd - dc[e]).abs() <= 1e-3 * dc[e].abs(), "element {e}: {fd} vs {}", dc[e]);
    }
}

#[test]
fn cyclic_shift_leaves_tensor_unchanged() {
    let mut rng = Lcg(12);
    let g = Grid::new(7, 5).unwrap();
    let cell = periodic_dof_map(g).unwrap();
    let m = Material::default();
    let rho = random_field(g, &mut rng, 0.0, 1.0);
    let a = homogenize(&rho, 3.0, &m, &cell).unwrap();
    let b = homogenize(&shifted(&rho, 3, 2), 3.0, &m, &cell).unwrap();
    let scale = a.c_h[0][0].abs().max(a.c_h[1][1].abs());
    for i in 0..3 {
        for j in 0..3 {
            assert!((a.c_h[i][j] - b.c_h[i][j]).abs() < 1e-6 * scale);
        }
    }
}

#[test]
fn pcg_and_direct_agree() {
    let mut rng = Lcg(4);
    let g = Grid::new(6, 6).unwrap();
    let rho = random_field(g, &mut rng, 0.3, 1.0);
    let direct = evaluate_micro_design(&rho, &cfg(6)).unwrap();
    let pcg = evaluate_micro_design(
        &rho,
        &MicroConfig {
            solver: SolveMethod::Pcg { tol: 1e-10 },
            ..cfg(6)
        },
    )
    .unwrap();
    assert!((direct - pcg).abs() < 1e-7 * direct);
}

#[test]
fn uniform_ramp_is_monotone() {
    let c = cfg(4);
    let g = c.grid().unwrap();
    let mut prev = 0.0;
    for i in 1..=10 {
        let k = evaluate_micro_design(&DensityField::uniform(g, i as f64 / 10.0).unwrap(), &c).unwrap();
        assert!(k > prev);
        prev = k;
    }
    assert!((prev - K_SOLID).abs() < 1e-6);
}

#[test]
fn optimizer_improves_on_initial_design() {
    let c = MicroConfig {
        vf_target: 0.5,
        ..cfg(20)
    };
    let g = c.grid().unwrap();
    let start = DensityField::new(g, c.initial_design().unwrap()).unwrap();
    assert!((start.mean() - 0.5).abs() < 1e-12);
    let k0 = evaluate_micro_design(&start, &c).unwrap();
    let sol = solve_micro(&c).unwrap();
    assert!(sol.objective > k0, "{} vs {k0}", sol.objective);
    assert!((sol.density.mean() - 0.5).abs() <= 1e-3);
    assert_eq!(evaluate_micro_design(&sol.density, &c).unwrap(), sol.objective);
    let again = solve_micro(&c).unwrap();
    assert_eq!(again.density, sol.density);

    let moved = evaluate_micro_design(&shifted(&sol.density, 5, 11), &c).unwrap();
    assert!((moved - sol.objective).abs() <= 1e-6 * sol.objective);
}

#[test]
fn rejects_degenerate_cells() {
    let c = MicroConfig {
        nelx: 1,
        nely: 4,
        ..MicroConfig::default()
    };
    assert!(solve_micro(&c).is_err());
    let rho = DensityField::uniform(Grid::new(3, 3).unwrap(), 0.5).unwrap();
    assert!(evaluate_micro_design(&rho, &cfg(4)).is_err());
}
