//! Unit-square bilinear element matrices.
//!
//! Local node order is counter-clockwise from the bottom-left corner:
//! (0,0), (1,0), (1,1), (0,1). Structural DOFs are interleaved `(x, y)` per
//! node.

use crate::error::Result;
use crate::fem::Material;

pub type Matrix8 = [[f64; 8]; 8];
pub type Matrix4 = [[f64; 4]; 4];
/// Rows are structural DOFs, columns are pressure nodes.
pub type Coupling = [[f64; 4]; 8];

/// Plane-stress stiffness of a unit-square element with unit modulus,
/// integrated in closed form.
pub fn element_stiffness(material: &Material) -> Result<Matrix8> {
    material.validate()?;
    let nu = material.nu;
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
    let idx: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = 1.0 / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            ke[i][j] = scale * k[idx[i][j]];
        }
    }
    Ok(ke)
}

/// Plane-stress constitutive matrix (Voigt, engineering shear) for modulus 1.
pub fn plane_stress_tensor(nu: f64) -> [[f64; 3]; 3] {
    let s = 1.0 / (1.0 - nu * nu);
    [
        [s, s * nu, 0.0],
        [s * nu, s, 0.0],
        [0.0, 0.0, s * (1.0 - nu) / 2.0],
    ]
}

/// Scalar Laplacian `∫ ∇N_a · ∇N_b` over the unit square.
pub fn flow_matrix() -> Matrix4 {
    let s = 1.0 / 6.0;
    [
        [4.0 * s, -s, -2.0 * s, -s],
        [-s, 4.0 * s, -s, -2.0 * s],
        [-2.0 * s, -s, 4.0 * s, -s],
        [-s, -2.0 * s, -s, 4.0 * s],
    ]
}

/// Consistent mass `∫ N_a N_b` over the unit square.
pub fn mass_matrix() -> Matrix4 {
    let s = 1.0 / 36.0;
    [
        [4.0 * s, 2.0 * s, s, 2.0 * s],
        [2.0 * s, 4.0 * s, 2.0 * s, s],
        [s, 2.0 * s, 4.0 * s, 2.0 * s],
        [2.0 * s, s, 2.0 * s, 4.0 * s],
    ]
}

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

fn shape(x: f64, y: f64) -> [f64; 4] {
    CORNERS.map(|(cx, cy)| {
        let fx = if cx == 0.0 { 1.0 - x } else { x };
        let fy = if cy == 0.0 { 1.0 - y } else { y };
        fx * fy
    })
}

fn shape_gradient(x: f64, y: f64) -> [[f64; 2]; 4] {
    CORNERS.map(|(cx, cy)| {
        let (fx, dfx) = if cx == 0.0 { (1.0 - x, -1.0) } else { (x, 1.0) };
        let (fy, dfy) = if cy == 0.0 { (1.0 - y, -1.0) } else { (y, 1.0) };
        [dfx * fy, fx * dfy]
    })
}

/// `∫ N_a ∂N_b/∂x_d` over the unit square; the nodal load of a pressure field
/// `p` on one element is `-T p`. The integrand is at most cubic, so 2×2 Gauss
/// quadrature is exact.
pub fn pressure_coupling() -> Coupling {
    let g = 0.5 / 3f64.sqrt();
    let points = [0.5 - g, 0.5 + g];
    let mut t = [[0.0; 4]; 8];
    for &x in &points {
        for &y in &points {
            let n = shape(x, y);
            let dn = shape_gradient(x, y);
            for a in 0..4 {
                for b in 0..4 {
                    for d in 0..2 {
                        t[2 * a + d][b] += 0.25 * n[a] * dn[b][d];
                    }
                }
            }
        }
    }
    t
}
