//! Trilinear 8-node hexahedron on the unit cube.

use crate::grid::CORNERS;
use crate::ElasticParams;

/// Dense 24×24 element stiffness, row-major, DOFs ordered `[ux0, uy0, uz0, ux1, ...]`.
pub type ElementMatrix = [[f64; 24]; 24];

/// Abscissa of the two-point Gauss rule on `[-1, 1]`.
pub const GAUSS_POINT: f64 = 0.577_350_269_189_625_8;

/// Isotropic elasticity matrix in Voigt order `xx, yy, zz, xy, yz, zx`
/// (engineering shear strains).
fn constitutive(youngs: f64, poisson: f64) -> [[f64; 6]; 6] {
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = youngs / (2.0 * (1.0 + poisson));
    let mut d = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = lambda;
        }
        d[i][i] = lambda + 2.0 * mu;
        d[i + 3][i + 3] = mu;
    }
    d
}

/// Strain-displacement matrix at natural coordinates `xi`. The unit cube maps
/// from `[-1, 1]^3` with Jacobian `I/2`, so physical derivatives are twice the
/// natural ones.
pub(crate) fn strain_displacement(xi: [f64; 3]) -> [[f64; 24]; 6] {
    let mut b = [[0.0; 24]; 6];
    for (a, c) in CORNERS.iter().enumerate() {
        let s = c.map(|v| if v == 0 { -1.0 } else { 1.0 });
        let f = [
            1.0 + s[0] * xi[0],
            1.0 + s[1] * xi[1],
            1.0 + s[2] * xi[2],
        ];
        // 0.125 from the shape function, 2 from the Jacobian.
        let dx = 0.25 * s[0] * f[1] * f[2];
        let dy = 0.25 * f[0] * s[1] * f[2];
        let dz = 0.25 * f[0] * f[1] * s[2];
        let col = 3 * a;
        b[0][col] = dx;
        b[1][col + 1] = dy;
        b[2][col + 2] = dz;
        b[3][col] = dy;
        b[3][col + 1] = dx;
        b[4][col + 1] = dz;
        b[4][col + 2] = dy;
        b[5][col] = dz;
        b[5][col + 2] = dx;
    }
    b
}

/// Unit-modulus stiffness of the unit-cube hexahedron, integrated with the
/// 2×2×2 Gauss rule. Scale by `E(ρ)` to get the element stiffness.
pub fn element_stiffness(material: &ElasticParams) -> ElementMatrix {
    let d = constitutive(1.0, material.poisson);
    let det_j = 0.125;
    let mut k = [[0.0; 24]; 24];
    for gz in [-GAUSS_POINT, GAUSS_POINT] {
        for gy in [-GAUSS_POINT, GAUSS_POINT] {
            for gx in [-GAUSS_POINT, GAUSS_POINT] {
                let b = strain_displacement([gx, gy, gz]);
                // db = D·B
                let mut db = [[0.0; 24]; 6];
                for r in 0..6 {
                    for c in 0..24 {
                        db[r][c] = (0..6).map(|s| d[r][s] * b[s][c]).sum();
                    }
                }
                for r in 0..24 {
                    for c in 0..24 {
                        let mut acc = 0.0;
                        for s in 0..6 {
                            acc += b[s][r] * db[s][c];
                        }
                        k[r][c] += acc * det_j;
                    }
                }
            }
        }
    }
    // Quadrature sums are symmetric up to rounding; make it exact.
    for r in 0..24 {
        for c in (r + 1)..24 {
            let avg = 0.5 * (k[r][c] + k[c][r]);
            k[r][c] = avg;
            k[c][r] = avg;
        }
    }
    k
}
