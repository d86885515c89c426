use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Clamped-free Euler-Bernoulli cantilever.
#[derive(Debug, Clone)]
pub struct BeamModel {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// Deflection DOF of the free end.
    pub tip_dof: usize,
}

/// Unconstrained consistent mass and stiffness of a uniform beam with
/// `n_elements` two-node bending elements (deflection and rotation per node).
pub fn beam_matrices(
    length: f64,
    width: f64,
    height: f64,
    density: f64,
    youngs_modulus: f64,
    n_elements: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let area = width * height;
    let ei = youngs_modulus * width * height.powi(3) / 12.0;
    let l = length / n_elements as f64;
    let ke = DMatrix::from_row_slice(
        4,
        4,
        &[
            12.0, 6.0 * l, -12.0, 6.0 * l,
            6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l,
            -12.0, -6.0 * l, 12.0, -6.0 * l,
            6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l,
        ],
    ) * (ei / l.powi(3));
    let me = DMatrix::from_row_slice(
        4,
        4,
        &[
            156.0, 22.0 * l, 54.0, -13.0 * l,
            22.0 * l, 4.0 * l * l, 13.0 * l, -3.0 * l * l,
            54.0, 13.0 * l, 156.0, -22.0 * l,
            -13.0 * l, -3.0 * l * l, -22.0 * l, 4.0 * l * l,
        ],
    ) * (density * area * l / 420.0);
    let n = 2 * (n_elements + 1);
    let mut m = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for e in 0..n_elements {
        let o = 2 * e;
        for i in 0..4 {
            for j in 0..4 {
                m[(o + i, o + j)] += me[(i, j)];
                k[(o + i, o + j)] += ke[(i, j)];
            }
        }
    }
    (m, k)
}

/// Cantilever clamped at the first node by eliminating its two DOFs.
pub fn build_beam_model(
    length: f64,
    width: f64,
    height: f64,
    density: f64,
    youngs_modulus: f64,
    n_elements: usize,
) -> Result<BeamModel> {
    if n_elements < 10 {
        return Err(Error::InvalidConfig("beam needs at least 10 elements".into()));
    }
    if [length, width, height, density, youngs_modulus].iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidConfig("beam dimensions and material must be > 0".into()));
    }
    let (m, k) = beam_matrices(length, width, height, density, youngs_modulus, n_elements);
    let n = m.nrows() - 2;
    Ok(BeamModel {
        mass: m.view((2, 2), (n, n)).into_owned(),
        stiffness: k.view((2, 2), (n, n)).into_owned(),
        tip_dof: n - 2,
    })
}
