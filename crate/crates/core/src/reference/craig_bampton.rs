use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::generalized_symmetric_eigen;

#[derive(Debug, Clone)]
pub struct CraigBamptonReduction {
    pub boundary_dofs: Vec<usize>,
    pub n_fixed_modes: usize,
    /// Maps `[boundary; modal]` coordinates to the full DOFs.
    pub transform: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

/// Static constraint modes of `boundary_dofs` plus the lowest
/// `n_fixed_modes` fixed-interface modes. Reduced coordinates list the
/// boundary DOFs first.
pub fn craig_bampton(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    boundary_dofs: &[usize],
    n_fixed_modes: usize,
) -> Result<CraigBamptonReduction> {
    let n = mass.nrows();
    let mut is_boundary = vec![false; n];
    for &b in boundary_dofs {
        if b >= n || is_boundary[b] {
            return Err(Error::InvalidConfig(format!("invalid boundary DOF {b}")));
        }
        is_boundary[b] = true;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    let (nb, ni) = (boundary_dofs.len(), interior.len());
    if n_fixed_modes > ni {
        return Err(Error::InvalidConfig(format!(
            "{n_fixed_modes} fixed-interface modes requested, {ni} interior DOFs available"
        )));
    }
    let pick = |m: &DMatrix<f64>, rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
    };
    let k_ii = pick(stiffness, &interior, &interior);
    let k_ib = pick(stiffness, &interior, boundary_dofs);
    let m_ii = pick(mass, &interior, &interior);
    let lu = k_ii.clone().lu();
    let constraint = lu
        .solve(&(-&k_ib))
        .filter(|_| lu.determinant().abs() > 0.0)
        .ok_or_else(|| Error::Singular("interior stiffness block".into()))?;
    let (_, modes) = generalized_symmetric_eigen(&k_ii, &m_ii)?;
    let mut t = DMatrix::zeros(n, nb + n_fixed_modes);
    for (c, &b) in boundary_dofs.iter().enumerate() {
        t[(b, c)] = 1.0;
    }
    for (r, &i) in interior.iter().enumerate() {
        for c in 0..nb {
            t[(i, c)] = constraint[(r, c)];
        }
        for c in 0..n_fixed_modes {
            t[(i, nb + c)] = modes[(r, c)];
        }
    }
    let sym = |x: DMatrix<f64>| (&x + x.transpose()) * 0.5;
    let m_red = sym(t.transpose() * mass * &t);
    let k_red = sym(t.transpose() * stiffness * &t);
    Ok(CraigBamptonReduction {
        boundary_dofs: boundary_dofs.to_vec(),
        n_fixed_modes,
        transform: t,
        mass: m_red,
        stiffness: k_red,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::build_beam_model;

    fn spectrum(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
        generalized_symmetric_eigen(k, m).unwrap().0.iter().map(|l| l.sqrt()).collect()
    }

    #[test]
    fn complete_basis_is_exact() {
        let beam = build_beam_model(1.0, 0.2, 0.1, 4430.0, 100e9, 10).unwrap();
        let n = beam.mass.nrows();
        let cb = craig_bampton(&beam.mass, &beam.stiffness, &[beam.tip_dof], n - 1).unwrap();
        let full = spectrum(&beam.stiffness, &beam.mass);
        let red = spectrum(&cb.stiffness, &cb.mass);
        for (a, b) in full.iter().zip(&red) {
            assert!((a / b - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn tip_plus_five_modes() {
        let beam = build_beam_model(1.0, 0.2, 0.1, 4430.0, 100e9, 20).unwrap();
        let cb = craig_bampton(&beam.mass, &beam.stiffness, &[beam.tip_dof], 5).unwrap();
        assert_eq!(cb.mass.nrows(), 6);
        assert_eq!(cb.transform.row(beam.tip_dof).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w_full = spectrum(&beam.stiffness, &beam.mass)[0];
        let w_red = spectrum(&cb.stiffness, &cb.mass)[0];
        assert!((w_red / w_full - 1.0).abs() < 1e-3);
        let mut prev = f64::INFINITY;
        for m in 1..=8 {
            let cb = craig_bampton(&beam.mass, &beam.stiffness, &[beam.tip_dof], m).unwrap();
            let w = spectrum(&cb.stiffness, &cb.mass)[0];
            assert!(w >= w_full * (1.0 - 1e-12) && w <= prev * (1.0 + 1e-12));
            prev = w;
        }
    }
}
