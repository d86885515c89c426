//! The example systems: Duffing and Van der Pol oscillators, the two-mass
//! chain with a cubic, Coulomb or unilateral element at the first mass,
//! and the cantilever with Dahl friction at its tip.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::generalized_symmetric_eigen;
use crate::model::{ElementKind, MechanicalModel, NonlinearElement};
use crate::reference::{build_beam_model, craig_bampton, CraigBamptonReduction};

/// `ü + 2d u̇ + u + κu³ = 0`; the viscous term is the perturbation `C̃`.
pub fn duffing(damping: f64, kappa: f64) -> Result<MechanicalModel> {
    MechanicalModel::new(
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        vec![NonlinearElement::grounded(ElementKind::CubicSpring { stiffness: kappa }, 0, 1)],
    )?
    .with_extra_damping(DMatrix::from_element(1, 1, 2.0 * damping))
}

/// `ü − (α − βu²) u̇ + u = 0`, the self-exciting damper being part of `f`.
pub fn van_der_pol(alpha: f64, beta: f64) -> Result<MechanicalModel> {
    MechanicalModel::new(
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        vec![NonlinearElement::grounded(ElementKind::VanDerPolDamper { alpha, beta }, 0, 1)],
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoMassParams {
    pub m1: f64,
    pub m2: f64,
    /// First mass to ground.
    pub k1: f64,
    /// Coupling spring.
    pub k12: f64,
    /// Second mass to ground.
    pub k2: f64,
}

impl TwoMassParams {
    pub const UNIT: TwoMassParams = TwoMassParams {
        m1: 1.0,
        m2: 1.0,
        k1: 1.0,
        k12: 1.0,
        k2: 1.0,
    };
    /// Parameters of the friction and unilateral contact studies.
    pub const CONTACT: TwoMassParams = TwoMassParams {
        m1: 0.02,
        m2: 1.0,
        k1: 0.0,
        k12: 40.0,
        k2: 600.0,
    };
}

/// Two-mass chain with `element` acting on the first mass.
pub fn two_mass(p: TwoMassParams, element: ElementKind) -> Result<MechanicalModel> {
    MechanicalModel::new(
        DMatrix::from_row_slice(2, 2, &[p.m1, 0.0, 0.0, p.m2]),
        DMatrix::from_row_slice(2, 2, &[p.k1 + p.k12, -p.k12, -p.k12, p.k12 + p.k2]),
        vec![NonlinearElement::grounded(element, 0, 2)],
    )
}

pub fn cubic_two_mass(kappa: f64) -> Result<MechanicalModel> {
    two_mass(TwoMassParams::UNIT, ElementKind::CubicSpring { stiffness: kappa })
}

pub fn friction_two_mass(limit_force: f64, regularization: f64) -> Result<MechanicalModel> {
    two_mass(
        TwoMassParams::CONTACT,
        ElementKind::CoulombTanh {
            limit_force,
            regularization,
        },
    )
}

pub fn unilateral_two_mass(stiffness: f64, preload: f64) -> Result<MechanicalModel> {
    two_mass(TwoMassParams::CONTACT, ElementKind::UnilateralSpring { stiffness, preload })
}

/// `C̃ = 2ζω M`: mass-proportional damping giving ratio `ζ` to the linear
/// mode of frequency `ω`.
pub fn mass_proportional_damping(mass: &DMatrix<f64>, ratio: f64, omega: f64) -> DMatrix<f64> {
    mass * (2.0 * ratio * omega)
}

/// `C̃ = M Φ diag(2ζⱼωⱼ) Φᵀ M` over the modes of `(K, M)`; `ratios[j]`
/// applies to mode `j`, the last ratio to all higher modes.
pub fn modal_damping(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>, ratios: &[f64]) -> Result<DMatrix<f64>> {
    let (vals, phi) = generalized_symmetric_eigen(stiffness, mass)?;
    let n = vals.len();
    let diag = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let z = ratios.get(i).or(ratios.last()).copied().unwrap_or(0.0);
            2.0 * z * vals[i].max(0.0).sqrt()
        } else {
            0.0
        }
    });
    let mphi = mass * &phi;
    let c = &mphi * diag * mphi.transpose();
    Ok((&c + c.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub density: f64,
    pub youngs_modulus: f64,
    pub n_elements: usize,
    pub n_fixed_modes: usize,
    pub tangent_stiffness: f64,
    pub limit_force: f64,
    pub shape: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            length: 1.0,
            width: 0.2,
            height: 0.1,
            density: 4430.0,
            youngs_modulus: 100e9,
            n_elements: 20,
            n_fixed_modes: 5,
            tangent_stiffness: 1e6,
            limit_force: 100.0,
            shape: 1.0,
        }
    }
}

/// Craig-Bampton reduced cantilever with a grounded Dahl element at the tip
/// deflection, which is reduced coordinate 0.
pub fn beam_with_dahl(p: &BeamParams) -> Result<(MechanicalModel, CraigBamptonReduction)> {
    let beam = build_beam_model(p.length, p.width, p.height, p.density, p.youngs_modulus, p.n_elements)?;
    let cb = craig_bampton(&beam.mass, &beam.stiffness, &[beam.tip_dof], p.n_fixed_modes)?;
    let n = cb.mass.nrows();
    let model = MechanicalModel::new(
        cb.mass.clone(),
        cb.stiffness.clone(),
        vec![NonlinearElement::grounded(
            ElementKind::DahlFriction {
                tangent_stiffness: p.tangent_stiffness,
                limit_force: p.limit_force,
                shape: p.shape,
            },
            0,
            n,
        )],
    )?;
    Ok((model, cb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::herm_form;
    use crate::model::linear_modes;
    use num_complex::Complex64;

    #[test]
    fn beam_state_dimension() {
        let (m, _) = beam_with_dahl(&BeamParams::default()).unwrap();
        assert_eq!(2 * m.n_dof() + m.n_dahl(), 13);
    }

    #[test]
    fn modal_damping_assigns_ratios() {
        let m = friction_two_mass(1.0, 0.01).unwrap();
        let c = modal_damping(&m.mass, &m.base_stiffness, &[-0.02, 0.01]).unwrap();
        let (vals, phi) = generalized_symmetric_eigen(&m.base_stiffness, &m.mass).unwrap();
        for (j, z) in [(0, -0.02), (1, 0.01)] {
            let p: Vec<Complex64> = phi.column(j).iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let got = herm_form(&p, &c, &p).re / (2.0 * vals[j].sqrt());
            assert!((got - z).abs() < 1e-12);
        }
    }

    #[test]
    fn duffing_linear_frequency() {
        assert!((linear_modes(&duffing(0.05, 0.25).unwrap()).unwrap().omega[0] - 1.0).abs() < 1e-14);
    }
}
