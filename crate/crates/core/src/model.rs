//! Mechanical systems `M ü + f(u, u̇) = −K̃u − C̃u̇ + f̂ cos φ_e(t)` and
//! pointwise evaluation of their nonlinear forces.
//!
//! The base stiffness `K` belongs to `f` (the autonomous surrogate used by
//! the modal analysis); `K̃` and `C̃` are weak perturbations that only enter
//! the reduced order model and the reference integrator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ElementKind {
    /// `f = κ u³`
    CubicSpring { stiffness: f64 },
    /// `f = R tanh(u̇ / ε)`
    CoulombTanh { limit_force: f64, regularization: f64 },
    /// `f = κ u` while `κ u ≥ −N`, `f = −N` once the contact lifts off.
    UnilateralSpring { stiffness: f64, preload: f64 },
    /// Hysteretic friction with internal state `f`,
    /// `ḟ = k_t (1 − (f/R) sgn u̇)^α u̇`.
    DahlFriction {
        tangent_stiffness: f64,
        limit_force: f64,
        shape: f64,
    },
    /// Self-exciting damper `f = −(α − β u²) u̇`.
    VanDerPolDamper { alpha: f64, beta: f64 },
}

impl ElementKind {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidModel(format!("{self:?}: {what}")));
        match *self {
            ElementKind::CubicSpring { stiffness } if !(stiffness >= 0.0) => {
                bad("stiffness must be >= 0")
            }
            ElementKind::CoulombTanh {
                limit_force,
                regularization,
            } if !(limit_force > 0.0 && regularization > 0.0) => bad("R and ε must be > 0"),
            ElementKind::UnilateralSpring { stiffness, preload }
                if !(stiffness >= 0.0 && preload >= 0.0) =>
            {
                bad("κ and N must be >= 0")
            }
            ElementKind::DahlFriction {
                tangent_stiffness,
                limit_force,
                shape,
            } if !(tangent_stiffness > 0.0 && limit_force > 0.0 && shape > 0.0) => {
                bad("k_t, R and α must be > 0")
            }
            ElementKind::VanDerPolDamper { beta, alpha } if !(beta >= 0.0 && alpha.is_finite()) => {
                bad("β must be >= 0")
            }
            _ => Ok(()),
        }
    }

    pub fn is_hysteretic(&self) -> bool {
        matches!(self, ElementKind::DahlFriction { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearElement {
    pub kind: ElementKind,
    pub input_dof: usize,
    /// Distributes the scalar element force onto the generalized coordinates.
    pub force_map: Vec<f64>,
}

impl NonlinearElement {
    /// Element acting on and driven by a single coordinate.
    pub fn grounded(kind: ElementKind, dof: usize, n_dof: usize) -> Self {
        let mut force_map = vec![0.0; n_dof];
        if dof < n_dof {
            force_map[dof] = 1.0;
        }
        NonlinearElement {
            kind,
            input_dof: dof,
            force_map,
        }
    }
}

/// Result of a pointwise element evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementForce {
    pub force: f64,
    /// `ḟ` for elements with an internal state (Dahl).
    pub state_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseProgram {
    Constant { omega: f64 },
    /// `φ̇_e(t) = omega_start + rate·t`
    Sweep { omega_start: f64, rate: f64 },
}

impl PhaseProgram {
    /// `(φ_e(t), φ̇_e(t))`
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            PhaseProgram::Constant { omega } => (omega * t, omega),
            PhaseProgram::Sweep { omega_start, rate } => {
                (omega_start * t + 0.5 * rate * t * t, omega_start + rate * t)
            }
        }
    }

    /// Checks `φ̇_e > 0` over `[t0, t1]`; the frequency is affine so the end
    /// points suffice.
    pub fn validate_span(&self, t0: f64, t1: f64) -> Result<()> {
        let lo = self.eval(t0).1.min(self.eval(t1).1);
        if lo > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "excitation frequency must stay positive on [{t0}, {t1}] (min {lo})"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub amplitude: Vec<f64>,
    pub phase: PhaseProgram,
}

impl ForcingSpec {
    pub fn phase_at(&self, t: f64) -> (f64, f64) {
        self.phase.eval(t)
    }
}

/// Immutable description of the mechanical system; per-simulation state
/// (Dahl forces) lives elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalModel {
    pub mass: DMatrix<f64>,
    pub base_stiffness: DMatrix<f64>,
    pub extra_stiffness: DMatrix<f64>,
    pub extra_damping: DMatrix<f64>,
    pub elements: Vec<NonlinearElement>,
    pub forcing: Option<ForcingSpec>,
}

impl MechanicalModel {
    pub fn new(
        mass: DMatrix<f64>,
        base_stiffness: DMatrix<f64>,
        elements: Vec<NonlinearElement>,
    ) -> Result<Self> {
        let n = mass.nrows();
        let model = MechanicalModel {
            extra_stiffness: DMatrix::zeros(n, n),
            extra_damping: DMatrix::zeros(n, n),
            mass,
            base_stiffness,
            elements,
            forcing: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_extra_stiffness(mut self, k: DMatrix<f64>) -> Result<Self> {
        self.extra_stiffness = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_extra_damping(mut self, c: DMatrix<f64>) -> Result<Self> {
        self.extra_damping = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_forcing(mut self, forcing: Option<ForcingSpec>) -> Result<Self> {
        self.forcing = forcing;
        self.validate()?;
        Ok(self)
    }

    pub fn n_dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn n_dahl(&self) -> usize {
        self.elements.iter().filter(|e| e.kind.is_hysteretic()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mass.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one DOF".into()));
        }
        for (name, m) in [
            ("mass", &self.mass),
            ("stiffness", &self.base_stiffness),
            ("extra_stiffness", &self.extra_stiffness),
            ("extra_damping", &self.extra_damping),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "{name} matrix is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !linalg::is_symmetric(m, 1e-12) {
                return Err(Error::InvalidModel(format!("{name} matrix is not symmetric")));
            }
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(Error::InvalidModel(
                "mass matrix is not positive definite".into(),
            ));
        }
        for e in &self.elements {
            e.kind.validate()?;
            if e.input_dof >= n {
                return Err(Error::InvalidModel(format!(
                    "element DOF {} out of range [0, {n})",
                    e.input_dof
                )));
            }
            if e.force_map.len() != n {
                return Err(Error::InvalidModel(format!(
                    "force map has length {}, expected {n}",
                    e.force_map.len()
                )));
            }
        }
        if let Some(f) = &self.forcing {
            if f.amplitude.len() != n {
                return Err(Error::InvalidModel(format!(
                    "forcing amplitude has length {}, expected {n}",
                    f.amplitude.len()
                )));
            }
            if let PhaseProgram::Constant { omega } = f.phase {
                if !(omega > 0.0) {
                    return Err(Error::InvalidModel(
                        "constant excitation frequency must be > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Hash of the autonomous part (`M`, `K`, elements). Modal tables depend
    /// on nothing else, so `K̃`, `C̃` and forcing can change freely.
    pub fn autonomous_hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            n: usize,
            mass: &'a [f64],
            stiffness: &'a [f64],
            elements: &'a [NonlinearElement],
        }
        let mass: Vec<f64> = self.mass.transpose().iter().copied().collect();
        let stiffness: Vec<f64> = self.base_stiffness.transpose().iter().copied().collect();
        let canonical = Canonical {
            n: self.n_dof(),
            mass: &mass,
            stiffness: &stiffness,
            elements: &self.elements,
        };
        let bytes = serde_json::to_vec(&canonical).expect("model serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Dahl rate with the base `1 − (f/R) sgn v` kept non-negative, so slight
/// integrator overshoot past `|f| = R` is pulled back instead of producing NaN.
pub(crate) fn dahl_rate(k_t: f64, limit: f64, shape: f64, f: f64, v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let base = 1.0 - f / limit * v.signum();
    let factor = if shape == 1.0 {
        base
    } else if base >= 0.0 {
        base.powf(shape)
    } else {
        -(-base).powf(shape)
    };
    k_t * factor * v
}

pub(crate) fn element_force_unchecked(kind: &ElementKind, u: f64, v: f64, state: f64) -> f64 {
    match *kind {
        ElementKind::CubicSpring { stiffness } => stiffness * u * u * u,
        ElementKind::CoulombTanh {
            limit_force,
            regularization,
        } => limit_force * (v / regularization).tanh(),
        ElementKind::UnilateralSpring { stiffness, preload } => (stiffness * u).max(-preload),
        ElementKind::DahlFriction { .. } => state,
        ElementKind::VanDerPolDamper { alpha, beta } => -(alpha - beta * u * u) * v,
    }
}

/// Scalar force of one element at displacement `u_in` and velocity `v_in`.
/// Dahl elements need their current state and additionally return `ḟ`.
pub fn eval_nonlinear_force(
    element: &NonlinearElement,
    u_in: f64,
    v_in: f64,
    state: Option<f64>,
) -> Result<ElementForce> {
    match element.kind {
        ElementKind::DahlFriction {
            tangent_stiffness,
            limit_force,
            shape,
        } => {
            let f = state.ok_or_else(|| {
                Error::InvalidConfig("Dahl element evaluated without a state".into())
            })?;
            if f.abs() > limit_force {
                return Err(Error::InvalidDahlState {
                    force: f,
                    limit: limit_force,
                });
            }
            Ok(ElementForce {
                force: f,
                state_rate: Some(dahl_rate(tangent_stiffness, limit_force, shape, f, v_in)),
            })
        }
        ref kind => Ok(ElementForce {
            force: element_force_unchecked(kind, u_in, v_in, 0.0),
            state_rate: None,
        }),
    }
}

/// `f(u, u̇) = K u + Σ elements`. `dahl_states` holds one force per Dahl
/// element in element order.
pub fn assemble_force_vector(
    model: &MechanicalModel,
    u: &[f64],
    v: &[f64],
    dahl_states: &[f64],
) -> Result<Vec<f64>> {
    let n = model.n_dof();
    if u.len() != n || v.len() != n {
        return Err(Error::InvalidConfig(format!(
            "state vectors must have length {n}"
        )));
    }
    if dahl_states.len() != model.n_dahl() {
        return Err(Error::InvalidConfig(format!(
            "expected {} Dahl states, got {}",
            model.n_dahl(),
            dahl_states.len()
        )));
    }
    let mut out = vec![0.0; n];
    assemble_into(model, u, v, dahl_states, &mut out);
    Ok(out)
}

pub(crate) fn assemble_into(
    model: &MechanicalModel,
    u: &[f64],
    v: &[f64],
    dahl_states: &[f64],
    out: &mut [f64],
) {
    linalg::mat_vec(&model.base_stiffness, u, out);
    let mut dahl = dahl_states.iter();
    for e in &model.elements {
        let state = if e.kind.is_hysteretic() {
            *dahl.next().unwrap_or(&0.0)
        } else {
            0.0
        };
        let f = element_force_unchecked(&e.kind, u[e.input_dof], v[e.input_dof], state);
        if f != 0.0 {
            for (o, w) in out.iter_mut().zip(&e.force_map) {
                *o += w * f;
            }
        }
    }
}

/// Linearization of `f` about the rest state.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub stiffness: DMatrix<f64>,
    pub damping: DMatrix<f64>,
}

/// Slopes at rest: cubic 0, unilateral κ (preloaded contact is closed),
/// Dahl k_t (stuck), Coulomb `R/ε` as a viscous slope, Van der Pol `−α`.
pub fn linearize(model: &MechanicalModel) -> Linearization {
    let mut k = model.base_stiffness.clone();
    let mut c = DMatrix::zeros(model.n_dof(), model.n_dof());
    for e in &model.elements {
        let (ks, cs) = match e.kind {
            ElementKind::CubicSpring { .. } => (0.0, 0.0),
            ElementKind::UnilateralSpring { stiffness, .. } => (stiffness, 0.0),
            ElementKind::DahlFriction {
                tangent_stiffness, ..
            } => (tangent_stiffness, 0.0),
            ElementKind::CoulombTanh {
                limit_force,
                regularization,
            } => (0.0, limit_force / regularization),
            ElementKind::VanDerPolDamper { alpha, .. } => (0.0, -alpha),
        };
        add_rank_one(&mut k, e, ks);
        add_rank_one(&mut c, e, cs);
    }
    Linearization {
        stiffness: k,
        damping: c,
    }
}

fn add_rank_one(target: &mut DMatrix<f64>, e: &NonlinearElement, slope: f64) {
    if slope == 0.0 {
        return;
    }
    for (i, wi) in e.force_map.iter().enumerate() {
        target[(i, e.input_dof)] += wi * slope;
    }
}

#[derive(Debug, Clone)]
pub struct LinearModes {
    /// Ascending natural frequencies; rigid-body modes report 0.
    pub omega: Vec<f64>,
    /// Mass-normalized shapes, one per column.
    pub shapes: DMatrix<f64>,
    /// Linearized viscous damping ratio of each mode, `φᵀCφ / 2ω`.
    pub damping_ratio: Vec<f64>,
}

/// Real modes of the stuck linearization. Coulomb elements are represented
/// by a stiffness of `R/ε` (the stuck limit), every other element by its
/// rest slope.
pub fn linear_modes(model: &MechanicalModel) -> Result<LinearModes> {
    let lin = linearize(model);
    let mut k_stuck = lin.stiffness.clone();
    let mut c_viscous = lin.damping.clone();
    for e in &model.elements {
        if let ElementKind::CoulombTanh {
            limit_force,
            regularization,
        } = e.kind
        {
            add_rank_one(&mut k_stuck, e, limit_force / regularization);
            add_rank_one(&mut c_viscous, e, -limit_force / regularization);
        }
    }
    k_stuck = (&k_stuck + k_stuck.transpose()) * 0.5;
    let (vals, shapes) = linalg::generalized_symmetric_eigen(&k_stuck, &model.mass)?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let omega: Vec<f64> = vals
        .iter()
        .map(|&l| if l <= 1e-12 * scale { 0.0 } else { l.sqrt() })
        .collect();
    let damping_ratio = (0..omega.len())
        .map(|j| {
            let phi = shapes.column(j);
            let c = (phi.transpose() * &c_viscous * phi)[(0, 0)];
            if omega[j] > 0.0 {
                c / (2.0 * omega[j])
            } else {
                0.0
            }
        })
        .collect();
    Ok(LinearModes {
        omega,
        shapes,
        damping_ratio,
    })
}

/// `ω₀` of linearized mode `mode` in the modal-table convention: the
/// fixed point of `ω² ≈ s`, `s` an eigenvalue of `M⁻¹(K_lin + iωC_lin)`,
/// `ω = √|s|`. Agrees with the table's small-amplitude limit.
pub fn linearized_frequency(model: &MechanicalModel, mode: usize) -> Result<f64> {
    let modes = linear_modes(model)?;
    let mut omega = *modes
        .omega
        .get(mode)
        .ok_or_else(|| Error::InvalidConfig(format!("mode {mode} out of range")))?;
    let lin = linearize(model);
    let m_inv = model
        .mass
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("mass matrix".into()))?;
    let k = (&m_inv * &lin.stiffness).map(|x| Complex64::new(x, 0.0));
    let c = (&m_inv * &lin.damping).map(|x| Complex64::new(0.0, x));
    for _ in 0..200 {
        let a = &k + &c * Complex64::new(omega, 0.0);
        let eig = a
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::Singular("linearized eigenproblem".into()))?;
        let target = omega * omega;
        let s = eig
            .iter()
            .min_by(|x, y| (*x - target).norm().total_cmp(&(*y - target).norm()))
            .copied()
            .ok_or_else(|| Error::Singular("empty eigenvalue set".into()))?;
        let next = s.norm().sqrt();
        if (next - omega).abs() <= 1e-14 * next {
            return Ok(next);
        }
        omega = next;
    }
    Err(Error::NoConvergence {
        amplitude: 0.0,
        iterations: 200,
        residual: f64::NAN,
        history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(elements: Vec<NonlinearElement>) -> MechanicalModel {
        MechanicalModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            elements,
        )
        .unwrap()
    }

    fn single(kind: ElementKind) -> NonlinearElement {
        NonlinearElement::grounded(kind, 0, 1)
    }

    #[test]
    fn linearized_frequency_of_conservative_chain() {
        let m = chain(vec![NonlinearElement::grounded(
            ElementKind::CubicSpring { stiffness: 1.0 },
            0,
            2,
        )]);
        let w = linear_modes(&m).unwrap().omega;
        for j in 0..2 {
            assert!((linearized_frequency(&m, j).unwrap() - w[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn linearized_frequency_with_viscous_slope() {
        // ω⁴ = k² + ω²c² for a single oscillator with s = k + iωc.
        let c = 0.3;
        let m = MechanicalModel::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, 4.0),
            vec![single(ElementKind::CoulombTanh {
                limit_force: c * 0.01,
                regularization: 0.01,
            })],
        )
        .unwrap();
        let w2 = (c * c + (c.powi(4) + 64.0).sqrt()) / 2.0;
        assert!((linearized_frequency(&m, 0).unwrap() - w2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cubic_spring_force() {
        let e = single(ElementKind::CubicSpring { stiffness: 0.5 });
        let f = eval_nonlinear_force(&e, 2.0, 0.0, None).unwrap();
        assert_eq!(f.force, 4.0);
        assert!(f.state_rate.is_none());
    }

    #[test]
    fn coulomb_vanishes_at_rest() {
        let e = single(ElementKind::CoulombTanh {
            limit_force: 3.0,
            regularization: 0.1,
        });
        assert_eq!(eval_nonlinear_force(&e, 1.0, 0.0, None).unwrap().force, 0.0);
    }

    #[test]
    fn unilateral_saturates_at_preload() {
        let e = single(ElementKind::UnilateralSpring {
            stiffness: 70.0,
            preload: 1.0 / 70.0,
        });
        let f = eval_nonlinear_force(&e, -0.01, 0.0, None).unwrap().force;
        assert!((f + 1.0 / 70.0).abs() < 1e-15);
        let f = eval_nonlinear_force(&e, 1e-4, 0.0, None).unwrap().force;
        assert!((f - 7e-3).abs() < 1e-15);
    }

    #[test]
    fn dahl_rate_from_rest() {
        let e = single(ElementKind::DahlFriction {
            tangent_stiffness: 1e6,
            limit_force: 100.0,
            shape: 1.0,
        });
        let f = eval_nonlinear_force(&e, 0.0, 0.001, Some(0.0)).unwrap();
        assert_eq!(f.force, 0.0);
        assert!((f.state_rate.unwrap() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn dahl_rejects_state_beyond_limit() {
        let e = single(ElementKind::DahlFriction {
            tangent_stiffness: 1.0,
            limit_force: 1.0,
            shape: 1.0,
        });
        assert!(matches!(
            eval_nonlinear_force(&e, 0.0, 1.0, Some(1.5)),
            Err(Error::InvalidDahlState { .. })
        ));
        assert!(eval_nonlinear_force(&e, 0.0, 1.0, None).is_err());
    }

    #[test]
    fn assembled_force_of_chain() {
        let m = chain(vec![]);
        assert_eq!(
            assemble_force_vector(&m, &[1.0, 0.0], &[0.0, 0.0], &[]).unwrap(),
            vec![2.0, -1.0]
        );
        let m = chain(vec![NonlinearElement::grounded(
            ElementKind::CubicSpring { stiffness: 0.5 },
            0,
            2,
        )]);
        assert_eq!(
            assemble_force_vector(&m, &[1.0, 0.0], &[0.0, 0.0], &[]).unwrap(),
            vec![2.5, -1.0]
        );
    }

    #[test]
    fn equilibrium_is_force_free_for_every_kind() {
        let kinds = [
            ElementKind::CubicSpring { stiffness: 1.0 },
            ElementKind::CoulombTanh {
                limit_force: 1.0,
                regularization: 0.01,
            },
            ElementKind::UnilateralSpring {
                stiffness: 70.0,
                preload: 0.1,
            },
            ElementKind::DahlFriction {
                tangent_stiffness: 10.0,
                limit_force: 1.0,
                shape: 1.0,
            },
            ElementKind::VanDerPolDamper {
                alpha: 0.5,
                beta: 2.0,
            },
        ];
        let elements = kinds
            .iter()
            .map(|k| NonlinearElement::grounded(*k, 1, 2))
            .collect();
        let m = chain(elements);
        let f = assemble_force_vector(&m, &[0.0, 0.0], &[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(f, vec![0.0, 0.0]);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let bad_dof = MechanicalModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            vec![NonlinearElement {
                kind: ElementKind::CubicSpring { stiffness: 1.0 },
                input_dof: 2,
                force_map: vec![0.0, 1.0],
            }],
        );
        assert!(bad_dof.is_err());
        let indefinite_mass = MechanicalModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::identity(2, 2),
            vec![],
        );
        assert!(indefinite_mass.is_err());
        let bad_param = MechanicalModel::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![single(ElementKind::CoulombTanh {
                limit_force: 1.0,
                regularization: 0.0,
            })],
        );
        assert!(bad_param.is_err());
    }

    #[test]
    fn chain_linear_modes() {
        let modes = linear_modes(&chain(vec![])).unwrap();
        assert!((modes.omega[0] - 1.0).abs() < 1e-12);
        assert!((modes.omega[1] - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sweep_phase_program() {
        let p = PhaseProgram::Sweep {
            omega_start: 0.0,
            rate: 0.025,
        };
        let (phi, om) = p.eval(40.0);
        assert!((om - 1.0).abs() < 1e-15);
        assert!((phi - 20.0).abs() < 1e-12);
        assert!(p.validate_span(0.0, 10.0).is_err());
        assert!(p.validate_span(1.0, 10.0).is_ok());
    }

    #[test]
    fn hash_ignores_perturbations() {
        let a = chain(vec![]);
        let b = a
            .clone()
            .with_extra_damping(DMatrix::identity(2, 2) * 0.1)
            .unwrap();
        assert_eq!(a.autonomous_hash(), b.autonomous_hash());
        let c = chain(vec![NonlinearElement::grounded(
            ElementKind::CubicSpring { stiffness: 0.5 },
            0,
            2,
        )]);
        assert_ne!(a.autonomous_hash(), c.autonomous_hash());
    }

    proptest::proptest! {
        #[test]
        fn coulomb_is_odd_and_bounded(v in -1e3f64..1e3, r in 0.1f64..10.0, eps in 1e-4f64..1.0) {
            let kind = ElementKind::CoulombTanh { limit_force: r, regularization: eps };
            let f = element_force_unchecked(&kind, 0.0, v, 0.0);
            proptest::prop_assert_eq!(f, -element_force_unchecked(&kind, 0.0, -v, 0.0));
            proptest::prop_assert!(f.abs() <= r);
        }

        #[test]
        fn unilateral_is_continuous_at_lift_off(k in 1.0f64..100.0, n in 0.0f64..1.0, h in 1e-12f64..1e-6) {
            let kind = ElementKind::UnilateralSpring { stiffness: k, preload: n };
            let u_star = -n / k;
            let below = element_force_unchecked(&kind, u_star - h, 0.0, 0.0);
            let above = element_force_unchecked(&kind, u_star + h, 0.0, 0.0);
            proptest::prop_assert_eq!(below, -n);
            proptest::prop_assert!((above + n - k * h).abs() <= 1e-9 * (1.0 + n));
        }

        #[test]
        fn dahl_state_stays_bounded(
            amp in 0.01f64..10.0,
            f0 in -1.0f64..1.0,
            shape in 1.0f64..3.0,
            periods in 1usize..5,
        ) {
            // forward Euler on ḟ = k_t (1 − f/R sgn v)^α v with a step well
            // below 1/(k_t |v|)
            let (k_t, r) = (50.0, 1.0);
            let steps = 4000;
            let dt = std::f64::consts::TAU / steps as f64;
            let mut f = f0;
            for j in 0..steps * periods {
                let v = -amp * (j as f64 * dt).sin();
                f += dt * dahl_rate(k_t, r, shape, f, v);
                proptest::prop_assert!(f.abs() <= r * (1.0 + 1e-12));
            }
        }

        #[test]
        fn pure_cubic_force_is_homogeneous(u0 in -2.0f64..2.0, u1 in -2.0f64..2.0, s in -3.0f64..3.0) {
            let m = MechanicalModel::new(
                DMatrix::identity(2, 2),
                DMatrix::zeros(2, 2),
                vec![
                    NonlinearElement::grounded(ElementKind::CubicSpring { stiffness: 0.5 }, 0, 2),
                    NonlinearElement::grounded(ElementKind::CubicSpring { stiffness: 2.0 }, 1, 2),
                ],
            )
            .unwrap();
            let f = assemble_force_vector(&m, &[u0, u1], &[0.0, 0.0], &[]).unwrap();
            let g = assemble_force_vector(&m, &[s * u0, s * u1], &[0.0, 0.0], &[]).unwrap();
            for (x, y) in f.iter().zip(&g) {
                proptest::prop_assert!((y - s * s * s * x).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
