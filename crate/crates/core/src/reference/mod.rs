//! Direct time integration of the full model, envelope extraction and the
//! beam/Craig-Bampton builders used as ground truth for the reduced model.

mod beam;
mod compare;
mod craig_bampton;
mod envelope;

pub use beam::{beam_matrices, build_beam_model, BeamModel};
pub use compare::{compare_envelopes, decay_window, EnvelopeMetrics};
pub use craig_bampton::{craig_bampton, CraigBamptonReduction};
pub use envelope::{envelope_from_samples, extract_envelope, Envelope, EnvelopePoint};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{self, ElementKind, MechanicalModel};
use crate::ode::{self, OdeOptions, OdeStats};

#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// One friction force per Dahl element, in element order.
    pub dahl_states: Vec<f64>,
}

impl FullState {
    pub fn rest(model: &MechanicalModel) -> Self {
        FullState {
            u: vec![0.0; model.n_dof()],
            v: vec![0.0; model.n_dof()],
            dahl_states: vec![0.0; model.n_dahl()],
        }
    }

    /// First-order state dimension `2n + n_dahl`.
    pub fn dimension(&self) -> usize {
        self.u.len() + self.v.len() + self.dahl_states.len()
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = self.u.clone();
        y.extend(&self.v);
        y.extend(&self.dahl_states);
        y
    }

    fn unpack(y: &[f64], n: usize) -> Self {
        FullState {
            u: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            dahl_states: y[2 * n..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<FullState>,
    pub stats: OdeStats,
}

impl Trajectory {
    pub fn displacement(&self, dof: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.u[dof]).collect()
    }

    pub fn velocity(&self, dof: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.v[dof]).collect()
    }
}

/// Samples required per period of the lowest linear mode.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 20.0;

fn stiffness_hint(model: &MechanicalModel) -> Option<String> {
    let names: Vec<String> = model
        .elements
        .iter()
        .filter_map(|e| match e.kind {
            ElementKind::CoulombTanh { regularization, .. } => Some(format!(
                "Coulomb element at DOF {} with regularization {regularization:e}",
                e.input_dof
            )),
            ElementKind::DahlFriction { .. } => Some(format!("Dahl element at DOF {}", e.input_dof)),
            _ => None,
        })
        .collect();
    (!names.is_empty()).then(|| format!("stiff elements: {}", names.join(", ")))
}

/// Integrates `M ü + f(u, u̇) = −K̃u − C̃u̇ + f̂ cos φ_e(t)` (with the Dahl
/// states) from `initial` at `t0` to `t_end`, sampled every `output_dt`.
pub fn integrate_full(
    model: &MechanicalModel,
    initial: &FullState,
    t0: f64,
    t_end: f64,
    output_dt: f64,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    model.validate()?;
    let n = model.n_dof();
    if initial.u.len() != n || initial.v.len() != n || initial.dahl_states.len() != model.n_dahl() {
        return Err(Error::InvalidConfig("initial state does not match the model".into()));
    }
    if !(t_end > t0) || !(output_dt > 0.0) {
        return Err(Error::InvalidConfig("need t_end > t0 and output_dt > 0".into()));
    }
    let modes = model::linear_modes(model)?;
    if let Some(&w) = modes.omega.iter().find(|&&w| w > 0.0) {
        let dt_max = std::f64::consts::TAU / w / MIN_SAMPLES_PER_PERIOD;
        if output_dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "output_dt {output_dt:e} gives fewer than {MIN_SAMPLES_PER_PERIOD} samples per period (max {dt_max:e})"
            )));
        }
    }
    for (e, f) in model.elements.iter().filter(|e| e.kind.is_hysteretic()).zip(&initial.dahl_states) {
        model::eval_nonlinear_force(e, 0.0, 0.0, Some(*f))?;
    }
    if let Some(f) = &model.forcing {
        f.phase.validate_span(t0, t_end)?;
    }
    let m_inv = model
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?
        .inverse();
    let dahl: Vec<(usize, f64, f64, f64)> = model
        .elements
        .iter()
        .filter_map(|e| match e.kind {
            ElementKind::DahlFriction {
                tangent_stiffness,
                limit_force,
                shape,
            } => Some((e.input_dof, tangent_stiffness, limit_force, shape)),
            _ => None,
        })
        .collect();
    let k_t = &model.extra_stiffness;
    let c_t = &model.extra_damping;
    let mut force = vec![0.0; n];
    let mut q = vec![0.0; dahl.len()];
    // the exact Dahl force never leaves [−R, R]; round-off excursions of
    // the integrated state are saturated
    let saturate = |raw: &[f64], out: &mut [f64]| {
        for ((o, &x), &(_, _, r, _)) in out.iter_mut().zip(raw).zip(&dahl) {
            *o = x.clamp(-r, r);
        }
    };
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (u, rest) = y.split_at(n);
        let (v, raw) = rest.split_at(n);
        saturate(raw, &mut q);
        model::assemble_into(model, u, v, &q, &mut force);
        for i in 0..n {
            let mut s = -force[i];
            for j in 0..n {
                s -= k_t[(i, j)] * u[j] + c_t[(i, j)] * v[j];
            }
            force[i] = s;
        }
        if let Some(fs) = &model.forcing {
            let c = fs.phase_at(t).0.cos();
            for i in 0..n {
                force[i] += fs.amplitude[i] * c;
            }
        }
        dy[..n].copy_from_slice(v);
        for i in 0..n {
            dy[n + i] = (0..n).map(|j| m_inv[(i, j)] * force[j]).sum();
        }
        for (k, &(dof, kt, r, alpha)) in dahl.iter().enumerate() {
            dy[2 * n + k] = model::dahl_rate(kt, r, alpha, q[k], v[dof]);
        }
    };
    let steps = ((t_end - t0) / output_dt).round().max(1.0) as usize;
    let t_out = ode::linspace(t0, t_end, steps);
    let opts = OdeOptions {
        stiffness_hint: opts.stiffness_hint.clone().or_else(|| stiffness_hint(model)),
        ..opts.clone()
    };
    let sol = ode::integrate(rhs, t0, &initial.pack(), &t_out, &opts)?;
    Ok(Trajectory {
        states: sol
            .y
            .iter()
            .map(|y| {
                let mut s = FullState::unpack(y, n);
                let raw = s.dahl_states.clone();
                saturate(&raw, &mut s.dahl_states);
                s
            })
            .collect(),
        t: sol.t,
        stats: sol.stats,
    })
}

/// Total mechanical energy of a model whose elements all derive from a
/// potential (cubic and unilateral springs); `None` otherwise.
pub fn mechanical_energy(model: &MechanicalModel, state: &FullState) -> Option<f64> {
    let quad = |m: &DMatrix<f64>, x: &[f64]| -> f64 {
        let n = x.len();
        (0..n).map(|i| (0..n).map(|j| x[i] * m[(i, j)] * x[j]).sum::<f64>()).sum()
    };
    let mut e = 0.5 * quad(&model.mass, &state.v)
        + 0.5 * quad(&model.base_stiffness, &state.u)
        + 0.5 * quad(&model.extra_stiffness, &state.u);
    if model.extra_damping.iter().any(|&c| c != 0.0) || model.forcing.is_some() {
        return None;
    }
    for el in &model.elements {
        let single = el.force_map.iter().enumerate().all(|(i, &w)| w == 0.0 || (i == el.input_dof && w == 1.0));
        if !single {
            return None;
        }
        let u = state.u[el.input_dof];
        e += match el.kind {
            ElementKind::CubicSpring { stiffness } => 0.25 * stiffness * u.powi(4),
            ElementKind::UnilateralSpring { stiffness, preload } => {
                if stiffness * u >= -preload {
                    0.5 * stiffness * u * u
                } else {
                    -preload * u - preload * preload / (2.0 * stiffness)
                }
            }
            _ => return None,
        };
    }
    Some(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForcingSpec, NonlinearElement, PhaseProgram};

    fn oscillator() -> MechanicalModel {
        MechanicalModel::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), vec![]).unwrap()
    }

    #[test]
    fn undamped_linear_oscillator() {
        let m = oscillator();
        let init = FullState { u: vec![1.0], v: vec![0.0], dahl_states: vec![] };
        let tr = integrate_full(&m, &init, 0.0, 100.0 * std::f64::consts::PI, 0.05, &OdeOptions::default()).unwrap();
        for (t, s) in tr.t.iter().zip(&tr.states) {
            assert!((s.u[0] - t.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_state_stays_at_rest() {
        let m = oscillator();
        let tr = integrate_full(&m, &FullState::rest(&m), 0.0, 10.0, 0.1, &OdeOptions::default()).unwrap();
        assert!(tr.states.iter().all(|s| s.u[0] == 0.0 && s.v[0] == 0.0));
    }

    #[test]
    fn damped_forced_response_matches_closed_form() {
        let (d, w, fh) = (0.1, 1.3, 0.7);
        let m = oscillator()
            .with_extra_damping(DMatrix::from_element(1, 1, 2.0 * d))
            .unwrap()
            .with_forcing(Some(ForcingSpec {
                amplitude: vec![fh],
                phase: PhaseProgram::Constant { omega: w },
            }))
            .unwrap();
        // particular solution X cos(wt − φ) plus free decay fitted to rest
        let den = Complex::new(1.0 - w * w, 2.0 * d * w);
        let x = Complex::new(fh, 0.0) / den;
        let wd = (1.0 - d * d).sqrt();
        let (c1, c2) = {
            let u0 = -x.re;
            let v0 = -(x * Complex::new(0.0, w)).re;
            (u0, (v0 + d * u0) / wd)
        };
        let exact = |t: f64| {
            (x * Complex::from_polar(1.0, w * t)).re + (-d * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin())
        };
        let tr = integrate_full(&m, &FullState::rest(&m), 0.0, 60.0, 0.05, &OdeOptions::default()).unwrap();
        for (t, s) in tr.t.iter().zip(&tr.states) {
            assert!((s.u[0] - exact(*t)).abs() < 1e-6);
        }
    }
    use num_complex::Complex64 as Complex;

    #[test]
    fn conservative_energy_is_preserved() {
        let m = MechanicalModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            vec![NonlinearElement::grounded(ElementKind::CubicSpring { stiffness: 0.5 }, 0, 2)],
        )
        .unwrap();
        let init = FullState { u: vec![1.2, 0.3], v: vec![0.0, -0.4], dahl_states: vec![] };
        let e0 = mechanical_energy(&m, &init).unwrap();
        let opts = OdeOptions::with_tolerances(1e-10, 1e-12);
        let tr = integrate_full(&m, &init, 0.0, 600.0, 0.2, &opts).unwrap();
        for s in &tr.states {
            assert!((mechanical_energy(&m, s).unwrap() / e0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn coarse_output_is_rejected() {
        let m = oscillator();
        assert!(integrate_full(&m, &FullState::rest(&m), 0.0, 10.0, 0.5, &OdeOptions::default()).is_err());
    }

    #[test]
    fn dahl_state_stays_within_limit() {
        let m = MechanicalModel::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![NonlinearElement::grounded(
                ElementKind::DahlFriction {
                    tangent_stiffness: 20.0,
                    limit_force: 0.2,
                    shape: 1.0,
                },
                0,
                1,
            )],
        )
        .unwrap();
        let init = FullState { u: vec![2.0], v: vec![0.0], dahl_states: vec![0.0] };
        let tr = integrate_full(&m, &init, 0.0, 60.0, 0.01, &OdeOptions::default()).unwrap();
        let worst = tr.states.iter().map(|s| s.dahl_states[0].abs()).fold(0.0, f64::max);
        assert!(worst <= 0.2 * (1.0 + 1e-9), "{worst}");
        assert!(tr.states.last().unwrap().u[0].abs() < 2.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn energy_is_conserved_without_dissipation(
            u0 in -1.5f64..1.5,
            u1 in -1.5f64..1.5,
            v0 in -1.0f64..1.0,
            unilateral in proptest::bool::ANY,
        ) {
            let kind = if unilateral {
                ElementKind::UnilateralSpring { stiffness: 3.0, preload: 0.2 }
            } else {
                ElementKind::CubicSpring { stiffness: 0.5 }
            };
            let m = MechanicalModel::new(
                DMatrix::identity(2, 2),
                DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
                vec![NonlinearElement::grounded(kind, 0, 2)],
            )
            .unwrap();
            let init = FullState { u: vec![u0, u1], v: vec![v0, 0.0], dahl_states: vec![] };
            let e0 = mechanical_energy(&m, &init).unwrap();
            proptest::prop_assume!(e0 > 1e-3);
            let opts = OdeOptions::with_tolerances(1e-11, 1e-13);
            // about 100 periods of the slowest mode
            let tr = integrate_full(&m, &init, 0.0, 200.0 * std::f64::consts::PI, 0.1, &opts).unwrap();
            for s in &tr.states {
                proptest::prop_assert!((mechanical_energy(&m, s).unwrap() / e0 - 1.0).abs() < 1e-6);
            }
        }
    }
}
