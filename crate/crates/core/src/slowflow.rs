//! Averaged slow-flow reduced order model in modal amplitude `a` and slow
//! phase `Θ`.
//!
//! With `g = Ψ₁ᴴ f̂` the slow flow reads
//!
//! ```text
//! ȧ = (−2δ̃ω̃Ω a − |g| sin(Θ − arg g)) / 2Ω
//! Θ̇ = (ω̃² − Ω² − |g| cos(Θ − arg g) / a) / 2Ω
//! ```
//!
//! Forced runs are integrated in the Cartesian variable `z = a e^{iΘ}`,
//! `ż = [(−2δ̃ω̃Ω + i(ω̃² − Ω²)) z − i g] / 2Ω`, which is regular at rest.
//! Autonomous runs integrate `ȧ = −δ̃ω̃a` together with the fast phase
//! `φ̇ = ω̃`.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ForcingSpec, MechanicalModel};
use crate::nma::{Interpolated, ModalTable};
use crate::ode::{self, OdeOptions, OdeStats};

#[derive(Debug, Clone)]
pub struct SlowFlowConfig {
    pub table: ModalTable,
    pub extra_stiffness: DMatrix<f64>,
    pub extra_damping: DMatrix<f64>,
    pub forcing: Option<ForcingSpec>,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl SlowFlowConfig {
    pub fn new(
        table: ModalTable,
        extra_stiffness: DMatrix<f64>,
        extra_damping: DMatrix<f64>,
        forcing: Option<ForcingSpec>,
    ) -> Result<Self> {
        let n = table.n_dof();
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        for (name, m) in [("extra_stiffness", &extra_stiffness), ("extra_damping", &extra_damping)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidConfig(format!("{name} must be {n}x{n}")));
            }
            if !linalg::is_symmetric(m, 1e-12) {
                return Err(Error::InvalidConfig(format!("{name} must be symmetric")));
            }
        }
        if let Some(f) = &forcing {
            if f.amplitude.len() != n {
                return Err(Error::InvalidConfig(format!("forcing amplitude must have length {n}")));
            }
        }
        Ok(SlowFlowConfig {
            table,
            extra_stiffness,
            extra_damping,
            forcing,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
        })
    }

    /// Takes `K̃`, `C̃` and the forcing from `model` after checking that the
    /// table was computed for the same autonomous system.
    pub fn from_model(table: ModalTable, model: &MechanicalModel) -> Result<Self> {
        if table.provenance.model_hash != model.autonomous_hash() {
            return Err(Error::Incompatible(
                "modal table was computed for a different model".into(),
            ));
        }
        Self::new(
            table,
            model.extra_stiffness.clone(),
            model.extra_damping.clone(),
            model.forcing.clone(),
        )
    }

    /// Smallest amplitude used in the `1/a` term of the polar form.
    pub fn a_floor(&self) -> f64 {
        self.table.a_min()
    }

    fn modal_force(&self, m: &Interpolated) -> Complex64 {
        match &self.forcing {
            Some(f) => {
                let fh: Vec<Complex64> = f.amplitude.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                linalg::herm_dot(m.fundamental(), &fh)
            }
            None => Complex64::new(0.0, 0.0),
        }
    }

    fn properties(&self, a: f64) -> Result<Modified> {
        let m = self.table.interpolate(a)?;
        let (omega, delta) = perturb(&m, &self.extra_stiffness, &self.extra_damping)?;
        Ok(Modified {
            omega,
            delta,
            g: self.modal_force(&m),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowFlowState {
    pub a: f64,
    pub theta: f64,
    pub t: f64,
}

impl SlowFlowState {
    /// Zero amplitude at `t`.
    pub fn rest(t: f64) -> Self {
        SlowFlowState { a: 0.0, theta: 0.0, t }
    }
}

#[derive(Debug, Clone, Copy)]
struct Modified {
    omega: f64,
    delta: f64,
    g: Complex64,
}

fn perturb(m: &Interpolated, k: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(f64, f64)> {
    let psi = m.fundamental();
    let w2 = m.omega0 * m.omega0 + linalg::herm_form(psi, k, psi).re;
    if !(w2 > 0.0) {
        return Err(Error::NegativeFrequency {
            amplitude: m.a,
            omega_sq: w2,
        });
    }
    let w = w2.sqrt();
    Ok((w, m.delta + linalg::herm_form(psi, c, psi).re / (2.0 * w)))
}

/// `(ω̃, δ̃)` with `ω̃² = ω₀² + Re Ψ₁ᴴK̃Ψ₁` and `2δ̃ω̃ = 2δω̃ + Re Ψ₁ᴴC̃Ψ₁`.
pub fn modified_modal_properties(
    table: &ModalTable,
    a: f64,
    extra_stiffness: &DMatrix<f64>,
    extra_damping: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    perturb(&table.interpolate(a)?, extra_stiffness, extra_damping)
}

/// `(φ_e(t), φ̇_e(t))`
pub fn phase_driver(spec: &ForcingSpec, t: f64) -> (f64, f64) {
    spec.phase_at(t)
}

fn polar_rhs(p: &Modified, a: f64, theta: f64, omega: f64, a_floor: f64) -> (f64, f64) {
    let (s, c) = (theta - p.g.arg()).sin_cos();
    let gm = p.g.norm();
    let da = (-2.0 * p.delta * p.omega * omega * a - gm * s) / (2.0 * omega);
    let dth = (p.omega * p.omega - omega * omega - gm * c / a.max(a_floor)) / (2.0 * omega);
    (da, dth)
}

/// `(ȧ, Θ̇)` at `state`. Autonomous: `Θ̇ = 0`, `ȧ = −δ̃ω̃a`. Forced: the polar
/// form with `Ω = φ̇_e(t)` and `1/a` clamped at `1/a_floor`.
pub fn slowflow_rhs(state: &SlowFlowState, config: &SlowFlowConfig) -> Result<(f64, f64)> {
    let p = config.properties(state.a)?;
    match &config.forcing {
        None => Ok((-p.delta * p.omega * state.a, 0.0)),
        Some(f) => {
            let (_, omega) = f.phase_at(state.t);
            Ok(polar_rhs(&p, state.a, state.theta, omega, config.a_floor()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowSample {
    pub t: f64,
    pub a: f64,
    /// Unwrapped slow phase.
    pub theta: f64,
    /// Fast-phase rate `Ω = φ̇`.
    pub omega: f64,
    /// Fast phase `φ`.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowTrajectory {
    pub samples: Vec<SlowSample>,
    pub stats: OdeStats,
}

/// Integrates the slow flow from `initial` and reports it at `t_out`
/// (ascending, starting at or after `initial.t`).
pub fn integrate_slowflow(
    config: &SlowFlowConfig,
    initial: SlowFlowState,
    t_out: &[f64],
) -> Result<SlowTrajectory> {
    if !(initial.a >= 0.0) {
        return Err(Error::InvalidConfig("initial amplitude must be >= 0".into()));
    }
    let opts = OdeOptions {
        stiffness_hint: Some("slow flow".into()),
        ..OdeOptions::with_tolerances(config.rel_tol, config.abs_tol)
    };
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let props = |a: f64| -> Option<Modified> {
        match config.properties(a) {
            Ok(p) => Some(p),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                None
            }
        }
    };
    let t0 = initial.t;
    let result = match &config.forcing {
        None => ode::integrate(
            |_, y, dy| match props(y[0].max(0.0)) {
                Some(p) => {
                    dy[0] = -p.delta * p.omega * y[0];
                    dy[1] = p.omega;
                }
                None => dy.fill(f64::NAN),
            },
            t0,
            &[initial.a, 0.0],
            t_out,
            &opts,
        )
        .map(|sol| {
            let samples = sol
                .t
                .iter()
                .zip(&sol.y)
                .map(|(&t, y)| SlowSample {
                    t,
                    a: y[0].max(0.0),
                    theta: initial.theta,
                    omega: config.properties(y[0].max(0.0)).map_or(f64::NAN, |p| p.omega),
                    phi: y[1],
                })
                .collect();
            SlowTrajectory {
                samples,
                stats: sol.stats,
            }
        }),
        Some(f) => {
            let (_, w0) = f.phase_at(t0);
            let w1 = t_out.last().map_or(w0, |&t| f.phase_at(t).1);
            if !(w0 > 0.0 && w1 > 0.0) {
                return Err(Error::InvalidConfig(
                    "excitation frequency must stay positive over the span".into(),
                ));
            }
            let z0 = Complex64::from_polar(initial.a, initial.theta);
            ode::integrate(
                |t, y, dy| {
                    let z = Complex64::new(y[0], y[1]);
                    let Some(p) = props(z.norm()) else {
                        dy.fill(f64::NAN);
                        return;
                    };
                    let (_, w) = f.phase_at(t);
                    let lin = Complex64::new(-2.0 * p.delta * p.omega * w, p.omega * p.omega - w * w);
                    let dz = (lin * z - Complex64::i() * p.g) / (2.0 * w);
                    dy[0] = dz.re;
                    dy[1] = dz.im;
                },
                t0,
                &[z0.re, z0.im],
                t_out,
                &opts,
            )
            .map(|sol| {
                let mut theta_prev = initial.theta;
                let samples = sol
                    .t
                    .iter()
                    .zip(&sol.y)
                    .map(|(&t, y)| {
                        let z = Complex64::new(y[0], y[1]);
                        let a = z.norm();
                        let theta = if a > 0.0 {
                            let raw = z.arg();
                            raw + TAU * ((theta_prev - raw) / TAU).round()
                        } else {
                            theta_prev
                        };
                        theta_prev = theta;
                        let (phi, omega) = f.phase_at(t);
                        SlowSample {
                            t,
                            a,
                            theta,
                            omega,
                            phi,
                        }
                    })
                    .collect();
                SlowTrajectory {
                    samples,
                    stats: sol.stats,
                }
            })
        }
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    result
}

/// Physical response synthesized from a slow trajectory at selected DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedResponse {
    pub t: Vec<f64>,
    pub dofs: Vec<usize>,
    /// `u[d][k]` at DOF `dofs[d]` and time `t[k]`.
    pub u: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
}

/// Max and min over `φ` of `a Re Σ Ψₙ e^{inφ}` at one DOF.
pub fn envelope_extremes(psi: &[Complex64], a: f64) -> (f64, f64) {
    const GRID: usize = 64;
    let value = |phi: f64| -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        let step = Complex64::from_polar(1.0, phi);
        let mut e = Complex64::new(1.0, 0.0);
        for (n, p) in psi.iter().enumerate() {
            let w = p * e;
            let nf = n as f64;
            v += w.re;
            d1 -= nf * w.im;
            d2 -= nf * nf * w.re;
            e *= step;
        }
        (a * v, a * d1, a * d2)
    };
    let samples: Vec<f64> = (0..GRID).map(|j| value(TAU * j as f64 / GRID as f64).0).collect();
    let polish = |j: usize| {
        let mut phi = TAU * j as f64 / GRID as f64;
        let mut best = value(phi).0;
        for _ in 0..8 {
            let (_, d1, d2) = value(phi);
            if d2 == 0.0 {
                break;
            }
            let step = (-d1 / d2).clamp(-PI / GRID as f64, PI / GRID as f64);
            phi += step;
            best = value(phi).0;
            if step.abs() < 1e-14 {
                break;
            }
        }
        best
    };
    let (mut jmax, mut jmin) = (0, 0);
    for j in 1..GRID {
        if samples[j] > samples[jmax] {
            jmax = j;
        }
        if samples[j] < samples[jmin] {
            jmin = j;
        }
    }
    let hi = polish(jmax).max(samples[jmax]);
    let lo = polish(jmin).min(samples[jmin]);
    (hi, lo)
}

/// `u(t) = a Re Σ Ψₙ(a) e^{in(φ+Θ)}` together with the frozen-amplitude
/// upper and lower envelopes.
pub fn synthesize_response(
    table: &ModalTable,
    trajectory: &SlowTrajectory,
    dofs: &[usize],
) -> Result<SynthesizedResponse> {
    if let Some(&d) = dofs.iter().find(|&&d| d >= table.n_dof()) {
        return Err(Error::InvalidConfig(format!("DOF {d} out of range")));
    }
    let k = trajectory.samples.len();
    let mut out = SynthesizedResponse {
        t: trajectory.samples.iter().map(|s| s.t).collect(),
        dofs: dofs.to_vec(),
        u: vec![Vec::with_capacity(k); dofs.len()],
        upper: vec![Vec::with_capacity(k); dofs.len()],
        lower: vec![Vec::with_capacity(k); dofs.len()],
    };
    for s in &trajectory.samples {
        let m = table.interpolate(s.a)?;
        for (d, &dof) in dofs.iter().enumerate() {
            out.u[d].push(m.harmonics.displacement_at(dof, s.a, s.phi + s.theta));
            let psi: Vec<Complex64> = m.harmonics.coefficients.iter().map(|c| c[dof]).collect();
            let (hi, lo) = envelope_extremes(&psi, s.a);
            out.upper[d].push(hi);
            out.lower[d].push(lo);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub omega: f64,
    pub a: f64,
    pub theta: f64,
}

/// Subdivisions of every table interval in the root scan.
const SCAN_REFINEMENT: usize = 8;

/// All `(a, Θ)` with `ȧ = Θ̇ = 0` at constant excitation frequency `omega`.
/// Roots of `(2δ̃ω̃Ωa)² + (a(ω̃² − Ω²))² − |g|²` are bracketed on a
/// refinement of the table grid (starting from `a = 0`), polished, and `Θ`
/// follows from the two balance equations.
pub fn steady_state_solutions(config: &SlowFlowConfig, omega: f64) -> Result<Vec<SteadyState>> {
    if config.forcing.is_none() {
        return Err(Error::InvalidConfig("steady states need a forcing".into()));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidConfig("excitation frequency must be > 0".into()));
    }
    let h = |a: f64| -> Result<f64> {
        let p = config.properties(a)?;
        let re = a * (p.omega * p.omega - omega * omega);
        let im = 2.0 * p.delta * p.omega * omega * a;
        Ok(re * re + im * im - p.g.norm_sqr())
    };
    let nodes: Vec<f64> = config.table.entries().iter().map(|e| e.a).collect();
    let mut grid = vec![0.0];
    for (k, &a) in nodes.iter().enumerate() {
        let prev = if k == 0 { 0.0 } else { nodes[k - 1] };
        for s in 1..=SCAN_REFINEMENT {
            let x = prev + (a - prev) * s as f64 / SCAN_REFINEMENT as f64;
            if s == SCAN_REFINEMENT {
                grid.push(a);
            } else {
                grid.push(x);
            }
        }
    }
    let mut roots = Vec::new();
    let mut hv: Vec<f64> = Vec::with_capacity(grid.len());
    for &a in &grid {
        hv.push(h(a)?);
    }
    for k in 0..grid.len() - 1 {
        if hv[k] == 0.0 && grid[k] > 0.0 {
            roots.push(grid[k]);
        } else if hv[k] * hv[k + 1] < 0.0 {
            roots.push(bracketed_root(&h, grid[k], grid[k + 1], hv[k], hv[k + 1])?);
        }
    }
    if hv.last() == Some(&0.0) {
        roots.push(*grid.last().unwrap());
    }
    roots
        .into_iter()
        .map(|a| {
            let p = config.properties(a)?;
            let phase = Complex64::new(a * (p.omega * p.omega - omega * omega), -2.0 * p.delta * p.omega * omega * a);
            Ok(SteadyState {
                omega,
                a,
                theta: (p.g.arg() + phase.arg()).rem_euclid(TAU),
            })
        })
        .collect()
}

/// Illinois-modified regula falsi.
fn bracketed_root(h: &impl Fn(f64) -> Result<f64>, mut x0: f64, mut x1: f64, mut f0: f64, mut f1: f64) -> Result<f64> {
    let mut side = 0;
    for _ in 0..200 {
        let x = (x0 * f1 - x1 * f0) / (f1 - f0);
        let fx = h(x)?;
        if fx == 0.0 || (x1 - x0).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if fx * f1 < 0.0 {
            x0 = x1;
            f0 = f1;
            side = 0;
        } else {
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        }
        x1 = x;
        f1 = fx;
    }
    Ok(x1)
}

/// `(ȧ, Θ̇)` of a steady state under its own constant frequency.
pub fn steady_state_rhs(config: &SlowFlowConfig, s: &SteadyState) -> Result<(f64, f64)> {
    let p = config.properties(s.a)?;
    Ok(polar_rhs(&p, s.a, s.theta, s.omega, config.a_floor()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hbm::HarmonicSet;
    use crate::model::PhaseProgram;
    use crate::nma::{Eigenpair, TableProvenance};
    use proptest::prelude::*;

    /// Tabulated linear 1-DOF oscillator with unit mass and stiffness.
    fn linear_table() -> ModalTable {
        let entries = [1e-3, 0.1, 1.0, 10.0]
            .iter()
            .map(|&a| {
                let mut h = HarmonicSet::zeros(1, 1);
                h.coefficients[1][0] = Complex64::new(1.0, 0.0);
                Eigenpair {
                    a,
                    omega0: 1.0,
                    delta: 0.0,
                    harmonics: h,
                }
            })
            .collect();
        ModalTable::new(
            entries,
            TableProvenance {
                model_hash: String::new(),
                mode_index: 0,
                n_dof: 1,
                n_harmonics: 1,
                n_samples: 64,
                newton_tol: 1e-9,
                frequency_scale: 1.0,
            },
        )
        .unwrap()
    }

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn forced(d: f64, fhat: f64, omega: f64) -> SlowFlowConfig {
        SlowFlowConfig::new(
            linear_table(),
            scalar(0.0),
            scalar(2.0 * d),
            Some(ForcingSpec {
                amplitude: vec![fhat],
                phase: PhaseProgram::Constant { omega },
            }),
        )
        .unwrap()
    }

    #[test]
    fn modified_properties() {
        let t = linear_table();
        let (w, d) = modified_modal_properties(&t, 0.5, &scalar(0.0), &scalar(0.0)).unwrap();
        assert_eq!((w, d), (1.0, 0.0));
        let (w, _) = modified_modal_properties(&t, 0.5, &scalar(0.21), &scalar(0.0)).unwrap();
        assert!((w - 1.1).abs() < 1e-15);
        let (_, d) = modified_modal_properties(&t, 0.5, &scalar(0.0), &scalar(0.1)).unwrap();
        assert!((d - 0.05).abs() < 1e-15);
        assert!(matches!(
            modified_modal_properties(&t, 0.5, &scalar(-1.0), &scalar(0.0)),
            Err(Error::NegativeFrequency { .. })
        ));
    }

    #[test]
    fn autonomous_linear_decay() {
        let cfg = SlowFlowConfig::new(linear_table(), scalar(0.0), scalar(0.1), None).unwrap();
        let t = ode::linspace(0.0, 20.0, 40);
        let traj = integrate_slowflow(&cfg, SlowFlowState { a: 2.0, theta: 0.3, t: 0.0 }, &t).unwrap();
        for s in &traj.samples {
            assert!((s.a - 2.0 * (-0.05 * s.t).exp()).abs() < 1e-8);
            assert_eq!(s.theta, 0.3);
            assert!((s.phi - s.t).abs() < 1e-9);
        }
    }

    #[test]
    fn conservative_autonomous_amplitude_is_constant() {
        let cfg = SlowFlowConfig::new(linear_table(), scalar(0.0), scalar(0.0), None).unwrap();
        let traj = integrate_slowflow(&cfg, SlowFlowState { a: 0.7, theta: 0.0, t: 0.0 }, &[50.0]).unwrap();
        assert_eq!(traj.samples[0].a, 0.7);
    }

    #[test]
    fn linear_frf_and_long_time_limit() {
        let (d, fhat, omega) = (0.05, 0.02, 0.97);
        let cfg = forced(d, fhat, omega);
        let exact = fhat / ((1.0 - omega * omega).powi(2) + (2.0 * d * omega).powi(2)).sqrt();
        let sols = steady_state_solutions(&cfg, omega).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0].a / exact - 1.0).abs() < 1e-12);
        let (da, dth) = steady_state_rhs(&cfg, &sols[0]).unwrap();
        assert!(da.abs() < 1e-9 && dth.abs() < 1e-9);
        let traj = integrate_slowflow(&cfg, SlowFlowState::rest(0.0), &[800.0]).unwrap();
        assert!((traj.samples[0].a / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_steady_state_far_above_resonance() {
        let cfg = forced(0.05, 1e-3, 3.0);
        let sols = steady_state_solutions(&cfg, 3.0).unwrap();
        assert_eq!(sols.len(), 1);
        assert!(sols[0].a < 1e-3);
    }

    #[test]
    fn single_harmonic_envelope() {
        let t = linear_table();
        let traj = SlowTrajectory {
            samples: vec![SlowSample { t: 0.0, a: 0.4, theta: 0.0, omega: 1.0, phi: 0.0 }],
            stats: OdeStats::default(),
        };
        let r = synthesize_response(&t, &traj, &[0]).unwrap();
        assert!((r.upper[0][0] - 0.4).abs() < 1e-15);
        assert!((r.lower[0][0] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn envelope_of_multiharmonic_shape() {
        let psi = [Complex64::new(-0.1, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.0)];
        let (hi, lo) = envelope_extremes(&psi, 2.0);
        let f = |p: f64| 2.0 * (-0.1 + p.cos() + 0.3 * (2.0 * p).cos());
        let dense: Vec<f64> = (0..100_000).map(|j| f(TAU * j as f64 / 100_000.0)).collect();
        let m = dense.iter().cloned().fold(f64::MIN, f64::max);
        let n = dense.iter().cloned().fold(f64::MAX, f64::min);
        assert!((hi - m).abs() < 1e-9 && (lo - n).abs() < 1e-9);
        assert!(hi.abs() != lo.abs());
    }

    proptest! {
        #[test]
        fn rhs_is_two_pi_periodic_in_theta(a in 0.01f64..5.0, theta in -10.0f64..10.0, t in 0.0f64..50.0) {
            let cfg = forced(0.03, 0.1, 1.1);
            let s = SlowFlowState { a, theta, t };
            let s2 = SlowFlowState { theta: theta + TAU, ..s };
            let (x, y) = slowflow_rhs(&s, &cfg).unwrap();
            let (x2, y2) = slowflow_rhs(&s2, &cfg).unwrap();
            prop_assert!((x - x2).abs() <= 1e-12 * (1.0 + x.abs()));
            prop_assert!((y - y2).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
