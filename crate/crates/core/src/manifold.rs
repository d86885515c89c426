//! States on the two-dimensional invariant manifold parameterized by modal
//! amplitude and absolute phase, and closest-point projection onto it.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hbm::{periodic_dahl, HarmonicSet};
use crate::model::{ElementKind, MechanicalModel};
use crate::nma::ModalTable;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub a: f64,
    pub phi_abs: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `a` lay outside the table range.
    pub clamped: bool,
}

/// `u = a Re Σ Ψₙ e^{inφ}`, `u̇ = a Re Σ inΩ Ψₙ e^{inφ}`: only the phase is
/// differentiated.
fn synth(h: &HarmonicSet, a: f64, phi: f64, omega: f64) -> (Vec<f64>, Vec<f64>) {
    let n = h.n_dof();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for (k, psi) in h.coefficients.iter().enumerate() {
        let e = Complex64::from_polar(1.0, k as f64 * phi);
        for i in 0..n {
            let w = psi[i] * e;
            u[i] += a * w.re;
            v[i] -= a * omega * k as f64 * w.im;
        }
    }
    (u, v)
}

/// Manifold state with `Ω = ω₀(a)`.
pub fn synthesize_state(table: &ModalTable, a: f64, phi_abs: f64) -> Result<ManifoldPoint> {
    let m = table.interpolate(a)?;
    let (u, v) = synth(&m.harmonics, a, phi_abs, m.omega0);
    Ok(ManifoldPoint {
        a,
        phi_abs,
        u,
        v,
        clamped: m.clamped,
    })
}

/// Manifold state with an explicit fast-phase rate `Ω` (forced motion).
pub fn synthesize_state_at(table: &ModalTable, a: f64, phi_abs: f64, omega: f64) -> Result<ManifoldPoint> {
    let m = table.interpolate(a)?;
    let (u, v) = synth(&m.harmonics, a, phi_abs, omega);
    Ok(ManifoldPoint {
        a,
        phi_abs,
        u,
        v,
        clamped: m.clamped,
    })
}

/// Hysteretic element states on the manifold: the periodic Dahl force at
/// fast phase `phi_abs` of the frozen-amplitude cycle, one entry per Dahl
/// element in model order.
pub fn hysteretic_states(table: &ModalTable, model: &MechanicalModel, a: f64, phi_abs: f64) -> Result<Vec<f64>> {
    if model.n_dof() != table.n_dof() {
        return Err(Error::Incompatible("model and table DOF counts differ".into()));
    }
    let m = table.interpolate(a)?;
    let nt = table.provenance.n_samples;
    let mut out = Vec::with_capacity(model.n_dahl());
    let mut forces = vec![0.0; nt];
    for e in &model.elements {
        if let ElementKind::DahlFriction {
            tangent_stiffness,
            limit_force,
            shape,
        } = e.kind
        {
            let u: Vec<f64> = (0..nt)
                .map(|j| m.harmonics.displacement_at(e.input_dof, a, phi_abs + TAU * j as f64 / nt as f64))
                .collect();
            periodic_dahl(&u, tangent_stiffness, limit_force, shape, &mut forces)?;
            out.push(forces[0]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub a0: f64,
    /// Slow phase at the projection instant (equal to the absolute phase
    /// when the fast phase starts at zero), in `[0, 2π)`.
    pub theta0: f64,
    /// Attained `‖u₀ + u̇₀/(iΩ) − z(a, θ)‖`.
    pub residual_distance: f64,
}

/// Number of coarse phase samples in the projection search.
pub const PROJECTION_PHASES: usize = 64;

struct Objective<'a> {
    table: &'a ModalTable,
    u0: &'a [f64],
    v0: &'a [f64],
    omega: Option<f64>,
}

impl Objective<'_> {
    /// Complex mismatch `u₀ + u̇₀/(iΩ) − (P + Q/(iΩ))` split into real and
    /// imaginary parts.
    fn residual(&self, a: f64, theta: f64) -> Result<Vec<f64>> {
        let m = self.table.interpolate(a)?;
        let omega = self.omega.unwrap_or(m.omega0);
        let n = self.u0.len();
        let mut r = vec![0.0; 2 * n];
        for i in 0..n {
            r[i] = self.u0[i];
            r[n + i] = -self.v0[i] / omega;
        }
        for (k, psi) in m.harmonics.coefficients.iter().enumerate() {
            let e = Complex64::from_polar(1.0, k as f64 * theta);
            for i in 0..n {
                let w = psi[i] * e;
                r[i] -= a * w.re;
                r[n + i] -= a * k as f64 * w.im;
            }
        }
        Ok(r)
    }

    fn cost(&self, a: f64, theta: f64) -> Result<f64> {
        Ok(self.residual(a, theta)?.iter().map(|x| x * x).sum())
    }
}

/// Closest point on the manifold to the state `(u0, v0)`. `omega` fixes the
/// frequency `Ω` of the complex state; `None` uses `ω₀(a)` of each
/// candidate (autonomous start).
pub fn project_initial_state(
    table: &ModalTable,
    u0: &[f64],
    v0: &[f64],
    omega: Option<f64>,
) -> Result<Projection> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if u0.len() != table.n_dof() || v0.len() != table.n_dof() {
        return Err(Error::InvalidConfig("initial state dimension mismatch".into()));
    }
    if omega.is_some_and(|w| !(w > 0.0)) {
        return Err(Error::InvalidConfig("projection frequency must be > 0".into()));
    }
    let obj = Objective { table, u0, v0, omega };
    let (lo, hi) = (table.a_min(), table.a_max());

    let mut coarse = Vec::with_capacity(table.len() * PROJECTION_PHASES);
    for e in table.entries() {
        for j in 0..PROJECTION_PHASES {
            let th = TAU * j as f64 / PROJECTION_PHASES as f64;
            coarse.push((obj.cost(e.a, th)?, e.a, th));
        }
    }
    coarse.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut best = (f64::INFINITY, lo, 0.0);
    for &(c0, a, th) in coarse.iter().take(4) {
        let (c, a, th) = refine(&obj, a, th, c0, lo, hi)?;
        if c < best.0 {
            best = (c, a, th);
        }
    }
    Ok(Projection {
        a0: best.1,
        theta0: best.2.rem_euclid(TAU),
        residual_distance: best.0.max(0.0).sqrt(),
    })
}

/// Levenberg–Marquardt on `(a, θ)` with box constraint on `a`.
fn refine(obj: &Objective, mut a: f64, mut th: f64, mut cost: f64, lo: f64, hi: f64) -> Result<(f64, f64, f64)> {
    let mut mu = 1e-6;
    for _ in 0..200 {
        if cost == 0.0 {
            break;
        }
        let r = obj.residual(a, th)?;
        let ha = 1e-7 * a.abs().max(lo);
        let ht = 1e-7;
        let (a_p, a_m) = ((a + ha).min(hi), (a - ha).max(lo));
        let ra_p = obj.residual(a_p, th)?;
        let ra_m = obj.residual(a_m, th)?;
        let rt_p = obj.residual(a, th + ht)?;
        let rt_m = obj.residual(a, th - ht)?;
        let ja: Vec<f64> = ra_p.iter().zip(&ra_m).map(|(p, m)| (p - m) / (a_p - a_m)).collect();
        let jt: Vec<f64> = rt_p.iter().zip(&rt_m).map(|(p, m)| (p - m) / (2.0 * ht)).collect();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let jtj = Matrix2::new(dot(&ja, &ja), dot(&ja, &jt), dot(&jt, &ja), dot(&jt, &jt));
        let g = Vector2::new(dot(&ja, &r), dot(&jt, &r));
        let mut improved = false;
        for _ in 0..30 {
            let damped = jtj + Matrix2::from_diagonal(&(jtj.diagonal() * mu + Vector2::repeat(1e-300)));
            let Some(step) = damped.lu().solve(&(-g)) else {
                mu *= 10.0;
                continue;
            };
            let a_new = (a + step[0]).clamp(lo, hi);
            let th_new = th + step[1];
            let c_new = obj.cost(a_new, th_new)?;
            if c_new < cost {
                let small = (a_new - a).abs() <= 1e-15 * a.abs().max(lo) && (th_new - th).abs() <= 1e-15;
                a = a_new;
                th = th_new;
                cost = c_new;
                mu = (mu * 0.3).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok((cost, a, th))
}

/// Displacement of one DOF over an `a × φ` grid, row-major in `a`.
pub fn manifold_grid(table: &ModalTable, amplitudes: &[f64], phases: &[f64], dof: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(amplitudes.len() * phases.len());
    for &a in amplitudes {
        let m = table.interpolate(a)?;
        for &p in phases {
            out.push(m.harmonics.displacement_at(dof, a, p));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElementKind, MechanicalModel, NonlinearElement};
    use crate::nma::{continue_modal_table, AmplitudeGrid, NmaConfig};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn cubic_chain_table() -> &'static ModalTable {
        static T: OnceLock<ModalTable> = OnceLock::new();
        T.get_or_init(|| {
            let model = MechanicalModel::new(
                DMatrix::identity(2, 2),
                DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
                vec![NonlinearElement::grounded(ElementKind::CubicSpring { stiffness: 0.5 }, 0, 2)],
            )
            .unwrap();
            let cfg = NmaConfig::new(0, 5, AmplitudeGrid::Log { min: 1e-2, max: 2.0, points: 16 }).unwrap();
            continue_modal_table(&model, &cfg).unwrap()
        })
    }

    #[test]
    fn origin_and_peak_states() {
        let t = cubic_chain_table();
        let p = synthesize_state(t, 0.0, 1.3).unwrap();
        assert!(p.u.iter().chain(&p.v).all(|&x| x == 0.0));
        let q = project_initial_state(t, &[0.0, 0.0], &[0.0, 0.0], None).unwrap();
        assert_eq!(q.a0, t.a_min());
        // the closest point is the smallest tabulated orbit, |Ψ₁| = 1 for M = I
        assert!(q.residual_distance <= 1.01 * t.a_min());
    }

    #[test]
    fn synthesis_is_two_pi_periodic() {
        let t = cubic_chain_table();
        let p = synthesize_state(t, 0.8, 0.4).unwrap();
        let q = synthesize_state(t, 0.8, 0.4 + TAU).unwrap();
        for (x, y) in p.u.iter().zip(&q.u).chain(p.v.iter().zip(&q.v)) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn other_modes_are_off_manifold() {
        let t = cubic_chain_table();
        let s = 0.5 / 2f64.sqrt();
        let q = project_initial_state(t, &[s, -s], &[0.0, 0.0], None).unwrap();
        assert!(q.residual_distance > 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn projection_round_trip(a in 0.02f64..1.9, phi in 0.0f64..TAU) {
            let t = cubic_chain_table();
            let p = synthesize_state(t, a, phi).unwrap();
            let q = project_initial_state(t, &p.u, &p.v, None).unwrap();
            let dphi = (q.theta0 - phi + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
            prop_assert!((q.a0 - a).abs() < 1e-6 * a.max(1.0), "{} vs {}", q.a0, a);
            prop_assert!(dphi.abs() < 1e-6);
            prop_assert!(q.residual_distance < 1e-8);
        }
    }
}
