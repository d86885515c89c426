//! Period-grid Fourier machinery: multiharmonic synthesis and the
//! alternating frequency-time (AFT) evaluation of nonlinear force
//! coefficients.
//!
//! Normalization: a real signal `c(τ) = Re Σ Cₙ e^{inτ}` has coefficients
//! `C₀ = mean(c)` and `Cₙ = (2/Nt) Σ c(τⱼ) e^{−inτⱼ}` for `n ≥ 1`, so feeding
//! `cos nτ` returns exactly 1. Displacements use the same convention,
//! `u(τ) = a Re Σ Ψₙ e^{inτ}`, which keeps the inertia and force rows of the
//! eigenproblem on the same scale.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{self, ElementKind, MechanicalModel};

#[derive(Debug, Clone)]
pub struct HarmonicConfig {
    n_harmonics: usize,
    n_samples: usize,
    cos: Arc<[f64]>,
    sin: Arc<[f64]>,
}

impl PartialEq for HarmonicConfig {
    fn eq(&self, other: &Self) -> bool {
        self.n_harmonics == other.n_harmonics && self.n_samples == other.n_samples
    }
}

impl HarmonicConfig {
    /// Default sampling: `max(64, next power of two ≥ 8(Nh+1))`.
    pub fn new(n_harmonics: usize) -> Result<Self> {
        let nt = (8 * (n_harmonics + 1)).next_power_of_two().max(64);
        Self::with_samples(n_harmonics, nt)
    }

    pub fn with_samples(n_harmonics: usize, n_samples: usize) -> Result<Self> {
        if n_harmonics == 0 {
            return Err(Error::InvalidConfig("at least one harmonic is required".into()));
        }
        if !n_samples.is_power_of_two() || n_samples < 4 * (n_harmonics + 1) {
            return Err(Error::InvalidConfig(format!(
                "{n_samples} samples per period: need a power of two >= {}",
                4 * (n_harmonics + 1)
            )));
        }
        let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n_samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n_samples as f64;
                (t.cos(), t.sin())
            })
            .unzip();
        Ok(HarmonicConfig {
            n_harmonics,
            n_samples,
            cos: cos.into(),
            sin: sin.into(),
        })
    }

    pub fn n_harmonics(&self) -> usize {
        self.n_harmonics
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    #[inline]
    fn cs(&self, n: usize, j: usize) -> (f64, f64) {
        let k = (n * j) % self.n_samples;
        (self.cos[k], self.sin[k])
    }

    /// Coefficients `C₀..C_Nh` of one sampled period.
    pub fn project(&self, samples: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(samples.len(), self.n_samples);
        let nt = self.n_samples as f64;
        (0..=self.n_harmonics)
            .map(|n| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &c) in samples.iter().enumerate() {
                    let (co, si) = self.cs(n, j);
                    re += c * co;
                    im -= c * si;
                }
                let scale = if n == 0 { 1.0 / nt } else { 2.0 / nt };
                Complex64::new(re * scale, im * scale)
            })
            .collect()
    }
}

/// Harmonic components `Ψ₀..Ψ_Nh`, each a complex vector over the DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSet {
    pub coefficients: Vec<Vec<Complex64>>,
}

impl HarmonicSet {
    pub fn zeros(n_harmonics: usize, n_dof: usize) -> Self {
        HarmonicSet {
            coefficients: vec![vec![Complex64::new(0.0, 0.0); n_dof]; n_harmonics + 1],
        }
    }

    pub fn n_harmonics(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn n_dof(&self) -> usize {
        self.coefficients.first().map_or(0, |c| c.len())
    }

    pub fn fundamental(&self) -> &[Complex64] {
        &self.coefficients[1]
    }

    /// `a Re Σ Ψₙ e^{inθ}` at one DOF.
    pub fn displacement_at(&self, dof: usize, a: f64, theta: f64) -> f64 {
        a * self
            .coefficients
            .iter()
            .enumerate()
            .map(|(n, psi)| {
                let (s, c) = (n as f64 * theta).sin_cos();
                psi[dof].re * c - psi[dof].im * s
            })
            .sum::<f64>()
    }

    /// `a Re Σ i n ω Ψₙ e^{inθ}` at one DOF.
    pub fn velocity_at(&self, dof: usize, a: f64, omega: f64, theta: f64) -> f64 {
        -a * omega
            * self
                .coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, psi)| {
                    let (s, c) = (n as f64 * theta).sin_cos();
                    n as f64 * (psi[dof].re * s + psi[dof].im * c)
                })
                .sum::<f64>()
    }
}

/// One period of displacement and velocity samples, stored per DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSamples {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn synthesize_dof(
    h: &HarmonicSet,
    dof: usize,
    a: f64,
    omega: f64,
    cfg: &HarmonicConfig,
) -> (Vec<f64>, Vec<f64>) {
    let nt = cfg.n_samples;
    let nh = h.n_harmonics().min(cfg.n_harmonics);
    let mut u = vec![0.0; nt];
    let mut v = vec![0.0; nt];
    for n in 0..=nh {
        let psi = h.coefficients[n][dof];
        if psi.re == 0.0 && psi.im == 0.0 {
            continue;
        }
        let nw = n as f64 * omega;
        for j in 0..nt {
            let (c, s) = cfg.cs(n, j);
            u[j] += a * (psi.re * c - psi.im * s);
            v[j] -= a * nw * (psi.re * s + psi.im * c);
        }
    }
    (u, v)
}

/// Samples `u_p(τⱼ)`, `u̇_p(τⱼ)` at `τⱼ = 2πj/Nt` over one period.
pub fn synthesize_periodic(
    h: &HarmonicSet,
    a: f64,
    omega: f64,
    cfg: &HarmonicConfig,
) -> PeriodicSamples {
    let (u, v) = (0..h.n_dof())
        .map(|d| synthesize_dof(h, d, a, omega, cfg))
        .unzip();
    PeriodicSamples { u, v }
}

/// Harmonic `n` of a sampled period with the module normalization.
pub fn fourier_coefficient(samples: &[f64], n: usize) -> Result<Complex64> {
    let nt = samples.len();
    if nt == 0 || 2 * n >= nt {
        return Err(Error::Aliasing {
            harmonic: n,
            samples: nt,
        });
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &c) in samples.iter().enumerate() {
        let k = (n * j) % nt;
        let t = 2.0 * PI * k as f64 / nt as f64;
        re += c * t.cos();
        im -= c * t.sin();
    }
    let scale = if n == 0 { 1.0 } else { 2.0 } / nt as f64;
    Ok(Complex64::new(re * scale, im * scale))
}

/// `Fₙ = ⟨f(u_p, u̇_p), e^{inωt}⟩` for `n = 0..Nh`, one complex vector per
/// harmonic. The linear part `K u` is applied exactly in the frequency
/// domain; elements are evaluated on the time grid.
pub fn aft_force_coefficients(
    model: &MechanicalModel,
    h: &HarmonicSet,
    a: f64,
    omega: f64,
    cfg: &HarmonicConfig,
) -> Result<Vec<Vec<Complex64>>> {
    let n = model.n_dof();
    let nh = cfg.n_harmonics;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; nh + 1];
    for (k, row) in out.iter_mut().enumerate() {
        let Some(psi) = h.coefficients.get(k) else {
            continue;
        };
        for (i, r) in row.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, p) in psi.iter().enumerate() {
                let kij = model.base_stiffness[(i, j)];
                if kij != 0.0 {
                    acc += p * kij;
                }
            }
            *r = acc * a;
        }
    }
    if model.elements.is_empty() {
        return Ok(out);
    }
    let mut cache: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; n];
    let mut forces = vec![0.0; cfg.n_samples];
    for e in &model.elements {
        let (u, v) = cache[e.input_dof]
            .get_or_insert_with(|| synthesize_dof(h, e.input_dof, a, omega, cfg));
        match e.kind {
            ElementKind::DahlFriction {
                tangent_stiffness,
                limit_force,
                shape,
            } => {
                if !(omega > 0.0) {
                    return Err(Error::InvalidConfig(
                        "Dahl elements need a positive frequency".into(),
                    ));
                }
                periodic_dahl(u, tangent_stiffness, limit_force, shape, &mut forces)?;
            }
            ref kind => {
                for j in 0..cfg.n_samples {
                    forces[j] = model::element_force_unchecked(kind, u[j], v[j], 0.0);
                }
            }
        }
        let coeffs = cfg.project(&forces);
        for (k, c) in coeffs.iter().enumerate() {
            for (i, w) in e.force_map.iter().enumerate() {
                if *w != 0.0 {
                    out[k][i] += c * *w;
                }
            }
        }
    }
    Ok(out)
}

/// Cap on marched periods for the general Dahl exponent.
pub const DAHL_MAX_CYCLES: usize = 20;
/// Periodicity threshold relative to the limit force.
pub const DAHL_PERIODIC_TOL: f64 = 1e-8;

/// `−expm1(−x) − x` without cancellation for small `x`.
fn expm1_defect(x: f64) -> f64 {
    if x < 1e-3 {
        let x2 = x * x;
        -x2 * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        -(-x).exp_m1() - x
    }
}

/// Steady hysteresis of a Dahl element driven by the displacement samples
/// `u` of one period (rate independent, so velocity is not needed). The
/// displacement path between samples is taken as linear.
///
/// For `α = 1` every increment is an affine map of the force, so the
/// periodic state is the fixed point of the composed affine cycle map; it is
/// assembled from expm1-based terms so that forces far below `R` keep full
/// relative precision. Other exponents march periods (secant-accelerated)
/// from `f = 0`.
pub(crate) fn periodic_dahl(
    u: &[f64],
    k_t: f64,
    limit: f64,
    shape: f64,
    out: &mut [f64],
) -> Result<()> {
    let nt = u.len();
    let du = |j: usize| u[(j + 1) % nt] - u[j];
    if shape == 1.0 {
        let x: Vec<f64> = (0..nt).map(|j| k_t * du(j).abs() / limit).collect();
        let total: f64 = x.iter().sum();
        let mut b = 0.0;
        let mut tail = 0.0_f64;
        for j in (0..nt).rev() {
            let decay_after = (-tail).exp_m1();
            let s = du(j).signum();
            b += k_t * du(j) * decay_after + s * limit * expm1_defect(x[j]) * (1.0 + decay_after);
            tail += x[j];
        }
        let one_minus_a = -(-total).exp_m1();
        let mut f = if one_minus_a > 0.0 { b / one_minus_a } else { 0.0 };
        for j in 0..nt {
            out[j] = f;
            let s = du(j).signum();
            f += (s * limit - f) * (-(-x[j]).exp_m1());
        }
        return Ok(());
    }
    let q = 1.0 - shape;
    let step = |f: f64, d: f64| -> f64 {
        if d == 0.0 {
            return f;
        }
        let s = d.signum();
        let g = (1.0 - s * f / limit).max(0.0);
        let gq = g.powf(q) - q * k_t * d.abs() / limit;
        let g_new = if q > 0.0 {
            gq.max(0.0).powf(1.0 / q)
        } else if g == 0.0 {
            0.0
        } else {
            gq.powf(1.0 / q)
        };
        s * limit * (1.0 - g_new)
    };
    let cycle = |f0: f64, out: &mut [f64]| -> f64 {
        let mut f = f0;
        for j in 0..nt {
            out[j] = f;
            f = step(f, du(j));
        }
        f
    };
    let tol = DAHL_PERIODIC_TOL * limit;
    let mut x0 = 0.0;
    let mut g0 = cycle(x0, out) - x0;
    let mut cycles = 1;
    if g0.abs() < tol {
        return Ok(());
    }
    let mut x1 = x0 + g0;
    loop {
        let g1 = cycle(x1, out) - x1;
        cycles += 1;
        if g1.abs() < tol {
            return Ok(());
        }
        if cycles >= DAHL_MAX_CYCLES {
            return Err(Error::DahlNotPeriodic {
                cycles,
                mismatch: g1.abs(),
            });
        }
        let slope = (g1 - g0) / (x1 - x0);
        let next = if slope.is_finite() && slope != 0.0 {
            (x1 - g1 / slope).clamp(-limit, limit)
        } else {
            x1 + g1
        };
        (x0, g0, x1) = (x1, g1, next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NonlinearElement;
    use nalgebra::DMatrix;

    fn samples(nt: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..nt).map(|j| f(2.0 * PI * j as f64 / nt as f64)).collect()
    }

    #[test]
    fn default_sampling_rule() {
        assert_eq!(HarmonicConfig::new(1).unwrap().n_samples(), 64);
        assert_eq!(HarmonicConfig::new(9).unwrap().n_samples(), 128);
        assert!(HarmonicConfig::with_samples(7, 16).is_err());
        assert!(HarmonicConfig::with_samples(3, 48).is_err());
    }

    #[test]
    fn coefficients_of_elementary_signals() {
        let c = fourier_coefficient(&samples(64, f64::cos), 1).unwrap();
        assert!((c.re - 1.0).abs() < 1e-14 && c.im.abs() < 1e-14);
        let cube = samples(64, |t| t.cos().powi(3));
        let c1 = fourier_coefficient(&cube, 1).unwrap();
        let c3 = fourier_coefficient(&cube, 3).unwrap();
        assert!((c1.re - 0.75).abs() < 1e-14);
        assert!((c3.re - 0.25).abs() < 1e-14);
        let c0 = fourier_coefficient(&samples(16, |_| 5.0), 0).unwrap();
        assert!((c0.re - 5.0).abs() < 1e-14);
        assert!(matches!(
            fourier_coefficient(&cube, 32),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn single_cosine_synthesis() {
        let cfg = HarmonicConfig::new(1).unwrap();
        let mut h = HarmonicSet::zeros(1, 1);
        h.coefficients[1][0] = Complex64::new(1.0, 0.0);
        let s = synthesize_periodic(&h, 1.0, 1.0, &cfg);
        for j in 0..cfg.n_samples() {
            let t = 2.0 * PI * j as f64 / cfg.n_samples() as f64;
            assert!((s.u[0][j] - t.cos()).abs() < 1e-14);
            assert!((s.v[0][j] + t.sin()).abs() < 1e-14);
        }
        let zero = synthesize_periodic(&h, 0.0, 1.0, &cfg);
        assert!(zero.u[0].iter().chain(&zero.v[0]).all(|&x| x == 0.0));
    }

    #[test]
    fn static_term_is_a_constant_offset() {
        let cfg = HarmonicConfig::new(2).unwrap();
        let mut h = HarmonicSet::zeros(2, 1);
        h.coefficients[0][0] = Complex64::new(0.3, 0.0);
        let s = synthesize_periodic(&h, 2.0, 3.0, &cfg);
        assert!(s.u[0].iter().all(|&x| (x - 0.6).abs() < 1e-15));
        assert!(s.v[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn aft_of_cubic_spring() {
        let kappa = 0.7;
        let a = 1.3;
        let model = MechanicalModel::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![NonlinearElement::grounded(
                ElementKind::CubicSpring { stiffness: kappa },
                0,
                1,
            )],
        )
        .unwrap();
        let cfg = HarmonicConfig::new(3).unwrap();
        let mut h = HarmonicSet::zeros(3, 1);
        h.coefficients[1][0] = Complex64::new(1.0, 0.0);
        let f = aft_force_coefficients(&model, &h, a, 1.0, &cfg).unwrap();
        assert!((f[1][0].re - (a + 0.75 * kappa * a.powi(3))).abs() < 1e-12);
        assert!((f[3][0].re - 0.25 * kappa * a.powi(3)).abs() < 1e-12);
        assert!(f[0][0].norm() < 1e-14 && f[2][0].norm() < 1e-14);
    }

    #[test]
    fn dahl_loop_is_periodic_and_bounded() {
        let nt = 128;
        for &(amp, shape) in &[(1e-9, 1.0), (0.5, 1.0), (3.0, 1.0), (0.5, 2.0), (2.0, 1.5)] {
            let u = samples(nt, |t| amp * t.cos());
            let mut f = vec![0.0; nt];
            periodic_dahl(&u, 10.0, 1.0, shape, &mut f).unwrap();
            assert!(f.iter().all(|x| x.abs() <= 1.0 + 1e-12));
            // one more cycle reproduces the start value
            let mut g = f[nt - 1];
            let d = u[0] - u[nt - 1];
            let s = d.signum();
            if shape == 1.0 {
                g += (s - g) * (-(-10.0 * d.abs()).exp_m1());
                assert!((g - f[0]).abs() <= 1e-12 * (1.0 + f[0].abs()));
            }
        }
    }

    #[test]
    fn small_dahl_loops_are_nearly_elastic() {
        let nt = 64;
        let amp = 1e-8;
        let u = samples(nt, |t| amp * t.cos());
        let mut f = vec![0.0; nt];
        periodic_dahl(&u, 1e6, 100.0, 1.0, &mut f).unwrap();
        for j in 0..nt {
            assert!((f[j] - 1e6 * u[j]).abs() < 1e-3 * 1e6 * amp);
        }
    }

    fn harmonic_set(nh: usize, n_dof: usize, raw: &[f64]) -> HarmonicSet {
        let mut h = HarmonicSet::zeros(nh, n_dof);
        let mut it = raw.iter().copied().cycle();
        for (n, psi) in h.coefficients.iter_mut().enumerate() {
            for c in psi.iter_mut() {
                let re = it.next().unwrap();
                let im = it.next().unwrap();
                *c = Complex64::new(re, if n == 0 { 0.0 } else { im });
            }
        }
        h
    }

    fn single_element(kind: ElementKind) -> MechanicalModel {
        MechanicalModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            vec![NonlinearElement::grounded(kind, 0, 2)],
        )
        .unwrap()
    }

    proptest::proptest! {
        #[test]
        fn parseval_round_trip(
            raw in proptest::collection::vec(-1.0f64..1.0, 32),
            a in 0.01f64..10.0,
            nh in 1usize..8,
        ) {
            let h = harmonic_set(nh, 2, &raw);
            let cfg = HarmonicConfig::new(nh).unwrap();
            let s = synthesize_periodic(&h, a, 1.0, &cfg);
            for d in 0..2 {
                for n in 0..=nh {
                    let c = fourier_coefficient(&s.u[d], n).unwrap();
                    let want = h.coefficients[n][d] * a;
                    proptest::prop_assert!((c - want).norm() <= 1e-12 * (1.0 + a));
                }
            }
        }

        #[test]
        fn aft_is_sample_count_independent_for_cubic_forces(
            raw in proptest::collection::vec(-1.0f64..1.0, 16),
            a in 0.01f64..3.0,
            omega in 0.1f64..5.0,
        ) {
            let nh = 5;
            let model = single_element(ElementKind::CubicSpring { stiffness: 0.8 });
            let h = harmonic_set(nh, 2, &raw);
            // 3·Nh < Nt/2 on both grids
            let f1 = aft_force_coefficients(&model, &h, a, omega, &HarmonicConfig::with_samples(nh, 64).unwrap()).unwrap();
            let f2 = aft_force_coefficients(&model, &h, a, omega, &HarmonicConfig::with_samples(nh, 128).unwrap()).unwrap();
            for (x, y) in f1.iter().flatten().zip(f2.iter().flatten()) {
                proptest::prop_assert!((x - y).norm() <= 1e-10 * (1.0 + x.norm()));
            }
        }

        #[test]
        fn odd_forces_have_no_even_harmonics(
            raw in proptest::collection::vec(-1.0f64..1.0, 16),
            a in 0.01f64..3.0,
            coulomb in proptest::bool::ANY,
        ) {
            let nh = 7;
            let kind = if coulomb {
                ElementKind::CoulombTanh { limit_force: 1.0, regularization: 0.05 }
            } else {
                ElementKind::CubicSpring { stiffness: 0.8 }
            };
            let model = single_element(kind);
            let mut h = harmonic_set(nh, 2, &raw);
            for (n, psi) in h.coefficients.iter_mut().enumerate() {
                if n % 2 == 0 {
                    psi.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                }
            }
            let f = aft_force_coefficients(&model, &h, a, 1.3, &HarmonicConfig::new(nh).unwrap()).unwrap();
            for n in (0..=nh).step_by(2) {
                for c in &f[n] {
                    proptest::prop_assert!(c.norm() <= 1e-12 * (1.0 + a * a * a));
                }
            }
        }

        #[test]
        fn conservative_forces_do_no_work_on_real_shapes(
            raw in proptest::collection::vec(-1.0f64..1.0, 16),
            a in 0.01f64..3.0,
            unilateral in proptest::bool::ANY,
        ) {
            let nh = 5;
            let kind = if unilateral {
                ElementKind::UnilateralSpring { stiffness: 70.0, preload: 0.3 }
            } else {
                ElementKind::CubicSpring { stiffness: 0.8 }
            };
            let model = single_element(kind);
            let mut h = harmonic_set(nh, 2, &raw);
            for psi in h.coefficients.iter_mut() {
                psi.iter_mut().for_each(|c| c.im = 0.0);
            }
            let f = aft_force_coefficients(&model, &h, a, 1.0, &HarmonicConfig::new(nh).unwrap()).unwrap();
            let work = crate::linalg::herm_dot(h.fundamental(), &f[1]);
            proptest::prop_assert!(work.im.abs() <= 1e-10 * (1.0 + work.re.abs()));
        }
    }
}
