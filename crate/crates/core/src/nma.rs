//! Amplitude-dependent complex modes: the multiharmonic eigenproblem at a
//! fixed modal amplitude, its Newton solution, and continuation in the
//! amplitude.
//!
//! Unknowns are packed as `[ω₀, δ, Ψ₀ (real), Re Ψ₁, Im Ψ₁, …, Re Ψ_Nh, Im Ψ_Nh]`.
//! The residual rows are
//!
//! * `n = 0`: `F₀ / a` (real, static balance),
//! * `n ≥ 1`: `(nλ)² M Ψₙ + Fₙ / a` with `λ = −δω₀ + iω₀√(1−δ²)` and
//!   `Fₙ` the AFT coefficients of the periodic forms at `ω₀`,
//! * `Ψ₁ᴴ M Ψ₁ − 1` and `Im(Ψ_refᴴ M Ψ₁)` (phase vector `t = i M Ψ_ref`).
//!
//! Dynamic rows are divided by `ω_s²` (the `frequency_scale`, by default the
//! seeding linear frequency) so the Newton tolerance is dimensionless.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hbm::{self, HarmonicConfig, HarmonicSet};
use crate::interp;
use crate::linalg;
use crate::model::{self, ElementKind, MechanicalModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub a: f64,
    pub omega0: f64,
    pub delta: f64,
    pub harmonics: HarmonicSet,
}

impl Eigenpair {
    /// `λ = −δω₀ + iω₀√(1−δ²)`
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(
            -self.delta * self.omega0,
            self.omega0 * (1.0 - self.delta * self.delta).max(0.0).sqrt(),
        )
    }

    pub fn fundamental(&self) -> &[Complex64] {
        self.harmonics.fundamental()
    }

    fn pack(&self) -> Vec<f64> {
        let h = &self.harmonics.coefficients;
        let mut x = Vec::with_capacity(unknown_count(self.harmonics.n_dof(), h.len() - 1));
        x.push(self.omega0);
        x.push(self.delta);
        x.extend(h[0].iter().map(|c| c.re));
        for psi in &h[1..] {
            x.extend(psi.iter().map(|c| c.re));
            x.extend(psi.iter().map(|c| c.im));
        }
        x
    }

    fn unpack(a: f64, x: &[f64], n_dof: usize, nh: usize) -> Self {
        let mut h = HarmonicSet::zeros(nh, n_dof);
        for i in 0..n_dof {
            h.coefficients[0][i] = Complex64::new(x[2 + i], 0.0);
        }
        for k in 1..=nh {
            let base = 2 + n_dof + 2 * n_dof * (k - 1);
            for i in 0..n_dof {
                h.coefficients[k][i] = Complex64::new(x[base + i], x[base + n_dof + i]);
            }
        }
        Eigenpair {
            a,
            omega0: x[0],
            delta: x[1],
            harmonics: h,
        }
    }

    /// Shift by half a period: `Ψₙ → (−1)ⁿ Ψₙ`.
    fn half_period_shift(&mut self) {
        for (n, psi) in self.harmonics.coefficients.iter_mut().enumerate() {
            if n % 2 == 1 {
                psi.iter_mut().for_each(|c| *c = -*c);
            }
        }
    }
}

fn unknown_count(n_dof: usize, nh: usize) -> usize {
    2 + n_dof + 2 * n_dof * nh
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplitudeGrid {
    /// `points` logarithmically spaced values in `[min, max]`.
    Log { min: f64, max: f64, points: usize },
    Explicit(Vec<f64>),
}

impl AmplitudeGrid {
    pub fn nodes(&self) -> Result<Vec<f64>> {
        let nodes = match *self {
            AmplitudeGrid::Log { min, max, points } => {
                if !(min > 0.0 && max > min && points >= 2) {
                    return Err(Error::InvalidConfig(
                        "log amplitude grid needs 0 < min < max and at least 2 points".into(),
                    ));
                }
                let (l0, l1) = (min.ln(), max.ln());
                (0..points)
                    .map(|k| {
                        if k == points - 1 {
                            max
                        } else if k == 0 {
                            min
                        } else {
                            (l0 + (l1 - l0) * k as f64 / (points - 1) as f64).exp()
                        }
                    })
                    .collect()
            }
            AmplitudeGrid::Explicit(ref v) => v.clone(),
        };
        if nodes.is_empty() || nodes[0] <= 0.0 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "amplitude grid must be positive and strictly increasing".into(),
            ));
        }
        Ok(nodes)
    }

    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            AmplitudeGrid::Log { min, max, points } => AmplitudeGrid::Log {
                min: min * s,
                max: max * s,
                points,
            },
            AmplitudeGrid::Explicit(ref v) => AmplitudeGrid::Explicit(v.iter().map(|x| x * s).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmaConfig {
    pub mode_index: usize,
    pub harmonics: HarmonicConfig,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub amplitude_grid: AmplitudeGrid,
    /// Step halvings allowed between two grid nodes before giving up.
    pub max_halvings: usize,
    /// `ω_s` in the row scaling; `None` uses the seeding linear frequency.
    pub frequency_scale: Option<f64>,
    pub execution: Execution,
}

impl NmaConfig {
    pub fn new(mode_index: usize, n_harmonics: usize, amplitude_grid: AmplitudeGrid) -> Result<Self> {
        Ok(NmaConfig {
            mode_index,
            harmonics: HarmonicConfig::new(n_harmonics)?,
            newton_tol: 1e-9,
            max_iter: 30,
            amplitude_grid,
            max_halvings: 10,
            frequency_scale: None,
            execution: Execution::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("newton_tol must be > 0 and max_iter >= 1".into()));
        }
        if let Some(s) = self.frequency_scale {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("frequency_scale must be > 0".into()));
            }
        }
        self.amplitude_grid.nodes().map(|_| ())
    }
}

/// Residual of the eigenproblem at `pair.a` with phase reference `psi_ref`.
pub fn residual(
    pair: &Eigenpair,
    psi_ref: &[Complex64],
    model: &MechanicalModel,
    config: &NmaConfig,
) -> Result<Vec<f64>> {
    let n = model.n_dof();
    let nh = config.harmonics.n_harmonics();
    let a = pair.a;
    let ws = config.frequency_scale.unwrap_or(1.0);
    let row = 1.0 / (ws * ws);
    let f = hbm::aft_force_coefficients(model, &pair.harmonics, a, pair.omega0, &config.harmonics)?;
    let lambda = pair.lambda();
    let mut r = Vec::with_capacity(unknown_count(n, nh));
    r.extend(f[0].iter().map(|c| c.re / a * row));
    for k in 1..=nh {
        let psi = &pair.harmonics.coefficients[k];
        let l2 = (lambda * k as f64).powi(2);
        let m_psi = linalg::mat_cvec(&model.mass, psi);
        let block: Vec<Complex64> = (0..n).map(|i| (l2 * m_psi[i] + f[k][i] / a) * row).collect();
        r.extend(block.iter().map(|c| c.re));
        r.extend(block.iter().map(|c| c.im));
    }
    let psi1 = pair.fundamental();
    r.push(linalg::herm_form(psi1, &model.mass, psi1).re - 1.0);
    r.push(linalg::herm_form(psi_ref, &model.mass, psi1).im);
    Ok(r)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration with a forward-difference Jacobian whose columns
/// are evaluated under `exec`. Returns the converged point, the residual
/// history and the iteration count.
pub(crate) fn newton<F>(
    x0: Vec<f64>,
    f: F,
    tol: f64,
    max_iter: usize,
    exec: Execution,
) -> std::result::Result<(Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>, Option<Error>)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let mut x = x0;
    let mut r = match f(&x) {
        Ok(r) => r,
        Err(e) => return Err((x, Vec::new(), Some(e))),
    };
    let mut norm = inf_norm(&r);
    let mut history = vec![norm];
    let m = x.len();
    for _ in 0..max_iter {
        if norm <= tol {
            return Ok((x, history));
        }
        if !norm.is_finite() {
            break;
        }
        let cols: Vec<Result<Vec<f64>>> = exec.map_range(m, |j| {
            let mut xp = x.clone();
            let h = 1e-7 * (1.0 + x[j].abs());
            xp[j] += h;
            let rp = f(&xp)?;
            Ok(rp.iter().zip(&r).map(|(p, q)| (p - q) / h).collect())
        });
        let mut jac = DMatrix::zeros(r.len(), m);
        for (j, col) in cols.into_iter().enumerate() {
            match col {
                Ok(c) => jac.set_column(j, &DVector::from_vec(c)),
                Err(e) => return Err((x, history, Some(e))),
            }
        }
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let Some(dx) = jac.lu().solve(&rhs) else {
            return Err((x, history, Some(Error::Singular("Newton Jacobian".into()))));
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(xi, d)| xi + step * d).collect();
            if let Ok(rt) = f(&xt) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && nt < norm {
                    x = xt;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        history.push(norm);
        if !accepted {
            break;
        }
    }
    if norm <= tol {
        return Ok((x, history));
    }
    Err((x, history, None))
}

/// Newton solution of the eigenproblem at amplitude `a`, seeded by `guess`.
/// The phase vector is taken from the guess fundamental.
pub fn solve_eigenpair(
    model: &MechanicalModel,
    a: f64,
    guess: &Eigenpair,
    config: &NmaConfig,
) -> Result<Eigenpair> {
    if !(a > 0.0) {
        return Err(Error::InvalidConfig("modal amplitude must be > 0".into()));
    }
    let n = model.n_dof();
    let nh = config.harmonics.n_harmonics();
    if guess.harmonics.n_dof() != n || guess.harmonics.n_harmonics() != nh {
        return Err(Error::InvalidConfig("guess does not match model and harmonic order".into()));
    }
    let mut cfg = config.clone();
    cfg.frequency_scale.get_or_insert(guess.omega0.abs().max(f64::MIN_POSITIVE));
    let psi_ref = guess.fundamental().to_vec();
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        if !(x[1].abs() < 1.0) || !(x[0] > 0.0) {
            return Err(Error::Overdamped { amplitude: a, delta: x[1] });
        }
        residual(&Eigenpair::unpack(a, x, n, nh), &psi_ref, model, &cfg)
    };
    let mut x0 = guess.pack();
    x0[1] = x0[1].clamp(-0.99, 0.99);
    match newton(x0, eval, cfg.newton_tol, cfg.max_iter, cfg.execution) {
        Ok((x, _)) => Ok(Eigenpair::unpack(a, &x, n, nh)),
        Err((x, _, _)) if x[1].abs() >= 1.0 => Err(Error::Overdamped {
            amplitude: a,
            delta: x[1],
        }),
        Err((_, _, Some(e @ (Error::Overdamped { .. } | Error::InvalidConfig(_))))) => Err(e),
        Err((_, history, _)) => Err(Error::NoConvergence {
            amplitude: a,
            iterations: history.len().saturating_sub(1),
            residual: history.last().copied().unwrap_or(f64::NAN),
            history,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub model_hash: String,
    pub mode_index: usize,
    pub n_dof: usize,
    pub n_harmonics: usize,
    pub n_samples: usize,
    pub newton_tol: f64,
    pub frequency_scale: f64,
}

/// Precomputed monotone cubic interpolants over the table amplitudes.
#[derive(Debug, Clone)]
struct TableInterp {
    a: Vec<f64>,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ModalTable {
    entries: Vec<Eigenpair>,
    pub provenance: TableProvenance,
    interp: OnceLock<TableInterp>,
}

impl PartialEq for ModalTable {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.provenance == other.provenance
    }
}

/// Modal properties at an arbitrary amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub a: f64,
    pub omega0: f64,
    pub delta: f64,
    pub harmonics: HarmonicSet,
    /// `a` lay outside the table range and was clamped.
    pub clamped: bool,
}

impl Interpolated {
    pub fn fundamental(&self) -> &[Complex64] {
        self.harmonics.fundamental()
    }
}

impl ModalTable {
    pub fn new(entries: Vec<Eigenpair>, provenance: TableProvenance) -> Result<Self> {
        if entries.windows(2).any(|w| w[1].a <= w[0].a) {
            return Err(Error::InvalidConfig("table amplitudes must increase strictly".into()));
        }
        for e in &entries {
            if e.harmonics.n_dof() != provenance.n_dof
                || e.harmonics.n_harmonics() != provenance.n_harmonics
            {
                return Err(Error::InvalidConfig("table entry dimensions disagree".into()));
            }
        }
        Ok(ModalTable {
            entries,
            provenance,
            interp: OnceLock::new(),
        })
    }

    pub fn entries(&self) -> &[Eigenpair] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_dof(&self) -> usize {
        self.provenance.n_dof
    }

    pub fn n_harmonics(&self) -> usize {
        self.provenance.n_harmonics
    }

    pub fn a_min(&self) -> f64 {
        self.entries.first().map_or(f64::NAN, |e| e.a)
    }

    pub fn a_max(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.a)
    }

    fn interpolant(&self) -> &TableInterp {
        self.interp.get_or_init(|| {
            let a: Vec<f64> = self.entries.iter().map(|e| e.a).collect();
            let mut values = vec![
                self.entries.iter().map(|e| e.omega0).collect::<Vec<_>>(),
                self.entries.iter().map(|e| e.delta).collect(),
            ];
            for k in 0..=self.n_harmonics() {
                for i in 0..self.n_dof() {
                    values.push(self.entries.iter().map(|e| e.harmonics.coefficients[k][i].re).collect());
                    values.push(self.entries.iter().map(|e| e.harmonics.coefficients[k][i].im).collect());
                }
            }
            let slopes = values.iter().map(|y| interp::pchip_slopes(&a, y)).collect();
            TableInterp { a, values, slopes }
        })
    }

    /// Monotone cubic interpolation of `ω₀`, `δ` and every component of
    /// `Ψₙ` (real and imaginary parts separately). Outside the table the end
    /// entries are returned with `clamped` set.
    pub fn interpolate(&self, a: f64) -> Result<Interpolated> {
        if self.entries.is_empty() {
            return Err(Error::EmptyTable);
        }
        let it = self.interpolant();
        let (lo, hi) = (it.a[0], it.a[it.a.len() - 1]);
        let clamped = a < lo || a > hi;
        let t = a.clamp(lo, hi);
        let k = interp::locate(&it.a, t);
        let val = |c: usize| interp::hermite(&it.a, &it.values[c], &it.slopes[c], k, t);
        let (n, nh) = (self.n_dof(), self.n_harmonics());
        let mut h = HarmonicSet::zeros(nh, n);
        for kk in 0..=nh {
            for i in 0..n {
                let c = 2 + 2 * (kk * n + i);
                h.coefficients[kk][i] = Complex64::new(val(c), val(c + 1));
            }
        }
        Ok(Interpolated {
            a,
            omega0: val(0),
            delta: val(1),
            harmonics: h,
            clamped,
        })
    }
}

/// Interpolation of a table; see [`ModalTable::interpolate`].
pub fn interpolate(table: &ModalTable, a: f64) -> Result<Interpolated> {
    table.interpolate(a)
}

/// Linear seed of the branch: mass-normalized linear shape, `ω_lin` and the
/// linearized viscous damping ratio.
pub fn linear_seed(model: &MechanicalModel, config: &NmaConfig, a: f64) -> Result<Eigenpair> {
    let modes = model::linear_modes(model)?;
    let j = config.mode_index;
    if j >= modes.omega.len() {
        return Err(Error::InvalidConfig(format!(
            "mode {j} requested but the model has {} modes",
            modes.omega.len()
        )));
    }
    if modes.omega[j] <= 0.0 {
        return Err(Error::InvalidModel(format!("mode {j} is a rigid-body mode")));
    }
    let mut h = HarmonicSet::zeros(config.harmonics.n_harmonics(), model.n_dof());
    for i in 0..model.n_dof() {
        h.coefficients[1][i] = Complex64::new(modes.shapes[(i, j)], 0.0);
    }
    Ok(Eigenpair {
        a,
        omega0: modes.omega[j],
        delta: modes.damping_ratio[j].clamp(-0.9, 0.9),
        harmonics: h,
    })
}

/// Continuation over the amplitude grid. Each entry is seeded by the
/// previous one; failed steps are bisected geometrically up to
/// `max_halvings` times before a [`Error::PartialTable`] is returned.
pub fn continue_modal_table(model: &MechanicalModel, config: &NmaConfig) -> Result<ModalTable> {
    model.validate()?;
    config.validate()?;
    let nodes = config.amplitude_grid.nodes()?;
    let seed = linear_seed(model, config, nodes[0])?;
    let mut cfg = config.clone();
    let ws = *cfg.frequency_scale.get_or_insert(seed.omega0);
    let provenance = TableProvenance {
        model_hash: model.autonomous_hash(),
        mode_index: cfg.mode_index,
        n_dof: model.n_dof(),
        n_harmonics: cfg.harmonics.n_harmonics(),
        n_samples: cfg.harmonics.n_samples(),
        newton_tol: cfg.newton_tol,
        frequency_scale: ws,
    };
    let mut entries: Vec<Eigenpair> = Vec::with_capacity(nodes.len());
    let mut prev = seed;
    for &target in &nodes {
        let mut a_try = target;
        let mut halvings = 0;
        loop {
            match solve_eigenpair(model, a_try, &prev, &cfg) {
                Ok(mut sol) => {
                    let overlap = linalg::herm_form(prev.fundamental(), &model.mass, sol.fundamental());
                    if overlap.re < 0.0 {
                        sol.half_period_shift();
                    }
                    entries.push(sol.clone());
                    prev = sol;
                    if a_try == target {
                        break;
                    }
                    a_try = target;
                }
                Err(e) => {
                    if entries.is_empty() {
                        return Err(e);
                    }
                    if halvings >= cfg.max_halvings {
                        let converged = entries.len();
                        return Err(Error::PartialTable {
                            converged,
                            failed_at: a_try,
                            reason: e.to_string(),
                            table: Box::new(ModalTable::new(entries, provenance)?),
                        });
                    }
                    a_try = (prev.a * a_try).sqrt();
                    halvings += 1;
                }
            }
        }
    }
    ModalTable::new(entries, provenance)
}

/// `max ‖residual‖∞` over the table entries, each checked against the
/// previous entry's fundamental as phase reference (its own for the first).
pub fn max_table_residual(table: &ModalTable, model: &MechanicalModel, config: &NmaConfig) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.frequency_scale = Some(table.provenance.frequency_scale);
    let mut worst = 0.0f64;
    let mut psi_ref = table.entries().first().map(|e| e.fundamental().to_vec());
    for e in table.entries() {
        let r = residual(e, psi_ref.as_deref().unwrap_or(e.fundamental()), model, &cfg)?;
        psi_ref = Some(e.fundamental().to_vec());
        worst = worst.max(inf_norm(&r));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct CoulombScalingReport {
    pub limit_forces: Vec<f64>,
    /// Largest deviation of `ω₀(a/R)` from the first table.
    pub max_omega_deviation: f64,
    /// Largest deviation of `δ(a/R)` from the first table.
    pub max_delta_deviation: f64,
    pub tables: Vec<ModalTable>,
}

/// Rescales every Coulomb element to limit force `R` (with `ε` scaled by the
/// same factor) and the amplitude grid by `R`, then compares the tables on
/// the normalized amplitude `a/R`. The grid in `config` refers to `R = 1`.
pub fn scaling_check_coulomb(
    model: &MechanicalModel,
    limit_forces: &[f64],
    config: &NmaConfig,
) -> Result<CoulombScalingReport> {
    if limit_forces.is_empty() || limit_forces.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidConfig("limit forces must be positive".into()));
    }
    let base = model
        .elements
        .iter()
        .find_map(|e| match e.kind {
            ElementKind::CoulombTanh { limit_force, .. } => Some(limit_force),
            _ => None,
        });
    if model.elements.iter().any(|e| !matches!(e.kind, ElementKind::CoulombTanh { .. })) {
        return Err(Error::InvalidModel("scaling check needs Coulomb elements only".into()));
    }
    let base = base.unwrap_or(1.0);
    let scaled_model = |r: f64| {
        let mut m = model.clone();
        let s = r / base;
        for e in &mut m.elements {
            if let ElementKind::CoulombTanh {
                limit_force,
                regularization,
            } = e.kind
            {
                e.kind = ElementKind::CoulombTanh {
                    limit_force: limit_force * s,
                    regularization: regularization * s,
                };
            }
        }
        m
    };
    let tables: Vec<Result<ModalTable>> = config.execution.map(limit_forces, |&r| {
        let mut cfg = config.clone();
        cfg.amplitude_grid = config.amplitude_grid.scaled(r);
        cfg.execution = Execution::Sequential;
        continue_modal_table(&scaled_model(r), &cfg)
    });
    let tables = tables.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = &tables[0];
    let r0 = limit_forces[0];
    let (mut dw, mut dd) = (0.0f64, 0.0f64);
    for (t, &r) in tables.iter().zip(limit_forces).skip(1) {
        for e in reference.entries() {
            let x = t.interpolate(e.a / r0 * r)?;
            dw = dw.max((x.omega0 - e.omega0).abs());
            dd = dd.max((x.delta - e.delta).abs());
        }
    }
    Ok(CoulombScalingReport {
        limit_forces: limit_forces.to_vec(),
        max_omega_deviation: dw,
        max_delta_deviation: dd,
        tables,
    })
}
