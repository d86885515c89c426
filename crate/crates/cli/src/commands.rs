use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use nmrom::hbm::HarmonicConfig;
use nmrom::manifold::{hysteretic_states, manifold_grid, project_initial_state, synthesize_state, Projection};
use nmrom::model::{MechanicalModel, PhaseProgram};
use nmrom::nma::{continue_modal_table, ModalTable, NmaConfig};
use nmrom::ode::{linspace, OdeOptions};
use nmrom::reference::{compare_envelopes, decay_window, extract_envelope, integrate_full, EnvelopeMetrics, FullState};
use nmrom::slowflow::{
    envelope_extremes, integrate_slowflow, steady_state_solutions, synthesize_response, SlowFlowConfig,
    SlowFlowState,
};
use nmrom::Execution;

use crate::config::{time_span, BuiltModel, InitialSpec, LoadedConfig};
use crate::error::{CliError, CliResult, EXIT_CONVERGENCE};
use crate::io::{self, Metadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Nma,
    SlowFlow,
    Direct,
    Steady,
    Project,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Nma => "nma",
            Command::SlowFlow => "slowflow",
            Command::Direct => "direct",
            Command::Steady => "steady",
            Command::Project => "project",
            Command::Compare => "compare",
        }
    }
}

/// Inputs shared by all commands.
pub struct Invocation<'a> {
    pub config: &'a LoadedConfig,
    pub out: &'a Path,
    /// Defaults to `table.csv` in the output directory.
    pub table: Option<&'a Path>,
}

impl Invocation<'_> {
    fn model(&self) -> CliResult<BuiltModel> {
        self.config.model_spec()?.build()
    }

    fn metadata(&self, command: Command) -> Metadata {
        Metadata::new(command.name(), &self.config.hash)
    }

    fn table_path(&self) -> PathBuf {
        self.table.map_or_else(|| self.out.join("table.csv"), Path::to_path_buf)
    }

    /// Loads the table and checks it was computed for this model.
    fn table(&self, model: &MechanicalModel) -> CliResult<(ModalTable, String)> {
        let path = self.table_path();
        if !path.exists() {
            return Err(CliError::config(format!(
                "table {} not found; run `nma` first or pass --table",
                path.display()
            )));
        }
        let (table, meta) = io::read_table(&path)?;
        if table.provenance.model_hash != model.autonomous_hash() {
            return Err(CliError::incompatible(format!(
                "table {} was computed for a different model",
                path.display()
            )));
        }
        Ok((table, meta.table_hash.unwrap_or_default()))
    }

    fn finish(&self, mut meta: Metadata, files: &[&str]) -> CliResult<()> {
        meta.files = files.iter().map(|s| s.to_string()).collect();
        io::write_json(&self.out.join(format!("{}.meta.json", meta.command)), &meta)
    }
}

pub fn run(cmd: Command, inv: &Invocation) -> CliResult<String> {
    std::fs::create_dir_all(inv.out)?;
    match cmd {
        Command::Nma => cmd_nma(inv),
        Command::SlowFlow => cmd_slowflow(inv),
        Command::Direct => cmd_direct(inv),
        Command::Steady => cmd_steady(inv),
        Command::Project => cmd_project(inv),
        Command::Compare => cmd_compare(inv),
    }
}

fn cmd_nma(inv: &Invocation) -> CliResult<String> {
    let block = inv.config.block(&inv.config.config.nma, "nma")?;
    let built = inv.model()?;
    let mut cfg = NmaConfig::new(block.mode, block.harmonics, block.amplitudes.clone())?;
    if let Some(nt) = block.samples {
        cfg.harmonics = HarmonicConfig::with_samples(block.harmonics, nt)?;
    }
    if let Some(tol) = block.newton_tol {
        cfg.newton_tol = tol;
    }
    let mut meta = inv.metadata(Command::Nma);
    meta.model_hash = Some(built.model.autonomous_hash());
    let start = Instant::now();
    let result = continue_modal_table(&built.model, &cfg);
    meta.wall_clock_seconds = start.elapsed().as_secs_f64();
    let table_path = inv.table_path();
    let (table, failure) = match result {
        Ok(t) => (t, None),
        Err(nmrom::Error::PartialTable {
            converged,
            failed_at,
            reason,
            table,
        }) => (
            *table,
            Some(CliError {
                code: EXIT_CONVERGENCE,
                message: format!(
                    "continuation stopped at a = {failed_at:e} after {converged} entries ({reason}); partial table saved to {}",
                    table_path.display()
                ),
            }),
        ),
        Err(e) => return Err(e.into()),
    };
    let hash = io::write_table(&table_path, &table, &meta)?;
    meta.table_hash = Some(hash);
    io::write_backbone(&inv.out.join("backbone.csv"), &table)?;
    let mut files = vec!["backbone.csv"];
    if let Some(m) = &block.manifold {
        let (lo, hi) = (table.a_min().ln(), table.a_max().ln());
        let steps = m.amplitudes.max(2) - 1;
        let amps: Vec<f64> = (0..=steps).map(|k| (lo + (hi - lo) * k as f64 / steps as f64).exp()).collect();
        let phases: Vec<f64> = (0..m.phases).map(|k| TAU * k as f64 / m.phases as f64).collect();
        let u = manifold_grid(&table, &amps, &phases, m.dof)?;
        io::write_manifold(&inv.out.join("manifold.csv"), &amps, &phases, &u)?;
        files.push("manifold.csv");
    }
    meta.provenance = Some(table.provenance.clone());
    inv.finish(meta, &files)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let last = &table.entries()[table.len() - 1];
    Ok(format!(
        "{} entries, a ∈ [{:e}, {:e}], ω₀ {:.6} → {:.6}, {:.2}s",
        table.len(),
        table.a_min(),
        table.a_max(),
        table.entries()[0].omega0,
        last.omega0,
        start.elapsed().as_secs_f64()
    ))
}

/// Excitation phase at `t` (zero for autonomous models).
fn phase_at(model: &MechanicalModel, t: f64) -> (f64, Option<f64>) {
    match &model.forcing {
        None => (0.0, None),
        Some(f) => {
            let (phi, omega) = f.phase_at(t);
            (phi, (omega > 0.0).then_some(omega))
        }
    }
}

fn project_for(table: &ModalTable, model: &MechanicalModel, u: &[f64], v: &[f64], t0: f64) -> CliResult<Projection> {
    let (_, omega) = phase_at(model, t0);
    Ok(project_initial_state(table, u, v, omega)?)
}

fn cmd_slowflow(inv: &Invocation) -> CliResult<String> {
    let block = inv.config.block(&inv.config.config.slowflow, "slowflow")?;
    let built = inv.model()?;
    let model = &built.model;
    let (table, table_hash) = inv.table(model)?;
    let (t0, t1) = time_span(block.t_start, block.t_end, block.sweep_window, &built)?;
    let (phi0, _) = phase_at(model, t0);
    let initial = match &block.initial {
        InitialSpec::Rest => SlowFlowState::rest(t0),
        InitialSpec::Modal { a, theta } => SlowFlowState {
            a: *a,
            theta: *theta,
            t: t0,
        },
        InitialSpec::State { u, v, .. } => {
            let p = project_for(&table, model, u, v, t0)?;
            SlowFlowState {
                a: p.a0,
                theta: p.theta0 - phi0,
                t: t0,
            }
        }
    };
    let sf = SlowFlowConfig::from_model(table.clone(), model)?;
    let mut meta = inv.metadata(Command::SlowFlow);
    meta.model_hash = Some(model.autonomous_hash());
    meta.table_hash = Some(table_hash);
    let start = Instant::now();
    let t_out = linspace(t0, t1, block.samples.max(1));
    let traj = integrate_slowflow(&sf, initial, &t_out)?;
    let response = synthesize_response(&table, &traj, &block.dofs)?;
    meta.wall_clock_seconds = start.elapsed().as_secs_f64();
    io::write_slow(&inv.out.join("slow.csv"), &traj)?;
    io::write_response(&inv.out.join("response.csv"), &response)?;
    inv.finish(meta.clone(), &["slow.csv", "response.csv"])?;
    let end = traj.samples.last().map_or(initial.a, |s| s.a);
    Ok(format!(
        "a {:e} → {:e} over [{t0}, {t1}], {} steps, {:.3}s",
        initial.a, end, traj.stats.accepted, meta.wall_clock_seconds
    ))
}

fn cmd_direct(inv: &Invocation) -> CliResult<String> {
    let block = inv.config.block(&inv.config.config.direct, "direct")?;
    let built = inv.model()?;
    let model = &built.model;
    let (t0, t1) = time_span(block.t_start, block.t_end, block.sweep_window, &built)?;
    let mut meta = inv.metadata(Command::Direct);
    meta.model_hash = Some(model.autonomous_hash());
    let initial = match &block.initial {
        InitialSpec::Rest => FullState::rest(model),
        InitialSpec::State { u, v, dahl } => FullState {
            u: u.clone(),
            v: v.clone(),
            dahl_states: dahl.clone().unwrap_or_else(|| vec![0.0; model.n_dahl()]),
        },
        InitialSpec::Modal { a, theta } => {
            let (table, table_hash) = inv.table(model)?;
            meta.table_hash = Some(table_hash);
            let phi = phase_at(model, t0).0 + theta;
            let p = synthesize_state(&table, *a, phi)?;
            FullState {
                u: p.u,
                v: p.v,
                dahl_states: hysteretic_states(&table, model, *a, phi)?,
            }
        }
    };
    if let Some(&d) = block.dofs.iter().find(|&&d| d >= model.n_dof()) {
        return Err(CliError::config(format!("DOF {d} out of range")));
    }
    let opts = OdeOptions::with_tolerances(block.rel_tol, block.abs_tol);
    let start = Instant::now();
    let traj = integrate_full(model, &initial, t0, t1, block.output_dt, &opts)?;
    let envelopes: Vec<_> = block
        .dofs
        .iter()
        .map(|&d| {
            let e = extract_envelope(&traj, d);
            (d, e.upper, e.lower)
        })
        .collect();
    meta.wall_clock_seconds = start.elapsed().as_secs_f64();
    io::write_trajectory(&inv.out.join("trajectory.csv"), &traj)?;
    io::write_envelopes(&inv.out.join("envelope.csv"), &envelopes)?;
    inv.finish(meta.clone(), &["trajectory.csv", "envelope.csv"])?;
    Ok(format!(
        "{} samples over [{t0}, {t1}], {} steps ({} rejected), {:.3}s",
        traj.t.len(),
        traj.stats.accepted,
        traj.stats.rejected,
        meta.wall_clock_seconds
    ))
}

fn cmd_steady(inv: &Invocation) -> CliResult<String> {
    let block = inv.config.block(&inv.config.config.steady, "steady")?;
    let built = inv.model()?;
    let model = &built.model;
    let forcing = model
        .forcing
        .clone()
        .ok_or_else(|| CliError::config("steady states need a forcing amplitude"))?;
    let (table, table_hash) = inv.table(model)?;
    if block.points == 0 {
        return Err(CliError::config("steady: points must be > 0"));
    }
    let scale = if block.relative { built.omega_ref } else { 1.0 };
    let steps = block.points.max(2) - 1;
    let omegas: Vec<f64> = (0..block.points)
        .map(|k| scale * (block.from + (block.to - block.from) * k as f64 / steps as f64))
        .collect();
    let mut meta = inv.metadata(Command::Steady);
    meta.model_hash = Some(model.autonomous_hash());
    meta.table_hash = Some(table_hash);
    let start = Instant::now();
    let solved = Execution::Parallel.map(&omegas, |&omega| -> CliResult<Vec<Vec<f64>>> {
        let mut f = forcing.clone();
        f.phase = PhaseProgram::Constant { omega };
        let m = model.clone().with_forcing(Some(f))?;
        let sf = SlowFlowConfig::from_model(table.clone(), &m)?;
        let mut rows = Vec::new();
        for s in steady_state_solutions(&sf, omega)? {
            let h = table.interpolate(s.a)?.harmonics;
            let mut row = vec![s.omega, s.a, s.theta];
            for &d in &block.dofs {
                let psi: Vec<_> = h.coefficients.iter().map(|c| c[d]).collect();
                let (hi, lo) = envelope_extremes(&psi, s.a);
                row.extend([hi, lo]);
            }
            rows.push(row);
        }
        Ok(rows)
    });
    let rows: Vec<Vec<f64>> = solved.into_iter().collect::<CliResult<Vec<_>>>()?.concat();
    meta.wall_clock_seconds = start.elapsed().as_secs_f64();
    let mut header = vec!["omega".to_string(), "a".to_string(), "theta".to_string()];
    for d in &block.dofs {
        header.push(format!("upper{d}"));
        header.push(format!("lower{d}"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_table_rows(&inv.out.join("steady.csv"), &header, rows.iter().cloned())?;
    inv.finish(meta, &["steady.csv"])?;
    Ok(format!("{} steady states at {} frequencies", rows.len(), omegas.len()))
}

#[derive(Serialize)]
struct ProjectionReport {
    a0: f64,
    theta0: f64,
    residual_distance: f64,
}

fn cmd_project(inv: &Invocation) -> CliResult<String> {
    let block = inv.config.block(&inv.config.config.project, "project")?;
    let built = inv.model()?;
    let (table, table_hash) = inv.table(&built.model)?;
    let mut meta = inv.metadata(Command::Project);
    meta.model_hash = Some(built.model.autonomous_hash());
    meta.table_hash = Some(table_hash);
    let start = Instant::now();
    let p = project_initial_state(&table, &block.u, &block.v, block.omega)?;
    meta.wall_clock_seconds = start.elapsed().as_secs_f64();
    io::write_json(
        &inv.out.join("projection.json"),
        &ProjectionReport {
            a0: p.a0,
            theta0: p.theta0,
            residual_distance: p.residual_distance,
        },
    )?;
    inv.finish(meta, &["projection.json"])?;
    Ok(format!(
        "a0 = {:.10e}, theta0 = {:.10}, residual = {:.3e}",
        p.a0, p.theta0, p.residual_distance
    ))
}

#[derive(Serialize)]
struct CompareReport {
    reference: String,
    candidate: String,
    dof: usize,
    #[serde(flatten)]
    metrics: EnvelopeMetrics,
    /// Wall clock of the reference run over that of the candidate.
    speedup: Option<f64>,
}

/// Envelope of a run directory with the wall clock of the run behind it.
/// A reference prefers the peaks of a direct run, a candidate the sampled
/// upper envelope of a ROM run.
fn run_curve(dir: &Path, dof: usize, prefer_rom: bool) -> CliResult<(Vec<f64>, Vec<f64>, Option<f64>)> {
    let response = dir.join("response.csv");
    let envelope = dir.join("envelope.csv");
    let wall = |cmd: Command| {
        io::read_json::<Metadata>(&dir.join(format!("{}.meta.json", cmd.name())))
            .ok()
            .map(|m| m.wall_clock_seconds)
    };
    let use_rom = match (response.exists(), envelope.exists()) {
        (false, false) => {
            return Err(CliError::config(format!(
                "{} holds neither response.csv nor envelope.csv",
                dir.display()
            )))
        }
        (true, true) => prefer_rom,
        (rom, _) => rom,
    };
    if use_rom {
        let (t, u) = io::read_response_upper(&response, dof)?;
        Ok((t, u, wall(Command::SlowFlow)))
    } else {
        let (t, u) = io::read_upper_envelope(&envelope, dof)?.iter().map(|p| (p.t, p.u)).unzip();
        Ok((t, u, wall(Command::Direct)))
    }
}

fn cmd_compare(inv: &Invocation) -> CliResult<String> {
    let block = inv.config.block(&inv.config.config.compare, "compare")?;
    let (ref_dir, cand_dir) = (inv.out.join(&block.reference), inv.out.join(&block.candidate));
    let (rt, ru, ref_wall) = run_curve(&ref_dir, block.dof, false)?;
    let reference: Vec<_> = rt
        .iter()
        .zip(&ru)
        .map(|(&t, &u)| nmrom::reference::EnvelopePoint { t, u })
        .collect();
    let reference = match block.decay_window {
        Some(f) => decay_window(&reference, f),
        None => &reference[..],
    };
    let (ct, cu, cand_wall) = run_curve(&cand_dir, block.dof, true)?;
    let metrics = compare_envelopes(reference, &ct, &cu)?;
    let speedup = match (ref_wall, cand_wall) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let report = CompareReport {
        reference: ref_dir.display().to_string(),
        candidate: cand_dir.display().to_string(),
        dof: block.dof,
        metrics,
        speedup,
    };
    io::write_json(&inv.out.join("compare.json"), &report)?;
    inv.finish(inv.metadata(Command::Compare), &["compare.json"])?;
    Ok(format!(
        "envelope RMS error {:.4}%, peak error {:.4}%, peak time error {:.4}, {} peaks, speedup {}",
        100.0 * metrics.rms_relative_error,
        100.0 * metrics.peak_relative_error,
        metrics.peak_time_error,
        metrics.matched_peaks,
        speedup.map_or("n/a".to_string(), |s| format!("{s:.1}×"))
    ))
}
