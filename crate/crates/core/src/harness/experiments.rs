//! Experiment drivers: convergence study, conservation trace, ground state
//! and vortex dynamics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, InitialSpec, RunConfig};
use super::io::{fmt_real, Checkpoint, DensitySnapshot, FileError, SeriesWriter};
use super::manufactured::{manufactured_solution, source_defect, ManufacturedParams};
use crate::assembly::{FeSpace, FormSet};
use crate::groundstate::{gradient_flow_from, GroundState, GroundStateConfig, InitialProfile};
use crate::mesh::{build_mesh, MeshError};
use crate::observables::{
    energy_h_of, error_norms, h1_broken_norm, interpolate_exact, mass_of, postprocess_i2h,
    second_moment, superclose_norm, ExactSolution, ObservableError, ObservableRecord,
};
use crate::scheme::{evolve, Field, SchemeConfig, SchemeError, SourceFn};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("manufactured source fails its consistency check (defect {0:e})")]
    InconsistentSource(f64),
}

pub fn build_forms(cfg: &RunConfig, nx: usize, ny: usize) -> Result<FormSet, HarnessError> {
    let mesh = Arc::new(build_mesh(cfg.domain, nx, ny)?);
    let space = Arc::new(FeSpace::new(mesh, cfg.element));
    Ok(FormSet::assemble(space, cfg.potential()))
}

/// Width of the built-in initial profiles.
pub fn default_sigma(cfg: &RunConfig) -> f64 {
    0.1 * cfg.domain.width().min(cfg.domain.height())
}

pub fn initial_field(cfg: &RunConfig, forms: &FormSet) -> Result<Field, HarnessError> {
    let sigma = default_sigma(cfg);
    let center = cfg.domain.center();
    let profile = match &cfg.initial {
        InitialSpec::Gaussian => InitialProfile::Gaussian { sigma, center },
        InitialSpec::Vortex => InitialProfile::GaussianWithVortex {
            sigma,
            winding: 1,
            center,
        },
        InitialSpec::File(path) => return Ok(Checkpoint::read(path)?.to_field(&forms.space)?),
    };
    Ok(profile.to_field(forms))
}

fn relative(value: f64, reference: f64) -> f64 {
    let d = (value - reference).abs();
    if reference != 0.0 {
        d / reference.abs()
    } else {
        d
    }
}

/// Tracks mass and energy drift along a run.
struct Tracker {
    mass0: f64,
    energy0: f64,
    max_mass: f64,
    max_energy: f64,
}

impl Tracker {
    fn new(u0: &Field, forms: &FormSet, cfg: &SchemeConfig) -> Self {
        Tracker {
            mass0: mass_of(u0, forms),
            energy0: energy_h_of(u0, forms, cfg),
            max_mass: 0.0,
            max_energy: 0.0,
        }
    }

    fn record(
        &mut self,
        t: f64,
        u: &Field,
        forms: &FormSet,
        cfg: &SchemeConfig,
        iters: usize,
    ) -> ObservableRecord {
        let mass = mass_of(u, forms);
        let energy = energy_h_of(u, forms, cfg);
        let r = ObservableRecord {
            t,
            mass,
            energy_h: energy,
            h1_broken_norm: h1_broken_norm(u, forms),
            rel_mass_err: relative(mass, self.mass0),
            rel_energy_err: relative(energy, self.energy0),
            fp_iters: iters,
        };
        self.max_mass = self.max_mass.max(r.rel_mass_err);
        self.max_energy = self.max_energy.max(r.rel_energy_err);
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub tau: f64,
    pub l2_err: f64,
    pub h1_err: f64,
    pub superclose_err: f64,
    pub postproc_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorColumn {
    L2,
    H1,
    Superclose,
    Postproc,
}

impl ConvergenceRow {
    pub fn get(&self, col: ErrorColumn) -> f64 {
        match col {
            ErrorColumn::L2 => self.l2_err,
            ErrorColumn::H1 => self.h1_err,
            ErrorColumn::Superclose => self.superclose_err,
            ErrorColumn::Postproc => self.postproc_err,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    /// Sorted by decreasing `h`.
    pub rows: Vec<ConvergenceRow>,
}

pub const CONVERGENCE_HEADER: &str =
    "h,tau,l2_err,l2_rate,h1_err,h1_rate,superclose_err,superclose_rate,postproc_err,postproc_rate";

impl ConvergenceTable {
    pub fn new(mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        ConvergenceTable { rows }
    }

    /// `log2(e_{k-1} / e_k) / log2(h_{k-1} / h_k)` for rows `k >= 1`.
    pub fn rates(&self, col: ErrorColumn) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| (w[0].get(col) / w[1].get(col)).log2() / (w[0].h / w[1].h).log2())
            .collect()
    }

    /// Least-squares slope of `log e` against `log h` over all rows.
    pub fn fitted_slope(&self, col: ErrorColumn) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.h, r.get(col))).collect();
        loglog_slope(&pts)
    }

    pub fn to_csv(&self) -> String {
        let cols = [
            ErrorColumn::L2,
            ErrorColumn::H1,
            ErrorColumn::Superclose,
            ErrorColumn::Postproc,
        ];
        let rates: Vec<Vec<f64>> = cols.iter().map(|&c| self.rates(c)).collect();
        let mut s = String::from(CONVERGENCE_HEADER);
        s.push('\n');
        for (k, row) in self.rows.iter().enumerate() {
            write!(s, "{},{}", fmt_real(row.h), fmt_real(row.tau)).unwrap();
            for (c, col) in cols.iter().enumerate() {
                let rate = if k == 0 {
                    String::new()
                } else {
                    fmt_real(rates[c][k - 1])
                };
                write!(s, ",{},{}", fmt_real(row.get(*col)), rate).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than
/// two usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn level_errors(
    u: &Field,
    exact: &ExactSolution,
    t: f64,
    forms: &FormSet,
    h: f64,
) -> Result<ConvergenceRow, HarnessError> {
    let errs = error_norms(u, exact, t);
    Ok(ConvergenceRow {
        h,
        tau: h,
        l2_err: errs.l2,
        h1_err: errs.h1.expect("exact gradient"),
        superclose_err: superclose_norm(u, exact, t, forms),
        postproc_err: postprocess_i2h(u)?
            .error_norms(exact, t)
            .h1
            .expect("exact gradient"),
    })
}

/// Errors of one accuracy level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyLevel {
    /// Largest error over all time levels `t_0, ..., t_N`.
    pub max_over_steps: ConvergenceRow,
    /// Errors at `t_N`.
    pub final_time: ConvergenceRow,
}

/// One level of the manufactured-solution study with `h = tau`.
pub fn accuracy_level(
    cfg: &RunConfig,
    nx: usize,
    ny: usize,
) -> Result<AccuracyLevel, HarnessError> {
    let params = ManufacturedParams {
        omega: cfg.omega,
        beta: cfg.beta,
        gamma_x: cfg.gamma_x,
        gamma_y: cfg.gamma_y,
    };
    let exact = manufactured_solution(params);
    let forms = build_forms(cfg, nx, ny)?;
    let h = forms.space.mesh.h();
    let scheme = SchemeConfig {
        tau: h,
        ..cfg.scheme_config()
    };
    let t_final = scheme.n_steps() as f64 * h;
    let source = exact.source.clone().expect("manufactured source");
    let source: &SourceFn = &*source;
    let u0 = interpolate_exact(&exact, 0.0, &forms.space);

    let mut worst = level_errors(&u0, &exact, 0.0, &forms, h)?;
    let mut failure = None;
    let u = evolve(&u0, &scheme, &forms, Some(source), |s| {
        match level_errors(s.field, &exact, s.t, &forms, h) {
            Ok(r) => {
                worst.l2_err = worst.l2_err.max(r.l2_err);
                worst.h1_err = worst.h1_err.max(r.h1_err);
                worst.superclose_err = worst.superclose_err.max(r.superclose_err);
                worst.postproc_err = worst.postproc_err.max(r.postproc_err);
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let level = AccuracyLevel {
        max_over_steps: worst,
        final_time: level_errors(&u, &exact, t_final, &forms, h)?,
    };
    info!("accuracy level {nx}x{ny}: {level:?}");
    Ok(level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyStudy {
    /// `sup_n` errors, the quantities bounded by the error estimates.
    pub max_over_steps: ConvergenceTable,
    pub final_time: ConvergenceTable,
}

/// Convergence study on `cfg.levels` meshes `nx 2^k x ny 2^k` with
/// `tau = h`; levels run concurrently. Writes `convergence.csv` (largest
/// error over the run) and `convergence_final.csv` (error at `T`) to `out`.
pub fn run_accuracy(cfg: &RunConfig, out: Option<&Path>) -> Result<AccuracyStudy, HarnessError> {
    let params = ManufacturedParams {
        omega: cfg.omega,
        beta: cfg.beta,
        gamma_x: cfg.gamma_x,
        gamma_y: cfg.gamma_y,
    };
    let defect = source_defect(&manufactured_solution(params), params, 1e-4);
    if defect.is_nan() || defect >= 1e-5 {
        return Err(HarnessError::InconsistentSource(defect));
    }
    let levels: Vec<(usize, usize)> = (0..cfg.levels)
        .map(|k| (cfg.nx << k, cfg.ny << k))
        .collect();
    let results = levels
        .par_iter()
        .map(|&(nx, ny)| accuracy_level(cfg, nx, ny))
        .collect::<Result<Vec<_>, _>>()?;
    let study = AccuracyStudy {
        max_over_steps: ConvergenceTable::new(results.iter().map(|l| l.max_over_steps).collect()),
        final_time: ConvergenceTable::new(results.iter().map(|l| l.final_time).collect()),
    };
    if let Some(dir) = out {
        for (name, table) in [
            ("convergence.csv", &study.max_over_steps),
            ("convergence_final.csv", &study.final_time),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, table.to_csv())
                .map_err(|source| FileError::Io { path, source })?;
        }
    }
    Ok(study)
}

#[derive(Debug, Clone)]
pub struct ConservationSummary {
    pub records: Vec<ObservableRecord>,
    pub max_rel_mass_err: f64,
    pub max_rel_energy_err: f64,
    pub final_field: Field,
}

impl ConservationSummary {
    pub fn summary_line(&self) -> String {
        format!(
            "steps={} max_rel_mass_err={:.3e} max_rel_energy_err={:.3e}",
            self.records.len().saturating_sub(1),
            self.max_rel_mass_err,
            self.max_rel_energy_err
        )
    }
}

/// Source-free run from `u0`, recording mass and energy after every step.
pub fn conservation_run(
    u0: &Field,
    forms: &FormSet,
    scheme: &SchemeConfig,
    series: Option<&Path>,
) -> Result<ConservationSummary, HarnessError> {
    let mut writer = series.map(SeriesWriter::create).transpose()?;
    let mut tracker = Tracker::new(u0, forms, scheme);
    let mut records = vec![tracker.record(0.0, u0, forms, scheme, 0)];
    let mut write_err = None;
    if let Some(w) = writer.as_mut() {
        w.push(&records[0])?;
    }
    let result = evolve(u0, scheme, forms, None, |s| {
        let r = tracker.record(s.t, s.field, forms, scheme, s.report.iterations);
        if let Some(w) = writer.as_mut() {
            if let Err(e) = w.push(&r) {
                write_err.get_or_insert(e);
            }
        }
        records.push(r);
    });
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    let final_field = result?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    Ok(ConservationSummary {
        records,
        max_rel_mass_err: tracker.max_mass,
        max_rel_energy_err: tracker.max_energy,
        final_field,
    })
}

/// Conservation trace; writes `series.csv` and `summary.txt` to `out`.
pub fn run_conservation(
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<ConservationSummary, HarnessError> {
    cfg.validate()?;
    let forms = build_forms(cfg, cfg.nx, cfg.ny)?;
    let u0 = initial_field(cfg, &forms)?;
    let series = out.map(|d| d.join("series.csv"));
    let summary = conservation_run(&u0, &forms, &cfg.scheme_config(), series.as_deref())?;
    if let Some(dir) = out {
        let path = dir.join("summary.txt");
        std::fs::write(&path, summary.summary_line() + "\n")
            .map_err(|source| FileError::Io { path, source })?;
    }
    Ok(summary)
}

pub fn groundstate_config(cfg: &RunConfig) -> GroundStateConfig {
    GroundStateConfig {
        dt: cfg.tau,
        omega: cfg.omega,
        beta: cfg.beta,
        ..Default::default()
    }
}

/// Normalized gradient flow; writes `groundstate.txt` (checkpoint) and
/// `groundstate_density.txt` to `out`.
pub fn run_groundstate(cfg: &RunConfig, out: Option<&Path>) -> Result<GroundState, HarnessError> {
    cfg.validate()?;
    let forms = build_forms(cfg, cfg.nx, cfg.ny)?;
    let u0 = initial_field(cfg, &forms)?;
    let gs = gradient_flow_from(u0, &groundstate_config(cfg), &forms)?;
    if let Some(dir) = out {
        Checkpoint::from_field(&gs.field, 0.0).write(&dir.join("groundstate.txt"))?;
        DensitySnapshot::from_field(&gs.field, 0.0).write(&dir.join("groundstate_density.txt"))?;
    }
    Ok(gs)
}

#[derive(Debug, Clone)]
pub struct EvolutionSummary {
    pub snapshot_times: Vec<f64>,
    pub snapshot_files: Vec<PathBuf>,
    /// `int (x^2 + y^2) |u|^2` at each snapshot.
    pub second_moments: Vec<f64>,
    pub conservation: ConservationSummary,
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:.4}.txt")
}

/// Dynamics from the configured initial state with density snapshots at the
/// requested times. Writes `series.csv`, the snapshots and `final.txt`
/// (checkpoint) to `out`.
pub fn run_evolution(
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<EvolutionSummary, HarnessError> {
    cfg.validate()?;
    let forms = build_forms(cfg, cfg.nx, cfg.ny)?;
    let scheme = cfg.scheme_config();
    let u0 = initial_field(cfg, &forms)?;
    let due = cfg.snapshot_steps();

    let mut writer = out
        .map(|d| SeriesWriter::create(&d.join("series.csv")))
        .transpose()?;
    let mut tracker = Tracker::new(&u0, &forms, &scheme);
    let mut records = vec![tracker.record(0.0, &u0, &forms, &scheme, 0)];
    let mut snapshot_times = Vec::new();
    let mut snapshot_files = Vec::new();
    let mut second_moments = Vec::new();
    let mut first_err: Option<FileError> = None;

    let mut take_snapshot = |t: f64, u: &Field, err: &mut Option<FileError>| {
        snapshot_times.push(t);
        second_moments.push(second_moment(u));
        if let Some(dir) = out {
            let path = dir.join(snapshot_name(t));
            if let Err(e) = DensitySnapshot::from_field(u, t).write(&path) {
                err.get_or_insert(e);
            }
            snapshot_files.push(path);
        }
    };

    if due.first() == Some(&0) {
        take_snapshot(0.0, &u0, &mut first_err);
    }
    if let Some(w) = writer.as_mut() {
        w.push(&records[0])?;
    }
    let result = evolve(&u0, &scheme, &forms, None, |s| {
        let r = tracker.record(s.t, s.field, &forms, &scheme, s.report.iterations);
        if let Some(w) = writer.as_mut() {
            if let Err(e) = w.push(&r) {
                first_err.get_or_insert(e);
            }
        }
        records.push(r);
        if due.binary_search(&s.step).is_ok() {
            take_snapshot(s.t, s.field, &mut first_err);
        }
    });
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    let final_field = result?;
    if let Some(e) = first_err {
        return Err(e.into());
    }
    if let Some(dir) = out {
        Checkpoint::from_field(&final_field, scheme.n_steps() as f64 * scheme.tau)
            .write(&dir.join("final.txt"))?;
    }
    Ok(EvolutionSummary {
        snapshot_times,
        snapshot_files,
        second_moments,
        conservation: ConservationSummary {
            records,
            max_rel_mass_err: tracker.max_mass,
            max_rel_energy_err: tracker.max_energy,
            final_field,
        },
    })
}
