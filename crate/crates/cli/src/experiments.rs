//! Benchmark drivers: build the kinetic reference, run the requested
//! closure modes, and emit a self-contained report directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use momclose::closure::{Closure, PnClosure};
use momclose::diffusion::{diffusion_solve, DiffusionField};
use momclose::grid::Grid1d;
use momclose::kinetic::{kinetic_solve_snapshots, CrossSections, KineticError};
use momclose::legendre::{moments_from_kinetic, Quadrature};
use momclose::momsolver::{
    advance, advance_diffusive, error_metrics, MomentField, SolverError, SolverOptions,
    TracePoint,
};
use momclose::nn::{DirectMlClosure, HyperbolicMlClosure, MlpModel, ModelIoError};

use crate::config::{ExperimentKind, ExperimentSpec};
use crate::report::{
    self, fmt, ErrorRow, ModeOutcome, ReportMetadata,
};

pub const KINETIC_CFL: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("mode `{0}` needs a model file in the config")]
    MissingModel(String),
    #[error("unknown closure mode `{0}` (expected pn, hyp, or nonhyp)")]
    UnknownMode(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    #[error(transparent)]
    Quadrature(#[from] momclose::legendre::QuadratureError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diffusion(#[from] momclose::diffusion::DiffusionError),
}

/// A closure mode with its solver options and provenance.
pub struct ModeSetup {
    pub name: String,
    pub closure: Box<dyn Closure>,
    pub opts: SolverOptions,
    pub model_path: Option<PathBuf>,
}

pub fn build_mode(spec: &ExperimentSpec, mode: &str) -> Result<ModeSetup, ExperimentError> {
    match mode {
        "pn" => Ok(ModeSetup {
            name: "pn".into(),
            closure: Box::new(PnClosure::new(spec.n_order)),
            opts: SolverOptions {
                record_trace: true,
                ..SolverOptions::pn()
            },
            model_path: None,
        }),
        "hyp" => {
            let path = spec
                .models
                .hyp
                .clone()
                .ok_or_else(|| ExperimentError::MissingModel("hyp".into()))?;
            let model = MlpModel::load_json(&path)?;
            Ok(ModeSetup {
                name: "hyp".into(),
                closure: Box::new(HyperbolicMlClosure::new(model)),
                opts: SolverOptions::hyperbolic_ml(),
                model_path: Some(path),
            })
        }
        "nonhyp" => {
            let path = spec
                .models
                .nonhyp
                .clone()
                .ok_or_else(|| ExperimentError::MissingModel("nonhyp".into()))?;
            let model = MlpModel::load_json(&path)?;
            Ok(ModeSetup {
                name: "nonhyp".into(),
                closure: Box::new(DirectMlClosure::new(model)),
                opts: SolverOptions::nonhyperbolic_ml(),
                model_path: Some(path),
            })
        }
        other => Err(ExperimentError::UnknownMode(other.into())),
    }
}

fn trace_extrema(trace: &[TracePoint]) -> (f64, f64) {
    trace.iter().fold((0.0f64, 0.0f64), |(c, im), p| {
        (c.max(p.max_speed), im.max(p.max_im))
    })
}

/// Advance through a ladder of snapshot times, collecting the state at
/// each and concatenating the spectrum trace. Stops early on blow-up.
pub struct SnapshotRun {
    pub snapshots: Vec<(f64, MomentField)>,
    pub trace: Vec<TracePoint>,
    pub outcome: ModeOutcome,
}

pub fn run_snapshots(
    u0: &MomentField,
    setup: &ModeSetup,
    xs: &CrossSections,
    times: &[f64],
) -> Result<SnapshotRun, ExperimentError> {
    let mut snapshots = Vec::new();
    let mut trace = Vec::new();
    let mut u = u0.clone();
    let mut t_prev = 0.0;
    for &t in times {
        match advance(&u, setup.closure.as_ref(), xs, t - t_prev, &setup.opts) {
            Ok(out) => {
                trace.extend(out.trace.iter().map(|p| TracePoint {
                    t: p.t + t_prev,
                    ..*p
                }));
                u = out.field;
                snapshots.push((t, u.clone()));
                t_prev = t;
            }
            Err(SolverError::BlowUp { time }) => {
                let (max_speed, max_im) = trace_extrema(&trace);
                let _ = (max_speed, max_im);
                return Ok(SnapshotRun {
                    snapshots,
                    trace,
                    outcome: ModeOutcome::BlewUp {
                        time: t_prev + time,
                    },
                });
            }
            Err(SolverError::NonFiniteClosure { time }) => {
                return Ok(SnapshotRun {
                    snapshots,
                    trace,
                    outcome: ModeOutcome::BlewUp {
                        time: t_prev + time,
                    },
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (max_speed, max_im) = trace_extrema(&trace);
    Ok(SnapshotRun {
        snapshots,
        trace,
        outcome: ModeOutcome::Completed { max_im, max_speed },
    })
}

/// Kinetic reference moments at the requested times.
pub fn kinetic_reference(
    spec: &ExperimentSpec,
    times: &[f64],
) -> Result<Vec<(f64, MomentField)>, ExperimentError> {
    let grid = Grid1d::new(spec.nx);
    let quad = Quadrature::gauss_legendre(spec.quadrature_order)?;
    let f0 = spec.init.kinetic_field(&grid, &quad);
    let snaps = kinetic_solve_snapshots(&f0, &spec.cross_sections, &quad, times, KINETIC_CFL)?;
    Ok(times
        .iter()
        .zip(snaps)
        .map(|(&t, f)| {
            let m = moments_from_kinetic(&f, &quad, spec.n_order).expect("matching quadrature");
            (t, m)
        })
        .collect())
}

fn model_hashes(spec: &ExperimentSpec) -> Result<BTreeMap<String, String>, ExperimentError> {
    let mut hashes = BTreeMap::new();
    for (mode, path) in [("hyp", &spec.models.hyp), ("nonhyp", &spec.models.nonhyp)] {
        if let Some(p) = path {
            if spec.modes.iter().any(|m| m == mode) {
                hashes.insert(mode.to_string(), report::sha256_file(p)?);
            }
        }
    }
    Ok(hashes)
}

fn push_error_rows(
    rows: &mut Vec<ErrorRow>,
    mode: &str,
    t: f64,
    field: &MomentField,
    reference: &MomentField,
) {
    for (component, m) in error_metrics(field, reference).iter().enumerate().take(2) {
        rows.push(ErrorRow {
            mode: mode.to_string(),
            t,
            component,
            rel_l2: m.rel_l2,
            rel_linf: m.rel_linf,
        });
    }
}

/// Shared driver for the constant-coefficient, Gaussian-source, and
/// two-material benchmarks: kinetic reference plus per-mode snapshot
/// comparisons.
pub fn run_comparison(
    spec: &ExperimentSpec,
    out_dir: &Path,
) -> Result<ReportMetadata, ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let grid = Grid1d::new(spec.nx);
    let reference = kinetic_reference(spec, &spec.snapshot_times)?;
    for (t, m) in &reference {
        report::write_profile_csv(&out_dir.join(format!("profiles_kinetic_t{t}.csv")), m)?;
    }

    let u0 = spec.init.moment_field(&grid, spec.n_order);
    let mut outcomes = BTreeMap::new();
    let mut notes = BTreeMap::new();
    let mut error_rows = Vec::new();

    for mode in &spec.modes {
        let setup = build_mode(spec, mode)?;
        let run = run_snapshots(&u0, &setup, &spec.cross_sections, &spec.snapshot_times)?;
        for (t, field) in &run.snapshots {
            report::write_profile_csv(
                &out_dir.join(format!("profiles_{mode}_t{t}.csv")),
                field,
            )?;
            if let Some((_, reference)) = reference
                .iter()
                .find(|(tr, _)| (tr - t).abs() < 1e-12)
            {
                push_error_rows(&mut error_rows, mode, *t, field, reference);
            }
        }
        report::write_eig_trace(&out_dir.join(format!("eigtrace_{mode}.csv")), &run.trace)?;
        if let ModeOutcome::BlewUp { time } = &run.outcome {
            notes.insert(
                format!("{mode}_blowup"),
                format!("solution blew up at t = {}", fmt(*time)),
            );
        }
        outcomes.insert(mode.clone(), run.outcome);
    }

    report::write_error_table(&out_dir.join("errors.csv"), &error_rows)?;

    // long-time stability run (constant-coefficient benchmark)
    if let Some(horizon) = spec.long_time {
        let checkpoints: Vec<f64> = (1..=horizon.round() as usize).map(|i| i as f64).collect();
        let reference_long = kinetic_reference(spec, &checkpoints)?;
        for mode in spec.modes.iter().filter(|m| m.as_str() != "pn") {
            let setup = build_mode(spec, mode)?;
            let run = run_snapshots(&u0, &setup, &spec.cross_sections, &checkpoints)?;
            let mut rows = Vec::new();
            for (t, field) in &run.snapshots {
                if let Some((_, reference)) = reference_long
                    .iter()
                    .find(|(tr, _)| (tr - t).abs() < 1e-12)
                {
                    push_error_rows(&mut rows, mode, *t, field, reference);
                }
            }
            report::write_error_table(&out_dir.join(format!("longtime_{mode}.csv")), &rows)?;
            report::write_eig_trace(
                &out_dir.join(format!("eigtrace_long_{mode}.csv")),
                &run.trace,
            )?;
            let key = format!("{mode}_long");
            outcomes.insert(key, run.outcome);
        }
    }

    // scattering-coefficient sweep (log-log error scatter data)
    if let Some(sweep) = &spec.sigma_sweep {
        let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
        use std::io::Write;
        writeln!(w, "sigma_s,mode,t,rel_l2_m0,rel_l2_m1,outcome")?;
        for sigma_s in sweep.values() {
            let mut sweep_spec = spec.clone();
            sweep_spec.cross_sections = CrossSections::constant(
                sigma_s,
                spec.cross_sections.sigma_a_at(0.0),
            );
            let reference = kinetic_reference(&sweep_spec, &[sweep.t_end])?;
            for mode in &spec.modes {
                let setup = build_mode(spec, mode)?;
                let run = run_snapshots(
                    &u0,
                    &setup,
                    &sweep_spec.cross_sections,
                    &[sweep.t_end],
                )?;
                match (&run.outcome, run.snapshots.last()) {
                    (ModeOutcome::Completed { .. }, Some((_, field))) => {
                        let m = error_metrics(field, &reference[0].1);
                        writeln!(
                            w,
                            "{},{},{},{},{},completed",
                            fmt(sigma_s),
                            mode,
                            fmt(sweep.t_end),
                            fmt(m[0].rel_l2),
                            fmt(m[1].rel_l2)
                        )?;
                    }
                    (ModeOutcome::BlewUp { time }, _) => {
                        writeln!(
                            w,
                            "{},{},{},nan,nan,blowup@{}",
                            fmt(sigma_s),
                            mode,
                            fmt(sweep.t_end),
                            fmt(*time)
                        )?;
                    }
                    _ => {}
                }
            }
        }
    }

    // two-material annotations: snapped interfaces and solution symmetry
    if spec.kind == ExperimentKind::TwoMaterial {
        if let momclose::XsProfile::TwoMaterial { x1, x2, .. } = spec.cross_sections.sigma_s {
            let dx = grid.dx();
            let snap = |x: f64| (x / dx).round() * dx;
            notes.insert(
                "snapped_interfaces".into(),
                format!("x1 = {}, x2 = {}", fmt(snap(x1)), fmt(snap(x2))),
            );
        }
        if spec.modes.iter().any(|m| m == "pn") {
            if let Some((t, _)) = spec
                .snapshot_times
                .last()
                .map(|t| (*t, ()))
            {
                let path = out_dir.join(format!("profiles_pn_t{t}.csv"));
                if path.exists() {
                    let field = report::read_profile_csv(&path)?;
                    notes.insert(
                        "pn_symmetry_residual".into(),
                        fmt(reflection_asymmetry(&field)),
                    );
                }
            }
        }
    }

    let metadata = ReportMetadata {
        name: spec.name.clone(),
        seed: spec.seed,
        resolved_config: spec.clone(),
        model_hashes: model_hashes(spec)?,
        outcomes,
        notes,
    };
    metadata.write(out_dir)?;
    Ok(metadata)
}

/// Largest deviation of the density from its mirror image about x = 1/2
/// (even components should be symmetric, odd ones antisymmetric).
pub fn reflection_asymmetry(field: &MomentField) -> f64 {
    let nx = field.grid().nx();
    let mut worst = 0.0f64;
    for k in 0..=field.n_order() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let c = field.component(k);
        for i in 0..nx {
            // node i mirrors onto node nx - i (mod nx) about x = 1/2 when
            // nx is even
            let j = (nx - i) % nx;
            worst = worst.max((c[i] - sign * c[j]).abs());
        }
    }
    worst
}

/// Knudsen-sweep benchmark: moment solutions versus the diffusion
/// reference for each epsilon, plus overlay profiles at the final time.
pub fn run_diffusion_benchmark(
    spec: &ExperimentSpec,
    out_dir: &Path,
) -> Result<ReportMetadata, ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let grid = Grid1d::new(spec.nx);
    let t_end = spec.t_end.unwrap_or(0.1);
    let epsilons = spec
        .epsilons
        .clone()
        .unwrap_or_else(|| vec![0.5, 0.1, 0.05, 0.01]);

    let reference = diffusion_solve(
        &DiffusionField::from_profile(grid.clone(), |x| {
            (2.0 * std::f64::consts::PI * x).sin() + 2.0
        }),
        &spec.cross_sections,
        t_end,
    )?;
    {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(
            out_dir.join("profile_diffusion_ref.csv"),
        )?);
        writeln!(w, "x,m_0")?;
        for i in 0..grid.nx() {
            writeln!(w, "{},{}", fmt(grid.x(i)), fmt(reference.values()[i]))?;
        }
    }

    let u0 = spec.init.moment_field(&grid, spec.n_order);
    let mut outcomes = BTreeMap::new();
    let mut rows_csv = String::from("mode,eps,rel_l2\n");
    for mode in &spec.modes {
        let setup = build_mode(spec, mode)?;
        let mut worst = (0.0f64, 0.0f64);
        for &eps in &epsilons {
            let out = advance_diffusive(
                &u0,
                setup.closure.as_ref(),
                &spec.cross_sections,
                eps,
                t_end,
                &setup.opts,
            )?;
            let (c, im) = trace_extrema(&out.trace);
            worst = (worst.0.max(c), worst.1.max(im));
            let err = momclose::diffusion::density_rel_l2(&out.field, &reference);
            rows_csv.push_str(&format!("{mode},{},{}\n", fmt(eps), fmt(err)));
            report::write_profile_csv(
                &out_dir.join(format!("profiles_{mode}_eps{eps}.csv")),
                &out.field,
            )?;
        }
        outcomes.insert(
            mode.clone(),
            ModeOutcome::Completed {
                max_im: worst.1,
                max_speed: worst.0,
            },
        );
    }
    std::fs::write(out_dir.join("eps_errors.csv"), rows_csv)?;

    let metadata = ReportMetadata {
        name: spec.name.clone(),
        seed: spec.seed,
        resolved_config: spec.clone(),
        model_hashes: model_hashes(spec)?,
        outcomes,
        notes: BTreeMap::new(),
    };
    metadata.write(out_dir)?;
    Ok(metadata)
}

/// Dispatch a benchmark config to its driver.
pub fn run_benchmark(
    spec: &ExperimentSpec,
    out_dir: &Path,
) -> Result<ReportMetadata, ExperimentError> {
    match spec.kind {
        ExperimentKind::Diffusion => run_diffusion_benchmark(spec, out_dir),
        _ => run_comparison(spec, out_dir),
    }
}
