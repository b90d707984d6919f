//! Subcommand implementations.
//!
//! Each command loads the validated configuration, drives the library
//! pipeline and writes CSV files into the output directory. Failures carry
//! an exit-code class: configuration problems (2), model-assumption
//! violations such as non-separable drives (3) and numerical breakdowns
//! (4); a failed verification battery exits 1.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use khsurf::checks::run_all_checks;
use khsurf::dressing::{
    bch_diagnostic, dress_potential, DressedLaplacian, DressedPotential, DressingConfig,
    LaplaceDresser,
};
use khsurf::drive::{charge_balance, displacement_shape, project_vector_potential, DisplacementShape};
use khsurf::geometry::{
    curvatures, frame_and_metric, geometric_potential, make_surface, CurvatureField, MetricField,
};
use khsurf::operators::{lb_coeffs, OperatorCoeffs};
use khsurf::propagate::{
    frame_crosscheck, propagate, CrosscheckScene, PropagationConfig, TimeDependentOperator,
    Trajectory,
};
use khsurf::shift::{build_abel_maps, separability_residual, AbelMap};
use khsurf::spectra::{
    assemble_bare, dressed_spectrum_sweep, eigensolve, EigenOptions, SpectrumScene,
};
use khsurf::Grid2;

use crate::config::{ConfigError, RunConfig};
use crate::output::{num, Table};

/// Abel-table oversampling used for every run (samples per grid cell).
const ABEL_REFINE: usize = 32;

/// Command failure, classified for the process exit code.
#[derive(Debug)]
pub enum CmdError {
    Config(ConfigError),
    Io(std::io::Error),
    Lib(khsurf::Error),
    ChecksFailed(usize),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Config(_) | CmdError::Io(_) => 2,
            CmdError::Lib(e) => match e {
                khsurf::Error::NonSeparable { .. }
                | khsurf::Error::SignChange { .. }
                | khsurf::Error::RangeExceeded { .. } => 3,
                khsurf::Error::NotConverged { .. }
                | khsurf::Error::Factorization(..)
                | khsurf::Error::Unstable { .. } => 4,
                _ => 2,
            },
            CmdError::ChecksFailed(_) => 1,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Config(e) => write!(f, "{e}"),
            CmdError::Io(e) => write!(f, "io error: {e}"),
            CmdError::Lib(e) => write!(f, "{e}"),
            CmdError::ChecksFailed(n) => write!(f, "{n} verification check(s) failed"),
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Io(e)
    }
}

impl From<khsurf::Error> for CmdError {
    fn from(e: khsurf::Error) -> Self {
        CmdError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CmdError>;

/// Everything a command needs besides its section of the config.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Ctx {
    fn note(&self, msg: String) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn wrote(&self, path: &Path, rows: usize) {
        self.note(format!("wrote {} ({rows} rows)", path.display()));
    }
}

/// Surface pipeline products shared by every command.
struct Geometry {
    kind: String,
    metric: MetricField,
    curv: CurvatureField,
    vgeo: khsurf::ScalarField,
    mass: f64,
}

fn build_geometry(cfg: &RunConfig) -> Result<Geometry> {
    let section = cfg.surface()?;
    let spec = section.build()?;
    let surface = make_surface(&spec)?;
    let metric = frame_and_metric(&surface)?;
    let curv = curvatures(&surface, &metric)?;
    let mass = cfg.mass();
    let vgeo = geometric_potential(&curv, mass)?;
    Ok(Geometry { kind: section.kind.clone(), metric, curv, vgeo, mass })
}

/// Drive pipeline products: shape, Abel tables, dressing knobs.
struct Drive {
    shape: DisplacementShape,
    map: AbelMap,
    omega: f64,
    alphas: Vec<f64>,
    dressing: DressingConfig,
}

/// Project the drive and build its shift calculus. A non-separable shape is
/// reported with a per-node residual dump next to the other outputs.
fn build_drive(ctx: &Ctx, metric: &MetricField) -> Result<Drive> {
    let section = ctx.cfg.drive()?;
    let spec = section.build()?;
    let projected = project_vector_potential(metric, &spec)?;
    let shape = displacement_shape(metric, &projected, &spec)?;

    let report = separability_residual(&shape);
    if !report.separable {
        let mut t = Table::new(&["q1", "q2", "residual1", "residual2"]);
        t.meta("max_residual", num(report.max_residual));
        t.meta("scale", num(report.scale));
        let grid = &shape.grid;
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                t.row(vec![
                    num(grid.q1(i)),
                    num(grid.q2(j)),
                    num(report.residual1[[i, j]]),
                    num(report.residual2[[i, j]]),
                ]);
            }
        }
        let path = t.write(&ctx.out, "separability_residual.csv")?;
        ctx.note(format!("drive is not separable; residuals in {}", path.display()));
        return Err(khsurf::Error::NonSeparable { max_residual: report.max_residual }.into());
    }

    let map = build_abel_maps(&shape, ABEL_REFINE)?;
    let dsec = ctx.cfg.dressing()?;
    let dressing = dsec.build()?;
    let alphas = dsec.amplitudes(shape.alpha0);
    Ok(Drive { shape, map, omega: spec.omega, alphas, dressing })
}

fn grid_meta(t: &mut Table, geo: &Geometry) {
    let g = &geo.metric.grid;
    t.meta("surface", geo.kind.clone());
    t.meta("n1", g.n1.to_string());
    t.meta("n2", g.n2.to_string());
    t.meta("q1_min", num(g.q1(0)));
    t.meta("q1_max", num(g.q1(g.n1 - 1)));
    t.meta("q2_min", num(g.q2(0)));
    t.meta("q2_max", num(g.q2(g.n2 - 1)));
    t.meta("mass", num(geo.mass));
}

fn drive_meta(t: &mut Table, drv: &Drive) {
    t.meta("omega", num(drv.omega));
    t.meta("alpha0", drv.alphas.iter().map(|a| num(*a)).collect::<Vec<_>>().join(";"));
    t.meta("n_max", drv.dressing.n_max.to_string());
    t.meta("n_theta", drv.dressing.n_theta.to_string());
    t.meta("abel_refine", ABEL_REFINE.to_string());
}

/// `geometry`: tabulate the metric, the curvatures and the attractive
/// curvature-induced potential.
pub fn cmd_geometry(ctx: &Ctx) -> Result<()> {
    let geo = build_geometry(&ctx.cfg)?;
    let grid = &geo.metric.grid;

    let mut metric = Table::new(&["q1", "q2", "g11", "g12", "g22", "sqrt_g"]);
    grid_meta(&mut metric, &geo);
    metric.meta("area", num(geo.metric.area()));
    let mut curv = Table::new(&["q1", "q2", "mean", "gauss", "v_geo"]);
    grid_meta(&mut curv, &geo);
    let vmin = geo.vgeo.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    curv.meta("v_min", num(vmin));

    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let (q1, q2) = (num(grid.q1(i)), num(grid.q2(j)));
            metric.row(vec![
                q1.clone(),
                q2.clone(),
                num(geo.metric.g11[[i, j]]),
                num(geo.metric.g12[[i, j]]),
                num(geo.metric.g22[[i, j]]),
                num(geo.metric.sqrt_g[[i, j]]),
            ]);
            curv.row(vec![
                q1,
                q2,
                num(geo.curv.mean.values[[i, j]]),
                num(geo.curv.gauss.values[[i, j]]),
                num(geo.vgeo.values[[i, j]]),
            ]);
        }
    }

    let p = metric.write(&ctx.out, "metric.csv")?;
    ctx.wrote(&p, grid.n1 * grid.n2);
    let p = curv.write(&ctx.out, "curvature.csv")?;
    ctx.wrote(&p, grid.n1 * grid.n2);
    Ok(())
}

fn coeff_row(prefix: Vec<String>, c: &OperatorCoeffs, i: usize, j: usize) -> Vec<String> {
    let mut row = prefix;
    row.extend([
        num(c.c20[[i, j]]),
        num(c.c11[[i, j]]),
        num(c.c02[[i, j]]),
        num(c.c10[[i, j]]),
        num(c.c01[[i, j]]),
        num(c.c00[[i, j]]),
    ]);
    row
}

/// `dress`: phase-averaged potential and operator corrections per amplitude,
/// with convergence and consistency diagnostics.
pub fn cmd_dress(ctx: &Ctx) -> Result<()> {
    let geo = build_geometry(&ctx.cfg)?;
    let drv = build_drive(ctx, &geo.metric)?;
    let grid = geo.metric.grid.clone();

    let dresser = LaplaceDresser::new(&geo.metric, &drv.shape, &drv.map)?;
    let bare = lb_coeffs(&geo.metric, drv.shape.periodic)?;
    let balance = charge_balance(&geo.metric, &drv.shape)?;

    let mut f0 = Table::new(&["alpha0", "q1", "q2", "f0"]);
    let mut fnh = Table::new(&["alpha0", "n", "q1", "q2", "cos", "sin"]);
    let mut d0 = Table::new(&["alpha0", "q1", "q2", "c20", "c11", "c02", "c10", "c01", "c00"]);
    let mut dn = Table::new(&["alpha0", "n", "phase", "q1", "q2", "c20", "c11", "c02", "c10", "c01", "c00"]);
    let mut diag = Table::new(&["alpha0", "key", "value"]);
    for t in [&mut f0, &mut fnh, &mut d0, &mut dn, &mut diag] {
        grid_meta(t, &geo);
        drive_meta(t, &drv);
    }

    for &alpha0 in &drv.alphas {
        let dp: DressedPotential =
            dress_potential(&geo.vgeo, &drv.map, alpha0, drv.omega, &drv.dressing)?;
        let dl: DressedLaplacian = dresser.dress(alpha0, drv.omega, &drv.dressing)?;
        let bch = bch_diagnostic(&drv.shape, alpha0)?;
        let a = num(alpha0);

        let mut delta0 = OperatorCoeffs::zeros(&grid, dl.static_part.periodic);
        delta0.c20 = &dl.static_part.c20 - &bare.c20;
        delta0.c11 = &dl.static_part.c11 - &bare.c11;
        delta0.c02 = &dl.static_part.c02 - &bare.c02;
        delta0.c10 = &dl.static_part.c10 - &bare.c10;
        delta0.c01 = &dl.static_part.c01 - &bare.c01;
        delta0.c00 = &dl.static_part.c00 - &bare.c00;

        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let (q1, q2) = (num(grid.q1(i)), num(grid.q2(j)));
                f0.row(vec![a.clone(), q1.clone(), q2.clone(), num(dp.f0.values[[i, j]])]);
                for (n, (c, s)) in dp.harmonics.iter().enumerate() {
                    fnh.row(vec![
                        a.clone(),
                        (n + 1).to_string(),
                        q1.clone(),
                        q2.clone(),
                        num(c.values[[i, j]]),
                        num(s.values[[i, j]]),
                    ]);
                }
                d0.row(coeff_row(vec![a.clone(), q1.clone(), q2.clone()], &delta0, i, j));
                for (n, (c, s)) in dl.harmonics.iter().enumerate() {
                    let tag = (n + 1).to_string();
                    dn.row(coeff_row(
                        vec![a.clone(), tag.clone(), "cos".into(), q1.clone(), q2.clone()],
                        c,
                        i,
                        j,
                    ));
                    dn.row(coeff_row(
                        vec![a.clone(), tag, "sin".into(), q1.clone(), q2.clone()],
                        s,
                        i,
                        j,
                    ));
                }
            }
        }

        let masked = dp
            .valid
            .as_ref()
            .map(|v| v.iter().filter(|ok| !**ok).count())
            .unwrap_or(0);
        for (key, value) in [
            ("charge_interior_integral", balance.interior_integral),
            ("charge_boundary_flux", balance.boundary_flux),
            ("charge_normalized_imbalance", balance.normalized_imbalance),
            ("bch_neglected_norm", bch.neglected_norm),
            ("bch_max_s", bch.max_s),
            ("potential_tail_ratio", dp.tail_ratio),
            ("operator_tail_ratio", dl.tail_ratio),
            ("masked_nodes", masked as f64),
        ] {
            diag.row(vec![a.clone(), key.to_string(), num(value)]);
        }
    }

    for (table, name) in [
        (&f0, "F0.csv"),
        (&fnh, "Fn.csv"),
        (&d0, "delta0_coeffs.csv"),
        (&dn, "deltaN_coeffs.csv"),
        (&diag, "diagnostics.csv"),
    ] {
        let rows = table.rows_len();
        let p = table.write(&ctx.out, name)?;
        ctx.wrote(&p, rows);
    }
    Ok(())
}

/// `spectrum`: low-lying eigenpairs, either of the bare curvature-bound
/// problem or swept over dressing amplitudes.
pub fn cmd_spectrum(ctx: &Ctx) -> Result<()> {
    let geo = build_geometry(&ctx.cfg)?;
    let grid = geo.metric.grid.clone();
    let solve = ctx.cfg.solve()?;
    let bc = ctx.cfg.boundary()?;
    let opts = EigenOptions::new(solve.k, solve.shift.0);

    let mut spectrum = Table::new(&["alpha0", "index", "energy_re", "energy_im", "residual", "f0_min"]);
    let mut states = Table::new(&["alpha0", "index", "q1", "q2", "re", "im"]);
    grid_meta(&mut spectrum, &geo);
    grid_meta(&mut states, &geo);
    spectrum.meta("k", solve.k.to_string());
    spectrum.meta("shift", num(solve.shift.0));

    let mut push_rows = |alpha0: f64, report: &khsurf::spectra::EigenReport, f0_min: f64| {
        let a = num(alpha0);
        for (idx, ev) in report.eigenvalues.iter().enumerate() {
            spectrum.row(vec![
                a.clone(),
                idx.to_string(),
                num(ev.re),
                num(ev.im),
                num(report.residuals[idx]),
                num(f0_min),
            ]);
            let v = &report.vectors[idx];
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    states.row(vec![
                        a.clone(),
                        idx.to_string(),
                        num(grid.q1(i)),
                        num(grid.q2(j)),
                        num(v[[i, j]].re),
                        num(v[[i, j]].im),
                    ]);
                }
            }
        }
    };

    if ctx.cfg.drive.is_some() {
        let drv = build_drive(ctx, &geo.metric)?;
        let scene = SpectrumScene {
            metric: &geo.metric,
            potential: &geo.vgeo,
            shape: &drv.shape,
            map: &drv.map,
            omega: drv.omega,
            mass: geo.mass,
            dressing: drv.dressing.clone(),
            bc,
        };
        let rows = dressed_spectrum_sweep(&scene, &drv.alphas, &opts)?;
        for row in &rows {
            push_rows(row.alpha0, &row.report, row.f0_min);
        }
        drop(push_rows);
        drive_meta(&mut spectrum, &drv);
    } else {
        let op = assemble_bare(&geo.metric, Some(&geo.vgeo), geo.mass, bc)?;
        let report = eigensolve(&op, &opts)?;
        let vmin = geo.vgeo.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        push_rows(0.0, &report, vmin);
        drop(push_rows);
    }

    let rows = spectrum.rows_len();
    let p = spectrum.write(&ctx.out, "spectrum.csv")?;
    ctx.wrote(&p, rows);
    let rows = states.rows_len();
    let p = states.write(&ctx.out, "states.csv")?;
    ctx.wrote(&p, rows);
    Ok(())
}

/// Build the configured initial state on the grid.
fn initial_state(
    ctx: &Ctx,
    grid: &Grid2,
    static_op: &khsurf::spectra::AssembledOperator,
) -> Result<Array2<Complex64>> {
    let section = &ctx.cfg.propagate()?.initial;
    match section.kind.as_str() {
        "ground" => {
            let solve = ctx.cfg.solve()?;
            let opts = EigenOptions::new(1, solve.shift.0);
            let report = eigensolve(static_op, &opts)?;
            Ok(report.vectors[0].clone())
        }
        "gaussian" => {
            let width = section
                .width
                .ok_or_else(|| ConfigError("propagate.initial.width is required for gaussian".into()))?
                .0;
            if !(width > 0.0) {
                return Err(ConfigError("propagate.initial.width must be positive".into()).into());
            }
            let (c1, c2) = match section.center {
                Some([a, b]) => (a.0, b.0),
                None => (
                    0.5 * (grid.q1(0) + grid.q1(grid.n1 - 1)),
                    0.5 * (grid.q2(0) + grid.q2(grid.n2 - 1)),
                ),
            };
            let mut psi = Array2::zeros(grid.shape());
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    let r2 = (grid.q1(i) - c1).powi(2) + (grid.q2(j) - c2).powi(2);
                    psi[[i, j]] = Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0);
                }
            }
            Ok(psi)
        }
        other => Err(ConfigError(format!("unknown initial state kind {other:?}")).into()),
    }
}

fn trajectory_rows(table: &mut Table, alpha0: f64, traj: &Trajectory) {
    let a = num(alpha0);
    let n = traj.energies.len();
    for (s, &t) in traj.times.iter().enumerate() {
        // the energy column holds the midpoint energy of the step starting
        // at t; the final row repeats the last step's value
        let e = traj.energies[s.min(n.saturating_sub(1))];
        table.row(vec![
            a.clone(),
            num(t),
            num(traj.norms[s]),
            num(traj.overlaps[s].re),
            num(traj.overlaps[s].im),
            num(e),
        ]);
    }
}

fn state_rows(table: &mut Table, alpha0: f64, t: f64, grid: &Grid2, psi: &Array2<Complex64>) {
    let a = num(alpha0);
    let tt = num(t);
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            table.row(vec![
                a.clone(),
                tt.clone(),
                num(grid.q1(i)),
                num(grid.q2(j)),
                num(psi[[i, j]].re),
                num(psi[[i, j]].im),
            ]);
        }
    }
}

/// `propagate`: Crank-Nicolson time evolution under the static or dressed
/// operator, with an optional laboratory-frame crosscheck.
pub fn cmd_propagate(ctx: &Ctx) -> Result<()> {
    let geo = build_geometry(&ctx.cfg)?;
    let grid = geo.metric.grid.clone();
    let psec = ctx.cfg.propagate()?;
    let bc = ctx.cfg.boundary()?;

    let mut pcfg = PropagationConfig::new(psec.dt.0, psec.n_steps);
    pcfg.sample_every = psec.sample_every;
    pcfg.n_harmonics_used = psec.n_harmonics_used;

    let mut traj_table = Table::new(&["alpha0", "t", "norm", "overlap_re", "overlap_im", "energy"]);
    let mut final_table = Table::new(&["alpha0", "t", "q1", "q2", "re", "im"]);
    let mut samples_table = Table::new(&["alpha0", "t", "q1", "q2", "re", "im"]);
    let mut cross_table = Table::new(&["alpha0", "t", "discrepancy"]);
    for t in [&mut traj_table, &mut final_table, &mut samples_table, &mut cross_table] {
        grid_meta(t, &geo);
        t.meta("dt", num(psec.dt.0));
        t.meta("n_steps", psec.n_steps.to_string());
    }

    if ctx.cfg.drive.is_some() {
        let drv = build_drive(ctx, &geo.metric)?;
        let dresser = LaplaceDresser::new(&geo.metric, &drv.shape, &drv.map)?;
        for table in [&mut traj_table, &mut final_table, &mut samples_table, &mut cross_table] {
            drive_meta(table, &drv);
        }
        for &alpha0 in &drv.alphas {
            let dl = dresser.dress(alpha0, drv.omega, &drv.dressing)?;
            let dp = dress_potential(&geo.vgeo, &drv.map, alpha0, drv.omega, &drv.dressing)?;
            let op = TimeDependentOperator::from_dressed(
                &dl,
                &dp,
                &geo.metric,
                geo.mass,
                bc,
                psec.n_harmonics_used,
            )?;
            let psi0 = initial_state(ctx, &grid, &op.static_op)?;
            let traj = propagate(&op, &psi0, &pcfg)?;
            trajectory_rows(&mut traj_table, alpha0, &traj);
            state_rows(&mut final_table, alpha0, *traj.times.last().unwrap(), &grid, &traj.final_state);
            for (t, psi) in &traj.samples {
                state_rows(&mut samples_table, alpha0, *t, &grid, psi);
            }
            if psec.crosscheck {
                let scene = CrosscheckScene {
                    metric: &geo.metric,
                    potential: &geo.vgeo,
                    shape: &drv.shape,
                    map: &drv.map,
                    omega: drv.omega,
                    mass: geo.mass,
                    dressing: drv.dressing.clone(),
                    bc,
                };
                let report = frame_crosscheck(&scene, alpha0, &psi0, &pcfg)?;
                let a = num(alpha0);
                for (t, d) in report.times.iter().zip(&report.discrepancies) {
                    cross_table.row(vec![a.clone(), num(*t), num(*d)]);
                }
            }
        }
    } else {
        if psec.crosscheck {
            return Err(ConfigError("crosscheck needs a [drive] section".into()).into());
        }
        let op = TimeDependentOperator::from_static(assemble_bare(
            &geo.metric,
            Some(&geo.vgeo),
            geo.mass,
            bc,
        )?);
        let psi0 = initial_state(ctx, &grid, &op.static_op)?;
        let traj = propagate(&op, &psi0, &pcfg)?;
        trajectory_rows(&mut traj_table, 0.0, &traj);
        state_rows(&mut final_table, 0.0, *traj.times.last().unwrap(), &grid, &traj.final_state);
        for (t, psi) in &traj.samples {
            state_rows(&mut samples_table, 0.0, *t, &grid, psi);
        }
    }

    let rows = traj_table.rows_len();
    let p = traj_table.write(&ctx.out, "trajectory.csv")?;
    ctx.wrote(&p, rows);
    let rows = final_table.rows_len();
    let p = final_table.write(&ctx.out, "final_state.csv")?;
    ctx.wrote(&p, rows);
    if !samples_table.is_empty() {
        let rows = samples_table.rows_len();
        let p = samples_table.write(&ctx.out, "samples.csv")?;
        ctx.wrote(&p, rows);
    }
    if !cross_table.is_empty() {
        let rows = cross_table.rows_len();
        let p = cross_table.write(&ctx.out, "crosscheck.csv")?;
        ctx.wrote(&p, rows);
    }
    Ok(())
}

/// `check`: run the built-in verification battery, print one line per
/// check and fail (exit 1) if any check fails.
pub fn cmd_check(ctx: &Ctx) -> Result<()> {
    let results = run_all_checks();
    let mut report = Table::new(&["name", "passed", "seconds", "detail"]);
    let mut failed = 0usize;
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        if !ctx.quiet {
            println!("{verdict} {} ({:.2} s): {}", r.name, r.seconds, r.detail);
        }
        if !r.passed {
            failed += 1;
        }
        report.row(vec![
            r.name.to_string(),
            r.passed.to_string(),
            format!("{:.3}", r.seconds),
            r.detail.replace(',', ";"),
        ]);
    }
    let rows = report.rows_len();
    let p = report.write(&ctx.out, "report.csv")?;
    ctx.wrote(&p, rows);
    if failed > 0 {
        return Err(CmdError::ChecksFailed(failed));
    }
    ctx.note(format!("all {} checks passed", results.len()));
    Ok(())
}
