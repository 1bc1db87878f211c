use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pulsewave::config::RunConfig;
use pulsewave::cylinder::{magnetization_profile, verify_cell_identity, Direction};
use pulsewave::effective::{einstein_check, mobility, surface_tension, sweep, EffectiveTable};
use pulsewave::error::Error;
use pulsewave::frontsim::{sharp_interface_compare, write_summary_csv, SharpInterfaceReport};
use pulsewave::laminar2d::{
    dtension_branch_limits, gap_scan, mobility_asymptotics, upper_bound_profile, write_branch_csv,
    write_gap_csv, BranchRow,
};
use pulsewave::media::validate as validate_medium;
use pulsewave::wave::{minimize, minimize_regularized, WaveSolution};
use pulsewave::Result;

/// Pulsating standing waves in periodic Allen-Cahn media: effective surface
/// tension, mobility, correctors, and sharp-interface validation.
#[derive(Parser)]
#[command(name = "pulsewave", version)]
struct Cli {
    /// Configuration file (TOML); command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Medium kind: homogeneous or laminar7.
    #[arg(long, global = true)]
    medium: Option<String>,
    /// Soft-slot coefficient of the laminar medium.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Ramp half-width of the laminar medium.
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Direction components, comma separated (e.g. 1,0).
    #[arg(long, global = true, value_delimiter = ',')]
    e: Option<Vec<f64>>,
    /// Direction angle in degrees (alternative to --e).
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Cylinder truncation half-length.
    #[arg(long = "L", global = true)]
    l: Option<f64>,
    /// Axial node count.
    #[arg(long, global = true)]
    ns: Option<usize>,
    /// Nodes per periodic coordinate.
    #[arg(long, global = true)]
    nx: Option<usize>,
    /// Projected-residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Axial regularization weight.
    #[arg(long = "delta-reg", global = true)]
    delta_reg: Option<f64>,
    /// Interface widths, comma separated.
    #[arg(long = "eps-list", global = true, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    /// Final time of the sharp-interface comparison.
    #[arg(long = "T", global = true)]
    t_final: Option<f64>,
    /// Finite-difference step for the Hessian cross-check.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// RNG seed recorded in the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Minimize the cylinder Lagrangian for one direction.
    Wave,
    /// Tabulate effective coefficients over a list of angles.
    Sweep,
    /// Corrector Hessian vs finite-difference Hessian cross-check.
    Einstein,
    /// 2D laminar pathology scans.
    Laminar2d {
        #[command(subcommand)]
        what: Laminar2dCommand,
    },
    /// Sharp-interface comparison against the homogenized graph flow.
    Simulate,
    /// Cylinder-vs-physical energy average for a rational direction.
    CellIdentity,
    /// Validate the configuration and medium; print diagnostics.
    Validate,
}

#[derive(Subcommand, Clone)]
enum Laminar2dCommand {
    /// 1D pinned/free energy-gap oracle (plus optional ζ trace).
    Gap,
    /// Directional-derivative branch limits of the surface tension.
    Tension,
    /// Compensated mobility sinθ·M̃(e_θ) along a θ list.
    Mobility,
}

fn main() {
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    let start = std::time::Instant::now();
    match dispatch(&cli.command, &cfg) {
        Ok(outputs) => {
            if let Err(e) = write_manifest(&cli.command, &cfg, &outputs, start.elapsed()) {
                eprintln!("manifest error: {e}");
                std::process::exit(3);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(3);
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(kind) = &o.medium {
        cfg.medium.kind = kind.clone();
    }
    if let Some(v) = o.delta {
        cfg.medium.delta = v;
    }
    if let Some(v) = o.kappa {
        cfg.medium.kappa = v;
    }
    if let Some(v) = &o.e {
        cfg.run.e = Some(v.clone());
    }
    if let Some(v) = o.theta {
        cfg.run.theta = Some(v);
    }
    if let Some(v) = o.l {
        cfg.solver.l = v;
    }
    if let Some(v) = o.ns {
        cfg.solver.ns = v;
    }
    if let Some(v) = o.nx {
        cfg.solver.nx = v;
    }
    if let Some(v) = o.tol {
        cfg.solver.tol = v;
    }
    if let Some(v) = o.delta_reg {
        cfg.solver.delta_reg = v;
    }
    if let Some(v) = &o.eps_list {
        cfg.run.eps_list = v.clone();
    }
    if let Some(v) = o.t_final {
        cfg.run.t_final = v;
    }
    if let Some(v) = o.h {
        cfg.run.h = v;
    }
    if let Some(v) = &o.out {
        cfg.run.out = v.clone();
    }
    if let Some(v) = o.seed {
        cfg.solver.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn direction(cfg: &RunConfig) -> Result<Direction> {
    if let Some(e) = &cfg.run.e {
        let mut v = e.clone();
        while v.len() < cfg.medium.d {
            v.push(0.0);
        }
        return Direction::from_vec(&v);
    }
    let theta = cfg.run.theta.unwrap_or(90.0);
    Ok(Direction::from_theta(theta.to_radians()))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.run.out);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn solve(cfg: &RunConfig) -> Result<WaveSolution> {
    let m = cfg.build_medium()?;
    let grid = cfg.build_grid()?;
    let e = direction(cfg)?;
    let opts = cfg.wave_opts();
    if cfg.solver.delta_reg > 0.0 {
        minimize_regularized(&e, &m, &grid, cfg.solver.delta_reg, &opts)
    } else {
        minimize(&e, &m, &grid, &opts)
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Wave => cmd_wave(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Einstein => cmd_einstein(cfg),
        Command::Laminar2d { what } => cmd_laminar2d(what, cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::CellIdentity => cmd_cell_identity(cfg),
        Command::Validate => cmd_validate(cfg),
    }
}

fn cmd_wave(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let sol = solve(cfg)?;
    let m = cfg.build_medium()?;
    let profile = magnetization_profile(&sol.u);

    let csv_path = dir.join("wave.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["s", "u_mean"])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (i, p) in profile.iter().enumerate() {
        w.write_record([
            format!("{:.12e}", sol.u.grid.s_coord(i)),
            format!("{p:.12e}"),
        ])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;

    let meta_path = dir.join("wave.json");
    let meta = serde_json::json!({
        "e": sol.e.as_slice(),
        "energy": sol.energy,
        "surface_tension": surface_tension(&sol),
        "mobility": mobility(&sol),
        "gradient": pulsewave::effective::grad_surface_tension(&sol, &m),
        "iterations": sol.iterations,
        "residual_norm": sol.residual_norm,
        "shift": sol.shift,
        "delta_reg": sol.delta_reg,
    });
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    println!("energy {:.6}", sol.energy);
    Ok(vec![csv_path, meta_path])
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let m = cfg.build_medium()?;
    let grid = cfg.build_grid()?;
    let dirs: Vec<Direction> = cfg
        .run
        .thetas
        .iter()
        .map(|t| Direction::from_theta(t.to_radians()))
        .collect();
    let table = sweep(&m, &grid, &dirs, &cfg.wave_opts());

    let csv_path = dir.join("table.csv");
    table.write_csv(std::fs::File::create(&csv_path)?)?;
    let mut outputs = vec![csv_path];

    let failed: Vec<String> = table
        .rows
        .iter()
        .zip(&cfg.run.thetas)
        .filter(|(r, _)| r.flags.starts_with("error"))
        .map(|(r, t)| format!("theta {t}: {}", r.flags))
        .collect();
    if !failed.is_empty() {
        let fail_path = dir.join("failures.txt");
        std::fs::write(&fail_path, failed.join("\n") + "\n")?;
        outputs.push(fail_path);
    }

    outputs.push(emit_table_plotdata(&table, &cfg.run.thetas, &dir)?);
    Ok(outputs)
}

fn cmd_einstein(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let m = cfg.build_medium()?;
    let grid = cfg.build_grid()?;
    let e = direction(cfg)?;
    let rep = einstein_check(&e, &m, &grid, cfg.run.h, &cfg.wave_opts())?;
    let path = dir.join("einstein.json");
    let json = serde_json::json!({
        "e": e.as_slice(),
        "hess_corrector": rep.hess_corrector,
        "hess_fd": rep.hess_fd,
        "rel_error": rep.rel_error,
        "mobility": rep.mobility,
        "max_mobility_ratio": rep.max_mobility_ratio,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&json)?)?;
    println!("rel_error {:.3e}", rep.rel_error);
    Ok(vec![path])
}

fn cmd_laminar2d(what: &Laminar2dCommand, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    match what {
        Laminar2dCommand::Gap => {
            let grid = cfg.build_grid()?;
            let delta_reg = if cfg.solver.delta_reg > 0.0 {
                cfg.solver.delta_reg
            } else {
                0.05
            };
            let (report, trace) = gap_scan(
                cfg.medium.delta,
                cfg.medium.kappa,
                &grid,
                cfg.run.zeta_n,
                delta_reg,
                &cfg.wave_opts(),
            )?;
            let gap_path = dir.join("gap.csv");
            write_gap_csv(std::slice::from_ref(&report), std::fs::File::create(&gap_path)?)?;
            let ub = upper_bound_profile(cfg.medium.delta, cfg.medium.kappa);
            println!(
                "e_min {:.6} e_pinned {:.6} ratio {:.3} upper_bound {:.6}",
                report.e_min, report.e_pinned, report.ratio, ub
            );
            let mut outputs = vec![gap_path];
            if !trace.is_empty() {
                let trace_path = dir.join("zeta_trace.dat");
                let mut f = std::fs::File::create(&trace_path)?;
                writeln!(f, "# zeta  u_zeta_quarter")?;
                for (j, v) in trace.iter().enumerate() {
                    writeln!(f, "{:.12e} {v:.12e}", j as f64 / trace.len() as f64)?;
                }
                outputs.push(trace_path);
            }
            Ok(outputs)
        }
        Laminar2dCommand::Tension => {
            let m = cfg.build_medium()?;
            let grid = cfg.build_grid()?;
            let rows = dtension_branch_limits(
                &m,
                &grid,
                &cfg.run.thetas,
                cfg.solver.delta_reg,
                &cfg.wave_opts(),
            )?;
            let path = dir.join("tension_branch.csv");
            write_branch_csv(&rows, std::fs::File::create(&path)?)?;
            let plot = emit_branch_plotdata(&rows, "dphi_e2", &dir.join("dphi_theta.dat"))?;
            Ok(vec![path, plot])
        }
        Laminar2dCommand::Mobility => {
            let m = cfg.build_medium()?;
            let grid = cfg.build_grid()?;
            let rows = mobility_asymptotics(
                &m,
                &grid,
                &cfg.run.thetas,
                cfg.solver.delta_reg,
                &cfg.wave_opts(),
            )?;
            let path = dir.join("mobility.csv");
            write_branch_csv(&rows, std::fs::File::create(&path)?)?;
            let plot = emit_branch_plotdata(
                &rows,
                "sin_theta_mobility",
                &dir.join("sin_theta_mobility.dat"),
            )?;
            Ok(vec![path, plot])
        }
    }
}

fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let m = cfg.build_medium()?;
    let grid = cfg.build_grid()?;
    let dirs: Vec<Direction> = cfg
        .run
        .thetas
        .iter()
        .map(|t| Direction::from_theta(t.to_radians()))
        .collect();
    let table = sweep(&m, &grid, &dirs, &cfg.wave_opts());
    let amp = cfg.run.amplitude;
    let init = move |x: f64| amp * (2.0 * std::f64::consts::PI * x).sin();
    let reports = sharp_interface_compare(
        &m,
        &table,
        &cfg.run.eps_list,
        cfg.run.t_final,
        &init,
    )?;
    let csv_path = dir.join("front_errors.csv");
    write_summary_csv(&reports, std::fs::File::create(&csv_path)?)?;
    let plot = emit_front_plotdata(&reports, &dir.join("sup_error_eps.dat"))?;
    for r in &reports {
        println!(
            "eps {:.4}: sup_error {:.3e} l2_error {:.3e}",
            r.epsilon, r.sup_error, r.l2_error
        );
    }
    Ok(vec![csv_path, plot])
}

fn cmd_cell_identity(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let m = cfg.build_medium()?;
    let grid = cfg.build_grid()?;
    let p = cfg.run.p;
    let norm = ((p[0] * p[0] + p[1] * p[1]) as f64).sqrt();
    let e = Direction::from_vec(&[p[0] as f64 / norm, p[1] as f64 / norm])?;
    let opts = cfg.wave_opts();
    let sol = if cfg.solver.delta_reg > 0.0 {
        minimize_regularized(&e, &m, &grid, cfg.solver.delta_reg, &opts)?
    } else {
        minimize(&e, &m, &grid, &opts)?
    };
    let (cylinder_avg, physical_avg, diff) =
        verify_cell_identity(&sol.u, &p, &m, cfg.run.n_zeta)?;
    let path = dir.join("cell_identity.json");
    let json = serde_json::json!({
        "p": p,
        "cylinder_average": cylinder_avg,
        "physical_average": physical_avg,
        "difference": diff,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&json)?)?;
    println!("cylinder {cylinder_avg:.8} physical {physical_avg:.8} diff {diff:.3e}");
    Ok(vec![path])
}

fn cmd_validate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let m = cfg.build_medium()?;
    let problems = validate_medium(&m);
    if problems.is_empty() {
        println!("ok");
        Ok(Vec::new())
    } else {
        for p in &problems {
            eprintln!("{p}");
        }
        Err(Error::Validation(format!(
            "{} medium diagnostics failed",
            problems.len()
        )))
    }
}

/// Whitespace-column plot file: φ̃ and M̃ against θ.
fn emit_table_plotdata(table: &EffectiveTable, thetas: &[f64], dir: &Path) -> Result<PathBuf> {
    let path = dir.join("phi_theta.dat");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "# theta_deg  phi  mobility   (dimensionless)")?;
    for (r, t) in table.rows.iter().zip(thetas) {
        if r.flags.starts_with("error") {
            continue;
        }
        writeln!(f, "{t:.6} {:.12e} {:.12e}", r.phi, r.mobility)?;
    }
    Ok(path)
}

fn emit_branch_plotdata(rows: &[BranchRow], column: &str, path: &Path) -> Result<PathBuf> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# theta_deg  {column}   (dimensionless)")?;
    for r in rows {
        let v = match column {
            "dphi_e2" => r.dphi_e2,
            "sin_theta_mobility" => r.sin_theta_mobility,
            _ => f64::NAN,
        };
        writeln!(f, "{:.6} {v:.12e}", r.theta_deg)?;
    }
    Ok(path.to_path_buf())
}

fn emit_front_plotdata(rows: &[SharpInterfaceReport], path: &Path) -> Result<PathBuf> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# epsilon  sup_error   (length units of the strip)")?;
    for r in rows {
        writeln!(f, "{:.6} {:.12e}", r.epsilon, r.sup_error)?;
    }
    Ok(path.to_path_buf())
}

fn write_manifest(
    cmd: &Command,
    cfg: &RunConfig,
    outputs: &[PathBuf],
    wall: std::time::Duration,
) -> Result<()> {
    if outputs.is_empty() {
        return Ok(());
    }
    let dir = out_dir(cfg)?;
    let name = match cmd {
        Command::Wave => "wave",
        Command::Sweep => "sweep",
        Command::Einstein => "einstein",
        Command::Laminar2d { what } => match what {
            Laminar2dCommand::Gap => "laminar2d gap",
            Laminar2dCommand::Tension => "laminar2d tension",
            Laminar2dCommand::Mobility => "laminar2d mobility",
        },
        Command::Simulate => "simulate",
        Command::CellIdentity => "cell-identity",
        Command::Validate => "validate",
    };
    let manifest = serde_json::json!({
        "command": name,
        "config_hash": cfg.hash(),
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.solver.seed,
        "wall_time_s": wall.as_secs_f64(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}
