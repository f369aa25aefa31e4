use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nonlocal_traffic::diagnostics::suite::property_suite;
use nonlocal_traffic::mesh::l1_distance_total;
use nonlocal_traffic::scenario::config::{parse_config, ScenarioConfig, SolverKind};
use nonlocal_traffic::scenario::output::{fmt_num, write_artifacts};
use nonlocal_traffic::scenario::presets::{describe, preset, FINE_CELLS, PRESETS};
use nonlocal_traffic::scenario::run::{run_scenario, ScenarioRun};
use nonlocal_traffic::Error;

#[derive(Parser)]
#[command(
    name = "nltraffic",
    version,
    about = "Multiclass nonlocal traffic flow simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    /// Lax-Friedrichs with nonlocal fluxes.
    Fv,
    /// Lax-Friedrichs with the local LWR flux.
    Lwr,
    /// Characteristics and fixed-point iteration.
    Lagrangian,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Fv => SolverKind::FvNonlocal,
            SolverArg::Lwr => SolverKind::FvLocalLwr,
            SolverArg::Lagrangian => SolverKind::Lagrangian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a preset and write its CSV files.
    Run {
        /// Path to a JSON scenario, or a preset name.
        target: String,
        #[arg(long)]
        cells: Option<usize>,
        /// Use the fine 10000-cell mesh.
        #[arg(long, conflicts_with = "cells")]
        paper_resolution: bool,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Output directory (default: runs/<name>-<solver>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a preset with the finite-volume and the Lagrangian solver and
    /// compare the snapshots.
    CompareSolvers {
        preset: String,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check conservation, positivity, the TV bound and the stability
    /// scaling laws.
    PropertySuite {
        /// Coarser meshes.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value = "property-suite")]
        out: PathBuf,
    },
    /// List the built-in scenarios.
    ListPresets,
}

fn load(target: &str) -> Result<ScenarioConfig, Error> {
    let path = Path::new(target);
    if path.is_file() {
        parse_config(&std::fs::read_to_string(path)?)
    } else {
        preset(target)
    }
}

fn print_summary(run: &ScenarioRun) {
    for (t, _, _) in run.snapshots() {
        for i in 0..run.config.n_classes() {
            if let Some(r) = run.summary.row(i, t) {
                println!(
                    "t = {t:<8} class {}: mass {:.6}  max {:.4}  centroid {}  support {}",
                    i + 1,
                    r.mass,
                    r.max,
                    r.centroid.map_or("-".into(), |c| format!("{c:.4}")),
                    r.support
                        .map_or("-".into(), |[a, b]| format!("[{a:.3}, {b:.3}]")),
                );
            }
        }
    }
    for c in &run.summary.clearance {
        println!(
            "class {}: {} of the mass past x = {} at t = {}",
            c.class + 1,
            c.fraction,
            c.marker,
            c.time.map_or("(not reached)".into(), |t| format!("{t:.3}"))
        );
    }
}

fn run(
    target: &str,
    cells: Option<usize>,
    fine: bool,
    solver: Option<SolverArg>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let mut cfg = load(target)?;
    if let Some(n) = cells.or(fine.then_some(FINE_CELLS)) {
        cfg = cfg.with_cells(n);
    }
    if let Some(s) = solver {
        cfg = cfg.with_solver(s.into());
    }
    cfg.validate()?;
    let name = cfg.name.clone().unwrap_or_else(|| "scenario".into());
    let dir =
        out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{name}-{}", cfg.solver.name())));
    let start = Instant::now();
    let result = run_scenario(&cfg)?;
    println!(
        "{name}: {} on {} cells, t in [{}, {}], {:.2} s",
        cfg.solver.name(),
        cfg.n_cells,
        cfg.t_start,
        cfg.t_final,
        start.elapsed().as_secs_f64()
    );
    print_summary(&result);
    let files = write_artifacts(&result, &dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn compare(name: &str, cells: Option<usize>, out: Option<PathBuf>) -> Result<(), Error> {
    let mut base = preset(name)?;
    if let Some(n) = cells {
        base = base.with_cells(n);
    }
    let grid = base.grid()?;
    let mut runs = Vec::new();
    for solver in [SolverKind::FvNonlocal, SolverKind::Lagrangian] {
        let cfg = base.clone().with_solver(solver);
        let start = Instant::now();
        let r = run_scenario(&cfg)?;
        println!("{}: {:.2} s", solver.name(), start.elapsed().as_secs_f64());
        runs.push(r);
    }
    let mut csv = String::from("t,l1_distance\n");
    for &t in &base.snapshots {
        let (a, b) = (runs[0].snapshot(t), runs[1].snapshot(t));
        if let (Some(a), Some(b)) = (a, b) {
            let d = l1_distance_total(a, b, &grid)?;
            println!("t = {t:<8} L1 distance {d:.4e}");
            csv.push_str(&format!("{},{}\n", fmt_num(t), fmt_num(d)));
        }
    }
    for (r, s) in runs.iter().zip(["fv-nonlocal", "lagrangian"]) {
        for c in &r.summary.clearance {
            println!("{s}: clearance of class {} at {:?}", c.class + 1, c.time);
        }
    }
    if let Some(dir) = out {
        for r in &runs {
            write_artifacts(r, &dir.join(r.config.solver.name()))?;
        }
        std::fs::write(dir.join("compare.csv"), csv)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn suite(quick: bool, out: &Path) -> Result<bool, Error> {
    let results = property_suite(quick);
    let mut csv = String::from("property,status,seconds,detail\n");
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<40} {}", r.name, r.detail);
        csv.push_str(&format!(
            "{},{status},{:.3},\"{}\"\n",
            r.name,
            r.seconds,
            r.detail.replace('"', "'")
        ));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("property_suite.csv"), csv)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} properties, {failed} failed; report in {}",
        results.len(),
        out.display()
    );
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            target,
            cells,
            paper_resolution,
            solver,
            out,
        } => run(&target, cells, paper_resolution, solver, out).map(|_| true),
        Command::CompareSolvers { preset, cells, out } => {
            compare(&preset, cells, out).map(|_| true)
        }
        Command::PropertySuite { quick, out } => suite(quick, &out),
        Command::ListPresets => {
            for name in PRESETS {
                println!("{name:<16} {}", describe(name).unwrap_or(""));
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
