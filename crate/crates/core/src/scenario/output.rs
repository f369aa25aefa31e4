//! CSV and gnuplot files for a finished run. Numbers are written with 17
//! significant digits so that identical runs give identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::mesh::{DensityField, Grid1D};
use crate::scenario::run::ScenarioRun;

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn snapshot_csv(t: f64, grid: &Grid1D, rho: &DensityField, v: &DensityField) -> String {
    let n = rho.n_classes();
    let mut out = String::from("t,x");
    for i in 1..=n {
        write!(out, ",rho_{i}").unwrap();
    }
    for i in 1..=n {
        write!(out, ",v_{i}").unwrap();
    }
    out.push('\n');
    let t = fmt_num(t);
    for (k, x) in grid.centers().enumerate() {
        out.push_str(&t);
        write!(out, ",{}", fmt_num(x)).unwrap();
        for field in [rho, v] {
            for c in field.classes() {
                write!(out, ",{}", fmt_num(c[k])).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

fn steps_csv(run: &ScenarioRun) -> String {
    let mut out = String::from("step,t,dt,vmax");
    for i in 1..=run.config.n_classes() {
        write!(out, ",vmax_{i}").unwrap();
    }
    out.push('\n');
    for s in &run.solution.steps {
        write!(
            out,
            "{},{},{},{}",
            s.m,
            fmt_num(s.t),
            fmt_num(s.dt),
            fmt_num(s.vmax)
        )
        .unwrap();
        for v in &s.class_vmax {
            write!(out, ",{}", fmt_num(*v)).unwrap();
        }
        out.push('\n');
    }
    out
}

fn summary_csv(run: &ScenarioRun) -> String {
    let balanced = run.solution.balanced_mass();
    let mut out =
        String::from("t,class,mass,balanced_mass,tv,max,centroid,support_lo,support_hi\n");
    let times = run.solution.trajectory.times();
    for r in &run.summary.rows {
        let m = times.iter().position(|t| *t == r.t).unwrap_or(0);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(r.t),
            r.class + 1,
            fmt_num(r.mass),
            fmt_num(balanced[m][r.class]),
            fmt_num(r.tv),
            fmt_num(r.max),
            fmt_opt(r.centroid),
            fmt_opt(r.support.map(|s| s[0])),
            fmt_opt(r.support.map(|s| s[1])),
        )
        .unwrap();
    }
    out
}

fn clearance_csv(run: &ScenarioRun) -> String {
    let mut out = String::from("class,marker,fraction,time\n");
    for c in &run.summary.clearance {
        writeln!(
            out,
            "{},{},{},{}",
            c.class + 1,
            fmt_num(c.marker),
            fmt_num(c.fraction),
            fmt_opt(c.time)
        )
        .unwrap();
    }
    out
}

fn fixed_point_csv(run: &ScenarioRun) -> Option<String> {
    let report = run.solution.fixed_point.as_ref()?;
    let mut out = String::from("t_start,t_end,iterations,halvings,final_residual\n");
    for s in &report.subintervals {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(s.t_start),
            fmt_num(s.t_end),
            s.iterations,
            s.halvings,
            fmt_num(s.final_residual())
        )
        .unwrap();
    }
    Some(out)
}

fn gnuplot_script(files: &[(f64, String)], n_classes: usize) -> String {
    let mut out = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x'\nset ylabel 'density'\n");
    for (t, name) in files {
        writeln!(out, "set title 't = {t}'").unwrap();
        let curves: Vec<String> = (0..n_classes)
            .map(|i| format!("'{name}' using 2:{} with lines", 3 + i))
            .collect();
        writeln!(out, "plot {}\npause -1", curves.join(", ")).unwrap();
    }
    out
}

/// Write every artifact of `run` into `dir` (created if needed) and return
/// the paths written.
pub fn write_artifacts(run: &ScenarioRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let grid = *run.solution.trajectory.grid();
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    let mut snapshots = Vec::new();
    for (k, (t, rho, v)) in run.snapshots().enumerate() {
        let name = format!("snapshot_{k:03}.csv");
        put(&name, snapshot_csv(t, &grid, rho, v))?;
        snapshots.push((t, name));
    }
    put("config.json", run.config.to_json())?;
    put("summary.csv", summary_csv(run))?;
    if !run.summary.clearance.is_empty() {
        put("clearance.csv", clearance_csv(run))?;
    }
    if !run.solution.steps.is_empty() {
        put("steps.csv", steps_csv(run))?;
    }
    if let Some(body) = fixed_point_csv(run) {
        put("fixed_point.csv", body)?;
    }
    put(
        "plot.gp",
        gnuplot_script(&snapshots, run.config.n_classes()),
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(0.0), "0.0000000000000000e0");
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn snapshot_header_and_rows() {
        let grid = Grid1D::new(0.0, 1.0, 2).unwrap();
        let rho = DensityField::from_classes(vec![vec![0.5, 0.0], vec![0.25, 1.0]]).unwrap();
        let v = DensityField::from_classes(vec![vec![1.0, 1.0], vec![0.5, 0.0]]).unwrap();
        let csv = snapshot_csv(0.5, &grid, &rho, &v);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,rho_1,rho_2,v_1,v_2");
        assert_eq!(lines.len(), 3);
        let cells: Vec<f64> = lines[2].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells, vec![0.5, 0.75, 0.0, 1.0, 1.0, 0.0]);
    }
}
