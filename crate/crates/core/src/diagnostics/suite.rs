//! The property suite behind `property-suite`: conservation, positivity and
//! the TV bound on every preset, Lipschitz scaling on the horizon preset and
//! the comb equality.

use std::time::Instant;

use serde::Serialize;

use super::{check_tv_bound, estimate_q_for, stability_experiment, PerturbationKind};
use crate::error::Result;
use crate::kernels::convolution::ConvolutionEngine;
use crate::mesh::{l1_distance_total, DEFAULT_CFL_SAFETY};
use crate::scenario::config::{
    ClassSpec, InitialDatum, KernelDoc, LagrangianOptions, ScenarioConfig, SolverKind,
    SummaryOptions,
};
use crate::scenario::presets::{preset, PRESETS};
use crate::scenario::run::{solve, Solution};
use crate::speed_laws::SpeedLawSpec;

/// Relative mass drift of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MassDrift {
    /// Worst `|mass + outflow - mass_0| / mass_0` over samples and classes.
    pub balanced: f64,
    /// Worst `|mass - mass_0| / mass_0` over the samples taken before any
    /// mass crossed a domain end; `None` if there are none besides the first.
    pub interior: Option<f64>,
}

pub fn mass_drift(solution: &Solution) -> MassDrift {
    let balanced = solution.balanced_mass();
    let first = &balanced[0];
    let dx = solution.trajectory.grid().dx();
    let rel = |a: f64, b: f64| {
        if b > 0.0 {
            ((a - b) / b).abs()
        } else {
            a.abs()
        }
    };
    let mut worst_balanced: f64 = 0.0;
    let mut worst_interior: Option<f64> = None;
    for (m, (row, field)) in balanced
        .iter()
        .zip(solution.trajectory.fields())
        .enumerate()
    {
        for (b, b0) in row.iter().zip(first) {
            worst_balanced = worst_balanced.max(rel(*b, *b0));
        }
        let crossed = solution.outflow[..=m]
            .iter()
            .flatten()
            .zip(first.iter().cycle())
            .any(|(o, b0)| o.abs() > 1e-14 * b0.max(1.0));
        if m > 0 && !crossed {
            let drift = field
                .classes()
                .iter()
                .zip(first)
                .map(|(c, b0)| rel(dx * c.iter().sum::<f64>(), *b0))
                .fold(0.0, f64::max);
            worst_interior = Some(worst_interior.unwrap_or(0.0).max(drift));
        }
    }
    MassDrift {
        balanced: worst_balanced,
        interior: worst_interior,
    }
}

pub fn count_negative(solution: &Solution) -> usize {
    solution
        .trajectory
        .fields()
        .iter()
        .flat_map(|f| f.classes().iter().flatten())
        .filter(|r| **r < 0.0)
        .count()
}

/// Unit-height comb with `m` teeth transported at speed 1 by the
/// Lagrangian solver, eight cells per tooth.
pub fn comb_transport_config(m: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: Some(format!("comb-{m}")),
        domain: [0.0, 4.0],
        n_cells: 64 * m,
        t_start: 0.0,
        t_final: 1.0,
        snapshots: vec![0.0, 0.5, 1.0],
        classes: vec![ClassSpec {
            speed_law: SpeedLawSpec::constant(1.0),
            initial: InitialDatum::Comb { teeth: m },
        }],
        kernels: vec![vec![KernelDoc::Bump { f: 1.0, b: 0.01 }]],
        solver: SolverKind::Lagrangian,
        cfl_safety: DEFAULT_CFL_SAFETY,
        engine: ConvolutionEngine::Auto,
        seed: None,
        summary: SummaryOptions::default(),
        lagrangian: LagrangianOptions::default(),
    }
}

/// `||rho(t + eps) - rho(t)||_1` for the comb, at `t = 0.5`.
pub fn comb_time_distance(m: usize, eps: f64) -> Result<f64> {
    let mut cfg = comb_transport_config(m);
    cfg.snapshots = vec![0.0, 0.5, 0.5 + eps, 1.0];
    let run = solve(&cfg, None)?;
    let grid = cfg.grid()?;
    let traj = &run.trajectory;
    l1_distance_total(traj.at(0.5).unwrap(), traj.at(0.5 + eps).unwrap(), &grid)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn record(
    out: &mut Vec<PropertyResult>,
    name: String,
    start: Instant,
    check: Result<(bool, String)>,
) {
    let (passed, detail) = check.unwrap_or_else(|e| (false, format!("error: {e}")));
    out.push(PropertyResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    });
}

/// Run the suite. `quick` uses coarser meshes.
pub fn property_suite(quick: bool) -> Vec<PropertyResult> {
    let cells = if quick { 400 } else { 2000 };
    let mut out = Vec::new();
    for name in PRESETS {
        let base = match preset(name) {
            Ok(c) => c.with_cells(cells),
            Err(e) => {
                record(&mut out, format!("{name}/preset"), Instant::now(), Err(e));
                continue;
            }
        };
        let mut solvers = vec![base.solver];
        if base.solver == SolverKind::FvNonlocal {
            solvers.push(SolverKind::Lagrangian);
        }
        for solver in solvers {
            let cfg = base.clone().with_solver(solver);
            let tag = format!("{name}/{}", solver.name());
            let start = Instant::now();
            let run = match solve(&cfg, None) {
                Ok(r) => r,
                Err(e) => {
                    record(&mut out, format!("{tag}/run"), start, Err(e));
                    continue;
                }
            };
            let tol = if solver == SolverKind::Lagrangian {
                1e-3
            } else {
                1e-10
            };
            let drift = mass_drift(&run);
            record(
                &mut out,
                format!("{tag}/mass"),
                start,
                Ok((
                    drift.balanced <= tol && drift.interior.unwrap_or(0.0) <= tol,
                    format!(
                        "balanced {:e}, interior {:?}, tolerance {tol:e}",
                        drift.balanced, drift.interior
                    ),
                )),
            );
            let negative = count_negative(&run);
            record(
                &mut out,
                format!("{tag}/positivity"),
                start,
                Ok((negative == 0, format!("{negative} negative cells"))),
            );
            let tv = estimate_q_for(&cfg).map(|q| {
                let checks = check_tv_bound(&run.trajectory, &q);
                let failing = checks.iter().filter(|c| !c.holds).count();
                (
                    failing == 0,
                    format!(
                        "Q = {:e}, {failing} of {} samples above the bound",
                        q.q,
                        checks.len()
                    ),
                )
            });
            record(&mut out, format!("{tag}/tv-bound"), start, tv);
        }
    }

    let horizon = preset("horizon")
        .expect("built-in preset")
        .with_cells(if quick { 250 } else { 1000 });
    for kind in [
        PerturbationKind::InitialData,
        PerturbationKind::SpeedLaw,
        PerturbationKind::Kernel,
    ] {
        let start = Instant::now();
        let check = stability_experiment(kind, &horizon, &[0.0, 1e-2, 1e-3, 1e-4]).map(|r| {
            let identity = r.distances[0].iter().all(|d| *d == 0.0);
            let spread = r.spread.iter().copied().fold(1.0, f64::max);
            (
                r.passed() && identity,
                format!(
                    "max ratio spread {spread:.4}, growth {:?}, zero perturbation distance {}",
                    r.growth.iter().map(|g| g.2).collect::<Vec<_>>(),
                    if identity { "0" } else { "non-zero" }
                ),
            )
        });
        record(
            &mut out,
            format!("horizon/stability/{}", kind.name()),
            start,
            check,
        );
    }

    let start = Instant::now();
    let comb = comb_time_distance(4, 1.0 / 16.0).map(|d| {
        let rel = (d - 0.5).abs() / 0.5;
        (
            rel <= 0.05,
            format!("distance {d}, expected 0.5, relative error {rel:e}"),
        )
    });
    record(&mut out, "comb/time-lipschitz".into(), start, comb);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comb_config_is_valid() {
        for m in [1, 4, 8] {
            assert_eq!(comb_transport_config(m).violations(), vec![]);
        }
    }

    #[test]
    fn comb_distance_is_two_m_eps() {
        let d = comb_time_distance(4, 1.0 / 16.0).unwrap();
        assert!((d - 0.5).abs() < 1e-12, "{d}");
    }
}
