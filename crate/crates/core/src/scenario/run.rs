//! Dispatch of a scenario to its solver and assembly of the run record.

use crate::error::{Error, Result};
use crate::fv::{FvSolver, StepRecord};
use crate::lagrangian::{fixed_point, FixedPointReport};
use crate::mesh::{DensityField, DensityTrajectory};
use crate::scenario::config::{ScenarioConfig, SolverKind};
use crate::scenario::summary::{summarize, RunSummary};

/// Solver output at the sample times of a scenario.
#[derive(Clone, Debug)]
pub struct Solution {
    pub solver: SolverKind,
    pub trajectory: DensityTrajectory,
    pub velocities: Vec<DensityField>,
    /// Time step log (finite-volume solvers only).
    pub steps: Vec<StepRecord>,
    /// Convergence record (Lagrangian solver only).
    pub fixed_point: Option<FixedPointReport>,
    /// Per sample and class: mass that left through the domain ends.
    pub outflow: Vec<Vec<f64>>,
}

impl Solution {
    /// Mass in the domain plus mass that left it, per sample and class.
    pub fn balanced_mass(&self) -> Vec<Vec<f64>> {
        let dx = self.trajectory.grid().dx();
        self.trajectory
            .fields()
            .iter()
            .zip(&self.outflow)
            .map(|(f, out)| {
                f.classes()
                    .iter()
                    .zip(out)
                    .map(|(c, o)| dx * c.iter().sum::<f64>() + o)
                    .collect()
            })
            .collect()
    }
}

fn with_context(config: &ScenarioConfig, e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Run {
            scenario: config.name.clone().unwrap_or_else(|| "unnamed".into()),
            solver: config.solver.name().into(),
            source: Box::new(other),
        },
    }
}

/// Run the configured solver. `fixed_dt` replaces the CFL step of the
/// finite-volume solvers and is ignored by the Lagrangian one.
pub fn solve(config: &ScenarioConfig, fixed_dt: Option<f64>) -> Result<Solution> {
    config.validate()?;
    let inner = || -> Result<Solution> {
        let model = config.model()?;
        let initial = config.initial_field()?;
        match config.solver {
            SolverKind::FvNonlocal | SolverKind::FvLocalLwr => {
                let mut cfg = config.fv_config();
                cfg.fixed_dt = fixed_dt;
                let run = FvSolver::new(&model, cfg.mode, cfg.engine)?.run(&cfg, &initial)?;
                Ok(Solution {
                    solver: config.solver,
                    trajectory: run.trajectory,
                    velocities: run.velocities,
                    steps: run.steps,
                    fixed_point: None,
                    outflow: run.net_outflow,
                })
            }
            SolverKind::Lagrangian => {
                let run = fixed_point(&model, &initial, &config.lagrangian_config())?;
                Ok(Solution {
                    solver: config.solver,
                    trajectory: run.trajectory,
                    velocities: run.velocities,
                    steps: Vec::new(),
                    fixed_point: Some(run.report),
                    outflow: run.outside_mass,
                })
            }
        }
    };
    inner().map_err(|e| with_context(config, e))
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub solution: Solution,
    pub summary: RunSummary,
}

impl ScenarioRun {
    /// The state at one of the configured snapshot times.
    pub fn snapshot(&self, t: f64) -> Option<&DensityField> {
        self.solution.trajectory.at(t)
    }

    /// `(t, density, velocity)` at the configured snapshot times, skipping
    /// the extra monitoring samples.
    pub fn snapshots(&self) -> impl Iterator<Item = (f64, &DensityField, &DensityField)> {
        let traj = &self.solution.trajectory;
        traj.times()
            .iter()
            .zip(traj.fields())
            .zip(&self.solution.velocities)
            .filter(|((t, _), _)| {
                self.config
                    .snapshots
                    .iter()
                    .any(|s| (s - **t).abs() <= 1e-9 * (1.0 + s.abs()))
            })
            .map(|((t, f), v)| (*t, f, v))
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    let solution = solve(config, None)?;
    let summary = summarize(&solution.trajectory, &config.summary);
    Ok(ScenarioRun {
        config: config.clone(),
        solution,
        summary,
    })
}
