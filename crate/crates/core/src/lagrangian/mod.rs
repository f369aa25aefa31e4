//! Lagrangian solver: the solution is the fixed point of `rho -> Sigma(Pi(rho))`,
//! where `Pi` turns a density history into velocity fields and `Sigma` solves
//! the resulting linear continuity equations along characteristics.
//!
//! The time axis is split into subintervals that are solved one after the
//! other; on each the iteration starts from the constant-in-time extension of
//! the subinterval's initial state. A subinterval on which the residuals stop
//! decreasing is halved.

pub mod characteristics;
pub mod field;
pub mod sigma;

use serde::{Deserialize, Serialize};

pub use characteristics::{characteristics_backward, trace_back, Foot};
pub use field::{
    constant_field, pi_map, AnalyticField, NodeData, PiOperator, SampledField, VelocityField,
};
pub use sigma::{sigma_solve, CumulativeMass, Reconstruction, Representation, SigmaSolution};

use crate::error::{Error, Result};
use crate::kernels::convolution::ConvolutionEngine;
use crate::mesh::{l1_distance_total, DensityField, DensityTrajectory};
use crate::model::Model;
use sigma::solve_level;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianConfig {
    pub t_start: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    /// Time grid spacing as a multiple of `dx / max speed`.
    pub courant: f64,
    /// Explicit time grid spacing; overrides `courant`.
    pub time_step: Option<f64>,
    /// RK4 steps per time grid interval.
    pub substeps: usize,
    /// Stop when the sup-in-time L1 change of an iteration is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial (and maximal) subinterval length.
    pub subinterval: f64,
    pub reconstruction: Reconstruction,
    pub representation: Representation,
    pub engine: ConvolutionEngine,
}

impl LagrangianConfig {
    pub fn new(t_final: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            t_start: 0.0,
            t_final,
            snapshot_times,
            courant: 4.0,
            time_step: None,
            substeps: 1,
            tol: 1e-8,
            max_iter: 100,
            subinterval: 0.25,
            reconstruction: Reconstruction::LimitedLinear,
            representation: Representation::CellAverage,
            engine: ConvolutionEngine::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_final.is_finite() && self.t_final > self.t_start) {
            return Err(Error::InvalidConfig(format!(
                "need t_final > t_start, got [{}, {}]",
                self.t_start, self.t_final
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.substeps == 0 {
            return Err(Error::InvalidConfig(
                "max_iter and substeps must be at least 1".into(),
            ));
        }
        if !(self.courant > 0.0 && self.subinterval > 0.0) {
            return Err(Error::InvalidConfig(
                "courant and subinterval must be positive".into(),
            ));
        }
        if let Some(dt) = self.time_step {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "time_step must be positive, got {dt}"
                )));
            }
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("snapshot times must be sorted".into()));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|&&t| t < self.t_start || t > self.t_final)
        {
            return Err(Error::InvalidConfig(format!(
                "snapshot time {t} outside [{}, {}]",
                self.t_start, self.t_final
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubintervalReport {
    pub t_start: f64,
    pub t_end: f64,
    pub iterations: usize,
    /// `sup_t ||rho^{k+1}(t) - rho^k(t)||_1` for each iteration.
    pub residuals: Vec<f64>,
    /// How often the subinterval was halved before it converged.
    pub halvings: usize,
}

impl SubintervalReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub subintervals: Vec<SubintervalReport>,
    pub feet_outside: usize,
}

#[derive(Clone, Debug)]
pub struct LagrangianRun {
    pub trajectory: DensityTrajectory,
    /// `w` at the cell centers for each snapshot.
    pub velocities: Vec<DensityField>,
    /// Per snapshot and class: mass transported out of the domain.
    pub outside_mass: Vec<Vec<f64>>,
    pub report: FixedPointReport,
}

impl LagrangianRun {
    /// Mass in the domain plus mass carried out of it, per snapshot and class.
    pub fn balanced_mass(&self) -> Vec<Vec<f64>> {
        let dx = self.trajectory.grid().dx();
        self.trajectory
            .fields()
            .iter()
            .zip(&self.outside_mass)
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

/// Time nodes from `t_start` to `t_final` passing through every mark, with
/// gaps split evenly into steps no longer than `dt`.
pub fn time_grid(t_start: f64, t_final: f64, marks: &[f64], dt: f64) -> Vec<f64> {
    let mut stops: Vec<f64> = marks
        .iter()
        .copied()
        .filter(|&t| t > t_start && t < t_final)
        .collect();
    stops.push(t_final);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut nodes = vec![t_start];
    let mut a = t_start;
    for b in stops {
        let n = ((b - a) / dt - 1e-9).ceil().max(1.0) as usize;
        for s in 1..n {
            nodes.push(a + (b - a) * s as f64 / n as f64);
        }
        nodes.push(b);
        a = b;
    }
    nodes
}

struct ChunkOutcome {
    states: Vec<DensityField>,
    outside: Vec<Vec<f64>>,
    feet_outside: usize,
    residuals: Vec<f64>,
}

enum ChunkResult {
    Converged(ChunkOutcome),
    NotContracting,
}

/// Iterate `Sigma(Pi(.))` on one subinterval.
fn solve_chunk(
    pi: &PiOperator<'_>,
    initial: &DensityField,
    times: &[f64],
    config: &LagrangianConfig,
) -> Result<ChunkResult> {
    let grid = pi.model().grid;
    let data: Vec<CumulativeMass> = initial
        .classes()
        .iter()
        .map(|c| CumulativeMass::new(&grid, c, config.reconstruction))
        .collect();
    let n = initial.n_classes();
    let mut states = vec![initial.clone(); times.len()];
    let mut residuals = Vec::new();
    let mut rising = 0;
    for _ in 0..config.max_iter {
        let field = pi.field(times, &states)?;
        let mut next = Vec::with_capacity(times.len());
        let mut outside = vec![vec![0.0; n]];
        let mut feet_outside = 0;
        next.push(initial.clone());
        let mut nodes: Vec<f64> = vec![times[0]];
        for &t in &times[1..] {
            nodes.insert(0, t);
            let (classes, out, feet) = solve_level(
                &field,
                &grid,
                &data,
                &nodes,
                config.substeps,
                config.representation,
            )?;
            next.push(DensityField::from_classes(classes)?);
            outside.push(out);
            feet_outside += feet;
        }
        let mut residual: f64 = 0.0;
        for (a, b) in next.iter().zip(&states) {
            residual = residual.max(l1_distance_total(a, b, &grid)?);
        }
        states = next;
        if !residual.is_finite() {
            return Ok(ChunkResult::NotContracting);
        }
        if let Some(&prev) = residuals.last() {
            rising = if residual >= prev { rising + 1 } else { 0 };
        }
        residuals.push(residual);
        if residual <= config.tol {
            return Ok(ChunkResult::Converged(ChunkOutcome {
                states,
                outside,
                feet_outside,
                residuals,
            }));
        }
        if rising >= 3 {
            return Ok(ChunkResult::NotContracting);
        }
    }
    Err(Error::MaxIterations {
        t_start: times[0],
        t_end: *times.last().unwrap(),
        iterations: config.max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Solve the nonlocal system from `initial` by fixed-point iteration.
pub fn fixed_point(
    model: &Model,
    initial: &DensityField,
    config: &LagrangianConfig,
) -> Result<LagrangianRun> {
    config.validate()?;
    let grid = model.grid;
    initial.check_grid(&grid)?;
    let n = model.n_classes();
    if initial.n_classes() != n {
        return Err(Error::Shape(format!(
            "initial datum has {} classes, model has {n}",
            initial.n_classes()
        )));
    }
    let dt = match config.time_step {
        Some(dt) => dt,
        None => {
            let vmax = model.max_speed();
            if vmax > 0.0 {
                config.courant * grid.dx() / vmax
            } else {
                config.t_final - config.t_start
            }
        }
    };
    let nodes = time_grid(config.t_start, config.t_final, &config.snapshot_times, dt);
    let is_snapshot = |t: f64| config.snapshot_times.contains(&t);
    let pi = PiOperator::new(model, config.engine);

    let mut traj = DensityTrajectory::new(grid);
    let mut velocities = Vec::new();
    let mut outside_mass = Vec::new();
    let mut report = FixedPointReport::default();

    let mut record = |t: f64, state: &DensityField, outside: Vec<f64>| -> Result<()> {
        let node = pi.node(t, state)?;
        velocities.push(DensityField::from_classes(
            node.iter()
                .map(|c| c.iter().map(|p| p[0]).collect())
                .collect(),
        )?);
        traj.push(t, state.clone())?;
        outside_mass.push(outside);
        Ok(())
    };

    let mut state = initial.clone();
    let mut exited = vec![0.0; n];
    if is_snapshot(nodes[0]) {
        record(nodes[0], &state, exited.clone())?;
    }
    let mut m0 = 0;
    let mut span = config.subinterval;
    let last = nodes.len() - 1;
    while m0 < last {
        let mut halvings = 0;
        let (m1, outcome) = loop {
            let limit = nodes[m0] + span * (1.0 + 1e-12);
            let m1 = (m0 + 1..=last)
                .take_while(|&m| nodes[m] <= limit)
                .last()
                .unwrap_or(m0 + 1);
            match solve_chunk(&pi, &state, &nodes[m0..=m1], config)? {
                ChunkResult::Converged(out) => break (m1, out),
                ChunkResult::NotContracting => {
                    if m1 == m0 + 1 {
                        return Err(Error::NoContraction {
                            t_start: nodes[m0],
                            min_length: nodes[m1] - nodes[m0],
                        });
                    }
                    span = 0.5 * (nodes[m1] - nodes[m0]);
                    halvings += 1;
                }
            }
        };
        let chunk = &nodes[m0..=m1];
        for (j, &t) in chunk.iter().enumerate().skip(1) {
            if is_snapshot(t) {
                let out = exited
                    .iter()
                    .zip(&outcome.outside[j])
                    .map(|(a, b)| a + b)
                    .collect();
                record(t, &outcome.states[j], out)?;
            }
        }
        for (e, o) in exited.iter_mut().zip(&outcome.outside[chunk.len() - 1]) {
            *e += o;
        }
        report.feet_outside += outcome.feet_outside;
        report.subintervals.push(SubintervalReport {
            t_start: nodes[m0],
            t_end: nodes[m1],
            iterations: outcome.residuals.len(),
            residuals: outcome.residuals,
            halvings,
        });
        state = outcome.states.into_iter().last().unwrap();
        m0 = m1;
        if halvings == 0 {
            span = (2.0 * span).min(config.subinterval);
        }
    }
    Ok(LagrangianRun {
        trajectory: traj,
        velocities,
        outside_mass,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, KernelMatrix};
    use crate::mesh::{block_averages, Grid1D};
    use crate::speed_laws::SpeedLawSpec;

    #[test]
    fn time_grid_hits_marks() {
        let g = time_grid(0.0, 1.0, &[0.25, 0.3, 1.0], 0.1);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.contains(&0.25) && g.contains(&0.3));
        assert!(g
            .windows(2)
            .all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-12));
    }

    #[test]
    fn constant_law_converges_at_once() {
        let grid = Grid1D::new(0.0, 10.0, 500).unwrap();
        let model = Model::from_specs(
            grid,
            &[SpeedLawSpec::constant(1.0)],
            KernelMatrix::uniform(1, Kernel::bump(1.0, 0.01).unwrap()).unwrap(),
        )
        .unwrap();
        let rho = DensityField::from_classes(vec![block_averages(&grid, 1.0, 3.0, 0.8)]).unwrap();
        let run = fixed_point(&model, &rho, &LagrangianConfig::new(2.0, vec![0.0, 2.0])).unwrap();
        for sub in &run.report.subintervals {
            assert_eq!(sub.iterations, 2);
            assert_eq!(sub.final_residual(), 0.0);
        }
        let shifted = block_averages(&grid, 3.0, 5.0, 0.8);
        let (_, last) = run.trajectory.last().unwrap();
        for (a, b) in last.class(0).iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
