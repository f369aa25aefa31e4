//! Lax-Friedrichs finite-volume solver with nonlocal fluxes, plus a local
//! LWR mode in which the convolution is replaced by the point value.
//!
//! Boundaries are free flow: the LF update reads ghost cells equal to the
//! adjacent boundary cell (density and velocity), while convolutions extend
//! the density by zero outside the domain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::convolution::{ConvolutionEngine, Convolver};
use crate::mesh::{cfl_timestep, DensityField, DensityTrajectory, Grid1D, DEFAULT_CFL_SAFETY};
use crate::model::{CouplingPairs, Model};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FvMode {
    #[default]
    Nonlocal,
    LocalLwr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FvConfig {
    pub cfl_safety: f64,
    pub mode: FvMode,
    pub t_start: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub engine: ConvolutionEngine,
    /// Step size used instead of the CFL step (still clamped to land on
    /// snapshot times, and still checked against the CFL bound).
    pub fixed_dt: Option<f64>,
}

impl FvConfig {
    pub fn new(t_final: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            cfl_safety: DEFAULT_CFL_SAFETY,
            mode: FvMode::Nonlocal,
            t_start: 0.0,
            t_final,
            snapshot_times,
            engine: ConvolutionEngine::Auto,
            fixed_dt: None,
        }
    }

    pub fn with_mode(mut self, mode: FvMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.t_start.is_finite() && self.t_final.is_finite() && self.t_final > self.t_start) {
            return Err(Error::InvalidConfig(format!(
                "need t_final > t_start, got [{}, {}]",
                self.t_start, self.t_final
            )));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "fixed_dt must be positive, got {dt}"
                )));
            }
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("snapshot times must be sorted".into()));
        }
        if let Some(&t) = self
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
pub struct StepRecord {
    pub m: usize,
    pub t: f64,
    pub dt: f64,
    pub vmax: f64,
    pub class_vmax: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FvRun {
    pub trajectory: DensityTrajectory,
    /// Velocities of the recorded states, one field per snapshot.
    pub velocities: Vec<DensityField>,
    pub steps: Vec<StepRecord>,
    /// Per snapshot and class: mass that left minus mass that entered
    /// through the domain ends since `t_start`.
    pub net_outflow: Vec<Vec<f64>>,
}

impl FvRun {
    /// `mass(t) + net_outflow(t)` per snapshot and class, which a
    /// conservative scheme keeps equal to the initial mass.
    pub fn balanced_mass(&self) -> Vec<Vec<f64>> {
        let dx = self.trajectory.grid().dx();
        self.trajectory
            .fields()
            .iter()
            .zip(&self.net_outflow)
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

/// Prepared convolutions for one model: each distinct kernel is applied once
/// to each class that some row pairs it with.
pub struct FvSolver<'a> {
    model: &'a Model,
    mode: FvMode,
    convolvers: Vec<Convolver>,
    /// `(distinct kernel, class)` pairs to convolve.
    pairs: Vec<(usize, usize)>,
    /// `slot[i][j]` indexes `pairs` for entry `(i, j)`.
    slot: Vec<Vec<usize>>,
}

impl<'a> FvSolver<'a> {
    pub fn new(model: &'a Model, mode: FvMode, engine: ConvolutionEngine) -> Result<Self> {
        let grid = &model.grid;
        let coupling = CouplingPairs::new(&model.kernels);
        let mut convolvers = Vec::new();
        if mode == FvMode::Nonlocal {
            for k in &coupling.kernels {
                let dk = k.discretize(grid)?;
                convolvers.push(Convolver::new(dk.stencil(), grid.n_cells(), engine));
            }
        }
        Ok(Self {
            model,
            mode,
            convolvers,
            pairs: coupling.pairs,
            slot: coupling.slot,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// `(v_i)_k = v_i(t, x_k, q_i1, ..., q_in)` with `q_ij` the discrete
    /// convolution of class `j` with `eta_ij` (or `rho_j` itself in LWR mode).
    pub fn compute_velocities(&self, state: &DensityField, t: f64) -> Result<DensityField> {
        self.velocities_at(state, t, 0)
    }

    fn velocities_at(&self, state: &DensityField, t: f64, step: usize) -> Result<DensityField> {
        let grid = &self.model.grid;
        state.check_grid(grid)?;
        let n = self.model.n_classes();
        if state.n_classes() != n {
            return Err(Error::Shape(format!(
                "state has {} classes, model has {n}",
                state.n_classes()
            )));
        }
        let conv: Vec<std::borrow::Cow<'_, [f64]>> = match self.mode {
            FvMode::LocalLwr => self
                .pairs
                .iter()
                .map(|&(_, j)| std::borrow::Cow::Borrowed(state.class(j)))
                .collect(),
            FvMode::Nonlocal => self
                .pairs
                .par_iter()
                .map(|&(u, j)| self.convolvers[u].apply(state.class(j)).into())
                .collect(),
        };
        for c in &conv {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step,
                    t,
                    last_good_time: t,
                });
            }
        }
        let classes: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let law = &self.model.laws[i];
                let mut q = vec![0.0; n];
                (0..grid.n_cells())
                    .map(|k| {
                        for (j, qj) in q.iter_mut().enumerate() {
                            *qj = conv[self.slot[i][j]][k];
                        }
                        law.speed(t, grid.center(k), &q)
                    })
                    .collect()
            })
            .collect();
        DensityField::from_classes(classes)
    }

    pub fn run(&self, config: &FvConfig, initial: &DensityField) -> Result<FvRun> {
        config.validate()?;
        let grid = self.model.grid;
        initial.check_grid(&grid)?;
        let n = self.model.n_classes();
        if initial.n_classes() != n {
            return Err(Error::Shape(format!(
                "initial datum has {} classes, model has {n}",
                initial.n_classes()
            )));
        }
        let dx = grid.dx();
        let eps = |t: f64| 1e-12 * t.abs().max(1.0);

        let mut snaps = config.snapshot_times.clone();
        snaps.dedup_by(|a, b| (*a - *b).abs() <= eps(*b));
        let mut next_snap = 0;

        let mut traj = DensityTrajectory::new(grid);
        let mut velocities_out = Vec::new();
        let mut net_outflow = Vec::new();
        let mut steps = Vec::new();
        let mut outflow = vec![0.0; n];

        let mut t = config.t_start;
        let mut state = initial.clone();
        let mut m = 0usize;
        let mut v = self.velocities_at(&state, t, m)?;
        let mut last_good = t;
        loop {
            while next_snap < snaps.len() && snaps[next_snap] <= t + eps(t) {
                traj.push(snaps[next_snap], state.clone())?;
                velocities_out.push(v.clone());
                net_outflow.push(outflow.clone());
                last_good = snaps[next_snap];
                next_snap += 1;
            }
            if t >= config.t_final - eps(config.t_final) {
                break;
            }
            let target = snaps
                .get(next_snap)
                .copied()
                .unwrap_or(config.t_final)
                .min(config.t_final);
            let class_vmax: Vec<f64> = v
                .classes()
                .iter()
                .map(|c| c.iter().copied().fold(0.0, f64::max))
                .collect();
            let vmax = class_vmax.iter().copied().fold(0.0, f64::max);
            let dt_max = match config.fixed_dt {
                Some(dt) => dt,
                None => {
                    if vmax <= 0.0 {
                        return Err(Error::Frozen { t });
                    }
                    cfl_timestep(vmax, dx, config.cfl_safety)?
                }
            };
            let remaining = target - t;
            let n_sub = (remaining / dt_max - 1e-9).ceil().max(1.0);
            let dt = remaining / n_sub;
            for (i, o) in outflow.iter_mut().enumerate() {
                let (c, w) = (state.class(i), v.class(i));
                *o += dt * (c[grid.n_cells() - 1] * w[grid.n_cells() - 1] - c[0] * w[0]);
            }
            state = step_lf_at(&state, &v, dt, dx, m).map_err(|e| match e {
                Error::Numeric(_) => Error::Divergence {
                    step: m,
                    t,
                    last_good_time: last_good,
                },
                other => other,
            })?;
            steps.push(StepRecord {
                m,
                t,
                dt,
                vmax,
                class_vmax,
            });
            m += 1;
            t = if n_sub == 1.0 { target } else { t + dt };
            v = self.velocities_at(&state, t, m).map_err(|e| match e {
                Error::Divergence { step, t, .. } => Error::Divergence {
                    step,
                    t,
                    last_good_time: last_good,
                },
                other => other,
            })?;
        }
        Ok(FvRun {
            trajectory: traj,
            velocities: velocities_out,
            steps,
            net_outflow,
        })
    }
}

/// Velocities for one state without keeping a solver around.
pub fn compute_velocities(
    model: &Model,
    mode: FvMode,
    state: &DensityField,
    t: f64,
) -> Result<DensityField> {
    FvSolver::new(model, mode, ConvolutionEngine::Auto)?.compute_velocities(state, t)
}

/// One Lax-Friedrichs step for every class, written in the convex form
/// `rho'_k = (rho_{k-1} (1 + l v_{k-1}) + rho_{k+1} (1 - l v_{k+1})) / 2`
/// with `l = dt / dx`.
pub fn step_lf(
    state: &DensityField,
    velocities: &DensityField,
    dt: f64,
    dx: f64,
) -> Result<DensityField> {
    step_lf_at(state, velocities, dt, dx, 0)
}

fn step_lf_at(
    state: &DensityField,
    velocities: &DensityField,
    dt: f64,
    dx: f64,
    step: usize,
) -> Result<DensityField> {
    if state.n_classes() != velocities.n_classes() || state.n_cells() != velocities.n_cells() {
        return Err(Error::Shape("state and velocities differ in shape".into()));
    }
    if !(dt > 0.0 && dx > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need dt > 0 and dx > 0, got {dt}, {dx}"
        )));
    }
    let lambda = dt / dx;
    let mut courant: f64 = 0.0;
    for c in velocities.classes() {
        for &w in c {
            if w < 0.0 {
                return Err(Error::InvalidConfig(format!("negative velocity {w}")));
            }
            courant = courant.max(lambda * w);
        }
    }
    if courant > 1.0 + 1e-12 {
        return Err(Error::CflViolation { step, courant });
    }
    let classes: Vec<Vec<f64>> = state
        .classes()
        .par_iter()
        .zip(velocities.classes().par_iter())
        .map(|(rho, v)| {
            let n = rho.len();
            let at = |k: isize| -> (f64, f64) {
                let k = k.clamp(0, n as isize - 1) as usize;
                (rho[k], v[k])
            };
            (0..n as isize)
                .map(|k| {
                    let (rl, vl) = at(k - 1);
                    let (rr, vr) = at(k + 1);
                    0.5 * (rl * (1.0 + lambda * vl) + rr * (1.0 - lambda * vr))
                })
                .collect()
        })
        .collect();
    let out = DensityField::from_classes(classes)
        .map_err(|_| Error::Numeric(format!("non-finite state after step {step}")))?;
    Ok(out)
}

/// Grid helper for tests and scenarios: evaluate `f` at the cell centers.
pub fn sample_centers(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.centers().map(f).collect()
}
