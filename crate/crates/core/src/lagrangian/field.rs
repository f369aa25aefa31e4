//! Velocity fields `w_i(t, x)` driving the linear continuity equations, and
//! the map from a density history to such a field.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::convolution::{ConvolutionEngine, Convolver};
use crate::mesh::{DensityField, DensityTrajectory, Grid1D};
use crate::model::{CouplingPairs, Model};

/// A per-class velocity field together with its space derivative.
pub trait VelocityField: Sync {
    fn n_classes(&self) -> usize;

    /// Interval of times on which the field is defined.
    fn time_range(&self) -> (f64, f64);

    /// `(w_i(t, x), ∂_x w_i(t, x))`. Times slightly outside
    /// [`time_range`](Self::time_range) are clamped.
    fn eval(&self, class: usize, t: f64, x: f64) -> (f64, f64);

    fn try_eval(&self, class: usize, t: f64, x: f64) -> Result<(f64, f64)> {
        check_time(self.time_range(), t)?;
        Ok(self.eval(class, t, x))
    }
}

pub(crate) fn check_time((lo, hi): (f64, f64), t: f64) -> Result<()> {
    let tol = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
    if t.is_nan() || t < lo - tol || t > hi + tol {
        return Err(Error::TimeDomain { t, lo, hi });
    }
    Ok(())
}

/// A field given in closed form, mostly for tests and manufactured cases.
pub struct AnalyticField<F> {
    n_classes: usize,
    range: (f64, f64),
    f: F,
}

impl<F> AnalyticField<F>
where
    F: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    pub fn new(n_classes: usize, range: (f64, f64), f: F) -> Self {
        Self {
            n_classes,
            range,
            f,
        }
    }
}

impl<F> VelocityField for AnalyticField<F>
where
    F: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn time_range(&self) -> (f64, f64) {
        self.range
    }

    fn eval(&self, class: usize, t: f64, x: f64) -> (f64, f64) {
        (self.f)(class, t, x)
    }
}

/// `w ≡ c` for every class.
pub fn constant_field(n_classes: usize, range: (f64, f64), c: f64) -> impl VelocityField {
    AnalyticField::new(n_classes, range, move |_, _, _| (c, 0.0))
}

/// Values and slopes of `w` at the cell centers of one time level.
pub type NodeData = Vec<Vec<[f64; 2]>>;

/// `w` sampled at cell centers on a time grid. In space it is the cubic
/// Hermite interpolant of the values and slopes, extended by constants past
/// the outermost centers; in time it is linear. The derivative returned by
/// [`eval`](VelocityField::eval) is the exact derivative of that interpolant.
#[derive(Clone, Debug)]
pub struct SampledField {
    grid: Grid1D,
    times: Vec<f64>,
    /// `data[m][i][k] = [w, ∂_x w]`.
    data: Vec<NodeData>,
}

impl SampledField {
    pub fn new(grid: Grid1D, times: Vec<f64>, data: Vec<NodeData>) -> Result<Self> {
        if times.is_empty() || times.len() != data.len() {
            return Err(Error::Shape(format!(
                "{} time levels but {} data levels",
                times.len(),
                data.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("field times must increase strictly".into()));
        }
        let n_classes = data[0].len();
        for level in &data {
            if level.len() != n_classes || level.iter().any(|c| c.len() != grid.n_cells()) {
                return Err(Error::Shape("field data does not match the grid".into()));
            }
        }
        Ok(Self { grid, times, data })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Values of `w` at the cell centers of time level `m`.
    pub fn node_values(&self, m: usize) -> DensityField {
        DensityField::from_classes(
            self.data[m]
                .iter()
                .map(|c| c.iter().map(|p| p[0]).collect())
                .collect(),
        )
        .expect("finite field data")
    }

    fn hermite(&self, level: &[[f64; 2]], x: f64) -> (f64, f64) {
        let n = level.len();
        let dx = self.grid.dx();
        let s = (x - self.grid.center(0)) / dx;
        if s <= 0.0 {
            return (level[0][0], 0.0);
        }
        if s >= (n - 1) as f64 {
            return (level[n - 1][0], 0.0);
        }
        let k = (s as usize).min(n - 2);
        let u = s - k as f64;
        let [w0, m0] = level[k];
        let [w1, m1] = level[k + 1];
        let (u2, u3) = (u * u, u * u * u);
        let value = (2.0 * u3 - 3.0 * u2 + 1.0) * w0
            + (u3 - 2.0 * u2 + u) * dx * m0
            + (3.0 * u2 - 2.0 * u3) * w1
            + (u3 - u2) * dx * m1;
        let slope = (6.0 * (u2 - u) * (w0 - w1)) / dx
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (3.0 * u2 - 2.0 * u) * m1;
        (value, slope)
    }
}

impl VelocityField for SampledField {
    fn n_classes(&self) -> usize {
        self.data[0].len()
    }

    fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn eval(&self, class: usize, t: f64, x: f64) -> (f64, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.hermite(&self.data[0][class], x);
        }
        if t >= self.times[n - 1] {
            return self.hermite(&self.data[n - 1][class], x);
        }
        let j = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let theta = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        let (a, da) = self.hermite(&self.data[j][class], x);
        if theta == 0.0 {
            return (a, da);
        }
        let (b, db) = self.hermite(&self.data[j + 1][class], x);
        (a + theta * (b - a), da + theta * (db - da))
    }
}

/// Evaluates `w_i = v_i(t, x, eta_i1 * rho_1, ...)` and its space derivative
/// at cell centers. Convolutions treat `rho` as piecewise constant and use
/// exact cell integrals of the kernels and of their derivatives.
pub struct PiOperator<'a> {
    model: &'a Model,
    values: Vec<Convolver>,
    slopes: Vec<Convolver>,
    coupling: CouplingPairs,
}

impl<'a> PiOperator<'a> {
    pub fn new(model: &'a Model, engine: ConvolutionEngine) -> Self {
        let grid = &model.grid;
        let coupling = CouplingPairs::new(&model.kernels);
        let n = grid.n_cells();
        let values = coupling
            .kernels
            .iter()
            .map(|k| Convolver::new(k.cell_integrated(grid), n, engine))
            .collect();
        let slopes = coupling
            .kernels
            .iter()
            .map(|k| Convolver::new(k.cell_derivative(grid), n, engine))
            .collect();
        Self {
            model,
            values,
            slopes,
            coupling,
        }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// `[w, ∂_x w]` at every cell center for one density state.
    pub fn node(&self, t: f64, rho: &DensityField) -> Result<NodeData> {
        let grid = &self.model.grid;
        rho.check_grid(grid)?;
        let n = self.model.n_classes();
        if rho.n_classes() != n {
            return Err(Error::Shape(format!(
                "density has {} classes, model has {n}",
                rho.n_classes()
            )));
        }
        let conv: Vec<(Vec<f64>, Vec<f64>)> = self
            .coupling
            .pairs
            .par_iter()
            .map(|&(u, j)| {
                (
                    self.values[u].apply(rho.class(j)),
                    self.slopes[u].apply(rho.class(j)),
                )
            })
            .collect();
        let slot = &self.coupling.slot;
        let out: Vec<Vec<[f64; 2]>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let law = &self.model.laws[i];
                let mut q = vec![0.0; n];
                let mut grad = vec![0.0; n];
                (0..grid.n_cells())
                    .map(|k| {
                        let x = grid.center(k);
                        for (j, qj) in q.iter_mut().enumerate() {
                            *qj = conv[slot[i][j]].0[k];
                        }
                        let w = law.speed(t, x, &q);
                        law.speed_dq(t, x, &q, &mut grad);
                        let wx = law.speed_dx(t, x, &q)
                            + (0..n).map(|j| grad[j] * conv[slot[i][j]].1[k]).sum::<f64>();
                        [w, wx]
                    })
                    .collect()
            })
            .collect();
        if let Some((i, k)) = out.iter().enumerate().find_map(|(i, c)| {
            c.iter()
                .position(|p| !(p[0].is_finite() && p[1].is_finite()))
                .map(|k| (i, k))
        }) {
            return Err(Error::Numeric(format!(
                "velocity of class {i} is not finite at x = {}, t = {t}",
                grid.center(k)
            )));
        }
        Ok(out)
    }

    /// The field for a density history given on `times`.
    pub fn field(&self, times: &[f64], states: &[DensityField]) -> Result<SampledField> {
        if times.len() != states.len() {
            return Err(Error::Shape(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        let data = times
            .iter()
            .zip(states)
            .map(|(&t, s)| self.node(t, s))
            .collect::<Result<Vec<_>>>()?;
        SampledField::new(self.model.grid, times.to_vec(), data)
    }
}

/// The velocity field generated by a density trajectory.
pub fn pi_map(model: &Model, traj: &DensityTrajectory) -> Result<SampledField> {
    if traj.is_empty() {
        return Err(Error::Shape("empty trajectory".into()));
    }
    if traj.grid() != &model.grid {
        return Err(Error::Shape("trajectory and model grids differ".into()));
    }
    PiOperator::new(model, ConvolutionEngine::Auto).field(traj.times(), traj.fields())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, KernelMatrix};
    use crate::mesh::block_averages;
    use crate::speed_laws::{BottleneckProfile, SpeedLawSpec};

    fn model(grid: Grid1D, law: SpeedLawSpec, f: f64, b: f64) -> Model {
        Model::from_specs(
            grid,
            &[law],
            KernelMatrix::uniform(1, Kernel::bump(f, b).unwrap()).unwrap(),
        )
        .unwrap()
    }

    fn traj(grid: Grid1D, fields: Vec<(f64, Vec<f64>)>) -> DensityTrajectory {
        let mut t = DensityTrajectory::new(grid);
        for (s, f) in fields {
            t.push(s, DensityField::from_classes(vec![f]).unwrap())
                .unwrap();
        }
        t
    }

    #[test]
    fn empty_road_gives_free_speed() {
        let grid = Grid1D::new(0.0, 20.0, 400).unwrap();
        let m = model(grid, SpeedLawSpec::bottleneck(), 1.0, 0.01);
        let w = pi_map(
            &m,
            &traj(grid, vec![(0.0, vec![0.0; 400]), (1.0, vec![0.0; 400])]),
        )
        .unwrap();
        let p = BottleneckProfile::default();
        for k in 0..400 {
            let x = grid.center(k);
            let (v, d) = w.eval(0, 0.5, x);
            assert!((v - p.value(x)).abs() < 1e-15);
            assert!((d - p.derivative(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_law_ignores_density() {
        let grid = Grid1D::new(0.0, 10.0, 200).unwrap();
        let m = model(grid, SpeedLawSpec::constant(0.6), 1.0, 0.3);
        let rho = block_averages(&grid, 2.0, 4.0, 0.9);
        let w = pi_map(&m, &traj(grid, vec![(0.0, rho)])).unwrap();
        for x in [0.0, 1.3, 3.0, 7.7, 12.0] {
            assert_eq!(w.eval(0, 0.0, x), (0.6, 0.0));
        }
    }

    #[test]
    fn saturated_region_is_at_rest() {
        let grid = Grid1D::new(0.0, 10.0, 1000).unwrap();
        let m = model(grid, SpeedLawSpec::cubic(1.0), 1.0, 0.2);
        let w = pi_map(
            &m,
            &traj(grid, vec![(0.0, block_averages(&grid, 2.0, 8.0, 1.0))]),
        )
        .unwrap();
        for i in 0..100 {
            let x = 3.0 + 0.03 * i as f64;
            let (v, d) = w.eval(0, 0.0, x);
            assert!(v.abs() < 1e-12 && d.abs() < 1e-9, "x = {x}: {v} {d}");
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        let grid = Grid1D::new(0.0, 10.0, 2000).unwrap();
        let m = model(grid, SpeedLawSpec::cubic(1.0), 1.0, 0.5);
        let rho: Vec<f64> = grid
            .centers()
            .map(|x| 0.6 * (-((x - 5.0) / 1.2).powi(2)).exp())
            .collect();
        let w = pi_map(&m, &traj(grid, vec![(0.0, rho)])).unwrap();
        let h = 1e-5;
        for i in 0..50 {
            let x = 2.0 + 0.123 * i as f64;
            let fd = (w.eval(0, 0.0, x + h).0 - w.eval(0, 0.0, x - h).0) / (2.0 * h);
            assert!((fd - w.eval(0, 0.0, x).1).abs() < 1e-6);
        }
        // the sampled slopes agree with differences of neighbouring values
        let dx = grid.dx();
        for k in (100..1900).step_by(37) {
            let fd = (w.eval(0, 0.0, grid.center(k + 1)).0 - w.eval(0, 0.0, grid.center(k - 1)).0)
                / (2.0 * dx);
            assert!((fd - w.eval(0, 0.0, grid.center(k)).1).abs() < 1e-4);
        }
    }

    #[test]
    fn linear_in_time() {
        let grid = Grid1D::new(0.0, 10.0, 100).unwrap();
        let m = model(grid, SpeedLawSpec::cubic(1.0), 1.0, 0.5);
        let w = pi_map(
            &m,
            &traj(grid, vec![(0.0, vec![0.0; 100]), (2.0, vec![0.4; 100])]),
        )
        .unwrap();
        let (a, _) = w.eval(0, 0.0, 5.0);
        let (b, _) = w.eval(0, 2.0, 5.0);
        let (c, _) = w.eval(0, 0.5, 5.0);
        assert!((c - (0.75 * a + 0.25 * b)).abs() < 1e-15);
    }

    #[test]
    fn time_outside_range_is_an_error() {
        let grid = Grid1D::new(0.0, 10.0, 100).unwrap();
        let m = model(grid, SpeedLawSpec::cubic(1.0), 1.0, 0.5);
        let w = pi_map(
            &m,
            &traj(grid, vec![(1.0, vec![0.0; 100]), (2.0, vec![0.0; 100])]),
        )
        .unwrap();
        assert!(matches!(
            w.try_eval(0, 2.5, 1.0),
            Err(Error::TimeDomain { .. })
        ));
        assert!(w.try_eval(0, 1.5, 1.0).is_ok());
    }
}
