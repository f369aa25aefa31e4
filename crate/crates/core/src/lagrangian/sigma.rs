//! Solution of the linear continuity equations `∂_t rho + ∂_x(rho w) = 0`
//! through characteristics.
//!
//! The pointwise solution is `rho_o(X0) exp(-E)`, with `X0` the foot of the
//! characteristic and `E` its accumulated divergence. Two discrete readings
//! are offered:
//!
//! * [`Representation::CellAverage`] integrates it over each cell. The
//!   Jacobian of `x -> X0` is `exp(-E)`, so the cell mass is the datum's mass
//!   between the feet of the two edge characteristics. Cell masses telescope,
//!   so mass is conserved up to what crosses the domain ends.
//! * [`Representation::Pointwise`] evaluates at the cell center:
//!   `exp(-E)` times the average of the datum over `[X0 - h, X0 + h]`, where
//!   `2h = dx exp(-E)` is the length of the cell's preimage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::characteristics::{trace_back, Foot};
use super::field::{check_time, VelocityField};
use crate::error::{Error, Result};
use crate::mesh::{DensityField, DensityTrajectory, Grid1D};

/// How the cell averages of the datum are reconstructed inside each cell
/// before preimages are measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    /// Constant in each cell.
    PiecewiseConstant,
    /// Linear with monotonized-central limited slopes; non-negative where
    /// the averages are.
    #[default]
    LimitedLinear,
}

/// How a time level is read off the characteristics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Exact cell averages from characteristics through the cell edges.
    #[default]
    CellAverage,
    /// Values at the cell centers from the accumulated divergence.
    Pointwise,
}

/// Cumulative mass `G(x) = ∫_{-∞}^x rho` of a reconstructed cell profile.
/// It matches the cell averages exactly at every cell edge.
#[derive(Clone, Debug)]
pub struct CumulativeMass {
    x_lo: f64,
    dx: f64,
    edges: Vec<f64>,
    cells: Vec<f64>,
    /// Jump of the reconstruction across the cell, times `dx`.
    slopes: Vec<f64>,
}

fn minmod3(a: f64, b: f64, c: f64) -> f64 {
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

impl CumulativeMass {
    pub fn new(grid: &Grid1D, rho: &[f64], reconstruction: Reconstruction) -> Self {
        let dx = grid.dx();
        let cells: Vec<f64> = rho.iter().map(|r| r * dx).collect();
        let mut edges = Vec::with_capacity(cells.len() + 1);
        let mut acc = 0.0;
        edges.push(acc);
        for m in &cells {
            acc += m;
            edges.push(acc);
        }
        let slopes = match reconstruction {
            Reconstruction::PiecewiseConstant => vec![0.0; cells.len()],
            Reconstruction::LimitedLinear => {
                let at = |k: isize| {
                    if k < 0 || k as usize >= cells.len() {
                        0.0
                    } else {
                        cells[k as usize]
                    }
                };
                (0..cells.len() as isize)
                    .map(|k| {
                        let (l, c, r) = (at(k - 1), at(k), at(k + 1));
                        minmod3(2.0 * (c - l), 2.0 * (r - c), 0.5 * (r - l))
                    })
                    .collect()
            }
        };
        Self {
            x_lo: grid.x_lo(),
            dx,
            edges,
            cells,
            slopes,
        }
    }

    pub fn total(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn at(&self, x: f64) -> f64 {
        let s = (x - self.x_lo) / self.dx;
        if s <= 0.0 {
            return 0.0;
        }
        let n = self.cells.len();
        if s >= n as f64 {
            return self.total();
        }
        let k = (s as usize).min(n - 1);
        let u = s - k as f64;
        self.edges[k] + u * (self.cells[k] + 0.5 * (u - 1.0) * self.slopes[k])
    }
}

#[derive(Clone, Debug)]
pub struct SigmaSolution {
    pub trajectory: DensityTrajectory,
    /// Per time and class: mass of the exact transported datum lying outside
    /// the domain, read from the characteristics through the domain ends.
    pub outside_mass: Vec<Vec<f64>>,
    /// Characteristic feet that landed outside the domain.
    pub feet_outside: usize,
}

/// Density of one time level, tracing back along `nodes` (decreasing,
/// ending at the datum's time). Also returns, per class, the datum's mass
/// carried across the domain ends, and how many traced feet left the domain.
pub(crate) fn solve_level<F: VelocityField + ?Sized>(
    field: &F,
    grid: &Grid1D,
    data: &[CumulativeMass],
    nodes: &[f64],
    substeps: usize,
    representation: Representation,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize)> {
    let dx = grid.dx();
    let n = grid.n_cells();
    let (x_lo, x_hi) = (grid.x_lo(), grid.x_hi());
    let outside_domain = |x: f64| x < x_lo || x > x_hi;
    let mut classes = Vec::with_capacity(data.len());
    let mut outside = Vec::with_capacity(data.len());
    let mut feet_outside = 0;
    for (i, g) in data.iter().enumerate() {
        let trace = |x: f64| -> Result<Foot> {
            let foot = trace_back(field, i, x, nodes, substeps);
            if foot.x.is_finite() && foot.exponent.is_finite() {
                Ok(foot)
            } else {
                Err(Error::Numeric(format!(
                    "characteristic of class {i} from (t = {}, x = {x}) gives foot {} and exponent {}",
                    nodes[0], foot.x, foot.exponent
                )))
            }
        };
        let (left, right) = (trace(x_lo)?.x, trace(x_hi)?.x);
        let values: Vec<f64> = match representation {
            Representation::CellAverage => {
                let feet = (0..=n)
                    .into_par_iter()
                    .map(|k| match k {
                        0 => Ok(left),
                        k if k == n => Ok(right),
                        k => trace(grid.edge(k)).map(|f| f.x),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                feet_outside += feet.iter().filter(|x| outside_domain(**x)).count();
                let masses: Vec<f64> = feet.iter().map(|&x| g.at(x)).collect();
                // crossing feet only come from integration error
                masses
                    .windows(2)
                    .map(|m| ((m[1] - m[0]) / dx).max(0.0))
                    .collect()
            }
            Representation::Pointwise => {
                let cells = (0..n)
                    .into_par_iter()
                    .map(|k| {
                        let foot = trace(grid.center(k))?;
                        let h = 0.5 * dx * (-foot.exponent).exp();
                        // rounding in a reconstructed cell can dip below zero by an ulp
                        let rho = ((g.at(foot.x + h) - g.at(foot.x - h)) / dx).max(0.0);
                        Ok((rho, outside_domain(foot.x)))
                    })
                    .collect::<Result<Vec<(f64, bool)>>>()?;
                feet_outside += cells.iter().filter(|c| c.1).count();
                cells.into_iter().map(|c| c.0).collect()
            }
        };
        classes.push(values);
        outside.push(g.at(left) + g.total() - g.at(right));
    }
    Ok((classes, outside, feet_outside))
}

/// Transport `initial` (given at `times[0]`) with `w` and record it at every
/// entry of `times`. Characteristics use `substeps` RK4 steps between
/// consecutive entries.
pub fn sigma_solve<F: VelocityField + ?Sized>(
    field: &F,
    grid: &Grid1D,
    initial: &DensityField,
    times: &[f64],
    substeps: usize,
    reconstruction: Reconstruction,
    representation: Representation,
) -> Result<SigmaSolution> {
    initial.check_grid(grid)?;
    if initial.n_classes() != field.n_classes() {
        return Err(Error::Shape(format!(
            "datum has {} classes, field has {}",
            initial.n_classes(),
            field.n_classes()
        )));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "times must be non-empty and increasing".into(),
        ));
    }
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    for &t in [times[0], *times.last().unwrap()].iter() {
        check_time(field.time_range(), t)?;
    }
    let data: Vec<CumulativeMass> = initial
        .classes()
        .iter()
        .map(|c| CumulativeMass::new(grid, c, reconstruction))
        .collect();
    let mut traj = DensityTrajectory::new(*grid);
    traj.push(times[0], initial.clone())?;
    let mut outside_mass = vec![vec![0.0; initial.n_classes()]];
    let mut feet_outside = 0;
    let mut nodes: Vec<f64> = vec![times[0]];
    for &t in &times[1..] {
        nodes.insert(0, t);
        let (classes, outside, feet) =
            solve_level(field, grid, &data, &nodes, substeps, representation)?;
        traj.push(t, DensityField::from_classes(classes)?)?;
        outside_mass.push(outside);
        feet_outside += feet;
    }
    Ok(SigmaSolution {
        trajectory: traj,
        outside_mass,
        feet_outside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::field::{constant_field, AnalyticField};
    use crate::mesh::{block_averages, l1_norm};

    #[test]
    fn cumulative_mass_is_piecewise_linear() {
        let grid = Grid1D::new(0.0, 1.0, 4).unwrap();
        let g = CumulativeMass::new(
            &grid,
            &[1.0, 2.0, 0.0, 4.0],
            Reconstruction::PiecewiseConstant,
        );
        assert_eq!(g.at(-1.0), 0.0);
        assert_eq!(g.at(0.125), 0.125);
        assert_eq!(g.at(0.375), 0.25 + 0.25);
        assert_eq!(g.at(0.6), 0.75);
        assert_eq!(g.at(2.0), 1.75);
        assert_eq!(g.total(), 1.75);
    }

    #[test]
    fn constant_speed_translates() {
        let grid = Grid1D::new(0.0, 10.0, 1000).unwrap();
        let rho = DensityField::from_classes(vec![block_averages(&grid, 2.0, 4.0, 0.5)]).unwrap();
        let w = constant_field(1, (0.0, 2.0), 1.0);
        for representation in [Representation::CellAverage, Representation::Pointwise] {
            let times = [0.0, 0.5, 1.25, 2.0];
            let sol = sigma_solve(
                &w,
                &grid,
                &rho,
                &times,
                4,
                Reconstruction::PiecewiseConstant,
                representation,
            )
            .unwrap();
            for (t, f) in sol.trajectory.iter() {
                let shifted = block_averages(&grid, 2.0 + t, 4.0 + t, 0.5);
                for (a, b) in f.class(0).iter().zip(&shifted) {
                    assert!((a - b).abs() < 1e-9, "t = {t}");
                }
            }
        }
    }

    /// A non-uniform field `0.3 + 0.2 sin^2(x/3)` on a block: mass and
    /// positivity.
    fn expansion_mass_error(n: usize, representation: Representation) -> f64 {
        let grid = Grid1D::new(0.0, 12.0, n).unwrap();
        let rho0: Vec<f64> = block_averages(&grid, 2.0, 4.0, 0.8);
        let rho = DensityField::from_classes(vec![rho0]).unwrap();
        let w = AnalyticField::new(1, (0.0, 2.0), |_, _, x| {
            let s = (x / 3.0).sin();
            (0.3 + 0.2 * s * s, 0.4 * s * (x / 3.0).cos() / 3.0)
        });
        let sol = sigma_solve(
            &w,
            &grid,
            &rho,
            &[0.0, 1.0, 2.0],
            8,
            Reconstruction::default(),
            representation,
        )
        .unwrap();
        let m0 = l1_norm(&rho, &grid).unwrap()[0];
        let (_, last) = sol.trajectory.last().unwrap();
        assert!(last.class(0).iter().all(|&r| r >= 0.0));
        let m = l1_norm(last, &grid).unwrap()[0];
        (m - m0).abs() / m0
    }

    #[test]
    fn pointwise_mass_error_shrinks() {
        let e1 = expansion_mass_error(600, Representation::Pointwise);
        let e2 = expansion_mass_error(1200, Representation::Pointwise);
        assert!(e1 <= 1e-3, "{e1}");
        assert!(e1 / e2 >= 2.0 || e2 < 1e-13, "{e1} {e2}");
    }

    #[test]
    fn cell_averages_conserve_mass() {
        for n in [600, 1200] {
            let e = expansion_mass_error(n, Representation::CellAverage);
            assert!(e < 1e-13, "{n}: {e}");
        }
    }

    #[test]
    fn representations_agree_on_smooth_data() {
        let grid = Grid1D::new(0.0, 12.0, 1200).unwrap();
        let rho0: Vec<f64> = grid
            .centers()
            .map(|x| (-(x - 4.0) * (x - 4.0)).exp())
            .collect();
        let rho = DensityField::from_classes(vec![rho0]).unwrap();
        let w = AnalyticField::new(1, (0.0, 2.0), |_, _, x| {
            let s = (x / 3.0).sin();
            (0.3 + 0.2 * s * s, 0.4 * s * (x / 3.0).cos() / 3.0)
        });
        let run = |r| {
            let sol = sigma_solve(
                &w,
                &grid,
                &rho,
                &[0.0, 2.0],
                8,
                Reconstruction::default(),
                r,
            )
            .unwrap();
            sol.trajectory.last().unwrap().1.clone()
        };
        let (a, b) = (
            run(Representation::CellAverage),
            run(Representation::Pointwise),
        );
        let d = crate::mesh::l1_distance_total(&a, &b, &grid).unwrap();
        assert!(d < 1e-4, "{d}");
    }

    #[test]
    fn outside_mass_accounts_for_outflow() {
        let grid = Grid1D::new(0.0, 5.0, 500).unwrap();
        let rho = DensityField::from_classes(vec![block_averages(&grid, 3.0, 4.5, 1.0)]).unwrap();
        let w = constant_field(1, (0.0, 1.0), 1.0);
        for representation in [Representation::CellAverage, Representation::Pointwise] {
            let sol = sigma_solve(
                &w,
                &grid,
                &rho,
                &[0.0, 1.0],
                2,
                Reconstruction::default(),
                representation,
            )
            .unwrap();
            let (_, last) = sol.trajectory.last().unwrap();
            let inside = l1_norm(last, &grid).unwrap()[0];
            assert!((sol.outside_mass[1][0] - 0.5).abs() < 1e-12);
            assert!((inside + sol.outside_mass[1][0] - 1.5).abs() < 1e-9);
        }
    }
}
