//! Uniform 1-D cell meshes, per-class density fields and discrete norms.
//!
//! Cell `k` of a [`Grid1D`] covers `[x_lo + k dx, x_lo + (k + 1) dx]` and its
//! center is `x_lo + (k + 1/2) dx`. Density values are cell averages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default CFL safety factor used by the finite-volume solver.
pub const DEFAULT_CFL_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_lo: f64,
    x_hi: f64,
    n_cells: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, n_cells: usize) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_hi <= x_lo {
            return Err(Error::InvalidConfig(format!(
                "grid bounds must satisfy x_lo < x_hi, got [{x_lo}, {x_hi}]"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            x_lo,
            x_hi,
            n_cells,
            dx: (x_hi - x_lo) / n_cells as f64,
        })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn center(&self, k: usize) -> f64 {
        self.x_lo + (k as f64 + 0.5) * self.dx
    }

    /// Left edge of cell `k` (`k == n_cells` gives the right domain end).
    pub fn edge(&self, k: usize) -> f64 {
        self.x_lo + k as f64 * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |k| self.center(k))
    }
}

/// Cell averages for every class on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    classes: Vec<Vec<f64>>,
}

impl DensityField {
    pub fn zeros(n_classes: usize, n_cells: usize) -> Self {
        Self {
            classes: vec![vec![0.0; n_cells]; n_classes],
        }
    }

    pub fn from_classes(classes: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = classes.first() else {
            return Err(Error::Shape(
                "a density field needs at least one class".into(),
            ));
        };
        let n = first.len();
        if classes.iter().any(|c| c.len() != n) {
            return Err(Error::Shape(
                "all classes must have the same number of cells".into(),
            ));
        }
        if let Some((i, k)) = classes
            .iter()
            .enumerate()
            .find_map(|(i, c)| c.iter().position(|v| !v.is_finite()).map(|k| (i, k)))
        {
            return Err(Error::Numeric(format!("class {i}, cell {k} is not finite")));
        }
        Ok(Self { classes })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.classes.first().map_or(0, Vec::len)
    }

    pub fn class(&self, i: usize) -> &[f64] {
        &self.classes[i]
    }

    pub fn class_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.classes[i]
    }

    pub fn classes(&self) -> &[Vec<f64>] {
        &self.classes
    }

    pub fn into_classes(self) -> Vec<Vec<f64>> {
        self.classes
    }

    pub fn is_finite(&self) -> bool {
        self.classes.iter().flatten().all(|v| v.is_finite())
    }

    pub fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        if self.n_cells() != grid.n_cells() {
            return Err(Error::Shape(format!(
                "field has {} cells, grid has {}",
                self.n_cells(),
                grid.n_cells()
            )));
        }
        Ok(())
    }
}

/// Snapshots of a density field on one grid at strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityTrajectory {
    grid: Grid1D,
    times: Vec<f64>,
    fields: Vec<DensityField>,
}

impl DensityTrajectory {
    pub fn new(grid: Grid1D) -> Self {
        Self {
            grid,
            times: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, field: DensityField) -> Result<()> {
        field.check_grid(&self.grid)?;
        if let Some(last) = self.fields.last() {
            if last.n_classes() != field.n_classes() {
                return Err(Error::Shape(
                    "class count changed within a trajectory".into(),
                ));
            }
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::Shape(format!(
                    "trajectory times must increase strictly: {t} after {last}"
                )));
            }
        }
        self.times.push(t);
        self.fields.push(field);
        Ok(())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[DensityField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DensityField)> {
        self.times.iter().copied().zip(self.fields.iter())
    }

    /// The field recorded at time `t`, matched to `1e-9` relative.
    pub fn at(&self, t: f64) -> Option<&DensityField> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .map(|i| &self.fields[i])
    }

    pub fn last(&self) -> Option<(f64, &DensityField)> {
        self.times.last().copied().zip(self.fields.last())
    }
}

/// `dt = safety * dx / max_speed`.
pub fn cfl_timestep(max_speed: f64, dx: f64, safety: f64) -> Result<f64> {
    if !(max_speed.is_finite() && max_speed > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "CFL step needs a positive finite maximal speed, got {max_speed}"
        )));
    }
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dx must be positive, got {dx}"
        )));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "CFL safety must lie in (0, 1], got {safety}"
        )));
    }
    Ok(safety * dx / max_speed)
}

/// Per-class `dx * sum_k |rho_k|`.
pub fn l1_norm(field: &DensityField, grid: &Grid1D) -> Result<Vec<f64>> {
    field.check_grid(grid)?;
    field
        .classes()
        .iter()
        .map(|c| {
            let s: f64 = c.iter().map(|v| v.abs()).sum();
            if s.is_finite() {
                Ok(grid.dx() * s)
            } else {
                Err(Error::Numeric("L1 norm of a non-finite field".into()))
            }
        })
        .collect()
}

/// Total variation of one profile, including the jumps to the zero
/// extension at both domain ends.
pub fn tv_profile(values: &[f64]) -> f64 {
    let (Some(first), Some(last)) = (values.first(), values.last()) else {
        return 0.0;
    };
    let interior: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    first.abs() + interior + last.abs()
}

/// Per-class discrete total variation (see [`tv_profile`]).
pub fn tv_discrete(field: &DensityField) -> Vec<f64> {
    field.classes().iter().map(|c| tv_profile(c)).collect()
}

/// Per-class `dx * sum_k |a_k - b_k|`.
pub fn l1_distance(a: &DensityField, b: &DensityField, grid: &Grid1D) -> Result<Vec<f64>> {
    a.check_grid(grid)?;
    b.check_grid(grid)?;
    if a.n_classes() != b.n_classes() {
        return Err(Error::Shape(format!(
            "class counts differ: {} vs {}",
            a.n_classes(),
            b.n_classes()
        )));
    }
    Ok(a.classes()
        .iter()
        .zip(b.classes())
        .map(|(x, y)| grid.dx() * x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum::<f64>())
        .collect())
}

/// Sum over classes of [`l1_distance`].
pub fn l1_distance_total(a: &DensityField, b: &DensityField, grid: &Grid1D) -> Result<f64> {
    Ok(l1_distance(a, b, grid)?.iter().sum())
}

/// Cell averages of `value * chi_[lo, hi]`, exact for any block position.
pub fn block_averages(grid: &Grid1D, lo: f64, hi: f64, value: f64) -> Vec<f64> {
    (0..grid.n_cells())
        .map(|k| {
            let (l, r) = (grid.edge(k), grid.edge(k + 1));
            if lo <= l && r <= hi {
                return value;
            }
            let a = l.max(lo);
            let b = r.min(hi);
            if b > a {
                value * (b - a) / grid.dx()
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Grid1D {
        Grid1D::new(lo, hi, n).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = grid(0.0, 10.0, 10000);
        assert_eq!(g.dx(), 0.001);
        assert!((g.center(0) - 0.0005).abs() < 1e-15);
        assert!((g.center(9999) - 9.9995).abs() < 1e-12);
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn cfl_examples() {
        assert!((cfl_timestep(1.0, 0.001, 1.0).unwrap() - 0.001).abs() < 1e-18);
        assert!((cfl_timestep(1.5, 0.01, 1.0).unwrap() - 0.01 / 1.5).abs() < 1e-18);
        assert_eq!(cfl_timestep(2.0, 1.0, 0.5).unwrap(), 0.25);
        assert!(cfl_timestep(0.0, 0.1, 0.9).is_err());
        assert!(cfl_timestep(f64::NAN, 0.1, 0.9).is_err());
        assert!(cfl_timestep(1.0, 0.1, 1.5).is_err());
    }

    #[test]
    fn cfl_is_homogeneous() {
        let a = cfl_timestep(1.3, 0.02, 0.9).unwrap();
        let b = cfl_timestep(2.6, 0.04, 0.9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l1_norm_examples() {
        let g = grid(0.0, 10.0, 1000);
        let zero = DensityField::zeros(2, 1000);
        assert_eq!(l1_norm(&zero, &g).unwrap(), vec![0.0, 0.0]);

        let f = DensityField::from_classes(vec![block_averages(&g, 0.0, 2.0, 0.5)]).unwrap();
        assert!((l1_norm(&f, &g).unwrap()[0] - 1.0).abs() < 1e-12);

        let g = grid(0.0, 20.0, 2000);
        let f = DensityField::from_classes(vec![block_averages(&g, 1.0, 3.0, 0.8)]).unwrap();
        assert!((l1_norm(&f, &g).unwrap()[0] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn tv_examples() {
        let g = grid(0.0, 10.0, 1000);
        assert_eq!(tv_discrete(&DensityField::zeros(1, 1000)), vec![0.0]);
        let f = DensityField::from_classes(vec![block_averages(&g, 3.0, 5.0, 0.5)]).unwrap();
        assert!((tv_discrete(&f)[0] - 1.0).abs() < 1e-15);
        // touching the left end still counts the jump to the zero extension
        let f = DensityField::from_classes(vec![block_averages(&g, 0.0, 2.0, 0.5)]).unwrap();
        assert!((tv_discrete(&f)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l1_distance_shifted_block() {
        let g = grid(0.0, 4.0, 400);
        let a = DensityField::from_classes(vec![block_averages(&g, 0.0, 1.0, 1.0)]).unwrap();
        let b = DensityField::from_classes(vec![block_averages(&g, 0.25, 1.25, 1.0)]).unwrap();
        assert!((l1_distance(&a, &b, &g).unwrap()[0] - 0.5).abs() < 1e-12);
        assert_eq!(l1_distance(&a, &a, &g).unwrap()[0], 0.0);
        let other = grid(0.0, 4.0, 200);
        assert!(l1_distance(&a, &b, &other).is_err());
    }

    #[test]
    fn trajectory_rejects_non_increasing_times() {
        let g = grid(0.0, 1.0, 4);
        let mut traj = DensityTrajectory::new(g);
        traj.push(0.0, DensityField::zeros(1, 4)).unwrap();
        assert!(traj.push(0.0, DensityField::zeros(1, 4)).is_err());
        assert!(traj.push(1.0, DensityField::zeros(1, 5)).is_err());
        traj.push(0.5, DensityField::zeros(1, 4)).unwrap();
        assert_eq!(traj.len(), 2);
        assert!(traj.at(0.5).is_some());
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        assert!(DensityField::from_classes(vec![vec![0.0, f64::NAN]]).is_err());
        assert!(DensityField::from_classes(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distance_is_symmetric_and_zero_on_diagonal(
                a in proptest::collection::vec(-5.0f64..5.0, 32),
                b in proptest::collection::vec(-5.0f64..5.0, 32),
            ) {
                let g = Grid1D::new(0.0, 1.0, 32).unwrap();
                let fa = DensityField::from_classes(vec![a]).unwrap();
                let fb = DensityField::from_classes(vec![b]).unwrap();
                prop_assert_eq!(l1_distance(&fa, &fa, &g).unwrap()[0], 0.0);
                prop_assert_eq!(
                    l1_distance(&fa, &fb, &g).unwrap(),
                    l1_distance(&fb, &fa, &g).unwrap()
                );
            }

            #[test]
            fn tv_is_translation_invariant(
                core in proptest::collection::vec(-3.0f64..3.0, 1..20),
                shift in 0usize..10,
            ) {
                let mut a = vec![0.0; 40];
                let mut b = vec![0.0; 40];
                a[5..5 + core.len()].copy_from_slice(&core);
                b[5 + shift..5 + shift + core.len()].copy_from_slice(&core);
                prop_assert_eq!(tv_profile(&a), tv_profile(&b));
            }
        }
    }
}
