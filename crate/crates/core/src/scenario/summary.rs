//! Scalar descriptions of a trajectory: masses, variations, centroids,
//! occupied intervals and clearance times past a marker.

use serde::Serialize;

use crate::mesh::{tv_profile, DensityTrajectory, Grid1D};
use crate::scenario::config::SummaryOptions;

/// Summary of one class at one sample time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassSnapshot {
    pub t: f64,
    pub class: usize,
    pub mass: f64,
    pub tv: f64,
    pub max: f64,
    pub centroid: Option<f64>,
    /// Outer edges of the cells whose density reaches the threshold.
    pub support: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClearanceTime {
    pub class: usize,
    pub marker: f64,
    pub fraction: f64,
    pub time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    /// Support threshold used for each class.
    pub thresholds: Vec<f64>,
    pub rows: Vec<ClassSnapshot>,
    pub clearance: Vec<ClearanceTime>,
}

impl RunSummary {
    pub fn row(&self, class: usize, t: f64) -> Option<&ClassSnapshot> {
        self.rows
            .iter()
            .find(|r| r.class == class && (r.t - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn class_rows(&self, class: usize) -> impl Iterator<Item = &ClassSnapshot> {
        self.rows.iter().filter(move |r| r.class == class)
    }

    pub fn clearance_time(&self, class: usize) -> Option<f64> {
        self.clearance
            .iter()
            .find(|c| c.class == class)
            .and_then(|c| c.time)
    }
}

pub fn centroid(values: &[f64], grid: &Grid1D) -> Option<f64> {
    let mass: f64 = values.iter().sum();
    if mass > 0.0 {
        Some(
            values
                .iter()
                .enumerate()
                .map(|(k, r)| grid.center(k) * r)
                .sum::<f64>()
                / mass,
        )
    } else {
        None
    }
}

pub fn support_bounds(values: &[f64], grid: &Grid1D, threshold: f64) -> Option<[f64; 2]> {
    let first = values.iter().position(|&r| r >= threshold)?;
    let last = values.iter().rposition(|&r| r >= threshold)?;
    Some([grid.edge(first), grid.edge(last + 1)])
}

/// `∫_{x < marker} rho`, splitting the cell that contains the marker.
pub fn mass_behind(values: &[f64], grid: &Grid1D, marker: f64) -> f64 {
    let dx = grid.dx();
    values
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let covered = ((marker - grid.edge(k)) / dx).clamp(0.0, 1.0);
            r * dx * covered
        })
        .sum()
}

/// Steepest descent of the profile to the right of its maximum.
pub fn front_steepness(values: &[f64], grid: &Grid1D) -> f64 {
    let peak = values
        .iter()
        .enumerate()
        .fold(0, |best, (k, &r)| if r > values[best] { k } else { best });
    values[peak..]
        .windows(2)
        .map(|w| (w[0] - w[1]) / grid.dx())
        .fold(0.0, f64::max)
}

/// Earliest time at which at most `1 - fraction` of the class's initial mass
/// remains behind `marker`, interpolating linearly between samples.
pub fn clearance_time(
    traj: &DensityTrajectory,
    class: usize,
    marker: f64,
    fraction: f64,
) -> Option<f64> {
    let grid = traj.grid();
    let (_, first) = traj.iter().next()?;
    let total = grid.dx() * first.class(class).iter().sum::<f64>();
    let target = (1.0 - fraction) * total;
    let mut prev: Option<(f64, f64)> = None;
    for (t, f) in traj.iter() {
        let behind = mass_behind(f.class(class), grid, marker);
        if behind <= target {
            return Some(match prev {
                Some((t0, b0)) if b0 > behind => t0 + (t - t0) * (b0 - target) / (b0 - behind),
                _ => t,
            });
        }
        prev = Some((t, behind));
    }
    None
}

pub fn summarize(traj: &DensityTrajectory, options: &SummaryOptions) -> RunSummary {
    let grid = traj.grid();
    let n = traj.fields().first().map_or(0, |f| f.n_classes());
    let thresholds: Vec<f64> = (0..n)
        .map(|i| {
            options.support_threshold.unwrap_or_else(|| {
                let max0 = traj.fields()[0]
                    .class(i)
                    .iter()
                    .fold(0.0, |a: f64, &b| a.max(b));
                0.01 * max0
            })
        })
        .collect();
    let mut rows = Vec::new();
    for (t, f) in traj.iter() {
        for (i, values) in f.classes().iter().enumerate() {
            rows.push(ClassSnapshot {
                t,
                class: i,
                mass: grid.dx() * values.iter().sum::<f64>(),
                tv: tv_profile(values),
                max: values.iter().fold(0.0, |a: f64, &b| a.max(b)),
                centroid: centroid(values, grid),
                support: if thresholds[i] > 0.0 {
                    support_bounds(values, grid, thresholds[i])
                } else {
                    None
                },
            });
        }
    }
    let clearance = match options.clearance_marker {
        Some(marker) => (0..n)
            .map(|i| ClearanceTime {
                class: i,
                marker,
                fraction: options.clearance_fraction,
                time: clearance_time(traj, i, marker, options.clearance_fraction),
            })
            .collect(),
        None => Vec::new(),
    };
    RunSummary {
        thresholds,
        rows,
        clearance,
    }
}
