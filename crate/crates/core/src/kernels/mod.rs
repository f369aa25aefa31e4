//! Interaction kernels: the asymmetric quartic bump, tabulated kernels, and
//! their sampling onto a grid.
//!
//! Orientation: `(eta * rho)(x) = ∫ eta(xi) rho(x - xi) dxi`, so the part of
//! the support at negative `xi` (length `f`, the forward horizon) weights
//! density *ahead* of `x`, and the part at positive `xi` (length `b`) weights
//! density behind it.

pub mod convolution;

pub use convolution::{convolve, convolve_direct, ConvolutionEngine, Convolver, FftPlan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Grid1D;

/// `A` such that the quartic bump with horizons `f`, `b` has unit mass.
///
/// Each half integrates to `8/15` of its horizon times `A`, hence
/// `A = 15 / (8 (f + b))`.
pub fn normalization_constant(f: f64, b: f64) -> Result<f64> {
    if !(f.is_finite() && f > 0.0 && b.is_finite() && b > 0.0) {
        return Err(Error::InvalidKernel(format!(
            "horizons must be positive and finite, got f = {f}, b = {b}"
        )));
    }
    Ok(15.0 / (8.0 * (f + b)))
}

/// Quartic bump `A (1 - (x/f)^2)^2` on `[-f, 0]`, `A (1 - (x/b)^2)^2` on `[0, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    forward: f64,
    backward: f64,
    amplitude: f64,
}

impl KernelSpec {
    pub fn new(forward: f64, backward: f64) -> Result<Self> {
        let amplitude = normalization_constant(forward, backward)?;
        Ok(Self {
            forward,
            backward,
            amplitude,
        })
    }

    pub fn forward(&self) -> f64 {
        self.forward
    }

    pub fn backward(&self) -> f64 {
        self.backward
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Horizon of the half containing `x` (`f` for `x <= 0`).
    fn half(&self, x: f64) -> f64 {
        if x <= 0.0 {
            self.forward
        } else {
            self.backward
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < -self.forward || x > self.backward {
            return 0.0;
        }
        let u = x / self.half(x);
        let s = 1.0 - u * u;
        self.amplitude * s * s
    }

    pub fn eval_dx(&self, x: f64) -> f64 {
        if x < -self.forward || x > self.backward {
            return 0.0;
        }
        let h = self.half(x);
        let u = x / h;
        -4.0 * self.amplitude * u * (1.0 - u * u) / h
    }

    pub fn eval_dxx(&self, x: f64) -> f64 {
        if x < -self.forward || x > self.backward {
            return 0.0;
        }
        let h = self.half(x);
        let u = x / h;
        -4.0 * self.amplitude * (1.0 - 3.0 * u * u) / (h * h)
    }

    /// `∫_{-∞}^x eta`.
    pub fn cumulative(&self, x: f64) -> f64 {
        // antiderivative of (1 - u^2)^2
        fn p(u: f64) -> f64 {
            u - 2.0 * u * u * u / 3.0 + u.powi(5) / 5.0
        }
        const HALF_MASS: f64 = 8.0 / 15.0;
        if x <= -self.forward {
            0.0
        } else if x <= 0.0 {
            self.amplitude * self.forward * (p(x / self.forward) + HALF_MASS)
        } else if x < self.backward {
            self.amplitude * (self.forward * HALF_MASS + self.backward * p(x / self.backward))
        } else {
            1.0
        }
    }

    pub fn norms(&self) -> KernelNorms {
        let h = self.forward.min(self.backward);
        // max |u (1 - u^2)| on [0, 1] is attained at u = 1/sqrt(3)
        let slope = 4.0 * self.amplitude * 2.0 / (3.0 * 3f64.sqrt()) / h;
        KernelNorms {
            sup: self.amplitude,
            sup_dx: slope,
            sup_dxx: 8.0 * self.amplitude / (h * h),
        }
    }
}

/// A non-negative kernel given as values at `xi = (first_offset + j) * dx`,
/// linearly interpolated in between and zero outside. It is rescaled to unit
/// mass on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernel {
    dx: f64,
    first_offset: i64,
    taps: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(dx: f64, first_offset: i64, taps: Vec<f64>) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "tap spacing must be positive, got {dx}"
            )));
        }
        if taps.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidKernel(
                "taps must be finite and non-negative".into(),
            ));
        }
        // trapezoid rule is exact for the piecewise-linear interpolant
        let n = taps.len();
        let mass: f64 = dx
            * taps
                .iter()
                .enumerate()
                .map(|(j, t)| if j == 0 || j + 1 == n { 0.5 * t } else { *t })
                .sum::<f64>();
        if !(mass > 0.0) || n < 2 {
            return Err(Error::InvalidKernel(
                "a tabulated kernel needs at least two taps and positive mass".into(),
            ));
        }
        Ok(Self {
            dx,
            first_offset,
            taps: taps.into_iter().map(|t| t / mass).collect(),
        })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn first_offset(&self) -> i64 {
        self.first_offset
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    fn lo(&self) -> f64 {
        self.first_offset as f64 * self.dx
    }

    fn hi(&self) -> f64 {
        (self.first_offset + self.taps.len() as i64 - 1) as f64 * self.dx
    }

    /// Segment index and local coordinate in `[0, 1)`.
    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if x < self.lo() || x > self.hi() {
            return None;
        }
        let s = (x - self.lo()) / self.dx;
        let j = (s.floor() as usize).min(self.taps.len() - 2);
        Some((j, s - j as f64))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((j, s)) => self.taps[j] * (1.0 - s) + self.taps[j + 1] * s,
            None => 0.0,
        }
    }

    pub fn eval_dx(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((j, _)) => (self.taps[j + 1] - self.taps[j]) / self.dx,
            None => 0.0,
        }
    }

    /// Piecewise-linear data have no pointwise second derivative; this is
    /// identically zero away from the nodes.
    pub fn eval_dxx(&self, _x: f64) -> f64 {
        0.0
    }

    pub fn cumulative(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return 1.0;
        }
        let (j, s) = self.locate(x).expect("inside support");
        let full: f64 = self.taps[..=j]
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * self.dx)
            .sum();
        let (a, b) = (self.taps[j], self.taps[j + 1]);
        full + self.dx * (a * s + 0.5 * (b - a) * s * s)
    }

    pub fn norms(&self) -> KernelNorms {
        let sup = self.taps.iter().cloned().fold(0.0, f64::max);
        let mut slopes = vec![self.taps[0] / self.dx];
        slopes.extend(self.taps.windows(2).map(|w| (w[1] - w[0]) / self.dx));
        slopes.push(-self.taps[self.taps.len() - 1] / self.dx);
        let sup_dx = slopes.iter().map(|s| s.abs()).fold(0.0, f64::max);
        // slope jumps over one spacing stand in for the second derivative
        let sup_dxx = slopes
            .windows(2)
            .map(|w| ((w[1] - w[0]) / self.dx).abs())
            .fold(0.0, f64::max);
        KernelNorms {
            sup,
            sup_dx,
            sup_dxx,
        }
    }
}

/// Sup norms of a kernel and its first two derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelNorms {
    pub sup: f64,
    pub sup_dx: f64,
    pub sup_dxx: f64,
}

/// One entry of the kernel matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Kernel {
    Bump(KernelSpec),
    Tabulated(TabulatedKernel),
}

impl Kernel {
    pub fn bump(forward: f64, backward: f64) -> Result<Self> {
        KernelSpec::new(forward, backward).map(Kernel::Bump)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Bump(k) => k.eval(x),
            Kernel::Tabulated(k) => k.eval(x),
        }
    }

    pub fn eval_dx(&self, x: f64) -> f64 {
        match self {
            Kernel::Bump(k) => k.eval_dx(x),
            Kernel::Tabulated(k) => k.eval_dx(x),
        }
    }

    pub fn eval_dxx(&self, x: f64) -> f64 {
        match self {
            Kernel::Bump(k) => k.eval_dxx(x),
            Kernel::Tabulated(k) => k.eval_dxx(x),
        }
    }

    pub fn cumulative(&self, x: f64) -> f64 {
        match self {
            Kernel::Bump(k) => k.cumulative(x),
            Kernel::Tabulated(k) => k.cumulative(x),
        }
    }

    /// Support `[lo, hi]` in kernel coordinates.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Kernel::Bump(k) => (-k.forward, k.backward),
            Kernel::Tabulated(k) => (k.lo(), k.hi()),
        }
    }

    pub fn norms(&self) -> KernelNorms {
        match self {
            Kernel::Bump(k) => k.norms(),
            Kernel::Tabulated(k) => k.norms(),
        }
    }

    /// The same kernel with its forward horizon multiplied by `factor`.
    pub fn with_scaled_forward(&self, factor: f64) -> Result<Self> {
        match self {
            Kernel::Bump(k) => Kernel::bump(k.forward * factor, k.backward),
            Kernel::Tabulated(_) => Err(Error::InvalidKernel(
                "forward-horizon scaling is only defined for bump kernels".into(),
            )),
        }
    }

    /// Midpoint sampling at `p dx` for every integer `p` in the support,
    /// rescaled to `dx * sum = 1`.
    pub fn discretize(&self, grid: &Grid1D) -> Result<DiscreteKernel> {
        let dx = grid.dx();
        let (lo, hi) = self.support();
        let p_lo = (lo / dx - 1e-9).ceil() as i64;
        let p_hi = (hi / dx + 1e-9).floor() as i64;
        let raw: Vec<f64> = (p_lo..=p_hi).map(|p| self.eval(p as f64 * dx)).collect();
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateKernel { dx });
        }
        let raw_mass = dx * sum;
        Ok(DiscreteKernel {
            dx,
            first_offset: p_lo,
            weights: raw.iter().map(|w| w / raw_mass).collect(),
            raw_defect: raw_mass - 1.0,
        })
    }

    /// Exact cell integrals `∫_{(p-1/2)dx}^{(p+1/2)dx} eta`: convolving cell
    /// averages with these gives `eta * rho` at cell centers exactly for
    /// piecewise-constant `rho`.
    pub fn cell_integrated(&self, grid: &Grid1D) -> Stencil {
        let dx = grid.dx();
        let (lo, hi) = self.support();
        let p_lo = (lo / dx - 0.5).floor() as i64;
        let p_hi = (hi / dx + 0.5).ceil() as i64;
        let values = (p_lo..=p_hi)
            .map(|p| {
                let p = p as f64;
                self.cumulative((p + 0.5) * dx) - self.cumulative((p - 0.5) * dx)
            })
            .collect();
        Stencil::new(p_lo, values)
    }

    /// Taps `eta((p+1/2)dx) - eta((p-1/2)dx)`: convolving cell averages with
    /// these gives `(∂_x eta) * rho` at cell centers exactly for
    /// piecewise-constant `rho`.
    pub fn cell_derivative(&self, grid: &Grid1D) -> Stencil {
        let dx = grid.dx();
        let (lo, hi) = self.support();
        let p_lo = (lo / dx - 0.5).floor() as i64;
        let p_hi = (hi / dx + 0.5).ceil() as i64;
        let values = (p_lo..=p_hi)
            .map(|p| {
                let p = p as f64;
                self.eval((p + 0.5) * dx) - self.eval((p - 0.5) * dx)
            })
            .collect();
        Stencil::new(p_lo, values)
    }
}

/// Grid sampling of a kernel: `weights[j]` sits at offset
/// `first_offset + j` cells, with `dx * sum(weights) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteKernel {
    dx: f64,
    first_offset: i64,
    weights: Vec<f64>,
    raw_defect: f64,
}

impl DiscreteKernel {
    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn first_offset(&self) -> i64 {
        self.first_offset
    }

    pub fn last_offset(&self) -> i64 {
        self.first_offset + self.weights.len() as i64 - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `dx * sum(raw samples) - 1` before rescaling.
    pub fn raw_defect(&self) -> f64 {
        self.raw_defect
    }

    /// Coefficients applied directly to cell values (`dx` folded in).
    pub fn stencil(&self) -> Stencil {
        Stencil::new(
            self.first_offset,
            self.weights.iter().map(|w| w * self.dx).collect(),
        )
    }
}

/// Convolution coefficients: `out_k = sum_j values[j] * rho_{k - (first_offset + j)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    first_offset: i64,
    values: Vec<f64>,
}

impl Stencil {
    pub fn new(first_offset: i64, values: Vec<f64>) -> Self {
        Self {
            first_offset,
            values,
        }
    }

    pub fn first_offset(&self) -> i64 {
        self.first_offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Square matrix of kernels; entry `(i, j)` says how class `i` sees class `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    entries: Vec<Vec<Kernel>>,
}

impl KernelMatrix {
    pub fn new(entries: Vec<Vec<Kernel>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidKernel(format!(
                "kernel matrix must be square with side >= 1, got {} rows",
                n
            )));
        }
        Ok(Self { entries })
    }

    /// Every entry equal to `kernel`.
    pub fn uniform(n: usize, kernel: Kernel) -> Result<Self> {
        Self::new(vec![vec![kernel; n]; n])
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Kernel {
        &self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<Kernel>] {
        &self.entries
    }

    /// Sup over all pairs of each kernel norm.
    pub fn norms(&self) -> KernelNorms {
        self.entries
            .iter()
            .flatten()
            .map(Kernel::norms)
            .fold(KernelNorms::default(), |a, b| KernelNorms {
                sup: a.sup.max(b.sup),
                sup_dx: a.sup_dx.max(b.sup_dx),
                sup_dxx: a.sup_dxx.max(b.sup_dxx),
            })
    }

    pub fn map_entries(&self, f: impl Fn(&Kernel) -> Result<Kernel>) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|row| row.iter().map(&f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Distinct kernels and, for each `(i, j)`, the index of its kernel.
    pub fn dedup(&self) -> (Vec<Kernel>, Vec<Vec<usize>>) {
        let mut unique: Vec<Kernel> = Vec::new();
        let index = self
            .entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|k| match unique.iter().position(|u| u == k) {
                        Some(p) => p,
                        None => {
                            unique.push(k.clone());
                            unique.len() - 1
                        }
                    })
                    .collect()
            })
            .collect();
        (unique, index)
    }
}
