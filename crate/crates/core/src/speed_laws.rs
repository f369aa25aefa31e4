//! Speed laws `v_i(t, x, q_1, ..., q_n)` with analytic partial derivatives.
//!
//! `q_j` is the convolution of class `j`'s density with the kernel through
//! which class `i` sees it. The built-in laws only depend on `q = sum_j q_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A speed law together with its first partial derivatives.
pub trait SpeedLaw: Send + Sync {
    fn speed(&self, t: f64, x: f64, q: &[f64]) -> f64;

    /// `∂v/∂q_j` for every `j`, written into `grad`.
    fn speed_dq(&self, t: f64, x: f64, q: &[f64], grad: &mut [f64]);

    fn speed_dx(&self, t: f64, x: f64, q: &[f64]) -> f64;

    /// Upper bound of `|v|` over all inputs.
    fn max_speed(&self) -> f64;
}

/// Bottleneck speed profile `1 - depth * (64 / L^6) (x - a)^3 (c - x)^3` on
/// `[a, c]` with `L = c - a`, and `1` elsewhere. The default (`a = 5`,
/// `c = 10`, depth `0.5`) gives `1 - 32/5^6 (x-5)^3 (10-x)^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BottleneckProfile {
    pub start: f64,
    pub end: f64,
    pub depth: f64,
}

impl Default for BottleneckProfile {
    fn default() -> Self {
        Self {
            start: 5.0,
            end: 10.0,
            depth: 0.5,
        }
    }
}

impl BottleneckProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.end > self.start) || !(0.0..1.0).contains(&self.depth) {
            return Err(Error::InvalidConfig(format!(
                "bottleneck needs start < end and depth in [0, 1), got {self:?}"
            )));
        }
        Ok(())
    }

    fn coefficient(&self) -> f64 {
        self.depth * 64.0 / (self.end - self.start).powi(6)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x < self.start || x > self.end {
            return 1.0;
        }
        let (a, b) = (x - self.start, self.end - x);
        1.0 - self.coefficient() * (a * b).powi(3)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x < self.start || x > self.end {
            return 0.0;
        }
        let (a, b) = (x - self.start, self.end - x);
        -3.0 * self.coefficient() * (a * b).powi(2) * (b - a)
    }
}

/// Built-in laws, as they appear in scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpeedLawSpec {
    /// `V (1 - q)^3` clamped to `V` for `q < 0` and `0` for `q > 1`.
    Cubic { v_max: f64 },
    /// The cubic law with a space-dependent maximal speed `v_max * V(x)`.
    CubicBottleneck {
        v_max: f64,
        #[serde(default)]
        profile: BottleneckProfile,
    },
    /// `v = speed` regardless of the densities.
    Constant { speed: f64 },
}

impl SpeedLawSpec {
    pub fn cubic(v_max: f64) -> Self {
        SpeedLawSpec::Cubic { v_max }
    }

    pub fn bottleneck() -> Self {
        SpeedLawSpec::CubicBottleneck {
            v_max: 1.0,
            profile: BottleneckProfile::default(),
        }
    }

    pub fn constant(speed: f64) -> Self {
        SpeedLawSpec::Constant { speed }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpeedLawSpec::Cubic { v_max } | SpeedLawSpec::CubicBottleneck { v_max, .. } => {
                if !(v_max.is_finite() && *v_max > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "v_max must be positive, got {v_max}"
                    )));
                }
                if let SpeedLawSpec::CubicBottleneck { profile, .. } = self {
                    profile.validate()?;
                }
                Ok(())
            }
            SpeedLawSpec::Constant { speed } => {
                if !(speed.is_finite() && *speed >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "constant speed must be finite and non-negative, got {speed}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The same law with its speed scale multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            SpeedLawSpec::Cubic { v_max } => SpeedLawSpec::Cubic {
                v_max: v_max * factor,
            },
            SpeedLawSpec::CubicBottleneck { v_max, profile } => SpeedLawSpec::CubicBottleneck {
                v_max: v_max * factor,
                profile: *profile,
            },
            SpeedLawSpec::Constant { speed } => SpeedLawSpec::Constant {
                speed: speed * factor,
            },
        }
    }

    fn scale_at(&self, x: f64) -> f64 {
        match self {
            SpeedLawSpec::Cubic { v_max } => *v_max,
            SpeedLawSpec::CubicBottleneck { v_max, profile } => v_max * profile.value(x),
            SpeedLawSpec::Constant { speed } => *speed,
        }
    }

    fn scale_dx(&self, x: f64) -> f64 {
        match self {
            SpeedLawSpec::CubicBottleneck { v_max, profile } => v_max * profile.derivative(x),
            _ => 0.0,
        }
    }
}

/// `(1 - q)^3` with the clamps; at the kink `q = 0` the interior branch is used.
fn cubic_shape(q: f64) -> f64 {
    if q < 0.0 {
        1.0
    } else if q > 1.0 {
        0.0
    } else {
        let s = 1.0 - q;
        s * s * s
    }
}

fn cubic_shape_dq(q: f64) -> f64 {
    if (0.0..=1.0).contains(&q) {
        let s = 1.0 - q;
        -3.0 * s * s
    } else {
        0.0
    }
}

impl SpeedLaw for SpeedLawSpec {
    fn speed(&self, _t: f64, x: f64, q: &[f64]) -> f64 {
        match self {
            SpeedLawSpec::Constant { speed } => *speed,
            _ => self.scale_at(x) * cubic_shape(q.iter().sum()),
        }
    }

    fn speed_dq(&self, _t: f64, x: f64, q: &[f64], grad: &mut [f64]) {
        let d = match self {
            SpeedLawSpec::Constant { .. } => 0.0,
            _ => self.scale_at(x) * cubic_shape_dq(q.iter().sum()),
        };
        grad.iter_mut().for_each(|g| *g = d);
    }

    fn speed_dx(&self, _t: f64, x: f64, q: &[f64]) -> f64 {
        match self {
            SpeedLawSpec::CubicBottleneck { .. } => self.scale_dx(x) * cubic_shape(q.iter().sum()),
            _ => 0.0,
        }
    }

    fn max_speed(&self) -> f64 {
        match self {
            SpeedLawSpec::Cubic { v_max } | SpeedLawSpec::CubicBottleneck { v_max, .. } => *v_max,
            SpeedLawSpec::Constant { speed } => *speed,
        }
    }
}

/// Checked evaluation: rejects non-finite convolution inputs.
pub fn eval_speed(law: &dyn SpeedLaw, t: f64, x: f64, q: &[f64]) -> Result<f64> {
    if let Some(j) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "q[{j}] = {} at x = {x}, t = {t}",
            q[j]
        )));
    }
    Ok(law.speed(t, x, q))
}

/// Sampling lattice for [`validate_assumption_v`]. The q-vector is sampled
/// along the diagonal `s (1, ..., 1) / n` for `s` in `q_range`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationLattice {
    pub n_classes: usize,
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub q_range: (f64, f64),
    pub n_t: usize,
    pub n_x: usize,
    pub n_q: usize,
    /// Finite-difference step.
    pub h: f64,
}

impl ValidationLattice {
    pub fn new(n_classes: usize, x_range: (f64, f64), q_range: (f64, f64)) -> Self {
        Self {
            n_classes,
            t_range: (0.0, 0.0),
            x_range,
            q_range,
            n_t: 1,
            n_x: 401,
            n_q: 201,
            h: 1e-6,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 {
        (hi - lo) / (n - 1) as f64
    } else {
        0.0
    };
    (0..n.max(1)).map(move |i| if i + 1 == n { hi } else { lo + i as f64 * step })
}

/// A jump in `∂v/∂q_j` found while sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kink {
    pub x: f64,
    pub q: f64,
    pub jump: f64,
}

/// Empirical bounds standing in for the law's norm.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssumptionReport {
    /// `sup |v(t, x, 0)|`.
    pub sup_v0: f64,
    pub sup_v: f64,
    pub sup_dx: f64,
    pub sup_dq: f64,
    pub sup_dxx: f64,
    pub sup_dxq: f64,
    pub sup_dqq: f64,
    pub kinks: Vec<Kink>,
}

impl AssumptionReport {
    /// `sup|v(.,0)| + sup` of the first and second derivatives.
    pub fn norm(&self) -> f64 {
        self.sup_v0 + self.sup_dx + self.sup_dq + self.sup_dxx + self.sup_dxq + self.sup_dqq
    }
}

/// Sample `v` and its derivatives on a lattice. Second derivatives are
/// finite differences of the analytic first derivatives, one-sided at the
/// lattice ends so that no sample leaves the requested ranges.
pub fn validate_assumption_v(
    law: &dyn SpeedLaw,
    lattice: &ValidationLattice,
) -> Result<AssumptionReport> {
    let n = lattice.n_classes.max(1);
    let h = lattice.h;
    let (q_lo, q_hi) = lattice.q_range;
    let (x_lo, x_hi) = lattice.x_range;
    let mut rep = AssumptionReport::default();
    let mut grad = vec![0.0; n];
    let mut grad2 = vec![0.0; n];
    let zero = vec![0.0; n];
    let diag = |s: f64| vec![s / n as f64; n];
    // one kink record per q level
    let mut kink_keys: Vec<f64> = Vec::new();

    let check = |v: f64, what: &str, t: f64, x: f64, s: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v.abs())
        } else {
            Err(Error::Numeric(format!(
                "{what} is not finite at t = {t}, x = {x}, q = {s}"
            )))
        }
    };

    for t in linspace(lattice.t_range.0, lattice.t_range.1, lattice.n_t) {
        for x in linspace(x_lo, x_hi, lattice.n_x) {
            rep.sup_v0 = rep
                .sup_v0
                .max(check(law.speed(t, x, &zero), "v(., 0)", t, x, 0.0)?);
            let (xm, xp) = (
                if x - h >= x_lo { x - h } else { x },
                if x + h <= x_hi { x + h } else { x },
            );
            for s in linspace(q_lo, q_hi, lattice.n_q) {
                let q = diag(s);
                rep.sup_v = rep.sup_v.max(check(law.speed(t, x, &q), "v", t, x, s)?);
                let dx = law.speed_dx(t, x, &q);
                rep.sup_dx = rep.sup_dx.max(check(dx, "dv/dx", t, x, s)?);
                law.speed_dq(t, x, &q, &mut grad);
                for g in &grad {
                    rep.sup_dq = rep.sup_dq.max(check(*g, "dv/dq", t, x, s)?);
                }
                if xp > xm {
                    let dxx = (law.speed_dx(t, xp, &q) - law.speed_dx(t, xm, &q)) / (xp - xm);
                    rep.sup_dxx = rep.sup_dxx.max(check(dxx, "d2v/dx2", t, x, s)?);
                    law.speed_dq(t, xp, &q, &mut grad2);
                    let mut lo = vec![0.0; n];
                    law.speed_dq(t, xm, &q, &mut lo);
                    for (a, b) in grad2.iter().zip(&lo) {
                        rep.sup_dxq =
                            rep.sup_dxq
                                .max(check((a - b) / (xp - xm), "d2v/dxdq", t, x, s)?);
                    }
                }
                // ∂²/∂q_j² along each axis, staying inside the sampled range
                for j in 0..n {
                    let mut qm = q.clone();
                    let mut qp = q.clone();
                    let down = s - h >= q_lo;
                    let up = s + h <= q_hi;
                    if down {
                        qm[j] -= h;
                    }
                    if up {
                        qp[j] += h;
                    }
                    let width = h * (down as u8 + up as u8) as f64;
                    if width > 0.0 {
                        law.speed_dq(t, x, &qp, &mut grad2);
                        let hi_v = grad2[j];
                        law.speed_dq(t, x, &qm, &mut grad2);
                        let d2 = (hi_v - grad2[j]) / width;
                        rep.sup_dqq = rep.sup_dqq.max(check(d2, "d2v/dq2", t, x, s)?);
                    }
                    // kink probe: one-sided limits straddling the sample
                    let mut probe = q.clone();
                    probe[j] += 1e-7;
                    law.speed_dq(t, x, &probe, &mut grad2);
                    let right = grad2[j];
                    probe[j] -= 2e-7;
                    law.speed_dq(t, x, &probe, &mut grad2);
                    let jump = right - grad2[j];
                    if jump.abs() > 1e-3 && !kink_keys.contains(&s) {
                        kink_keys.push(s);
                        rep.kinks.push(Kink { x, q: s, jump });
                    }
                }
            }
        }
    }
    Ok(rep)
}
