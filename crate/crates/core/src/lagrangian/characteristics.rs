//! Backward characteristics `ẋ = w(s, x)` with the accumulated divergence
//! `E = ∫ ∂_x w(s, X(s)) ds`, integrated by the classical RK4 scheme.

use super::field::{check_time, VelocityField};
use crate::error::{Error, Result};

/// Where a characteristic started and how much it was compressed on the way.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Foot {
    pub x: f64,
    /// `∫_{t0}^{t} ∂_x w(s, X(s)) ds`.
    pub exponent: f64,
}

/// Trace from `(nodes[0], x)` back to `nodes.last()`, with `substeps` RK4
/// steps inside each pair of consecutive (decreasing) nodes.
pub fn trace_back<F: VelocityField + ?Sized>(
    field: &F,
    class: usize,
    x: f64,
    nodes: &[f64],
    substeps: usize,
) -> Foot {
    let mut pos = x;
    let mut acc = 0.0;
    for pair in nodes.windows(2) {
        let (ta, tb) = (pair[0], pair[1]);
        let h = (tb - ta) / substeps as f64;
        for s in 0..substeps {
            let t = ta + s as f64 * h;
            let (k1, e1) = field.eval(class, t, pos);
            let (k2, e2) = field.eval(class, t + 0.5 * h, pos + 0.5 * h * k1);
            let (k3, e3) = field.eval(class, t + 0.5 * h, pos + 0.5 * h * k2);
            let (k4, e4) = field.eval(class, t + h, pos + h * k3);
            pos += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            acc += h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
        }
    }
    Foot {
        x: pos,
        exponent: -acc,
    }
}

/// `(X(t0; t, x), ∫_{t0}^t ∂_x w)` with `t0` the start of the field's time
/// range, using `substeps` equal RK4 steps.
pub fn characteristics_backward<F: VelocityField + ?Sized>(
    field: &F,
    class: usize,
    t: f64,
    x: f64,
    substeps: usize,
) -> Result<Foot> {
    let range = field.time_range();
    check_time(range, t)?;
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    if class >= field.n_classes() {
        return Err(Error::Shape(format!("no class {class}")));
    }
    let foot = trace_back(field, class, x, &[t, range.0], substeps);
    if !(foot.x.is_finite() && foot.exponent.is_finite()) {
        return Err(Error::Numeric(format!(
            "characteristic from (t = {t}, x = {x}) is not finite"
        )));
    }
    Ok(foot)
}
