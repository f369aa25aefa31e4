//! Discrete convolution of cell values with a [`Stencil`], zero-extending the
//! field outside the domain. Two engines: direct summation and zero-padded
//! FFT. They agree to round-off.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{DiscreteKernel, Stencil};
use crate::error::{Error, Result};

/// Stencils longer than this use the FFT engine under [`ConvolutionEngine::Auto`].
const AUTO_FFT_MIN_TAPS: usize = 48;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionEngine {
    Direct,
    Fft,
    #[default]
    Auto,
}

/// `out_k = sum_j s_j * rho_{k - p_j}` by direct summation.
pub fn convolve_direct(stencil: &Stencil, field: &[f64]) -> Vec<f64> {
    let n = field.len() as i64;
    let mut out = vec![0.0; field.len()];
    for (j, &w) in stencil.values().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let p = stencil.first_offset() + j as i64;
        let k_lo = p.max(0);
        let k_hi = (n + p).min(n);
        if k_lo >= k_hi {
            continue;
        }
        let src = &field[(k_lo - p) as usize..(k_hi - p) as usize];
        for (o, r) in out[k_lo as usize..k_hi as usize].iter_mut().zip(src) {
            *o += w * r;
        }
    }
    out
}

/// Convolve cell averages with a discretized kernel: `dx * sum_p w_p rho_{k-p}`.
pub fn convolve(kernel: &DiscreteKernel, field: &[f64], engine: ConvolutionEngine) -> Vec<f64> {
    Convolver::new(kernel.stencil(), field.len(), engine).apply(field)
}

/// Precomputed zero-padded FFT convolution for one stencil and field length.
pub struct FftPlan {
    n: usize,
    shift: i64,
    size: usize,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan")
            .field("n", &self.n)
            .field("size", &self.size)
            .finish()
    }
}

impl FftPlan {
    pub fn new(stencil: &Stencil, n: usize) -> Self {
        let size = (n + stencil.len()).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex::new(0.0, 0.0); size];
        for (s, &v) in spectrum.iter_mut().zip(stencil.values()) {
            s.re = v;
        }
        forward.process(&mut spectrum);
        let scale = 1.0 / size as f64;
        for s in &mut spectrum {
            *s *= scale;
        }
        Self {
            n,
            shift: stencil.first_offset(),
            size,
            spectrum,
            forward,
            inverse,
        }
    }

    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.n {
            return Err(Error::Shape(format!(
                "FFT plan built for {} cells, field has {}",
                self.n,
                field.len()
            )));
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (b, &r) in buf.iter_mut().zip(field) {
            b.re = r;
        }
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        // full[m] = sum_j s_j rho[m - j], and out_k = full[k - first_offset]
        Ok((0..self.n as i64)
            .map(|k| {
                let m = k - self.shift;
                if m >= 0 && (m as usize) < self.size {
                    buf[m as usize].re
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// A stencil bound to a field length and an engine.
#[derive(Debug)]
pub struct Convolver {
    stencil: Stencil,
    n: usize,
    fft: Option<FftPlan>,
}

impl Convolver {
    pub fn new(stencil: Stencil, n: usize, engine: ConvolutionEngine) -> Self {
        let use_fft = match engine {
            ConvolutionEngine::Direct => false,
            ConvolutionEngine::Fft => true,
            ConvolutionEngine::Auto => stencil.len() >= AUTO_FFT_MIN_TAPS,
        };
        let fft = use_fft.then(|| FftPlan::new(&stencil, n));
        Self { stencil, n, fft }
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        self.try_apply(field)
            .expect("field length matches the convolver")
    }

    pub fn try_apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.n {
            return Err(Error::Shape(format!(
                "convolver built for {} cells, field has {}",
                self.n,
                field.len()
            )));
        }
        match &self.fft {
            Some(plan) => plan.apply(field),
            None => Ok(convolve_direct(&self.stencil, field)),
        }
    }
}
