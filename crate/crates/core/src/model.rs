//! The nonlocal multiclass system: a grid, one speed law per class and the
//! kernel matrix coupling the classes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::mesh::Grid1D;
use crate::speed_laws::{SpeedLaw, SpeedLawSpec};

#[derive(Clone)]
pub struct Model {
    pub grid: Grid1D,
    pub laws: Vec<Arc<dyn SpeedLaw>>,
    pub kernels: KernelMatrix,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("grid", &self.grid)
            .field("n_classes", &self.laws.len())
            .field("kernels", &self.kernels)
            .finish()
    }
}

impl Model {
    pub fn new(grid: Grid1D, laws: Vec<Arc<dyn SpeedLaw>>, kernels: KernelMatrix) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one class is required".into(),
            ));
        }
        if laws.len() != kernels.n() {
            return Err(Error::Shape(format!(
                "{} speed laws but a {}x{} kernel matrix",
                laws.len(),
                kernels.n(),
                kernels.n()
            )));
        }
        Ok(Self {
            grid,
            laws,
            kernels,
        })
    }

    pub fn from_specs(grid: Grid1D, laws: &[SpeedLawSpec], kernels: KernelMatrix) -> Result<Self> {
        for law in laws {
            law.validate()?;
        }
        let laws = laws
            .iter()
            .map(|l| Arc::new(l.clone()) as Arc<dyn SpeedLaw>)
            .collect();
        Self::new(grid, laws, kernels)
    }

    pub fn n_classes(&self) -> usize {
        self.laws.len()
    }

    /// `max_i sup |v_i|`.
    pub fn max_speed(&self) -> f64 {
        self.laws.iter().map(|l| l.max_speed()).fold(0.0, f64::max)
    }
}

/// The distinct `(kernel, class)` convolutions a kernel matrix needs.
#[derive(Clone, Debug)]
pub(crate) struct CouplingPairs {
    pub kernels: Vec<crate::kernels::Kernel>,
    /// `(index into kernels, class)` to convolve.
    pub pairs: Vec<(usize, usize)>,
    /// `slot[i][j]` indexes `pairs` for entry `(i, j)`.
    pub slot: Vec<Vec<usize>>,
}

impl CouplingPairs {
    pub fn new(matrix: &KernelMatrix) -> Self {
        let n = matrix.n();
        let (kernels, index) = matrix.dedup();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut slot = vec![vec![0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let key = (index[i][j], j);
                slot[i][j] = match pairs.iter().position(|p| *p == key) {
                    Some(s) => s,
                    None => {
                        pairs.push(key);
                        pairs.len() - 1
                    }
                };
            }
        }
        Self {
            kernels,
            pairs,
            slot,
        }
    }
}
