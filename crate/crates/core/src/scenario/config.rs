//! Scenario documents: a single JSON object describing domain, classes,
//! kernels, solver and output options.
//!
//! Parsing walks the document by hand so that every problem is reported with
//! its path, instead of stopping at the first one.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::diagnostics::comb_profile;
use crate::error::{Error, Result};
use crate::fv::{FvConfig, FvMode};
use crate::kernels::convolution::ConvolutionEngine;
use crate::kernels::{Kernel, KernelMatrix, TabulatedKernel};
use crate::lagrangian::{LagrangianConfig, Reconstruction, Representation};
use crate::mesh::{block_averages, DensityField, Grid1D, DEFAULT_CFL_SAFETY};
use crate::model::Model;
use crate::speed_laws::SpeedLawSpec;

/// One problem found while validating a scenario document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigViolation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    FvNonlocal,
    FvLocalLwr,
    Lagrangian,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [
        SolverKind::FvNonlocal,
        SolverKind::FvLocalLwr,
        SolverKind::Lagrangian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::FvNonlocal => "fv-nonlocal",
            SolverKind::FvLocalLwr => "fv-local-lwr",
            SolverKind::Lagrangian => "lagrangian",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

/// Initial density of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDatum {
    /// Sum of `value * chi_[lo, hi]`, stored as exact cell averages.
    Blocks {
        blocks: Vec<Block>,
    },
    /// Unit-height comb with teeth `[i/m, i/m + 1/(2m)]`, `i = 1..m`.
    Comb {
        teeth: usize,
    },
    Zero,
}

impl InitialDatum {
    pub fn block(lo: f64, hi: f64, value: f64) -> Self {
        InitialDatum::Blocks {
            blocks: vec![Block { lo, hi, value }],
        }
    }

    pub fn cell_averages(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        match self {
            InitialDatum::Blocks { blocks } => {
                let mut out = vec![0.0; grid.n_cells()];
                for b in blocks {
                    for (o, v) in out
                        .iter_mut()
                        .zip(block_averages(grid, b.lo, b.hi, b.value))
                    {
                        *o += v;
                    }
                }
                Ok(out)
            }
            InitialDatum::Comb { teeth } => comb_profile(*teeth, grid),
            InitialDatum::Zero => Ok(vec![0.0; grid.n_cells()]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub speed_law: SpeedLawSpec,
    pub initial: InitialDatum,
}

/// A kernel matrix entry as written in a document.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum KernelDoc {
    Bump {
        f: f64,
        b: f64,
    },
    Tabulated {
        taps: Vec<f64>,
        dx: f64,
        first_offset: i64,
    },
}

impl KernelDoc {
    pub fn build(&self) -> Result<Kernel> {
        match self {
            KernelDoc::Bump { f, b } => Kernel::bump(*f, *b),
            KernelDoc::Tabulated {
                taps,
                dx,
                first_offset,
            } => TabulatedKernel::new(*dx, *first_offset, taps.clone()).map(Kernel::Tabulated),
        }
    }
}

fn default_fraction() -> f64 {
    0.999
}

/// Thresholds used by the run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryOptions {
    /// Density above which a cell counts as occupied. Defaults to 1% of
    /// each class's initial maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_threshold: Option<f64>,
    /// Position `x*` for clearance times; none disables them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearance_marker: Option<f64>,
    #[serde(default = "default_fraction")]
    pub clearance_fraction: f64,
    /// Extra sampling interval for the summary, on top of the snapshots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor_interval: Option<f64>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            support_threshold: None,
            clearance_marker: None,
            clearance_fraction: default_fraction(),
            monitor_interval: None,
        }
    }
}

/// Settings of the Lagrangian solver that a document may override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagrangianOptions {
    pub courant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
    pub substeps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub subinterval: f64,
    pub reconstruction: Reconstruction,
    pub representation: Representation,
}

impl Default for LagrangianOptions {
    fn default() -> Self {
        let c = LagrangianConfig::new(1.0, vec![]);
        Self {
            courant: c.courant,
            time_step: c.time_step,
            substeps: c.substeps,
            tol: c.tol,
            max_iter: c.max_iter,
            subinterval: c.subinterval,
            reconstruction: c.reconstruction,
            representation: c.representation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: [f64; 2],
    pub n_cells: usize,
    pub t_start: f64,
    pub t_final: f64,
    pub snapshots: Vec<f64>,
    pub classes: Vec<ClassSpec>,
    pub kernels: Vec<Vec<KernelDoc>>,
    pub solver: SolverKind,
    pub cfl_safety: f64,
    pub engine: ConvolutionEngine,
    /// Seed for randomized experiments built on this scenario.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub summary: SummaryOptions,
    pub lagrangian: LagrangianOptions,
}

const TOP_KEYS: [&str; 14] = [
    "name",
    "domain",
    "n_cells",
    "t_start",
    "t_final",
    "snapshots",
    "classes",
    "kernels",
    "solver",
    "cfl_safety",
    "engine",
    "seed",
    "summary",
    "lagrangian",
];

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[derive(Default)]
struct Walker {
    out: Vec<ConfigViolation>,
}

impl Walker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.out.push(ConfigViolation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn object<'v>(
        &mut self,
        v: &'v Value,
        path: &str,
        allowed: &[&str],
    ) -> Option<&'v Map<String, Value>> {
        let Some(obj) = v.as_object() else {
            self.push(path, "expected an object");
            return None;
        };
        for key in obj.keys().filter(|k| !allowed.contains(&k.as_str())) {
            self.push(join(path, key), "unknown key");
        }
        Some(obj)
    }

    fn required<'v>(
        &mut self,
        obj: &'v Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Option<&'v Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.push(join(path, key), "missing required key");
        }
        v
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.push(path, format!("expected a finite number, got {v}"));
                None
            }
        }
    }

    fn count(&mut self, v: &Value, path: &str) -> Option<u64> {
        let n = v.as_u64();
        if n.is_none() {
            self.push(path, format!("expected a non-negative integer, got {v}"));
        }
        n
    }

    fn numbers(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.push(path, "expected an array of numbers");
            return None;
        };
        let values: Vec<Option<f64>> = items
            .iter()
            .enumerate()
            .map(|(k, x)| self.number(x, &format!("{path}[{k}]")))
            .collect();
        values.into_iter().collect()
    }

    fn typed<T: for<'de> Deserialize<'de>>(&mut self, v: &Value, path: &str) -> Option<T> {
        match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn kernel(&mut self, v: &Value, path: &str) -> Option<KernelDoc> {
        let obj = v.as_object();
        if obj.is_some_and(|o| o.contains_key("taps")) {
            let obj = self.object(v, path, &["taps", "dx", "first_offset"])?;
            let taps = self
                .required(obj, path, "taps")
                .and_then(|t| self.numbers(t, &join(path, "taps")));
            let dx = self
                .required(obj, path, "dx")
                .and_then(|t| self.number(t, &join(path, "dx")));
            let first_offset = match obj.get("first_offset") {
                None => Some(0),
                Some(t) => {
                    let o = t.as_i64();
                    if o.is_none() {
                        self.push(
                            join(path, "first_offset"),
                            format!("expected an integer, got {t}"),
                        );
                    }
                    o
                }
            };
            Some(KernelDoc::Tabulated {
                taps: taps?,
                dx: dx?,
                first_offset: first_offset?,
            })
        } else {
            let obj = self.object(v, path, &["f", "b"])?;
            let f = self
                .required(obj, path, "f")
                .and_then(|t| self.number(t, &join(path, "f")));
            let b = self
                .required(obj, path, "b")
                .and_then(|t| self.number(t, &join(path, "b")));
            Some(KernelDoc::Bump { f: f?, b: b? })
        }
    }
}

/// Parse and validate a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let value: Value = serde_json::from_str(text)?;
    from_value(&value)
}

/// Validate a parsed JSON value, collecting every violation.
pub fn from_value(doc: &Value) -> Result<ScenarioConfig> {
    let mut w = Walker::default();
    let Some(obj) = w.object(doc, "", &TOP_KEYS) else {
        return Err(Error::Config(w.out));
    };

    let name = match obj.get("name") {
        None => Some(None),
        Some(Value::String(s)) => Some(Some(s.clone())),
        Some(v) => {
            w.push("name", format!("expected a string, got {v}"));
            None
        }
    };
    let domain = w.required(obj, "", "domain").and_then(|v| {
        let d = w.numbers(v, "domain")?;
        if d.len() != 2 {
            w.push(
                "domain",
                format!("expected [x_lo, x_hi], got {} numbers", d.len()),
            );
            return None;
        }
        Some([d[0], d[1]])
    });
    let n_cells = w
        .required(obj, "", "n_cells")
        .and_then(|v| w.count(v, "n_cells"))
        .map(|n| n as usize);
    let t_start = match obj.get("t_start") {
        None => Some(0.0),
        Some(v) => w.number(v, "t_start"),
    };
    let t_final = w
        .required(obj, "", "t_final")
        .and_then(|v| w.number(v, "t_final"));
    let snapshots = w
        .required(obj, "", "snapshots")
        .and_then(|v| w.numbers(v, "snapshots"));

    let classes = w.required(obj, "", "classes").and_then(|v| {
        let Some(items) = v.as_array() else {
            w.push("classes", "expected an array");
            return None;
        };
        let parsed: Vec<Option<ClassSpec>> = items
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let path = format!("classes[{i}]");
                let o = w.object(c, &path, &["speed_law", "initial"])?;
                let law = w
                    .required(o, &path, "speed_law")
                    .and_then(|l| w.typed::<SpeedLawSpec>(l, &join(&path, "speed_law")));
                let initial = w
                    .required(o, &path, "initial")
                    .and_then(|l| w.typed::<InitialDatum>(l, &join(&path, "initial")));
                Some(ClassSpec {
                    speed_law: law?,
                    initial: initial?,
                })
            })
            .collect();
        parsed.into_iter().collect::<Option<Vec<_>>>()
    });

    let kernels = w.required(obj, "", "kernels").and_then(|v| {
        let Some(rows) = v.as_array() else {
            w.push("kernels", "expected an array of rows");
            return None;
        };
        let parsed: Vec<Option<Vec<KernelDoc>>> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let path = format!("kernels[{i}]");
                let Some(entries) = row.as_array() else {
                    w.push(path, "expected an array of kernels");
                    return None;
                };
                let row: Vec<Option<KernelDoc>> = entries
                    .iter()
                    .enumerate()
                    .map(|(j, e)| w.kernel(e, &format!("{path}[{j}]")))
                    .collect();
                row.into_iter().collect()
            })
            .collect();
        parsed.into_iter().collect::<Option<Vec<_>>>()
    });

    let solver = w.required(obj, "", "solver").and_then(|v| {
        let kind = v.as_str().and_then(SolverKind::from_name);
        if kind.is_none() {
            w.push(
                "solver",
                format!("expected one of fv-nonlocal, fv-local-lwr, lagrangian, got {v}"),
            );
        }
        kind
    });
    let cfl_safety = match obj.get("cfl_safety") {
        None => Some(DEFAULT_CFL_SAFETY),
        Some(v) => w.number(v, "cfl_safety"),
    };
    let engine = match obj.get("engine") {
        None => Some(ConvolutionEngine::Auto),
        Some(v) => w.typed(v, "engine"),
    };
    let seed = match obj.get("seed") {
        None => Some(None),
        Some(v) => w.count(v, "seed").map(Some),
    };
    let summary = match obj.get("summary") {
        None => Some(SummaryOptions::default()),
        Some(v) => w.typed(v, "summary"),
    };
    let lagrangian = match obj.get("lagrangian") {
        None => Some(LagrangianOptions::default()),
        Some(v) => w.typed(v, "lagrangian"),
    };

    let parts = (|| {
        Some(ScenarioConfig {
            name: name?,
            domain: domain?,
            n_cells: n_cells?,
            t_start: t_start?,
            t_final: t_final?,
            snapshots: snapshots?,
            classes: classes?,
            kernels: kernels?,
            solver: solver?,
            cfl_safety: cfl_safety?,
            engine: engine?,
            seed: seed?,
            summary: summary?,
            lagrangian: lagrangian?,
        })
    })();
    match parts {
        Some(config) if w.out.is_empty() => {
            let violations = config.violations();
            if violations.is_empty() {
                Ok(config)
            } else {
                Err(Error::Config(violations))
            }
        }
        _ => Err(Error::Config(w.out)),
    }
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario configs always serialize")
    }

    /// Every semantic problem of an otherwise well-formed config.
    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut w = Walker::default();
        let [lo, hi] = self.domain;
        let grid = match Grid1D::new(lo, hi, self.n_cells) {
            Ok(g) => Some(g),
            Err(e) => {
                w.push("domain", e.to_string());
                None
            }
        };
        if !(self.t_final > self.t_start) {
            w.push("t_final", format!("must exceed t_start = {}", self.t_start));
        }
        if self.snapshots.is_empty() {
            w.push("snapshots", "at least one snapshot time is required");
        }
        for (k, &t) in self.snapshots.iter().enumerate() {
            if t < self.t_start || t > self.t_final {
                w.push(
                    format!("snapshots[{k}]"),
                    format!("{t} outside [{}, {}]", self.t_start, self.t_final),
                );
            }
            if k > 0 && t <= self.snapshots[k - 1] {
                w.push(
                    format!("snapshots[{k}]"),
                    "snapshot times must increase strictly",
                );
            }
        }

        let n = self.classes.len();
        if n == 0 {
            w.push("classes", "at least one class is required");
        }
        for (i, c) in self.classes.iter().enumerate() {
            if let Err(e) = c.speed_law.validate() {
                w.push(format!("classes[{i}].speed_law"), e.to_string());
            }
            let path = format!("classes[{i}].initial");
            match &c.initial {
                InitialDatum::Blocks { blocks } => {
                    for (k, b) in blocks.iter().enumerate() {
                        if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                            w.push(format!("{path}.blocks[{k}]"), "need finite lo < hi");
                        }
                        if !(b.value.is_finite() && b.value >= 0.0) {
                            w.push(
                                format!("{path}.blocks[{k}].value"),
                                "densities must be non-negative",
                            );
                        }
                    }
                }
                InitialDatum::Comb { teeth } => {
                    if let Some(g) = &grid {
                        if let Err(e) = comb_profile(*teeth, g) {
                            w.push(path, e.to_string());
                        }
                    }
                }
                InitialDatum::Zero => {}
            }
        }

        if self.kernels.len() != n {
            w.push(
                "kernels",
                format!("{} rows for {n} classes", self.kernels.len()),
            );
        }
        for (i, row) in self.kernels.iter().enumerate() {
            if row.len() != n {
                w.push(
                    format!("kernels[{i}]"),
                    format!("{} entries for {n} classes", row.len()),
                );
            }
            for (j, doc) in row.iter().enumerate() {
                let path = format!("kernels[{i}][{j}]");
                match doc.build() {
                    Err(e) => w.push(path, e.to_string()),
                    Ok(k) => {
                        if let (Some(g), SolverKind::FvNonlocal | SolverKind::Lagrangian) =
                            (&grid, self.solver)
                        {
                            if let Err(e) = k.discretize(g) {
                                w.push(path, e.to_string());
                            }
                        }
                    }
                }
            }
        }

        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            w.push(
                "cfl_safety",
                format!("must lie in (0, 1], got {}", self.cfl_safety),
            );
        }
        let s = &self.summary;
        if s.support_threshold
            .is_some_and(|t| !(t.is_finite() && t > 0.0))
        {
            w.push("summary.support_threshold", "must be positive");
        }
        if s.clearance_marker.is_some_and(|x| !(x >= lo && x <= hi)) {
            w.push(
                "summary.clearance_marker",
                format!("must lie in [{lo}, {hi}]"),
            );
        }
        if !(s.clearance_fraction > 0.0 && s.clearance_fraction <= 1.0) {
            w.push("summary.clearance_fraction", "must lie in (0, 1]");
        }
        if s.monitor_interval
            .is_some_and(|d| !(d.is_finite() && d > 0.0))
        {
            w.push("summary.monitor_interval", "must be positive");
        }
        if let Err(e) = self.lagrangian_config().validate() {
            w.push("lagrangian", e.to_string());
        }
        w.out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.domain[0], self.domain[1], self.n_cells)
    }

    pub fn kernel_matrix(&self) -> Result<KernelMatrix> {
        let rows = self
            .kernels
            .iter()
            .map(|row| row.iter().map(KernelDoc::build).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        KernelMatrix::new(rows)
    }

    pub fn speed_laws(&self) -> Vec<SpeedLawSpec> {
        self.classes.iter().map(|c| c.speed_law.clone()).collect()
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_specs(self.grid()?, &self.speed_laws(), self.kernel_matrix()?)
    }

    pub fn initial_field(&self) -> Result<DensityField> {
        let grid = self.grid()?;
        let classes = self
            .classes
            .iter()
            .map(|c| c.initial.cell_averages(&grid))
            .collect::<Result<Vec<_>>>()?;
        DensityField::from_classes(classes)
    }

    /// Snapshot times merged with the monitoring times of the summary.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut times = self.snapshots.clone();
        times.push(self.t_start);
        if let Some(d) = self.summary.monitor_interval {
            let n = ((self.t_final - self.t_start) / d + 1e-9).floor() as usize;
            times.extend((0..=n).map(|k| self.t_start + k as f64 * d));
        }
        times.retain(|t| *t >= self.t_start && *t <= self.t_final);
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        times
    }

    pub fn fv_config(&self) -> FvConfig {
        let mode = match self.solver {
            SolverKind::FvLocalLwr => FvMode::LocalLwr,
            _ => FvMode::Nonlocal,
        };
        FvConfig {
            cfl_safety: self.cfl_safety,
            mode,
            t_start: self.t_start,
            t_final: self.t_final,
            snapshot_times: self.sample_times(),
            engine: self.engine,
            fixed_dt: None,
        }
    }

    pub fn lagrangian_config(&self) -> LagrangianConfig {
        let o = &self.lagrangian;
        LagrangianConfig {
            t_start: self.t_start,
            t_final: self.t_final,
            snapshot_times: self.sample_times(),
            courant: o.courant,
            time_step: o.time_step,
            substeps: o.substeps,
            tol: o.tol,
            max_iter: o.max_iter,
            subinterval: o.subinterval,
            reconstruction: o.reconstruction,
            representation: o.representation,
            engine: self.engine,
        }
    }

    pub fn with_cells(mut self, n_cells: usize) -> Self {
        self.n_cells = n_cells;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_t_final(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self.snapshots.retain(|t| *t <= t_final);
        if self.snapshots.last() != Some(&t_final) {
            self.snapshots.push(t_final);
        }
        self
    }
}
