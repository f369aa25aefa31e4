//! Checks of the qualitative properties of the solution operator: the total
//! variation bound driven by the growth rate `Q`, Lipschitz dependence on the
//! data measured as scaling laws, and the comb datum for which the time
//! Lipschitz estimate is sharp.

pub mod suite;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, KernelNorms};
use crate::mesh::{
    block_averages, cfl_timestep, l1_distance_total, l1_norm, tv_profile, DensityField,
    DensityTrajectory, Grid1D,
};
use crate::scenario::config::{Block, InitialDatum, KernelDoc, ScenarioConfig, SolverKind};
use crate::scenario::run::solve;
use crate::speed_laws::{validate_assumption_v, AssumptionReport, SpeedLaw, ValidationLattice};

/// Cell averages of the comb `sum_{i=1}^m chi_[i/m, i/m + 1/(2m)]`.
///
/// Every tooth edge must fall on a cell edge and every tooth must span at
/// least four cells.
pub fn comb_profile(m: usize, grid: &Grid1D) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "a comb needs at least one tooth".into(),
        ));
    }
    let width = 0.5 / m as f64;
    let dx = grid.dx();
    if width < 4.0 * dx * (1.0 - 1e-9) {
        return Err(Error::InvalidConfig(format!(
            "comb with {m} teeth needs dx <= {}, got {dx}",
            width / 4.0
        )));
    }
    let (first, last) = (1.0 / m as f64, 1.0 + width);
    if first < grid.x_lo() || last > grid.x_hi() {
        return Err(Error::InvalidConfig(format!(
            "comb occupies [{first}, {last}], outside the domain [{}, {}]",
            grid.x_lo(),
            grid.x_hi()
        )));
    }
    let mut out = vec![0.0; grid.n_cells()];
    for i in 1..=m {
        let lo = i as f64 / m as f64;
        for e in [lo, lo + width] {
            let s = (e - grid.x_lo()) / dx;
            if (s - s.round()).abs() > 1e-9 * s.abs().max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "comb edge {e} does not fall on a cell edge (dx = {dx})"
                )));
            }
        }
        for (o, v) in out
            .iter_mut()
            .zip(block_averages(grid, lo, lo + width, 1.0))
        {
            *o += v;
        }
    }
    Ok(out)
}

pub fn comb_initial_datum(m: usize, grid: &Grid1D) -> Result<DensityField> {
    DensityField::from_classes(vec![comb_profile(m, grid)?])
}

/// Inputs and value of the total variation growth rate
/// `Q = (3 + M|eta| + 3M|eta'| + M^2|eta'|^2 + M|eta''|) |v|`.
#[derive(Clone, Debug, PartialEq)]
pub struct QEstimate {
    /// Total initial mass, summed over classes.
    pub mass: f64,
    /// Sup over all kernel pairs of each kernel norm.
    pub eta: KernelNorms,
    /// Sampled bounds of each class's speed law on the reachable range.
    pub laws: Vec<AssumptionReport>,
    /// Largest of the law norms.
    pub v_norm: f64,
    pub q: f64,
}

pub fn q_formula(mass: f64, eta: &KernelNorms, v_norm: f64) -> f64 {
    let m = mass;
    (3.0 + m * eta.sup + 3.0 * m * eta.sup_dx + m * m * eta.sup_dx * eta.sup_dx + m * eta.sup_dxx)
        * v_norm
}

/// `Q` for a datum, kernels and laws. The law norms are sampled over the
/// domain and over `q` in `[0, M |eta|]`, the range convolutions can reach.
pub fn estimate_q(
    initial: &DensityField,
    grid: &Grid1D,
    kernels: &KernelMatrix,
    laws: &[&dyn SpeedLaw],
) -> Result<QEstimate> {
    let n = initial.n_classes();
    if laws.len() != n || kernels.n() != n {
        return Err(Error::InvalidConfig(format!(
            "{n} classes but {} speed laws and a {}x{} kernel matrix",
            laws.len(),
            kernels.n(),
            kernels.n()
        )));
    }
    let mass: f64 = l1_norm(initial, grid)?.iter().sum();
    let eta = kernels.norms();
    let lattice = ValidationLattice::new(n, (grid.x_lo(), grid.x_hi()), (0.0, mass * eta.sup));
    let reports = laws
        .iter()
        .map(|l| validate_assumption_v(*l, &lattice))
        .collect::<Result<Vec<_>>>()?;
    let v_norm = reports
        .iter()
        .map(AssumptionReport::norm)
        .fold(0.0, f64::max);
    Ok(QEstimate {
        mass,
        q: q_formula(mass, &eta, v_norm),
        eta,
        laws: reports,
        v_norm,
    })
}

pub fn estimate_q_for(config: &ScenarioConfig) -> Result<QEstimate> {
    let laws = config.speed_laws();
    let refs: Vec<&dyn SpeedLaw> = laws.iter().map(|l| l as &dyn SpeedLaw).collect();
    estimate_q(
        &config.initial_field()?,
        &config.grid()?,
        &config.kernel_matrix()?,
        &refs,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvCheck {
    pub t: f64,
    /// Total variation summed over classes.
    pub tv: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compare `TV(rho(t))` with `(TV(rho_o) + Q t M) e^{Q t}` at every sample,
/// with `t` measured from the first sample.
pub fn check_tv_bound(traj: &DensityTrajectory, q: &QEstimate) -> Vec<TvCheck> {
    let tv = |f: &DensityField| f.classes().iter().map(|c| tv_profile(c)).sum::<f64>();
    let Some(first) = traj.fields().first() else {
        return Vec::new();
    };
    let (t0, tv0) = (traj.times()[0], tv(first));
    traj.iter()
        .map(|(t, f)| {
            let s = t - t0;
            let growth = if q.q * s == 0.0 { 1.0 } else { (q.q * s).exp() };
            let bound = (tv0 + q.q * s * q.mass) * growth;
            let tv = tv(f);
            TvCheck {
                t,
                tv,
                bound,
                holds: tv <= bound,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// `rho_o + eps chi_B` in every class.
    InitialData,
    /// Every speed scale multiplied by `1 + eps`.
    SpeedLaw,
    /// Every forward horizon multiplied by `1 + eps`.
    Kernel,
    /// `rho(t + eps)` against `rho(t)` on the base run.
    Time,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::InitialData => "initial-data",
            PerturbationKind::SpeedLaw => "speed-law",
            PerturbationKind::Kernel => "kernel",
            PerturbationKind::Time => "time",
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub kind: PerturbationKind,
    pub epsilons: Vec<f64>,
    pub probe_times: Vec<f64>,
    /// `distances[e][p]`: L1 distance for `epsilons[e]` at `probe_times[p]`.
    pub distances: Vec<Vec<f64>>,
    /// `distance / eps`, not defined for `eps = 0`.
    pub ratios: Vec<Vec<Option<f64>>>,
    /// Per probe: largest over smallest ratio across the non-zero epsilons.
    pub spread: Vec<f64>,
    pub linear: bool,
    /// `(t, 2t - t_o, d(2t - t_o) / d(t))` at the largest epsilon, for
    /// speed-law experiments.
    pub growth: Vec<(f64, f64, f64)>,
    pub growth_ok: Option<bool>,
    /// The base config followed by each perturbed one, as documents.
    pub configs: Vec<String>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.linear && self.growth_ok.unwrap_or(true)
    }
}

/// The block perturbed by initial-data experiments: the first block of the
/// first class, or the middle quarter of the domain.
fn perturbation_block(base: &ScenarioConfig) -> (f64, f64) {
    if let Some(c) = base.classes.first() {
        if let InitialDatum::Blocks { blocks } = &c.initial {
            if let Some(b) = blocks.first() {
                return (b.lo, b.hi);
            }
        }
    }
    let [lo, hi] = base.domain;
    let l = hi - lo;
    (lo + 0.375 * l, lo + 0.625 * l)
}

pub fn perturb(base: &ScenarioConfig, kind: PerturbationKind, eps: f64) -> Result<ScenarioConfig> {
    let mut c = base.clone();
    match kind {
        PerturbationKind::InitialData => {
            let (lo, hi) = perturbation_block(base);
            for class in &mut c.classes {
                let extra = Block { lo, hi, value: eps };
                match &mut class.initial {
                    InitialDatum::Blocks { blocks } => blocks.push(extra),
                    InitialDatum::Zero => {
                        class.initial = InitialDatum::Blocks {
                            blocks: vec![extra],
                        }
                    }
                    InitialDatum::Comb { .. } => {
                        return Err(Error::InvalidConfig(
                            "comb data cannot take a block perturbation".into(),
                        ))
                    }
                }
            }
        }
        PerturbationKind::SpeedLaw => {
            for class in &mut c.classes {
                class.speed_law = class.speed_law.scaled(1.0 + eps);
            }
        }
        PerturbationKind::Kernel => {
            for entry in c.kernels.iter_mut().flatten() {
                match entry {
                    KernelDoc::Bump { f, .. } => *f *= 1.0 + eps,
                    KernelDoc::Tabulated { .. } => {
                        return Err(Error::InvalidConfig(
                            "tabulated kernels have no forward horizon to scale".into(),
                        ))
                    }
                }
            }
        }
        PerturbationKind::Time => {}
    }
    Ok(c)
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    let mut nonzero: Vec<f64> = epsilons.iter().copied().filter(|e| *e != 0.0).collect();
    if epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidConfig(
            "perturbation sizes must be finite and non-negative".into(),
        ));
    }
    nonzero.sort_by(f64::total_cmp);
    let geometric = nonzero.len() >= 3
        && nonzero
            .windows(3)
            .all(|w| ((w[2] / w[1]) / (w[1] / w[0]) - 1.0).abs() < 1e-6);
    if !geometric {
        return Err(Error::InvalidConfig(format!(
            "need at least three non-zero perturbation sizes in geometric progression, got {epsilons:?}"
        )));
    }
    Ok(())
}

/// Run `base` and its perturbations with a shared time step and compare
/// them at the probe times (the snapshots after `t_start`).
pub fn stability_experiment(
    kind: PerturbationKind,
    base: &ScenarioConfig,
    epsilons: &[f64],
) -> Result<StabilityReport> {
    check_epsilons(epsilons)?;
    base.validate()?;
    let (t0, t1) = (base.t_start, base.t_final);
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let mut probes: Vec<f64> = base.snapshots.iter().copied().filter(|t| *t > t0).collect();
    if kind == PerturbationKind::SpeedLaw {
        probes.extend([t0 + 0.25 * (t1 - t0), t0 + 0.5 * (t1 - t0), t1]);
    }
    if kind == PerturbationKind::Time {
        probes.retain(|t| t + eps_max <= t1);
    }
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    if probes.is_empty() {
        return Err(Error::InvalidConfig("no probe time after t_start".into()));
    }

    let mut samples = probes.clone();
    samples.push(t0);
    if kind == PerturbationKind::Time {
        for &e in epsilons {
            samples.extend(probes.iter().map(|t| t + e));
        }
    }
    samples.sort_by(f64::total_cmp);
    samples.dedup();

    let mut configs = vec![base.clone()];
    if kind != PerturbationKind::Time {
        for &e in epsilons {
            configs.push(perturb(base, kind, e)?);
        }
    }
    for c in &mut configs {
        c.snapshots = samples.clone();
        c.summary.monitor_interval = None;
    }
    // one time step for every run so that only the perturbation differs
    let grid = base.grid()?;
    let vmax = configs
        .iter()
        .map(|c| c.model().map(|m| m.max_speed()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let fixed_dt = match base.solver {
        SolverKind::Lagrangian => {
            let dt = base
                .lagrangian
                .time_step
                .unwrap_or(base.lagrangian.courant * grid.dx() / vmax.max(f64::MIN_POSITIVE));
            for c in &mut configs {
                c.lagrangian.time_step = Some(dt);
            }
            None
        }
        _ => Some(cfl_timestep(vmax, grid.dx(), base.cfl_safety)?),
    };

    let runs = configs
        .par_iter()
        .map(|c| solve(c, fixed_dt))
        .collect::<Result<Vec<_>>>()?;

    let at = |traj: &DensityTrajectory, t: f64| -> Result<DensityField> {
        traj.at(t)
            .cloned()
            .ok_or_else(|| Error::InvalidConfig(format!("missing sample at t = {t}")))
    };
    let mut distances = Vec::with_capacity(epsilons.len());
    for (e, &eps) in epsilons.iter().enumerate() {
        let row = probes
            .iter()
            .map(|&t| {
                let (a, b) = match kind {
                    PerturbationKind::Time => {
                        let traj = &runs[0].trajectory;
                        (at(traj, t)?, at(traj, t + eps)?)
                    }
                    _ => (at(&runs[0].trajectory, t)?, at(&runs[e + 1].trajectory, t)?),
                };
                l1_distance_total(&a, &b, &grid)
            })
            .collect::<Result<Vec<_>>>()?;
        distances.push(row);
    }

    let ratios: Vec<Vec<Option<f64>>> = epsilons
        .iter()
        .zip(&distances)
        .map(|(&eps, row)| row.iter().map(|d| (eps > 0.0).then(|| d / eps)).collect())
        .collect();
    let spread: Vec<f64> = (0..probes.len())
        .map(|p| {
            let r: Vec<f64> = ratios.iter().filter_map(|row| row[p]).collect();
            let hi = r.iter().copied().fold(f64::MIN, f64::max);
            let lo = r.iter().copied().fold(f64::MAX, f64::min);
            if hi == 0.0 {
                1.0
            } else {
                hi / lo
            }
        })
        .collect();
    let linear = spread.iter().all(|s| *s <= 2.0);

    let (growth, growth_ok) = if kind == PerturbationKind::SpeedLaw {
        let e = epsilons
            .iter()
            .position(|&x| x == eps_max)
            .expect("non-empty epsilons");
        let mut g = Vec::new();
        for (p, &t) in probes.iter().enumerate() {
            let doubled = 2.0 * t - t0;
            if let Some(q) = probes
                .iter()
                .position(|&s| (s - doubled).abs() <= 1e-9 * (1.0 + s.abs()))
            {
                g.push((t, doubled, distances[e][q] / distances[e][p]));
            }
        }
        let ok = g.iter().all(|x| x.2 <= 3.0);
        (g, Some(ok))
    } else {
        (Vec::new(), None)
    };

    Ok(StabilityReport {
        kind,
        epsilons: epsilons.to_vec(),
        probe_times: probes,
        distances,
        ratios,
        spread,
        linear,
        growth,
        growth_ok,
        configs: configs.iter().map(ScenarioConfig::to_json).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::lagrangian::{constant_field, sigma_solve, Reconstruction, Representation};
    use crate::speed_laws::SpeedLawSpec;

    #[test]
    fn comb_shapes() {
        let grid = Grid1D::new(0.0, 2.0, 64).unwrap();
        let one = comb_profile(1, &grid).unwrap();
        assert_eq!(tv_profile(&one), 2.0);
        assert_eq!(one.iter().sum::<f64>() * grid.dx(), 0.5);
        assert_eq!(one[32], 1.0);
        assert_eq!(one[31], 0.0);
        assert_eq!(one[48], 0.0);
        let four = comb_initial_datum(4, &grid).unwrap();
        assert_eq!(tv_profile(four.class(0)), 8.0);
        assert_eq!(four.class(0).iter().sum::<f64>() * grid.dx(), 0.5);
    }

    #[test]
    fn comb_resolution_is_checked() {
        let coarse = Grid1D::new(0.0, 2.0, 32).unwrap();
        assert!(comb_profile(4, &coarse).is_err());
        let misaligned = Grid1D::new(0.0, 2.0, 100).unwrap();
        assert!(comb_profile(4, &misaligned).is_err());
        let short = Grid1D::new(0.0, 1.0, 64).unwrap();
        assert!(comb_profile(1, &short).is_err());
        assert!(comb_profile(0, &short).is_err());
    }

    #[test]
    fn comb_shift_distance() {
        // shifting by eps < 1/(2m) moves 2m edges by eps each
        let grid = Grid1D::new(0.0, 2.0, 256).unwrap();
        let rho = comb_initial_datum(4, &grid).unwrap();
        let w = constant_field(1, (0.0, 1.0), 1.0);
        let eps = 1.0 / 16.0;
        let sol = sigma_solve(
            &w,
            &grid,
            &rho,
            &[0.0, eps],
            1,
            Reconstruction::PiecewiseConstant,
            Representation::default(),
        )
        .unwrap();
        let d = l1_distance_total(&rho, sol.trajectory.at(eps).unwrap(), &grid).unwrap();
        assert!((d - 8.0 * eps).abs() < 1e-12, "{d}");
    }

    fn q_of(rho: &DensityField, grid: &Grid1D, law: &SpeedLawSpec, kernel: Kernel) -> QEstimate {
        let k = KernelMatrix::uniform(1, kernel).unwrap();
        estimate_q(rho, grid, &k, &[law as &dyn SpeedLaw]).unwrap()
    }

    #[test]
    fn q_without_mass_is_three_v() {
        let grid = Grid1D::new(0.0, 10.0, 100).unwrap();
        let zero = DensityField::zeros(1, 100);
        let law = SpeedLawSpec::cubic(1.0);
        let q = q_of(&zero, &grid, &law, Kernel::bump(1.0, 0.01).unwrap());
        assert_eq!(q.mass, 0.0);
        assert_eq!(q.q, 3.0 * q.v_norm);
        // the lattice collapses to q = 0: |v(., 0)| = 1 and |dv/dq| = 3
        assert_eq!(q.v_norm, 4.0);
    }

    #[test]
    fn q_is_linear_in_a_constant_speed() {
        let grid = Grid1D::new(0.0, 10.0, 100).unwrap();
        let rho = DensityField::from_classes(vec![block_averages(&grid, 2.0, 4.0, 0.5)]).unwrap();
        let k = Kernel::bump(1.0, 1.0).unwrap();
        let a = q_of(&rho, &grid, &SpeedLawSpec::constant(0.5), k.clone());
        let b = q_of(&rho, &grid, &SpeedLawSpec::constant(1.5), k);
        assert_eq!(a.v_norm, 0.5);
        assert!((b.q - 3.0 * a.q).abs() < 1e-12 * b.q);
    }

    #[test]
    fn q_kernel_terms_match_dense_sampling() {
        let c = crate::scenario::preset("horizon").unwrap();
        let q = estimate_q_for(&c).unwrap();
        assert!((q.mass - 2.0).abs() < 1e-12);
        let dense = |k: Kernel| {
            let (lo, hi) = k.support();
            let n = 200_000;
            let inner = [lo + 1e-12, hi - 1e-12];
            let mut sup = [0.0f64; 3];
            for x in (0..=n)
                .map(|j| lo + (hi - lo) * j as f64 / n as f64)
                .chain(inner)
            {
                sup[0] = sup[0].max(k.eval(x).abs());
                sup[1] = sup[1].max(k.eval_dx(x).abs());
                sup[2] = sup[2].max(k.eval_dxx(x).abs());
            }
            sup
        };
        let sup = dense(Kernel::bump(1.5, 0.01).unwrap());
        let sup3 = dense(Kernel::bump(0.3, 0.01).unwrap());
        let expect = [
            sup[0].max(sup3[0]),
            sup[1].max(sup3[1]),
            sup[2].max(sup3[2]),
        ];
        let got = [q.eta.sup, q.eta.sup_dx, q.eta.sup_dxx];
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e).abs() <= 1e-6 * e, "{g} vs {e}");
        }
        let m = q.mass;
        let e = &q.eta;
        let manual =
            (3.0 + m * e.sup + 3.0 * m * e.sup_dx + m * m * e.sup_dx * e.sup_dx + m * e.sup_dxx)
                * q.v_norm;
        assert_eq!(q.q, manual);
    }

    #[test]
    fn tv_bound_on_zero_and_transport() {
        let grid = Grid1D::new(0.0, 10.0, 200).unwrap();
        let w = constant_field(1, (0.0, 2.0), 1.0);
        let zero = DensityField::zeros(1, 200);
        let q = q_of(
            &zero,
            &grid,
            &SpeedLawSpec::constant(1.0),
            Kernel::bump(1.0, 1.0).unwrap(),
        );
        let sol = sigma_solve(
            &w,
            &grid,
            &zero,
            &[0.0, 1.0, 2.0],
            2,
            Reconstruction::default(),
            Representation::default(),
        )
        .unwrap();
        for c in check_tv_bound(&sol.trajectory, &q) {
            assert_eq!((c.tv, c.holds), (0.0, true));
        }
        let rho = DensityField::from_classes(vec![block_averages(&grid, 2.0, 4.0, 0.5)]).unwrap();
        let q = q_of(
            &rho,
            &grid,
            &SpeedLawSpec::constant(1.0),
            Kernel::bump(1.0, 1.0).unwrap(),
        );
        let sol = sigma_solve(
            &w,
            &grid,
            &rho,
            &[0.0, 1.0, 2.0],
            2,
            Reconstruction::PiecewiseConstant,
            Representation::default(),
        )
        .unwrap();
        for c in check_tv_bound(&sol.trajectory, &q) {
            assert!(c.holds && (c.tv - 1.0).abs() < 1e-12, "{c:?}");
            assert!(c.bound.is_finite());
        }
    }

    #[test]
    fn epsilon_lists_are_checked() {
        assert!(check_epsilons(&[1e-2, 1e-3, 1e-4]).is_ok());
        assert!(check_epsilons(&[0.0, 1e-2, 1e-3, 1e-4]).is_ok());
        assert!(check_epsilons(&[1e-2, 1e-3]).is_err());
        assert!(check_epsilons(&[1e-2, 1e-3, 1e-5]).is_err());
        assert!(check_epsilons(&[-1e-2, 1e-3, 1e-4]).is_err());
    }

    #[test]
    fn perturbations_edit_the_config() {
        let base = crate::scenario::preset("horizon").unwrap();
        let p = perturb(&base, PerturbationKind::Kernel, 0.1).unwrap();
        assert_eq!(
            p.kernels[0][0],
            KernelDoc::Bump {
                f: 1.5 * 1.1,
                b: 0.01
            }
        );
        let p = perturb(&base, PerturbationKind::SpeedLaw, 0.1).unwrap();
        assert_eq!(p.classes[1].speed_law, SpeedLawSpec::cubic(1.1));
        let p = perturb(&base, PerturbationKind::InitialData, 0.1).unwrap();
        let rho = p.initial_field().unwrap();
        assert!((rho.class(1)[10] - 0.6).abs() < 1e-15);
        assert_eq!(
            perturb(&base, PerturbationKind::SpeedLaw, 0.0).unwrap(),
            base
        );
    }
}
