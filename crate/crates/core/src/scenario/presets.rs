//! Built-in scenarios: look-ahead horizons, overtaking, and a bottleneck
//! with its local LWR counterpart.

use crate::error::{Error, Result};
use crate::kernels::convolution::ConvolutionEngine;
use crate::mesh::DEFAULT_CFL_SAFETY;
use crate::scenario::config::{
    ClassSpec, ConfigViolation, InitialDatum, KernelDoc, LagrangianOptions, ScenarioConfig,
    SolverKind, SummaryOptions,
};
use crate::speed_laws::SpeedLawSpec;

pub const PRESETS: [&str; 4] = ["horizon", "overtake", "bottleneck", "bottleneck-lwr"];

/// Default resolution of the presets.
pub const DESK_CELLS: usize = 2000;
/// Fine resolution.
pub const FINE_CELLS: usize = 10000;

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "horizon" => "two classes on [0, 10] with forward horizons 1.5 and 0.3",
        "overtake" => "three classes on [0, 100] with maximal speeds 1.5, 0.9, 0.5",
        "bottleneck" => "one class on [0, 20] through a slowdown on [5, 10], nonlocal",
        "bottleneck-lwr" => "the bottleneck scenario with the local LWR flux",
        _ => return None,
    })
}

fn bump(f: f64) -> KernelDoc {
    KernelDoc::Bump { f, b: 0.01 }
}

fn base(name: &str, domain: [f64; 2], t_final: f64, snapshots: Vec<f64>) -> ScenarioConfig {
    ScenarioConfig {
        name: Some(name.into()),
        domain,
        n_cells: DESK_CELLS,
        t_start: 0.0,
        t_final,
        snapshots,
        classes: Vec::new(),
        kernels: Vec::new(),
        solver: SolverKind::FvNonlocal,
        cfl_safety: DEFAULT_CFL_SAFETY,
        engine: ConvolutionEngine::Auto,
        seed: None,
        summary: SummaryOptions::default(),
        lagrangian: LagrangianOptions::default(),
    }
}

fn horizon() -> ScenarioConfig {
    let mut c = base("horizon", [0.0, 10.0], 6.4, vec![0.0, 0.9, 3.3, 6.4]);
    let class = ClassSpec {
        speed_law: SpeedLawSpec::cubic(1.0),
        initial: InitialDatum::block(0.0, 2.0, 0.5),
    };
    c.classes = vec![class.clone(), class];
    c.kernels = vec![vec![bump(1.5), bump(1.5)], vec![bump(0.3), bump(0.3)]];
    c
}

fn overtake() -> ScenarioConfig {
    let mut c = base("overtake", [0.0, 100.0], 80.9, vec![0.0, 7.0, 28.7, 80.9]);
    c.classes = [(1.5, 1.0), (0.9, 8.0), (0.5, 15.0)]
        .into_iter()
        .map(|(v, lo)| ClassSpec {
            speed_law: SpeedLawSpec::cubic(v),
            initial: InitialDatum::block(lo, lo + 4.0, 0.3),
        })
        .collect();
    c.kernels = vec![vec![bump(1.0); 3]; 3];
    c
}

fn bottleneck(solver: SolverKind) -> ScenarioConfig {
    let name = if solver == SolverKind::FvLocalLwr {
        "bottleneck-lwr"
    } else {
        "bottleneck"
    };
    let mut c = base(name, [0.0, 20.0], 60.0, vec![0.0, 4.0, 37.5, 43.3, 60.0]);
    c.classes = vec![ClassSpec {
        speed_law: SpeedLawSpec::bottleneck(),
        initial: InitialDatum::block(1.0, 3.0, 0.8),
    }];
    c.kernels = vec![vec![bump(1.0)]];
    c.solver = solver;
    c.summary.clearance_marker = Some(10.0);
    c.summary.monitor_interval = Some(0.1);
    c
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "horizon" => Ok(horizon()),
        "overtake" => Ok(overtake()),
        "bottleneck" => Ok(bottleneck(SolverKind::FvNonlocal)),
        "bottleneck-lwr" => Ok(bottleneck(SolverKind::FvLocalLwr)),
        _ => Err(Error::Config(vec![ConfigViolation {
            path: "preset".into(),
            message: format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")),
        }])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::l1_norm;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in PRESETS {
            for cells in [DESK_CELLS, FINE_CELLS] {
                let c = preset(name).unwrap().with_cells(cells);
                assert_eq!(c.violations(), vec![], "{name}");
                assert_eq!(
                    crate::scenario::config::parse_config(&c.to_json()).unwrap(),
                    c
                );
                let model = c.model().unwrap();
                assert_eq!(model.n_classes(), c.initial_field().unwrap().n_classes());
            }
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn horizon_parameters() {
        let c = preset("horizon").unwrap();
        assert_eq!(c.domain, [0.0, 10.0]);
        assert_eq!(c.with_cells(FINE_CELLS).n_cells, 10000);
        let k = preset("horizon").unwrap().kernel_matrix().unwrap();
        assert_eq!(k.get(0, 1).support(), (-1.5, 0.01));
        assert_eq!(k.get(1, 0).support(), (-0.3, 0.01));
        let c = preset("horizon").unwrap();
        let m = l1_norm(&c.initial_field().unwrap(), &c.grid().unwrap()).unwrap();
        assert!(m.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn overtake_parameters() {
        let c = preset("overtake").unwrap();
        let rho = c.initial_field().unwrap();
        let grid = c.grid().unwrap();
        for (i, lo) in [1.0, 8.0, 15.0].into_iter().enumerate() {
            let k = ((lo + 2.0) / grid.dx()) as usize;
            assert_eq!(rho.class(i)[k], 0.3);
            assert_eq!(rho.class((i + 1) % 3)[k], 0.0);
        }
        let v: Vec<f64> = c
            .speed_laws()
            .iter()
            .map(crate::SpeedLaw::max_speed)
            .collect();
        assert_eq!(v, vec![1.5, 0.9, 0.5]);
    }

    #[test]
    fn bottleneck_twins_differ_only_in_solver() {
        let mut a = preset("bottleneck").unwrap();
        let b = preset("bottleneck-lwr").unwrap();
        assert_eq!(b.solver, SolverKind::FvLocalLwr);
        a.solver = b.solver;
        a.name = b.name.clone();
        assert_eq!(a, b);
    }
}
