//! Built-in experiment presets for the four benchmark systems: the skewed
//! triangle, the two-loop graph, the 64-node hypercube, and the 25x25
//! Gaussian-mixture lattice.

use crate::config::{
    build_system, ExperimentConfig, GraphSpec, Mode, SchedulePiece, ScheduleSpec, TargetSpec,
};
use crate::error::{AmcmcError, Result};
use crate::spectral::{alpha_star, optimal_damping, q_spectrum};

pub const NAMES: &[&str] = &[
    "c3-chi",
    "two-loop-logfisher",
    "hypercube-logfisher",
    "lattice-logfisher",
    "lattice-logfisher-reduced",
];

/// Unnormalized two-loop target: high mass on the two triangles, low mass on
/// the bridge.
pub fn two_loop_weights() -> Vec<f64> {
    vec![
        4.0 / 27.0,
        4.0 / 27.0,
        4.0 / 27.0,
        1.0 / 18.0,
        1.0 / 18.0,
        4.0 / 27.0,
        4.0 / 27.0,
        4.0 / 27.0,
    ]
}

/// Critical damping `2 sqrt(|alpha_star|)` computed from the system the
/// specs describe.
fn critical_damping(graph: &GraphSpec, target: &TargetSpec) -> Result<f64> {
    let sys = build_system(graph, target)?;
    let spectrum = q_spectrum(&sys.rate, &sys.target)?;
    optimal_damping(alpha_star(&spectrum)?)
}

/// Resolves a preset name to its full configuration.
pub fn get(name: &str) -> Result<ExperimentConfig> {
    match name {
        // Skewed triangle, chi-squared vs the baseline, critically damped.
        "c3-chi" => {
            let graph = GraphSpec::Cycle { n: 3 };
            let target = TargetSpec::Explicit {
                weights: vec![0.9913, 0.0044, 0.0043],
            };
            let d = critical_damping(&graph, &target)?;
            Ok(ExperimentConfig {
                graph,
                target,
                method: "chi_squared".into(),
                mode: Mode::Both,
                dt: 0.1,
                iterations: 650,
                particles: 1_000_000,
                warm_start: 0,
                schedule: ScheduleSpec::Constant { value: d },
                seed: 0,
            })
        }
        // Two triangles bridged by two low-mass nodes; piecewise damping.
        "two-loop-logfisher" => Ok(ExperimentConfig {
            graph: GraphSpec::TwoLoop {
                loop_a: 3,
                loop_b: 3,
                bridge_len: 2,
            },
            target: TargetSpec::Explicit {
                weights: two_loop_weights(),
            },
            method: "log_fisher".into(),
            mode: Mode::Both,
            dt: 0.1,
            iterations: 1000,
            particles: 10_000,
            warm_start: 0,
            schedule: ScheduleSpec::Piecewise {
                pieces: vec![SchedulePiece {
                    until: 3.0,
                    schedule: ScheduleSpec::Constant { value: 0.5 },
                }],
                tail: Box::new(ScheduleSpec::NesterovFloor {
                    numerator: 3.0,
                    offset: 2.0,
                    floor: 0.6,
                }),
            },
            seed: 0,
        }),
        // Mass 16 at two antipodal vertices, 1 elsewhere; restarted Nesterov
        // damping seeded by the spectral gap.
        "hypercube-logfisher" => {
            let graph = GraphSpec::Hypercube { d: 6 };
            let mut weights = vec![1.0; 64];
            weights[0] = 16.0;
            weights[63] = 16.0;
            let target = TargetSpec::Explicit { weights };
            let numerator = critical_damping(&graph, &target)?;
            Ok(ExperimentConfig {
                graph,
                target,
                method: "log_fisher".into(),
                mode: Mode::Jump,
                dt: 0.01,
                iterations: 6000,
                particles: 10_000,
                warm_start: 100,
                schedule: ScheduleSpec::NesterovFloor {
                    numerator,
                    offset: 0.0,
                    floor: 0.17,
                },
                seed: 0,
            })
        }
        // Full-scale two-Gaussian lattice run.
        "lattice-logfisher" => Ok(ExperimentConfig {
            graph: GraphSpec::Lattice { rows: 25, cols: 25 },
            target: lattice_target(),
            method: "log_fisher".into(),
            mode: Mode::Jump,
            dt: 0.01,
            iterations: 150_000,
            particles: 500_000,
            warm_start: 2999,
            schedule: ScheduleSpec::Constant { value: 0.0065 },
            seed: 0,
        }),
        // Same system at desk scale.
        "lattice-logfisher-reduced" => Ok(ExperimentConfig {
            graph: GraphSpec::Lattice { rows: 25, cols: 25 },
            target: lattice_target(),
            method: "log_fisher".into(),
            mode: Mode::Both,
            dt: 0.01,
            iterations: 10_000,
            particles: 10_000,
            warm_start: 200,
            schedule: ScheduleSpec::Constant { value: 0.0065 },
            seed: 0,
        }),
        other => Err(AmcmcError::InvalidArgument(format!(
            "unknown preset '{other}' (available: {})",
            NAMES.join(", ")
        ))),
    }
}

fn lattice_target() -> TargetSpec {
    TargetSpec::GaussianMixture {
        rows: 25,
        cols: 25,
        centers: [[0.25, 0.25], [0.75, 0.75]],
        scales: [10.0, 40.0],
    }
}
