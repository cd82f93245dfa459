//! JSON-serializable experiment configuration: graph and target
//! specifications, damping schedules, and full run configs.

use serde::{Deserialize, Serialize};

use crate::dynamics::DampingSchedule;
use crate::error::{AmcmcError, Result};
use crate::geometry::Method;
use crate::graph_model::{
    build_mh_rate_matrix, gaussian_mixture_target, make_cycle, make_hypercube, make_lattice,
    make_two_loop, random_walk_kernel, weight_matrix, RateMatrix, StateGraph, TargetDistribution,
    WeightMatrix,
};

/// Graph constructors by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Cycle { n: usize },
    TwoLoop {
        loop_a: usize,
        loop_b: usize,
        bridge_len: usize,
    },
    Hypercube { d: usize },
    Lattice { rows: usize, cols: usize },
}

impl GraphSpec {
    pub fn build(&self) -> Result<StateGraph> {
        match *self {
            GraphSpec::Cycle { n } => make_cycle(n),
            GraphSpec::TwoLoop {
                loop_a,
                loop_b,
                bridge_len,
            } => make_two_loop(loop_a, loop_b, bridge_len),
            GraphSpec::Hypercube { d } => make_hypercube(d),
            GraphSpec::Lattice { rows, cols } => make_lattice(rows, cols),
        }
    }
}

/// Target distributions; weights may be unnormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Explicit { weights: Vec<f64> },
    GaussianMixture {
        rows: usize,
        cols: usize,
        centers: [[f64; 2]; 2],
        scales: [f64; 2],
    },
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetDistribution> {
        match self {
            TargetSpec::Explicit { weights } => {
                TargetDistribution::from_unnormalized(weights.clone())
            }
            TargetSpec::GaussianMixture {
                rows,
                cols,
                centers,
                scales,
            } => gaussian_mixture_target(
                *rows,
                *cols,
                [
                    (centers[0][0], centers[0][1]),
                    (centers[1][0], centers[1][1]),
                ],
                *scales,
            ),
        }
    }
}

/// Serializable form of [`DampingSchedule`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant { value: f64 },
    NesterovFloor {
        numerator: f64,
        offset: f64,
        floor: f64,
    },
    Piecewise {
        pieces: Vec<SchedulePiece>,
        tail: Box<ScheduleSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePiece {
    /// This piece applies while `t < until`.
    pub until: f64,
    pub schedule: ScheduleSpec,
}

impl ScheduleSpec {
    pub fn build(&self) -> DampingSchedule {
        match self {
            ScheduleSpec::Constant { value } => DampingSchedule::Constant(*value),
            ScheduleSpec::NesterovFloor {
                numerator,
                offset,
                floor,
            } => DampingSchedule::NesterovFloor {
                numerator: *numerator,
                offset: *offset,
                floor: *floor,
            },
            ScheduleSpec::Piecewise { pieces, tail } => DampingSchedule::Piecewise {
                pieces: pieces
                    .iter()
                    .map(|p| (p.until, p.schedule.build()))
                    .collect(),
                tail: Box::new(tail.build()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ode,
    Jump,
    Both,
}

fn default_particles() -> u64 {
    10_000
}

/// A full experiment: which system, which method, which realization, and all
/// run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub target: TargetSpec,
    pub method: String,
    pub mode: Mode,
    pub dt: f64,
    pub iterations: usize,
    #[serde(default = "default_particles")]
    pub particles: u64,
    #[serde(default)]
    pub warm_start: usize,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Graph, target and derived matrices assembled from a config.
#[derive(Debug, Clone)]
pub struct BuiltSystem {
    pub graph: StateGraph,
    pub target: TargetDistribution,
    pub rate: RateMatrix,
    pub omega: WeightMatrix,
}

pub fn build_system(graph: &GraphSpec, target: &TargetSpec) -> Result<BuiltSystem> {
    let graph = graph.build()?;
    let target = target.build()?;
    if target.n() != graph.n() {
        return Err(AmcmcError::InvalidArgument(format!(
            "target has {} states but the graph has {} nodes",
            target.n(),
            graph.n()
        )));
    }
    let kernel = random_walk_kernel(&graph)?;
    let rate = build_mh_rate_matrix(&kernel, &target)?;
    let omega = weight_matrix(&target, &rate)?;
    Ok(BuiltSystem {
        graph,
        target,
        rate,
        omega,
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        Method::parse(&self.method)?;
        if !(self.dt > 0.0) {
            return Err(AmcmcError::InvalidArgument("dt must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(AmcmcError::InvalidArgument(
                "iterations must be positive".into(),
            ));
        }
        if self.particles == 0 {
            return Err(AmcmcError::InvalidArgument(
                "particles must be positive".into(),
            ));
        }
        if self.warm_start > self.iterations {
            return Err(AmcmcError::InvalidArgument(
                "warm_start exceeds iterations".into(),
            ));
        }
        build_system(&self.graph, &self.target).map(|_| ())
    }

    pub fn method(&self) -> Result<Method> {
        Method::parse(&self.method)
    }
}
