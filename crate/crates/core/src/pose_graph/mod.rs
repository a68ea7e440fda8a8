//! Global pose optimization fusing odometry with prior localizations.
//!
//! The cost is `Σ ‖z − h(X)‖²_Ω` over three factor kinds: relative odometry
//! between consecutive keyframes, a global position factor per accepted
//! prior, and a relative rotation factor linking each prior keyframe to the
//! earliest one. Minimization is Levenberg-Marquardt on a skyline-stored
//! normal matrix; the earliest prior keyframe is ordered last so the matrix is
//! banded with a dense border.

mod factors;
mod skyline;

pub use factors::{build_factors, position_residual, relative_rotation_residual, retract, Factor};

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix6, UnitQuaternion};

use crate::geometry::{Pose, Vector3};
use skyline::Skyline;

/// Poses `x_0 … x_n` of all keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub poses: Vec<Pose>,
}

/// Prior localization of one keyframe, from an accepted registration.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMeasurement {
    pub index: usize,
    pub position: Vector3,
    pub orientation: UnitQuaternion<f64>,
    /// 6×6 information in `(rotation, translation)` order.
    pub information: Matrix6<f64>,
}

/// Relative pose `x_from⁻¹ ∘ x_to` as measured by odometry.
#[derive(Debug, Clone, PartialEq)]
pub struct OdometryMeasurement {
    pub from: usize,
    pub to: usize,
    pub relative: Pose,
    /// 6×6 information in `(rotation, translation)` order.
    pub information: Matrix6<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// Fix the first pose only when there are no prior measurements.
    Auto,
    FixFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop when the accepted cost decrease is below this fraction of the cost.
    pub cost_tolerance: f64,
    /// Stop when the increment norm falls below this.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
    pub gauge: Gauge,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            cost_tolerance: 1e-9,
            step_tolerance: 1e-9,
            initial_lambda: 1e-4,
            gauge: Gauge::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostConverged,
    StepConverged,
    MaxIterations,
    /// Damping grew without finding a decrease; the state is a local minimum
    /// to numerical precision.
    NoDecrease,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub state: GraphState,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseGraphError {
    #[error("graph has no poses")]
    Empty,
    #[error("factor references pose {index} but the graph has {len} poses")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("pose {0} is not finite")]
    NonFinitePose(usize),
    #[error(
        "rank-deficient normal matrix at pose {pose} (pivot {pivot:e}); \
         the graph is disconnected or the priors do not fix the gauge"
    )]
    RankDeficient { pose: usize, pivot: f64 },
}

/// Chains odometry from `start`: `x_{k+1} = x_k ∘ z_k`.
pub fn integrate_odometry(start: &Pose, odometry: &[OdometryMeasurement]) -> Vec<Pose> {
    let mut poses = vec![*start];
    for m in odometry {
        let next = poses[m.from].compose(&m.relative);
        poses.push(next);
    }
    poses
}

struct Layout {
    /// Position of each pose in the solve order; `None` when fixed.
    slot: Vec<Option<usize>>,
    first: Vec<usize>,
}

fn layout(n: usize, factors: &[Factor], fixed: Option<usize>, last: Option<usize>) -> Layout {
    let mut order: Vec<usize> = (0..n).filter(|&i| Some(i) != fixed && Some(i) != last).collect();
    if let Some(l) = last {
        if Some(l) != fixed {
            order.push(l);
        }
    }
    let mut slot = vec![None; n];
    for (s, &i) in order.iter().enumerate() {
        slot[i] = Some(s);
    }
    let nslots = order.len();
    let mut first_block: Vec<usize> = (0..nslots).collect();
    for f in factors {
        let slots: Vec<usize> = f.variables().iter().filter_map(|&v| slot[v]).collect();
        if let Some(&min) = slots.iter().min() {
            for &s in &slots {
                first_block[s] = first_block[s].min(min);
            }
        }
    }
    let mut first = Vec::with_capacity(nslots * 6);
    for &fb in first_block.iter() {
        for _ in 0..6 {
            first.push(fb * 6);
        }
    }
    Layout { slot, first }
}

fn total_cost(factors: &[Factor], poses: &[Pose]) -> f64 {
    factors.iter().map(|f| f.cost(poses)).sum()
}

fn assemble(factors: &[Factor], poses: &[Pose], layout: &Layout, h: &mut Skyline, g: &mut [f64]) {
    h.clear();
    g.iter_mut().for_each(|v| *v = 0.0);
    for f in factors {
        let vars = f.variables();
        let r = f.residual(poses);
        let info = f.information();
        let jac = f.jacobians(poses);
        let jt_info: Vec<_> = jac.iter().map(|j| j.transpose() * &info).collect();
        for (a, &va) in vars.iter().enumerate() {
            let Some(sa) = layout.slot[va] else { continue };
            let ga = &jt_info[a] * &r;
            for k in 0..6 {
                g[sa * 6 + k] += ga[k];
            }
            for (b, &vb) in vars.iter().enumerate() {
                let Some(sb) = layout.slot[vb] else { continue };
                if sb > sa {
                    continue;
                }
                let block = &jt_info[a] * &jac[b];
                for r_ in 0..6 {
                    for c in 0..6 {
                        let (i, j) = (sa * 6 + r_, sb * 6 + c);
                        if j <= i {
                            h.add(i, j, block[(r_, c)]);
                        }
                    }
                }
            }
        }
    }
}

/// Levenberg-Marquardt over all poses.
pub fn optimize(
    graph: &GraphState,
    odometry: &[OdometryMeasurement],
    priors: &[PriorMeasurement],
    config: &OptimizerConfig,
) -> Result<Optimized, PoseGraphError> {
    let n = graph.poses.len();
    if n == 0 {
        return Err(PoseGraphError::Empty);
    }
    for (i, p) in graph.poses.iter().enumerate() {
        if !p.is_finite() {
            return Err(PoseGraphError::NonFinitePose(i));
        }
    }
    for idx in odometry.iter().flat_map(|m| [m.from, m.to]).chain(priors.iter().map(|m| m.index)) {
        if idx >= n {
            return Err(PoseGraphError::IndexOutOfRange { index: idx, len: n });
        }
    }
    let factors = build_factors(odometry, priors);
    let fixed = match config.gauge {
        Gauge::FixFirst => Some(0),
        Gauge::Auto => priors.is_empty().then_some(0),
    };
    let anchor = priors.iter().map(|m| m.index).min();
    let layout = layout(n, &factors, fixed, anchor);
    let dim = layout.first.len();

    let mut poses = graph.poses.clone();
    let initial_cost = total_cost(&factors, &poses);
    let mut cost = initial_cost;
    let mut h = Skyline::new(layout.first.clone());
    let mut g = vec![0.0; dim];

    // Structural check on the undamped system.
    assemble(&factors, &poses, &layout, &mut h, &mut g);
    if let Err(e) = h.factorize(1e-12) {
        let pose = layout.slot.iter().position(|s| *s == Some(e.row / 6)).unwrap_or(0);
        return Err(PoseGraphError::RankDeficient { pose, pivot: e.pivot });
    }

    let mut lambda = config.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    'outer: while iterations < config.max_iterations {
        iterations += 1;
        assemble(&factors, &poses, &layout, &mut h, &mut g);
        let diag: Vec<f64> = (0..dim).map(|i| h.diagonal(i)).collect();
        loop {
            let mut damped = Skyline::new(layout.first.clone());
            for i in 0..dim {
                for j in layout.first[i]..=i {
                    let mut v = h.get(i, j);
                    if i == j {
                        v += lambda * diag[i].max(1e-12);
                    }
                    damped.add(i, j, v);
                }
            }
            if damped.factorize(0.0).is_err() {
                lambda *= 10.0;
                if lambda > 1e16 {
                    termination = Termination::NoDecrease;
                    break 'outer;
                }
                continue;
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let delta = damped.solve(&neg_g);
            let step = libm::sqrt(delta.iter().map(|v| v * v).sum::<f64>());
            if step < config.step_tolerance {
                termination = Termination::StepConverged;
                break 'outer;
            }
            let candidate: Vec<Pose> = poses
                .iter()
                .enumerate()
                .map(|(i, p)| match layout.slot[i] {
                    Some(s) => retract(p, &delta[s * 6..s * 6 + 6]),
                    None => *p,
                })
                .collect();
            let new_cost = total_cost(&factors, &candidate);
            if new_cost < cost {
                let decrease = cost - new_cost;
                poses = candidate;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                if decrease < config.cost_tolerance * cost.max(f64::MIN_POSITIVE) || cost == 0.0 {
                    termination = Termination::CostConverged;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                termination = Termination::NoDecrease;
                break 'outer;
            }
        }
    }
    Ok(Optimized {
        state: GraphState { poses },
        initial_cost,
        final_cost: cost,
        iterations,
        termination,
    })
}
