//! Stationary-point search: randomly initialized damped Newton on the
//! gradient, with deterministic seeding, parallel restarts, and merge-order
//! deduplication.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{JointPoint, TwoAgentProblem};

/// Regularization ceiling; a restart whose damping climbs past this diverges.
const LAMBDA_MAX: f64 = 1e8;
/// Geometric escalation factor for the damping parameter.
const LAMBDA_GROWTH: f64 = 10.0;
/// A Newton step is well-scaled when its inf-norm stays under this multiple
/// of the iterate scale.
const STEP_SCALE_LIMIT: f64 = 1e6;
/// Backtracking halvings before the step is declared unproductive.
const MAX_BACKTRACKS: u32 = 40;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    /// Number of random restarts.
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    /// Master seed; per-restart seeds are derived from (master_seed, index).
    #[serde(default)]
    pub master_seed: u64,
    /// Initial iterates are drawn uniformly from [-b, b]^n.
    #[serde(default = "defaults::init_half_width")]
    pub init_half_width: f64,
    /// Accept a point when the gradient inf-norm falls at or below this.
    #[serde(default = "defaults::gradient_tolerance")]
    pub gradient_tolerance: f64,
    /// Newton iteration cap per restart.
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    /// Smallest nonzero damping value.
    #[serde(default = "defaults::regularization_floor")]
    pub regularization_floor: f64,
    /// Inf-norm radius used to merge duplicate solutions.
    #[serde(default = "defaults::dedup_tolerance")]
    pub dedup_tolerance: f64,
}

mod defaults {
    pub fn restarts() -> usize {
        500
    }
    pub fn init_half_width() -> f64 {
        3.0
    }
    pub fn gradient_tolerance() -> f64 {
        1e-10
    }
    pub fn max_iterations() -> usize {
        100
    }
    pub fn regularization_floor() -> f64 {
        1e-8
    }
    pub fn dedup_tolerance() -> f64 {
        1e-4
    }
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            restarts: defaults::restarts(),
            master_seed: 0,
            init_half_width: defaults::init_half_width(),
            gradient_tolerance: defaults::gradient_tolerance(),
            max_iterations: defaults::max_iterations(),
            regularization_floor: defaults::regularization_floor(),
            dedup_tolerance: defaults::dedup_tolerance(),
        }
    }
}

impl SearchSettings {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::InvalidParameter {
                name: "restarts",
                reason: "must be >= 1".into(),
            });
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                reason: "must be >= 1".into(),
            });
        }
        for (name, v) in [
            ("init_half_width", self.init_half_width),
            ("gradient_tolerance", self.gradient_tolerance),
            ("regularization_floor", self.regularization_floor),
            ("dedup_tolerance", self.dedup_tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// An accepted root of the gradient.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryPoint {
    pub point: Vec<f64>,
    pub cost: f64,
    pub gradient_residual: f64,
    pub iterations: usize,
    pub restart_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReason {
    MaxIterations,
    NonFiniteIterate,
    RegularizationExceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub reason: DivergenceReason,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum NewtonOutcome {
    Converged(StationaryPoint),
    Diverged(DivergenceReport),
}

/// Aggregate restart statistics for the run report.
#[derive(Debug, Clone, Serialize, Default)]
pub struct SearchStats {
    pub restarts: usize,
    pub converged: usize,
    pub diverged: usize,
    pub distinct_solutions: usize,
    /// Newton iterations -> number of converged restarts that used them.
    pub iteration_histogram: BTreeMap<usize, usize>,
    pub divergence_reasons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub solutions: Vec<StationaryPoint>,
    pub stats: SearchStats,
}

/// Damped Newton iteration for roots of the gradient.
///
/// Solves (H + lambda I) step = -g each iteration, preferring lambda = 0 when
/// the plain factorization yields a finite, well-scaled step. The merit is the
/// gradient norm, so saddle points are admissible limits. Backtracking halves
/// the step until the merit decreases; an unproductive or unsolvable step
/// escalates lambda geometrically from the floor.
pub fn newton_solve(
    problem: &TwoAgentProblem,
    z0: &JointPoint,
    settings: &SearchSettings,
) -> NewtonOutcome {
    let dims = problem.dims();
    let n = dims.joint_dim();
    let mut z = DVector::from_column_slice(z0.as_slice());

    for iter in 0..settings.max_iterations {
        let point = match joint(&z, problem) {
            Some(p) => p,
            None => {
                return NewtonOutcome::Diverged(DivergenceReport {
                    reason: DivergenceReason::NonFiniteIterate,
                    iterations: iter,
                })
            }
        };
        let grad = DVector::from_vec(problem.gradient(&point));
        let res_inf = grad.amax();
        if !res_inf.is_finite() {
            return NewtonOutcome::Diverged(DivergenceReport {
                reason: DivergenceReason::NonFiniteIterate,
                iterations: iter,
            });
        }
        if res_inf <= settings.gradient_tolerance {
            return accept(problem, point, iter, settings);
        }

        let hess = problem.hessian(&point);
        let merit = grad.norm();
        let scale = 1.0 + z.amax();

        // lambda = 0 first, then the floor, then x10 per failure.
        let mut lambda = 0.0_f64;
        let mut moved = false;
        while lambda <= LAMBDA_MAX {
            if let Some(step) = solve_step(&hess, &grad, lambda, n) {
                if step.amax() <= STEP_SCALE_LIMIT * scale {
                    if let Some(next) = backtrack(problem, &z, &step, merit) {
                        z = next;
                        moved = true;
                        break;
                    }
                }
            }
            lambda = if lambda == 0.0 {
                settings.regularization_floor
            } else {
                lambda * LAMBDA_GROWTH
            };
        }
        if !moved {
            return NewtonOutcome::Diverged(DivergenceReport {
                reason: DivergenceReason::RegularizationExceeded,
                iterations: iter,
            });
        }
    }

    // One last residual check at the iteration cap.
    if let Some(point) = joint(&z, problem) {
        let grad = problem.gradient(&point);
        let res = inf_norm(&grad);
        if res <= settings.gradient_tolerance {
            return accept(problem, point, settings.max_iterations, settings);
        }
    }
    NewtonOutcome::Diverged(DivergenceReport {
        reason: DivergenceReason::MaxIterations,
        iterations: settings.max_iterations,
    })
}

fn joint(z: &DVector<f64>, problem: &TwoAgentProblem) -> Option<JointPoint> {
    JointPoint::new(z.iter().copied().collect(), &problem.dims()).ok()
}

fn solve_step(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    lambda: f64,
    n: usize,
) -> Option<DVector<f64>> {
    let mut m = hess.clone();
    if lambda > 0.0 {
        for i in 0..n {
            m[(i, i)] += lambda;
        }
    }
    let step = m.lu().solve(&(-grad))?;
    if step.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(step)
}

/// First halving of the step that strictly reduces the gradient norm.
fn backtrack(
    problem: &TwoAgentProblem,
    z: &DVector<f64>,
    step: &DVector<f64>,
    merit: f64,
) -> Option<DVector<f64>> {
    let mut alpha = 1.0_f64;
    for _ in 0..MAX_BACKTRACKS {
        let candidate = z + step * alpha;
        if let Some(point) = joint(&candidate, problem) {
            let g = problem.gradient(&point);
            let m = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if m.is_finite() && m < merit {
                return Some(candidate);
            }
        }
        alpha *= 0.5;
    }
    None
}

fn accept(
    problem: &TwoAgentProblem,
    point: JointPoint,
    iterations: usize,
    settings: &SearchSettings,
) -> NewtonOutcome {
    // Re-verify with a fresh gradient evaluation.
    let grad = problem.gradient(&point);
    let residual = inf_norm(&grad);
    if !(residual.is_finite() && residual <= settings.gradient_tolerance) {
        return NewtonOutcome::Diverged(DivergenceReport {
            reason: DivergenceReason::NonFiniteIterate,
            iterations,
        });
    }
    let cost = problem.value(&point);
    if !cost.is_finite() {
        return NewtonOutcome::Diverged(DivergenceReport {
            reason: DivergenceReason::NonFiniteIterate,
            iterations,
        });
    }
    NewtonOutcome::Converged(StationaryPoint {
        point: point.into_values(),
        cost,
        gradient_residual: residual,
        iterations,
        restart_index: 0,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// SplitMix64-style per-restart seed derivation; stable across platforms.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut x = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Multistart search over [-b, b]^n.
///
/// Restarts run in parallel but are merged in restart-index order before
/// deduplication, so the output is independent of worker count. Duplicates
/// within the dedup tolerance keep the representative with the smaller
/// gradient residual. The final list is sorted by cost, ties broken
/// lexicographically by point values.
pub fn search(problem: &TwoAgentProblem, settings: &SearchSettings) -> Result<SearchOutput> {
    settings.validate()?;
    let dims = problem.dims();
    let n = dims.joint_dim();
    let b = settings.init_half_width;

    let outcomes: Vec<NewtonOutcome> = (0..settings.restarts)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.master_seed, idx as u64));
            let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 * b - b).collect();
            let z0 = JointPoint::new(vals, &dims).expect("finite init point");
            match newton_solve(problem, &z0, settings) {
                NewtonOutcome::Converged(mut sp) => {
                    sp.restart_index = idx;
                    NewtonOutcome::Converged(sp)
                }
                d => d,
            }
        })
        .collect();

    let mut stats = SearchStats {
        restarts: settings.restarts,
        ..Default::default()
    };
    let mut kept: Vec<StationaryPoint> = Vec::new();
    for outcome in outcomes {
        match outcome {
            NewtonOutcome::Converged(sp) => {
                stats.converged += 1;
                *stats.iteration_histogram.entry(sp.iterations).or_insert(0) += 1;
                merge_point(&mut kept, sp, settings.dedup_tolerance);
            }
            NewtonOutcome::Diverged(rep) => {
                stats.diverged += 1;
                let key = format!("{:?}", rep.reason);
                *stats.divergence_reasons.entry(key).or_insert(0) += 1;
            }
        }
    }

    kept.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then_with(|| lex_cmp(&a.point, &b.point))
    });
    stats.distinct_solutions = kept.len();
    Ok(SearchOutput {
        solutions: kept,
        stats,
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = x.total_cmp(y);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Merge `sp` into the kept set: all representatives within the tolerance are
/// collapsed with it, and the smallest-residual member (earliest restart on
/// ties) survives.
fn merge_point(kept: &mut Vec<StationaryPoint>, sp: StationaryPoint, delta: f64) {
    let near: Vec<usize> = kept
        .iter()
        .enumerate()
        .filter(|(_, k)| inf_dist(&k.point, &sp.point) <= delta)
        .map(|(i, _)| i)
        .collect();
    if near.is_empty() {
        kept.push(sp);
        return;
    }
    let mut winner = sp;
    for &i in near.iter().rev() {
        let candidate = kept.remove(i);
        let better = candidate.gradient_residual < winner.gradient_residual
            || (candidate.gradient_residual == winner.gradient_residual
                && candidate.restart_index < winner.restart_index);
        if better {
            winner = candidate;
        }
    }
    kept.push(winner);
}
