//! The team's coordination problem: minimize
//! sum_S c_S (p_S - q_S)^2 + p_S fbar_S over the probability simplex.
//!
//! Solved exactly by bisection on the scalar equality multiplier nu, using
//! the water-filling form p_S(nu) = max(0, q_S + (nu - fbar_S) / (2 c_S)).
//! A projected-gradient solver with exact simplex projection serves as the
//! independent test oracle.

use serde::{Deserialize, Serialize};

use crate::classify::{SolutionAtlas, TimeSet};
use crate::error::{Error, Result};

/// Coordination weight assigned to the empty set when it participates; the
/// cardinality rule would give 0 and destroy strict convexity.
pub const EMPTY_SET_WEIGHT: f64 = 1e-6;

const BRACKET_DOUBLINGS: usize = 100;
const BISECTION_CAP: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostRule {
    Cardinality,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NominalRule {
    Uniform,
    Custom(Vec<f64>),
}

/// The planning instance: surviving family, per-set average costs, weights,
/// and the nominal distribution.
#[derive(Debug, Clone, Serialize)]
pub struct CoordinationInstance {
    pub family: Vec<TimeSet>,
    pub fbar: Vec<f64>,
    pub weights: Vec<f64>,
    pub nominal: Vec<f64>,
    /// Sets dropped because their solution set was empty.
    pub dropped_sets: Vec<TimeSet>,
    pub warning: Option<String>,
}

impl CoordinationInstance {
    pub fn new(
        family: Vec<TimeSet>,
        fbar: Vec<f64>,
        weights: Vec<f64>,
        nominal: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self {
            family,
            fbar,
            weights,
            nominal,
            dropped_sets: vec![],
            warning: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn len(&self) -> usize {
        self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.family.len();
        if m == 0 {
            return Err(Error::InfeasibleInstance);
        }
        if self.fbar.len() != m || self.weights.len() != m || self.nominal.len() != m {
            return Err(Error::InvalidParameter {
                name: "instance",
                reason: "fbar, weights, and nominal must match the family length".into(),
            });
        }
        if self.fbar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "fbar",
                reason: "must be finite".into(),
            });
        }
        if self.weights.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "every c_S must be positive".into(),
            });
        }
        let qsum: f64 = self.nominal.iter().sum();
        if self.nominal.iter().any(|&q| !(q.is_finite() && q >= 0.0))
            || (qsum - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidParameter {
                name: "nominal",
                reason: format!("must lie on the simplex (sum = {qsum})"),
            });
        }
        Ok(())
    }

    pub fn objective(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.nominal)
            .zip(&self.weights)
            .zip(&self.fbar)
            .map(|(((p, q), c), f)| c * (p - q) * (p - q) + p * f)
            .sum()
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.nominal)
            .zip(&self.weights)
            .zip(&self.fbar)
            .map(|(((p, q), c), f)| 2.0 * c * (p - q) + f)
            .collect()
    }
}

/// Builds the instance from an atlas, restricting to sets with non-empty
/// solution sets. If any set is dropped, the nominal distribution is reset to
/// uniform over the survivors and a warning records the drop.
pub fn build_instance(
    atlas: &SolutionAtlas,
    c_rule: &CostRule,
    q_rule: &NominalRule,
) -> Result<CoordinationInstance> {
    let keep: Vec<usize> = (0..atlas.family.len())
        .filter(|fi| atlas.fbar[*fi].is_some())
        .collect();
    if keep.is_empty() {
        return Err(Error::InfeasibleInstance);
    }
    let dropped: Vec<TimeSet> = atlas
        .empty_sets
        .iter()
        .map(|&fi| atlas.family[fi].clone())
        .collect();

    let family: Vec<TimeSet> = keep.iter().map(|&fi| atlas.family[fi].clone()).collect();
    let fbar: Vec<f64> = keep.iter().map(|&fi| atlas.fbar[fi].unwrap()).collect();

    let weights: Vec<f64> = match c_rule {
        CostRule::Cardinality => family
            .iter()
            .map(|s| {
                if s.is_empty() {
                    EMPTY_SET_WEIGHT
                } else {
                    s.len() as f64
                }
            })
            .collect(),
        CostRule::Custom(values) => {
            if values.len() != atlas.family.len() {
                return Err(Error::InvalidParameter {
                    name: "cost_weights",
                    reason: format!(
                        "expected {} entries (one per enumerated set), got {}",
                        atlas.family.len(),
                        values.len()
                    ),
                });
            }
            keep.iter().map(|&fi| values[fi]).collect()
        }
    };

    let m = family.len();
    let nominal: Vec<f64> = if dropped.is_empty() {
        match q_rule {
            NominalRule::Uniform => vec![1.0 / m as f64; m],
            NominalRule::Custom(values) => {
                if values.len() != atlas.family.len() {
                    return Err(Error::InvalidParameter {
                        name: "nominal_weights",
                        reason: format!(
                            "expected {} entries (one per enumerated set), got {}",
                            atlas.family.len(),
                            values.len()
                        ),
                    });
                }
                values.clone()
            }
        }
    } else {
        vec![1.0 / m as f64; m]
    };

    let warning = if dropped.is_empty() {
        None
    } else {
        Some(format!(
            "{} set(s) had empty solution sets and were dropped; nominal distribution reset to uniform over the {} surviving set(s)",
            dropped.len(),
            m
        ))
    };

    let mut inst = CoordinationInstance::new(family, fbar, weights, nominal)?;
    inst.dropped_sets = dropped;
    inst.warning = warning;
    Ok(inst)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinationResult {
    pub p: Vec<f64>,
    pub objective: f64,
    /// Simplex equality multiplier.
    pub nu: f64,
    pub kkt_residual: f64,
    pub bisection_iterations: usize,
}

fn water_fill(inst: &CoordinationInstance, nu: f64) -> Vec<f64> {
    inst.nominal
        .iter()
        .zip(&inst.fbar)
        .zip(&inst.weights)
        .map(|((q, f), c)| (q + (nu - f) / (2.0 * c)).max(0.0))
        .collect()
}

fn mass(inst: &CoordinationInstance, nu: f64) -> f64 {
    water_fill(inst, nu).iter().sum()
}

/// Exact water-filling solve via bisection on nu, with a closed-form active-set
/// refinement once the bracket is tight.
pub fn solve(inst: &CoordinationInstance, tol: f64) -> Result<CoordinationResult> {
    inst.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }

    let fmin = inst.fbar.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = inst.fbar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmax = inst.weights.iter().copied().fold(0.0_f64, f64::max);
    let mut lo = fmin - 2.0 * cmax;
    let mut hi = fmax + 2.0 * cmax;
    let mut doublings = 0;
    while mass(inst, lo) > 1.0 {
        let w = hi - lo;
        lo -= w.max(1.0);
        doublings += 1;
        if doublings > BRACKET_DOUBLINGS {
            return Err(Error::SolverFailure("bracket expansion failed (low side)".into()));
        }
    }
    while mass(inst, hi) < 1.0 {
        let w = hi - lo;
        hi += w.max(1.0);
        doublings += 1;
        if doublings > BRACKET_DOUBLINGS {
            return Err(Error::SolverFailure("bracket expansion failed (high side)".into()));
        }
    }

    let mut iterations = 0usize;
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) && iterations < BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mass(inst, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut nu = 0.5 * (lo + hi);

    // The sum is piecewise linear in nu; with the active set pinned down the
    // exact multiplier has a closed form. Fall back to the bisection value if
    // the refinement flips the active set.
    let p_mid = water_fill(inst, nu);
    let active: Vec<usize> = (0..inst.len()).filter(|&i| p_mid[i] > 0.0).collect();
    if !active.is_empty() {
        let qsum: f64 = active.iter().map(|&i| inst.nominal[i]).sum();
        let fsum: f64 = active
            .iter()
            .map(|&i| inst.fbar[i] / (2.0 * inst.weights[i]))
            .sum();
        let inv: f64 = active.iter().map(|&i| 1.0 / (2.0 * inst.weights[i])).sum();
        let refined = (1.0 - qsum + fsum) / inv;
        let p_ref = water_fill(inst, refined);
        let same_active = (0..inst.len()).all(|i| (p_ref[i] > 0.0) == (p_mid[i] > 0.0));
        if refined.is_finite() && same_active {
            nu = refined;
        }
    }

    let p = water_fill(inst, nu);
    let kkt_residual = kkt_residual(inst, &p, nu);
    Ok(CoordinationResult {
        objective: inst.objective(&p),
        p,
        nu,
        kkt_residual,
        bisection_iterations: iterations,
    })
}

/// Max-norm KKT residual: stationarity with the nonnegative-slack multiplier
/// mu_S = max(0, fbar_S - nu - 2 c_S q_S), complementary slackness, the
/// simplex equality, and nonnegativity.
pub fn kkt_residual(inst: &CoordinationInstance, p: &[f64], nu: f64) -> f64 {
    let mut worst = (p.iter().sum::<f64>() - 1.0).abs();
    for (i, &pi) in p.iter().enumerate() {
        let mu = (inst.fbar[i] - nu - 2.0 * inst.weights[i] * inst.nominal[i]).max(0.0);
        let stationarity = 2.0 * inst.weights[i] * (pi - inst.nominal[i]) + inst.fbar[i] - nu - mu;
        worst = worst.max(stationarity.abs());
        worst = worst.max((mu * pi).abs());
        worst = worst.max((-pi).max(0.0));
    }
    worst
}

/// Projected gradient descent with exact Euclidean projection onto the
/// simplex each iterate. Test oracle for [`solve`]; not used in the pipeline.
pub fn solve_oracle(inst: &CoordinationInstance, steps: usize, step_size: f64) -> CoordinationResult {
    let m = inst.len();
    let mut p = vec![1.0 / m as f64; m];
    let mut used = 0usize;
    for _ in 0..steps {
        let g = inst.gradient(&p);
        let moved: Vec<f64> = p
            .iter()
            .zip(&g)
            .map(|(pi, gi)| pi - step_size * gi)
            .collect();
        let next = project_to_simplex(&moved);
        let delta = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        p = next;
        used += 1;
        if delta < 1e-16 {
            break;
        }
    }
    // Infer the multiplier from the active coordinates for reporting.
    let active: Vec<usize> = (0..m).filter(|&i| p[i] > 0.0).collect();
    let nu = if active.is_empty() {
        0.0
    } else {
        active
            .iter()
            .map(|&i| 2.0 * inst.weights[i] * (p[i] - inst.nominal[i]) + inst.fbar[i])
            .sum::<f64>()
            / active.len() as f64
    };
    CoordinationResult {
        objective: inst.objective(&p),
        kkt_residual: kkt_residual(inst, &p, nu),
        p,
        nu,
        bisection_iterations: used,
    }
}

/// Exact Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (acc - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut p: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // One exact renormalization guards against rounding drift on the sum.
    let s: f64 = p.iter().sum();
    if s > 0.0 && (s - 1.0).abs() > 1e-15 {
        for x in &mut p {
            *x /= s;
        }
    }
    debug_assert_eq!(p.len(), n);
    p
}
