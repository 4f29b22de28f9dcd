//! Two-agent differentiable problems over a decision horizon.
//!
//! A joint decision vector is laid out agent-major: all of agent one's
//! time-steps first, then all of agent two's. Within an agent the layout is
//! time-major, and within a time-step coordinates keep their natural order.
//! This keeps each agent's diagonal Hessian block contiguous.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Horizon and per-step decision dimensions of a two-agent problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub horizon: usize,
    pub dx: usize,
    pub dy: usize,
}

impl ProblemDims {
    pub fn new(horizon: usize, dx: usize, dy: usize) -> Result<Self> {
        for (name, v) in [("horizon", horizon), ("dx", dx), ("dy", dy)] {
            if v < 1 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be >= 1, got {v}"),
                });
            }
        }
        Ok(Self { horizon, dx, dy })
    }

    /// Total joint dimension n = T * (dx + dy).
    pub fn joint_dim(&self) -> usize {
        self.horizon * (self.dx + self.dy)
    }

    /// Number of entries belonging to agent one (the leading block).
    pub fn agent_one_dim(&self) -> usize {
        self.horizon * self.dx
    }

    pub fn agent_two_dim(&self) -> usize {
        self.horizon * self.dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agent {
    One,
    Two,
}

/// Lookup from (agent, time-step, coordinate) to a flat index into a [`JointPoint`].
#[derive(Debug, Clone, Copy)]
pub struct IndexMap {
    dims: ProblemDims,
}

impl IndexMap {
    pub fn new(dims: ProblemDims) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    /// Flat index of coordinate `k` of the given agent at time-step `t` (1-based).
    pub fn flat_index(&self, agent: Agent, t: usize, k: usize) -> Result<usize> {
        let d = self.dims;
        let width = match agent {
            Agent::One => d.dx,
            Agent::Two => d.dy,
        };
        if t < 1 || t > d.horizon || k >= width {
            return Err(Error::IndexOutOfRange {
                agent: match agent {
                    Agent::One => 1,
                    Agent::Two => 2,
                },
                t,
                k,
                horizon: d.horizon,
                dx: d.dx,
                dy: d.dy,
            });
        }
        Ok(match agent {
            Agent::One => (t - 1) * d.dx + k,
            Agent::Two => d.horizon * d.dx + (t - 1) * d.dy + k,
        })
    }
}

/// One stacked decision vector for both agents, in the agent-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPoint {
    values: Vec<f64>,
}

impl JointPoint {
    pub fn new(values: Vec<f64>, dims: &ProblemDims) -> Result<Self> {
        if values.len() != dims.joint_dim() {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!(
                    "length {} does not match joint dimension {}",
                    values.len(),
                    dims.joint_dim()
                ),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { coordinate: i });
        }
        Ok(Self { values })
    }

    pub fn zeros(dims: &ProblemDims) -> Self {
        Self {
            values: vec![0.0; dims.joint_dim()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type HessFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// A twice-differentiable common objective over both agents' stacked decisions.
///
/// Evaluators are pure and callable from multiple workers at once. The Hessian
/// evaluator is symmetrized on return.
#[derive(Clone)]
pub struct TwoAgentProblem {
    dims: ProblemDims,
    name: String,
    params: BTreeMap<String, f64>,
    value_fn: Arc<ValueFn>,
    grad_fn: Arc<GradFn>,
    hess_fn: Arc<HessFn>,
}

impl std::fmt::Debug for TwoAgentProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoAgentProblem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("params", &self.params)
            .finish()
    }
}

impl TwoAgentProblem {
    /// Builds a problem from raw evaluator closures. Used by the built-in
    /// constructors and by tests that need bespoke objectives.
    pub fn from_fns(
        name: impl Into<String>,
        dims: ProblemDims,
        params: BTreeMap<String, f64>,
        value_fn: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad_fn: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hess_fn: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dims,
            name: name.into(),
            params,
            value_fn: Arc::new(value_fn),
            grad_fn: Arc::new(grad_fn),
            hess_fn: Arc::new(hess_fn),
        }
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn index_map(&self) -> IndexMap {
        IndexMap::new(self.dims)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn value(&self, z: &JointPoint) -> f64 {
        (self.value_fn)(z.as_slice())
    }

    pub fn gradient(&self, z: &JointPoint) -> Vec<f64> {
        (self.grad_fn)(z.as_slice())
    }

    /// Hessian at `z`, symmetrized as (H + H^T) / 2.
    pub fn hessian(&self, z: &JointPoint) -> DMatrix<f64> {
        let h = (self.hess_fn)(z.as_slice());
        symmetrize(h)
    }
}

fn symmetrize(mut h: DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    debug_assert_eq!(n, h.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    h
}

fn require_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be a positive finite real, got {v}"),
        });
    }
    Ok(())
}

/// Separation problem for two point agents choosing one scalar each:
/// l(x, y) = tau (x^2 + y^2) + gamma exp(-((x - y) / rho)^2).
pub fn make_static_separation(tau: f64, gamma: f64, rho: f64) -> Result<TwoAgentProblem> {
    require_positive("tau", tau)?;
    require_positive("gamma", gamma)?;
    require_positive("rho", rho)?;
    let dims = ProblemDims::new(1, 1, 1)?;
    let params = BTreeMap::from([
        ("tau".to_string(), tau),
        ("gamma".to_string(), gamma),
        ("rho".to_string(), rho),
    ]);

    // With d = x - y and g(d) = gamma exp(-d^2/rho^2):
    //   dl/dx = 2 tau x + g'(d),  dl/dy = 2 tau y - g'(d)
    //   l_xx = l_yy = 2 tau + g''(d),  l_xy = -g''(d)
    let prox = Proximity { gamma, rho };
    let p2 = prox;
    let p3 = prox;
    Ok(TwoAgentProblem::from_fns(
        "static_separation",
        dims,
        params,
        move |z| tau * (z[0] * z[0] + z[1] * z[1]) + prox.value(z[0] - z[1]),
        move |z| {
            let gp = p2.d1(z[0] - z[1]);
            vec![2.0 * tau * z[0] + gp, 2.0 * tau * z[1] - gp]
        },
        move |z| {
            let gpp = p3.d2(z[0] - z[1]);
            DMatrix::from_row_slice(2, 2, &[2.0 * tau + gpp, -gpp, -gpp, 2.0 * tau + gpp])
        },
    ))
}

/// Quadratic coupling problem f(z) = z^T Q z over T = 3 scalar steps per agent,
/// with unit diagonal and -2/5 on every cross-agent entry of Q.
pub fn make_quadratic_coupling() -> TwoAgentProblem {
    let dims = ProblemDims::new(3, 1, 1).expect("static dims");
    let mut q = DMatrix::<f64>::identity(6, 6);
    for i in 0..3 {
        for j in 3..6 {
            q[(i, j)] = -0.4;
            q[(j, i)] = -0.4;
        }
    }
    let q_grad = q.clone();
    let q_hess = q.clone();
    TwoAgentProblem::from_fns(
        "quadratic_coupling",
        dims,
        BTreeMap::new(),
        move |z| {
            let v = nalgebra::DVector::from_column_slice(z);
            (v.transpose() * &q * &v)[(0, 0)]
        },
        move |z| {
            let v = nalgebra::DVector::from_column_slice(z);
            (2.0 * &q_grad * v).iter().copied().collect()
        },
        move |_| 2.0 * q_hess.clone(),
    )
}

/// Two single-integrator agents on a line, with positions substituted out:
/// z_t^i = sum of the first t-1 controls, z_1^i = 0, and cost
/// sum_t tau ((u_t^1)^2 + (u_t^2)^2) + sum_{t=1}^{T+1} gamma exp(-((z_t^1 - z_t^2)/rho)^2).
pub fn make_dynamic_separation(
    horizon: usize,
    tau: f64,
    gamma: f64,
    rho: f64,
) -> Result<TwoAgentProblem> {
    require_positive("tau", tau)?;
    require_positive("gamma", gamma)?;
    require_positive("rho", rho)?;
    let dims = ProblemDims::new(horizon, 1, 1)?;
    let params = BTreeMap::from([
        ("tau".to_string(), tau),
        ("gamma".to_string(), gamma),
        ("rho".to_string(), rho),
    ]);
    let prox = Proximity { gamma, rho };
    let p2 = prox;
    let p3 = prox;
    let t_len = horizon;

    // Position gaps d_t = z_t^1 - z_t^2 = sum_{k<t} (u_k^1 - u_k^2), t = 1..T+1.
    let gaps = move |z: &[f64]| -> Vec<f64> {
        let mut d = Vec::with_capacity(t_len + 1);
        let mut acc = 0.0;
        d.push(0.0);
        for k in 0..t_len {
            acc += z[k] - z[t_len + k];
            d.push(acc);
        }
        d
    };

    Ok(TwoAgentProblem::from_fns(
        "dynamic_separation",
        dims,
        params,
        move |z| {
            let control: f64 = z.iter().map(|u| u * u).sum();
            let proximity: f64 = gaps(z).iter().map(|&d| prox.value(d)).sum();
            tau * control + proximity
        },
        move |z| {
            // d f / d u_s^1 = 2 tau u_s^1 + sum_{t>s} g'(d_t); agent two negated.
            let d = gaps(z);
            let mut tail = vec![0.0; t_len + 1];
            let mut acc = 0.0;
            for s in (1..=t_len).rev() {
                acc += p2.d1(d[s]); // d_{s+1} in 1-based step terms lives at index s
                tail[s - 1] = acc;
            }
            let mut g = vec![0.0; 2 * t_len];
            for s in 0..t_len {
                g[s] = 2.0 * tau * z[s] + tail[s];
                g[t_len + s] = 2.0 * tau * z[t_len + s] - tail[s];
            }
            g
        },
        move |z| {
            // H entries depend only on cum[m] = sum over gaps strictly after step m
            // of g''(d); the cumulative-sum map makes every pair (s, r) pick up the
            // terms past max(s, r).
            let d = gaps(z);
            let mut cum = vec![0.0; t_len + 1];
            let mut acc = 0.0;
            for s in (1..=t_len).rev() {
                acc += p3.d2(d[s]);
                cum[s - 1] = acc;
            }
            let n = 2 * t_len;
            let mut h = DMatrix::<f64>::zeros(n, n);
            for s in 0..t_len {
                for r in 0..t_len {
                    let c = cum[s.max(r)];
                    h[(s, r)] = c;
                    h[(t_len + s, t_len + r)] = c;
                    h[(s, t_len + r)] = -c;
                    h[(t_len + s, r)] = -c;
                }
                h[(s, s)] += 2.0 * tau;
                h[(t_len + s, t_len + s)] += 2.0 * tau;
            }
            h
        },
    ))
}

/// Gaussian proximity penalty g(d) = gamma exp(-d^2/rho^2) and its derivatives.
#[derive(Clone, Copy)]
struct Proximity {
    gamma: f64,
    rho: f64,
}

impl Proximity {
    fn value(self, d: f64) -> f64 {
        self.gamma * (-(d * d) / (self.rho * self.rho)).exp()
    }

    fn d1(self, d: f64) -> f64 {
        -2.0 * d / (self.rho * self.rho) * self.value(d)
    }

    fn d2(self, d: f64) -> f64 {
        let r2 = self.rho * self.rho;
        self.value(d) * (4.0 * d * d / (r2 * r2) - 2.0 / r2)
    }
}

/// Positions z_t (t = 1..T+1) of both agents implied by a control vector of the
/// dynamic problem; used for trajectory output.
pub fn integrate_positions(dims: &ProblemDims, z: &JointPoint) -> (Vec<f64>, Vec<f64>) {
    let t_len = dims.horizon;
    let u = z.as_slice();
    let mut z1 = Vec::with_capacity(t_len + 1);
    let mut z2 = Vec::with_capacity(t_len + 1);
    let (mut a, mut b) = (0.0, 0.0);
    z1.push(0.0);
    z2.push(0.0);
    for k in 0..t_len {
        a += u[k];
        b += u[t_len * dims.dx + k];
        z1.push(a);
        z2.push(b);
    }
    (z1, z2)
}
