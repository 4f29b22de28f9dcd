//! Finite-difference oracles for validating analytic gradients and Hessians.
//!
//! Central differences with coordinate-relative steps h_i = h0 * (1 + |z_i|).
//! The relative error metric throughout is ||a - b||_inf / (1 + ||a||_inf).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problem::{JointPoint, TwoAgentProblem};

#[derive(Debug, Clone, Copy)]
pub struct FdSettings {
    /// Base finite-difference step.
    pub base_step: f64,
    /// Relative tolerance for the gradient check.
    pub grad_rtol: f64,
    /// Relative tolerance for the Hessian check.
    pub hess_rtol: f64,
}

impl Default for FdSettings {
    fn default() -> Self {
        Self {
            base_step: 1e-5,
            grad_rtol: 1e-5,
            hess_rtol: 1e-4,
        }
    }
}

impl FdSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("base_step", self.base_step),
            ("grad_rtol", self.grad_rtol),
            ("hess_rtol", self.hess_rtol),
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

/// Central-difference gradient of the problem's value evaluator.
pub fn fd_gradient(problem: &TwoAgentProblem, z: &JointPoint, s: &FdSettings) -> Result<Vec<f64>> {
    s.validate()?;
    let base = z.as_slice();
    let mut work = base.to_vec();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let h = s.base_step * (1.0 + base[i].abs());
        work[i] = base[i] + h;
        let fp = eval_value(problem, &work, i)?;
        work[i] = base[i] - h;
        let fm = eval_value(problem, &work, i)?;
        work[i] = base[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Central differences of the analytic gradient, symmetrized.
pub fn fd_hessian(
    problem: &TwoAgentProblem,
    z: &JointPoint,
    s: &FdSettings,
) -> Result<DMatrix<f64>> {
    s.validate()?;
    let base = z.as_slice();
    let n = base.len();
    let mut work = base.to_vec();
    let mut h = DMatrix::<f64>::zeros(n, n);
    let dims = problem.dims();
    for i in 0..n {
        let step = s.base_step * (1.0 + base[i].abs());
        work[i] = base[i] + step;
        let gp = eval_gradient(problem, &work, &dims, i)?;
        work[i] = base[i] - step;
        let gm = eval_gradient(problem, &work, &dims, i)?;
        work[i] = base[i];
        for r in 0..n {
            h[(r, i)] = (gp[r] - gm[r]) / (2.0 * step);
        }
    }
    // Symmetrize so the output equals its own transpose exactly.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

fn eval_value(problem: &TwoAgentProblem, values: &[f64], coordinate: usize) -> Result<f64> {
    let dims = problem.dims();
    let p = JointPoint::new(values.to_vec(), &dims)
        .map_err(|_| Error::Evaluation { coordinate })?;
    let v = problem.value(&p);
    if !v.is_finite() {
        return Err(Error::Evaluation { coordinate });
    }
    Ok(v)
}

fn eval_gradient(
    problem: &TwoAgentProblem,
    values: &[f64],
    dims: &crate::problem::ProblemDims,
    coordinate: usize,
) -> Result<Vec<f64>> {
    let p =
        JointPoint::new(values.to_vec(), dims).map_err(|_| Error::Evaluation { coordinate })?;
    let g = problem.gradient(&p);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation { coordinate });
    }
    Ok(g)
}

/// ||a - b||_inf / (1 + ||a||_inf) over vectors.
pub fn relative_error_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    let scale = a.iter().map(|x| x.abs()).fold(0.0_f64, f64::max);
    diff / (1.0 + scale)
}

/// Same metric over matrices, entrywise.
pub fn relative_error_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).amax();
    diff / (1.0 + a.amax())
}

/// Coordinate achieving the worst absolute deviation; used for failure reports.
pub fn worst_coordinate_vec(a: &[f64], b: &[f64]) -> usize {
    a.iter()
        .zip(b)
        .enumerate()
        .max_by(|(_, (x1, y1)), (_, (x2, y2))| {
            ((*x1 - *y1).abs()).total_cmp(&(*x2 - *y2).abs())
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}
