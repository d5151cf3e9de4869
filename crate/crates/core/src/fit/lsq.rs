//! Bounded-iteration nonlinear least squares with parameter fixing, on top
//! of the MINPACK-style Levenberg-Marquardt solver.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative step size below which the fit is converged.
    pub xtol: f64,
    /// Relative reduction of the residual below which the fit is converged.
    pub ftol: f64,
    /// Budget of residual evaluations.
    pub max_evaluations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            xtol: 1e-8,
            ftol: 1e-12,
            max_evaluations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqOutcome {
    pub params: Vec<f64>,
    /// One-sigma uncertainties (zero for fixed parameters).
    pub sigma: Vec<f64>,
    /// Euclidean norm of the weighted residual vector.
    pub residual_norm: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: String,
}

struct Problem<'a, F> {
    resid: &'a F,
    full: Vec<f64>,
    free: Vec<usize>,
    x: DVector<f64>,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Problem<'_, F> {
    fn expand(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut p = self.full.clone();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = x[k];
        }
        p
    }

    fn jacobian_at(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let r0 = (self.resid)(&self.expand(x));
        let mut jac = DMatrix::zeros(r0.len(), x.len());
        for k in 0..x.len() {
            let h = 1e-6 * x[k].abs().max(1e-6);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let rp = (self.resid)(&self.expand(&xp));
            let rm = (self.resid)(&self.expand(&xm));
            for i in 0..r0.len() {
                let d = (rp[i] - rm[i]) / (2.0 * h);
                if !d.is_finite() {
                    return None;
                }
                jac[(i, k)] = d;
            }
        }
        Some(jac)
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = (self.resid)(&self.expand(&self.x));
        r.iter().all(|v| v.is_finite()).then(|| DVector::from_vec(r))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        self.jacobian_at(&self.x)
    }
}

/// Minimizes `|resid(p)|^2` over the parameters not marked in `fixed`.
///
/// Uncertainties come from the Gauss-Newton covariance `(J^T J)^+`, scaled
/// by the reduced chi-square unless `absolute_sigma` is set (residuals
/// already divided by known uncertainties).
pub fn least_squares<F>(resid: &F, p0: &[f64], fixed: &[bool], absolute_sigma: bool, opts: &SolverOptions) -> LsqOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let free: Vec<usize> = (0..p0.len()).filter(|&i| !fixed.get(i).copied().unwrap_or(false)).collect();
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|&i| p0[i]));
    let problem = Problem {
        resid,
        full: p0.to_vec(),
        free: free.clone(),
        x: x0,
    };
    let m = (resid)(p0).len();
    let n = free.len();
    if n == 0 || m == 0 {
        let r = (resid)(p0);
        return LsqOutcome {
            params: p0.to_vec(),
            sigma: vec![0.0; p0.len()],
            residual_norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
            evaluations: 1,
            converged: true,
            termination: "nothing to fit".into(),
        };
    }
    let patience = opts.max_evaluations.div_ceil(n + 1).max(1);
    let solver = LevenbergMarquardt::new()
        .with_xtol(opts.xtol)
        .with_ftol(opts.ftol)
        .with_patience(patience);
    let (problem, report) = solver.minimize(problem);
    let params = problem.expand(&problem.x);
    let r = (resid)(&params);
    let rss: f64 = r.iter().map(|v| v * v).sum();
    let mut sigma = vec![0.0; p0.len()];
    if let Some(j) = problem.jacobian_at(&problem.x) {
        let jtj = j.transpose() * &j;
        let scale = if absolute_sigma || m <= n { 1.0 } else { rss / (m - n) as f64 };
        // Pseudo-inverse so that unidentifiable directions report large, not
        // undefined, errors.
        let cov = jtj.clone().pseudo_inverse(1e-14 * jtj.norm()).ok();
        for (k, &i) in free.iter().enumerate() {
            sigma[i] = match &cov {
                Some(c) if c[(k, k)] > 0.0 => (c[(k, k)] * scale).sqrt(),
                _ => f64::INFINITY,
            };
        }
    } else {
        for &i in &free {
            sigma[i] = f64::INFINITY;
        }
    }
    LsqOutcome {
        params,
        sigma,
        residual_norm: rss.sqrt(),
        evaluations: report.number_of_evaluations,
        converged: report.termination.was_successful(),
        termination: format!("{:?}", report.termination),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_with_fixed_offset() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-1.3 * t).exp() + 0.5).collect();
        let resid = |p: &[f64]| t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y).collect::<Vec<_>>();
        let out = least_squares(&resid, &[1.0, 0.5, 0.5], &[false, false, true], false, &SolverOptions::default());
        assert!(out.converged, "{}", out.termination);
        assert!((out.params[0] - 3.0).abs() < 1e-7);
        assert!((out.params[1] - 1.3).abs() < 1e-7);
        assert_eq!(out.params[2], 0.5);
        assert_eq!(out.sigma[2], 0.0);
    }
}
