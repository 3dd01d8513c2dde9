//! Necessary-tension quadratic program.
//!
//! ```text
//! minimize   x' W1 x + (G' x + tau_nec)' W2 (G' x + tau_nec)
//! subject to x >= f_min
//! ```
//!
//! `W1`, `W2` are diagonal. The bound-only structure lets a primal active-set
//! method work directly on index sets: each iteration solves the equality
//! problem on the free muscles by Cholesky, then either blocks on a bound or
//! releases the bound with the most negative multiplier.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ReflexError;

/// Ridge added to the free-set Hessian when it is not positive definite.
pub const SINGULAR_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TensionQp {
    /// Diagonal of the muscle-space weight, entries >= 0.
    pub w1_diag: Vec<f64>,
    /// Diagonal of the joint-space weight, entries > 0.
    pub w2_diag: Vec<f64>,
    /// Muscle Jacobian, muscles x joints.
    pub g: DMatrix<f64>,
    /// Torque the muscles must produce [N m].
    pub tau_nec: Vec<f64>,
    /// Lower tension bound [N].
    pub f_min: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `max_i |min(x_i - f_min_i, grad_i)|`.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl TensionQp {
    fn validate(&self) -> Result<(), ReflexError> {
        let (m, n) = (self.g.nrows(), self.g.ncols());
        let dims = [
            ("w1_diag", self.w1_diag.len(), m),
            ("f_min", self.f_min.len(), m),
            ("w2_diag", self.w2_diag.len(), n),
            ("tau_nec", self.tau_nec.len(), n),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(ReflexError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        let finite = self
            .w1_diag
            .iter()
            .chain(&self.w2_diag)
            .chain(&self.tau_nec)
            .chain(&self.f_min)
            .chain(self.g.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(ReflexError::NonFinite("tension QP data"));
        }
        if self.w1_diag.iter().any(|&w| w < 0.0) || self.w2_diag.iter().any(|&w| w <= 0.0) {
            return Err(ReflexError::InvalidConfig(
                "W1 must be >= 0 and W2 > 0 on the diagonal".into(),
            ));
        }
        Ok(())
    }

    /// Hessian `2 (W1 + G W2 G')` and linear term `2 G W2 tau_nec`.
    pub fn quadratic_form(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w2 = DMatrix::from_diagonal(&DVector::from_column_slice(&self.w2_diag));
        let gw2 = &self.g * &w2;
        let mut h = &gw2 * self.g.transpose();
        for (i, w) in self.w1_diag.iter().enumerate() {
            h[(i, i)] += w;
        }
        h *= 2.0;
        let c = 2.0 * gw2 * DVector::from_column_slice(&self.tau_nec);
        (h, c)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let r = self.g.transpose() * &xv + DVector::from_column_slice(&self.tau_nec);
        let muscle: f64 = x.iter().zip(&self.w1_diag).map(|(x, w)| w * x * x).sum();
        let joint: f64 = r.iter().zip(&self.w2_diag).map(|(r, w)| w * r * r).sum();
        muscle + joint
    }

    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        let (h, c) = self.quadratic_form();
        let grad = h * DVector::from_column_slice(x) + c;
        x.iter()
            .zip(&self.f_min)
            .zip(grad.iter())
            .map(|((x, lo), g)| (x - lo).min(*g).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `H_ff y = rhs`, regularizing when `H_ff` is not positive definite.
fn solve_free(h: &DMatrix<f64>, free: &[usize], rhs: &DVector<f64>) -> DVector<f64> {
    let k = free.len();
    let mut sub = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
    if let Some(ch) = sub.clone().cholesky() {
        return ch.solve(rhs);
    }
    for i in 0..k {
        sub[(i, i)] += SINGULAR_RIDGE;
    }
    match sub.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => sub.lu().solve(rhs).unwrap_or_else(|| DVector::zeros(k)),
    }
}

pub fn solve_tension_qp(qp: &TensionQp) -> Result<QpSolution, ReflexError> {
    qp.validate()?;
    let m = qp.f_min.len();
    let (h, c) = qp.quadratic_form();
    let lo = DVector::from_column_slice(&qp.f_min);
    let scale = 1.0 + h.amax() * lo.amax().max(1.0) + c.amax();
    let tol = 1e-12 * scale;

    let mut x = lo.clone();
    let mut at_bound = vec![true; m];
    let max_iter = 20 * m + 50;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(ReflexError::NoConvergence(max_iter));
        }
        let free: Vec<usize> = (0..m).filter(|&i| !at_bound[i]).collect();
        let mut blocked = false;
        if !free.is_empty() {
            // rhs = -(c_F + H_FA x_A)
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                let fixed: f64 = (0..m)
                    .filter(|&j| at_bound[j])
                    .map(|j| h[(i, j)] * x[j])
                    .sum();
                -(c[i] + fixed)
            });
            let y = solve_free(&h, &free, &rhs);
            // largest feasible fraction of the step toward y
            let mut alpha = 1.0;
            let mut blocking = None;
            for (a, &i) in free.iter().enumerate() {
                let p = y[a] - x[i];
                if p < 0.0 && y[a] < lo[i] {
                    let ratio = (lo[i] - x[i]) / p;
                    if ratio < alpha {
                        alpha = ratio.max(0.0);
                        blocking = Some(i);
                    }
                }
            }
            for (a, &i) in free.iter().enumerate() {
                x[i] += alpha * (y[a] - x[i]);
            }
            if let Some(i) = blocking {
                x[i] = lo[i];
                at_bound[i] = true;
                blocked = true;
            }
        }
        if blocked {
            continue;
        }
        let grad = &h * &x + &c;
        let release = (0..m)
            .filter(|&i| at_bound[i] && grad[i] < -tol)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        match release {
            Some(i) => at_bound[i] = false,
            None => break,
        }
    }
    let x: Vec<f64> = x.iter().zip(&qp.f_min).map(|(v, lo)| v.max(*lo)).collect();
    Ok(QpSolution {
        objective: qp.objective(&x),
        kkt_residual: qp.kkt_residual(&x),
        x,
        iterations,
    })
}
