//! Unconstrained quasi-Newton minimization (BFGS) with backtracking line
//! search and central finite-difference gradients.
//!
//! The dense inverse-Hessian update suits the small parameter vectors used
//! by the maximum-likelihood fits (≤ 9 scalars). Positivity and SPD
//! constraints are handled by the callers through log/Cholesky
//! reparameterization, keeping the search unconstrained.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("objective is not finite at the initial point")]
    NonFiniteInit,
    #[error("dimension mismatch: x0 has {0} entries")]
    Empty(usize),
}

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Terminate when the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Terminate after two consecutive improvements below this.
    pub value_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-6,
            value_tol: 1e-10,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step (index 0 = initial value).
    pub trace: Vec<f64>,
}

fn fd_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimizes `f` from `x0`. Non-finite objective values during the line
/// search are treated as infeasible and the step is shrunk.
pub fn bfgs_minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Result<BfgsResult, OptimError> {
    let n = x0.len();
    if n == 0 {
        return Err(OptimError::Empty(0));
    }
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(OptimError::NonFiniteInit);
    }
    let mut trace = vec![fx];
    let mut grad = fd_gradient(&mut f, &x, opts.fd_step);
    // Inverse Hessian estimate, row-major.
    let mut h_inv = identity(n);
    let mut first_update = true;
    let mut stall_count = 0usize;

    for iter in 0..opts.max_iterations {
        let gnorm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gnorm < opts.grad_tol {
            return Ok(BfgsResult {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: true,
                trace,
            });
        }

        let mut dir = neg_matvec(&h_inv, &grad);
        if dot(&dir, &grad) >= 0.0 {
            // Curvature estimate went bad; restart from steepest descent.
            h_inv = identity(n);
            first_update = true;
            dir = grad.iter().map(|g| -g).collect();
        }

        // Backtracking Armijo line search; the accepted objective strictly
        // decreases, which the likelihood contract relies on.
        let slope = dot(&dir, &grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No descent step exists at this resolution.
            return Ok(BfgsResult {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: stall_count > 0,
                trace,
            });
        };

        let grad_new = fd_gradient(&mut f, &x_new, opts.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first_update {
                // Scale the initial inverse Hessian to the observed curvature.
                let yy = dot(&y, &y);
                if yy > 0.0 {
                    let scale = sy / yy;
                    for (i, row) in h_inv.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = if i == j { scale } else { 0.0 };
                        }
                    }
                }
                first_update = false;
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        grad = grad_new;
        trace.push(fx);
        if improvement < opts.value_tol {
            stall_count += 1;
            if stall_count >= 2 {
                return Ok(BfgsResult {
                    x,
                    value: fx,
                    grad_norm: norm_max(&grad),
                    iterations: iter + 1,
                    converged: true,
                    trace,
                });
            }
        } else {
            stall_count = 0;
        }
    }
    Ok(BfgsResult {
        x,
        value: fx,
        grad_norm: norm_max(&grad),
        iterations: opts.max_iterations,
        converged: false,
        trace,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_max(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn neg_matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| -dot(row, v)).collect()
}

/// Sherman-Morrison BFGS update of the inverse Hessian:
/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(&hy, y);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}
