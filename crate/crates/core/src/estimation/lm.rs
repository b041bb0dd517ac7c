//! Damped Gauss–Newton (Levenberg–Marquardt) for small unconstrained problems.
//!
//! The Jacobian is taken by central differences. Bounds are the caller's
//! business: they map constrained parameters onto the real line before
//! handing the residual function to [`minimize`].

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the largest cosine between the residual
    /// vector and a Jacobian column.
    pub gradient_tolerance: f64,
    /// Relative cost change below which an accepted step ends the search.
    pub cost_tolerance: f64,
    /// Relative step length below which an accepted step ends the search.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    /// Relative central-difference step.
    pub difference_step: f64,
    /// A cost at or below this counts as an exact fit.
    pub zero_cost: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            difference_step: 1e-5,
            zero_cost: 1e-24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `Σ r²` at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest residual/column cosine at `params`.
    pub gradient_cosine: f64,
    /// Cost after the start and after every accepted step.
    pub cost_history: Vec<f64>,
}

pub fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Central-difference Jacobian, one column per parameter.
pub fn jacobian<F>(f: &F, x: &[f64], rel_step: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    (0..x.len())
        .map(|j| {
            let h = rel_step * x[j].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (rp, rm) = (f(&xp), f(&xm));
            rp.iter()
                .zip(&rm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect()
}

/// `JᵀJ` and `Jᵀr` for column-major `J`.
pub fn normal_equations(jac: &[Vec<f64>], r: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = jac.len();
    let mut jtj = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..=a {
            let s: f64 = jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum();
            jtj[a][b] = s;
            jtj[b][a] = s;
        }
    }
    let jtr = jac
        .iter()
        .map(|col| col.iter().zip(r).map(|(x, y)| x * y).sum())
        .collect();
    (jtj, jtr)
}

/// Cholesky solve of a symmetric positive-definite system; `None` if not SPD.
pub fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

/// Inverse of a symmetric positive-definite matrix.
pub fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_spd(a, &e)?);
    }
    Some(
        (0..n)
            .map(|i| (0..n).map(|j| cols[j][i]).collect())
            .collect(),
    )
}

fn gradient_cosine(jac: &[Vec<f64>], r: &[f64]) -> f64 {
    let rnorm = sum_sq(r).sqrt();
    if rnorm == 0.0 {
        return 0.0;
    }
    jac.iter()
        .map(|col| {
            let cnorm = sum_sq(col).sqrt();
            if cnorm == 0.0 {
                0.0
            } else {
                let dot: f64 = col.iter().zip(r).map(|(a, b)| a * b).sum();
                dot.abs() / (cnorm * rnorm)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `Σ f(x)²` from `x0`.
pub fn minimize<F>(f: F, x0: &[f64], options: &LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    let mut cosine = f64::INFINITY;

    while iterations < options.max_iterations {
        if cost <= options.zero_cost {
            cosine = 0.0;
            break;
        }
        iterations += 1;
        let jac = jacobian(&f, &x, options.difference_step);
        cosine = gradient_cosine(&jac, &r);
        if cosine <= options.gradient_tolerance {
            break;
        }
        let (jtj, jtr) = normal_equations(&jac, &r);
        let max_diag = (0..x.len()).map(|i| jtj[i][i]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            break;
        }

        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12 * max_diag);
            }
            let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
            match solve_spd(&damped, &rhs) {
                Some(step) => {
                    let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                    let r_trial = f(&trial);
                    let c_trial = sum_sq(&r_trial);
                    if c_trial.is_finite() && c_trial < cost {
                        lambda = (lambda / 3.0).max(1e-15);
                        accepted = Some((trial, r_trial, c_trial, step));
                        break;
                    }
                    lambda *= 4.0;
                }
                None => lambda *= 4.0,
            }
        }
        let Some((trial, r_trial, c_trial, step)) = accepted else {
            break;
        };
        let decrease = (cost - c_trial) / cost.max(f64::MIN_POSITIVE);
        let step_norm = sum_sq(&step).sqrt();
        let x_norm = sum_sq(&x).sqrt();
        x = trial;
        r = r_trial;
        cost = c_trial;
        history.push(cost);
        if decrease <= options.cost_tolerance
            || step_norm <= options.step_tolerance * (x_norm + options.step_tolerance)
        {
            cosine = gradient_cosine(&jacobian(&f, &x, options.difference_step), &r);
            break;
        }
    }
    if cost <= options.zero_cost {
        cosine = 0.0;
    } else if !cosine.is_finite() {
        cosine = gradient_cosine(&jacobian(&f, &x, options.difference_step), &r);
    }

    LmOutcome {
        converged: cosine <= options.gradient_tolerance,
        params: x,
        residuals: r,
        cost,
        iterations,
        gradient_cosine: cosine,
        cost_history: history,
    }
}
