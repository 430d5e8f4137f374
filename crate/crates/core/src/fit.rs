//! Levenberg–Marquardt with a forward-difference Jacobian. Used for the
//! Gaussian width/amplitude fits and the displacement calibration.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::solve_dense;

#[derive(Clone, Debug)]
pub(crate) struct FitOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LmOptions {
    pub max_iters: usize,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            ftol: 1e-15,
            xtol: 1e-13,
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes `Σ r_i(p)²`. `residuals` writes into the supplied buffer and
/// returns `false` if `p` is outside the model's domain.
pub(crate) fn levenberg_marquardt<F>(mut residuals: F, p0: &[f64], m: usize, opts: LmOptions) -> FitOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    if !residuals(&p, &mut r) {
        return FitOutcome {
            params: p,
            cost: f64::INFINITY,
            converged: false,
        };
    }
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut jac = vec![0.0; m * n];
    let mut r_step = vec![0.0; m];
    let mut trial = vec![0.0; n];

    for _ in 0..opts.max_iters {
        for j in 0..n {
            let h = 1e-7 * p[j].abs().max(1e-3);
            let mut pj = p.clone();
            pj[j] += h;
            if !residuals(&pj, &mut r_step) {
                pj[j] = p[j] - h;
                residuals(&pj, &mut r_step);
                for i in 0..m {
                    jac[i * n + j] = (r[i] - r_step[i]) / h;
                }
            } else {
                for i in 0..m {
                    jac[i * n + j] = (r_step[i] - r[i]) / h;
                }
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            for a in 0..n {
                jtr[a] -= row[a] * r[i];
                for b in 0..n {
                    jtj[a * n + b] += row[a] * row[b];
                }
            }
        }

        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[a * n + a] += lambda * jtj[a * n + a].max(1e-12);
            }
            let Some(step) = solve_dense(damped, jtr.clone()) else {
                lambda *= 10.0;
                continue;
            };
            for a in 0..n {
                trial[a] = p[a] + step[a];
            }
            if residuals(&trial, &mut r_step) {
                let new_cost = sum_sq(&r_step);
                if new_cost.is_finite() && new_cost <= cost {
                    let step_norm = step.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let rel_drop = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    p.copy_from_slice(&trial);
                    r.copy_from_slice(&r_step);
                    cost = new_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel_drop < opts.ftol || step_norm < opts.xtol * (p_norm + opts.xtol) {
                        return FitOutcome {
                            params: p,
                            cost,
                            converged: true,
                        };
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left at machine precision
            return FitOutcome {
                params: p,
                cost,
                converged: true,
            };
        }
    }
    FitOutcome {
        params: p,
        cost,
        converged: false,
    }
}
