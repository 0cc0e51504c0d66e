//! Derivative-free minimization via the Nelder-Mead simplex method.

use crate::error::{Error, Result};

/// Knobs for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Hard cap on simplex iterations.
    pub max_iters: usize,
    /// Converged when the simplex value spread is at or below
    /// `f_tolerance * (1 + |best|)`.
    pub f_tolerance: f64,
    /// Relative size of the initial coordinate perturbations.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iters: 500,
            f_tolerance: 1e-8,
            initial_step: 0.1,
        }
    }
}

/// Outcome of a [`nelder_mead`] run. `converged` is false when the
/// iteration cap stopped the search first; `x` is still the best point
/// seen either way.
#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Order non-finite values last so a stray NaN cannot poison the simplex.
fn key(f: f64) -> f64 {
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

/// Minimize `f` starting from `x0` with the standard reflection,
/// expansion, contraction, and shrink moves (coefficients 1, 2, 1/2, 1/2).
pub fn nelder_mead<F>(mut f: F, x0: &[f64], options: NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("cannot optimize over zero parameters"));
    }
    let fx0 = f(x0);
    if !fx0.is_finite() {
        return Err(Error::Numerical(format!(
            "objective is not finite at the starting point ({fx0})"
        )));
    }

    // Initial simplex: x0 and one perturbation per coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += options.initial_step * x0[i].abs().max(1.0);
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iters {
        simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
        let spread = key(simplex[n].1) - key(simplex[0].1);
        if spread <= options.f_tolerance * (1.0 + simplex[0].1.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let point = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = point(1.0);
        let fr = f(&reflected);
        if key(fr) < key(simplex[0].1) {
            let expanded = point(2.0);
            let fe = f(&expanded);
            simplex[n] = if key(fe) < key(fr) {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if key(fr) < key(simplex[n - 1].1) {
            simplex[n] = (reflected, fr);
            continue;
        }
        let contracted = if key(fr) < key(worst.1) {
            point(0.5)
        } else {
            point(-0.5)
        };
        let fc = f(&contracted);
        if key(fc) < key(fr).min(key(worst.1)) {
            simplex[n] = (contracted, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *fx = f(x);
        }
    }

    simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
    let (x, fx) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        x,
        fx,
        iterations,
        converged,
    })
}
