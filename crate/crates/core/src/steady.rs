//! Stationary distribution of the chain.
//!
//! `π` solves `π·A = 0` with `Σπ = 1`. The transposed system is restricted
//! to the recurrent class (transient states carry no stationary mass), one
//! of its equations is replaced by the normalization constraint, and the
//! result is obtained by dense LU factorization with partial pivoting. A
//! power iteration on the uniformized kernel is retained as a debug
//! fallback.

use crate::error::{Error, Result};
use crate::generator::RateMatrix;
use crate::graph;
use crate::transient::{transient_distribution, DistributionVector, DEFAULT_TRUNCATION_TOL};

/// Required residual accuracy, as a fraction of `‖A‖∞`.
const RESIDUAL_LIMIT_SCALE: f64 = 1e-10;

/// Stationary distribution plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Stationary distribution; its time is the `∞` marker.
    pub distribution: DistributionVector,
    /// `‖π·A‖∞` achieved by the solve.
    pub residual: f64,
    /// Number of recurrent classes in the chain. Greater than one means the
    /// stationary distribution returned is the one selected by the start
    /// state and is not unique.
    pub recurrent_class_count: usize,
}

impl SteadyState {
    pub fn is_unique(&self) -> bool {
        self.recurrent_class_count == 1
    }
}

/// Stationary distribution of a chain with a single recurrent class.
/// Fails with [`Error::NonUniqueStationary`] when several closed classes
/// exist; use [`steady_state_from`] to resolve relative to a start state.
pub fn steady_state(m: &RateMatrix) -> Result<SteadyState> {
    let adj = m.adjacency();
    let classes = graph::recurrent_classes(&adj);
    match classes.as_slice() {
        [only] => solve_on_class(m, only, 1),
        _ => Err(Error::NonUniqueStationary {
            recurrent_classes: classes.len(),
        }),
    }
}

/// Stationary distribution of the recurrent class reachable from `start`.
/// Loudly flags non-uniqueness through
/// [`recurrent_class_count`](SteadyState::recurrent_class_count).
pub fn steady_state_from(m: &RateMatrix, start: usize) -> Result<SteadyState> {
    if start >= m.dim() {
        return Err(Error::InvalidInput(format!(
            "start state {start} out of range for dimension {}",
            m.dim()
        )));
    }
    let adj = m.adjacency();
    let classes = graph::recurrent_classes(&adj);
    let reachable = graph::reachable_from(&adj, start);
    let hit: Vec<&Vec<usize>> = classes
        .iter()
        .filter(|class| class.iter().any(|&s| reachable[s]))
        .collect();
    match hit.as_slice() {
        [only] => solve_on_class(m, only, classes.len()),
        _ => Err(Error::InvalidInput(format!(
            "{} recurrent classes reachable from state {start}; the limit distribution depends \
             on absorption probabilities and is not stationary",
            hit.len()
        ))),
    }
}

fn solve_on_class(m: &RateMatrix, class: &[usize], class_count: usize) -> Result<SteadyState> {
    let k = class.len();
    let mut local = vec![usize::MAX; m.dim()];
    for (ci, &gi) in class.iter().enumerate() {
        local[gi] = ci;
    }

    // Transposed balance equations restricted to the class, row-major.
    let mut a = vec![0.0; k * k];
    for (ci, &gi) in class.iter().enumerate() {
        a[ci * k + ci] += m.diag()[gi];
        for (col, rate) in m.off_diagonal(gi) {
            let cj = local[col];
            // a recurrent class is closed, so every edge stays inside
            debug_assert_ne!(cj, usize::MAX);
            a[cj * k + ci] += rate;
        }
    }
    // Replace the last balance equation with Σπ = 1.
    for c in 0..k {
        a[(k - 1) * k + c] = 1.0;
    }
    let mut rhs = vec![0.0; k];
    rhs[k - 1] = 1.0;

    let limit = RESIDUAL_LIMIT_SCALE * m.inf_norm();
    let pi_local = lu_solve(a, k, rhs).ok_or(Error::SingularSystem {
        residual: f64::INFINITY,
        limit,
    })?;

    let mut pi = vec![0.0; m.dim()];
    for (ci, &gi) in class.iter().enumerate() {
        let v = pi_local[ci];
        if v < -1e-12 {
            return Err(Error::SingularSystem {
                residual: v.abs(),
                limit,
            });
        }
        pi[gi] = v.max(0.0);
    }
    let total: f64 = pi.iter().sum();
    for v in pi.iter_mut() {
        *v /= total;
    }

    let mut residual_vec = vec![0.0; m.dim()];
    m.mul_left(&pi, &mut residual_vec);
    let residual = residual_vec.iter().fold(0.0f64, |acc, &r| acc.max(r.abs()));
    if residual > limit {
        return Err(Error::SingularSystem { residual, limit });
    }

    Ok(SteadyState {
        distribution: DistributionVector::new(pi, f64::INFINITY)?,
        residual,
        recurrent_class_count: class_count,
    })
}

/// Dense LU with partial pivoting; returns `None` on a zero pivot.
fn lu_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].abs();
        for r in col + 1..n {
            let mag = a[r * n + col].abs();
            if mag > pivot_mag {
                pivot_row = r;
                pivot_mag = mag;
            }
        }
        if pivot_mag == 0.0 {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[r * n + col] = 0.0;
            for c in col + 1..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * b[c];
        }
        b[r] = acc / a[r * n + r];
    }
    Some(b)
}

/// Debug fallback: power iteration on the uniformized kernel `P = I + A/Λ`.
/// Converges for irreducible chains; [`steady_state`] is the primary route.
pub fn steady_state_power_iteration(
    m: &RateMatrix,
    tol: f64,
    max_iterations: usize,
) -> Result<DistributionVector> {
    let dim = m.dim();
    let rate = m.uniformization_rate();
    let mut v = vec![1.0 / dim as f64; dim];
    let mut tmp = vec![0.0; dim];
    for _ in 0..max_iterations {
        m.mul_left(&v, &mut tmp);
        let mut delta = 0.0f64;
        for (vi, &ti) in v.iter_mut().zip(tmp.iter()) {
            let next = *vi + ti / rate;
            delta = delta.max((next - *vi).abs());
            *vi = next;
        }
        if delta < tol {
            return DistributionVector::new(v, f64::INFINITY);
        }
    }
    Err(Error::InvalidInput(format!(
        "power iteration did not converge within {max_iterations} iterations"
    )))
}

/// `‖X(horizon) − π‖∞`: how far the transient solution still is from the
/// stationary one. A horizon of at least `20/μ` is a reasonable choice.
pub fn final_value_check(
    m: &RateMatrix,
    x0: &DistributionVector,
    horizon: f64,
) -> Result<f64> {
    if horizon < 0.0 {
        return Err(Error::InvalidInput("horizon must be nonnegative".into()));
    }
    let steady = match steady_state(m) {
        Ok(s) => s,
        Err(Error::NonUniqueStationary { .. }) => {
            let start = x0
                .probabilities()
                .iter()
                .position(|&p| p > 0.0)
                .ok_or_else(|| Error::InvalidInput("empty initial distribution".into()))?;
            steady_state_from(m, start)?
        }
        Err(e) => return Err(e),
    };
    let sol = transient_distribution(m, x0, &[horizon], DEFAULT_TRUNCATION_TOL)?;
    let gap = sol
        .at(0)
        .probabilities()
        .iter()
        .zip(steady.distribution.probabilities())
        .map(|(x, p)| (x - p).abs())
        .fold(0.0, f64::max);
    Ok(gap)
}
