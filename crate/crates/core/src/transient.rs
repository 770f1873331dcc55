//! Transient distribution of the chain.
//!
//! The primary solver is uniformization: with `Λ ≥ max|a_ii|` and
//! `P = I + A/Λ`, the distribution at time `t` is the Poisson-weighted series
//!
//! ```text
//! X(t) = Σ_n  pmf(Λt; n) · X₀ Pⁿ
//! ```
//!
//! truncated once the accumulated Poisson mass reaches `1 - tol`, which
//! certifies the truncation error and keeps every entry nonnegative. Matrix
//! powers are never formed; the series accumulates vector-kernel products.
//! A fixed-step fourth-order integrator of the forward equations
//! `dX/dt = X·A` serves as an independent numerical cross-check.

use crate::error::{Error, Result};
use crate::generator::RateMatrix;
use crate::math::{poisson_weight, truncated_poisson_weights};
use crate::model::{InitialOccupancy, ModelOptions, ScenarioParams};
use crate::statespace::StateSpace;

/// Default series truncation tolerance.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-10;

/// Entries this far below zero are treated as round-off and clamped.
const NEGATIVE_CLAMP: f64 = -1e-14;

/// Probability row vector over the state space at one instant.
/// `time_s` is `f64::INFINITY` for stationary distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector {
    probabilities: Vec<f64>,
    time_s: f64,
}

impl DistributionVector {
    /// Wrap a probability vector, clamping round-off negatives to zero.
    /// Entries below `-1e-14` or non-finite entries are rejected.
    pub fn new(mut probabilities: Vec<f64>, time_s: f64) -> Result<Self> {
        for p in probabilities.iter_mut() {
            if !p.is_finite() || *p < NEGATIVE_CLAMP {
                return Err(Error::InvalidInput(format!(
                    "probability entry {p} is not a valid probability"
                )));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        Ok(Self {
            probabilities,
            time_s,
        })
    }

    /// Point mass on state `(i, j)`.
    pub fn point_mass(space: &StateSpace, i: u32, j: u32) -> Result<Self> {
        let idx = space.index_of(i, j).ok_or_else(|| {
            Error::InvalidInput(format!("({i},{j}) is not a state for n={}", space.max_vehicles()))
        })?;
        let mut probabilities = vec![0.0; space.len()];
        probabilities[idx] = 1.0;
        Ok(Self {
            probabilities,
            time_s: 0.0,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let s = self.sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "initial distribution must sum to 1 (got {s})"
            )));
        }
        Ok(())
    }
}

/// Distribution at time zero implied by the model options: a point mass on
/// `(i₀, j₀)`, or the stationary occupancy law over `j` (conditioned on
/// `j ≥ i₀`) when the occupancy is marked stationary.
pub fn initial_distribution(
    space: &StateSpace,
    params: &ScenarioParams,
    options: &ModelOptions,
) -> Result<DistributionVector> {
    if space.max_vehicles() != params.max_vehicles() {
        return Err(Error::InvalidInput(
            "state space and params disagree on the population cap".into(),
        ));
    }
    let n = space.max_vehicles();
    let i0 = options.initial_i;
    if i0 > n {
        return Err(Error::config("initial_i", "must not exceed n_vehicles"));
    }
    match options.initial_j {
        InitialOccupancy::Fixed(j0) => {
            if j0 > n {
                return Err(Error::config("initial_j", "must not exceed n_vehicles"));
            }
            if i0 > j0 {
                return Err(Error::config("initial_i", "must not exceed initial_j"));
            }
            DistributionVector::point_mass(space, i0, j0)
        }
        InitialOccupancy::Stationary => {
            let weights = truncated_poisson_weights(n);
            let tail: f64 = weights[i0 as usize..].iter().sum();
            let mut probabilities = vec![0.0; space.len()];
            for j in i0..=n {
                let idx = space.index_of(i0, j).expect("state in range");
                probabilities[idx] = weights[j as usize] / tail;
            }
            DistributionVector::new(probabilities, 0.0)
        }
    }
}

/// Transient distributions on an ascending time grid.
#[derive(Debug, Clone)]
pub struct TransientSolution {
    pub times: Vec<f64>,
    pub distributions: Vec<DistributionVector>,
    pub truncation_tolerance: f64,
}

impl TransientSolution {
    /// Distribution at the `k`-th grid time.
    pub fn at(&self, k: usize) -> &DistributionVector {
        &self.distributions[k]
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    for pair in times.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidInput(
                "time grid must be strictly increasing".into(),
            ));
        }
    }
    if times[0] < 0.0 {
        return Err(Error::InvalidInput("times must be nonnegative".into()));
    }
    Ok(())
}

/// Solve `X(t) = X₀·e^{At}` on the given grid by uniformization. Each grid
/// time is expanded from zero independently, so the certified truncation
/// bound `tol` applies per time and no error accumulates across the grid.
pub fn transient_distribution(
    m: &RateMatrix,
    x0: &DistributionVector,
    times: &[f64],
    tol: f64,
) -> Result<TransientSolution> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::InvalidInput(format!(
            "truncation tolerance must lie in (0, 1e-3], got {tol}"
        )));
    }
    if x0.probabilities().len() != m.dim() {
        return Err(Error::InvalidInput(
            "initial distribution does not match generator dimension".into(),
        ));
    }
    check_times(times)?;
    x0.check_normalized()?;

    let rate = m.uniformization_rate();
    let mut distributions = Vec::with_capacity(times.len());
    for &t in times {
        distributions.push(uniformized_point(m, x0, t, rate, tol)?);
    }
    Ok(TransientSolution {
        times: times.to_vec(),
        distributions,
        truncation_tolerance: tol,
    })
}

fn uniformized_point(
    m: &RateMatrix,
    x0: &DistributionVector,
    t: f64,
    rate: f64,
    tol: f64,
) -> Result<DistributionVector> {
    let q = rate * t;
    if q == 0.0 {
        return DistributionVector::new(x0.probabilities().to_vec(), t);
    }
    let ln_q = q.ln();
    let dim = m.dim();
    let mut v = x0.probabilities().to_vec();
    let mut tmp = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    let mut cum = 0.0;
    let mut n: u64 = 0;
    // Poisson mass is concentrated within O(√q) of q; far beyond that the
    // tail criterion must already have fired.
    let max_terms = (q + 12.0 * (q + 100.0).sqrt() + 200.0) as u64;
    loop {
        let w = poisson_weight(n, q, ln_q);
        if w > 0.0 {
            for (a, &vi) in acc.iter_mut().zip(v.iter()) {
                *a += w * vi;
            }
            cum += w;
        }
        if cum >= 1.0 - tol {
            break;
        }
        if n >= max_terms {
            return Err(Error::InvalidInput(format!(
                "uniformization series did not reach mass 1-{tol} within {max_terms} terms (Λt = {q})"
            )));
        }
        // v ← v·P with P = I + A/Λ
        m.mul_left(&v, &mut tmp);
        for (vi, &ti) in v.iter_mut().zip(tmp.iter()) {
            *vi += ti / rate;
        }
        n += 1;
    }
    DistributionVector::new(acc, t)
}

/// Classic fixed-step fourth-order integration of `dX/dt = X·A` from 0 to
/// `t`. Independent of the uniformization path; used as a numerical oracle.
/// The step must satisfy `step ≤ 0.1/Λ`.
pub fn ode_reference(
    m: &RateMatrix,
    x0: &DistributionVector,
    t: f64,
    step: f64,
) -> Result<DistributionVector> {
    let mut out = ode_reference_grid(m, x0, &[t], step)?;
    Ok(out.pop().expect("one grid point"))
}

/// Same integrator recording the solution at every grid time in one pass.
pub fn ode_reference_grid(
    m: &RateMatrix,
    x0: &DistributionVector,
    times: &[f64],
    step: f64,
) -> Result<Vec<DistributionVector>> {
    check_times(times)?;
    x0.check_normalized()?;
    if x0.probabilities().len() != m.dim() {
        return Err(Error::InvalidInput(
            "initial distribution does not match generator dimension".into(),
        ));
    }
    let rate = m.uniformization_rate();
    let limit = if rate > 0.0 { 0.1 / rate } else { f64::INFINITY };
    if !step.is_finite() || step <= 0.0 || step > limit {
        return Err(Error::InvalidInput(format!(
            "integration step {step} exceeds stability margin {limit:.6e}"
        )));
    }

    let dim = m.dim();
    let mut x = x0.probabilities().to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];

    let mut outputs = Vec::with_capacity(times.len());
    let mut t_now = 0.0;
    for &t in times {
        let span = t - t_now;
        if span > 0.0 {
            let n_sub = (span / step).ceil().max(1.0) as u64;
            let h = span / n_sub as f64;
            for _ in 0..n_sub {
                m.mul_left(&x, &mut k1);
                for i in 0..dim {
                    stage[i] = x[i] + 0.5 * h * k1[i];
                }
                m.mul_left(&stage, &mut k2);
                for i in 0..dim {
                    stage[i] = x[i] + 0.5 * h * k2[i];
                }
                m.mul_left(&stage, &mut k3);
                for i in 0..dim {
                    stage[i] = x[i] + h * k3[i];
                }
                m.mul_left(&stage, &mut k4);
                for i in 0..dim {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        t_now = t;
        let clamped: Vec<f64> = x.iter().map(|&p| p.max(0.0)).collect();
        outputs.push(DistributionVector::new(clamped, t)?);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::build_rate_matrix;
    use crate::model::ScenarioParams;

    fn params(l: f64, v: f64, n: u32, pe: f64, range: f64, d: f64) -> ScenarioParams {
        ScenarioParams::new("test", l, v, n, pe, range, d).unwrap()
    }

    fn urban(n: u32) -> ScenarioParams {
        params(100.0, 30.0 / 3.6, n, 1e-5, 30.0, 5.0)
    }

    fn build(p: &ScenarioParams) -> (StateSpace, RateMatrix) {
        let space = StateSpace::enumerate(p.max_vehicles()).unwrap();
        let m = build_rate_matrix(p, &ModelOptions::defaults_for(p.max_vehicles()), &space).unwrap();
        (space, m)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn time_zero_returns_initial_distribution() {
        let p = urban(4);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 4).unwrap();
        let sol = transient_distribution(&m, &x0, &[0.0], 1e-10).unwrap();
        assert_eq!(sol.at(0).probabilities(), x0.probabilities());
        let ode = ode_reference(&m, &x0, 0.0, 0.01).unwrap();
        assert_eq!(ode.probabilities(), x0.probabilities());
    }

    /// With n = 1 and certain transmission failure the chain collapses to the
    /// two states (0,0) and (0,1) exchanging at rates λ = μ. From (0,1) the
    /// occupancy probability is p(t) = ½(1 + e^{-2μt}).
    #[test]
    fn two_state_birth_death_closed_form() {
        let p = params(100.0, 10.0, 1, 1.0, 30.0, 5.0);
        let space = StateSpace::enumerate(1).unwrap();
        let m = build_rate_matrix(&p, &ModelOptions::defaults_for(1), &space).unwrap();
        let x0 = DistributionVector::point_mass(&space, 0, 1).unwrap();
        let mu = p.departure_rate();
        let idx01 = space.index_of(0, 1).unwrap();
        let idx00 = space.index_of(0, 0).unwrap();

        let times = [0.5, 1.0 / mu, 25.0];
        let sol = transient_distribution(&m, &x0, &times, 1e-12).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let expect = 0.5 * (1.0 + (-2.0 * mu * t).exp());
            let got = sol.at(k).probabilities()[idx01];
            assert!((got - expect).abs() < 1e-11, "t={t}: {got} vs {expect}");
            let got00 = sol.at(k).probabilities()[idx00];
            assert!((got00 - (1.0 - expect)).abs() < 1e-11);
        }

        // the integrator agrees with the closed form too
        let ode = ode_reference(&m, &x0, 1.0 / mu, 0.005 / m.uniformization_rate()).unwrap();
        let expect = 0.5 * (1.0 + (-2.0f64).exp());
        assert!((ode.probabilities()[idx01] - expect).abs() < 1e-8);
    }

    #[test]
    fn solver_agrees_with_integrator() {
        let p = urban(10);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 10).unwrap();
        let sol = transient_distribution(&m, &x0, &[30.0], 1e-10).unwrap();
        let ode = ode_reference(&m, &x0, 30.0, 0.02 / m.uniformization_rate()).unwrap();
        let diff = max_abs_diff(sol.at(0).probabilities(), ode.probabilities());
        assert!(diff < 1e-6, "max-abs difference {diff}");
    }

    #[test]
    fn grid_solution_stays_normalized() {
        let p = urban(8);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 8).unwrap();
        let times: Vec<f64> = (1..=60).map(|k| k as f64 * 0.5).collect();
        let tol = 1e-10;
        let sol = transient_distribution(&m, &x0, &times, tol).unwrap();
        for d in &sol.distributions {
            assert!((d.sum() - 1.0).abs() < tol + 1e-12);
            assert!(d.probabilities().iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn integrator_conserves_mass() {
        let p = urban(6);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 2, 5).unwrap();
        let ode = ode_reference(&m, &x0, 30.0, 0.05 / m.uniformization_rate()).unwrap();
        assert!((ode.sum() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn halving_tolerance_moves_entries_at_most_tol() {
        let p = urban(6);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 6).unwrap();
        for &tol in &[1e-6, 1e-8, 1e-10] {
            let a = transient_distribution(&m, &x0, &[7.5], tol).unwrap();
            let b = transient_distribution(&m, &x0, &[7.5], tol / 2.0).unwrap();
            let diff = max_abs_diff(a.at(0).probabilities(), b.at(0).probabilities());
            assert!(diff <= tol, "tol={tol}: drift {diff}");
        }
    }

    #[test]
    fn semigroup_property() {
        let p = urban(7);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 7).unwrap();
        let tol = 1e-10;
        let (t1, t2) = (4.0, 9.0);

        let direct = transient_distribution(&m, &x0, &[t1 + t2], tol).unwrap();
        let first = transient_distribution(&m, &x0, &[t1], tol).unwrap();
        let mid = DistributionVector::new(first.at(0).probabilities().to_vec(), 0.0).unwrap();
        let second = transient_distribution(&m, &mid, &[t2], tol).unwrap();

        let diff = max_abs_diff(direct.at(0).probabilities(), second.at(0).probabilities());
        assert!(diff < 5.0 * tol, "semigroup drift {diff}");
    }

    #[test]
    fn long_horizon_does_not_underflow() {
        // Λt far beyond e^-745: the log-space weights must still sum to 1-tol.
        let p = urban(5);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 5).unwrap();
        let sol = transient_distribution(&m, &x0, &[2000.0], 1e-10).unwrap();
        assert!((sol.at(0).sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = urban(3);
        let (space, m) = build(&p);
        let x0 = DistributionVector::point_mass(&space, 1, 3).unwrap();
        // unnormalized start
        let bad = DistributionVector::new(vec![0.5; space.len()], 0.0).unwrap();
        assert!(transient_distribution(&m, &bad, &[1.0], 1e-10).is_err());
        // empty and descending grids
        assert!(transient_distribution(&m, &x0, &[], 1e-10).is_err());
        assert!(transient_distribution(&m, &x0, &[2.0, 1.0], 1e-10).is_err());
        // tolerance out of range
        assert!(transient_distribution(&m, &x0, &[1.0], 0.0).is_err());
        assert!(transient_distribution(&m, &x0, &[1.0], 1e-2).is_err());
        // integrator step beyond the stability margin
        let too_big = 0.2 / m.uniformization_rate();
        assert!(ode_reference(&m, &x0, 1.0, too_big).is_err());
    }

    #[test]
    fn initial_distribution_point_and_stationary() {
        let p = urban(5);
        let space = StateSpace::enumerate(5).unwrap();
        let fixed = ModelOptions::defaults_for(5);
        let x = initial_distribution(&space, &p, &fixed).unwrap();
        assert_eq!(x.probabilities()[space.index_of(1, 5).unwrap()], 1.0);

        let stationary = ModelOptions {
            initial_j: InitialOccupancy::Stationary,
            ..fixed
        };
        let x = initial_distribution(&space, &p, &stationary).unwrap();
        assert!((x.sum() - 1.0).abs() < 1e-12);
        let weights = truncated_poisson_weights(5);
        let tail: f64 = weights[1..].iter().sum();
        for j in 1..=5u32 {
            let got = x.probabilities()[space.index_of(1, j).unwrap()];
            assert!((got - weights[j as usize] / tail).abs() < 1e-14);
        }
        // no mass anywhere else
        assert_eq!(x.probabilities()[space.index_of(0, 0).unwrap()], 0.0);
        assert_eq!(x.probabilities()[space.index_of(2, 3).unwrap()], 0.0);
    }

    #[test]
    fn distribution_vector_clamps_roundoff() {
        let d = DistributionVector::new(vec![1.0, -5e-15], 0.0).unwrap();
        assert_eq!(d.probabilities()[1], 0.0);
        assert!(DistributionVector::new(vec![1.0, -1e-12], 0.0).is_err());
        assert!(DistributionVector::new(vec![f64::NAN], 0.0).is_err());
    }
}
