//! Exact stochastic simulation of the chain, used to arbitrate the analytic
//! solvers.
//!
//! Each run samples a continuous-time jump trajectory from the same four
//! transition families the generator encodes: the waiting time in a state is
//! exponential with the total outflow rate and the event is chosen
//! proportionally to the individual rates. Refresh events sample the
//! reachable-count branch first, then the delivered count `k` by inversion
//! of the binomial mass; `k = 0` consumes the event without a state change,
//! which is statistically identical to the generator's dropped self-loops.
//!
//! Run `r` draws from a dedicated stream of a counter-based generator seeded
//! by `(seed, r)`, so results are reproducible and independent of how runs
//! are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::consistency::consistency_probability;
use crate::error::{Error, Result};
use crate::generator::build_rate_matrix;
use crate::math::{binom_pmf, truncated_poisson_weights};
use crate::model::{InitialOccupancy, ModelOptions, ScenarioParams};
use crate::statespace::StateSpace;
use crate::transient::{initial_distribution, transient_distribution, DEFAULT_TRUNCATION_TOL};

/// Monte Carlo estimate of the consistency curve for one target.
#[derive(Debug, Clone)]
pub struct SimulationEstimate {
    pub t_target: u32,
    pub times: Vec<f64>,
    pub p_hat: Vec<f64>,
    /// Normal-approximation 95% half width, `1.96·√(p̂(1-p̂)/n)`.
    pub half_width_95: Vec<f64>,
    pub n_runs: u64,
    pub seed: u64,
}

/// One grid cell of the analytic-versus-empirical comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub time_s: f64,
    pub p_hat: f64,
    pub half_width_95: f64,
    pub p_analytic: f64,
    pub z: f64,
    /// Normal-approximation exemption: fewer than five expected successes
    /// or failures at this cell.
    pub exempt: bool,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub t_target: u32,
    pub n_runs: u64,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
    pub max_abs_gap: f64,
    /// Cells with `|z| > 4` that are not exempt.
    pub flagged: usize,
}

struct ChainSampler {
    n: u32,
    lambda: f64,
    mu: f64,
    refresh_rate: f64,
    n_lo: u32,
    n_hi: u32,
    p1: f64,
    q: f64,
    p: f64,
    source_always_transmits: bool,
}

impl ChainSampler {
    fn new(params: &ScenarioParams, options: &ModelOptions) -> Self {
        Self {
            n: params.max_vehicles(),
            lambda: params.arrival_rate(),
            mu: params.departure_rate(),
            refresh_rate: 1.0 / params.refresh_period_s(),
            n_lo: params.n_ave().floor() as u32,
            n_hi: params.n_ave().ceil() as u32,
            p1: params.p1(),
            q: 1.0 - params.p_fail(),
            p: params.p_fail(),
            source_always_transmits: options.source_always_transmits,
        }
    }

    fn initial_state(&self, options: &ModelOptions, rng: &mut ChaCha8Rng) -> (u32, u32) {
        let i0 = options.initial_i;
        match options.initial_j {
            InitialOccupancy::Fixed(j0) => (i0, j0),
            InitialOccupancy::Stationary => {
                // occupancy law conditioned on j ≥ i0
                let weights = truncated_poisson_weights(self.n);
                let tail: f64 = weights[i0 as usize..].iter().sum();
                let u = rng.gen::<f64>() * tail;
                let mut cum = 0.0;
                for j in i0..=self.n {
                    cum += weights[j as usize];
                    if u < cum {
                        return (i0, j);
                    }
                }
                (i0, self.n)
            }
        }
    }

    fn exponential(&self, total_rate: f64, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        -(1.0 - u).ln() / total_rate
    }

    fn sample_delivery(&self, gap: u32, rng: &mut ChaCha8Rng) -> u32 {
        let base = if rng.gen::<f64>() < self.p1 {
            self.n_lo
        } else {
            self.n_hi
        };
        let reach = base.min(gap);
        // inversion on the binomial mass
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        for k in 0..=reach {
            cum += binom_pmf(k, reach, self.q, self.p);
            if u < cum {
                return k;
            }
        }
        reach
    }

    /// Indicator of `i(t) ≥ t_target` at each grid time.
    fn run(&self, options: &ModelOptions, times: &[f64], t_target: u32, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let (mut i, mut j) = self.initial_state(options, rng);
        let mut out = Vec::with_capacity(times.len());
        let mut g = 0;
        let mut t_now = 0.0;
        while g < times.len() {
            let r_arrival = if j < self.n { self.lambda } else { 0.0 };
            let r_uncovered = f64::from(j - i) * self.mu;
            let r_covered = f64::from(i) * self.mu;
            let r_refresh = if (i > 0 || self.source_always_transmits) && j > i {
                self.refresh_rate
            } else {
                0.0
            };
            let total = r_arrival + r_uncovered + r_covered + r_refresh;
            if total <= 0.0 {
                while g < times.len() {
                    out.push(i >= t_target);
                    g += 1;
                }
                break;
            }
            let t_next = t_now + self.exponential(total, rng);
            while g < times.len() && times[g] < t_next {
                out.push(i >= t_target);
                g += 1;
            }
            if g == times.len() {
                break;
            }
            t_now = t_next;
            let u = rng.gen::<f64>() * total;
            if u < r_arrival {
                j += 1;
            } else if u < r_arrival + r_uncovered {
                j -= 1;
            } else if u < r_arrival + r_uncovered + r_covered {
                i -= 1;
                j -= 1;
            } else {
                i += self.sample_delivery(j - i, rng);
            }
        }
        out
    }
}

fn rng_for_run(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn check_simulation_inputs(
    params: &ScenarioParams,
    options: &ModelOptions,
    times: &[f64],
    t_target: u32,
    n_runs: u64,
) -> Result<()> {
    if t_target < 1 || t_target > params.max_vehicles() {
        return Err(Error::InvalidInput(format!(
            "t_target must satisfy 1 ≤ t ≤ {}, got {t_target}",
            params.max_vehicles()
        )));
    }
    if n_runs < 1 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "time grid must be nonnegative and strictly increasing".into(),
        ));
    }
    let n = params.max_vehicles();
    if options.initial_i > n {
        return Err(Error::config("initial_i", "must not exceed n_vehicles"));
    }
    if let InitialOccupancy::Fixed(j0) = options.initial_j {
        if j0 > n || options.initial_i > j0 {
            return Err(Error::config("initial_j", "inconsistent with initial_i/n_vehicles"));
        }
    }
    Ok(())
}

/// Estimate the consistency curve by `n_runs` independent trajectories.
/// Identical inputs give identical output, bit for bit.
pub fn simulate_runs(
    params: &ScenarioParams,
    options: &ModelOptions,
    times: &[f64],
    t_target: u32,
    n_runs: u64,
    seed: u64,
) -> Result<SimulationEstimate> {
    check_simulation_inputs(params, options, times, t_target, n_runs)?;
    let sampler = ChainSampler::new(params, options);
    let counts: Vec<u64> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rng_for_run(seed, run);
            sampler.run(options, times, t_target, &mut rng)
        })
        .fold(
            || vec![0u64; times.len()],
            |mut acc, indicators| {
                for (a, hit) in acc.iter_mut().zip(indicators) {
                    *a += u64::from(hit);
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; times.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let n = n_runs as f64;
    let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let half_width_95 = p_hat
        .iter()
        .map(|&p| 1.96 * (p * (1.0 - p) / n).sqrt())
        .collect();
    Ok(SimulationEstimate {
        t_target,
        times: times.to_vec(),
        p_hat,
        half_width_95,
        n_runs,
        seed,
    })
}

/// Run the analytic solver and the simulator on the same grid and compare.
/// `z` is the deviation in analytic standard errors; cells where the normal
/// approximation is meaningless (fewer than five expected successes or
/// failures) are exempt from flagging.
pub fn estimate_vs_analytic(
    params: &ScenarioParams,
    options: &ModelOptions,
    t_target: u32,
    times: &[f64],
    n_runs: u64,
    seed: u64,
) -> Result<ComparisonReport> {
    let space = StateSpace::enumerate(params.max_vehicles())?;
    let m = build_rate_matrix(params, options, &space)?;
    let x0 = initial_distribution(&space, params, options)?;
    let sol = transient_distribution(&m, &x0, times, DEFAULT_TRUNCATION_TOL)?;
    let est = simulate_runs(params, options, times, t_target, n_runs, seed)?;

    let n = n_runs as f64;
    let mut rows = Vec::with_capacity(times.len());
    let mut max_abs_gap = 0.0f64;
    let mut flagged = 0;
    for (k, &time_s) in times.iter().enumerate() {
        let p_analytic = consistency_probability(sol.at(k), &space, t_target)?;
        let p_hat = est.p_hat[k];
        let gap = (p_hat - p_analytic).abs();
        max_abs_gap = max_abs_gap.max(gap);
        let se = (p_analytic * (1.0 - p_analytic) / n).sqrt();
        let z = if se > 0.0 {
            (p_hat - p_analytic) / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(p_hat - p_analytic)
        };
        let exempt = n * p_hat < 5.0 || n * (1.0 - p_hat) < 5.0;
        if z.abs() > 4.0 && !exempt {
            flagged += 1;
        }
        rows.push(ComparisonRow {
            time_s,
            p_hat,
            half_width_95: est.half_width_95[k],
            p_analytic,
            z,
            exempt,
        });
    }
    Ok(ComparisonReport {
        t_target,
        n_runs,
        seed,
        rows,
        max_abs_gap,
        flagged,
    })
}

/// Time-averaged occupancy histogram of a single long trajectory: an
/// independent empirical view of the stationary occupancy law.
pub fn empirical_j_occupancy(
    params: &ScenarioParams,
    options: &ModelOptions,
    horizon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let sampler = ChainSampler::new(params, options);
    let mut rng = rng_for_run(seed, 0);
    let (mut i, mut j) = sampler.initial_state(options, &mut rng);
    let mut occupancy = vec![0.0f64; params.max_vehicles() as usize + 1];
    let mut t_now = 0.0;
    while t_now < horizon {
        let r_arrival = if j < sampler.n { sampler.lambda } else { 0.0 };
        let r_uncovered = f64::from(j - i) * sampler.mu;
        let r_covered = f64::from(i) * sampler.mu;
        let r_refresh = if (i > 0 || sampler.source_always_transmits) && j > i {
            sampler.refresh_rate
        } else {
            0.0
        };
        let total = r_arrival + r_uncovered + r_covered + r_refresh;
        if total <= 0.0 {
            occupancy[j as usize] += horizon - t_now;
            break;
        }
        let t_next = t_now + sampler.exponential(total, &mut rng);
        occupancy[j as usize] += t_next.min(horizon) - t_now;
        if t_next >= horizon {
            break;
        }
        t_now = t_next;
        let u = rng.gen::<f64>() * total;
        if u < r_arrival {
            j += 1;
        } else if u < r_arrival + r_uncovered {
            j -= 1;
        } else if u < r_arrival + r_uncovered + r_covered {
            i -= 1;
            j -= 1;
        } else {
            i += sampler.sample_delivery(j - i, &mut rng);
        }
    }
    for v in occupancy.iter_mut() {
        *v /= horizon;
    }
    Ok(occupancy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l: f64, v: f64, n: u32, pe: f64, range: f64, d: f64) -> ScenarioParams {
        ScenarioParams::new("test", l, v, n, pe, range, d).unwrap()
    }

    fn urban(n: u32) -> ScenarioParams {
        params(100.0, 30.0 / 3.6, n, 1e-5, 30.0, 5.0)
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let p = urban(6);
        let o = ModelOptions::defaults_for(6);
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let a = simulate_runs(&p, &o, &times, 2, 500, 7).unwrap();
        let b = simulate_runs(&p, &o, &times, 2, 500, 7).unwrap();
        assert_eq!(a.p_hat, b.p_hat);
        assert_eq!(a.half_width_95, b.half_width_95);
        let c = simulate_runs(&p, &o, &times, 2, 500, 8).unwrap();
        assert_ne!(a.p_hat, c.p_hat);
    }

    #[test]
    fn blocked_dissemination_never_reaches_two() {
        let p = params(100.0, 10.0, 5, 1.0, 30.0, 5.0);
        let o = ModelOptions::defaults_for(5);
        let times = [0.0, 5.0, 15.0, 30.0];
        let est = simulate_runs(&p, &o, &times, 2, 400, 13).unwrap();
        assert!(est.p_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn time_zero_matches_initial_state_exactly() {
        let p = urban(5);
        let o = ModelOptions::defaults_for(5);
        let est = simulate_runs(&p, &o, &[0.0], 1, 300, 99).unwrap();
        assert_eq!(est.p_hat[0], 1.0);
        assert_eq!(est.half_width_95[0], 0.0);
    }

    #[test]
    fn half_width_formula() {
        let p = urban(4);
        let o = ModelOptions::defaults_for(4);
        let est = simulate_runs(&p, &o, &[2.0, 10.0], 2, 1000, 3).unwrap();
        for (ph, hw) in est.p_hat.iter().zip(&est.half_width_95) {
            let expect = 1.96 * (ph * (1.0 - ph) / 1000.0).sqrt();
            assert!((hw - expect).abs() < 1e-12);
        }
    }

    /// n = 1 with certain transmission failure: the single holder survives
    /// until an exponential departure, so P(i ≥ 1 at t) = e^{-μt}.
    #[test]
    fn single_holder_survival_closed_form() {
        let p = params(100.0, 10.0, 1, 1.0, 30.0, 5.0);
        let o = ModelOptions::defaults_for(1);
        let times = [2.0, 5.0, 10.0];
        let n_runs = 60_000;
        let est = simulate_runs(&p, &o, &times, 1, n_runs, 4242).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let expect = (-p.departure_rate() * t).exp();
            let tol = 4.0 * (expect * (1.0 - expect) / n_runs as f64).sqrt();
            assert!(
                (est.p_hat[k] - expect).abs() < tol,
                "t={t}: {} vs {expect} (tol {tol})",
                est.p_hat[k]
            );
        }
    }

    #[test]
    fn nested_targets_are_ordered() {
        let p = urban(8);
        let o = ModelOptions::defaults_for(8);
        let times: Vec<f64> = (0..=15).map(|k| k as f64 * 2.0).collect();
        let loose = simulate_runs(&p, &o, &times, 2, 2000, 11).unwrap();
        let strict = simulate_runs(&p, &o, &times, 5, 2000, 11).unwrap();
        for (a, b) in loose.p_hat.iter().zip(&strict.p_hat) {
            assert!(a >= b);
        }
    }

    #[test]
    fn comparison_report_on_small_chain() {
        let p = urban(6);
        let o = ModelOptions::defaults_for(6);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 3.0).collect();
        let report = estimate_vs_analytic(&p, &o, 2, &times, 20_000, 31).unwrap();
        assert_eq!(report.flagged, 0, "rows: {:?}", report.rows);
        assert!(report.max_abs_gap < 0.02);
    }

    #[test]
    fn stationary_initial_occupancy_is_sampled() {
        let p = urban(6);
        let o = ModelOptions {
            initial_j: InitialOccupancy::Stationary,
            ..ModelOptions::defaults_for(6)
        };
        // deterministic and valid: j ≥ i0 = 1 always
        let est = simulate_runs(&p, &o, &[0.0], 1, 500, 5).unwrap();
        assert_eq!(est.p_hat[0], 1.0);
    }

    #[test]
    fn occupancy_time_average_approaches_truncated_poisson() {
        let p = urban(5);
        let o = ModelOptions::defaults_for(5);
        let expect = truncated_poisson_weights(5);
        let chi_sq = |occ: &[f64]| -> f64 {
            occ.iter()
                .zip(&expect)
                .map(|(o, e)| (o - e).powi(2) / e)
                .sum()
        };
        let short = empirical_j_occupancy(&p, &o, 2_000.0, 77).unwrap();
        let long = empirical_j_occupancy(&p, &o, 80_000.0, 77).unwrap();
        assert!(
            chi_sq(&long) < chi_sq(&short),
            "chi-square did not shrink: {} vs {}",
            chi_sq(&long),
            chi_sq(&short)
        );
        assert!(chi_sq(&long) < 0.01);
    }

    #[test]
    fn rejects_target_beyond_population() {
        let p = urban(4);
        let o = ModelOptions::defaults_for(4);
        assert!(simulate_runs(&p, &o, &[1.0], 5, 10, 1).is_err());
        assert!(simulate_runs(&p, &o, &[1.0], 0, 10, 1).is_err());
        assert!(simulate_runs(&p, &o, &[], 1, 10, 1).is_err());
    }
}
