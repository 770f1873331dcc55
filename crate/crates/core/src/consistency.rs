//! Consistency probabilities and the sweep tables behind the result
//! surfaces.
//!
//! The segment is consistent for a target `t` when at least `t` occupants
//! hold the record, so the probability is the direct sum of distribution
//! mass over states with `i ≥ t`. Sweeps re-instantiate the population `n`
//! cell by cell (the arrival rate and coverage count depend on it), solve
//! each chain, and emit rows in a deterministic `(n, t, time)` order;
//! cells are independent and evaluated in parallel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::build_rate_matrix;
use crate::model::{InitialOccupancy, ModelOptions, ScenarioParams};
use crate::statespace::StateSpace;
use crate::steady::{steady_state, steady_state_from};
use crate::transient::{
    initial_distribution, transient_distribution, DistributionVector, DEFAULT_TRUNCATION_TOL,
};

/// One sweep cell. `time_s` is `None` for stationary rows. Cells with
/// `t_target > n` are kept (grids stay rectangular for plotting) with
/// `p_cons = 0` and the marker set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub scenario: String,
    pub n: u32,
    pub t_target: u32,
    pub time_s: Option<f64>,
    pub p_cons: f64,
    /// True when the target exceeds the population and the row is a filler.
    pub t_exceeds_n: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
}

/// Probability that at least `t_target` occupants hold the record under `x`:
/// the mass on states with `i ≥ t_target`.
pub fn consistency_probability(
    x: &DistributionVector,
    space: &StateSpace,
    t_target: u32,
) -> Result<f64> {
    if t_target < 1 || t_target > space.max_vehicles() {
        return Err(Error::InvalidInput(format!(
            "t_target must satisfy 1 ≤ t ≤ {}, got {t_target}",
            space.max_vehicles()
        )));
    }
    if x.probabilities().len() != space.len() {
        return Err(Error::InvalidInput(
            "distribution does not match the state space".into(),
        ));
    }
    Ok(space
        .states()
        .iter()
        .zip(x.probabilities())
        .filter(|(&(i, _), _)| i >= t_target)
        .map(|(_, &p)| p)
        .sum())
}

fn solve_steady_cell(
    params: &ScenarioParams,
    options: &ModelOptions,
) -> Result<(StateSpace, DistributionVector)> {
    let n = params.max_vehicles();
    let space = StateSpace::enumerate(n)?;
    let m = build_rate_matrix(params, options, &space)?;
    let ss = match steady_state(&m) {
        Ok(s) => s,
        Err(Error::NonUniqueStationary { .. }) => {
            // resolve relative to the configured start state
            let j0 = match options.initial_j {
                InitialOccupancy::Fixed(j) => j,
                InitialOccupancy::Stationary => n,
            };
            let start = space
                .index_of(options.initial_i.min(j0), j0)
                .expect("clamped start state in range");
            steady_state_from(&m, start)?
        }
        Err(e) => return Err(e),
    };
    Ok((space, ss.distribution))
}

/// Stationary consistency for every `(n, t_target)` in the given ranges.
/// Each `n` gets its own state space and generator.
pub fn sweep_steady(
    params: &ScenarioParams,
    options: &ModelOptions,
    n_range: &[u32],
    t_range: &[u32],
) -> Result<ConsistencyTable> {
    check_ranges(n_range, t_range)?;
    let per_n: Vec<Vec<ConsistencyRow>> = n_range
        .par_iter()
        .map(|&n| -> Result<Vec<ConsistencyRow>> {
            let p = params.with_max_vehicles(n).map_err(|e| e.at_cell(n, None))?;
            let o = options.clamped_to(n);
            let (space, pi) = solve_steady_cell(&p, &o).map_err(|e| e.at_cell(n, None))?;
            t_range
                .iter()
                .map(|&t| {
                    let (p_cons, filler) = if t > n {
                        (0.0, true)
                    } else {
                        let v = consistency_probability(&pi, &space, t)
                            .map_err(|e| e.at_cell(n, Some(t)))?;
                        (v, false)
                    };
                    Ok(ConsistencyRow {
                        scenario: params.name().to_string(),
                        n,
                        t_target: t,
                        time_s: None,
                        p_cons,
                        t_exceeds_n: filler,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyTable {
        rows: per_n.into_iter().flatten().collect(),
    })
}

/// Transient consistency for every `(n, t_target, time)` cell.
pub fn sweep_transient(
    params: &ScenarioParams,
    options: &ModelOptions,
    n_range: &[u32],
    t_range: &[u32],
    times: &[f64],
) -> Result<ConsistencyTable> {
    check_ranges(n_range, t_range)?;
    let per_n: Vec<Vec<ConsistencyRow>> = n_range
        .par_iter()
        .map(|&n| -> Result<Vec<ConsistencyRow>> {
            let p = params.with_max_vehicles(n).map_err(|e| e.at_cell(n, None))?;
            let o = options.clamped_to(n);
            let space = StateSpace::enumerate(n).map_err(|e| e.at_cell(n, None))?;
            let m = build_rate_matrix(&p, &o, &space).map_err(|e| e.at_cell(n, None))?;
            let x0 = initial_distribution(&space, &p, &o).map_err(|e| e.at_cell(n, None))?;
            let sol = transient_distribution(&m, &x0, times, DEFAULT_TRUNCATION_TOL)
                .map_err(|e| e.at_cell(n, None))?;
            let mut rows = Vec::with_capacity(t_range.len() * times.len());
            for &t in t_range {
                for (k, &time) in times.iter().enumerate() {
                    let (p_cons, filler) = if t > n {
                        (0.0, true)
                    } else {
                        let v = consistency_probability(sol.at(k), &space, t)
                            .map_err(|e| e.at_cell(n, Some(t)))?;
                        (v, false)
                    };
                    rows.push(ConsistencyRow {
                        scenario: params.name().to_string(),
                        n,
                        t_target: t,
                        time_s: Some(time),
                        p_cons,
                        t_exceeds_n: filler,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyTable {
        rows: per_n.into_iter().flatten().collect(),
    })
}

fn check_ranges(n_range: &[u32], t_range: &[u32]) -> Result<()> {
    if n_range.is_empty() || t_range.is_empty() {
        return Err(Error::InvalidInput("sweep ranges must be nonempty".into()));
    }
    if n_range.iter().any(|&n| n < 1) {
        return Err(Error::InvalidInput("populations must satisfy n ≥ 1".into()));
    }
    if t_range.iter().any(|&t| t < 1) {
        return Err(Error::InvalidInput("targets must satisfy t ≥ 1".into()));
    }
    Ok(())
}
