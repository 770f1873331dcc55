//! Construction of the sparse infinitesimal generator.
//!
//! Four transition families drive the chain:
//!
//! * arrival `(i,j) → (i,j+1)` at rate `λ`, blocked at `j = n`;
//! * uncovered departure `(i,j) → (i,j-1)` at rate `(j-i)·μ`;
//! * covered departure `(i,j) → (i-1,j-1)` at rate `i·μ`;
//! * record delivery `(i,j) → (i+k,j)` for `1 ≤ k ≤ j-i`, a refresh event
//!   reaching `k` of the uncovered occupants (see [`epidemic_rate`]).
//!
//! The `k = 0` delivery outcome is a null event: no entry, no
//! renormalization of the remaining mass.

use crate::error::{Error, Result};
use crate::graph;
use crate::math::binom_pmf;
use crate::model::{ModelOptions, ScenarioParams};
use crate::statespace::StateSpace;

/// Safety factor applied on top of the largest diagonal magnitude when the
/// generator is uniformized into a discrete kernel.
pub(crate) const UNIFORMIZATION_SAFETY: f64 = 1.02;

/// Sparse infinitesimal generator in compressed row form. Off-diagonal
/// entries are nonnegative rates; each diagonal is the negated sum of its
/// row, so rows sum to zero by construction.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    diag: Vec<f64>,
}

impl RateMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_offsets = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        let mut diag = Vec::with_capacity(dim);
        row_offsets.push(0);
        for row in rows {
            let mut total = 0.0;
            for (col, rate) in row {
                cols.push(col);
                rates.push(rate);
                total += rate;
            }
            diag.push(-total);
            row_offsets.push(cols.len());
        }
        Self {
            dim,
            row_offsets,
            cols,
            rates,
            diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal entries of one row as `(column, rate)` pairs.
    pub fn off_diagonal(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[row]..self.row_offsets[row + 1];
        span.map(move |k| (self.cols[k], self.rates[k]))
    }

    /// `y = x · A` for a row vector `x`.
    pub fn mul_left(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for row in 0..self.dim {
            let xr = x[row];
            if xr == 0.0 {
                continue;
            }
            y[row] += xr * self.diag[row];
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                y[self.cols[k]] += xr * self.rates[k];
            }
        }
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, &d| m.max(d.abs()))
    }

    /// Rate of the uniformized kernel `P = I + A/Λ`.
    pub fn uniformization_rate(&self) -> f64 {
        UNIFORMIZATION_SAFETY * self.max_abs_diag()
    }

    /// `‖A‖∞`: the largest absolute row sum, diagonal included.
    pub fn inf_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for row in 0..self.dim {
            let off: f64 = (self.row_offsets[row]..self.row_offsets[row + 1])
                .map(|k| self.rates[k].abs())
                .sum();
            best = best.max(off + self.diag[row].abs());
        }
        best
    }

    /// Largest absolute row sum residual `|a_ii + Σ_j a_ij|`.
    pub fn max_row_sum_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for row in 0..self.dim {
            let off: f64 = (self.row_offsets[row]..self.row_offsets[row + 1])
                .map(|k| self.rates[k])
                .sum();
            worst = worst.max((off + self.diag[row]).abs());
        }
        worst
    }

    pub fn negative_off_diagonals(&self) -> usize {
        self.rates.iter().filter(|&&r| r < 0.0).count()
    }

    /// Dump the generator as `row col rate` triples (diagonal included) for
    /// external inspection.
    pub fn write_triples<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in 0..self.dim {
            writeln!(w, "{} {} {}", row, row, self.diag[row])?;
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                writeln!(w, "{} {} {}", row, self.cols[k], self.rates[k])?;
            }
        }
        Ok(())
    }

    /// Adjacency over strictly positive off-diagonal rates.
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.dim)
            .map(|row| {
                self.off_diagonal(row)
                    .filter(|&(_, r)| r > 0.0)
                    .map(|(c, _)| c)
                    .collect()
            })
            .collect()
    }
}

/// Delivery rate of `(i,j) → (i+k,j)`: a refresh every `D` seconds reaches
/// `k` of the uncovered occupants, each independently failing with
/// probability `p_fail`. The reachable count mixes the integer neighbours of
/// `n_ave` (weight `p₁` on the floor), both capped by the `j - i` occupants
/// that do not yet hold the record.
///
/// `k = 0` is the null outcome and yields no rate. Zero whenever `k` exceeds
/// every reachable count.
pub fn epidemic_rate(i: u32, j: u32, k: u32, params: &ScenarioParams) -> f64 {
    debug_assert!(i <= j);
    if k == 0 {
        return 0.0;
    }
    let gap = j - i;
    let n_ave = params.n_ave();
    let n_lo = (n_ave.floor() as u32).min(gap);
    let n_hi = (n_ave.ceil() as u32).min(gap);
    let p1 = params.p1();
    let q = 1.0 - params.p_fail();
    let p = params.p_fail();
    let mixture = p1 * binom_pmf(k, n_lo, q, p) + (1.0 - p1) * binom_pmf(k, n_hi, q, p);
    mixture / params.refresh_period_s()
}

/// Build the generator over `space` from the four transition families.
/// Delivery transitions from `i = 0` states are included only when the
/// options keep the source transmitting.
pub fn build_rate_matrix(
    params: &ScenarioParams,
    options: &ModelOptions,
    space: &StateSpace,
) -> Result<RateMatrix> {
    if space.max_vehicles() != params.max_vehicles() {
        return Err(Error::InvalidInput(format!(
            "state space built for n={} but params have n={}",
            space.max_vehicles(),
            params.max_vehicles()
        )));
    }
    let n = params.max_vehicles();
    let lambda = params.arrival_rate();
    let mu = params.departure_rate();
    let index = |i: u32, j: u32| space.index_of(i, j).expect("state in range");

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(space.len());
    for &(i, j) in space.states() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        if j < n {
            row.push((index(i, j + 1), lambda));
        }
        if j > i {
            row.push((index(i, j - 1), f64::from(j - i) * mu));
        }
        if i > 0 {
            row.push((index(i - 1, j - 1), f64::from(i) * mu));
        }
        if i > 0 || options.source_always_transmits {
            for k in 1..=(j - i) {
                let rate = epidemic_rate(i, j, k, params);
                if rate > 0.0 {
                    row.push((index(i + k, j), rate));
                }
            }
        }
        rows.push(row);
    }
    Ok(RateMatrix::from_rows(rows))
}

/// Structural diagnostics of a generator, relative to a start state.
#[derive(Debug, Clone)]
pub struct GeneratorDiagnostics {
    pub max_row_sum_residual: f64,
    pub negative_off_diagonals: usize,
    /// States with no path from the start state.
    pub unreachable_states: Vec<usize>,
    pub recurrent_class_count: usize,
    pub unique_recurrent_class: bool,
}

/// Inspect row sums, signs, reachability from `start` and the recurrent
/// class structure. Diagnostics only; nothing here fails.
pub fn validate_generator(
    m: &RateMatrix,
    space: &StateSpace,
    start: usize,
) -> GeneratorDiagnostics {
    debug_assert_eq!(m.dim(), space.len());
    let adj = m.adjacency();
    let reachable = graph::reachable_from(&adj, start);
    let unreachable_states = (0..m.dim()).filter(|&s| !reachable[s]).collect();
    let classes = graph::recurrent_classes(&adj);
    GeneratorDiagnostics {
        max_row_sum_residual: m.max_row_sum_residual(),
        negative_off_diagonals: m.negative_off_diagonals(),
        unreachable_states,
        recurrent_class_count: classes.len(),
        unique_recurrent_class: classes.len() == 1,
    }
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

    fn rate_of(m: &RateMatrix, from: usize, to: usize) -> f64 {
        m.off_diagonal(from)
            .find(|&(c, _)| c == to)
            .map(|(_, r)| r)
            .unwrap_or(0.0)
    }

    #[test]
    fn smallest_chain_has_hand_checkable_rates() {
        let p = params(100.0, 10.0, 1, 0.2, 30.0, 5.0);
        let space = StateSpace::enumerate(1).unwrap();
        let opts = ModelOptions::defaults_for(1);
        let m = build_rate_matrix(&p, &opts, &space).unwrap();
        let s01 = space.index_of(0, 1).unwrap();
        let s00 = space.index_of(0, 0).unwrap();
        let s11 = space.index_of(1, 1).unwrap();

        // arrival blocked at j = n = 1: only the departure and delivery edges
        assert_eq!(m.off_diagonal(s01).count(), 2);
        // departure (0,1) -> (0,0) at μ
        assert!((rate_of(&m, s01, s00) - p.departure_rate()).abs() < 1e-15);
        // delivery (0,1) -> (1,1): n_ave = 0.3, p1 = 0.7, reachable count is
        // 0 (floor) or min(1, 1) = 1 (ceil), so rate = (1/D)·0.3·(1-p_e)
        let expect = 0.3 * 0.8 / 5.0;
        assert!((rate_of(&m, s01, s11) - expect).abs() < 1e-15);
        // covered departure (1,1) -> (0,0) at μ
        assert!((rate_of(&m, s11, s00) - p.departure_rate()).abs() < 1e-15);
    }

    #[test]
    fn urban_bulk_delivery_rate() {
        // n = 20: n_ave = 6, p1 = 0. From (1,20), k = 6 reaches (7,20) at
        // (1/5)·(1-1e-5)^6.
        let p = urban(20);
        let expect = 0.2 * (1.0 - 1e-5f64).powi(6);
        assert!((epidemic_rate(1, 20, 6, &p) - expect).abs() < 1e-12);
        assert!((expect - 0.1999880).abs() < 1e-7);

        let space = StateSpace::enumerate(20).unwrap();
        let m = build_rate_matrix(&p, &ModelOptions::defaults_for(20), &space).unwrap();
        let from = space.index_of(1, 20).unwrap();
        let to = space.index_of(7, 20).unwrap();
        assert!((rate_of(&m, from, to) - expect).abs() < 1e-12);
    }

    #[test]
    fn delivery_rate_caps_at_uncovered_occupants() {
        // Urban n = 10: n_ave = 3, p1 = 0; i=2, j=4 caps the count at 2.
        let p = urban(10);
        let expect = 0.2 * 2.0 * (1.0 - 1e-5) * 1e-5;
        let got = epidemic_rate(2, 4, 1, &p);
        assert!((got - expect).abs() < 1e-18);
        assert!((got - 3.99996e-6).abs() < 1e-11);
    }

    #[test]
    fn delivery_rate_mixes_integer_neighbours() {
        // n_ave = 1.5 via P=30, L=200, n=10; p1 = 0.5, D = 1, p_e = 0.5:
        // 0.5·binom(1;1,0.5) + 0.5·binom(1;2,0.5) = 0.5
        let p = params(200.0, 10.0, 10, 0.5, 30.0, 1.0);
        assert!((p.n_ave() - 1.5).abs() < 1e-12);
        assert!((p.p1() - 0.5).abs() < 1e-12);
        assert!((epidemic_rate(1, 10, 1, &p) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn delivery_rate_zero_beyond_reachable_count() {
        let p = urban(10); // n_ave = 3
        assert_eq!(epidemic_rate(0, 10, 4, &p), 0.0);
        assert_eq!(epidemic_rate(5, 7, 3, &p), 0.0); // k > j - i
        assert_eq!(epidemic_rate(3, 9, 0, &p), 0.0); // null outcome
    }

    #[test]
    fn certain_failure_leaves_pure_birth_death() {
        let p = params(100.0, 10.0, 5, 1.0, 30.0, 5.0);
        let space = StateSpace::enumerate(5).unwrap();
        let m = build_rate_matrix(&p, &ModelOptions::defaults_for(5), &space).unwrap();
        for (idx, &(i, j)) in space.states().iter().enumerate() {
            for (col, _) in m.off_diagonal(idx) {
                let (ci, cj) = space.state_at(col);
                // only arrivals and departures remain
                assert!(
                    (ci == i && cj == j + 1) || (ci == i && cj + 1 == j) || (ci + 1 == i && cj + 1 == j),
                    "unexpected edge ({i},{j}) -> ({ci},{cj})"
                );
            }
        }
    }

    #[test]
    fn source_flag_controls_zero_holder_delivery() {
        let p = urban(5);
        let space = StateSpace::enumerate(5).unwrap();
        let on = ModelOptions::defaults_for(5);
        let mut off = on;
        off.source_always_transmits = false;
        let m_on = build_rate_matrix(&p, &on, &space).unwrap();
        let m_off = build_rate_matrix(&p, &off, &space).unwrap();
        let from = space.index_of(0, 3).unwrap();
        assert!(m_on
            .off_diagonal(from)
            .any(|(c, _)| space.state_at(c).0 > 0));
        assert!(!m_off
            .off_diagonal(from)
            .any(|(c, _)| space.state_at(c).0 > 0));
        // rows with i ≥ 1 are identical either way
        let from = space.index_of(1, 3).unwrap();
        let a: Vec<_> = m_on.off_diagonal(from).collect();
        let b: Vec<_> = m_off.off_diagonal(from).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn construction_ignores_initial_condition() {
        let p = urban(6);
        let space = StateSpace::enumerate(6).unwrap();
        let mut a = ModelOptions::defaults_for(6);
        a.initial_i = 0;
        a.initial_j = crate::model::InitialOccupancy::Fixed(2);
        let b = ModelOptions::defaults_for(6);
        let ma = build_rate_matrix(&p, &a, &space).unwrap();
        let mb = build_rate_matrix(&p, &b, &space).unwrap();
        assert_eq!(ma.diag(), mb.diag());
        for row in 0..ma.dim() {
            assert_eq!(
                ma.off_diagonal(row).collect::<Vec<_>>(),
                mb.off_diagonal(row).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn rows_sum_to_zero_and_rates_nonnegative() {
        for n in [1u32, 5, 12] {
            let p = urban(n);
            let space = StateSpace::enumerate(n).unwrap();
            let m = build_rate_matrix(&p, &ModelOptions::defaults_for(n), &space).unwrap();
            assert_eq!(m.negative_off_diagonals(), 0);
            assert!(m.max_row_sum_residual() <= 1e-12 * m.inf_norm());
        }
    }

    #[test]
    fn delivery_outflow_matches_non_null_mass() {
        // Σ_{k≥1} rate(i,j,k) = (1/D)(1 - pmf(0)) for every state.
        let cases = [
            urban(10),
            params(1000.0, 100.0 / 3.6, 20, 1e-5, 30.0, 5.0),
            params(100.0, 10.0, 8, 0.5, 45.0, 2.0),
        ];
        for p in &cases {
            let n = p.max_vehicles();
            let space = StateSpace::enumerate(n).unwrap();
            for &(i, j) in space.states() {
                let gap = j - i;
                let total: f64 = (1..=gap).map(|k| epidemic_rate(i, j, k, p)).sum();
                let n_lo = (p.n_ave().floor() as u32).min(gap);
                let n_hi = (p.n_ave().ceil() as u32).min(gap);
                let pmf0 = p.p1() * p.p_fail().powi(n_lo as i32)
                    + (1.0 - p.p1()) * p.p_fail().powi(n_hi as i32);
                let expect = (1.0 - pmf0) / p.refresh_period_s();
                assert!(
                    (total - expect).abs() < 1e-12,
                    "outflow mismatch at ({i},{j}): {total} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn delivery_mean_matches_binomial_mean() {
        // Σ_k k·rate = (1/D)(1-p_e)[p1·n_lo + (1-p1)·n_hi]
        let p = params(100.0, 10.0, 9, 0.3, 25.0, 2.0);
        let space = StateSpace::enumerate(9).unwrap();
        for &(i, j) in space.states() {
            let gap = j - i;
            let total: f64 = (1..=gap)
                .map(|k| f64::from(k) * epidemic_rate(i, j, k, &p))
                .sum();
            let n_lo = f64::from((p.n_ave().floor() as u32).min(gap));
            let n_hi = f64::from((p.n_ave().ceil() as u32).min(gap));
            let expect = (1.0 - p.p_fail()) * (p.p1() * n_lo + (1.0 - p.p1()) * n_hi)
                / p.refresh_period_s();
            assert!(
                (total - expect).abs() < 1e-12,
                "mean mismatch at ({i},{j}): {total} vs {expect}"
            );
        }
    }

    #[test]
    fn occupancy_dynamics_are_birth_death() {
        // j-decreasing rate is j·μ, j-increasing rate is λ below capacity.
        let p = urban(7);
        let space = StateSpace::enumerate(7).unwrap();
        let m = build_rate_matrix(&p, &ModelOptions::defaults_for(7), &space).unwrap();
        for (idx, &(_, j)) in space.states().iter().enumerate() {
            let mut down = 0.0;
            let mut up = 0.0;
            for (col, rate) in m.off_diagonal(idx) {
                let (_, cj) = space.state_at(col);
                if cj == j + 1 {
                    up += rate;
                } else if cj + 1 == j {
                    down += rate;
                }
            }
            let expect_down = f64::from(j) * p.departure_rate();
            let expect_up = if j < 7 { p.arrival_rate() } else { 0.0 };
            assert!((down - expect_down).abs() < 1e-12);
            assert!((up - expect_up).abs() < 1e-12);
        }
    }

    #[test]
    fn diagnostics_reachability() {
        let p = urban(5);
        let space = StateSpace::enumerate(5).unwrap();
        let start = space.index_of(1, 5).unwrap();

        let m = build_rate_matrix(&p, &ModelOptions::defaults_for(5), &space).unwrap();
        let d = validate_generator(&m, &space, start);
        assert_eq!(d.negative_off_diagonals, 0);
        assert!(d.unreachable_states.is_empty(), "all 21 states reachable");
        assert!(d.unique_recurrent_class);

        // with certain failure, states with i ≥ 2 cannot be reached from (1,5)
        let blocked = params(100.0, 30.0 / 3.6, 5, 1.0, 30.0, 5.0);
        let m = build_rate_matrix(&blocked, &ModelOptions::defaults_for(5), &space).unwrap();
        let d = validate_generator(&m, &space, start);
        let expected: Vec<usize> = space
            .states()
            .iter()
            .enumerate()
            .filter(|(_, &(i, _))| i >= 2)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(d.unreachable_states, expected);
    }

    #[test]
    fn triple_dump_is_parseable() {
        let p = urban(2);
        let space = StateSpace::enumerate(2).unwrap();
        let m = build_rate_matrix(&p, &ModelOptions::defaults_for(2), &space).unwrap();
        let mut buf = Vec::new();
        m.write_triples(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for line in text.lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(parts.len(), 3);
            parts[0].parse::<usize>().unwrap();
            parts[1].parse::<usize>().unwrap();
            parts[2].parse::<f64>().unwrap();
        }
    }
}
