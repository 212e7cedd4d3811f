//! Periodic time grids.
//!
//! A grid is the partition `0 = t_0 < t_1 < … < t_p = T` of one period,
//! extended cyclically by `t_{i+p} = t_i + T`. All index arithmetic on grids
//! accepts arbitrary integers and applies that extension. Only the absolute
//! times are stored; steps `Δt⁽ⁱ⁾ = t_{i+1} − t_i` and ratios
//! `ω⁽ⁱ⁾ = Δt⁽ⁱ⁾/Δt⁽ⁱ⁻¹⁾` are derived on demand so the two views cannot
//! drift apart.
//!
//! Convergence of the multistep discretization rests on the stepsize ratios
//! staying inside a uniform band, so construction rejects grids whose ratios
//! (including the wrap-around ratio between the last and first step) leave the
//! configured band.

use crate::{Error, Result};

/// Default stepsize-ratio band `[ω_min, ω_max]`.
pub const DEFAULT_RATIO_BAND: (f64, f64) = (0.2, 5.0);

/// Cyclic partition of one period into `p` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicGrid {
    times: Vec<f64>,
    period: f64,
}

impl PeriodicGrid {
    /// `p` equal steps covering `[0, period]`.
    pub fn uniform(p: usize, period: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("grid needs p >= 1".into()));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        let times = (0..=p).map(|i| period * i as f64 / p as f64).collect();
        Self::from_parts(times, period, DEFAULT_RATIO_BAND)
    }

    /// Steps proportional to `pattern`, repeated `repeats` times and scaled so
    /// they sum to `period`. `pattern = [1, 2]` gives the alternating 1:2 grid.
    pub fn pattern(period: f64, pattern: &[f64], repeats: usize) -> Result<Self> {
        Self::pattern_with_band(period, pattern, repeats, DEFAULT_RATIO_BAND)
    }

    pub fn pattern_with_band(
        period: f64,
        pattern: &[f64],
        repeats: usize,
        band: (f64, f64),
    ) -> Result<Self> {
        if pattern.is_empty() || repeats == 0 {
            return Err(Error::InvalidArgument(
                "pattern must be nonempty and repeated at least once".into(),
            ));
        }
        if pattern.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "pattern entries must be positive and finite".into(),
            ));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        let total: f64 = pattern.iter().sum::<f64>() * repeats as f64;
        let p = pattern.len() * repeats;
        let mut times = Vec::with_capacity(p + 1);
        let mut acc = 0.0;
        times.push(0.0);
        for r in 0..repeats {
            for (k, &s) in pattern.iter().enumerate() {
                acc += s;
                if r + 1 == repeats && k + 1 == pattern.len() {
                    times.push(period); // land on T exactly
                } else {
                    times.push(period * acc / total);
                }
            }
        }
        Self::from_parts(times, period, band)
    }

    /// Grid from explicit times `t_0 = 0 < … < t_p`; the period is `t_p`.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        Self::from_times_with_band(times, DEFAULT_RATIO_BAND)
    }

    pub fn from_times_with_band(times: &[f64], band: (f64, f64)) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidArgument(
                "grid needs at least two times".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grid must start at t_0 = 0, got {}",
                times[0]
            )));
        }
        let period = *times.last().unwrap();
        Self::from_parts(times.to_vec(), period, band)
    }

    fn from_parts(times: Vec<f64>, period: f64, band: (f64, f64)) -> Result<Self> {
        if !(band.0 > 0.0 && band.0 <= 1.0 && band.1 >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ratio band must satisfy 0 < min <= 1 <= max, got [{}, {}]",
                band.0, band.1
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument(
                    "grid times must be strictly increasing".into(),
                ));
            }
        }
        if !times.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument("grid times must be finite".into()));
        }
        let grid = Self { times, period };
        for i in 0..grid.p() {
            let ratio = grid.ratio(i as i64);
            if ratio < band.0 || ratio > band.1 {
                return Err(Error::RatioOutOfBand {
                    step: i,
                    ratio,
                    min: band.0,
                    max: band.1,
                });
            }
        }
        Ok(grid)
    }

    /// Number of steps per period.
    pub fn p(&self) -> usize {
        self.times.len() - 1
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Times `t_0..t_p` of the base period.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `t_i` under the cyclic extension `t_{i+p} = t_i + T`.
    pub fn time_at(&self, i: i64) -> f64 {
        let p = self.p() as i64;
        let cycles = i.div_euclid(p);
        let base = i.rem_euclid(p) as usize;
        self.times[base] + cycles as f64 * self.period
    }

    /// `Δt⁽ⁱ⁾ = t_{i+1} − t_i`, cyclic in `i`. Computed within the base period
    /// so `step(i + p) == step(i)` holds exactly.
    pub fn step(&self, i: i64) -> f64 {
        let base = i.rem_euclid(self.p() as i64) as usize;
        self.times[base + 1] - self.times[base]
    }

    /// `ω⁽ⁱ⁾ = Δt⁽ⁱ⁾/Δt⁽ⁱ⁻¹⁾`, cyclic in `i`.
    pub fn ratio(&self, i: i64) -> f64 {
        self.step(i) / self.step(i - 1)
    }

    pub fn max_step(&self) -> f64 {
        (0..self.p() as i64)
            .map(|i| self.step(i))
            .fold(0.0, f64::max)
    }

    /// The factor `h_j⁽ⁱ⁾ = (t_{i+j} − t_i)/(t_{i+d} − t_{i+d−1})` used by the
    /// spurious-root analysis; equals `j` on uniform grids.
    pub fn h_factor(&self, i: i64, j: usize, d: usize) -> Result<f64> {
        if j > d {
            return Err(Error::InvalidArgument(format!(
                "h_factor needs 0 <= j <= d, got j = {j}, d = {d}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("h_factor needs d >= 1".into()));
        }
        let num = self.time_at(i + j as i64) - self.time_at(i);
        let den = self.time_at(i + d as i64) - self.time_at(i + d as i64 - 1);
        Ok(num / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn uniform_partition() {
        let g = PeriodicGrid::uniform(4, 2.0 * PI).unwrap();
        let expect = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0, 2.0 * PI];
        for (a, b) in g.times().iter().zip(expect) {
            assert_relative_eq!(a, &b, max_relative = 1e-15);
        }
        assert_eq!(PeriodicGrid::uniform(1, 1.0).unwrap().times(), &[0.0, 1.0]);
        assert_relative_eq!(
            PeriodicGrid::uniform(1024, 2.0 * PI).unwrap().max_step(),
            2.0 * PI / 1024.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pattern_steps_scale_to_period() {
        let g = PeriodicGrid::pattern(2.0 * PI, &[1.0, 2.0], 4).unwrap();
        assert_eq!(g.p(), 8);
        assert_relative_eq!(g.step(0), 2.0 * PI / 12.0, max_relative = 1e-14);
        assert_relative_eq!(g.step(1), 4.0 * PI / 12.0, max_relative = 1e-14);
        assert_eq!(g.times()[8], 2.0 * PI);
        // degenerate single-entry pattern is a uniform grid
        let u = PeriodicGrid::pattern(1.0, &[1.0], 5).unwrap();
        for i in 0..5 {
            assert_relative_eq!(u.step(i), 0.2, max_relative = 1e-14);
        }
        // max step of the 1:2 grid with 2^k steps
        for k in [3usize, 6, 9] {
            let g = PeriodicGrid::pattern(2.0 * PI, &[1.0, 2.0], 1 << (k - 1)).unwrap();
            assert_relative_eq!(
                g.max_step(),
                (4.0 * PI / 3.0) / (1 << (k - 1)) as f64,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn ratio_band_is_enforced() {
        match PeriodicGrid::pattern(1.0, &[1.0, 6.0], 2) {
            Err(Error::RatioOutOfBand { ratio, .. }) => {
                assert!(ratio > 5.0 || ratio < 0.2, "ratio {ratio} inside band")
            }
            other => panic!("expected ratio-band rejection, got {other:?}"),
        }
        // same grid passes with a wider band
        PeriodicGrid::pattern_with_band(1.0, &[1.0, 6.0], 2, (0.1, 10.0)).unwrap();
        // wrap-around ratio is also checked: steps 1,1,6 fail end-to-start
        assert!(PeriodicGrid::from_times(&[0.0, 1.0, 2.0, 8.0]).is_err());
        // ... while 1,1,5 sits exactly on the band edge and passes
        assert!(PeriodicGrid::from_times(&[0.0, 1.0, 2.0, 7.0]).is_ok());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(PeriodicGrid::uniform(0, 1.0).is_err());
        assert!(PeriodicGrid::uniform(4, -1.0).is_err());
        assert!(PeriodicGrid::pattern(1.0, &[], 3).is_err());
        assert!(PeriodicGrid::pattern(1.0, &[1.0, -2.0], 3).is_err());
        assert!(PeriodicGrid::from_times(&[0.0, 2.0, 1.0]).is_err());
        assert!(PeriodicGrid::from_times(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn cyclic_index_arithmetic() {
        let g = PeriodicGrid::pattern(2.0, &[1.0, 2.0, 1.5], 2).unwrap();
        let p = g.p() as i64;
        for i in -p..p {
            assert_eq!(g.step(i + p), g.step(i));
            assert_eq!(g.ratio(i + p), g.ratio(i));
            assert_relative_eq!(
                g.time_at(i + p),
                g.time_at(i) + g.period(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn h_factor_matches_definition() {
        // uniform: h = j for every i, j, d
        let g = PeriodicGrid::uniform(6, 3.0).unwrap();
        for i in [-5i64, 0, 2, 11] {
            for d in 1..=4usize {
                for j in 0..=d {
                    assert_relative_eq!(
                        g.h_factor(i, j, d).unwrap(),
                        j as f64,
                        max_relative = 1e-13
                    );
                }
            }
        }
        // all ratios 2 within the window: h_1 with d=2 is 1/2
        let g = PeriodicGrid::from_times_with_band(&[0.0, 1.0, 3.0, 7.0, 15.0], (0.05, 8.0));
        let g = g.unwrap();
        assert_relative_eq!(g.h_factor(0, 1, 2).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(g.h_factor(0, 0, 2).unwrap(), 0.0, epsilon = 0.0);
        assert!(g.h_factor(0, 3, 2).is_err());
        // j = d reduces to (t_{i+d} - t_i)/dt_{i+d-1->i+d}
        let byhand = (g.time_at(3) - g.time_at(1)) / (g.time_at(3) - g.time_at(2));
        assert_relative_eq!(g.h_factor(1, 2, 2).unwrap(), byhand, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn steps_sum_to_period(pattern in proptest::collection::vec(0.5f64..2.0, 1..6),
                               repeats in 1usize..5) {
            let g = PeriodicGrid::pattern(2.0 * PI, &pattern, repeats);
            prop_assume!(g.is_ok());
            let g = g.unwrap();
            let sum: f64 = (0..g.p() as i64).map(|i| g.step(i)).sum();
            let ulp = 4.0 * f64::EPSILON * g.period();
            prop_assert!((sum - g.period()).abs() <= ulp);
        }

        #[test]
        fn two_period_window_is_cyclic(pattern in proptest::collection::vec(0.6f64..1.8, 1..5)) {
            let g = PeriodicGrid::pattern(1.0, &pattern, 2);
            prop_assume!(g.is_ok());
            let g = g.unwrap();
            for i in 0..(2 * g.p() as i64) {
                prop_assert_eq!(g.step(i), g.step(i - g.p() as i64));
                prop_assert_eq!(g.ratio(i), g.ratio(i - g.p() as i64));
            }
        }
    }
}
