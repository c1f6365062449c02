//! Impulse-moment schedules with a fixed number of moments per period.
//!
//! A schedule is determined by a period `omega` and `p` base moments inside
//! one period window; moment `k` is `base[k mod p] + omega * floor(k / p)`.
//! Every moment is computed directly from that formula — never by stepping
//! from the previous one — so indexing far from the origin stays exact.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSchedule {
    omega: f64,
    base: Vec<f64>,
}

impl ImpulseSchedule {
    pub fn new(omega: f64, base: Vec<f64>) -> Result<Self, ScheduleError> {
        if !omega.is_finite() || omega <= 0.0 {
            return Err(ScheduleError::Invalid(format!("period must be positive, got {omega}")));
        }
        if base.is_empty() {
            return Err(ScheduleError::Invalid("at least one base moment is required".into()));
        }
        if base.iter().any(|t| !t.is_finite()) {
            return Err(ScheduleError::Invalid("base moments must be finite".into()));
        }
        for w in base.windows(2) {
            if w[1] <= w[0] {
                return Err(ScheduleError::Invalid(format!(
                    "base moments must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let spread = base[base.len() - 1] - base[0];
        if spread >= omega {
            return Err(ScheduleError::Invalid(format!(
                "base moments span {spread}, which must be less than the period {omega}"
            )));
        }
        Ok(ImpulseSchedule { omega, base })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Moments per period.
    pub fn p(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// The k-th impulse moment, for any (possibly negative) index.
    pub fn theta(&self, k: i64) -> f64 {
        let p = self.base.len() as i64;
        let r = k.rem_euclid(p) as usize;
        let q = k.div_euclid(p);
        self.base[r] + self.omega * q as f64
    }

    /// Smallest index `k` whose moment exceeds `t` (or reaches it when
    /// `allow_equal` is set).
    fn first_index_past(&self, t: f64, allow_equal: bool) -> i64 {
        assert!(
            t.is_finite() && t.abs() < 1e15 * self.omega,
            "time {t} is outside the supported indexing range"
        );
        let p = self.base.len() as i64;
        // Bracket by whole periods, then binary search.
        let guess = ((t - self.base[0]) / self.omega).floor().clamp(-1e15, 1e15);
        let mut lo = (guess as i64).saturating_sub(2) * p;
        let mut hi = (guess as i64).saturating_add(2) * p;
        let past = |k: i64| {
            let v = self.theta(k);
            if allow_equal {
                v >= t
            } else {
                v > t
            }
        };
        while past(lo) {
            lo -= p;
        }
        while !past(hi) {
            hi += p;
        }
        // Invariant: !past(lo) && past(hi).
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if past(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Number of impulse moments in `[a, b)` (`include_left`) or `(a, b)`.
    pub fn count_impulses(&self, a: f64, b: f64, include_left: bool) -> u64 {
        if b <= a {
            return 0;
        }
        let first = self.first_index_past(a, include_left);
        let end = self.first_index_past(b, true); // first moment >= b is excluded
        (end - first).max(0) as u64
    }

    /// Indices of the moments in `(a, b)`, or `[a, b)` with `include_left`.
    pub fn indices_in(&self, a: f64, b: f64, include_left: bool) -> std::ops::Range<i64> {
        if b <= a {
            return 0..0;
        }
        let first = self.first_index_past(a, include_left);
        let end = self.first_index_past(b, true);
        first..end.max(first)
    }

    /// The block index `k` with `theta(k*p) < t <= theta((k+1)*p)`.
    ///
    /// Blocks are left-open/right-closed spans of one period, anchored at
    /// every p-th moment; piecewise-constant forcing is constant per block.
    pub fn block_index(&self, t: f64) -> i64 {
        assert!(
            t.is_finite() && t.abs() < 1e15 * self.omega,
            "time {t} is outside the supported indexing range"
        );
        let q = ((t - self.base[0]) / self.omega).clamp(-1e15, 1e15);
        let mut k = q.ceil() as i64 - 1;
        // Float fix-up so the result is exactly consistent with theta().
        let p = self.base.len() as i64;
        while t <= self.theta(k * p) {
            k -= 1;
        }
        while t > self.theta((k + 1) * p) {
            k += 1;
        }
        k
    }

    /// Smallest gap between consecutive moments (constant across periods).
    pub fn min_gap(&self) -> f64 {
        let p = self.base.len();
        let mut best = self.base[0] + self.omega - self.base[p - 1];
        for w in self.base.windows(2) {
            best = best.min(w[1] - w[0]);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Alternating schedule: moments ((-1)^k + pi*k) / 2.
    fn alternating() -> ImpulseSchedule {
        let pi = std::f64::consts::PI;
        ImpulseSchedule::new(pi, vec![0.5, (pi - 1.0) / 2.0]).unwrap()
    }

    /// Brute-force count by enumerating indices over a generous range.
    fn count_by_enumeration(s: &ImpulseSchedule, a: f64, b: f64, include_left: bool) -> u64 {
        let span = (b - a).abs() + 4.0 * s.omega();
        let reach = (span / s.omega()).ceil() as i64 * s.p() as i64 + 8;
        let center = ((a + b) / 2.0 / s.omega()).round() as i64 * s.p() as i64;
        let mut n = 0;
        for k in center - reach..=center + reach {
            let t = s.theta(k);
            let inside = if include_left { t >= a && t < b } else { t > a && t < b };
            if inside {
                n += 1;
            }
        }
        n
    }

    #[test]
    fn alternating_schedule_moments() {
        let s = alternating();
        let pi = std::f64::consts::PI;
        assert_eq!(s.theta(0), 0.5);
        assert!((s.theta(1) - (pi - 1.0) / 2.0).abs() < 1e-15);
        assert!((s.theta(2) - (0.5 + pi)).abs() < 1e-15);
        // Negative indices extend backwards by whole periods.
        assert!((s.theta(-1) - ((pi - 1.0) / 2.0 - pi)).abs() < 1e-15);
        assert!((s.theta(-2) - (0.5 - pi)).abs() < 1e-15);
    }

    #[test]
    fn theta_shift_by_p_adds_one_period() {
        let s = alternating();
        for k in -50..50 {
            let lhs = s.theta(k + 2);
            let rhs = s.theta(k) + s.omega();
            assert!(
                (lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs.abs().max(1.0),
                "k={k}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn moments_strictly_increase() {
        let s = ImpulseSchedule::new(3.0, vec![0.25, 0.5, 2.0]).unwrap();
        for k in -30..30 {
            assert!(s.theta(k) < s.theta(k + 1));
        }
    }

    #[test]
    fn count_matches_enumeration_on_fixed_cases() {
        let s = alternating();
        let pi = std::f64::consts::PI;
        // (0, pi] has moments 0.5 and (pi-1)/2.
        assert_eq!(s.count_impulses(0.0, pi, false), 2);
        // Left endpoint exactly on a moment distinguishes the conventions.
        assert_eq!(s.count_impulses(0.5, 2.0, false), 1);
        assert_eq!(s.count_impulses(0.5, 2.0, true), 2);
        // Empty and reversed intervals.
        assert_eq!(s.count_impulses(1.0, 1.0, true), 0);
        assert_eq!(s.count_impulses(5.0, 1.0, false), 0);
    }

    #[test]
    fn count_matches_enumeration_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..300 {
            let p = rng.gen_range(1..=4);
            let omega = rng.gen_range(0.5..8.0);
            let start = rng.gen_range(-3.0..3.0);
            let mut base = vec![start];
            for _ in 1..p {
                let last = *base.last().unwrap();
                let room = start + omega - last;
                base.push(last + rng.gen_range(0.05..0.95) * room);
            }
            let s = ImpulseSchedule::new(omega, base).unwrap();
            let a = rng.gen_range(-40.0..40.0);
            let b = a + rng.gen_range(0.0..30.0);
            for include_left in [false, true] {
                let got = s.count_impulses(a, b, include_left);
                let want = count_by_enumeration(&s, a, b, include_left);
                assert_eq!(got, want, "omega={omega} a={a} b={b} incl={include_left}");
            }
        }
    }

    #[test]
    fn count_respects_density_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let s = alternating();
        for _ in 0..200 {
            let a = rng.gen_range(-50.0..50.0);
            let b = a + rng.gen_range(0.0..40.0);
            let count = s.count_impulses(a, b, false) as f64;
            let bound = s.p() as f64 + s.p() as f64 / s.omega() * (b - a);
            assert!(count <= bound, "count {count} exceeds p + p/omega*(b-a) = {bound}");
        }
    }

    #[test]
    fn block_index_conventions_at_boundaries() {
        let s = alternating();
        let pi = std::f64::consts::PI;
        let b1 = 0.5 + pi; // theta(2), start of block 1
        // Blocks are left-open right-closed: the boundary belongs to the left.
        assert_eq!(s.block_index(b1), 0);
        assert_eq!(s.block_index(b1 + 1e-12), 1);
        assert_eq!(s.block_index(b1 - 1e-12), 0);
        assert_eq!(s.block_index(0.5 + 1e-12), 0);
        assert_eq!(s.block_index(0.5), -1);
        assert_eq!(s.block_index(-10.0), -4);
    }

    #[test]
    fn block_index_consistent_with_theta_everywhere() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(13);
        let s = ImpulseSchedule::new(2.7, vec![-0.3, 0.4, 1.9]).unwrap();
        let p = s.p() as i64;
        for _ in 0..500 {
            let t = rng.gen_range(-60.0..60.0);
            let k = s.block_index(t);
            assert!(s.theta(k * p) < t && t <= s.theta((k + 1) * p), "t={t} k={k}");
        }
    }

    #[test]
    fn min_gap_of_alternating_schedule() {
        let s = alternating();
        // Gaps alternate between (pi-2)/2 + 0.5... i.e. theta1-theta0 and
        // theta2-theta1; the smaller is (pi-1)/2 - 1/2 = (pi-2)/2.
        let want = (std::f64::consts::PI - 2.0) / 2.0;
        assert!((s.min_gap() - want).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(ImpulseSchedule::new(0.0, vec![0.1]).is_err());
        assert!(ImpulseSchedule::new(-1.0, vec![0.1]).is_err());
        assert!(ImpulseSchedule::new(1.0, vec![]).is_err());
        assert!(ImpulseSchedule::new(1.0, vec![0.3, 0.2]).is_err());
        // Base spread must stay under one period.
        assert!(ImpulseSchedule::new(1.0, vec![0.0, 1.0]).is_err());
        assert!(ImpulseSchedule::new(1.0, vec![0.0, 0.999]).is_ok());
    }
}
