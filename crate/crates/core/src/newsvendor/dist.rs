use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical distribution of the market size built from sorted samples.
///
/// Prefix sums are kept on samples centred at their mean, so every
/// partial-expectation query is one binary search plus O(1) arithmetic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalDist {
    sorted: Vec<f64>,
    shift: f64,
    // prefix[k] = sum of the first k centred samples
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empirical distribution needs samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("samples must be finite".into()));
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let shift = samples.iter().sum::<f64>() / n;
        let mut prefix = Vec::with_capacity(samples.len() + 1);
        let mut prefix_sq = Vec::with_capacity(samples.len() + 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        prefix.push(0.0);
        prefix_sq.push(0.0);
        for &v in &samples {
            let u = v - shift;
            s1 += u;
            s2 += u * u;
            prefix.push(s1);
            prefix_sq.push(s2);
        }
        Ok(Self { sorted: samples, shift, prefix, prefix_sq })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.prefix[self.len()] / self.len() as f64
    }

    /// Population variance of the samples.
    pub fn variance(&self) -> f64 {
        let n = self.len() as f64;
        let m = self.prefix[self.len()] / n;
        (self.prefix_sq[self.len()] / n - m * m).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    #[inline]
    fn count_below(&self, r: f64) -> usize {
        self.sorted.partition_point(|&v| v < r)
    }

    #[inline]
    fn count_at_most(&self, r: f64) -> usize {
        self.sorted.partition_point(|&v| v <= r)
    }

    /// `F(a) = P(A <= a)`.
    pub fn cdf(&self, a: f64) -> f64 {
        self.count_at_most(a) as f64 / self.len() as f64
    }

    /// `P(A >= r)`.
    pub fn prob_at_least(&self, r: f64) -> f64 {
        1.0 - self.count_below(r) as f64 / self.len() as f64
    }

    /// Lower quantile: the smallest sample `a` with `F(a) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.len();
        let x = p.clamp(0.0, 1.0) * n as f64;
        // p = k/n must map back to k despite rounding in the product
        let k = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() } as usize;
        self.sorted[k.clamp(1, n) - 1]
    }

    /// `E[(r - A)^+]`.
    pub fn expected_overage(&self, r: f64) -> f64 {
        let k = self.count_below(r);
        let rc = r - self.shift;
        (k as f64 * rc - self.prefix[k]) / self.len() as f64
    }

    /// `E[((r - A)^+)^2]`.
    pub fn overage_second_moment(&self, r: f64) -> f64 {
        let k = self.count_below(r);
        let rc = r - self.shift;
        (k as f64 * rc * rc - 2.0 * rc * self.prefix[k] + self.prefix_sq[k]) / self.len() as f64
    }

    /// `Var[(r - A)^+]`.
    pub fn overage_variance(&self, r: f64) -> f64 {
        let m1 = self.expected_overage(r);
        (self.overage_second_moment(r) - m1 * m1).max(0.0)
    }

    /// `E[min(r, A)]`.
    pub fn expected_sales(&self, r: f64) -> f64 {
        r - self.expected_overage(r)
    }

    /// `E[A 1{A <= r}]`.
    pub fn partial_mean_below(&self, r: f64) -> f64 {
        let k = self.count_at_most(r);
        (self.prefix[k] + k as f64 * self.shift) / self.len() as f64
    }

    /// `E[(-A)^+]`.
    pub fn negative_part_mean(&self) -> f64 {
        self.expected_overage(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_overage(s: &[f64], r: f64) -> (f64, f64) {
        let n = s.len() as f64;
        let m1 = s.iter().map(|a| (r - a).max(0.0)).sum::<f64>() / n;
        let m2 = s.iter().map(|a| (r - a).max(0.0).powi(2)).sum::<f64>() / n;
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn quantile_is_lower_interpolation() {
        let d = EmpiricalDist::new(vec![3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(d.quantile(0.0), 1.0);
        assert_eq!(d.quantile(0.25), 1.0);
        assert_eq!(d.quantile(0.2501), 2.0);
        assert_eq!(d.quantile(0.5), 2.0);
        assert_eq!(d.quantile(1.0), 4.0);
        assert_eq!(d.cdf(2.5), 0.5);
        assert_eq!(d.prob_at_least(2.0), 0.75);
        assert_eq!(d.partial_mean_below(2.0), 0.75);
    }

    #[test]
    fn two_point_hand_values() {
        let d = EmpiricalDist::new(vec![90.0, 110.0]).unwrap();
        assert_eq!(d.expected_overage(100.0), 5.0);
        assert_eq!(d.overage_variance(100.0), 25.0);
        assert_eq!(d.expected_sales(100.0), 95.0);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(EmpiricalDist::new(vec![]).is_err());
        assert!(EmpiricalDist::new(vec![1.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn prefix_queries_match_brute_force(
            s in prop::collection::vec(-1e5f64..1e5, 1..60),
            r in -2e5f64..2e5,
        ) {
            let d = EmpiricalDist::new(s.clone()).unwrap();
            let (m1, v) = brute_overage(&s, r);
            let scale = 1.0 + r.abs() + 1e5;
            prop_assert!((d.expected_overage(r) - m1).abs() < 1e-9 * scale);
            prop_assert!((d.overage_variance(r) - v).abs() < 1e-6 * scale * scale * 1e-3);
        }

        #[test]
        fn quantile_inverts_cdf(s in prop::collection::vec(-100f64..100.0, 1..50), a in -120f64..120.0) {
            let d = EmpiricalDist::new(s).unwrap();
            let q = d.quantile(d.cdf(a));
            if d.cdf(a) > 0.0 {
                prop_assert!(q <= a);
                let next = d.samples().iter().copied().find(|&v| v > a);
                if let Some(next) = next {
                    prop_assert!(a < next);
                }
            }
        }

        #[test]
        fn expected_sales_monotone_concave(
            s in prop::collection::vec(0f64..100.0, 1..40),
            r in 0f64..100.0,
            h in 0.01f64..10.0,
        ) {
            let d = EmpiricalDist::new(s).unwrap();
            let (a, b, c) = (d.expected_sales(r - h), d.expected_sales(r), d.expected_sales(r + h));
            prop_assert!(a <= b + 1e-9 && b <= c + 1e-9);
            prop_assert!(c - b <= b - a + 1e-9);
        }
    }
}
