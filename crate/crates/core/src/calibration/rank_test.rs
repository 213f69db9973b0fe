use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// The first sample is stochastically larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exact null distribution when both samples have at most
    /// [`EXACT_MAX_SIZE`] values and there are no ties, normal otherwise.
    Auto,
    Exact,
    Normal,
}

pub const EXACT_MAX_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    /// Pairs with `x > y`, ties counted as one half.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// One-sided Mann-Whitney U test.
pub fn mann_whitney_u(sample1: &[f64], sample2: &[f64], alternative: Alternative) -> Result<RankTest> {
    mann_whitney_u_with(sample1, sample2, alternative, PValueMethod::Auto)
}

pub fn mann_whitney_u_with(
    sample1: &[f64],
    sample2: &[f64],
    alternative: Alternative,
    method: PValueMethod,
) -> Result<RankTest> {
    let (n1, n2) = (sample1.len(), sample2.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("both samples must be non-empty".into()));
    }
    if sample1.iter().chain(sample2).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("samples contain NaN".into()));
    }
    let mut pooled: Vec<(f64, bool)> =
        sample1.iter().map(|&v| (v, true)).chain(sample2.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let mut rank_sum = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = 0.5 * ((i + 1) + j) as f64;
        let in_first = pooled[i..j].iter().filter(|p| p.1).count();
        rank_sum += midrank * in_first as f64;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let u = rank_sum - f1 * (f1 + 1.0) / 2.0;
    let exact = match method {
        PValueMethod::Exact => {
            if tie_term > 0.0 {
                return Err(Error::InvalidInput("exact p-values require samples without ties".into()));
            }
            true
        }
        PValueMethod::Normal => false,
        PValueMethod::Auto => tie_term == 0.0 && n1 <= EXACT_MAX_SIZE && n2 <= EXACT_MAX_SIZE,
    };
    let p_value = if exact {
        exact_tail(n1, n2, u, alternative)
    } else {
        let nf = n as f64;
        let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let mean = f1 * f2 / 2.0;
            match alternative {
                Alternative::Greater => 1.0 - norm_cdf((u - mean - 0.5) / var.sqrt()),
                Alternative::Less => norm_cdf((u - mean + 0.5) / var.sqrt()),
            }
        }
    };
    Ok(RankTest { u, p_value: p_value.clamp(0.0, 1.0), exact })
}

/// Null frequencies of `U` for sizes `(n1, n2)` without ties.
fn u_frequencies(n1: usize, n2: usize) -> Vec<f64> {
    // table[i][j][u] = arrangements of i first-sample and j second-sample values with statistic u
    let mut table = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let mut f = vec![0.0; i * j + 1];
            if i == 0 || j == 0 {
                f[0] = 1.0;
            } else {
                // the largest value belongs to the first sample (beats all j) or to the second
                let with_first: &Vec<f64> = &table[i - 1][j];
                for (u, c) in with_first.iter().enumerate() {
                    f[u + j] += c;
                }
                let with_second: &Vec<f64> = &table[i][j - 1];
                for (u, c) in with_second.iter().enumerate() {
                    f[u] += c;
                }
            }
            table[i][j] = f;
        }
    }
    std::mem::take(&mut table[n1][n2])
}

fn exact_tail(n1: usize, n2: usize, u: f64, alternative: Alternative) -> f64 {
    let freq = u_frequencies(n1, n2);
    let total: f64 = freq.iter().sum();
    let u = u.round() as usize;
    let tail: f64 = match alternative {
        Alternative::Greater => freq[u..].iter().sum(),
        Alternative::Less => freq[..=u].iter().sum(),
    };
    tail / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 0.05).abs() < 1e-15);
        let g = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Greater).unwrap();
        assert!((g.p_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frequencies_sum_to_binomial() {
        let f = u_frequencies(5, 7);
        assert_eq!(f.iter().sum::<f64>(), 792.0);
        assert_eq!(f.len(), 36);
        for k in 0..f.len() {
            assert_eq!(f[k], f[f.len() - 1 - k]);
        }
    }

    #[test]
    fn shuffled_copies_are_balanced() {
        let a: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let mut b = a.clone();
        b.reverse();
        let r = mann_whitney_u(&a, &b, Alternative::Greater).unwrap();
        assert_eq!(r.u, 200.0 * 200.0 / 2.0);
        assert!((r.p_value - 0.5).abs() < 0.02);
    }

    #[test]
    fn normal_approximation_detects_shift() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 + 15.0).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = mann_whitney_u(&a, &b, Alternative::Greater).unwrap();
        assert!(!r.exact && r.p_value < 1e-3);
        assert!(mann_whitney_u(&a, &b, Alternative::Less).unwrap().p_value > 0.99);
    }

    #[test]
    fn all_ties() {
        let r = mann_whitney_u(&[2.0; 30], &[2.0; 25], Alternative::Greater).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.u, 375.0);
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(mann_whitney_u(&[], &[1.0], Alternative::Less).is_err());
        assert!(mann_whitney_u(&[f64::NAN], &[1.0], Alternative::Less).is_err());
        assert!(mann_whitney_u_with(&[1.0, 1.0], &[1.0], Alternative::Less, PValueMethod::Exact).is_err());
    }

    proptest! {
        #[test]
        fn u_identity(a in prop::collection::vec(0u8..20, 1..40), b in prop::collection::vec(0u8..20, 1..40)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let u1 = mann_whitney_u(&a, &b, Alternative::Greater).unwrap().u;
            let u2 = mann_whitney_u(&b, &a, Alternative::Greater).unwrap().u;
            prop_assert_eq!(u1 + u2, (a.len() * b.len()) as f64);
            let pairs: f64 = a.iter().flat_map(|x| b.iter().map(move |y| {
                if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 }
            })).sum();
            prop_assert_eq!(u1, pairs);
        }
    }
}
