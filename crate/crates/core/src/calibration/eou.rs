use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::MONTH;
use crate::processes::EouParams;

/// Daily spot prices with ISO-8601 dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<String>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<String>, prices: Vec<f64>) -> Result<Self> {
        let s = Self { dates, prices };
        s.validate()?;
        Ok(s)
    }

    /// Series without calendar information, dated by position.
    pub fn from_prices(prices: Vec<f64>) -> Result<Self> {
        let dates = (0..prices.len()).map(|i| format!("{i:08}")).collect();
        Self::new(dates, prices)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.prices.len() {
            return Err(Error::InvalidInput(format!(
                "{} dates but {} prices",
                self.dates.len(),
                self.prices.len()
            )));
        }
        if let Some(w) = self.dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!("dates not strictly increasing at {}", w[1])));
        }
        if let Some(p) = self.prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidInput(format!("prices must be positive, got {p}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimates: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub residual_sd: f64,
    /// Lag-one autocorrelation of the residuals.
    pub residual_autocorr: f64,
    pub objective: f64,
    pub n_obs: usize,
    pub converged: bool,
    /// Best objective after each iteration or restart, when the fit is iterative.
    pub history: Vec<f64>,
}

/// Least-squares fit of the AR(1) model `Y_{n+1} = a Y_n + b + e` on log
/// prices sampled every `dt` years.
///
/// The returned parameters start from the last observed price and cover one month.
pub fn fit_eou(series: &PriceSeries, dt: f64) -> Result<(EouParams, FitReport)> {
    series.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let n_prices = series.prices.len();
    if n_prices < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 prices, got {n_prices}")));
    }
    let y: Vec<f64> = series.prices.iter().map(|p| p.ln()).collect();
    let (x0, x1) = (&y[..n_prices - 1], &y[1..]);
    let n = x0.len() as f64;
    let m0 = x0.iter().sum::<f64>() / n;
    let m1 = x1.iter().sum::<f64>() / n;
    let sxx: f64 = x0.iter().map(|v| (v - m0).powi(2)).sum();
    let sxy: f64 = x0.iter().zip(x1).map(|(a, b)| (a - m0) * (b - m1)).sum();
    if sxx <= f64::EPSILON * n * m0.abs().max(1.0) {
        return Err(Error::Degenerate("log prices have no variation".into()));
    }
    let a_hat = sxy / sxx;
    let b_hat = m1 - a_hat * m0;
    if a_hat >= 1.0 {
        return Err(Error::NotMeanReverting { a_hat });
    }
    let resid: Vec<f64> = x0.iter().zip(x1).map(|(a, b)| b - a_hat * a - b_hat).collect();
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    let kappa = (1.0 - a_hat) / dt;
    let alpha = b_hat / (1.0 - a_hat);
    let sigma = (rss / (n * dt)).sqrt();

    let s2 = rss / (n - 2.0);
    let var_a = s2 / sxx;
    let var_b = s2 * (1.0 / n + m0 * m0 / sxx);
    let cov_ab = -m0 * s2 / sxx;
    let one_a = 1.0 - a_hat;
    let (da, db) = (b_hat / (one_a * one_a), 1.0 / one_a);
    let var_alpha = da * da * var_a + db * db * var_b + 2.0 * da * db * cov_ab;
    let resid_sd = (rss / n).sqrt();
    let lag1: f64 = resid.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / rss.max(f64::MIN_POSITIVE);

    let params = EouParams::new(kappa, alpha, sigma, *series.prices.last().unwrap(), MONTH)?;
    let estimates = BTreeMap::from([
        ("kappa".to_string(), kappa),
        ("alpha".to_string(), alpha),
        ("sigma".to_string(), sigma),
        ("a_hat".to_string(), a_hat),
        ("b_hat".to_string(), b_hat),
    ]);
    let std_errors = BTreeMap::from([
        ("kappa".to_string(), var_a.sqrt() / dt),
        ("alpha".to_string(), var_alpha.max(0.0).sqrt()),
        ("sigma".to_string(), sigma / (2.0 * n).sqrt()),
    ]);
    Ok((
        params,
        FitReport {
            estimates,
            std_errors,
            residual_sd: resid_sd,
            residual_autocorr: lag1,
            objective: rss,
            n_obs: n_prices,
            converged: true,
            history: Vec::new(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::wti;
    use crate::processes::{simulate_paths, DemandParams, Measure, PathGrid};
    use proptest::prelude::*;

    fn synthetic(n: usize, seed: u64) -> Vec<f64> {
        let dt = 1.0 / 252.0;
        let p = EouParams { horizon: (n - 1) as f64 * dt, ..wti(65.0) };
        let g = PathGrid::new(n - 1, dt).unwrap();
        let d = DemandParams { mu0: 0.0, mu1: 0.0, sigma_tilde: 0.0, b: 1.0, c: 1.0, s: 0.0 };
        simulate_paths(&p, &d, &g, 1, seed, Measure::Real).unwrap().remove(0).x_path
    }

    #[test]
    fn recovers_parameters() {
        let prices = synthetic(2600, 1);
        let (p, rep) = fit_eou(&PriceSeries::from_prices(prices).unwrap(), 1.0 / 252.0).unwrap();
        let se = |k: &str| rep.std_errors[k];
        assert!((p.alpha - 4.1847).abs() < 3.0 * se("alpha"), "{} {}", p.alpha, se("alpha"));
        assert!((p.sigma - 0.3327).abs() < 3.0 * se("sigma"), "{} {}", p.sigma, se("sigma"));
        assert!((p.kappa - 0.5356).abs() < 3.0 * se("kappa"), "{} {}", p.kappa, se("kappa"));
        assert!(rep.residual_autocorr.abs() < 0.1);
        assert_eq!(rep.n_obs, 2600);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = PriceSeries::from_prices(vec![50.0; 200]).unwrap();
        assert!(matches!(fit_eou(&s, 1.0 / 252.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn trending_series_is_not_mean_reverting() {
        let prices: Vec<f64> =
            (0..300).map(|i| (0.5 * 1.01f64.powi(i) + 0.001 * ((i * i) % 7) as f64).exp()).collect();
        let s = PriceSeries::from_prices(prices).unwrap();
        assert!(matches!(fit_eou(&s, 1.0 / 252.0), Err(Error::NotMeanReverting { .. })));
    }

    #[test]
    fn validation() {
        assert!(PriceSeries::new(vec!["2020-01-02".into(), "2020-01-01".into()], vec![1.0, 1.0]).is_err());
        assert!(PriceSeries::from_prices(vec![1.0, -1.0]).is_err());
        assert!(fit_eou(&PriceSeries::from_prices(vec![1.0, 2.0]).unwrap(), 1.0 / 252.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scale_equivariance(k in 0.01f64..100.0, seed in 0u64..50) {
            let prices = synthetic(400, seed);
            let fit = |ps: Vec<f64>| fit_eou(&PriceSeries::from_prices(ps).unwrap(), 1.0 / 252.0);
            let base = fit(prices.clone());
            let scaled = fit(prices.iter().map(|p| p * k).collect());
            match (base, scaled) {
                (Ok((a, _)), Ok((b, _))) => {
                    prop_assert!((b.alpha - a.alpha - k.ln()).abs() < 1e-6 * (1.0 + a.alpha.abs()));
                    prop_assert!((b.kappa - a.kappa).abs() < 1e-6 * a.kappa.abs().max(1.0));
                    prop_assert!((b.sigma - a.sigma).abs() < 1e-9);
                }
                (Err(Error::NotMeanReverting { .. }), Err(Error::NotMeanReverting { .. })) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }
    }
}
