//! Calibrated reference instances: WTI crude oil as the asset and two car
//! models whose demand responds to it with opposite signs.

use crate::processes::{DemandParams, EouParams, PathGrid};

/// One month, in years.
pub const MONTH: f64 = 1.0 / 12.0;

pub fn wti(x0: f64) -> EouParams {
    EouParams { kappa: 0.5356, alpha: 4.1847, sigma: 0.3327, x0, horizon: MONTH }
}

/// Monthly grid with daily steps.
pub fn monthly_grid() -> PathGrid {
    PathGrid { n_steps: 21, dt: 1.0 / 252.0 }
}

/// Demand with `A = mu0 T` and `B = mu1 T` given over one month.
pub fn monthly_demand(a: f64, b_coef: f64, b: f64, c: f64, sigma_tilde: f64) -> DemandParams {
    DemandParams { mu0: a / MONTH, mu1: b_coef / MONTH, sigma_tilde, b, c, s: 0.0 }
}

/// Sport-utility model: demand falls as fuel gets dearer.
pub fn sport() -> DemandParams {
    monthly_demand(111_155.66, -185.42, 2.02, 34_543.91, 11_577.37)
}

/// Compact model: demand rises with fuel prices.
pub fn compact() -> DemandParams {
    monthly_demand(151_887.67, 157.41, 6.59, 20_467.10, 8_619.46)
}

pub fn by_name(name: &str) -> Option<DemandParams> {
    match name.to_ascii_lowercase().as_str() {
        "sport" => Some(sport()),
        "compact" => Some(compact()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_a_month() {
        monthly_grid().check_matches(&wti(40.0)).unwrap();
        sport().validate().unwrap();
        compact().validate().unwrap();
        assert!((sport().mu1 * MONTH + 185.42).abs() < 1e-9);
        assert!(by_name("Compact").is_some() && by_name("truck").is_none());
    }
}
