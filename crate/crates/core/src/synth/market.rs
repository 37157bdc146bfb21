//! Synthetic daily price panel with injected regime changes, for exercising the
//! financial ingestion path without proprietary market data.
//!
//! Daily returns follow a two-sector factor model. On a regime-change day the
//! market takes a large dispersed shock and the sector membership is redrawn,
//! so the correlation structure differs before and after.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::SignalStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub tickers: Vec<String>,
    /// Number of trading days (rows of the price table).
    pub n_days: usize,
    /// 0-based rows on which a regime change is injected; each must be >= 1.
    pub regime_days: Vec<usize>,
    /// Daily volatility of the common and sector factors.
    pub factor_vol: f64,
    /// Daily idiosyncratic volatility.
    pub idio_vol: f64,
    /// Per-ticker volatility of the shock on a regime-change day.
    pub shock_vol: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl MarketConfig {
    /// Ten tickers over 320 trading days with three regime changes.
    pub fn ten_tickers(seed: u64) -> Self {
        Self {
            tickers: ["MSFT", "AAPL", "AMZN", "GOOG", "META", "JPM", "JNJ", "WMT", "PG", "XOM"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            n_days: 320,
            regime_days: vec![90, 170, 250],
            factor_vol: 0.008,
            idio_vol: 0.004,
            shock_vol: 0.06,
            start: NaiveDate::from_ymd_opt(2019, 5, 1).expect("valid date"),
            seed,
        }
    }
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut d = d + Duration::days(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d += Duration::days(1);
    }
    d
}

/// Generates the price table; deterministic in `cfg.seed`.
pub fn generate_market(cfg: &MarketConfig) -> Result<SignalStream> {
    let n = cfg.tickers.len();
    if n < 2 {
        return invalid("market needs at least two tickers");
    }
    if cfg.n_days < 2 {
        return invalid("market needs at least two days");
    }
    if let Some(d) = cfg.regime_days.iter().find(|d| **d == 0 || **d >= cfg.n_days) {
        return invalid(format!("regime day {d} outside 1..{}", cfg.n_days));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);

    let mut sectors: Vec<usize> = (0..n).map(|i| i % 2).collect();
    sectors.shuffle(&mut rng);
    let mut prices: Vec<f64> = (0..n).map(|_| (rng.random_range(50.0..250.0) * 100.0f64).round() / 100.0).collect();
    let mut date = cfg.start;
    while matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
        date += Duration::days(1);
    }

    let mut stamps = vec![date.to_string()];
    let mut rows = vec![prices.clone()];
    for day in 1..cfg.n_days {
        date = next_business_day(date);
        let market = normal(&mut rng) * cfg.factor_vol;
        let sector = [normal(&mut rng) * cfg.factor_vol, normal(&mut rng) * cfg.factor_vol];
        let shock = cfg.regime_days.contains(&day);
        if shock {
            sectors.shuffle(&mut rng);
        }
        for (i, p) in prices.iter_mut().enumerate() {
            let mut r = 0.5 * market + sector[sectors[i]] + normal(&mut rng) * cfg.idio_vol;
            if shock {
                r += normal(&mut rng) * cfg.shock_vol;
            }
            *p *= (1.0 + r).max(0.05);
        }
        stamps.push(date.to_string());
        rows.push(prices.iter().map(|p| (p * 100.0).round() / 100.0).collect());
    }
    SignalStream::new(cfg.tickers.clone(), stamps, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_business_days() {
        let cfg = MarketConfig::ten_tickers(3);
        let a = generate_market(&cfg).unwrap();
        assert_eq!(a, generate_market(&cfg).unwrap());
        assert_eq!(a.len(), 320);
        assert_eq!(a.n_nodes(), 10);
        assert_eq!(a.timestamps()[0], "2019-05-01");
        assert_eq!(a.timestamps()[3], "2019-05-06");
        assert!(a.values().iter().flatten().all(|p| *p > 0.0));
    }

    #[test]
    fn rejects_bad_regime_days() {
        let mut cfg = MarketConfig::ten_tickers(1);
        cfg.regime_days = vec![0];
        assert!(generate_market(&cfg).is_err());
        cfg.regime_days = vec![320];
        assert!(generate_market(&cfg).is_err());
    }
}
