use crate::error::{Error, Result};

/// Normalized sample autocorrelation for lags `0..=max_lag` (biased estimator,
/// mean removed).
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::arg(format!("max lag {max_lag} exceeds series length {n}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) || c0 <= f64::EPSILON * f64::EPSILON * n as f64 * mean.abs().max(1.0).powi(2) {
        return Err(Error::DegenerateSeries("series has zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|k| centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// First lag where the autocorrelation drops below `1 − 1/e`; otherwise the
/// lag of the first local minimum, otherwise `max_lag`.
pub fn select_delay_autocorr(series: &[f64], max_lag: usize) -> Result<usize> {
    if max_lag == 0 || 2 * max_lag >= series.len() {
        return Err(Error::arg(format!(
            "max lag must satisfy 1 ≤ max_lag < len/2, got {max_lag} for length {}",
            series.len()
        )));
    }
    let acf = autocorrelation(series, max_lag + 1)?;
    let threshold = 1.0 - (-1.0f64).exp();
    if let Some(k) = (1..=max_lag).find(|&k| acf[k] < threshold) {
        return Ok(k);
    }
    Ok((1..=max_lag).find(|&k| acf[k] <= acf[k - 1] && acf[k] <= acf[k + 1]).unwrap_or(max_lag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn sine_crosses_where_cosine_does() {
        let p = 100.0;
        let series: Vec<f64> = (0..20_000).map(|k| (2.0 * std::f64::consts::PI * k as f64 / p).sin()).collect();
        // cos(2πk/P) = 1 − 1/e
        let analytic = p * (1.0 - (-1.0f64).exp()).acos() / (2.0 * std::f64::consts::PI);
        let k = select_delay_autocorr(&series, 200).unwrap();
        assert!((k as f64 - analytic).abs() <= 1.0, "k={k} analytic={analytic}");
    }

    #[test]
    fn ar1_and_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = 0.0;
        let ar: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + e;
                x
            })
            .collect();
        let want = ((1.0 - (-1.0f64).exp()).ln() / 0.9f64.ln()).ceil() as i64;
        let k = select_delay_autocorr(&ar, 100).unwrap() as i64;
        assert!((k - want).abs() <= 1, "k={k} want={want}");

        let noise: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert_eq!(select_delay_autocorr(&noise, 50).unwrap(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(select_delay_autocorr(&[2.0; 100], 10), Err(Error::DegenerateSeries(_))));
        assert!(select_delay_autocorr(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
        assert!(select_delay_autocorr(&[1.0, 2.0, 3.0, 4.0], 0).is_err());
    }

    #[test]
    fn falls_back_to_first_minimum() {
        // slowly decorrelating oscillation that never crosses the threshold within max_lag
        let series: Vec<f64> = (0..4000)
            .map(|k| {
                let t = k as f64;
                10.0 * (t / 2000.0).sin() + 0.5 * (2.0 * std::f64::consts::PI * t / 20.0).cos()
            })
            .collect();
        let acf = autocorrelation(&series, 31).unwrap();
        let k = select_delay_autocorr(&series, 30).unwrap();
        assert!(acf[1..=30].iter().all(|&r| r >= 1.0 - (-1.0f64).exp()));
        assert!(acf[k] <= acf[k - 1] && acf[k] <= acf[k + 1]);
    }
}
