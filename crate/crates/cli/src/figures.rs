//! Figure data: kernel densities and five-number summaries.

use pcp_core::inference::quantile;

/// Silverman's rule of thumb, `0.9 · min(sd, IQR/1.34) · n^(-1/5)`. Falls back
/// to the standard deviation when the IQR is zero, and to a small positive
/// width when the values are constant.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread > 0.0 {
        0.9 * spread * n.powf(-0.2)
    } else {
        1e-6 * mean.abs().max(1.0)
    }
}

/// Gaussian kernel density on `points` equally spaced abscissae spanning
/// three bandwidths beyond the data range.
pub fn gaussian_kde(values: &[f64], points: usize) -> (f64, Vec<(f64, f64)>) {
    let h = silverman_bandwidth(values);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid = (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let f = values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm;
            (x, f)
        })
        .collect();
    (h, grid)
}

/// Minimum, quartiles (type 7) and maximum; `None` for no values.
pub fn five_numbers(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    Some([
        quantile(values, 0.0),
        quantile(values, 0.25),
        quantile(values, 0.5),
        quantile(values, 0.75),
        quantile(values, 1.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_matches_hand_computation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        // sd = 1.5811, IQR = 2 so IQR/1.34 = 1.4925 is smaller.
        let expected = 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((silverman_bandwidth(&v) - expected).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 / 10.0).collect();
        let (_, grid) = gaussian_kde(&v, 512);
        let dx = grid[1].0 - grid[0].0;
        let area: f64 = grid.iter().map(|g| g.1).sum::<f64>() * dx;
        assert!((area - 1.0).abs() < 0.01, "{area}");
    }

    #[test]
    fn constant_values_get_a_positive_bandwidth() {
        assert!(silverman_bandwidth(&[0.2; 10]) > 0.0);
        assert_eq!(five_numbers(&[0.2; 3]), Some([0.2; 5]));
        assert_eq!(five_numbers(&[]), None);
    }
}
