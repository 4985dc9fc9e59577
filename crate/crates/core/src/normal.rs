//! Standard normal quantile function, `Φ^{-1}(p) = -√2 erfc^{-1}(2p)`.

use statrs::function::erf::erfc_inv;

use crate::error::{check_open_unit, Result};

/// `Φ^{-1}(p)` for `p` strictly inside `(0, 1)`.
pub fn inverse_cdf(p: f64) -> Result<f64> {
    check_open_unit(p)?;
    Ok(quantile(p))
}

pub(crate) fn quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an independent double-precision implementation.
    const TABLE: &[(f64, f64)] = &[
        (1e-300, -37.0470962993612),
        (1e-20, -9.262340089798409),
        (1e-10, -6.361340902404056),
        (1e-05, -4.264890793922825),
        (0.001, -3.090232306167813),
        (0.01, -2.3263478740408408),
        (0.02425, -1.972961051311885),
        (0.05, -1.6448536269514729),
        (0.075, -1.4395314709384563),
        (0.1, -1.2815515655446004),
        (0.3, -0.5244005127080409),
        (0.5, 0.0),
        (0.6, 0.2533471031357997),
        (0.8413447460685429, 1.0),
        (0.9, 1.2815515655446004),
        (0.975, 1.959963984540054),
        (0.995, 2.5758293035489004),
        (0.999999, 4.753424308817087),
    ];

    #[test]
    fn matches_reference_table() {
        for &(p, z) in TABLE {
            let got = inverse_cdf(p).unwrap();
            assert!(
                (got - z).abs() <= 1e-9_f64.max(1e-12 * z.abs()),
                "p={p}: got {got}, want {z}"
            );
        }
    }

    #[test]
    fn antisymmetric() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((quantile(p) + quantile(1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_boundary() {
        assert!(inverse_cdf(0.0).is_err());
        assert!(inverse_cdf(1.0).is_err());
    }
}
