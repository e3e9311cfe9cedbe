//! Pearson chi-squared test of independence on a 2×k table.

use alloc::format;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Bins dropped because both rows were zero there (expected count 0).
    pub pooled_bins: usize,
}

const EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

/// Lower regularized incomplete gamma P(a, x) by its power series; x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if libm::fabs(del) < libm::fabs(sum) * EPS {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - libm::lgamma(a))
}

/// Upper regularized incomplete gamma Q(a, x) by modified Lentz; x ≥ a + 1.
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - libm::lgamma(a)) * h
}

/// Q(a, x) = Γ(a, x) / Γ(a) for a > 0, x ≥ 0.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - gamma_p_series(a, x)).clamp(0.0, 1.0)
    } else {
        gamma_q_fraction(a, x).clamp(0.0, 1.0)
    }
}

/// Survival function of the chi-squared distribution; df 0 gives 1.
pub fn chi_squared_sf(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    regularized_gamma_q(df as f64 / 2.0, statistic / 2.0)
}

/// Pearson test on the 2×k table formed by two count vectors.
///
/// Columns empty in both rows have expected count zero and are dropped
/// before computing the statistic; `df` is the number of remaining columns
/// minus one.
pub fn chi_squared_independence(a: &[u64], b: &[u64]) -> Result<ChiSquared, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::ShapeError(format!("{} bins vs {} bins", a.len(), b.len())));
    }
    let ta: u64 = a.iter().sum();
    let tb: u64 = b.iter().sum();
    if ta == 0 || tb == 0 {
        return Err(EvalError::EmptyDistribution);
    }
    let n = (ta + tb) as f64;
    let mut statistic = 0.0;
    let mut kept = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        kept += 1;
        let ea = ta as f64 * col / n;
        let eb = tb as f64 * col / n;
        statistic += (x as f64 - ea) * (x as f64 - ea) / ea + (y as f64 - eb) * (y as f64 - eb) / eb;
    }
    let df = kept.saturating_sub(1);
    Ok(ChiSquared { statistic, df, p_value: chi_squared_sf(statistic, df), pooled_bins: a.len() - kept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        // upper 5% points of the chi-squared distribution
        for (x, df) in [(3.841, 1), (5.991, 2), (7.815, 3), (11.070, 5), (12.592, 6), (18.307, 10)] {
            let p = chi_squared_sf(x, df);
            assert!((p - 0.05).abs() < 1e-3, "df {df}: {p}");
        }
        // df 2 has the closed form exp(-x/2)
        for x in [0.5, 2.0, 9.0, 40.0] {
            assert!((chi_squared_sf(x, 2) - libm::exp(-x / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two() {
        let r = chi_squared_independence(&[10, 0], &[0, 10]).unwrap();
        assert!((r.statistic - 20.0).abs() < 1e-9);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn identical_and_empty() {
        let r = chi_squared_independence(&[3, 4, 0, 5, 1, 1, 2], &[3, 4, 0, 5, 1, 1, 2]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 5);
        assert_eq!(r.pooled_bins, 1);
        assert_eq!(chi_squared_independence(&[0; 7], &[1; 7]), Err(EvalError::EmptyDistribution));
    }
}
