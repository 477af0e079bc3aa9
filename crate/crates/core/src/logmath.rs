//! Log-domain helpers shared by the decoders.

/// Score used for impossible events. Finite so that arithmetic never yields NaN.
pub const LOG_ZERO: f64 = -1e30;

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO {
        return b;
    }
    if b <= LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= LOG_ZERO {
        return if values.is_empty() { LOG_ZERO } else { max.max(LOG_ZERO) };
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct_sum() {
        let a = 0.3f64.ln();
        let b = 0.2f64.ln();
        assert!((log_add(a, b) - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(log_add(LOG_ZERO, b), b);
        assert_eq!(log_add(a, LOG_ZERO), a);
    }

    #[test]
    fn log_sum_exp_of_distribution_is_zero() {
        let lse = log_sum_exp([0.25f64.ln(), 0.25f64.ln(), 0.5f64.ln()]);
        assert!(lse.abs() < 1e-12);
        assert_eq!(log_sum_exp(Vec::<f64>::new()), LOG_ZERO);
    }
}
