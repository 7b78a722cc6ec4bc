//! Summary statistics for run reports and paired comparisons.

use statrs::distribution::{Binomial, DiscreteCDF};

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Half-width of the normal-approximation 95% interval of the mean
/// (sample standard deviation); zero for fewer than two values.
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    1.96 * (var / n as f64).sqrt()
}

/// Outcome of a two-sided sign test on paired samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub p_value: f64,
}

/// Two-sided exact sign test of `a` against `b`; ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "sign test needs paired samples");
    let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = wins.min(losses);
        let dist = Binomial::new(0.5, n).expect("valid binomial");
        (2.0 * dist.cdf(k)).min(1.0)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}
