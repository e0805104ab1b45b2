//! Shapiro-Wilk W test with Royston's large-sample approximation
//! (coefficient polynomials plus a log-normal null for `1 - W`), valid for
//! `3 <= n <= 5000`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{normal_upper_tail, StatsError};

pub const SHAPIRO_WILK_MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
    pub n: usize,
}

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Antisymmetric coefficients for the ascending order statistics, unit norm.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut upper = vec![0.0; half];
    if n == 3 {
        upper[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let std_normal = Normal::standard();
        let an25 = n as f64 + 0.25;
        // m[i] < 0: expected lower order statistics.
        let m: Vec<f64> = (1..=half)
            .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / an25))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / (n as f64).sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first_scaled, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            upper[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        upper[0] = a1;
        for i in first_scaled..half {
            upper[i] = -m[i] / fac;
        }
    }
    let mut coef = vec![0.0; n];
    for (i, a) in upper.iter().enumerate() {
        coef[i] = -a;
        coef[n - 1 - i] = *a;
    }
    coef
}

fn p_value(w: f64, n: usize) -> f64 {
    if w >= 1.0 {
        return 1.0;
    }
    if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        return (pi6 * (w.sqrt().asin() - stqr)).max(0.0);
    }
    let an = n as f64;
    let mut y = (1.0 - w).ln();
    let (mean, sd) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 1e-99;
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    normal_upper_tail((y - mean) / sd)
}

/// Shapiro-Wilk W and its p-value. Larger W (closer to 1) means the sample
/// looks more normal.
pub fn shapiro_wilk(values: &[f64]) -> Result<ShapiroWilk, StatsError> {
    let n = values.len();
    if n < 3 {
        return Err(StatsError::TooFewValues(n));
    }
    if n > SHAPIRO_WILK_MAX_N {
        return Err(StatsError::TooManyValues { got: n, max: SHAPIRO_WILK_MAX_N });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let coef = coefficients(n);

    // Squared correlation between the scaled data and the coefficients,
    // written as 1 - w1 so W near 1 keeps its precision.
    let xs: Vec<f64> = x.iter().map(|v| v / range).collect();
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_a = coef.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (a, v) in coef.iter().zip(&xs) {
        let da = a - mean_a;
        let dx = v - mean_x;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    if ssx <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let root = (ssa * ssx).sqrt();
    let w1 = (root - sax) * (root + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(0.0, 1.0);
    Ok(ShapiroWilk { w, p_value: p_value(w, n), n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_equally_spaced_is_perfect() {
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.w - 1.0).abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coefficients_have_unit_norm() {
        for n in [3, 4, 5, 6, 11, 12, 50, 500, 5000] {
            let c = coefficients(n);
            let norm: f64 = c.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-9, "n={n} norm={norm}");
        }
    }

    #[test]
    fn constant_sample() {
        assert_eq!(shapiro_wilk(&[2.0; 10]), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn size_limits() {
        assert_eq!(shapiro_wilk(&[1.0, 2.0]), Err(StatsError::TooFewValues(2)));
        let big: Vec<f64> = (0..5001).map(f64::from).collect();
        assert!(matches!(shapiro_wilk(&big), Err(StatsError::TooManyValues { .. })));
    }

    fn mixed(n: u64, with_third: bool) -> Vec<f64> {
        (1..=n)
            .map(|i| {
                let mut v = ((i * 7919) % 1000) as f64 / 100.0 + ((i * 104_729) % 997) as f64 / 150.0;
                if with_third {
                    v += ((i * 31) % 89) as f64 / 30.0;
                }
                v
            })
            .collect()
    }

    // Reference values from scipy.stats.shapiro (same swilk algorithm).
    #[test]
    fn matches_reference_implementation() {
        let cases: Vec<(Vec<f64>, f64, f64)> = vec![
            (vec![1.0, 2.0, 4.0], 0.964_285_714_285_714_2, 0.636_886_845_028_968_9),
            (vec![1.0, 2.0, 3.0, 5.0, 8.0], 0.938_550_065_652_982_4, 0.655_706_106_566_855_9),
            (
                vec![148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0, 236.0],
                0.788_814_694_863_171_6,
                0.006_703_814_061_898_823,
            ),
            (mixed(200, false), 0.987_866_098_573_549, 0.086_060_984_749_953_58),
            (mixed(4000, true), 0.992_947_217_522_901_6, 3.843_406_771_606_166e-13),
        ];
        for (x, w, p) in cases {
            let r = shapiro_wilk(&x).unwrap();
            assert!((r.w - w).abs() < 1e-6, "n={} {r:?} want w={w}", x.len());
            assert!(((r.p_value - p) / p).abs() < 1e-4, "n={} {r:?} want p={p}", x.len());
        }
    }

    #[test]
    fn skewed_data_rejects() {
        let x: Vec<f64> = (1..=100).map(|i| (f64::from(i) / 10.0).exp()).collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.p_value < 1e-6, "{r:?}");
        assert!(r.w <= 1.0);
    }

    fn rejection_rate(trials: u64, seed: u64, gen: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64) -> f64 {
        use rand::SeedableRng;
        let mut rejected = 0;
        for t in 0..trials {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ t.wrapping_mul(0x9E37_79B9));
            let x: Vec<f64> = (0..100).map(|_| gen(&mut rng)).collect();
            rejected += (shapiro_wilk(&x).unwrap().p_value < 0.05) as u32;
        }
        f64::from(rejected) / trials as f64
    }

    #[test]
    fn null_rejection_rate() {
        use rand::Rng;
        let rate = rejection_rate(2000, 7, |rng| rng.sample(rand_distr::StandardNormal));
        assert!((0.03..=0.07).contains(&rate), "{rate}");
    }

    #[test]
    fn heavy_tails_reject() {
        use rand::Rng;
        // ratio of independent normals: Cauchy
        let rate = rejection_rate(500, 3, |rng| {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            a / b
        });
        assert!(rate > 0.5, "{rate}");
    }
}
