use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{invalid, Result};

/// Continuous nonnegative law for interarrival times (and cluster steps).
///
/// Every variant is absolutely continuous, so none is arithmetic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterarrivalLaw {
    Exponential {
        rate: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    Mixture {
        components: Vec<(f64, InterarrivalLaw)>,
    },
}

impl InterarrivalLaw {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn gamma(shape: f64, scale: f64) -> Self {
        Self::Gamma { shape, scale }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(invalid(format!("exponential rate {rate} must be > 0")));
                }
            }
            Self::Uniform { lo, hi } => {
                if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                    return Err(invalid(format!(
                        "uniform needs 0 <= lo < hi, got ({lo}, {hi})"
                    )));
                }
            }
            Self::Gamma { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return Err(invalid(format!(
                        "gamma needs shape, scale > 0, got ({shape}, {scale})"
                    )));
                }
            }
            Self::Mixture { ref components } => {
                if components.is_empty() {
                    return Err(invalid("mixture has no components"));
                }
                for (w, law) in components {
                    if !(*w > 0.0 && w.is_finite()) {
                        return Err(invalid(format!("mixture weight {w} must be > 0")));
                    }
                    law.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Gamma { shape, scale } => shape * scale,
            Self::Mixture { ref components } => mix(components, |l| l.mean()),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            Self::Gamma { shape, scale } => shape * (shape + 1.0) * scale * scale,
            Self::Mixture { ref components } => mix(components, |l| l.second_moment()),
        }
    }

    /// Essential supremum, when finite.
    pub fn upper_bound(&self) -> Option<f64> {
        match *self {
            Self::Uniform { hi, .. } => Some(hi),
            Self::Exponential { .. } | Self::Gamma { .. } => None,
            Self::Mixture { ref components } => components
                .iter()
                .map(|(_, l)| l.upper_bound())
                .try_fold(0.0_f64, |m, b| b.map(|b| m.max(b))),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Gamma { shape, scale } => gamma_cdf(shape, scale, x),
            Self::Mixture { ref components } => mix(components, |l| l.cdf(x)),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { rate } if x > 0.0 => (-rate * x).exp(),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Partial expectation `E[X; X <= c]`.
    pub fn partial_mean(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => {
                let e = (-rate * c).exp();
                (1.0 - e) / rate - c * e
            }
            Self::Uniform { lo, hi } => {
                let c = c.clamp(lo, hi);
                (c * c - lo * lo) / (2.0 * (hi - lo))
            }
            Self::Gamma { shape, scale } => shape * scale * gamma_cdf(shape + 1.0, scale, c),
            Self::Mixture { ref components } => mix(components, |l| l.partial_mean(c)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("validated gamma")
                .sample(rng),
            Self::Mixture { ref components } => {
                let total: f64 = components.iter().map(|(w, _)| w).sum();
                let mut u = rng.random::<f64>() * total;
                for (w, law) in components {
                    if u < *w {
                        return law.sample(rng);
                    }
                    u -= w;
                }
                components[components.len() - 1].1.sample(rng)
            }
        }
    }
}

fn mix(components: &[(f64, InterarrivalLaw)], f: impl Fn(&InterarrivalLaw) -> f64) -> f64 {
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    components.iter().map(|(w, l)| w * f(l)).sum::<f64>() / total
}

fn gamma_cdf(shape: f64, scale: f64, x: f64) -> f64 {
    GammaDist::new(shape, 1.0 / scale)
        .expect("validated gamma")
        .cdf(x)
}

/// Law of the first epoch `T'_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Delay {
    Zero,
    Law(InterarrivalLaw),
}

impl Delay {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Delay::Zero => 0.0,
            Delay::Law(l) => l.sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Delay::Zero => 0.0,
            Delay::Law(l) => l.mean(),
        }
    }
}

/// Law of a cluster size on {0, 1, 2, ...}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeLaw {
    Fixed {
        n: usize,
    },
    Poisson {
        mean: f64,
    },
    /// Failures before the first success, success probability `p`.
    Geometric {
        p: f64,
    },
}

impl SizeLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SizeLaw::Fixed { .. } => Ok(()),
            SizeLaw::Poisson { mean } if mean >= 0.0 && mean.is_finite() => Ok(()),
            SizeLaw::Geometric { p } if p > 0.0 && p <= 1.0 => Ok(()),
            ref other => Err(invalid(format!("invalid size law {other:?}"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SizeLaw::Fixed { n } => n as f64,
            SizeLaw::Poisson { mean } => mean,
            SizeLaw::Geometric { p } => (1.0 - p) / p,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            SizeLaw::Fixed { n } => (n * n) as f64,
            SizeLaw::Poisson { mean } => mean + mean * mean,
            SizeLaw::Geometric { p } => {
                let m = (1.0 - p) / p;
                (1.0 - p) / (p * p) + m * m
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            SizeLaw::Fixed { n } => n,
            SizeLaw::Poisson { mean } => {
                if mean == 0.0 {
                    0
                } else {
                    Poisson::new(mean).expect("validated mean").sample(rng) as usize
                }
            }
            SizeLaw::Geometric { p } => {
                Geometric::new(p).expect("validated p").sample(rng) as usize
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    fn check_mean(law: &InterarrivalLaw, expected: f64, n: usize, seed: u64) {
        let mut rng = RngStream::new(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        let (m, se) = mean_and_se(&xs);
        assert!(
            (m - expected).abs() < 3.0 * se,
            "{law:?}: mean {m} vs {expected} (se {se})"
        );
    }

    #[test]
    fn sample_means() {
        check_mean(&InterarrivalLaw::uniform(0.0, 5.0), 2.5, 1_000_000, 1);
        check_mean(&InterarrivalLaw::exponential(1.0), 1.0, 1_000_000, 2);
        check_mean(&InterarrivalLaw::gamma(2.0, 0.5), 1.0, 1_000_000, 3);
    }

    #[test]
    fn gamma_mean_matches_numeric_moment() {
        // midpoint rule on the density of Gamma(2, 0.5): x * x / 0.25 * exp(-2x)
        let h = 1e-4;
        let numeric: f64 = (0..400_000)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                x * x / 0.25 * (-2.0 * x).exp() * h
            })
            .sum();
        assert_relative_eq!(numeric, 1.0, epsilon = 1e-6);
        assert_relative_eq!(
            InterarrivalLaw::gamma(2.0, 0.5).mean(),
            numeric,
            epsilon = 1e-6
        );
    }

    #[test]
    fn partial_means_match_quadrature() {
        let laws = [
            InterarrivalLaw::uniform(0.0, 5.0),
            InterarrivalLaw::exponential(0.7),
            InterarrivalLaw::gamma(2.5, 0.8),
        ];
        for law in &laws {
            for &c in &[0.3, 1.0, 2.7] {
                // E[X; X <= c] = c F(c) - int_0^c F(x) dx
                let n = 200_000;
                let h = c / n as f64;
                let int_f: f64 = (0..n).map(|i| law.cdf((i as f64 + 0.5) * h) * h).sum();
                let expected = c * law.cdf(c) - int_f;
                assert_relative_eq!(law.partial_mean(c), expected, epsilon = 1e-7);
            }
            assert_relative_eq!(law.partial_mean(1e6), law.mean(), epsilon = 1e-9);
        }
    }

    #[test]
    fn mixture_moments_and_bounds() {
        let m = InterarrivalLaw::Mixture {
            components: vec![
                (1.0, InterarrivalLaw::uniform(0.0, 2.0)),
                (3.0, InterarrivalLaw::uniform(1.0, 5.0)),
            ],
        };
        m.validate().unwrap();
        assert_relative_eq!(m.mean(), 0.25 * 1.0 + 0.75 * 3.0);
        assert_eq!(m.upper_bound(), Some(5.0));
        let unb = InterarrivalLaw::Mixture {
            components: vec![(1.0, InterarrivalLaw::exponential(1.0))],
        };
        assert_eq!(unb.upper_bound(), None);
        check_mean(&m, m.mean(), 200_000, 4);
    }

    #[test]
    fn validation() {
        assert!(InterarrivalLaw::exponential(0.0).validate().is_err());
        assert!(InterarrivalLaw::uniform(2.0, 1.0).validate().is_err());
        assert!(InterarrivalLaw::uniform(-1.0, 1.0).validate().is_err());
        assert!(InterarrivalLaw::gamma(1.0, -1.0).validate().is_err());
        assert!(SizeLaw::Poisson { mean: -1.0 }.validate().is_err());
        assert!(SizeLaw::Geometric { p: 0.0 }.validate().is_err());
    }

    #[test]
    fn size_law_moments() {
        let mut rng = RngStream::new(5, 0);
        for law in [
            SizeLaw::Poisson { mean: 1.3 },
            SizeLaw::Geometric { p: 0.4 },
            SizeLaw::Fixed { n: 3 },
        ] {
            let xs: Vec<f64> = (0..200_000).map(|_| law.sample(&mut rng) as f64).collect();
            let (m, se) = mean_and_se(&xs);
            assert!((m - law.mean()).abs() <= 4.0 * se.max(1e-12), "{law:?}");
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let (m2, se2) = mean_and_se(&sq);
            assert!(
                (m2 - law.second_moment()).abs() <= 4.0 * se2.max(1e-12),
                "{law:?}"
            );
        }
        assert_eq!(SizeLaw::Poisson { mean: 0.0 }.sample(&mut rng), 0);
    }
}
