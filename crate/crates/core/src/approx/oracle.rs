//! Closed-form approximators.

use super::{ApproxKind, Approximator, Step};
use crate::datasets::PairedSample;
use crate::error::{check_dim, Error, Result};

/// Exact forward target for one known pair: `x_t - x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOracle {
    x0: Vec<f64>,
}

impl ForwardOracle {
    pub fn new(x0: Vec<f64>) -> Self {
        Self { x0 }
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
}

pub fn analytic_forward_oracle(pair: &PairedSample) -> ForwardOracle {
    ForwardOracle::new(pair.x0.clone())
}

impl Approximator for ForwardOracle {
    fn kind(&self) -> ApproxKind {
        ApproxKind::AnalyticForward
    }

    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn evaluate(&self, x_t: &[f64], _step: Step, _y: Option<&[f64]>) -> Result<Vec<f64>> {
        check_dim("forward oracle x_t", self.x0.len(), x_t.len())?;
        Ok(x_t.iter().zip(&self.x0).map(|(a, b)| a - b).collect())
    }
}

/// Recovers the unit noise that produced `x_t` from a known pair:
/// `(x_t - (1 - t) x0 - t y) / B(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReverseOracle {
    x0: Vec<f64>,
    y: Vec<f64>,
}

impl ReverseOracle {
    pub fn new(x0: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_dim("reverse oracle pair", x0.len(), y.len())?;
        Ok(Self { x0, y })
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

pub fn analytic_reverse_oracle(pair: &PairedSample) -> Result<ReverseOracle> {
    ReverseOracle::new(pair.x0.clone(), pair.y.clone())
}

impl Approximator for ReverseOracle {
    fn kind(&self) -> ApproxKind {
        ApproxKind::AnalyticReverse
    }

    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn evaluate(&self, x_t: &[f64], step: Step, _y: Option<&[f64]>) -> Result<Vec<f64>> {
        check_dim("reverse oracle x_t", self.x0.len(), x_t.len())?;
        if step.index == 0 || step.index >= step.total {
            return Err(Error::Singular {
                t: step.frac(),
                what: "reverse oracle divides by B(t)",
            });
        }
        let t = step.frac();
        let b = ((step.index * (step.total - step.index)) as f64).sqrt() / step.total as f64;
        Ok(x_t
            .iter()
            .zip(&self.x0)
            .zip(&self.y)
            .map(|((&x, &a), &c)| (x - (1.0 - t) * a - t * c) / b)
            .collect())
    }
}

/// Population-optimal forward predictor for a Gaussian source.
///
/// With `x0 ~ N(mean, sd² I)` and `y = coupling · x0 + shift`, the marginal is
/// `x_t = a x0 + t shift + sqrt(G) ε` with `a = 1 - t + t · coupling`, so the
/// posterior mean is linear in `x_t` and `x_t - E[x0 | x_t]` is the best
/// squared-error forward prediction from `x_t` alone.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub sd: f64,
    pub coupling: f64,
    pub shift: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: Vec<f64>, sd: f64, coupling: f64, shift: Vec<f64>) -> Result<Self> {
        check_dim("gaussian oracle shift", mean.len(), shift.len())?;
        if !(sd > 0.0) {
            return Err(Error::Config("gaussian oracle needs sd > 0".into()));
        }
        Ok(Self {
            mean,
            sd,
            coupling,
            shift,
        })
    }

    /// `E[x0 | x_t]`.
    pub fn posterior_mean(&self, x_t: &[f64], t: f64) -> Vec<f64> {
        let a = 1.0 - t + t * self.coupling;
        let var = self.sd * self.sd;
        let g = t * (1.0 - t);
        let denom = var * a * a + g;
        let gain = if a == 0.0 || denom == 0.0 { 0.0 } else { var * a / denom };
        x_t.iter()
            .zip(&self.mean)
            .zip(&self.shift)
            .map(|((&x, &m), &s)| m + gain * (x - a * m - t * s))
            .collect()
    }

    /// `Var[x0 | x_t]` per coordinate.
    pub fn posterior_variance(&self, t: f64) -> f64 {
        let a = 1.0 - t + t * self.coupling;
        let var = self.sd * self.sd;
        let g = t * (1.0 - t);
        let denom = var * a * a + g;
        if denom == 0.0 {
            var
        } else {
            var * g / denom
        }
    }
}

impl Approximator for GaussianPosterior {
    fn kind(&self) -> ApproxKind {
        ApproxKind::AnalyticGaussian
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn evaluate(&self, x_t: &[f64], step: Step, _y: Option<&[f64]>) -> Result<Vec<f64>> {
        check_dim("gaussian oracle x_t", self.mean.len(), x_t.len())?;
        let m = self.posterior_mean(x_t, step.frac());
        Ok(x_t.iter().zip(&m).map(|(a, b)| a - b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{sample_marginal, BridgeSchedule};
    use crate::rng::Stream;

    fn pair(x0: &[f64], y: &[f64]) -> PairedSample {
        PairedSample::new(x0.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn forward_oracle_is_difference() {
        let o = analytic_forward_oracle(&pair(&[1.0, 2.0], &[0.0, 0.0]));
        assert_eq!(o.evaluate(&[3.0, -1.0], Step::new(2, 5), None).unwrap(), vec![2.0, -3.0]);
        assert_eq!(o.kind(), ApproxKind::AnalyticForward);
        assert!(o.params().is_empty());
    }

    #[test]
    fn reverse_oracle_plug_in() {
        let o = analytic_reverse_oracle(&pair(&[0.0], &[0.0])).unwrap();
        let z = o.evaluate(&[0.5], Step::new(2, 4), None).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15);
        assert!(matches!(
            o.evaluate(&[0.5], Step::new(0, 4), None),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            o.evaluate(&[0.5], Step::new(4, 4), None),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn reverse_oracle_centered_is_zero() {
        let p = pair(&[0.3, -0.7], &[1.1, 0.4]);
        let o = analytic_reverse_oracle(&p).unwrap();
        let t = 3.0 / 8.0;
        let mean: Vec<f64> = p.x0.iter().zip(&p.y).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let z = o.evaluate(&mean, Step::new(3, 8), None).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn reverse_oracle_inverts_marginal() {
        let mut rng = Stream::named(5, "oracle-roundtrip");
        let steps = 50;
        let schedule = BridgeSchedule::new(steps).unwrap();
        for _ in 0..1000 {
            let x0 = rng.normal_vec(3);
            let y = rng.normal_vec(3);
            let z = rng.normal_vec(3);
            let k = rng.int_inclusive(1, steps - 1);
            let step = Step::new(k, steps);
            let x_t = sample_marginal(&x0, &y, step.frac(), &z, &schedule).unwrap();
            let o = ReverseOracle::new(x0, y).unwrap();
            let back = o.evaluate(&x_t, step, None).unwrap();
            for (a, b) in back.iter().zip(&z) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_oracle_limits() {
        let o = GaussianPosterior::new(vec![0.5], 2.0, 0.0, vec![3.0]).unwrap();
        // at t = 0 the state is x0 itself
        assert_eq!(o.evaluate(&[1.7], Step::new(0, 10), None).unwrap(), vec![0.0]);
        // at t = 1 with fixed y nothing is known about x0
        assert_eq!(o.posterior_mean(&[3.0], 1.0), vec![0.5]);
        assert_eq!(o.posterior_variance(1.0), 4.0);
        assert_eq!(o.posterior_variance(0.0), 0.0);
    }

    #[test]
    fn gaussian_oracle_matches_conditional_sampling() {
        // brute force: draw (x0, eps), bin x_t near a probe value, average x0
        let o = GaussianPosterior::new(vec![0.0], 1.0, 1.0, vec![2.0]).unwrap();
        let t = 0.4;
        let g = t * (1.0 - t);
        let mut rng = Stream::named(17, "posterior-bins");
        let probe = 1.0;
        let (mut sum, mut n) = (0.0, 0usize);
        for _ in 0..400_000 {
            let x0 = rng.normal();
            let x_t = x0 + t * 2.0 + g.sqrt() * rng.normal();
            if (x_t - probe).abs() < 0.02 {
                sum += x0;
                n += 1;
            }
        }
        let empirical = sum / n as f64;
        let predicted = o.posterior_mean(&[probe], t)[0];
        let se = (o.posterior_variance(t) / n as f64).sqrt();
        assert!((empirical - predicted).abs() < 4.0 * se + 0.01, "{empirical} vs {predicted}");
    }
}
