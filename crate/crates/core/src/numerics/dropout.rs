use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RngStream, Tensor};
use crate::error::{EsclError, Result};

/// Dropout probability, validated to lie in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DropoutSpec {
    rate: f64,
}

impl DropoutSpec {
    pub const NONE: DropoutSpec = DropoutSpec { rate: 0.0 };

    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(EsclError::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(DropoutSpec { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Value of a kept unit under inverted dropout.
    pub fn keep_scale(&self) -> f64 {
        1.0 / (1.0 - self.rate)
    }
}

impl TryFrom<f64> for DropoutSpec {
    type Error = EsclError;
    fn try_from(rate: f64) -> Result<Self> {
        DropoutSpec::new(rate)
    }
}

impl From<DropoutSpec> for f64 {
    fn from(s: DropoutSpec) -> f64 {
        s.rate
    }
}

/// A realized inverted-dropout mask: every entry is `0` or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    spec: DropoutSpec,
    values: Tensor,
}

impl DropoutMask {
    /// The identity mask (rate 0).
    pub fn ones(shape: &[usize]) -> Self {
        DropoutMask {
            spec: DropoutSpec::NONE,
            values: Tensor::filled(shape, 1.0),
        }
    }

    pub fn spec(&self) -> DropoutSpec {
        self.spec
    }

    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.values.data().iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / self.values.len().max(1) as f64
    }
}

/// Draws an inverted-dropout mask; each entry is dropped with probability
/// `spec.rate()` independently. Deterministic in `(shape, spec, rng)`.
pub fn sample_dropout_mask(shape: &[usize], spec: DropoutSpec, rng: &RngStream) -> DropoutMask {
    let rate = spec.rate();
    if rate == 0.0 {
        return DropoutMask::ones(shape);
    }
    let keep = spec.keep_scale();
    let mut g = rng.generator();
    let mut values = Tensor::zeros(shape);
    for v in values.data_mut() {
        *v = if g.random::<f64>() < rate { 0.0 } else { keep };
    }
    DropoutMask { spec, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_rates_outside_unit_interval() {
        assert!(DropoutSpec::new(1.0).is_err());
        assert!(DropoutSpec::new(-0.1).is_err());
        assert!(DropoutSpec::new(f64::NAN).is_err());
        assert!(DropoutSpec::new(0.0).is_ok());
        assert!(DropoutSpec::new(0.999).is_ok());
    }

    #[test]
    fn rate_zero_is_identity() {
        let m = sample_dropout_mask(&[2, 3], DropoutSpec::NONE, &RngStream::new(1));
        assert!(m.values().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_rate_entries_are_zero_or_two() {
        let spec = DropoutSpec::new(0.5).unwrap();
        let m = sample_dropout_mask(&[2, 3], spec, &RngStream::new(2));
        assert!(m.values().data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn zero_fraction_tracks_rate() {
        let spec = DropoutSpec::new(0.45).unwrap();
        let m = sample_dropout_mask(&[1000, 64], spec, &RngStream::new(3));
        let f = m.zero_fraction();
        assert!((f - 0.45).abs() < 0.02, "zero fraction {f}");
    }

    #[test]
    fn mask_mean_is_one() {
        // inverted dropout keeps E[entry] = 1; 3 sigma band over 1e5 entries
        for &rate in &[0.1, 0.25, 0.45, 0.8] {
            let spec = DropoutSpec::new(rate).unwrap();
            let m = sample_dropout_mask(&[100_000], spec, &RngStream::new(4).derive(1));
            let mean = m.values().data().iter().sum::<f64>() / 1e5;
            let sigma = (rate / (1.0 - rate) / 1e5).sqrt();
            assert!((mean - 1.0).abs() < 3.0 * sigma, "rate {rate}: mean {mean}");
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let spec = DropoutSpec::new(0.3).unwrap();
        let s = RngStream::new(5).derive(9);
        assert_eq!(
            sample_dropout_mask(&[4, 8], spec, &s),
            sample_dropout_mask(&[4, 8], spec, &s)
        );
    }
}
