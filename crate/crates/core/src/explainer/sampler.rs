//! Relaxed Bernoulli edge masks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Noise added to the latent edge score before the tempered sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    /// `xi = -log(-log u)`.
    #[default]
    Gumbel,
    /// `xi = log u - log(1 - u)`, the binary concrete relaxation.
    Logistic,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gumbel => "gumbel",
            NoiseKind::Logistic => "logistic",
        }
    }

    pub fn noise(self, u: f64) -> f64 {
        match self {
            NoiseKind::Gumbel => -(-u.ln()).ln(),
            NoiseKind::Logistic => u.ln() - (1.0 - u).ln(),
        }
    }

    /// Mean of the soft weight as the temperature goes to zero, i.e.
    /// `P(omega + xi > 0)`.
    pub fn limit_mean(self, omega: f64) -> f64 {
        match self {
            NoiseKind::Gumbel => 1.0 - (-omega.exp()).exp(),
            NoiseKind::Logistic => sigmoid(omega),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gumbel" => Ok(NoiseKind::Gumbel),
            "logistic" => Ok(NoiseKind::Logistic),
            other => Err(Error::arg(format!("unknown noise '{other}'"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform draw in the open interval (0, 1); endpoints are redrawn.
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// `sigma((omega + xi(u)) / tau)`.
pub fn sample_soft(omega: f64, tau: f64, u: f64, kind: NoiseKind) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::arg(format!("temperature {tau} must be positive")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::arg(format!("uniform draw {u} outside (0,1)")));
    }
    Ok(sigmoid((omega + kind.noise(u)) / tau))
}

pub fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("threshold {t} outside (0,1)")))
    }
}

/// `1` where `soft > t`, else `0`.
pub fn harden(soft: &[f64], t: f64) -> Result<Vec<f64>> {
    check_threshold(t)?;
    Ok(soft.iter().map(|&s| if s > t { 1.0 } else { 0.0 }).collect())
}

/// Exponential schedule from `init` at epoch 0 to `last` at the final epoch.
pub fn temperature(init: f64, last: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return init;
    }
    let frac = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
    init * (last / init).powf(frac)
}
