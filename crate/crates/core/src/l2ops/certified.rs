//! Recurrent operator with a closed-form gain certificate.
//!
//! `ξ_{t+1} = Aξ_t + Bŵ_t`, `u_t = c·(Cσ(ξ_t) + Dŵ_t)` with
//! `A = s·Â/(‖Â‖ + 1e-6)`. Every norm is the sound upper bound of
//! [`Mat::spectral_bound`], so `‖A‖ < s` and
//! `gain ≤ ‖C‖·‖B‖/(1 − s) + ‖D‖` hold for every θ. The output scale `c`
//! pulls that bound down to the budget when it is exceeded.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ren::Activation;
use super::ParamReader;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::signals::CausalOperator;

/// Squarings used by the spectral-norm bound.
pub const NORM_SQUARINGS: u32 = 10;
const NORM_GUARD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifiedConfig {
    pub q: usize,
    pub n: usize,
    pub m: usize,
    /// Bound on the state-matrix norm, `0 ≤ s < 1`.
    pub s: f64,
    /// Gain budget; `None` leaves the output unscaled.
    pub gamma: Option<f64>,
    #[serde(default)]
    pub activation: Activation,
}

impl CertifiedConfig {
    pub fn new(q: usize, n: usize, m: usize, gamma: f64) -> Self {
        CertifiedConfig {
            q,
            n,
            m,
            s: 0.9,
            gamma: Some(gamma),
            activation: Activation::Tanh,
        }
    }

    pub fn param_count(&self) -> usize {
        let (q, n, m) = (self.q, self.n, self.m);
        q * q + q * n + m * q + m * n
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::Invalid("operator dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.s) {
            return Err(Error::Invalid(format!("state bound s = {} outside [0, 1)", self.s)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Invalid(format!("gain budget {g} must be positive")));
            }
        }
        Ok(())
    }
}

/// `‖C‖·Lip(σ)·‖B‖/(1 − s) + ‖D‖`.
pub fn gain_bound_formula(s: f64, norm_b: f64, norm_c: f64, norm_d: f64, lip: f64) -> f64 {
    norm_c * lip * norm_b / (1.0 - s) + norm_d
}

#[derive(Clone, Debug)]
pub struct CertifiedWeights<S> {
    pub a: Mat<S>,
    pub b: Mat<S>,
    pub c: Mat<S>,
    pub d: Mat<S>,
    pub s: f64,
    /// Factor applied to the output, `min(1, γ̄ / bound)`.
    pub output_scale: S,
    pub activation: Activation,
}

impl<S: Scalar> CertifiedWeights<S> {
    pub fn from_theta(theta: &[S], cfg: &CertifiedConfig) -> Result<Self> {
        cfg.validate()?;
        if theta.len() != cfg.param_count() {
            return Err(Error::Dimension(format!(
                "θ has {} entries, expected {}",
                theta.len(),
                cfg.param_count()
            )));
        }
        let mut rd = ParamReader::new(theta);
        let a_free = rd.mat(cfg.q, cfg.q);
        let b = rd.mat(cfg.q, cfg.n);
        let c = rd.mat(cfg.m, cfg.q);
        let d = rd.mat(cfg.m, cfg.n);
        let na = a_free.spectral_bound(NORM_SQUARINGS);
        let a = a_free.scale(S::cst(cfg.s) / (na + S::cst(NORM_GUARD)));
        let mut w = CertifiedWeights {
            a,
            b,
            c,
            d,
            s: cfg.s,
            output_scale: S::one(),
            activation: cfg.activation,
        };
        if let Some(g) = cfg.gamma {
            let bound = w.unscaled_bound();
            if bound.val() > g {
                w.output_scale = S::cst(g) / bound;
            }
        }
        Ok(w)
    }

    fn unscaled_bound(&self) -> S {
        let nb = self.b.spectral_bound(NORM_SQUARINGS);
        let nc = self.c.spectral_bound(NORM_SQUARINGS);
        let nd = self.d.spectral_bound(NORM_SQUARINGS);
        nc * nb / S::cst(1.0 - self.s) + nd
    }

    /// Certified gain of the operator, output scaling included.
    pub fn analytic_gain_bound(&self) -> f64 {
        self.unscaled_bound().val() * self.output_scale.val()
    }
}

#[derive(Clone, Debug)]
pub struct Certified<S> {
    weights: Arc<CertifiedWeights<S>>,
    xi: Vec<S>,
}

impl<S: Scalar> Certified<S> {
    pub fn new(weights: CertifiedWeights<S>) -> Self {
        let xi = vec![S::zero(); weights.a.rows()];
        Certified {
            weights: Arc::new(weights),
            xi,
        }
    }

    pub fn from_theta(theta: &[S], cfg: &CertifiedConfig) -> Result<Self> {
        Ok(Self::new(CertifiedWeights::from_theta(theta, cfg)?))
    }

    pub fn weights(&self) -> &CertifiedWeights<S> {
        &self.weights
    }
}

impl<S: Scalar> CausalOperator<S> for Certified<S> {
    fn input_dim(&self) -> usize {
        self.weights.b.cols()
    }

    fn output_dim(&self) -> usize {
        self.weights.c.rows()
    }

    fn reset(&mut self) {
        self.xi = vec![S::zero(); self.weights.a.rows()];
    }

    fn step(&mut self, input: &[S]) -> Vec<S> {
        let w = &self.weights;
        let act: Vec<S> = self.xi.iter().map(|&v| w.activation.apply(v)).collect();
        let cu = w.c.matvec(&act);
        let du = w.d.matvec(input);
        let out = cu.iter().zip(&du).map(|(&a, &b)| (a + b) * w.output_scale).collect();
        let ax = w.a.matvec(&self.xi);
        let bu = w.b.matvec(input);
        self.xi = ax.iter().zip(&bu).map(|(&a, &b)| a + b).collect();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{default_probes, estimate_gain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random(n: usize, std: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, std).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn formula_example() {
        assert_eq!(gain_bound_formula(0.5, 1.0, 1.0, 0.0, 1.0), 2.0);
    }

    #[test]
    fn static_gain_bound() {
        let cfg = CertifiedConfig {
            gamma: None,
            ..CertifiedConfig::new(1, 1, 1, 1.0)
        };
        // Â = 0, B = 0, C = 0, D = -1.7
        let w = CertifiedWeights::from_theta(&[0.0, 0.0, 0.0, -1.7], &cfg).unwrap();
        assert!((w.analytic_gain_bound() - 1.7).abs() < 1e-12);
        let cfg3 = CertifiedConfig {
            gamma: None,
            ..CertifiedConfig::new(2, 3, 3, 1.0)
        };
        let mut th = vec![0.0; cfg3.param_count()];
        let off = 4 + 6 + 6;
        for i in 0..3 {
            th[off + 4 * i] = 0.8;
        }
        let w = CertifiedWeights::from_theta(&th, &cfg3).unwrap();
        assert!((w.analytic_gain_bound() - 0.8).abs() < 0.8e-3);
    }

    #[test]
    fn sampled_gain_below_certificate() {
        let cfg = CertifiedConfig {
            gamma: None,
            ..CertifiedConfig::new(6, 4, 3, 1.0)
        };
        for seed in 0..50 {
            let th = random(cfg.param_count(), 1.0, seed);
            let mut op = Certified::from_theta(&th, &cfg).unwrap();
            let bound = op.weights().analytic_gain_bound();
            let g = estimate_gain(&mut op, &default_probes(4, seed)).unwrap();
            assert!(g.value <= bound, "seed {seed}: {} > {bound}", g.value);
        }
    }

    #[test]
    fn budget_rescales_output() {
        let cfg = CertifiedConfig::new(6, 4, 3, 0.5);
        for seed in 0..10 {
            let th = random(cfg.param_count(), 2.0, seed);
            let mut op = Certified::from_theta(&th, &cfg).unwrap();
            assert!(op.weights().analytic_gain_bound() <= 0.5 * (1.0 + 1e-12));
            let g = estimate_gain(&mut op, &default_probes(4, seed)).unwrap();
            assert!(g.value <= 0.5);
        }
    }

    #[test]
    fn state_matrix_is_contractive() {
        let cfg = CertifiedConfig::new(5, 2, 2, 1.0);
        for seed in 0..20 {
            let th = random(cfg.param_count(), 3.0, seed);
            let w = CertifiedWeights::<f64>::from_theta(&th, &cfg).unwrap();
            assert!(crate::linalg::spectral_norm(&w.a) < cfg.s);
        }
    }
}
