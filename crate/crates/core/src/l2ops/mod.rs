//! Finite-gain operators used as the free parameter of the controller.
//!
//! Every backend maps an unconstrained θ to a causal operator. The REN and
//! certified backends bound the ℓ2 gain by the budget γ̄ for every θ, so
//! plain gradient descent never leaves the set of stabilizing controllers.

mod certified;
mod decentralized;
mod fir;
mod ren;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use certified::{gain_bound_formula, Certified, CertifiedConfig, CertifiedWeights, NORM_SQUARINGS};
pub use decentralized::{decentralized_compose, Decentralized};
pub use fir::{Fir, FirConfig};
pub use ren::{theta_to_weights, Activation, BiasMode, Ren, RenConfig, RenWeights, REN_EPS};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::signals::CausalOperator;

/// Sequential reader over a flat parameter vector.
pub(crate) struct ParamReader<'a, S> {
    data: &'a [S],
    pos: usize,
}

impl<'a, S: Scalar> ParamReader<'a, S> {
    pub(crate) fn new(data: &'a [S]) -> Self {
        ParamReader { data, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> &'a [S] {
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    pub(crate) fn mat(&mut self, rows: usize, cols: usize) -> Mat<S> {
        Mat::from_vec(rows, cols, self.take(rows * cols).to_vec())
    }
}

/// Backend description; together with θ it determines the operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum OperatorSpec {
    Ren(RenConfig),
    Certified(CertifiedConfig),
    Fir(FirConfig),
    Decentralized { blocks: Vec<OperatorSpec> },
}

impl OperatorSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            OperatorSpec::Ren(c) => c.n,
            OperatorSpec::Certified(c) => c.n,
            OperatorSpec::Fir(c) => c.n,
            OperatorSpec::Decentralized { blocks } => blocks.iter().map(Self::input_dim).sum(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            OperatorSpec::Ren(c) => c.m,
            OperatorSpec::Certified(c) => c.m,
            OperatorSpec::Fir(c) => c.m,
            OperatorSpec::Decentralized { blocks } => blocks.iter().map(Self::output_dim).sum(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            OperatorSpec::Ren(c) => c.param_count(),
            OperatorSpec::Certified(c) => c.param_count(),
            OperatorSpec::Fir(c) => c.param_count(),
            OperatorSpec::Decentralized { blocks } => blocks.iter().map(Self::param_count).sum(),
        }
    }

    /// Gain budget guaranteed for every θ, if any.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            OperatorSpec::Ren(c) => Some(c.gamma),
            OperatorSpec::Certified(c) => c.gamma,
            OperatorSpec::Fir(c) => c.gamma,
            OperatorSpec::Decentralized { blocks } => blocks
                .iter()
                .map(Self::gamma)
                .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g))),
        }
    }

    pub fn build<S: Scalar>(&self, theta: &[S]) -> Result<Operator<S>> {
        if theta.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "θ has {} entries, backend expects {}",
                theta.len(),
                self.param_count()
            )));
        }
        Ok(match self {
            OperatorSpec::Ren(c) => Operator::Ren(Ren::from_theta(theta, c)?),
            OperatorSpec::Certified(c) => Operator::Certified(Certified::from_theta(theta, c)?),
            OperatorSpec::Fir(c) => Operator::Fir(Fir::from_theta(theta, c)?),
            OperatorSpec::Decentralized { blocks } => {
                let mut ops = Vec::with_capacity(blocks.len());
                let mut pos = 0;
                for b in blocks {
                    let k = b.param_count();
                    ops.push(b.build(&theta[pos..pos + k])?);
                    pos += k;
                }
                let ins: Vec<usize> = blocks.iter().map(Self::input_dim).collect();
                let outs: Vec<usize> = blocks.iter().map(Self::output_dim).collect();
                Operator::Decentralized(decentralized_compose(ops, &ins, &outs)?)
            }
        })
    }

    /// I.i.d. Gaussian θ.
    pub fn init_theta(&self, std: f64, seed: u64) -> Vec<f64> {
        ParamFamily::init_theta(self, std, seed)
    }
}

/// A built operator of any backend.
#[derive(Clone, Debug)]
pub enum Operator<S> {
    Ren(Ren<S>),
    Certified(Certified<S>),
    Fir(Fir<S>),
    Decentralized(Decentralized<Operator<S>>),
}

impl<S: Scalar> Operator<S> {
    /// Closed-form gain certificate; the REN backend has none.
    pub fn analytic_gain_bound(&self) -> Result<f64> {
        match self {
            Operator::Certified(c) => Ok(c.weights().analytic_gain_bound()),
            Operator::Fir(f) => Ok(f.analytic_gain_bound()),
            Operator::Decentralized(d) => d
                .blocks()
                .iter()
                .map(Operator::analytic_gain_bound)
                .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g))),
            Operator::Ren(_) => Err(Error::Invalid(
                "the REN backend carries a built-in budget but no closed-form certificate".into(),
            )),
        }
    }
}

impl<S: Scalar> CausalOperator<S> for Operator<S> {
    fn input_dim(&self) -> usize {
        match self {
            Operator::Ren(o) => o.input_dim(),
            Operator::Certified(o) => o.input_dim(),
            Operator::Fir(o) => o.input_dim(),
            Operator::Decentralized(o) => o.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            Operator::Ren(o) => o.output_dim(),
            Operator::Certified(o) => o.output_dim(),
            Operator::Fir(o) => o.output_dim(),
            Operator::Decentralized(o) => o.output_dim(),
        }
    }

    fn reset(&mut self) {
        match self {
            Operator::Ren(o) => o.reset(),
            Operator::Certified(o) => o.reset(),
            Operator::Fir(o) => o.reset(),
            Operator::Decentralized(o) => o.reset(),
        }
    }

    fn step(&mut self, input: &[S]) -> Vec<S> {
        match self {
            Operator::Ren(o) => o.step(input),
            Operator::Certified(o) => o.step(input),
            Operator::Fir(o) => o.step(input),
            Operator::Decentralized(o) => o.step(input),
        }
    }
}

/// A family of policies indexed by a flat θ.
pub trait ParamFamily {
    fn param_count(&self) -> usize;

    /// I.i.d. Gaussian θ.
    fn init_theta(&self, std: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, std).expect("nonnegative std");
        (0..self.param_count()).map(|_| d.sample(&mut rng)).collect()
    }
}

impl ParamFamily for OperatorSpec {
    fn param_count(&self) -> usize {
        OperatorSpec::param_count(self)
    }
}

/// Seeds from which a checkpoint's θ can be regenerated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master: u64,
    pub init: u64,
    pub samples: u64,
    pub shuffle: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<P = OperatorSpec> {
    pub operator: P,
    pub theta: Vec<f64>,
    pub epoch: usize,
    pub fraction: f64,
    pub objective: Option<f64>,
    pub seeds: SeedLineage,
}

impl Checkpoint {
    pub fn build<S: Scalar>(&self) -> Result<Operator<S>> {
        let theta: Vec<S> = self.theta.iter().map(|&v| S::cst(v)).collect();
        self.operator.build(&theta)
    }
}

impl<P: ParamFamily + Serialize + DeserializeOwned> Checkpoint<P> {
    pub fn to_json(&self) -> Result<String> {
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint θ".into()));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.theta.len() != c.operator.param_count() {
            return Err(Error::Dimension(format!(
                "checkpoint θ has {} entries, backend expects {}",
                c.theta.len(),
                c.operator.param_count()
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{default_probes, estimate_gain};

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let spec = OperatorSpec::Ren(RenConfig {
            bias: BiasMode::Output { horizon: 4 },
            ..RenConfig::new(3, 3, 2, 2, 1.5)
        });
        let theta = spec.init_theta(0.7, 3);
        let c = Checkpoint {
            operator: spec,
            theta,
            epoch: 7,
            fraction: 0.5,
            objective: Some(1.25),
            seeds: SeedLineage {
                master: 1,
                init: 2,
                samples: 3,
                shuffle: 4,
            },
        };
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.theta.iter().zip(&c.theta) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn decentralized_spec_splits_theta() {
        let block = OperatorSpec::Ren(RenConfig::new(2, 2, 4, 2, 0.8));
        let spec = OperatorSpec::Decentralized {
            blocks: vec![block.clone(), block.clone()],
        };
        assert_eq!(spec.param_count(), 2 * block.param_count());
        assert_eq!(spec.gamma(), Some(0.8));
        let th = spec.init_theta(1.0, 1);
        let mut op = spec.build(&th).unwrap();
        assert_eq!((op.input_dim(), op.output_dim()), (8, 4));
        let g = estimate_gain(&mut op, &default_probes(8, 1)).unwrap();
        assert!(g.value <= 0.8);
    }

    #[test]
    fn ren_has_no_closed_form_certificate() {
        let spec = OperatorSpec::Ren(RenConfig::new(2, 2, 2, 2, 1.0));
        let op = spec.build::<f64>(&spec.init_theta(1.0, 0)).unwrap();
        assert!(op.analytic_gain_bound().is_err());
        let spec = OperatorSpec::Certified(CertifiedConfig::new(2, 2, 2, 1.0));
        let op = spec.build::<f64>(&spec.init_theta(1.0, 0)).unwrap();
        assert!(op.analytic_gain_bound().unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn wrong_theta_length_rejected() {
        let spec = OperatorSpec::Fir(FirConfig {
            taps: 2,
            n: 1,
            m: 1,
            gamma: None,
        });
        assert!(spec.build::<f64>(&[1.0]).is_err());
    }
}
