use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ParamReader;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::signals::CausalOperator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirConfig {
    /// Number of taps `N + 1`.
    pub taps: usize,
    pub n: usize,
    pub m: usize,
    /// Gain budget; `None` leaves the taps unscaled.
    pub gamma: Option<f64>,
}

impl FirConfig {
    pub fn param_count(&self) -> usize {
        self.taps * self.n * self.m
    }
}

/// Finite impulse response `u_t = Σ_{i ≤ min(t, N)} M[i] w_{t−i}`.
#[derive(Clone, Debug)]
pub struct Fir<S> {
    taps: Arc<Vec<Mat<S>>>,
    history: VecDeque<Vec<S>>,
}

impl<S: Scalar> Fir<S> {
    pub fn new(taps: Vec<Mat<S>>) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::Invalid("FIR needs at least one tap".into()))?;
        let shape = first.shape();
        if let Some(bad) = taps.iter().find(|t| t.shape() != shape) {
            return Err(Error::Dimension(format!(
                "FIR tap {:?} differs from {:?}",
                bad.shape(),
                shape
            )));
        }
        Ok(Fir {
            taps: Arc::new(taps),
            history: VecDeque::new(),
        })
    }

    /// Taps read from θ, scaled down to the budget when `Σ‖M[i]‖` exceeds it.
    pub fn from_theta(theta: &[S], cfg: &FirConfig) -> Result<Self> {
        if theta.len() != cfg.param_count() || cfg.taps == 0 {
            return Err(Error::Dimension(format!(
                "FIR θ has {} entries, expected {}",
                theta.len(),
                cfg.param_count()
            )));
        }
        let mut rd = ParamReader::new(theta);
        let mut taps: Vec<Mat<S>> = (0..cfg.taps).map(|_| rd.mat(cfg.m, cfg.n)).collect();
        if let Some(g) = cfg.gamma {
            let bound = Self::bound_of(&taps);
            if bound.val() > g {
                let c = S::cst(g) / bound;
                taps = taps.iter().map(|t| t.scale(c)).collect();
            }
        }
        Self::new(taps)
    }

    fn bound_of(taps: &[Mat<S>]) -> S {
        taps.iter()
            .map(|t| t.spectral_bound(super::certified::NORM_SQUARINGS))
            .fold(S::zero(), |a, b| a + b)
    }

    /// `Σ_i ‖M[i]‖₂`, a sound gain bound for a finite convolution.
    pub fn analytic_gain_bound(&self) -> f64 {
        Self::bound_of(&self.taps).val()
    }

    pub fn taps(&self) -> &[Mat<S>] {
        &self.taps
    }
}

impl<S: Scalar> CausalOperator<S> for Fir<S> {
    fn input_dim(&self) -> usize {
        self.taps[0].cols()
    }

    fn output_dim(&self) -> usize {
        self.taps[0].rows()
    }

    fn reset(&mut self) {
        self.history.clear();
    }

    fn step(&mut self, input: &[S]) -> Vec<S> {
        self.history.push_front(input.to_vec());
        self.history.truncate(self.taps.len());
        let mut out = vec![S::zero(); self.output_dim()];
        for (tap, w) in self.taps.iter().zip(&self.history) {
            for (o, v) in out.iter_mut().zip(tap.matvec(w)) {
                *o += v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{estimate_gain, gaussian_probes, Signal};

    #[test]
    fn single_identity_tap() {
        let mut f = Fir::new(vec![Mat::<f64>::identity(2)]).unwrap();
        let s = gaussian_probes(2, 1, 10, 0).remove(0);
        assert_eq!(f.apply(&s), s);
    }

    #[test]
    fn boxcar_response() {
        let mut f = Fir::new(vec![Mat::<f64>::identity(1), Mat::identity(1)]).unwrap();
        let y = f.apply(&Signal::impulse(&[1.0], 5));
        assert_eq!(y.as_flat(), &[1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn scalar_taps_within_l1_bound() {
        let mut f = Fir::new(vec![Mat::from_f64(1, 1, &[0.5]), Mat::from_f64(1, 1, &[0.25])]).unwrap();
        let g = estimate_gain(&mut f, &gaussian_probes(1, 256, 200, 1)).unwrap();
        assert!(g.value <= 0.75);
        assert!((f.analytic_gain_bound() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn budget_scaling() {
        let cfg = FirConfig {
            taps: 3,
            n: 1,
            m: 1,
            gamma: Some(0.3),
        };
        let f = Fir::from_theta(&[1.0, -1.0, 1.0], &cfg).unwrap();
        assert!((f.analytic_gain_bound() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn mismatched_taps_rejected() {
        assert!(Fir::new(vec![Mat::<f64>::identity(1), Mat::identity(2)]).is_err());
        assert!(Fir::<f64>::new(vec![]).is_err());
    }
}
