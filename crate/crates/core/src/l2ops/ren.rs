//! Recurrent equilibrium network with a prescribed ℓ2-gain bound.
//!
//! The free vector θ is mapped to an implicit model
//!
//! ```text
//! E ξ⁺ = F ξ + B1 φ + B2 ŵ,   Λ z = C1 ξ + D11 φ + D12 ŵ,   u = C2 ξ + D21 φ + D22 ŵ
//! ```
//!
//! through a block matrix `H = XᵀX + εI + Γ` that is positive definite by
//! construction, with `Γ = 𝒞ᵀ𝒞/γ + 𝓗 R̄⁻¹ 𝓗ᵀ`. Reading `E, F, B1, C1, Λ,
//! D11, P` off the blocks of `H` makes the storage `V(ξ) = ξᵀEᵀP⁻¹Eξ`
//! satisfy `V⁺ − ᾱ²V ≤ γ|ŵ|² − |u|²/γ` for every θ, so the operator's gain
//! never exceeds γ. `D11` comes out strictly lower triangular, which keeps
//! the equilibrium layer explicit.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ParamReader;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::signals::CausalOperator;

pub const REN_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.relu(),
        }
    }
}

/// Which bias terms are free. Time-varying biases are active for
/// `t ≤ horizon` and zero afterwards, so they add a finite-energy term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BiasMode {
    #[default]
    None,
    Output {
        horizon: usize,
    },
    Full {
        horizon: usize,
    },
}

impl BiasMode {
    fn per_step(&self, q: usize, r: usize, m: usize) -> usize {
        match self {
            BiasMode::None => 0,
            BiasMode::Output { .. } => m,
            BiasMode::Full { .. } => q + r + m,
        }
    }

    fn steps(&self) -> usize {
        match self {
            BiasMode::None => 0,
            BiasMode::Output { horizon } | BiasMode::Full { horizon } => horizon + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenConfig {
    /// State dimension.
    pub q: usize,
    /// Equilibrium-layer width.
    pub r: usize,
    /// Input dimension.
    pub n: usize,
    /// Output dimension.
    pub m: usize,
    /// Gain budget γ̄.
    pub gamma: f64,
    #[serde(default)]
    pub bias: BiasMode,
    #[serde(default)]
    pub activation: Activation,
    /// Contraction rate ᾱ ∈ (0, 1].
    #[serde(default = "one")]
    pub contraction: f64,
}

fn one() -> f64 {
    1.0
}

impl RenConfig {
    pub fn new(q: usize, r: usize, n: usize, m: usize, gamma: f64) -> Self {
        RenConfig {
            q,
            r,
            n,
            m,
            gamma,
            bias: BiasMode::None,
            activation: Activation::Tanh,
            contraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.r == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::Invalid("REN dimensions must be positive".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Invalid(format!("gain budget {} must be positive", self.gamma)));
        }
        if !(self.contraction > 0.0 && self.contraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "contraction rate {} outside (0, 1]",
                self.contraction
            )));
        }
        Ok(())
    }

    /// Length of θ without biases.
    pub fn weight_count(&self) -> usize {
        let (q, r, n, m) = (self.q, self.r, self.n, self.m);
        let s = 2 * q + r;
        s * s + q * q + q * n + r * n + m * q + m * r + m * n
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias.per_step(self.q, self.r, self.m) * self.bias.steps()
    }
}

/// Explicit weights `W = [A1 B1 B2; C1 D11 D12; C2 D21 D22]` plus biases.
#[derive(Clone, Debug)]
pub struct RenWeights<S> {
    pub q: usize,
    pub r: usize,
    pub n: usize,
    pub m: usize,
    /// `(q + r + m) × (q + r + n)`, rows ordered ξ⁺, z, u.
    pub w: Mat<S>,
    /// Per-step biases `(b_x, b_z, b_u)`, zero beyond the stored length.
    pub biases: Vec<Vec<S>>,
    pub activation: Activation,
}

impl<S: Scalar> RenWeights<S> {
    pub fn zeros(q: usize, r: usize, n: usize, m: usize) -> Self {
        RenWeights {
            q,
            r,
            n,
            m,
            w: Mat::zeros(q + r + m, q + r + n),
            biases: Vec::new(),
            activation: Activation::Tanh,
        }
    }

    pub fn a1(&self) -> Mat<S> {
        self.w.block(0, 0, self.q, self.q)
    }
    pub fn b1(&self) -> Mat<S> {
        self.w.block(0, self.q, self.q, self.r)
    }
    pub fn b2(&self) -> Mat<S> {
        self.w.block(0, self.q + self.r, self.q, self.n)
    }
    pub fn c1(&self) -> Mat<S> {
        self.w.block(self.q, 0, self.r, self.q)
    }
    pub fn d11(&self) -> Mat<S> {
        self.w.block(self.q, self.q, self.r, self.r)
    }
    pub fn d12(&self) -> Mat<S> {
        self.w.block(self.q, self.q + self.r, self.r, self.n)
    }
    pub fn c2(&self) -> Mat<S> {
        self.w.block(self.q + self.r, 0, self.m, self.q)
    }
    pub fn d21(&self) -> Mat<S> {
        self.w.block(self.q + self.r, self.q, self.m, self.r)
    }
    pub fn d22(&self) -> Mat<S> {
        self.w.block(self.q + self.r, self.q + self.r, self.m, self.n)
    }

    fn bias(&self, t: usize, row: usize) -> S {
        self.biases.get(t).map(|b| b[row]).unwrap_or_else(S::zero)
    }

    /// One step from state `ξ_{t-1}`: returns `(ξ_t, u_t)`.
    ///
    /// `z` is swept row by row; row `i` uses `σ(z_j)` only for `j < i`.
    pub fn step(&self, xi: &[S], w_hat: &[S], t: usize) -> (Vec<S>, Vec<S>) {
        let (q, r, m) = (self.q, self.r, self.m);
        let mut v = Vec::with_capacity(q + r + self.n);
        v.extend_from_slice(xi);
        v.extend(std::iter::repeat_n(S::zero(), r));
        v.extend_from_slice(w_hat);
        for i in 0..r {
            let row = self.w.row(q + i);
            // entries of D11 on and above the diagonal are zero
            let z = S::dot(&row[..q + i], &v[..q + i]) + S::dot(&row[q + r..], &v[q + r..]) + self.bias(t, q + i);
            v[q + i] = self.activation.apply(z);
        }
        let next = (0..q).map(|i| S::dot(self.w.row(i), &v) + self.bias(t, i)).collect();
        let out = (0..m)
            .map(|i| S::dot(self.w.row(q + r + i), &v) + self.bias(t, q + r + i))
            .collect();
        (next, out)
    }

    /// Equilibrium layer found by iterating the implicit equation
    /// `z = C1ξ + D11σ(z) + D12ŵ + b_z` from zero.
    pub fn equilibrium_by_iteration(&self, xi: &[S], w_hat: &[S], t: usize, iters: usize) -> Vec<S> {
        let (q, r) = (self.q, self.r);
        let mut z = vec![S::zero(); r];
        for _ in 0..iters {
            let phi: Vec<S> = z.iter().map(|&v| self.activation.apply(v)).collect();
            z = (0..r)
                .map(|i| {
                    let row = self.w.row(q + i);
                    S::dot(&row[..q], xi)
                        + S::dot(&row[q..q + r], &phi)
                        + S::dot(&row[q + r..], w_hat)
                        + self.bias(t, q + i)
                })
                .collect();
        }
        z
    }
}

/// Maps θ to explicit REN weights whose operator has gain at most γ̄.
pub fn theta_to_weights<S: Scalar>(theta: &[S], cfg: &RenConfig) -> Result<RenWeights<S>> {
    cfg.validate()?;
    if theta.len() != cfg.param_count() {
        return Err(Error::Dimension(format!(
            "REN θ has {} entries, expected {}",
            theta.len(),
            cfg.param_count()
        )));
    }
    let (q, r, n, m) = (cfg.q, cfg.r, cfg.n, cfg.m);
    let s = 2 * q + r;
    let mut rd = ParamReader::new(theta);
    let x = rd.mat(s, s);
    let y = rd.mat(q, q);
    let b2 = rd.mat(q, n);
    let d12 = rd.mat(r, n);
    let c2 = rd.mat(m, q);
    let d21 = rd.mat(m, r);
    let d22_free = rd.mat(m, n);

    let g = S::cst(cfg.gamma);
    let inv_g = S::cst(1.0 / cfg.gamma);
    // ‖D22‖₂ ≤ ‖D22‖_F < γ
    let d22 = d22_free.scale(g / (S::one() + d22_free.frobenius_sq()).sqrt());
    let rbar = Mat::identity(n).scale(g).sub(&d22.t_matmul(&d22).scale(inv_g));

    let mut cc = Mat::zeros(m, s);
    cc.set_block(0, 0, &c2);
    cc.set_block(0, q, &d21);
    let mut hh = Mat::zeros(s, n);
    hh.set_block(q, 0, &d12.scale(-S::one()));
    hh.set_block(q + r, 0, &b2);
    let hh = hh.sub(&cc.t_matmul(&d22).scale(inv_g));

    let l = rbar.cholesky()?;
    let z = l.lower_solve(&hh.transpose());
    let gamma_rhs = cc.t_matmul(&cc).scale(inv_g).add(&z.t_matmul(&z));
    let h = x.t_matmul(&x).add_diag(S::cst(REN_EPS)).add(&gamma_rhs);

    let h11 = h.block(0, 0, q, q);
    let h21 = h.block(q, 0, r, q);
    let h22 = h.block(q, q, r, r);
    let f = h.block(q + r, 0, q, q);
    let b1 = h.block(q + r, q, q, r);
    let p = h.block(q + r, q + r, q, q);
    let lambda: Vec<S> = h22.diag().into_iter().map(|v| v * S::cst(0.5)).collect();
    let d11 = h22.strict_lower().scale(-S::one());
    let c1 = h21.scale(-S::one());
    let a2 = cfg.contraction * cfg.contraction;
    let e = h11
        .add(&p.scale(S::cst(1.0 / a2)))
        .add(&y)
        .sub(&y.transpose())
        .scale(S::cst(0.5));

    let mut top_rhs = Mat::zeros(q, q + r + n);
    top_rhs.set_block(0, 0, &f);
    top_rhs.set_block(0, q, &b1);
    top_rhs.set_block(0, q + r, &b2);
    let top = e.solve(&top_rhs)?;

    let mut w = Mat::zeros(q + r + m, q + r + n);
    w.set_block(0, 0, &top);
    for i in 0..r {
        let inv = lambda[i].recip();
        for j in 0..q {
            w[(q + i, j)] = c1[(i, j)] * inv;
        }
        for j in 0..i {
            w[(q + i, q + j)] = d11[(i, j)] * inv;
        }
        for j in 0..n {
            w[(q + i, q + r + j)] = d12[(i, j)] * inv;
        }
    }
    w.set_block(q + r, 0, &c2);
    w.set_block(q + r, q, &d21);
    w.set_block(q + r, q + r, &d22);

    let per = cfg.bias.per_step(q, r, m);
    let mut biases = Vec::with_capacity(cfg.bias.steps());
    for _ in 0..cfg.bias.steps() {
        let free = rd.take(per);
        let b = match cfg.bias {
            BiasMode::Output { .. } => {
                let mut b = vec![S::zero(); q + r + m];
                b[q + r..].copy_from_slice(free);
                b
            }
            _ => free.to_vec(),
        };
        biases.push(b);
    }

    Ok(RenWeights {
        q,
        r,
        n,
        m,
        w,
        biases,
        activation: cfg.activation,
    })
}

/// A REN as a causal operator.
#[derive(Clone, Debug)]
pub struct Ren<S> {
    weights: Arc<RenWeights<S>>,
    xi: Vec<S>,
    t: usize,
}

impl<S: Scalar> Ren<S> {
    pub fn new(weights: RenWeights<S>) -> Self {
        Self::shared(Arc::new(weights))
    }

    pub fn shared(weights: Arc<RenWeights<S>>) -> Self {
        let xi = vec![S::zero(); weights.q];
        Ren { weights, xi, t: 0 }
    }

    pub fn from_theta(theta: &[S], cfg: &RenConfig) -> Result<Self> {
        Ok(Self::new(theta_to_weights(theta, cfg)?))
    }

    pub fn weights(&self) -> &RenWeights<S> {
        &self.weights
    }

    pub fn state(&self) -> &[S] {
        &self.xi
    }
}

impl<S: Scalar> CausalOperator<S> for Ren<S> {
    fn input_dim(&self) -> usize {
        self.weights.n
    }

    fn output_dim(&self) -> usize {
        self.weights.m
    }

    fn reset(&mut self) {
        self.xi = vec![S::zero(); self.weights.q];
        self.t = 0;
    }

    fn step(&mut self, input: &[S]) -> Vec<S> {
        let (next, out) = self.weights.step(&self.xi, input, self.t);
        self.xi = next;
        self.t += 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ScalarFn};
    use crate::signals::{default_probes, estimate_gain, gaussian_probes, Signal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_theta(n: usize, std: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, std).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn parameter_count_for_the_mountains_size() {
        assert_eq!(RenConfig::new(8, 8, 8, 4, 1.0).param_count(), 864);
    }

    #[test]
    fn structure_of_mapped_weights() {
        let cfg = RenConfig::new(4, 5, 3, 2, 2.0);
        let th = random_theta(cfg.param_count(), 1.0, 1);
        let w = theta_to_weights(&th, &cfg).unwrap();
        let d11 = w.d11();
        for i in 0..5 {
            for j in i..5 {
                assert_eq!(d11[(i, j)], 0.0);
            }
        }
        let d22 = crate::linalg::spectral_norm(&w.d22());
        assert!(d22 < 2.0);
    }

    #[test]
    fn zero_theta_is_valid_and_bounded() {
        let cfg = RenConfig::new(8, 8, 8, 4, 5.0);
        let w = theta_to_weights(&vec![0.0; cfg.param_count()], &cfg).unwrap();
        let g = estimate_gain(&mut Ren::new(w), &default_probes(8, 0)).unwrap();
        assert!(g.value <= 5.0);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let w = RenWeights::<f64>::zeros(3, 4, 2, 2);
        let (xi, u) = w.step(&[1.0, 2.0, 3.0], &[0.5, -0.5], 0);
        assert_eq!(xi, vec![0.0; 3]);
        assert_eq!(u, vec![0.0; 2]);
    }

    #[test]
    fn row_sweep_matches_fixed_point_iteration() {
        let cfg = RenConfig {
            bias: BiasMode::Full { horizon: 3 },
            ..RenConfig::new(4, 6, 3, 2, 3.0)
        };
        for seed in 0..20 {
            let th = random_theta(cfg.param_count(), 1.0, seed);
            let w = theta_to_weights(&th, &cfg).unwrap();
            let xi = random_theta(4, 1.0, 100 + seed);
            let wh = random_theta(3, 1.0, 200 + seed);
            let z_iter = w.equilibrium_by_iteration(&xi, &wh, 1, 50);
            // recompute z from the sweep by replaying it
            let (q, r) = (4, 6);
            let mut phi = vec![0.0; r];
            for i in 0..r {
                let row = w.w.row(q + i);
                let z = crate::Scalar::dot(&row[..q], &xi)
                    + crate::Scalar::dot(&row[q..q + i], &phi[..i])
                    + crate::Scalar::dot(&row[q + r..], &wh)
                    + w.biases[1][q + i];
                assert!((z - z_iter[i]).abs() < 1e-12);
                phi[i] = z.tanh();
            }
        }
    }

    #[test]
    fn feedforward_when_d11_vanishes() {
        let (q, r, n, m) = (2, 3, 2, 2);
        let mut w = RenWeights::<f64>::zeros(q, r, n, m);
        let vals = random_theta((q + r + m) * (q + r + n), 1.0, 8);
        w.w = Mat::from_vec(q + r + m, q + r + n, vals);
        for i in 0..r {
            for j in 0..r {
                w.w[(q + i, q + j)] = 0.0;
            }
        }
        let xi = [0.3, -0.7];
        let wh = [1.1, 0.4];
        let (_, u) = w.step(&xi, &wh, 0);
        let z: Vec<f64> = w
            .c1()
            .matvec(&xi)
            .iter()
            .zip(w.d12().matvec(&wh))
            .map(|(a, b)| a + b)
            .collect();
        let phi: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        let (a, b, c) = (w.c2().matvec(&xi), w.d21().matvec(&phi), w.d22().matvec(&wh));
        for i in 0..m {
            assert!((u[i] - (a[i] + b[i] + c[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn random_theta_respects_budget() {
        let cfg = RenConfig::new(8, 8, 8, 4, 5.0);
        for seed in 0..50 {
            let th = random_theta(cfg.param_count(), 1.0, seed);
            let mut op = Ren::from_theta(&th, &cfg).unwrap();
            let g = estimate_gain(&mut op, &default_probes(8, seed)).unwrap();
            assert!(g.value <= 5.0 * (1.0 + 1e-9), "seed {seed}: {}", g.value);
        }
    }

    #[test]
    fn contraction_rate_is_respected() {
        let cfg = RenConfig {
            contraction: 0.9,
            ..RenConfig::new(4, 4, 2, 2, 1.0)
        };
        let th = random_theta(cfg.param_count(), 1.0, 3);
        let mut op = Ren::from_theta(&th, &cfg).unwrap();
        let mut impulse = Signal::zeros(2, 400);
        impulse.at_mut(0).copy_from_slice(&[1.0, -1.0]);
        let y = op.apply(&impulse);
        assert!(y.tail_energy(300) < 1e-20);
    }

    #[test]
    fn causality_under_truncation() {
        let cfg = RenConfig::new(4, 4, 2, 2, 1.0);
        let th = random_theta(cfg.param_count(), 1.0, 9);
        let mut op = Ren::from_theta(&th, &cfg).unwrap();
        let a = &gaussian_probes(2, 1, 30, 1)[0];
        let mut b = a.clone();
        for t in 15..30 {
            b.at_mut(t).copy_from_slice(&[5.0, 5.0]);
        }
        let ya = op.apply(a);
        let yb = op.apply(&b);
        for t in 0..15 {
            assert_eq!(ya.at(t), yb.at(t));
        }
    }

    struct RenLoss {
        cfg: RenConfig,
        input: Vec<f64>,
    }

    impl ScalarFn for RenLoss {
        fn eval<S: Scalar>(&self, th: &[S]) -> S {
            let mut op = Ren::from_theta(th, &self.cfg).unwrap();
            let mut acc = S::zero();
            for t in 0..10 {
                let u = op.step(&[S::cst(self.input[2 * t]), S::cst(self.input[2 * t + 1])]);
                acc += crate::scalar::norm_sq(&u);
            }
            acc
        }
    }

    #[test]
    fn mapping_is_differentiable() {
        let cfg = RenConfig::new(3, 3, 2, 2, 2.0);
        let th = random_theta(cfg.param_count(), 0.5, 4);
        let f = RenLoss {
            cfg,
            input: random_theta(20, 1.0, 5),
        };
        let err = grad_check(&f, &th, 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
