//! Finite-horizon signals, causal operators and empirical ℓ2 gains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Vector sequence indexed `t = 0..=T`, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal<S = f64> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> Signal<S> {
    pub fn new(values: Vec<Vec<S>>) -> Result<Self> {
        let dim = values.first().map(Vec::len).unwrap_or(0);
        if values.is_empty() || dim == 0 {
            return Err(Error::Invalid("empty signal".into()));
        }
        let mut data = Vec::with_capacity(dim * values.len());
        for (t, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "signal entry {t} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            data.extend_from_slice(v);
        }
        Ok(Signal { dim, data })
    }

    /// Zero signal with `len` samples, i.e. horizon `len - 1`.
    pub fn zeros(dim: usize, len: usize) -> Self {
        assert!(dim > 0 && len > 0, "empty signal");
        Signal {
            dim,
            data: vec![S::zero(); dim * len],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<S>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} values do not form a signal of dimension {dim}",
                data.len()
            )));
        }
        Ok(Signal { dim, data })
    }

    /// Signal that is `v` at `t = 0` and zero afterwards.
    pub fn impulse(v: &[S], len: usize) -> Self {
        let mut s = Self::zeros(v.len(), len);
        s.at_mut(0).copy_from_slice(v);
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples, `T + 1`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.len() - 1
    }

    pub fn at(&self, t: usize) -> &[S] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn at_mut(&mut self, t: usize) -> &mut [S] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[S] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks(self.dim)
    }

    pub fn push(&mut self, v: &[S]) {
        assert_eq!(v.len(), self.dim, "signal push dimension");
        self.data.extend_from_slice(v);
    }

    /// First `len` samples.
    pub fn truncated(&self, len: usize) -> Self {
        assert!(len > 0 && len <= self.len());
        Signal {
            dim: self.dim,
            data: self.data[..len * self.dim].to_vec(),
        }
    }

    /// Copy padded with zeros to `len` samples.
    pub fn padded(&self, len: usize) -> Self {
        let mut s = self.clone();
        s.data.resize(len.max(self.len()) * self.dim, S::zero());
        s
    }

    /// Components `lo..hi` of every sample.
    pub fn slice_dims(&self, lo: usize, hi: usize) -> Self {
        let mut data = Vec::with_capacity((hi - lo) * self.len());
        for v in self.iter() {
            data.extend_from_slice(&v[lo..hi]);
        }
        Signal { dim: hi - lo, data }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Signal {
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn values(&self) -> Signal<f64> {
        Signal {
            dim: self.dim,
            data: self.data.iter().map(|v| v.val()).collect(),
        }
    }

    pub fn to_vecs(&self) -> Vec<Vec<S>> {
        self.iter().map(<[S]>::to_vec).collect()
    }

    /// Σ_t |x_t|².
    pub fn energy(&self) -> S {
        S::dot(&self.data, &self.data)
    }

    /// Σ_{t ≥ from} |x_t|².
    pub fn tail_energy(&self, from: usize) -> S {
        let tail = &self.data[(from * self.dim).min(self.data.len())..];
        S::dot(tail, tail)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, v| a.max(v.val().abs()))
    }
}

/// ℓ2 norm `sqrt(Σ_t |x_t|²)`.
pub fn l2_norm<S: Scalar>(s: &Signal<S>) -> S {
    s.energy().sqrt()
}

impl Signal<f64> {
    pub fn lift<S: Scalar>(&self) -> Signal<S> {
        Signal {
            dim: self.dim,
            data: self.data.iter().map(|&v| S::cst(v)).collect(),
        }
    }

    /// CSV with header `t,v0,v1,...`, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.dim {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for (t, v) in self.iter().enumerate() {
            out.push_str(&t.to_string());
            for x in v {
                out.push(',');
                out.push_str(&fmt_f64(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::Parse(format!("bad csv header {header:?}")));
        }
        let dim = cols.len() - 1;
        let mut data = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!("csv row {row} has {} fields", fields.len())));
            }
            for f in &fields[1..] {
                data.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("csv row {row}: {e}")))?,
                );
            }
        }
        Signal::from_flat(dim, data)
    }

    /// JSON array of per-sample arrays.
    pub fn to_json(&self) -> Result<String> {
        let mut out = String::from("[");
        for (t, v) in self.iter().enumerate() {
            if t > 0 {
                out.push(',');
            }
            out.push('[');
            for (i, x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("signal value at t = {t}")));
                }
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_f64(*x));
            }
            out.push(']');
        }
        out.push(']');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
        Signal::new(rows)
    }
}

/// Seventeen significant digits, enough to round-trip any binary64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Serialize for Signal<f64> {
    fn serialize<Se: serde::Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        self.to_vecs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Signal<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Signal::new(rows).map_err(serde::de::Error::custom)
    }
}

/// A causal operator stepped one sample at a time.
///
/// The output at `t` is returned before the input at `t + 1` is seen, so
/// causality holds by construction.
pub trait CausalOperator<S: Scalar> {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn reset(&mut self);
    fn step(&mut self, input: &[S]) -> Vec<S>;

    /// Resets, then maps a whole signal.
    fn apply(&mut self, input: &Signal<S>) -> Signal<S> {
        self.reset();
        let mut data = Vec::with_capacity(input.len() * self.output_dim());
        for v in input.iter() {
            data.extend(self.step(v));
        }
        Signal::from_flat(self.output_dim(), data).expect("operator output dimension")
    }
}

impl<S: Scalar, T: CausalOperator<S> + ?Sized> CausalOperator<S> for Box<T> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn reset(&mut self) {
        (**self).reset()
    }
    fn step(&mut self, input: &[S]) -> Vec<S> {
        (**self).step(input)
    }
}

/// Static scaling `y = a·x`.
#[derive(Clone, Debug)]
pub struct Scale {
    pub dim: usize,
    pub factor: f64,
}

impl<S: Scalar> CausalOperator<S> for Scale {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn reset(&mut self) {}
    fn step(&mut self, input: &[S]) -> Vec<S> {
        input.iter().map(|&v| v * S::cst(self.factor)).collect()
    }
}

/// Unit delay `y_t = x_{t-1}`, `y_0 = 0`.
#[derive(Clone, Debug)]
pub struct Delay<S = f64> {
    dim: usize,
    prev: Vec<S>,
}

impl<S: Scalar> Delay<S> {
    pub fn new(dim: usize) -> Self {
        Delay {
            dim,
            prev: vec![S::zero(); dim],
        }
    }
}

impl<S: Scalar> CausalOperator<S> for Delay<S> {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn reset(&mut self) {
        self.prev = vec![S::zero(); self.dim];
    }
    fn step(&mut self, input: &[S]) -> Vec<S> {
        std::mem::replace(&mut self.prev, input.to_vec())
    }
}

/// Series connection `second ∘ first`.
pub struct Compose<A, B> {
    pub first: A,
    pub second: B,
}

impl<S: Scalar, A: CausalOperator<S>, B: CausalOperator<S>> CausalOperator<S> for Compose<A, B> {
    fn input_dim(&self) -> usize {
        self.first.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.second.output_dim()
    }
    fn reset(&mut self) {
        self.first.reset();
        self.second.reset();
    }
    fn step(&mut self, input: &[S]) -> Vec<S> {
        let mid = self.first.step(input);
        self.second.step(&mid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub value: f64,
    pub probe_count: usize,
    pub p: u32,
}

/// Largest observed ratio `‖op(probe)‖₂ / ‖probe‖₂`, a lower bound on the
/// operator's ℓ2 gain.
pub fn estimate_gain<O: CausalOperator<f64> + ?Sized>(op: &mut O, probes: &[Signal]) -> Result<GainEstimate> {
    let mut value = 0.0f64;
    for (k, p) in probes.iter().enumerate() {
        if p.dim() != op.input_dim() {
            return Err(Error::Dimension(format!(
                "probe {k} has dimension {}, operator expects {}",
                p.dim(),
                op.input_dim()
            )));
        }
        let n = l2_norm(p);
        if n == 0.0 {
            return Err(Error::Invalid(format!("probe {k} has zero norm")));
        }
        let y = op.apply(p);
        let ratio = l2_norm(&y) / n;
        if !ratio.is_finite() {
            return Err(Error::NonFinite(format!("operator response to probe {k}")));
        }
        value = value.max(ratio);
    }
    Ok(GainEstimate {
        value,
        probe_count: probes.len(),
        p: 2,
    })
}

pub const DEFAULT_PROBE_COUNT: usize = 256;
pub const DEFAULT_PROBE_HORIZON: usize = 200;

/// Random Gaussian probes followed by one impulse per input channel.
pub fn gaussian_probes(dim: usize, count: usize, len: usize, seed: u64) -> Vec<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<Signal> = (0..count)
        .map(|_| {
            let data = (0..dim * len).map(|_| StandardNormal.sample(&mut rng)).collect();
            Signal::from_flat(dim, data).expect("probe shape")
        })
        .collect();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        probes.push(Signal::impulse(&e, len));
    }
    probes
}

/// The default probe set: 256 Gaussian signals of 200 samples plus impulses.
pub fn default_probes(dim: usize, seed: u64) -> Vec<Signal> {
    gaussian_probes(dim, DEFAULT_PROBE_COUNT, DEFAULT_PROBE_HORIZON, seed)
}
