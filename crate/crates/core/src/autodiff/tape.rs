use std::cell::RefCell;

use crate::error::{Error, Result};

/// Index reserved for constants, which never enter the tape.
pub(crate) const CONST: u32 = u32::MAX;

/// Append-only record of a forward evaluation.
///
/// Node `i` owns the entries `offsets[i]..offsets[i + 1]` of `parents` and
/// `partials`; every parent index is strictly smaller than `i`.
#[derive(Debug, Default)]
pub struct Tape {
    offsets: Vec<usize>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    values: Vec<f64>,
    nonfinite: Option<usize>,
    active: bool,
}

thread_local! {
    static TAPE: RefCell<Tape> = RefCell::new(Tape::new());
}

impl Tape {
    fn new() -> Self {
        Tape {
            offsets: vec![0],
            ..Default::default()
        }
    }

    fn clear(&mut self) {
        self.offsets.clear();
        self.offsets.push(0);
        self.parents.clear();
        self.partials.clear();
        self.values.clear();
        self.nonfinite = None;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    fn push(&mut self, value: f64, entries: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        let idx = self.values.len();
        for (p, d) in entries {
            debug_assert!((p as usize) < idx);
            self.parents.push(p);
            self.partials.push(d);
        }
        self.offsets.push(self.parents.len());
        self.values.push(value);
        if !value.is_finite() && self.nonfinite.is_none() {
            self.nonfinite = Some(idx);
        }
        idx as u32
    }

    /// Reverse sweep seeded at `output`; returns adjoints of the first
    /// `n_inputs` nodes.
    fn backward(&self, output: u32, n_inputs: usize) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        if output == CONST {
            return vec![0.0; n_inputs];
        }
        adj[output as usize] = 1.0;
        for i in (0..=output as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for k in self.offsets[i]..self.offsets[i + 1] {
                adj[self.parents[k] as usize] += a * self.partials[k];
            }
        }
        adj.truncate(n_inputs);
        adj
    }
}

#[inline]
pub(crate) fn record(value: f64, entries: &[(u32, f64)]) -> u32 {
    TAPE.with(|t| t.borrow_mut().push(value, entries.iter().copied()))
}

#[inline]
pub(crate) fn record_iter(value: f64, entries: impl Iterator<Item = (u32, f64)>) -> u32 {
    TAPE.with(|t| t.borrow_mut().push(value, entries))
}

/// Number of nodes currently recorded on this thread's tape.
pub fn tape_len() -> usize {
    TAPE.with(|t| t.borrow().len())
}

struct Session;

impl Session {
    fn open() -> Result<Self> {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            if t.active {
                return Err(Error::Autodiff("nested gradient evaluation on one thread".into()));
            }
            t.clear();
            t.active = true;
            Ok(Session)
        })
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.active = false;
            t.clear();
        });
    }
}

/// Evaluates `f` at `x` and returns its value and gradient.
///
/// Fails when any recorded intermediate is NaN or infinite.
pub fn value_and_grad<F>(x: &[f64], f: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[super::Var]) -> super::Var,
{
    let _session = Session::open()?;
    let inputs: Vec<super::Var> = x.iter().map(|&v| super::Var::from_raw(record(v, &[]), v)).collect();
    let out = f(&inputs);
    TAPE.with(|t| {
        let t = t.borrow();
        if let Some(i) = t.nonfinite {
            return Err(Error::NonFinite(format!("tape node {i} of {}", t.len())));
        }
        if !out.value().is_finite() {
            return Err(Error::NonFinite("output".into()));
        }
        Ok((out.value(), t.backward(out.index(), x.len())))
    })
}

/// Gradient of `f` at `x`.
pub fn grad<F>(x: &[f64], f: F) -> Result<Vec<f64>>
where
    F: FnOnce(&[super::Var]) -> super::Var,
{
    value_and_grad(x, f).map(|(_, g)| g)
}
