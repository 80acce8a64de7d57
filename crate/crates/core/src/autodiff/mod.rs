//! Reverse-mode differentiation on a thread-local tape, plus Adam.
//!
//! A gradient evaluation opens a session, records every arithmetic
//! operation performed on [`Var`] values, and sweeps the tape backwards
//! once. Sessions do not nest; batch gradients run one session per worker
//! thread.

mod adam;
mod check;
mod tape;
mod var;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use check::{grad_check, ScalarFn};
pub use tape::{grad, tape_len, value_and_grad, Tape};
pub use var::Var;
