//! Recovery quality of an estimate `x` against ground truth `x0` on its
//! support `S`.
//!
//! The relative error is `‖x_S − x0_S‖₂ / ‖x0_S‖₂`. Output SNR is the ratio
//! of on-support to off-support power and can be infinite (no off-support
//! power) or undefined (no power at all); such values are flagged rather than
//! folded into means.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputSnr {
    Finite(f64),
    /// Off-support power is exactly zero and on-support power is positive.
    Infinite,
    /// Both powers are zero.
    Undefined,
}

impl OutputSnr {
    pub fn finite(self) -> Option<f64> {
        match self {
            OutputSnr::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Linear value, with `+∞` and NaN for the sentinels.
    pub fn value(self) -> f64 {
        match self {
            OutputSnr::Finite(v) => v,
            OutputSnr::Infinite => f64::INFINITY,
            OutputSnr::Undefined => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryMetrics {
    pub rel_err_support: f64,
    pub mse_support: f64,
    pub output_snr: OutputSnr,
    pub support_recovered: bool,
}

impl RecoveryMetrics {
    pub fn evaluate(x: &[f64], x0: &[f64], support: &[usize]) -> Result<Self> {
        Ok(Self {
            rel_err_support: rel_err_support(x, x0, support)?,
            mse_support: mse_support(x, x0, support)?,
            output_snr: output_snr(x, support)?,
            support_recovered: support_recovered(x, support)?,
        })
    }
}

fn membership(n: usize, support: &[usize]) -> Result<Vec<bool>> {
    let mut on = vec![false; n];
    for &j in support {
        if j >= n {
            return Err(Error::InvalidArgument(format!("support index {j} out of range for length {n}")));
        }
        on[j] = true;
    }
    Ok(on)
}

fn check_pair(x: &[f64], x0: &[f64], support: &[usize]) -> Result<()> {
    if x.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            op: "metrics",
            expected: x0.len(),
            found: x.len(),
        });
    }
    if support.is_empty() {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    membership(x.len(), support).map(|_| ())
}

pub fn output_snr(x: &[f64], support: &[usize]) -> Result<OutputSnr> {
    let on = membership(x.len(), support)?;
    let (mut p_on, mut p_off) = (0.0, 0.0);
    for (v, &s) in x.iter().zip(&on) {
        if s {
            p_on += v * v;
        } else {
            p_off += v * v;
        }
    }
    Ok(if p_off > 0.0 {
        OutputSnr::Finite(p_on / p_off)
    } else if p_on > 0.0 {
        OutputSnr::Infinite
    } else {
        OutputSnr::Undefined
    })
}

/// `max(x_{Sᶜ}) < min(x_S)`.
pub fn support_recovered(x: &[f64], support: &[usize]) -> Result<bool> {
    let on = membership(x.len(), support)?;
    if support.is_empty() || on.iter().all(|&s| s) {
        return Err(Error::InvalidArgument("support must be a non-empty proper subset".into()));
    }
    let min_on = x.iter().zip(&on).filter(|(_, &s)| s).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let max_off = x.iter().zip(&on).filter(|(_, &s)| !s).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    Ok(max_off < min_on)
}

pub fn rel_err_support(x: &[f64], x0: &[f64], support: &[usize]) -> Result<f64> {
    check_pair(x, x0, support)?;
    let (mut num, mut den) = (0.0, 0.0);
    for &j in support {
        num += (x[j] - x0[j]).powi(2);
        den += x0[j] * x0[j];
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("ground truth vanishes on its support".into()));
    }
    Ok((num / den).sqrt())
}

pub fn mse_support(x: &[f64], x0: &[f64], support: &[usize]) -> Result<f64> {
    check_pair(x, x0, support)?;
    Ok(support.iter().map(|&j| (x[j] - x0[j]).powi(2)).sum::<f64>() / support.len() as f64)
}

/// `(1/N)·‖x − x0‖²` over all coordinates.
pub fn mse_full(x: &[f64], x0: &[f64]) -> f64 {
    x.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}
