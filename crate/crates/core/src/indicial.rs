//! Mellin symbol, indicial roots, and admissible weight intervals.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{AngularMode, ModelParams};

/// Quadratic τ_b² + βτ_b + (β′ + λ + ((n-2)/2)²); leading coefficient 1.
#[derive(Clone, Copy, Debug)]
pub struct MellinSymbol {
    pub linear: Complex64,
    pub constant: Complex64,
}

impl MellinSymbol {
    pub fn new(params: &ModelParams, mode: AngularMode) -> Self {
        Self {
            linear: params.beta,
            constant: params.beta_prime + mode.lambda() + params.half_dim_sq(),
        }
    }

    pub fn eval(&self, taub: Complex64) -> Complex64 {
        taub * taub + self.linear * taub + self.constant
    }

    /// Both roots; nonnegative-imaginary-part root first, ties broken by
    /// nonnegative real part.
    pub fn roots(&self) -> (Complex64, Complex64) {
        let disc = self.linear * self.linear - 4.0 * self.constant;
        let sq = disc.sqrt(); // principal branch
        let r1 = (-self.linear + sq) / 2.0;
        let r2 = (-self.linear - sq) / 2.0;
        let first = |a: Complex64, b: Complex64| {
            if (a.im - b.im).abs() > 1e-300 * (a.im.abs() + b.im.abs()).max(1.0) && a.im != b.im {
                a.im > b.im
            } else {
                a.re >= b.re
            }
        };
        if first(r1, r2) {
            (r1, r2)
        } else {
            (r2, r1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndTag {
    ScatteringEnd,
    ConicPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentralInterval {
    pub lo: f64,
    pub hi: f64,
    pub end_tag: EndTag,
}

pub fn mellin_symbol_eval(params: &ModelParams, mode: AngularMode, taub: Complex64) -> Complex64 {
    MellinSymbol::new(params, mode).eval(taub)
}

pub fn indicial_roots(params: &ModelParams, mode: AngularMode) -> (Complex64, Complex64) {
    MellinSymbol::new(params, mode).roots()
}

/// Admissible central weight interval at the chosen end, for the λ = 0 mode.
pub fn central_interval(params: &ModelParams, end: EndTag) -> Result<CentralInterval> {
    let rad = (-params.beta * params.beta / 4.0
        + params.half_dim_sq()
        + params.beta_prime)
        .sqrt()
        .re;
    let center = -1.0 + params.beta.im / 2.0;
    let (lo, hi) = match end {
        EndTag::ScatteringEnd => (center - rad, center + rad),
        EndTag::ConicPoint => (-(center + rad), -(center - rad)),
    };
    if lo >= hi {
        return Err(Error::InvalidParams(format!(
            "degenerate central interval [{lo}, {hi}]"
        )));
    }
    Ok(CentralInterval { lo, hi, end_tag: end })
}

/// (l - ν₊, l - ν₋) with (ν₋, ν₊) the scattering-end central interval.
pub fn alpha_interval(params: &ModelParams, l: f64) -> Result<(f64, f64)> {
    let sc = central_interval(params, EndTag::ScatteringEnd)?;
    Ok((l - sc.hi, l - sc.lo))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderBranch {
    BranchA,
    BranchB,
    Invalid,
}

/// Which side of the threshold inequalities the order pair (r, l) sits on.
pub fn validate_orders(params: &ModelParams, r: f64, l: f64) -> OrderBranch {
    let plus = (params.beta + params.gamma).im / 2.0;
    let minus = (params.beta - params.gamma).im / 2.0;
    if r > -0.5 + plus && l < -0.5 + minus {
        OrderBranch::BranchA
    } else if r < -0.5 + plus && l > -0.5 + minus {
        OrderBranch::BranchB
    } else {
        OrderBranch::Invalid
    }
}
