//! Model operator family on the log-radial line, per angular mode.
//!
//! Everything is expressed in the (xD_x) basis. With t = log ρ and x = 1/ρ
//! one has xD_x = i ∂_t, so a mode operator c₂(x)(xD_x)² + c₁(x)(xD_x) + c₀(x)
//! acts on u(t) as -c₂ u'' + i c₁ u' + c₀ u.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::LogGrid;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Radial potential W(x) with a declared decay order p_W (W = O(x^{p_W})).
#[derive(Clone)]
pub struct Potential {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub decay: f64,
}

impl Potential {
    pub fn new(decay: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            decay,
        }
    }

    pub fn zero() -> Self {
        Self::new(2.0, |_| 0.0)
    }

    /// W(x) = c x^p.
    pub fn power(c: f64, p: f64) -> Self {
        Self::new(p, move |x| c * x.powf(p))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("decay", &self.decay).finish()
    }
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub n: u32,
    pub beta: Complex64,
    pub beta_prime: Complex64,
    pub gamma: Complex64,
    pub varpi: f64,
    pub potential: Potential,
}

impl ModelParams {
    pub fn new(
        n: u32,
        beta: Complex64,
        beta_prime: Complex64,
        gamma: Complex64,
        varpi: f64,
        potential: Potential,
    ) -> Result<Self> {
        let p = Self {
            n,
            beta,
            beta_prime,
            gamma,
            varpi,
            potential,
        };
        let diags = validate_params(&p);
        if diags.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidParams(diags.join("; ")))
        }
    }

    /// n = 3, all lower-order coefficients zero, no potential.
    pub fn exact_cone(n: u32) -> Self {
        Self {
            n,
            beta: ZERO,
            beta_prime: ZERO,
            gamma: ZERO,
            varpi: 0.0,
            potential: Potential::zero(),
        }
    }

    /// ((n-2)/2)²
    pub fn half_dim_sq(&self) -> f64 {
        let c = (self.n as f64 - 2.0) / 2.0;
        c * c
    }
}

/// All invariant violations, one message each; empty means valid.
pub fn validate_params(p: &ModelParams) -> Vec<String> {
    let mut out = Vec::new();
    if p.n < 3 {
        out.push(format!("dimension n = {} < 3", p.n));
    }
    if p.beta.re.abs() > 1e-14 {
        out.push(format!("Re beta = {} != 0", p.beta.re));
    }
    let beta_sq = p.beta * p.beta;
    let threshold = beta_sq.re / 4.0 - p.half_dim_sq();
    if p.beta_prime.re <= threshold {
        out.push(format!(
            "Re beta_prime = {} <= beta^2/4 - ((n-2)/2)^2 = {}",
            p.beta_prime.re, threshold
        ));
    }
    // spot-check the declared potential decay on a geometric sample
    let ref_bound = p.potential.eval(0.1).abs() / 0.1f64.powf(p.potential.decay) + 1.0;
    for k in 2..=7 {
        let x = 10f64.powi(-k);
        let ratio = p.potential.eval(x).abs() / x.powf(p.potential.decay);
        if !ratio.is_finite() || ratio > 1e3 * ref_bound {
            out.push(format!(
                "potential decay check failed at x = {x:.1e}: |W|/x^p = {ratio:.3e}"
            ));
            break;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralParam {
    pub sigma: Complex64,
}

impl SpectralParam {
    pub fn new(sigma: Complex64) -> Result<Self> {
        if sigma.im < 0.0 {
            return Err(Error::InvalidParams(format!(
                "Im sigma = {} < 0",
                sigma.im
            )));
        }
        Ok(Self { sigma })
    }

    pub fn real(s: f64) -> Self {
        Self {
            sigma: Complex64::new(s, 0.0),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.sigma.norm()
    }

    /// σ/|σ|; errors at σ = 0.
    pub fn phase(&self) -> Result<Complex64> {
        let m = self.magnitude();
        if m == 0.0 {
            return Err(Error::InvalidParams("phase undefined at sigma = 0".into()));
        }
        Ok(self.sigma / m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngularMode {
    pub k: u32,
    pub lambda_bits: u64,
    pub multiplicity: u32,
}

impl AngularMode {
    pub fn new(k: u32, lambda: f64, multiplicity: u32) -> Result<Self> {
        if lambda < 0.0 || multiplicity == 0 {
            return Err(Error::InvalidParams(format!(
                "angular mode needs lambda >= 0 (got {lambda}) and multiplicity >= 1"
            )));
        }
        Ok(Self {
            k,
            lambda_bits: lambda.to_bits(),
            multiplicity,
        })
    }

    /// Round-sphere mode: λ = k(k+n-2), multiplicity from the spherical
    /// harmonic dimension count.
    pub fn sphere(k: u32, n: u32) -> Self {
        let kf = k as f64;
        let nf = n as f64;
        let lambda = kf * (kf + nf - 2.0);
        // dim of degree-k harmonics on S^{n-1}
        let mult = if k < 2 {
            binom(n + k - 1, k)
        } else {
            binom(n + k - 1, k) - binom(n + k - 3, k - 2)
        };
        Self {
            k,
            lambda_bits: lambda.to_bits(),
            multiplicity: mult as u32,
        }
    }

    pub fn lambda(&self) -> f64 {
        f64::from_bits(self.lambda_bits)
    }
}

fn binom(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    Unconjugated,
    Conjugated,
    Normal0,
    RescaledTilde,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorKind::Unconjugated => "unconjugated",
            OperatorKind::Conjugated => "conjugated",
            OperatorKind::Normal0 => "normal0",
            OperatorKind::RescaledTilde => "rescaled-tilde",
        };
        f.write_str(s)
    }
}

/// Per-mode coefficients of c₂(x)(xD_x)² + c₁(x)(xD_x) + c₀(x).
///
/// For `RescaledTilde` the argument is the rescaled variable X = x/|σ| and
/// the overall |σ|² factor has been removed.
#[derive(Clone, Debug)]
pub struct RadialCoeffs {
    pub kind: OperatorKind,
    params: ModelParams,
    mode: AngularMode,
    sigma: Complex64,
}

impl RadialCoeffs {
    pub fn sigma(&self) -> Complex64 {
        self.sigma
    }

    pub fn c2(&self, x: f64) -> Complex64 {
        Complex64::new(x * x, 0.0)
    }

    pub fn c1(&self, x: f64) -> Complex64 {
        let p = &self.params;
        let base = (I * (p.n as f64 - 2.0) + p.beta) * (x * x);
        match self.kind {
            OperatorKind::Unconjugated => base,
            OperatorKind::Conjugated | OperatorKind::Normal0 | OperatorKind::RescaledTilde => {
                base - 2.0 * self.sigma * x
            }
        }
    }

    pub fn c0(&self, x: f64) -> Complex64 {
        let p = &self.params;
        let n = p.n as f64;
        let lam = self.mode.lambda();
        let base = (lam + I * p.beta * (n - 2.0) / 2.0 + p.beta_prime) * (x * x);
        let s = self.sigma;
        match self.kind {
            OperatorKind::Unconjugated => {
                base + p.potential.eval(x) + s * p.gamma * x
                    - s * s * (1.0 - p.varpi * x)
            }
            OperatorKind::Conjugated => {
                base + p.potential.eval(x) - I * s * (n - 1.0) * x - s * (p.beta - p.gamma) * x
                    + s * s * p.varpi * x
            }
            OperatorKind::Normal0 | OperatorKind::RescaledTilde => {
                base - I * s * (n - 1.0) * x - s * (p.beta - p.gamma) * x
            }
        }
    }

    /// Apply to u(t) given analytic t-derivatives at one node.
    #[inline]
    pub fn apply_analytic(&self, x: f64, u: Complex64, du: Complex64, d2u: Complex64) -> Complex64 {
        -self.c2(x) * d2u + I * self.c1(x) * du + self.c0(x) * u
    }
}

pub fn build_coeffs(
    params: &ModelParams,
    mode: AngularMode,
    sp: SpectralParam,
    kind: OperatorKind,
) -> Result<RadialCoeffs> {
    let diags = validate_params(params);
    if !diags.is_empty() {
        return Err(Error::InvalidParams(diags.join("; ")));
    }
    let sigma = match kind {
        OperatorKind::RescaledTilde => sp.phase().map_err(|_| {
            Error::InvalidKind("rescaled-tilde requires sigma != 0".into())
        })?,
        OperatorKind::Normal0 => {
            if sp.sigma == ZERO {
                return Err(Error::InvalidKind("normal0 requires sigma != 0".into()));
            }
            sp.sigma
        }
        _ => sp.sigma,
    };
    Ok(RadialCoeffs {
        kind,
        params: params.clone(),
        mode,
        sigma,
    })
}

/// Smooth function of t with closed-form first and second derivatives,
/// used by the conjugation oracle and the symbol-level transform tests.
#[derive(Clone)]
pub struct SmoothFn {
    f: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
    df: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
    d2f: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
}

impl SmoothFn {
    pub fn new(
        f: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        df: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }

    /// exp(-(t-t0)²/(2w²))
    pub fn gaussian(t0: f64, w: f64) -> Self {
        let g = move |t: f64| (-(t - t0) * (t - t0) / (2.0 * w * w)).exp();
        Self::new(
            move |t| Complex64::new(g(t), 0.0),
            move |t| Complex64::new(-(t - t0) / (w * w) * g(t), 0.0),
            move |t| {
                Complex64::new(((t - t0) * (t - t0) / (w * w) - 1.0) / (w * w) * g(t), 0.0)
            },
        )
    }

    /// x^c = e^{-ct} for complex c.
    pub fn x_power(c: Complex64) -> Self {
        let e = move |t: f64| (-c * t).exp();
        Self::new(e, move |t| -c * e(t), move |t| c * c * e(t))
    }

    pub fn constant(v: Complex64) -> Self {
        Self::new(move |_| v, |_| ZERO, |_| ZERO)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        (self.f)(t)
    }
    pub fn d1(&self, t: f64) -> Complex64 {
        (self.df)(t)
    }
    pub fn d2(&self, t: f64) -> Complex64 {
        (self.d2f)(t)
    }
}

/// e^{-iσ/x} P(σ) (e^{iσ/x} u), evaluated node-by-node with the product
/// rule pushed through analytically: conjugation shifts xD_x by -σ/x.
/// Serves as the oracle for the Conjugated coefficient table.
pub fn apply_conjugation(
    params: &ModelParams,
    mode: AngularMode,
    sp: SpectralParam,
    u: &SmoothFn,
    grid: &LogGrid,
) -> Result<Vec<Complex64>> {
    let sigma = sp.sigma;
    let rho_max = grid.rho[grid.num_points - 1];
    if sigma.norm() * rho_max * grid.h > 0.5 {
        return Err(Error::GridTooCoarse(format!(
            "oscillation |sigma| * rho_max * h = {:.3} > 0.5",
            sigma.norm() * rho_max * grid.h
        )));
    }
    let coeffs = build_coeffs(params, mode, sp, OperatorKind::Unconjugated)?;
    let mut out = Vec::with_capacity(grid.num_points);
    for i in 0..grid.num_points {
        let t = grid.t[i];
        let x = grid.x[i];
        let uv = u.eval(t);
        let du = u.d1(t);
        let d2u = u.d2(t);
        // (xD_x - σ/x) u = i u' - (σ/x) u
        // (xD_x - σ/x)² u = -u'' - 2i(σ/x)u' - i(σ/x)u + (σ/x)² u
        let s = sigma / x;
        let shift1 = I * du - s * uv;
        let shift2 = -d2u - 2.0 * I * s * du - I * s * uv + s * s * uv;
        out.push(coeffs.c2(x) * shift2 + coeffs.c1(x) * shift1 + coeffs.c0(x) * uv);
    }
    Ok(out)
}
