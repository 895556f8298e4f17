//! Banded discrete operators, weighted Sobolev Gram matrices, and the
//! log-grid Mellin transform.
//!
//! Sign conventions, fixed once: t = log ρ = -log x, so xD_x = i∂_t and the
//! mode operator c₂(xD_x)² + c₁(xD_x) + c₀ acts as -c₂∂_t² + ic₁∂_t + c₀.
//! The radial measure is ρ^{n-1}dρ = e^{nt}dt.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::grid::LogGrid;
use crate::model::{self, AngularMode, ModelParams, OperatorKind, SpectralParam};
use crate::solve::{BesselOrder, BoundaryConditions, InnerBc, OuterBc};
use crate::special;

#[derive(Clone, Debug)]
pub struct RadialOperator {
    pub matrix: BandedMatrix,
    pub grid: LogGrid,
    pub kind: OperatorKind,
    pub sigma: Complex64,
    pub mode: AngularMode,
}

impl RadialOperator {
    /// Banded map from interior unknowns to the full grid vector, with the
    /// two boundary unknowns expressed through the boundary-condition rows.
    pub fn elimination_matrix(&self) -> Result<BandedMatrix> {
        let n = self.grid.num_points;
        let m = &self.matrix;
        let b00 = m.get(0, 0);
        let c_end = m.get(n - 1, n - 1);
        if b00.norm() < 1e-14 || c_end.norm() < 1e-14 {
            return Err(Error::BoundaryCondition(
                "boundary row has vanishing diagonal".into(),
            ));
        }
        let mut z = BandedMatrix::zeros(n, n - 2, 3, 1);
        z.set(0, 0, -m.get(0, 1) / b00);
        z.set(0, 1, -m.get(0, 2) / b00);
        for i in 1..n - 1 {
            z.set(i, i - 1, Complex64::new(1.0, 0.0));
        }
        z.set(n - 1, n - 4, -m.get(n - 1, n - 3) / c_end);
        z.set(n - 1, n - 3, -m.get(n - 1, n - 2) / c_end);
        Ok(z)
    }
}

/// First t-derivative, second order: central interior, one-sided ends.
pub fn d_t(grid: &LogGrid) -> BandedMatrix {
    let n = grid.num_points;
    let h = grid.h;
    let mut m = BandedMatrix::zeros(n, n, 2, 2);
    let c = |v: f64| Complex64::new(v, 0.0);
    m.set(0, 0, c(-1.5 / h));
    m.set(0, 1, c(2.0 / h));
    m.set(0, 2, c(-0.5 / h));
    for i in 1..n - 1 {
        m.set(i, i - 1, c(-0.5 / h));
        m.set(i, i + 1, c(0.5 / h));
    }
    m.set(n - 1, n - 3, c(0.5 / h));
    m.set(n - 1, n - 2, c(-2.0 / h));
    m.set(n - 1, n - 1, c(1.5 / h));
    m
}

/// xD_x = i ∂_t as a banded matrix.
pub fn x_d_x(grid: &LogGrid) -> BandedMatrix {
    let mut m = d_t(grid);
    m.scale(Complex64::new(0.0, 1.0));
    m
}

pub fn assemble(
    params: &ModelParams,
    mode: AngularMode,
    sp: SpectralParam,
    kind: OperatorKind,
    grid: &LogGrid,
    bc: &BoundaryConditions,
) -> Result<RadialOperator> {
    let coeffs = model::build_coeffs(params, mode, sp, kind)?;
    if kind == OperatorKind::Unconjugated {
        let rho_max = grid.rho[grid.num_points - 1];
        if sp.magnitude() * rho_max * grid.h > 0.5 {
            return Err(Error::GridTooCoarse(format!(
                "unconjugated oscillation |sigma|*rho_max*h = {:.3} > 0.5",
                sp.magnitude() * rho_max * grid.h
            )));
        }
    }
    let n = grid.num_points;
    let h = grid.h;
    let mut m = BandedMatrix::zeros(n, n, 2, 2);
    let nf = params.n as f64;
    for i in 1..n - 1 {
        let x = grid.x[i];
        let t = grid.t[i];
        let c1 = coeffs.c1(x);
        let c0 = coeffs.c0(x);
        let i1 = Complex64::new(0.0, 1.0);
        // -c₂ u'' + i c₁ u' + c₀ u, with the geometric part
        // -x²(u'' + (n-2)u') = -e^{-nt} ∂_t(e^{(n-2)t} ∂_t u) in flux form:
        // exactly self-adjoint with respect to the e^{nt} dt measure.
        let flux_p = ((nf - 2.0) * (t + 0.5 * h) - nf * t).exp() / (h * h);
        let flux_m = ((nf - 2.0) * (t - 0.5 * h) - nf * t).exp() / (h * h);
        // the flux form already accounts for the i(n-2)x² drift inside c₁
        let c1rest = c1 - i1 * (nf - 2.0) * x * x;
        m.set(i, i - 1, -Complex64::from(flux_m) - i1 * c1rest / (2.0 * h));
        m.set(i, i, Complex64::from(flux_p + flux_m) + c0);
        m.set(i, i + 1, -Complex64::from(flux_p) + i1 * c1rest / (2.0 * h));
    }
    install_boundary_rows(&mut m, params, mode, sp, kind, grid, bc)?;
    Ok(RadialOperator {
        matrix: m,
        grid: grid.clone(),
        kind,
        sigma: coeffs.sigma(),
        mode,
    })
}

fn install_boundary_rows(
    m: &mut BandedMatrix,
    params: &ModelParams,
    mode: AngularMode,
    sp: SpectralParam,
    kind: OperatorKind,
    grid: &LogGrid,
    bc: &BoundaryConditions,
) -> Result<()> {
    let n = grid.num_points;
    let h = grid.h;
    let nf = params.n as f64;
    let nu = BesselOrder::from_mode(mode, params.n).nu;
    let c = |v: f64| Complex64::new(v, 0.0);
    let i1 = Complex64::new(0.0, 1.0);
    // effective sigma for the operator actually assembled
    let sigma_eff = match kind {
        OperatorKind::RescaledTilde => sp.phase()?,
        _ => sp.sigma,
    };

    // inner row (t_min, small ρ): regular-solution Robin u' = κ_in u
    let kappa_in = match bc.inner {
        InnerBc::RegularRobin => {
            let base = Complex64::new(nu - (nf - 2.0) / 2.0, 0.0);
            match kind {
                OperatorKind::Unconjugated => base,
                // conjugated solutions carry an extra e^{-iσρ} factor
                _ => base - i1 * sigma_eff * grid.rho[0],
            }
        }
    };
    m.clear_row(0);
    m.set(0, 0, c(-1.5 / h) - kappa_in);
    m.set(0, 1, c(2.0 / h));
    m.set(0, 2, c(-0.5 / h));

    // outer row (t_max, x -> 0)
    let kappa_out = match bc.outer {
        OuterBc::ExactOutgoing => {
            if kind != OperatorKind::Unconjugated {
                return Err(Error::BoundaryCondition(
                    "exact outgoing condition applies to the unconjugated operator only".into(),
                ));
            }
            if sp.sigma == Complex64::new(0.0, 0.0) {
                return Err(Error::BoundaryCondition(
                    "exact outgoing condition needs sigma != 0".into(),
                ));
            }
            let rho = grid.rho[n - 1];
            let z = sp.sigma * rho;
            let hv = special::hankel1(nu, z)?;
            let hp = special::hankel1_prime(nu, z)?;
            // t-log-derivative of ρ^{-(n-2)/2} H¹_ν(σρ)
            c(-(nf - 2.0) / 2.0) + z * hp / hv
        }
        OuterBc::ExactIncoming => {
            if kind != OperatorKind::Unconjugated || sp.sigma.im != 0.0 || sp.sigma.re == 0.0 {
                return Err(Error::BoundaryCondition(
                    "incoming condition needs the unconjugated operator and real sigma != 0"
                        .into(),
                ));
            }
            // H⁽²⁾_ν(z) = conj(H⁽¹⁾_ν(z)) for real z and real ν
            let rho = grid.rho[n - 1];
            let z = sp.sigma * rho;
            let hv = special::hankel1(nu, z)?.conj();
            let hp = special::hankel1_prime(nu, z)?.conj();
            c(-(nf - 2.0) / 2.0) + z * hp / hv
        }
        OuterBc::AsymptoticRobin => {
            if kind == OperatorKind::Unconjugated {
                return Err(Error::BoundaryCondition(
                    "asymptotic Robin condition applies to conjugated kinds only".into(),
                ));
            }
            // u ~ x^κ, κ = (n-1-i(β-γ)+iσϖ)/2; in t: u' = -κ u
            let varpi_term = match kind {
                OperatorKind::Conjugated => i1 * sigma_eff * params.varpi,
                _ => Complex64::new(0.0, 0.0),
            };
            -(c(nf - 1.0) - i1 * (params.beta - params.gamma) + varpi_term) / 2.0
        }
    };
    m.clear_row(n - 1);
    m.set(n - 1, n - 3, c(0.5 / h));
    m.set(n - 1, n - 2, c(-2.0 / h));
    m.set(n - 1, n - 1, c(1.5 / h) - kappa_out);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormFamily {
    Hb,
    HscbrResolved,
}

#[derive(Clone, Copy, Debug)]
pub struct NormSpec {
    pub family: NormFamily,
    pub s: u32,
    pub r: f64,
    pub l: f64,
    pub alpha: f64,
    pub sigma_ref: f64,
}

impl NormSpec {
    pub fn hb(s: u32, l: f64) -> Self {
        Self {
            family: NormFamily::Hb,
            s,
            r: s as f64 + l,
            l,
            alpha: 0.0,
            sigma_ref: 1.0,
        }
    }

    pub fn resolved(s: u32, r: f64, l: f64, alpha: f64, sigma_ref: f64) -> Self {
        Self {
            family: NormFamily::HscbrResolved,
            s,
            r,
            l,
            alpha,
            sigma_ref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == NormFamily::Hb && (self.r - (self.s as f64 + self.l)).abs() > 1e-12 {
            return Err(Error::BadNormSpec(format!(
                "Hb norm requires r = s + l; got r = {}, s = {}, l = {}",
                self.r, self.s, self.l
            )));
        }
        if self.family == NormFamily::HscbrResolved && self.sigma_ref <= 0.0 {
            return Err(Error::BadNormSpec("resolved norm needs sigma_ref > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub matrix: BandedMatrix,
    pub s: u32,
}

impl GramMatrix {
    pub fn norm_sq(&self, u: &[Complex64]) -> f64 {
        let gu = self.matrix.matvec(u);
        u.iter().zip(&gu).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn norm(&self, u: &[Complex64]) -> f64 {
        self.norm_sq(u).max(0.0).sqrt()
    }
}

/// Σ_k D_k^H diag(w_k) D_k with D_k = (xD_x)^k; w_k must already contain
/// the quadrature weights and measure factor.
pub fn sobolev_gram(grid: &LogGrid, weights: &[Vec<f64>]) -> GramMatrix {
    let n = grid.num_points;
    let xdx = x_d_x(grid);
    let mut dk = BandedMatrix::identity(n);
    let mut acc = BandedMatrix::zeros(n, n, 0, 0);
    for w in weights {
        let mut wdk = dk.clone();
        wdk.scale_rows(&w.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
        acc = acc.add(&dk.conj_transpose().matmul(&wdk));
        dk = xdx.matmul(&dk);
    }
    GramMatrix {
        matrix: acc,
        s: weights.len() as u32 - 1,
    }
}

/// Gram matrix of the requested norm family, per angular mode.
///
/// Resolved convention: every derivative level carries the k-independent
/// weight (1+x/σ)^{l+s-r}, which makes the r = s+l case coincide with the
/// plain b-Sobolev Gram matrix entrywise.
pub fn gram(norm: &NormSpec, grid: &LogGrid, mode: AngularMode, n_dim: u32) -> Result<GramMatrix> {
    norm.validate()?;
    let lam = mode.lambda();
    let trap = grid.quad_weights();
    let mut weights = Vec::with_capacity(norm.s as usize + 1);
    for k in 0..=norm.s {
        // angular b-derivatives fill the remaining order budget
        let ang: f64 = (0..=(norm.s - k)).map(|j| lam.powi(j as i32)).sum();
        let eps = match norm.family {
            NormFamily::Hb => 0.0,
            NormFamily::HscbrResolved => norm.l + norm.s as f64 - norm.r,
        };
        let w: Vec<f64> = (0..grid.num_points)
            .map(|i| {
                let x = grid.x[i];
                let resolved = if eps == 0.0 {
                    1.0
                } else {
                    (1.0 + x / norm.sigma_ref).powf(2.0 * eps)
                };
                mode.multiplicity as f64
                    * ang
                    * trap[i]
                    * x.powf(-2.0 * norm.l)
                    * resolved
                    * (n_dim as f64 * grid.t[i]).exp()
            })
            .collect();
        weights.push(w);
    }
    Ok(sobolev_gram(grid, &weights))
}

/// Pointwise resolved-weight multiplier (x + |σ|)^α.
pub fn weight_apply(alpha: f64, sigma_abs: f64, u: &[Complex64], grid: &LogGrid) -> Vec<Complex64> {
    u.iter()
        .zip(&grid.x)
        .map(|(&v, &x)| v * (x + sigma_abs).powf(alpha))
        .collect()
}

#[derive(Clone, Debug)]
pub struct MellinData {
    /// signed frequencies, FFT layout
    pub taus: Vec<f64>,
    pub values: Vec<Complex64>,
    t_min: f64,
    h: f64,
}

fn check_decay(u: &[Complex64]) -> Result<f64> {
    let max = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let ends = u[0].norm().max(u[u.len() - 1].norm());
    if max == 0.0 || ends > 1e-8 * max {
        return Err(Error::TransformPrecondition(format!(
            "endpoint magnitude {:.3e} exceeds 1e-8 of max {:.3e}",
            ends, max
        )));
    }
    Ok(max)
}

/// Discrete Mellin transform (Mu)(τ) = h Σ e^{iτ t_k} u_k at FFT frequencies.
pub fn mellin(u: &[Complex64], grid: &LogGrid) -> Result<MellinData> {
    check_decay(u)?;
    let n = grid.num_points;
    assert_eq!(u.len(), n);
    let mut buf = u.to_vec();
    FftPlanner::new()
        .plan_fft_inverse(n)
        .process(&mut buf);
    let mut taus = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for (j, v) in buf.into_iter().enumerate() {
        let js = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let tau = 2.0 * std::f64::consts::PI * js / (n as f64 * grid.h);
        // FFT index j uses the aliased exponent; rephase to t_min origin
        let phase = Complex64::new(0.0, tau * grid.t_min).exp();
        taus.push(tau);
        values.push(grid.h * phase * v);
    }
    Ok(MellinData {
        taus,
        values,
        t_min: grid.t_min,
        h: grid.h,
    })
}

pub fn mellin_inverse(m: &MellinData) -> Vec<Complex64> {
    let n = m.values.len();
    let mut buf: Vec<Complex64> = m
        .values
        .iter()
        .zip(&m.taus)
        .map(|(&v, &tau)| v * Complex64::new(0.0, -tau * m.t_min).exp() / (n as f64 * m.h))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Direct quadrature evaluation of (Mu)(τ) at an arbitrary complex τ.
pub fn mellin_at(u: &[Complex64], grid: &LogGrid, tau: Complex64) -> Result<Complex64> {
    check_decay(u)?;
    let trap = grid.trapezoid_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..grid.num_points {
        acc += trap[i] * u[i] * (Complex64::new(0.0, 1.0) * tau * grid.t[i]).exp();
    }
    Ok(acc)
}
