//! Exact-cone Green-function oracle, finite-difference solves, and the
//! limiting-absorption experiment.

use num_complex::Complex64;

use crate::discretization::{self, GramMatrix, NormSpec, RadialOperator};
use crate::error::{Error, Result};
use crate::grid::LogGrid;
use crate::model::{self, AngularMode, ModelParams, OperatorKind, SpectralParam};
use crate::special;

const PI: f64 = std::f64::consts::PI;
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug)]
pub struct BesselOrder {
    pub nu: f64,
}

impl BesselOrder {
    /// ν = √(λ + ((n-2)/2)²); half-integer for n = 3 sphere modes.
    pub fn from_mode(mode: AngularMode, n: u32) -> Self {
        let half = (n as f64 - 2.0) / 2.0;
        Self {
            nu: (mode.lambda() + half * half).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterBc {
    /// Hankel log-derivative of the outgoing solution (unconjugated only).
    ExactOutgoing,
    /// Incoming variant (H⁽²⁾), real σ only; used for conjugate-symmetry checks.
    ExactIncoming,
    /// u' + κu = 0 with κ = (n-1-i(β-γ)+iσϖ)/2 (conjugated kinds only).
    AsymptoticRobin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerBc {
    /// u' = (ν - (n-2)/2)u, the regular-solution behavior at the cone tip.
    RegularRobin,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryConditions {
    pub outer: OuterBc,
    pub inner: InnerBc,
}

impl BoundaryConditions {
    pub fn outgoing() -> Self {
        Self {
            outer: OuterBc::ExactOutgoing,
            inner: InnerBc::RegularRobin,
        }
    }

    pub fn conjugated() -> Self {
        Self {
            outer: OuterBc::AsymptoticRobin,
            inner: InnerBc::RegularRobin,
        }
    }
}

/// φ, ψ and their first t-derivatives on the grid: φ = ρ^{-m}J_ν(σρ),
/// ψ = ρ^{-m}H⁽¹⁾_ν(σρ), m = (n-2)/2.
struct CoreSolutions {
    phi: Vec<Complex64>,
    psi: Vec<Complex64>,
    dphi: Vec<Complex64>,
    dpsi: Vec<Complex64>,
}

fn core_solutions(nu: f64, sigma: Complex64, n: u32, grid: &LogGrid) -> Result<CoreSolutions> {
    let m = (n as f64 - 2.0) / 2.0;
    let np = grid.num_points;
    let mut out = CoreSolutions {
        phi: Vec::with_capacity(np),
        psi: Vec::with_capacity(np),
        dphi: Vec::with_capacity(np),
        dpsi: Vec::with_capacity(np),
    };
    for i in 0..np {
        let rho = grid.rho[i];
        let z = sigma * rho;
        let pw = rho.powf(-m);
        let j = special::bessel_j(nu, z)?;
        let jp = special::bessel_j_prime(nu, z)?;
        let h = special::hankel1(nu, z)?;
        let hp = special::hankel1_prime(nu, z)?;
        out.phi.push(pw * j);
        out.psi.push(pw * h);
        out.dphi.push(pw * (-m * j + z * jp));
        out.dpsi.push(pw * (-m * h + z * hp));
    }
    Ok(out)
}

/// ρ^{n-1}(φψ' - φ'ψ) across the grid; equals 2i/π identically.
pub fn wronskian_profile(
    nu: f64,
    sigma: Complex64,
    n: u32,
    grid: &LogGrid,
) -> Result<Vec<Complex64>> {
    let cs = core_solutions(nu, sigma, n, grid)?;
    // φψ' - φ'ψ in ρ equals (φψ̇ - φ̇ψ)/ρ in t
    Ok((0..grid.num_points)
        .map(|i| {
            grid.rho[i].powi(n as i32 - 2)
                * (cs.phi[i] * cs.dpsi[i] - cs.dphi[i] * cs.psi[i])
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct GreenSolution {
    pub u: Vec<Complex64>,
    /// relative interior residual of the unconjugated equation, measured
    /// with fourth-order difference stencils on the middle 80% of the grid
    pub residual_rel: f64,
}

/// u(ρ) = ∫ G(ρ,ρ') f(ρ') ρ'^{n-1} dρ' with G = (π/2i) φ(ρ_<) ψ(ρ_>).
pub fn green_apply(
    params: &ModelParams,
    mode: AngularMode,
    sp: SpectralParam,
    f: &[Complex64],
    grid: &LogGrid,
) -> Result<GreenSolution> {
    let zero = Complex64::new(0.0, 0.0);
    if params.beta != zero
        || params.beta_prime != zero
        || params.gamma != zero
        || params.varpi != 0.0
        || (0..8).any(|k| params.potential.eval(10f64.powi(-k)) != 0.0)
    {
        return Err(Error::InvalidParams(
            "green oracle requires the exact cone (beta = beta' = gamma = varpi = 0, W = 0)".into(),
        ));
    }
    if sp.sigma == zero {
        return Err(Error::InvalidParams("green oracle requires sigma != 0".into()));
    }
    let np = grid.num_points;
    assert_eq!(f.len(), np);
    let nu = BesselOrder::from_mode(mode, params.n).nu;
    let cs = core_solutions(nu, sp.sigma, params.n, grid)?;
    // prefix sums: A_i = ∫_{t_min}^{t_i} φ f e^{nt} dt, B_i the tail,
    // both by fourth-order cumulative quadrature
    let ga: Vec<Complex64> = (0..np)
        .map(|i| cs.phi[i] * f[i] * (params.n as f64 * grid.t[i]).exp())
        .collect();
    let gb: Vec<Complex64> = (0..np)
        .map(|i| cs.psi[i] * f[i] * (params.n as f64 * grid.t[i]).exp())
        .collect();
    let a = cumulative_integral(&ga, grid.h);
    let mut b = cumulative_integral(&gb.iter().rev().copied().collect::<Vec<_>>(), grid.h);
    b.reverse();
    // kernel normalizer: G = φ(ρ_<)ψ(ρ_>)/(-ρ^{n-1}W(φ,ψ)); with the
    // Wronskian ρ^{n-1}(φψ'-φ'ψ) = 2i/π this is iπ/2
    let pref = I * PI / 2.0;
    let u: Vec<Complex64> = (0..np)
        .map(|i| pref * (cs.psi[i] * a[i] + cs.phi[i] * b[i]))
        .collect();
    let residual_rel = unconjugated_residual(params, mode, sp, &u, f, grid);
    Ok(GreenSolution { u, residual_rel })
}

/// Cumulative integral with prefix[0] = 0, using the fourth-order
/// interpolatory rule h/24·(-1, 13, 13, -1) per cell (one-sided at the ends).
fn cumulative_integral(g: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = g.len();
    assert!(n >= 4);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n - 1 {
        let inc = if i == 0 {
            9.0 * g[0] + 19.0 * g[1] - 5.0 * g[2] + g[3]
        } else if i == n - 2 {
            g[n - 4] - 5.0 * g[n - 3] + 19.0 * g[n - 2] + 9.0 * g[n - 1]
        } else {
            -g[i - 1] + 13.0 * g[i] + 13.0 * g[i + 1] - g[i + 2]
        };
        acc += h / 24.0 * inc;
        out[i + 1] = acc;
    }
    out
}

/// Max relative residual of -c₂u'' + ic₁u' + c₀u = f on the middle 80%,
/// using fourth-order centered stencils.
pub fn unconjugated_residual(
    params: &ModelParams,
    mode: AngularMode,
    sp: SpectralParam,
    u: &[Complex64],
    f: &[Complex64],
    grid: &LogGrid,
) -> f64 {
    let coeffs = match model::build_coeffs(params, mode, sp, OperatorKind::Unconjugated) {
        Ok(c) => c,
        Err(_) => return f64::INFINITY,
    };
    let np = grid.num_points;
    let h = grid.h;
    let fscale = f.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let lo = (np / 10).max(2);
    let hi = np - lo;
    let mut worst: f64 = 0.0;
    for i in lo..hi {
        let d1 = (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * h);
        let d2 = (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2])
            / (12.0 * h * h);
        let pu = -coeffs.c2(grid.x[i]) * d2 + I * coeffs.c1(grid.x[i]) * d1
            + coeffs.c0(grid.x[i]) * u[i];
        worst = worst.max((pu - f[i]).norm() / fscale);
    }
    worst
}

#[derive(Clone, Debug)]
pub struct FdSolution {
    pub u: Vec<Complex64>,
    pub max_interior_residual: f64,
}

/// Banded LU solve with homogeneous boundary rows and one step of
/// iterative refinement.
pub fn fd_solve(op: &RadialOperator, f: &[Complex64]) -> Result<FdSolution> {
    let np = op.grid.num_points;
    assert_eq!(f.len(), np);
    let mut rhs = f.to_vec();
    rhs[0] = Complex64::new(0.0, 0.0);
    rhs[np - 1] = Complex64::new(0.0, 0.0);
    let lu = op.matrix.lu()?;
    let mut u = lu.solve(&rhs);
    // one refinement step
    let au = op.matrix.matvec(&u);
    let r: Vec<Complex64> = rhs.iter().zip(&au).map(|(a, b)| a - b).collect();
    let du = lu.solve(&r);
    for (ui, di) in u.iter_mut().zip(&du) {
        *ui += di;
    }
    let au = op.matrix.matvec(&u);
    let fscale = f.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let max_interior_residual = (1..np - 1)
        .map(|i| (au[i] - rhs[i]).norm() / fscale)
        .fold(0.0, f64::max);
    Ok(FdSolution {
        u,
        max_interior_residual,
    })
}

#[derive(Clone, Debug)]
pub struct LapTable {
    pub eps: Vec<f64>,
    pub dist: Vec<f64>,
    /// d(ε) decreasing up to a factor 2 at each step
    pub monotone_ok: bool,
    /// d(ε_min) < d(ε_max)/4 over ≥ two decades
    pub contraction_ok: bool,
}

/// Limiting absorption: solve at σ_r + iε for each ε and at ε = 0, report
/// H^{0,l} distances to the ε = 0 (outgoing) solution.
pub fn lap_limit(
    params: &ModelParams,
    mode: AngularMode,
    sigma_r: f64,
    eps_list: &[f64],
    f: &[Complex64],
    grid: &LogGrid,
    l: f64,
) -> Result<LapTable> {
    if sigma_r == 0.0 {
        return Err(Error::InvalidParams("lap_limit needs sigma_r != 0".into()));
    }
    if l >= -0.5 {
        return Err(Error::BadNormSpec(format!(
            "lap distance needs l < -1/2, got {l}"
        )));
    }
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list[0] <= 0.0 {
        return Err(Error::InvalidParams(
            "eps_list must be positive and strictly decreasing".into(),
        ));
    }
    let bc = BoundaryConditions::outgoing();
    let solve_at = |sigma: Complex64| -> Result<Vec<Complex64>> {
        let sp = SpectralParam::new(sigma)?;
        let op = discretization::assemble(
            params,
            mode,
            sp,
            OperatorKind::Unconjugated,
            grid,
            &bc,
        )?;
        Ok(fd_solve(&op, f)?.u)
    };
    let u0 = solve_at(Complex64::new(sigma_r, 0.0))?;
    let gram = discretization::gram(
        &NormSpec::hb(0, l),
        grid,
        mode,
        params.n,
    )?;
    let mut dist = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let ue = solve_at(Complex64::new(sigma_r, eps))?;
        let diff: Vec<Complex64> = ue.iter().zip(&u0).map(|(a, b)| a - b).collect();
        dist.push(gram.norm(&diff));
    }
    let monotone_ok = dist.windows(2).all(|w| w[1] < 2.0 * w[0]);
    let decades = (eps_list[0] / eps_list[eps_list.len() - 1]).log10();
    let contraction_ok = decades >= 2.0 - 1e-9 && dist[dist.len() - 1] < dist[0] / 4.0;
    Ok(LapTable {
        eps: eps_list.to_vec(),
        dist,
        monotone_ok,
        contraction_ok,
    })
}

/// Gram matrix helper for solution comparisons in L²-type norms.
pub fn comparison_gram(grid: &LogGrid, mode: AngularMode, n: u32, l: f64) -> Result<GramMatrix> {
    discretization::gram(&NormSpec::hb(0, l), grid, mode, n)
}
