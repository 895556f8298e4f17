//! Term algebra on the b-cotangent bundle and the b-Hamilton bracket.
//!
//! A term is c · x^a · σ^b · τ_b^p · (μ²)^q · (τ_b²+μ²)^e. All symbols here
//! are y-independent, so the Hamilton derivative of p acting on a reduces to
//! H_p a = (∂_τ p)(x∂_x a) - (x∂_x p)(∂_τ a).
//!
//! In the complex-spectral-parameter variants the σ slot carries the
//! coefficient w = Re σ/|σ|² instead of σ itself.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug)]
pub struct Term {
    pub coeff: Complex64,
    pub a: f64,
    pub b: f64,
    pub p: u32,
    pub q: u32,
    pub e: f64,
}

impl Term {
    fn key(&self) -> (u64, u64, u32, u32, u64) {
        (self.a.to_bits(), self.b.to_bits(), self.p, self.q, self.e.to_bits())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SymbolExpr {
    pub terms: Vec<Term>,
}

#[derive(Clone, Copy, Debug)]
pub struct BracketPoint {
    pub x: f64,
    pub sigma: f64,
    pub taub: f64,
    pub mu_sq: f64,
}

impl BracketPoint {
    pub fn new(x: f64, sigma: f64, taub: f64, mu_sq: f64) -> Result<Self> {
        let ok = |v: f64| (1e-6..1e6).contains(&v.abs());
        if !ok(x) || !ok(sigma) || mu_sq < 0.0 {
            return Err(Error::SymbolEval(format!(
                "point out of range: x={x}, sigma={sigma}, mu_sq={mu_sq}"
            )));
        }
        Ok(Self { x, sigma, taub, mu_sq })
    }
}

impl SymbolExpr {
    pub fn term(coeff: Complex64, a: f64, b: f64, p: u32, q: u32, e: f64) -> Self {
        Self {
            terms: vec![Term { coeff, a, b, p, q, e }],
        }
        .canonical()
    }

    pub fn real_term(c: f64, a: f64, b: f64, p: u32, q: u32, e: f64) -> Self {
        Self::term(Complex64::new(c, 0.0), a, b, p, q, e)
    }

    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Merge equal-key terms; drop coefficients below 1e-14 of the largest.
    pub fn canonical(&self) -> Self {
        let mut merged: Vec<Term> = Vec::new();
        for t in &self.terms {
            if let Some(m) = merged.iter_mut().find(|m| m.key() == t.key()) {
                m.coeff += t.coeff;
            } else {
                merged.push(*t);
            }
        }
        let max = merged.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max);
        merged.retain(|t| t.coeff.norm() > 0.0 && t.coeff.norm() >= 1e-14 * max);
        merged.sort_by(|s, t| {
            s.a.total_cmp(&t.a)
                .then(s.b.total_cmp(&t.b))
                .then(s.p.cmp(&t.p))
                .then(s.q.cmp(&t.q))
                .then(s.e.total_cmp(&t.e))
        });
        Self { terms: merged }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self { terms }.canonical()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coeff: t.coeff * c, ..*t })
                .collect(),
        }
        .canonical()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for s in &self.terms {
            for t in &other.terms {
                terms.push(Term {
                    coeff: s.coeff * t.coeff,
                    a: s.a + t.a,
                    b: s.b + t.b,
                    p: s.p + t.p,
                    q: s.q + t.q,
                    e: s.e + t.e,
                });
            }
        }
        Self { terms }.canonical()
    }

    /// x ∂_x (the b-derivative in the base variable).
    pub fn x_deriv(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * t.a,
                    ..*t
                })
                .collect(),
        }
        .canonical()
    }

    /// ∂_{τ_b}, with the chain rule ∂_{τ_b}(τ_b²+μ²)^e = 2eτ_b(τ_b²+μ²)^{e-1}.
    pub fn tau_deriv(&self) -> Self {
        let mut terms = Vec::new();
        for t in &self.terms {
            if t.p > 0 {
                terms.push(Term {
                    coeff: t.coeff * t.p as f64,
                    p: t.p - 1,
                    ..*t
                });
            }
            if t.e != 0.0 {
                terms.push(Term {
                    coeff: t.coeff * 2.0 * t.e,
                    p: t.p + 1,
                    e: t.e - 1.0,
                    ..*t
                });
            }
        }
        Self { terms }.canonical()
    }

    /// Drop every term whose x-exponent exceeds the minimum present
    /// (restriction to the front face x = 0 modulo the base weight).
    pub fn restrict_to_face(&self) -> Self {
        let min_a = self.terms.iter().map(|t| t.a).fold(f64::INFINITY, f64::min);
        Self {
            terms: self
                .terms
                .iter()
                .filter(|t| t.a <= min_a + 1e-9)
                .copied()
                .collect(),
        }
        .canonical()
    }

    /// Sum of absolute term magnitudes; the conditioning scale for
    /// cancellation-aware comparisons.
    pub fn eval_abs(&self, pt: &BracketPoint) -> f64 {
        let fiber = pt.taub * pt.taub + pt.mu_sq;
        self.terms
            .iter()
            .map(|t| {
                t.coeff.norm()
                    * pt.x.powf(t.a)
                    * pt.sigma.powf(t.b)
                    * pt.taub.abs().powi(t.p as i32)
                    * pt.mu_sq.powi(t.q as i32)
                    * fiber.powf(t.e)
            })
            .sum()
    }

    pub fn eval(&self, pt: &BracketPoint) -> Result<Complex64> {
        let fiber = pt.taub * pt.taub + pt.mu_sq;
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            if fiber == 0.0 && t.e < 0.0 {
                return Err(Error::SymbolEval(
                    "negative fiber-weight exponent at tau_b² + μ² = 0".into(),
                ));
            }
            acc += t.coeff
                * pt.x.powf(t.a)
                * pt.sigma.powf(t.b)
                * pt.taub.powi(t.p as i32)
                * pt.mu_sq.powi(t.q as i32)
                * fiber.powf(t.e);
        }
        Ok(acc)
    }
}

/// H_p a for y-independent symbols.
pub fn bracket(p: &SymbolExpr, a: &SymbolExpr) -> SymbolExpr {
    p.tau_deriv()
        .mul(&a.x_deriv())
        .add(&p.x_deriv().mul(&a.tau_deriv()).scale(Complex64::new(-1.0, 0.0)))
}

/// Re p̂(σ) = x²(τ_b²+μ²) - 2xστ_b  (real σ).
pub fn re_p_hat() -> SymbolExpr {
    SymbolExpr::real_term(1.0, 2.0, 0.0, 0, 0, 1.0)
        .add(&SymbolExpr::real_term(-2.0, 1.0, 1.0, 1, 0, 0.0))
}

/// Re p̃ with the complex-σ normalization: w·x²(τ_b²+μ²) - 2xτ_b, where the
/// σ slot of the first term carries w = Re σ/|σ|².
pub fn re_p_tilde() -> SymbolExpr {
    SymbolExpr::real_term(1.0, 2.0, 1.0, 0, 0, 1.0)
        .add(&SymbolExpr::real_term(-2.0, 1.0, 0.0, 1, 0, 0.0))
}

/// Commutant weight a = x^{-2l-1} σ^{2ν̃} (τ_b²+μ²)^{r̃-1/2}.
pub fn weight(l: f64, r_t: f64, nu_t: f64) -> SymbolExpr {
    SymbolExpr::real_term(1.0, -2.0 * l - 1.0, 2.0 * nu_t, 0, 0, r_t - 0.5)
}

/// Principal symbol of (Im P̂ A + A Im P̂) + i[Re P̂, A], real σ.
pub fn commutator_symbol_real(params: &ModelParams, l: f64, r_t: f64, nu_t: f64) -> SymbolExpr {
    let a = weight(l, r_t, nu_t);
    let h = bracket(&re_p_hat(), &a);
    // 2 Im(p̂)·a with Im p̂ = x²τ_b Im β - xσ Im(β-γ)
    let im_part = SymbolExpr::real_term(2.0 * params.beta.im, 2.0, 0.0, 1, 0, 0.0).add(
        &SymbolExpr::real_term(-2.0 * (params.beta - params.gamma).im, 1.0, 1.0, 0, 0, 0.0),
    );
    h.add(&im_part.mul(&a))
}

/// Commutator symbol with the ŝ correction, restricted to x = 0:
/// equals σ^{2ν̃+1} x^{-2l} (τ²+μ²)^{r̃-3/2} ·
/// 4(-(l+r̃-Im(β+γ)/2)τ_b² + (l+1/2-Im(β-γ)/2)μ²).
pub fn modified_commutator_real(params: &ModelParams, l: f64, r_t: f64, nu_t: f64) -> SymbolExpr {
    let a = weight(l, r_t, nu_t);
    let s_hat = SymbolExpr::real_term(
        2.0 * (l + r_t - params.beta.im / 2.0),
        0.0,
        0.0,
        1,
        0,
        -1.0,
    );
    let correction = s_hat.mul(&a).mul(&re_p_hat()).scale(Complex64::new(2.0, 0.0));
    commutator_symbol_real(params, l, r_t, nu_t)
        .add(&correction)
        .restrict_to_face()
}

/// Closed form the modified real-σ commutator must equal.
pub fn modified_commutator_real_target(
    params: &ModelParams,
    l: f64,
    r_t: f64,
    nu_t: f64,
) -> SymbolExpr {
    let tau_coeff = -4.0 * (l + r_t - (params.beta + params.gamma).im / 2.0);
    let mu_coeff = 4.0 * (l + 0.5 - (params.beta - params.gamma).im / 2.0);
    SymbolExpr::real_term(tau_coeff, -2.0 * l, 2.0 * nu_t + 1.0, 2, 0, r_t - 1.5).add(
        &SymbolExpr::real_term(mu_coeff, -2.0 * l, 2.0 * nu_t + 1.0, 0, 1, r_t - 1.5),
    )
}

/// H_{Re p̃} of x^{-2l-1}(τ_b²+μ²)^{r̃-1/2} (complex-σ normalization).
pub fn commutator_symbol_complex(l: f64, r_t: f64) -> SymbolExpr {
    bracket(&re_p_tilde(), &weight(l, r_t, 0.0))
}

/// Complex-σ version with the ŝ₀ correction, restricted to x = 0:
/// equals x^{-2l}(τ_b²+μ²)^{r̃-3/2}·4(-(l+r̃)τ_b² + (l+1/2)μ²).
pub fn modified_commutator_complex(l: f64, r_t: f64) -> SymbolExpr {
    let a = weight(l, r_t, 0.0);
    let s0 = SymbolExpr::real_term(2.0 * (l + r_t), 0.0, 0.0, 1, 0, -1.0);
    let correction = s0.mul(&a).mul(&re_p_tilde()).scale(Complex64::new(2.0, 0.0));
    commutator_symbol_complex(l, r_t)
        .add(&correction)
        .restrict_to_face()
}

pub fn modified_commutator_complex_target(l: f64, r_t: f64) -> SymbolExpr {
    SymbolExpr::real_term(-4.0 * (l + r_t), -2.0 * l, 0.0, 2, 0, r_t - 1.5).add(
        &SymbolExpr::real_term(4.0 * (l + 0.5), -2.0 * l, 0.0, 0, 1, r_t - 1.5),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng) -> BracketPoint {
        BracketPoint::new(
            10f64.powf(rng.gen_range(-2.0..2.0)),
            10f64.powf(rng.gen_range(-2.0..2.0)),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(0.01..9.0),
        )
        .unwrap()
    }

    fn assert_equal_at_points(lhs: &SymbolExpr, rhs: &SymbolExpr, rng: &mut ChaCha8Rng, tol: f64) {
        for _ in 0..100 {
            let pt = random_point(rng);
            let l = lhs.eval(&pt).unwrap();
            let r = rhs.eval(&pt).unwrap();
            let scale = l
                .norm()
                .max(r.norm())
                .max(1e-3 * lhs.eval_abs(&pt))
                .max(1e-30);
            assert!(
                (l - r).norm() < tol * scale,
                "mismatch {:.3e} at {:?}",
                (l - r).norm() / scale,
                pt
            );
        }
    }

    #[test]
    fn eval_basics() {
        let pt = BracketPoint::new(3.0, 1.0, 3.0, 16.0).unwrap();
        let e = SymbolExpr::real_term(1.0, 2.0, 0.0, 0, 0, 0.0);
        assert_eq!(e.eval(&pt).unwrap().re, 9.0);
        let e = SymbolExpr::real_term(1.0, 0.0, 0.0, 0, 0, 0.5);
        assert!((e.eval(&pt).unwrap().re - 5.0).abs() < 1e-14);
        let pt = BracketPoint::new(2.0, 0.5, 4.0, 0.0).unwrap();
        let e = SymbolExpr::real_term(1.0, -1.0, 1.0, 1, 0, 0.0);
        assert!((e.eval(&pt).unwrap().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eval_rejects_fiber_origin_with_negative_exponent() {
        let pt = BracketPoint::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let e = SymbolExpr::real_term(1.0, 0.0, 0.0, 0, 0, -1.0);
        assert!(e.eval(&pt).is_err());
    }

    #[test]
    fn bracket_basics() {
        // {τ_b, x^{-1}} = x∂_x x^{-1} = -x^{-1}
        let taub = SymbolExpr::real_term(1.0, 0.0, 0.0, 1, 0, 0.0);
        let xinv = SymbolExpr::real_term(1.0, -1.0, 0.0, 0, 0, 0.0);
        let b = bracket(&taub, &xinv);
        assert_eq!(b.terms.len(), 1);
        assert!((b.terms[0].coeff.re + 1.0).abs() < 1e-15);
        assert_eq!(b.terms[0].a, -1.0);
        // {x²(τ²+μ²), τ_b} = -2x²(τ²+μ²)
        let p = SymbolExpr::real_term(1.0, 2.0, 0.0, 0, 0, 1.0);
        let b = bracket(&p, &taub);
        assert_eq!(b.terms.len(), 1);
        assert!((b.terms[0].coeff.re + 2.0).abs() < 1e-15);
        assert_eq!((b.terms[0].a, b.terms[0].e), (2.0, 1.0));
    }

    #[test]
    fn bracket_matches_expanded_form() {
        // the full weight bracket at l = -0.75, r̃ = 2 against the expanded
        // closed form, pointwise
        let l = -0.75;
        let rt = 2.0;
        let lhs = bracket(&re_p_hat(), &weight(l, rt, 0.0));
        let rhs = SymbolExpr::real_term(4.0 * (l + rt), -2.0 * l, 1.0, 2, 0, rt - 1.5)
            .add(&SymbolExpr::real_term(4.0 * (l + 0.5), -2.0 * l, 1.0, 0, 1, rt - 1.5))
            .add(&SymbolExpr::real_term(-4.0 * (l + rt), -2.0 * l + 1.0, 0.0, 1, 0, rt - 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pt = BracketPoint::new(1.0, 0.3, 1.0, 2.0).unwrap();
        let scale = rhs.eval(&pt).unwrap().norm();
        assert!((lhs.eval(&pt).unwrap() - rhs.eval(&pt).unwrap()).norm() < 1e-12 * scale);
        assert_equal_at_points(&lhs, &rhs, &mut rng, 1e-12);
    }

    #[test]
    fn leibniz_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = re_p_hat();
        let a = weight(-0.6, 1.3, 0.5);
        let b = SymbolExpr::real_term(0.7, 1.0, 0.0, 1, 1, -0.5)
            .add(&SymbolExpr::real_term(-1.3, 0.0, 1.0, 0, 0, 1.0));
        let lhs = bracket(&p, &a.mul(&b));
        let rhs = bracket(&p, &a).mul(&b).add(&a.mul(&bracket(&p, &b)));
        assert_equal_at_points(&lhs, &rhs, &mut rng, 1e-11);
    }

    #[test]
    fn antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = re_p_hat();
        let q = weight(-0.4, 0.8, 0.0).add(&SymbolExpr::real_term(0.3, 1.0, 0.0, 1, 0, 0.0));
        let sum = bracket(&p, &q).add(&bracket(&q, &p));
        let scale_expr = bracket(&p, &q);
        for _ in 0..100 {
            let pt = random_point(&mut rng);
            let s = scale_expr.eval(&pt).unwrap().norm().max(1e-30);
            assert!(sum.eval(&pt).unwrap().norm() < 1e-11 * s);
        }
    }

    #[test]
    fn canonicalization_idempotent_and_merging() {
        let e = SymbolExpr {
            terms: vec![
                Term { coeff: Complex64::new(1.0, 0.0), a: 1.0, b: 0.0, p: 1, q: 0, e: 0.5 },
                Term { coeff: Complex64::new(2.0, 0.0), a: 1.0, b: 0.0, p: 1, q: 0, e: 0.5 },
                Term { coeff: Complex64::new(1e-20, 0.0), a: 0.0, b: 0.0, p: 0, q: 0, e: 0.0 },
            ],
        };
        let c = e.canonical();
        assert_eq!(c.terms.len(), 1);
        assert_eq!(c.terms[0].coeff.re, 3.0);
        let cc = c.canonical();
        assert_eq!(cc.terms.len(), c.terms.len());
        for (s, t) in cc.terms.iter().zip(&c.terms) {
            assert_eq!(s.key(), t.key());
            assert_eq!(s.coeff, t.coeff);
        }
    }

    #[test]
    fn real_commutator_identity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let p = ModelParams {
                beta: Complex64::new(0.0, rng.gen_range(-0.5..0.5)),
                gamma: Complex64::new(0.0, rng.gen_range(-0.5..0.5)),
                ..ModelParams::exact_cone(3)
            };
            let l = rng.gen_range(-1.4..-0.3);
            let rt = rng.gen_range(0.5..2.5);
            let nu = rng.gen_range(0.0..1.0);
            let lhs = modified_commutator_real(&p, l, rt, nu);
            let rhs = modified_commutator_real_target(&p, l, rt, nu);
            assert_equal_at_points(&lhs, &rhs, &mut rng, 1e-12);
        }
    }

    #[test]
    fn complex_commutator_identity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let l = rng.gen_range(-1.4..0.4);
            let rt = rng.gen_range(-0.5..2.5);
            let lhs = modified_commutator_complex(l, rt);
            let rhs = modified_commutator_complex_target(l, rt);
            assert_equal_at_points(&lhs, &rhs, &mut rng, 1e-12);
        }
        // spot value: l=-0.75, r̃=2 at τ=1, μ²=1 -> 4(-1.25 - 0.25)·2^{1/2}·x^{1.5}
        let m = modified_commutator_complex(-0.75, 2.0);
        let pt = BracketPoint::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let expect = -6.0 * 2f64.powf(0.5);
        assert!((m.eval(&pt).unwrap().re - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn sign_definiteness_both_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = ModelParams::exact_cone(3);
        // threshold-A signs (r̃ large, l small): nonpositive
        let m = modified_commutator_real(&p, -0.75, 2.0, 0.0);
        for _ in 0..200 {
            let pt = random_point(&mut rng);
            assert!(m.eval(&pt).unwrap().re <= 1e-12);
        }
        // reversed signs: nonnegative
        let m = modified_commutator_real(&p, 0.0, -0.25, 0.0);
        for _ in 0..200 {
            let pt = random_point(&mut rng);
            assert!(m.eval(&pt).unwrap().re >= -1e-12);
        }
    }

    #[test]
    fn shift_in_tau_slot_with_imaginary_beta() {
        // β = 0.4i moves the τ_b² coefficient from 4(l+r̃) to
        // 4(l+r̃-Im(β+γ)/2) in the modified symbol
        let l = -0.75;
        let rt = 2.0;
        let p = ModelParams {
            beta: Complex64::new(0.0, 0.4),
            ..ModelParams::exact_cone(3)
        };
        let m = modified_commutator_real(&p, l, rt, 0.0);
        // the τ_b² coefficient at fiber weight r̃-3/2 splits between the
        // explicit p=2 term and the τ_b² part of the (τ²+μ²)^{r̃-1/2} term
        let coeff: f64 = m
            .terms
            .iter()
            .filter(|t| (t.p == 2 && (t.e - (rt - 1.5)).abs() < 1e-12)
                || (t.p == 0 && t.q == 0 && (t.e - (rt - 0.5)).abs() < 1e-12))
            .map(|t| t.coeff.re)
            .sum();
        let expect = -4.0 * (l + rt - 0.2);
        assert!((coeff - expect).abs() < 1e-13, "{coeff} vs {expect}");
    }

    #[test]
    fn balanced_orders_drop_terms() {
        // l + r̃ = 0 kills the x·τ_b(τ²+μ²) transport term
        let p = ModelParams::exact_cone(3);
        let c = commutator_symbol_real(&p, -1.0, 1.0, 0.0);
        assert!(!c.terms.is_empty());
        assert!(c.terms.iter().all(|t| (t.a - 2.0).abs() < 1e-9));
        // fully balanced orders give the zero symbol
        let m = modified_commutator_real(&p, -0.5, 0.5, 0.0);
        assert!(m.terms.is_empty());
    }
}
