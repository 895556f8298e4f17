//! Bessel J and Hankel H⁽¹⁾ for real order ν ≥ 0 and complex argument.
//!
//! Strategy: compensated power series for |z| ≤ 12; exact finite spherical
//! sums for half-integer orders beyond; generic asymptotic expansion with
//! optimal truncation otherwise. Half-integer Hankels use the closed finite
//! sum for every z. Non-half-integer Hankels go through the connection
//! formula with a guard band around integer orders.

use num_complex::Complex64;

use crate::error::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Lanczos approximation (g = 7, 9 terms), extended to negative
/// non-integer arguments by reflection.
pub fn gamma_real(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        if x == x.floor() {
            return f64::NAN; // pole
        }
        return PI / ((PI * x).sin() * gamma_real(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

fn check_domain(nu: f64, z: Complex64, need_upper_half: bool) -> Result<()> {
    let m = z.norm();
    if !(1e-8..1e4).contains(&m) {
        return Err(Error::SpecialFunctionDomain(format!(
            "|z| = {m:.3e} outside (1e-8, 1e4)"
        )));
    }
    if need_upper_half && z.im < -1e-14 {
        return Err(Error::SpecialFunctionDomain(format!(
            "Im z = {} < 0 for hankel1",
            z.im
        )));
    }
    if nu < 0.0 {
        return Err(Error::SpecialFunctionDomain(format!("order nu = {nu} < 0")));
    }
    Ok(())
}

/// Power series with Kahan compensation; valid for any real order with
/// non-pole Γ(ν+1), intended for |z| ≤ 12.
fn bessel_j_series(nu: f64, z: Complex64) -> Complex64 {
    let half = z / 2.0;
    let g = gamma_real(nu + 1.0);
    let mut term = if g.is_nan() {
        Complex64::new(0.0, 0.0) // 1/Γ at a pole
    } else {
        (nu * half.ln()).exp() / g
    };
    if nu < 0.0 && g.is_nan() {
        // negative integer order: J_{-n} = (-1)^n J_n
        let n = (-nu).round();
        return if (n as i64) % 2 == 0 {
            bessel_j_series(-nu, z)
        } else {
            -bessel_j_series(-nu, z)
        };
    }
    let q = -half * half;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    for m in 0..200 {
        // Kahan step
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let mf = (m + 1) as f64;
        term *= q / (mf * (mf + nu));
        if term.norm() < 1e-18 * sum.norm().max(1e-280) {
            break;
        }
    }
    sum
}

fn is_half_integer(nu: f64) -> Option<u32> {
    let l = nu - 0.5;
    if l >= 0.0 && (l - l.round()).abs() < 1e-12 {
        Some(l.round() as u32)
    } else {
        None
    }
}

/// Spherical h⁽¹⁾_l via its exact finite sum; H⁽¹⁾_{l+1/2} = √(2z/π) h⁽¹⁾_l.
fn hankel1_half_integer(l: u32, z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut coeff = 1.0f64; // (l+m)!/(m!(l-m)!)
    for m in 0..=l {
        let mf = m as f64;
        if m > 0 {
            coeff *= (l as f64 + mf) * (l as f64 - mf + 1.0) / mf;
        }
        sum += i.powu(m) * coeff / (2.0 * z).powu(m);
    }
    let h_sph = (-i).powu(l + 1) * (i * z).exp() / z * sum;
    (2.0 * z / PI).sqrt() * h_sph
}

/// Second-kind analogue, used to reconstruct J at large |z| for
/// half-integer orders: j_l = (h¹_l + h²_l)/2.
fn hankel2_half_integer(l: u32, z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut coeff = 1.0f64;
    for m in 0..=l {
        let mf = m as f64;
        if m > 0 {
            coeff *= (l as f64 + mf) * (l as f64 - mf + 1.0) / mf;
        }
        sum += (-i).powu(m) * coeff / (2.0 * z).powu(m);
    }
    let h_sph = i.powu(l + 1) * (-i * z).exp() / z * sum;
    (2.0 * z / PI).sqrt() * h_sph
}

/// Asymptotic Hankel expansion H⁽¹⁾ ~ √(2/(πz)) e^{iω} Σ i^k a_k(ν)/(8z)^k,
/// ω = z - νπ/2 - π/4, truncated at the smallest term.
fn hankel1_asymptotic(nu: f64, z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let omega = z - (nu * PI / 2.0 + PI / 4.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = term.norm();
    let mu4 = 4.0 * nu * nu;
    for k in 0..30u32 {
        let kf = k as f64;
        let num = mu4 - (2.0 * kf + 1.0).powi(2);
        term = term * num / ((kf + 1.0) * 8.0) / z * i;
        if term.norm() >= last {
            break; // divergent tail reached
        }
        sum += term;
        last = term.norm();
    }
    (2.0 / (PI * z)).sqrt() * (i * omega).exp() * sum
}

fn hankel2_asymptotic(nu: f64, z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let omega = z - (nu * PI / 2.0 + PI / 4.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = term.norm();
    let mu4 = 4.0 * nu * nu;
    for k in 0..30u32 {
        let kf = k as f64;
        let num = mu4 - (2.0 * kf + 1.0).powi(2);
        term = term * num / ((kf + 1.0) * 8.0) / z * (-i);
        if term.norm() >= last {
            break;
        }
        sum += term;
        last = term.norm();
    }
    (2.0 / (PI * z)).sqrt() * (-i * omega).exp() * sum
}

pub fn bessel_j(nu: f64, z: Complex64) -> Result<Complex64> {
    check_domain(nu, z, false)?;
    if z.norm() <= 12.0 {
        return Ok(bessel_j_series(nu, z));
    }
    if let Some(l) = is_half_integer(nu) {
        return Ok((hankel1_half_integer(l, z) + hankel2_half_integer(l, z)) / 2.0);
    }
    Ok((hankel1_asymptotic(nu, z) + hankel2_asymptotic(nu, z)) / 2.0)
}

pub fn hankel1(nu: f64, z: Complex64) -> Result<Complex64> {
    check_domain(nu, z, true)?;
    if let Some(l) = is_half_integer(nu) {
        return Ok(hankel1_half_integer(l, z));
    }
    if z.norm() > 12.0 {
        return Ok(hankel1_asymptotic(nu, z));
    }
    // connection formula; guard band around integer orders
    if (nu - nu.round()).abs() <= 1e-3 {
        return Err(Error::SpecialFunctionDomain(format!(
            "order nu = {nu} within 1e-3 of an integer: connection formula ill-conditioned"
        )));
    }
    let jn = bessel_j_series(nu, z);
    let jm = bessel_j_series(-nu, z);
    let i = Complex64::new(0.0, 1.0);
    let phase = Complex64::new(0.0, -nu * PI).exp();
    let y = (jn * (nu * PI).cos() - jm) / (nu * PI).sin();
    let _ = phase;
    Ok(jn + i * y)
}

/// d/dz J_ν(z) = (ν/z) J_ν(z) - J_{ν+1}(z).
pub fn bessel_j_prime(nu: f64, z: Complex64) -> Result<Complex64> {
    Ok(nu / z * bessel_j(nu, z)? - bessel_j(nu + 1.0, z)?)
}

/// d/dz H⁽¹⁾_ν(z) = (ν/z) H⁽¹⁾_ν(z) - H⁽¹⁾_{ν+1}(z).
pub fn hankel1_prime(nu: f64, z: Complex64) -> Result<Complex64> {
    Ok(nu / z * hankel1(nu, z)? - hankel1(nu + 1.0, z)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    #[test]
    fn gamma_values() {
        assert!((gamma_real(1.0) - 1.0).abs() < 1e-13);
        assert!((gamma_real(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma_real(0.5) - PI.sqrt()).abs() < 1e-13);
        assert!((gamma_real(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn half_integer_closed_forms() {
        let z = Complex64::new(1.0, 0.0);
        let j = bessel_j(0.5, z).unwrap();
        let expect = (2.0 / (PI * 1.0)).sqrt() * 1f64.sin();
        assert!((j.re - expect).abs() < 1e-13 && j.im.abs() < 1e-15);
        assert!((expect - 0.671397).abs() < 1e-6);
        let h = hankel1(0.5, z).unwrap();
        let expect_h = (2.0 / PI).sqrt() * Complex64::new(1f64.sin(), -(1f64.cos()));
        assert!((h - expect_h).norm() < 1e-13);
        assert!((h - Complex64::new(0.671397, -0.431099)).norm() < 2e-6);
    }

    #[test]
    fn series_matches_closed_form_half_integer() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let l = rng.gen_range(0..4u32);
            let nu = l as f64 + 0.5;
            let z = Complex64::new(rng.gen_range(0.3..11.0), rng.gen_range(0.0..3.0));
            let series = bessel_j_series(nu, z);
            let closed = (hankel1_half_integer(l, z) + hankel2_half_integer(l, z)) / 2.0;
            assert!(
                (series - closed).norm() < 1e-10 * closed.norm().max(1e-10),
                "nu={nu} z={z}"
            );
        }
    }

    #[test]
    fn series_asymptotic_join() {
        // both evaluation strategies agree near the |z| = 12 switch
        for &nu in &[0.2f64, 1.7, 3.3] {
            for &z in &[Complex64::new(11.9, 0.4), Complex64::new(11.5, 0.0)] {
                let series = bessel_j_series(nu, z);
                let asym = (hankel1_asymptotic(nu, z) + hankel2_asymptotic(nu, z)) / 2.0;
                assert!(
                    (series - asym).norm() < 1e-8 * series.norm().max(1e-8),
                    "nu={nu} z={z}"
                );
            }
        }
    }

    #[test]
    fn wronskian_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            // half-integer and generic (guarded) orders, mixed z scales
            let nu = if rng.gen_bool(0.5) {
                rng.gen_range(0..5u32) as f64 + 0.5
            } else {
                let base: f64 = rng.gen_range(0.1..4.0);
                if (base - base.round()).abs() < 2e-3 {
                    base + 0.01
                } else {
                    base
                }
            };
            let z = Complex64::new(
                10f64.powf(rng.gen_range(-1.0..2.5)),
                rng.gen_range(0.0..0.5),
            );
            let j = bessel_j(nu, z).unwrap();
            let jp = bessel_j_prime(nu, z).unwrap();
            let h = match hankel1(nu, z) {
                Ok(h) => h,
                Err(_) => continue, // guard band
            };
            let hp = hankel1_prime(nu, z).unwrap();
            let w = j * hp - jp * h;
            let expect = 2.0 * I / (PI * z);
            assert!(
                (w - expect).norm() < 1e-9 * expect.norm(),
                "nu={nu} z={z} relerr={:.2e}",
                (w - expect).norm() / expect.norm()
            );
        }
    }

    #[test]
    fn domain_rejections() {
        assert!(bessel_j(0.5, Complex64::new(1e-9, 0.0)).is_err());
        assert!(bessel_j(0.5, Complex64::new(2e4, 0.0)).is_err());
        assert!(hankel1(0.5, Complex64::new(1.0, -0.5)).is_err());
        assert!(hankel1(1.0005, Complex64::new(1.0, 0.0)).is_err());
        assert!(bessel_j(-0.5, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn imaginary_axis_behavior() {
        // J_0(iy) = I_0(y) is real and positive; H1_0(iy) decays
        let z = Complex64::new(0.0, 2.0);
        let j = bessel_j(0.5, z).unwrap();
        // J_{1/2}(iy) = sqrt(2/(pi i y)) sin(iy): check against closed form
        let expect = (2.0 / (PI * z)).sqrt() * z.sin();
        assert!((j - expect).norm() < 1e-12 * expect.norm());
        let h = hankel1(0.5, Complex64::new(0.0, 8.0)).unwrap();
        assert!(h.norm() < 1e-3); // e^{-8} falloff
    }
}
