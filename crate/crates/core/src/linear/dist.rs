//! Student's t tail probabilities via the regularized incomplete beta function.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    // Convergence takes O(sqrt(max(a, b))) terms.
    let max_iter = 200 + 10 * (a.max(b).sqrt() as usize);
    for m in 1..=max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided p-value `2 (1 - F(|t|; dof))`.
pub fn student_p(t: f64, dof: f64) -> Result<f64> {
    if !(dof >= 1.0) {
        return Err(Error::Domain(format!("degrees of freedom {dof} < 1")));
    }
    if t.is_nan() {
        return Err(Error::Domain("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = dof / (dof + t * t);
    Ok(inc_beta(x, 0.5 * dof, 0.5).clamp(0.0, 1.0))
}

/// Student's t CDF.
pub fn student_cdf(t: f64, dof: f64) -> Result<f64> {
    let tail = 0.5 * student_p(t, dof)?;
    Ok(if t >= 0.0 { 1.0 - tail } else { tail })
}

/// Critical value `q` with `P(|T| > q) = alpha`.
pub fn student_critical(alpha: f64, dof: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    student_p(0.0, dof)?;
    let (mut lo, mut hi) = (0.0, 1.0);
    while student_p(hi, dof)? > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_p(mid, dof)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_t_is_one() {
        for dof in [1.0, 2.0, 7.0, 100.0, 1e6] {
            assert!((student_p(0.0, dof).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_dof() {
        assert!(matches!(student_p(1.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn cauchy_closed_form() {
        // dof = 1 is Cauchy: p = 1 - 2 atan(|t|) / pi
        for t in [0.1, 1.0, 3.0, 25.0] {
            let want = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((student_p(t, 1.0).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn dof_two_closed_form() {
        // dof = 2: p = 1 - t / sqrt(2 + t^2)
        for t in [0.3f64, 1.7, 4.0, 40.0] {
            let want = 1.0 - t / (2.0 + t * t).sqrt();
            assert!((student_p(t, 2.0).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for k in 1..20 {
            assert!((ln_gamma(k as f64) - fact.ln()).abs() < 1e-12);
            fact *= k as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn critical_inverts_p() {
        let q = student_critical(0.05, 10.0).unwrap();
        assert!((q - 2.228_138_851_986).abs() < 1e-9);
        assert!((student_p(q, 10.0).unwrap() - 0.05).abs() < 1e-12);
    }
}
