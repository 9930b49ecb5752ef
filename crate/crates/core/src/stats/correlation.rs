use serde::Serialize;

use super::dist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pearson {
    pub r: f64,
    /// Two-sided p-value from the t distribution with n - 2 degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation with its two-sided significance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::contract(format!(
            "pearson: lengths differ ({n} vs {})",
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::contract("pearson needs at least three pairs"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::degenerate("pearson: constant input"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(Pearson {
        r,
        p_value: correlation_p_value(r, n),
        n,
    })
}

/// Two-sided p-value of a sample correlation `r` over `n` pairs.
///
/// With t = r √((n-2)/(1-r²)) and ν = n - 2, P(|T| ≥ |t|) = I_{1-r²}(ν/2, 1/2),
/// which avoids forming t when |r| is close to one.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let one_minus_r2 = (1.0 - r) * (1.0 + r);
    if one_minus_r2 <= 0.0 {
        return 0.0;
    }
    dist::inc_beta(df / 2.0, 0.5, one_minus_r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_are_perfectly_correlated() {
        let x = [1.0, 2.0, 4.0, 8.0, 3.0];
        let res = pearson(&x, &x).unwrap();
        assert!((res.r - 1.0).abs() < 1e-15);
        assert!(res.p_value < 1e-15);
    }

    #[test]
    fn symmetric_and_sign_flipping() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let a = pearson(&x, &y).unwrap();
        let b = pearson(&y, &x).unwrap();
        assert_eq!(a.r, b.r);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let c = pearson(&x, &neg).unwrap();
        assert!((a.r + c.r).abs() < 1e-15);
        assert!((a.p_value - c.p_value).abs() < 1e-15);
    }

    #[test]
    fn p_value_agrees_with_t_tail() {
        let (r, n) = (0.3, 40usize);
        let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
        let via_t = dist::student_t_two_sided(t, n as f64 - 2.0);
        assert!((correlation_p_value(r, n) - via_t).abs() < 1e-14);
    }

    #[test]
    fn constant_input_is_degenerate() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }
}
