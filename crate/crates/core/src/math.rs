// SPDX-License-Identifier: Apache-2.0

//! `base^n` for integer `n`, accurate to the last bit.

/// Double-double product, renormalized.
fn mul_dd((ah, al): (f64, f64), (bh, bl): (f64, f64)) -> (f64, f64) {
    let p = ah * bh;
    let e = libm::fma(ah, bh, -p) + (ah * bl + al * bh);
    let s = p + e;
    (s, e - (s - p))
}

/// Square-and-multiply carried in double-double precision and rounded once
/// at the end. The single-rounding `pow` from libm is off by one ulp for some
/// exponents; schedules compared against their closed form need the
/// correctly rounded value.
pub(crate) fn powi(base: f64, n: u32) -> f64 {
    let mut acc = (1.0, 0.0);
    let mut sq = (base, 0.0);
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            acc = mul_dd(acc, sq);
        }
        k >>= 1;
        if k > 0 {
            sq = mul_dd(sq, sq);
        }
    }
    acc.0 + acc.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert_eq!(powi(0.99, 0), 1.0);
        assert_eq!(powi(0.99, 1), 0.99);
        assert_eq!(powi(2.0, 10), 1024.0);
        assert_eq!(powi(0.0, 3), 0.0);
    }

    #[test]
    fn correctly_rounded_where_libm_is_not() {
        // values checked against a 300-bit evaluation
        assert_eq!(powi(0.99, 19), 0.8261686238355866);
        assert_eq!(powi(0.99, 90), 0.4047319726783238);
    }
}
