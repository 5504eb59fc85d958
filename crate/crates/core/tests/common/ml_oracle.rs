//! Arbitrary-precision Mittag-Leffler reference on the negative real axis.
//!
//! Two independent high-precision routes: the defining power series with a
//! working precision that absorbs its cancellation (which grows like
//! `exp(x^{1/alpha})`), and the algebraic asymptotic expansion once its
//! optimally-truncated remainder drops below 1e-55. The switchover at
//! `x^{1/alpha} = 135` keeps both sides at >= 50 accurate digits.

use rug::ops::Pow;
use rug::Float;

/// 448 bits ~ 134 decimal digits: >= 59 digits of series cancellation at
/// the switchover plus a >= 50 digit result and guard digits.
const PREC: u32 = 448;

fn series(alpha: f64, beta: f64, z: f64) -> Float {
    let a = Float::with_val(PREC, alpha);
    let b = Float::with_val(PREC, beta);
    let zz = Float::with_val(PREC, z);
    let mut sum = Float::with_val(PREC, 0);
    let mut zk = Float::with_val(PREC, 1);
    let tiny = Float::with_val(PREC, Float::parse("1e-120").unwrap());
    for k in 0..1_000_000u64 {
        let arg = Float::with_val(PREC, &a * k) + &b;
        let term = Float::with_val(PREC, &zk / arg.gamma());
        sum += &term;
        zk *= &zz;
        let bound = Float::with_val(PREC, &tiny * (1u32 + Float::with_val(PREC, sum.abs_ref())));
        if k > 10 && Float::with_val(PREC, term.abs_ref()) < bound {
            break;
        }
    }
    sum
}

fn asymptotic(alpha: f64, beta: f64, z: f64) -> Float {
    let a = Float::with_val(PREC, alpha);
    let b = Float::with_val(PREC, beta);
    let zz = Float::with_val(PREC, z);
    let mut sum = Float::with_val(PREC, 0);
    let mut last: Option<Float> = None;
    for k in 1..400i32 {
        let g = Float::with_val(PREC, &b - Float::with_val(PREC, &a * k)).gamma();
        if !g.is_finite() {
            continue; // gamma pole: the term vanishes
        }
        let term = -Float::with_val(PREC, (&zz).pow(-k)) / g;
        let mag = Float::with_val(PREC, term.abs_ref());
        if let Some(ref l) = last {
            if mag > *l && !l.is_zero() {
                break; // past the optimal truncation point
            }
        }
        sum += &term;
        if !mag.is_zero() {
            last = Some(mag.clone());
        }
        if mag < 1e-80 {
            break;
        }
    }
    sum
}

/// `E_{alpha,beta}(z)` for `z <= 0` at >= 50 significant digits, rounded
/// to f64.
pub fn ml_reference(alpha: f64, beta: f64, z: f64) -> f64 {
    assert!(alpha > 0.0 && alpha <= 1.0 && beta > 0.0 && z <= 0.0);
    let x = -z;
    if x == 0.0 {
        return Float::with_val(PREC, beta).gamma().recip().to_f64();
    }
    if x.powf(1.0 / alpha) > 135.0 {
        asymptotic(alpha, beta, z).to_f64()
    } else {
        series(alpha, beta, z).to_f64()
    }
}
