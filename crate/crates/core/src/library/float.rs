//! Float arithmetic with pinned NaN propagation.
//!
//! IEEE leaves the choice of payload open when both operands are NaN, and
//! the compiler may swap the operands of a commutative op, so two
//! implementations of the same formula can disagree on NaN bits. These
//! helpers return the first NaN operand unchanged instead, which makes every
//! implementation agree and keeps a NaN sample's bits intact through a unit
//! gain.

#[inline]
pub fn mul(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        a
    } else if b.is_nan() {
        b
    } else {
        a * b
    }
}

#[inline]
pub fn add(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        a
    } else if b.is_nan() {
        b
    } else {
        a + b
    }
}
