//! Defining semantics of the built-in kinds, written directly from their
//! formulas. Every implementation must agree with these bit for bit.

use crate::model::Elements;

use super::float::{add, mul};
use super::Kernel;

/// Applies `kernel` to `input`. The caller has checked the element type.
pub fn apply(kernel: &Kernel, input: &Elements) -> Elements {
    match (kernel, input) {
        (Kernel::Passthrough, x) => x.clone(),
        (Kernel::Scale { gain }, Elements::F64(x)) => Elements::F64(x.iter().map(|&v| mul(v, *gain)).collect()),
        (Kernel::Offset { delta }, Elements::F64(x)) => Elements::F64(x.iter().map(|&v| add(v, *delta)).collect()),
        (Kernel::Fir { taps }, Elements::F64(x)) => Elements::F64(fir(taps, x)),
        (Kernel::SaturatingScale { gain }, Elements::I32(x)) => {
            Elements::I32(x.iter().map(|&v| saturate(*gain as i128 * v as i128)).collect())
        }
        _ => unreachable!("element type checked by caller"),
    }
}

/// y[i] = sum over k of h[k]·x[i−k], where samples before the start of the
/// frame are zero and contribute no term. Terms are accumulated in ascending
/// k starting from the k = 0 product. Products take the sample as the left
/// operand, sums the running total.
fn fir(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut terms = (0..h.len()).filter_map(|k| i.checked_sub(k).map(|j| mul(x[j], h[k])));
            let first = terms.next().expect("k = 0 is always in range");
            terms.fold(first, add)
        })
        .collect()
}

fn saturate(wide: i128) -> i32 {
    wide.clamp(i32::MIN as i128, i32::MAX as i128) as i32
}
