//! CPU implementations: straight loops over the frame.

use crate::model::Elements;

use super::float::{add, mul};
use super::Kernel;

pub fn run(kernel: &Kernel, input: &Elements) -> Elements {
    match (kernel, input) {
        (Kernel::Passthrough, x) => x.clone(),
        (Kernel::Scale { gain }, Elements::F64(x)) => {
            let mut y = Vec::with_capacity(x.len());
            for &v in x {
                y.push(mul(v, *gain));
            }
            Elements::F64(y)
        }
        (Kernel::Offset { delta }, Elements::F64(x)) => {
            let mut y = x.clone();
            for v in &mut y {
                *v = add(*v, *delta);
            }
            Elements::F64(y)
        }
        (Kernel::Fir { taps }, Elements::F64(x)) => {
            let mut y = vec![0.0; x.len()];
            for (i, out) in y.iter_mut().enumerate() {
                let reach = taps.len().min(i + 1);
                let mut acc = mul(x[i], taps[0]);
                for k in 1..reach {
                    acc = add(acc, mul(x[i - k], taps[k]));
                }
                *out = acc;
            }
            Elements::F64(y)
        }
        (Kernel::SaturatingScale { gain }, Elements::I32(x)) => Elements::I32(
            x.iter()
                .map(|&v| gain.saturating_mul(v as i64).clamp(i32::MIN as i64, i32::MAX as i64) as i32)
                .collect(),
        ),
        _ => unreachable!("element type checked by caller"),
    }
}
