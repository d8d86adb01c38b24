//! Simulated FPGA datapaths.
//!
//! Each call streams the frame through `lanes` parallel lanes one beat at a
//! time. The FIR datapath keeps a tap delay line across beats and reduces the
//! tap products along a systolic adder chain, which fixes the accumulation
//! order to ascending tap index.

use crate::model::Elements;

use super::float::{add, mul};
use super::Kernel;

pub fn run(kernel: &Kernel, input: &Elements, lanes: usize) -> Elements {
    assert!(lanes >= 1, "datapath needs at least one lane");
    match (kernel, input) {
        (Kernel::Passthrough, x) => x.clone(),
        (Kernel::Scale { gain }, Elements::F64(x)) => Elements::F64(beats(x, lanes, |_, v| mul(v, *gain))),
        (Kernel::Offset { delta }, Elements::F64(x)) => Elements::F64(beats(x, lanes, |_, v| add(v, *delta))),
        (Kernel::Fir { taps }, Elements::F64(x)) => Elements::F64(fir(taps, x, lanes)),
        (Kernel::SaturatingScale { gain }, Elements::I32(x)) => {
            let gain = *gain;
            Elements::I32(beats(x, lanes, move |_, v| {
                let wide = gain.saturating_mul(v as i64);
                wide.max(i32::MIN as i64).min(i32::MAX as i64) as i32
            }))
        }
        _ => unreachable!("element type checked by caller"),
    }
}

/// Runs an element-wise lane function beat by beat. The lane function gets
/// the lane index and the element in that lane.
fn beats<T: Copy, U>(x: &[T], lanes: usize, lane_fn: impl Fn(usize, T) -> U) -> Vec<U> {
    let mut out = Vec::with_capacity(x.len());
    for beat in x.chunks(lanes) {
        out.extend(beat.iter().enumerate().map(|(lane, &v)| lane_fn(lane, v)));
    }
    out
}

fn fir(taps: &[f64], x: &[f64], lanes: usize) -> Vec<f64> {
    let history = taps.len() - 1;
    // Delay line: the last `history` samples of the previous beat followed by
    // the current beat. Slots before the start of the frame are invalid.
    let mut line: Vec<Option<f64>> = vec![None; history];
    let mut out = Vec::with_capacity(x.len());
    for beat in x.chunks(lanes) {
        line.extend(beat.iter().copied().map(Some));
        for lane in 0..beat.len() {
            let head = history + lane;
            let mut acc = mul(line[head].expect("current sample"), taps[0]);
            for (k, &h) in taps.iter().enumerate().skip(1) {
                if let Some(sample) = line[head - k] {
                    acc = add(acc, mul(sample, h));
                }
            }
            out.push(acc);
        }
        line.drain(..beat.len());
    }
    out
}
