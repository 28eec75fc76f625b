//! Two-dimensional FFT over row-major complex arrays (unnormalized).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Transform every row of a `rows×cols` array in place.
pub fn fft_rows(data: &mut [Complex64], cols: usize, inverse: bool) {
    plan(cols, inverse).process(data);
}

/// Blocked transpose of a `rows×cols` array into `out` (`cols×rows`).
fn transpose(src: &[Complex64], out: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Transform every column of a `rows×cols` array in place.
pub fn fft_cols(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
    transpose(data, &mut buf, rows, cols);
    plan(rows, inverse).process(&mut buf);
    transpose(&buf, data, cols, rows);
}

pub fn fft2(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    fft_rows(data, cols, inverse);
    fft_cols(data, rows, cols, inverse);
}
