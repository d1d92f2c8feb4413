//! Row/column 2-D FFT on top of `rustfft`, with a per-thread plan cache.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Rc<Fft2>>> = RefCell::new(HashMap::new());
}

/// Cached plan for a `width x height` transform.
pub(crate) fn plan(width: usize, height: usize) -> Rc<Fft2> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry((width, height))
            .or_insert_with(|| Rc::new(Fft2::new(width, height)))
            .clone()
    })
}

impl Fft2 {
    fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform, normalized by `1 / (width * height)`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let norm = 1.0 / (self.width * self.height) as f64;
        for v in buf.iter_mut() {
            *v *= norm;
        }
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.width * self.height);
        rows.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for x in 0..self.width {
            for y in 0..self.height {
                column[y] = buf[y * self.width + x];
            }
            cols.process(&mut column);
            for y in 0..self.height {
                buf[y * self.width + x] = column[y];
            }
        }
    }
}

/// Signed frequency index of DFT bin `k` out of `n` (`0, 1, .., -1`).
pub(crate) fn signed_index(k: usize, n: usize) -> i64 {
    if k <= (n - 1) / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Frequency of bin `k` in cycles per sample, in `[-0.5, 0.5)`.
pub(crate) fn frequency(k: usize, n: usize) -> f64 {
    signed_index(k, n) as f64 / n as f64
}
