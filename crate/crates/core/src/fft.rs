//! Minimal 2-D FFT on square row-major grids, shared by the correlation
//! module and the spectral preconditioner of the homogenization solver.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Planned forward/inverse transforms for one grid edge length.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn edge(&self) -> usize {
        self.n
    }

    /// In-place unnormalized forward transform of an `n x n` row-major grid.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// In-place unnormalized inverse transform (scale by `1/(n*n)` to invert
    /// a forward transform).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "grid size mismatch");
        // Rows first.
        for row in data.chunks_exact_mut(n) {
            fft.process(row);
        }
        // Columns via transpose / rows / transpose back.
        transpose_square(data, n);
        for row in data.chunks_exact_mut(n) {
            fft.process(row);
        }
        transpose_square(data, n);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

thread_local! {
    static PLAN_CACHE: std::cell::RefCell<std::collections::HashMap<usize, std::rc::Rc<Fft2>>> =
        std::cell::RefCell::new(std::collections::HashMap::new());
}

/// Runs `f` with a cached plan for edge length `n` (plans are reused per
/// thread; planning a 2-D FFT is much more expensive than executing one).
pub fn with_plan<R>(n: usize, f: impl FnOnce(&Fft2) -> R) -> R {
    let plan = PLAN_CACHE.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| std::rc::Rc::new(Fft2::new(n)))
            .clone()
    });
    f(&plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_roundtrip() {
        let n = 12;
        let fft = Fft2::new(n);
        let orig: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.37).cos()))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        let scale = (n * n) as f64;
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / scale - b).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dft_on_small_grid() {
        let n = 4;
        let fft = Fft2::new(n);
        let input: Vec<Complex64> = (0..n * n).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let mut data = input.clone();
        fft.forward(&mut data);

        let tau = std::f64::consts::TAU;
        for k1 in 0..n {
            for k2 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for x1 in 0..n {
                    for x2 in 0..n {
                        let phase = -tau * ((k1 * x1 + k2 * x2) as f64) / n as f64;
                        acc += input[x1 * n + x2] * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                assert!((data[k1 * n + k2] - acc).norm() < 1e-9);
            }
        }
    }
}
