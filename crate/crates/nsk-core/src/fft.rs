//! Internal n-dimensional FFT built on 1-D complex transforms.
//!
//! The forward transform uses the negative-exponent convention and carries
//! the `1/n^dim` normalization, so coefficients approximate Fourier-series
//! coefficients on the box; the inverse uses the positive exponent and no
//! scaling. `inverse(forward(x)) == x` up to rounding.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::grid::GridSpec;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if forward {
                    planner.plan_fft_forward(n)
                } else {
                    planner.plan_fft_inverse(n)
                }
            })
            .clone()
    })
}

/// FFT along every axis of row-major data with shape `[n; dim]`.
pub(crate) fn transform(grid: &GridSpec, data: &mut [Complex64], forward: bool) {
    let n = grid.n;
    let total = grid.len();
    assert_eq!(data.len(), total, "data length must match the grid");

    let fft = plan(n, forward);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];

    let strides = grid.strides();
    for ax in 0..grid.dim {
        let stride = strides[ax];
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
        } else {
            // Lines along `ax` start at every index whose `ax` bin is zero.
            let outer = total / (n * stride);
            for o in 0..outer {
                let block = o * n * stride;
                for inner in 0..stride {
                    let base = block + inner;
                    for j in 0..n {
                        line[j] = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..n {
                        data[base + j * stride] = line[j];
                    }
                }
            }
        }
    }

    if forward {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn roundtrip(dim: usize, n: usize) {
        let grid = GridSpec::new(dim, n, 1.0).unwrap();
        let mut data: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let orig = data.clone();
        transform(&grid, &mut data, true);
        transform(&grid, &mut data, false);
        let err = data
            .iter()
            .zip(&orig)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "roundtrip error {err} for dim={dim} n={n}");
    }

    #[test]
    fn roundtrip_all_dims() {
        roundtrip(1, 16);
        roundtrip(2, 16);
        roundtrip(3, 8);
    }

    #[test]
    fn forward_of_pure_mode_is_unit_coefficient() {
        // f(x) = e^{i xi_k x} must transform to a single unit coefficient.
        let grid = GridSpec::new(1, 16, 2.0 * std::f64::consts::PI).unwrap();
        let k = 3i64;
        let mut data: Vec<Complex64> = (0..16)
            .map(|j| {
                let x = grid.spacing() * j as f64;
                Complex64::new(0.0, k as f64 * x).exp()
            })
            .collect();
        transform(&grid, &mut data, true);
        for i in 0..16 {
            let expected = if grid.signed_mode(i) == k { 1.0 } else { 0.0 };
            assert!(
                (data[i] - Complex64::new(expected, 0.0)).norm() < 1e-13,
                "bin {i}: {:?}",
                data[i]
            );
        }
    }
}
