//! Cached real 2-D FFT plans.
//!
//! A field on an `n`-mode grid is synthesized onto an `m x m` collocation grid
//! (`m = n * pad`) and analyzed back with truncation to the retained modes.
//! Only the `n/2` lowest `kx` columns ever carry data, so the column transforms
//! are restricted to those.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use super::field::SpectralField;
use super::GridSpec;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub(crate) struct Transform2d {
    m: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Transform2d>>>> = OnceLock::new();

/// Plan for an `m x m` grid, shared between threads.
pub(crate) fn plan(m: usize) -> Arc<Transform2d> {
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(m)
        .or_insert_with(|| {
            let mut real = RealFftPlanner::<f64>::new();
            let mut cplx = FftPlanner::<f64>::new();
            Arc::new(Transform2d {
                m,
                r2c: real.plan_fft_forward(m),
                c2r: real.plan_fft_inverse(m),
                col_fwd: cplx.plan_fft_forward(m),
                col_inv: cplx.plan_fft_inverse(m),
            })
        })
        .clone()
}

impl Transform2d {
    /// Evaluates `field` at the `m x m` collocation points, row-major `[iy][ix]`.
    pub(crate) fn synthesize(&self, field: &SpectralField) -> Vec<f64> {
        let grid = field.grid();
        let m = self.m;
        let hc = m / 2 + 1;
        let ncol = grid.n() / 2;
        let gc = grid.cols();
        let coeffs = field.coeffs();
        // column-major: columns[kx * m + row]
        let mut columns = vec![ZERO; ncol * m];
        for row in 0..grid.n() {
            let ky = grid.signed(row);
            if ky.unsigned_abs() as usize >= grid.n() / 2 {
                continue;
            }
            let target = ky.rem_euclid(m as i64) as usize;
            for kx in 0..ncol {
                columns[kx * m + target] = coeffs[row * gc + kx];
            }
        }
        let mut scratch = vec![ZERO; self.col_inv.get_inplace_scratch_len()];
        self.col_inv.process_with_scratch(&mut columns, &mut scratch);
        let mut out = vec![0.0; m * m];
        let mut row = vec![ZERO; hc];
        let mut rscratch = self.c2r.make_scratch_vec();
        for (r, dst) in out.chunks_exact_mut(m).enumerate() {
            for kx in 0..ncol {
                row[kx] = columns[kx * m + r];
            }
            for c in &mut row[ncol..] {
                *c = ZERO;
            }
            row[0].im = 0.0;
            self.c2r
                .process_with_scratch(&mut row, dst, &mut rscratch)
                .expect("c2r buffer sizes are fixed by the plan");
        }
        out
    }

    /// Forward transform of collocation values (consumed as scratch) with
    /// truncation onto `grid`'s retained modes. `coeff(0)` is the grid mean.
    pub(crate) fn analyze(&self, data: &mut [f64], grid: GridSpec) -> SpectralField {
        let m = self.m;
        debug_assert_eq!(data.len(), m * m);
        let hc = m / 2 + 1;
        let ncol = grid.n() / 2;
        let mut columns = vec![ZERO; ncol * m];
        let mut row = vec![ZERO; hc];
        let mut rscratch = self.r2c.make_scratch_vec();
        for (r, src) in data.chunks_exact_mut(m).enumerate() {
            self.r2c
                .process_with_scratch(src, &mut row, &mut rscratch)
                .expect("r2c buffer sizes are fixed by the plan");
            for kx in 0..ncol {
                columns[kx * m + r] = row[kx];
            }
        }
        let mut scratch = vec![ZERO; self.col_fwd.get_inplace_scratch_len()];
        self.col_fwd.process_with_scratch(&mut columns, &mut scratch);
        let scale = 1.0 / (m * m) as f64;
        let mut out = SpectralField::zeros(grid);
        let gc = grid.cols();
        let n = grid.n();
        {
            let coeffs = out.coeffs_mut();
            for r in 0..n {
                let ky = grid.signed(r);
                if ky.unsigned_abs() as usize >= n / 2 {
                    continue;
                }
                let src = ky.rem_euclid(m as i64) as usize;
                for kx in 0..ncol {
                    coeffs[r * gc + kx] = columns[kx * m + src] * scale;
                }
            }
        }
        out.enforce_hermitian();
        out
    }
}
