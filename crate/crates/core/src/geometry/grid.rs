//! Periodic grid indexing and spectral (FFT) differentiation.
//!
//! The torus is sampled on a uniform grid in the real coordinates
//! (u_1..u_n, v_1..v_n) ∈ [0,1)^{2n}, last axis fastest. Derivatives are
//! exact on band-limited fields: forward FFT, multiply by 2πi·m per axis,
//! inverse FFT. The Nyquist derivative mode is zeroed so real fields stay
//! real.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

use crate::linalg::{c, ZERO};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: Vec<usize>,
    pub strides: Vec<usize>,
    pub npoints: usize,
}

impl Grid {
    pub fn new(dims: Vec<usize>) -> Self {
        let mut strides = vec![1usize; dims.len()];
        for ax in (0..dims.len().saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * dims[ax + 1];
        }
        let npoints = dims.iter().product();
        Grid {
            dims,
            strides,
            npoints,
        }
    }

    #[inline]
    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(x, s)| x * s)
            .sum()
    }

    #[inline]
    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for ax in 0..self.dims.len() {
            out[ax] = idx / self.strides[ax];
            idx %= self.strides[ax];
        }
        out
    }

    /// Signed integer frequency for grid index k on an axis of length n.
    #[inline]
    pub fn freq(k: usize, n: usize) -> i64 {
        if k <= n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// In-place FFT along one axis over the whole field. `inverse` applies
    /// the normalized inverse transform.
    pub fn fft_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let n = self.dims[axis];
        let stride = self.strides[axis];
        let fft = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            if inverse {
                p.plan_fft_inverse(n)
            } else {
                p.plan_fft_forward(n)
            }
        });
        let mut line = vec![ZERO; n];
        let nlines = self.npoints / n;
        let block = stride * n;
        for l in 0..nlines {
            let base = (l / stride) * block + (l % stride);
            for k in 0..n {
                line[k] = data[base + k * stride];
            }
            fft.process(&mut line);
            if inverse {
                let inv_n = 1.0 / n as f64;
                for k in 0..n {
                    data[base + k * stride] = line[k] * inv_n;
                }
            } else {
                for k in 0..n {
                    data[base + k * stride] = line[k];
                }
            }
        }
    }

    pub fn fft_all(&self, data: &mut [Complex64], inverse: bool) {
        for axis in 0..self.dims.len() {
            self.fft_axis(data, axis, inverse);
        }
    }

    /// Multiply a spectrum in place by `symbol(m)` where `m` is the signed
    /// frequency vector of the mode.
    pub fn apply_symbol(&self, spec: &mut [Complex64], symbol: impl Fn(&[i64]) -> Complex64) {
        let naxes = self.dims.len();
        let mut m = vec![0i64; naxes];
        for idx in 0..self.npoints {
            let mut rem = idx;
            for ax in 0..naxes {
                let k = rem / self.strides[ax];
                rem %= self.strides[ax];
                m[ax] = Self::freq(k, self.dims[ax]);
            }
            spec[idx] *= symbol(&m);
        }
    }

    /// Derivative along a real axis: F^{-1}[ 2πi m_axis · F[f] ], with the
    /// Nyquist mode dropped.
    pub fn derivative_axis(&self, data: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut spec = data.to_vec();
        self.fft_all(&mut spec, false);
        let nax = self.dims[axis] as i64;
        self.apply_symbol(&mut spec, |m| {
            let f = m[axis];
            if 2 * f == nax {
                ZERO
            } else {
                c(0.0, 2.0 * std::f64::consts::PI * f as f64)
            }
        });
        self.fft_all(&mut spec, true);
        spec
    }

    /// Mean value over the grid (the k = 0 Fourier coefficient).
    pub fn mean(&self, data: &[Complex64]) -> Complex64 {
        data.iter().sum::<Complex64>() / c(self.npoints as f64, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_roundtrip() {
        let g = Grid::new(vec![8, 4]);
        let orig: Vec<Complex64> = (0..g.npoints)
            .map(|i| c((i % 7) as f64, ((i * 3) % 5) as f64))
            .collect();
        let mut data = orig.clone();
        g.fft_all(&mut data, false);
        g.fft_all(&mut data, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_of_mode() {
        // f = exp(2πi·(2u)) on axis 0 ⇒ ∂_u f = 4πi f
        let g = Grid::new(vec![8, 8]);
        let mut f = vec![ZERO; g.npoints];
        for idx in 0..g.npoints {
            let x = g.coords(idx);
            let u = x[0] as f64 / 8.0;
            f[idx] = (c(0.0, 2.0 * std::f64::consts::PI * 2.0 * u)).exp();
        }
        let df = g.derivative_axis(&f, 0);
        for idx in 0..g.npoints {
            let expect = c(0.0, 4.0 * std::f64::consts::PI) * f[idx];
            assert!((df[idx] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid::new(vec![4, 4, 4, 4]);
        let f = vec![c(1.3, -0.4); g.npoints];
        let df = g.derivative_axis(&f, 2);
        for v in df {
            assert!(v.norm() < 1e-13);
        }
    }
}
