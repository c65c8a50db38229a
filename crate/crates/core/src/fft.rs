//! Unitary discrete Fourier transforms. Power-of-two lengths use an
//! iterative radix-2 FFT; other lengths fall back to direct evaluation,
//! which is also what the tests compare the fast path against.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn sign<T: Real>(self) -> T {
        match self {
            Direction::Forward => -T::one(),
            Direction::Inverse => T::one(),
        }
    }
}

// exp(sign * 2 pi i k / n), reduced so large k keeps full accuracy
fn twiddle<T: Real>(k: usize, n: usize, sign: T) -> Complex<T> {
    let k = k % n;
    let angle = sign * T::TAU() * T::of(k) / T::of(n);
    Complex::new(angle.cos(), angle.sin())
}

/// Direct O(n^2) evaluation with unitary `1/sqrt(n)` scaling.
pub fn dft_dense<T: Real>(x: &[Complex<T>], dir: Direction) -> Vec<Complex<T>> {
    let n = x.len();
    if n == 0 {
        return vec![];
    }
    let sign = dir.sign::<T>();
    let scale = T::of(n).sqrt().recip();
    (0..n)
        .map(|k| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (j, &v) in x.iter().enumerate() {
                acc += v * twiddle::<T>(j * k, n, sign);
            }
            acc * scale
        })
        .collect()
}

fn radix2<T: Real>(data: &mut [Complex<T>], dir: Direction) {
    let n = data.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            data.swap(i, j);
        }
    }
    let sign = dir.sign::<T>();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let w: Vec<Complex<T>> = (0..half).map(|k| twiddle(k, len, sign)).collect();
        for chunk in data.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for k in 0..half {
                let t = hi[k] * w[k];
                hi[k] = lo[k] - t;
                lo[k] += t;
            }
        }
        len <<= 1;
    }
    let scale = T::of(n).sqrt().recip();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Unitary 1D transform in place.
pub fn fft_in_place<T: Real>(data: &mut [Complex<T>], dir: Direction) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(data, dir);
    } else {
        let out = dft_dense(data, dir);
        data.copy_from_slice(&out);
    }
}

pub fn fft<T: Real>(x: &[Complex<T>], dir: Direction) -> Vec<Complex<T>> {
    let mut out = x.to_vec();
    fft_in_place(&mut out, dir);
    out
}

/// Unitary 2D transform of a row-major `h x w` array: rows, then columns.
pub fn fft2<T: Real>(x: &[Complex<T>], h: usize, w: usize, dir: Direction) -> Result<Vec<Complex<T>>> {
    if x.len() != h * w {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            found: x.len(),
        });
    }
    let mut out = x.to_vec();
    for row in out.chunks_exact_mut(w.max(1)) {
        fft_in_place(row, dir);
    }
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = out[i * w + j];
        }
        fft_in_place(&mut col, dir);
        for i in 0..h {
            out[i * w + j] = col[i];
        }
    }
    Ok(out)
}
