//! Dense row-major matrices, stable reductions, and a seeded PRNG.
//!
//! The generator is xoshiro256++ seeded through SplitMix64, and Gaussian
//! draws use the Box-Muller transform (cosine branch). Both are fixed by
//! name so that seeded streams are identical on every platform.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};
use crate::fp;

/// Dense `rows x cols` matrix of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from a row-major buffer, rejecting length
    /// mismatches and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> CoreResult<Matrix> {
        if data.len() != rows * cols {
            return Err(CoreError::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { what: "matrix data" });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> CoreResult<Matrix> {
        if rows.is_empty() {
            return Err(CoreError::EmptyInput("matrix rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(CoreError::LengthMismatch {
                    what: "matrix rows",
                    left: cols,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Standard matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> CoreResult<Matrix> {
        if self.cols != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> CoreResult<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                op: "max_abs_diff",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| fp::abs(a - b))
            .fold(0.0, f64::max))
    }
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &[f64]) -> f64 {
    fp::sqrt(v.iter().map(|x| x * x).sum())
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(sum(exp(v)))` computed by subtracting the maximum before
/// exponentiating, so inputs up to magnitude ~1e4 stay finite.
pub fn stable_logsumexp(values: &[f64]) -> CoreResult<f64> {
    if values.is_empty() {
        return Err(CoreError::EmptyInput("logsumexp values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "logsumexp values",
        });
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&v| fp::exp(v - max)).sum();
    Ok(max + fp::ln(sum))
}

/// xoshiro256++ generator with SplitMix64 seeding.
///
/// A fixed seed yields the same stream on every platform; the state is
/// single-owner mutable and must not be shared without coordination.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `(0, 1]`; safe as a logarithm argument.
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` via the widening-multiply map.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// One Gaussian draw via Box-Muller (cosine branch). Always consumes
    /// two uniforms, so the stream position does not depend on `stddev`.
    pub fn gaussian(&mut self, mean: f64, stddev: f64) -> CoreResult<f64> {
        if stddev < 0.0 || !stddev.is_finite() {
            return Err(CoreError::OutOfDomain {
                what: "stddev",
                value: stddev,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let z = fp::sqrt(-2.0 * fp::ln(u1)) * fp::cos(2.0 * core::f64::consts::PI * u2);
        Ok(mean + stddev * z)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Unit vector drawn uniformly on the sphere in `R^dim`.
    pub fn unit_vector(&mut self, dim: usize) -> CoreResult<Vec<f64>> {
        loop {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(self.gaussian(0.0, 1.0)?);
            }
            let norm = vec_norm(&v);
            if norm > 1e-8 {
                for x in &mut v {
                    *x /= norm;
                }
                return Ok(v);
            }
        }
    }
}
