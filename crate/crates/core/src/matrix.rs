use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::F16;

/// Row-major matrix of binary16 codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fp16Matrix {
    rows: usize,
    cols: usize,
    data: Vec<F16>,
}

impl Fp16Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Fp16Matrix {
            rows,
            cols,
            data: vec![F16::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F16>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "fp16 matrix data length",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Fp16Matrix { rows, cols, data })
    }

    /// Rounds each value to binary16.
    pub fn from_f32(rows: usize, cols: usize, values: &[f32]) -> Result<Self> {
        Self::from_vec(rows, cols, values.iter().map(|&v| F16::from_f32(v)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, F16::ONE);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[F16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<F16> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> F16 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: F16) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[F16] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|h| h.to_f32()).collect()
    }
}

/// Row-major matrix of binary32 values, used for split-K partial sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Fp32Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Fp32Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Fp32Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "fp32 matrix data length",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Fp32Matrix { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Fp32Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }
}
