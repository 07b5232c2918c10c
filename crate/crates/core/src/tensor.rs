//! Dense token maps and matrices.
//!
//! Storage is row-major: a [`TokenMap`] is laid out (row, column, channel)
//! and a [`FlatMatrix`] (row, column). With that layout, flattening a token
//! map into a `(h*w) x c` matrix is a plain copy of the buffer.

use serde::{Deserialize, Serialize};

use crate::counter::OpCount;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::schedule::PyramidSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TokenMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::dims(format!(
                "token map dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::dims(format!(
                "token map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty token map");
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data).expect("from_fn shape")
    }

    pub fn random(height: usize, width: usize, channels: usize, bound: f64, rng: &mut Rng) -> Self {
        let data = rng.uniform_vec(height * width * channels, -bound, bound);
        Self::new(height, width, channels, data).expect("random shape")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        self.data[(i * self.width + j) * self.channels + c] = v;
    }

    /// Channel vector of the token at `(i, j)`.
    pub fn token(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.width + j) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.data)
    }

    /// Element-wise sum; shapes must agree.
    pub fn add(&self, other: &TokenMap, ops: &mut OpCount) -> Result<TokenMap> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        ops.add(self.data.len());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(TokenMap { data, ..*self })
    }

    /// Reinterprets the map as an `(h*w) x c` matrix in raster order.
    pub fn to_matrix(&self) -> FlatMatrix {
        FlatMatrix { rows: self.height * self.width, cols: self.channels, data: self.data.clone() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FlatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dims(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dims("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn random(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Self {
        Self::new(rows, cols, rng.uniform_vec(rows * cols, -bound, bound)).expect("random shape")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * rhs`, accumulating over the inner index in ascending order.
    pub fn matmul(&self, rhs: &FlatMatrix, ops: &mut OpCount) -> Result<FlatMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let acc = &mut out[i * m..(i + 1) * m];
            let a_row = &self.data[i * k..(i + 1) * k];
            // First term initializes so the add count is exactly (k-1) per entry.
            let b0 = &rhs.data[..m];
            for (o, b) in acc.iter_mut().zip(b0) {
                *o = a_row[0] * b;
            }
            for (p, &a) in a_row.iter().enumerate().skip(1) {
                let b_row = &rhs.data[p * m..(p + 1) * m];
                for (o, b) in acc.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        ops.mul(n * k * m);
        ops.add(n * (k - 1) * m);
        Ok(FlatMatrix { rows: n, cols: m, data: out })
    }

    /// Views the matrix as an `h x w x cols` token map.
    pub fn to_token_map(&self, height: usize, width: usize) -> Result<TokenMap> {
        if height * width != self.rows {
            return Err(Error::dims(format!(
                "{} rows cannot form a {height}x{width} map",
                self.rows
            )));
        }
        TokenMap::new(height, width, self.cols, self.data.clone())
    }
}

/// Concatenates token maps into one matrix: map blocks in list order, tokens
/// within a block in raster order.
pub fn flatten(maps: &[TokenMap]) -> Result<FlatMatrix> {
    let first = maps.first().ok_or_else(|| Error::dims("cannot flatten an empty list"))?;
    let d = first.channels();
    let mut rows = 0;
    for (idx, m) in maps.iter().enumerate() {
        if m.channels() != d {
            return Err(Error::dims(format!(
                "map {idx} has {} channels, expected {d}",
                m.channels()
            )));
        }
        rows += m.height() * m.width();
    }
    let mut data = Vec::with_capacity(rows * d);
    for m in maps {
        data.extend_from_slice(m.data());
    }
    FlatMatrix::new(rows, d, data)
}

/// Splits the first `k` scales of `schedule` back out of a flattened matrix.
pub fn reshape_to_pyramid(
    m: &FlatMatrix,
    schedule: &PyramidSchedule,
    k: usize,
) -> Result<Vec<TokenMap>> {
    if k == 0 || k > schedule.num_scales() {
        return Err(Error::dims(format!(
            "scale count {k} outside 1..={}",
            schedule.num_scales()
        )));
    }
    let expected = schedule.token_count(k);
    if m.rows() != expected {
        return Err(Error::dims(format!(
            "{} rows do not match the {expected} tokens of {k} scales",
            m.rows()
        )));
    }
    let d = m.cols();
    let mut maps = Vec::with_capacity(k);
    let mut offset = 0;
    for r in 0..k {
        let side = schedule.side(r);
        let len = side * side * d;
        maps.push(TokenMap::new(side, side, d, m.data()[offset..offset + len].to_vec())?);
        offset += len;
    }
    Ok(maps)
}

/// Anything with a shape and a flat buffer of entries.
pub trait Entries {
    fn shape_key(&self) -> (usize, usize, usize);
    fn values(&self) -> &[f64];
}

impl Entries for TokenMap {
    fn shape_key(&self) -> (usize, usize, usize) {
        self.shape()
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

impl Entries for FlatMatrix {
    fn shape_key(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, 1)
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

pub fn inf_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max |a - b|` over entries of two equally shaped tensors.
pub fn inf_norm_diff<T: Entries>(a: &T, b: &T) -> Result<f64> {
    if a.shape_key() != b.shape_key() {
        return Err(Error::dims(format!(
            "inf-norm of differently shaped tensors {:?} and {:?}",
            a.shape_key(),
            b.shape_key()
        )));
    }
    Ok(a.values().iter().zip(b.values()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
}

/// Saturates every entry into `[-r_bound, r_bound]`.
pub fn clip_entries(m: &FlatMatrix, r_bound: f64) -> FlatMatrix {
    assert!(r_bound > 0.0, "clip bound must be positive");
    let data = m.data.iter().map(|v| v.clamp(-r_bound, r_bound)).collect();
    FlatMatrix { data, ..*m }
}
