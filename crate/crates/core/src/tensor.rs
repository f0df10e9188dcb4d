use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a [`Tensor4`] in (batch, channels, height, width) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item.
    pub const fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn with_batch(&self, n: usize) -> Self {
        Shape { n, ..*self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense 4-D array of `f64` in row-major (n, c, h, w) order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape) -> Self {
        Tensor4 {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor4 {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.len() != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        if shape.is_empty() {
            return Err(Error::shape("tensor", format!("degenerate shape {shape}")));
        }
        let t = Tensor4 { shape, data };
        t.debug_check_finite("tensor");
        Ok(t)
    }

    /// A 1×1×h×w tensor from nested rows; handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::shape("tensor", "ragged rows"));
        }
        Tensor4::from_vec(Shape::new(1, 1, h, w), rows.concat())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let i = self.index(n, c, h, w);
        self.data[i] = v;
    }

    /// Slice holding batch item `n`.
    pub fn item(&self, n: usize) -> &[f64] {
        let len = self.shape.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.shape.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Slice holding channel plane (n, c).
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Copies batch item `n` out as a standalone 1×c×h×w tensor.
    pub fn select(&self, n: usize) -> Tensor4 {
        Tensor4 {
            shape: self.shape.with_batch(1),
            data: self.item(n).to_vec(),
        }
    }

    /// Concatenates single-or-multi item tensors along the batch axis.
    pub fn stack(items: &[&Tensor4]) -> Result<Tensor4> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut n = 0;
        for t in items {
            let ts = t.shape;
            if (ts.c, ts.h, ts.w) != (s.c, s.h, s.w) {
                return Err(Error::shape("stack", format!("{ts} vs {s}")));
            }
            data.extend_from_slice(&t.data);
            n += ts.n;
        }
        Ok(Tensor4 {
            shape: s.with_batch(n),
            data,
        })
    }

    /// Same data, new shape of equal length.
    pub fn reshape(self, shape: Shape) -> Result<Tensor4> {
        if shape.len() != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{} into {shape}", self.shape),
            ));
        }
        Ok(Tensor4 {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add", format!("{} vs {}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    #[inline]
    pub(crate) fn debug_check_finite(&self, op: &str) {
        debug_assert!(self.is_finite(), "non-finite value produced by {op}");
    }

    pub(crate) fn from_parts_unchecked(shape: Shape, data: Vec<f64>) -> Tensor4 {
        debug_assert_eq!(shape.len(), data.len());
        let t = Tensor4 { shape, data };
        t.debug_check_finite("op");
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Tensor4::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::from_vec(Shape::new(2, 2, 2, 3), (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(t.at(1, 0, 1, 2), 17.0);
        assert_eq!(t.plane(1, 1), &[18.0, 19.0, 20.0, 21.0, 22.0, 23.0]);
        assert_eq!(t.select(1).data()[0], 12.0);
    }

    #[test]
    fn stack_then_select() {
        let a = Tensor4::filled(Shape::new(1, 1, 2, 2), 1.0);
        let b = Tensor4::filled(Shape::new(1, 1, 2, 2), 2.0);
        let s = Tensor4::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape().n, 2);
        assert_eq!(s.select(1), b);
    }
}
