//! Dense N-way tensors and the multilinear algebra the factorization needs.
//!
//! Storage is first-mode-fastest: the entry at multi-index `(i_1, …, i_N)`
//! (0-based) lives at `Σ i_k · ∏_{m<k} I_m`, which is exactly `vec(·)`.
//!
//! Mode-n matricization puts `I_n` on the rows. Column `j` of the unfolding
//! collects the remaining indices with the lowest remaining mode fastest:
//! `j = Σ_{k≠n} i_k · ∏_{m<k, m≠n} I_m`. [`DenseMatrix`] is column-major, so
//! the mode-0 unfolding shares its buffer layout with the tensor itself.

use std::fmt;

use crate::error::{DcotError, Result};

/// Mode sizes `I_1 … I_N`.
#[derive(Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(DcotError::InvalidShape("a tensor needs at least one mode".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(DcotError::InvalidShape(format!("mode {} has size zero", pos + 1)));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| DcotError::InvalidShape(format!("{dims:?} overflows usize")))?;
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.0[mode]
    }

    /// Total number of entries, `∏ I_n`.
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Stride of each mode in the flat buffer.
    pub fn strides(&self) -> Vec<usize> {
        let mut acc = 1;
        self.0
            .iter()
            .map(|&d| {
                let s = acc;
                acc *= d;
                s
            })
            .collect()
    }

    pub fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.ndim() {
            return Err(DcotError::IndexOutOfRange(format!(
                "index {idx:?} has {} components, shape has {} modes",
                idx.len(),
                self.ndim()
            )));
        }
        let mut lin = 0;
        let mut stride = 1;
        for (k, (&i, &d)) in idx.iter().zip(&self.0).enumerate() {
            if i >= d {
                return Err(DcotError::IndexOutOfRange(format!(
                    "index {i} out of range for mode {} of size {d}",
                    k + 1
                )));
            }
            lin += i * stride;
            stride *= d;
        }
        Ok(lin)
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        self.0
            .iter()
            .map(|&d| {
                let i = lin % d;
                lin /= d;
                i
            })
            .collect()
    }

    /// The same shape with mode `mode` resized to `size`.
    pub fn with_dim(&self, mode: usize, size: usize) -> Result<Shape> {
        let mut dims = self.0.clone();
        dims[mode] = size;
        Shape::new(dims)
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = DcotError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Shape::new(v)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

fn check_mode(shape: &Shape, mode: usize) -> Result<()> {
    if mode >= shape.ndim() {
        Err(DcotError::ModeOutOfRange { mode, ndim: shape.ndim() })
    } else {
        Ok(())
    }
}

/// Dense real tensor in first-mode-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(DcotError::DimensionMismatch(format!(
                "shape {shape:?} needs {} entries, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        DenseTensor { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let n = shape.numel();
        DenseTensor { shape, data: vec![value; n] }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let data = (0..shape.numel()).map(|l| f(&shape.multi_index(l))).collect();
        DenseTensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.linear_index(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let l = self.shape.linear_index(idx)?;
        self.data[l] = value;
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two tensors of the same shape.
    ///
    /// Panics on shape mismatch; callers hold the shapes as invariants.
    pub fn zip_map(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map on tensors of different shape");
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &DenseTensor) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseTensor) {
        assert_eq!(self.shape, x.shape, "axpy on tensors of different shape");
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DcotError::InvalidShape(format!("matrix {rows}x{cols} is empty")));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| DcotError::InvalidShape(format!("{rows}x{cols} overflows usize")))?;
        if data.len() != n {
            return Err(DcotError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + i * n] = 1.0;
        }
        m
    }

    /// Row-major literal, handy in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(DcotError::DimensionMismatch("ragged rows".into()));
        }
        let mut data = vec![0.0; r * c];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i + j * r] = v;
            }
        }
        DenseMatrix::new(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i + i * n] = v;
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.rows] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Self {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(DcotError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = other.data[k + j * other.rows];
                if b == 0.0 {
                    continue;
                }
                let src = &self.data[k * self.rows..(k + 1) * self.rows];
                for (d, &a) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v: f64 = self.column(a).iter().zip(self.column(b)).map(|(x, y)| x * y).sum();
                g.data[a + b * n] = v;
                g.data[b + a * n] = v;
            }
        }
        g
    }

    pub fn add(&self, other: &DenseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Mode-n unfolding: `I_n × ∏_{k≠n} I_k`.
pub fn matricize(t: &DenseTensor, mode: usize) -> Result<DenseMatrix> {
    check_mode(&t.shape, mode)?;
    let rows = t.shape.dim(mode);
    let cols = t.len() / rows;
    let inner = t.shape.dims()[..mode].iter().product::<usize>();
    let block = inner * rows;
    let mut out = vec![0.0; t.len()];
    for (l, &v) in t.data.iter().enumerate() {
        let a = l % inner;
        let i = (l / inner) % rows;
        let b = l / block;
        out[i + (a + inner * b) * rows] = v;
    }
    DenseMatrix::new(rows, cols, out)
}

/// Inverse of [`matricize`] for the target shape.
pub fn fold(m: &DenseMatrix, mode: usize, target: &Shape) -> Result<DenseTensor> {
    check_mode(target, mode)?;
    let rows = target.dim(mode);
    if m.rows != rows || m.cols * rows != target.numel() {
        return Err(DcotError::DimensionMismatch(format!(
            "cannot fold a {}x{} matrix along mode {} into {target:?}",
            m.rows,
            m.cols,
            mode + 1
        )));
    }
    let inner = target.dims()[..mode].iter().product::<usize>();
    let block = inner * rows;
    let mut out = vec![0.0; target.numel()];
    for (l, slot) in out.iter_mut().enumerate() {
        let a = l % inner;
        let i = (l / inner) % rows;
        let b = l / block;
        *slot = m.data[i + (a + inner * b) * rows];
    }
    DenseTensor::new(target.clone(), out)
}

/// `t ×_n u`: replaces mode `n` of size `I_n` by `u.rows()`.
pub fn n_mode_product(t: &DenseTensor, u: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
    check_mode(&t.shape, mode)?;
    let in_dim = t.shape.dim(mode);
    if u.cols != in_dim {
        return Err(DcotError::DimensionMismatch(format!(
            "mode-{} product needs a matrix with {in_dim} columns, got {}x{}",
            mode + 1,
            u.rows,
            u.cols
        )));
    }
    let out_dim = u.rows;
    let shape = t.shape.with_dim(mode, out_dim)?;
    let inner = t.shape.dims()[..mode].iter().product::<usize>();
    let outer = t.len() / (inner * in_dim);
    let mut out = vec![0.0; shape.numel()];
    for b in 0..outer {
        let src_base = b * inner * in_dim;
        let dst_base = b * inner * out_dim;
        for j in 0..in_dim {
            let src = &t.data[src_base + j * inner..src_base + (j + 1) * inner];
            for jp in 0..out_dim {
                let w = u.data[jp + j * out_dim];
                if w == 0.0 {
                    continue;
                }
                let dst = &mut out[dst_base + jp * inner..dst_base + (jp + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    DenseTensor::new(shape, out)
}

/// `t ×_n uᵀ` without materializing the transpose.
pub fn n_mode_product_transposed(t: &DenseTensor, u: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
    check_mode(&t.shape, mode)?;
    let in_dim = t.shape.dim(mode);
    if u.rows != in_dim {
        return Err(DcotError::DimensionMismatch(format!(
            "transposed mode-{} product needs a matrix with {in_dim} rows, got {}x{}",
            mode + 1,
            u.rows,
            u.cols
        )));
    }
    let out_dim = u.cols;
    let shape = t.shape.with_dim(mode, out_dim)?;
    let inner = t.shape.dims()[..mode].iter().product::<usize>();
    let outer = t.len() / (inner * in_dim);
    let mut out = vec![0.0; shape.numel()];
    for b in 0..outer {
        let src_base = b * inner * in_dim;
        let dst_base = b * inner * out_dim;
        for jp in 0..out_dim {
            let col = u.column(jp);
            let dst = &mut out[dst_base + jp * inner..dst_base + (jp + 1) * inner];
            for (j, &w) in col.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &t.data[src_base + j * inner..src_base + (j + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    DenseTensor::new(shape, out)
}

fn check_factor_count(core: &DenseTensor, n: usize) -> Result<()> {
    if n != core.shape.ndim() {
        return Err(DcotError::DimensionMismatch(format!(
            "{} factors supplied for a {}-way core",
            n,
            core.shape.ndim()
        )));
    }
    Ok(())
}

/// `core ×_1 U^(1) ×_2 ⋯ ×_N U^(N)`.
pub fn multilinear_product(core: &DenseTensor, factors: &[DenseMatrix]) -> Result<DenseTensor> {
    check_factor_count(core, factors.len())?;
    factors.iter().enumerate().try_fold(core.clone(), |acc, (n, u)| n_mode_product(&acc, u, n))
}

/// `t ×_1 U^(1)ᵀ ⋯ ×_N U^(N)ᵀ`, the adjoint of [`multilinear_product`].
pub fn multilinear_product_transposed(t: &DenseTensor, factors: &[DenseMatrix]) -> Result<DenseTensor> {
    check_factor_count(t, factors.len())?;
    factors
        .iter()
        .enumerate()
        .try_fold(t.clone(), |acc, (n, u)| n_mode_product_transposed(&acc, u, n))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).is_some() => (r, c),
        _ => return Err(DcotError::InvalidShape("Kronecker product size overflows".into())),
    };
    let mut out = DenseMatrix::zeros(rows, cols);
    for ja in 0..a.cols {
        for jb in 0..b.cols {
            let col = ja * b.cols + jb;
            for ia in 0..a.rows {
                let av = a.get(ia, ja);
                if av == 0.0 {
                    continue;
                }
                for ib in 0..b.rows {
                    out.data[ia * b.rows + ib + col * rows] = av * b.get(ib, jb);
                }
            }
        }
    }
    Ok(out)
}

/// Frobenius inner product `⟨a, b⟩`.
pub fn frob_inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(DcotError::DimensionMismatch(format!(
            "inner product of {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

pub fn frob_norm(a: &DenseTensor) -> f64 {
    a.frob_norm()
}
