//! Sparse complex operators and normalized state vectors.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{cabs, czero, lit, Cx, Real, DROP_TOL};

/// Immutable sparse complex matrix stored in compressed-row form.
///
/// Every arithmetic operation drops entries whose magnitude falls below
/// [`DROP_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T: Real> {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Cx<T>>,
    hermitian_hint: bool,
}

impl<T: Real> Operator<T> {
    /// Builds an operator from (row, col, value) triplets. Duplicates are summed.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, Cx<T>)>,
    {
        let mut rows: Vec<Vec<(usize, Cx<T>)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.max(c) + 1 });
            }
            rows[r].push((c, v));
        }
        let mut op = Self::empty(dim);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            let start = op.indices.len();
            for (c, v) in row {
                if last == Some(c) {
                    let n = op.values.len() - 1;
                    op.values[n] += v;
                } else {
                    op.indices.push(c);
                    op.values.push(v);
                    last = Some(c);
                }
            }
            // drop after summation so cancellations vanish
            let mut w = start;
            for r in start..op.indices.len() {
                if cabs(op.values[r]) >= lit(DROP_TOL) {
                    op.indices[w] = op.indices[r];
                    op.values[w] = op.values[r];
                    w += 1;
                }
            }
            op.indices.truncate(w);
            op.values.truncate(w);
            op.indptr.push(w);
        }
        Ok(op)
    }

    fn empty(dim: usize) -> Self {
        let mut indptr = Vec::with_capacity(dim + 1);
        indptr.push(0);
        Self { dim, indptr, indices: Vec::new(), values: Vec::new(), hermitian_hint: false }
    }

    pub fn zeros(dim: usize) -> Self {
        let mut op = Self::empty(dim);
        op.indptr.resize(dim + 1, 0);
        op.hermitian_hint = true;
        op
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![T::one(); dim])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let triplets = diag.iter().enumerate().map(|(i, &d)| (i, i, Cx::new(d, T::zero())));
        let mut op = Self::from_triplets(diag.len(), triplets).expect("diagonal in range");
        op.hermitian_hint = true;
        op
    }

    pub fn from_dense(m: &DMatrix<Cx<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let n = m.nrows();
        let trips = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| (r, c, m[(r, c)]));
        Self::from_triplets(n, trips)
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &DVector<Cx<T>>, b: &DVector<Cx<T>>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
        }
        let n = a.len();
        let trips = (0..n)
            .filter(|&r| cabs(a[r]) >= lit(DROP_TOL))
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, a[r] * b[c].conj()));
        Self::from_triplets(n, trips)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    /// Marks the operator Hermitian after verifying `‖M − M†‖_max < 1e-12`.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let dev = to_max(&(&self - &self.adjoint()));
        if dev >= lit(1e-12) {
            return Err(Error::InvalidSpec(format!(
                "operator not Hermitian (deviation {:.3e})",
                crate::scalar::to_f64(dev)
            )));
        }
        self.hermitian_hint = true;
        Ok(self)
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[Cx<T>]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Cx<T>)> + '_ {
        (0..self.dim).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> Cx<T> {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => czero(),
        }
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        let herm = self.hermitian_hint && s.im == T::zero();
        let mut op = Self::from_triplets(self.dim, self.iter().map(|(r, c, v)| (r, c, v * s)))
            .expect("same dimension");
        op.hermitian_hint = herm;
        op
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(Cx::new(s, T::zero()))
    }

    pub fn adjoint(&self) -> Self {
        let mut op = Self::from_triplets(self.dim, self.iter().map(|(r, c, v)| (c, r, v.conj())))
            .expect("same dimension");
        op.hermitian_hint = self.hermitian_hint;
        op
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut op = Self::from_triplets(self.dim, self.iter().chain(other.iter()))?;
        op.hermitian_hint = self.hermitian_hint && other.hermitian_hint;
        Ok(op)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let neg = other.iter().map(|(r, c, v)| (r, c, -v));
        let mut op = Self::from_triplets(self.dim, self.iter().chain(neg))?;
        op.hermitian_hint = self.hermitian_hint && other.hermitian_hint;
        Ok(op)
    }

    /// Sparse product `self · other`.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let n = self.dim;
        let mut acc = vec![czero::<T>(); n];
        let mut mark = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut op = Self::empty(n);
        for r in 0..n {
            touched.clear();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (cols2, vals2) = other.row(k);
                for (&c, &b) in cols2.iter().zip(vals2) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = czero();
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if cabs(acc[c]) >= lit(DROP_TOL) {
                    op.indices.push(c);
                    op.values.push(acc[c]);
                }
            }
            op.indptr.push(op.indices.len());
        }
        Ok(op)
    }

    /// Kronecker product `self ⊗ other` (self is the slower index).
    pub fn kron(&self, other: &Self) -> Self {
        let m = other.dim;
        let trips = self.iter().flat_map(|(r1, c1, v1)| {
            other.iter().map(move |(r2, c2, v2)| (r1 * m + r2, c1 * m + c2, v1 * v2))
        });
        let mut op = Self::from_triplets(self.dim * m, trips).expect("kron dims consistent");
        op.hermitian_hint = self.hermitian_hint && other.hermitian_hint;
        op
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let mut c = self.try_mul(other)?.try_sub(&other.try_mul(self)?)?;
        c.hermitian_hint = false;
        Ok(c)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> T {
        to_max(self)
    }

    pub fn trace(&self) -> Cx<T> {
        (0..self.dim).map(|i| self.get(i, i)).fold(czero(), |a, b| a + b)
    }

    pub fn apply(&self, v: &DVector<Cx<T>>) -> DVector<Cx<T>> {
        assert_eq!(v.len(), self.dim, "operator/vector dimension mismatch");
        DVector::from_fn(self.dim, |r, _| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).fold(czero(), |acc, (&c, &a)| acc + a * v[c])
        })
    }

    /// Dense product `self · m`.
    pub fn mul_dense(&self, m: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
        let mut out = DMatrix::from_element(self.dim, m.ncols(), czero());
        self.mul_dense_acc(Cx::new(T::one(), T::zero()), m, &mut out);
        out
    }

    /// `out += alpha · self · m`. All-zero columns of `m` are skipped.
    pub fn mul_dense_acc(&self, alpha: Cx<T>, m: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>) {
        let n = self.dim;
        assert_eq!(m.nrows(), n, "operator/matrix dimension mismatch");
        assert_eq!(out.shape(), (n, m.ncols()), "output shape mismatch");
        let zero = czero::<T>();
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        for c in 0..m.ncols() {
            let col = &src[c * n..(c + 1) * n];
            if col.iter().all(|z| *z == zero) {
                continue;
            }
            let dcol = &mut dst[c * n..(c + 1) * n];
            for (r, d) in dcol.iter_mut().enumerate() {
                let lo = self.indptr[r];
                let hi = self.indptr[r + 1];
                if lo == hi {
                    continue;
                }
                let mut acc = zero;
                for (&k, &a) in self.indices[lo..hi].iter().zip(&self.values[lo..hi]) {
                    acc += a * col[k];
                }
                *d += alpha * acc;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<Cx<T>> {
        let mut m = DMatrix::from_element(self.dim, self.dim, czero());
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    /// Relabels basis states: entry `(r, c)` moves to `(perm[r], perm[c])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.dim);
        let mut op = Self::from_triplets(self.dim, self.iter().map(|(r, c, v)| (perm[r], perm[c], v)))
            .expect("permutation in range");
        op.hermitian_hint = self.hermitian_hint;
        op
    }

    /// Principal submatrix on the given basis indices (in that order).
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            pos[i] = k;
        }
        let trips = indices.iter().enumerate().flat_map(|(k, &r)| {
            let (cols, vals) = self.row(r);
            let pos = &pos;
            cols.iter().zip(vals).filter(move |(c, _)| pos[**c] != usize::MAX).map(move |(&c, &v)| (k, pos[c], v))
        });
        let mut op = Self::from_triplets(indices.len(), trips).expect("restriction in range");
        op.hermitian_hint = self.hermitian_hint;
        op
    }

    /// Expectation value `⟨ψ|self|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector<T>) -> Cx<T> {
        let v = self.apply(psi.amplitudes());
        psi.amplitudes().dotc(&v)
    }

    /// Matrix element `⟨a|self|b⟩`.
    pub fn matrix_element(&self, a: &DVector<Cx<T>>, b: &DVector<Cx<T>>) -> Cx<T> {
        a.dotc(&self.apply(b))
    }
}

fn to_max<T: Real>(op: &Operator<T>) -> T {
    op.values.iter().map(|&v| cabs(v)).fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// `‖a − b‖_max`.
pub fn max_abs_diff<T: Real>(a: &Operator<T>, b: &Operator<T>) -> T {
    (a - b).max_abs()
}

impl<T: Real> Add for &Operator<T> {
    type Output = Operator<T>;
    fn add(self, rhs: Self) -> Operator<T> {
        self.try_add(rhs).expect("operator dimensions must match")
    }
}

impl<T: Real> Sub for &Operator<T> {
    type Output = Operator<T>;
    fn sub(self, rhs: Self) -> Operator<T> {
        self.try_sub(rhs).expect("operator dimensions must match")
    }
}

impl<T: Real> Mul for &Operator<T> {
    type Output = Operator<T>;
    fn mul(self, rhs: Self) -> Operator<T> {
        self.try_mul(rhs).expect("operator dimensions must match")
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T: Real> {
    amplitudes: DVector<Cx<T>>,
}

impl<T: Real> StateVector<T> {
    /// Normalizes `amplitudes`; fails on a zero vector.
    pub fn new(amplitudes: DVector<Cx<T>>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm <= T::zero() || amplitudes.is_empty() {
            return Err(Error::InvalidState("zero vector cannot be normalized".into()));
        }
        Ok(Self { amplitudes: amplitudes.unscale(norm) })
    }

    /// Computational basis state.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::from_element(dim, czero());
        v[index] = Cx::new(T::one(), T::zero());
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Cx<T>> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<Cx<T>> {
        self.amplitudes
    }

    pub fn norm(&self) -> T {
        self.amplitudes.norm()
    }

    /// `|ψ⟩⟨ψ|` as a dense matrix.
    pub fn projector(&self) -> DMatrix<Cx<T>> {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}
