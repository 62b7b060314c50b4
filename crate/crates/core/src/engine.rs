//! Dense kernels behind the Hermitian Liouvillian action.
//!
//! States live in a basis sorted by total magnetization, column-major, with
//! real and imaginary parts in separate arrays so the column updates
//! vectorize. When every operator conserves or uniformly shifts
//! `S^z_tot`, a state whose entries satisfy `|m_i − m_k| ≤ d` keeps that
//! property, and every column update is restricted to the rows in that
//! window.

use nalgebra::DMatrix;

use crate::operator::Operator;
use crate::scalar::{Cx, Real};

/// Column-major `n × n` complex matrix stored as separate real and
/// imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Split<T: Real> {
    pub(crate) re: Vec<T>,
    pub(crate) im: Vec<T>,
}

impl<T: Real> Split<T> {
    pub(crate) fn zeros(len: usize) -> Self {
        Self { re: vec![T::zero(); len], im: vec![T::zero(); len] }
    }

    pub(crate) fn clear(&mut self) {
        self.re.fill(T::zero());
        self.im.fill(T::zero());
    }

    pub(crate) fn copy_from(&mut self, other: &Self) {
        self.re.copy_from_slice(&other.re);
        self.im.copy_from_slice(&other.im);
    }

    /// `self += a · x` for real `a`.
    pub(crate) fn add_scaled(&mut self, a: T, x: &Self) {
        for (d, s) in self.re.iter_mut().zip(&x.re) {
            *d += a * *s;
        }
        for (d, s) in self.im.iter_mut().zip(&x.im) {
            *d += a * *s;
        }
    }

    /// `self = x + a · y` for real `a`.
    pub(crate) fn set_sum(&mut self, x: &Self, a: T, y: &Self) {
        for ((d, p), q) in self.re.iter_mut().zip(&x.re).zip(&y.re) {
            *d = *p + a * *q;
        }
        for ((d, p), q) in self.im.iter_mut().zip(&x.im).zip(&y.im) {
            *d = *p + a * *q;
        }
    }
}

/// Raw compressed rows.
#[derive(Clone, Debug)]
struct Rows<T: Real> {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Cx<T>>,
}

impl<T: Real> Rows<T> {
    /// Rows of `op` with conjugated values.
    fn conj_of(op: &Operator<T>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(op.nnz());
        let mut values = Vec::with_capacity(op.nnz());
        for r in 0..op.dim() {
            let (cols, vals) = op.row(r);
            indices.extend_from_slice(cols);
            values.extend(vals.iter().map(|v| v.conj()));
            indptr.push(indices.len());
        }
        Self { indptr, indices, values }
    }

    /// `out += alpha · M · A` where `self` holds the rows of `Aᵀ` and column
    /// `k` of `M` is nonzero only on rows `win[k]`. Rows are processed in
    /// strips so the touched part of `M` stays in cache.
    fn right_mul_acc(&self, n: usize, alpha: Cx<T>, m: &Split<T>, win: &[(usize, usize)], out: &mut Split<T>) {
        const STRIP: usize = 128;
        let mut lo = 0;
        while lo < n {
            let hi = (lo + STRIP).min(n);
            for r in 0..n {
                for idx in self.indptr[r]..self.indptr[r + 1] {
                    let k = self.indices[idx];
                    let (a0, b0) = win[k];
                    let (s, e) = (a0.max(lo), b0.min(hi));
                    if s >= e {
                        continue;
                    }
                    let a = alpha * self.values[idx];
                    let (ar, ai) = (a.re, a.im);
                    let xr = &m.re[k * n + s..k * n + e];
                    let xi = &m.im[k * n + s..k * n + e];
                    let dr = &mut out.re[r * n + s..r * n + e];
                    let di = &mut out.im[r * n + s..r * n + e];
                    for (((dr, di), &x), &y) in dr.iter_mut().zip(di.iter_mut()).zip(xr).zip(xi) {
                        *dr += ar * x - ai * y;
                        *di += ar * y + ai * x;
                    }
                }
            }
            lo = hi;
        }
    }
}

#[derive(Clone, Debug)]
struct DenseJump<T: Real> {
    /// rows of `L̄`, i.e. of `(L†)ᵀ`
    conj: Rows<T>,
    /// rows of `Lᵀ`
    transpose: Rows<T>,
    shift: i32,
}

#[derive(Clone, Debug)]
pub(crate) struct Engine<T: Real> {
    n: usize,
    /// natural index → sorted position
    inv: Vec<usize>,
    mag: Vec<i32>,
    mmin: i32,
    /// `[start, end)` of each magnetization value, offset by `mmin`
    ranges: Vec<(usize, usize)>,
    conserving: bool,
    c: T,
    cp: T,
    k_conj: Rows<T>,
    dense: Vec<DenseJump<T>>,
    sparse: Vec<Vec<(usize, usize, Cx<T>)>>,
}

pub(crate) struct Workspace<T: Real> {
    w: Split<T>,
    v: Vec<Split<T>>,
    vd: Split<T>,
    win: Vec<(usize, usize)>,
}

/// Support half-width meaning "no restriction".
pub(crate) const FULL: i32 = i32::MAX / 4;

impl<T: Real> Engine<T> {
    /// `k` is `−iH − c Σ L†L` over the `sparse` jumps; `dense` jumps carry
    /// their magnetization shift. `mags` are natural-basis magnetizations,
    /// used only when the model is `conserving`.
    pub(crate) fn new(
        k: &Operator<T>,
        dense: &[(Operator<T>, Option<i32>)],
        sparse: &[Operator<T>],
        mags: &[i32],
        conserving: bool,
        c: T,
        cp: T,
    ) -> Self {
        let n = k.dim();
        let mut perm: Vec<usize> = (0..n).collect();
        let mags: Vec<i32> = if conserving { mags.to_vec() } else { vec![0; n] };
        perm.sort_by_key(|&i| mags[i]);
        let mut inv = vec![0; n];
        for (p, &i) in perm.iter().enumerate() {
            inv[i] = p;
        }
        let mag: Vec<i32> = perm.iter().map(|&i| mags[i]).collect();
        let mmin = mag.iter().copied().min().unwrap_or(0);
        let mmax = mag.iter().copied().max().unwrap_or(0);
        let mut ranges = vec![(usize::MAX, 0); (mmax - mmin + 1) as usize];
        for (p, &m) in mag.iter().enumerate() {
            let slot = &mut ranges[(m - mmin) as usize];
            slot.0 = slot.0.min(p);
            slot.1 = p + 1;
        }
        let k_conj = Rows::conj_of(&k.permuted(&inv));
        let dense = dense
            .iter()
            .map(|(l, s)| {
                let l = l.permuted(&inv);
                DenseJump { conj: Rows::conj_of(&l), transpose: Rows::conj_of(&l.adjoint()), shift: s.unwrap_or(0) }
            })
            .collect();
        let sparse = sparse.iter().map(|l| l.permuted(&inv).iter().collect()).collect();
        Self { n, inv, mag, mmin, ranges, conserving, c, cp, k_conj, dense, sparse }
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    /// Storage offset of natural-basis entry `(r, c)` in a sorted state.
    pub(crate) fn position(&self, r: usize, c: usize) -> usize {
        self.inv[c] * self.n + self.inv[r]
    }

    pub(crate) fn workspace(&self) -> Workspace<T> {
        let nn = self.n * self.n;
        Workspace {
            w: Split::zeros(nn),
            v: self.dense.iter().map(|_| Split::zeros(nn)).collect(),
            vd: Split::zeros(nn),
            win: vec![(0, 0); self.n],
        }
    }

    /// Largest `|m_i − m_k|` over the nonzero entries of a sorted-basis
    /// state, or [`FULL`] if the model breaks the block structure.
    pub(crate) fn support(&self, x: &Split<T>) -> i32 {
        if !self.conserving {
            return FULL;
        }
        let n = self.n;
        let mut d = 0;
        for k in 0..n {
            for i in 0..n {
                let p = k * n + i;
                if x.re[p] != T::zero() || x.im[p] != T::zero() {
                    d = d.max((self.mag[i] - self.mag[k]).abs());
                }
            }
        }
        d
    }

    /// Row windows of every column for entries with `m_i − m_k ∈ [lo, hi]`.
    fn windows(&self, lo: i32, hi: i32, win: &mut [(usize, usize)]) {
        let mmax = self.mmin + self.ranges.len() as i32 - 1;
        for (k, w) in win.iter_mut().enumerate() {
            if !self.conserving || lo <= -FULL / 2 {
                *w = (0, self.n);
                continue;
            }
            let a = (self.mag[k] + lo).max(self.mmin);
            let b = (self.mag[k] + hi).min(mmax);
            *w = if a > b {
                (0, 0)
            } else {
                (self.ranges[(a - self.mmin) as usize].0, self.ranges[(b - self.mmin) as usize].1)
            };
        }
    }

    /// `out = L[ρ]` for a Hermitian sorted-basis `ρ` with support `d`.
    ///
    /// With `W = ρK† − c Σ ρL†L` over the dense jumps the result is
    /// `W + W† + c' Σ LρL†`, where `LρL† = V†L†` with `V = ρL†`.
    pub(crate) fn apply(&self, rho: &Split<T>, d: i32, out: &mut Split<T>, ws: &mut Workspace<T>) {
        let n = self.n;
        let one = Cx::new(T::one(), T::zero());
        let Workspace { w, v, vd, win } = ws;
        w.clear();
        self.windows(-d, d, win);
        self.k_conj.right_mul_acc(n, one, rho, win, w);
        for (j, vj) in self.dense.iter().zip(v.iter_mut()) {
            vj.clear();
            self.windows(-d, d, win);
            j.conj.right_mul_acc(n, one, rho, win, vj);
            self.windows(-d - j.shift, d - j.shift, win);
            j.transpose.right_mul_acc(n, Cx::new(-self.c, T::zero()), vj, win, w);
        }
        transpose_combine(n, w, T::one(), out);
        let cp = Cx::new(self.cp, T::zero());
        for (j, vj) in self.dense.iter().zip(v.iter()) {
            vd.clear();
            transpose_combine(n, vj, T::zero(), vd);
            self.windows(-d + j.shift, d + j.shift, win);
            j.conj.right_mul_acc(n, cp, vd, win, out);
        }
        for entries in &self.sparse {
            for &(r, k, a) in entries {
                let a = a * cp;
                for &(s, l, b) in entries {
                    let p = l * n + k;
                    let z = a * Cx::new(rho.re[p], rho.im[p]) * b.conj();
                    out.re[s * n + r] += z.re;
                    out.im[s * n + r] += z.im;
                }
            }
        }
    }

    pub(crate) fn to_sorted(&self, m: &DMatrix<Cx<T>>) -> Split<T> {
        let n = self.n;
        let mut out = Split::zeros(n * n);
        for c in 0..n {
            let pc = self.inv[c];
            for r in 0..n {
                let z = m[(r, c)];
                let p = pc * n + self.inv[r];
                out.re[p] = z.re;
                out.im[p] = z.im;
            }
        }
        out
    }

    pub(crate) fn to_natural(&self, x: &Split<T>) -> DMatrix<Cx<T>> {
        let n = self.n;
        DMatrix::from_fn(n, n, |r, c| {
            let p = self.inv[c] * n + self.inv[r];
            Cx::new(x.re[p], x.im[p])
        })
    }
}

/// `out = s·X + X†` (with `s = 0` a plain adjoint).
fn transpose_combine<T: Real>(n: usize, x: &Split<T>, s: T, out: &mut Split<T>) {
    const B: usize = 32;
    for cb in (0..n).step_by(B) {
        for rb in (0..n).step_by(B) {
            for c in cb..(cb + B).min(n) {
                for r in rb..(rb + B).min(n) {
                    let p = c * n + r;
                    let q = r * n + c;
                    out.re[p] = s * x.re[p] + x.re[q];
                    out.im[p] = s * x.im[p] - x.im[q];
                }
            }
        }
    }
}

/// `ρ ← (ρ + ρ†)/2`, returning the largest pre-correction `|ρ − ρ†|`.
pub(crate) fn hermitize<T: Real>(n: usize, x: &mut Split<T>) -> T {
    let half = T::one() / (T::one() + T::one());
    let mut e = T::zero();
    for c in 0..n {
        for r in c..n {
            let p = c * n + r;
            let q = r * n + c;
            let (dr, di) = (x.re[p] - x.re[q], x.im[p] + x.im[q]);
            let d = (dr * dr + di * di).sqrt();
            if d > e {
                e = d;
            }
            let re = (x.re[p] + x.re[q]) * half;
            let im = (x.im[p] - x.im[q]) * half;
            x.re[p] = re;
            x.re[q] = re;
            x.im[p] = im;
            x.im[q] = -im;
        }
    }
    e
}
