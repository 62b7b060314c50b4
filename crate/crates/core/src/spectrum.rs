//! Liouvillian eigenvalues closest to the imaginary axis within one
//! magnetization-difference block.
//!
//! Small blocks are assembled and diagonalized densely. Larger ones use
//! Arnoldi on the short-time propagator `e^{Lτ}` (realized by RK4
//! substeps, which share eigenvectors with `L`), followed by a final
//! Rayleigh–Ritz step on `L` itself so the reported `λ` do not depend on
//! the integrator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{Split, Workspace};
use crate::error::{Error, Result};
use crate::lindblad::{delta_m_block, rk4_step, DeltaMBlock, LindbladModel, Rk4Buffers};
use crate::linalg::{random_unit_vector, SchurEigen};
use crate::scalar::{cabs, czero, lit, to_f64, Cx, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumOptions {
    /// propagator time step
    pub tau: f64,
    /// RK4 substep inside one propagator application
    pub h: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// relative Ritz residual for convergence
    pub tol: f64,
    /// blocks up to this dimension are solved densely
    pub dense_cutoff: usize,
    pub seed: u64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { tau: 1.0, h: 0.1, krylov_dim: 40, max_restarts: 400, tol: 1e-11, dense_cutoff: 6000, seed: 7 }
    }
}

impl SpectrumOptions {
    /// Default options with `τ = 0.2/γ`.
    pub fn for_gamma(gamma: f64) -> Self {
        let tau = if gamma > 0.0 { 0.2 / gamma } else { 1.0 };
        Self { tau, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    pub delta_m: i32,
    /// `‖L[ρ] − λρ‖` for the unit-norm eigenvector
    pub residual: f64,
}

impl Eigenvalue {
    pub fn value(&self) -> Cx<f64> {
        Cx::new(self.re, self.im)
    }
}

/// Eigenvalues sorted by decreasing real part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<Eigenvalue>,
    pub method: String,
}

impl SpectrumResult {
    pub fn values(&self) -> Vec<Cx<f64>> {
        self.eigenvalues.iter().map(Eigenvalue::value).collect()
    }

    /// Largest `Re λ` (should be `≤ 0` up to roundoff).
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

/// Largest distance from each `λ` in `a` to the nearest `λ*` in `b`.
/// Blocks `Δm` and `−Δm` are related by `L[X†] = L[X]†`, so this is
/// roundoff for a matched pair of results.
pub fn pairing_error(a: &SpectrumResult, b: &SpectrumResult) -> f64 {
    a.eigenvalues
        .iter()
        .map(|x| b.eigenvalues.iter().map(|y| (x.value() - y.value().conj()).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// `L` and `e^{Lτ}` acting on vectors of one block.
struct BlockOp<'a, T: Real> {
    model: &'a LindbladModel<T>,
    pos: Vec<usize>,
    tpos: Vec<usize>,
    support: i32,
    xh: Split<T>,
    xa: Split<T>,
    yh: Split<T>,
    ya: Split<T>,
    ws: Workspace<T>,
    bufs: Rk4Buffers<T>,
}

impl<'a, T: Real> BlockOp<'a, T> {
    fn new(model: &'a LindbladModel<T>, block: &DeltaMBlock) -> Self {
        let eng = model.engine();
        let nn = eng.dim() * eng.dim();
        Self {
            model,
            pos: block.entries.iter().map(|&(r, c)| eng.position(r, c)).collect(),
            tpos: block.entries.iter().map(|&(r, c)| eng.position(c, r)).collect(),
            support: block.delta_m.abs(),
            xh: Split::zeros(nn),
            xa: Split::zeros(nn),
            yh: Split::zeros(nn),
            ya: Split::zeros(nn),
            ws: eng.workspace(),
            bufs: Rk4Buffers::new(nn),
        }
    }

    /// Splits `X` into Hermitian parts `X = Xh + i·Xa`; the Liouvillian
    /// preserves Hermiticity, so it acts on each part separately.
    fn load(&mut self, v: &DVector<Cx<T>>) {
        let half = lit::<T>(0.5);
        self.xh.clear();
        self.xa.clear();
        for ((&p, &q), z) in self.pos.iter().zip(&self.tpos).zip(v.iter()) {
            let (a, b) = (z.re * half, z.im * half);
            self.xh.re[p] += a;
            self.xh.im[p] += b;
            self.xh.re[q] += a;
            self.xh.im[q] -= b;
            self.xa.re[p] += b;
            self.xa.im[p] -= a;
            self.xa.re[q] += b;
            self.xa.im[q] += a;
        }
    }

    fn store(&self, h: &Split<T>, a: &Split<T>) -> DVector<Cx<T>> {
        DVector::from_iterator(self.pos.len(), self.pos.iter().map(|&p| Cx::new(h.re[p] - a.im[p], h.im[p] + a.re[p])))
    }

    fn apply(&mut self, v: &DVector<Cx<T>>) -> DVector<Cx<T>> {
        self.load(v);
        let eng = self.model.engine();
        eng.apply(&self.xh, self.support, &mut self.yh, &mut self.ws);
        eng.apply(&self.xa, self.support, &mut self.ya, &mut self.ws);
        self.store(&self.yh, &self.ya)
    }

    fn propagate(&mut self, v: &DVector<Cx<T>>, tau: f64, h: f64) -> DVector<Cx<T>> {
        self.load(v);
        let eng = self.model.engine();
        let nsub = (tau / h - 1e-9).ceil().max(1.0) as usize;
        let step = lit::<T>(tau / nsub as f64);
        for _ in 0..nsub {
            rk4_step(eng, &mut self.xh, self.support, step, &mut self.bufs, &mut self.ws);
            rk4_step(eng, &mut self.xa, self.support, step, &mut self.bufs, &mut self.ws);
        }
        self.store(&self.xh, &self.xa)
    }
}

/// The `k` eigenvalues of `L` restricted to block `delta_m` with the
/// largest real parts.
pub fn spectrum_near_axis<T: Real>(
    model: &LindbladModel<T>,
    delta_m: i32,
    k: usize,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    if k == 0 {
        return Err(Error::InvalidSpec("k must be at least 1".into()));
    }
    let block = delta_m_block(model, delta_m)?;
    let dim = block.dim();
    let k = k.min(dim);
    let mut op = BlockOp::new(model, &block);
    if dim <= opts.dense_cutoff {
        dense_spectrum(&mut op, dim, k, delta_m)
    } else {
        arnoldi_spectrum(&mut op, dim, k, delta_m, opts)
    }
}

fn dense_spectrum<T: Real>(op: &mut BlockOp<T>, dim: usize, k: usize, delta_m: i32) -> Result<SpectrumResult> {
    let mut m = DMatrix::from_element(dim, dim, czero::<T>());
    let mut e = DVector::from_element(dim, czero::<T>());
    for j in 0..dim {
        e[j] = Cx::new(T::one(), T::zero());
        m.set_column(j, &op.apply(&e));
        e[j] = czero();
    }
    let schur = SchurEigen::new(m.clone())?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| schur.values[b].re.partial_cmp(&schur.values[a].re).unwrap());
    let eigenvalues = order[..k]
        .iter()
        .map(|&i| {
            let lambda = schur.values[i];
            let v = schur.eigenvector(i);
            let residual = to_f64((&m * &v - &v * lambda).norm());
            Eigenvalue { re: to_f64(lambda.re), im: to_f64(lambda.im), delta_m, residual }
        })
        .collect();
    Ok(SpectrumResult { eigenvalues, method: format!("dense block eigensolve, dim {dim}") })
}

/// `Q†W` for column lists.
fn projected<T: Real>(q: &[DVector<Cx<T>>], w: &[DVector<Cx<T>>]) -> DMatrix<Cx<T>> {
    DMatrix::from_fn(q.len(), w.len(), |i, j| q[i].dotc(&w[j]))
}

/// `Σ_j v_j·y_j`.
fn combine<T: Real>(v: &[DVector<Cx<T>>], y: &DVector<Cx<T>>) -> DVector<Cx<T>> {
    let mut out = DVector::from_element(v[0].len(), czero());
    for (vj, c) in v.iter().zip(y.iter()) {
        out.axpy(*c, vj, Cx::new(T::one(), T::zero()));
    }
    out
}

/// Two passes of classical Gram–Schmidt; returns the norm left over.
fn orthogonalize_against<T: Real>(r: &mut DVector<Cx<T>>, q: &[DVector<Cx<T>>]) -> T {
    for _ in 0..2 {
        for qi in q {
            let c = qi.dotc(r);
            r.axpy(-c, qi, Cx::new(T::one(), T::zero()));
        }
    }
    r.norm()
}

/// Orthonormal basis of `span{Σ_j v_j·Y_{j,i}}` with the matching
/// combinations of `w`.
fn rotate<T: Real>(
    v: &[DVector<Cx<T>>],
    w: &[DVector<Cx<T>>],
    y: &[DVector<Cx<T>>],
) -> (Vec<DVector<Cx<T>>>, Vec<DVector<Cx<T>>>) {
    // QR of the small coefficient matrix keeps the images consistent
    let mut coeffs: Vec<DVector<Cx<T>>> = Vec::new();
    for yi in y {
        let mut c = yi.clone();
        let nrm = orthogonalize_against(&mut c, &coeffs);
        if nrm > lit(1e-10) {
            coeffs.push(c.unscale(nrm));
        }
    }
    let nv: Vec<_> = coeffs.iter().map(|c| combine(v, c)).collect();
    let nw: Vec<_> = coeffs.iter().map(|c| combine(w, c)).collect();
    (nv, nw)
}

fn arnoldi_spectrum<T: Real>(
    op: &mut BlockOp<T>,
    dim: usize,
    k: usize,
    delta_m: i32,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    let m = opts.krylov_dim.max(k + 10).min(dim);
    let keep = (k + (m - k) / 2).min(m - 1);
    let mut q = vec![random_unit_vector::<T>(dim, opts.seed)];
    let mut w: Vec<DVector<Cx<T>>> = Vec::new();
    let mut converged = false;
    let mut ritz: Vec<DVector<Cx<T>>> = Vec::new();
    for _ in 0..opts.max_restarts {
        while w.len() < m && w.len() < q.len() {
            let j = w.len();
            let pj = op.propagate(&q[j], opts.tau, opts.h);
            w.push(pj.clone());
            if q.len() < m + 1 {
                let mut r = pj;
                let nrm = orthogonalize_against(&mut r, &q);
                if nrm > lit(1e-12) {
                    q.push(r.unscale(nrm));
                }
            }
        }
        let basis = &q[..w.len()];
        let g = projected(basis, &w);
        let schur = SchurEigen::new(g)?;
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| cabs(schur.values[b]).partial_cmp(&cabs(schur.values[a])).unwrap());
        let ys: Vec<DVector<Cx<T>>> = order.iter().map(|&i| schur.eigenvector(i)).collect();
        let mut worst = 0.0_f64;
        for (yi, &i) in ys.iter().zip(&order).take(k) {
            let mu = schur.values[i];
            let res = combine(&w, yi) - combine(basis, yi) * mu;
            worst = worst.max(to_f64(res.norm() / cabs(mu).max(lit(1e-300))));
        }
        let exhausted = w.len() < m;
        if worst < opts.tol || exhausted {
            ritz = ys.iter().take(k).map(|y| combine(basis, y)).collect();
            converged = worst < opts.tol.max(1e-8);
            break;
        }
        let next = q.get(w.len()).cloned();
        let (nq, nw) = rotate(basis, &w, &ys[..keep]);
        q = nq;
        w = nw;
        if let Some(mut nx) = next {
            let nrm = orthogonalize_against(&mut nx, &q);
            q.push(nx.unscale(nrm));
        }
    }
    if !converged {
        return Err(Error::NonConvergence(format!(
            "Arnoldi did not converge in {} restarts for Δm = {delta_m}",
            opts.max_restarts
        )));
    }
    // final Rayleigh–Ritz with L on the converged subspace
    let mut basis: Vec<DVector<Cx<T>>> = Vec::new();
    for r in ritz {
        let mut r = r;
        let nrm = orthogonalize_against(&mut r, &basis);
        basis.push(r.unscale(nrm));
    }
    let lb: Vec<_> = basis.iter().map(|b| op.apply(b)).collect();
    let g = projected(&basis, &lb);
    let schur = SchurEigen::new(g)?;
    let mut eigenvalues = Vec::with_capacity(basis.len());
    for i in 0..basis.len() {
        let lambda = schur.values[i];
        let z = schur.eigenvector(i);
        let v = combine(&basis, &z);
        let lv = combine(&lb, &z);
        let residual = to_f64((lv - &v * lambda).norm() / v.norm());
        let wrapped = to_f64(lambda.im).abs() * opts.tau;
        if wrapped > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Aliasing(wrapped));
        }
        eigenvalues.push(Eigenvalue { re: to_f64(lambda.re), im: to_f64(lambda.im), delta_m, residual });
    }
    eigenvalues.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    Ok(SpectrumResult { eigenvalues, method: format!("propagator Arnoldi, tau {}, block dim {dim}", opts.tau) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::Convention;
    use crate::model::{ChainSpec, DissipatorSpec};

    fn model(n: usize, eps: f64) -> LindbladModel<f64> {
        let chain = ChainSpec::aklt(n, 0.2).with_epsilon(eps);
        LindbladModel::from_chain(&chain, &DissipatorSpec::new(0.2, 0.2), Convention::Factor2).unwrap()
    }

    #[test]
    fn arnoldi_matches_dense() {
        let m = model(3, 0.05);
        let dense = spectrum_near_axis(&m, -1, 6, &SpectrumOptions::default()).unwrap();
        let opts = SpectrumOptions { dense_cutoff: 0, ..SpectrumOptions::default() };
        let arnoldi = spectrum_near_axis(&m, -1, 6, &opts).unwrap();
        assert!(arnoldi.method.contains("Arnoldi"));
        for (a, d) in arnoldi.values().iter().zip(dense.values()) {
            assert!((a - d).norm() < 1e-7, "{a} vs {d}");
        }
        assert!(arnoldi.max_residual() < 1e-6);
        assert!(dense.max_residual() < 1e-6);
    }

    #[test]
    fn left_half_plane_and_pairing() {
        let m = model(3, 0.0);
        let opts = SpectrumOptions::default();
        for dm in [1, 2] {
            let a = spectrum_near_axis(&m, -dm, 8, &opts).unwrap();
            let b = spectrum_near_axis(&m, dm, 8, &opts).unwrap();
            assert!(a.max_real_part() <= 1e-8 && b.max_real_part() <= 1e-8);
            assert!(pairing_error(&a, &b) < 1e-8);
        }
        let zero = spectrum_near_axis(&m, 0, 2, &opts).unwrap();
        assert!(zero.eigenvalues[0].value().norm() < 1e-10);
    }

    #[test]
    fn persistent_coherence_on_axis() {
        let m = model(4, 0.0);
        let opts = SpectrumOptions { dense_cutoff: 0, ..SpectrumOptions::default() };
        let s = spectrum_near_axis(&m, -1, 3, &opts).unwrap();
        let top = s.eigenvalues[0];
        assert!(top.re.abs() < 1e-8, "{top:?}");
        assert!((top.im - 0.2 / 4.0).abs() < 1e-8, "{top:?}");
        assert!(s.eigenvalues[1].re < -1e-3);
    }

    #[test]
    fn rejects_empty_request() {
        let m = model(2, 0.0);
        assert!(spectrum_near_axis(&m, -1, 0, &SpectrumOptions::default()).is_err());
        assert!(spectrum_near_axis(&m, 9, 1, &SpectrumOptions::default()).is_err());
    }
}
