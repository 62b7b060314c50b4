//! Dense and Krylov eigen-solvers used by the manifold and spectrum code.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{cabs, czero, lit, rabs, Cx, Real};

/// Distinct diagonal offsets below `1e-13·max|M|`. nalgebra's symmetric QR
/// iteration can return non-finite values on exactly decoupled zero blocks
/// (e.g. a pure-state projector); offset input avoids that and moves every
/// eigenvalue by less than the largest offset.
fn offset_diagonal<T: Real>(m: &mut DMatrix<Cx<T>>) {
    let n = m.nrows();
    let scale = m.iter().map(|z| cabs(*z)).fold(T::zero(), |a, b| if b > a { b } else { a });
    let delta = scale.max(T::one()) * lit(1e-13);
    for i in 0..n {
        m[(i, i)].re += delta * lit(i as f64 / n as f64);
    }
}

/// Eigenpairs of a dense Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen<T: Real>(m: DMatrix<Cx<T>>) -> (Vec<T>, DMatrix<Cx<T>>) {
    let n = m.nrows();
    let mut eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) || eig.eigenvectors.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        let mut m = m;
        offset_diagonal(&mut m);
        eig = m.symmetric_eigen();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a dense Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<T: Real>(m: DMatrix<Cx<T>>) -> Vec<T> {
    let mut vals = m.clone().symmetric_eigenvalues();
    if vals.iter().any(|v| !v.is_finite()) {
        let mut m = m;
        offset_diagonal(&mut m);
        vals = m.symmetric_eigenvalues();
    }
    let mut out: Vec<T> = vals.iter().copied().collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

pub fn random_unit_vector<T: Real>(dim: usize, seed: u64) -> DVector<Cx<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Cx::new(lit(re), lit(im))
    });
    let norm = v.norm();
    v.unscale(norm)
}

/// Removes the components of `v` along the orthonormal columns in `basis`
/// (two passes of classical Gram–Schmidt).
pub fn orthogonalize<T: Real>(v: &mut DVector<Cx<T>>, basis: &[DVector<Cx<T>>]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dotc(v);
            v.axpy(-c, b, Cx::new(T::one(), T::zero()));
        }
    }
}

/// Lowest `k` eigenpairs of a Hermitian linear map via Lanczos with full
/// reorthogonalization. Each eigenpair is found by a separate run deflated
/// against the previously converged vectors, so degenerate eigenvalues are
/// resolved one vector at a time.
pub fn lanczos_lowest<T, F>(apply: F, dim: usize, k: usize, tol: T, seed: u64) -> Result<Vec<(T, DVector<Cx<T>>)>>
where
    T: Real,
    F: Fn(&DVector<Cx<T>>) -> DVector<Cx<T>>,
{
    let mut found: Vec<(T, DVector<Cx<T>>)> = Vec::new();
    let max_basis = dim.min(160);
    for run in 0..k.min(dim) {
        let locked: Vec<DVector<Cx<T>>> = found.iter().map(|(_, v)| v.clone()).collect();
        let mut start = random_unit_vector::<T>(dim, seed.wrapping_add(run as u64));
        let mut converged = None;
        for _restart in 0..50 {
            orthogonalize(&mut start, &locked);
            let norm = start.norm();
            if norm <= lit(1e-300) {
                return Err(Error::NonConvergence("Lanczos start vector vanished".into()));
            }
            start.unscale_mut(norm);
            let mut basis: Vec<DVector<Cx<T>>> = vec![start.clone()];
            let mut alpha: Vec<T> = Vec::new();
            let mut beta: Vec<T> = Vec::new();
            let mut last_beta = T::zero();
            while basis.len() <= max_basis {
                let q = basis.last().unwrap();
                let mut w = apply(q);
                alpha.push(q.dotc(&w).re);
                orthogonalize(&mut w, &locked);
                orthogonalize(&mut w, &basis);
                last_beta = w.norm();
                if last_beta <= lit(1e-12) || basis.len() == max_basis.min(dim - locked.len()) {
                    break;
                }
                beta.push(last_beta);
                basis.push(w.unscale(last_beta));
            }
            let m = alpha.len();
            let tri = DMatrix::from_fn(m, m, |r, c| {
                let v = if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    T::zero()
                };
                Cx::new(v, T::zero())
            });
            let (vals, vecs) = hermitian_eigen(tri);
            let y = vecs.column(0);
            let mut ritz = DVector::from_element(dim, czero());
            for (j, b) in basis.iter().enumerate().take(m) {
                ritz.axpy(y[j], b, Cx::new(T::one(), T::zero()));
            }
            let nrm = ritz.norm();
            ritz.unscale_mut(nrm);
            let resid = last_beta * cabs(y[m - 1]);
            if resid <= tol * (T::one() + rabs(vals[0])) {
                converged = Some((vals[0], ritz));
                break;
            }
            start = ritz;
        }
        match converged {
            Some(pair) => found.push(pair),
            None => return Err(Error::NonConvergence(format!("Lanczos eigenpair {run} did not converge"))),
        }
    }
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(found)
}

/// Eigenvalues of a general complex matrix from its Schur form, together
/// with the Schur factors for eigenvector recovery.
pub struct SchurEigen<T: Real> {
    pub values: Vec<Cx<T>>,
    q: DMatrix<Cx<T>>,
    t: DMatrix<Cx<T>>,
}

impl<T: Real> SchurEigen<T> {
    pub fn new(m: DMatrix<Cx<T>>) -> Result<Self> {
        let schur = m
            .try_schur(lit(1e-14), 0)
            .ok_or_else(|| Error::NonConvergence("Schur decomposition failed".into()))?;
        let (q, t) = schur.unpack();
        let values = (0..t.nrows()).map(|i| t[(i, i)]).collect();
        Ok(Self { values, q, t })
    }

    /// Right eigenvector for eigenvalue index `i` (unit norm), by back
    /// substitution on the triangular factor.
    pub fn eigenvector(&self, i: usize) -> DVector<Cx<T>> {
        let n = self.t.nrows();
        let lambda = self.t[(i, i)];
        let mut z = DVector::from_element(n, czero());
        z[i] = Cx::new(T::one(), T::zero());
        let scale = self.t.iter().map(|v| cabs(*v)).fold(T::zero(), |a, b| if b > a { b } else { a });
        let floor = scale * lit(1e-14) + lit(1e-300);
        for r in (0..i).rev() {
            let mut s = czero::<T>();
            for c in r + 1..=i {
                s += self.t[(r, c)] * z[c];
            }
            let mut d = self.t[(r, r)] - lambda;
            if cabs(d) < floor {
                d = Cx::new(floor, T::zero());
            }
            z[r] = -s / d;
        }
        let v = &self.q * z;
        let nrm = v.norm();
        v.unscale(nrm)
    }
}
