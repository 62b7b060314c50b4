//! Matrix-free Lindblad generator, fixed-step RK4 evolution and the
//! magnetization-difference block structure of the superoperator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_global_dissipator, build_hamiltonian, build_local_dissipators, ChainSpec, DissipatorSpec};
use crate::operator::{Operator, StateVector};
use crate::scalar::{cabs, cone, czero, lit, to_f64, Cx, Real};
use crate::engine::{self, Engine, Split};
use crate::linalg::hermitian_eigenvalues;
use crate::spin::basis_magnetizations;

/// Normalization of the dissipator `D[L]ρ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `2LρL† − {L†L, ρ}`
    #[default]
    Factor2,
    /// `LρL† − ½{L†L, ρ}`
    Half,
}

impl Convention {
    /// Coefficients `(c, c')` in `−c{L†L,ρ} + c'LρL†`.
    pub(crate) fn coefficients<T: Real>(self) -> (T, T) {
        match self {
            Convention::Factor2 => (T::one(), lit(2.0)),
            Convention::Half => (lit(0.5), T::one()),
        }
    }
}

#[derive(Clone, Debug)]
struct Jump<T: Real> {
    l: Operator<T>,
    l_dag: Operator<T>,
}

/// `dρ/dt = −i[H,ρ] + Σ_μ D[L_μ]ρ`.
#[derive(Clone, Debug)]
pub struct LindbladModel<T: Real> {
    h: Operator<T>,
    jumps: Vec<Jump<T>>,
    convention: Convention,
    /// `−iH − c Σ L†L`
    k: Operator<T>,
    engine: Engine<T>,
}

impl<T: Real> LindbladModel<T> {
    pub fn new(h: Operator<T>, jumps: Vec<Operator<T>>, convention: Convention) -> Result<Self> {
        let dim = h.dim();
        if (&h - &h.adjoint()).max_abs() > lit(1e-12) {
            return Err(Error::InvalidSpec("Hamiltonian is not Hermitian".into()));
        }
        let (c, cp) = convention.coefficients::<T>();
        let mut k = h.scale(Cx::new(T::zero(), -T::one()));
        let mut k_sparse = k.clone();
        let mut stored = Vec::with_capacity(jumps.len());
        let mut dense = Vec::new();
        let mut sparse = Vec::new();
        let mags = match crate::model::sites_for_dim(dim) {
            Ok(n) => basis_magnetizations(n),
            Err(_) => vec![0; dim],
        };
        let h_conserves = magnetization_shift(&h, &mags) == Some(0);
        let mut conserving = h_conserves && mags.len() == dim;
        for l in jumps {
            if l.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: l.dim() });
            }
            if l.nnz() == 0 {
                continue;
            }
            let l_dag = l.adjoint();
            let ldl = (&l_dag * &l).scale_real(c);
            k = &k - &ldl;
            let shift = magnetization_shift(&l, &mags);
            conserving &= shift.is_some();
            // pairwise LρL† costs nnz², the dense route about 3·nnz·dim
            if l.nnz() <= dim {
                k_sparse = &k_sparse - &ldl;
                sparse.push(l.clone());
            } else {
                dense.push((l.clone(), shift));
            }
            stored.push(Jump { l, l_dag });
        }
        let engine = Engine::new(&k_sparse, &dense, &sparse, &mags, conserving, c, cp);
        Ok(Self { h, jumps: stored, convention, k, engine })
    }

    /// Chain Hamiltonian with `L_G = √γ S⁻` and `L_{j,j+1} = √κ |00⟩⟨−−|`.
    pub fn from_chain(chain: &ChainSpec, diss: &DissipatorSpec, convention: Convention) -> Result<Self> {
        let h = build_hamiltonian::<T>(chain)?;
        let mut jumps = Vec::new();
        if diss.gamma > 0.0 {
            jumps.push(build_global_dissipator::<T>(diss, chain.n)?);
        }
        if diss.kappa > 0.0 {
            jumps.extend(build_local_dissipators::<T>(diss, chain.n)?);
        }
        Self::new(h, jumps, convention)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &Operator<T> {
        &self.h
    }

    pub fn jumps(&self) -> impl Iterator<Item = &Operator<T>> {
        self.jumps.iter().map(|j| &j.l)
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Upper bound on the induced ∞-norm of the generator.
    pub fn norm_estimate(&self) -> T {
        let (c, cp) = self.convention.coefficients::<T>();
        let mut bound = lit::<T>(2.0) * row_norm(&self.h);
        for j in &self.jumps {
            let nl = row_norm(&j.l).max(row_norm(&j.l_dag));
            bound += (lit::<T>(2.0) * c + cp) * nl * nl;
        }
        bound
    }

    /// `L[X]` for a general (not necessarily Hermitian) operator:
    /// `K X + X K† + c' Σ L X L†` with `K = −iH − c Σ L†L`.
    pub fn apply(&self, x: &DMatrix<Cx<T>>) -> Result<DMatrix<Cx<T>>> {
        self.check_dim(x)?;
        let (_, cp) = self.convention.coefficients::<T>();
        let xd = x.adjoint();
        let mut out = self.k.mul_dense(x);
        out += self.k.mul_dense(&xd).adjoint();
        for j in &self.jumps {
            // L X L† = L (L X†)†
            let y = j.l.mul_dense(&xd);
            j.l.mul_dense_acc(Cx::new(cp, T::zero()), &y.adjoint(), &mut out);
        }
        Ok(out)
    }

    /// `L[ρ]` for Hermitian `ρ`. Only the Hermitian part of `ρ` is seen.
    pub fn apply_hermitian(&self, rho: &DMatrix<Cx<T>>) -> Result<DMatrix<Cx<T>>> {
        self.check_dim(rho)?;
        let n = self.dim();
        let x = self.engine.to_sorted(rho);
        let mut out = Split::zeros(n * n);
        let mut ws = self.engine.workspace();
        self.engine.apply(&x, self.engine.support(&x), &mut out, &mut ws);
        Ok(self.engine.to_natural(&out))
    }

    pub(crate) fn engine(&self) -> &Engine<T> {
        &self.engine
    }

    fn check_dim(&self, x: &DMatrix<Cx<T>>) -> Result<()> {
        if x.nrows() != self.dim() || x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.nrows().max(x.ncols()) });
        }
        Ok(())
    }

    /// Magnetization shift of every jump operator, after checking that the
    /// Hamiltonian conserves `S^z_tot`.
    pub fn magnetization_shifts(&self) -> Result<Vec<i32>> {
        let n = crate::model::sites_for_dim(self.dim())?;
        let mags = basis_magnetizations(n);
        if magnetization_shift(&self.h, &mags) != Some(0) {
            return Err(Error::NotMagnetizationConserving);
        }
        self.jumps
            .iter()
            .map(|j| magnetization_shift(&j.l, &mags).ok_or(Error::NotMagnetizationConserving))
            .collect()
    }
}

fn row_norm<T: Real>(op: &Operator<T>) -> T {
    (0..op.dim())
        .map(|r| op.row(r).1.iter().fold(T::zero(), |a, v| a + cabs(*v)))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Uniform shift `m(row) − m(col)` of every nonzero entry, if there is one.
pub fn magnetization_shift<T: Real>(op: &Operator<T>, mags: &[i32]) -> Option<i32> {
    let mut shift = None;
    for (r, c, _) in op.iter() {
        let s = mags[r] - mags[c];
        match shift {
            None => shift = Some(s),
            Some(t) if t != s => return None,
            _ => {}
        }
    }
    Some(shift.unwrap_or(0))
}

/// Density matrix with the trace, Hermiticity and positivity invariants
/// checked at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: DMatrix<Cx<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(m: DMatrix<Cx<T>>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        let tr = m.trace();
        if cabs(tr - cone()) > lit(1e-9) {
            return Err(Error::InvalidState(format!("trace {} differs from 1", to_f64(tr.re))));
        }
        if hermiticity_error(&m) > lit(1e-9) {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        let rho = Self { m };
        let min = rho.min_eigenvalue();
        if min < lit(-1e-7) {
            return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", to_f64(min))));
        }
        Ok(rho)
    }

    pub fn from_pure(psi: &StateVector<T>) -> Self {
        Self { m: psi.projector() }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let p = Cx::new(T::one() / lit(dim as f64), T::zero());
        Self { m: DMatrix::from_diagonal_element(dim, dim, p) }
    }

    /// Wraps a matrix without validation.
    pub fn from_matrix_unchecked(m: DMatrix<Cx<T>>) -> Self {
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Cx<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Cx<T>> {
        self.m
    }

    pub fn trace(&self) -> Cx<T> {
        self.m.trace()
    }

    pub fn min_eigenvalue(&self) -> T {
        hermitian_eigenvalues(self.m.clone())[0]
    }

    /// `Tr(O ρ)`.
    pub fn expectation(&self, op: &Operator<T>) -> Cx<T> {
        op.iter().fold(czero(), |acc, (r, c, v)| acc + v * self.m[(c, r)])
    }

    /// `½ Tr|ρ − σ|`.
    pub fn trace_distance(&self, other: &Self) -> T {
        let d = &self.m - &other.m;
        hermitian_eigenvalues(d).iter().fold(T::zero(), |a, v| a + v.abs()) * lit(0.5)
    }

    /// `Tr_B` of a state on `dim_a ⊗ dim_b`, with the first factor slowest.
    pub fn partial_trace_second(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a * dim_b != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: dim_a * dim_b });
        }
        let m = DMatrix::from_fn(dim_a, dim_a, |i, j| {
            (0..dim_b).fold(czero(), |acc, k| acc + self.m[(i * dim_b + k, j * dim_b + k)])
        });
        Ok(Self { m })
    }
}

/// `max |M − M†|`.
pub fn hermiticity_error<T: Real>(m: &DMatrix<Cx<T>>) -> T {
    let n = m.nrows();
    let mut e = T::zero();
    for c in 0..n {
        for r in c..n {
            let d = cabs(m[(r, c)] - m[(c, r)].conj());
            if d > e {
                e = d;
            }
        }
    }
    e
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// RK4 step size
    pub h: f64,
    /// Maximum allowed `|Tr ρ − 1|` per unit time.
    pub trace_rate_tol: f64,
    /// Abort when the minimum eigenvalue drops below `−positivity_tol`.
    pub positivity_tol: f64,
    /// Compute the minimum eigenvalue every this many grid points
    /// (0 disables the check); the final grid point is always checked.
    pub positivity_every: usize,
    /// Keep the full state at every grid point.
    pub snapshots: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { h: 0.01, trace_rate_tol: 1e-7, positivity_tol: 1e-5, positivity_every: 0, snapshots: false }
    }
}

/// Observables recorded on the time grid.
#[derive(Clone, Debug, Serialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `values[k][i]` is `Re Tr(O_i ρ(t_k))`
    pub values: Vec<Vec<f64>>,
    pub trace: Vec<f64>,
    /// Minimum eigenvalue where it was computed.
    pub min_eigenvalue: Vec<Option<f64>>,
    /// Largest pre-correction Hermiticity error of a single step.
    pub max_hermiticity_drift: f64,
    pub steps: usize,
}

impl TimeSeries {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[i]).collect()
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_recorded_eigenvalue(&self) -> Option<f64> {
        self.min_eigenvalue.iter().flatten().copied().reduce(f64::min)
    }
}

pub struct Evolution<T: Real> {
    pub series: TimeSeries,
    pub final_state: DensityMatrix<T>,
    pub snapshots: Vec<DensityMatrix<T>>,
}

/// Integrates from `t_grid[0]` with fixed RK4 steps no longer than
/// `opts.h`, re-Hermitizing after every step.
pub fn evolve<T: Real>(
    model: &LindbladModel<T>,
    rho0: &DensityMatrix<T>,
    t_grid: &[f64],
    observables: &[(String, Operator<T>)],
    opts: &EvolveOptions,
) -> Result<Evolution<T>> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("time grid must be non-empty and strictly increasing".into()));
    }
    if !(opts.h > 0.0) {
        return Err(Error::InvalidSpec("step size must be positive".into()));
    }
    let mut series = TimeSeries {
        times: Vec::with_capacity(t_grid.len()),
        names: observables.iter().map(|o| o.0.clone()).collect(),
        values: Vec::with_capacity(t_grid.len()),
        trace: Vec::with_capacity(t_grid.len()),
        min_eigenvalue: Vec::with_capacity(t_grid.len()),
        max_hermiticity_drift: 0.0,
        steps: 0,
    };
    let mut snapshots = Vec::new();
    let eng = &model.engine;
    let n = eng.dim();
    let mut x = eng.to_sorted(rho0.matrix());
    engine::hermitize(n, &mut x);
    let support = eng.support(&x);
    let mut ws = eng.workspace();
    let mut bufs = Rk4Buffers::new(n * n);
    let mut rho = rho0.clone();
    let t0 = t_grid[0];
    for (k, &t) in t_grid.iter().enumerate() {
        if k > 0 {
            let span = t - t_grid[k - 1];
            let nsub = (span / opts.h - 1e-9).ceil().max(1.0) as usize;
            let h = lit::<T>(span / nsub as f64);
            for _ in 0..nsub {
                rk4_step(eng, &mut x, support, h, &mut bufs, &mut ws);
                let drift = to_f64(engine::hermitize(n, &mut x));
                series.max_hermiticity_drift = series.max_hermiticity_drift.max(drift);
                series.steps += 1;
            }
            rho = DensityMatrix::from_matrix_unchecked(eng.to_natural(&x));
        }
        let tr = rho.trace().re;
        let drift = (to_f64(tr) - 1.0).abs();
        if drift > opts.trace_rate_tol * (t - t0).max(1.0) {
            return Err(Error::TraceDrift { t, drift });
        }
        let last = k + 1 == t_grid.len();
        let check = opts.positivity_every > 0 && (k % opts.positivity_every == 0 || last);
        let min_eig = if check {
            let m = to_f64(rho.min_eigenvalue());
            if m < -opts.positivity_tol {
                return Err(Error::PositivityViolation { t, min_eig: m });
            }
            Some(m)
        } else {
            None
        };
        series.times.push(t);
        series.values.push(observables.iter().map(|(_, o)| to_f64(rho.expectation(o).re)).collect());
        series.trace.push(to_f64(tr));
        series.min_eigenvalue.push(min_eig);
        if opts.snapshots {
            snapshots.push(rho.clone());
        }
    }
    Ok(Evolution { series, final_state: rho, snapshots })
}

pub(crate) struct Rk4Buffers<T: Real> {
    k: Split<T>,
    tmp: Split<T>,
    acc: Split<T>,
}

impl<T: Real> Rk4Buffers<T> {
    pub(crate) fn new(len: usize) -> Self {
        Self { k: Split::zeros(len), tmp: Split::zeros(len), acc: Split::zeros(len) }
    }
}

/// One classical RK4 step in place on a sorted-basis state.
pub(crate) fn rk4_step<T: Real>(eng: &Engine<T>, x: &mut Split<T>, support: i32, h: T, b: &mut Rk4Buffers<T>, ws: &mut engine::Workspace<T>) {
    let two = lit::<T>(2.0);
    let weights = [h / lit(6.0), h / lit(3.0), h / lit(3.0), h / lit(6.0)];
    let shifts = [h / two, h / two, h];
    b.acc.copy_from(x);
    eng.apply(x, support, &mut b.k, ws);
    for stage in 0..4 {
        b.acc.add_scaled(weights[stage], &b.k);
        if stage == 3 {
            break;
        }
        b.tmp.set_sum(x, shifts[stage], &b.k);
        eng.apply(&b.tmp, support, &mut b.k, ws);
    }
    std::mem::swap(x, &mut b.acc);
}

/// Applies `steps` RK4 steps of size `h` to a general operator.
pub fn propagate_general<T: Real>(model: &LindbladModel<T>, x: &DMatrix<Cx<T>>, h: T, steps: usize) -> Result<DMatrix<Cx<T>>> {
    let half = Cx::new(h * lit(0.5), T::zero());
    let sixth = Cx::new(h / lit(6.0), T::zero());
    let two = Cx::new(lit(2.0), T::zero());
    let mut x = x.clone();
    for _ in 0..steps {
        let k1 = model.apply(&x)?;
        let k2 = model.apply(&(&x + &k1 * half))?;
        let k3 = model.apply(&(&x + &k2 * half))?;
        let k4 = model.apply(&(&x + &k3 * Cx::new(h, T::zero())))?;
        x += (k1 + (k2 + k3) * two + k4) * sixth;
    }
    Ok(x)
}

/// Entries `(row, col)` of operator space whose ket and bra magnetizations
/// differ by `delta_m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaMBlock {
    pub delta_m: i32,
    pub entries: Vec<(usize, usize)>,
}

impl DeltaMBlock {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn gather<T: Real>(&self, m: &DMatrix<Cx<T>>) -> DVector<Cx<T>> {
        DVector::from_iterator(self.dim(), self.entries.iter().map(|&(r, c)| m[(r, c)]))
    }

    pub fn scatter<T: Real>(&self, v: &DVector<Cx<T>>, dim: usize) -> DMatrix<Cx<T>> {
        let mut m = DMatrix::from_element(dim, dim, czero());
        for (&(r, c), z) in self.entries.iter().zip(v.iter()) {
            m[(r, c)] = *z;
        }
        m
    }
}

/// Partition of the `3^n × 3^n` operator space by `Δm = m_ket − m_bra`,
/// ordered from `Δm = −2n` to `2n`.
pub fn delta_m_blocks(n: usize) -> Vec<DeltaMBlock> {
    let mags = basis_magnetizations(n);
    let dim = mags.len();
    let nn = n as i32;
    let mut blocks: Vec<DeltaMBlock> =
        (-2 * nn..=2 * nn).map(|delta_m| DeltaMBlock { delta_m, entries: Vec::new() }).collect();
    for c in 0..dim {
        for r in 0..dim {
            let d = mags[r] - mags[c];
            blocks[(d + 2 * nn) as usize].entries.push((r, c));
        }
    }
    blocks
}

/// The single block for `delta_m`, after checking that the model leaves the
/// block structure intact (every operator conserves or uniformly shifts
/// the magnetization).
pub fn delta_m_block<T: Real>(model: &LindbladModel<T>, delta_m: i32) -> Result<DeltaMBlock> {
    model.magnetization_shifts()?;
    let n = crate::model::sites_for_dim(model.dim())?;
    let mags = basis_magnetizations(n);
    let dim = mags.len();
    let mut entries = Vec::new();
    for c in 0..dim {
        for r in 0..dim {
            if mags[r] - mags[c] == delta_m {
                entries.push((r, c));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::InvalidSpec(format!("Δm = {delta_m} block is empty")));
    }
    Ok(DeltaMBlock { delta_m, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_unit_vector;
    use crate::model::ChainSpec;
    use crate::spin::chain_dim;

    fn random_matrix(dim: usize, seed: u64) -> DMatrix<Cx<f64>> {
        let v = random_unit_vector::<f64>(dim * dim, seed);
        DMatrix::from_fn(dim, dim, |r, c| v[r * dim + c])
    }

    /// Column-stacking superoperator assembled from Kronecker products.
    fn dense_superoperator(h: &Operator<f64>, jumps: &[Operator<f64>], conv: Convention) -> DMatrix<Cx<f64>> {
        let (c, cp) = conv.coefficients::<f64>();
        let d = h.dim();
        let id = DMatrix::<Cx<f64>>::identity(d, d);
        let hd = h.to_dense();
        let i = Cx::new(0.0, 1.0);
        // vec(AXB) = (Bᵀ ⊗ A) vec(X)
        let mut s = (id.kronecker(&hd) - hd.transpose().kronecker(&id)) * (-i);
        for l in jumps {
            let ld = l.to_dense();
            let ldl = ld.adjoint() * &ld;
            s += ld.conjugate().kronecker(&ld) * Cx::new(cp, 0.0);
            s -= (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)) * Cx::new(c, 0.0);
        }
        s
    }

    fn chain_model(n: usize, b: f64, eps: f64, g: f64, k: f64, conv: Convention) -> LindbladModel<f64> {
        LindbladModel::from_chain(&ChainSpec::aklt(n, b).with_epsilon(eps), &DissipatorSpec::new(g, k), conv).unwrap()
    }

    #[test]
    fn matches_dense_superoperator() {
        for n in [2, 3] {
            for conv in [Convention::Factor2, Convention::Half] {
                let model = chain_model(n, 0.3, 0.05, 0.2, 0.15, conv);
                let jumps: Vec<_> = model.jumps().cloned().collect();
                let s = dense_superoperator(model.hamiltonian(), &jumps, conv);
                let d = chain_dim(n);
                for seed in 0..20 {
                    let x = random_matrix(d, seed);
                    let want = &s * DVector::from_column_slice(x.as_slice());
                    let got = model.apply(&x).unwrap();
                    let err = (DVector::from_column_slice(got.as_slice()) - want).camax();
                    assert!(err < 1e-12, "n={n} {conv:?} seed {seed}: {err}");
                    let herm = &x + x.adjoint();
                    let a = model.apply_hermitian(&herm).unwrap();
                    let b = model.apply(&herm).unwrap();
                    assert!((a - b).camax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trace_preserving() {
        let model = chain_model(3, 0.2, 0.0, 0.2, 0.2, Convention::Factor2);
        let x = random_matrix(27, 9);
        let out = model.apply(&x).unwrap();
        assert!(out.trace().norm() < 1e-10 * x.norm());
    }

    #[test]
    fn dimension_mismatch() {
        let model = chain_model(2, 0.2, 0.0, 0.2, 0.2, Convention::Factor2);
        let x = DMatrix::<Cx<f64>>::zeros(27, 27);
        assert!(matches!(model.apply(&x), Err(Error::DimensionMismatch { .. })));
        assert!(LindbladModel::new(Operator::<f64>::zeros(3), vec![Operator::zeros(9)], Convention::Half).is_err());
    }

    #[test]
    fn block_sizes() {
        let blocks = delta_m_blocks(3);
        let total: usize = blocks.iter().map(DeltaMBlock::dim).sum();
        assert_eq!(total, 729);
        assert_eq!(blocks[6 - 1].delta_m, -1);
        assert_eq!(blocks[6 - 1].dim(), 126);
        assert_eq!(blocks[6].dim(), 141);
    }

    #[test]
    fn blocks_are_invariant() {
        let model = chain_model(3, 0.2, 0.1, 0.2, 0.2, Convention::Factor2);
        assert_eq!(model.magnetization_shifts().unwrap(), vec![-1, 2, 2]);
        for block in delta_m_blocks(3) {
            let x = block.scatter(&random_unit_vector::<f64>(block.dim(), 4), 27);
            let y = model.apply(&x).unwrap();
            let back = block.scatter(&block.gather(&y), 27);
            assert!((y - back).camax() < 1e-12, "Δm = {}", block.delta_m);
        }
    }

    #[test]
    fn transverse_field_breaks_blocks() {
        let chain = ChainSpec::aklt(3, 0.2).with_transverse_field(0.1);
        let model = LindbladModel::<f64>::from_chain(&chain, &DissipatorSpec::new(0.2, 0.2), Convention::Factor2).unwrap();
        assert!(matches!(delta_m_block(&model, -1), Err(Error::NotMagnetizationConserving)));
    }

    #[test]
    fn density_matrix_validation() {
        let bad = DMatrix::from_diagonal_element(3, 3, Cx::new(0.5, 0.0));
        assert!(DensityMatrix::new(bad).is_err());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![Cx::new(1.2, 0.0), Cx::new(-0.2, 0.0)]));
        assert!(DensityMatrix::new(neg).is_err());
        let mixed = DensityMatrix::<f64>::maximally_mixed(4);
        assert!(DensityMatrix::new(mixed.matrix().clone()).is_ok());
        let pure = DensityMatrix::from_pure(&StateVector::basis(4, 0));
        assert!((pure.trace_distance(&mixed) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn partial_trace() {
        let psi = StateVector::new(DVector::from_vec(vec![
            Cx::new(1.0, 0.0),
            Cx::new(0.0, 0.0),
            Cx::new(0.0, 0.0),
            Cx::new(1.0, 0.0),
        ]))
        .unwrap();
        let r = DensityMatrix::<f64>::from_pure(&psi).partial_trace_second(2, 2).unwrap();
        assert!((r.matrix() - DMatrix::from_diagonal_element(2, 2, Cx::new(0.5, 0.0))).camax() < 1e-15);
    }

    #[test]
    fn closed_system_matches_exact() {
        let model = chain_model(3, 0.3, 0.1, 0.0, 0.0, Convention::Factor2);
        let psi = StateVector::new(random_unit_vector::<f64>(27, 2)).unwrap();
        let rho0 = DensityMatrix::from_pure(&psi);
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.5).collect();
        let sx = crate::spin::embed(&crate::spin::spin1_local::<f64>().sx, 1, 3).unwrap();
        let opts = EvolveOptions { h: 0.01, positivity_every: 5, ..Default::default() };
        let ev = evolve(&model, &rho0, &grid, &[("sx1".into(), sx.clone())], &opts).unwrap();
        let (vals, vecs) = crate::linalg::hermitian_eigen(model.hamiltonian().to_dense());
        let c = vecs.adjoint() * psi.amplitudes();
        for (k, &t) in grid.iter().enumerate() {
            let ct = DVector::from_fn(27, |i, _| c[i] * Cx::new(0.0, -vals[i] * t).exp());
            let v = &vecs * ct;
            let exact = sx.matrix_element(&v, &v).re;
            assert!((ev.series.values[k][0] - exact).abs() < 1e-8, "t={t}");
        }
        assert!(ev.series.max_trace_drift() < 1e-12);
        let m = ev.series.min_recorded_eigenvalue().unwrap();
        assert!(m > -1e-7, "{m}");
    }

    #[test]
    fn half_convention_is_rate_rescaling() {
        // D_half[√(2γ) L] = D_factor2[√γ L]
        let a = chain_model(2, 0.2, 0.0, 0.2, 0.1, Convention::Factor2);
        let b = chain_model(2, 0.2, 0.0, 0.4, 0.2, Convention::Half);
        let x = random_matrix(9, 1);
        assert!((a.apply(&x).unwrap() - b.apply(&x).unwrap()).camax() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        let model = chain_model(2, 0.2, 0.0, 0.2, 0.1, Convention::Factor2);
        let rho = DensityMatrix::maximally_mixed(9);
        let opts = EvolveOptions::default();
        assert!(evolve(&model, &rho, &[0.0, 0.0], &[], &opts).is_err());
        assert!(evolve(&model, &DensityMatrix::maximally_mixed(3), &[0.0], &[], &opts).is_err());
    }
}
