//! Digital collective decay: a qutrit register coupled to one spin-1/2
//! ancilla by `H_A = Σ_j (S_j^+ ⊗ |0⟩⟨1| + S_j^− ⊗ |1⟩⟨0|)`, a symmetric
//! Trotter step, then an ancilla measurement and reset.
//!
//! Basis: qutrits slowest, ancilla fastest (`|q⟩|a⟩` at index `2q + a`).
//! One circuit step is one unit of time, so the averaged dynamics follows
//! the collective decay `√γ S⁻` with `γ = λΔt/4` per step.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;
use crate::operator::{Operator, StateVector};
use crate::scalar::{cis, czero, lit, to_f64, Cx, Real};
use crate::spin::{chain_dim, embed, spin1_local, total_ops};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qutrits: usize,
    pub lambda: f64,
    pub dt: f64,
    pub steps: usize,
    pub trajectories: usize,
    pub seed: u64,
    /// averaged density matrices are kept every this many steps (0: none)
    #[serde(default)]
    pub snapshot_every: usize,
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_qutrits < 2 {
            return Err(Error::InvalidSpec(format!("n_qutrits = {} (need at least 2)", self.n_qutrits)));
        }
        if !(self.lambda > 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidSpec("lambda and dt must be positive".into()));
        }
        if self.lambda * self.dt >= 0.1 {
            return Err(Error::InvalidSpec(format!("lambda·dt = {} must stay below 0.1", self.lambda * self.dt)));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidSpec("at least one trajectory is required".into()));
        }
        Ok(())
    }

    /// Rotation angle of the composed step, `√(λΔt)/2`.
    pub fn theta(&self) -> f64 {
        (self.lambda * self.dt).sqrt() / 2.0
    }

    /// Collective decay rate per step, `λΔt/4`.
    pub fn gamma(&self) -> f64 {
        self.lambda * self.dt / 4.0
    }
}

/// `|0⟩⟨1|` and `|1⟩⟨0|` on the ancilla.
fn ancilla_ladder<T: Real>() -> (Operator<T>, Operator<T>) {
    let one = Cx::new(T::one(), T::zero());
    let down = Operator::from_triplets(2, [(0, 1, one)]).expect("2x2");
    (down.clone(), down.adjoint())
}

/// Coupling of qutrit `j` (1-based) to the ancilla.
pub fn coupling_term<T: Real>(j: usize, n: usize) -> Result<Operator<T>> {
    let loc = spin1_local::<T>();
    let (a_lower, a_raise) = ancilla_ladder::<T>();
    let sp = embed(&loc.sp, j, n)?;
    let sm = embed(&loc.sm, j, n)?;
    Ok(&sp.kron(&a_lower) + &sm.kron(&a_raise))
}

pub fn build_ha<T: Real>(n: usize) -> Result<Operator<T>> {
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one qutrit".into()));
    }
    let mut h = Operator::zeros(chain_dim(n) * 2);
    for j in 1..=n {
        h = &h + &coupling_term(j, n)?;
    }
    Ok(h)
}

/// `exp(−iαH)` for Hermitian `H` by dense diagonalization.
fn expm_hermitian<T: Real>(h: &Operator<T>, alpha: f64) -> DMatrix<Cx<T>> {
    let (vals, vecs) = hermitian_eigen(h.to_dense());
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&e| cis(-lit::<T>(alpha) * e))));
    &vecs * phases * vecs.adjoint()
}

/// `exp(−iθH_A)`.
pub fn exact_unitary<T: Real>(n: usize, theta: f64) -> Result<DMatrix<Cx<T>>> {
    Ok(expm_hermitian(&build_ha::<T>(n)?, theta))
}

/// Symmetric composition: half steps of `H_1..H_{n−1}` around a full step
/// of `H_n`. For two qutrits this is `e^{−iθH₁/2}·e^{−iθH₂}·e^{−iθH₁/2}`.
pub fn trotter_unitary<T: Real>(n: usize, theta: f64) -> Result<DMatrix<Cx<T>>> {
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one qutrit".into()));
    }
    let mut u = expm_hermitian(&coupling_term::<T>(n, n)?, theta);
    for j in (1..n).rev() {
        let half = expm_hermitian(&coupling_term::<T>(j, n)?, theta / 2.0);
        u = &half * u * &half;
    }
    Ok(u)
}

/// Outcome of one ancilla measurement.
#[derive(Clone, Debug)]
pub struct Measurement<T: Real> {
    pub outcome: u8,
    /// probability of `m = 1`
    pub p_jump: f64,
    /// normalized register state after the ancilla reset
    pub register: DVector<Cx<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    /// steps (1-based) at which `m = 1` was recorded
    pub jump_times: Vec<usize>,
    pub outcomes: Vec<u8>,
    pub jump_count: usize,
    /// `⟨S^z_tot⟩` of the register after each step
    pub sz: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult<T: Real> {
    pub gamma: f64,
    /// empirical `E[dN]` at steps `1..=steps`
    pub mean_jumps: Vec<f64>,
    /// standard error of each `mean_jumps` entry
    pub jump_stderr: Vec<f64>,
    /// `γ⟨S⁺S⁻⟩` on the averaged state entering each step
    pub expected_jumps: Vec<f64>,
    /// `⟨S^z_tot⟩` of the averaged state after each step, index 0 = initial
    pub mean_sz: Vec<f64>,
    /// `(step, averaged ρ)` at the snapshot cadence, always including the last step
    pub snapshots: Vec<(usize, DMatrix<Cx<T>>)>,
    pub records: Vec<TrajectoryRecord>,
}

impl<T: Real> EnsembleResult<T> {
    /// `(Σ E[dN] − Σ γ⟨S⁺S⁻⟩) / s.e.`, with the standard error taken from
    /// the spread of per-trajectory jump totals.
    pub fn pooled_jump_zscore(&self) -> f64 {
        let n = self.records.len() as f64;
        let totals: Vec<f64> = self.records.iter().map(|r| r.jump_count as f64).collect();
        let mean = totals.iter().sum::<f64>() / n;
        let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let expected: f64 = self.expected_jumps.iter().sum();
        (mean - expected) / (var / n).sqrt()
    }
}

pub struct Circuit<T: Real> {
    spec: CircuitSpec,
    u: DMatrix<Cx<T>>,
    dim: usize,
    sz: Operator<T>,
    spsm: Operator<T>,
}

impl<T: Real> Circuit<T> {
    pub fn new(spec: CircuitSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_qutrits;
        let u = trotter_unitary(n, spec.theta())?;
        let tot = total_ops::<T>(n);
        let spsm = &tot.sp * &tot.sm;
        Ok(Self { dim: chain_dim(n), u, sz: tot.sz, spsm, spec })
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn unitary(&self) -> &DMatrix<Cx<T>> {
        &self.u
    }

    /// Register state with the ancilla in `|0⟩`, after one Trotter step.
    pub fn trotter_step(&self, register: &DVector<Cx<T>>) -> Result<DVector<Cx<T>>> {
        if register.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: register.len() });
        }
        let mut full = DVector::from_element(2 * self.dim, czero());
        for (q, z) in register.iter().enumerate() {
            full[2 * q] = *z;
        }
        Ok(&self.u * full)
    }

    /// Projects the ancilla with Born probabilities and resets it to `|0⟩`.
    pub fn measure_and_reset<R: Rng>(&self, full: &DVector<Cx<T>>, rng: &mut R) -> Result<Measurement<T>> {
        let part = |a: usize| DVector::from_iterator(self.dim, (0..self.dim).map(|q| full[2 * q + a]));
        let (r0, r1) = (part(0), part(1));
        let (p0, p1) = (to_f64(r0.norm_squared()), to_f64(r1.norm_squared()));
        if p0 < 1e-15 && p1 < 1e-15 {
            return Err(Error::InvalidState("both ancilla outcomes have vanishing weight".into()));
        }
        let p_jump = p1 / (p0 + p1);
        let u: f64 = rng.gen();
        let (outcome, r) = if u < p_jump { (1, r1) } else { (0, r0) };
        Ok(Measurement { outcome, p_jump, register: StateVector::new(r)?.into_amplitudes() })
    }

    fn run_one(&self, psi0: &DVector<Cx<T>>, index: usize, acc: &mut [DMatrix<Cx<T>>], jumps: &mut [f64]) -> Result<TrajectoryRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ index as u64);
        let mut psi = psi0.clone();
        let mut rec = TrajectoryRecord { index, jump_times: Vec::new(), outcomes: Vec::with_capacity(self.spec.steps), jump_count: 0, sz: Vec::new() };
        for step in 1..=self.spec.steps {
            let m = self.measure_and_reset(&self.trotter_step(&psi)?, &mut rng)?;
            psi = m.register;
            rec.outcomes.push(m.outcome);
            if m.outcome == 1 {
                rec.jump_times.push(step);
                rec.jump_count += 1;
                jumps[step - 1] += 1.0;
            }
            rec.sz.push(to_f64(self.sz.matrix_element(&psi, &psi).re));
            acc[step] += &psi * psi.adjoint();
        }
        Ok(rec)
    }

    /// Runs every trajectory from the same register state. Trajectory `i`
    /// draws from a stream seeded with `seed ⊕ i`.
    pub fn run_ensemble(&self, psi0: &StateVector<T>) -> Result<EnsembleResult<T>> {
        let psi0 = psi0.amplitudes();
        if psi0.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: psi0.len() });
        }
        let steps = self.spec.steps;
        let ntraj = self.spec.trajectories;
        let mut acc = vec![DMatrix::from_element(self.dim, self.dim, czero::<T>()); steps + 1];
        let mut jumps = vec![0.0; steps];
        let mut records = Vec::with_capacity(ntraj);
        for i in 0..ntraj {
            records.push(self.run_one(psi0, i, &mut acc, &mut jumps)?);
        }
        let inv = lit::<T>(1.0 / ntraj as f64);
        acc[0] = psi0 * psi0.adjoint();
        for m in acc.iter_mut().skip(1) {
            *m *= Cx::new(inv, T::zero());
        }
        let gamma = self.spec.gamma();
        let mean_jumps: Vec<f64> = jumps.iter().map(|j| j / ntraj as f64).collect();
        let jump_stderr = mean_jumps.iter().map(|&p| (p * (1.0 - p) / ntraj as f64).sqrt()).collect();
        let expect = |m: &DMatrix<Cx<T>>, op: &Operator<T>| to_f64(op.mul_dense(m).trace().re);
        let expected_jumps = acc[..steps].iter().map(|m| gamma * expect(m, &self.spsm)).collect();
        let mean_sz = acc.iter().map(|m| expect(m, &self.sz)).collect();
        let every = self.spec.snapshot_every;
        let snapshots = acc
            .iter()
            .enumerate()
            .filter(|(k, _)| *k == steps || (every > 0 && k % every == 0))
            .map(|(k, m)| (k, m.clone()))
            .collect();
        Ok(EnsembleResult { gamma, mean_jumps, jump_stderr, expected_jumps, mean_sz, snapshots, records })
    }
}

/// Two-qutrit register state `(|S=0⟩ + |1,−1⟩ + |1,1⟩ + |2,2⟩)/2`, which
/// has both dark and decaying components.
pub fn mixed_sector_state<T: Real>() -> StateVector<T> {
    // single-qutrit order |+⟩,|0⟩,|−⟩; pair index 3a + b
    let s3 = 1.0 / 3f64.sqrt();
    let s2 = 1.0 / 2f64.sqrt();
    let mut v = DVector::from_element(9, czero::<T>());
    let mut add = |i: usize, x: f64| v[i] += Cx::new(lit::<T>(x), T::zero());
    // singlet (|+−⟩ − |00⟩ + |−+⟩)/√3
    add(2, s3);
    add(4, -s3);
    add(6, s3);
    // |1,−1⟩ = (|0−⟩ − |−0⟩)/√2
    add(5, s2);
    add(7, -s2);
    // |1,1⟩ = (|+0⟩ − |0+⟩)/√2
    add(1, s2);
    add(3, -s2);
    // |2,2⟩ = |++⟩
    add(0, 1.0);
    StateVector::new(v).expect("nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_unit_vector;

    fn spec(lambda_dt: f64) -> CircuitSpec {
        CircuitSpec { n_qutrits: 2, lambda: 1.0, dt: lambda_dt, steps: 10, trajectories: 4, seed: 11, snapshot_every: 0 }
    }

    #[test]
    fn coupling_matrix_elements() {
        let h = build_ha::<f64>(1).unwrap();
        // |0⟩_q|1⟩_A is index 3; |+⟩_q|0⟩_A is index 0
        assert!((h.get(0, 3) - Cx::new(2f64.sqrt(), 0.0)).norm() < 1e-14);
        let h2 = build_ha::<f64>(2).unwrap();
        assert!(crate::operator::max_abs_diff(&h2, &h2.adjoint()) < 1e-14);
        let sum = &coupling_term::<f64>(1, 2).unwrap() + &coupling_term::<f64>(2, 2).unwrap();
        assert!(crate::operator::max_abs_diff(&h2, &sum) < 1e-14);
        // excitation number Sz_tot + |1⟩⟨1|_A
        let sz = total_ops::<f64>(2).sz.kron(&Operator::identity(2));
        let na = Operator::identity(9).kron(&Operator::diagonal(&[0.0, 1.0]));
        let nexc = &sz + &na;
        assert!(h2.commutator(&nexc).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn trotter_is_unitary_and_third_order() {
        let err = |theta: f64| (trotter_unitary::<f64>(2, theta).unwrap() - exact_unitary::<f64>(2, theta).unwrap()).norm();
        let u = trotter_unitary::<f64>(2, 0.2).unwrap();
        assert!((&u * u.adjoint() - DMatrix::identity(18, 18)).norm() < 1e-12);
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 8.0).abs() < 0.2 * 8.0, "{ratio}");
        assert!(err(1e-4) < 1e-10);
        // three qutrits keep the symmetric composition
        let r3 = {
            let e = |t: f64| (trotter_unitary::<f64>(3, t).unwrap() - exact_unitary::<f64>(3, t).unwrap()).norm();
            e(0.1) / e(0.05)
        };
        assert!((r3 - 8.0).abs() < 0.2 * 8.0, "{r3}");
    }

    #[test]
    fn dark_register_is_untouched() {
        let c = Circuit::<f64>::new(spec(0.05)).unwrap();
        let mut v = DVector::from_element(9, czero());
        v[8] = Cx::new(1.0, 0.0);
        let out = c.trotter_step(&v).unwrap();
        assert!((out[16] - Cx::new(1.0, 0.0)).norm() < 1e-12);
        let m = c.measure_and_reset(&out, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(m.p_jump, 0.0);
        assert_eq!(m.outcome, 0);
    }

    #[test]
    fn jump_probability_first_order() {
        let s = spec(0.05);
        let c = Circuit::<f64>::new(s.clone()).unwrap();
        let theta2 = s.theta().powi(2);
        let tot = total_ops::<f64>(2);
        for seed in 0..10 {
            let psi = random_unit_vector::<f64>(9, seed);
            let out = c.trotter_step(&psi).unwrap();
            let m = c.measure_and_reset(&out, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let x = tot.sm.apply(&psi).norm_squared();
            let x2 = tot.sp.apply(&tot.sm.apply(&psi)).norm_squared();
            assert!((m.p_jump - theta2 * x).abs() <= theta2 * theta2 * x2, "seed {seed}");
            // post-jump state ∝ S⁻ψ, no-jump state ∝ (1 − θ²S⁺S⁻/2)ψ
            let jumped = StateVector::new(tot.sm.apply(&psi)).unwrap();
            let r1 = StateVector::new(DVector::from_iterator(9, (0..9).map(|q| out[2 * q + 1]))).unwrap();
            let r0 = StateVector::new(DVector::from_iterator(9, (0..9).map(|q| out[2 * q]))).unwrap();
            let no_jump = StateVector::new(&psi - tot.sp.apply(&tot.sm.apply(&psi)) * Cx::new(theta2 / 2.0, 0.0)).unwrap();
            let fid = |a: &StateVector<f64>, b: &StateVector<f64>| (1.0 - a.amplitudes().dotc(b.amplitudes()).norm_sqr()).max(0.0).sqrt();
            let bound = 10.0 * (s.lambda * s.dt).powf(1.5);
            assert!(fid(&jumped, &r1) < bound);
            assert!(fid(&no_jump, &r0) < bound);
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_bookkept() {
        let s = CircuitSpec { steps: 40, trajectories: 50, ..spec(0.05) };
        let c = Circuit::<f64>::new(s).unwrap();
        // |++⟩ has definite magnetization 2
        let psi = StateVector::basis(9, 0);
        let a = c.run_ensemble(&psi).unwrap();
        let b = c.run_ensemble(&psi).unwrap();
        assert_eq!(a.records, b.records);
        for r in &a.records {
            assert_eq!(r.jump_count, r.outcomes.iter().filter(|&&m| m == 1).count());
            for (k, sz) in r.sz.iter().enumerate() {
                let done = r.jump_times.iter().filter(|&&t| t <= k + 1).count();
                assert!((sz - (2.0 - done as f64)).abs() < 1e-10);
            }
        }
        let (_, last) = a.snapshots.last().unwrap();
        assert!((last.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Circuit::<f64>::new(spec(0.2)).is_err());
        assert!(Circuit::<f64>::new(CircuitSpec { n_qutrits: 1, ..spec(0.05) }).is_err());
        assert!(Circuit::<f64>::new(CircuitSpec { trajectories: 0, ..spec(0.05) }).is_err());
    }

    #[test]
    fn mixed_state_components() {
        let psi = mixed_sector_state::<f64>();
        let tot = total_ops::<f64>(2);
        // S⁺S⁻ expectation: 0 (singlet) + 0 (|1,−1⟩) + 2 (|1,1⟩) + 4 (|2,2⟩), averaged
        let x = tot.sm.apply(psi.amplitudes()).norm_squared();
        assert!((x - 1.5).abs() < 1e-12, "{x}");
    }
}
