//! Qutrits coupled to a lossy bosonic mode, and the comparison of its
//! reduced dynamics with the collective-decay model obtained by
//! eliminating the mode (`γ = 4λ²/Γ`). Both models use the half
//! convention.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{evolve, Convention, DensityMatrix, EvolveOptions, LindbladModel};
use crate::model::{build_hamiltonian, ChainSpec};
use crate::operator::Operator;
use crate::scalar::{lit, to_f64, Cx, Real};
use crate::spin::{chain_dim, total_ops};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityModel {
    pub n_qutrits: usize,
    pub lambda: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(rename = "Gamma")]
    pub gamma_cav: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    4
}

impl CavityModel {
    pub fn new(n_qutrits: usize, lambda: f64, gamma_cav: f64) -> Self {
        Self { n_qutrits, lambda, omega: 0.0, gamma_cav, n_max: default_n_max() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qutrits == 0 {
            return Err(Error::InvalidSpec("need at least one qutrit".into()));
        }
        if self.n_max < 2 {
            return Err(Error::InvalidSpec(format!("n_max = {} (need at least 2)", self.n_max)));
        }
        if !(self.gamma_cav > 0.0) || self.lambda < 0.0 {
            return Err(Error::InvalidSpec("Gamma must be positive and lambda non-negative".into()));
        }
        Ok(())
    }

    /// Effective collective decay rate `4λ²/Γ`.
    pub fn effective_gamma(&self) -> f64 {
        4.0 * self.lambda * self.lambda / self.gamma_cav
    }

    fn boson_dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Truncated annihilation operator, `a|n⟩ = √n|n−1⟩`.
pub fn annihilation<T: Real>(n_max: usize) -> Operator<T> {
    let trip = (1..=n_max).map(|n| (n - 1, n, Cx::new(lit::<T>((n as f64).sqrt()), T::zero())));
    Operator::from_triplets(n_max + 1, trip).expect("valid ladder")
}

/// Register Hamiltonian with zero field (the bare pair projector chain for
/// two or more qutrits, nothing for one).
fn register_hamiltonian<T: Real>(n: usize) -> Result<Operator<T>> {
    if n >= 2 {
        build_hamiltonian(&ChainSpec::aklt(n, 0.0))
    } else {
        Ok(Operator::zeros(chain_dim(n)))
    }
}

/// Full model on `qutrits ⊗ mode` (mode fastest).
pub fn build_cavity_model<T: Real>(m: &CavityModel) -> Result<LindbladModel<T>> {
    m.validate()?;
    let n = m.n_qutrits;
    let nb = m.boson_dim();
    let a = annihilation::<T>(m.n_max);
    let ad = a.adjoint();
    let id_q = Operator::identity(chain_dim(n));
    let id_b = Operator::identity(nb);
    let tot = total_ops::<T>(n);
    let coupling = &tot.sm.kron(&ad) + &tot.sp.kron(&a);
    let mut h = &register_hamiltonian::<T>(n)?.kron(&id_b) + &coupling.scale_real(lit(m.lambda));
    if m.omega != 0.0 {
        h = &h + &id_q.kron(&(&ad * &a)).scale_real(lit(m.omega));
    }
    let jump = id_q.kron(&a).scale_real(lit(m.gamma_cav.sqrt()));
    LindbladModel::new(h, vec![jump], Convention::Half)
}

/// Qutrit-only model with jump `√γ S⁻`, `γ = 4λ²/Γ`.
pub fn build_effective_model<T: Real>(m: &CavityModel) -> Result<LindbladModel<T>> {
    m.validate()?;
    let sm = total_ops::<T>(m.n_qutrits).sm.scale_real(lit(m.effective_gamma().sqrt()));
    LindbladModel::new(register_hamiltonian(m.n_qutrits)?, vec![sm], Convention::Half)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityComparison {
    pub times: Vec<f64>,
    /// trace distance between the reduced full state and the effective state
    pub trace_distance: Vec<f64>,
    pub boson_population: Vec<f64>,
}

impl CavityComparison {
    pub fn max_trace_distance(&self) -> f64 {
        self.trace_distance.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_population(&self) -> f64 {
        self.boson_population.iter().copied().fold(0.0, f64::max)
    }
}

/// Evolves `ρ_q ⊗ |0⟩⟨0|` under the full model and `ρ_q` under the
/// effective model on the same grid.
pub fn adiabatic_comparison<T: Real>(
    m: &CavityModel,
    rho0: &DensityMatrix<T>,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<CavityComparison> {
    let dq = chain_dim(m.n_qutrits);
    if rho0.dim() != dq {
        return Err(Error::DimensionMismatch { expected: dq, found: rho0.dim() });
    }
    let nb = m.boson_dim();
    let mut vac = DMatrix::from_element(nb, nb, Cx::new(T::zero(), T::zero()));
    vac[(0, 0)] = Cx::new(T::one(), T::zero());
    let joint = DensityMatrix::new(rho0.matrix().kronecker(&vac))?;
    let full = build_cavity_model::<T>(m)?;
    let eff = build_effective_model::<T>(m)?;
    let a = annihilation::<T>(m.n_max);
    let number = Operator::identity(dq).kron(&(&a.adjoint() * &a));
    let opts = EvolveOptions { snapshots: true, ..opts.clone() };
    let ev_full = evolve(&full, &joint, t_grid, &[("n".to_string(), number)], &opts)?;
    let ev_eff = evolve(&eff, rho0, t_grid, &[], &opts)?;
    let mut trace_distance = Vec::with_capacity(t_grid.len());
    for (f, e) in ev_full.snapshots.iter().zip(&ev_eff.snapshots) {
        let reduced = f.partial_trace_second(dq, nb)?;
        trace_distance.push(to_f64(reduced.trace_distance(e)));
    }
    let boson_population = ev_full.series.column(0);
    let limit = 0.1 * m.n_max as f64;
    let peak = boson_population.iter().copied().fold(0.0, f64::max);
    if peak > limit {
        return Err(Error::Truncation { population: peak, limit });
    }
    Ok(CavityComparison { times: t_grid.to_vec(), trace_distance, boson_population })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::StateVector;
    use crate::trajectory::mixed_sector_state;

    fn grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_max * k as f64 / n as f64).collect()
    }

    #[test]
    fn number_operator_spectrum() {
        let a = annihilation::<f64>(4);
        let num = (&a.adjoint() * &a).to_dense();
        for k in 0..5 {
            assert!((num[(k, k)].re - k as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn excitation_number_conserved() {
        for omega in [0.0, 0.7] {
            let m = CavityModel { omega, ..CavityModel::new(2, 0.3, 2.0) };
            let full = build_cavity_model::<f64>(&m).unwrap();
            let a = annihilation::<f64>(4);
            let nexc = &total_ops::<f64>(2).sz.kron(&Operator::identity(5)) + &Operator::identity(9).kron(&(&a.adjoint() * &a));
            assert!(full.hamiltonian().commutator(&nexc).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn free_mode_decays_at_gamma() {
        let m = CavityModel { lambda: 0.0, ..CavityModel::new(1, 0.0, 1.5) };
        let full = build_cavity_model::<f64>(&m).unwrap();
        // qutrit |0⟩, mode |2⟩
        let rho = DensityMatrix::from_pure(&StateVector::basis(15, 5 + 2));
        let a = annihilation::<f64>(4);
        let number = Operator::identity(3).kron(&(&a.adjoint() * &a));
        let g = grid(2.0, 20);
        let ev = evolve(&full, &rho, &g, &[("n".into(), number)], &EvolveOptions { h: 0.01, ..Default::default() }).unwrap();
        for (t, n) in g.iter().zip(ev.series.column(0)) {
            assert!((n - 2.0 * (-1.5 * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn uncoupled_models_agree() {
        let m = CavityModel::new(2, 0.0, 2.0);
        let rho = DensityMatrix::from_pure(&mixed_sector_state::<f64>());
        let cmp = adiabatic_comparison(&m, &rho, &grid(5.0, 10), &EvolveOptions { h: 0.05, ..Default::default() }).unwrap();
        assert!(cmp.max_trace_distance() < 1e-12);
    }

    #[test]
    fn bad_cavity_limit_converges() {
        let rho = DensityMatrix::from_pure(&mixed_sector_state::<f64>());
        let gamma: f64 = 0.02;
        let mut last = f64::INFINITY;
        for big_gamma in [2.0, 4.0] {
            let lambda = (gamma * big_gamma).sqrt() / 2.0;
            let m = CavityModel::new(2, lambda, big_gamma);
            assert!((m.effective_gamma() - gamma).abs() < 1e-15);
            let cmp = adiabatic_comparison(&m, &rho, &grid(3.0 / gamma, 30), &EvolveOptions { h: 0.05, ..Default::default() }).unwrap();
            let err = cmp.max_trace_distance();
            assert!(err < 0.05, "{err}");
            assert!(err < last);
            last = err;
            // adiabaticity sanity bound with at most three register excitations above the bottom
            assert!(cmp.max_population() < 10.0 * (lambda / big_gamma).powi(2) * 4.0);
        }
    }

    #[test]
    fn rejects_invalid() {
        assert!(build_cavity_model::<f64>(&CavityModel { n_max: 1, ..CavityModel::new(2, 0.1, 2.0) }).is_err());
        assert!(build_cavity_model::<f64>(&CavityModel::new(2, 0.1, 0.0)).is_err());
    }
}
