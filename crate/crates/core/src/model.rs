//! Chain Hamiltonians and jump operators built from declarative specs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::scalar::{creal, lit, to_f64, Real};
use crate::spin::{bond_dot, chain_dim, embed, spin1_local, total_ops};

/// Full parameterization of the chain Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "B", default)]
    pub b: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(rename = "Bx", default)]
    pub bx: f64,
    #[serde(rename = "Jmax", default)]
    pub jmax: f64,
    #[serde(rename = "Bmax", default)]
    pub bmax: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChainSpec {
    /// Plain AKLT chain of `n` sites with uniform field `b`.
    pub fn aklt(n: usize, b: f64) -> Self {
        Self { n, b, epsilon: 0.0, bx: 0.0, jmax: 0.0, bmax: 0.0, seed: 0 }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_disorder(mut self, jmax: f64, bmax: f64, seed: u64) -> Self {
        self.jmax = jmax;
        self.bmax = bmax;
        self.seed = seed;
        self
    }

    pub fn with_transverse_field(mut self, bx: f64) -> Self {
        self.bx = bx;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n < 2 {
            return bad(format!("N = {} must be at least 2", self.n));
        }
        if !(0.0..=1.0 / 6.0 + 1e-15).contains(&self.epsilon) {
            return bad(format!("epsilon = {} outside [0, 1/6]", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.jmax) {
            return bad(format!("Jmax = {} outside [0, 1)", self.jmax));
        }
        if self.bmax < 0.0 || (self.bmax > 0.0 && self.bmax > self.b) {
            return bad(format!("Bmax = {} outside [0, B = {}]", self.bmax, self.b));
        }
        if self.epsilon > 0.0 && self.jmax > 0.0 {
            return bad("epsilon and Jmax cannot both be nonzero".into());
        }
        if ![self.b, self.bx].iter().all(|x| x.is_finite()) {
            return bad("fields must be finite".into());
        }
        Ok(())
    }

    /// Whether the Hamiltonian conserves total magnetization.
    pub fn conserves_magnetization(&self) -> bool {
        self.bx == 0.0
    }
}

/// Collective and local dissipation rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipatorSpec {
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub kappa: f64,
}

impl DissipatorSpec {
    pub fn new(gamma: f64, kappa: f64) -> Self {
        Self { gamma, kappa }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.kappa >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "rates must be non-negative (gamma = {}, kappa = {})",
                self.gamma, self.kappa
            )));
        }
        Ok(())
    }
}

/// Disorder realization: bond reductions `J_1..J_{N−1}` and field
/// reductions `B_1..B_N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Disorder {
    pub bond: Vec<f64>,
    pub field: Vec<f64>,
}

/// Draws the disorder of `spec` from a ChaCha8 stream seeded with
/// `spec.seed`. All `N−1` bond values are drawn first, then all `N` field
/// values, each as `amplitude · U[0, 1)` with 53-bit uniforms.
pub fn draw_disorder(spec: &ChainSpec) -> Disorder {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bond = (1..spec.n).map(|_| spec.jmax * rng.gen::<f64>()).collect();
    let field = (0..spec.n).map(|_| spec.bmax * rng.gen::<f64>()).collect();
    Disorder { bond, field }
}

pub fn build_hamiltonian<T: Real>(spec: &ChainSpec) -> Result<Operator<T>> {
    spec.validate()?;
    let n = spec.n;
    let dis = draw_disorder(spec);
    let loc = spin1_local::<T>();
    let third = Operator::identity(chain_dim(n)).scale_real(lit::<T>(1.0 / 3.0));
    let mut h = Operator::zeros(chain_dim(n));
    for (j, jj) in (1..n).zip(&dis.bond) {
        let x = bond_dot::<T>(j, n)?;
        let x2 = &x * &x;
        let bracket = &(&x.scale_real(lit(0.5)) + &x2.scale_real(lit(1.0 / 6.0 - spec.epsilon))) + &third;
        h = &h + &bracket.scale_real(lit(1.0 - jj));
    }
    for (j, bj) in (1..=n).zip(&dis.field) {
        let coef = (spec.b - bj) / n as f64;
        if coef != 0.0 {
            h = &h + &embed(&loc.sz, j, n)?.scale_real(lit(coef));
        }
        if spec.bx != 0.0 {
            h = &h + &embed(&loc.sx, j, n)?.scale_real(lit(spec.bx / n as f64));
        }
    }
    h.into_hermitian()
}

/// `L_G = √γ S⁻`.
pub fn build_global_dissipator<T: Real>(spec: &DissipatorSpec, n: usize) -> Result<Operator<T>> {
    spec.validate()?;
    Ok(total_ops::<T>(n).sm.scale_real(lit::<T>(spec.gamma).sqrt()))
}

/// `L_{j,j+1} = √κ |00⟩⟨−−|` on every bond, `j = 1..N−1`.
pub fn build_local_dissipators<T: Real>(spec: &DissipatorSpec, n: usize) -> Result<Vec<Operator<T>>> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::InvalidSpec(format!("N = {n} must be at least 2")));
    }
    // |00⟩ is local index 1·3+1, |−−⟩ is 2·3+2
    let pair = Operator::from_triplets(9, [(4, 8, creal(lit::<T>(spec.kappa).sqrt()))])?;
    (1..n).map(|j| embed(&pair, j, n)).collect()
}

/// Commutator norms of a chain Hamiltonian with the collective spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub sz_commutator: f64,
    pub s2_commutator: f64,
}

/// Number of sites `n` with `3^n = dim`.
pub fn sites_for_dim(dim: usize) -> Result<usize> {
    let mut n = 0;
    let mut d = 1;
    while d < dim {
        d *= 3;
        n += 1;
    }
    if d != dim {
        return Err(Error::InvalidSpec(format!("dimension {dim} is not a power of 3")));
    }
    Ok(n)
}

pub fn symmetry_check<T: Real>(h: &Operator<T>) -> Result<SymmetryReport> {
    let n = sites_for_dim(h.dim())?;
    let tot = total_ops::<T>(n);
    Ok(SymmetryReport {
        sz_commutator: to_f64(h.commutator(&tot.sz)?.max_abs()),
        s2_commutator: to_f64(h.commutator(&tot.s2)?.max_abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cabs;
    use crate::spin::pair_projector_spin2;

    fn sorted_eigs(h: &Operator<f64>) -> Vec<f64> {
        let mut ev: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn two_site_hamiltonian_is_projector() {
        let h = build_hamiltonian::<f64>(&ChainSpec::aklt(2, 0.0)).unwrap();
        let p = pair_projector_spin2::<f64>(1, 2).unwrap();
        assert!((&h - &p).max_abs() < 1e-14);
        let ev = sorted_eigs(&h);
        assert!(ev[..4].iter().all(|e| e.abs() < 1e-12));
        assert!(ev[4..].iter().all(|e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn six_site_ground_degeneracy() {
        let h = build_hamiltonian::<f64>(&ChainSpec::aklt(6, 0.0)).unwrap();
        let ev = sorted_eigs(&h);
        assert!(ev[..4].iter().all(|e| e.abs() < 1e-10), "{:?}", &ev[..5]);
        assert!(ev[4] > 1e-3);
    }

    #[test]
    fn validation_rejects_combinations() {
        let both = ChainSpec::aklt(4, 0.2).with_epsilon(0.1).with_disorder(0.5, 0.0, 1);
        assert!(matches!(build_hamiltonian::<f64>(&both), Err(Error::InvalidSpec(_))));
        let bmax = ChainSpec::aklt(4, 0.2).with_disorder(0.0, 0.3, 1);
        assert!(matches!(build_hamiltonian::<f64>(&bmax), Err(Error::InvalidSpec(_))));
        assert!(ChainSpec::aklt(1, 0.0).validate().is_err());
        assert!(ChainSpec::aklt(3, 0.0).with_epsilon(0.2).validate().is_err());
        assert!(DissipatorSpec::new(-0.1, 0.0).validate().is_err());
    }

    #[test]
    fn global_dissipator() {
        let zero = build_global_dissipator::<f64>(&DissipatorSpec::new(0.0, 0.0), 3).unwrap();
        assert_eq!(zero.nnz(), 0);
        let lg = build_global_dissipator::<f64>(&DissipatorSpec::new(0.2, 0.0), 2).unwrap();
        // |++⟩ = index 0; |0+⟩ = 3, |+0⟩ = 1
        let amp = 0.2f64.sqrt() * 2f64.sqrt();
        assert!((lg.get(3, 0).re - amp).abs() < 1e-15);
        assert!((lg.get(1, 0).re - amp).abs() < 1e-15);
        assert_eq!((0..9).filter(|&r| lg.get(r, 0) != crate::scalar::czero()).count(), 2);
        let lg4 = build_global_dissipator::<f64>(&DissipatorSpec::new(0.2, 0.0), 4).unwrap();
        // annihilates |−−−−⟩
        assert!((0..81).all(|r| cabs(lg4.get(r, 80)) == 0.0));
    }

    #[test]
    fn local_dissipators() {
        let ls = build_local_dissipators::<f64>(&DissipatorSpec::new(0.0, 0.2), 2).unwrap();
        assert_eq!(ls.len(), 1);
        assert_eq!(ls[0].nnz(), 1);
        assert!((ls[0].get(4, 8).re - 0.2f64.sqrt()).abs() < 1e-15);
        let sz = total_ops::<f64>(4).sz;
        for l in build_local_dissipators::<f64>(&DissipatorSpec::new(0.0, 0.2), 4).unwrap() {
            assert_eq!(l.nnz(), 9);
            assert_eq!((&l * &l).nnz(), 0);
            let c = sz.commutator(&l).unwrap();
            assert!((&c - &l.scale_real(2.0)).max_abs() < 1e-14);
        }
    }

    #[test]
    fn symmetry_reports() {
        let h = build_hamiltonian::<f64>(&ChainSpec::aklt(4, 0.2)).unwrap();
        let r = symmetry_check(&h).unwrap();
        assert!(r.sz_commutator < 1e-12 && r.s2_commutator < 1e-12);
        let bx = 0.02;
        let h = build_hamiltonian::<f64>(&ChainSpec::aklt(4, 0.2).with_transverse_field(bx)).unwrap();
        assert!(symmetry_check(&h).unwrap().sz_commutator > 0.01 * bx / 4.0);
        for eps in [0.05, 0.1, 1.0 / 6.0] {
            let h = build_hamiltonian::<f64>(&ChainSpec::aklt(4, 0.0).with_epsilon(eps)).unwrap();
            let r = symmetry_check(&h).unwrap();
            assert!(r.sz_commutator < 1e-12 && r.s2_commutator < 1e-12);
        }
        let h = build_hamiltonian::<f64>(&ChainSpec::aklt(4, 0.2).with_disorder(0.5, 0.04, 7)).unwrap();
        assert!(symmetry_check(&h).unwrap().sz_commutator < 1e-12);
    }

    #[test]
    fn deterministic_and_hermitian() {
        let spec = ChainSpec::aklt(4, 0.2).with_disorder(0.5, 0.04, 42);
        let a = build_hamiltonian::<f64>(&spec).unwrap();
        let b = build_hamiltonian::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.hermitian_hint());
        assert!((&a - &a.adjoint()).max_abs() < 1e-12);
        let other = build_hamiltonian::<f64>(&ChainSpec { seed: 43, ..spec }).unwrap();
        assert!((&a - &other).max_abs() > 1e-6);
        let d = draw_disorder(&ChainSpec::aklt(4, 0.2).with_disorder(0.5, 0.04, 42));
        assert_eq!(d.bond.len(), 3);
        assert_eq!(d.field.len(), 4);
        assert!(d.bond.iter().all(|&j| (0.0..0.5).contains(&j)));
        assert!(d.field.iter().all(|&b| (0.0..0.04).contains(&b)));
    }

    #[test]
    fn heisenberg_limit() {
        let n = 4;
        let h = build_hamiltonian::<f64>(&ChainSpec::aklt(n, 0.0).with_epsilon(1.0 / 6.0)).unwrap();
        let mut heis = Operator::zeros(chain_dim(n));
        for j in 1..n {
            heis = &heis + &bond_dot::<f64>(j, n).unwrap().scale_real(0.5);
        }
        heis = &heis + &Operator::identity(chain_dim(n)).scale_real((n - 1) as f64 / 3.0);
        assert!((&h - &heis).max_abs() < 1e-12);
    }

    #[test]
    fn config_keys() {
        let spec: ChainSpec = serde_json::from_str(r#"{"N": 6, "B": 0.2, "Jmax": 0.5, "seed": 3}"#).unwrap();
        assert_eq!(spec.n, 6);
        assert_eq!(spec.jmax, 0.5);
        assert_eq!(spec.epsilon, 0.0);
    }
}
