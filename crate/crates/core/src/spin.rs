//! Spin-1 algebra on the `3^N`-dimensional open-chain Hilbert space.
//!
//! Basis convention: site-major tensor product with site 1 as the slowest
//! index; each site ordered `|+⟩, |0⟩, |−⟩`.

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::scalar::{creal, cx, lit, Cx, Real};

/// Local dimension of a spin-1 site.
pub const LOCAL_DIM: usize = 3;

/// Five 3×3 spin-1 matrices in the `|+⟩, |0⟩, |−⟩` basis.
#[derive(Clone, Debug)]
pub struct LocalSpin1<T: Real> {
    pub sx: Operator<T>,
    pub sy: Operator<T>,
    pub sz: Operator<T>,
    pub sp: Operator<T>,
    pub sm: Operator<T>,
}

pub fn spin1_local<T: Real>() -> LocalSpin1<T> {
    let r2: T = lit::<T>(2.0).sqrt();
    let sp = Operator::from_triplets(3, [(0, 1, creal(r2)), (1, 2, creal(r2))]).unwrap();
    let sm = sp.adjoint();
    let half = cx::<T>(0.5, 0.0);
    let sx = (&sp + &sm).scale(half).into_hermitian().unwrap();
    let sy = (&sp - &sm).scale(cx(0.0, -0.5)).into_hermitian().unwrap();
    let sz = Operator::diagonal(&[T::one(), T::zero(), -T::one()]);
    LocalSpin1 { sx, sy, sz, sp, sm }
}

/// Dimension `3^n`.
pub fn chain_dim(n: usize) -> usize {
    LOCAL_DIM.pow(n as u32)
}

/// Local state indices (0 = `+`, 1 = `0`, 2 = `−`) of a chain basis index,
/// site 1 first.
pub fn site_states(mut index: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for s in (0..n).rev() {
        out[s] = index % LOCAL_DIM;
        index /= LOCAL_DIM;
    }
    out
}

/// Total magnetization of every chain basis state.
pub fn basis_magnetizations(n: usize) -> Vec<i32> {
    (0..chain_dim(n))
        .map(|i| site_states(i, n).iter().map(|&s| 1 - s as i32).sum())
        .collect()
}

/// Embeds a single-site (dim 3) or nearest-neighbour (dim 9, acting on
/// `site, site+1`) operator into an `n`-site chain. Sites are 1-based.
pub fn embed<T: Real>(op: &Operator<T>, site: usize, n: usize) -> Result<Operator<T>> {
    let span = match op.dim() {
        3 => 1,
        9 => 2,
        d => return Err(Error::UnsupportedLocalDim(d)),
    };
    if site == 0 || site + span - 1 > n {
        return Err(Error::SiteOutOfRange { site: site + span - 1, n });
    }
    let left = Operator::identity(chain_dim(site - 1));
    let right = Operator::identity(chain_dim(n + 1 - site - span));
    Ok(left.kron(op).kron(&right))
}

/// Collective spin operators of an `n`-site chain.
#[derive(Clone, Debug)]
pub struct TotalOps<T: Real> {
    pub sz: Operator<T>,
    pub sm: Operator<T>,
    pub sp: Operator<T>,
    pub s2: Operator<T>,
}

fn sum_embedded<T: Real>(local: &Operator<T>, n: usize) -> Operator<T> {
    (1..=n).fold(Operator::zeros(chain_dim(n)), |acc, j| &acc + &embed(local, j, n).unwrap())
}

pub fn total_ops<T: Real>(n: usize) -> TotalOps<T> {
    let loc = spin1_local::<T>();
    let sz = sum_embedded(&loc.sz, n);
    let sm = sum_embedded(&loc.sm, n);
    let sp = sm.adjoint();
    let sx = sum_embedded(&loc.sx, n);
    let sy = sum_embedded(&loc.sy, n);
    let mut s2 = &(&(&sx * &sx) + &(&sy * &sy)) + &(&sz * &sz);
    s2 = s2.into_hermitian().expect("S² Hermitian");
    TotalOps { sz, sm, sp, s2 }
}

/// `S_a · S_b` for two spin-1 sites as a 9×9 operator.
pub fn local_dot<T: Real>() -> Operator<T> {
    let l = spin1_local::<T>();
    let zz = l.sz.kron(&l.sz);
    let pm = &l.sp.kron(&l.sm) + &l.sm.kron(&l.sp);
    (&zz + &pm.scale_real(lit(0.5))).into_hermitian().unwrap()
}

/// `S_j · S_{j+1}` embedded in an `n`-site chain.
pub fn bond_dot<T: Real>(j: usize, n: usize) -> Result<Operator<T>> {
    if j == 0 || j >= n {
        return Err(Error::SiteOutOfRange { site: j, n });
    }
    embed(&local_dot(), j, n)
}

/// Two-site projector onto total spin 2, `½X + X²/6 + 1/3` with `X = S_a·S_b`.
pub fn local_projector_spin2<T: Real>() -> Operator<T> {
    let x = local_dot::<T>();
    let x2 = &x * &x;
    let p = &(&x.scale_real(lit(0.5)) + &x2.scale_real(lit(1.0 / 6.0)))
        + &Operator::identity(9).scale_real(lit(1.0 / 3.0));
    p.into_hermitian().unwrap()
}

pub fn pair_projector_spin2<T: Real>(j: usize, n: usize) -> Result<Operator<T>> {
    if j == 0 || j >= n {
        return Err(Error::SiteOutOfRange { site: j, n });
    }
    embed(&local_projector_spin2(), j, n)
}

/// Permutation reversing site order, `j ↔ n+1−j`.
pub fn inversion_operator<T: Real>(n: usize) -> Operator<T> {
    let dim = chain_dim(n);
    let trips = (0..dim).map(|i| {
        let mirrored = site_states(i, n).iter().rev().fold(0, |acc, &s| acc * LOCAL_DIM + s);
        (mirrored, i, Cx::new(T::one(), T::zero()))
    });
    Operator::from_triplets(dim, trips)
        .and_then(Operator::into_hermitian)
        .expect("inversion is a symmetric permutation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::StateVector;
    use crate::scalar::{cabs, czero};
    use nalgebra::DVector;

    fn index_of(states: &[usize]) -> usize {
        states.iter().fold(0, |acc, &s| acc * 3 + s)
    }

    #[test]
    fn local_matrices() {
        let l = spin1_local::<f64>();
        let d = l.sz.to_dense();
        assert_eq!(d[(0, 0)].re, 1.0);
        assert_eq!(d[(1, 1)].re, 0.0);
        assert_eq!(d[(2, 2)].re, -1.0);
        let comm = l.sx.commutator(&l.sy).unwrap();
        let isz = l.sz.scale(cx(0.0, 1.0));
        assert!((&comm - &isz).max_abs() < 1e-14);
        // Sp|−⟩ = √2|0⟩, Sp|0⟩ = √2|+⟩, Sp|+⟩ = 0
        let r2 = 2f64.sqrt();
        assert!((l.sp.get(1, 2).re - r2).abs() < 1e-15);
        assert!((l.sp.get(0, 1).re - r2).abs() < 1e-15);
        assert_eq!(l.sp.get(0, 0), czero());
        assert_eq!(l.sp.get(1, 0), czero());
        assert_eq!(l.sp.get(2, 0), czero());
        assert_eq!(l.sm, l.sp.adjoint());
    }

    #[test]
    fn embed_single_sites() {
        let l = spin1_local::<f64>();
        let psi = StateVector::<f64>::basis(9, index_of(&[0, 2]));
        let z1 = embed(&l.sz, 1, 2).unwrap();
        let z2 = embed(&l.sz, 2, 2).unwrap();
        assert!((z1.expectation(&psi).re - 1.0).abs() < 1e-15);
        assert!((z2.expectation(&psi).re + 1.0).abs() < 1e-15);
        assert_eq!(embed(&l.sx, 2, 4).unwrap().nnz(), l.sx.nnz() * 27);
    }

    #[test]
    fn embed_errors() {
        let l = spin1_local::<f64>();
        assert!(matches!(embed(&l.sz, 0, 3), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(embed(&l.sz, 4, 3), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(embed(&local_dot::<f64>(), 3, 3), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(embed(&Operator::<f64>::identity(4), 1, 3), Err(Error::UnsupportedLocalDim(4))));
    }

    #[test]
    fn total_sz_spectrum_n3() {
        // multiplicities from enumerating all 27 basis magnetizations
        let mut counts = [0usize; 7];
        for a in -1..=1i32 {
            for b in -1..=1i32 {
                for c in -1..=1i32 {
                    counts[(a + b + c + 3) as usize] += 1;
                }
            }
        }
        assert_eq!(counts, [1, 3, 6, 7, 6, 3, 1]);
        let sz = total_ops::<f64>(3).sz;
        let mut found = [0usize; 7];
        for i in 0..27 {
            assert!(sz.row(i).0.iter().all(|&c| c == i));
            found[(sz.get(i, i).re.round() as i32 + 3) as usize] += 1;
        }
        assert_eq!(found, counts);
    }

    #[test]
    fn total_ops_algebra() {
        let t = total_ops::<f64>(3);
        assert!(t.s2.commutator(&t.sz).unwrap().max_abs() < 1e-12);
        let c = t.sm.commutator(&t.sz).unwrap();
        assert!((&c - &t.sm).max_abs() < 1e-12);
    }

    #[test]
    fn total_spin_n2_multiplets() {
        let s2 = total_ops::<f64>(2).s2.to_dense();
        let mut ev: Vec<f64> = s2.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [0.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 6.0];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn projector_properties() {
        let p = pair_projector_spin2::<f64>(1, 2).unwrap();
        assert!((&(&p * &p) - &p).max_abs() < 1e-12);
        assert!((p.trace().re - 5.0).abs() < 1e-12);
        // singlet of 1⊗1: (|+−⟩ − |00⟩ + |−+⟩)/√3
        let mut v = DVector::from_element(9, czero::<f64>());
        v[index_of(&[0, 2])] = cx(1.0, 0.0);
        v[index_of(&[1, 1])] = cx(-1.0, 0.0);
        v[index_of(&[2, 0])] = cx(1.0, 0.0);
        let singlet = StateVector::new(v).unwrap();
        assert!(p.apply(singlet.amplitudes()).norm() < 1e-14);
        assert!(matches!(pair_projector_spin2::<f64>(2, 2), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn projector_matches_clebsch_gordan_diagonalization() {
        // brute force: eigenvectors of the pair S² with eigenvalue 6
        for n in 2..=4 {
            let loc = spin1_local::<f64>();
            for j in 1..n {
                let sx = &embed(&loc.sx, j, n).unwrap() + &embed(&loc.sx, j + 1, n).unwrap();
                let sy = &embed(&loc.sy, j, n).unwrap() + &embed(&loc.sy, j + 1, n).unwrap();
                let sz = &embed(&loc.sz, j, n).unwrap() + &embed(&loc.sz, j + 1, n).unwrap();
                let s2 = &(&(&sx * &sx) + &(&sy * &sy)) + &(&sz * &sz);
                let eig = s2.to_dense().symmetric_eigen();
                let dim = chain_dim(n);
                let mut brute = nalgebra::DMatrix::from_element(dim, dim, czero::<f64>());
                for k in 0..dim {
                    if (eig.eigenvalues[k] - 6.0).abs() < 1e-8 {
                        let v = eig.eigenvectors.column(k);
                        brute += &v * v.adjoint();
                    }
                }
                let p = pair_projector_spin2::<f64>(j, n).unwrap().to_dense();
                let dev = (p - brute).iter().map(|z| cabs(*z)).fold(0.0, f64::max);
                assert!(dev < 1e-12, "n={n} j={j} dev={dev}");
            }
        }
    }

    #[test]
    fn inversion_permutation() {
        let p = inversion_operator::<f64>(3);
        let psi = StateVector::<f64>::basis(27, index_of(&[0, 1, 2]));
        let out = p.apply(psi.amplitudes());
        assert_eq!(out[index_of(&[2, 1, 0])], cx(1.0, 0.0));
        assert_eq!((&(&p * &p) - &Operator::identity(27)).nnz(), 0);
        let l = spin1_local::<f64>();
        for n in 2..=4 {
            let p = inversion_operator::<f64>(n);
            let conj = &(&p * &embed(&l.sx, 1, n).unwrap()) * &p;
            assert!((&conj - &embed(&l.sx, n, n).unwrap()).max_abs() == 0.0);
        }
    }

    #[test]
    fn single_precision_algebra() {
        let l = spin1_local::<f32>();
        let comm = l.sx.commutator(&l.sy).unwrap();
        assert!((&comm - &l.sz.scale(cx(0.0, 1.0))).max_abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn local(i: usize) -> Operator<f64> {
            let l = spin1_local::<f64>();
            [l.sx, l.sy, l.sz, l.sp, l.sm][i % 5].clone()
        }

        proptest! {
            #[test]
            fn distinct_sites_commute(a in 0usize..5, b in 0usize..5, i in 1usize..=4, j in 1usize..=4) {
                prop_assume!(i != j);
                let x = embed(&local(a), i, 4).unwrap();
                let y = embed(&local(b), j, 4).unwrap();
                prop_assert_eq!(x.commutator(&y).unwrap().nnz(), 0);
            }

            #[test]
            fn embed_preserves_hermiticity(a in 0usize..3, site in 1usize..=3) {
                let h = local(a);
                let e = embed(&h, site, 3).unwrap();
                prop_assert!((&e - &e.adjoint()).max_abs() < 1e-14);
                let anti = h.scale(cx(0.0, 1.0));
                let ea = embed(&anti, site, 3).unwrap();
                prop_assert!((&ea + &ea.adjoint()).max_abs() < 1e-14);
            }
        }
    }
}
