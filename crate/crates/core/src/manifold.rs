//! Four-dimensional low-energy manifold `{|G_{S,Sz}⟩}` of the open chain and
//! the rank-one operator `A = |G_{1,−1}⟩⟨G_{0,0}|`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, lanczos_lowest};
use crate::model::sites_for_dim;
use crate::operator::{Operator, StateVector};
use crate::scalar::{cabs, cone, czero, lit, rabs, to_f64, Cx, Real};
use crate::spin::{basis_magnetizations, embed, spin1_local, total_ops};

/// Label order used throughout: `(0,0), (1,−1), (1,0), (1,1)`.
pub const LABELS: [(i32, i32); 4] = [(0, 0), (1, -1), (1, 0), (1, 1)];

/// Sector dimension above which the sector Hamiltonian is diagonalized with
/// Lanczos instead of densely.
pub const DENSE_SECTOR_LIMIT: usize = 729;

#[derive(Clone, Debug)]
pub struct GroundManifold<T: Real> {
    n: usize,
    states: Vec<StateVector<T>>,
    energies: Vec<T>,
    projector: Operator<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

struct Candidate<T: Real> {
    energy: T,
    s: i32,
    sz: i32,
    vec: DVector<Cx<T>>,
}

impl<T: Real> GroundManifold<T> {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> &[StateVector<T>] {
        &self.states
    }

    pub fn labels(&self) -> [(i32, i32); 4] {
        LABELS
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn projector(&self) -> &Operator<T> {
        &self.projector
    }

    pub fn index_of(&self, s: i32, sz: i32) -> Result<usize> {
        LABELS.iter().position(|&l| l == (s, sz)).ok_or(Error::MissingLabel { s, sz })
    }

    pub fn state(&self, s: i32, sz: i32) -> Result<&StateVector<T>> {
        Ok(&self.states[self.index_of(s, sz)?])
    }

    pub fn energy(&self, s: i32, sz: i32) -> Result<T> {
        Ok(self.energies[self.index_of(s, sz)?])
    }

    /// `E(triplet) − E(singlet)`, averaged over the triplet.
    pub fn singlet_triplet_gap(&self) -> T {
        let t = (self.energies[1] + self.energies[2] + self.energies[3]) / lit(3.0);
        t - self.energies[0]
    }

    pub fn export(&self) -> ManifoldExport {
        let profile = edge_profile(self, Axis::X).unwrap_or_default();
        ManifoldExport {
            n: self.n,
            labels: LABELS.iter().map(|&(s, sz)| StateLabel { s, sz }).collect(),
            energies: self.energies.iter().map(|&e| to_f64(e)).collect(),
            states: self.states.iter().map(|s| complex_pairs(s.amplitudes().iter())).collect(),
            edge_profile: complex_pairs(profile.iter()),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StateLabel {
    #[serde(rename = "S")]
    pub s: i32,
    #[serde(rename = "Sz")]
    pub sz: i32,
}

/// JSON-friendly snapshot of a manifold. Complex numbers are `[re, im]`.
#[derive(Clone, Debug, Serialize)]
pub struct ManifoldExport {
    #[serde(rename = "N")]
    pub n: usize,
    pub labels: Vec<StateLabel>,
    pub energies: Vec<f64>,
    pub states: Vec<Vec<[f64; 2]>>,
    pub edge_profile: Vec<[f64; 2]>,
}

fn complex_pairs<'a, T: Real>(it: impl Iterator<Item = &'a Cx<T>>) -> Vec<[f64; 2]> {
    it.map(|z| [to_f64(z.re), to_f64(z.im)]).collect()
}

/// Multiplies `v` by the phase that makes its largest-magnitude amplitude
/// real and positive. Near-ties (relative 1e-8) go to the lowest index.
pub fn fix_phase<T: Real>(v: &mut DVector<Cx<T>>) {
    let max = v.iter().map(|z| cabs(*z)).fold(T::zero(), |a, b| if b > a { b } else { a });
    if max == T::zero() {
        return;
    }
    let thresh = max * (T::one() - lit(1e-8));
    let pivot = v.iter().position(|z| cabs(*z) >= thresh).unwrap();
    let p = v[pivot];
    let phase = p.conj() / cabs(p);
    *v *= phase;
}

/// Lowest eigenpairs of `h` restricted to the basis states in `indices`.
fn sector_eigenpairs<T: Real>(h: &Operator<T>, indices: &[usize], tol: T) -> Result<Vec<(T, DVector<Cx<T>>)>> {
    let sub = h.restrict(indices);
    if indices.len() <= DENSE_SECTOR_LIMIT {
        let (vals, vecs) = hermitian_eigen(sub.to_dense());
        Ok(vals.into_iter().enumerate().map(|(i, e)| (e, vecs.column(i).into_owned())).collect())
    } else {
        lanczos_lowest(|x| sub.apply(x), indices.len(), 8, tol * lit(1e-2), 0x6d61_6e69)
    }
}

fn lift<T: Real>(v: &DVector<Cx<T>>, indices: &[usize], dim: usize) -> DVector<Cx<T>> {
    let mut out = DVector::from_element(dim, czero());
    for (k, &i) in indices.iter().enumerate() {
        out[i] = v[k];
    }
    out
}

/// Splits sorted eigenpairs into clusters of (near-)equal energy and labels
/// each vector by total spin after diagonalizing `S²` within its cluster.
fn label_sector<T: Real>(
    pairs: Vec<(T, DVector<Cx<T>>)>,
    s2: &Operator<T>,
    sz: i32,
    tol: T,
) -> Result<Vec<Candidate<T>>> {
    let mut out = Vec::new();
    let label_tol = (tol * lit(10.0)).max(lit(1e-8));
    let mut start = 0;
    while start < pairs.len() {
        let e0 = pairs[start].0;
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 - e0 <= tol * (T::one() + rabs(e0)) {
            end += 1;
        }
        let block: Vec<&DVector<Cx<T>>> = pairs[start..end].iter().map(|p| &p.1).collect();
        let k = block.len();
        let s2v: Vec<DVector<Cx<T>>> = block.iter().map(|v| s2.apply(v)).collect();
        let g = DMatrix::from_fn(k, k, |r, c| block[r].dotc(&s2v[c]));
        let (vals, rot) = hermitian_eigen(g);
        for (i, &val) in vals.iter().enumerate() {
            // S(S+1) = val
            let s_real = (lit::<T>(0.25) + val).sqrt() - lit(0.5);
            let s = to_f64(s_real).round() as i32;
            if rabs(lit::<T>(f64::from(s * (s + 1))) - val) > label_tol {
                return Err(Error::AmbiguousLabels(format!(
                    "S² eigenvalue {:.3e} in the Sz={sz} sector is not of the form S(S+1)",
                    to_f64(val)
                )));
            }
            let mut v = DVector::from_element(block[0].len(), czero());
            for (j, b) in block.iter().enumerate() {
                v.axpy(rot[(j, i)], b, cone());
            }
            let e = pairs[start..end].iter().enumerate().fold(T::zero(), |acc, (j, p)| {
                let w = cabs(rot[(j, i)]);
                acc + w * w * p.0
            });
            out.push(Candidate { energy: e, s, sz, vec: v });
        }
        start = end;
    }
    Ok(out)
}

/// Finds the lowest singlet and the lowest triplet of a magnetization- and
/// spin-conserving Hamiltonian. When these are degenerate (the unperturbed
/// chain) they must form the entire ground eigenspace.
pub fn compute_manifold<T: Real>(h0: &Operator<T>, tol: T) -> Result<GroundManifold<T>> {
    let n = sites_for_dim(h0.dim())?;
    let dim = h0.dim();
    let mags = basis_magnetizations(n);
    let tot = total_ops::<T>(n);
    let mut candidates: Vec<Candidate<T>> = Vec::new();
    for sz in [-1, 0, 1] {
        let idx: Vec<usize> = (0..dim).filter(|&i| mags[i] == sz).collect();
        if idx.is_empty() {
            continue;
        }
        let pairs = sector_eigenpairs(h0, &idx, tol)?;
        let s2 = tot.s2.restrict(&idx);
        for mut c in label_sector(pairs, &s2, sz, tol)? {
            c.vec = lift(&c.vec, &idx, dim);
            candidates.push(c);
        }
    }
    let e_min = candidates.iter().map(|c| c.energy).fold(candidates[0].energy, |a, b| if b < a { b } else { a });
    let near = |e: T| e - e_min <= tol * (T::one() + rabs(e_min));
    let mut chosen: Vec<Option<&Candidate<T>>> = vec![None; 4];
    for (slot, &(s, sz)) in LABELS.iter().enumerate() {
        let mut best: Option<&Candidate<T>> = None;
        for c in candidates.iter().filter(|c| c.s == s && c.sz == sz) {
            match best {
                Some(b) if rabs(c.energy - b.energy) <= tol * (T::one() + rabs(b.energy)) => {
                    return Err(Error::AmbiguousLabels(format!("two states labelled (S={s}, Sz={sz}) at the same energy")));
                }
                Some(b) if c.energy >= b.energy => {}
                _ => best = Some(c),
            }
        }
        chosen[slot] = Some(best.ok_or(Error::MissingLabel { s, sz })?);
    }
    let ground_count = candidates.iter().filter(|c| near(c.energy)).count();
    let chosen_ground = chosen.iter().filter(|c| near(c.unwrap().energy)).count();
    if ground_count != chosen_ground || ground_count == 2 {
        return Err(Error::ManifoldDimension { found: ground_count });
    }
    let mut states = Vec::with_capacity(4);
    let mut energies = Vec::with_capacity(4);
    for c in chosen.into_iter().map(Option::unwrap) {
        let mut v = c.vec.clone();
        fix_phase(&mut v);
        energies.push(h0.matrix_element(&v, &v).re);
        states.push(StateVector::new(v)?);
    }
    let mut projector = Operator::zeros(dim);
    for s in &states {
        projector = &projector + &Operator::outer(s.amplitudes(), s.amplitudes())?;
    }
    Ok(GroundManifold { n, states, energies, projector })
}

/// `A = |G_{1,−1}⟩⟨G_{0,0}|`.
pub fn symmetry_operator_a<T: Real>(man: &GroundManifold<T>) -> Result<Operator<T>> {
    Operator::outer(man.state(1, -1)?.amplitudes(), man.state(0, 0)?.amplitudes())
}

/// `a_j = ⟨G_{1,−1}| S_j^axis |G_{0,0}⟩` for `j = 1..N`.
pub fn edge_profile<T: Real>(man: &GroundManifold<T>, axis: Axis) -> Result<Vec<Cx<T>>> {
    let loc = spin1_local::<T>();
    let op = match axis {
        Axis::X => loc.sx,
        Axis::Y => loc.sy,
        Axis::Z => loc.sz,
    };
    let bra = man.state(1, -1)?.amplitudes();
    let ket = man.state(0, 0)?.amplitudes();
    (1..=man.n)
        .map(|j| Ok(embed(&op, j, man.n)?.matrix_element(bra, ket)))
        .collect()
}
