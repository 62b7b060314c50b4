//! Synchronization diagnostics: the dynamical-symmetry conditions, the
//! anti-synchronization error of mirrored sites, damped-cosine fits and the
//! long-time prediction from the decoherence-free states.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn, Matrix2, OMatrix, Vector2, Vector4, U4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::LindbladModel;
use crate::manifold::GroundManifold;
use crate::operator::Operator;
use crate::scalar::{cis, lit, to_f64, Cx, Real};
use crate::spin::inversion_operator;

/// Residuals of the two dynamical-symmetry conditions for `A` at `ρ_ss`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicalSymmetryReport {
    /// `‖L[ρ_ss]‖` (precondition)
    pub steady_residual: f64,
    /// `‖[L_μ, A]ρ_ss‖` per jump operator
    pub commutator_residuals: Vec<f64>,
    /// `ω` with `(−i[H,A] − c Σ[L_μ†,A]L_μ)ρ_ss = −iω·Aρ_ss`
    pub omega: f64,
    /// imaginary part of the Rayleigh quotient times `i` (should vanish)
    pub omega_imag: f64,
    /// residual of the eigen-equation at the fitted `ω`
    pub eigen_residual: f64,
}

impl DynamicalSymmetryReport {
    pub fn max_commutator_residual(&self) -> f64 {
        self.commutator_residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn frob<T: Real>(m: &DMatrix<Cx<T>>) -> f64 {
    to_f64(m.norm())
}

/// Checks `[L_μ, A]ρ_ss = 0` for every jump and extracts `ω` from
/// `(−i[H,A] − c Σ[L_μ†,A]L_μ)ρ_ss = −iω·Aρ_ss`, where `c` is the
/// anticommutator weight of the model's convention.
pub fn verify_dynamical_symmetry<T: Real>(
    model: &LindbladModel<T>,
    a: &Operator<T>,
    rho_ss: &DMatrix<Cx<T>>,
) -> Result<DynamicalSymmetryReport> {
    if a.dim() != model.dim() || rho_ss.nrows() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: a.dim().max(rho_ss.nrows()) });
    }
    let steady_residual = frob(&model.apply(rho_ss)?);
    let a_rho = a.mul_dense(rho_ss);
    let norm = a_rho.norm();
    if to_f64(norm) < 1e-12 {
        return Err(Error::VacuousCondition);
    }
    let (c, _) = model.convention().coefficients::<T>();
    let h = model.hamiltonian();
    let minus_i = Cx::new(T::zero(), -T::one());
    // −i[H,A]ρ = −i(H·Aρ − A·Hρ)
    let mut m = (h.mul_dense(&a_rho) - a.mul_dense(&h.mul_dense(rho_ss))) * minus_i;
    let mut commutator_residuals = Vec::new();
    for l in model.jumps() {
        let l_rho = l.mul_dense(rho_ss);
        commutator_residuals.push(frob(&(l.mul_dense(&a_rho) - a.mul_dense(&l_rho))));
        // [L†,A]Lρ = L†A·Lρ − A·L†Lρ
        let ld = l.adjoint();
        let comm = ld.mul_dense(&a.mul_dense(&l_rho)) - a.mul_dense(&ld.mul_dense(&l_rho));
        m -= comm * Cx::new(c, T::zero());
    }
    let lambda = a_rho.dotc(&m) / (norm * norm);
    let eigen_residual = frob(&(&m - &a_rho * lambda));
    // λ = −iω
    let omega = -to_f64(lambda.im);
    Ok(DynamicalSymmetryReport { steady_residual, commutator_residuals, omega, omega_imag: to_f64(lambda.re), eigen_residual })
}

/// Generator restricted to the manifold operator space:
/// `M_{ab,cd} = ⟨G_a| L[|G_c⟩⟨G_d|] |G_b⟩` with pairs in label order.
pub fn restricted_generator<T: Real>(model: &LindbladModel<T>, man: &GroundManifold<T>) -> Result<DMatrix<Cx<f64>>> {
    let g = man.states();
    let mut m = DMatrix::from_element(16, 16, Cx::new(0.0, 0.0));
    for c in 0..4 {
        for d in 0..4 {
            let x = g[c].amplitudes() * g[d].amplitudes().adjoint();
            let y = model.apply(&x)?;
            for a in 0..4 {
                let ya = y.adjoint() * g[a].amplitudes();
                for b in 0..4 {
                    let z = ya.dotc(g[b].amplitudes());
                    m[(4 * a + b, 4 * c + d)] = Cx::new(to_f64(z.re), to_f64(z.im));
                }
            }
        }
    }
    Ok(m)
}

/// Largest `Re λ` of the restricted generator below `−tol` (the slowest
/// nonzero decay), or `None` if every eigenvalue is within `tol` of the axis.
pub fn slowest_restricted_decay(m: &DMatrix<Cx<f64>>, tol: f64) -> Result<Option<f64>> {
    let eig = crate::linalg::SchurEigen::new(m.clone())?;
    Ok(eig.values.iter().map(|z| z.re).filter(|&r| r < -tol).fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r)))))
}

/// Sign `s` with `P A P = s·A` for the chain inversion `P`, or `None` when
/// neither sign fits within `1e-8`.
pub fn inversion_parity_check<T: Real>(a: &Operator<T>) -> Result<Option<i8>> {
    let n = crate::model::sites_for_dim(a.dim())?;
    let p = inversion_operator::<T>(n);
    let pap = p.try_mul(a)?.try_mul(&p)?;
    for s in [1i8, -1] {
        let diff = pap.try_sub(&a.scale_real(lit(f64::from(s))))?;
        if to_f64(diff.max_abs()) < 1e-8 {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// The four decoherence-free operators `ϱ₀, ϱ₁, Aϱ₀, ϱ₀A†`.
pub struct DfsStates<T: Real> {
    pub rho0: DMatrix<Cx<T>>,
    pub rho1: DMatrix<Cx<T>>,
    pub rho10: DMatrix<Cx<T>>,
    pub rho01: DMatrix<Cx<T>>,
}

pub fn dfs_states<T: Real>(man: &GroundManifold<T>) -> Result<DfsStates<T>> {
    let g0 = man.state(0, 0)?.amplitudes();
    let g1 = man.state(1, -1)?.amplitudes();
    Ok(DfsStates {
        rho0: g0 * g0.adjoint(),
        rho1: g1 * g1.adjoint(),
        rho10: g1 * g0.adjoint(),
        rho01: g0 * g1.adjoint(),
    })
}

/// Overlaps `C_k = Tr[ϱ_k† ρ]` with the decoherence-free operators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlaps {
    pub c0: Cx<f64>,
    pub c1: Cx<f64>,
    pub c10: Cx<f64>,
    pub c01: Cx<f64>,
}

/// Projections of `ρ` on the decoherence-free operators. For states inside
/// that span these are the exact expansion coefficients; otherwise they
/// ignore the part of the population that relaxes into it later.
pub fn overlap_coefficients<T: Real>(man: &GroundManifold<T>, rho: &DMatrix<Cx<T>>) -> Result<Overlaps> {
    if rho.nrows() != man.states()[0].dim() {
        return Err(Error::DimensionMismatch { expected: man.states()[0].dim(), found: rho.nrows() });
    }
    let g0 = man.state(0, 0)?.amplitudes();
    let g1 = man.state(1, -1)?.amplitudes();
    let el = |bra: &DVector<Cx<T>>, ket: &DVector<Cx<T>>| {
        let z = bra.dotc(&(rho * ket));
        Cx::new(to_f64(z.re), to_f64(z.im))
    };
    Ok(Overlaps { c0: el(g0, g0), c1: el(g1, g1), c10: el(g1, g0), c01: el(g0, g1) })
}

/// `⟨O⟩(t)` from the decoherence-free expansion, with the coherence
/// `Aϱ₀` rotating as `e^{iωt}` (`ω = B/N` for the uniform-field chain):
/// `C₀⟨O⟩₀ + C₁⟨O⟩₁ + 2 Re[C₁₀ e^{iωt} ⟨G₀₀|O|G₁,₋₁⟩]`.
pub fn long_time_prediction<T: Real>(c: &Overlaps, man: &GroundManifold<T>, o: &Operator<T>, omega: f64, t: f64) -> Result<f64> {
    let g0 = man.state(0, 0)?.amplitudes();
    let g1 = man.state(1, -1)?.amplitudes();
    let f = |z: Cx<T>| Cx::new(to_f64(z.re), to_f64(z.im));
    let o0 = f(o.matrix_element(g0, g0));
    let o1 = f(o.matrix_element(g1, g1));
    let o01 = f(o.matrix_element(g0, g1));
    let rot = cis::<f64>(omega * t);
    Ok((c.c0 * o0 + c.c1 * o1).re + 2.0 * (c.c10 * rot * o01).re)
}

/// Anti-synchronization error of mirrored sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiSync {
    /// `max_j |x_j + x_{N+1−j}|` relative to `max_{j,t} |x_j|`
    pub errors: Vec<f64>,
    /// first time after which the error stays below the threshold
    pub transient_time: Option<f64>,
    pub scale: f64,
}

/// `values[k][j]` is the site-`j` signal at `times[k]`.
pub fn anti_sync_error(times: &[f64], values: &[Vec<f64>], threshold: f64) -> Result<AntiSync> {
    if times.len() != values.len() || values.is_empty() {
        return Err(Error::InvalidSpec("series and time grid differ in length".into()));
    }
    let n = values[0].len();
    if n < 2 || values.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidSpec("anti-sync error needs every site at every time".into()));
    }
    let scale = values.iter().flatten().fold(0.0_f64, |a, b| a.max(b.abs()));
    let errors: Vec<f64> = values
        .iter()
        .map(|v| {
            let e = (0..n).map(|j| (v[j] + v[n - 1 - j]).abs()).fold(0.0, f64::max);
            if scale > 0.0 { e / scale } else { 0.0 }
        })
        .collect();
    let transient_time = if scale == 0.0 {
        None
    } else {
        let mut first = None;
        for k in (0..errors.len()).rev() {
            if errors[k] >= threshold {
                break;
            }
            first = Some(times[k]);
        }
        first
    };
    Ok(AntiSync { errors, transient_time, scale })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// fit only samples with `t ≥ t_min`
    pub t_min: f64,
    /// minimum number of periods the fitted window must cover
    pub min_periods: f64,
    pub min_amplitude: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t_min: 0.0, min_periods: 2.0, min_amplitude: 1e-10 }
    }
}

/// `a·e^{−ηt}·cos(ωt + φ)` with `t` measured from `t0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampedCosine {
    pub omega: f64,
    pub amplitude: f64,
    pub eta: f64,
    pub phase: f64,
    pub t0: f64,
    /// root-mean-square residual
    pub rms: f64,
}

impl DampedCosine {
    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.t0;
        self.amplitude * (-self.eta * s).exp() * (self.omega * s + self.phase).cos()
    }
}

/// Least-squares fit in the parametrization `e^{−ηt}(p cos ωt + q sin ωt)`.
struct CosineFit<'a> {
    t: &'a [f64],
    y: &'a [f64],
    x: Vector4<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for CosineFit<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, x: &Vector4<f64>) {
        self.x = *x;
    }

    fn params(&self) -> Vector4<f64> {
        self.x
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let [p, q, eta, w] = [self.x[0], self.x[1], self.x[2], self.x[3]];
        Some(DVector::from_iterator(
            self.t.len(),
            self.t.iter().zip(self.y).map(|(&t, &y)| (-eta * t).exp() * (p * (w * t).cos() + q * (w * t).sin()) - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let [p, q, eta, w] = [self.x[0], self.x[1], self.x[2], self.x[3]];
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.t.len());
        for (r, &t) in self.t.iter().enumerate() {
            let e = (-eta * t).exp();
            let (s, c) = (w * t).sin_cos();
            j[(r, 0)] = e * c;
            j[(r, 1)] = e * s;
            j[(r, 2)] = -t * e * (p * c + q * s);
            j[(r, 3)] = e * t * (q * c - p * s);
        }
        Some(j)
    }
}

/// Best `(p, q)` for fixed `(η, ω)`, with the explained sum of squares.
fn linear_cosine(t: &[f64], y: &[f64], eta: f64, w: f64) -> (f64, f64, f64) {
    let mut g = Matrix2::zeros();
    let mut b = Vector2::zeros();
    for (&t, &y) in t.iter().zip(y) {
        let e = (-eta * t).exp();
        let v = Vector2::new(e * (w * t).cos(), e * (w * t).sin());
        g += v * v.transpose();
        b += v * y;
    }
    match g.try_inverse() {
        Some(inv) => {
            let x = inv * b;
            (x[0], x[1], x.dot(&b))
        }
        None => (0.0, 0.0, 0.0),
    }
}

/// Coarse frequency estimate: scan `ω` for the best undamped fit.
fn scan_frequency(t: &[f64], y: &[f64]) -> f64 {
    let stride = t.len().div_ceil(1000).max(1);
    let ts: Vec<f64> = t.iter().step_by(stride).copied().collect();
    let ys: Vec<f64> = y.iter().step_by(stride).copied().collect();
    let span = ts[ts.len() - 1] - ts[0];
    let dt = span / (ts.len() - 1).max(1) as f64;
    let step = std::f64::consts::PI / (8.0 * span);
    let w_max = std::f64::consts::PI / dt;
    let mut best = (step, f64::NEG_INFINITY);
    let mut w = step;
    while w < w_max {
        let (_, _, ex) = linear_cosine(&ts, &ys, 0.0, w);
        if ex > best.1 {
            best = (w, ex);
        }
        w += step;
    }
    best.0
}

/// Damped-cosine least-squares fit of one site's signal.
pub fn fit_frequency(times: &[f64], values: &[f64], opts: &FitOptions) -> Result<DampedCosine> {
    if times.len() != values.len() {
        return Err(Error::FitFailed("time and value lengths differ".into()));
    }
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= opts.t_min).collect();
    if idx.len() < 8 {
        return Err(Error::FitFailed(format!("only {} samples after t_min", idx.len())));
    }
    let t0 = times[idx[0]];
    let t: Vec<f64> = idx.iter().map(|&k| times[k] - t0).collect();
    let y: Vec<f64> = idx.iter().map(|&k| values[k]).collect();
    let peak = y.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if peak < opts.min_amplitude {
        return Err(Error::FitFailed(format!("amplitude {peak:.2e} below {:.1e}", opts.min_amplitude)));
    }
    let w0 = scan_frequency(&t, &y);
    let (p0, q0, _) = linear_cosine(&t, &y, 0.0, w0);
    let problem = CosineFit { t: &t, y: &y, x: Vector4::new(p0, q0, 0.0, w0) };
    let (fit, report) = LevenbergMarquardt::new().with_tol(1e-15).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::FitFailed(format!("{:?}", report.termination)));
    }
    let [p, mut q, eta, mut w] = [fit.x[0], fit.x[1], fit.x[2], fit.x[3]];
    if w < 0.0 {
        w = -w;
        q = -q;
    }
    let span = t[t.len() - 1];
    if w * span < opts.min_periods * 2.0 * std::f64::consts::PI {
        return Err(Error::FitFailed(format!(
            "window {span:.1} covers {:.2} periods, fewer than {}",
            w * span / (2.0 * std::f64::consts::PI),
            opts.min_periods
        )));
    }
    let amplitude = p.hypot(q);
    if amplitude < opts.min_amplitude {
        return Err(Error::FitFailed(format!("fitted amplitude {amplitude:.2e} too small")));
    }
    let rms = (report.objective_function * 2.0 / t.len() as f64).sqrt();
    Ok(DampedCosine { omega: w, amplitude, eta, phase: (-q).atan2(p), t0, rms })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Metastable,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncOptions {
    /// relative anti-sync threshold defining the transient time
    pub threshold: f64,
    /// decay rate below which oscillations count as undamped
    pub stable_eta: f64,
    pub fit: FitOptions,
    /// site whose signal sets `ω` and `η` (1-based)
    pub site: usize,
    /// Analyze first differences of the signals, which removes static
    /// offsets (e.g. a transverse-field polarization) while keeping `ω` and
    /// `η`. Needs a uniform grid.
    pub remove_offset: bool,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self { threshold: 1e-4, stable_eta: 1e-6, fit: FitOptions::default(), site: 1, remove_offset: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub transient_time: Option<f64>,
    pub anti_sync_error: Vec<f64>,
    pub fitted_frequency: f64,
    pub predicted_frequency: Option<f64>,
    pub decay_rate: f64,
    /// `|a_j|` per site at the start of the fit window
    pub amplitudes: Vec<f64>,
    pub stability: Stability,
}

/// Classifies a decay rate: stable below `stable_eta`; metastable when at
/// least ten times slower than `next_rate` (the next-slowest relaxation
/// rate, if known); absent otherwise.
pub fn classify(eta: f64, synchronized: bool, stable_eta: f64, next_rate: Option<f64>) -> Stability {
    if !synchronized {
        return Stability::Absent;
    }
    if eta.abs() < stable_eta {
        return Stability::Stable;
    }
    match next_rate {
        Some(r) if eta > 0.0 && r / eta > 10.0 => Stability::Metastable,
        None if eta > 0.0 => Stability::Metastable,
        _ => Stability::Absent,
    }
}

/// First differences `v_{k+1} − v_k` on a uniform grid, with the grid step.
fn differences(times: &[f64], values: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    if times.len() < 3 {
        return Err(Error::InvalidSpec("offset removal needs at least three samples".into()));
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
        return Err(Error::InvalidSpec("offset removal needs a uniform time grid".into()));
    }
    let d = values.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
    Ok((times[..times.len() - 1].to_vec(), d, dt))
}

/// Full analysis of a multi-site series `values[k][j]`. With
/// `remove_offset` the anti-sync errors refer to the differenced series
/// (one entry shorter) and the amplitudes are scaled back to the signal.
pub fn analyze(
    times: &[f64],
    values: &[Vec<f64>],
    predicted_frequency: Option<f64>,
    next_rate: Option<f64>,
    opts: &SyncOptions,
) -> Result<SyncReport> {
    if opts.remove_offset {
        let (t, d, dt) = differences(times, values)?;
        let mut rep = analyze(&t, &d, predicted_frequency, next_rate, &SyncOptions { remove_offset: false, ..opts.clone() })?;
        // a damped cosine's difference is the same cosine scaled by |e^{(iω−η)Δt} − 1|
        let gain = (Cx::new(-rep.decay_rate, rep.fitted_frequency) * dt).exp() - Cx::new(1.0, 0.0);
        if gain.norm() > 0.0 {
            rep.amplitudes.iter_mut().for_each(|a| *a /= gain.norm());
        }
        return Ok(rep);
    }
    let anti = anti_sync_error(times, values, opts.threshold)?;
    let n = values[0].len();
    if opts.site == 0 || opts.site > n {
        return Err(Error::SiteOutOfRange { site: opts.site, n });
    }
    let Some(tau) = anti.transient_time else {
        return Ok(SyncReport {
            transient_time: None,
            anti_sync_error: anti.errors,
            fitted_frequency: 0.0,
            predicted_frequency,
            decay_rate: 0.0,
            amplitudes: vec![0.0; n],
            stability: Stability::Absent,
        });
    };
    let fit_opts = FitOptions { t_min: opts.fit.t_min.max(tau), ..opts.fit.clone() };
    let site: Vec<f64> = values.iter().map(|v| v[opts.site - 1]).collect();
    let fit = fit_frequency(times, &site, &fit_opts)?;
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= fit.t0).collect();
    let t: Vec<f64> = idx.iter().map(|&k| times[k] - fit.t0).collect();
    let amplitudes = (0..n)
        .map(|j| {
            let y: Vec<f64> = idx.iter().map(|&k| values[k][j]).collect();
            let (p, q, _) = linear_cosine(&t, &y, fit.eta, fit.omega);
            p.hypot(q)
        })
        .collect();
    let stability = classify(fit.eta, true, opts.stable_eta, next_rate);
    Ok(SyncReport {
        transient_time: Some(tau),
        anti_sync_error: anti.errors,
        fitted_frequency: fit.omega,
        predicted_frequency,
        decay_rate: fit.eta,
        amplitudes,
        stability,
    })
}
