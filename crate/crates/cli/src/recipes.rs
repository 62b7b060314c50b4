//! One function per recipe. Each writes its artifacts through a `Writer`.

use fracsync::cavity::adiabatic_comparison;
use fracsync::lindblad::{delta_m_blocks, evolve, Convention, DensityMatrix, EvolveOptions, LindbladModel, TimeSeries};
use fracsync::linalg::random_unit_vector;
use fracsync::manifold::{compute_manifold, edge_profile, symmetry_operator_a, Axis};
use fracsync::model::{build_hamiltonian, draw_disorder, ChainSpec, Disorder};
use fracsync::operator::{Operator, StateVector};
use fracsync::scalar::Cx;
use fracsync::spectrum::{spectrum_near_axis, SpectrumOptions, SpectrumResult};
use fracsync::spin::{chain_dim, embed, spin1_local, total_ops};
use fracsync::sync::{
    analyze, anti_sync_error, dfs_states, overlap_coefficients, restricted_generator, slowest_restricted_decay, verify_dynamical_symmetry,
    DynamicalSymmetryReport, Overlaps, SyncReport,
};
use fracsync::trajectory::{mixed_sector_state, Circuit};
use fracsync::{Density, Manifold, Model, Op};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitialState, Recipe};
use crate::error::CliError;
use crate::output::{Cell, Table, Writer};

type R<T> = Result<T, CliError>;

pub fn run(cfg: &ExperimentConfig, w: &mut Writer, threads: usize) -> R<()> {
    match cfg.recipe() {
        Recipe::GroundStates => ground_states(cfg, w),
        Recipe::Evolve | Recipe::HeisenbergSync => evolve_recipe(cfg, w),
        Recipe::Spectrum => spectrum(cfg, w),
        Recipe::DisorderSweep => disorder_sweep(cfg, w, threads),
        Recipe::Trajectory => trajectory(cfg, w),
        Recipe::Cavity => cavity(cfg, w),
    }
}

/// Manifold of the field-free chain (fields split but do not mix it when
/// uniform).
pub fn manifold_for(chain: &ChainSpec) -> R<Manifold> {
    let bare = ChainSpec { b: 0.0, bx: 0.0, bmax: 0.0, ..chain.clone() };
    let h0 = build_hamiltonian::<f64>(&bare)?;
    Ok(compute_manifold(&h0, 1e-9)?)
}

pub fn initial_state(cfg: &ExperimentConfig, man: &Manifold) -> R<Density> {
    let dim = chain_dim(man.n_sites());
    let from_coeffs = |c: [Cx<f64>; 4]| -> R<Density> {
        let mut v = DVector::from_element(dim, Cx::new(0.0, 0.0));
        for (s, z) in man.states().iter().zip(c) {
            v.axpy(z, s.amplitudes(), Cx::new(1.0, 0.0));
        }
        let norm = v.norm();
        Ok(DensityMatrix::from_pure(&StateVector::new(v.unscale(norm))?))
    };
    let one = Cx::new(1.0, 0.0);
    let zero = Cx::new(0.0, 0.0);
    // manifold order is (0,0), (1,−1), (1,0), (1,1)
    match cfg.initial_state() {
        InitialState::DfsSuperposition => from_coeffs([one, one, zero, zero]),
        InitialState::GroundUniformSuperposition => from_coeffs([one; 4]),
        InitialState::CustomAmplitudes => {
            let a = cfg.amplitudes.as_ref().expect("validated");
            from_coeffs([0, 1, 2, 3].map(|i| Cx::new(a[i][0], a[i][1])))
        }
        InitialState::GroundInfiniteTemperature => {
            let p = man.projector().to_dense() * Cx::new(0.25, 0.0);
            Ok(DensityMatrix::new(p)?)
        }
        InitialState::RandomPure => {
            let v = random_unit_vector::<f64>(dim, cfg.seed);
            Ok(DensityMatrix::from_pure(&StateVector::new(v)?))
        }
    }
}

fn sx_ops(n: usize) -> R<Vec<(String, Op)>> {
    let sx = spin1_local::<f64>().sx;
    (1..=n).map(|j| Ok((format!("Sx_{j}"), embed(&sx, j, n)?))).collect()
}

/// `|⟨G₁,₋₁|H|G₁,₋₁⟩ − ⟨G₀₀|H|G₀₀⟩|`, the coherence frequency of the
/// manifold under the full Hamiltonian.
fn predicted_frequency(h: &Op, man: &Manifold) -> R<f64> {
    let g0 = man.state(0, 0)?.amplitudes();
    let g1 = man.state(1, -1)?.amplitudes();
    Ok((h.matrix_element(g1, g1).re - h.matrix_element(g0, g0).re).abs())
}

#[derive(Serialize)]
struct EngineChecks {
    max_trace_drift: f64,
    max_hermiticity_drift: f64,
    min_eigenvalue: Option<f64>,
    steps: usize,
}

impl EngineChecks {
    fn of(s: &TimeSeries) -> Self {
        Self {
            max_trace_drift: s.max_trace_drift(),
            max_hermiticity_drift: s.max_hermiticity_drift,
            min_eigenvalue: s.min_recorded_eigenvalue(),
            steps: s.steps,
        }
    }
}

#[derive(Serialize)]
struct EvolveSummary {
    initial_state: InitialState,
    seed: u64,
    predicted_frequency: f64,
    /// slowest nonzero decay rate inside the manifold operator space
    manifold_gap: Option<f64>,
    overlaps: Overlaps,
    dynamical_symmetry: Option<DynamicalSymmetryReport>,
    engine: EngineChecks,
    sync: Option<SyncReport>,
    /// why the synchronization analysis failed, if it did
    sync_error: Option<String>,
}

struct EvolveRun {
    series: TimeSeries,
    anti_sync_error: Vec<f64>,
    summary: EvolveSummary,
}

fn evolve_options(cfg: &ExperimentConfig) -> EvolveOptions {
    EvolveOptions { h: cfg.step(), positivity_every: cfg.positivity_every.unwrap_or(50), ..Default::default() }
}

fn evolve_chain(cfg: &ExperimentConfig, chain: &ChainSpec) -> R<EvolveRun> {
    let man = manifold_for(chain)?;
    let model = Model::from_chain(chain, cfg.dissipators(), cfg.convention())?;
    let rho0 = initial_state(cfg, &man)?;
    let grid = cfg.grid();
    let ev = evolve(&model, &rho0, &grid, &sx_ops(chain.n)?, &evolve_options(cfg))?;
    let predicted = predicted_frequency(model.hamiltonian(), &man)?;
    // a transverse field does not leave the manifold operator space invariant
    let manifold_gap = if chain.conserves_magnetization() {
        slowest_restricted_decay(&restricted_generator(&model, &man)?, 1e-9)?.map(f64::abs)
    } else {
        None
    };
    let dfs = dfs_states(&man)?;
    let dynamical_symmetry = match verify_dynamical_symmetry(&model, &symmetry_operator_a(&man)?, &dfs.rho0) {
        Ok(r) => Some(r),
        Err(fracsync::Error::VacuousCondition) => None,
        Err(e) => return Err(e.into()),
    };
    let (sync, sync_error) = match analyze(&ev.series.times, &ev.series.values, Some(predicted), manifold_gap, &cfg.sync_options()) {
        Ok(r) => (Some(r), None),
        Err(e @ fracsync::Error::FitFailed(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let anti_sync_error = anti_sync_error(&ev.series.times, &ev.series.values, cfg.sync_options().threshold)?.errors;
    let summary = EvolveSummary {
        initial_state: cfg.initial_state(),
        seed: cfg.seed,
        predicted_frequency: predicted,
        manifold_gap,
        overlaps: overlap_coefficients(&man, rho0.matrix())?,
        dynamical_symmetry,
        engine: EngineChecks::of(&ev.series),
        sync,
        sync_error,
    };
    Ok(EvolveRun { series: ev.series, anti_sync_error, summary })
}

fn series_table(run: &EvolveRun) -> Table {
    let s = &run.series;
    let mut t = Table::new(["t".to_string(), "trace".to_string()].into_iter().chain(s.names.iter().cloned()).chain(["anti_sync_error".to_string()]));
    for k in 0..s.times.len() {
        let mut row: Vec<Cell> = vec![s.times[k].into(), s.trace[k].into()];
        row.extend(s.values[k].iter().map(|&v| Cell::from(v)));
        row.push(run.anti_sync_error[k].into());
        t.push(row);
    }
    t
}

fn evolve_recipe(cfg: &ExperimentConfig, w: &mut Writer) -> R<()> {
    let run = evolve_chain(cfg, cfg.chain())?;
    w.csv("evolve.csv", &series_table(&run))?;
    w.json("sync_report.json", &run.summary)?;
    if let Some(e) = run.summary.sync_error {
        w.defer(CliError::NonConvergence(e));
    }
    Ok(())
}

#[derive(Serialize)]
struct GroundStatesOut {
    #[serde(flatten)]
    manifold: fracsync::manifold::ManifoldExport,
    /// `⟨G|H|G⟩` including the configured fields
    field_energies: Vec<f64>,
    singlet_triplet_gap: f64,
}

fn ground_states(cfg: &ExperimentConfig, w: &mut Writer) -> R<()> {
    let chain = cfg.chain();
    let man = manifold_for(chain)?;
    let h = build_hamiltonian::<f64>(chain)?;
    let field_energies: Vec<f64> = man.states().iter().map(|s| h.expectation(s).re).collect();
    let mut t = Table::new(["S", "Sz", "energy", "field_energy"]);
    for (i, (s, sz)) in man.labels().into_iter().enumerate() {
        t.push(vec![s.into(), sz.into(), man.energies()[i].into(), field_energies[i].into()]);
    }
    w.csv("ground_states.csv", &t)?;
    let mut p = Table::new(["j", "x_re", "x_im", "z_re", "z_im"]);
    let (x, z) = (edge_profile(&man, Axis::X)?, edge_profile(&man, Axis::Z)?);
    for j in 0..chain.n {
        p.push(vec![(j + 1).into(), x[j].re.into(), x[j].im.into(), z[j].re.into(), z[j].im.into()]);
    }
    w.csv("edge_profile.csv", &p)?;
    let out = GroundStatesOut { manifold: man.export(), field_energies, singlet_triplet_gap: man.singlet_triplet_gap() };
    w.json("ground_states.json", &out)?;
    Ok(())
}

pub fn spectrum_options(cfg: &ExperimentConfig) -> SpectrumOptions {
    let s = cfg.spectrum.as_ref().expect("validated");
    s.options.clone().unwrap_or_else(|| SpectrumOptions::for_gamma(cfg.dissipators().gamma))
}

fn spectrum(cfg: &ExperimentConfig, w: &mut Writer) -> R<()> {
    let s = cfg.spectrum.as_ref().expect("validated");
    let model = Model::from_chain(cfg.chain(), cfg.dissipators(), cfg.convention())?;
    let res: SpectrumResult = spectrum_near_axis(&model, s.delta_m, s.k, &spectrum_options(cfg))?;
    let mut t = Table::new(["index", "delta_m", "re", "im", "residual"]);
    for (i, e) in res.eigenvalues.iter().enumerate() {
        t.push(vec![i.into(), e.delta_m.into(), e.re.into(), e.im.into(), e.residual.into()]);
    }
    w.csv("spectrum.csv", &t)?;
    w.json("spectrum.json", &res)?;
    Ok(())
}

#[derive(Serialize)]
struct SeedResult {
    seed: u64,
    disorder: Disorder,
    #[serde(flatten)]
    summary: EvolveSummary,
}

fn disorder_sweep(cfg: &ExperimentConfig, w: &mut Writer, threads: usize) -> R<()> {
    let n_seeds = cfg.sweep.as_ref().expect("validated").n_seeds;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let threads = threads.clamp(1, seeds.len());
    let mut slots: Vec<Option<R<EvolveRun>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (tid, chunk) in slots.chunks_mut(seeds.len().div_ceil(threads)).enumerate() {
            let base = tid * seeds.len().div_ceil(threads);
            let seeds = &seeds;
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    let chain = ChainSpec { seed: seeds[base + i], ..cfg.chain().clone() };
                    *slot = Some(evolve_chain(cfg, &chain));
                }
            });
        }
    });
    let mut table = Table::new(["seed", "fitted_frequency", "predicted_frequency", "decay_rate", "transient_time", "final_anti_sync_error", "stability"]);
    let mut results = Vec::with_capacity(seeds.len());
    for (&seed, slot) in seeds.iter().zip(slots) {
        let run = slot.expect("every seed ran")?;
        w.csv(&format!("sweep_seed_{seed}.csv"), &series_table(&run))?;
        let last_error = *run.anti_sync_error.last().unwrap();
        match &run.summary.sync {
            Some(s) => {
                let stability = serde_json::to_value(s.stability).unwrap();
                table.push(vec![
                    seed.into(),
                    s.fitted_frequency.into(),
                    run.summary.predicted_frequency.into(),
                    s.decay_rate.into(),
                    s.transient_time.unwrap_or(f64::NAN).into(),
                    last_error.into(),
                    stability.as_str().unwrap().into(),
                ]);
            }
            None => {
                let nan = || Cell::from(f64::NAN);
                table.push(vec![seed.into(), nan(), run.summary.predicted_frequency.into(), nan(), nan(), last_error.into(), "failed".into()]);
                w.defer(CliError::NonConvergence(format!("seed {seed}: {}", run.summary.sync_error.clone().unwrap_or_default())));
            }
        }
        let chain = ChainSpec { seed, ..cfg.chain().clone() };
        results.push(SeedResult { seed, disorder: draw_disorder(&chain), summary: run.summary });
    }
    w.csv("sweep.csv", &table)?;
    w.json("sweep.json", &results)?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectorySummary {
    gamma: f64,
    theta: f64,
    trajectories: usize,
    total_jumps_mean: f64,
    total_jumps_expected: f64,
    pooled_jump_zscore: f64,
    /// trace distance of the ensemble average to the master equation at the last step
    final_trace_distance: f64,
    initial_mean_sz: f64,
}

fn trajectory(cfg: &ExperimentConfig, w: &mut Writer) -> R<()> {
    let spec = fracsync::trajectory::CircuitSpec { seed: cfg.seed, ..cfg.circuit.clone().expect("validated") };
    let circuit = Circuit::<f64>::new(spec.clone())?;
    let psi0 = mixed_sector_state::<f64>();
    let ens = circuit.run_ensemble(&psi0)?;
    let dim = chain_dim(spec.n_qutrits);
    let jump = total_ops::<f64>(spec.n_qutrits).sm.scale_real(spec.gamma().sqrt());
    let model = LindbladModel::new(Operator::zeros(dim), vec![jump], Convention::Half)?;
    let mut grid: Vec<f64> = ens.snapshots.iter().map(|(k, _)| *k as f64).collect();
    if grid.first() != Some(&0.0) {
        grid.insert(0, 0.0);
    }
    let me = evolve(&model, &DensityMatrix::from_pure(&psi0), &grid, &[], &EvolveOptions { h: 0.05, snapshots: true, ..Default::default() })?;
    let mut snaps = Table::new(["step", "trace_distance"]);
    let mut last = 0.0;
    for (step, rho) in &ens.snapshots {
        let k = grid.iter().position(|&g| g == *step as f64).unwrap();
        last = DensityMatrix::from_matrix_unchecked(rho.clone()).trace_distance(&me.snapshots[k]);
        snaps.push(vec![(*step).into(), last.into()]);
    }
    w.csv("trajectory_snapshots.csv", &snaps)?;
    let mut steps = Table::new(["step", "mean_jumps", "jump_stderr", "expected_jumps", "mean_sz"]);
    for k in 0..spec.steps {
        steps.push(vec![
            (k + 1).into(),
            ens.mean_jumps[k].into(),
            ens.jump_stderr[k].into(),
            ens.expected_jumps[k].into(),
            ens.mean_sz[k + 1].into(),
        ]);
    }
    w.csv("trajectory_steps.csv", &steps)?;
    let mut counts = Table::new(["trajectory", "jump_count"]);
    for r in &ens.records {
        counts.push(vec![r.index.into(), r.jump_count.into()]);
    }
    w.csv("trajectory_counts.csv", &counts)?;
    let total_jumps_mean = ens.records.iter().map(|r| r.jump_count as f64).sum::<f64>() / ens.records.len() as f64;
    let summary = TrajectorySummary {
        gamma: spec.gamma(),
        theta: spec.theta(),
        trajectories: spec.trajectories,
        total_jumps_mean,
        total_jumps_expected: ens.expected_jumps.iter().sum(),
        pooled_jump_zscore: ens.pooled_jump_zscore(),
        final_trace_distance: last,
        initial_mean_sz: ens.mean_sz[0],
    };
    w.json("trajectory.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct CavitySummary {
    effective_gamma: f64,
    gamma_over_lambda: f64,
    max_trace_distance: f64,
    max_boson_population: f64,
}

fn cavity(cfg: &ExperimentConfig, w: &mut Writer) -> R<()> {
    let m = cfg.cavity.clone().expect("validated");
    let rho = DensityMatrix::from_pure(&mixed_sector_state::<f64>());
    let opts = EvolveOptions { h: cfg.step(), ..Default::default() };
    let cmp = adiabatic_comparison(&m, &rho, &cfg.grid(), &opts)?;
    let mut t = Table::new(["t", "trace_distance", "boson_population"]);
    for k in 0..cmp.times.len() {
        t.push(vec![cmp.times[k].into(), cmp.trace_distance[k].into(), cmp.boson_population[k].into()]);
    }
    w.csv("cavity.csv", &t)?;
    let summary = CavitySummary {
        effective_gamma: m.effective_gamma(),
        gamma_over_lambda: m.gamma_cav / m.lambda,
        max_trace_distance: cmp.max_trace_distance(),
        max_boson_population: cmp.max_population(),
    };
    w.json("cavity.json", &summary)?;
    Ok(())
}

/// Dry-run resource report.
#[derive(Clone, Debug, Serialize)]
pub struct ResourceEstimate {
    pub recipe: &'static str,
    pub hilbert_dim: usize,
    pub density_entries: usize,
    pub block_dim: Option<usize>,
    pub records: Option<usize>,
    pub memory_bytes: u64,
}

/// Bytes per complex double.
const CX: u64 = 16;

pub fn estimate(cfg: &ExperimentConfig) -> ResourceEstimate {
    let recipe = cfg.recipe();
    let hilbert_dim = match recipe {
        Recipe::Trajectory => chain_dim(cfg.circuit.as_ref().unwrap().n_qutrits),
        Recipe::Cavity => {
            let c = cfg.cavity.as_ref().unwrap();
            chain_dim(c.n_qutrits) * (c.n_max + 1)
        }
        _ => chain_dim(cfg.chain().n),
    };
    let d = hilbert_dim as u64;
    let d2 = d * d;
    let records = matches!(recipe, Recipe::Evolve | Recipe::HeisenbergSync | Recipe::DisorderSweep | Recipe::Cavity).then(|| cfg.grid().len());
    let mut block_dim = None;
    let memory_bytes = match recipe {
        // the integrator's state, three stage buffers, the natural-order copy,
        // the per-record density matrix and the eigen workspace
        Recipe::Evolve | Recipe::HeisenbergSync | Recipe::DisorderSweep => 8 * CX * d2,
        Recipe::GroundStates => 4 * CX * d2,
        Recipe::Spectrum => {
            let s = cfg.spectrum.as_ref().unwrap();
            let b = delta_m_blocks(cfg.chain().n).into_iter().find(|b| b.delta_m == s.delta_m).map_or(0, |b| b.dim());
            block_dim = Some(b);
            let opts = spectrum_options(cfg);
            let b = b as u64;
            if b as usize <= opts.dense_cutoff {
                3 * CX * b * b + 6 * CX * d2
            } else {
                2 * (opts.krylov_dim as u64 + 1) * CX * b + 8 * CX * d2
            }
        }
        Recipe::Trajectory => {
            let c = cfg.circuit.as_ref().unwrap();
            let snaps = (c.steps + 1) as u64;
            snaps * CX * d2 + (c.trajectories as u64) * (c.steps as u64) * 16
        }
        Recipe::Cavity => 2 * records.unwrap() as u64 * CX * d2 + 8 * CX * d2,
    };
    ResourceEstimate { recipe: recipe.name(), hilbert_dim, density_entries: hilbert_dim * hilbert_dim, block_dim, records, memory_bytes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_dimension_estimate() {
        let cfg = ExperimentConfig::parse(
            "recipe = \"spectrum\"\n[chain]\nN = 6\nB = 0.2\n[dissipators]\ngamma = 0.2\nkappa = 0.2\n[spectrum]\ndelta_m = -1\n",
        )
        .unwrap();
        cfg.validate().unwrap();
        let e = estimate(&cfg);
        assert_eq!(e.hilbert_dim, 729);
        assert_eq!(e.density_entries, 729 * 729);
        // independent count: Σ_m d_m d_{m+1} over the magnetization sectors
        let mut d = [0usize; 13];
        for i in 0..729usize {
            let m: i32 = (0..6).map(|k| 1 - ((i / 3usize.pow(k)) % 3) as i32).sum();
            d[(m + 6) as usize] += 1;
        }
        let expected: usize = (0..12).map(|m| d[m] * d[m + 1]).sum();
        assert_eq!(expected, 69576);
        assert_eq!(e.block_dim, Some(expected));
    }

    #[test]
    fn dfs_initial_state_is_pure_and_in_manifold() {
        let cfg = ExperimentConfig::parse("recipe = \"evolve\"\n[chain]\nN = 4\n").unwrap();
        let man = manifold_for(cfg.chain()).unwrap();
        let rho = initial_state(&cfg, &man).unwrap();
        let m = rho.matrix();
        assert!(((m * m).trace().re - 1.0).abs() < 1e-12);
        let p = man.projector().to_dense();
        assert!((&p * m * &p - m).norm() < 1e-12);
        let o = overlap_coefficients(&man, m).unwrap();
        assert!((o.c10.norm() - 0.5).abs() < 1e-12);
    }
}
