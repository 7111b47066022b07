//! Run orchestration and file output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use aoheom_core::{
    boltzmann_initial, compute_response, convolve_sticks, coupling_operators, diagnostics, dipole_operators, eigenenergy,
    golden_rule_spectrum, hamiltonian_matrix, pade_decomposition, relax, spectrum_from_response, write_checkpoint,
    BasisSet, BathSpec, CheckpointHeader, Diagnostics, HierarchyIndexSpace, HierarchyState, ModelContext,
    OperatorMatrix, PadeScheme, PropagatorConfig, ResponseTrace, Spectrum, StickSpectrum, DEFAULT_INDEX_BUDGET,
};
use serde::Serialize;

use crate::config::{serialize_config, Component, EquilibrationPolicy, RunConfig};
use crate::error::{AppError, AppResult};

/// Runs `f` on a rayon pool with the configured worker count.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| AppError::Validation(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Basis, bath and hierarchy model for one configuration.
pub struct Setup {
    pub basis: Arc<BasisSet>,
    pub bath: BathSpec,
    pub schemes: [PadeScheme; 3],
    pub model: ModelContext,
    pub dipoles: [OperatorMatrix; 3],
}

impl Setup {
    pub fn new(config: &RunConfig) -> AppResult<Self> {
        let basis = Arc::new(BasisSet::enumerate(config.n_max)?);
        let bath = BathSpec::new(config.eta, config.gamma, config.beta)?;
        let schemes = [
            pade_decomposition(config.pade_k[0])?,
            pade_decomposition(config.pade_k[1])?,
            pade_decomposition(config.pade_k[2])?,
        ];
        let space =
            Arc::new(HierarchyIndexSpace::enumerate(config.pade_k, config.depth, config.truncation, DEFAULT_INDEX_BUDGET)?);
        let model = ModelContext::from_operators(
            hamiltonian_matrix(&basis),
            coupling_operators(&basis)?,
            &bath,
            &schemes,
            space,
            config.terminator,
        )?;
        let dipoles = dipole_operators(&basis, config.dipole_radial_mode, config.mu0)?;
        Ok(Setup { basis, bath, schemes, model, dipoles })
    }

    pub fn propagator_config(&self, config: &RunConfig) -> PropagatorConfig {
        PropagatorConfig {
            dt: config.dt,
            n_steps: config.n_steps,
            equilibration_tolerance: config.equilibration_tolerance,
            max_equilibration_steps: config.max_equilibration_steps,
        }
    }

    pub fn dipole(&self, axis: aoheom_core::Axis) -> &OperatorMatrix {
        &self.dipoles[axis.index()]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSummary {
    pub steps: usize,
    pub residual: f64,
    pub converged: bool,
    pub tolerance: f64,
    pub policy: EquilibrationPolicy,
    pub trace_error: f64,
    pub hermiticity_defect: f64,
    pub max_ado_hermiticity_defect: f64,
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentSummary {
    pub component: String,
    pub trace_drift: f64,
    pub apodization_rate: f64,
    pub grid_spacing: f64,
    pub bin_width: f64,
    pub max_intensity: f64,
    /// `(omega, intensity)` of local maxima above 10% of the maximum.
    pub peaks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub parameters: toml::Table,
    pub dimension: usize,
    pub ado_count: usize,
    pub stability_product: f64,
    pub equilibrium: EquilibriumSummary,
    pub components: Vec<ComponentSummary>,
    pub wall_time_seconds: f64,
}

pub struct AbsorptionOutput {
    pub equilibrium: HierarchyState,
    pub traces: Vec<(Component, ResponseTrace)>,
    pub spectra: Vec<(Component, Spectrum)>,
    pub sticks: Vec<(Component, StickSpectrum)>,
    pub metadata: Metadata,
    pub files: Vec<PathBuf>,
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| AppError::io(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(format!("creating {}", dir.display()), e))
}

fn parameters(config: &RunConfig) -> toml::Table {
    toml::from_str(&serialize_config(config)).expect("serialized config parses")
}

#[derive(Serialize)]
struct Failure<'a> {
    error: String,
    exit_code: i32,
    parameters: toml::Table,
    diagnostics: Option<&'a Diagnostics>,
    residual: Option<f64>,
    steps: Option<usize>,
}

fn record_failure(config: &RunConfig, err: &AppError, state: Option<(&Diagnostics, f64, usize)>) {
    let failure = Failure {
        error: err.to_string(),
        exit_code: err.exit_code(),
        parameters: parameters(config),
        diagnostics: state.map(|s| s.0),
        residual: state.map(|s| s.1),
        steps: state.map(|s| s.2),
    };
    if ensure_dir(&config.output_dir).is_ok() {
        let _ = write_json(&config.output_dir.join("failure.json"), &failure);
    }
}

/// Time-marches from the Boltzmann state and applies the configured
/// policy when the tolerance is not reached.
pub fn equilibrate_with_policy(setup: &Setup, config: &RunConfig) -> AppResult<(HierarchyState, EquilibriumSummary)> {
    let start = boltzmann_initial(&setup.model, config.beta)?;
    let r = relax(&start, &setup.model, &setup.propagator_config(config))?;
    let d = diagnostics(&r.state);
    let summary = EquilibriumSummary {
        steps: r.steps,
        residual: r.residual,
        converged: r.converged,
        tolerance: config.equilibration_tolerance,
        policy: config.equilibration_policy,
        trace_error: (d.trace.0 - 1.0).hypot(d.trace.1),
        hermiticity_defect: d.hermiticity_defect,
        max_ado_hermiticity_defect: d.max_ado_hermiticity_defect,
        populations: d.populations.clone(),
    };
    if !r.converged {
        if config.equilibration_policy == EquilibrationPolicy::Strict {
            let err = AppError::Core(aoheom_core::Error::Convergence { steps: r.steps, residual: r.residual });
            record_failure(config, &err, Some((&d, r.residual, r.steps)));
            return Err(err);
        }
        log::warn!(
            "equilibration stopped after {} steps at residual {:e} (tolerance {:e})",
            r.steps,
            r.residual,
            config.equilibration_tolerance
        );
    }
    log::info!("equilibrated in {} steps, residual {:e}", r.steps, r.residual);
    Ok((r.state, summary))
}

/// Equilibrate, perturb, propagate, trace and transform for every
/// requested component; writes spectrum, response, stick and metadata
/// files to the output directory.
pub fn run_absorption(config: &RunConfig) -> AppResult<AbsorptionOutput> {
    with_workers(config.workers, || {
        let result = absorption_inner(config);
        if let Err(e) = &result {
            if !matches!(e, AppError::Core(aoheom_core::Error::Convergence { .. })) {
                record_failure(config, e, None);
            }
        }
        result
    })?
}

fn absorption_inner(config: &RunConfig) -> AppResult<AbsorptionOutput> {
    let clock = Instant::now();
    ensure_dir(&config.output_dir)?;
    let setup = Setup::new(config)?;
    let pconf = setup.propagator_config(config);
    log::info!(
        "basis dimension {}, {} auxiliary operators",
        setup.basis.dimension(),
        setup.model.space.len()
    );
    let (eq, eq_summary) = equilibrate_with_policy(&setup, config)?;
    let apod = config.apodization();
    let dir = &config.output_dir;
    let mut files = Vec::new();
    let mut traces = Vec::new();
    let mut spectra = Vec::new();
    let mut sticks = Vec::new();
    let mut summaries = Vec::new();
    for &c in &config.components {
        let mu_in = setup.dipole(c.excited);
        let mu_out = setup.dipole(c.detected);
        log::info!("propagating component {c}");
        let trace = compute_response(&eq, &setup.model, mu_in, mu_out, &pconf)?;
        let spectrum = spectrum_from_response(&trace, apod);
        let stick = golden_rule_spectrum(mu_out, mu_in, config.beta)?;
        let broadened = convolve_sticks(&stick, config.stick_width, &spectrum.frequencies, config.stick_scale)?;

        let paths = [
            dir.join(format!("spectrum_{c}.csv")),
            dir.join(format!("response_{c}.csv")),
            dir.join(format!("golden_rule_{c}.csv")),
            dir.join(format!("golden_rule_{c}_broadened.csv")),
        ];
        write_with(&paths[0], |w| spectrum.write_csv(w))?;
        write_with(&paths[1], |w| trace.write_csv(w))?;
        write_with(&paths[2], |w| stick.write_csv(w))?;
        write_with(&paths[3], |w| broadened.write_csv(w))?;
        files.extend(paths);

        summaries.push(ComponentSummary {
            component: c.to_string(),
            trace_drift: trace.trace_drift,
            apodization_rate: apod,
            grid_spacing: spectrum.grid_spacing,
            bin_width: spectrum.bin_width,
            max_intensity: spectrum.max_intensity(),
            peaks: spectrum.refined_peaks(0.1),
        });
        traces.push((c, trace));
        spectra.push((c, spectrum));
        sticks.push((c, stick));
    }
    let metadata = Metadata {
        parameters: parameters(config),
        dimension: setup.basis.dimension(),
        ado_count: setup.model.space.len(),
        stability_product: config.dt * setup.model.spectral_bound(),
        equilibrium: eq_summary,
        components: summaries,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
    };
    let meta_path = dir.join("metadata.json");
    write_json(&meta_path, &metadata)?;
    files.push(meta_path);
    Ok(AbsorptionOutput { equilibrium: eq, traces, spectra, sticks, metadata, files })
}

/// Golden-rule sticks (and their Lorentzian display version) for every
/// requested component, without any hierarchy propagation.
pub fn run_golden_rule(config: &RunConfig) -> AppResult<Vec<(Component, StickSpectrum)>> {
    ensure_dir(&config.output_dir)?;
    let basis = Arc::new(BasisSet::enumerate(config.n_max)?);
    let dipoles = dipole_operators(&basis, config.dipole_radial_mode, config.mu0)?;
    let spacing = 2.0 * std::f64::consts::PI / (aoheom_core::spectroscopy::DEFAULT_PADDING as f64 * config.n_steps as f64 * config.dt);
    let top = 0.6;
    let grid: Vec<f64> = (0..).map(|j| j as f64 * spacing).take_while(|w| *w <= top).collect();
    let mut out = Vec::new();
    for &c in &config.components {
        let stick = golden_rule_spectrum(&dipoles[c.detected.index()], &dipoles[c.excited.index()], config.beta)?;
        let broadened = convolve_sticks(&stick, config.stick_width, &grid, config.stick_scale)?;
        write_with(&config.output_dir.join(format!("golden_rule_{c}.csv")), |w| stick.write_csv(w))?;
        write_with(&config.output_dir.join(format!("golden_rule_{c}_broadened.csv")), |w| broadened.write_csv(w))?;
        out.push((c, stick));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct EquilibriumRecord {
    parameters: toml::Table,
    dimension: usize,
    ado_count: usize,
    equilibrium: EquilibriumSummary,
    wall_time_seconds: f64,
}

/// Equilibrates and writes a checkpoint, a population table and a JSON
/// summary.
pub fn run_equilibrate(config: &RunConfig) -> AppResult<(HierarchyState, EquilibriumSummary)> {
    with_workers(config.workers, || {
        let clock = Instant::now();
        ensure_dir(&config.output_dir)?;
        let setup = Setup::new(config)?;
        let (state, summary) = equilibrate_with_policy(&setup, config)?;
        let dir = &config.output_dir;
        let header = CheckpointHeader::for_state(
            &state,
            setup.basis.states().to_vec(),
            setup.bath,
            setup.schemes.clone(),
        );
        write_with(&dir.join("equilibrium.ckpt"), |w| {
            write_checkpoint(&mut *w, &header, &state).map_err(std::io::Error::other)
        })?;
        let e_min = eigenenergy(1)?;
        let weights = setup
            .basis
            .states()
            .iter()
            .map(|s| Ok((-config.beta * (eigenenergy(s.n)? - e_min)).exp()))
            .collect::<AppResult<Vec<f64>>>()?;
        let z: f64 = weights.iter().sum();
        write_with(&dir.join("populations.csv"), |w| {
            writeln!(w, "state,population,boltzmann")?;
            for ((s, p), b) in setup.basis.states().iter().zip(&summary.populations).zip(&weights) {
                writeln!(w, "{},{:.17e},{:.17e}", s.label(), p, b / z)?;
            }
            Ok(())
        })?;
        let record = EquilibriumRecord {
            parameters: parameters(config),
            dimension: setup.basis.dimension(),
            ado_count: setup.model.space.len(),
            equilibrium: summary.clone(),
            wall_time_seconds: clock.elapsed().as_secs_f64(),
        };
        write_json(&dir.join("equilibrium.json"), &record)?;
        Ok((state, summary))
    })?
}

/// Writes `H_S`, `V_a` and `mu_a` as CSV tables.
pub fn run_dump_matrices(config: &RunConfig) -> AppResult<Vec<PathBuf>> {
    ensure_dir(&config.output_dir)?;
    let basis = Arc::new(BasisSet::enumerate(config.n_max)?);
    let mut ops = vec![hamiltonian_matrix(&basis)];
    ops.extend(coupling_operators(&basis)?);
    ops.extend(dipole_operators(&basis, config.dipole_radial_mode, config.mu0)?);
    let mut files = Vec::new();
    for op in &ops {
        let path = config.output_dir.join(format!("{}.csv", op.label));
        write_with(&path, |w| op.write_csv(w))?;
        files.push(path);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationDifference {
    pub component: String,
    pub n_max_a: u32,
    pub n_max_b: u32,
    pub linf: f64,
}

/// Absorption runs over `config.truncation_n_max`, each normalized to its
/// maximum, with consecutive L-infinity differences.
pub fn run_truncation_study(config: &RunConfig) -> AppResult<Vec<TruncationDifference>> {
    ensure_dir(&config.output_dir)?;
    let mut normalized: Vec<(u32, Vec<(Component, Spectrum)>)> = Vec::new();
    for &n in &config.truncation_n_max {
        let mut sub = config.clone();
        sub.n_max = n;
        sub.output_dir = config.output_dir.join(format!("n_max_{n}"));
        log::info!("truncation study: n_max = {n}");
        let out = run_absorption(&sub)?;
        let mut spectra = Vec::new();
        for (c, s) in out.spectra {
            let s = s.normalized();
            write_with(&config.output_dir.join(format!("normalized_{c}_n_max_{n}.csv")), |w| s.write_csv(w))?;
            spectra.push((c, s));
        }
        normalized.push((n, spectra));
    }
    let mut report = Vec::new();
    for pair in normalized.windows(2) {
        let (na, sa) = &pair[0];
        let (nb, sb) = &pair[1];
        for ((c, a), (_, b)) in sa.iter().zip(sb) {
            let linf = a.intensities.iter().zip(&b.intensities).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            report.push(TruncationDifference { component: c.to_string(), n_max_a: *na, n_max_b: *nb, linf });
        }
    }
    write_with(&config.output_dir.join("truncation_report.csv"), |w| {
        writeln!(w, "component,n_max_a,n_max_b,linf")?;
        for r in &report {
            writeln!(w, "{},{},{},{:.17e}", r.component, r.n_max_a, r.n_max_b, r.linf)?;
        }
        Ok(())
    })?;
    Ok(report)
}
