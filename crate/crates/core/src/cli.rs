//! Batch front end: run configuration, the four subcommands and their output
//! files.
//!
//! Every command validates the whole [`RunConfig`] before touching the model,
//! writes the resolved configuration to `manifest.json` in the output
//! directory (re-running from it reproduces the same files), and returns a
//! report plus an exit code: 0 success, 2 invalid input, 3 a numerical check
//! failed or a computation was refused.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{
    commutator_with_position, off_diagonal, off_diagonal_residual, trace_per_unit_volume, unitary_exp, Axis, CMatrix,
    FiberOperator, ProjectionField,
};
use crate::lattice::{BravaisLattice, DerivativeScheme, KGrid};
use crate::liouvillian::{defining_residual, inverse_liouvillian_contour, inverse_liouvillian_spectral, ContourSpec};
use crate::models::{
    build_hamiltonian, fermi_projection, flat, haldane, hofstadter, load_hopping_list, qwz, GapReport, HoppingModel,
};
use crate::neass::{
    assemble_neass, build_generators_with_gauge, y_od_spectral, DiagonalGauge, HamiltonianGauge, OffDiagonalGauge,
    MAX_ORDER,
};
use crate::random::{rng, smooth_hermitian, smooth_unitary};
use crate::response::{
    chern_marker, chern_number_fhs, chern_simons_check, commutator_trace_check, log_range,
    residual_scaling_sweep_with_gauge, ScalingFit, SweepResult,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// `|2 pi sigma_Hall - C|` allowed by the quantization check.
pub const QUANTIZATION_TOL: f64 = 1e-6;
/// Slack below `n + 1` allowed for fitted slopes.
pub const SLOPE_SLACK: f64 = 0.3;
pub const MIN_R_SQUARED: f64 = 0.98;

const MAX_GRID: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Qwz {
        u: f64,
    },
    Haldane {
        t1: f64,
        t2: f64,
        phi: f64,
        mass: f64,
    },
    /// Fermi energy placed mid-gap above the lowest `filled` bands unless
    /// `mu` is given explicitly.
    Hofstadter {
        p: i64,
        q: usize,
        t: f64,
        filled: usize,
    },
    /// Constant real symmetric on-site matrix, given row by row.
    Flat {
        onsite: Vec<Vec<f64>>,
    },
    /// Hopping list file (`R1 R2 row col re im` per line) on the lattice
    /// spanned by `a1`, `a2`.
    Custom {
        path: PathBuf,
        a1: [f64; 2],
        a2: [f64; 2],
    },
}

impl ModelSpec {
    fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("model parameter {name} = {v} is not finite")))
            }
        };
        match self {
            ModelSpec::Qwz { u } => finite("u", *u),
            ModelSpec::Haldane { t1, t2, phi, mass } => {
                finite("t1", *t1)?;
                finite("t2", *t2)?;
                finite("phi", *phi)?;
                finite("mass", *mass)
            }
            ModelSpec::Hofstadter { q, t, filled, .. } => {
                finite("t", *t)?;
                if *q == 0 {
                    return Err(Error::Validation("hofstadter q must be positive".into()));
                }
                if *filled == 0 || filled >= q {
                    return Err(Error::Validation(format!(
                        "hofstadter filled = {filled} must lie in 1..{q}"
                    )));
                }
                Ok(())
            }
            ModelSpec::Flat { onsite } => {
                if onsite.is_empty() || onsite.iter().any(|row| row.len() != onsite.len()) {
                    return Err(Error::Validation(
                        "flat onsite matrix must be square and non-empty".into(),
                    ));
                }
                if onsite.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("flat onsite matrix has non-finite entries".into()));
                }
                Ok(())
            }
            ModelSpec::Custom { a1, a2, .. } => {
                if a1.iter().chain(a2).any(|v| !v.is_finite()) {
                    return Err(Error::Validation("custom lattice vectors must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    List(Vec<f64>),
    /// `count` points from `10^lo` to `10^hi`.
    LogRange {
        lo: f64,
        hi: f64,
        count: usize,
    },
}

impl EpsilonSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EpsilonSpec::List(v) => v.clone(),
            EpsilonSpec::LogRange { lo, hi, count } => log_range(*lo, *hi, *count),
        }
    }
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        EpsilonSpec::LogRange {
            lo: -2.0,
            hi: -0.5,
            count: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourConfig {
    /// `[re, im]`; defaults to the middle of the occupied spectrum.
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub nodes: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            center: None,
            radius: None,
            nodes: ContourSpec::DEFAULT_NODES,
        }
    }
}

impl ContourConfig {
    pub fn resolve(&self, report: &GapReport) -> ContourSpec {
        let base = ContourSpec::around_occupied(report, self.nodes);
        ContourSpec {
            center: self.center.map(|c| Complex64::new(c[0], c[1])).unwrap_or(base.center),
            radius: self.radius.unwrap_or(base.radius),
            nodes: self.nodes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Fermi energy; the model's own default when absent.
    pub mu: Option<f64>,
    pub n1: usize,
    pub n2: usize,
    pub n_max: usize,
    pub epsilons: EpsilonSpec,
    pub contour: ContourConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub derivative: DerivativeScheme,
    /// Coefficient `c` of the diagonal gauge `A_j^D = c H`; off-diagonal
    /// generators when absent.
    pub diagonal_gauge: Option<f64>,
    /// Random draws per property in the self-tests.
    pub samples: usize,
    /// Break the idempotency of the Fermi projection before the self-test
    /// uses it, to exercise the error path.
    pub corrupt_projector: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Qwz { u: 1.0 },
            mu: None,
            n1: 48,
            n2: 48,
            n_max: 3,
            epsilons: EpsilonSpec::default(),
            contour: ContourConfig::default(),
            out_dir: PathBuf::from("neass-out"),
            seed: 20240917,
            derivative: DerivativeScheme::Fourier,
            diagonal_gauge: None,
            samples: 10,
            corrupt_projector: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// Checks every field against the preconditions of the operations it feeds.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Validation(format!(
                "grid sizes must be positive, got {}x{}",
                self.n1, self.n2
            )));
        }
        if self.n1 > MAX_GRID || self.n2 > MAX_GRID {
            return Err(Error::Validation(format!("grid sizes are capped at {MAX_GRID}")));
        }
        if let Some(mu) = self.mu {
            if !mu.is_finite() {
                return Err(Error::Validation("mu must be finite".into()));
            }
        }
        if self.n_max == 0 || self.n_max > MAX_ORDER {
            return Err(Error::Validation(format!(
                "n_max = {} must lie in 1..={MAX_ORDER}",
                self.n_max
            )));
        }
        if let EpsilonSpec::LogRange { lo, hi, .. } = self.epsilons {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Validation("epsilon range must be finite".into()));
            }
        }
        let eps = self.epsilons.values();
        if eps.len() < crate::response::MIN_FIT_POINTS {
            return Err(Error::Validation(format!(
                "need at least {} epsilon values, got {}",
                crate::response::MIN_FIT_POINTS,
                eps.len()
            )));
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::Validation(format!("epsilon {e} outside (0, 1]")));
        }
        if self.contour.nodes < 3 {
            return Err(Error::Validation("contour needs at least 3 nodes".into()));
        }
        if let Some(r) = self.contour.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Validation(format!("contour radius {r} must be positive")));
            }
        }
        if let Some(c) = self.contour.center {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(Error::Validation("contour center must be finite".into()));
            }
        }
        if let Some(c) = self.diagonal_gauge {
            if !c.is_finite() {
                return Err(Error::Validation("diagonal gauge coefficient must be finite".into()));
            }
        }
        if self.samples == 0 {
            return Err(Error::Validation("samples must be positive".into()));
        }
        Ok(())
    }

    /// Builds the model, resolving the Fermi energy where the model needs a
    /// grid to do so.
    pub fn build_model(&self) -> Result<HoppingModel> {
        let model = match &self.model {
            ModelSpec::Qwz { u } => qwz(*u),
            ModelSpec::Haldane { t1, t2, phi, mass } => haldane(*t1, *t2, *phi, *mass),
            ModelSpec::Hofstadter { p, q, t, filled } => {
                let model = hofstadter(*p, *q, *t)?;
                if self.mu.is_none() {
                    let grid = Arc::new(KGrid::new(*model.lattice(), self.n1, self.n2)?);
                    model.place_mu_in_gap(&grid, *filled)?
                } else {
                    model
                }
            }
            ModelSpec::Flat { onsite } => {
                let n = onsite.len();
                let m = CMatrix::from_fn(n, n, |i, j| Complex64::new(onsite[i][j], 0.0));
                flat(&m, 0.0)?
            }
            ModelSpec::Custom { path, a1, a2 } => {
                let lattice = BravaisLattice::new(*a1, *a2)?;
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("custom")
                    .to_string();
                load_hopping_list(&name, BufReader::new(File::open(path)?), lattice, 0.0)?
            }
        };
        Ok(match self.mu {
            Some(mu) => model.with_mu(mu),
            None => model,
        })
    }

    pub fn grid(&self, model: &HoppingModel) -> Result<Arc<KGrid>> {
        Ok(Arc::new(
            KGrid::new(*model.lattice(), self.n1, self.n2)?.with_scheme(self.derivative),
        ))
    }

    fn gauge(&self) -> Box<dyn DiagonalGauge> {
        match self.diagonal_gauge {
            Some(c) => Box::new(HamiltonianGauge(c)),
            None => Box::new(OffDiagonalGauge),
        }
    }
}

/// Failure classified by exit code.
#[derive(Debug)]
pub struct CliError {
    pub error: Error,
    pub code: i32,
}

impl CliError {
    fn invalid(error: Error) -> Self {
        Self {
            error,
            code: EXIT_INVALID,
        }
    }

    fn numerical(error: Error) -> Self {
        Self {
            error,
            code: EXIT_CHECK_FAILED,
        }
    }

    /// `{"error": kind, "module": module, "message": text}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.error.kind(),
            "module": self.error.module(),
            "message": self.error.to_string(),
        })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Model, grid and Hamiltonian of a validated configuration. Anything that
/// fails up to here is an input problem.
pub struct Prepared {
    pub config: RunConfig,
    pub model: HoppingModel,
    pub h: FiberOperator,
}

pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    config.validate().map_err(CliError::invalid)?;
    let model = config.build_model().map_err(|e| match e {
        Error::GapClosed { .. } => CliError::numerical(e),
        e => CliError::invalid(e),
    })?;
    let grid = config.grid(&model).map_err(CliError::invalid)?;
    let h = build_hamiltonian(&model, &grid).map_err(CliError::invalid)?;
    let mut config = config.clone();
    config.mu = Some(model.mu());
    Ok(Prepared { config, model, h })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn write_manifest(config: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&config.out_dir).map_err(|e| CliError::invalid(e.into()))?;
    write_json(&config.out_dir.join("manifest.json"), config).map_err(CliError::invalid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernReport {
    pub model: String,
    pub n1: usize,
    pub n2: usize,
    pub mu: f64,
    pub gap: GapReport,
    pub sigma_hall: f64,
    pub two_pi_sigma_hall: f64,
    /// Imaginary part of the Chern marker, zero up to roundoff.
    pub marker_imag: f64,
    pub fhs: i64,
    pub deviation: f64,
    pub passed: bool,
}

/// Hall conductivity against the plaquette Chern number.
pub fn cmd_chern(config: &RunConfig) -> CliResult<(ChernReport, i32)> {
    let prep = prepare(config)?;
    write_manifest(&prep.config)?;
    let (pi0, gap) = fermi_projection(&prep.h, prep.model.mu()).map_err(CliError::numerical)?;
    let marker = chern_marker(&pi0);
    let sigma = marker.re;
    let fhs = chern_number_fhs(&pi0).map_err(CliError::numerical)?;
    let two_pi = 2.0 * std::f64::consts::PI * sigma;
    let deviation = (two_pi - fhs as f64).abs();
    let report = ChernReport {
        model: prep.model.name().to_string(),
        n1: prep.config.n1,
        n2: prep.config.n2,
        mu: prep.model.mu(),
        gap,
        sigma_hall: sigma,
        two_pi_sigma_hall: two_pi,
        marker_imag: marker.im,
        fhs,
        deviation,
        passed: deviation < QUANTIZATION_TOL,
    };
    write_json(&prep.config.out_dir.join("report.json"), &report).map_err(CliError::invalid)?;
    let code = if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED };
    Ok((report, code))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub excluded: usize,
    /// Fewer than the minimum number of points above the noise floor.
    pub degenerate: bool,
    pub passed: bool,
}

impl FitSummary {
    fn new(n: usize, fit: &ScalingFit) -> Self {
        Self {
            n,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            points: fit.points,
            excluded: fit.excluded,
            degenerate: fit.is_degenerate(),
            passed: fit.meets(n as f64 + 1.0 - SLOPE_SLACK, MIN_R_SQUARED),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub sigma_hall: f64,
    pub residual_fits: Vec<FitSummary>,
    pub defect_fits: Vec<FitSummary>,
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

#[derive(Serialize)]
struct RecordRow<'a> {
    model: &'a str,
    n: usize,
    epsilon: f64,
    current: f64,
    sigma_hall: f64,
    residual: f64,
    defect: f64,
}

#[derive(Serialize)]
struct FitRow<'a> {
    model: &'a str,
    n: usize,
    slope: f64,
    intercept: f64,
    r2: f64,
}

fn write_sweep_csvs(out: &Path, model: &str, sweep: &SweepResult) -> Result<Vec<PathBuf>> {
    let records = out.join("records.csv");
    let mut w = csv::Writer::from_path(&records)?;
    for r in &sweep.records {
        w.serialize(RecordRow {
            model,
            n: r.n,
            epsilon: r.epsilon,
            current: r.current,
            sigma_hall: r.sigma_hall,
            residual: r.residual,
            defect: r.defect,
        })?;
    }
    w.flush()?;
    let mut files = vec![records];
    for (name, fits) in [
        ("fits.csv", &sweep.residual_fits),
        ("defect_fits.csv", &sweep.defect_fits),
    ] {
        let path = out.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for (n, f) in fits {
            w.serialize(FitRow {
                model,
                n: *n,
                slope: f.slope,
                intercept: f.intercept,
                r2: f.r_squared,
            })?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// Residual and stationarity scaling sweep; passes when every fit has slope
/// at least `n + 0.7` with `r^2 >= 0.98`, or sits entirely at the noise floor.
pub fn cmd_neass_sweep(config: &RunConfig) -> CliResult<(SweepReport, i32)> {
    let prep = prepare(config)?;
    let out = prep.config.out_dir.clone();
    write_manifest(&prep.config)?;
    let (pi0, _) = fermi_projection(&prep.h, prep.model.mu()).map_err(CliError::numerical)?;
    let gauge = prep.config.gauge();
    let sweep = residual_scaling_sweep_with_gauge(
        &prep.model,
        &prep.h,
        &pi0,
        prep.config.n_max,
        &prep.config.epsilons.values(),
        gauge.as_ref(),
    )
    .map_err(CliError::numerical)?;
    let files = write_sweep_csvs(&out, prep.model.name(), &sweep).map_err(CliError::invalid)?;
    let residual_fits: Vec<FitSummary> = sweep
        .residual_fits
        .iter()
        .map(|(n, f)| FitSummary::new(*n, f))
        .collect();
    let defect_fits: Vec<FitSummary> = sweep.defect_fits.iter().map(|(n, f)| FitSummary::new(*n, f)).collect();
    let passed = residual_fits.iter().chain(&defect_fits).all(|f| f.passed);
    let report = SweepReport {
        model: prep.model.name().to_string(),
        sigma_hall: sweep.sigma_hall,
        residual_fits,
        defect_fits,
        files,
        passed,
    };
    write_json(&out.join("report.json"), &report).map_err(CliError::invalid)?;
    Ok((report, if passed { EXIT_OK } else { EXIT_CHECK_FAILED }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub property: String,
    pub samples: usize,
    /// Largest violation over all samples.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyResult {
    fn new(property: &str, values: &[f64], tolerance: f64) -> Self {
        let worst = values.iter().copied().fold(0.0, f64::max);
        Self {
            property: property.to_string(),
            samples: values.len(),
            worst,
            tolerance,
            passed: values.iter().all(|v| *v < tolerance),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub model: String,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    /// Names of the failing properties.
    pub failed: Vec<String>,
    pub passed: bool,
}

impl SelftestReport {
    fn new(model: &str, seed: u64, properties: Vec<PropertyResult>) -> Self {
        let failed: Vec<String> = properties
            .iter()
            .filter(|p| !p.passed)
            .map(|p| p.property.clone())
            .collect();
        Self {
            model: model.to_string(),
            seed,
            passed: failed.is_empty(),
            failed,
            properties,
        }
    }

    fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Fermi projection for the self-tests, optionally corrupted.
fn selftest_projection(prep: &Prepared) -> CliResult<(ProjectionField, GapReport)> {
    let (pi0, gap) = fermi_projection(&prep.h, prep.model.mu()).map_err(CliError::numerical)?;
    if !prep.config.corrupt_projector {
        return Ok((pi0, gap));
    }
    let broken = pi0.op().scale(Complex64::new(1.0 + 1e-3, 0.0));
    ProjectionField::new(broken).map_err(CliError::numerical)?;
    Err(CliError::numerical(Error::InvalidProjection(
        "corrupted projector was accepted".into(),
    )))
}

fn abs_trace(a: &FiberOperator) -> f64 {
    trace_per_unit_volume(a).norm()
}

/// Seeded invariance suite: vanishing commutator traces, cyclicity of the
/// trace, Chern marker invariance under smooth unitaries and under the
/// NEASS conjugation, and the two inverse Liouvillian routes.
pub fn cmd_selftest(config: &RunConfig) -> CliResult<(SelftestReport, i32)> {
    let prep = prepare(config)?;
    write_manifest(&prep.config)?;
    let (pi0, gap) = selftest_projection(&prep)?;
    let grid = prep.h.grid().clone();
    let dim = prep.model.dim();
    let samples = prep.config.samples;
    let mut r = rng(prep.config.seed);
    let mut run = || -> Result<Vec<PropertyResult>> {
        let mut props = Vec::new();

        let fields: Vec<FiberOperator> = (0..samples).map(|_| smooth_hermitian(&mut r, &grid, dim, 2)).collect();

        let mut pap = vec![commutator_trace_check(&pi0, &prep.h, Axis::X)?];
        for a in &fields {
            pap.push(commutator_trace_check(&pi0, a, Axis::X)?);
            pap.push(commutator_trace_check(&pi0, a, Axis::Y)?);
        }
        props.push(PropertyResult::new("projected_commutator_trace", &pap, 1e-10));

        let pos: Vec<f64> = fields
            .iter()
            .flat_map(|a| [Axis::X, Axis::Y].map(|ax| abs_trace(&commutator_with_position(a, ax))))
            .collect();
        props.push(PropertyResult::new("position_commutator_trace", &pos, 1e-12));

        let cyc: Vec<f64> = fields
            .windows(2)
            .map(|w| Ok((trace_per_unit_volume(&w[0].mul(&w[1])?) - trace_per_unit_volume(&w[1].mul(&w[0])?)).norm()))
            .collect::<Result<_>>()?;
        props.push(PropertyResult::new("trace_cyclicity", &cyc, 1e-12));

        let mut cs = Vec::new();
        for _ in 0..samples {
            let u = smooth_unitary(&mut r, &grid, dim, 0.7);
            cs.push(chern_simons_check(&pi0, &u)?);
        }
        props.push(PropertyResult::new("chern_simons_invariance", &cs, 1e-8));

        let gens = build_generators_with_gauge(&prep.h, &pi0, prep.config.n_max, prep.config.gauge().as_ref())?;
        let state = assemble_neass(&prep.h, &pi0, &gens, 0.05)?;
        let u = unitary_exp(state.generator(), 0.05)?;
        props.push(PropertyResult::new(
            "neass_marker_invariance",
            &[chern_simons_check(&pi0, &u)?],
            1e-8,
        ));

        props.extend(liouvillian_properties(&prep, &pi0, &gap, &fields)?);
        Ok(props)
    };
    let props = run().map_err(CliError::numerical)?;
    let report = SelftestReport::new(prep.model.name(), prep.config.seed, props);
    write_json(&prep.config.out_dir.join("report.json"), &report).map_err(CliError::invalid)?;
    let code = report.exit_code();
    Ok((report, code))
}

fn liouvillian_properties(
    prep: &Prepared,
    pi0: &ProjectionField,
    gap: &GapReport,
    fields: &[FiberOperator],
) -> Result<Vec<PropertyResult>> {
    let h = &prep.h;
    let contour = prep.config.contour.resolve(gap);
    let yod = y_od_spectral(h, pi0)?;
    let spectral = inverse_liouvillian_spectral(h, pi0, &yod)?;
    let via_contour = inverse_liouvillian_contour(h, pi0, &yod, &contour)?;
    let mut props = vec![PropertyResult::new(
        "liouvillian_routes_agree",
        &[spectral.sup_distance(&via_contour)?],
        1e-8,
    )];

    let inputs: Vec<FiberOperator> = fields.iter().map(|a| off_diagonal(a, pi0)).collect::<Result<_>>()?;
    let mut res_spectral = Vec::new();
    let mut res_contour = Vec::new();
    let mut od = Vec::new();
    let mut herm = Vec::new();
    for a in &inputs {
        let b = inverse_liouvillian_spectral(h, pi0, a)?;
        res_spectral.push(defining_residual(h, &b, a)?);
        res_contour.push(defining_residual(
            h,
            &inverse_liouvillian_contour(h, pi0, a, &contour)?,
            a,
        )?);
        od.push(off_diagonal_residual(&b, pi0)?);
        herm.push(b.hermiticity_defect());
    }
    props.push(PropertyResult::new(
        "liouvillian_residual_spectral",
        &res_spectral,
        1e-10,
    ));
    props.push(PropertyResult::new("liouvillian_residual_contour", &res_contour, 1e-10));
    props.push(PropertyResult::new("liouvillian_off_diagonal", &od, 1e-10));
    props.push(PropertyResult::new("liouvillian_hermiticity", &herm, 1e-10));

    let mut lin = Vec::new();
    let (alpha, beta) = (Complex64::new(0.7, -0.2), Complex64::new(-1.3, 0.4));
    for w in inputs.windows(2) {
        let combined = w[0].scale(alpha).add(&w[1].scale(beta))?;
        let lhs = inverse_liouvillian_spectral(h, pi0, &combined)?;
        let rhs = inverse_liouvillian_spectral(h, pi0, &w[0])?
            .scale(alpha)
            .add(&inverse_liouvillian_spectral(h, pi0, &w[1])?.scale(beta))?;
        lin.push(lhs.sup_distance(&rhs)?);
    }
    props.push(PropertyResult::new("liouvillian_linearity", &lin, 1e-10));
    Ok(props)
}

/// The inverse Liouvillian part of the self-test on its own.
pub fn cmd_liouvillian_selftest(config: &RunConfig) -> CliResult<(SelftestReport, i32)> {
    let prep = prepare(config)?;
    write_manifest(&prep.config)?;
    let (pi0, gap) = selftest_projection(&prep)?;
    let grid = prep.h.grid().clone();
    let mut r = rng(prep.config.seed);
    let fields: Vec<FiberOperator> = (0..prep.config.samples)
        .map(|_| smooth_hermitian(&mut r, &grid, prep.model.dim(), 2))
        .collect();
    let props = liouvillian_properties(&prep, &pi0, &gap, &fields).map_err(CliError::numerical)?;
    let report = SelftestReport::new(prep.model.name(), prep.config.seed, props);
    write_json(&prep.config.out_dir.join("report.json"), &report).map_err(CliError::invalid)?;
    let code = report.exit_code();
    Ok((report, code))
}

#[derive(Debug, Parser)]
#[command(
    name = "neass",
    version,
    about = "Higher-order Hall response of gapped periodic tight-binding models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hall conductivity of the Fermi projection against the plaquette Chern number
    Chern(Overrides),
    /// Residual and stationarity-defect scaling of the NEASS hierarchy
    NeassSweep(Overrides),
    /// Seeded invariance suite
    Selftest(Overrides),
    /// Inverse Liouvillian cross-checks
    LiouvillianSelftest(Overrides),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Qwz,
    Haldane,
    Hofstadter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Fft,
    FiniteDifference,
}

/// Command-line overrides, applied on top of the `--config` file (or the
/// defaults).
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// QWZ mass
    #[arg(long, allow_negative_numbers = true)]
    pub u: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mass: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<i64>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub filled: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Sets both grid sizes
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Comma-separated epsilon values
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub contour_nodes: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub contour_radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub derivative: Option<SchemeArg>,
    /// Coefficient c of the diagonal gauge A_j^D = c H
    #[arg(long, allow_negative_numbers = true)]
    pub diagonal_gauge: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub corrupt_projector: bool,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(kind) = self.model {
            c.model = match kind {
                ModelKind::Qwz => ModelSpec::Qwz { u: 1.0 },
                ModelKind::Haldane => ModelSpec::Haldane {
                    t1: 1.0,
                    t2: 0.1,
                    phi: std::f64::consts::FRAC_PI_2,
                    mass: 0.0,
                },
                ModelKind::Hofstadter => ModelSpec::Hofstadter {
                    p: 1,
                    q: 3,
                    t: 1.0,
                    filled: 1,
                },
            };
        }
        match &mut c.model {
            ModelSpec::Qwz { u } => set(u, self.u),
            ModelSpec::Haldane { t1, t2, phi, mass } => {
                set(t1, self.t1);
                set(t2, self.t2);
                set(phi, self.phi);
                set(mass, self.mass);
            }
            ModelSpec::Hofstadter { p, q, t, filled } => {
                set(p, self.p);
                set(q, self.q);
                set(t, self.t);
                set(filled, self.filled);
            }
            ModelSpec::Flat { .. } | ModelSpec::Custom { .. } => {}
        }
        if self.mu.is_some() {
            c.mu = self.mu;
        }
        set(&mut c.n1, self.grid);
        set(&mut c.n2, self.grid);
        set(&mut c.n1, self.n1);
        set(&mut c.n2, self.n2);
        set(&mut c.n_max, self.n_max);
        if let Some(e) = &self.epsilons {
            c.epsilons = EpsilonSpec::List(e.clone());
        }
        set(&mut c.contour.nodes, self.contour_nodes);
        if self.contour_radius.is_some() {
            c.contour.radius = self.contour_radius;
        }
        set(&mut c.out_dir, self.out.clone());
        set(&mut c.seed, self.seed);
        if let Some(s) = self.derivative {
            c.derivative = match s {
                SchemeArg::Fft => DerivativeScheme::Fourier,
                SchemeArg::FiniteDifference => DerivativeScheme::CentralDifference,
            };
        }
        if self.diagonal_gauge.is_some() {
            c.diagonal_gauge = self.diagonal_gauge;
        }
        set(&mut c.samples, self.samples);
        c.corrupt_projector |= self.corrupt_projector;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn emit<T: Serialize>(result: CliResult<(T, i32)>) -> i32 {
    match result {
        Ok((report, code)) => {
            // a closed stdout (e.g. piped into head) must not turn into a panic
            let text = serde_json::to_string_pretty(&report).expect("reports serialize");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            code
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

/// Parses `args` and runs the chosen subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let err = CliError::invalid(Error::Validation(e.kind().to_string()));
            eprintln!("{}", err.to_json());
            return EXIT_INVALID;
        }
    };
    let (overrides, cmd): (&Overrides, fn(&RunConfig) -> i32) = match &cli.command {
        Command::Chern(o) => (o, |c| emit(cmd_chern(c))),
        Command::NeassSweep(o) => (o, |c| emit(cmd_neass_sweep(c))),
        Command::Selftest(o) => (o, |c| emit(cmd_selftest(c))),
        Command::LiouvillianSelftest(o) => (o, |c| emit(cmd_liouvillian_selftest(c))),
    };
    match overrides.resolve() {
        Ok(config) => cmd(&config),
        Err(e) => {
            let err = CliError::invalid(e);
            eprintln!("{}", err.to_json());
            EXIT_INVALID
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().epsilons.values().len(), 8);
    }

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig::default();
        c.model = ModelSpec::Hofstadter {
            p: 1,
            q: 4,
            t: 1.0,
            filled: 1,
        };
        c.epsilons = EpsilonSpec::List(vec![0.01, 0.02, 0.04, 0.08]);
        c.diagonal_gauge = Some(0.5);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c = RunConfig::from_json(r#"{"model": {"kind": "qwz", "u": 3.0}, "n1": 32}"#).unwrap();
        assert_eq!(c.model, ModelSpec::Qwz { u: 3.0 });
        assert_eq!((c.n1, c.n2), (32, 48));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!(
            RunConfig::from_json(r#"{"grid_size": 3}"#),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn validation_catches_bad_fields() {
        let bad = [
            RunConfig {
                n1: 0,
                ..RunConfig::default()
            },
            RunConfig {
                n_max: 0,
                ..RunConfig::default()
            },
            RunConfig {
                n_max: MAX_ORDER + 1,
                ..RunConfig::default()
            },
            RunConfig {
                epsilons: EpsilonSpec::List(vec![0.1, 0.2, 2.0, 0.3]),
                ..RunConfig::default()
            },
            RunConfig {
                epsilons: EpsilonSpec::List(vec![0.1, 0.2]),
                ..RunConfig::default()
            },
            RunConfig {
                mu: Some(f64::NAN),
                ..RunConfig::default()
            },
            RunConfig {
                samples: 0,
                ..RunConfig::default()
            },
            RunConfig {
                model: ModelSpec::Hofstadter {
                    p: 1,
                    q: 3,
                    t: 1.0,
                    filled: 3,
                },
                ..RunConfig::default()
            },
            RunConfig {
                model: ModelSpec::Flat {
                    onsite: vec![vec![1.0, 0.0]],
                },
                ..RunConfig::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Validation(_))), "{c:?}");
            let err = prepare(&c).err().unwrap();
            assert_eq!(err.code, EXIT_INVALID);
        }
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            model: Some(ModelKind::Haldane),
            mass: Some(0.2),
            grid: Some(24),
            n2: Some(30),
            epsilons: Some(vec![0.01, 0.02, 0.03, 0.04]),
            ..Overrides::default()
        };
        let c = o.resolve().unwrap();
        assert_eq!((c.n1, c.n2), (24, 30));
        assert!(matches!(c.model, ModelSpec::Haldane { mass, .. } if mass == 0.2));
        assert_eq!(c.epsilons.values().len(), 4);
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::invalid(Error::Validation("bad".into()));
        let v = e.to_json();
        assert_eq!(v["error"], "Validation");
        assert_eq!(v["module"], "cli");
        assert!(v["message"].as_str().unwrap().contains("bad"));
    }
}
