//! The four workflows. Each resolves its settings (file config, then flags),
//! runs, writes its outputs atomically and leaves a config echo next to them.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use tirefit::exec::Execution;
use tirefit::io::{self, IoError};
use tirefit::preprocess::{run_pipeline, PreprocessConfig};
use tirefit::rng::stream_rng;
use tirefit::sensitivity::{default_slip_grid, sobol_indices_with};
use tirefit::study::{run_study_with, StudyConfig};
use tirefit::{
    fit_nelder_mead, fit_svi, posterior_samples, FitMethod, NelderMeadConfig, ParamBounds, Shifts, SviConfig,
    TireParams, VehicleParams,
};

use crate::error::{CliError, CliResult};
use crate::files::{load_config, load_typed, open, sibling, write_atomic, write_echo, write_json};

fn data_err(path: &Path) -> impl Fn(IoError) -> CliError + '_ {
    move |source| CliError::Data { path: path.into(), source }
}

fn required(value: &Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let path = value.clone().ok_or_else(|| CliError::Usage(format!("missing input: pass {flag} or set it in --config")))?;
    if !path.exists() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    Ok(path)
}

/// Comma-separated numbers; a newtype so clap treats the list as one value.
#[derive(Debug, Clone)]
pub struct FloatList(Vec<f64>);

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect()
}

fn parse_list(s: &str) -> Result<FloatList, String> {
    parse_floats(s).map(FloatList)
}

fn parse_center(s: &str) -> Result<TireParams, String> {
    match parse_floats(s)?.as_slice() {
        &[b, c, d, e] => Ok(TireParams::new(b, c, d, e)),
        other => Err(format!("expected four values B,C,D,E, got {}", other.len())),
    }
}

/// `B=5:40,D=0.1:2`; coefficients not named keep their defaults.
fn parse_bounds(s: &str) -> Result<ParamBounds, String> {
    let mut pairs = ParamBounds::default().pairs();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let (name, range) = item.split_once('=').ok_or_else(|| format!("`{item}`: expected NAME=LO:HI"))?;
        let idx = match name.trim().to_ascii_uppercase().as_str() {
            "B" => 0,
            "C" => 1,
            "D" => 2,
            "E" => 3,
            other => return Err(format!("unknown coefficient `{other}`")),
        };
        let (lo, hi) = range.split_once(':').ok_or_else(|| format!("`{item}`: expected NAME=LO:HI"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
        pairs[idx] = (num(lo)?, num(hi)?);
    }
    ParamBounds::new(pairs).map_err(|e| e.to_string())
}

fn bool_flag(flag: bool) -> Option<bool> {
    flag.then_some(true)
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessRun {
    pub log: Option<PathBuf>,
    pub vehicle: Option<PathBuf>,
    /// Sidecar JSON with sample rates per sensor; inferred from timestamps when absent.
    pub rates: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub pipeline: PreprocessConfig,
}

impl Default for PreprocessRun {
    fn default() -> Self {
        Self { log: None, vehicle: None, rates: None, out_dir: PathBuf::from("."), pipeline: PreprocessConfig::default() }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Telemetry CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Vehicle parameters (JSON or TOML).
    #[arg(long)]
    vehicle: Option<PathBuf>,
    /// Sample-rate sidecar JSON.
    #[arg(long)]
    rates: Option<PathBuf>,
    /// Settings file (TOML, JSON or a config echo).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Resampling rate (Hz).
    #[arg(long)]
    target_rate: Option<f64>,
    /// Half-width of the gear-shift blanking window (s).
    #[arg(long)]
    gear_blanking: Option<f64>,
    /// Minimum axle speed for slip computation (m/s).
    #[arg(long)]
    min_speed: Option<f64>,
    /// Thinning radius in unit-scaled space.
    #[arg(long)]
    thin_radius: Option<f64>,
}

impl PreprocessArgs {
    pub fn resolve(&self) -> CliResult<PreprocessRun> {
        let mut run: PreprocessRun = match &self.config {
            Some(p) => load_config(p, "preprocess")?,
            None => PreprocessRun::default(),
        };
        let over = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        };
        over(&mut run.log, &self.log);
        over(&mut run.vehicle, &self.vehicle);
        over(&mut run.rates, &self.rates);
        if let Some(d) = &self.out_dir {
            run.out_dir = d.clone();
        }
        let p = &mut run.pipeline;
        p.target_rate = self.target_rate.unwrap_or(p.target_rate);
        p.gear_blanking = self.gear_blanking.unwrap_or(p.gear_blanking);
        p.min_speed = self.min_speed.unwrap_or(p.min_speed);
        p.thin_radius = self.thin_radius.unwrap_or(p.thin_radius);
        Ok(run)
    }
}

pub fn preprocess(run: &PreprocessRun, exec: Execution) -> CliResult<()> {
    let log_path = required(&run.log, "--log")?;
    let vehicle_path = required(&run.vehicle, "--vehicle")?;
    let vehicle: VehicleParams = load_typed(&vehicle_path)?;
    let rates = match &run.rates {
        Some(p) => io::read_rates(open(p)?).map_err(data_err(p))?,
        None => Default::default(),
    };
    let log = io::read_sensor_log(open(&log_path)?, rates).map_err(data_err(&log_path))?;
    let out = run_pipeline(&log, &vehicle, &run.pipeline, exec)?;
    if out.datasets.iter().all(|(_, d)| d.is_empty()) {
        return Err(CliError::Core(tirefit::Error::EmptyDataset));
    }

    let dir = &run.out_dir;
    for (kind, dataset) in &out.datasets {
        if dataset.is_empty() {
            log::warn!("{}: no samples survived preprocessing; not written", kind.name());
            continue;
        }
        let path = dir.join(format!("{}.csv", kind.name()));
        write_atomic(&path, |w| io::write_dataset(dataset, w))?;
        write_json(&dir.join(format!("{}.shifts.json", kind.name())), &dataset.shifts)?;
        log::info!("{}: {} samples -> {}", kind.name(), dataset.len(), path.display());
    }
    write_json(&dir.join("offsets.json"), &out.report.offsets)?;
    write_json(&dir.join("report.json"), &out.report)?;
    write_echo(&dir.join("preprocess.config.json"), "preprocess", run)
}

// ---------------------------------------------------------------- fit

/// Unit of the dataset's excitation column. Slip ratios given in percent are
/// divided by 100 on ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationUnit {
    #[default]
    Fraction,
    Percent,
}

impl ExcitationUnit {
    fn scale(self) -> f64 {
        match self {
            ExcitationUnit::Fraction => 1.0,
            ExcitationUnit::Percent => 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitRun {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub method: FitMethod,
    pub excitation_unit: ExcitationUnit,
    pub bounds: ParamBounds,
    pub fixed_c: Option<f64>,
    pub shifts: Shifts,
    pub seed: u64,
    pub svi: SviConfig,
    pub nelder_mead: NelderMeadConfig,
    /// Posterior draws written for SVI fits; 0 disables the file.
    pub posterior_samples: usize,
    /// Posterior CSV path; defaults to `<out stem>.posterior.csv`.
    pub posterior: Option<PathBuf>,
    /// Keep the per-iteration objective trace in the result JSON.
    pub trace: bool,
}

impl Default for FitRun {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("result.json"),
            method: FitMethod::Svi,
            excitation_unit: ExcitationUnit::Fraction,
            bounds: ParamBounds::default(),
            fixed_c: None,
            shifts: Shifts::default(),
            seed: 0,
            svi: SviConfig::default(),
            nelder_mead: NelderMeadConfig::default(),
            posterior_samples: 1000,
            posterior: None,
            trace: false,
        }
    }
}

impl FitRun {
    /// Push the shared settings into both fitter configs.
    fn synchronize(&mut self) {
        self.svi.bounds = self.bounds;
        self.svi.seed = self.seed;
        self.svi.fixed_c = self.fixed_c;
        self.nelder_mead.bounds = self.bounds;
        self.nelder_mead.fixed_c = self.fixed_c;
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV with columns excitation, force_coeff[, weight].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Result JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["svi", "nelder-mead"])]
    method: Option<String>,
    /// Unit of the excitation column.
    #[arg(long, value_enum)]
    excitation_unit: Option<ExcitationUnit>,
    /// Bounds box, e.g. `B=5:40,C=1:3,D=0.1:2,E=-1:1`.
    #[arg(long, value_parser = parse_bounds)]
    bounds: Option<ParamBounds>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pin C to this value and fit only B, D, E.
    #[arg(long)]
    fixed_c: Option<f64>,
    /// Horizontal shift Sh.
    #[arg(long, allow_hyphen_values = true)]
    sh: Option<f64>,
    /// Vertical shift Sv.
    #[arg(long, allow_hyphen_values = true)]
    sv: Option<f64>,
    /// Shifts JSON written by `preprocess` (`{"Sh": .., "Sv": ..}`).
    #[arg(long, conflicts_with_all = ["sh", "sv"])]
    shifts: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    posterior_samples: Option<usize>,
    #[arg(long)]
    posterior: Option<PathBuf>,
    /// Include the objective trace in the result.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl FitArgs {
    pub fn resolve(&self) -> CliResult<FitRun> {
        let mut run: FitRun = match &self.config {
            Some(p) => load_config(p, "fit")?,
            None => FitRun::default(),
        };
        if self.data.is_some() {
            run.data.clone_from(&self.data);
        }
        if let Some(o) = &self.out {
            run.out = o.clone();
        }
        if let Some(m) = &self.method {
            run.method = if m == "svi" { FitMethod::Svi } else { FitMethod::NelderMead };
        }
        run.excitation_unit = self.excitation_unit.unwrap_or(run.excitation_unit);
        run.bounds = self.bounds.unwrap_or(run.bounds);
        run.seed = self.seed.unwrap_or(run.seed);
        if self.fixed_c.is_some() {
            run.fixed_c = self.fixed_c;
        }
        if let Some(p) = &self.shifts {
            run.shifts = load_typed(p)?;
        }
        run.shifts.sh = self.sh.unwrap_or(run.shifts.sh);
        run.shifts.sv = self.sv.unwrap_or(run.shifts.sv);
        run.svi.steps = self.steps.unwrap_or(run.svi.steps);
        run.svi.mc_samples = self.mc_samples.unwrap_or(run.svi.mc_samples);
        run.svi.learning_rate = self.learning_rate.unwrap_or(run.svi.learning_rate);
        run.posterior_samples = self.posterior_samples.unwrap_or(run.posterior_samples);
        if self.posterior.is_some() {
            run.posterior.clone_from(&self.posterior);
        }
        run.trace = bool_flag(self.trace).unwrap_or(run.trace);
        run.synchronize();
        Ok(run)
    }
}

pub fn fit(run: &FitRun) -> CliResult<()> {
    let data_path = required(&run.data, "--data")?;
    let dataset = io::read_dataset_scaled(open(&data_path)?, run.excitation_unit.scale())
        .map_err(data_err(&data_path))?
        .with_shifts(run.shifts);
    run.bounds.validate()?;
    let result = match run.method {
        FitMethod::NelderMead => fit_nelder_mead(&dataset, &run.nelder_mead),
        FitMethod::Svi => fit_svi(&dataset, &run.svi),
    }
    .map_err(CliError::Fit)?;
    let result = if run.trace { result } else { result.without_trace() };
    log::info!("{} fit: mean {:?}, sigma {:.4}", run.method.as_str(), result.mean, result.sigma_noise);

    write_json(&run.out, &result)?;
    if run.method == FitMethod::Svi && run.posterior_samples > 0 {
        let path = run.posterior.clone().unwrap_or_else(|| sibling(&run.out, "posterior.csv"));
        let draws = posterior_samples(&result, run.posterior_samples, &mut stream_rng(run.seed, 2))?;
        write_atomic(&path, |w| io::write_posterior(&draws, w))?;
    }
    write_echo(&sibling(&run.out, "config.json"), "fit", run)
}

// ---------------------------------------------------------------- study

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyRun {
    pub out_dir: PathBuf,
    pub study: StudyConfig,
}

impl Default for StudyRun {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("."), study: StudyConfig::default() }
    }
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated excitation levels.
    #[arg(long, value_parser = parse_list)]
    levels: Option<FloatList>,
    /// Samples per level.
    #[arg(long)]
    n_points: Option<usize>,
    /// SVI steps per fit.
    #[arg(long)]
    steps: Option<usize>,
}

impl StudyArgs {
    pub fn resolve(&self) -> CliResult<StudyRun> {
        let mut run: StudyRun = match &self.config {
            Some(p) => load_config(p, "study")?,
            None => StudyRun::default(),
        };
        if let Some(d) = &self.out_dir {
            run.out_dir = d.clone();
        }
        let s = &mut run.study;
        s.seed = self.seed.unwrap_or(s.seed);
        if let Some(l) = &self.levels {
            s.excitation_levels = l.0.clone();
        }
        s.n_points = self.n_points.unwrap_or(s.n_points);
        s.svi.steps = self.steps.unwrap_or(s.svi.steps);
        s.svi.bounds = s.bounds;
        Ok(run)
    }
}

pub fn study(run: &StudyRun, exec: Execution) -> CliResult<()> {
    let out = run_study_with(&run.study, exec)?;
    for row in out.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("level {} {}: {}", row.level, row.method.as_str(), row.error.as_deref().unwrap_or_default());
    }
    write_atomic(&run.out_dir.join("study.csv"), |w| io::write_study(&out.rows, w))?;
    write_atomic(&run.out_dir.join("curves.csv"), |w| io::write_curves(&out.curves, w))?;
    write_echo(&run.out_dir.join("study.config.json"), "study", run)
}

// ---------------------------------------------------------------- sobol

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolRun {
    pub out: PathBuf,
    pub center: TireParams,
    /// Half-width of the uniform box as a fraction of each center value.
    pub perturbation: f64,
    /// Slip values; 200 log-spaced points in [1e-3, 1] when absent.
    pub grid: Option<Vec<f64>>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SobolRun {
    fn default() -> Self {
        Self {
            out: PathBuf::from("sobol.csv"),
            center: TireParams::reference(),
            perturbation: 0.1,
            grid: None,
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct SobolArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Center parameters `B,C,D,E`.
    #[arg(long, value_parser = parse_center, allow_hyphen_values = true)]
    center: Option<TireParams>,
    #[arg(long)]
    perturbation: Option<f64>,
    /// Comma-separated slip values.
    #[arg(long, value_parser = parse_list)]
    grid: Option<FloatList>,
    /// Base Monte-Carlo samples per grid point.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SobolArgs {
    pub fn resolve(&self) -> CliResult<SobolRun> {
        let mut run: SobolRun = match &self.config {
            Some(p) => load_config(p, "sobol")?,
            None => SobolRun::default(),
        };
        if let Some(o) = &self.out {
            run.out = o.clone();
        }
        run.center = self.center.unwrap_or(run.center);
        run.perturbation = self.perturbation.unwrap_or(run.perturbation);
        if let Some(g) = &self.grid {
            run.grid = Some(g.0.clone());
        }
        run.samples = self.samples.unwrap_or(run.samples);
        run.seed = self.seed.unwrap_or(run.seed);
        Ok(run)
    }
}

pub fn sobol(run: &SobolRun, exec: Execution) -> CliResult<()> {
    let grid = run.grid.clone().unwrap_or_else(default_slip_grid);
    let result = sobol_indices_with(&run.center, run.perturbation, &grid, run.samples, run.seed, exec)?;
    let flagged = result.zero_variance.iter().filter(|&&z| z).count();
    if flagged > 0 {
        log::warn!("{flagged} grid points have zero output variance; indices reported as 0 and flagged");
    }
    write_atomic(&run.out, |w| io::write_sobol(&result, w))?;
    write_echo(&sibling(&run.out, "config.json"), "sobol", run)
}
