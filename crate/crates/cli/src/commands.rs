use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Subcommand, ValueEnum};
use fracnmp::canceller::{augmented_plant, design_boost_both, design_same_dc, design_same_pm, make_canceller};
use fracnmp::discrete::{canceller_fir, zoh_discretize};
use fracnmp::folti::FoTransferFunction;
use fracnmp::freqresp::{freq_response, log_grid, margins};
use fracnmp::ilt::invert_tf;
use fracnmp::loopsim::{simulate_closed_step, simulate_open_step, step_metrics};
use fracnmp::{FirFilter, LoopConfig};
use serde::{Deserialize, Serialize};

use crate::manifest::with_suffix;
use crate::plant::PlantArgs;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Frequency response of kp * C * P as CSV
    Bode(FreqArgs),
    /// Same data as `bode`, intended for Nyquist plots
    Nyquist(FreqArgs),
    /// Gain/phase margins as JSON
    Margins(MarginsArgs),
    /// Proportional gain / canceller order design as JSON
    Design(DesignArgs),
    /// Canceller impulse response and its normalized FIR realization
    Impulse(ImpulseArgs),
    /// Sampled open- or closed-loop step response
    Step(StepArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FreqArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub plant: PlantArgs,

    /// Canceller order n (alpha = 1/n)
    #[arg(long, value_name = "N", conflicts_with = "alpha_sweep")]
    pub canceller: Option<u32>,

    /// Proportional gain
    #[arg(long, default_value_t = 1.0)]
    pub kp: f64,

    /// Lowest frequency [rad/s]
    #[arg(long, default_value_t = 1e-2)]
    pub wmin: f64,

    /// Highest frequency [rad/s]
    #[arg(long, default_value_t = 1e3)]
    pub wmax: f64,

    /// Log-spaced grid points
    #[arg(long, default_value_t = 500)]
    pub points: usize,

    /// Sweep 1 - (s/z)^alpha for alpha = 0.1, 0.2, ..., 1.0 instead of the loop
    #[arg(long)]
    pub alpha_sweep: bool,

    /// Output prefix
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MarginsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub plant: PlantArgs,

    /// Canceller order n (alpha = 1/n)
    #[arg(long, value_name = "N")]
    pub canceller: Option<u32>,

    #[arg(long, default_value_t = 1.0)]
    pub kp: f64,

    /// Also write PREFIX.json and a manifest
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    /// Same PM with and without the canceller
    SamePm,
    /// Canceller loop gets PM + boost
    Boost,
    /// Same kp; smallest n reaching --pm
    SameDc,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub plant: PlantArgs,

    #[arg(long, value_enum)]
    pub mode: DesignMode,

    /// Target (same-pm, boost) or minimum (same-dc) phase margin [deg]
    #[arg(long)]
    pub pm: f64,

    /// Extra phase margin for the cancelled loop [deg] (boost)
    #[arg(long, default_value_t = 0.0)]
    pub boost: f64,

    /// Fixed proportional gain (same-dc)
    #[arg(long, default_value_t = 1.0)]
    pub kp: f64,

    /// Canceller order (same-pm, boost)
    #[arg(long, default_value_t = 2)]
    pub n: u32,

    /// Also write PREFIX.json and a manifest
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ImpulseArgs {
    /// Canceller order
    #[arg(long, default_value_t = 2)]
    pub n: u32,

    /// Time constant of the NMP zero, z = 1/tau [s]
    #[arg(long, default_value_t = 0.495)]
    pub tau: f64,

    /// Sampling period [s]
    #[arg(long = "T", visible_alias = "period", default_value_t = 0.05)]
    pub period: f64,

    /// FIR length
    #[arg(long, default_value_t = 100)]
    pub len: usize,

    /// Output prefix
    #[arg(long, value_name = "PREFIX", default_value = "impulse")]
    pub out: PathBuf,
}

/// Continuous-time samples per FIR tap in the impulse CSV.
const SAMPLES_PER_TAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("mode").required(true).args(["open", "closed"])))]
pub struct StepArgs {
    /// Plant alone
    #[arg(long)]
    pub open: bool,

    /// Unity-feedback loop with a one-sample computation delay
    #[arg(long)]
    pub closed: bool,

    #[command(flatten)]
    #[serde(flatten)]
    pub plant: PlantArgs,

    #[arg(long, default_value_t = 1.0, conflicts_with = "open")]
    pub kp: f64,

    /// Canceller order n, realized as an FIR filter
    #[arg(long, value_name = "N", conflicts_with = "open")]
    pub canceller: Option<u32>,

    /// Simulated time [s]
    #[arg(long, default_value_t = 30.0)]
    pub tfinal: f64,

    /// Sampling period [s]
    #[arg(long = "T", visible_alias = "period", default_value_t = 0.05)]
    pub period: f64,

    /// Canceller FIR length
    #[arg(long, default_value_t = 100)]
    pub fir_len: usize,

    /// Output prefix
    #[arg(long, value_name = "PREFIX", default_value = "step")]
    pub out: PathBuf,
}

/// Files written and text for stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub stdout: String,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bode(_) => "bode",
            Command::Nyquist(_) => "nyquist",
            Command::Margins(_) => "margins",
            Command::Design(_) => "design",
            Command::Impulse(_) => "impulse",
            Command::Step(_) => "step",
        }
    }

    /// Output prefix; `None` when results only go to stdout.
    pub fn out(&self) -> Option<PathBuf> {
        match self {
            Command::Bode(a) | Command::Nyquist(a) => Some(a.out.clone().unwrap_or_else(|| self.name().into())),
            Command::Margins(a) => a.out.clone(),
            Command::Design(a) => a.out.clone(),
            Command::Impulse(a) => Some(a.out.clone()),
            Command::Step(a) => Some(a.out.clone()),
        }
    }

    pub fn set_out(&mut self, prefix: PathBuf) {
        match self {
            Command::Bode(a) | Command::Nyquist(a) => a.out = Some(prefix),
            Command::Margins(a) => a.out = Some(prefix),
            Command::Design(a) => a.out = Some(prefix),
            Command::Impulse(a) => a.out = prefix,
            Command::Step(a) => a.out = prefix,
        }
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            Command::Bode(a) | Command::Nyquist(a) => a.plant.input_files(),
            Command::Margins(a) => a.plant.input_files(),
            Command::Design(a) => a.plant.input_files(),
            Command::Impulse(_) => Vec::new(),
            Command::Step(a) => a.plant.input_files(),
        }
    }

    pub fn run(&self) -> Result<Outcome, CliError> {
        let prefix = self.out();
        match self {
            Command::Bode(a) | Command::Nyquist(a) => run_freq(a, &prefix.expect("frequency commands always write")),
            Command::Margins(a) => run_margins(a, prefix.as_deref()),
            Command::Design(a) => run_design(a, prefix.as_deref()),
            Command::Impulse(a) => run_impulse(a),
            Command::Step(a) => run_step(a),
        }
    }
}

fn open_loop(plant: &FoTransferFunction, canceller: Option<u32>, kp: f64) -> Result<FoTransferFunction, CliError> {
    let l = match canceller {
        Some(n) => augmented_plant(plant, n)?,
        None => plant.clone(),
    };
    Ok(l.scale(kp))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_with(path, |w| w.write_all(text.as_bytes()))?;
    Ok(text)
}

fn run_freq(a: &FreqArgs, prefix: &Path) -> Result<Outcome, CliError> {
    if !(a.wmin.is_finite() && a.wmin > 0.0 && a.wmin < a.wmax && a.wmax.is_finite()) {
        return Err(CliError::Input(format!("need 0 < wmin < wmax, got {} and {}", a.wmin, a.wmax)));
    }
    if a.points < 2 {
        return Err(CliError::Input(format!("need at least 2 points, got {}", a.points)));
    }
    let grid = log_grid(a.wmin, a.wmax, a.points);
    let plant = a.plant.load()?;
    let mut out = Outcome::default();
    if a.alpha_sweep {
        let z = plant.nmp_zero().ok_or(fracnmp::Error::MissingNmpZero)?;
        for k in 1..=10 {
            let tf = FoTransferFunction::fractional_zero(z, k, 10)?.scale(a.kp);
            let series = freq_response(&tf, &grid)?;
            let path = with_suffix(prefix, &format!(".alpha{:.1}.csv", k as f64 / 10.0));
            write_with(&path, |w| series.write_csv(w))?;
            out.outputs.push(path);
        }
    } else {
        let series = freq_response(&open_loop(&plant, a.canceller, a.kp)?, &grid)?;
        let path = with_suffix(prefix, ".csv");
        write_with(&path, |w| series.write_csv(w))?;
        out.outputs.push(path);
    }
    for p in &out.outputs {
        out.stdout.push_str(&format!("{}\n", p.display()));
    }
    Ok(out)
}

fn report<T: Serialize>(value: &T, prefix: Option<&Path>) -> Result<Outcome, CliError> {
    match prefix {
        Some(prefix) => {
            let path = with_suffix(prefix, ".json");
            let stdout = write_json(&path, value)?;
            Ok(Outcome {
                outputs: vec![path],
                stdout,
            })
        }
        None => {
            let mut stdout = serde_json::to_string_pretty(value).expect("report serializes");
            stdout.push('\n');
            Ok(Outcome {
                outputs: Vec::new(),
                stdout,
            })
        }
    }
}

fn run_margins(a: &MarginsArgs, prefix: Option<&Path>) -> Result<Outcome, CliError> {
    let plant = a.plant.load()?;
    report(&margins(&open_loop(&plant, a.canceller, a.kp)?)?, prefix)
}

fn run_design(a: &DesignArgs, prefix: Option<&Path>) -> Result<Outcome, CliError> {
    let plant = a.plant.load()?;
    let design = match a.mode {
        DesignMode::SamePm => design_same_pm(&plant, a.pm, a.n)?,
        DesignMode::Boost => design_boost_both(&plant, a.pm, a.boost, a.n)?,
        DesignMode::SameDc => design_same_dc(&plant, a.kp, a.pm)?,
    };
    report(&design.report(), prefix)
}

fn run_impulse(a: &ImpulseArgs) -> Result<Outcome, CliError> {
    if !(a.tau.is_finite() && a.tau > 0.0) {
        return Err(CliError::Input(format!("tau = {} must be positive", a.tau)));
    }
    let z = 1.0 / a.tau;
    let cont = with_suffix(&a.out, ".continuous.csv");
    let fir_path = with_suffix(&a.out, ".fir.csv");
    let mut stderr = String::new();
    let fir = if a.n == 1 {
        write_with(&cont, |w| w.write_all(b"t_s,h_per_s\n"))?;
        FirFilter::identity(a.period)?
    } else {
        let dt = a.period / SAMPLES_PER_TAP as f64;
        let grid: Vec<f64> = (1..=a.len * SAMPLES_PER_TAP).map(|k| k as f64 * dt).collect();
        let inv = invert_tf(&make_canceller(z, a.n)?, &grid)?;
        for w in &inv.warnings {
            stderr.push_str(&format!("warning: inversion at t = {} s has remainder {:e}\n", w.t, w.remainder));
        }
        write_with(&cont, |w| inv.samples.write_csv(w))?;
        canceller_fir(z, a.n, a.period, a.len)?
    };
    write_with(&fir_path, |w| fir.write_csv(w))?;
    eprint!("{stderr}");
    Ok(Outcome {
        outputs: vec![cont, fir_path],
        stdout: format!("dc_scale {}\n", fir.dc_scale()),
    })
}

fn run_step(a: &StepArgs) -> Result<Outcome, CliError> {
    let plant = a.plant.load()?;
    let traj = if a.open {
        simulate_open_step(&zoh_discretize(&plant, a.period)?, a.tfinal)?
    } else {
        let cfg = LoopConfig::build(&plant, a.kp, a.canceller, a.period, a.fir_len, a.tfinal)?;
        simulate_closed_step(&cfg)?
    };
    let metrics = step_metrics(&traj)?;
    let csv = with_suffix(&a.out, ".csv");
    write_with(&csv, |w| traj.write_csv(w))?;
    let json = with_suffix(&a.out, ".metrics.json");
    let stdout = write_json(&json, &metrics)?;
    Ok(Outcome {
        outputs: vec![csv, json],
        stdout,
    })
}
