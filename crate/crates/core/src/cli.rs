//! Command-line front end: every analysis writes CSV/JSON files and a
//! `manifest.json` from which the run can be replayed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bifurcation::{self, branch, fold_curve, linspace, BifKind, BifPoint};
use crate::coupling::{sync_sweep, SynPreset, SynapseSpec, SyncOptions};
use crate::dynamics::{f_gm_curve, fi_curve, fi_grid, Protocol};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, NeuronModel, Preset};
use crate::ode::{Method, SolverOptions};
use crate::steady::find_equilibria;
use crate::validation::{self, FGM_CASES, FGM_POINTS, SYNC_GRID};

/// Exit code when some validation criterion fails.
pub const EXIT_VALIDATION_FAILED: i32 = 1;
pub const EXIT_INPUT_ERROR: i32 = 2;
pub const EXIT_NUMERICAL_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mcurrent", version, about = "Bifurcation and simulation tools for neurons with an M-current")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Built-in model: wang-buzsaki, stiefel or rtm.
    #[arg(long, default_value = "wang-buzsaki")]
    pub model: String,
    /// JSON model file; takes precedence over --model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// M-current conductance (mS/cm^2).
    #[arg(long = "gM", allow_negative_numbers = true)]
    pub g_m: Option<f64>,
    /// Applied current (uA/cm^2).
    #[arg(long = "Iapp", allow_negative_numbers = true)]
    pub i_app: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub atol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    /// Use fixed-step RK4 with this step (ms) instead of the adaptive solver.
    #[arg(long)]
    pub rk4: Option<f64>,
    /// Spike detection threshold (mV).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            atol: self.atol,
            rtol: self.rtol,
            method: match self.rk4 {
                Some(step) => Method::Rk4 { step },
                None => Method::Dopri5,
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Equilibria with stability at the given parameters.
    Equilibria {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Bogdanov-Takens points with normal form coefficients.
    Bt {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Cusp points.
    Cusp {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Bogdanov-Takens-cusp points (solves for g_L).
    Btc {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Equilibrium branch over I_app with LP and Hopf points.
    Branch {
        #[command(flatten)]
        model: ModelArgs,
        /// Voltage step of the branch grid (mV).
        #[arg(long, default_value_t = 0.1)]
        v_step: f64,
    },
    /// Fold curve in the (I_app, g_M) plane.
    FoldCurve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.1)]
        v_step: f64,
    },
    /// F/I curve with up and down sweeps.
    Fi {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Simulated time per current step (ms).
        #[arg(long, default_value_t = 3000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 11)]
        points: usize,
        /// Lowest current; with --i-max replaces the automatic grid.
        #[arg(long, allow_negative_numbers = true, requires = "i_max")]
        i_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires = "i_min")]
        i_max: Option<f64>,
        /// Bisection steps refining onset and offset.
        #[arg(long, default_value_t = 8)]
        refine: u32,
    },
    /// Firing frequency against g_M at fixed I_app.
    Fgm {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 3000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.0)]
        gm_min: f64,
        #[arg(long)]
        gm_max: Option<f64>,
        #[arg(long, default_value_t = FGM_POINTS)]
        points: usize,
    },
    /// Phase locking of two coupled neurons over a g_M grid.
    Sync {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "ex1-exc")]
        syn_preset: String,
        #[arg(long, default_value_t = 0.1)]
        gsyn: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 10_000.0)]
        t_end: f64,
        /// g_M grid as comma-separated values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gm: Option<Vec<f64>>,
    },
    /// Runs the acceptance criteria against the published reference values.
    Validate {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip the simulation-heavy criteria.
        #[arg(long)]
        fast: bool,
        /// Only these criteria (comma-separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-runs the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory (default: the recorded one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibria { .. } => "equilibria",
            Command::Bt { .. } => "bt",
            Command::Cusp { .. } => "cusp",
            Command::Btc { .. } => "btc",
            Command::Branch { .. } => "branch",
            Command::FoldCurve { .. } => "fold-curve",
            Command::Fi { .. } => "fi",
            Command::Fgm { .. } => "fgm",
            Command::Sync { .. } => "sync",
            Command::Validate { .. } => "validate",
            Command::Replay { .. } => "replay",
        }
    }

    fn model_args(&self) -> Option<&ModelArgs> {
        match self {
            Command::Equilibria { model }
            | Command::Bt { model }
            | Command::Cusp { model }
            | Command::Btc { model }
            | Command::Branch { model, .. }
            | Command::FoldCurve { model, .. }
            | Command::Fi { model, .. }
            | Command::Fgm { model, .. }
            | Command::Sync { model, .. } => Some(model),
            Command::Validate { .. } | Command::Replay { .. } => None,
        }
    }

    fn set_out(&mut self, dir: PathBuf) {
        match self {
            Command::Equilibria { model }
            | Command::Bt { model }
            | Command::Cusp { model }
            | Command::Btc { model }
            | Command::Branch { model, .. }
            | Command::FoldCurve { model, .. }
            | Command::Fi { model, .. }
            | Command::Fgm { model, .. }
            | Command::Sync { model, .. } => model.out = dir,
            Command::Validate { out, .. } => *out = dir,
            Command::Replay { .. } => {}
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Sync { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Command,
    /// Model after all command-line overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

/// Fixed 17-significant-digit format used in every CSV file.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write(name, &text)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Model configuration with the command-line overrides applied.
pub fn resolve_config(args: &ModelArgs) -> Result<ModelConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::config("config", format!("cannot read {}: {e}", path.display()))
            })?;
            ModelConfig::from_json(&text)?
        }
        None => args.model.parse::<Preset>()?.config(),
    };
    if let Some(g) = args.g_m {
        match &mut cfg.m_current {
            Some(mc) => mc.g = g,
            None => return Err(Error::config("gM", "the model has no M-current")),
        }
    }
    if let Some(i) = args.i_app {
        cfg.i_app = i;
    }
    Ok(cfg)
}

fn preset_of(args: &ModelArgs) -> Option<Preset> {
    match args.config {
        Some(_) => None,
        None => args.model.parse().ok(),
    }
}

fn set_threads(n: Option<usize>) {
    if let Some(n) = n {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT_ERROR } else { 0 };
        }
    };
    match execute(cli.command, None) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT_ERROR
            } else {
                EXIT_NUMERICAL_ERROR
            }
        }
    }
}

/// Runs `cmd`; `config` replaces the model named in the arguments.
pub fn execute(cmd: Command, config: Option<ModelConfig>) -> Result<i32> {
    if let Command::Replay { manifest, out } = cmd {
        let text = fs::read_to_string(&manifest).map_err(|e| {
            Error::config("manifest", format!("cannot read {}: {e}", manifest.display()))
        })?;
        let m: Manifest = serde_json::from_str(&text)?;
        let mut args = m.args;
        if let Some(dir) = out {
            args.set_out(dir);
        }
        return execute(args, m.config);
    }
    let start = Instant::now();
    let config = match (config, cmd.model_args()) {
        (Some(c), _) => Some(c),
        (None, Some(a)) => Some(resolve_config(a)?),
        (None, None) => None,
    };
    let model = config.as_ref().map(ModelConfig::build).transpose()?;
    let (out_dir, code, files) = match &cmd {
        Command::Validate {
            out,
            fast,
            only,
            threads,
        } => {
            set_threads(*threads);
            let mut o = Outputs::new(out)?;
            let code = validate(&mut o, *fast, only.as_deref())?;
            (out.clone(), code, o.files)
        }
        _ => {
            let args = cmd.model_args().expect("analysis commands carry model arguments");
            set_threads(args.threads);
            let m = model.as_ref().expect("model resolved above");
            let mut o = Outputs::new(&args.out)?;
            analyse(&cmd, args, m, &mut o)?;
            (args.out.clone(), 0, o.files)
        }
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        seed: cmd.seed(),
        args: cmd,
        config,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(code)
}

#[derive(Serialize)]
struct PointsReport<'a> {
    model: &'a str,
    kind: &'a str,
    points: &'a [BifPoint],
}

fn print_points(points: &[BifPoint]) {
    for p in points {
        let g_l = p.g_l.map(|g| format!("  g_L {g:.6}")).unwrap_or_default();
        let nf = match (p.alpha2, p.beta2) {
            (Some(a), Some(b)) => format!("  alpha2 {a:+.4e}  beta2 {b:+.4e}"),
            _ => String::new(),
        };
        let tag = if p.biophysical { "" } else { "  (non-biophysical)" };
        println!(
            "{:<3} V {:10.4}  I_app {:10.4}  g_M {:10.5}{g_l}{nf}{tag}",
            p.kind.label(),
            p.v,
            p.i_app,
            p.g_m
        );
    }
}

fn grid_from_step(m: &NeuronModel, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::config("v-step", "must be positive"));
    }
    let (lo, hi) = m.window;
    Ok(linspace(lo, hi, ((hi - lo) / step).round() as usize + 1))
}

fn analyse(cmd: &Command, args: &ModelArgs, m: &NeuronModel, o: &mut Outputs) -> Result<()> {
    let label = preset_of(args).map_or("custom", Preset::name);
    match cmd {
        Command::Equilibria { .. } => {
            let eq = find_equilibria(m)?;
            let rows = eq.iter().map(|e| {
                vec![
                    num(e.v),
                    num(e.i_app),
                    num(m.g_m()),
                    e.stability.label().to_string(),
                    e.fold.to_string(),
                    num(e.eigenvalues[0].re),
                ]
            });
            o.csv(
                "equilibria.csv",
                &["v", "i_app", "g_m", "stability", "fold", "re_lambda_max"],
                rows,
            )?;
            o.json("equilibria.json", &eq)?;
            for e in &eq {
                println!("V {:10.4}  {}", e.v, e.stability.label());
            }
        }
        Command::Bt { .. } | Command::Cusp { .. } | Command::Btc { .. } => {
            let (kind, points) = match cmd {
                Command::Bt { .. } => (BifKind::Bt, bifurcation::find_bt(m)?),
                Command::Cusp { .. } => (BifKind::Cusp, bifurcation::find_cusp(m)?),
                _ => (BifKind::Btc, bifurcation::find_btc(m)?),
            };
            o.json(
                "points.json",
                &PointsReport {
                    model: label,
                    kind: kind.label(),
                    points: &points,
                },
            )?;
            print_points(&points);
        }
        Command::Branch { v_step, .. } => {
            let pts = branch(m, &grid_from_step(m, *v_step)?);
            let rows = pts.iter().map(|p| {
                vec![
                    num(p.v),
                    num(p.i_app),
                    num(p.g_m),
                    num(p.re_lambda_max),
                    opt_num(p.omega),
                    p.stability.label().to_string(),
                    p.flags().to_string(),
                ]
            });
            o.csv(
                "branch.csv",
                &["v", "i_app", "g_m", "re_lambda_max", "omega", "stability", "flags"],
                rows,
            )?;
            for p in pts.iter().filter(|p| p.lp || p.hopf) {
                let omega = p.omega.map(|w| format!("  omega {w:.5}")).unwrap_or_default();
                println!("{:<4} V {:10.4}  I_app {:10.5}{omega}", p.flags(), p.v, p.i_app);
            }
        }
        Command::FoldCurve { v_step, .. } => {
            let c = fold_curve(m, &grid_from_step(m, *v_step)?);
            let rows = c
                .points
                .iter()
                .map(|p| vec![num(p.v), num(p.i_app), num(p.g_m)]);
            o.csv("fold_curve.csv", &["v", "i_app", "g_m"], rows)?;
            println!("{} fold points, {} voltages skipped", c.points.len(), c.skipped.len());
        }
        Command::Fi {
            solver,
            t_end,
            points,
            i_min,
            i_max,
            refine,
            ..
        } => {
            let grid = match (i_min, i_max) {
                (Some(a), Some(b)) => linspace(*a, *b, *points),
                _ => fi_grid(m, *points).ok_or_else(|| {
                    Error::config("i-min", "rest state is never lost; give --i-min and --i-max")
                })?,
            };
            let p = Protocol {
                t_end: *t_end,
                threshold: solver.threshold,
                solver: solver.options(),
                refine_steps: *refine,
            };
            let fi = fi_curve(m, &grid, &p)?;
            let rows = fi
                .up
                .iter()
                .map(|q| ("up", q))
                .chain(fi.down.iter().map(|q| ("down", q)))
                .map(|(s, q)| vec![s.to_string(), num(q.i_app), num(q.frequency), q.fired.to_string()]);
            o.csv("fi.csv", &["sweep", "i_app", "frequency_hz", "fired"], rows)?;
            o.json("fi.json", &fi)?;
            println!(
                "onset I_app {}  at {} Hz; offset I_app {}; class {:?}",
                fi.onset_current.map_or("-".into(), |x| format!("{x:.5}")),
                fi.onset_frequency.map_or("-".into(), |x| format!("{x:.3}")),
                fi.offset_current.map_or("-".into(), |x| format!("{x:.5}")),
                fi.class
            );
        }
        Command::Fgm {
            solver,
            t_end,
            gm_min,
            gm_max,
            points,
            ..
        } => {
            let case = preset_of(args).and_then(|p| FGM_CASES.iter().find(|c| c.0 == p));
            let i_app = args
                .i_app
                .or(case.map(|c| c.1))
                .ok_or_else(|| Error::config("Iapp", "required for custom models"))?;
            let g_max = gm_max
                .or(case.map(|c| c.2))
                .ok_or_else(|| Error::config("gm-max", "required for custom models"))?;
            let p = Protocol {
                t_end: *t_end,
                threshold: solver.threshold,
                solver: solver.options(),
                ..Default::default()
            };
            let c = f_gm_curve(m, i_app, &linspace(*gm_min, g_max, *points), &p)?;
            let rows = c
                .points
                .iter()
                .map(|q| vec![num(q.g_m), num(q.frequency), q.fired.to_string()]);
            o.csv("fgm.csv", &["g_m", "frequency_hz", "fired"], rows)?;
            o.json("fgm.json", &c)?;
            for q in &c.points {
                println!("g_M {:8.4}  {:9.3} Hz", q.g_m, q.frequency);
            }
            println!("monotone decreasing: {}", c.monotone_decreasing);
        }
        Command::Sync {
            solver,
            syn_preset,
            gsyn,
            seed,
            trials,
            t_end,
            gm,
            ..
        } => {
            let syn = SynapseSpec::preset(syn_preset.parse::<SynPreset>()?, *gsyn);
            syn.validate()?;
            let default_i = match preset_of(args) {
                Some(Preset::WangBuzsaki) => Some(validation::SYNC_I_APP),
                Some(p) => FGM_CASES.iter().find(|c| c.0 == p).map(|c| c.1),
                None => None,
            };
            let i_app = args
                .i_app
                .or(default_i)
                .ok_or_else(|| Error::config("Iapp", "required for custom models"))?;
            let grid = gm.clone().unwrap_or_else(|| SYNC_GRID.to_vec());
            let opts = SyncOptions {
                i_app,
                t_end: *t_end,
                trials: *trials,
                seed: *seed,
                threshold: solver.threshold,
                solver: solver.options(),
            };
            let res = sync_sweep(m, &syn, &grid, &opts);
            let rows = res.iter().flat_map(|r| {
                r.trials.iter().map(move |t| {
                    vec![
                        num(r.g_m),
                        t.trial.to_string(),
                        opt_num(t.phi),
                        opt_num(t.t1),
                        opt_num(t.t2),
                        t.class.label().to_string(),
                    ]
                })
            });
            o.csv("sync.csv", &["g_m", "trial", "phi", "t1", "t2", "class"], rows)?;
            o.json("sync.json", &res)?;
            for r in &res {
                let cl: Vec<String> = r
                    .clusters
                    .iter()
                    .map(|c| format!("{:.3} ({}, x{})", c.phi, c.class.label(), c.count))
                    .collect();
                println!("g_M {:6.3}  {}", r.g_m, cl.join("  "));
            }
        }
        Command::Validate { .. } | Command::Replay { .. } => unreachable!("handled by execute"),
    }
    Ok(())
}

fn validate(o: &mut Outputs, fast: bool, only: Option<&[u8]>) -> Result<i32> {
    let mut checks = Vec::new();
    for id in 1..=validation::TITLES.len() as u8 {
        if only.is_some_and(|ids| !ids.contains(&id)) {
            continue;
        }
        if fast && validation::is_slow(id) {
            println!("SKIP criterion {id:>2} ({})", validation::TITLES[id as usize - 1]);
            continue;
        }
        let c = validation::run(id);
        println!(
            "{} criterion {:>2} ({}) [{:.1} s]",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            c.seconds
        );
        for line in &c.details {
            println!("       {line}");
        }
        checks.push(c);
    }
    o.json("validation.json", &checks)?;
    Ok(if checks.iter().all(|c| c.passed) {
        0
    } else {
        EXIT_VALIDATION_FAILED
    })
}
