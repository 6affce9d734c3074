use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cpbench::config::Recipe;
use cpbench::harness::{self, NamedDataset, RunKey};
use cpbench::prob::temperature_grid;
use cpbench::report::{self, Format};
use cpbench::synthetic::{self, SyntheticSpec, DEFAULT_RUNNER_UP, DEFAULT_SHARPNESS};
use cpbench::{io, Error, Method, Result, RunConfig, ScoreSpec, TemperatureSetting, UMode};

#[derive(Parser, Debug)]
#[command(name = "cpbench", version, about = "Conformal prediction benchmark over stored classifier outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split one file, calibrate, predict and report.
    Conformalize {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Repeat a conformal run over a temperature grid (logits input only).
    SweepTemperature {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Calibrate on one file and evaluate on another.
    ShiftEval {
        cal: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run several methods on several models. Inputs are `path` or `name=path`.
    Compare {
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Comma-separated methods.
        #[arg(long, default_value = "lac,aps,raps", value_delimiter = ',')]
        methods: Vec<String>,
        /// Worst-class analysis between two runs named `model/method`.
        #[arg(long, num_args = 2, value_names = ["RUN_A", "RUN_B"])]
        worst_class: Option<Vec<String>>,
        /// Set-size difference histogram between two runs named `model/method`.
        #[arg(long, num_args = 2, value_names = ["RUN_A", "RUN_B"])]
        delta: Option<Vec<String>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a synthetic classifier's outputs as a CPL1 file.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.7)]
        accuracy: f64,
        #[arg(long, default_value_t = DEFAULT_SHARPNESS)]
        sharpness: f64,
        #[arg(long, default_value_t = DEFAULT_RUNNER_UP)]
        runner_up: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store log-probabilities as logits instead of probabilities.
        #[arg(long)]
        logits: bool,
        /// Also write a shifted test file here.
        #[arg(long, requires = "shift_drop")]
        shifted_out: Option<PathBuf>,
        #[arg(long)]
        shift_drop: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        noise_scale: f64,
    },
    /// Print a summary of a CPL1 file.
    Inspect { input: PathBuf },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Miscoverage level; defaults to the recipe's value.
    #[arg(long)]
    alpha: Option<f64>,
    /// `default` (alpha 0.1) or `cifar10` (alpha 0.05).
    #[arg(long, default_value = "default")]
    recipe: String,
    #[arg(long, default_value = "raps")]
    method: String,
    #[arg(long, default_value_t = cpbench::scores::DEFAULT_RAPS_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = cpbench::scores::DEFAULT_RAPS_K_REG)]
    kreg: usize,
    /// `uniform` or `fixed:<v>`.
    #[arg(long, default_value = "uniform")]
    u_mode: String,
    #[arg(long, default_value_t = cpbench::config::DEFAULT_CAL_FRACTION)]
    cal_frac: f64,
    #[arg(long, default_value_t = cpbench::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, conflicts_with = "t_grid")]
    temperature: Option<f64>,
    /// Sweep grid as `lo:hi:count`.
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long, default_value_t = cpbench::metrics::DEFAULT_ECE_BINS)]
    ece_bins: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: String,
}

fn score_spec(method: Method, args: &RunArgs) -> Result<ScoreSpec> {
    let u_mode: UMode = args.u_mode.parse()?;
    let spec = match method {
        Method::Raps => ScoreSpec::raps(args.lambda, args.kreg),
        m => ScoreSpec::for_method(m),
    }
    .with_u_mode(u_mode);
    spec.validate()?;
    Ok(spec)
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidParameter(format!("bad grid {s:?}, expected lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    temperature_grid(lo, hi, count)
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let recipe = match self.recipe.as_str() {
            "default" => Recipe::Default,
            "cifar10" => Recipe::Cifar10,
            other => return Err(Error::InvalidParameter(format!("unknown recipe {other:?}"))),
        };
        let mut cfg = RunConfig::for_recipe(recipe);
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.method = score_spec(self.method.parse()?, self)?;
        cfg.cal_fraction = self.cal_frac;
        cfg.seed = self.seed;
        cfg.ece_bins = self.ece_bins;
        cfg.temperature = match (self.temperature, &self.t_grid) {
            (Some(t), _) => Some(TemperatureSetting::Single(t)),
            (None, Some(g)) => Some(TemperatureSetting::Grid(parse_grid(g)?)),
            (None, None) => None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn format(&self) -> Result<Format> {
        self.format.parse()
    }
}

fn model_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Conformalize { input, run } => {
            let cfg = run.config()?;
            if cfg.temperature.as_ref().is_some_and(|t| matches!(t, TemperatureSetting::Grid(_))) {
                return Err(Error::InvalidParameter("use sweep-temperature for a grid".into()));
            }
            let ds = io::read_logits(&input)?;
            let outcome = harness::run_conformal(&ds, &cfg)?;
            print_files(&report::write_run(&outcome, &model_name(&input), &run.out, "report", run.format()?)?);
        }
        Command::SweepTemperature { input, run } => {
            let cfg = run.config()?;
            if run.temperature.is_some() {
                return Err(Error::InvalidParameter("sweeps take --t-grid, not --temperature".into()));
            }
            let ds = io::read_logits(&input)?;
            let rows = harness::sweep_temperature(&ds, &cfg)?;
            print_files(&report::write_sweep(&rows, &model_name(&input), &run.out, run.format()?)?);
        }
        Command::ShiftEval { cal, test, run } => {
            let cfg = run.config()?;
            let cal_ds = io::read_logits(&cal)?;
            let test_ds = io::read_logits(&test)?;
            let outcome = harness::shift_eval(&cal_ds, &test_ds, &cfg)?;
            let format = run.format()?;
            let mut files = report::write_run(&outcome, &model_name(&test), &run.out, "shift_report", format)?;
            if format == Format::Json {
                // raw class-conditional coverage vector, always as CSV as well
                let path = run.out.join("shift_report_per_class_coverage.csv");
                let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
                w.write_record(["class", "coverage"]).map_err(Error::from)?;
                for (c, v) in &outcome.report.per_class_coverage {
                    w.write_record([c.to_string(), v.to_string()]).map_err(Error::from)?;
                }
                w.flush()?;
                files.push(path);
            }
            print_files(&files);
        }
        Command::Compare { inputs, methods, worst_class, delta, run } => {
            let cfg = run.config()?;
            let specs = methods
                .iter()
                .map(|m| score_spec(m.trim().parse()?, &run))
                .collect::<Result<Vec<_>>>()?;
            let mut models: Vec<NamedDataset> = Vec::with_capacity(inputs.len());
            for input in &inputs {
                let (name, path) = match input.split_once('=') {
                    Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                    None => (model_name(Path::new(input)), PathBuf::from(input)),
                };
                let mut unique = name.clone();
                let mut i = 2;
                while models.iter().any(|m| m.name == unique) {
                    unique = format!("{name}#{i}");
                    i += 1;
                }
                models.push(NamedDataset { name: unique, data: io::read_logits(&path)? });
            }
            let cmp = harness::compare(&models, &specs, &cfg)?;
            let mut files = report::write_comparison(&cmp, &run.out)?;
            if let Some(pair) = worst_class {
                let (a, b): (RunKey, RunKey) = (pair[0].parse()?, pair[1].parse()?);
                let result = cmp.worst_class(&a, &b)?;
                files.push(report::write_worst_class(&result, &pair[0], &pair[1], &run.out)?);
            }
            if let Some(pair) = delta {
                let (a, b): (RunKey, RunKey) = (pair[0].parse()?, pair[1].parse()?);
                let result = cmp.size_delta(&a, &b)?;
                files.push(report::write_size_delta(&result, &pair[0], &pair[1], &run.out)?);
            }
            print_files(&files);
        }
        Command::Generate {
            out,
            classes,
            samples,
            accuracy,
            sharpness,
            runner_up,
            seed,
            logits,
            shifted_out,
            shift_drop,
            noise_scale,
        } => {
            let mut spec = SyntheticSpec::new(classes, samples, accuracy, seed).with_sharpness(sharpness);
            spec.runner_up = runner_up;
            let finish = |ds: cpbench::LogitDataset| if logits { ds.to_log_probabilities() } else { Ok(ds) };
            match (shifted_out, shift_drop) {
                (Some(test_path), Some(drop)) => {
                    let (cal, test) = synthetic::generate_pair(&spec.with_shift(drop, noise_scale))?;
                    io::write_logits(&finish(cal)?, &out)?;
                    io::write_logits(&finish(test)?, &test_path)?;
                    print_files(&[out, test_path]);
                }
                _ => {
                    io::write_logits(&finish(synthetic::generate(&spec)?)?, &out)?;
                    print_files(&[out]);
                }
            }
        }
        Command::Inspect { input } => {
            let ds = io::read_logits(&input)?;
            let summary = json!({
                "n": ds.n(),
                "classes": ds.num_classes(),
                "kind": ds.kind(),
                "labels": ds.labels_opt().is_some(),
                "accuracy": ds.accuracy().ok(),
            });
            println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
