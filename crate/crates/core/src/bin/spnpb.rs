//! Command-line front end. Exit status: 0 on success, 1 on usage errors,
//! 2 on data or model errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spnpb::control::{optimize, ModelObjective};
use spnpb::data::{TrainingSet, TrialDataset};
use spnpb::experiments::{
    ablation_tsv, eval_entries_tsv, eval_summary_tsv, load_trial, pca_tsv, run_ablation, run_eval,
    run_update, save_trial, train_checkpoint, train_report_tsv, update_run_tsv, Checkpoint,
    ExperimentConfig, Scenario,
};
use spnpb::model::Variant;
use spnpb::sim::{forward_kinematics, point_line_distance, query_embedding};
use spnpb::trainer::pca_project;
use spnpb::Error;

#[derive(Parser, Debug)]
#[command(
    name = "spnpb",
    version,
    about = "Parametric-bias predictive model: data, training, view control"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (the SPNPB_SEED environment variable takes precedence).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the full-size embedding, network and controller settings.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record random-motion trials, one file per regime.
    Collect {
        #[arg(long, default_value = "basic")]
        scenario: String,
        /// Only this regime.
        #[arg(long)]
        regime: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on trial files (or directories of `.trial` files).
    Train {
        #[arg(required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Checkpoint path; the loss curve goes to `<out>.report.tsv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream fresh observations of a regime through the online bias updater.
    UpdatePb {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "basic")]
        scenario: String,
        #[arg(long)]
        regime: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the joint angles that point the camera at an object.
    Control {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "basic")]
        scenario: String,
        #[arg(long)]
        regime: String,
        #[arg(long)]
        object: String,
        #[arg(long, default_value_t = 0)]
        template: usize,
    },
    /// Point-to-line errors of a model over the evaluation protocol.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "basic")]
        scenario: String,
        /// Only this regime (default: the scenario's evaluation regimes).
        #[arg(long)]
        regime: Option<String>,
        /// Per-run table; the summary is printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the four model variants on the same data.
    Ablate {
        #[arg(long, default_value = "basic")]
        scenario: String,
        /// `all` or a comma-separated list such as `PB+ST,None`.
        #[arg(long, default_value = "all")]
        variant: String,
        /// Trial files or directories (default: collect from the scenario).
        #[arg(long)]
        data: Vec<PathBuf>,
        /// Regime-by-variant table.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-run table.
        #[arg(long)]
        details: Option<PathBuf>,
    },
    /// Principal-component coordinates of the trained biases.
    Pca {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn settings(g: &Global) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = if g.paper_scale {
        ExperimentConfig::paper()
    } else {
        ExperimentConfig::desk()
    };
    if let Some(path) = &g.config {
        cfg.load(path)?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Ok(v) = std::env::var("SPNPB_SEED") {
        cfg.seed = v.trim().parse().map_err(|_| {
            Failure::Usage(format!("SPNPB_SEED must be an unsigned integer, got `{v}`"))
        })?;
    }
    cfg.train.seed = cfg.seed;
    cfg.control.seed = cfg.seed;
    Ok(cfg)
}

fn scenario_for(name: &str, n_v: Option<usize>) -> std::result::Result<Scenario, Failure> {
    let s = Scenario::resolve(name)?;
    Ok(match n_v {
        Some(n) => s.with_n_v(n)?,
        None => s,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| {
            Failure::Data(Error::Io {
                path: p.to_path_buf(),
                source,
            })
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let cfg = settings(&cli.global)?;
    match cli.command {
        Command::Collect {
            scenario,
            regime,
            out,
        } => {
            let s = scenario_for(&scenario, cfg.n_v)?;
            let labels: Vec<String> = match regime {
                Some(r) => vec![r],
                None => s.regimes.iter().map(|r| r.label.clone()).collect(),
            };
            std::fs::create_dir_all(&out).map_err(|source| Error::Io {
                path: out.clone(),
                source,
            })?;
            for label in labels {
                let trial = s.collect(&label, cfg.seed, cfg.records)?;
                let path = out.join(format!("{label}.trial"));
                save_trial(&trial, &path)?;
                println!("{}\t{} records", path.display(), trial.len());
            }
            Ok(())
        }
        Command::Train { data, variant, out } => {
            let ts = load_data(&data)?;
            let mut tc = cfg.train.clone();
            tc.model.n_v = ts.trials[0].n_s().saturating_sub(tc.model.n_tau);
            let variant = variant.unwrap_or(tc.variant);
            let (ckpt, report) = train_checkpoint(&ts, &tc, variant)?;
            ckpt.save(&out)?;
            let report_path = PathBuf::from(format!("{}.report.tsv", out.display()));
            emit(Some(&report_path), &train_report_tsv(&report))?;
            println!(
                "{}\t{} epochs\tfinal loss {}",
                out.display(),
                report.epoch_loss.len(),
                report.epoch_loss.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::UpdatePb {
            model,
            scenario,
            regime,
            out,
        } => {
            let ckpt = Checkpoint::load(&model)?;
            let s = scenario_for(&scenario, Some(ckpt.model.config().n_v))?;
            let run = run_update(
                &ckpt.model,
                &s,
                &regime,
                cfg.seed,
                cfg.update_observations,
                &cfg.updater,
            )?;
            emit(out.as_deref(), &update_run_tsv(&run, &ckpt.labels))?;
            if out.is_some() {
                let nearest = ckpt
                    .label(run.nearest)
                    .map_or(run.nearest.to_string(), str::to_string);
                println!("{} steps\tnearest trained bias {nearest}", run.steps.len());
            }
            Ok(())
        }
        Command::Control {
            model,
            scenario,
            regime,
            object,
            template,
        } => {
            let ckpt = Checkpoint::load(&model)?;
            let s = scenario_for(&scenario, Some(ckpt.model.config().n_v))?;
            let p = ckpt.bias_for(&regime)?;
            let state = s.state(&regime, cfg.seed)?;
            let query = query_embedding(&s.world.scene, &object, template)?;
            let obj = ModelObjective::new(&ckpt.model, &p, &query, cfg.control.c_tau)?;
            let r = optimize(&obj, &cfg.control)?;
            let pose = forward_kinematics(&s.world.robot_for(&state)?, &r.u)?;
            let target = s.world.scene.object_position(&object, &state)?;
            let u: Vec<String> = r.u.iter().map(|x| format!("{x:.6}")).collect();
            println!("query\t{}", query.label);
            println!("u\t{}", u.join(" "));
            println!("loss\t{}", r.loss);
            println!("distance\t{}", point_line_distance(&pose, &target));
            Ok(())
        }
        Command::Eval {
            model,
            scenario,
            regime,
            out,
        } => {
            let ckpt = Checkpoint::load(&model)?;
            let s = scenario_for(&scenario, Some(ckpt.model.config().n_v))?;
            let regimes = regime.map_or_else(|| s.eval_regimes.clone(), |r| vec![r]);
            let reports = regimes
                .iter()
                .map(|r| run_eval(&ckpt, &s, r, cfg.seed, &cfg.control))
                .collect::<spnpb::Result<Vec<_>>>()?;
            if let Some(out) = &out {
                emit(Some(out), &eval_entries_tsv(&reports))?;
            }
            print!("{}", eval_summary_tsv(&reports));
            Ok(())
        }
        Command::Ablate {
            scenario,
            variant,
            data,
            out,
            details,
        } => {
            let variants = parse_variants(&variant)?;
            let s = scenario_for(&scenario, cfg.n_v)?;
            let ts = if data.is_empty() {
                s.collect_all(cfg.seed, cfg.records)?
            } else {
                load_data(&data)?
            };
            let mut tc = cfg.train.clone();
            tc.model.n_v = s.world.scene.n_v;
            let report = run_ablation(&s, &ts, &tc, &cfg.control, &variants, cfg.seed)?;
            if let Some(d) = &details {
                emit(Some(d), &eval_entries_tsv(&report.reports))?;
            }
            emit(out.as_deref(), &ablation_tsv(&report))?;
            Ok(())
        }
        Command::Pca { model, out } => {
            let ckpt = Checkpoint::load(&model)?;
            if !ckpt.model.pb_enabled() {
                return Err(Failure::Usage(format!(
                    "the {} variant has no parametric bias",
                    ckpt.model.variant()
                )));
            }
            let proj = pca_project(&ckpt.model.pb_table)?;
            emit(out.as_deref(), &pca_tsv(&proj, &ckpt.labels))
        }
    }
}

fn parse_variants(text: &str) -> std::result::Result<Vec<Variant>, Failure> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(Variant::ALL.to_vec());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<Variant>()
                .map_err(|e| Failure::Usage(e.to_string()))
        })
        .collect()
}

/// Loads trial files; directories contribute their `.trial` files in name
/// order.
fn load_data(paths: &[PathBuf]) -> std::result::Result<TrainingSet, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|source| Error::Io {
                    path: p.clone(),
                    source,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "trial"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    let mut trials: Vec<TrialDataset> = files
        .iter()
        .map(|f| load_trial(f))
        .collect::<spnpb::Result<_>>()?;
    trials.sort_by_key(|t| t.id);
    Ok(TrainingSet::new(trials)?)
}
