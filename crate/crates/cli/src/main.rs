//! `orientdist` command-line interface.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use orientdist::config::RunConfig;
use orientdist::data::synth::{synth_dataset, NoiseModel, SynthConfig};
use orientdist::data::Dataset;
use orientdist::eval::report::{
    auc_table_csv, auc_table_text, filter_table_csv, filter_table_text, likelihood_table_csv,
    likelihood_table_text, summarize, MethodSummary, ReportHeader,
};
use orientdist::eval::{evaluate_dataset, filter_by_likelihood, Evaluator, FilterRow, RecordEval};
use orientdist::grid::S3Grid;
use orientdist::histogram::write_heatmap_csv;
use orientdist::learners::checkpoint::Checkpoint;
use orientdist::learners::fit::fit_method;
use orientdist::symmetry::SymmetrySpec;

#[derive(Parser)]
#[command(name = "orientdist", version, about = "Orientation distributions over SO(3): grids, training, evaluation")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the defaults or `--config`.
#[derive(Args)]
struct GlobalOpts {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long = "grid-level", visible_alias = "level", global = true)]
    grid_level: Option<u32>,
    /// Interpolation neighbors.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Hidden widths, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    /// Likelihood thresholds as multiples of chance, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    multipliers: Option<Vec<f64>>,
    /// Directory for cached grids.
    #[arg(long = "grid-cache", global = true)]
    grid_cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or load) a grid and print its size and coverage.
    Grid {
        /// Uniform samples for the coverage estimate.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Also write the grid file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// `ID=KIND` with KIND `none`, `cN[:AXIS]` or `continuous[:AXIS]`;
        /// AXIS is `x`, `y`, `z` or `a,b,c`. Repeatable.
        #[arg(long = "object", default_value = "object=none")]
        objects: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        records: usize,
        #[arg(long = "sigma-min", default_value_t = 3.0)]
        sigma_min: f64,
        #[arg(long = "sigma-max", default_value_t = 25.0)]
        sigma_max: f64,
        #[arg(long = "feature-noise", default_value_t = 0.02)]
        feature_noise: f64,
        #[arg(long = "translation-noise", default_value_t = 0.01)]
        translation_noise: f64,
        #[arg(long, default_value_t = 3)]
        candidates: usize,
    },
    /// Tune a fixed concentration per object.
    Tune {
        #[arg(long)]
        data: PathBuf,
        /// `fixed-bingham` or `mixture`.
        #[arg(long, default_value = "fixed-bingham")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train or fit a method and write its checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean ground-truth log likelihood and mode AUC per object and method.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// `NAME` or `NAME=CHECKPOINT`; repeatable.
        #[arg(long = "method", required = true)]
        methods: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write CSV instead of aligned text.
        #[arg(long)]
        csv: bool,
    },
    /// Metrics of the records kept at each likelihood threshold.
    Filter {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "method", required = true)]
        methods: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Write every report, as text and CSV, into a directory.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "method", required = true)]
        methods: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density of one record's distribution at every grid vertex, as
    /// axis-angle CSV.
    Heatmap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        record: usize,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_config(o: &GlobalOpts) -> Result<RunConfig> {
    let mut c = match &o.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).map_err(orientdist::Error::from)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = o.grid_level {
        c.grid_level = v;
    }
    if let Some(v) = o.k {
        c.k = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = o.lr {
        c.train.lr = v;
    }
    if let Some(v) = &o.hidden {
        c.train.hidden = v.clone();
    }
    if let Some(v) = o.dropout {
        c.train.dropout = v;
    }
    if let Some(v) = o.batch_size {
        c.train.batch_size = v;
    }
    if let Some(v) = &o.multipliers {
        c.multipliers = v.clone();
    }
    c.validate()?;
    Ok(c)
}

fn load_grid(level: u32, cache: Option<&Path>) -> Result<Arc<S3Grid>> {
    let g = match cache {
        Some(dir) => S3Grid::load_or_build(level, dir)?,
        None => S3Grid::build(level)?,
    };
    Ok(Arc::new(g))
}

fn parse_axis(s: &str) -> Result<[f64; 3]> {
    Ok(match s {
        "x" => [1.0, 0.0, 0.0],
        "y" => [0.0, 1.0, 0.0],
        "z" => [0.0, 0.0, 1.0],
        _ => {
            let v: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| orientdist::Error::InvalidInput(format!("bad axis `{s}`")))?;
            let [a, b, c] = v[..] else {
                return Err(orientdist::Error::InvalidInput(format!("axis `{s}` needs 3 components")).into());
            };
            let n = (a * a + b * b + c * c).sqrt();
            if !(n > 0.0) {
                return Err(orientdist::Error::InvalidInput(format!("axis `{s}` is zero")).into());
            }
            [a / n, b / n, c / n]
        }
    })
}

/// `ID=KIND`, see the `synth` help.
fn parse_object(spec: &str) -> Result<(String, SymmetrySpec)> {
    let bad = || orientdist::Error::InvalidInput(format!("bad object spec `{spec}`"));
    let (id, kind) = spec.split_once('=').ok_or_else(bad)?;
    if id.is_empty() {
        return Err(bad().into());
    }
    let (name, axis) = match kind.split_once(':') {
        Some((n, a)) => (n, parse_axis(a)?),
        None => (kind, [0.0, 0.0, 1.0]),
    };
    let sym = if name == "none" {
        SymmetrySpec::None
    } else if name == "continuous" {
        SymmetrySpec::Continuous { axis }
    } else if let Some(n) = name.strip_prefix('c') {
        SymmetrySpec::cyclic(n.parse().map_err(|_| bad())?, axis)?
    } else {
        return Err(bad().into());
    };
    Ok((id.to_string(), sym))
}

/// Builds evaluators for `NAME[=CHECKPOINT]` specs.
fn evaluators(specs: &[String], ds: &Dataset, grid: &Arc<S3Grid>, cfg: &RunConfig) -> Result<Vec<Evaluator>> {
    specs
        .iter()
        .map(|spec| {
            let ev = match spec.split_once('=') {
                None => Evaluator::stateless(spec, grid.clone(), cfg.k, &ds.header.objects)?,
                Some((name, path)) => {
                    if !orientdist::learners::checkpoint::METHOD_NAMES.contains(&name) {
                        return Err(orientdist::Error::UnknownMethod(name.into()).into());
                    }
                    let ck = Checkpoint::load(Path::new(path))?;
                    if ck.model.method() != name {
                        return Err(orientdist::Error::InvalidInput(format!(
                            "checkpoint {path} holds method `{}`, not `{name}`",
                            ck.model.method()
                        ))
                        .into());
                    }
                    Evaluator::from_checkpoint(ck, grid.clone(), cfg.stage_seed("eval"))?
                }
            };
            Ok(ev)
        })
        .collect()
}

fn evaluate_all(evs: &[Evaluator], ds: &Dataset) -> Result<Vec<(String, Vec<RecordEval>)>> {
    evs.iter()
        .map(|e| Ok((e.name().to_string(), evaluate_dataset(ds, e)?)))
        .collect()
}

fn summaries(results: &[(String, Vec<RecordEval>)], ds: &Dataset, cfg: &RunConfig) -> Result<Vec<MethodSummary>> {
    results
        .iter()
        .map(|(m, e)| Ok(summarize(ds, m, e, cfg.auc_angle_max_deg, cfg.auc_add_max)?))
        .collect()
}

fn filters(results: &[(String, Vec<RecordEval>)], cfg: &RunConfig) -> Result<Vec<(String, Vec<FilterRow>)>> {
    results
        .iter()
        .map(|(m, e)| Ok((m.clone(), filter_by_likelihood(e, &cfg.multipliers)?)))
        .collect()
}

fn header(title: &str, cfg: &RunConfig, ds: &Dataset) -> ReportHeader {
    ReportHeader {
        title: title.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        records: ds.records.len(),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.opts)?;
    let cache = cli.opts.grid_cache.as_deref();
    println!("# seed={} config_hash={}", cfg.seed, cfg.hash());
    println!("# config={}", cfg.canonical_json());
    match cli.command {
        Command::Grid { samples, out } => {
            let grid = load_grid(cfg.grid_level, cache)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed("grid"));
            let stats = grid.coverage_stats(samples, &mut rng)?;
            println!("level {}", grid.level());
            println!("vertices {}", grid.len());
            println!("coverage_max_deg {:.3}", stats.max_deg);
            println!("coverage_mean_deg {:.3}", stats.mean_deg);
            if let Some(p) = out {
                grid.save(&p)?;
            }
        }
        Command::Synth { out, objects, records, sigma_min, sigma_max, feature_noise, translation_noise, candidates } => {
            let objects = objects.iter().map(|s| parse_object(s)).collect::<Result<Vec<_>>>()?;
            let sc = SynthConfig {
                objects,
                records_per_object: records,
                noise: NoiseModel {
                    sigma_min_deg: sigma_min,
                    sigma_max_deg: sigma_max,
                    feature_noise,
                    translation_noise,
                },
                candidates,
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed("synth"));
            let ds = synth_dataset(&sc, &mut rng)?;
            ds.save(&out)?;
            println!("wrote {} records to {}", ds.records.len(), out.display());
        }
        Command::Tune { data, method, out } => {
            if method != "fixed-bingham" && method != "mixture" {
                bail!(orientdist::Error::InvalidInput(format!(
                    "tune supports fixed-bingham and mixture, not `{method}`"
                )));
            }
            let ds = Dataset::load(&data)?;
            let grid = load_grid(cfg.grid_level, cache)?;
            let fit = fit_method(&method, &ds, grid, &cfg)?;
            if let orientdist::learners::checkpoint::FittedModel::FixedBingham { lambdas }
            | orientdist::learners::checkpoint::FittedModel::Mixture { lambdas } = &fit.checkpoint.model
            {
                for (id, l) in lambdas {
                    println!("lambda {id} {l:.6}");
                }
            }
            if let Some(p) = out {
                fit.checkpoint.save(&p)?;
            }
        }
        Command::Train { data, method, out } => {
            let ds = Dataset::load(&data)?;
            let grid = load_grid(cfg.grid_level, cache)?;
            let fit = fit_method(&method, &ds, grid, &cfg)?;
            for (i, l) in fit.history.iter().enumerate() {
                println!("epoch {} loss {l:.6}", i + 1);
            }
            fit.checkpoint.save(&out)?;
            println!("wrote {} checkpoint to {}", method, out.display());
        }
        Command::Eval { data, methods, out, csv } => {
            let ds = Dataset::load(&data)?;
            let grid = load_grid(cfg.grid_level, cache)?;
            let evs = evaluators(&methods, &ds, &grid, &cfg)?;
            let sums = summaries(&evaluate_all(&evs, &ds)?, &ds, &cfg)?;
            let h = header("mean ground-truth log likelihood", &cfg, &ds);
            let ha = header("AUC of distribution-mode errors", &cfg, &ds);
            let text = if csv {
                likelihood_table_csv(&h, &sums) + &auc_table_csv(&ha, &sums, cfg.auc_angle_max_deg, cfg.auc_add_max)
            } else {
                likelihood_table_text(&h, &sums) + &auc_table_text(&ha, &sums, cfg.auc_angle_max_deg, cfg.auc_add_max)
            };
            emit(&text, out.as_deref())?;
        }
        Command::Filter { data, methods, out, csv } => {
            let ds = Dataset::load(&data)?;
            let grid = load_grid(cfg.grid_level, cache)?;
            let evs = evaluators(&methods, &ds, &grid, &cfg)?;
            let tables = filters(&evaluate_all(&evs, &ds)?, &cfg)?;
            let h = header("confidence filtering", &cfg, &ds);
            let text = if csv { filter_table_csv(&h, &tables) } else { filter_table_text(&h, &tables) };
            emit(&text, out.as_deref())?;
        }
        Command::Report { data, methods, out } => {
            let ds = Dataset::load(&data)?;
            let grid = load_grid(cfg.grid_level, cache)?;
            let evs = evaluators(&methods, &ds, &grid, &cfg)?;
            let results = evaluate_all(&evs, &ds)?;
            let sums = summaries(&results, &ds, &cfg)?;
            let tables = filters(&results, &cfg)?;
            fs::create_dir_all(&out)?;
            let h = header("mean ground-truth log likelihood", &cfg, &ds);
            let ha = header("AUC of distribution-mode errors", &cfg, &ds);
            let hf = header("confidence filtering", &cfg, &ds);
            let (amax, dmax) = (cfg.auc_angle_max_deg, cfg.auc_add_max);
            let files = [
                ("likelihood.txt", likelihood_table_text(&h, &sums)),
                ("likelihood.csv", likelihood_table_csv(&h, &sums)),
                ("auc.txt", auc_table_text(&ha, &sums, amax, dmax)),
                ("auc.csv", auc_table_csv(&ha, &sums, amax, dmax)),
                ("filter.txt", filter_table_text(&hf, &tables)),
                ("filter.csv", filter_table_csv(&hf, &tables)),
            ];
            for (name, text) in files {
                fs::write(out.join(name), text)?;
                println!("wrote {}", out.join(name).display());
            }
        }
        Command::Heatmap { data, record, method, out } => {
            let ds = Dataset::load(&data)?;
            let rec = ds
                .records
                .get(record)
                .ok_or_else(|| anyhow!(orientdist::Error::InvalidInput(format!("no record {record}"))))?;
            let grid = load_grid(cfg.grid_level, cache)?;
            let ev = evaluators(std::slice::from_ref(&method), &ds, &grid, &cfg)?.remove(0);
            let density = ev.density(record, rec)?;
            let mut buf = Vec::new();
            write_heatmap_csv(&mut buf, grid.vertices().iter().map(|q| (*q, density.pdf(q))))?;
            fs::write(&out, buf)?;
            println!("wrote {} rows to {}", grid.len(), out.display());
        }
    }
    Ok(())
}

fn error_code(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<orientdist::Error>())
        .map_or("E_CLI", orientdist::Error::code)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(tracing_subscriber::filter::LevelFilter::WARN)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage").trim_start_matches("error: ");
            eprintln!("error: E_USAGE: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {}: {msg}", error_code(&e));
            ExitCode::FAILURE
        }
    }
}
