mod config;
mod manifest;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use segmotif::graph::{GraphView, NodeTable, UrbanGraph};
use segmotif::io::write_edge_list;
use segmotif::model::{train, write_log, ProjectionRecord, PrototypeModel, TrainData};
use segmotif::motif::{census, significance, MotifCatalog, MotifDistribution};
use segmotif::pipeline::{
    ablate, ablated_inputs, local_census, reconstruct_sweep, split_metrics, write_motif_matrix,
    Ablation, SplitMetrics,
};
use segmotif::reconstruct::{
    build_library, scope_nodes, write_sweep_csv, LibraryEntry, ReconstructionReport, Scope,
    TargetPolicy,
};
use segmotif::rng::RngState;
use segmotif::segregation::{morans_i, MoranWeights};
use segmotif::synth::{self, generate};
use segmotif::walk::bundle_to_subgraph;

use config::RunConfig;
use manifest::Recorder;

const MODEL_FILE: &str = "model.json";
const REPORT_FILE: &str = "report.json";

#[derive(Parser)]
#[command(
    name = "segmotif",
    version,
    about = "Segregation-aware motif prototype learning on dual urban graphs"
)]
struct Cli {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Seed for both the generator and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Raise log verbosity; repeatable.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted city as CSV files.
    Synth {
        #[arg(long, visible_alias = "out-dir")]
        out: PathBuf,
        /// Node count.
        #[arg(long)]
        n: Option<usize>,
        /// Structure contrast in [0, 1].
        #[arg(long)]
        contrast: Option<f64>,
        /// Feature noise scale.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Count catalog patterns in one view and optionally test significance.
    Census {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "graph", visible_alias = "view", default_value = "spatial")]
        view: GraphView,
        /// all, high, low, or a file with one node id per line; restricts the
        /// census to the induced subgraph.
        #[arg(long, default_value = "all")]
        nodes: String,
        /// Test significance against this many rewired graphs.
        #[arg(long = "null")]
        n_null: Option<usize>,
        /// Significance level.
        #[arg(long)]
        pm: Option<f64>,
        /// Test significance with the configured null-model size.
        #[arg(long)]
        significance: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the prototype model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-prototype motif matrices and fragments from a trained
    /// model's projection.
    Project {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewire one view toward low-segregation structure.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        view: Option<GraphView>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// high, low, all, or a file with one node id per line.
        #[arg(long)]
        scope: Option<String>,
        /// auto or a node id.
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated thresholds.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Verify a run directory and summarise it, or score segregation of a
    /// data directory.
    Report {
        #[arg(long, required_unless_present = "data")]
        run: Option<PathBuf>,
        /// Writes node_id,seg_score,seg_label and prints Moran's I per view.
        #[arg(long, conflicts_with = "run")]
        data: Option<PathBuf>,
        /// Where the segregation table goes; defaults to the data directory.
        #[arg(long, requires = "data")]
        out: Option<PathBuf>,
    },
    /// Ingest (or generate), train, project, census, reconstruct and report.
    Pipeline {
        /// Directory with nodes.csv, spatial.csv and od.csv; a planted city
        /// is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain with inputs removed and tabulate test metrics.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated keys among G_o, G_s, X_SV, X_FL, X_POI; each
        /// occurrence is one variant.
        #[arg(long = "drop")]
        drops: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Validation(anyhow::Error),
    Stage(&'static str, anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn validation<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Validation(e.into())
}

fn at<E: Into<anyhow::Error>>(stage: &'static str) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Stage(stage, e.into())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    model: PrototypeModel,
    projection: Vec<ProjectionRecord>,
    best_epoch: usize,
    epochs_run: usize,
}

#[derive(Serialize)]
struct PrototypeReport {
    prototype: usize,
    class: usize,
    root: usize,
    walks: Vec<Vec<usize>>,
    fragment_edges: Vec<(usize, usize)>,
    distribution: MotifDistribution,
}

/// Deterministic summary of a pipeline run.
#[derive(Serialize, Deserialize)]
struct RunReport {
    metrics: SplitMetrics,
    best_epoch: usize,
    epochs_run: usize,
    reconstruct_view: GraphView,
    libraries: Vec<Vec<LibraryEntry>>,
    sweep: Vec<ReconstructionReport>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(stage, e)) => {
            eprintln!("error in stage {stage}: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.sets).map_err(validation)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if cli.print_config {
        print!("{}", cfg.render().map_err(validation)?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(validation(anyhow!("no subcommand given; see --help")));
    };
    match command {
        Command::Synth {
            out,
            n,
            contrast,
            noise,
        } => {
            if let Some(n) = n {
                cfg.synth.n_nodes = n;
            }
            if let Some(c) = contrast {
                cfg.synth.structure_contrast = c;
            }
            if let Some(x) = noise {
                cfg.synth.feature_noise = x;
            }
            cfg.validate().map_err(validation)?;
            cmd_synth(&cfg, &out)
        }
        Command::Census {
            data,
            view,
            nodes,
            n_null,
            pm,
            significance,
            out,
        } => {
            if let Some(n) = n_null {
                cfg.significance.n_null = n;
            }
            if let Some(p) = pm {
                cfg.significance.p_m = p;
            }
            cfg.validate().map_err(validation)?;
            let scope = match nodes.as_str() {
                "all" => None,
                other => Some(parse_scope(other).map_err(validation)?),
            };
            cmd_census(
                &cfg,
                &data,
                view,
                scope,
                significance || n_null.is_some(),
                &out,
            )
        }
        Command::Train { data, out } => cmd_train(&cfg, &data, &out),
        Command::Project { model, out } => cmd_project(&cfg, &model, &out),
        Command::Reconstruct {
            data,
            model,
            out,
            view,
            alpha,
            beta,
            scope,
            target,
            sweep,
        } => {
            if let Some(v) = view {
                cfg.pipeline.view = v;
            }
            if let Some(a) = alpha {
                cfg.reconstruct.alpha = a;
            }
            if let Some(b) = beta {
                cfg.reconstruct.beta = b;
            }
            if let Some(s) = scope {
                cfg.reconstruct.scope = parse_scope(&s).map_err(validation)?;
            }
            if let Some(t) = target {
                cfg.reconstruct.target = parse_target(&t).map_err(validation)?;
            }
            if let Some(s) = sweep {
                cfg.pipeline.betas = parse_betas(&s).map_err(validation)?;
            }
            cfg.validate().map_err(validation)?;
            cmd_reconstruct(&cfg, &data, &model, &out)
        }
        Command::Report { run: Some(run), .. } => cmd_report(&run),
        Command::Report {
            data: Some(data),
            out,
            ..
        } => cmd_segregation(&cfg, &data, out.as_deref().unwrap_or(&data)),
        Command::Report { .. } => Err(validation(anyhow!("report needs --run or --data"))),
        Command::Pipeline { data, out } => cmd_pipeline(&cfg, data.as_deref(), &out),
        Command::Ablate { data, drops, out } => cmd_ablate(&cfg, &data, &drops, &out),
    }
}

fn parse_scope(s: &str) -> anyhow::Result<Scope> {
    Ok(match s {
        "high" => Scope::High,
        "low" => Scope::Low,
        "all" => Scope::All,
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading scope file {path}"))?;
            let nodes = text
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .with_context(|| format!("bad node id {t:?} in {path}"))
                })
                .collect::<anyhow::Result<_>>()?;
            Scope::Nodes(nodes)
        }
    })
}

fn parse_target(s: &str) -> anyhow::Result<TargetPolicy> {
    if s == "auto" {
        return Ok(TargetPolicy::Auto);
    }
    s.parse()
        .map(TargetPolicy::Node)
        .map_err(|_| anyhow!("target must be `auto` or a node id, got {s:?}"))
}

fn parse_betas(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad threshold {t:?}"))
        })
        .collect()
}

fn data_files(dir: &Path) -> [PathBuf; 3] {
    [synth::NODES_FILE, synth::SPATIAL_FILE, synth::OD_FILE].map(|f| dir.join(f))
}

fn ingest(cfg: &RunConfig, dir: &Path) -> Outcome<(UrbanGraph, NodeTable)> {
    let [nodes, spatial, od] = data_files(dir);
    for f in [&nodes, &spatial, &od] {
        if !f.is_file() {
            return Err(Failure::Stage(
                "ingest",
                anyhow!("missing input file {}", f.display()),
            ));
        }
    }
    let (g, t, _) =
        synth::ingest(&nodes, &spatial, &od, cfg.pipeline.quantile_split).map_err(at("ingest"))?;
    Ok((g, t))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(rec: &mut Recorder, name: &str, value: &T) -> anyhow::Result<()> {
    let path = rec.path(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    rec.output(path);
    Ok(())
}

fn finish(rec: Recorder, command: &str, cfg: &RunConfig, inputs: &[PathBuf]) -> Outcome<()> {
    rec.finish(command, cfg.train.seed, config::snapshot(cfg), inputs)
        .map_err(at("manifest"))?;
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Outcome<()> {
    let mut rec = Recorder::new(out).map_err(at("synth"))?;
    rec.time("synth", |rec| -> Outcome<()> {
        let city = generate(&cfg.synth).map_err(at("synth"))?;
        for p in synth::export(&city, rec.dir()).map_err(at("synth"))? {
            rec.output(p);
        }
        Ok(())
    })?;
    finish(rec, "synth", cfg, &[])
}

fn cmd_census(
    cfg: &RunConfig,
    data: &Path,
    view: GraphView,
    scope: Option<Scope>,
    sig: bool,
    out: &Path,
) -> Outcome<()> {
    let (g, t) = ingest(cfg, data)?;
    let mut rec = Recorder::new(out).map_err(at("census"))?;
    let catalog = MotifCatalog::standard();
    let subset = match &scope {
        None => None,
        Some(s) => Some(scope_nodes(s, &t.seg_label).map_err(validation)?),
    };
    rec.time("census", |rec| -> anyhow::Result<()> {
        let dist = census(&g, view, subset.as_deref(), &catalog)?;
        let path = rec.path("census.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["pattern", "count", "normalized"])?;
        for (k, id) in catalog.ids().iter().enumerate() {
            w.write_record([
                id.to_string(),
                dist.counts[k].to_string(),
                dist.normalized[k].to_string(),
            ])?;
        }
        w.flush()?;
        rec.output(path);
        Ok(())
    })
    .map_err(at("census"))?;
    if sig {
        rec.time("significance", |rec| -> anyhow::Result<()> {
            let full = g.view(view);
            let sub = match &subset {
                Some(s) => full.induced_subgraph(s)?,
                None => full.clone(),
            };
            let rng = RngState::new(cfg.train.seed).named("significance");
            let res = significance(&sub, &catalog, &cfg.significance, rng)?;
            let path = rec.path("significance.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record([
                "pattern_id",
                "f_real",
                "f_rand_mean",
                "f_rand_sd",
                "p",
                "is_motif",
            ])?;
            for p in &res.patterns {
                w.write_record([
                    p.pattern_id.clone(),
                    p.f_real.to_string(),
                    p.f_rand_mean.to_string(),
                    p.f_rand_sd.to_string(),
                    p.empirical_p.to_string(),
                    p.is_motif.to_string(),
                ])?;
            }
            w.flush()?;
            rec.output(path);
            Ok(())
        })
        .map_err(at("significance"))?;
    }
    finish(rec, "census", cfg, &data_files(data))
}

fn train_stage(
    cfg: &RunConfig,
    g: &UrbanGraph,
    t: &NodeTable,
    rec: &mut Recorder,
) -> Outcome<(ModelFile, SplitMetrics)> {
    rec.time("train", |rec| -> anyhow::Result<_> {
        let data = TrainData::from_table(g, t, &cfg.train)?;
        let outcome = train(&cfg.train, &data)?;
        let metrics = split_metrics(&outcome, &data)?;
        let log_path = rec.path("train_log.csv");
        write_log(&outcome.log, create(&log_path)?)?;
        rec.output(log_path);
        write_json(rec, "metrics.json", &metrics)?;
        let file = ModelFile {
            model: outcome.model,
            projection: outcome.projection,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.epochs_run,
        };
        write_json(rec, MODEL_FILE, &file)?;
        Ok((file, metrics))
    })
    .map_err(at("train"))
}

fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Outcome<()> {
    let (g, t) = ingest(cfg, data)?;
    let mut rec = Recorder::new(out).map_err(at("train"))?;
    train_stage(cfg, &g, &t, &mut rec)?;
    finish(rec, "train", cfg, &data_files(data))
}

fn load_model(path: &Path) -> Outcome<ModelFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(at("ingest"))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(at("ingest"))
}

/// Motif matrix per view plus the projection table.
fn project_stage(model: &ModelFile, rec: &mut Recorder) -> Outcome<[Vec<LibraryEntry>; 2]> {
    rec.time("project", |rec| -> anyhow::Result<_> {
        let catalog = MotifCatalog::standard();
        let libraries = GraphView::ALL.map(|v| build_library(&model.projection, v, &catalog));
        for v in GraphView::ALL {
            let path = rec.path(&format!("motif_matrix_{}.csv", v.name()));
            write_motif_matrix(&libraries[v.index()], &catalog, create(&path)?)?;
            rec.output(path);
        }
        for v in GraphView::ALL {
            let report: Vec<PrototypeReport> = model
                .projection
                .iter()
                .filter(|r| r.view == v)
                .map(|r| PrototypeReport {
                    prototype: r.prototype,
                    class: r.class,
                    root: r.root,
                    walks: r.bundle.walks.clone(),
                    fragment_edges: bundle_to_subgraph(&r.bundle).edges,
                    distribution: libraries[v.index()]
                        .iter()
                        .find(|e| e.prototype == r.prototype)
                        .expect("same records")
                        .distribution
                        .clone(),
                })
                .collect();
            write_json(rec, &format!("prototypes_{}.json", v.name()), &report)?;
        }
        let path = rec.path("projection.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["view", "prototype", "class", "root", "distance"])?;
        for r in &model.projection {
            w.write_record([
                r.view.name().to_string(),
                r.prototype.to_string(),
                r.class.to_string(),
                r.root.to_string(),
                r.distance.to_string(),
            ])?;
        }
        w.flush()?;
        rec.output(path);
        Ok(libraries)
    })
    .map_err(at("project"))
}

fn cmd_project(cfg: &RunConfig, model: &Path, out: &Path) -> Outcome<()> {
    let m = load_model(model)?;
    let mut rec = Recorder::new(out).map_err(at("project"))?;
    project_stage(&m, &mut rec)?;
    finish(rec, "project", cfg, &[model.to_path_buf()])
}

fn reconstruct_stage(
    cfg: &RunConfig,
    g: &UrbanGraph,
    t: &NodeTable,
    library: &[LibraryEntry],
    model: &ModelFile,
    rec: &mut Recorder,
) -> Outcome<Vec<ReconstructionReport>> {
    let view = cfg.pipeline.view;
    let catalog = MotifCatalog::standard();
    let dists = rec
        .time("census", |_| {
            local_census(g, view, &model.model.config, &catalog)
        })
        .map_err(at("census"))?;
    rec.time("reconstruct", |rec| -> anyhow::Result<_> {
        let (sweep, rewired) = reconstruct_sweep(
            g.view(view),
            view,
            &dists,
            library,
            t,
            &cfg.reconstruct,
            &cfg.pipeline.betas,
        )?;
        let path = rec.path("sweep.csv");
        write_sweep_csv(&sweep, create(&path)?)?;
        rec.output(path);
        let path = rec.path(&format!("reconstructed_{}.csv", view.name()));
        write_edge_list(&rewired, create(&path)?)?;
        rec.output(path);
        write_json(rec, "reconstruction.json", &sweep)?;
        Ok(sweep)
    })
    .map_err(at("reconstruct"))
}

fn cmd_reconstruct(cfg: &RunConfig, data: &Path, model: &Path, out: &Path) -> Outcome<()> {
    let (g, t) = ingest(cfg, data)?;
    let m = load_model(model)?;
    if !m.projection.iter().any(|r| r.view == cfg.pipeline.view) {
        return Err(validation(anyhow!(
            "{} carries no {} projection",
            model.display(),
            cfg.pipeline.view.name()
        )));
    }
    let mut rec = Recorder::new(out).map_err(at("reconstruct"))?;
    let catalog = MotifCatalog::standard();
    let library = build_library(&m.projection, cfg.pipeline.view, &catalog);
    reconstruct_stage(cfg, &g, &t, &library, &m, &mut rec)?;
    let mut inputs = data_files(data).to_vec();
    inputs.push(model.to_path_buf());
    finish(rec, "reconstruct", cfg, &inputs)
}

fn cmd_pipeline(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Outcome<()> {
    let mut rec = Recorder::new(out).map_err(at("ingest"))?;
    let data_dir = match data {
        Some(d) => d.to_path_buf(),
        None => {
            let dir = rec.path("data");
            rec.time("synth", |rec| -> Outcome<()> {
                let city = generate(&cfg.synth).map_err(at("synth"))?;
                for p in synth::export(&city, &dir).map_err(at("synth"))? {
                    rec.output(p);
                }
                Ok(())
            })?;
            dir
        }
    };
    let (g, t) = rec.time("ingest", |_| ingest(cfg, &data_dir))?;
    let (model, metrics) = train_stage(cfg, &g, &t, &mut rec)?;
    let libraries = project_stage(&model, &mut rec)?;
    let view = cfg.pipeline.view;
    let sweep = reconstruct_stage(cfg, &g, &t, &libraries[view.index()], &model, &mut rec)?;
    rec.time("report", |rec| -> anyhow::Result<()> {
        let report = RunReport {
            metrics,
            best_epoch: model.best_epoch,
            epochs_run: model.epochs_run,
            reconstruct_view: view,
            libraries: libraries.to_vec(),
            sweep,
        };
        write_json(rec, REPORT_FILE, &report)
    })
    .map_err(at("report"))?;
    let inputs = if data.is_some() {
        data_files(&data_dir).to_vec()
    } else {
        Vec::new()
    };
    finish(rec, "pipeline", cfg, &inputs)
}

fn cmd_report(run: &Path) -> Outcome<()> {
    let m = manifest::verify(run).map_err(at("report"))?;
    println!("{}: {} outputs verified", m.command, m.outputs.len());
    for s in &m.timings {
        println!("  {:<12} {:>9.3}s", s.stage, s.seconds);
    }
    let path = run.join(REPORT_FILE);
    if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(at("report"))?;
        let r: RunReport = serde_json::from_str(&text).map_err(at("report"))?;
        let m = r.metrics.test;
        println!(
            "test accuracy {:.4}  macro-F1 {:.4}  (best epoch {} of {})",
            m.accuracy, m.macro_f1, r.best_epoch, r.epochs_run
        );
        println!(
            "{:>6} {:>6} {:>8} {:>8} {:>8} {:>9} {:>9}",
            "alpha", "beta", "AEP", "REP", "UEP", "I_before", "I_after"
        );
        for s in &r.sweep {
            println!(
                "{:>6} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>9.4} {:>9.4}",
                s.alpha, s.beta, s.aep, s.rep, s.uep, s.morans_before, s.morans_after
            );
        }
    }
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, data: &Path, drops: &[String], out: &Path) -> Outcome<()> {
    let mut variants: Vec<Vec<Ablation>> = vec![Vec::new()];
    for d in drops {
        let keys = d
            .split(',')
            .map(|k| Ablation::parse(k.trim()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(validation)?;
        variants.push(keys);
    }
    let (g, t) = ingest(cfg, data)?;
    for v in &variants {
        ablated_inputs(&g, &t, v).map_err(validation)?;
    }
    let mut rec = Recorder::new(out).map_err(at("ablate"))?;
    rec.time("ablate", |rec| -> anyhow::Result<()> {
        let path = rec.path("ablation.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["variant", "accuracy", "macro_f1"])?;
        for v in &variants {
            let name = if v.is_empty() {
                "full".to_string()
            } else {
                v.iter().map(|a| a.key()).collect::<Vec<_>>().join("+")
            };
            let m = ablate(&g, &t, &cfg.train, v)?;
            log::info!(
                "{name}: accuracy {:.4} macro-F1 {:.4}",
                m.accuracy,
                m.macro_f1
            );
            w.write_record([name, m.accuracy.to_string(), m.macro_f1.to_string()])?;
        }
        w.flush()?;
        rec.output(path);
        Ok(())
    })
    .map_err(at("ablate"))?;
    finish(rec, "ablate", cfg, &data_files(data))
}

fn cmd_segregation(cfg: &RunConfig, data: &Path, out: &Path) -> Outcome<()> {
    let (g, t) = ingest(cfg, data)?;
    let mut rec = Recorder::new(out).map_err(at("report"))?;
    rec.time("report", |rec| -> anyhow::Result<()> {
        let path = rec.path("segregation.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["node_id", "seg_score", "seg_label"])?;
        for i in 0..t.node_count() {
            w.write_record([
                i.to_string(),
                t.seg_score[i].to_string(),
                t.seg_label[i].to_string(),
            ])?;
        }
        w.flush()?;
        rec.output(path);
        let scores = t.seg_score.as_slice().expect("contiguous");
        let parts = GraphView::ALL
            .iter()
            .map(|&v| {
                Ok(format!(
                    "{} {:.6}",
                    v.name(),
                    morans_i(g.view(v), scores, MoranWeights::Binary)?
                ))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        println!("Moran's I (binary weights): {}", parts.join(", "));
        Ok(())
    })
    .map_err(at("report"))?;
    finish(rec, "report", cfg, &data_files(data))
}
