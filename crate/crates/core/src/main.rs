use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qpgnn::generator::{gen_fixed_structure, gen_lcqp_dataset, gen_milcqp_dataset, GenConfig};
use qpgnn::gnn::{LabeledSet, Schedule};
use qpgnn::graph::{encode, GraphKind, QpGraph};
use qpgnn::harness::{
    desk_fit_instances, desk_milcqp_instances, label_instances, run_fit, run_generalization,
    run_property_suite, small_milcqp_config, verify_counterexamples, write_rows, FitSpec, Format,
    GeneralizationSpec, Report, Task,
};
use qpgnn::instance::QpInstance;
use qpgnn::io::{read_instance, write_instance};
use qpgnn::solver::{solve_lcqp, solve_milcqp, TargetLabels, DEFAULT_NODE_BUDGET};
use qpgnn::tractability::classify;
use qpgnn::wl::{refine, stable_partition, wl_equivalent, WlVariant};
use qpgnn::{Error, Result};

#[derive(Parser)]
#[command(name = "qpgnn", version, about = "QP graph encodings, WL tests, exact solvers and GNN experiments")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Format of tables written to stdout or files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    GenericLcqp,
    GenericMilcqp,
    FixedC,
    SmallMilcqp,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::GenericLcqp => "generic-lcqp",
            Preset::GenericMilcqp => "generic-milcqp",
            Preset::FixedC => "fixed-c",
            Preset::SmallMilcqp => "small-milcqp",
        }
    }

    fn config(self, seed: u64) -> GenConfig {
        match self {
            Preset::GenericLcqp => GenConfig::generic_lcqp(seed),
            Preset::GenericMilcqp => GenConfig::generic_milcqp(seed),
            Preset::FixedC => GenConfig::fixed_c(seed),
            Preset::SmallMilcqp => small_milcqp_config(seed),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Sum,
    Multiset,
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Lcqp,
    Milcqp,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random dataset and its manifest to --out-dir.
    Generate {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long)]
        count: usize,
    },
    /// Solve instance files (or every instance in a directory).
    Solve {
        paths: Vec<PathBuf>,
        /// Store feasibility, objective and solution targets next to each
        /// instance as `<name>.labels.json`.
        #[arg(long)]
        write_labels: bool,
    },
    /// Print the graph of an instance, one row per node or edge.
    Encode { path: PathBuf },
    /// Refine two instances jointly and report class counts per round.
    WlCompare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::Multiset)]
        variant: Variant,
    },
    /// Classify instances as MP-tractable and/or unfoldable.
    Check { paths: Vec<PathBuf> },
    /// Verify the counter-example corpus.
    Counterexamples,
    /// Fit GNNs over a width grid and several seeds.
    Train {
        /// Instance files or directories; without it a dataset is generated.
        #[arg(long)]
        data: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Task::FitObj)]
        task: Task,
        #[arg(long, value_enum, default_value_t = Problem::Lcqp)]
        problem: Problem,
        /// Size of the generated dataset when --data is absent.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 5e-4)]
        lr: f64,
        #[arg(long, default_value_t = 50)]
        patience: usize,
        #[arg(long, default_value_t = 2500)]
        batch_size: usize,
    },
    /// Train on growing fixed-structure datasets and measure held-out error.
    Generalize {
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 500, 2000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        validation: usize,
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
    },
    /// Run every property check.
    Suite {
        /// Seeds to run; defaults to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_error)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn require_out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli
        .out_dir
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --out-dir".to_string()))?;
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    Ok(dir)
}

fn is_instance_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".json") && !name.ends_with(".labels.json") && name != "manifest.json"
}

/// Files as given; directories expand to their instance files, sorted.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::Io { path: p.clone(), source: e })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| is_instance_file(f))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no instance files given".to_string()));
    }
    Ok(out)
}

fn emit<T: Serialize>(cli: &Cli, rows: &[T], file_stem: &str) -> Result<()> {
    match &cli.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            let path = dir.join(format!("{file_stem}.{}", cli.format.extension()));
            write_rows(rows, cli.format, Some(&path))
        }
        None => write_rows(rows, cli.format, None),
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    index: usize,
}

#[derive(Serialize)]
struct Manifest {
    preset: &'static str,
    seed: u64,
    count: usize,
    config: GenConfig,
    config_sha256: String,
    files: Vec<ManifestEntry>,
}

fn generate(cli: &Cli, preset: Preset, count: usize) -> Result<bool> {
    let dir = require_out_dir(cli)?;
    let cfg = preset.config(cli.seed);
    let instances: Vec<QpInstance> = match preset {
        Preset::GenericLcqp => gen_lcqp_dataset(&cfg, count)?.into_iter().map(QpInstance::Lcqp).collect(),
        Preset::FixedC => gen_fixed_structure(&cfg, count)?.into_iter().map(QpInstance::Lcqp).collect(),
        Preset::GenericMilcqp | Preset::SmallMilcqp => {
            gen_milcqp_dataset(&cfg, count)?.into_iter().map(QpInstance::Milcqp).collect()
        }
    };
    let mut files = Vec::with_capacity(count);
    for (index, inst) in instances.iter().enumerate() {
        let file = format!("instance_{index:05}.json");
        write_instance(inst, dir.join(&file))?;
        files.push(ManifestEntry { file, index });
    }
    let config_json = serde_json::to_string(&cfg).map_err(json_error)?;
    let manifest = Manifest {
        preset: preset.name(),
        seed: cli.seed,
        count,
        config: cfg,
        config_sha256: hex::encode(Sha256::digest(config_json.as_bytes())),
        files,
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(true)
}

#[derive(Serialize)]
struct SolveRow {
    instance: String,
    status: &'static str,
    value: Option<f64>,
    /// Space-separated coordinates.
    x_star: String,
    kkt_residual: f64,
}

#[derive(Serialize)]
struct SolveRecord {
    instance: String,
    status: &'static str,
    value: Option<f64>,
    x_star: Option<Vec<f64>>,
    kkt_residual: f64,
}

fn signed_inf(v: f64) -> serde_json::Value {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.into()
    }
}

fn labels_document(t: &TargetLabels) -> serde_json::Value {
    serde_json::json!({ "feas": t.feas, "obj": signed_inf(t.obj), "sol": t.sol })
}

fn solve(cli: &Cli, paths: &[PathBuf], write_labels: bool) -> Result<bool> {
    let mut records = Vec::new();
    for path in expand(paths)? {
        let inst = read_instance(&path)?;
        let r = match &inst {
            QpInstance::Lcqp(lp) => solve_lcqp(lp)?,
            QpInstance::Milcqp(mi) => solve_milcqp(mi, DEFAULT_NODE_BUDGET)?,
        };
        if write_labels {
            let sidecar = path.with_extension("labels.json");
            write_json(&labels_document(&TargetLabels::from_result(&r)), &sidecar)?;
        }
        records.push(SolveRecord {
            instance: path.display().to_string(),
            status: r.status.name(),
            value: r.value,
            x_star: r.x_star,
            kkt_residual: r.kkt_residual,
        });
    }
    match cli.format {
        Format::Json => emit(cli, &records, "solve")?,
        Format::Csv => {
            let rows: Vec<SolveRow> = records
                .into_iter()
                .map(|r| SolveRow {
                    instance: r.instance,
                    status: r.status,
                    value: r.value,
                    x_star: r
                        .x_star
                        .map(|x| x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                        .unwrap_or_default(),
                    kkt_residual: r.kkt_residual,
                })
                .collect();
            emit(cli, &rows, "solve")?;
        }
    }
    Ok(true)
}

#[derive(Serialize, Default)]
struct ElementRow {
    element: &'static str,
    i: Option<usize>,
    j: Option<usize>,
    value: Option<f64>,
    sense: Option<&'static str>,
    lower: Option<String>,
    upper: Option<String>,
    integer: Option<bool>,
}

fn bound_text(v: f64) -> String {
    match signed_inf(v) {
        serde_json::Value::String(s) => s,
        _ => v.to_string(),
    }
}

fn graph_rows(g: &QpGraph) -> Vec<ElementRow> {
    let mut rows = Vec::new();
    for (i, f) in g.constraints.iter().enumerate() {
        rows.push(ElementRow {
            element: "constraint",
            i: Some(i),
            value: Some(f.rhs),
            sense: Some(f.sense.token()),
            ..Default::default()
        });
    }
    for (j, f) in g.variables.iter().enumerate() {
        rows.push(ElementRow {
            element: "variable",
            j: Some(j),
            value: Some(f.cost),
            lower: Some(bound_text(f.lower)),
            upper: Some(bound_text(f.upper)),
            integer: f.integer,
            ..Default::default()
        });
    }
    for &(i, j, v) in &g.a_edges {
        rows.push(ElementRow { element: "A", i: Some(i), j: Some(j), value: Some(v), ..Default::default() });
    }
    for &(i, j, v) in &g.q_edges {
        rows.push(ElementRow { element: "Q", i: Some(i), j: Some(j), value: Some(v), ..Default::default() });
    }
    rows
}

#[derive(Serialize)]
struct RoundRow {
    round: usize,
    #[serde(rename = "num_V_classes")]
    num_v_classes: usize,
    #[serde(rename = "num_W_classes")]
    num_w_classes: usize,
}

#[derive(Serialize)]
struct PartitionDoc {
    equivalent: bool,
    rounds_to_stabilize: usize,
    constraint_blocks: Vec<Vec<usize>>,
    variable_blocks: Vec<Vec<usize>>,
}

fn wl_compare(cli: &Cli, first: &Path, second: &Path, variant: Variant) -> Result<bool> {
    let variant = match variant {
        Variant::Sum => WlVariant::LcqpSum,
        Variant::Multiset => WlVariant::MilcqpMultiset,
    };
    let g1 = encode(&read_instance(first)?)?;
    let g2 = encode(&read_instance(second)?)?;
    let equivalent = wl_equivalent(&g1, &g2, variant)?;
    let union = g1.disjoint_union(&g2)?;
    let stable = stable_partition(&union, variant);
    let rows: Vec<RoundRow> = refine(&union, variant, stable.rounds_to_stabilize)
        .iter()
        .map(|c| RoundRow {
            round: c.round,
            num_v_classes: c.num_v_classes(),
            num_w_classes: c.num_w_classes(),
        })
        .collect();
    emit(cli, &rows, "wl_rounds")?;
    let doc = PartitionDoc {
        equivalent,
        rounds_to_stabilize: stable.rounds_to_stabilize,
        constraint_blocks: stable.constraint_blocks,
        variable_blocks: stable.variable_blocks,
    };
    match &cli.out_dir {
        Some(dir) => write_json(&doc, &dir.join("wl_partition.json"))?,
        None => eprintln!("equivalent: {equivalent}"),
    }
    Ok(true)
}

#[derive(Serialize)]
struct CheckRow {
    instance: String,
    mp_tractable: bool,
    unfoldable: bool,
    rounds_to_stabilize: usize,
}

fn check(cli: &Cli, paths: &[PathBuf]) -> Result<bool> {
    let mut rows = Vec::new();
    for path in expand(paths)? {
        let rep = classify(&encode(&read_instance(&path)?)?);
        rows.push(CheckRow {
            instance: path.display().to_string(),
            mp_tractable: rep.mp_tractable,
            unfoldable: rep.unfoldable,
            rounds_to_stabilize: rep.partition.rounds_to_stabilize,
        });
    }
    emit(cli, &rows, "check")?;
    Ok(true)
}

fn emit_report(cli: &Cli, report: &Report, stem: &str) -> Result<bool> {
    emit(cli, &report.checks, stem)?;
    for c in report.failures() {
        eprintln!("FAILED {}: {}", c.name, c.detail);
    }
    Ok(report.passed())
}

fn load_labeled(paths: &[PathBuf], task: Task) -> Result<(LabeledSet, GraphKind)> {
    let instances: Vec<QpInstance> =
        expand(paths)?.iter().map(read_instance).collect::<Result<_>>()?;
    let kind = match instances[0] {
        QpInstance::Lcqp(_) => GraphKind::Lcqp,
        QpInstance::Milcqp(_) => GraphKind::Milcqp,
    };
    let (set, _) = label_instances(&instances, task)?;
    if set.is_empty() {
        return Err(Error::Config("no instance in the data has an optimum".to_string()));
    }
    Ok((set, kind))
}

#[derive(Serialize)]
struct GeneralizationMedianRow {
    train_size: usize,
    median_train_err: f64,
    median_val_err: f64,
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Generate { preset, count } => generate(cli, *preset, *count),
        Command::Solve { paths, write_labels } => solve(cli, paths, *write_labels),
        Command::Encode { path } => {
            emit(cli, &graph_rows(&encode(&read_instance(path)?)?), "graph")?;
            Ok(true)
        }
        Command::WlCompare { first, second, variant } => wl_compare(cli, first, second, *variant),
        Command::Check { paths } => check(cli, paths),
        Command::Counterexamples => emit_report(cli, &verify_counterexamples(cli.seed)?, "counterexamples"),
        Command::Train {
            data,
            task,
            problem,
            count,
            widths,
            seeds,
            layers,
            epochs,
            lr,
            patience,
            batch_size,
        } => {
            let (set, kind) = if data.is_empty() {
                let instances: Vec<QpInstance> = match problem {
                    Problem::Lcqp => desk_fit_instances(cli.seed, *count)?.into_iter().map(QpInstance::Lcqp).collect(),
                    Problem::Milcqp => desk_milcqp_instances(cli.seed, *count)?.into_iter().map(QpInstance::Milcqp).collect(),
                };
                let kind = match problem {
                    Problem::Lcqp => GraphKind::Lcqp,
                    Problem::Milcqp => GraphKind::Milcqp,
                };
                (label_instances(&instances, *task)?.0, kind)
            } else {
                load_labeled(data, *task)?
            };
            let spec = FitSpec {
                task: *task,
                problem: kind,
                widths: widths.clone(),
                seeds: seeds.clone(),
                layers: *layers,
                schedule: Schedule {
                    epochs: *epochs,
                    lr: *lr,
                    patience: *patience,
                    batch_size: *batch_size,
                    ..Schedule::default()
                },
            };
            let report = run_fit(&spec, &set, cli.out_dir.as_deref(), cli.format)?;
            #[derive(Serialize)]
            struct Row {
                width: usize,
                median_best_rel_err: f64,
            }
            let rows: Vec<Row> = report
                .medians
                .iter()
                .map(|&(width, median_best_rel_err)| Row { width, median_best_rel_err })
                .collect();
            write_rows(&rows, cli.format, None)?;
            Ok(true)
        }
        Command::Generalize { sizes, validation, width, layers, seeds, epochs, batch_size } => {
            let defaults = GeneralizationSpec::desk();
            let spec = GeneralizationSpec {
                sizes: sizes.clone(),
                validation: *validation,
                width: *width,
                layers: *layers,
                seeds: seeds.clone(),
                schedule: Schedule { epochs: *epochs, batch_size: *batch_size, ..defaults.schedule },
                ..defaults
            };
            let report = run_generalization(&spec, cli.seed, cli.out_dir.as_deref(), cli.format)?;
            let rows: Vec<GeneralizationMedianRow> = report
                .medians
                .iter()
                .map(|&(train_size, median_train_err, median_val_err)| GeneralizationMedianRow {
                    train_size,
                    median_train_err,
                    median_val_err,
                })
                .collect();
            write_rows(&rows, cli.format, None)?;
            if !report.improves() {
                eprintln!("FAILED: median validation error does not decrease with training size");
            }
            Ok(report.improves())
        }
        Command::Suite { seeds } => {
            let seeds = if seeds.is_empty() { vec![cli.seed] } else { seeds.clone() };
            let mut all = Report::default();
            for s in seeds {
                let mut r = run_property_suite(s)?;
                for c in r.checks.iter_mut() {
                    c.name = format!("seed{s}/{}", c.name);
                }
                all.extend(r);
            }
            emit_report(cli, &all, "suite")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
