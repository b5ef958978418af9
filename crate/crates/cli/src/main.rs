//! `csmhr`: generate workloads, build models, predict and report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use csmhr_core::persist::{
    self, CompressionReport, ModelFiles, COORDINATOR_EXTENSION, MAPPING_EXTENSION,
};
use csmhr_core::workload::{
    elevator_text, restaurant_text, write_elevator, write_restaurant, ElevatorConfig,
    RestaurantConfig,
};
use csmhr_core::{Engine, EngineConfig, InputFormat, PhaseTimings, SituationConfig};

#[derive(Parser, Debug)]
#[command(
    name = "csmhr",
    version,
    about = "Context state machines over high-level context records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic record file.
    Generate {
        #[command(subcommand)]
        workload: GenerateCmd,
    },
    /// Build a model from a record file and write the model files.
    Build(BuildArgs),
    /// Predict the next state of one attribute from saved model files.
    Predict(PredictArgs),
    /// Build a transition-only model and print the file size report.
    Report(ReportArgs),
    /// Time the pipeline on generated elevator workloads of several sizes.
    BenchSweep(SweepArgs),
}

#[derive(Subcommand, Debug)]
enum GenerateCmd {
    Elevator(ElevatorArgs),
    Restaurant(RestaurantArgs),
}

#[derive(Args, Debug)]
struct ElevatorArgs {
    #[arg(long, default_value_t = 100_000)]
    records: usize,
    #[arg(long, default_value_t = 50)]
    persons: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Largest gap between consecutive records, seconds.
    #[arg(long, default_value_t = 60)]
    max_gap: i64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// 2000 students, 500 professors
    Full,
    /// 2000 students, 100 professors
    Compression,
    /// 200 students, 50 professors
    Desk,
}

#[derive(Args, Debug)]
struct RestaurantArgs {
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long)]
    students: Option<usize>,
    #[arg(long)]
    professors: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    records: usize,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl RestaurantArgs {
    fn config(&self) -> RestaurantConfig {
        let mut c = match self.preset {
            Preset::Full => RestaurantConfig::default(),
            Preset::Compression => RestaurantConfig::compression_preset(),
            Preset::Desk => RestaurantConfig::desk_preset(),
        };
        if let Some(n) = self.students {
            c.student_count = n;
        }
        if let Some(n) = self.professors {
            c.professor_count = n;
        }
        c.record_count = self.records;
        c.seed = self.seed;
        c
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Hr,
    Elevator,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Domain identifier; defaults to the input file stem.
    #[arg(long)]
    domain: Option<String>,
    /// Transition steps R.
    #[arg(short = 'R', long = "steps", default_value_t = 1)]
    steps: usize,
    /// Hierarchy depth H.
    #[arg(short = 'H', long = "depth", default_value_t = 2)]
    depth: usize,
    #[arg(long)]
    self_loops: bool,
    /// Skip situation machines.
    #[arg(long)]
    no_situations: bool,
    /// Attribute whose changes define a situation's focus.
    #[arg(long, default_value = "location")]
    focus: String,
    /// Minimum closeness for a related entity to join a situation.
    #[arg(long, default_value_t = 50)]
    situation_closeness: u8,
    /// Discover co-location and co-timing relations after ingestion.
    #[arg(long)]
    identify_relations: bool,
    /// W: minimum co-location overlap, seconds.
    #[arg(long, default_value_t = 300)]
    colocation_overlap: i64,
    /// Δt: co-timing window, seconds.
    #[arg(long, default_value_t = 10)]
    cotime_window: i64,
    /// k: co-timed change pairs needed.
    #[arg(long, default_value_t = 3)]
    cotime_count: usize,
    /// Closeness added per identification.
    #[arg(long, default_value_t = 10)]
    strengthen: u8,
    /// Skip hierarchy mining.
    #[arg(long)]
    no_hierarchy: bool,
    /// Input format; detected from the first line when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl ModelArgs {
    fn engine_config(&self, fallback_id: &str) -> EngineConfig {
        let mut c = EngineConfig::new(self.domain.as_deref().unwrap_or(fallback_id));
        c.transition_steps = self.steps;
        c.hierarchy_depth = self.depth;
        c.count_self_loops = self.self_loops;
        c.situations = (!self.no_situations).then(|| SituationConfig {
            closeness_threshold: self.situation_closeness,
            ..SituationConfig::new(&self.focus)
        });
        c.identify_relations = self.identify_relations;
        c.mine_hierarchy = !self.no_hierarchy;
        c.relation.colocation_min_overlap_secs = self.colocation_overlap;
        c.relation.cotiming_window_secs = self.cotime_window;
        c.relation.cotiming_min_count = self.cotime_count;
        c.relation.strengthen_step = self.strengthen;
        c
    }

    fn input_format(&self) -> Option<InputFormat> {
        self.format.map(|f| match f {
            Format::Hr => InputFormat::TripleHr,
            Format::Elevator => InputFormat::Elevator,
        })
    }
}

#[derive(Args, Debug)]
struct BuildArgs {
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for the model, mapping and coordinator files.
    #[arg(long, env = "CSMHR_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// File name stem; defaults to the domain id.
    #[arg(long)]
    stem: Option<String>,
    /// Field delimiter of the timing table.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, env = "CSMHR_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    stem: String,
    /// Object URI.
    #[arg(long)]
    object: String,
    #[arg(long, default_value = "location")]
    attribute: String,
    /// Minimum probability for a prediction.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Explicit R-state prefix, oldest first; the object's last R states when omitted.
    #[arg(long, value_delimiter = ',')]
    prefix: Vec<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    input: PathBuf,
    #[arg(short = 'R', long = "steps", default_value_t = 1)]
    steps: usize,
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Record counts to time.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000, 50_000, 100_000])]
    records: Vec<usize>,
    /// Person counts to time at each size.
    #[arg(long, value_delimiter = ',', default_values_t = [50])]
    persons: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(short = 'R', long = "steps", default_value_t = 1)]
    steps: usize,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate { workload } => generate(workload),
        Command::Build(a) => build(a),
        Command::Predict(a) => predict(a),
        Command::Report(a) => report(a),
        Command::BenchSweep(a) => sweep(a),
    }
}

fn generate(cmd: GenerateCmd) -> CliResult<()> {
    match cmd {
        GenerateCmd::Elevator(a) => {
            let cfg = ElevatorConfig {
                record_count: a.records,
                person_count: a.persons,
                seed: a.seed,
                max_gap_secs: a.max_gap,
                ..ElevatorConfig::default()
            };
            match a.output {
                Some(p) => {
                    write_elevator(&cfg, &mut std::io::BufWriter::new(fs::File::create(p)?))?
                }
                None => print!("{}", elevator_text(&cfg)?),
            }
        }
        GenerateCmd::Restaurant(a) => {
            let cfg = a.config();
            match &a.output {
                Some(p) => {
                    write_restaurant(&cfg, &mut std::io::BufWriter::new(fs::File::create(p)?))?
                }
                None => print!("{}", restaurant_text(&cfg)?),
            }
        }
    }
    Ok(())
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

const PHASE_COLUMNS: [&str; 5] = [
    "conversion_ms",
    "casm_ms",
    "cssm_ms",
    "relations_ms",
    "total_ms",
];

fn timing_cells(t: &PhaseTimings) -> Vec<String> {
    [t.conversion, t.casm, t.cssm, t.relations, t.total()]
        .iter()
        .map(|x| format!("{:.3}", x.as_secs_f64() * 1000.0))
        .collect()
}

fn delimited(header: &[String], rows: &[Vec<String>], d: char) -> String {
    let d = d.to_string();
    let mut s = header.join(&d);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(&d));
        s.push('\n');
    }
    s
}

fn build(a: BuildArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.input)?;
    let config = a.model.engine_config(&file_stem(&a.input));
    let stem = a.stem.clone().unwrap_or_else(|| config.domain_id.clone());
    let mut engine = Engine::new(config)?;
    engine.ingest_text(&text, a.model.input_format())?;
    let (links, relations) = engine.finish()?;
    info!(
        "{} hierarchy links, {} relation updates",
        links.len(),
        relations.len()
    );

    let d = engine.domain();
    let files = match engine.situations() {
        Some(s) => persist::save_with_situations(d, s)?,
        None => persist::save(d)?,
    };
    let (meta, casm) = files.write_to(&a.out_dir, &stem)?;
    fs::write(
        a.out_dir.join(format!("{stem}{MAPPING_EXTENSION}")),
        persist::save_mapping(d.mapping())?,
    )?;
    fs::write(
        a.out_dir.join(format!("{stem}{COORDINATOR_EXTENSION}")),
        persist::save_coordinator(engine.coordinator())?,
    )?;

    let s = engine.summary();
    println!(
        "records {} events {} objects {} attributes {} paths {} situations {} relations {}",
        s.ingest.records,
        s.ingest.events,
        s.objects,
        s.attributes,
        s.casm_paths,
        s.situations,
        s.relations
    );
    println!("wrote {} and {}", meta.display(), casm.display());
    let header: Vec<String> = std::iter::once("model")
        .chain(PHASE_COLUMNS)
        .map(String::from)
        .collect();
    let mut row = vec![stem];
    row.extend(timing_cells(&s.timings));
    print!("{}", delimited(&header, &[row], a.delimiter));
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let files = ModelFiles::read_from(&a.out_dir, &a.stem)?;
    let mapping = persist::load_mapping(&fs::read(
        a.out_dir.join(format!("{}{MAPPING_EXTENSION}", a.stem)),
    )?)?;
    let domain = persist::load_with_mapping(&files.meta, &files.casm, &mapping)?;
    let object = domain.resolve_index(&a.object)?;
    let answer = if a.prefix.is_empty() {
        let mut config = EngineConfig::new(domain.domain_id());
        config.situations = None;
        Engine::with_domain(config, domain)?.predict_next(object, &a.attribute, a.threshold)?
    } else {
        let attr = domain
            .attribute_by_name(object, &a.attribute)
            .ok_or_else(|| format!("{} has no attribute {}", a.object, a.attribute))?;
        let tensor = attr
            .casm()
            .ok_or_else(|| format!("{} has no transition tensor", a.attribute))?;
        let prefix = a
            .prefix
            .iter()
            .map(|v| {
                attr.state_index(v)
                    .ok_or_else(|| format!("unknown state {v}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        csmhr_core::predict(tensor, &prefix, a.threshold)?.map(|(s, p)| {
            let v = attr.state(s).map(|st| st.value.clone()).unwrap_or_default();
            (v, p)
        })
    };
    match answer {
        Some((state, p)) => println!("{state}\t{p:.4}"),
        None => println!("no prediction"),
    }
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let text = fs::read(&a.input)?;
    let mut config = EngineConfig::new(&file_stem(&a.input));
    config.transition_steps = a.steps;
    config.situations = None;
    let engine = csmhr_core::build(config, std::str::from_utf8(&text)?, None)?;
    let r = CompressionReport::compute(&text, &persist::save(engine.domain())?);
    if a.csv {
        print!("{}", r.to_csv());
    } else {
        print!("{}", r.to_table());
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let mut header: Vec<String> = ["records", "persons"]
        .into_iter()
        .chain(PHASE_COLUMNS)
        .map(String::from)
        .collect();
    header.push("model_bytes".into());
    let mut rows = Vec::new();
    for &n in &a.records {
        for &persons in &a.persons {
            let cfg = ElevatorConfig {
                record_count: n,
                person_count: persons,
                seed: a.seed,
                ..ElevatorConfig::default()
            };
            let started = Instant::now();
            let text = elevator_text(&cfg)?;
            let mut config = EngineConfig::new("elevator");
            config.transition_steps = a.steps;
            let engine = csmhr_core::build(config, &text, None)?;
            info!("{n} records, {persons} persons in {:?}", started.elapsed());
            let files = match engine.situations() {
                Some(s) => persist::save_with_situations(engine.domain(), s)?,
                None => persist::save(engine.domain())?,
            };
            let mut row = vec![n.to_string(), persons.to_string()];
            row.extend(timing_cells(&engine.timings()));
            row.push(files.total_len().to_string());
            rows.push(row);
        }
    }
    print!("{}", delimited(&header, &rows, a.delimiter));
    Ok(())
}
