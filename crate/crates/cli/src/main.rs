use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fdchange::config::Config;
use fdchange::eval::{synth_dataset, SynthSpec};
use fdchange::imaging::{CellGrid, ImageReader};
use fdchange::pipeline::{self, Artifacts, EvalMethod, Method, QueryFiles, STANDARD_METHODS};
use fdchange::Error;

#[derive(Parser)]
#[command(name = "fdchange", version, about = "Image change detection from localization inconsistency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Index a directory of map images.
    Build(BuildArgs),
    /// Localize one query and compute its change maps.
    Detect(DetectArgs),
    /// Score methods on an annotated dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set y=5`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> fdchange::Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {o:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Photometric noise amplitude in grey levels.
    #[arg(long)]
    noise: Option<u8>,
}

#[derive(Args)]
struct BuildArgs {
    /// Directory of map images.
    #[arg(long)]
    map: PathBuf,
    /// Artifact output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// Ignore mask: non-zero pixels are excluded.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Channels to compute, e.g. `FD+AD+PC`.
    #[arg(long, default_value = "FD")]
    methods: String,
    /// Where to write rasters and cell grids.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    artifacts: PathBuf,
    /// Comma-separated methods; ORACLE scores the ground truth itself.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Comma-separated X budgets in percent.
    #[arg(long = "x", value_delimiter = ',')]
    x_values: Vec<f64>,
    /// Also write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::UnknownTemplateSet(_) => 2,
        Error::Unavailable(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Build(a) => build(a),
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn print_json(v: &serde_json::Value) -> fdchange::Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn synth(a: SynthArgs) -> fdchange::Result<()> {
    let mut spec = SynthSpec::default();
    if let Some(v) = a.scenes {
        spec.scenes = v;
    }
    if let Some(v) = a.queries {
        spec.queries = v;
    }
    if let Some(v) = a.width {
        spec.width = v;
    }
    if let Some(v) = a.height {
        spec.height = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    let ds = synth_dataset(&spec, a.seed)?;
    pipeline::write_dataset(&ds, &a.out)?;
    eprintln!(
        "wrote {} map images and {} queries to {}",
        ds.map.len(),
        ds.queries.len(),
        a.out.display()
    );
    Ok(())
}

fn build(a: BuildArgs) -> fdchange::Result<()> {
    let cfg = a.config.resolve()?;
    eprint!("{}", cfg.effective());
    let manifest = pipeline::build(&a.map, &a.out, &cfg)?;
    eprintln!(
        "indexed {} images into {} places at {} ({})",
        manifest.images.len(),
        manifest.places,
        a.out.display(),
        if fdchange::is_parallel() { "parallel" } else { "sequential" }
    );
    print_json(&serde_json::to_value(&manifest).map_err(|e| Error::Format(e.to_string()))?)
}

fn grid_json(g: &CellGrid) -> serde_json::Value {
    json!({ "cols": g.cols(), "rows": g.rows(), "cell_size": g.cell_size(), "values": g.values() })
}

fn detect(a: DetectArgs) -> fdchange::Result<()> {
    let method: Method = a.methods.parse()?;
    let arts = Artifacts::open(&a.artifacts)?;
    let reader = ImageReader::new();
    let id = a.query.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let q = QueryFiles {
        id,
        image: a.query.clone(),
        proposals: a.proposals.clone().unwrap_or_default(),
        mask: a.mask.clone().unwrap_or_default(),
    };
    let (img, props, mask) = pipeline::load_query(&q, &reader)?;
    let det = arts.detect(&img, &props, mask.as_ref(), &method.0, &reader)?;

    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        let file = |name: String| -> PathBuf { out.join(name) };
        for (c, m) in &det.maps {
            let stem = c.name().to_ascii_lowercase();
            m.save(file(format!("{stem}.locmap")))?;
            m.preview().save_png(file(format!("{stem}.png")))?;
            outputs.push(format!("{stem}.locmap"));
        }
        let cells: serde_json::Map<String, serde_json::Value> =
            det.cells.iter().map(|(c, g)| (c.name().to_string(), grid_json(g))).collect();
        let grids = json!({ "channels": cells, "fused": det.fused.as_ref().map(grid_json) });
        write_json(&file("cells.json".into()), &grids)?;
        outputs.push("cells.json".into());
    }
    eprintln!(
        "{}: localized to map image {} ({})",
        q.id,
        det.localized,
        arts.map_stem(det.localized).unwrap_or_default()
    );
    print_json(&json!({
        "query": q.id,
        "methods": method.to_string(),
        "localized": det.localized,
        "localized_file": arts.map_stem(det.localized),
        "strong": det.strong.to_json(),
        "outputs": outputs,
    }))
}

fn write_json(path: &Path, v: &serde_json::Value) -> fdchange::Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, s + "\n")?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> fdchange::Result<()> {
    let names: Vec<String> = if a.methods.is_empty() {
        STANDARD_METHODS.iter().map(|s| s.to_string()).collect()
    } else {
        a.methods
    };
    let methods: Vec<EvalMethod> = names.iter().map(|s| s.parse()).collect::<fdchange::Result<_>>()?;
    let arts = Artifacts::open(&a.artifacts)?;
    let xs = if a.x_values.is_empty() { arts.config.x_values.clone() } else { a.x_values };
    let report = pipeline::evaluate(&a.dataset, &arts, &methods, &xs)?;
    print!("{}", report.table());
    if let Some(p) = &a.json {
        write_json(p, &serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?)?;
    }
    Ok(())
}
