use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use relscene::guidance::{
    edge_map, export_scene, DetectionLine, ExportFormat, DEFAULT_HIGH_THRESHOLD, DEFAULT_LOW_THRESHOLD,
};
use relscene::imageio::{self, DepthConvention};
use relscene::pipeline::{self, ItemStatus, ManifestEntry, PipelineConfig};
use relscene::prompt::parse_prompt;
use relscene::revqa::{self, QaItem, SceneFacts, TemplateSet};
use relscene::rng::derive_seed;
use relscene::visor::{self, PromptGroup};
use relscene::{AssetCatalog, SceneGraph};

#[derive(Parser)]
#[command(name = "relscene", version, about = "Spatial-relation scene compiler")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for batch rendering.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Asset manifest replacing the built-in catalog.
    #[arg(long, global = true)]
    assets: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render prompts to rgb/depth/mask PNGs, a scene file and detections.
    Render {
        #[arg(long, required = true)]
        prompt: Vec<String>,
        #[arg(long)]
        bg: Option<String>,
        #[arg(long)]
        size: Option<u32>,
        /// Images per prompt.
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        no_diversify: bool,
    },
    /// Render every line of a prompt file.
    Batch {
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        bg: Option<String>,
        #[arg(long)]
        size: Option<u32>,
        #[arg(long)]
        images: Option<usize>,
    },
    /// Canny edge maps; writes `edges.png` next to each input unless `--output` is given.
    Edges {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        low: Option<f32>,
        #[arg(long)]
        high: Option<f32>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Question items for scene files or batch directories.
    Questions {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score model responses against question items.
    Score {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Spatial fidelity metrics for a batch.
    Visor {
        /// Batch manifest; per-image detections and depth maps are read from its tree.
        #[arg(long)]
        manifest: PathBuf,
        /// Detection files replacing the per-image ground truth.
        #[arg(long)]
        detections: Vec<PathBuf>,
        /// Used for depth maps that carry no convention header.
        #[arg(long)]
        depth_convention: Option<DepthConvention>,
        #[arg(long)]
        min_confidence: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Export a scene as a build script or a normalized scene file.
    Export {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "build-script")]
        format: ExportFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
    assets: Option<PathBuf>,
    render: PipelineConfig,
    edges: EdgesConfig,
    visor: VisorConfig,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EdgesConfig {
    low: f32,
    high: f32,
}

impl Default for EdgesConfig {
    fn default() -> Self {
        EdgesConfig { low: DEFAULT_LOW_THRESHOLD, high: DEFAULT_HIGH_THRESHOLD }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VisorConfig {
    min_confidence: f64,
    depth_convention: DepthConvention,
}

impl Default for VisorConfig {
    fn default() -> Self {
        VisorConfig { min_confidence: 0.0, depth_convention: DepthConvention::Metric }
    }
}

/// A failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Failure {
        Failure { code: 1, kind: "usage", message: message.to_string() }
    }

    fn data(message: impl ToString) -> Failure {
        Failure { code: 2, kind: "data", message: message.to_string() }
    }

    fn internal(message: impl ToString) -> Failure {
        Failure { code: 3, kind: "internal", message: message.to_string() }
    }

    fn report(&self) {
        let rec = serde_json::json!({ "error": self.kind, "message": self.message, "exit_code": self.code });
        eprintln!("{rec}");
    }
}

impl From<pipeline::PipelineError> for Failure {
    fn from(e: pipeline::PipelineError) -> Self {
        match e {
            pipeline::PipelineError::Pool(_) => Failure::internal(e),
            pipeline::PipelineError::Io { .. } => Failure::internal(e),
            _ => Failure::data(e),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::internal(format!("{}: {e}", parent.display())))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(Failure::internal)?;
        w.write_all(b"\n").map_err(Failure::internal)?;
    }
    w.flush().map_err(Failure::internal)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Failure::data(format!("{}:{}: {e}", path.display(), n + 1))))
        .collect()
}

struct Context {
    seed: u64,
    workers: usize,
    out_dir: PathBuf,
    catalog: AssetCatalog,
    file: FileConfig,
}

impl Context {
    fn new(global: &Global) -> Result<Context> {
        let file: FileConfig = match &global.config {
            Some(p) => toml::from_str(&read(p)?).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
            None => FileConfig::default(),
        };
        let assets = global.assets.clone().or_else(|| file.assets.clone());
        let catalog = match assets {
            Some(p) => AssetCatalog::load_manifest(&p).map_err(Failure::data)?,
            None => AssetCatalog::default_catalog(),
        };
        let default_workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Ok(Context {
            seed: global.seed.or(file.seed).unwrap_or(0),
            workers: global.workers.or(file.workers).unwrap_or(default_workers),
            out_dir: global.out_dir.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| "out".into()),
            catalog,
            file,
        })
    }

    fn pipeline(&self, bg: &Option<String>, size: Option<u32>, images: Option<usize>) -> PipelineConfig {
        let mut cfg = self.file.render.clone();
        if let Some(bg) = bg {
            cfg.background = bg.clone();
        }
        if let Some(s) = size {
            cfg.width = s;
            cfg.height = s;
        }
        if let Some(n) = images {
            cfg.images_per_prompt = n;
        }
        cfg
    }
}

fn report_batch(summary: &pipeline::BatchSummary) -> Result<()> {
    for e in summary.manifest.iter().filter(|e| e.status == ItemStatus::Failed) {
        let rec = serde_json::json!({
            "error": "item",
            "image_id": e.image_id,
            "prompt": e.prompt,
            "message": e.error,
        });
        eprintln!("{rec}");
    }
    println!("{} items, {} failed", summary.items, summary.failed);
    if summary.failed > 0 {
        Err(Failure::data(format!("{} of {} items failed", summary.failed, summary.items)))
    } else {
        Ok(())
    }
}

fn cmd_render(ctx: &Context, prompts: &[String], cfg: PipelineConfig) -> Result<()> {
    if prompts.len() == 1 && cfg.images_per_prompt == 1 {
        let prompt = &prompts[0];
        let seed = pipeline::image_seed(ctx.seed, prompt, 0);
        let generated = pipeline::generate(prompt, seed, &cfg, &ctx.catalog)?;
        let files = pipeline::write_outputs(&ctx.out_dir, "p00000-0", &generated)?;
        let entry = ManifestEntry {
            image_id: "p00000-0".into(),
            prompt_id: "p00000".into(),
            prompt: prompt.clone(),
            image_index: 0,
            seed,
            dir: ".".into(),
            status: ItemStatus::Ok,
            error: None,
        };
        write_jsonl(&ctx.out_dir.join(pipeline::MANIFEST_FILE), &[entry])?;
        let cfg_text = toml::to_string(&cfg).map_err(Failure::internal)?;
        fs::write(ctx.out_dir.join(pipeline::CONFIG_FILE), format!("# seed = {}\n{cfg_text}", ctx.seed))
            .map_err(Failure::internal)?;
        for f in files {
            println!("{}", f.display());
        }
        return Ok(());
    }
    let summary = pipeline::run_batch(prompts, ctx.seed, &cfg, &ctx.catalog, &ctx.out_dir, ctx.workers)?;
    report_batch(&summary)
}

fn cmd_batch(ctx: &Context, prompts_file: &Path, cfg: PipelineConfig) -> Result<()> {
    let prompts: Vec<String> = read(prompts_file)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if prompts.is_empty() {
        return Err(Failure::data(format!("{}: no prompts", prompts_file.display())));
    }
    let summary = pipeline::run_batch(&prompts, ctx.seed, &cfg, &ctx.catalog, &ctx.out_dir, ctx.workers)?;
    report_batch(&summary)
}

fn cmd_edges(
    ctx: &Context,
    inputs: &[PathBuf],
    low: Option<f32>,
    high: Option<f32>,
    output: &Option<PathBuf>,
) -> Result<()> {
    if output.is_some() && inputs.len() > 1 {
        return Err(Failure::usage("--output needs exactly one input"));
    }
    let (low, high) = (low.unwrap_or(ctx.file.edges.low), high.unwrap_or(ctx.file.edges.high));
    if !(0.0 <= low && low < high && high <= 255.0) {
        return Err(Failure::usage(format!("thresholds must satisfy 0 <= low < high <= 255, got {low} and {high}")));
    }
    for input in inputs {
        let file = fs::File::open(input).map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
        let (w, h, rgb) = imageio::decode_rgb8(file).map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
        let edges = edge_map(&rgb, w, h, low, high).map_err(Failure::data)?;
        let out = output.clone().unwrap_or_else(|| input.with_file_name("edges.png"));
        imageio::encode_binary(create(&out)?, w, h, &edges.data).map_err(Failure::internal)?;
        println!("{}", out.display());
    }
    Ok(())
}

/// `(image_id, scene path)` for every scene named by the inputs.
fn collect_scenes(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for input in inputs {
        let manifest = if input.is_dir() { input.join(pipeline::MANIFEST_FILE) } else { input.clone() };
        if manifest.file_name().and_then(|n| n.to_str()) == Some(pipeline::MANIFEST_FILE) {
            let root = manifest.parent().unwrap_or(Path::new("."));
            for e in read_jsonl::<ManifestEntry>(&manifest)? {
                if e.status == ItemStatus::Ok {
                    out.push((e.image_id, root.join(&e.dir).join(pipeline::SCENE_FILE)));
                }
            }
        } else {
            let id = input.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str()).unwrap_or("scene").to_string();
            out.push((id, input.clone()));
        }
    }
    Ok(out)
}

fn cmd_questions(ctx: &Context, inputs: &[PathBuf], output: &Option<PathBuf>) -> Result<()> {
    let templates = TemplateSet::shipped();
    let mut items: Vec<QaItem> = Vec::new();
    for (image_id, path) in collect_scenes(inputs)? {
        let scene =
            SceneGraph::from_json(&read(&path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let facts = SceneFacts::from_scene(&scene);
        let seed = derive_seed(ctx.seed, &image_id);
        match revqa::generate_questions(&facts, &ctx.catalog, &templates, &image_id, seed) {
            Ok(mut qs) => items.append(&mut qs),
            Err(e) => {
                eprintln!("{}", serde_json::json!({ "error": "item", "image_id": image_id, "message": e.to_string() }))
            }
        }
    }
    let out = output.clone().unwrap_or_else(|| ctx.out_dir.join("questions.jsonl"));
    write_jsonl(&out, &items)?;
    println!("{} items -> {}", items.len(), out.display());
    Ok(())
}

fn cmd_score(items: &Path, responses: &Path, json: bool) -> Result<()> {
    let items: Vec<QaItem> = read_jsonl(items)?;
    let responses = revqa::parse_responses(&read(responses)?).map_err(Failure::data)?;
    let report = revqa::score_responses(&items, &responses).map_err(Failure::data)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(Failure::internal)?);
    } else {
        print!("{}", report.to_table());
        if !report.unparseable.is_empty() {
            println!("unparseable: {}", report.unparseable.join(", "));
        }
    }
    Ok(())
}

fn cmd_visor(
    ctx: &Context,
    manifest: &Path,
    detection_files: &[PathBuf],
    convention: Option<DepthConvention>,
    min_confidence: Option<f64>,
    json: bool,
) -> Result<()> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    let entries: Vec<ManifestEntry> = read_jsonl(manifest)?;
    let fallback = convention.unwrap_or(ctx.file.visor.depth_convention);
    let min_confidence = min_confidence.unwrap_or(ctx.file.visor.min_confidence);

    let mut lines: Vec<DetectionLine> = Vec::new();
    if detection_files.is_empty() {
        for e in entries.iter().filter(|e| e.status == ItemStatus::Ok) {
            lines.extend(read_jsonl::<DetectionLine>(&root.join(&e.dir).join(pipeline::DETECTIONS_FILE))?);
        }
    } else {
        for f in detection_files {
            lines.extend(read_jsonl::<DetectionLine>(f)?);
        }
    }
    let records: BTreeMap<String, visor::DetectionRecord> =
        visor::group_detections(&lines, min_confidence).into_iter().map(|r| (r.image_id.clone(), r)).collect();

    // prompt id -> (triples, judgments by image index)
    type Pending = (Vec<relscene::Triple>, Vec<(usize, visor::Judgment)>);
    let mut groups: BTreeMap<String, Pending> = BTreeMap::new();
    for e in &entries {
        let triples = parse_prompt(&e.prompt, &ctx.catalog)
            .map(|s| s.triples)
            .map_err(|err| Failure::data(format!("{}: {err}", e.image_id)))?;
        let judgment = match records.get(&e.image_id) {
            None => visor::Judgment::default(),
            Some(record) => {
                let needs_depth = triples.iter().any(|t| t.relation.axis == relscene::Axis::Depth);
                let depth = if needs_depth {
                    let path = root.join(&e.dir).join(pipeline::DEPTH_FILE);
                    let file =
                        fs::File::open(&path).map_err(|err| Failure::data(format!("{}: {err}", path.display())))?;
                    Some(
                        imageio::decode_depth16(file)
                            .map_err(|err| Failure::data(format!("{}: {err}", path.display())))?,
                    )
                } else {
                    None
                };
                let conv = depth.as_ref().and_then(|d| d.convention).unwrap_or(fallback);
                visor::judge_image(record, &triples, depth.as_ref(), conv)
                    .map_err(|err| Failure::data(format!("{}: {err}", e.image_id)))?
            }
        };
        let g = groups.entry(e.prompt_id.clone()).or_insert_with(|| (triples, Vec::new()));
        g.1.push((e.image_index, judgment));
    }
    let groups: Vec<PromptGroup> = groups
        .into_iter()
        .map(|(prompt_id, (triples, mut js))| {
            js.sort_by_key(|(k, _)| *k);
            PromptGroup { prompt_id, triples, judgments: js.into_iter().map(|(_, j)| j).collect() }
        })
        .collect();
    let report = visor::aggregate(&groups).map_err(Failure::data)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(Failure::internal)?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

fn cmd_export(scene: &Path, format: ExportFormat, output: &Option<PathBuf>) -> Result<()> {
    let scene = SceneGraph::from_json(&read(scene)?).map_err(|e| Failure::data(format!("{}: {e}", scene.display())))?;
    let text = export_scene(&scene, format);
    match output {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).map_err(Failure::internal)?;
            w.flush().map_err(Failure::internal)?;
            println!("{}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Render { prompt, bg, size, images, no_diversify } => {
            let mut cfg = ctx.pipeline(bg, *size, Some(images.unwrap_or(1)));
            if *no_diversify {
                cfg.diversify = false;
            }
            cmd_render(&ctx, prompt, cfg)
        }
        Command::Batch { prompts, bg, size, images } => cmd_batch(&ctx, prompts, ctx.pipeline(bg, *size, *images)),
        Command::Edges { inputs, low, high, output } => cmd_edges(&ctx, inputs, *low, *high, output),
        Command::Questions { inputs, output } => cmd_questions(&ctx, inputs, output),
        Command::Score { items, responses, json } => cmd_score(items, responses, *json),
        Command::Visor { manifest, detections, depth_convention, min_confidence, json } => {
            cmd_visor(&ctx, manifest, detections, *depth_convention, *min_confidence, *json)
        }
        Command::Export { scene, format, output } => cmd_export(scene, *format, output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            Failure::usage(e.kind()).report();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code)
        }
    }
}
