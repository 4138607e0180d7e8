//! Subcommands of the `regpipe` tool.
//!
//! Each command returns an [`ExitCode`]-compatible status: 0 on success,
//! 2 when an alignment ran but failed, 1 on errors.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use regpipe::config::PipelineConfig;
use regpipe::evaluation::{evaluate_spheres, parse_spheres, BenchmarkReport, BenchmarkRun, CheckSphere, SphereAccuracy};
use regpipe::io::{self, CloudFormat};
use regpipe::pipeline::{self, coarse_register, PreparedCloud, StageTimings};
use regpipe::report::{RunReport, RunStatus};
use regpipe::synth::{self, GroundTruth, SceneSpec, Viewpoint};
use regpipe::{apply_transform, Error, PointCloud, Result, Stage};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FAILED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "regpipe", version, about = "Coarse co-registration of aerial and ground point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register one cloud onto another and evaluate the result.
    Register(RegisterArgs),
    /// Run a parameter grid over one cloud pair.
    Grid(GridArgs),
    /// Detect keypoints.
    Detect(DetectArgs),
    /// Describe keypoints read from a keypoint CSV.
    Describe(DescribeArgs),
    /// Simplify a cloud through its range image.
    Rangeimage(RangeImageArgs),
    /// Generate a synthetic aerial/ground cloud pair with a planted pose.
    Synth(SynthArgs),
    /// Cloud-to-cloud accuracy in check spheres.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Configuration file of `key=value` lines.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set detector=ISS`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply(&read_text(path)?)?;
        }
        cfg.apply(&self.overrides.join("\n"))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Fixed cloud.
    pub reference: PathBuf,
    /// Cloud to move onto the reference.
    pub registered: PathBuf,
    /// Output directory; defaults to `output.dir` of the config.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    pub reference: PathBuf,
    pub registered: PathBuf,
    /// Grid file: one `key=v1,v2,...` line per swept key. Defaults to every
    /// detector against every descriptor.
    #[arg(short, long)]
    pub grid: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    pub input: PathBuf,
    /// Keypoint CSV.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    pub input: PathBuf,
    /// Keypoint CSV written by `detect` with the same configuration.
    #[arg(short, long)]
    pub keypoints: PathBuf,
    /// Descriptor CSV.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RangeImageArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    pub input: PathBuf,
    /// Simplified cloud; the extension picks the format.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Optional grayscale debug image.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene file; the default garden when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Planted yaw bound in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub max_yaw: f64,
    /// Planted translation bound in meters.
    #[arg(long, default_value_t = 20.0)]
    pub max_shift: f64,
    /// Writes reference.<fmt>, registered.<fmt>, truth.txt and scene.txt here.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value = "ply")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub reference: PathBuf,
    pub aligned: PathBuf,
    /// Check spheres, `x y z [radius]` per line.
    #[arg(short, long)]
    pub spheres: PathBuf,
    /// Transform applied to `aligned` first.
    #[arg(short, long)]
    pub transform: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 5.0)]
    pub cutoff: f64,
    /// CSV output; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Register(a) => run_register(&a),
        Command::Grid(a) => run_grid(&a),
        Command::Detect(a) => run_detect(&a).map(|_| EXIT_OK),
        Command::Describe(a) => run_describe(&a).map(|_| EXIT_OK),
        Command::Rangeimage(a) => run_rangeimage(&a).map(|_| EXIT_OK),
        Command::Synth(a) => run_synth(&a).map(|_| EXIT_OK),
        Command::Evaluate(a) => run_evaluate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            EXIT_ERROR
        }
    }
}

fn chain(e: &Error) -> String {
    // stage tags already print their source
    e.to_string()
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))).at(Stage::Io)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    io::read_cloud(path).map_err(|e| e.at(Stage::Io))
}

fn load_spheres(cfg: &PipelineConfig) -> Result<Vec<CheckSphere>> {
    match &cfg.evaluation.spheres {
        None => Ok(Vec::new()),
        Some(path) => parse_spheres(&read_text(path)?, cfg.evaluation.sphere_radius).map_err(|e| e.at(Stage::Io)),
    }
}

/// Registration plus sphere evaluation of the aligned cloud.
fn register_and_evaluate(
    reference: &PointCloud,
    registered: &PointCloud,
    cfg: &PipelineConfig,
    spheres: &[CheckSphere],
) -> Result<(pipeline::RegistrationOutput, Vec<SphereAccuracy>)> {
    let out = coarse_register(reference, registered, cfg)?;
    let accuracy = evaluate_aligned(reference, registered, &out, cfg, spheres)?;
    Ok((out, accuracy))
}

fn evaluate_aligned(
    reference: &PointCloud,
    registered: &PointCloud,
    out: &pipeline::RegistrationOutput,
    cfg: &PipelineConfig,
    spheres: &[CheckSphere],
) -> Result<Vec<SphereAccuracy>> {
    if spheres.is_empty() {
        return Ok(Vec::new());
    }
    let aligned = apply_transform(registered, &out.alignment.transform);
    evaluate_spheres(reference, &aligned, spheres, cfg.evaluation.max_match_distance).map_err(|e| e.at(Stage::Evaluation))
}

pub fn run_register(args: &RegisterArgs) -> Result<u8> {
    let cfg = args.config.load()?;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let report_path = out_dir.join("report.json");
    let inputs = (|| Ok((load_cloud(&args.reference)?, load_cloud(&args.registered)?, load_spheres(&cfg)?)))();
    let result = inputs.and_then(|(reference, registered, spheres)| {
        register_and_evaluate(&reference, &registered, &cfg, &spheres)
    });
    let (out, accuracy) = match result {
        Ok(r) => r,
        Err(e) => {
            // the report still records what was attempted
            let report = RunReport::from_error(&cfg, &e);
            write_file(&report_path, report.to_json())?;
            if report.status != RunStatus::Failed {
                return Err(e);
            }
            eprintln!("alignment failed: {e}");
            let row = BenchmarkRun::from_error(cfg.detector.name(), cfg.descriptor.name(), "", e.to_string());
            let table = BenchmarkReport::new(vec![row]);
            write_file(out_dir.join("timing.csv"), table.timing_csv())?;
            write_file(out_dir.join("accuracy.csv"), table.accuracy_csv())?;
            return Ok(EXIT_FAILED);
        }
    };
    let report = RunReport::from_run(&cfg, &out, accuracy.clone());
    write_file(&report_path, report.to_json())?;
    write_file(out_dir.join("transform.txt"), io::transform_text(&out.alignment.transform))?;
    let time = if cfg.include_timings { out.timings.alignment } else { 0.0 };
    let row = BenchmarkRun::from_alignment(
        cfg.detector.name(),
        cfg.descriptor.name(),
        "",
        (out.pref_keypoints, out.preg_keypoints),
        &out.alignment,
        time,
        accuracy,
    );
    let table = BenchmarkReport::new(vec![row]);
    write_file(out_dir.join("timing.csv"), table.timing_csv())?;
    write_file(out_dir.join("accuracy.csv"), table.accuracy_csv())?;
    Ok(match report.status {
        RunStatus::Ok => EXIT_OK,
        _ => EXIT_FAILED,
    })
}

/// A swept key and its values, in file order.
pub type Grid = Vec<(String, Vec<String>)>;

pub fn default_grid() -> Grid {
    vec![
        ("detector".into(), ["HARRIS", "ISS", "SIFT", "NARF"].map(String::from).to_vec()),
        ("descriptor".into(), ["FPFH", "SPIN", "NARF"].map(String::from).to_vec()),
    ]
}

/// `key=v1,v2,...` lines; `#` starts a comment. Repeated keys are an error.
pub fn parse_grid(text: &str) -> Result<Grid> {
    let mut grid: Grid = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Config { line: n + 1, message };
        let (key, values) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=v1,v2,..., got `{line}`")))?;
        let key = key.trim();
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(err(format!("no values for `{key}`")));
        }
        if grid.iter().any(|(k, _)| k == key) {
            return Err(err(format!("`{key}` listed twice")));
        }
        grid.push((key.to_string(), values));
    }
    if grid.is_empty() {
        return Err(Error::Config { line: 0, message: "empty grid".into() });
    }
    Ok(grid)
}

/// Cartesian product with the first key varying slowest.
pub fn grid_combinations(grid: &Grid) -> Vec<Vec<(String, String)>> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
}

type Prepared = (PreparedCloud, PreparedCloud, StageTimings);

/// The prepared pair of the previous combination. Grid order varies the
/// descriptor fastest by default, so one slot catches most reuse.
#[derive(Default)]
struct PrepCache {
    key: Option<Vec<(&'static str, String)>>,
    value: Option<std::result::Result<Prepared, String>>,
}

impl PrepCache {
    fn get(&mut self, cfg: &PipelineConfig, clouds: &(PointCloud, PointCloud)) -> &std::result::Result<Prepared, String> {
        let key = pipeline::preparation_keys(cfg);
        if self.key.as_ref() != Some(&key) || self.value.is_none() {
            let built = catch_unwind(AssertUnwindSafe(|| {
                let mut timings = StageTimings::default();
                let pref = pipeline::prepare(&clouds.0, cfg, &mut timings)?;
                let preg = pipeline::prepare(&clouds.1, cfg, &mut timings)?;
                Ok((pref, preg, timings))
            }));
            self.value = Some(match built {
                Ok(Ok(p)) => Ok(p),
                Ok(Err(e)) => Err(chain(&e)),
                Err(_) => Err("panicked".into()),
            });
            self.key = Some(key);
        }
        self.value.as_ref().expect("filled above")
    }
}

/// One grid row. Errors and panics both become failed rows.
fn grid_row(
    base: &PipelineConfig,
    combo: &[(String, String)],
    clouds: &(PointCloud, PointCloud),
    spheres: &[CheckSphere],
    cache: &mut PrepCache,
) -> BenchmarkRun {
    let mut cfg = base.clone();
    let mut params = Vec::new();
    let mut bad = None;
    for (k, v) in combo {
        if let Err(m) = cfg.set(k, v) {
            bad.get_or_insert(format!("{k}: {m}"));
        }
        if k != "detector" && k != "descriptor" {
            params.push(format!("{k}={v}"));
        }
    }
    let lookup = |key: &str, fallback: &str| {
        combo.iter().find(|(k, _)| k == key).map_or(fallback.to_string(), |(_, v)| v.clone())
    };
    let detector = lookup("detector", cfg.detector.name());
    let descriptor = lookup("descriptor", cfg.descriptor.name());
    let params = params.join(";");
    let failed = |e: String| BenchmarkRun::from_error(&detector, &descriptor, &params, e);
    if let Some(e) = bad {
        return failed(e);
    }
    let (pref, preg, prep_timings) = match cache.get(&cfg, clouds) {
        Ok(p) => p,
        Err(e) => return failed(e.clone()),
    };
    let run = catch_unwind(AssertUnwindSafe(|| {
        let out = pipeline::align_prepared(pref, preg, &cfg, *prep_timings)?;
        let accuracy = evaluate_aligned(&clouds.0, &clouds.1, &out, &cfg, spheres)?;
        Ok((out, accuracy))
    }));
    match run {
        Ok(Ok((out, accuracy))) => BenchmarkRun::from_alignment(
            &detector,
            &descriptor,
            &params,
            (out.pref_keypoints, out.preg_keypoints),
            &out.alignment,
            if cfg.include_timings { out.timings.total() } else { 0.0 },
            accuracy,
        ),
        Ok(Err(e)) => failed(chain(&e)),
        Err(_) => failed("panicked".into()),
    }
}

pub fn run_grid(args: &GridArgs) -> Result<u8> {
    let cfg = args.config.load()?;
    let grid = match &args.grid {
        Some(path) => parse_grid(&read_text(path)?)?,
        None => default_grid(),
    };
    let clouds = (load_cloud(&args.reference)?, load_cloud(&args.registered)?);
    let spheres = load_spheres(&cfg)?;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    // combinations run one after another; each is parallel inside
    let mut cache = PrepCache::default();
    let runs: Vec<BenchmarkRun> = grid_combinations(&grid)
        .iter()
        .map(|combo| {
            let row = grid_row(&cfg, combo, &clouds, &spheres, &mut cache);
            if let Some(e) = &row.error {
                log::warn!("{} / {}: {e}", row.detector, row.descriptor);
            }
            row
        })
        .collect();
    let table = BenchmarkReport::new(runs);
    write_file(out_dir.join("grid_timing.csv"), table.timing_csv())?;
    write_file(out_dir.join("grid_accuracy.csv"), table.accuracy_csv())?;
    write_file(
        out_dir.join("grid.json"),
        serde_json::to_string_pretty(&table).expect("table serializes") + "\n",
    )?;
    print!("{}", table.timing_csv());
    Ok(EXIT_OK)
}

pub fn run_detect(args: &DetectArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let cloud = load_cloud(&args.input)?;
    let prepared = pipeline::prepare(&cloud, &cfg, &mut StageTimings::default())?;
    write_file(&args.output, io::keypoints_csv(&prepared.keypoints))
}

pub fn run_describe(args: &DescribeArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let cloud = load_cloud(&args.input)?;
    let keypoints = io::parse_keypoints_csv(&read_text(&args.keypoints)?).map_err(|e| e.at(Stage::Io))?;
    let mut prepared = pipeline::prepare(&cloud, &cfg, &mut StageTimings::default())?;
    if let Some(bad) = keypoints.iter().find_map(|k| k.source_index.filter(|&i| i >= prepared.cloud.len())) {
        return Err(Error::InvalidParameter(format!(
            "keypoint source index {bad} outside the simplified cloud; detect with the same configuration"
        ))
        .at(Stage::Description));
    }
    prepared.keypoints = keypoints;
    let features = pipeline::describe(&prepared, &cfg).map_err(|e| e.at(Stage::Description))?;
    write_file(&args.output, io::descriptors_csv(&features))
}

pub fn run_rangeimage(args: &RangeImageArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let cloud = load_cloud(&args.input)?;
    let ri = &cfg.range_image;
    let image = (|| {
        let camera = regpipe::range_image::camera_for(&cloud, ri.height_factor, ri.resolution_deg)?;
        regpipe::range_image::project(&cloud, &camera)
    })()
    .map_err(|e| e.at(Stage::RangeImage))?;
    let simplified = regpipe::range_image::to_point_cloud(&image);
    log::info!("{} points simplified to {}", cloud.len(), simplified.len());
    write_file(&args.output, io::encode_cloud(&simplified, CloudFormat::from_path(&args.output)))?;
    if let Some(pgm) = &args.pgm {
        write_file(pgm, io::range_image_pgm(&image))?;
    }
    Ok(())
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => read_text(path)?.parse::<SceneSpec>()?,
        None => synth::default_scene(args.seed),
    };
    let format: CloudFormat = args.format.parse()?;
    let truth = GroundTruth {
        transform: synth::random_pose(args.seed, args.max_yaw, args.max_shift),
        noise_sigma: args.noise,
        seed: args.seed,
    };
    let reference = synth::generate_scene(&spec, Viewpoint::Aerial)?;
    let ground = synth::generate_scene(&spec, Viewpoint::Ground)?;
    let registered = synth::perturb(&ground, &truth, args.dropout)?;
    let ext = match format {
        CloudFormat::Xyz => "xyz",
        _ => "ply",
    };
    write_file(args.out.join(format!("reference.{ext}")), io::encode_cloud(&reference, format))?;
    write_file(args.out.join(format!("registered.{ext}")), io::encode_cloud(&registered, format))?;
    // registration maps the registered cloud back, i.e. the inverse pose
    write_file(args.out.join("truth.txt"), io::transform_text(&truth.transform.inverse()))?;
    write_file(args.out.join("scene.txt"), spec.to_string())
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<u8> {
    let reference = load_cloud(&args.reference)?;
    let mut aligned = load_cloud(&args.aligned)?;
    if let Some(path) = &args.transform {
        let t = io::parse_transform(&read_text(path)?).map_err(|e| e.at(Stage::Io))?;
        aligned = apply_transform(&aligned, &t);
    }
    let spheres = parse_spheres(&read_text(&args.spheres)?, args.radius).map_err(|e| e.at(Stage::Io))?;
    let acc = evaluate_spheres(&reference, &aligned, &spheres, args.cutoff).map_err(|e| e.at(Stage::Evaluation))?;
    let csv = accuracy_table(&acc);
    match &args.output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(if acc.iter().all(|a| a.failed) { EXIT_FAILED } else { EXIT_OK })
}

/// One row per sphere, `F` in the distance columns of failed spheres.
pub fn accuracy_table(acc: &[SphereAccuracy]) -> String {
    let mut s = String::from("sphere,x,y,z,radius,matched,mean_m,sd_m\n");
    for (i, a) in acc.iter().enumerate() {
        let c = a.sphere.center;
        let (mean, sd) = if a.failed {
            (regpipe::evaluation::FAILED.to_string(), regpipe::evaluation::FAILED.to_string())
        } else {
            (format!("{:.6}", a.mean_distance), format!("{:.6}", a.sd_distance))
        };
        let _ = writeln!(s, "{},{},{},{},{},{},{mean},{sd}", i + 1, c[0], c[1], c[2], a.sphere.radius, a.matched_count);
    }
    s
}

/// Builds the global rayon pool from `REGPIPE_THREADS` (unset or 0: all cores).
pub fn init_threads() {
    let n = std::env::var("REGPIPE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    #[cfg(feature = "parallel")]
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without the parallel feature; REGPIPE_THREADS={n} ignored");
    }
}
