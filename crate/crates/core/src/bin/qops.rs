use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{DynamicImage, RgbImage};

use qops::config::CliConfig;
use qops::pipeline::{self, BatchOptions, BenchOptions};
use qops::qimage::{self, GamutSpace};
use qops::stain::{self, MacenkoParams, StainBasis};
use qops::workflows::{self, Channel, ContrastParams, DecolorP2bParams, GrayEncoding, Merge, RestainParams};
use qops::{Direction, DirectionSpec, Normalize, QopsError, Sign, SplitSpec};

#[derive(Parser)]
#[command(name = "qops", version, about = "Quaternion split transforms for color and histology images")]
struct Cli {
    /// Preset file with `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true, env = "QOPS_THREADS")]
    threads: Option<usize>,
    /// Log more (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-colorize with one split half
    Recolor(RecolorArgs),
    /// Convert to 8-bit grayscale
    Decolor(DecolorArgs),
    /// Contrast enhancement
    Contrast(ContrastArgs),
    /// Re-stain a histology image in chosen colors
    Restain(RestainArgs),
    /// Separate stains into grayscale maps
    Stainsep(StainsepArgs),
    /// List the 91 catalog combinations
    Enumerate(EnumerateArgs),
    /// Transform a directory under every combination
    Batch(BatchArgs),
    /// Time the split over shrinking copies of an image
    Bench(BenchArgs),
    /// Export distinct colors as a point cloud
    Gamut(GamutArgs),
}

#[derive(Args)]
struct Io {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

impl From<SignArg> for Sign {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Plus => Sign::Plus,
            SignArg::Minus => Sign::Minus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SignsArg {
    Plus,
    Minus,
    Both,
}

impl SignsArg {
    fn signs(self) -> Vec<Sign> {
        match self {
            SignsArg::Plus => vec![Sign::Plus],
            SignsArg::Minus => vec![Sign::Minus],
            SignsArg::Both => Sign::BOTH.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    PerChannel,
    Joint,
    Truncate,
}

#[derive(Args)]
struct RecolorArgs {
    #[command(flatten)]
    io: Io,
    #[arg(long, value_enum, default_value = "minus")]
    sign: SignArg,
    /// Direction: muN, x,y,z, #RRGGBB or sample:X,Y[:X2,Y2]
    #[arg(long)]
    f: DirectionSpec,
    /// Second direction, defaults to f
    #[arg(long)]
    g: Option<DirectionSpec>,
    /// Use non-catalog directions without normalizing them
    #[arg(long)]
    raw: bool,
    /// Take encoding ranges from this image
    #[arg(long)]
    exemplar: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per-channel")]
    normalize: NormArg,
    #[arg(long)]
    tile_size: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecolorMethod {
    P1,
    P2a,
    P2b,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Anchored,
    MinMax,
}

#[derive(Args)]
struct DecolorArgs {
    #[command(flatten)]
    io: Io,
    #[arg(long, value_enum, default_value = "p1")]
    method: DecolorMethod,
    /// Direction for the custom method
    #[arg(long)]
    f: Option<DirectionSpec>,
    #[arg(long, value_enum, default_value = "anchored")]
    encoding: EncodingArg,
}

#[derive(Args)]
struct ContrastArgs {
    #[command(flatten)]
    io: Io,
    /// natural, ct, or alpha,beta,gamma,delta
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    tile_size: Option<u32>,
}

#[derive(Args)]
struct RestainArgs {
    #[command(flatten)]
    io: Io,
    /// Target colors, one per stain, e.g. "#00FF00" "#FF0000"
    #[arg(long, num_args = 2..=3, required = true)]
    colors: Vec<DirectionSpec>,
    /// Channel carrying each stain, e.g. b,r
    #[arg(long)]
    keep: String,
    /// Histogram stretch limit X
    #[arg(long)]
    x_scale: Option<f64>,
    /// Re-colorization steps for three colors as f:g pairs, e.g. mu10:mu11 mu7:mu8
    #[arg(long, num_args = 2)]
    steps: Option<Vec<String>>,
    /// Combine stain layers by per-pixel maximum instead of bitwise OR
    #[arg(long)]
    max_merge: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Mu7,
    Macenko,
    Manual,
}

#[derive(Args)]
struct StainsepArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// One output per kept channel
    #[arg(short, long, num_args = 1..=3, required = true)]
    output: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "mu7")]
    basis: BasisArg,
    /// Stain vectors for the manual basis
    #[arg(long)]
    s1: Option<DirectionSpec>,
    #[arg(long)]
    s2: Option<DirectionSpec>,
    /// Swap the two stain vectors
    #[arg(long)]
    swap: bool,
    /// Channels to keep, e.g. b,r
    #[arg(long)]
    keep: String,
    /// Re-colorization steps for three stains, e.g. mu3:mu8 mu8:mu10
    #[arg(long, num_args = 2)]
    steps: Option<Vec<String>>,
    /// Re-stain to green and blue before separating
    #[arg(long)]
    via_restain: bool,
    #[arg(long)]
    x_scale: Option<f64>,
    #[arg(long, default_value_t = 0.15)]
    od_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    percentile: f64,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long, value_enum, default_value = "both")]
    sign: SignsArg,
    /// Write here instead of standard output
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    input_dir: PathBuf,
    #[arg(long)]
    exemplar: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    sign: SignsArg,
    /// Share of outputs to delete at random, e.g. 0.5
    #[arg(long, default_value_t = 0.0)]
    delete: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value = "mu7")]
    f: DirectionSpec,
    #[arg(long)]
    g: Option<DirectionSpec>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Rgb,
    Hsv,
}

#[derive(Args)]
struct GamutArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rgb")]
    space: SpaceArg,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Processing(QopsError),
}

impl From<QopsError> for Failure {
    fn from(e: QopsError) -> Self {
        Failure::Processing(e)
    }
}

// Directions come from flags, so a bad one is a usage error.
impl From<qops::DirectionError> for Failure {
    fn from(e: qops::DirectionError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Processing(e.into())
    }
}

type Run<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Writes through a temporary file in the target directory, so a failed run
/// leaves nothing behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Run {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Failure::from(e.error))?;
    Ok(())
}

fn save(path: &Path, image: DynamicImage) -> Run {
    write_atomic(path, &qimage::encode_png(&image)?)
}

fn resolve(spec: &DirectionSpec, image: &RgbImage, normalize: bool) -> Run<Direction> {
    match spec {
        DirectionSpec::Sample(region) => Ok(qimage::sample_direction(image, *region, normalize)?),
        other => Ok(other.resolve(normalize)?),
    }
}

fn parse_steps(steps: &[String]) -> Run<Vec<SplitSpec>> {
    steps
        .iter()
        .map(|s| {
            let (f, g) = s.split_once(':').ok_or_else(|| usage(format!("step {s:?} must look like mu10:mu11")))?;
            let f: DirectionSpec = f.parse().map_err(|e| usage(format!("{e}")))?;
            let g: DirectionSpec = g.parse().map_err(|e| usage(format!("{e}")))?;
            Ok(SplitSpec::new(Sign::Plus, f.resolve(true)?, g.resolve(true)?)?)
        })
        .collect()
}

fn keep_list(s: &str) -> Run<Vec<Channel>> {
    Channel::parse_list(s).map_err(|e| usage(e.to_string()))
}

fn x_scale(flag: Option<f64>, cfg: &CliConfig) -> Run<f64> {
    let x = flag.or(cfg.x_scale).unwrap_or(workflows::DEFAULT_X_SCALE);
    if !(x > 0.0 && x <= 1.0) {
        return Err(usage(format!("--x-scale {x} is outside (0, 1]")));
    }
    Ok(x)
}

fn tile_size(flag: Option<u32>, cfg: &CliConfig) -> Run<Option<u32>> {
    match flag.or(cfg.tile_size) {
        Some(0) => Err(usage("--tile-size must be at least 1")),
        t => Ok(t),
    }
}

fn recolor(a: RecolorArgs, cfg: &CliConfig) -> Run {
    let tiles = tile_size(a.tile_size, cfg)?;
    let image = qimage::load_rgb(&a.io.input)?;
    let f = resolve(&a.f, &image, !a.raw)?;
    let g = match &a.g {
        Some(g) => resolve(g, &image, !a.raw)?,
        None => f,
    };
    let spec = SplitSpec::new(a.sign.into(), f, g)?;
    let normalize = match a.exemplar.as_ref().or(cfg.exemplar.as_ref()) {
        Some(path) => Normalize::Fixed(qimage::exemplar_ranges(&qimage::load_rgb(path)?, &spec)?),
        None => match a.normalize {
            NormArg::PerChannel => Normalize::PerChannel,
            NormArg::Joint => Normalize::Joint,
            NormArg::Truncate => Normalize::Truncate,
        },
    };
    let out = match tiles {
        Some(t) => pipeline::tile_apply(&image, &spec, &normalize, t)?,
        None => workflows::recolorize(&image, &spec, &normalize),
    };
    save(&a.io.output, DynamicImage::ImageRgb8(out))
}

fn decolor(a: DecolorArgs) -> Run {
    let image = qimage::load_rgb(&a.io.input)?;
    let encoding = match a.encoding {
        EncodingArg::Anchored => GrayEncoding::Anchored,
        EncodingArg::MinMax => GrayEncoding::MinMax,
    };
    let f = match (a.method, &a.f) {
        (DecolorMethod::Custom, Some(f)) => resolve(f, &image, true)?,
        (DecolorMethod::Custom, None) => return Err(usage("--method custom needs --f")),
        (_, Some(_)) => return Err(usage("--f is only used with --method custom")),
        (DecolorMethod::P1, None) => Direction::gray_axis(),
        (DecolorMethod::P2a, None) => {
            let [x, y, z] = workflows::P2A_WEIGHTS;
            Direction::unit(x, y, z).map_err(QopsError::from)?
        }
        (DecolorMethod::P2b, None) => {
            let ev = workflows::p2b_encoding(&image, &DecolorP2bParams::default())?;
            log::info!("P2b encoding values {ev:?}");
            if ev.iter().all(|&v| v == 0.0) {
                return Err(QopsError::ZeroEncoding.into());
            }
            Direction::unit(ev[0], ev[1], ev[2]).map_err(QopsError::from)?
        }
    };
    let out = workflows::decolorize(&image, f, encoding)?;
    save(&a.io.output, DynamicImage::ImageLuma8(out))
}

fn contrast(a: ContrastArgs, cfg: &CliConfig) -> Run {
    let tiles = tile_size(a.tile_size, cfg)?;
    let preset = a.preset.as_deref().or(cfg.contrast.as_deref()).unwrap_or("natural");
    let params: ContrastParams = preset.parse().map_err(|e: QopsError| usage(e.to_string()))?;
    let image = qimage::load_rgb(&a.io.input)?;
    let out = match tiles {
        Some(t) => pipeline::tile_apply(&image, &params, &Normalize::PerChannel, t)?,
        None => workflows::contrast_enhance(&image, &params)?,
    };
    save(&a.io.output, DynamicImage::ImageRgb8(out))
}

fn restain(a: RestainArgs, cfg: &CliConfig) -> Run {
    let keep = keep_list(&a.keep)?;
    let x = x_scale(a.x_scale, cfg)?;
    let steps = match (&a.steps, a.colors.len()) {
        (Some(s), 3) => parse_steps(s)?,
        (None, 3) => workflows::default_restain_steps().to_vec(),
        (Some(_), _) => return Err(usage("--steps is only used with three colors")),
        (None, _) => Vec::new(),
    };
    if keep.len() != a.colors.len() {
        return Err(usage(format!("--keep names {} channels for {} colors", keep.len(), a.colors.len())));
    }
    let image = qimage::load_rgb(&a.io.input)?;
    let targets = a
        .colors
        .iter()
        .map(|c| resolve(c, &image, false))
        .collect::<Run<Vec<_>>>()?;
    let params = RestainParams {
        targets,
        keep,
        x_scale: x,
        recolor_steps: steps,
        merge: if a.max_merge { Merge::Max } else { Merge::Or },
    };
    let out = if params.targets.len() == 3 {
        workflows::restain_multi(&image, &params)?
    } else {
        workflows::restain_two(&image, &params)?
    };
    save(&a.io.output, DynamicImage::ImageRgb8(out))
}

fn stainsep(a: StainsepArgs, cfg: &CliConfig) -> Run {
    let keep = keep_list(&a.keep)?;
    if keep.len() != a.output.len() {
        return Err(usage(format!("--keep names {} channels for {} outputs", keep.len(), a.output.len())));
    }
    let image = qimage::load_rgb(&a.input)?;
    let outputs = if a.via_restain {
        let pair: [Channel; 2] = keep
            .clone()
            .try_into()
            .map_err(|_| usage("--via-restain needs exactly two channels"))?;
        workflows::separate_via_restain(&image, pair, x_scale(a.x_scale, cfg)?)?
    } else {
        let mut basis = match a.basis {
            BasisArg::Mu7 => StainBasis::mu7(),
            BasisArg::Macenko => {
                let params = MacenkoParams {
                    od_threshold: a.od_threshold,
                    percentile: a.percentile,
                };
                let b = stain::estimate_macenko(&image, &params)?;
                log::info!("stain vectors {:?} {:?}", b.s1.to_array(), b.s2.to_array());
                b
            }
            BasisArg::Manual => {
                let (Some(s1), Some(s2)) = (&a.s1, &a.s2) else {
                    return Err(usage("--basis manual needs --s1 and --s2"));
                };
                StainBasis::manual(resolve(s1, &image, false)?, resolve(s2, &image, false)?)?
            }
        };
        if a.swap {
            basis = basis.swapped();
        }
        if keep.len() == 3 {
            let steps = match &a.steps {
                Some(s) => parse_steps(s)?,
                None => workflows::default_separation_steps().to_vec(),
            };
            workflows::stain_separate_multi(&image, &basis, &steps, &keep)?
        } else {
            workflows::stain_separate_two(&image, &basis, &keep)?
        }
    };
    for (path, gray) in a.output.iter().zip(outputs) {
        save(path, DynamicImage::ImageLuma8(gray))?;
    }
    Ok(())
}

fn enumerate(a: EnumerateArgs) -> Run {
    let mut text = String::from("sign,f,g\n");
    for sign in a.sign.signs() {
        for c in pipeline::enumerate_combinations(sign) {
            text.push_str(&format!("{},mu{},mu{}\n", c.sign, c.i, c.j));
        }
    }
    match a.output {
        Some(path) => write_atomic(&path, text.as_bytes()),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn batch(a: BatchArgs, cfg: &CliConfig) -> Run {
    let exemplar = a
        .exemplar
        .or_else(|| cfg.exemplar.clone())
        .ok_or_else(|| usage("batch needs --exemplar or an exemplar in the config file"))?;
    if !(0.0..=1.0).contains(&a.delete) {
        return Err(usage(format!("--delete {} is outside [0, 1]", a.delete)));
    }
    let opts = BatchOptions {
        inputs: pipeline::list_pngs(&a.input_dir)?,
        exemplar: qimage::load_rgb(&exemplar)?,
        signs: a.sign.signs(),
        out_dir: a.out_dir,
        delete_fraction: a.delete,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
    };
    let report = pipeline::batch_transform(&opts)?;
    log::info!("{} outputs kept, {} deleted", report.rows.len(), report.deleted.len());
    if let Some((path, err)) = report.errors.into_iter().next() {
        eprintln!("qops: {}: {err}", path.display());
        return Err(Failure::Processing(err));
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Run {
    let image = qimage::load_rgb(&a.input)?;
    let f = resolve(&a.f, &image, true)?;
    let g = match &a.g {
        Some(g) => resolve(g, &image, true)?,
        None => f,
    };
    let spec = SplitSpec::new(Sign::Plus, f, g)?;
    let opts = BenchOptions {
        steps: a.steps,
        repeats: a.repeats,
        image_id: a.input.display().to_string(),
    };
    let result = pipeline::bench_time_complexity(&image, &spec, &opts)?;
    log::info!("slope {:e} s/pixel, R² {:.4}", result.slope, result.r_squared);
    let mut buf = Vec::new();
    pipeline::write_bench_csv(&mut buf, &result)?;
    write_atomic(&a.out, &buf)
}

fn gamut(a: GamutArgs) -> Run {
    let image = qimage::load_rgb(&a.input)?;
    let space = match a.space {
        SpaceArg::Rgb => GamutSpace::Rgb,
        SpaceArg::Hsv => GamutSpace::Hsv,
    };
    let mut buf = Vec::new();
    qimage::write_gamut_csv(&mut buf, &qimage::export_gamut(&image, space))?;
    write_atomic(&a.out, &buf)
}

fn run(cli: Cli) -> Run {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => CliConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match cli.command {
        Command::Recolor(a) => recolor(a, &cfg),
        Command::Decolor(a) => decolor(a),
        Command::Contrast(a) => contrast(a, &cfg),
        Command::Restain(a) => restain(a, &cfg),
        Command::Stainsep(a) => stainsep(a, &cfg),
        Command::Enumerate(a) => enumerate(a),
        Command::Batch(a) => batch(a, &cfg),
        Command::Bench(a) => bench(a),
        Command::Gamut(a) => gamut(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("qops: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Processing(e)) => {
            eprintln!("qops: {e}");
            ExitCode::from(2)
        }
    }
}
