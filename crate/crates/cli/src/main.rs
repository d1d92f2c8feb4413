//! `subtherm`: feature extraction, stereo matching, evaluation sweeps and
//! fixture generation from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use subtherm::eval::{run_shift_sweep, SweepSpec};
use subtherm::phase_congruency::save_moment_map;
use subtherm::poc::{write_refined_csv, RefineSource};
use subtherm::triangulate::{triangulate_pixel, write_points_csv, write_triangulated_csv};
use subtherm::{load_pgm, save_pgm, BitDepth, RunConfig, ShiftSpec, StereoPipeline};

#[derive(Debug, Parser)]
#[command(name = "subtherm", version, about = "Sub-pixel stereo matching for low-resolution thermal pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect phase-congruency features in one image.
    Extract(ExtractArgs),
    /// Match and refine features of a rectified pair.
    Match(MatchArgs),
    /// Run a synthetic-shift sweep described by a JSON spec.
    Eval(EvalArgs),
    /// Convert a refined-match CSV to 3-D points.
    Triangulate(TriangulateArgs),
    /// Shift an image by a sub-pixel amount (Fourier shift).
    Shift(ShiftArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "SUBTHERM_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Source {
    Moment,
    Raw,
}

impl From<Source> for RefineSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Moment => RefineSource::MomentMap,
            Source::Raw => RefineSource::RawImage,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bits {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    image: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Threshold on the maximum moment.
    #[arg(long)]
    gamma: Option<f64>,
    /// Feature CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the maximum-moment map as a 16-bit PGM.
    #[arg(long)]
    moment_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    left: PathBuf,
    right: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    gamma: Option<f64>,
    /// Correlation window side for sub-pixel refinement.
    #[arg(long)]
    window: Option<usize>,
    /// Signal used for sub-pixel refinement.
    #[arg(long, value_enum)]
    source: Option<Source>,
    /// Append `x_mm,y_mm,z_mm` using the configured rig.
    #[arg(long)]
    triangulate: bool,
    /// Refined-match CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    image: PathBuf,
    /// Sweep specification (JSON).
    spec: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Replace the spec's gamma list with this single value.
    #[arg(long)]
    gamma: Option<f64>,
    /// Replace the spec's window list with this single size.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum)]
    source: Option<Source>,
    /// Report JSON; the CSV table goes next to it with a `.csv` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TriangulateArgs {
    /// CSV with at least `xl,yl,disparity` columns, as written by `match`.
    matches: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Point CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ShiftArgs {
    image: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Horizontal shift in pixels (positive moves content right).
    #[arg(long, allow_negative_numbers = true)]
    dx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    dy: f64,
    /// Output sample depth.
    #[arg(long, value_enum, default_value = "16")]
    bits: Bits,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("subtherm: error: {}", diagnostic(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes the previous message
/// already quotes.
fn diagnostic(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => extract(a),
        Command::Match(a) => match_pair(a),
        Command::Eval(a) => eval(a),
        Command::Triangulate(a) => triangulate(a),
        Command::Shift(a) => shift(a),
    }
}

impl Common {
    fn setup(&self) -> Result<RunConfig> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
        }
        match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display())),
            None => Ok(RunConfig::default()),
        }
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn extract(a: ExtractArgs) -> Result<()> {
    let mut cfg = a.common.setup()?;
    if let Some(g) = a.gamma {
        cfg.gamma = g;
    }
    let pipeline = StereoPipeline::new(cfg)?;
    let img = load_pgm(&a.image)?;
    let (pc, feats) = pipeline.extract(&img)?;
    let mut csv = Vec::new();
    subtherm::features::write_features_csv(&mut csv, &feats)?;
    write_output(&a.out, &csv)?;
    if let Some(path) = &a.moment_out {
        save_moment_map(&pc.moment_max, path)?;
    }
    Ok(())
}

fn match_pair(a: MatchArgs) -> Result<()> {
    let mut cfg = a.common.setup()?;
    if let Some(g) = a.gamma {
        cfg.gamma = g;
    }
    if let Some(w) = a.window {
        cfg.poc.window = w;
    }
    if let Some(s) = a.source {
        cfg.poc.source = s.into();
    }
    let rig = if a.triangulate { Some(cfg.stereo_rig()?) } else { None };
    let pipeline = StereoPipeline::new(cfg)?;
    let left = load_pgm(&a.left)?;
    let right = load_pgm(&a.right)?;
    let refined = pipeline.run(&left, &right)?;
    let mut csv = Vec::new();
    match &rig {
        Some(rig) => write_triangulated_csv(&mut csv, &refined, rig)?,
        None => write_refined_csv(&mut csv, &refined)?,
    }
    write_output(&a.out, &csv)
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = a.common.setup()?;
    if let Some(s) = a.source {
        cfg.poc.source = s.into();
    }
    let mut spec = SweepSpec::load(&a.spec).with_context(|| format!("reading sweep spec {}", a.spec.display()))?;
    if let Some(g) = a.gamma {
        spec.gammas = vec![g];
    }
    if let Some(w) = a.window {
        spec.window_sizes = vec![w];
    }
    let csv_path = a.out.with_extension("csv");
    if csv_path == a.out {
        bail!("--out {} would collide with the CSV table; use a .json name", a.out.display());
    }
    let img = load_pgm(&a.image)?;
    let report = run_shift_sweep(&img, &spec, &cfg.pc, &cfg.matching, &cfg.poc)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_output(&a.out, report.to_json().as_bytes())?;
    write_output(&csv_path, &csv)
}

fn triangulate(a: TriangulateArgs) -> Result<()> {
    let cfg = a.common.setup()?;
    let rig = cfg.stereo_rig()?;
    let mut reader = csv::Reader::from_path(&a.matches).with_context(|| format!("reading {}", a.matches.display()))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no `{name}` column", a.matches.display()))
    };
    let (ixl, iyl, id) = (column("xl")?, column("yl")?, column("disparity")?);
    let mut points = Vec::new();
    let mut skipped = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{} row {}", a.matches.display(), row + 2))?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .with_context(|| format!("{} row {}: missing field", a.matches.display(), row + 2))
        };
        let xl: usize = field(ixl)?.parse().with_context(|| format!("{} row {}: xl", a.matches.display(), row + 2))?;
        let yl: usize = field(iyl)?.parse().with_context(|| format!("{} row {}: yl", a.matches.display(), row + 2))?;
        let d: f64 = field(id)?.parse().with_context(|| format!("{} row {}: disparity", a.matches.display(), row + 2))?;
        match triangulate_pixel(xl as f64, yl as f64, d, &rig) {
            Ok(p) => points.push((p, xl, yl)),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!("subtherm: skipped {skipped} matches with non-positive disparity");
    }
    let mut csv = Vec::new();
    write_points_csv(&mut csv, &points)?;
    write_output(&a.out, &csv)
}

fn shift(a: ShiftArgs) -> Result<()> {
    a.common.setup()?;
    let img = load_pgm(&a.image)?;
    let shifted = subtherm::subpixel_shift(&img, ShiftSpec { dx: a.dx, dy: a.dy })?;
    let depth = match a.bits {
        Bits::Eight => BitDepth::Eight,
        Bits::Sixteen => BitDepth::Sixteen,
    };
    Ok(save_pgm(&shifted, &a.out, depth)?)
}
